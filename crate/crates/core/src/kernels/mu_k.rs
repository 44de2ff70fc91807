use super::{integrate_split, Atom, AtomicDensity, Location};
use crate::error::{domain, Result};
use crate::levy::LevyModel;
use crate::numerics::quad::QuadOptions;
use crate::numerics::special::gamma;

/// Density of μ^K(a, du) (or of its mark-resolved version) at u; zero off (0, τ-a).
fn mu_k_density(model: &LevyModel, tau: f64, a: f64, u: f64, q: Option<u8>) -> f64 {
    if !(u > 0.0 && u < tau - a) {
        return 0.0;
    }
    let f = model.mutation();
    let w_a = model.w(a);
    let w_tau = model.w(tau);
    let g = |x: f64| {
        let s = x + u;
        let p = match q {
            None => 1.0,
            Some(1) => f.eval(s),
            Some(_) => 1.0 - f.eval(s),
        };
        model.jumps().density(s) * p * model.w(a - x)
    };
    let br: Vec<f64> = model.jumps().breakpoints().into_iter().map(|p| p - u).collect();
    // W(a-x) has an algebraic kink at x = a for infinite-variation models
    let sing = !model.is_pre_limit();
    let v = integrate_split(g, 0.0, a, &br, false, sing, QuadOptions::tight()).unwrap_or(f64::NAN);
    v * model.w(tau - a - u) / (w_a * w_tau)
}

/// μ^K(a, ·): killing atom 1/W(a) at +∞ plus the jump density on (0, τ-a).
/// In bivariate mode the density is split over marks by Bern(f(x+u)) inside
/// the integral; otherwise it is reported on mark 0.
pub fn mu_k(model: &LevyModel, tau: f64, a: f64, bivariate: bool) -> Result<AtomicDensity> {
    if !(a > 0.0 && a < tau) {
        return domain(format!("mu_k needs 0 < a < tau (got a={a}, tau={tau})"));
    }
    let atoms = vec![Atom { location: Location::Infinity, mark: 0, weight: 1.0 / model.w(a) }];
    if model.jumps().total_mass() == 0.0 {
        return Ok(AtomicDensity::atoms_only(atoms));
    }
    let m = model.clone();
    let dens = move |u: f64, q: u8| {
        if bivariate {
            mu_k_density(&m, tau, a, u, Some(q))
        } else if q == 0 {
            mu_k_density(&m, tau, a, u, None)
        } else {
            0.0
        }
    };
    let sing_left = !model.jumps().total_mass().is_finite();
    Ok(AtomicDensity::with_density(atoms, (0.0, tau - a), dens).singular(sing_left, false))
}

/// Closed form of the μ^K density for the standard α-stable limit
/// (Λ(dr) = r^{-α-1}/|Γ(-α)| dr, W(x) = x^{α-1}/Γ(α)):
///
///   u^{-α-1}/(α|Γ(-α)|) · au/(u+a) · ((τ-a-u)/τ)^{α-1}.
pub fn mu_k_stable_closed_form(alpha: f64, tau: f64, a: f64, u: f64) -> f64 {
    if !(u > 0.0 && u < tau - a) {
        return 0.0;
    }
    u.powf(-alpha - 1.0) / (alpha * gamma(-alpha).abs()) * (a * u / (u + a)) * ((tau - a - u) / tau).powf(alpha - 1.0)
}

/// Event rates of H^K seen as the Doob transform of the ladder height process
/// by h(a) = W(τ-a)/W(τ): the lineage is conditioned to die before depth τ,
/// so jump and killing rates per unit local time are those of μ^K divided
/// by h(a), while the drift b²/2 is unchanged.
#[derive(Debug, Clone)]
pub struct QProcessRates {
    pub model: LevyModel,
    pub tau: f64,
}

impl QProcessRates {
    pub fn new(model: &LevyModel, tau: f64) -> Self {
        QProcessRates { model: model.clone(), tau }
    }

    pub fn h(&self, a: f64) -> f64 {
        self.model.w(self.tau - a) / self.model.w(self.tau)
    }

    pub fn drift(&self) -> f64 {
        let b = self.model.gaussian_b();
        0.5 * b * b
    }

    pub fn kill_rate(&self, a: f64) -> f64 {
        1.0 / (self.model.w(a) * self.h(a))
    }

    /// Jump density at size u from depth a (u < τ - a), optionally restricted
    /// to mark q.
    pub fn jump_density(&self, a: f64, u: f64, q: Option<u8>) -> f64 {
        mu_k_density(&self.model, self.tau, a, u, q) / self.h(a)
    }

    /// Probability that a jump of size u from depth a is marked.
    pub fn mark_probability(&self, a: f64, u: f64) -> f64 {
        if self.model.mutation().is_zero() {
            return 0.0;
        }
        let tot = mu_k_density(&self.model, self.tau, a, u, None);
        if tot > 0.0 {
            (mu_k_density(&self.model, self.tau, a, u, Some(1)) / tot).clamp(0.0, 1.0)
        } else {
            0.0
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levy::{presets, MarkRegime, MutationFunctionSpec};

    #[test]
    fn stable_quadrature_matches_closed_form() {
        let m = presets::stable(1.5).unwrap();
        let k = mu_k(&m, 1.0, 0.5, false).unwrap();
        let q = k.density(0.2, 0);
        let c = mu_k_stable_closed_form(1.5, 1.0, 0.5, 0.2);
        assert!((q - 1.23390767668334).abs() < 1e-9, "{q}");
        assert!((q - c).abs() < 1e-9 * c);
        let atom = k.atoms[0];
        assert_eq!(atom.location, Location::Infinity);
        assert!((atom.weight - 1.2533141373155).abs() < 1e-10);
    }

    #[test]
    fn brownian_only_kills() {
        let m = presets::brownian(1.0);
        let k = mu_k(&m, 1.0, 0.25, true).unwrap();
        assert!(!k.has_density());
        assert!((k.atoms[0].weight - 2.0).abs() < 1e-12);
        let q = QProcessRates::new(&m, 1.0);
        assert!((q.kill_rate(0.25) / q.drift() - 1.0 / (0.25 * 0.75)).abs() < 1e-12);
    }

    #[test]
    fn bivariate_marginalizes() {
        let (m, _) = presets::critical_exponential(10, MarkRegime::B2 { kappa: 1.0 }).unwrap();
        let uni = mu_k(&m, 1.0, 0.4, false).unwrap();
        let bi = mu_k(&m, 1.0, 0.4, true).unwrap();
        for u in [0.01, 0.1, 0.3, 0.55] {
            let s = bi.density(u, 0) + bi.density(u, 1);
            assert!((s - uni.density(u, 0)).abs() <= 1e-10 * s.max(1e-300), "{u}");
        }
        let s = presets::stable(1.5).unwrap().with_mutation(MutationFunctionSpec::LinearCapped { slope: 1.0 }).unwrap();
        let (u1, b1) = (mu_k(&s, 1.0, 0.5, false).unwrap(), mu_k(&s, 1.0, 0.5, true).unwrap());
        let t = b1.density(0.2, 0) + b1.density(0.2, 1);
        assert!((t - u1.density(0.2, 0)).abs() <= 1e-10 * t);
    }

    #[test]
    fn domain_checked() {
        let m = presets::brownian(1.0);
        assert!(mu_k(&m, 1.0, 0.0, false).is_err());
        assert!(mu_k(&m, 1.0, 1.0, false).is_err());
    }
}
