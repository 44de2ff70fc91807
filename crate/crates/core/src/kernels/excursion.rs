use super::{check_finite, integrate_split, shifted_breaks, singular_at_zero, Atom, AtomicDensity, Location};
use crate::error::{domain, Result};
use crate::levy::LevyModel;
use crate::numerics::quad::QuadOptions;

fn bern(p: f64, q: u8) -> f64 {
    if q == 1 {
        p
    } else {
        1.0 - p
    }
}

/// Joint density of (undershoot, overshoot) = (x, z) of the excursion below
/// the supremum: e^{-ηx} Λ'(x+z), times W(0) for finite-variation models
/// (for which it is the law of the first passage above 0 started at 0).
pub fn excursion_marginal(model: &LevyModel, x: f64, z: f64) -> Result<f64> {
    if !(x > 0.0 && z > 0.0) {
        return domain(format!("excursion_marginal needs x, z > 0 (got {x}, {z})"));
    }
    let mut v = (-model.eta() * x).exp() * model.jumps().density(x + z);
    if model.is_pre_limit() {
        v *= model.w_zero();
    }
    Ok(v)
}

/// g^x(a, dq, dv): law of (overshoot, mark) of the first passage above 0
/// started from -(x+a).
pub fn g_x(model: &LevyModel, x: f64, a: f64) -> Result<AtomicDensity> {
    if !(x > 0.0 && a >= 0.0) {
        return domain(format!("g_x needs x > 0 and a >= 0 (got {x}, {a})"));
    }
    let y = x + a;
    let b = model.gaussian_b();
    let eta = model.eta();
    let mut atoms = Vec::new();
    if b > 0.0 {
        let creep = 0.5 * b * b * (model.scale_derivative(y)? - eta * model.w(y));
        atoms.push(Atom { location: Location::At(0.0), mark: 0, weight: creep.max(0.0) });
    }
    if model.jumps().total_mass() == 0.0 {
        return Ok(AtomicDensity::atoms_only(atoms));
    }
    let m = model.clone();
    let wy = model.w(y);
    let sing = singular_at_zero(model);
    let dens = move |v: f64, q: u8| {
        let f = |u: f64| {
            let s = u + v;
            ((-eta * u).exp() * wy - m.w(y - u)) * bern(m.mutation().eval(s), q) * m.jumps().density(s)
        };
        let mut br = shifted_breaks(&m, v, 0.0, f64::INFINITY);
        br.push(y);
        integrate_split(f, 0.0, f64::INFINITY, &br, false, false, QuadOptions::default()).unwrap_or(f64::NAN)
    };
    Ok(AtomicDensity::with_density(atoms, (0.0, f64::INFINITY), dens)
        .breakpoints(model.jumps().breakpoints())
        .singular(sing, false))
}

/// Total mass of g^x(a, ·, ·), i.e. P_{-(x+a)}(T^{(0,∞)} < ∞), computed through
/// the tail of Λ as a single integral.
pub fn g_x_total_mass(model: &LevyModel, x: f64, a: f64) -> Result<f64> {
    let y = x + a;
    let b = model.gaussian_b();
    let eta = model.eta();
    let mut total = 0.0;
    if b > 0.0 {
        total += 0.5 * b * b * (model.scale_derivative(y)? - eta * model.w(y));
    }
    if model.jumps().total_mass() > 0.0 {
        let wy = model.w(y);
        let f = |u: f64| ((-eta * u).exp() * wy - model.w(y - u)) * model.jumps().tail_mass(u);
        let mut br = model.jumps().breakpoints();
        br.push(y);
        total += integrate_split(f, 0.0, f64::INFINITY, &br, singular_at_zero(model), false, QuadOptions::default())?;
    }
    check_finite(total, "g_x_total_mass")
}

/// ν_ε^init on [ε, τ) × {0, 1}: law of the depth Υ before the last jump over
/// depth ε of a deep excursion, with that jump's mark.
pub fn nu_init(model: &LevyModel, eps: f64, tau: f64) -> Result<AtomicDensity> {
    if !(eps > 0.0 && eps < tau) {
        return domain(format!("nu_init needs 0 < eps < tau (got {eps}, {tau})"));
    }
    let p = model.p_eps(eps, tau);
    let wtau = model.w(tau);
    let weps = model.w(eps);
    let b = model.gaussian_b();
    let mut atoms = Vec::new();
    if b > 0.0 {
        let w = (model.w(tau - eps) / wtau) * 0.5 * b * b * model.scale_derivative(eps)? / weps / p;
        atoms.push(Atom { location: Location::At(eps), mark: 0, weight: w });
    }
    if model.jumps().total_mass() == 0.0 {
        return Ok(AtomicDensity::atoms_only(atoms));
    }
    let m = model.clone();
    let sing = singular_at_zero(model);
    let dens = move |u: f64, q: u8| {
        let inner = |z: f64| bern(m.mutation().eval(z), q) * m.jumps().density(z) * (1.0 - m.w(u - z) / weps);
        let lo = u - eps;
        let br = shifted_breaks(&m, 0.0, lo, f64::INFINITY);
        let opts = QuadOptions::default();
        let near = integrate_split(inner, lo, u, &br, sing && lo < 1e-300, false, opts).unwrap_or(f64::NAN);
        let far = match m.mutation() {
            crate::levy::MutationFunctionSpec::LinearCapped { .. } => {
                integrate_split(inner, u, f64::INFINITY, &br, false, false, opts).unwrap_or(f64::NAN)
            }
            f => bern(f.eval(0.0), q) * m.jumps().tail_mass(u),
        };
        (m.w(tau - u) / wtau) * (near + far) / p
    };
    Ok(AtomicDensity::with_density(atoms, (eps, tau), dens).singular(sing, false))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levy::{presets, MarkRegime};

    #[test]
    fn stable_excursion_marginal() {
        let m = presets::stable(1.5).unwrap();
        let v = excursion_marginal(&m, 1.0, 1.0).unwrap();
        // 2^{-2.5}/|Γ(-1.5)|
        assert!((v - 0.07480167757526865).abs() < 1e-12, "{v}");
        assert!(excursion_marginal(&m, 0.0, 1.0).is_err());
    }

    #[test]
    fn brownian_g_is_unit_creeping_atom() {
        let m = presets::brownian(1.0);
        for (x, a) in [(0.3, 0.0), (0.5, 0.7)] {
            let g = g_x(&m, x, a).unwrap();
            assert!((g.mark_mass(0).unwrap() - 1.0).abs() < 1e-12);
            assert_eq!(g.mark_mass(1).unwrap(), 0.0);
        }
    }

    #[test]
    fn g_mass_is_one_for_critical_models() {
        let (m, _) = presets::critical_exponential(10, MarkRegime::B1 { theta: 0.5 }).unwrap();
        assert!((g_x_total_mass(&m, 0.3, 0.2).unwrap() - 1.0).abs() < 1e-8);
        let g = g_x(&m, 0.3, 0.2).unwrap();
        let tot = g.total_mass().unwrap();
        assert!((tot - 1.0).abs() < 1e-6, "{tot}");
        let s = presets::stable(1.5).unwrap();
        assert!((g_x_total_mass(&s, 0.4, 0.1).unwrap() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn zero_mutation_empties_mark_one() {
        let (m, _) = presets::critical_exponential(10, MarkRegime::B1 { theta: 0.0 }).unwrap();
        let g = g_x(&m, 0.3, 0.0).unwrap();
        for v in [0.01, 0.1, 1.0] {
            assert_eq!(g.density(v, 1), 0.0);
        }
    }

    #[test]
    fn brownian_nu_init_is_unit_atom() {
        let m = presets::brownian(1.0);
        let nu = nu_init(&m, 0.1, 1.0).unwrap();
        assert_eq!(nu.atoms.len(), 1);
        assert!((nu.atoms[0].weight - 1.0).abs() < 1e-12);
        assert!(!nu.has_density());
    }

    #[test]
    fn prelimit_nu_init_is_probability() {
        for marks in [MarkRegime::B1 { theta: 0.5 }, MarkRegime::B2 { kappa: 1.0 }] {
            let (m, _) = presets::critical_exponential(20, marks).unwrap();
            let nu = nu_init(&m, 0.1, 1.0).unwrap();
            let tot = nu.total_mass().unwrap();
            assert!((tot - 1.0).abs() < 1e-6, "{marks:?}: {tot}");
        }
    }
}
