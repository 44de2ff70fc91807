//! Spectrally positive Lévy models and their Laplace-exponent analytics.
//!
//! Two parametrizations share one formula. Writing `mean` for E[Z_1],
//!
//!   ψ(λ) = -mean·λ + (b²/2)λ² + ∫(e^{-λr} - 1 + λr) Λ(dr).
//!
//! Pre-limit (finite-variation) models store the path slope in `drift`, and
//! then mean = drift + ∫rΛ(dr), which turns the formula into the
//! compound-Poisson form -drift·λ - ∫(1 - e^{-λr})Λ(dr). Limit models store
//! `mean` directly in `drift`.

use crate::error::{domain, Error, Result};
use crate::numerics::laplace;
use crate::numerics::roots;
use crate::numerics::special::{expint_p, gamma};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum JumpMeasureSpec {
    /// density mass·rate·e^{-rate·r}
    Exponential { mass: f64, rate: f64 },
    /// density weight·r^{-α-1}/|Γ(-α)| on (cutoff, ∞)
    TruncatedStable {
        alpha: f64,
        cutoff: f64,
        #[serde(default = "one")]
        weight: f64,
    },
    /// piecewise-linear density through `(size, density)` knots, zero outside
    Tabulated { points: Vec<(f64, f64)> },
    Zero,
}

fn one() -> f64 {
    1.0
}

impl JumpMeasureSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            JumpMeasureSpec::Exponential { mass, rate } => {
                if !(*mass >= 0.0 && *rate > 0.0 && mass.is_finite() && rate.is_finite()) {
                    return domain(format!("exponential jumps need mass >= 0, rate > 0 (got {mass}, {rate})"));
                }
            }
            JumpMeasureSpec::TruncatedStable { alpha, cutoff, weight } => {
                if !(*alpha > 1.0 && *alpha < 2.0) {
                    return domain(format!("stable index must lie in (1,2), got {alpha}"));
                }
                if !(*cutoff >= 0.0 && *weight > 0.0) {
                    return domain("stable cutoff must be >= 0 and weight > 0");
                }
            }
            JumpMeasureSpec::Tabulated { points } => {
                if points.len() < 2 {
                    return domain("tabulated jump measure needs at least two knots");
                }
                for w in points.windows(2) {
                    if !(w[1].0 > w[0].0) {
                        return domain("tabulated knots must be strictly increasing in size");
                    }
                }
                if points[0].0 < 0.0 || points.iter().any(|p| !(p.1 >= 0.0) || !p.1.is_finite()) {
                    return domain("tabulated sizes must be >= 0 with finite nonnegative densities");
                }
                // ∫(1∧r)Λ(dr) < ∞ holds for any compactly supported finite density
                let m = self.total_mass();
                if !m.is_finite() {
                    return domain("tabulated jump measure has infinite mass");
                }
            }
            JumpMeasureSpec::Zero => {}
        }
        Ok(())
    }

    pub fn total_mass(&self) -> f64 {
        match self {
            JumpMeasureSpec::Exponential { mass, .. } => *mass,
            JumpMeasureSpec::TruncatedStable { alpha, cutoff, weight } => {
                if *cutoff == 0.0 {
                    f64::INFINITY
                } else {
                    weight * cutoff.powf(-alpha) / (alpha * gamma(-alpha).abs())
                }
            }
            JumpMeasureSpec::Tabulated { points } => points
                .windows(2)
                .map(|w| 0.5 * (w[0].1 + w[1].1) * (w[1].0 - w[0].0))
                .sum(),
            JumpMeasureSpec::Zero => 0.0,
        }
    }

    pub fn density(&self, r: f64) -> f64 {
        if r <= 0.0 {
            return 0.0;
        }
        match self {
            JumpMeasureSpec::Exponential { mass, rate } => mass * rate * (-rate * r).exp(),
            JumpMeasureSpec::TruncatedStable { alpha, cutoff, weight } => {
                if r <= *cutoff {
                    0.0
                } else {
                    weight * r.powf(-alpha - 1.0) / gamma(-alpha).abs()
                }
            }
            JumpMeasureSpec::Tabulated { points } => {
                let first = points[0].0;
                let last = points[points.len() - 1].0;
                if r < first || r > last {
                    return 0.0;
                }
                let i = points.partition_point(|p| p.0 <= r).min(points.len() - 1).max(1);
                let (r0, d0) = points[i - 1];
                let (r1, d1) = points[i];
                d0 + (d1 - d0) * (r - r0) / (r1 - r0)
            }
            JumpMeasureSpec::Zero => 0.0,
        }
    }

    /// Λ((x, ∞)).
    pub fn tail_mass(&self, x: f64) -> f64 {
        let x = x.max(0.0);
        match self {
            JumpMeasureSpec::Exponential { mass, rate } => mass * (-rate * x).exp(),
            JumpMeasureSpec::TruncatedStable { alpha, cutoff, weight } => {
                let y = x.max(*cutoff);
                if y == 0.0 {
                    f64::INFINITY
                } else {
                    weight * y.powf(-alpha) / (alpha * gamma(-alpha).abs())
                }
            }
            JumpMeasureSpec::Tabulated { points } => {
                let mut acc = 0.0;
                for w in points.windows(2) {
                    let (a, da) = w[0];
                    let (b, db) = w[1];
                    if b <= x {
                        continue;
                    }
                    let lo = a.max(x);
                    let dlo = da + (db - da) * (lo - a) / (b - a);
                    acc += 0.5 * (dlo + db) * (b - lo);
                }
                acc
            }
            JumpMeasureSpec::Zero => 0.0,
        }
    }

    /// ∫ r Λ(dr) (infinite for the untruncated stable measure).
    pub fn first_moment(&self) -> f64 {
        match self {
            JumpMeasureSpec::Exponential { mass, rate } => mass / rate,
            JumpMeasureSpec::TruncatedStable { alpha, cutoff, weight } => {
                if *cutoff == 0.0 {
                    f64::INFINITY
                } else {
                    weight * cutoff.powf(1.0 - alpha) / ((alpha - 1.0) * gamma(-alpha).abs())
                }
            }
            JumpMeasureSpec::Tabulated { points } => points
                .windows(2)
                .map(|w| {
                    let (a, da) = w[0];
                    let (b, db) = w[1];
                    let slope = (db - da) / (b - a);
                    let c0 = da - slope * a;
                    c0 * (b * b - a * a) / 2.0 + slope * (b * b * b - a * a * a) / 3.0
                })
                .sum(),
            JumpMeasureSpec::Zero => 0.0,
        }
    }

    /// ∫(e^{-sr} - 1 + sr) Λ(dr) for complex `s` in the analytic domain.
    pub fn compensated_transform(&self, s: Complex64) -> Complex64 {
        match self {
            JumpMeasureSpec::Exponential { mass, rate } => *mass * s * s / (*rate * (s + *rate)),
            JumpMeasureSpec::TruncatedStable { alpha, cutoff, weight } => {
                let g = gamma(-alpha).abs();
                if *cutoff == 0.0 {
                    if s.norm() == 0.0 {
                        return Complex64::new(0.0, 0.0);
                    }
                    *weight * s.powf(*alpha)
                } else {
                    let c = *cutoff;
                    let e = c.powf(-alpha) * expint_p(alpha + 1.0, s * c);
                    let v = e - c.powf(-alpha) / alpha + s * c.powf(1.0 - alpha) / (alpha - 1.0);
                    v * (*weight / g)
                }
            }
            JumpMeasureSpec::Tabulated { points } => {
                let mut acc = Complex64::new(0.0, 0.0);
                for w in points.windows(2) {
                    acc += linear_segment_transform(w[0], w[1], s);
                }
                acc
            }
            JumpMeasureSpec::Zero => Complex64::new(0.0, 0.0),
        }
    }

    /// Draws a jump size from Λ/‖Λ‖ (finite mass only).
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            JumpMeasureSpec::Exponential { rate, .. } => Exp::new(*rate).expect("positive rate").sample(rng),
            JumpMeasureSpec::TruncatedStable { alpha, cutoff, .. } => {
                let u: f64 = 1.0 - rng.random::<f64>();
                cutoff * u.powf(-1.0 / alpha)
            }
            JumpMeasureSpec::Tabulated { points } => {
                let total = self.total_mass();
                let mut target = rng.random::<f64>() * total;
                for w in points.windows(2) {
                    let (a, da) = w[0];
                    let (b, db) = w[1];
                    let seg = 0.5 * (da + db) * (b - a);
                    if target <= seg || std::ptr::eq(w.as_ptr(), points[points.len() - 2..].as_ptr()) {
                        // invert the quadratic CDF of the linear density on [a,b]
                        let h = b - a;
                        let slope = (db - da) / h;
                        let t = target.min(seg);
                        let x = if slope.abs() < 1e-14 * (da + db).max(1e-300) {
                            if da > 0.0 {
                                t / da
                            } else {
                                0.0
                            }
                        } else {
                            let disc = (da * da + 2.0 * slope * t).max(0.0);
                            (disc.sqrt() - da) / slope
                        };
                        return a + x.clamp(0.0, h);
                    }
                    target -= seg;
                }
                points[points.len() - 1].0
            }
            JumpMeasureSpec::Zero => panic!("cannot sample from the zero jump measure"),
        }
    }

    /// Image of the measure under the rescaling r ↦ r/n with weight d_n.
    pub fn rescaled(&self, n: f64, d_n: f64) -> JumpMeasureSpec {
        match self {
            JumpMeasureSpec::Exponential { mass, rate } => JumpMeasureSpec::Exponential {
                mass: mass * d_n,
                rate: rate * n,
            },
            JumpMeasureSpec::TruncatedStable { alpha, cutoff, weight } => JumpMeasureSpec::TruncatedStable {
                alpha: *alpha,
                cutoff: cutoff / n,
                weight: weight * d_n * n.powf(-alpha),
            },
            JumpMeasureSpec::Tabulated { points } => JumpMeasureSpec::Tabulated {
                points: points.iter().map(|&(r, d)| (r / n, d * d_n * n)).collect(),
            },
            JumpMeasureSpec::Zero => JumpMeasureSpec::Zero,
        }
    }

    /// Sizes where the density has kinks or its support ends (for quadrature).
    pub fn breakpoints(&self) -> Vec<f64> {
        match self {
            JumpMeasureSpec::TruncatedStable { cutoff, .. } if *cutoff > 0.0 => vec![*cutoff],
            JumpMeasureSpec::Tabulated { points } => points.iter().map(|p| p.0).collect(),
            _ => vec![],
        }
    }

    /// Largest size carrying mass (∞ when unbounded).
    pub fn support_end(&self) -> f64 {
        match self {
            JumpMeasureSpec::Tabulated { points } => points[points.len() - 1].0,
            JumpMeasureSpec::Zero => 0.0,
            _ => f64::INFINITY,
        }
    }
}

/// ∫_a^b (d_a + slope·(r-a)) (e^{-sr} - 1 + sr) dr.
fn linear_segment_transform((a, da): (f64, f64), (b, db): (f64, f64), s: Complex64) -> Complex64 {
    let slope = (db - da) / (b - a);
    let c0 = da - slope * a; // density = c0 + slope·r
    if (s * b).norm() <= 0.5 {
        // Σ_{j≥2} (-s)^j/j! ∫(c0 + slope r) r^j dr
        let mut acc = Complex64::new(0.0, 0.0);
        let mut coef = Complex64::new(1.0, 0.0);
        for j in 1..40 {
            coef *= -s / j as f64;
            if j < 2 {
                continue;
            }
            let jf = j as f64;
            let m0 = (b.powf(jf + 1.0) - a.powf(jf + 1.0)) / (jf + 1.0);
            let m1 = (b.powf(jf + 2.0) - a.powf(jf + 2.0)) / (jf + 2.0);
            let add = coef * (c0 * m0 + slope * m1);
            acc += add;
            if add.norm() < 1e-18 * acc.norm().max(1e-300) {
                break;
            }
        }
        acc
    } else {
        let ea = (-s * a).exp();
        let eb = (-s * b).exp();
        let i0 = (ea - eb) / s;
        let i1 = (ea * a - eb * b) / s + (ea - eb) / (s * s);
        let p0 = b - a;
        let p1 = (b * b - a * a) / 2.0;
        let p2 = (b * b * b - a * a * a) / 3.0;
        c0 * (i0 - p0 + s * p1) + slope * (i1 - p1 + s * p2)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MutationFunctionSpec {
    Constant { theta: f64 },
    /// f(u) = min(1, slope·u)
    LinearCapped { slope: f64 },
    Zero,
}

impl MutationFunctionSpec {
    pub fn eval(&self, u: f64) -> f64 {
        match self {
            MutationFunctionSpec::Constant { theta } => *theta,
            MutationFunctionSpec::LinearCapped { slope } => (slope * u).clamp(0.0, 1.0),
            MutationFunctionSpec::Zero => 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            MutationFunctionSpec::Constant { theta } if !(0.0..=1.0).contains(theta) => {
                domain(format!("mutation probability must lie in [0,1], got {theta}"))
            }
            MutationFunctionSpec::LinearCapped { slope } if !(*slope >= 0.0) => {
                domain(format!("mutation slope must be >= 0, got {slope}"))
            }
            _ => Ok(()),
        }
    }

    /// The function r ↦ f(n·r) expressed on the rescaled size axis.
    pub fn rescaled(&self, n: f64) -> MutationFunctionSpec {
        match self {
            MutationFunctionSpec::LinearCapped { slope } => MutationFunctionSpec::LinearCapped { slope: slope * n },
            other => other.clone(),
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            MutationFunctionSpec::Zero => true,
            MutationFunctionSpec::Constant { theta } => *theta == 0.0,
            MutationFunctionSpec::LinearCapped { slope } => *slope == 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// finite-variation compound Poisson with negative drift; path sampler available
    PreLimit,
    /// analytics-only limiting process
    Limit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    /// path slope for pre-limit models; E[Z_1] for limit models
    pub drift: f64,
    #[serde(default)]
    pub gaussian_b: f64,
    pub jumps: JumpMeasureSpec,
    #[serde(default = "zero_mutation")]
    pub mutation: MutationFunctionSpec,
}

fn zero_mutation() -> MutationFunctionSpec {
    MutationFunctionSpec::Zero
}

/// Closed forms short-circuiting the numerical inversion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ClosedForm {
    /// W(x) = w0 + slope·x
    Affine { w0: f64, slope: f64 },
    /// W(x) = (1/c)(k/a + (1 - k/a)e^{-ax}), a ≠ 0
    ExpJumps { c: f64, k: f64, a: f64 },
    /// W(x) = x^{α-1}/(weight·Γ(α))
    Stable { alpha: f64, weight: f64 },
}

impl ClosedForm {
    fn w(&self, x: f64) -> f64 {
        match *self {
            ClosedForm::Affine { w0, slope } => w0 + slope * x,
            ClosedForm::ExpJumps { c, k, a } => (k / a + (1.0 - k / a) * (-a * x).exp()) / c,
            ClosedForm::Stable { alpha, weight } => {
                if x == 0.0 {
                    0.0
                } else {
                    x.powf(alpha - 1.0) / (weight * gamma(alpha))
                }
            }
        }
    }

    fn dw(&self, x: f64) -> f64 {
        match *self {
            ClosedForm::Affine { slope, .. } => slope,
            ClosedForm::ExpJumps { c, k, a } => -a * (1.0 - k / a) * (-a * x).exp() / c,
            ClosedForm::Stable { alpha, weight } => {
                if x == 0.0 {
                    f64::INFINITY
                } else {
                    (alpha - 1.0) * x.powf(alpha - 2.0) / (weight * gamma(alpha))
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleMethod {
    ClosedForm,
    Talbot,
    Euler,
}

#[derive(Debug, Clone)]
pub struct LevyModel {
    spec: ModelSpec,
    eta: f64,
    closed_form: Option<ClosedForm>,
    nodes: usize,
    use_registry: bool,
}

pub const DEFAULT_TALBOT_NODES: usize = 48;

impl LevyModel {
    pub fn new(spec: ModelSpec) -> Result<Self> {
        spec.jumps.validate()?;
        spec.mutation.validate()?;
        if !spec.drift.is_finite() || !(spec.gaussian_b >= 0.0) {
            return domain("drift must be finite and gaussian_b >= 0");
        }
        match spec.kind {
            ModelKind::PreLimit => {
                if spec.gaussian_b != 0.0 {
                    return domain("pre-limit models have no Gaussian component");
                }
                if !spec.jumps.total_mass().is_finite() {
                    return domain("pre-limit models need a finite jump mass");
                }
                if !(spec.drift < 0.0) {
                    return domain(format!("pre-limit drift must be negative, got {}", spec.drift));
                }
            }
            ModelKind::Limit => {
                if spec.gaussian_b == 0.0 && spec.jumps.total_mass().is_finite() {
                    return domain(
                        "limit models need a Gaussian part or an infinite-variation jump measure",
                    );
                }
            }
        }
        let mut model = LevyModel {
            closed_form: registry_lookup(&spec),
            spec,
            eta: 0.0,
            nodes: DEFAULT_TALBOT_NODES,
            use_registry: true,
        };
        model.eta = model.compute_eta()?;
        Ok(model)
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn kind(&self) -> ModelKind {
        self.spec.kind
    }

    pub fn is_pre_limit(&self) -> bool {
        self.spec.kind == ModelKind::PreLimit
    }

    pub fn jumps(&self) -> &JumpMeasureSpec {
        &self.spec.jumps
    }

    pub fn mutation(&self) -> &MutationFunctionSpec {
        &self.spec.mutation
    }

    pub fn drift(&self) -> f64 {
        self.spec.drift
    }

    pub fn gaussian_b(&self) -> f64 {
        self.spec.gaussian_b
    }

    pub fn with_mutation(&self, mutation: MutationFunctionSpec) -> Result<Self> {
        let mut spec = self.spec.clone();
        spec.mutation = mutation;
        let mut m = LevyModel::new(spec)?;
        m.nodes = self.nodes;
        m.use_registry = self.use_registry;
        Ok(m)
    }

    /// Same model with the closed-form registry bypassed (forces inversion).
    pub fn without_registry(&self) -> Self {
        let mut m = self.clone();
        m.use_registry = false;
        m
    }

    pub fn with_nodes(&self, nodes: usize) -> Self {
        let mut m = self.clone();
        m.nodes = nodes.max(8);
        m
    }

    pub fn closed_form(&self) -> Option<ClosedForm> {
        if self.use_registry {
            self.closed_form
        } else {
            None
        }
    }

    /// E[Z_1] in the compensated parametrization.
    pub fn mean(&self) -> f64 {
        match self.spec.kind {
            ModelKind::PreLimit => self.spec.drift + self.spec.jumps.first_moment(),
            ModelKind::Limit => self.spec.drift,
        }
    }

    pub fn psi_complex(&self, s: Complex64) -> Complex64 {
        let b = self.spec.gaussian_b;
        let lin = match self.spec.kind {
            // compound-Poisson form: -drift·s - ∫(1 - e^{-sr})Λ(dr)
            ModelKind::PreLimit => {
                let fv = s * self.spec.jumps.first_moment() - self.spec.jumps.compensated_transform(s);
                return -self.spec.drift * s - fv;
            }
            ModelKind::Limit => -self.spec.drift * s,
        };
        lin + 0.5 * b * b * s * s + self.spec.jumps.compensated_transform(s)
    }

    pub fn psi(&self, lambda: f64) -> f64 {
        self.psi_complex(Complex64::new(lambda, 0.0)).re
    }

    /// ψ(λ), rejecting negative arguments.
    pub fn laplace_exponent(&self, lambda: f64) -> Result<f64> {
        if !(lambda >= 0.0) {
            return domain(format!("laplace_exponent: lambda must be >= 0, got {lambda}"));
        }
        Ok(self.psi(lambda))
    }

    /// ψ'(0+) = -E[Z_1].
    pub fn psi_prime_zero(&self) -> f64 {
        -self.mean()
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    fn compute_eta(&self) -> Result<f64> {
        let slope0 = self.psi_prime_zero();
        if slope0 >= 0.0 || !slope0.is_finite() {
            return Ok(0.0);
        }
        let hi = roots::expand_until(1e-3, |l| self.psi(l) > 0.0)?;
        // ψ is convex: locate its minimum, then the root to the right of it
        let (mut a, mut b) = (0.0, hi);
        let g = 0.5 * (5f64.sqrt() - 1.0);
        for _ in 0..200 {
            let c = b - g * (b - a);
            let d = a + g * (b - a);
            if self.psi(c) < self.psi(d) {
                b = d;
            } else {
                a = c;
            }
        }
        let lo = 0.5 * (a + b);
        if self.psi(lo) >= 0.0 {
            return Ok(0.0);
        }
        roots::bisect(|l| self.psi(l), lo, hi, 1e-15)
    }

    /// Largest root η of ψ.
    pub fn largest_root_eta(&self) -> f64 {
        self.eta
    }

    /// φ(q): inverse of ψ on [η, ∞).
    pub fn inverse_phi(&self, q: f64) -> Result<f64> {
        if !(q >= 0.0) {
            return domain(format!("inverse_phi: q must be >= 0, got {q}"));
        }
        if q == 0.0 {
            return Ok(self.eta);
        }
        let lo = self.eta;
        let hi = roots::expand_until(lo.max(1e-3) * 2.0, |l| self.psi(l) > q)?;
        roots::bisect(|l| self.psi(l) - q, lo, hi, 1e-16)
    }

    /// W(0): 1/|drift| for finite variation, 0 otherwise.
    pub fn w_zero(&self) -> f64 {
        match self.spec.kind {
            ModelKind::PreLimit => -1.0 / self.spec.drift,
            ModelKind::Limit => 0.0,
        }
    }

    fn contour_shift(&self) -> f64 {
        if self.eta > 0.0 {
            self.eta * 1.02 + 1e-6
        } else {
            0.0
        }
    }

    /// Scale function W(x) together with the route used to compute it.
    pub fn scale_function_with_method(&self, x: f64) -> Result<(f64, ScaleMethod)> {
        if !x.is_finite() {
            return domain("scale_function: x must be finite");
        }
        if x < 0.0 {
            return Ok((0.0, ScaleMethod::ClosedForm));
        }
        if let Some(cf) = self.closed_form() {
            return Ok((cf.w(x), ScaleMethod::ClosedForm));
        }
        if x == 0.0 {
            return Ok((self.w_zero(), ScaleMethod::ClosedForm));
        }
        let shift = self.contour_shift();
        let f = |s: Complex64| 1.0 / self.psi_complex(s);
        match laplace::talbot_checked(f, x, self.nodes, shift, 1e-7) {
            Ok(v) => Ok((v, ScaleMethod::Talbot)),
            Err(talbot_err) => {
                let v = laplace::euler(f, x, shift.max(self.eta + 1e-3));
                if v.is_finite() {
                    Ok((v, ScaleMethod::Euler))
                } else {
                    Err(Error::Numeric(format!("scale function at x={x}: {talbot_err}")))
                }
            }
        }
    }

    pub fn scale_function(&self, x: f64) -> Result<f64> {
        self.scale_function_with_method(x).map(|p| p.0)
    }

    /// Infallible W for use inside kernels; panics on inversion failure, which
    /// cannot happen for registry models.
    pub fn w(&self, x: f64) -> f64 {
        self.scale_function(x).unwrap_or_else(|e| panic!("{e}"))
    }

    /// W'(x) for x > 0 (right derivative).
    pub fn scale_derivative(&self, x: f64) -> Result<f64> {
        if x < 0.0 {
            return Ok(0.0);
        }
        if let Some(cf) = self.closed_form() {
            return Ok(cf.dw(x));
        }
        if x == 0.0 {
            return domain("scale_derivative at 0 is not evaluated numerically");
        }
        let w0 = self.w_zero();
        let shift = self.contour_shift();
        let f = |s: Complex64| s / self.psi_complex(s) - w0;
        match laplace::talbot_checked(f, x, self.nodes, shift, 1e-6) {
            Ok(v) => Ok(v),
            Err(_) => Ok(laplace::euler(f, x, shift.max(self.eta + 1e-3))),
        }
    }

    /// lim_{x→∞} W(x); infinite unless the process drifts to -∞.
    pub fn w_infinity(&self) -> f64 {
        let slope0 = self.psi_prime_zero();
        if self.eta == 0.0 && slope0 > 0.0 && slope0.is_finite() {
            1.0 / slope0
        } else {
            f64::INFINITY
        }
    }

    /// Killing rate k = 1/W(∞) of the ladder height process.
    pub fn kill_rate(&self) -> f64 {
        1.0 / self.w_infinity()
    }

    /// Model of the rescaled process Z̃_n.
    pub fn rescale(&self, scheme: &RescalingScheme) -> Result<LevyModel> {
        if self.spec.kind != ModelKind::PreLimit {
            return domain("rescale: base model must be pre-limit");
        }
        let n = scheme.n as f64;
        let spec = ModelSpec {
            kind: ModelKind::PreLimit,
            drift: self.spec.drift * scheme.d_n / n,
            gaussian_b: 0.0,
            jumps: self.spec.jumps.rescaled(n, scheme.d_n),
            mutation: self.spec.mutation.rescaled(n),
        };
        let mut m = LevyModel::new(spec)?;
        m.nodes = self.nodes;
        m.use_registry = self.use_registry;
        Ok(m)
    }

    /// Probability 1 - W(0)/W(τ) that an excursion started at τ returns above τ
    /// before hitting 0.
    pub fn excursion_acceptance(&self, tau: f64) -> f64 {
        1.0 - self.w_zero() / self.w(tau)
    }

    /// p_ε = 1/W(ε) - 1/W(τ), the (unnormalized) mass of lineages deeper than ε.
    pub fn p_eps(&self, eps: f64, tau: f64) -> f64 {
        1.0 / self.w(eps) - 1.0 / self.w(tau)
    }

    /// Probability that an inter-visit excursion is deeper than ε:
    /// p_{n,ε} = W(0)·(1/W(ε) - 1/W(τ)) / (1 - W(0)/W(τ)).
    pub fn deep_excursion_probability(&self, eps: f64, tau: f64) -> f64 {
        self.w_zero() * self.p_eps(eps, tau) / self.excursion_acceptance(tau)
    }
}

fn registry_lookup(spec: &ModelSpec) -> Option<ClosedForm> {
    match (&spec.kind, &spec.jumps) {
        (ModelKind::Limit, JumpMeasureSpec::Zero) if spec.drift == 0.0 && spec.gaussian_b > 0.0 => {
            Some(ClosedForm::Affine {
                w0: 0.0,
                slope: 2.0 / (spec.gaussian_b * spec.gaussian_b),
            })
        }
        (ModelKind::Limit, JumpMeasureSpec::TruncatedStable { alpha, cutoff, weight })
            if *cutoff == 0.0 && spec.drift == 0.0 && spec.gaussian_b == 0.0 =>
        {
            Some(ClosedForm::Stable {
                alpha: *alpha,
                weight: *weight,
            })
        }
        (ModelKind::PreLimit, JumpMeasureSpec::Exponential { mass, rate }) => {
            let c = -spec.drift;
            let k = *rate;
            let a = k - mass / c;
            if a.abs() <= 1e-14 * k {
                Some(ClosedForm::Affine { w0: 1.0 / c, slope: k / c })
            } else {
                Some(ClosedForm::ExpJumps { c, k, a })
            }
        }
        (ModelKind::PreLimit, JumpMeasureSpec::Zero) => Some(ClosedForm::Affine {
            w0: -1.0 / spec.drift,
            slope: 0.0,
        }),
        _ => None,
    }
}

/// Mutation regime of the limit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "regime")]
pub enum MarkRegime {
    /// constant rare mutations; limiting mark rate θ per unit local time
    B1 { theta: f64 },
    /// lifetime-dependent mutations f(u) = min(1, κu)
    B2 { kappa: f64 },
}

impl MarkRegime {
    pub fn theta(&self) -> f64 {
        match self {
            MarkRegime::B1 { theta } => *theta,
            MarkRegime::B2 { .. } => 0.0,
        }
    }

    pub fn kappa(&self) -> f64 {
        match self {
            MarkRegime::B1 { .. } => 0.0,
            MarkRegime::B2 { kappa } => *kappa,
        }
    }

    /// ρ = κb², the Gaussian mark rate (zero under B.1).
    pub fn rho(&self, gaussian_b: f64) -> f64 {
        self.kappa() * gaussian_b * gaussian_b
    }

    /// Limiting mutation function f (identically 0 under B.1).
    pub fn limit_mutation(&self) -> MutationFunctionSpec {
        match self {
            MarkRegime::B1 { .. } => MutationFunctionSpec::Zero,
            MarkRegime::B2 { kappa } => MutationFunctionSpec::LinearCapped { slope: *kappa },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RescalingScheme {
    pub n: u64,
    pub d_n: f64,
    pub marks: MarkRegime,
}

impl RescalingScheme {
    pub fn new(n: u64, d_n: f64, marks: MarkRegime) -> Result<Self> {
        if n == 0 || !(d_n > 0.0) {
            return domain("rescaling needs n >= 1 and d_n > 0");
        }
        Ok(RescalingScheme { n, d_n, marks })
    }

    /// d_n/n, the scale of the positions i·n/d_n.
    pub fn ratio(&self) -> f64 {
        self.d_n / self.n as f64
    }

    /// θ_n = θ·n/d_n, the per-jump mark probability under B.1.
    pub fn theta_n(&self) -> f64 {
        self.marks.theta() / self.ratio()
    }
}

/// Named d_n rules.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum DnRule {
    /// d_n = n²/2
    HalfSquare,
    /// d_n = n^α
    Power { alpha: f64 },
}

impl DnRule {
    pub fn d_n(&self, n: u64) -> f64 {
        let n = n as f64;
        match self {
            DnRule::HalfSquare => n * n / 2.0,
            DnRule::Power { alpha } => n.powf(*alpha),
        }
    }
}

/// Ready-made model families.
pub mod presets {
    use super::*;

    pub fn brownian(b: f64) -> LevyModel {
        LevyModel::new(ModelSpec {
            kind: ModelKind::Limit,
            drift: 0.0,
            gaussian_b: b,
            jumps: JumpMeasureSpec::Zero,
            mutation: MutationFunctionSpec::Zero,
        })
        .expect("valid Brownian model")
    }

    pub fn stable(alpha: f64) -> Result<LevyModel> {
        LevyModel::new(ModelSpec {
            kind: ModelKind::Limit,
            drift: 0.0,
            gaussian_b: 0.0,
            jumps: JumpMeasureSpec::TruncatedStable {
                alpha,
                cutoff: 0.0,
                weight: 1.0,
            },
            mutation: MutationFunctionSpec::Zero,
        })
    }

    /// Base model with unit-mean exponential lifetimes: drift -1, Λ(dr) = e^{-r}dr.
    pub fn exponential_base(mutation: MutationFunctionSpec) -> LevyModel {
        LevyModel::new(ModelSpec {
            kind: ModelKind::PreLimit,
            drift: -1.0,
            gaussian_b: 0.0,
            jumps: JumpMeasureSpec::Exponential { mass: 1.0, rate: 1.0 },
            mutation,
        })
        .expect("valid exponential model")
    }

    /// Rescaled exponential-lifetime family with d_n = n²/2; its limit is the
    /// standard Brownian motion. Under B.1 the per-jump probability is θ·n/d_n
    /// (= β/n for θ = β/2); under B.2 it is min(1, κ·r) on the rescaled axis.
    pub fn critical_exponential(n: u64, marks: MarkRegime) -> Result<(LevyModel, RescalingScheme)> {
        let scheme = RescalingScheme::new(n, DnRule::HalfSquare.d_n(n), marks)?;
        let base_mut = match marks {
            MarkRegime::B1 { .. } => MutationFunctionSpec::Constant { theta: scheme.theta_n() },
            MarkRegime::B2 { kappa } => MutationFunctionSpec::LinearCapped { slope: kappa / n as f64 },
        };
        let model = exponential_base(base_mut).rescale(&scheme)?;
        Ok((model, scheme))
    }
}

#[cfg(test)]
mod tests {
    use super::presets::*;
    use super::*;
    use approx::assert_relative_eq;

    fn exp_model(drift: f64, mass: f64, rate: f64) -> LevyModel {
        LevyModel::new(ModelSpec {
            kind: ModelKind::PreLimit,
            drift,
            gaussian_b: 0.0,
            jumps: JumpMeasureSpec::Exponential { mass, rate },
            mutation: MutationFunctionSpec::Zero,
        })
        .unwrap()
    }

    #[test]
    fn psi_examples() {
        assert_relative_eq!(brownian(1.0).laplace_exponent(2.0).unwrap(), 2.0, epsilon = 1e-14);
        let (m, _) = critical_exponential(10, MarkRegime::B1 { theta: 0.0 }).unwrap();
        assert_relative_eq!(m.laplace_exponent(1.0).unwrap(), 5.0 / 11.0, epsilon = 1e-13);
        assert_relative_eq!(stable(1.5).unwrap().laplace_exponent(4.0).unwrap(), 8.0, epsilon = 1e-12);
        assert!(brownian(1.0).laplace_exponent(-1.0).is_err());
    }

    #[test]
    fn eta_examples() {
        assert_eq!(brownian(1.0).eta(), 0.0);
        assert_eq!(stable(1.5).unwrap().eta(), 0.0);
        let m = exp_model(-1.0, 2.0, 1.0);
        assert_relative_eq!(m.eta(), 1.0, max_relative = 1e-12);
        assert!(m.psi(m.eta()).abs() < 1e-12);
    }

    #[test]
    fn phi_examples() {
        assert_relative_eq!(brownian(1.0).inverse_phi(2.0).unwrap(), 2.0, max_relative = 1e-12);
        assert_relative_eq!(stable(1.5).unwrap().inverse_phi(8.0).unwrap(), 4.0, max_relative = 1e-12);
        let m = exp_model(-1.0, 2.0, 1.0);
        assert_eq!(m.inverse_phi(0.0).unwrap(), m.eta());
        assert!(m.inverse_phi(-1.0).is_err());
    }

    #[test]
    fn scale_function_examples() {
        assert_relative_eq!(brownian(1.0).scale_function(1.0).unwrap(), 2.0);
        assert_relative_eq!(
            stable(1.5).unwrap().scale_function(1.0).unwrap(),
            1.128379167,
            max_relative = 1e-9
        );
        let (m, s) = critical_exponential(10, MarkRegime::B1 { theta: 0.0 }).unwrap();
        assert_relative_eq!(m.scale_function(1.0).unwrap(), 2.2, max_relative = 1e-14);
        assert_eq!(m.scale_function(0.0).unwrap(), s.n as f64 / s.d_n);
        assert_eq!(m.scale_function(-0.5).unwrap(), 0.0);
    }

    #[test]
    fn rescale_examples() {
        let base = exponential_base(MutationFunctionSpec::Zero);
        let s = RescalingScheme::new(10, 50.0, MarkRegime::B1 { theta: 0.0 }).unwrap();
        let r = base.rescale(&s).unwrap();
        assert_relative_eq!(r.drift(), -5.0);
        assert_relative_eq!(r.jumps().density(0.3), 500.0 * (-3.0f64).exp(), max_relative = 1e-14);
        assert_relative_eq!(r.jumps().total_mass(), 50.0);
        let id = base.rescale(&RescalingScheme::new(1, 1.0, MarkRegime::B1 { theta: 0.0 }).unwrap()).unwrap();
        assert_eq!(id.spec(), base.spec());

        let alpha = 1.5;
        let stable_base = LevyModel::new(ModelSpec {
            kind: ModelKind::PreLimit,
            drift: -1.0,
            gaussian_b: 0.0,
            jumps: JumpMeasureSpec::TruncatedStable { alpha, cutoff: 1.0, weight: 1.0 },
            mutation: MutationFunctionSpec::Zero,
        })
        .unwrap();
        let n = 10u64;
        let s = RescalingScheme::new(n, DnRule::Power { alpha }.d_n(n), MarkRegime::B1 { theta: 0.0 }).unwrap();
        let r = stable_base.rescale(&s).unwrap();
        for &x in &[0.2f64, 0.5, 3.0] {
            let expect = x.powf(-alpha) / (alpha * gamma(-alpha).abs());
            assert_relative_eq!(r.jumps().tail_mass(x), expect, max_relative = 1e-12);
        }
    }

    #[test]
    fn inversion_matches_registry() {
        let models = vec![
            brownian(1.0),
            stable(1.5).unwrap(),
            critical_exponential(10, MarkRegime::B1 { theta: 0.0 }).unwrap().0,
            exp_model(-1.0, 2.0, 1.0),
            exp_model(-2.0, 1.0, 1.0),
        ];
        for m in models {
            let raw = m.without_registry();
            for i in 0..50 {
                let x = 0.1 + 4.9 * i as f64 / 49.0;
                let exact = m.w(x);
                let (num, method) = raw.scale_function_with_method(x).unwrap();
                assert_eq!(method, ScaleMethod::Talbot);
                assert!(((num - exact) / exact).abs() < 1e-6, "{:?} x={x}: {num} vs {exact}", m.spec().jumps);
                let d = m.scale_derivative(x).unwrap();
                let dn = raw.scale_derivative(x).unwrap();
                assert!((dn - d).abs() < 1e-6 * d.abs().max(1.0), "W' at {x}: {dn} vs {d}");
            }
        }
    }

    #[test]
    fn truncated_stable_and_tabulated_psi_match_quadrature() {
        // stable reference values from arbitrary-precision quadrature; the
        // heavy r^{-3/2} tail defeats a double-precision reference
        let stable = JumpMeasureSpec::TruncatedStable { alpha: 1.5, cutoff: 0.1, weight: 2.0 };
        let want = [
            (0.01, 0.0019732411113519348),
            (0.7, 1.0412002358200516),
            (3.0, 8.060559042195141),
            (40.0, 196.33300415663592),
        ];
        for (lam, w) in want {
            let v = stable.compensated_transform(Complex64::new(lam, 0.0)).re;
            assert_relative_eq!(v, w, max_relative = 1e-10);
        }
        let tab = JumpMeasureSpec::Tabulated { points: vec![(0.0, 1.0), (0.5, 3.0), (2.0, 0.0)] };
        for &lam in &[0.01, 0.7, 3.0, 40.0] {
            let direct = crate::numerics::quad::integrate_pieces(
                |r| ((-lam * r).exp() - 1.0 + lam * r) * tab.density(r),
                &[0.0, 0.5, 2.0],
                crate::numerics::quad::QuadOptions::tight(),
            )
            .unwrap()
            .value;
            let v = tab.compensated_transform(Complex64::new(lam, 0.0)).re;
            assert!((v - direct).abs() < 1e-9 * direct.abs().max(1e-6), "λ={lam}: {v} vs {direct}");
        }
    }

    #[test]
    fn tabulated_model_w_consistent() {
        // W(0) = 1/c and transform identity at a few λ
        let m = LevyModel::new(ModelSpec {
            kind: ModelKind::PreLimit,
            drift: -2.0,
            gaussian_b: 0.0,
            jumps: JumpMeasureSpec::Tabulated { points: vec![(0.0, 1.0), (0.5, 2.0), (1.0, 0.0)] },
            mutation: MutationFunctionSpec::Zero,
        })
        .unwrap();
        assert!(m.closed_form().is_none());
        assert_relative_eq!(m.w(1e-4), 0.5, max_relative = 1e-3);
        for &lam in &[1.0, 2.0] {
            let lt = crate::numerics::quad::integrate(|x| (-lam * x).exp() * m.w(x), 0.0, 40.0, crate::numerics::quad::QuadOptions::default())
                .unwrap()
                .value;
            assert_relative_eq!(lt, 1.0 / m.psi(lam), max_relative = 1e-6);
        }
    }

    #[test]
    fn sup_error_is_two_over_n() {
        let w = brownian(1.0);
        let mut prev = f64::INFINITY;
        for &n in &[10u64, 20, 40, 80] {
            let (m, _) = critical_exponential(n, MarkRegime::B1 { theta: 0.0 }).unwrap();
            let sup = (0..=500)
                .map(|i| {
                    let x = 5.0 * i as f64 / 500.0;
                    (m.w(x) - w.w(x)).abs()
                })
                .fold(0.0, f64::max);
            assert_relative_eq!(sup, 2.0 / n as f64, max_relative = 1e-12);
            assert!(sup < prev);
            prev = sup;
        }
    }

    #[test]
    fn deep_excursion_probability_example() {
        let (m, _) = critical_exponential(10, MarkRegime::B1 { theta: 0.0 }).unwrap();
        assert_relative_eq!(m.deep_excursion_probability(0.5, 1.0), 1.0 / 12.0, max_relative = 1e-12);
        assert_relative_eq!(m.excursion_acceptance(1.0), 10.0 / 11.0, max_relative = 1e-12);
    }

    #[test]
    fn mark_regime_b1_per_jump_probability() {
        let (m, s) = critical_exponential(100, MarkRegime::B1 { theta: 0.5 }).unwrap();
        assert_relative_eq!(s.theta_n(), 0.01, max_relative = 1e-12);
        assert_eq!(m.mutation(), &MutationFunctionSpec::Constant { theta: 0.01 });
        let (m2, _) = critical_exponential(100, MarkRegime::B2 { kappa: 1.0 }).unwrap();
        assert_eq!(m2.mutation(), &MutationFunctionSpec::LinearCapped { slope: 1.0 });
    }

    #[test]
    fn spec_roundtrips_through_json() {
        let (m, _) = critical_exponential(10, MarkRegime::B2 { kappa: 1.0 }).unwrap();
        let s = serde_json::to_string(m.spec()).unwrap();
        let back: ModelSpec = serde_json::from_str(&s).unwrap();
        assert_eq!(&back, m.spec());
    }
}
