//! π and the law of the first marked record before T^{-x}.
//!
//! Everything is put on the lattice {0, h, 2h, …, L} with L = τ - x; a
//! density is represented by the masses of the cells centred on lattice
//! points, so convolutions stay on the lattice.

use super::excursion::g_x;
use super::ladder::{resolvent_u_star, LadderMeasures};
use crate::error::{domain, Error, Result};
use crate::levy::{LevyModel, MarkRegime};
use crate::path::{sample_path, EndReason, PathStopRule};
use crate::rng::SeedStream;
use rayon::prelude::*;
use serde::Serialize;

/// Monte Carlo estimate of π(da) = P(H⁺(L(T^{-x})-) ∈ da, L(T^{-x}) ≤ e),
/// i.e. the supremum reached before T^{-x} on the event that no marked
/// record occurred before T^{-x}.
#[derive(Debug, Clone, Serialize)]
pub struct PiEstimate {
    pub x: f64,
    /// lattice step; bin j collects suprema in [(j-½)h, (j+½)h)
    pub step: f64,
    pub masses: Vec<f64>,
    pub standard_errors: Vec<f64>,
    /// P(supremum before T^{-x} ≥ range), marks ignored
    pub overflow: f64,
    pub samples: usize,
    pub seed: String,
}

impl PiEstimate {
    pub fn range(&self) -> f64 {
        self.step * (self.masses.len() - 1) as f64
    }

    pub fn mass(&self) -> f64 {
        self.masses.iter().sum()
    }

    pub fn mass_standard_error(&self) -> f64 {
        let p = self.mass();
        (p * (1.0 - p) / self.samples as f64).sqrt()
    }
}

/// Runs `samples` paths from 0 until T^{-x} (or until they exceed `range`)
/// under the pre-limit `model`; `cells` lattice intervals cover [0, range].
pub fn estimate_pi(
    model: &LevyModel,
    x: f64,
    range: f64,
    cells: usize,
    samples: usize,
    stream: &SeedStream,
) -> Result<PiEstimate> {
    if !model.is_pre_limit() {
        return domain("estimate_pi needs a pre-limit proxy model");
    }
    if !(x > 0.0 && range > 0.0 && cells > 0 && samples > 0) {
        return domain("estimate_pi needs x > 0, range > 0 and positive counts");
    }
    let h = range / cells as f64;
    let stop = PathStopRule::FirstOf(vec![PathStopRule::HitLevel(-x), PathStopRule::CrossAbove(range)]);
    // None: exceeded range; Some(None): a marked record came first; Some(Some(j)): lattice bin
    let outcomes: Vec<Option<Option<usize>>> = (0..samples)
        .into_par_iter()
        .map(|k| {
            let mut rng = stream.child(k as u64).rng();
            let e = sample_path(model, 0.0, &stop, &mut rng)?;
            if e.end_reason == EndReason::CrossedTau {
                return Ok(None);
            }
            let recs = e.ladder_records();
            if recs.iter().any(|r| r.marked) {
                return Ok(Some(None));
            }
            let sup = recs.last().map_or(0.0, |r| r.record_level);
            Ok(Some(Some(((sup / h) + 0.5).floor() as usize)))
        })
        .collect::<Result<_>>()?;
    let mut counts = vec![0usize; cells + 1];
    let mut over = 0usize;
    for o in outcomes {
        match o {
            None => over += 1,
            Some(Some(j)) => counts[j.min(cells)] += 1,
            Some(None) => {}
        }
    }
    let nf = samples as f64;
    let masses: Vec<f64> = counts.iter().map(|&c| c as f64 / nf).collect();
    let standard_errors = masses.iter().map(|p| (p * (1.0 - p) / nf).sqrt()).collect();
    Ok(PiEstimate {
        x,
        step: h,
        masses,
        standard_errors,
        overflow: over as f64 / nf,
        samples,
        seed: stream.describe(),
    })
}

/// ν^M(x, ·) and ν^D(x, ·) on the lattice, conditioned on T^{-x} < T^{(τ-x,∞)}.
#[derive(Debug, Clone, Serialize)]
pub struct JumpLaw {
    pub x: f64,
    pub tau: f64,
    pub step: f64,
    /// unconditioned joint masses P(H⁺(e-) = z_i, ΔH⁺(e) = y_j, L^{-1}(e) < T^{-x} < T^{(τ-x,∞)})
    pub joint: Vec<Vec<f64>>,
    /// ν^M(x, x + u_k) masses, u_k = k·step
    pub mutation: Vec<f64>,
    /// ν^D(x, x + u_k) masses
    pub death: Vec<f64>,
    pub mutation_mass: f64,
    pub death_mass: f64,
    /// Monte Carlo standard error of mutation_mass + death_mass from π
    pub total_mass_se: f64,
    /// Monte Carlo standard error of the unconditioned joint mass
    pub joint_mass_se: f64,
}

impl JumpLaw {
    pub fn total_mass(&self) -> f64 {
        self.mutation_mass + self.death_mass
    }

    pub fn joint_mass(&self) -> f64 {
        self.joint.iter().flatten().sum()
    }

    /// Density of the joint law at (z, y) read off the lattice.
    pub fn density(&self, z: f64, y: f64) -> f64 {
        let i = (z / self.step).round() as usize;
        let j = (y / self.step).round() as usize;
        match self.joint.get(i).and_then(|r| r.get(j)) {
            Some(v) => v / (self.step * self.step),
            None => 0.0,
        }
    }
}

/// Lattice masses of a density: point k gets ∫ over [(k-½)h, (k+½)h) ∩ [0, ∞).
fn lattice_from_density<F: Fn(f64) -> Result<f64>>(f: F, h: f64, n: usize) -> Result<Vec<f64>> {
    let mut out = vec![0.0; n + 1];
    out[0] = 0.5 * h * f(0.25 * h)?;
    for (k, o) in out.iter_mut().enumerate().skip(1) {
        // two-point Gauss rule on the cell
        let c = k as f64 * h;
        let d = 0.5 * h / 3f64.sqrt();
        *o = 0.5 * h * (f(c - d)? + f(c + d)?);
    }
    Ok(out)
}

/// Builds ν^M and ν^D from the ladder measures, the π estimate and g^x.
/// `ladder` must describe the same model as `model` (pre-limit: μ_n with its
/// own marks; limit: μ together with the regime).
pub fn jump_law_first_mutation(
    model: &LevyModel,
    ladder: &LadderMeasures,
    pi: Option<&PiEstimate>,
    x: f64,
    tau: f64,
) -> Result<JumpLaw> {
    let pi = pi.ok_or_else(|| Error::Contract("jump law needs a PiEstimate".into()))?;
    if !(x > 0.0 && x < tau) {
        return domain(format!("jump law needs 0 < x < tau (got {x})"));
    }
    if (pi.x - x).abs() > 1e-12 || (pi.range() - (tau - x)).abs() > 1e-9 {
        return Err(Error::Contract("PiEstimate must be built for the same x and range tau - x".into()));
    }
    let h = pi.step;
    let n = pi.masses.len() - 1;
    let lam = ladder.lambda_rate;
    let empty = || vec![0.0; n + 1];
    let w_tau = model.w(tau);
    let w_l = model.w(tau - x);
    let omega: Vec<f64> = (0..=n).map(|k| model.w(tau - x - k as f64 * h) / w_tau).collect();
    let death: Vec<f64> = pi.masses.iter().enumerate().map(|(k, p)| if k < n { p * w_tau / w_l } else { 0.0 }).collect();
    let death_mass: f64 = death.iter().sum();

    // law of the first mark level given marks: Y = μ̃(dy,{1})/λ
    let (fz, yv) = if lam > 0.0 {
        let u = resolvent_u_star(ladder, lam + ladder.kill_rate)?;
        let mut fz = lattice_from_density(|z| Ok(lam * u.density(z)?), h, n)?;
        fz[0] += lam * u.atom_at_zero;
        let mut yv = lattice_from_density(|y| Ok(ladder.mu(y, 1) / lam), h, n)?;
        let atom_y = match ladder.regime {
            Some(MarkRegime::B1 { theta }) if !model.is_pre_limit() => theta,
            _ => ladder.rho,
        };
        yv[0] += atom_y / lam;
        (fz, yv)
    } else {
        (empty(), empty())
    };

    // G(z) = ∫π(da)∫g^x(a,{0},db-a) F(z-b); T3(z,y) = π(z) g^x(z,{1},y)
    let nonzero: Vec<usize> = (0..=n).filter(|&j| pi.masses[j] > 0.0).collect();
    let per_point: Vec<(usize, Vec<f64>, Vec<f64>)> = nonzero
        .par_iter()
        .map(|&j| {
            let a = j as f64 * h;
            let g = g_x(model, x, a)?;
            let m = n - j;
            let mut g0 = lattice_from_density(|v| Ok(g.density(v, 0)), h, m)?;
            let g1 = lattice_from_density(|v| Ok(g.density(v, 1)), h, m)?;
            g0[0] += g.finite_atom_mass(Some(0));
            Ok((j, g0, g1))
        })
        .collect::<Result<_>>()?;

    let mut joint = vec![vec![0.0; n + 1]; n + 1];
    // first term and G-term, built per π point so their sensitivity is known
    let mut coef = vec![0.0; n + 1];
    let mut gz = empty();
    for (j, g0, g1) in &per_point {
        let pj = pi.masses[*j];
        // b = j + v, then z = b + s
        let mut contrib_g = vec![0.0; n + 1];
        for (v, gv) in g0.iter().enumerate() {
            if *gv == 0.0 {
                continue;
            }
            for s in 0..=(n - j - v) {
                contrib_g[j + v + s] += gv * fz[s];
            }
        }
        let mut c = 0.0;
        for z in 0..=n {
            if contrib_g[z] == 0.0 {
                continue;
            }
            gz[z] += pj * contrib_g[z];
            for y in 0..=(n - z) {
                c -= contrib_g[z] * yv[y] * omega[z + y] * w_tau / w_l;
            }
        }
        for (y, gy) in g1.iter().enumerate() {
            let t = pj * gy * omega[j + y];
            joint[*j][y] -= t;
            c -= gy * omega[j + y] * w_tau / w_l;
        }
        if *j < n {
            c += w_tau / w_l;
        }
        coef[*j] = c;
    }
    for z in 0..=n {
        for y in 0..=(n - z) {
            joint[z][y] += (fz[z] - gz[z]) * yv[y] * omega[z + y];
        }
    }
    let mut mutation = empty();
    for z in 0..=n {
        for y in 0..=(n - z) {
            mutation[z + y] += joint[z][y] * w_tau / w_l;
        }
    }
    let mutation_mass: f64 = mutation.iter().sum();
    // multinomial variance of Σ c_j π̂_j
    let ns = pi.samples as f64;
    let (m1, m2) = (0..=n).fold((0.0, 0.0), |(a, b), j| (a + coef[j] * pi.masses[j], b + coef[j] * coef[j] * pi.masses[j]));
    let total_mass_se = ((m2 - m1 * m1).max(0.0) / ns).sqrt();
    let scale = w_l / w_tau;
    let (j1, j2) = (0..=n).fold((0.0, 0.0), |(a, b), j| {
        let c = (coef[j] - if j < n { w_tau / w_l } else { 0.0 }) * scale;
        (a + c * pi.masses[j], b + c * c * pi.masses[j])
    });
    let joint_mass_se = ((j2 - j1 * j1).max(0.0) / ns).sqrt();
    Ok(JumpLaw {
        x,
        tau,
        step: h,
        joint,
        mutation,
        death,
        mutation_mass,
        death_mass,
        total_mass_se,
        joint_mass_se,
    })
}
