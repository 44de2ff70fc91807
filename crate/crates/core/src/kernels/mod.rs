//! Explicit measures and transition kernels: excursion marginals, g^x,
//! ν-init, the marked ladder measures, μ^K, resolvents of H*, π and the law
//! of the first marked record.

mod excursion;
mod jump_law;
mod ladder;
mod mu_k;
mod transition;

pub use excursion::{excursion_marginal, g_x, g_x_total_mass, nu_init};
pub use jump_law::{estimate_pi, jump_law_first_mutation, JumpLaw, PiEstimate};
pub use ladder::{ladder_measures, resolvent_u_star, LadderMeasures, ResolventDensity};
pub use mu_k::{mu_k, mu_k_stable_closed_form, QProcessRates};
pub use transition::{
    brownian_death_cdf, brownian_mark_rate, brownian_transition, sample_transition, sample_transition_prelimit, TransitionOutcome,
};

use crate::error::{Error, Result};
use crate::levy::LevyModel;
use crate::numerics::quad::{integrate, integrate_singular_left, integrate_singular_right, QuadOptions};
use serde::Serialize;
use std::sync::Arc;

/// Location of an atom: a finite point or the cemetery +∞.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Location {
    At(f64),
    Infinity,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Atom {
    pub location: Location,
    pub mark: u8,
    pub weight: f64,
}

type DensityFn = Arc<dyn Fn(f64, u8) -> f64 + Send + Sync>;

/// A measure on (location, mark) made of atoms plus a density on an interval.
#[derive(Clone)]
pub struct AtomicDensity {
    pub atoms: Vec<Atom>,
    density: Option<DensityFn>,
    /// interval carrying the density
    pub support: (f64, f64),
    /// interior points where the density has kinks
    pub breakpoints: Vec<f64>,
    /// the density may blow up (integrably) at the left / right end
    pub singular_ends: (bool, bool),
}

impl std::fmt::Debug for AtomicDensity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AtomicDensity")
            .field("atoms", &self.atoms)
            .field("has_density", &self.density.is_some())
            .field("support", &self.support)
            .finish()
    }
}

impl AtomicDensity {
    pub fn atoms_only(atoms: Vec<Atom>) -> Self {
        AtomicDensity { atoms, density: None, support: (0.0, 0.0), breakpoints: vec![], singular_ends: (false, false) }
    }

    pub fn with_density<F>(atoms: Vec<Atom>, support: (f64, f64), density: F) -> Self
    where
        F: Fn(f64, u8) -> f64 + Send + Sync + 'static,
    {
        AtomicDensity {
            atoms,
            density: Some(Arc::new(density)),
            support,
            breakpoints: vec![],
            singular_ends: (false, false),
        }
    }

    pub fn breakpoints(mut self, pts: Vec<f64>) -> Self {
        self.breakpoints = pts;
        self
    }

    pub fn singular(mut self, left: bool, right: bool) -> Self {
        self.singular_ends = (left, right);
        self
    }

    pub fn has_density(&self) -> bool {
        self.density.is_some()
    }

    /// Density at (u, q); zero outside the support.
    pub fn density(&self, u: f64, q: u8) -> f64 {
        match &self.density {
            Some(d) if u > self.support.0 && u < self.support.1 => d(u, q),
            _ => 0.0,
        }
    }

    pub fn atom_mass(&self, q: Option<u8>) -> f64 {
        self.atoms.iter().filter(|a| q.is_none_or(|m| a.mark == m)).map(|a| a.weight).sum()
    }

    pub fn finite_atom_mass(&self, q: Option<u8>) -> f64 {
        self.atoms
            .iter()
            .filter(|a| matches!(a.location, Location::At(_)) && q.is_none_or(|m| a.mark == m))
            .map(|a| a.weight)
            .sum()
    }

    /// ∫ density(u, q) du over [lo, hi] ∩ support.
    pub fn density_mass_between(&self, q: u8, lo: f64, hi: f64) -> Result<f64> {
        let Some(d) = &self.density else { return Ok(0.0) };
        let (a, b) = (lo.max(self.support.0), hi.min(self.support.1));
        if !(b > a) {
            return Ok(0.0);
        }
        let f = |u: f64| d(u, q);
        let sl = self.singular_ends.0 && a == self.support.0;
        let sr = self.singular_ends.1 && b == self.support.1;
        integrate_split(f, a, b, &self.breakpoints, sl, sr, QuadOptions::default())
    }

    pub fn density_mass(&self, q: u8) -> Result<f64> {
        self.density_mass_between(q, self.support.0, self.support.1)
    }

    /// Mass of channel `q` (atoms plus density).
    pub fn mark_mass(&self, q: u8) -> Result<f64> {
        Ok(self.atom_mass(Some(q)) + self.density_mass(q)?)
    }

    /// Total mass over both marks, including atoms at +∞.
    pub fn total_mass(&self) -> Result<f64> {
        Ok(self.mark_mass(0)? + self.mark_mass(1)?)
    }

    /// Tabulates the density of mark `q` on `k` equal bins of the support,
    /// returning bin masses (finite atoms land in their bin).
    pub fn binned(&self, q: u8, k: usize) -> Result<Vec<f64>> {
        let (a, b) = self.support;
        let h = (b - a) / k as f64;
        let mut out = Vec::with_capacity(k);
        for i in 0..k {
            out.push(self.density_mass_between(q, a + i as f64 * h, a + (i + 1) as f64 * h)?);
        }
        for at in &self.atoms {
            if let Location::At(x) = at.location {
                if at.mark == q && x >= a && x <= b {
                    let i = (((x - a) / h) as usize).min(k - 1);
                    out[i] += at.weight;
                }
            }
        }
        Ok(out)
    }
}

pub(crate) fn check_finite(v: f64, what: &str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Numeric(format!("{what}: non-finite value")))
    }
}

/// Points on (lo, hi) where the jump density of `model` shifted by `shift`
/// has kinks, for quadrature splitting.
pub(crate) fn shifted_breaks(model: &LevyModel, shift: f64, lo: f64, hi: f64) -> Vec<f64> {
    model
        .jumps()
        .breakpoints()
        .into_iter()
        .map(|p| p - shift)
        .filter(|&p| p > lo && p < hi)
        .collect()
}

/// Whether the jump density blows up at 0 (untruncated stable).
pub(crate) fn singular_at_zero(model: &LevyModel) -> bool {
    !model.jumps().total_mass().is_finite()
}

/// ∫_lo^hi f with the model's kinks (shifted) used as split points; `sing_lo`
/// requests a power substitution at the left end.
pub(crate) fn integrate_split<F: Fn(f64) -> f64>(
    f: F,
    lo: f64,
    hi: f64,
    breaks: &[f64],
    sing_lo: bool,
    sing_hi: bool,
    opts: QuadOptions,
) -> Result<f64> {
    if !(hi > lo) {
        return Ok(0.0);
    }
    let mut pts = vec![lo];
    let mut inner: Vec<f64> = breaks.iter().copied().filter(|&p| p > lo && p < hi).collect();
    inner.sort_by(f64::total_cmp);
    pts.extend(inner);
    pts.push(hi);
    let last = pts.len() - 2;
    let mut acc = 0.0;
    for (i, w) in pts.windows(2).enumerate() {
        let (a, b) = (w[0], w[1]);
        let sl = sing_lo && i == 0;
        let sr = sing_hi && i == last;
        let r = if b.is_infinite() {
            if sl {
                let mid = a + 1.0;
                integrate_singular_left(&f, a, mid, 2.0, opts)?.value
                    + crate::numerics::quad::integrate_to_inf(&f, mid, opts)?.value
            } else {
                crate::numerics::quad::integrate_to_inf(&f, a, opts)?.value
            }
        } else if sl && sr {
            crate::numerics::quad::integrate_singular_both(&f, a, b, 2.0, opts)?.value
        } else if sl {
            integrate_singular_left(&f, a, b, 2.0, opts)?.value
        } else if sr {
            integrate_singular_right(&f, a, b, 2.0, opts)?.value
        } else {
            integrate(&f, a, b, opts)?.value
        };
        acc += r;
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atoms_and_density_masses() {
        let d = AtomicDensity::with_density(
            vec![
                Atom { location: Location::At(0.0), mark: 0, weight: 0.25 },
                Atom { location: Location::Infinity, mark: 0, weight: 0.5 },
            ],
            (0.0, 1.0),
            |u, q| if q == 1 { 2.0 * u } else { 0.0 },
        );
        assert!((d.total_mass().unwrap() - 1.75).abs() < 1e-12);
        assert!((d.finite_atom_mass(None) - 0.25).abs() < 1e-15);
        assert_eq!(d.density(1.5, 1), 0.0);
        let bins = d.binned(1, 2).unwrap();
        assert!((bins[0] - 0.25).abs() < 1e-12 && (bins[1] - 0.75).abs() < 1e-12);
    }
}
