//! Lineage measures extracted from excursions, and the marked coalescent
//! point process built from them.

use crate::error::{Error, Result};
use crate::levy::{LevyModel, MarkRegime};
use crate::path::{sample_excursion_below_tau, sample_path, EndReason, MarkedExcursion, PathStopRule};
use crate::rng::SeedStream;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// One lineage: coalescence depth plus the depths of its mutations.
///
/// `mutation_depths` holds the mutations strictly shallower than the
/// coalescence, in increasing order; a mutation carried by the coalescing
/// birth itself is recorded by `coalescence_is_mutation`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineageMeasure {
    pub coalescence_depth: f64,
    pub mutation_depths: Vec<f64>,
    pub coalescence_is_mutation: bool,
}

impl LineageMeasure {
    pub fn new(coalescence_depth: f64, mutation_depths: Vec<f64>, coalescence_is_mutation: bool) -> Result<Self> {
        let l = LineageMeasure { coalescence_depth, mutation_depths, coalescence_is_mutation };
        l.check(f64::INFINITY)?;
        Ok(l)
    }

    /// Checks 0 < a_0 < … < a_{m-1} < a_m < τ.
    pub fn check(&self, tau: f64) -> Result<()> {
        let a = self.coalescence_depth;
        if !(a > 0.0 && a < tau) {
            return Err(Error::Contract(format!("coalescence depth {a} outside (0, {tau})")));
        }
        let mut prev = 0.0;
        for &m in &self.mutation_depths {
            if !(m > prev && m < a) {
                return Err(Error::Contract(format!(
                    "mutation depths must increase strictly inside (0, {a}): {:?}",
                    self.mutation_depths
                )));
            }
            prev = m;
        }
        Ok(())
    }

    /// Number of mutation atoms, counting a mutation at the coalescence.
    pub fn mutation_count(&self) -> usize {
        self.mutation_depths.len() + self.coalescence_is_mutation as usize
    }

    /// Mutation depths including the coalescence depth when it is a mutation.
    pub fn all_mutation_depths(&self) -> Vec<f64> {
        let mut v = self.mutation_depths.clone();
        if self.coalescence_is_mutation {
            v.push(self.coalescence_depth);
        }
        v
    }

    /// Number of atoms (coalescence plus mutations) with depth in [ε, τ).
    pub fn atoms_from(&self, eps: f64) -> usize {
        if self.coalescence_depth < eps {
            return 0;
        }
        1 + self.all_mutation_depths().iter().filter(|&&d| d >= eps).count()
    }

    /// Trace on [ε, τ): `None` when the lineage is shallower than ε.
    pub fn restrict_to_epsilon(&self, eps: f64) -> Option<LineageMeasure> {
        if self.coalescence_depth < eps {
            return None;
        }
        Some(LineageMeasure {
            coalescence_depth: self.coalescence_depth,
            mutation_depths: self.mutation_depths.iter().copied().filter(|&d| d >= eps).collect(),
            coalescence_is_mutation: self.coalescence_is_mutation,
        })
    }
}

pub fn restrict_to_epsilon(lineage: &LineageMeasure, eps: f64) -> Option<LineageMeasure> {
    lineage.restrict_to_epsilon(eps)
}

/// Reads the lineage of the individual closing an excursion below τ off the
/// future infimum of the excursion.
pub fn extract_lineage_measure(exc: &MarkedExcursion, tau: f64) -> Result<LineageMeasure> {
    if exc.end_reason != EndReason::CrossedTau {
        return Err(Error::Contract(format!(
            "lineage extraction needs an excursion closed by a crossing of tau (got {:?})",
            exc.end_reason
        )));
    }
    let chain = exc.future_infimum();
    let first = chain
        .first()
        .ok_or_else(|| Error::Contract("excursion without jumps cannot cross tau".into()))?;
    let coalescence_depth = tau - first.level;
    // depths decrease along the chain; collect the marked ones in increasing depth
    let mut mutation_depths: Vec<f64> = chain.iter().skip(1).rev().filter(|j| j.marked).map(|j| tau - j.level).collect();
    mutation_depths.dedup();
    let l = LineageMeasure {
        coalescence_depth,
        mutation_depths,
        coalescence_is_mutation: first.marked,
    };
    l.check(tau)?;
    Ok(l)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CppAtom {
    pub position: f64,
    pub lineage: LineageMeasure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CppMeta {
    /// "pre_limit" or "limit"
    pub source: String,
    pub tau: f64,
    #[serde(default)]
    pub n: Option<u64>,
    #[serde(default)]
    pub d_n: Option<f64>,
    #[serde(default)]
    pub i_n: Option<usize>,
    #[serde(default)]
    pub eps: Option<f64>,
    #[serde(default)]
    pub window: Option<f64>,
    #[serde(default)]
    pub regime: Option<MarkRegime>,
    pub seed: String,
    #[serde(default)]
    pub warnings: Vec<String>,
}

/// Marked coalescent point process: positions in [0, 1] (or a survival
/// window) paired with lineage measures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkedCPP {
    pub meta: CppMeta,
    pub atoms: Vec<CppAtom>,
}

impl MarkedCPP {
    pub fn depths(&self) -> Vec<f64> {
        self.atoms.iter().map(|a| a.lineage.coalescence_depth).collect()
    }
}

/// Lineages 1..I_n-1 of the rescaled tree conditioned on I_n extant
/// individuals at level τ. Lineage i uses the stream `stream/i`.
pub fn simulate_marked_cpp(
    model: &LevyModel,
    n: u64,
    d_n: f64,
    tau: f64,
    i_n: usize,
    stream: &SeedStream,
) -> Result<MarkedCPP> {
    if i_n < 1 {
        return Err(Error::Domain("I_n must be at least 1".into()));
    }
    let step = n as f64 / d_n;
    let mut warnings = Vec::new();
    if i_n as f64 * step > 1.0 + 1e-9 {
        warnings.push(format!("positions exceed [0,1]: I_n·n/d_n = {}", i_n as f64 * step));
    }
    let atoms = (1..i_n)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream.child(i as u64).rng();
            let exc = sample_excursion_below_tau(model, tau, &mut rng)?;
            Ok(CppAtom {
                position: i as f64 * step,
                lineage: extract_lineage_measure(&exc, tau)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MarkedCPP {
        meta: CppMeta {
            source: "pre_limit".into(),
            tau,
            n: Some(n),
            d_n: Some(d_n),
            i_n: Some(i_n),
            eps: None,
            window: None,
            regime: None,
            seed: stream.describe(),
            warnings,
        },
        atoms,
    })
}

/// `count` i.i.d. lineages (no positions), drawn in parallel from `stream/k`.
pub fn sample_lineages(model: &LevyModel, tau: f64, count: usize, stream: &SeedStream) -> Result<Vec<LineageMeasure>> {
    (0..count)
        .into_par_iter()
        .map(|k| {
            let mut rng = stream.child(k as u64).rng();
            let exc = sample_excursion_below_tau(model, tau, &mut rng)?;
            extract_lineage_measure(&exc, tau)
        })
        .collect()
}

/// Population size at level τ conditioned on survival: each further
/// individual corresponds to one more excursion from τ returning above τ
/// before hitting 0, so the count stops at the first excursion that dies.
pub fn simulate_population_count<R: Rng + ?Sized>(model: &LevyModel, tau: f64, rng: &mut R) -> Result<u64> {
    let stop = PathStopRule::FirstOf(vec![PathStopRule::HitLevel(0.0), PathStopRule::CrossAbove(tau)]);
    let mut count = 1u64;
    loop {
        let e = sample_path(model, tau, &stop, rng)?;
        if e.end_reason != EndReason::CrossedTau {
            return Ok(count);
        }
        count += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levy::presets;
    use crate::path::Segment;

    fn exc(segments: Vec<Segment>) -> MarkedExcursion {
        MarkedExcursion {
            start_level: 1.0,
            drift: -1.0,
            segments,
            final_descent: 0.0,
            end_reason: EndReason::CrossedTau,
        }
    }

    #[test]
    fn marked_coalescence() {
        let e = exc(vec![
            Segment { duration: 0.7, jump: 0.4, marked: true },
            Segment { duration: 0.2, jump: 0.6, marked: false },
        ]);
        let l = extract_lineage_measure(&e, 1.0).unwrap();
        assert!((l.coalescence_depth - 0.7).abs() < 1e-12);
        assert!(l.mutation_depths.is_empty());
        assert!(l.coalescence_is_mutation);
        assert_eq!(l.all_mutation_depths().len(), 1);
    }

    #[test]
    fn shallower_mutation() {
        let e = exc(vec![
            Segment { duration: 0.7, jump: 0.5, marked: false },
            Segment { duration: 0.2, jump: 0.6, marked: true },
        ]);
        let l = extract_lineage_measure(&e, 1.0).unwrap();
        assert!((l.coalescence_depth - 0.7).abs() < 1e-12);
        assert_eq!(l.mutation_depths.len(), 1);
        assert!((l.mutation_depths[0] - 0.4).abs() < 1e-12);
        assert!(!l.coalescence_is_mutation);
    }

    #[test]
    fn restriction() {
        let l = LineageMeasure::new(0.7, vec![0.4], false).unwrap();
        assert_eq!(l.restrict_to_epsilon(0.5).unwrap().mutation_depths, Vec::<f64>::new());
        assert_eq!(l.restrict_to_epsilon(0.1).unwrap(), l);
        assert!(l.restrict_to_epsilon(0.8).is_none());
    }

    #[test]
    fn extraction_rejects_dead_excursions() {
        let mut e = exc(vec![]);
        e.end_reason = EndReason::HitZero;
        assert!(matches!(extract_lineage_measure(&e, 1.0), Err(Error::Contract(_))));
    }

    #[test]
    fn positions_and_degenerate_sizes() {
        let (m, s) = presets::critical_exponential(10, MarkRegime::B1 { theta: 0.5 }).unwrap();
        let cpp = simulate_marked_cpp(&m, s.n, s.d_n, 1.0, 5, &SeedStream::new(1)).unwrap();
        let pos: Vec<f64> = cpp.atoms.iter().map(|a| a.position).collect();
        assert_eq!(pos.len(), 4);
        for (p, want) in pos.iter().zip([0.2, 0.4, 0.6, 0.8]) {
            assert!((p - want).abs() < 1e-12);
        }
        let empty = simulate_marked_cpp(&m, s.n, s.d_n, 1.0, 1, &SeedStream::new(1)).unwrap();
        assert!(empty.atoms.is_empty());
    }

    #[test]
    fn zero_mutation_function_gives_no_mutations() {
        let (m, _) = presets::critical_exponential(10, MarkRegime::B1 { theta: 0.0 }).unwrap();
        let ls = sample_lineages(&m, 1.0, 500, &SeedStream::new(3)).unwrap();
        assert!(ls.iter().all(|l| l.mutation_count() == 0));
    }
}
