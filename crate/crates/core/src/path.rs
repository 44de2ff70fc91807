//! Exact skeleton simulation of finite-variation marked Lévy paths.
//!
//! A pre-limit path is a sequence of linear descents at slope `drift < 0`,
//! each followed by a positive jump. Down-crossings are located by linear
//! interpolation and up-crossings happen only at jumps, so every stopping
//! rule is evaluated without discretization error.

use crate::error::{Error, Result};
use crate::levy::LevyModel;
use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    /// length of the linear descent preceding the jump
    pub duration: f64,
    pub jump: f64,
    pub marked: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EndReason {
    /// a `HitLevel(0)` target was reached by continuous descent
    HitZero,
    /// a jump carried the path above a `CrossAbove` level
    CrossedTau,
    /// a nonzero `HitLevel` target was reached
    StopLevelHit,
    /// the time horizon ran out
    Horizon,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PathStopRule {
    HitLevel(f64),
    CrossAbove(f64),
    /// stop at a fixed time (not one of the path events; used for counting checks)
    Horizon(f64),
    FirstOf(Vec<PathStopRule>),
}

impl PathStopRule {
    fn collect(&self, hits: &mut Vec<f64>, crosses: &mut Vec<f64>, horizon: &mut f64) {
        match self {
            PathStopRule::HitLevel(x) => hits.push(*x),
            PathStopRule::CrossAbove(y) => crosses.push(*y),
            PathStopRule::Horizon(t) => *horizon = horizon.min(*t),
            PathStopRule::FirstOf(v) => v.iter().for_each(|r| r.collect(hits, crosses, horizon)),
        }
    }
}

/// Skeleton of a stopped path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkedExcursion {
    pub start_level: f64,
    /// slope of the descents (negative)
    pub drift: f64,
    pub segments: Vec<Segment>,
    /// descent after the last jump (0 when the path stopped on a jump)
    pub final_descent: f64,
    pub end_reason: EndReason,
}

/// Running-supremum record of a path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LadderRecord {
    /// new supremum reached by the jump
    pub record_level: f64,
    /// increase of the supremum caused by the jump
    pub overshoot: f64,
    pub marked: bool,
}

/// One jump of the future-infimum process.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InfimumJump {
    pub time: f64,
    /// value j(s-) just before the jump
    pub level: f64,
    pub marked: bool,
}

impl MarkedExcursion {
    /// Path values just before each jump.
    pub fn pre_jump_levels(&self) -> Vec<f64> {
        let mut cur = self.start_level;
        let mut out = Vec::with_capacity(self.segments.len());
        for s in &self.segments {
            cur += self.drift * s.duration;
            out.push(cur);
            cur += s.jump;
        }
        out
    }

    pub fn final_level(&self) -> f64 {
        let mut cur = self.start_level;
        for s in &self.segments {
            cur += self.drift * s.duration + s.jump;
        }
        cur + self.drift * self.final_descent
    }

    pub fn lifetime(&self) -> f64 {
        self.segments.iter().map(|s| s.duration).sum::<f64>() + self.final_descent
    }

    /// Minimum of the path; with negative drift it is attained just before a
    /// jump or at the end.
    pub fn infimum(&self) -> f64 {
        let pre = self.pre_jump_levels();
        let mut m = self.final_level().min(self.start_level);
        for v in pre {
            m = m.min(v);
        }
        m
    }

    pub fn jump_times(&self) -> Vec<f64> {
        let mut t = 0.0;
        self.segments
            .iter()
            .map(|s| {
                t += s.duration;
                t
            })
            .collect()
    }

    /// Jump chain of the future infimum j(t) = inf_{[t,ζ]} of the path, in
    /// increasing time (hence strictly increasing level) order.
    pub fn future_infimum(&self) -> Vec<InfimumJump> {
        let pre = self.pre_jump_levels();
        let times = self.jump_times();
        let mut running = self.final_level();
        let mut out = Vec::new();
        for k in (0..self.segments.len()).rev() {
            if pre[k] < running {
                out.push(InfimumJump {
                    time: times[k],
                    level: pre[k],
                    marked: self.segments[k].marked,
                });
                running = pre[k];
            }
        }
        out.reverse();
        out
    }

    /// Jumps that strictly raise the running supremum (started at `start_level`).
    pub fn ladder_records(&self) -> Vec<LadderRecord> {
        let mut sup = self.start_level;
        let mut cur = self.start_level;
        let mut out = Vec::new();
        for s in &self.segments {
            cur += self.drift * s.duration;
            cur += s.jump;
            if cur > sup {
                out.push(LadderRecord {
                    record_level: cur,
                    overshoot: cur - sup,
                    marked: s.marked,
                });
                sup = cur;
            }
        }
        out
    }

    /// Tab-separated skeleton dump with a header.
    pub fn to_tsv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "# start_level={} drift={} end_reason={:?} final_descent={}",
            self.start_level, self.drift, self.end_reason, self.final_descent
        );
        s.push_str("duration\tjump\tmark\n");
        for seg in &self.segments {
            let _ = writeln!(s, "{}\t{}\t{}", seg.duration, seg.jump, seg.marked as u8);
        }
        s
    }
}

/// Simulates the pre-limit path from `x0` until `stop` fires.
pub fn sample_path<R: Rng + ?Sized>(
    model: &LevyModel,
    x0: f64,
    stop: &PathStopRule,
    rng: &mut R,
) -> Result<MarkedExcursion> {
    if !model.is_pre_limit() {
        return Err(Error::Domain("path sampling needs a finite-variation pre-limit model".into()));
    }
    let drift = model.drift();
    let mass = model.jumps().total_mass();
    if drift == 0.0 && mass == 0.0 {
        return Err(Error::DegenerateModel("zero drift and zero jump mass".into()));
    }
    let mut hits = Vec::new();
    let mut crosses = Vec::new();
    let mut horizon = f64::INFINITY;
    stop.collect(&mut hits, &mut crosses, &mut horizon);
    let wait = if mass > 0.0 { Some(Exp::new(mass).expect("positive mass")) } else { None };
    let mutation = model.mutation();

    let mut segments = Vec::new();
    let mut cur = x0;
    let mut elapsed = 0.0;
    let max_jumps = 50_000_000usize;
    loop {
        // highest hit target strictly below the current value is met first
        let target = hits.iter().copied().filter(|&h| h < cur).fold(f64::NEG_INFINITY, f64::max);
        let w = match &wait {
            Some(e) => e.sample(rng),
            None => f64::INFINITY,
        };
        let t_hit = if target.is_finite() && drift < 0.0 { (cur - target) / -drift } else { f64::INFINITY };
        let t_horizon = horizon - elapsed;
        if t_hit <= w && t_hit <= t_horizon {
            let reason = if target == 0.0 { EndReason::HitZero } else { EndReason::StopLevelHit };
            return Ok(MarkedExcursion { start_level: x0, drift, segments, final_descent: t_hit, end_reason: reason });
        }
        if t_horizon < w {
            return Ok(MarkedExcursion {
                start_level: x0,
                drift,
                segments,
                final_descent: t_horizon.max(0.0),
                end_reason: EndReason::Horizon,
            });
        }
        let r = model.jumps().sample(rng);
        // the uniform is always drawn so that paths under different mutation
        // functions stay coupled on a shared seed
        let marked = rng.random::<f64>() < mutation.eval(r);
        elapsed += w;
        cur += drift * w + r;
        segments.push(Segment { duration: w, jump: r, marked });
        if crosses.iter().any(|&y| cur > y) {
            return Ok(MarkedExcursion {
                start_level: x0,
                drift,
                segments,
                final_descent: 0.0,
                end_reason: EndReason::CrossedTau,
            });
        }
        if segments.len() > max_jumps {
            return Err(Error::Sampler("path exceeded the jump cap without stopping".into()));
        }
    }
}

/// One inter-visit excursion below τ: starts at τ, killed on returning above
/// τ; excursions hitting 0 first are rejected and redrawn.
pub fn sample_excursion_below_tau<R: Rng + ?Sized>(model: &LevyModel, tau: f64, rng: &mut R) -> Result<MarkedExcursion> {
    if !(tau > 0.0) {
        return Err(Error::Domain(format!("tau must be positive, got {tau}")));
    }
    let acc = model.excursion_acceptance(tau);
    if !(acc >= 1e-6) {
        return Err(Error::Config(format!(
            "excursion acceptance probability {acc:e} below 1e-6; n too small relative to tau"
        )));
    }
    let stop = PathStopRule::FirstOf(vec![PathStopRule::HitLevel(0.0), PathStopRule::CrossAbove(tau)]);
    loop {
        let e = sample_path(model, tau, &stop, rng)?;
        if e.end_reason == EndReason::CrossedTau {
            return Ok(e);
        }
    }
}

/// Υ for an excursion started at τ: the depth τ - Z(S-) just before the last
/// jump out of (-∞, τ-ε), with that jump's mark. `None` when the excursion
/// never went below τ - ε.
pub fn last_jump_over(exc: &MarkedExcursion, tau: f64, eps: f64) -> Option<(f64, bool)> {
    let level = tau - eps;
    let pre = exc.pre_jump_levels();
    let mut last = None;
    for (k, s) in exc.segments.iter().enumerate() {
        if pre[k] < level && pre[k] + s.jump >= level {
            last = Some((tau - pre[k], s.marked));
        }
    }
    last
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levy::{presets, JumpMeasureSpec, ModelKind, ModelSpec, MutationFunctionSpec};
    use crate::rng::rng_from_seed;

    fn hand_path(segments: Vec<Segment>, end: EndReason) -> MarkedExcursion {
        MarkedExcursion { start_level: 1.0, drift: -1.0, segments, final_descent: 0.0, end_reason: end }
    }

    #[test]
    fn pure_descent() {
        let m = LevyModel::new(ModelSpec {
            kind: ModelKind::PreLimit,
            drift: -1.0,
            gaussian_b: 0.0,
            jumps: JumpMeasureSpec::Zero,
            mutation: MutationFunctionSpec::Zero,
        })
        .unwrap();
        let e = sample_path(&m, 3.0, &PathStopRule::HitLevel(0.0), &mut rng_from_seed(1)).unwrap();
        assert_eq!(e.end_reason, EndReason::HitZero);
        assert!((e.lifetime() - 3.0).abs() < 1e-15);
        assert_eq!(e.infimum(), 0.0);
        assert!(e.ladder_records().is_empty());
    }

    #[test]
    fn degenerate_model_rejected() {
        let m = LevyModel::new(ModelSpec {
            kind: ModelKind::PreLimit,
            drift: 0.0,
            gaussian_b: 0.0,
            jumps: JumpMeasureSpec::Zero,
            mutation: MutationFunctionSpec::Zero,
        });
        if let Ok(m) = m {
            assert!(matches!(
                sample_path(&m, 1.0, &PathStopRule::HitLevel(0.0), &mut rng_from_seed(1)),
                Err(Error::DegenerateModel(_))
            ));
        }
    }

    #[test]
    fn future_infimum_hand_example() {
        let e = hand_path(
            vec![
                Segment { duration: 0.7, jump: 0.4, marked: true },
                Segment { duration: 0.2, jump: 0.6, marked: false },
            ],
            EndReason::CrossedTau,
        );
        let chain = e.future_infimum();
        assert_eq!(chain.len(), 2);
        assert!((chain[0].level - 0.3).abs() < 1e-12 && chain[0].marked);
        assert!((chain[1].level - 0.5).abs() < 1e-12 && !chain[1].marked);
        assert!((chain[0].time - 0.7).abs() < 1e-12);
    }

    #[test]
    fn hit_level_is_exact() {
        let (m, _) = presets::critical_exponential(10, crate::levy::MarkRegime::B1 { theta: 0.5 }).unwrap();
        let mut rng = rng_from_seed(9);
        for _ in 0..200 {
            let e = sample_path(
                &m,
                0.0,
                &PathStopRule::FirstOf(vec![PathStopRule::HitLevel(-0.3), PathStopRule::CrossAbove(0.5)]),
                &mut rng,
            )
            .unwrap();
            match e.end_reason {
                EndReason::StopLevelHit => assert!((e.final_level() + 0.3).abs() < 1e-12),
                EndReason::CrossedTau => assert!(e.final_level() > 0.5),
                other => panic!("unexpected {other:?}"),
            }
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let (m, _) = presets::critical_exponential(10, crate::levy::MarkRegime::B1 { theta: 0.5 }).unwrap();
        let a = sample_excursion_below_tau(&m, 1.0, &mut rng_from_seed(5)).unwrap();
        let b = sample_excursion_below_tau(&m, 1.0, &mut rng_from_seed(5)).unwrap();
        assert_eq!(a.to_tsv(), b.to_tsv());
        assert!(a.infimum() > 0.0);
    }
}
