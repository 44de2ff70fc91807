use crate::error::{domain, Error, Result};
use crate::levy::{LevyModel, MarkRegime};
use crate::path::{sample_path, EndReason, PathStopRule};
use rand::Rng;
use serde::Serialize;

/// A state (depth, mark) of the record chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TransitionOutcome {
    pub depth: f64,
    pub mark: u8,
}

/// Rejection cap for the conditioning on T^{-x} < T^{(τ-x,∞)}.
const MAX_REJECTIONS: usize = 1_000_000;

/// One step of M_{n,ε} from a marked state at depth x: a fresh path from 0,
/// conditioned to reach -x before exceeding τ-x. If a marked record comes
/// first the chain moves to (x + its level, 1); otherwise it dies at
/// (x + supremum reached before T^{-x}, 0).
pub fn sample_transition_prelimit<R: Rng + ?Sized>(
    model: &LevyModel,
    x: f64,
    tau: f64,
    rng: &mut R,
) -> Result<TransitionOutcome> {
    if !(x > 0.0 && x < tau) {
        return domain(format!("transition needs 0 < x < tau (got {x})"));
    }
    let stop = PathStopRule::FirstOf(vec![PathStopRule::HitLevel(-x), PathStopRule::CrossAbove(tau - x)]);
    for _ in 0..MAX_REJECTIONS {
        let e = sample_path(model, 0.0, &stop, rng)?;
        if e.end_reason == EndReason::CrossedTau {
            continue;
        }
        let recs = e.ladder_records();
        if let Some(r) = recs.iter().find(|r| r.marked) {
            return Ok(TransitionOutcome { depth: x + r.record_level, mark: 1 });
        }
        let sup = recs.last().map_or(0.0, |r| r.record_level);
        return Ok(TransitionOutcome { depth: x + sup, mark: 0 });
    }
    Err(Error::Sampler(format!("transition from depth {x}: conditioning rejected {MAX_REJECTIONS} paths")))
}

/// CDF of the death depth of a Brownian lineage observed alive at depth x:
/// P(D ≤ h) = τ(h-x) / (h(τ-x)) on [x, τ).
pub fn brownian_death_cdf(x: f64, tau: f64, h: f64) -> f64 {
    if h <= x {
        0.0
    } else if h >= tau {
        1.0
    } else {
        tau * (h - x) / (h * (tau - x))
    }
}

/// Brownian limit step from (x, 1): marks arrive at rate β per unit depth,
/// death has hazard τ/(a(τ-a)); the two are independent so the step is the
/// earlier of an Exp(β) increment and the death depth.
pub fn brownian_transition<R: Rng + ?Sized>(beta: f64, x: f64, tau: f64, rng: &mut R) -> TransitionOutcome {
    // invert P(D ≥ h) = x(τ-h)/(h(τ-x))
    let s: f64 = 1.0 - rng.random::<f64>();
    let death = x * tau / (x + s * (tau - x));
    if beta > 0.0 {
        let z = -(1.0 - rng.random::<f64>()).ln() / beta;
        if x + z < death {
            return TransitionOutcome { depth: x + z, mark: 1 };
        }
    }
    TransitionOutcome { depth: death, mark: 0 }
}

/// Per-depth mark rate of a Brownian limit lineage: marks arrive at rate θ
/// (B.1) or ρ = κb² (B.2) per unit local time and depth grows at b²/2.
pub fn brownian_mark_rate(model: &LevyModel, regime: MarkRegime) -> f64 {
    let b = model.gaussian_b();
    match regime {
        MarkRegime::B1 { theta } => 2.0 * theta / (b * b),
        MarkRegime::B2 { .. } => 2.0 * regime.rho(b) / (b * b),
    }
}

fn is_brownian(model: &LevyModel) -> bool {
    !model.is_pre_limit() && model.jumps().total_mass() == 0.0 && model.gaussian_b() > 0.0
}

/// One step of the record chain from `state`. Mark 0 is absorbing. Pre-limit
/// models use path simulation, the Brownian limit its closed form, and other
/// limit models step the killed subordinator H^K until a mark or killing.
pub fn sample_transition<R: Rng + ?Sized>(
    model: &LevyModel,
    regime: Option<MarkRegime>,
    state: TransitionOutcome,
    tau: f64,
    rng: &mut R,
) -> Result<TransitionOutcome> {
    if state.mark == 0 {
        return Ok(state);
    }
    if model.is_pre_limit() {
        return sample_transition_prelimit(model, state.depth, tau, rng);
    }
    let regime = regime.ok_or_else(|| Error::Contract("limit transitions need a mark regime".into()))?;
    if is_brownian(model) {
        if !(state.depth > 0.0 && state.depth < tau) {
            return domain(format!("transition needs 0 < x < tau (got {})", state.depth));
        }
        return Ok(brownian_transition(brownian_mark_rate(model, regime), state.depth, tau, rng));
    }
    let sampler = crate::limit::HkSampler::new(model, regime, tau)?.with_floor(state.depth.min(0.5 * tau))?;
    let run = sampler.run(state.depth, true, rng)?;
    Ok(match run.first_mark {
        Some(d) => TransitionOutcome { depth: d, mark: 1 },
        None => TransitionOutcome { depth: run.killing_depth, mark: 0 },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levy::presets;
    use crate::rng::rng_from_seed;

    #[test]
    fn absorbing_and_monotone() {
        let m = presets::brownian(1.0);
        let mut rng = rng_from_seed(3);
        let reg = Some(MarkRegime::B1 { theta: 0.5 });
        let s0 = TransitionOutcome { depth: 0.3, mark: 0 };
        assert_eq!(sample_transition(&m, reg, s0, 1.0, &mut rng).unwrap(), s0);
        for _ in 0..500 {
            let t = sample_transition(&m, reg, TransitionOutcome { depth: 0.3, mark: 1 }, 1.0, &mut rng).unwrap();
            assert!(t.depth > 0.3 && t.depth < 1.0);
        }
        let (pm, _) = presets::critical_exponential(20, MarkRegime::B1 { theta: 1.0 }).unwrap();
        for _ in 0..200 {
            let t = sample_transition_prelimit(&pm, 0.3, 1.0, &mut rng).unwrap();
            assert!(t.depth >= 0.3 && t.depth < 1.0);
            if t.mark == 1 {
                assert!(t.depth > 0.3);
            }
        }
    }

    #[test]
    fn death_cdf_endpoints() {
        assert_eq!(brownian_death_cdf(0.1, 1.0, 0.1), 0.0);
        assert!((brownian_death_cdf(0.1, 1.0, 0.2) - 5.0 / 9.0).abs() < 1e-12);
        assert_eq!(brownian_death_cdf(0.1, 1.0, 1.0), 1.0);
    }
}
