use rayon::prelude::*;
use splitlab::kernels::{estimate_pi, jump_law_first_mutation, ladder_measures, sample_transition_prelimit};
use splitlab::levy::{presets, MarkRegime};
use splitlab::path::{sample_path, EndReason, PathStopRule};
use splitlab::rng::SeedStream;

// Lattice jump law vs two direct path simulations: the unconditioned joint
// mass (a record is marked before death or crossing) and the probability that
// the next record-chain transition is a mutation.
#[test]
fn jump_law_matches_path_simulation() {
    let (x, tau) = (0.3, 1.0);
    for n in [20u64, 50] {
        let (m, _) = presets::critical_exponential(n, MarkRegime::B1 { theta: 1.0 }).unwrap();
        let pi = estimate_pi(&m, x, tau - x, 100, 20_000, &SeedStream::new(11)).unwrap();
        let lm = ladder_measures(&m, None).unwrap();
        let jl = jump_law_first_mutation(&m, &lm, Some(&pi), x, tau).unwrap();
        assert!((jl.total_mass() - 1.0).abs() <= 3.0 * jl.total_mass_se, "n={n} total {}", jl.total_mass());

        let stop = PathStopRule::FirstOf(vec![PathStopRule::HitLevel(-x), PathStopRule::CrossAbove(tau - x)]);
        let s = SeedStream::new(12);
        let reps = 20_000;
        let hits = (0..reps)
            .into_par_iter()
            .filter(|&k| {
                let e = sample_path(&m, 0.0, &stop, &mut s.child(k as u64).rng()).unwrap();
                e.end_reason != EndReason::CrossedTau && e.ladder_records().iter().any(|r| r.marked)
            })
            .count();
        let p = hits as f64 / reps as f64;
        let se = (p * (1.0 - p) / reps as f64).sqrt().hypot(jl.joint_mass_se);
        assert!((jl.joint_mass() - p).abs() <= 4.0 * se, "n={n} joint {} vs {p} ± {se}", jl.joint_mass());

        let s = SeedStream::new(13);
        let marks = (0..reps)
            .into_par_iter()
            .filter(|&k| sample_transition_prelimit(&m, x, tau, &mut s.child(k as u64).rng()).unwrap().mark == 1)
            .count();
        let q = marks as f64 / reps as f64;
        let se = (q * (1.0 - q) / reps as f64).sqrt().hypot(jl.total_mass_se);
        let mutation = jl.mutation_mass / jl.total_mass();
        assert!((mutation - q).abs() <= 4.0 * se, "n={n} mutation {mutation} vs {q} ± {se}");
    }
}
