use splitlab::config::ExperimentConfig;
use splitlab::genealogy::{sample_lineages, simulate_marked_cpp, simulate_population_count};
use splitlab::levy::{presets, MarkRegime};
use splitlab::rng::SeedStream;
use splitlab::verify::ks_test;

#[test]
fn marked_cpp_is_reproducible_and_well_formed() {
    let (m, s) = presets::critical_exponential(10, MarkRegime::B1 { theta: 0.5 }).unwrap();
    let a = simulate_marked_cpp(&m, 10, s.d_n, 1.0, 5, &SeedStream::new(4)).unwrap();
    let b = simulate_marked_cpp(&m, 10, s.d_n, 1.0, 5, &SeedStream::new(4)).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.atoms.len(), 4);
    for (i, atom) in a.atoms.iter().enumerate() {
        assert!((atom.position - (i + 1) as f64 * 10.0 / s.d_n).abs() < 1e-12);
        atom.lineage.check(1.0).unwrap();
    }
    let c = simulate_marked_cpp(&m, 10, s.d_n, 1.0, 5, &SeedStream::new(5)).unwrap();
    assert_ne!(a, c);
    let single = simulate_marked_cpp(&m, 10, s.d_n, 1.0, 1, &SeedStream::new(4)).unwrap();
    assert!(single.atoms.is_empty());
}

// At small n the exact depth law P(D ≥ h) ∝ 1/W(h) - 1/W(τ) is far from the
// Brownian one, so this separates the pre-limit sampler from the limit.
#[test]
fn lineage_depths_follow_exact_prelimit_law() {
    let (m, _) = presets::critical_exponential(5, MarkRegime::B1 { theta: 0.0 }).unwrap();
    let tau = 1.0;
    let lin = sample_lineages(&m, tau, 20_000, &SeedStream::new(8)).unwrap();
    let d: Vec<f64> = lin.iter().map(|l| l.coalescence_depth).collect();
    let w = |x: f64| m.w(x);
    let norm = 1.0 / w(0.0) - 1.0 / w(tau);
    let r = ks_test(&d, |h| ((1.0 / w(0.0) - 1.0 / w(h.clamp(0.0, tau))) / norm).clamp(0.0, 1.0)).unwrap();
    assert!(r.pass, "{}", r.line());
}

#[test]
fn population_count_mean_is_geometric() {
    let (m, s) = presets::critical_exponential(10, MarkRegime::B1 { theta: 0.0 }).unwrap();
    let p = 10.0 / (s.d_n * m.w(1.0));
    let st = SeedStream::new(2);
    let reps = 20_000;
    let mean = (0..reps)
        .map(|i| simulate_population_count(&m, 1.0, &mut st.child(i as u64).rng()).unwrap() as f64)
        .sum::<f64>()
        / reps as f64;
    let sd = ((1.0 - p) / (p * p) / reps as f64).sqrt();
    assert!((mean - 1.0 / p).abs() < 4.0 * sd, "{mean} vs {}", 1.0 / p);
}

#[test]
fn config_file_round_trip() {
    let text = r#"
[model]
family = "stable"
alpha = 1.5
[model.marks]
regime = "B2"
kappa = 1.0

[rescaling]
n_list = [25, 50]

[genealogy]
tau = 2.0
eps = 0.2

[limit]
window = "survival"
"#;
    let c = ExperimentConfig::from_toml(text).unwrap();
    assert_eq!(c.n_values(), vec![25, 50]);
    let dir = std::env::temp_dir().join(format!("splitlab-cfg-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let p = dir.join("c.toml");
    std::fs::write(&p, c.to_toml().unwrap()).unwrap();
    assert_eq!(ExperimentConfig::load(&p).unwrap(), c);
    assert!(c.limit_model().is_ok());
    assert!(c.prelimit_model(25).is_err());
    std::fs::remove_dir_all(&dir).unwrap();
}
