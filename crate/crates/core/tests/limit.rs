use rayon::prelude::*;
use splitlab::kernels::mu_k;
use splitlab::levy::{presets, MarkRegime};
use splitlab::limit::{pi1_b, pi1_b_at_least, sample_limit_cpp, ChainSampler, HkSampler, LimitIntensity, Window};
use splitlab::rng::SeedStream;

#[test]
fn brownian_killing_depth_law() {
    let m = presets::brownian(1.0);
    let hk = HkSampler::new(&m, MarkRegime::B1 { theta: 0.0 }, 1.0).unwrap();
    let s = SeedStream::new(21);
    let n = 100_000;
    let below = (0..n)
        .into_par_iter()
        .filter(|&i| hk.run(0.1, false, &mut s.child(i as u64).rng()).unwrap().killing_depth <= 0.2)
        .count() as f64
        / n as f64;
    let se = (below * (1.0 - below) / n as f64).sqrt();
    let exact: f64 = (0.5 / 0.1 - 0.5 / 0.2) / 4.5;
    assert!((exact - 0.5555555555).abs() < 1e-9);
    assert!((below - exact).abs() < 3.0 * se, "{below} vs {exact} (se {se})");
}

#[test]
fn brownian_chain_mark_counts() {
    let m = presets::brownian(1.0);
    let c = ChainSampler::new(&m, Some(MarkRegime::B1 { theta: 0.5 }), 0.1, 1.0).unwrap();
    let s = SeedStream::new(22);
    let n = 100_000;
    let ks: Vec<usize> = (0..n).into_par_iter().map(|i| c.sample(&mut s.child(i as u64).rng()).unwrap().k_eps()).collect();
    for mm in 0..3u32 {
        let f = ks.iter().filter(|&&k| k == mm as usize).count() as f64 / n as f64;
        let exact = pi1_b(1.0, mm, 0.1, 1.0).unwrap() / 4.5;
        let se = (exact * (1.0 - exact) / n as f64).sqrt();
        assert!((f - exact).abs() < 3.0 * se, "m={mm}: {f} vs {exact}");
    }
}

#[test]
fn stable_jump_histogram_matches_mu_k() {
    let m = presets::stable(1.5).unwrap();
    let hk = HkSampler::new(&m, MarkRegime::B1 { theta: 0.0 }, 1.0).unwrap();
    let k = mu_k(&m, 1.0, 0.5, false).unwrap();
    let big = k.density_mass_between(0, hk.cutoff, 0.5).unwrap();
    let window = k.density_mass_between(0, 0.19, 0.21).unwrap() / big;
    let s = SeedStream::new(23);
    let n = 200_000;
    let hits = (0..n)
        .into_par_iter()
        .filter(|&i| {
            let u = hk.sample_jump(0.5, &mut s.child(i as u64).rng()).unwrap();
            (0.19..0.21).contains(&u)
        })
        .count() as f64
        / n as f64;
    let se = (window * (1.0 - window) / n as f64).sqrt();
    println!("window mass {window} sampled {hits} density {}", k.density(0.2, 0));
    assert!((hits - window).abs() < 3.0 * se, "{hits} vs {window}");
}

#[test]
fn limit_cpp_mean_count() {
    let m = presets::brownian(1.0);
    let reps = 2_000;
    let counts: Vec<f64> = (0..reps)
        .map(|i| {
            let c = sample_limit_cpp(&m, MarkRegime::B1 { theta: 0.0 }, 1.0, 0.1, Window::Fixed(1.0), &SeedStream::new(i)).unwrap();
            assert!(c.atoms.iter().all(|a| a.lineage.mutation_depths.is_empty()));
            c.atoms.len() as f64
        })
        .collect();
    let mean = counts.iter().sum::<f64>() / reps as f64;
    assert!((mean - 4.5).abs() < 3.0 * (4.5f64 / reps as f64).sqrt(), "{mean}");
    let li = LimitIntensity::new(&m, MarkRegime::B1 { theta: 0.5 }, 1.0, 1e-4).unwrap();
    assert!((li.total_mass(0.1).unwrap() - 4.5).abs() < 1e-10);
    assert!(li.total_mass(0.2).unwrap() < li.total_mass(0.1).unwrap());
    assert!((li.pi(0, 0.1).unwrap() - pi1_b(1.0, 0, 0.1, 1.0).unwrap()).abs() < 1e-12);
}

#[test]
fn one_mark_intensity_diverges_logarithmically() {
    // Π(B_{≥1,ε}) = (β/2)ln(1/ε) + C + o(1): the offset stabilises
    let offs: Vec<f64> = [1e-2, 1e-3, 1e-4, 1e-5]
        .iter()
        .map(|&e| pi1_b_at_least(1.0, 1, e, 1.0).unwrap() - 0.5 * (1.0f64 / e).ln())
        .collect();
    assert!((offs[3] - offs[2]).abs() < (offs[2] - offs[1]).abs());
    assert!((offs[3] - offs[2]).abs() < 0.01, "{offs:?}");
    let two: Vec<f64> = [1e-2, 1e-3, 1e-4].iter().map(|&e| pi1_b_at_least(1.0, 2, e, 1.0).unwrap()).collect();
    assert!((two[2] - two[1]).abs() < 0.25 * (two[1] - two[0]).abs(), "{two:?}");
}
