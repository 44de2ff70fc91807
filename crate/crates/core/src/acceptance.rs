//! The acceptance suite: each check returns one aggregated report; checks
//! with Monte Carlo input run over several seeds and need a quorum.

use crate::error::Result;
use crate::genealogy::{sample_lineages, simulate_population_count};
use crate::kernels::{
    estimate_pi, g_x_total_mass, jump_law_first_mutation, ladder_measures, mu_k, mu_k_stable_closed_form, nu_init,
    resolvent_u_star,
};
use crate::levy::{presets, LevyModel, MarkRegime};
use crate::limit::{pi1_b, sample_limit_cpp, ChainSampler, HkSampler, Window};
use crate::numerics::special::gamma;
use crate::rng::SeedStream;
use crate::verify::{
    chi_square_counts, chi_square_independence, convergence_table, ks_test, ks_two_sample, multi_seed, pi_hat_n,
    TestReport,
};
use rayon::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF};

pub const SEEDS: [u64; 5] = [101, 202, 303, 404, 505];
pub const QUORUM: usize = 4;

fn grid(lo: f64, hi: f64, k: usize) -> Vec<f64> {
    (0..k).map(|i| lo + (hi - lo) * i as f64 / (k - 1) as f64).collect()
}

fn max_rel_err(model: &LevyModel, exact: impl Fn(f64) -> f64, xs: &[f64]) -> Result<f64> {
    let mut e: f64 = 0.0;
    for &x in xs {
        let w = model.scale_function(x)?;
        e = e.max(((w - exact(x)) / exact(x)).abs());
    }
    Ok(e)
}

/// Numerical inversion of 1/ψ against the Brownian, stable and rescaled
/// exponential closed forms; registry value W̃_n(0) = n/d_n.
pub fn scale_function_oracle() -> Result<TestReport> {
    let xs = grid(0.1, 5.0, 50);
    let bm = max_rel_err(&presets::brownian(1.0).without_registry(), |x| 2.0 * x, &xs)?;
    let st = max_rel_err(&presets::stable(1.5)?.without_registry(), |x| x.sqrt() / gamma(1.5), &xs)?;
    let mut ce: f64 = 0.0;
    let mut w0_exact = true;
    for n in [10u64, 25, 100] {
        let (m, s) = presets::critical_exponential(n, MarkRegime::B1 { theta: 0.0 })?;
        let nf = n as f64;
        ce = ce.max(max_rel_err(&m.without_registry(), |x| 2.0 / nf + 2.0 * x, &xs)?);
        w0_exact &= m.w(0.0) == nf / s.d_n;
    }
    let worst = bm.max(st).max(ce);
    let mut r = TestReport::new("scale_function_oracle", worst, 1e-6, worst <= 1e-6 && w0_exact);
    r.distance = Some(worst);
    r.notes = vec![
        format!("brownian max rel err {bm:.2e}"),
        format!("stable(1.5) max rel err {st:.2e}"),
        format!("rescaled exponential max rel err {ce:.2e}"),
        format!("registry W_n(0) = n/d_n exact: {w0_exact}"),
    ];
    Ok(r)
}

/// Survival-conditioned population size at τ is geometric with parameter
/// n/(d_n W̃_n(τ)); n = 10, d_n = 50, τ = 1, 10⁴ replicas.
pub fn population_count_law() -> Result<TestReport> {
    let (m, s) = presets::critical_exponential(10, MarkRegime::B1 { theta: 0.0 })?;
    let p = 10.0 / (s.d_n * m.w(1.0));
    multi_seed("population_count_law", &SEEDS, QUORUM, |seed| {
        let st = SeedStream::new(seed).child("population");
        let reps = 10_000;
        let counts: Vec<u64> = (0..reps)
            .into_par_iter()
            .map(|i| simulate_population_count(&m, 1.0, &mut st.child(i as u64).rng()))
            .collect::<Result<_>>()?;
        let kmax = 60usize;
        let mut obs = vec![0.0; kmax + 1];
        for c in counts {
            obs[(c as usize).min(kmax + 1) - 1] += 1.0;
        }
        let mut exp: Vec<f64> = (1..=kmax).map(|k| reps as f64 * p * (1.0 - p).powi(k as i32 - 1)).collect();
        exp.push(reps as f64 * (1.0 - p).powi(kmax as i32));
        Ok(chi_square_counts(&obs, &exp, 0)?.with_seed(st.describe()).note(format!("geometric parameter {p:.6}")))
    })
}

fn brownian_depth_cdf(eps: f64, tau: f64) -> impl Fn(f64) -> f64 {
    let p = 0.5 / eps - 0.5 / tau;
    move |h: f64| ((0.5 / eps - 0.5 / h.max(eps)) / p).clamp(0.0, 1.0)
}

/// KS test of coalescence depths in (ε, τ) at n = 100 against the Brownian
/// limit law (1/(2ε) - 1/(2h))/p_ε; 10⁵ lineages.
pub fn depth_law() -> Result<TestReport> {
    let (m, _) = presets::critical_exponential(100, MarkRegime::B1 { theta: 0.0 })?;
    let (eps, tau) = (0.1, 1.0);
    multi_seed("depth_law", &SEEDS, QUORUM, |seed| {
        let st = SeedStream::new(seed).child("depth");
        let lin = sample_lineages(&m, tau, 100_000, &st)?;
        let d: Vec<f64> = lin.iter().map(|l| l.coalescence_depth).filter(|&h| h > eps).collect();
        let r = ks_test(&d, brownian_depth_cdf(eps, tau))?;
        // the exact law at this n, for diagnosis
        let w = |x: f64| m.w(x);
        let pn = 1.0 / w(eps) - 1.0 / w(tau);
        let exact = ks_test(&d, |h| ((1.0 / w(eps) - 1.0 / w(h.max(eps))) / pn).clamp(0.0, 1.0))?;
        Ok(r.with_seed(st.describe()).note(format!("KS vs exact rank-n law: p={:.4}", exact.p_value.unwrap())))
    })
}

fn poisson_pmf(k: usize, mean: f64) -> f64 {
    (k as f64 * mean.ln() - mean - crate::numerics::special::ln_gamma(k as f64 + 1.0)).exp()
}

/// Under B.1 with β = 1 (θ_n = β/n), n = 100: mutation counts given depth
/// fit Poisson(β·depth) by χ² over depth bins, and Π̂_n(B_{m,ε}), m ≤ 2, lies
/// within 3 SE of the limit intensity.
pub fn mutation_law() -> Result<TestReport> {
    let (m, scheme) = presets::critical_exponential(100, MarkRegime::B1 { theta: 0.5 })?;
    let (eps, tau, beta) = (0.1, 1.0, 1.0);
    multi_seed("mutation_law", &SEEDS, QUORUM, |seed| {
        let st = SeedStream::new(seed).child("mutations");
        let lin = sample_lineages(&m, tau, 100_000, &st.child("lineages"))?;
        let deep: Vec<_> = lin.iter().filter(|l| l.coalescence_depth > eps).collect();
        // equal-probability depth bins under the limit law
        let bins = 8usize;
        let p = 0.5 / eps - 0.5 / tau;
        let edges: Vec<f64> = (0..=bins).map(|i| 1.0 / (1.0 / eps - 2.0 * p * i as f64 / bins as f64)).collect();
        let kmax = 4usize;
        let (mut stat, mut dof) = (0.0, 0.0);
        for b in 0..bins {
            let group: Vec<_> = deep
                .iter()
                .filter(|l| l.coalescence_depth >= edges[b] && l.coalescence_depth < edges[b + 1])
                .collect();
            if group.is_empty() {
                continue;
            }
            // expected counts: mixture of Poisson(β·h_i) over the lineages of the bin
            let mut obs = vec![0.0; kmax + 1];
            let mut exp = vec![0.0; kmax + 1];
            for l in &group {
                obs[l.mutation_count().min(kmax)] += 1.0;
                let mean = beta * l.coalescence_depth;
                let mut below = 0.0;
                for (k, e) in exp.iter_mut().enumerate().take(kmax) {
                    let q = poisson_pmf(k, mean);
                    *e += q;
                    below += q;
                }
                exp[kmax] += 1.0 - below;
            }
            let r = chi_square_counts(&obs, &exp, 0)?;
            stat += r.statistic;
            dof += r.notes[0].split(',').next().unwrap().trim_start_matches("dof=").parse::<f64>().unwrap();
        }
        let pv = 1.0 - ChiSquared::new(dof.max(1.0)).unwrap().cdf(stat);
        let hat = pi_hat_n(&m, &scheme, eps, tau, 2, 100_000, &st.child("pi"))?;
        let mut within = true;
        let marked_coalescence = deep.iter().filter(|l| l.coalescence_is_mutation).count();
        let mut notes = vec![
            format!("Poisson(β·h) χ²={stat:.2}, dof={dof}, p={pv:.4}"),
            format!("coalescences that are themselves mutations: {marked_coalescence}/{}", deep.len()),
        ];
        for (k, (v, se)) in hat.iter().enumerate() {
            let exact = pi1_b(beta, k as u32, eps, tau)?;
            let ok = (v - exact).abs() <= 3.0 * se;
            within &= ok;
            notes.push(format!("Π̂(B_{k}) = {v:.4} ± {se:.4} vs {exact:.4} ({})", if ok { "ok" } else { "off" }));
        }
        let mut r = TestReport::new("mutation_law", stat, 0.01, pv > 0.01 && within);
        r.p_value = Some(pv);
        r.notes = notes;
        r.seeds.push(st.describe());
        r.sample_sizes = vec![deep.len(), 100_000];
        Ok(r)
    })
}

/// TV distance between the simulated (Υ_n, mark) histogram and the formula,
/// n = 100, under B.1 (β = 1) and B.2 (κ = 1).
pub fn nu_init_cross_check() -> Result<TestReport> {
    let regimes = [MarkRegime::B1 { theta: 0.5 }, MarkRegime::B2 { kappa: 1.0 }];
    let models: Vec<LevyModel> =
        regimes.iter().map(|&r| presets::critical_exponential(100, r).map(|x| x.0)).collect::<Result<_>>()?;
    multi_seed("nu_init_cross_check", &SEEDS, QUORUM, |seed| {
        let mut worst: f64 = 0.0;
        let mut notes = vec![];
        for (m, reg) in models.iter().zip(&regimes) {
            let st = SeedStream::new(seed).child("nu_init").child(format!("{reg:?}").as_str());
            let r = crate::verify::cross_check_nu_init(m, 0.1, 1.0, 100_000, 50, 0.02, &st)?;
            worst = worst.max(r.statistic);
            notes.push(format!("{reg:?}: TV={:.4}", r.statistic));
        }
        let mut r = TestReport::new("nu_init_cross_check", worst, 0.02, worst < 0.02);
        r.distance = Some(worst);
        r.notes = notes;
        r.sample_sizes = vec![100_000, 100_000];
        Ok(r)
    })
}

/// Quadrature μ^K against the stable closed form on a 10×10 (a, u) grid,
/// and the killing atom against 1/W(a).
pub fn mu_k_oracle() -> Result<TestReport> {
    let (alpha, tau) = (1.5, 1.0);
    let m = presets::stable(alpha)?;
    let mut rel: f64 = 0.0;
    let mut atom: f64 = 0.0;
    for i in 0..10 {
        let a = 0.05 + 0.09 * i as f64;
        let k = mu_k(&m, tau, a, false)?;
        atom = atom.max((k.atoms[0].weight - 1.0 / m.w(a)).abs());
        for j in 0..10 {
            let u = (tau - a) * (j as f64 + 0.5) / 10.0;
            let q = k.density(u, 0);
            let c = mu_k_stable_closed_form(alpha, tau, a, u);
            rel = rel.max(((q - c) / c).abs());
        }
    }
    let mut r = TestReport::new("mu_k_oracle", rel, 1e-5, rel <= 1e-5 && atom <= 1e-10);
    r.distance = Some(rel);
    r.notes = vec![format!("max rel err {rel:.2e}"), format!("max killing-atom err {atom:.2e}")];
    Ok(r)
}

/// Brownian H^K killing depth vs M_ε absorption depth (two-sample KS, 10⁴
/// each); limit-CPP window counts are independent Poisson with mean p_ε.
pub fn limit_sampler_consistency() -> Result<TestReport> {
    let m = presets::brownian(1.0);
    let (eps, tau) = (0.1, 1.0);
    let reg = MarkRegime::B1 { theta: 0.0 };
    let hk = HkSampler::new(&m, reg, tau)?;
    let chain = ChainSampler::new(&m, Some(reg), eps, tau)?;
    let p = m.p_eps(eps, tau);
    multi_seed("limit_sampler_consistency", &SEEDS, QUORUM, |seed| {
        let st = SeedStream::new(seed).child("limit");
        let n = 10_000;
        let a: Vec<f64> = (0..n)
            .into_par_iter()
            .map(|i| Ok(hk.run(eps, false, &mut st.child("hk").child(i as u64).rng())?.killing_depth))
            .collect::<Result<_>>()?;
        let b: Vec<f64> = (0..n)
            .into_par_iter()
            .map(|i| Ok(chain.sample(&mut st.child("chain").child(i as u64).rng())?.absorption_depth()))
            .collect::<Result<_>>()?;
        let ks = ks_two_sample(&a, &b)?;
        let draws = 10_000;
        let halves: Vec<(usize, usize)> = (0..draws)
            .into_par_iter()
            .map(|i| {
                let c = sample_limit_cpp(&m, reg, tau, eps, Window::Fixed(1.0), &st.child("cpp").child(i as u64))?;
                let left = c.atoms.iter().filter(|x| x.position < 0.5).count();
                Ok((left, c.atoms.len() - left))
            })
            .collect::<Result<_>>()?;
        let kmax = 8usize;
        let mut obs = vec![0.0; kmax + 1];
        let mut table = vec![vec![0.0; kmax + 1]; kmax + 1];
        for &(l, r) in &halves {
            obs[l.min(kmax)] += 1.0;
            obs[r.min(kmax)] += 1.0;
            table[l.min(kmax)][r.min(kmax)] += 1.0;
        }
        let mut exp: Vec<f64> = (0..kmax).map(|k| 2.0 * draws as f64 * poisson_pmf(k, p / 2.0)).collect();
        exp.push(2.0 * draws as f64 - exp.iter().sum::<f64>());
        let pois = chi_square_counts(&obs, &exp, 0)?;
        let indep = chi_square_independence(&table)?;
        let mean = halves.iter().map(|&(l, r)| (l + r) as f64).sum::<f64>() / draws as f64;
        let se = (p / draws as f64).sqrt();
        let mean_ok = (mean - p).abs() <= 3.0 * se;
        let pass = ks.pass && pois.pass && indep.pass && mean_ok;
        let mut r = TestReport::new("limit_sampler_consistency", ks.statistic, 0.01, pass);
        r.p_value = ks.p_value;
        r.seeds.push(st.describe());
        r.sample_sizes = vec![n, n, draws];
        r.notes = vec![
            format!("H^K vs chain KS p={:.4}", ks.p_value.unwrap()),
            format!("window counts Poisson χ² p={:.4}", pois.p_value.unwrap()),
            format!("window independence χ² p={:.4}", indep.p_value.unwrap()),
            format!("mean count {mean:.4} vs p_eps {p} (se {se:.4})"),
        ];
        Ok(r)
    })
}

/// |Π̂_n(B_{0,ε}) - Π(B_{0,ε})| and sup|W̃_n - W| decrease along
/// n ∈ {25, 50, 100, 200}; the latter equals 2/n.
pub fn convergence_trend() -> Result<TestReport> {
    let ns = [25u64, 50, 100, 200];
    let (eps, tau) = (0.1, 1.0);
    let limit = pi1_b(1.0, 0, eps, tau)?;
    let bm = presets::brownian(1.0);
    let mut w_err = vec![];
    let mut exact = true;
    for &n in &ns {
        let (m, _) = presets::critical_exponential(n, MarkRegime::B1 { theta: 0.5 })?;
        let e = crate::verify::scale_sup_error(&m, &bm, 5.0, 500);
        exact &= (e - 2.0 / n as f64).abs() <= 1e-15;
        w_err.push(e);
    }
    let wrep = convergence_table("scale_sup_error", &ns, w_err.clone());
    let models: Vec<_> = ns
        .iter()
        .map(|&n| presets::critical_exponential(n, MarkRegime::B1 { theta: 0.5 }))
        .collect::<Result<_>>()?;
    multi_seed("convergence_trend", &SEEDS, QUORUM, |seed| {
        let st = SeedStream::new(seed).child("trend");
        let mut d = vec![];
        for ((m, s), &n) in models.iter().zip(&ns) {
            let hat = pi_hat_n(m, s, eps, tau, 0, 2_000 * n as usize, &st.child(n))?;
            d.push((hat[0].0 - limit).abs());
        }
        let prep = convergence_table("pi_hat_distance", &ns, d.clone());
        let mono = d.windows(2).all(|w| w[1] < w[0]) && w_err.windows(2).all(|w| w[1] < w[0]);
        let pass = prep.pass && wrep.pass && mono && exact;
        let mut r = TestReport::new("convergence_trend", prep.statistic, 0.0, pass);
        r.seeds.push(st.describe());
        r.notes = vec![
            format!("|Π̂_n - Π| = {d:.4?} (Spearman {:.2})", prep.statistic),
            format!("sup|W_n - W| = {w_err:?} (equals 2/n: {exact})"),
        ];
        Ok(r)
    })
}

/// ν-init mass 1; ν^M + ν^D mass 1 within Monte Carlo error; g^x mass 1 for
/// critical models; the U_* transform identity.
pub fn kernel_normalizations() -> Result<TestReport> {
    let mut det_notes = vec![];
    let mut det_ok = true;
    // ν-init
    let mut nu_models: Vec<(String, LevyModel)> = vec![("brownian".into(), presets::brownian(1.0))];
    for (n, r) in [(20u64, MarkRegime::B1 { theta: 0.5 }), (100, MarkRegime::B2 { kappa: 1.0 })] {
        nu_models.push((format!("n={n} {r:?}"), presets::critical_exponential(n, r)?.0));
    }
    for (name, m) in &nu_models {
        let e = (nu_init(m, 0.1, 1.0)?.total_mass()? - 1.0).abs();
        det_ok &= e <= 1e-6;
        det_notes.push(format!("nu_init mass err {name}: {e:.2e}"));
    }
    // g^x on critical models
    for (name, m, x, a) in [
        ("n=10", presets::critical_exponential(10, MarkRegime::B1 { theta: 0.5 })?.0, 0.3, 0.2),
        ("stable", presets::stable(1.5)?, 0.4, 0.1),
        ("brownian", presets::brownian(1.0), 0.2, 0.3),
    ] {
        let e = (g_x_total_mass(&m, x, a)? - 1.0).abs();
        det_ok &= e <= 1e-6;
        det_notes.push(format!("g_x mass err {name}: {e:.2e}"));
    }
    // resolvent transform identity
    for (name, m) in [
        ("n=20", presets::critical_exponential(20, MarkRegime::B1 { theta: 0.5 })?.0),
        ("brownian", presets::brownian(1.0)),
    ] {
        let lm = ladder_measures(&m, Some(MarkRegime::B1 { theta: 0.5 }))?;
        let u = resolvent_u_star(&lm, 0.7)?;
        let mut e: f64 = 0.0;
        for r in [0.5, 1.0, 3.0] {
            let t = u.transform(num_complex::Complex64::new(r, 0.0)).re;
            e = e.max((u.transform_by_quadrature(r)? - t).abs() / t);
        }
        det_ok &= e <= 1e-6;
        det_notes.push(format!("U_* transform identity {name}: {e:.2e}"));
    }
    // ν^M + ν^D
    let (m, _) = presets::critical_exponential(50, MarkRegime::B1 { theta: 1.0 })?;
    let lm = ladder_measures(&m, None)?;
    let (x, tau) = (0.3, 1.0);
    let part = multi_seed("jump_law_partition", &SEEDS, QUORUM, |seed| {
        let st = SeedStream::new(seed).child("pi");
        let pi = estimate_pi(&m, x, tau - x, 100, 20_000, &st)?;
        let jl = jump_law_first_mutation(&m, &lm, Some(&pi), x, tau)?;
        let ok = (jl.total_mass() - 1.0).abs() <= 3.0 * jl.total_mass_se;
        Ok(TestReport::new("jump_law_partition", jl.total_mass(), 3.0 * jl.total_mass_se, ok)
            .note(format!("nu_M + nu_D = {:.4} ± {:.4}", jl.total_mass(), jl.total_mass_se))
            .with_seed(st.describe()))
    })?;
    let mut r = TestReport::new("kernel_normalizations", 0.0, 1e-6, det_ok && part.pass);
    r.notes = det_notes;
    r.notes.extend(part.notes);
    r.seeds = part.seeds;
    Ok(r)
}

/// Every check, in order.
pub fn run_all() -> Vec<(&'static str, Result<TestReport>)> {
    vec![
        ("scale_function_oracle", scale_function_oracle()),
        ("population_count_law", population_count_law()),
        ("depth_law", depth_law()),
        ("mutation_law", mutation_law()),
        ("nu_init_cross_check", nu_init_cross_check()),
        ("mu_k_oracle", mu_k_oracle()),
        ("limit_sampler_consistency", limit_sampler_consistency()),
        ("convergence_trend", convergence_trend()),
        ("kernel_normalizations", kernel_normalizations()),
    ]
}
