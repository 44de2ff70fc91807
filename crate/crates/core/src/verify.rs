//! Statistical harness: goodness-of-fit tests, convergence tables and the
//! cross-checks between formulas and path simulation.

use crate::error::{Error, Result};
use crate::genealogy::sample_lineages;
use crate::kernels::{nu_init, Location};
use crate::levy::{LevyModel, RescalingScheme};
use crate::path::{last_jump_over, sample_excursion_below_tau};
use crate::rng::SeedStream;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};
use std::fmt::Write as _;
use std::path::Path;

pub const REPORT_SCHEMA: &str = "splitlab.report/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub name: String,
    pub statistic: f64,
    #[serde(default)]
    pub p_value: Option<f64>,
    #[serde(default)]
    pub distance: Option<f64>,
    pub threshold: f64,
    pub sample_sizes: Vec<usize>,
    pub seeds: Vec<String>,
    pub pass: bool,
    #[serde(default)]
    pub artifacts: Vec<String>,
    #[serde(default)]
    pub notes: Vec<String>,
}

impl TestReport {
    pub fn new(name: &str, statistic: f64, threshold: f64, pass: bool) -> Self {
        TestReport {
            name: name.to_string(),
            statistic,
            p_value: None,
            distance: None,
            threshold,
            sample_sizes: vec![],
            seeds: vec![],
            pass,
            artifacts: vec![],
            notes: vec![],
        }
    }

    pub fn named(mut self, name: &str) -> Self {
        self.name = name.to_string();
        self
    }

    pub fn with_seed(mut self, seed: impl Into<String>) -> Self {
        self.seeds.push(seed.into());
        self
    }

    pub fn note(mut self, s: impl Into<String>) -> Self {
        self.notes.push(s.into());
        self
    }

    /// One-line verdict.
    pub fn line(&self) -> String {
        let v = if self.pass { "PASS" } else { "FAIL" };
        let detail = match (self.p_value, self.distance) {
            (Some(p), _) => format!("p={p:.4}"),
            (None, Some(d)) => format!("d={d:.3e}"),
            _ => format!("stat={:.4e}", self.statistic),
        };
        format!("[{v}] {} ({detail}, threshold {})", self.name, self.threshold)
    }
}

/// Asymptotic Kolmogorov distribution tail P(K > λ).
fn kolmogorov_tail(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut s = 0.0;
    for k in 1..200 {
        let t = (-2.0 * (k * k) as f64 * lambda * lambda).exp();
        s += if k % 2 == 1 { t } else { -t };
        if t < 1e-16 {
            break;
        }
    }
    (2.0 * s).clamp(0.0, 1.0)
}

fn sorted(samples: &[f64]) -> Result<Vec<f64>> {
    if samples.iter().any(|x| x.is_nan()) {
        return Err(Error::Data("NaN in samples".into()));
    }
    let mut v = samples.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// One-sample KS test: exact statistic, asymptotic p-value (with Stephens'
/// small-sample correction). Passes when p > 0.01.
pub fn ks_test<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> Result<TestReport> {
    if samples.len() < 100 {
        return Err(Error::Data(format!("KS test needs at least 100 samples (got {})", samples.len())));
    }
    let v = sorted(samples)?;
    let n = v.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in v.iter().enumerate() {
        let f = cdf(x);
        d = d.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    let sn = n.sqrt();
    let p = kolmogorov_tail((sn + 0.12 + 0.11 / sn) * d);
    let mut r = TestReport::new("ks", d, 0.01, p > 0.01);
    r.p_value = Some(p);
    r.sample_sizes = vec![v.len()];
    Ok(r)
}

/// Two-sample KS test.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<TestReport> {
    if a.len() < 100 || b.len() < 100 {
        return Err(Error::Data("KS test needs at least 100 samples per side".into()));
    }
    let (x, y) = (sorted(a)?, sorted(b)?);
    let (n, m) = (x.len() as f64, y.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < x.len() && j < y.len() {
        let t = x[i].min(y[j]);
        while i < x.len() && x[i] <= t {
            i += 1;
        }
        while j < y.len() && y[j] <= t {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    let ne = (n * m / (n + m)).sqrt();
    let p = kolmogorov_tail((ne + 0.12 + 0.11 / ne) * d);
    let mut r = TestReport::new("ks_two_sample", d, 0.01, p > 0.01);
    r.p_value = Some(p);
    r.sample_sizes = vec![x.len(), y.len()];
    Ok(r)
}

/// Merges adjacent bins (left to right, remainder into the last kept bin)
/// until every expected count is at least `min`.
pub fn merge_bins(observed: &[f64], expected: &[f64], min: f64) -> (Vec<f64>, Vec<f64>) {
    let (mut o, mut e) = (Vec::new(), Vec::new());
    let (mut co, mut ce) = (0.0, 0.0);
    for (a, b) in observed.iter().zip(expected) {
        co += a;
        ce += b;
        if ce >= min {
            o.push(co);
            e.push(ce);
            co = 0.0;
            ce = 0.0;
        }
    }
    if ce > 0.0 || co > 0.0 {
        if let (Some(lo), Some(le)) = (o.last_mut(), e.last_mut()) {
            *lo += co;
            *le += ce;
        } else {
            o.push(co);
            e.push(ce);
        }
    }
    (o, e)
}

/// Pearson χ² goodness of fit of counts; bins with expectation < 5 are
/// merged first. `fitted` parameters reduce the degrees of freedom.
pub fn chi_square_counts(observed: &[f64], expected: &[f64], fitted: usize) -> Result<TestReport> {
    if observed.len() != expected.len() {
        return Err(Error::Data("observed and expected histograms differ in length".into()));
    }
    if !(expected.iter().sum::<f64>() > 0.0) {
        return Err(Error::Data("all-zero expectation".into()));
    }
    let (o, e) = merge_bins(observed, expected, 5.0);
    let stat: f64 = o.iter().zip(&e).map(|(a, b)| (a - b) * (a - b) / b).sum();
    let dof = (o.len() as i64 - 1 - fitted as i64).max(1) as f64;
    let p = if stat == 0.0 {
        1.0
    } else {
        1.0 - ChiSquared::new(dof).map_err(|e| Error::Numeric(e.to_string()))?.cdf(stat)
    };
    let mut r = TestReport::new("chi_square", stat, 0.01, p > 0.01);
    r.p_value = Some(p);
    r.sample_sizes = vec![observed.iter().sum::<f64>() as usize];
    r.notes.push(format!("dof={dof}, bins after merging={}", o.len()));
    Ok(r)
}

/// χ² test of independence for a contingency table.
pub fn chi_square_independence(table: &[Vec<f64>]) -> Result<TestReport> {
    let rows: Vec<f64> = table.iter().map(|r| r.iter().sum()).collect();
    let k = table.first().map_or(0, |r| r.len());
    let cols: Vec<f64> = (0..k).map(|j| table.iter().map(|r| r[j]).sum()).collect();
    let tot: f64 = rows.iter().sum();
    if !(tot > 0.0) {
        return Err(Error::Data("empty contingency table".into()));
    }
    let rows_kept: Vec<usize> = (0..rows.len()).filter(|&i| rows[i] > 0.0).collect();
    let cols_kept: Vec<usize> = (0..k).filter(|&j| cols[j] > 0.0).collect();
    let mut stat = 0.0;
    for &i in &rows_kept {
        for &j in &cols_kept {
            let e = rows[i] * cols[j] / tot;
            stat += (table[i][j] - e).powi(2) / e;
        }
    }
    let dof = ((rows_kept.len().max(2) - 1) * (cols_kept.len().max(2) - 1)) as f64;
    let p = 1.0 - ChiSquared::new(dof).map_err(|e| Error::Numeric(e.to_string()))?.cdf(stat);
    let mut r = TestReport::new("chi_square_independence", stat, 0.01, p > 0.01);
    r.p_value = Some(p);
    r.sample_sizes = vec![tot as usize];
    Ok(r)
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            r[idx[k]] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for i in 0..x.len() {
        sxy += (rx[i] - mx) * (ry[i] - my);
        sxx += (rx[i] - mx).powi(2);
        syy += (ry[i] - my).powi(2);
    }
    sxy / (sxx * syy).sqrt()
}

/// Distances of a functional to its limit along `n_list`; passes when the
/// Spearman correlation between n and distance is negative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTable {
    pub functional: String,
    pub n_list: Vec<u64>,
    pub distances: Vec<f64>,
    #[serde(default)]
    pub standard_errors: Vec<f64>,
}

impl ConvergenceTable {
    pub fn monotone_decreasing(&self) -> bool {
        self.distances.windows(2).all(|w| w[1] < w[0])
    }

    pub fn report(&self) -> TestReport {
        if self.n_list.len() < 2 {
            return TestReport::new(&self.functional, 0.0, 0.0, true).note("single n: trivial pass");
        }
        let ns: Vec<f64> = self.n_list.iter().map(|&n| n as f64).collect();
        let rho = spearman(&ns, &self.distances);
        let mut r = TestReport::new(&self.functional, rho, 0.0, rho < 0.0);
        r.notes.push(format!("monotone: {}", self.monotone_decreasing()));
        for (n, d) in self.n_list.iter().zip(&self.distances) {
            r.notes.push(format!("n={n}: {d:.6e}"));
        }
        r
    }
}

pub fn convergence_table(functional: &str, n_list: &[u64], distances: Vec<f64>) -> TestReport {
    ConvergenceTable { functional: functional.into(), n_list: n_list.to_vec(), distances, standard_errors: vec![] }
        .report()
}

/// sup over [0, x_max] of |W_a - W_b| on a grid of `points`.
pub fn scale_sup_error(a: &LevyModel, b: &LevyModel, x_max: f64, points: usize) -> f64 {
    (0..=points)
        .map(|i| {
            let x = x_max * i as f64 / points as f64;
            (a.w(x) - b.w(x)).abs()
        })
        .fold(0.0, f64::max)
}

/// Π̂_n(B_{m,ε}) = (d_n/n)·P̂(σ_n ∈ B_{m,ε}) for m = 0..=m_max from `count`
/// lineages, with standard errors.
pub fn pi_hat_n(
    model: &LevyModel,
    scheme: &RescalingScheme,
    eps: f64,
    tau: f64,
    m_max: usize,
    count: usize,
    stream: &SeedStream,
) -> Result<Vec<(f64, f64)>> {
    let lin = sample_lineages(model, tau, count, stream)?;
    let scale = scheme.d_n / scheme.n as f64;
    let n = count as f64;
    Ok((0..=m_max)
        .map(|m| {
            let f = lin.iter().filter(|l| l.atoms_from(eps) == m + 1).count() as f64 / n;
            (scale * f, scale * (f * (1.0 - f) / n).sqrt())
        })
        .collect())
}

/// Monte Carlo histogram of (Υ_n, mark) over conditioned excursions against
/// the ν-init formula; reports the total-variation distance over `bins`
/// equal bins of [ε, τ) per mark channel.
pub fn cross_check_nu_init(
    model: &LevyModel,
    eps: f64,
    tau: f64,
    samples: usize,
    bins: usize,
    threshold: f64,
    stream: &SeedStream,
) -> Result<TestReport> {
    let draws: Vec<(f64, bool)> = (0..samples)
        .into_par_iter()
        .map(|k| {
            let mut rng = stream.child(k as u64).rng();
            loop {
                let e = sample_excursion_below_tau(model, tau, &mut rng)?;
                if let Some(v) = last_jump_over(&e, tau, eps) {
                    return Ok(v);
                }
            }
        })
        .collect::<Result<_>>()?;
    let h = (tau - eps) / bins as f64;
    let mut mc = vec![vec![0.0; bins]; 2];
    for (d, q) in &draws {
        let i = (((d - eps) / h).floor().max(0.0) as usize).min(bins - 1);
        mc[*q as usize][i] += 1.0 / samples as f64;
    }
    let nu = nu_init(model, eps, tau)?;
    let mut tv = 0.0;
    let mut mark_one = 0.0;
    for q in [0u8, 1] {
        let f = nu.binned(q, bins)?;
        // atoms sit at the bin edge ε and belong to bin 0
        let f = if nu.has_density() {
            f
        } else {
            let mut v = vec![0.0; bins];
            for a in &nu.atoms {
                if let (Location::At(_), true) = (a.location, a.mark == q) {
                    v[0] += a.weight;
                }
            }
            v
        };
        mark_one += if q == 1 { mc[1].iter().sum::<f64>() + f.iter().sum::<f64>() } else { 0.0 };
        tv += f.iter().zip(&mc[q as usize]).map(|(a, b)| (a - b).abs()).sum::<f64>();
    }
    tv *= 0.5;
    let mut r = TestReport::new("nu_init_cross_check", tv, threshold, tv < threshold);
    r.distance = Some(tv);
    r.sample_sizes = vec![samples];
    r.seeds.push(stream.describe());
    if mark_one == 0.0 {
        r.notes.push("mark-1 channel empty in both".into());
    }
    Ok(r)
}

/// Runs `test` for each seed; passes when at least `required` runs pass.
pub fn multi_seed<F>(name: &str, seeds: &[u64], required: usize, test: F) -> Result<TestReport>
where
    F: Fn(u64) -> Result<TestReport>,
{
    let runs: Vec<TestReport> = seeds.iter().map(|&s| test(s)).collect::<Result<_>>()?;
    let passes = runs.iter().filter(|r| r.pass).count();
    let mut r = TestReport::new(name, passes as f64, required as f64, passes >= required);
    r.seeds = seeds.iter().map(|s| s.to_string()).collect();
    r.sample_sizes = runs.iter().flat_map(|x| x.sample_sizes.clone()).collect();
    r.notes = runs
        .iter()
        .flat_map(|x| std::iter::once(x.line()).chain(x.notes.iter().map(|n| format!("    {n}"))))
        .collect();
    r.notes.push(format!("{passes}/{} seeds passed", seeds.len()));
    Ok(r)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportBundle {
    pub schema: String,
    pub reports: Vec<TestReport>,
}

impl ReportBundle {
    pub fn new(mut reports: Vec<TestReport>) -> Self {
        reports.sort_by(|a, b| a.name.cmp(&b.name));
        ReportBundle { schema: REPORT_SCHEMA.into(), reports }
    }

    pub fn all_pass(&self) -> bool {
        self.reports.iter().all(|r| r.pass)
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        for r in &self.reports {
            let _ = writeln!(s, "{}", r.line());
        }
        let p = self.reports.iter().filter(|r| r.pass).count();
        let _ = writeln!(s, "{p}/{} passed", self.reports.len());
        s
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::{Distribution, Exp};

    #[test]
    fn identical_histograms() {
        let r = chi_square_counts(&[10.0, 20.0, 30.0], &[10.0, 20.0, 30.0], 0).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value, Some(1.0));
        assert!(chi_square_counts(&[1.0], &[0.0], 0).is_err());
    }

    #[test]
    fn merging_keeps_totals() {
        let (o, e) = merge_bins(&[1.0, 2.0, 3.0, 4.0], &[1.0, 2.0, 3.0, 4.0], 5.0);
        assert_eq!(e, vec![10.0]);
        assert_eq!(o.iter().sum::<f64>(), 10.0);
    }

    #[test]
    fn ks_self_consistency() {
        let mut passes = 0;
        for s in 0..100 {
            let mut rng = crate::rng::rng_from_seed(s);
            let x: Vec<f64> = (0..500).map(|_| Exp::new(2.0).unwrap().sample(&mut rng)).collect();
            if ks_test(&x, |t| 1.0 - (-2.0 * t).exp()).unwrap().pass {
                passes += 1;
            }
        }
        assert!(passes >= 95, "{passes}");
    }

    #[test]
    fn ks_detects_shift_and_rejects_nan() {
        let mut rng = crate::rng::rng_from_seed(1);
        let x: Vec<f64> = (0..2000).map(|_| rng.random::<f64>() + 0.1).collect();
        assert!(!ks_test(&x, |t| t.clamp(0.0, 1.0)).unwrap().pass);
        let mut y = x.clone();
        y[3] = f64::NAN;
        assert!(ks_test(&y, |t| t).is_err());
        assert!(ks_test(&x[..50], |t| t).is_err());
    }

    #[test]
    fn spearman_and_tables() {
        assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]) + 1.0).abs() < 1e-12);
        let r = convergence_table("w", &[10, 20, 40, 80], vec![0.2, 0.1, 0.05, 0.025]);
        assert!(r.pass && r.statistic == -1.0);
        let r = convergence_table("w", &[10], vec![0.2]);
        assert!(r.pass && !r.notes.is_empty());
    }
}
