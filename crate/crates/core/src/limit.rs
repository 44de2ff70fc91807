//! Limit objects: the record chain M_ε, the killed subordinator H^K, the
//! intensities Π(B_{m,ε}) and the limiting Poisson point process.

use crate::error::{domain, Error, Result};
use crate::genealogy::{CppAtom, CppMeta, LineageMeasure, MarkedCPP};
use crate::kernels::{brownian_mark_rate, nu_init, sample_transition, Location, QProcessRates, TransitionOutcome};
use crate::levy::{LevyModel, MarkRegime};
use crate::numerics::quad::{integrate, integrate_singular_left, QuadOptions};
use crate::path::{last_jump_over, sample_excursion_below_tau};
use crate::rng::SeedStream;
use rand::Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::Serialize;

/// Nondecreasing càdlàg path given by knots (t, h(t-), h(t)); linear between
/// the right value at one knot and the left value at the next.
#[derive(Debug, Clone, PartialEq)]
pub struct LadderPath {
    knots: Vec<(f64, f64, f64)>,
}

impl LadderPath {
    pub fn new(knots: Vec<(f64, f64, f64)>) -> Result<Self> {
        if knots.is_empty() {
            return domain("ladder path needs at least one knot");
        }
        for w in knots.windows(2) {
            if !(w[1].0 > w[0].0) {
                return domain("ladder path knots must have increasing times");
            }
        }
        Ok(LadderPath { knots })
    }

    /// h(t) = slope·t on [0, t_end].
    pub fn linear(slope: f64, t_end: f64) -> Self {
        LadderPath { knots: vec![(0.0, 0.0, 0.0), (t_end, slope * t_end, slope * t_end)] }
    }

    fn eval(&self, t: f64, left: bool) -> f64 {
        let k = &self.knots;
        if t <= k[0].0 {
            return if left && t == k[0].0 { k[0].1 } else { k[0].2 };
        }
        for w in k.windows(2) {
            let (t0, _, r0) = w[0];
            let (t1, l1, r1) = w[1];
            if t < t1 {
                return r0 + (l1 - r0) * (t - t0) / (t1 - t0);
            }
            if t == t1 {
                return if left { l1 } else { r1 };
            }
        }
        k[k.len() - 1].2
    }

    pub fn at(&self, t: f64) -> f64 {
        self.eval(t, false)
    }

    pub fn left_limit(&self, t: f64) -> f64 {
        self.eval(t, true)
    }
}

/// Ψ(h, u, l): coalescence depth h(l-) and mutation depths h(u_i), u_i ≤ l.
/// A mutation at u_i = l with h continuous at l lands on the coalescence.
pub fn assemble_sigma(ladder: &LadderPath, mutation_times: &[f64], lifetime: f64) -> Result<LineageMeasure> {
    if !(lifetime >= 0.0) {
        return domain(format!("lifetime must be nonnegative (got {lifetime})"));
    }
    if mutation_times.windows(2).any(|w| w[1] < w[0]) {
        return domain("mutation times must be sorted");
    }
    let coal = ladder.left_limit(lifetime);
    let mut depths = Vec::new();
    let mut flag = false;
    for &u in mutation_times.iter().filter(|&&u| u <= lifetime) {
        let d = ladder.at(u);
        if d == coal {
            flag = true;
        } else {
            depths.push(d);
        }
    }
    let l = LineageMeasure { coalescence_depth: coal, mutation_depths: depths, coalescence_is_mutation: flag };
    l.check(f64::INFINITY)?;
    Ok(l)
}

/// Visited states of M_ε; the last one carries mark 0.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LimitChainState {
    pub history: Vec<TransitionOutcome>,
}

impl LimitChainState {
    /// K_ε: number of marked states.
    pub fn k_eps(&self) -> usize {
        self.history.iter().filter(|s| s.mark == 1).count()
    }

    pub fn absorption_depth(&self) -> f64 {
        self.history.last().map_or(f64::NAN, |s| s.depth)
    }

    pub fn to_lineage(&self) -> Result<LineageMeasure> {
        let coal = self.absorption_depth();
        let muts: Vec<f64> = self.history.iter().filter(|s| s.mark == 1).map(|s| s.depth).collect();
        LineageMeasure::new(coal, muts, false)
    }
}

pub const DEFAULT_CHAIN_CAP: usize = 10_000;

/// Tabulated sampler for an AtomicDensity on [ε, τ) with two mark channels.
#[derive(Debug, Clone)]
struct TabulatedInit {
    lo: f64,
    width: f64,
    /// cumulative masses: atoms first, then (mark 0 bins, mark 1 bins)
    cumulative: Vec<f64>,
    atoms: Vec<(f64, u8)>,
    bins: usize,
}

impl TabulatedInit {
    fn build(model: &LevyModel, eps: f64, tau: f64, bins: usize) -> Result<Self> {
        let nu = nu_init(model, eps, tau)?;
        let mut cumulative = Vec::new();
        let mut atoms = Vec::new();
        let mut acc = 0.0;
        for a in &nu.atoms {
            if let Location::At(x) = a.location {
                acc += a.weight;
                cumulative.push(acc);
                atoms.push((x, a.mark));
            }
        }
        if nu.has_density() {
            for q in [0u8, 1] {
                let h = (tau - eps) / bins as f64;
                let masses: Vec<f64> = (0..bins)
                    .into_par_iter()
                    .map(|i| nu.density_mass_between(q, eps + i as f64 * h, eps + (i + 1) as f64 * h))
                    .collect::<Result<_>>()?;
                for m in masses {
                    acc += m.max(0.0);
                    cumulative.push(acc);
                }
            }
        }
        if !(acc > 0.0) {
            return Err(Error::Numeric("initial law has zero mass".into()));
        }
        Ok(TabulatedInit { lo: eps, width: (tau - eps) / bins as f64, cumulative, atoms, bins })
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, u8) {
        let total = *self.cumulative.last().unwrap();
        let t = rng.random::<f64>() * total;
        let k = self.cumulative.partition_point(|&c| c <= t).min(self.cumulative.len() - 1);
        if k < self.atoms.len() {
            return self.atoms[k];
        }
        let j = k - self.atoms.len();
        let (q, i) = ((j / self.bins) as u8, j % self.bins);
        (self.lo + (i as f64 + rng.random::<f64>()) * self.width, q)
    }
}

#[derive(Debug, Clone)]
enum ChainKind {
    PreLimit,
    Brownian,
    General { init: TabulatedInit, hk: Box<HkSampler> },
}

/// Sampler of M_ε (pre-limit M_{n,ε} when the model is pre-limit).
#[derive(Debug, Clone)]
pub struct ChainSampler {
    model: LevyModel,
    regime: Option<MarkRegime>,
    pub eps: f64,
    pub tau: f64,
    pub cap: usize,
    kind: ChainKind,
}

impl ChainSampler {
    pub fn new(model: &LevyModel, regime: Option<MarkRegime>, eps: f64, tau: f64) -> Result<Self> {
        if !(eps > 0.0 && eps < tau) {
            return domain(format!("chain needs 0 < eps < tau (got eps={eps}, tau={tau})"));
        }
        let kind = if model.is_pre_limit() {
            ChainKind::PreLimit
        } else {
            let regime = regime.ok_or_else(|| Error::Contract("limit chain needs a mark regime".into()))?;
            if model.jumps().total_mass() == 0.0 && model.gaussian_b() > 0.0 {
                ChainKind::Brownian
            } else {
                let m = model.with_mutation(regime.limit_mutation())?;
                let init = TabulatedInit::build(&m, eps, tau, 400)?;
                let hk = HkSampler::new(&m, regime, tau)?.with_floor(eps)?;
                ChainKind::General { init, hk: Box::new(hk) }
            }
        };
        Ok(ChainSampler { model: model.clone(), regime, eps, tau, cap: DEFAULT_CHAIN_CAP, kind })
    }

    fn step<R: Rng + ?Sized>(&self, s: TransitionOutcome, rng: &mut R) -> Result<TransitionOutcome> {
        match &self.kind {
            ChainKind::General { hk, .. } => {
                let run = hk.run(s.depth, true, rng)?;
                Ok(match run.first_mark {
                    Some(d) => TransitionOutcome { depth: d, mark: 1 },
                    None => TransitionOutcome { depth: run.killing_depth, mark: 0 },
                })
            }
            _ => sample_transition(&self.model, self.regime, s, self.tau, rng),
        }
    }

    fn initial<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<(f64, u8)> {
        match &self.kind {
            ChainKind::PreLimit => {
                for _ in 0..10_000_000 {
                    let e = sample_excursion_below_tau(&self.model, self.tau, rng)?;
                    if let Some((d, m)) = last_jump_over(&e, self.tau, self.eps) {
                        return Ok((d, m as u8));
                    }
                }
                Err(Error::Sampler("no excursion reached depth eps".into()))
            }
            // the whole initial law is the atom at (ε, 0)
            ChainKind::Brownian => Ok((self.eps, 0)),
            ChainKind::General { init, .. } => Ok(init.sample(rng)),
        }
    }

    /// One realization of M_ε: the initial state from ν_ε^init, composed with
    /// one kernel step when the initial jump is unmarked, then kernel steps
    /// until the first mark-0 state.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<LimitChainState> {
        let (u, q) = self.initial(rng)?;
        let mut history = Vec::new();
        let mut s = if q == 1 {
            TransitionOutcome { depth: u, mark: 1 }
        } else {
            self.step(TransitionOutcome { depth: u, mark: 1 }, rng)?
        };
        history.push(s);
        while s.mark == 1 {
            if history.len() > self.cap {
                return Err(Error::Sampler(format!("chain exceeded {} steps", self.cap)));
            }
            s = self.step(s, rng)?;
            if s.depth < history.last().unwrap().depth {
                return Err(Error::Contract("chain depth decreased".into()));
            }
            history.push(s);
        }
        Ok(LimitChainState { history })
    }
}

pub fn sample_chain_m_eps<R: Rng + ?Sized>(
    model: &LevyModel,
    regime: Option<MarkRegime>,
    eps: f64,
    tau: f64,
    rng: &mut R,
) -> Result<LimitChainState> {
    ChainSampler::new(model, regime, eps, tau)?.sample(rng)
}

/// Output of one run of H^K.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HkRun {
    /// depths right after each jump (and marks), with their mark
    pub events: Vec<(f64, bool)>,
    pub killing_depth: f64,
    pub first_mark: Option<f64>,
}

/// One depth row of the jump table of H^K.
#[derive(Debug, Clone)]
struct JumpRow {
    /// jump sizes (log-spaced on [δ, τ-a))
    u: Vec<f64>,
    cumulative: Vec<f64>,
    /// mass of jumps ≥ δ per unit local time
    big_rate: f64,
    /// ∫_0^δ u μ^K(a,du)/h(a): depth drift contributed by small jumps
    small_mean: f64,
}

/// Simulates the killed inhomogeneous subordinator H^K in depth, with jumps
/// below the cutoff δ folded into the drift and events placed by thinning
/// against a majorant of the per-depth hazard over each step.
#[derive(Debug, Clone)]
pub struct HkSampler {
    rates: QProcessRates,
    regime: MarkRegime,
    pub cutoff: f64,
    rows: Vec<JumpRow>,
    floor: f64,
}

const HK_ROWS: usize = 160;
const HK_COLS: usize = 120;

impl HkSampler {
    pub fn new(model: &LevyModel, regime: MarkRegime, tau: f64) -> Result<Self> {
        if model.is_pre_limit() {
            return domain("H^K sampling is for limit models");
        }
        let m = model.with_mutation(regime.limit_mutation())?;
        let infinite = !m.jumps().total_mass().is_finite();
        let cutoff = if infinite { 1e-3 * tau } else { 0.0 };
        let mut s = HkSampler { rates: QProcessRates::new(&m, tau), regime, cutoff, rows: vec![], floor: 0.0 };
        s.build_rows(1e-3 * tau)?;
        Ok(s)
    }

    /// Rebuilds the jump table on [floor, τ) for better resolution.
    pub fn with_floor(mut self, floor: f64) -> Result<Self> {
        self.build_rows(floor)?;
        Ok(self)
    }

    fn build_rows(&mut self, floor: f64) -> Result<()> {
        let tau = self.rates.tau;
        self.floor = floor;
        if self.rates.model.jumps().total_mass() == 0.0 {
            self.rows.clear();
            return Ok(());
        }
        let delta = self.cutoff;
        let r = &self.rates;
        let rows = (0..HK_ROWS)
            .into_par_iter()
            .map(|i| {
                let a = floor + (tau - floor) * i as f64 / HK_ROWS as f64;
                let top = tau - a;
                let lo = if delta > 0.0 { delta } else { 1e-6 * top };
                if top <= lo {
                    return Ok(JumpRow { u: vec![], cumulative: vec![], big_rate: 0.0, small_mean: 0.0 });
                }
                let u: Vec<f64> = (0..HK_COLS)
                    .map(|j| lo * (top / lo).powf(j as f64 / (HK_COLS - 1) as f64))
                    .map(|v: f64| v.min(top * (1.0 - 1e-9)))
                    .collect();
                let d: Vec<f64> = u.iter().map(|&v| r.jump_density(a, v, None).max(0.0)).collect();
                let mut cumulative = vec![0.0];
                for j in 1..u.len() {
                    let c = cumulative[j - 1] + 0.5 * (d[j] + d[j - 1]) * (u[j] - u[j - 1]);
                    cumulative.push(c);
                }
                let mut big_rate = *cumulative.last().unwrap();
                let small_mean = if delta > 0.0 {
                    integrate_singular_left(|v| v * r.jump_density(a, v, None), 0.0, delta, 2.0, QuadOptions::default())?
                        .value
                } else {
                    // finite measure: include the sliver below lo as a rate
                    big_rate += integrate(|v| r.jump_density(a, v, None), 0.0, lo, QuadOptions::default())?.value;
                    0.0
                };
                Ok(JumpRow { u, cumulative, big_rate, small_mean })
            })
            .collect::<Result<Vec<_>>>()?;
        self.rows = rows;
        Ok(())
    }

    fn row(&self, a: f64) -> Option<&JumpRow> {
        if self.rows.is_empty() {
            return None;
        }
        let tau = self.rates.tau;
        let i = ((a - self.floor) / (tau - self.floor) * HK_ROWS as f64).floor();
        Some(&self.rows[(i.max(0.0) as usize).min(HK_ROWS - 1)])
    }

    fn interp(&self, a: f64, f: impl Fn(&JumpRow) -> f64) -> f64 {
        if self.rows.is_empty() {
            return 0.0;
        }
        let tau = self.rates.tau;
        let x = ((a - self.floor) / (tau - self.floor) * HK_ROWS as f64).max(0.0);
        let i = (x.floor() as usize).min(HK_ROWS - 1);
        let j = (i + 1).min(HK_ROWS - 1);
        let t = (x - i as f64).clamp(0.0, 1.0);
        f(&self.rows[i]) * (1.0 - t) + f(&self.rows[j]) * t
    }

    /// Depth speed da/dt.
    pub fn speed(&self, a: f64) -> f64 {
        self.rates.drift() + self.interp(a, |r| r.small_mean)
    }

    fn mark_rate(&self, a: f64) -> f64 {
        match self.regime {
            MarkRegime::B1 { theta } => theta,
            MarkRegime::B2 { kappa } => {
                // ρ plus small jumps, each marked with probability κu
                self.regime.rho(self.rates.model.gaussian_b()) + kappa * self.interp(a, |r| r.small_mean)
            }
        }
    }

    /// (kill, jump, mark) rates per unit local time at depth a.
    fn event_rates(&self, a: f64) -> (f64, f64, f64) {
        (self.rates.kill_rate(a), self.interp(a, |r| r.big_rate), self.mark_rate(a))
    }

    fn hazard(&self, a: f64) -> f64 {
        let (k, j, m) = self.event_rates(a);
        (k + j + m) / self.speed(a)
    }

    /// Jump size at depth a from the tabulated density (support u < τ - a).
    pub fn sample_jump<R: Rng + ?Sized>(&self, a: f64, rng: &mut R) -> Result<f64> {
        let row = self.row(a).ok_or_else(|| Error::Sampler("no jump table".into()))?;
        let tot = *row.cumulative.last().unwrap_or(&0.0);
        if !(tot > 0.0) {
            return Err(Error::Sampler(format!("empty jump law at depth {a}")));
        }
        for _ in 0..10_000 {
            let t = rng.random::<f64>() * tot;
            let k = row.cumulative.partition_point(|&c| c <= t).clamp(1, row.u.len() - 1);
            let (c0, c1) = (row.cumulative[k - 1], row.cumulative[k]);
            let f = if c1 > c0 { (t - c0) / (c1 - c0) } else { 0.5 };
            let u = row.u[k - 1] + f * (row.u[k] - row.u[k - 1]);
            if u < self.rates.tau - a {
                return Ok(u);
            }
        }
        Err(Error::Sampler(format!("jump support empty at depth {a}")))
    }

    /// Runs H^K from depth x0 until killing (or until the first mark when
    /// `stop_at_mark`).
    pub fn run<R: Rng + ?Sized>(&self, x0: f64, stop_at_mark: bool, rng: &mut R) -> Result<HkRun> {
        let tau = self.rates.tau;
        if !(x0 > 0.0 && x0 < tau) {
            return domain(format!("H^K needs 0 < x0 < tau (got {x0})"));
        }
        let mut a = x0;
        let mut events = Vec::new();
        let mut step = (tau - x0) / 50.0;
        for _ in 0..10_000_000usize {
            let next = (a + step.min((tau - a) / 4.0)).min(tau);
            let maj = 1.25 * self.hazard(a).max(self.hazard(next));
            if !maj.is_finite() || maj <= 0.0 {
                return Err(Error::Numeric(format!("H^K hazard majorant failed at depth {a}")));
            }
            let e = -(1.0 - rng.random::<f64>()).ln() / maj;
            if a + e >= next {
                a = next;
                step = (tau - x0) / 50.0;
                continue;
            }
            let cand = a + e;
            let hz = self.hazard(cand);
            if hz > maj {
                step *= 0.5;
                continue;
            }
            a = cand;
            if rng.random::<f64>() * maj >= hz {
                continue;
            }
            let (k, j, m) = self.event_rates(a);
            let pick = rng.random::<f64>() * (k + j + m);
            if pick < k {
                return Ok(HkRun { events, killing_depth: a, first_mark: None });
            }
            let (new_a, marked) = if pick < k + j {
                let u = self.sample_jump(a, rng)?;
                let marked = matches!(self.regime, MarkRegime::B2 { .. })
                    && rng.random::<f64>() < self.rates.mark_probability(a, u);
                (a + u, marked)
            } else {
                (a, true)
            };
            a = new_a;
            events.push((a, marked));
            if marked && stop_at_mark {
                return Ok(HkRun { events, killing_depth: f64::NAN, first_mark: Some(a) });
            }
        }
        Err(Error::Sampler("H^K run did not terminate".into()))
    }
}

pub fn sample_h_k<R: Rng + ?Sized>(model: &LevyModel, regime: MarkRegime, tau: f64, x0: f64, rng: &mut R) -> Result<HkRun> {
    HkSampler::new(model, regime, tau)?.run(x0, false, rng)
}

/// Π₁(B_{m,ε}) for the Brownian limit with mark rate β per unit depth: the
/// lineage has depth density 1/(2h²) and Poisson(β(h-ε)) marks on [ε, h).
pub fn pi1_b(beta: f64, m: u32, eps: f64, tau: f64) -> Result<f64> {
    if !(eps > 0.0 && eps < tau) {
        return domain(format!("pi1_b needs 0 < eps < tau (got {eps})"));
    }
    if beta == 0.0 {
        return Ok(if m == 0 { 0.5 / eps - 0.5 / tau } else { 0.0 });
    }
    let lf = crate::numerics::special::ln_gamma(m as f64 + 1.0);
    let f = |h: f64| {
        let s = beta * (h - eps);
        let p = if m == 0 { (-s).exp() } else { (m as f64 * s.ln() - s - lf).exp() };
        p / (2.0 * h * h)
    };
    Ok(integrate(f, eps, tau, QuadOptions::tight())?.value)
}

/// Π₁(B_{≥m,ε}) = p_ε - Σ_{k<m} Π₁(B_{k,ε}).
pub fn pi1_b_at_least(beta: f64, m: u32, eps: f64, tau: f64) -> Result<f64> {
    let mut v = 0.5 / eps - 0.5 / tau;
    for k in 0..m {
        v -= pi1_b(beta, k, eps, tau)?;
    }
    Ok(v)
}

/// p_ε·P̂(K_ε = m) for m = 0..=m_max from `samples` chains, with standard errors.
pub fn pi_b_monte_carlo(
    sampler: &ChainSampler,
    m_max: usize,
    samples: usize,
    stream: &SeedStream,
) -> Result<Vec<(f64, f64)>> {
    let ks: Vec<usize> = (0..samples)
        .into_par_iter()
        .map(|i| Ok(sampler.sample(&mut stream.child(i as u64).rng())?.k_eps()))
        .collect::<Result<_>>()?;
    let p = sampler.model.p_eps(sampler.eps, sampler.tau);
    let n = samples as f64;
    Ok((0..=m_max)
        .map(|m| {
            let f = ks.iter().filter(|&&k| k == m).count() as f64 / n;
            (p * f, p * (f * (1.0 - f) / n).sqrt())
        })
        .collect())
}

/// Intensity of the limiting point process restricted to depth ≥ ε.
#[derive(Debug, Clone)]
pub struct LimitIntensity {
    pub model: LevyModel,
    pub regime: MarkRegime,
    pub tau: f64,
    pub eps_floor: f64,
}

impl LimitIntensity {
    pub fn new(model: &LevyModel, regime: MarkRegime, tau: f64, eps_floor: f64) -> Result<Self> {
        if !(eps_floor > 0.0 && eps_floor < tau) {
            return domain("eps floor must lie in (0, tau)");
        }
        Ok(LimitIntensity { model: model.clone(), regime, tau, eps_floor })
    }

    /// p_ε = 1/W(ε) - 1/W(τ).
    pub fn total_mass(&self, eps: f64) -> Result<f64> {
        if eps < self.eps_floor || eps >= self.tau {
            return domain(format!("eps {eps} outside [{}, {})", self.eps_floor, self.tau));
        }
        Ok(self.model.p_eps(eps, self.tau))
    }

    /// Depth CDF of a lineage given depth ≥ ε: (1/W(ε) - 1/W(h))/p_ε.
    pub fn depth_cdf(&self, eps: f64, h: f64) -> f64 {
        if h <= eps {
            return 0.0;
        }
        if h >= self.tau {
            return 1.0;
        }
        (1.0 / self.model.w(eps) - 1.0 / self.model.w(h)) / self.model.p_eps(eps, self.tau)
    }

    /// Closed-form Π(B_{m,ε}) where available (Brownian limit).
    pub fn pi(&self, m: u32, eps: f64) -> Result<f64> {
        self.total_mass(eps)?;
        if self.model.jumps().total_mass() == 0.0 && self.model.gaussian_b() > 0.0 {
            let beta = brownian_mark_rate(&self.model, self.regime);
            let b = self.model.gaussian_b();
            // W(x) = 2x/b²: rescale depths so the density is 1/(2h²)
            return Ok(pi1_b(beta, m, eps, self.tau)? * b * b);
        }
        Err(Error::Contract("no closed form for Π(B_{m,ε}); use pi_b_monte_carlo".into()))
    }
}

/// Position window of the limiting point process.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Window {
    /// [0, length]
    Fixed(f64),
    /// [0, e] with e exponential of mean W(τ) (conditioning on survival)
    Survival,
}

/// Poisson point process with intensity Leb ⊗ Π restricted to depth ≥ ε.
pub fn sample_limit_cpp(
    model: &LevyModel,
    regime: MarkRegime,
    tau: f64,
    eps: f64,
    window: Window,
    stream: &SeedStream,
) -> Result<MarkedCPP> {
    if !(eps > 0.0) {
        return domain("limit sampling needs eps > 0");
    }
    if !(eps < tau) {
        return domain("limit sampling needs eps < tau");
    }
    if model.is_pre_limit() {
        return domain("sample_limit_cpp needs a limit model");
    }
    let p = model.p_eps(eps, tau);
    let mut rng = stream.child("count").rng();
    let len = match window {
        Window::Fixed(l) if l > 0.0 => l,
        Window::Fixed(l) => return domain(format!("window length must be positive (got {l})")),
        Window::Survival => -(1.0 - rng.random::<f64>()).ln() * model.w(tau),
    };
    let count = Poisson::new(len * p)
        .map_err(|e| Error::Numeric(e.to_string()))?
        .sample(&mut rng) as usize;
    let brownian = model.jumps().total_mass() == 0.0 && model.gaussian_b() > 0.0;
    let chain = if brownian { None } else { Some(ChainSampler::new(model, Some(regime), eps, tau)?) };
    let beta = if brownian { brownian_mark_rate(model, regime) } else { 0.0 };
    let mut atoms: Vec<CppAtom> = (0..count)
        .into_par_iter()
        .map(|i| {
            let mut r = stream.child("atom").child(i as u64).rng();
            let position = r.random::<f64>() * len;
            let lineage = match &chain {
                None => {
                    // depth from P(D ≥ h | D ≥ ε) = (1/W(h) - 1/W(τ))/p_ε, inverted for affine W
                    let s: f64 = r.random();
                    let inv_wh = 1.0 / model.w(tau) + (1.0 - s) * p;
                    let w0 = model.w(0.0);
                    let slope = model.w(1.0) - w0;
                    let h = ((1.0 / inv_wh - w0) / slope).clamp(eps, tau * (1.0 - 1e-15));
                    // marks: Poisson(β) per unit depth on (0, h)
                    let mut muts = Vec::new();
                    if beta > 0.0 {
                        let mut d = 0.0;
                        loop {
                            d += -(1.0 - r.random::<f64>()).ln() / beta;
                            if d >= h {
                                break;
                            }
                            muts.push(d);
                        }
                    }
                    LineageMeasure::new(h, muts, false)?
                }
                Some(c) => c.sample(&mut r)?.to_lineage()?,
            };
            Ok(CppAtom { position, lineage })
        })
        .collect::<Result<_>>()?;
    atoms.sort_by(|a, b| a.position.total_cmp(&b.position));
    Ok(MarkedCPP {
        meta: CppMeta {
            source: "limit".into(),
            tau,
            n: None,
            d_n: None,
            i_n: None,
            eps: Some(eps),
            window: Some(len),
            regime: Some(regime),
            seed: stream.describe(),
            warnings: vec![],
        },
        atoms,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::mu_k;
    use crate::levy::presets;
    use crate::rng::rng_from_seed;

    #[test]
    fn sigma_direct_evaluation() {
        let h = LadderPath::linear(0.5, 10.0);
        let l = assemble_sigma(&h, &[0.4, 1.0], 1.2).unwrap();
        assert!((l.coalescence_depth - 0.6).abs() < 1e-15);
        assert_eq!(l.mutation_depths.len(), 2);
        assert!((l.mutation_depths[0] - 0.2).abs() < 1e-15 && (l.mutation_depths[1] - 0.5).abs() < 1e-15);
        let l = assemble_sigma(&h, &[], 1.2).unwrap();
        assert!(l.mutation_depths.is_empty() && !l.coalescence_is_mutation);
        let l = assemble_sigma(&h, &[0.4, 1.2], 1.2).unwrap();
        assert!(l.coalescence_is_mutation);
        assert!(assemble_sigma(&h, &[1.0, 0.4], 1.2).is_err());
    }

    #[test]
    fn jumpy_ladder_left_limit() {
        let h = LadderPath::new(vec![(0.0, 0.0, 0.0), (1.0, 0.5, 0.8), (2.0, 1.3, 1.3)]).unwrap();
        assert_eq!(h.left_limit(1.0), 0.5);
        assert_eq!(h.at(1.0), 0.8);
        assert!((h.at(1.5) - 1.05).abs() < 1e-15);
    }

    #[test]
    fn brownian_without_marks_never_mutates() {
        let m = presets::brownian(1.0);
        let c = ChainSampler::new(&m, Some(MarkRegime::B1 { theta: 0.0 }), 0.1, 1.0).unwrap();
        let mut rng = rng_from_seed(4);
        for _ in 0..200 {
            let s = c.sample(&mut rng).unwrap();
            assert_eq!(s.k_eps(), 0);
            assert_eq!(s.history.len(), 1);
        }
    }

    #[test]
    fn pi1_identities() {
        let p = 0.5 / 0.1 - 0.5;
        assert_eq!(pi1_b(0.0, 0, 0.1, 1.0).unwrap(), p);
        assert_eq!(pi1_b(0.0, 2, 0.1, 1.0).unwrap(), 0.0);
        let s: f64 = (0..40).map(|m| pi1_b(1.0, m, 0.1, 1.0).unwrap()).sum();
        assert!((s - p).abs() < 1e-9);
    }

    #[test]
    fn stable_jumps_respect_support() {
        let m = presets::stable(1.5).unwrap();
        let hk = HkSampler::new(&m, MarkRegime::B1 { theta: 0.0 }, 1.0).unwrap();
        let mut rng = rng_from_seed(2);
        for _ in 0..2000 {
            let u = hk.sample_jump(0.5, &mut rng).unwrap();
            assert!(u >= hk.cutoff && u < 0.5);
        }
        // the killing atom is the only mass at +∞
        let k = mu_k(&m, 1.0, 0.5, false).unwrap();
        assert_eq!(k.atoms.len(), 1);
    }
}
