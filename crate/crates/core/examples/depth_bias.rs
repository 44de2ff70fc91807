//! Coalescence-depth CDF of the rescaled critical exponential model against
//! its Brownian limit, for growing n: the gap closes like 1/n.

use splitlab::genealogy::sample_lineages;
use splitlab::levy::{presets, MarkRegime};
use splitlab::rng::SeedStream;

fn main() -> splitlab::Result<()> {
    let (eps, tau) = (0.1, 1.0);
    let limit = |h: f64| (0.5 / eps - 0.5 / h) / (0.5 / eps - 0.5 / tau);
    println!("{:>5} {:>8} {:>10} {:>10} {:>10}", "n", "deep", "F_n(0.2)", "exact", "limit");
    for n in [25u64, 50, 100, 200, 400] {
        let (m, _) = presets::critical_exponential(n, MarkRegime::B1 { theta: 0.0 })?;
        let lin = sample_lineages(&m, tau, 100_000, &SeedStream::new(1).child(n))?;
        let deep: Vec<f64> = lin.iter().map(|l| l.coalescence_depth).filter(|&h| h > eps).collect();
        let emp = deep.iter().filter(|&&h| h <= 0.2).count() as f64 / deep.len() as f64;
        let exact = (1.0 / m.w(eps) - 1.0 / m.w(0.2)) / m.p_eps(eps, tau);
        println!("{n:>5} {:>8} {emp:>10.4} {exact:>10.4} {:>10.4}", deep.len(), limit(0.2));
    }
    Ok(())
}
