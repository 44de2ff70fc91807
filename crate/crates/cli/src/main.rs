use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use splitlab::config::{ExperimentConfig, Family, Format, KernelName, Suite, WindowName};
use splitlab::genealogy::{simulate_marked_cpp, simulate_population_count, MarkedCPP};
use splitlab::io::{cpp_rows, OutputDir, CPP_HEADER, CPP_SCHEMA, TABLE_SCHEMA};
use splitlab::kernels::{
    estimate_pi, excursion_marginal, g_x, jump_law_first_mutation, ladder_measures, mu_k, nu_init, resolvent_u_star,
    AtomicDensity,
};
use splitlab::levy::{LevyModel, ScaleMethod};
use splitlab::limit::{pi_b_monte_carlo, sample_limit_cpp, ChainSampler, LimitIntensity, Window};
use splitlab::rng::SeedStream;
use splitlab::verify::{cross_check_nu_init, ReportBundle, TestReport};
use splitlab::{acceptance, Error};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "splitlab", version, about = "Marked coalescent point processes of splitting trees")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Tabulate the scale function W on the `[scale_fn]` grid
    ScaleFn(Common),
    /// Simulate pre-limit marked coalescent point processes
    Simulate(Common),
    /// Sample the limiting point process and tabulate Π(B_{m,ε})
    Limit(Common),
    /// Evaluate one kernel (`[kernels]` section) on a grid
    Kernels(Common),
    /// Run a verification suite; exit status 0 iff every report passes
    Verify(Common),
}

#[derive(Args)]
struct Common {
    /// experiment configuration (TOML)
    #[arg(long, short)]
    config: PathBuf,
    /// output directory (overrides output.dir)
    #[arg(long)]
    out: Option<PathBuf>,
    /// replace files in a non-empty output directory
    #[arg(long)]
    overwrite: bool,
    /// worker threads (default: all cores)
    #[arg(long)]
    threads: Option<usize>,
    /// master seed (overrides rng.seed)
    #[arg(long)]
    seed: Option<u64>,
}

struct Run {
    cfg: ExperimentConfig,
    out: OutputDir,
    stream: SeedStream,
}

impl Run {
    fn json(&self) -> bool {
        self.cfg.output.formats.contains(&Format::Json)
    }
    fn csv(&self) -> bool {
        self.cfg.output.formats.contains(&Format::Csv)
    }
}

fn setup(c: &Common, experiment: &str) -> anyhow::Result<Run> {
    let mut cfg = ExperimentConfig::load(&c.config)?;
    if let Some(s) = c.seed {
        cfg.rng.seed = s;
    }
    if let Some(o) = &c.out {
        cfg.output.dir = o.clone();
    }
    cfg.output.overwrite |= c.overwrite;
    cfg.validate()?;
    if let Some(t) = c.threads {
        rayon::ThreadPoolBuilder::new().num_threads(t.max(1)).build_global().context("thread pool")?;
    }
    let out = OutputDir::prepare(&cfg.output.dir, cfg.output.overwrite)?;
    out.write_snapshot(&cfg)?;
    let stream = SeedStream::new(cfg.rng.seed).child(experiment);
    Ok(Run { cfg, out, stream })
}

/// Model whose W is tabulated / whose kernels are evaluated: the rescaled
/// pre-limit model at the first n when the family has one, else the limit.
fn working_model(cfg: &ExperimentConfig, limit: bool) -> anyhow::Result<LevyModel> {
    Ok(match cfg.model.family {
        Family::CriticalExponential | Family::Custom if !limit => cfg.prelimit_model(cfg.first_n()?)?.0,
        _ => cfg.limit_model()?,
    })
}

fn method_name(m: ScaleMethod) -> &'static str {
    match m {
        ScaleMethod::ClosedForm => "closed_form",
        ScaleMethod::Talbot => "talbot",
        ScaleMethod::Euler => "euler",
    }
}

fn scale_fn(c: &Common) -> anyhow::Result<()> {
    let run = setup(c, "scale_fn")?;
    let model = working_model(&run.cfg, false)?;
    let xs = run.cfg.scale_fn.clone().map(|g| g.values()).unwrap_or_default();
    let mut rows = Vec::with_capacity(xs.len());
    for x in xs {
        let (w, m) = model.scale_function_with_method(x)?;
        rows.push(vec![x.to_string(), w.to_string(), method_name(m).to_string()]);
    }
    let seed = run.stream.describe();
    run.out.write_csv("scale_fn.csv", &seed, &["x", "W", "method"], &rows)?;
    println!("wrote {} rows to {}", rows.len(), run.out.path("scale_fn.csv").display());
    Ok(())
}

fn write_cpps(run: &Run, name: &str, cpps: &[MarkedCPP]) -> anyhow::Result<()> {
    let seed = run.stream.describe();
    if run.json() {
        run.out.write_json(&format!("{name}.json"), CPP_SCHEMA, &seed, &cpps)?;
    }
    if run.csv() {
        let rows: Vec<_> = cpps.iter().enumerate().flat_map(|(i, c)| cpp_rows(i, c)).collect();
        run.out.write_csv(&format!("{name}.csv"), &seed, &CPP_HEADER, &rows)?;
    }
    Ok(())
}

#[derive(serde::Serialize)]
struct SimSummary {
    n: u64,
    d_n: f64,
    replicas: usize,
    lineages: usize,
    deeper_than_eps: usize,
    fraction_deeper_than_eps: f64,
    expected_fraction: f64,
    mean_mutations: f64,
}

fn simulate(c: &Common) -> anyhow::Result<()> {
    let run = setup(c, "simulate")?;
    let g = &run.cfg.genealogy;
    let mut summary = Vec::new();
    for n in run.cfg.n_values() {
        let (model, scheme) = run.cfg.prelimit_model(n)?;
        let s = run.stream.child(n);
        let cpps: Vec<MarkedCPP> = (0..g.replicas)
            .map(|r| {
                let rs = s.child(r as u64);
                let i_n = match g.i_n {
                    Some(i) => i,
                    None => simulate_population_count(&model, g.tau, &mut rs.child("count").rng())? as usize,
                };
                simulate_marked_cpp(&model, n, scheme.d_n, g.tau, i_n, &rs.child("lineages"))
            })
            .collect::<splitlab::Result<_>>()?;
        write_cpps(&run, &format!("cpp_n{n}"), &cpps)?;
        let lineages: Vec<_> = cpps.iter().flat_map(|c| &c.atoms).map(|a| &a.lineage).collect();
        let deep = lineages.iter().filter(|l| l.coalescence_depth > g.eps).count();
        let w = |x: f64| model.w(x);
        let total = lineages.len().max(1) as f64;
        summary.push(SimSummary {
            n,
            d_n: scheme.d_n,
            replicas: g.replicas,
            lineages: lineages.len(),
            deeper_than_eps: deep,
            fraction_deeper_than_eps: deep as f64 / total,
            expected_fraction: model.p_eps(g.eps, g.tau) / (1.0 / w(0.0) - 1.0 / w(g.tau)),
            mean_mutations: lineages.iter().map(|l| l.mutation_count() as f64).sum::<f64>() / total,
        });
        println!(
            "n={n}: {} lineages, fraction deeper than eps {:.4} (expected {:.4})",
            lineages.len(),
            deep as f64 / total,
            summary.last().unwrap().expected_fraction
        );
    }
    run.out.write_json("summary.json", TABLE_SCHEMA, &run.stream.describe(), &summary)?;
    Ok(())
}

fn limit(c: &Common) -> anyhow::Result<()> {
    let run = setup(c, "limit")?;
    let lc = run.cfg.limit.clone().unwrap_or_default();
    let g = &run.cfg.genealogy;
    let model = run.cfg.limit_model()?;
    let regime = run.cfg.regime();
    let window = match lc.window {
        WindowName::Unit => Window::Fixed(1.0),
        WindowName::Survival => Window::Survival,
    };
    let cpps: Vec<MarkedCPP> = (0..lc.draws)
        .map(|i| sample_limit_cpp(&model, regime, g.tau, g.eps, window, &run.stream.child("cpp").child(i as u64)))
        .collect::<splitlab::Result<_>>()?;
    write_cpps(&run, "limit_cpp", &cpps)?;

    // Π(B_{m,ε}), m = 0..=m_max, and the remainder m > m_max; rows sum to p_ε
    let intensity = LimitIntensity::new(&model, regime, g.tau, g.eps)?;
    let p = intensity.total_mass(g.eps)?;
    let mut table: Vec<(String, f64, f64)> = Vec::new();
    match intensity.pi(0, g.eps) {
        Ok(_) => {
            for m in 0..=lc.m_max {
                table.push((m.to_string(), intensity.pi(m as u32, g.eps)?, 0.0));
            }
        }
        Err(Error::Contract(_)) => {
            let sampler = ChainSampler::new(&model, Some(regime), g.eps, g.tau)?;
            let est = pi_b_monte_carlo(&sampler, lc.m_max, lc.chains, &run.stream.child("pi"))?;
            for (m, (v, se)) in est.into_iter().enumerate() {
                table.push((m.to_string(), v, se));
            }
        }
        Err(e) => return Err(e.into()),
    }
    let rest = p - table.iter().map(|r| r.1).sum::<f64>();
    table.push((format!(">{}", lc.m_max), rest.max(0.0), 0.0));
    let rows: Vec<Vec<String>> =
        table.iter().map(|(m, v, se)| vec![m.clone(), v.to_string(), se.to_string()]).collect();
    run.out.write_csv("pi_table.csv", &run.stream.describe(), &["m", "pi", "standard_error"], &rows)?;
    let atoms: usize = cpps.iter().map(|c| c.atoms.len()).sum();
    println!(
        "{} draws, mean atom count {:.4} (p_eps = {p:.6}); Π table written",
        lc.draws,
        atoms as f64 / lc.draws.max(1) as f64
    );
    Ok(())
}

fn density_rows(k: &AtomicDensity, xs: &[f64]) -> Vec<Vec<String>> {
    xs.iter().map(|&u| vec![u.to_string(), k.density(u, 0).to_string(), k.density(u, 1).to_string()]).collect()
}

fn kernels(c: &Common) -> anyhow::Result<()> {
    let run = setup(c, "kernels")?;
    let kc = run.cfg.kernels.clone().ok_or_else(|| Error::Config("missing [kernels] section".into()))?;
    let g = &run.cfg.genealogy;
    let model = working_model(&run.cfg, kc.limit)?;
    let regime = run.cfg.regime();
    let xs = kc.grid.values();
    let at = |what: &str| kc.at.ok_or_else(|| Error::Config(format!("kernels.at ({what}) is required")));
    let seed = run.stream.describe();
    let header3 = ["u", "density_mark0", "density_mark1"];
    let (name, header, rows, atoms): (&str, Vec<&str>, Vec<Vec<String>>, Option<AtomicDensity>) = match kc.kernel {
        KernelName::ExcursionMarginal => {
            let x = at("x")?;
            let rows = xs
                .iter()
                .map(|&z| Ok(vec![z.to_string(), excursion_marginal(&model, x, z)?.to_string()]))
                .collect::<splitlab::Result<_>>()?;
            ("excursion_marginal", vec!["z", "density"], rows, None)
        }
        KernelName::GX => {
            let k = g_x(&model, at("x")?, kc.param.unwrap_or(0.0))?;
            ("g_x", header3.to_vec(), density_rows(&k, &xs), Some(k))
        }
        KernelName::NuInit => {
            let k = nu_init(&model, g.eps, g.tau)?;
            ("nu_init", header3.to_vec(), density_rows(&k, &xs), Some(k))
        }
        KernelName::MuK => {
            let k = mu_k(&model, g.tau, at("a")?, true)?;
            ("mu_k", header3.to_vec(), density_rows(&k, &xs), Some(k))
        }
        KernelName::LadderMu => {
            let lm = ladder_measures(&model, Some(regime))?;
            let rows = xs
                .iter()
                .map(|&u| vec![u.to_string(), lm.mu(u, 0).to_string(), lm.mu(u, 1).to_string(), lm.mu_star(u).to_string()])
                .collect();
            ("ladder_mu", vec!["u", "mu_mark0", "mu_mark1", "mu_star"], rows, None)
        }
        KernelName::Resolvent => {
            let lm = ladder_measures(&model, Some(regime))?;
            let u = resolvent_u_star(&lm, kc.param.unwrap_or(0.0))?;
            let rows = xs
                .iter()
                .map(|&z| Ok(vec![z.to_string(), u.density(z)?.to_string()]))
                .collect::<splitlab::Result<_>>()?;
            ("resolvent", vec!["z", "density"], rows, None)
        }
        KernelName::JumpLaw => {
            let x = at("x")?;
            let lm = ladder_measures(&model, None)?;
            let pi = if model.is_pre_limit() {
                Some(estimate_pi(&model, x, g.tau - x, 200, kc.pi_samples, &run.stream.child("pi"))?)
            } else {
                None
            };
            let jl = jump_law_first_mutation(&model, &lm, pi.as_ref(), x, g.tau)?;
            let rows = xs
                .iter()
                .map(|&z| {
                    let i = ((z / jl.step).round() as usize).min(jl.mutation.len().saturating_sub(1));
                    let d = jl.death.get(i).copied().unwrap_or(0.0);
                    vec![z.to_string(), jl.mutation[i].to_string(), d.to_string()]
                })
                .collect();
            println!(
                "jump law: mutation mass {:.4}, death mass {:.4}, total {:.4} ± {:.4}",
                jl.mutation_mass,
                jl.death_mass,
                jl.total_mass(),
                jl.total_mass_se
            );
            ("jump_law", vec!["u", "nu_mutation", "nu_death"], rows, None)
        }
    };
    if run.csv() {
        run.out.write_csv(&format!("{name}.csv"), &seed, &header, &rows)?;
    }
    if let (Some(k), true) = (atoms, run.json()) {
        run.out.write_json(&format!("{name}_atoms.json"), TABLE_SCHEMA, &seed, &k.atoms)?;
    }
    println!("{name}: {} grid points", rows.len());
    Ok(())
}

/// Returns whether every report passed.
fn verify(c: &Common) -> anyhow::Result<bool> {
    let run = setup(c, "verify")?;
    let vc = run.cfg.verify.clone().ok_or_else(|| Error::Config("missing [verify] section".into()))?;
    let reports: Vec<TestReport> = match vc.suite {
        Suite::Calibration => vec![acceptance::scale_function_oracle()?, acceptance::mu_k_oracle()?],
        Suite::NuInit => {
            let g = &run.cfg.genealogy;
            let (model, _) = run.cfg.prelimit_model(run.cfg.first_n()?)?;
            let r = splitlab::verify::multi_seed("nu_init_cross_check", &vc.seeds, vc.required, |s| {
                cross_check_nu_init(&model, g.eps, g.tau, vc.samples, 50, vc.tv_threshold, &run.stream.child(s))
            })?;
            vec![r]
        }
        Suite::Acceptance => acceptance::run_all().into_iter().map(|(_, r)| r).collect::<splitlab::Result<_>>()?,
    };
    let bundle = ReportBundle::new(reports);
    for r in &bundle.reports {
        println!("{}", r.line());
    }
    bundle.write_json(&run.out.path("report.json"))?;
    Ok(bundle.all_pass())
}

fn exit_code(e: &anyhow::Error) -> u8 {
    match e.downcast_ref::<Error>() {
        Some(Error::Config(_)) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match &cli.command {
        Command::ScaleFn(c) => scale_fn(c),
        Command::Simulate(c) => simulate(c),
        Command::Limit(c) => limit(c),
        Command::Kernels(c) => kernels(c),
        Command::Verify(c) => verify(c).and_then(|ok| if ok { Ok(()) } else { Err(anyhow!("verification failed")) }),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
