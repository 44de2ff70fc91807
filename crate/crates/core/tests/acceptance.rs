//! Acceptance criteria, one PASS/FAIL line each followed by the per-seed
//! details. Runs without the libtest harness so the lines always show;
//! arguments filter criteria by name. Monte Carlo criteria run on five seeds
//! and need four passes. Exits nonzero if any criterion fails.

use splitlab::acceptance;
use splitlab::verify::TestReport;
use std::process::ExitCode;

type Criterion = fn() -> splitlab::Result<TestReport>;

const CRITERIA: [(&str, Criterion); 9] = [
    ("scale_function_oracle", acceptance::scale_function_oracle),
    ("population_count_law", acceptance::population_count_law),
    ("depth_law", acceptance::depth_law),
    ("mutation_law", acceptance::mutation_law),
    ("nu_init_cross_check", acceptance::nu_init_cross_check),
    ("mu_k_oracle", acceptance::mu_k_oracle),
    ("limit_sampler_consistency", acceptance::limit_sampler_consistency),
    ("convergence_trend", acceptance::convergence_trend),
    ("kernel_normalizations", acceptance::kernel_normalizations),
];

fn main() -> ExitCode {
    // cargo passes libtest flags (e.g. --nocapture); keep only name filters
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = Vec::new();
    let mut ran = 0;
    for (name, run) in CRITERIA {
        if !filters.is_empty() && !filters.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        ran += 1;
        match run() {
            Ok(r) => {
                println!("{}", r.line());
                for n in &r.notes {
                    println!("    {n}");
                }
                if !r.pass {
                    failed.push(name);
                }
            }
            Err(e) => {
                println!("[FAIL] {name} (error: {e})");
                failed.push(name);
            }
        }
    }
    println!("\nacceptance: {} of {ran} criteria passed", ran - failed.len());
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("failed: {}", failed.join(", "));
        ExitCode::FAILURE
    }
}
