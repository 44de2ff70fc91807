use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn workdir(name: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("splitlab-cli-{name}-{}", std::process::id()));
    let _ = fs::remove_dir_all(&d);
    fs::create_dir_all(&d).unwrap();
    d
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_splitlab")).args(args).output().unwrap()
}

fn config(dir: &Path, body: &str) -> String {
    let p = dir.join("config.toml");
    fs::write(&p, body).unwrap();
    p.to_string_lossy().into_owned()
}

/// Data rows of a CSV written by the tool (seed comment and header skipped).
fn rows(p: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(p)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(String::from).collect())
        .collect()
}

const BROWNIAN: &str = r#"
[model]
family = "brownian"
b = 1.0
[model.marks]
regime = "B1"
beta = 0.0

[genealogy]
tau = 1.0
eps = 0.1

[rng]
seed = 5

[scale_fn]
start = 0.0
end = 5.0
points = 11

[limit]
draws = 4000
m_max = 2
"#;

#[test]
fn scale_fn_brownian_is_two_x_and_empty_grid_gives_header() {
    let d = workdir("scale");
    let cfg = config(&d, BROWNIAN);
    let out = d.join("out");
    let o = run(&["scale-fn", "-c", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = rows(&out.join("scale_fn.csv"));
    assert_eq!(r.len(), 11);
    for row in &r {
        let (x, w): (f64, f64) = (row[0].parse().unwrap(), row[1].parse().unwrap());
        assert!((w - 2.0 * x).abs() < 1e-12);
    }
    assert!(out.join("config.resolved.toml").exists());

    let cfg = config(&d, &BROWNIAN.replace("points = 11", "points = 0"));
    let o = run(&["scale-fn", "-c", &cfg, "--out", out.to_str().unwrap(), "--overwrite"]);
    assert!(o.status.success());
    let text = fs::read_to_string(out.join("scale_fn.csv")).unwrap();
    assert_eq!(text.lines().filter(|l| !l.starts_with('#')).collect::<Vec<_>>(), vec!["x,W,method"]);
    fs::remove_dir_all(&d).unwrap();
}

#[test]
fn limit_without_marks_has_no_mutations_and_pi_rows_sum_to_p_eps() {
    let d = workdir("limit");
    let cfg = config(&d, BROWNIAN);
    let out = d.join("out");
    let o = run(&["limit", "-c", &cfg, "--out", out.to_str().unwrap(), "--threads", "2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let atoms = rows(&out.join("limit_cpp.csv"));
    assert!(atoms.iter().all(|r| r[3] == "0"));
    // mean count p_ε = 4.5 within 4 SE over 4000 unit windows
    let draws = 4000.0;
    let mean = atoms.len() as f64 / draws;
    assert!((mean - 4.5).abs() < 4.0 * (4.5f64 / draws).sqrt(), "{mean}");
    let pi: f64 = rows(&out.join("pi_table.csv")).iter().map(|r| r[1].parse::<f64>().unwrap()).sum();
    assert!((pi - 4.5).abs() < 1e-9, "{pi}");
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("limit_cpp.json")).unwrap()).unwrap();
    assert_eq!(v["schema"], "splitlab.cpp/1");
    assert_eq!(v["seed"], "5/limit");
    fs::remove_dir_all(&d).unwrap();
}

const EXPONENTIAL: &str = r#"
[model]
family = "critical_exponential"
[model.marks]
regime = "B1"
beta = 1.0

[rescaling]
n = 20

[genealogy]
tau = 1.0
eps = 0.1
i_n = 6
replicas = 3

[rng]
seed = 11

[verify]
suite = "calibration"
"#;

#[test]
fn simulate_is_reproducible_and_refuses_overwrite() {
    let d = workdir("sim");
    let cfg = config(&d, EXPONENTIAL);
    let (a, b) = (d.join("a"), d.join("b"));
    assert!(run(&["simulate", "-c", &cfg, "--out", a.to_str().unwrap()]).status.success());
    assert!(run(&["simulate", "-c", &cfg, "--out", b.to_str().unwrap()]).status.success());
    for f in ["cpp_n20.csv", "cpp_n20.json", "summary.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    assert_eq!(rows(&a.join("cpp_n20.csv")).len(), 15);
    let o = run(&["simulate", "-c", &cfg, "--out", a.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["simulate", "-c", &cfg, "--out", a.to_str().unwrap(), "--overwrite", "--seed", "12"]);
    assert!(o.status.success());
    assert_ne!(fs::read(a.join("cpp_n20.csv")).unwrap(), fs::read(b.join("cpp_n20.csv")).unwrap());

    let cfg = config(&d, &EXPONENTIAL.replace("i_n = 6", "i_n = 1"));
    let c = d.join("c");
    assert!(run(&["simulate", "-c", &cfg, "--out", c.to_str().unwrap()]).status.success());
    assert!(rows(&c.join("cpp_n20.csv")).is_empty());
    fs::remove_dir_all(&d).unwrap();
}

#[test]
fn verify_calibration_passes_and_bad_configs_exit_two() {
    let d = workdir("verify");
    let cfg = config(&d, EXPONENTIAL);
    let out = d.join("out");
    let o = run(&["verify", "-c", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(v["schema"], "splitlab.report/1");
    assert!(v["reports"].as_array().unwrap().iter().all(|r| r["pass"] == true));

    let cfg = config(&d, &EXPONENTIAL.replace("eps = 0.1", "eps = 0.0"));
    assert_eq!(run(&["simulate", "-c", &cfg, "--out", d.join("e").to_str().unwrap()]).status.code(), Some(2));
    let cfg = config(&d, "model = [");
    assert_eq!(run(&["verify", "-c", &cfg]).status.code(), Some(2));
    assert_eq!(run(&["verify"]).status.code(), Some(2));
    fs::remove_dir_all(&d).unwrap();
}
