//! The `fehmm` binary end to end: exit codes, output files, determinism and
//! the tensor cache.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const LAMINATE: &str = r#"
[scenario]
name = "laminate"

[coefficients.material]
model = "isotropic"
m = { kind = "piecewise", axis = 0, values = [2.0, 4.0], fractions = [0.5, 0.5] }
r = { kind = "piecewise", axis = 0, values = [1.0, 0.5], fractions = [0.5, 0.5] }

[micro]
cells = [4, 4, 4]

[macro]
cells = [2, 2, 2]

[time]
t_final = 0.5
tau = 0.05

[data]
initial = "smooth"
source = "pulse"
"#;

const CONSTANT: &str = r#"
[scenario]
name = "constant"

[coefficients.material]
model = "isotropic"
m = { kind = "constant", value = 2.0 }
r = { kind = "constant", value = 0.5 }

[micro]
cells = [3, 3, 3]

[macro]
cells = [2, 2, 2]

[time]
t_final = 0.2
tau = 0.05
"#;

struct Fixture {
    dir: TempDir,
}

impl Fixture {
    fn new() -> Self {
        Fixture {
            dir: tempfile::tempdir().unwrap(),
        }
    }

    /// Writes a scenario whose cache lives inside the fixture.
    fn scenario(&self, name: &str, body: &str) -> PathBuf {
        let cache = self.dir.path().join("cache");
        let text = format!("{body}\n[output]\ncache_dir = {:?}\n", cache.to_str().unwrap());
        let p = self.dir.path().join(format!("{name}.toml"));
        std::fs::write(&p, text).unwrap();
        p
    }

    fn out(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }
}

fn fehmm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fehmm")).args(args).output().unwrap()
}

fn run(cmd: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![cmd, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    fehmm(&args)
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn read(p: impl AsRef<Path>) -> String {
    std::fs::read_to_string(p).unwrap()
}

/// Rows of a CSV file as maps from header to field.
fn rows(p: impl AsRef<Path>) -> Vec<std::collections::HashMap<String, String>> {
    let mut r = csv::Reader::from_path(p).unwrap();
    let header = r.headers().unwrap().clone();
    r.records()
        .map(|rec| header.iter().map(String::from).zip(rec.unwrap().iter().map(String::from)).collect())
        .collect()
}

#[test]
fn constant_micro_reproduces_the_medium() {
    let f = Fixture::new();
    let cfg = f.scenario("constant", CONSTANT);
    let o = run("micro", &cfg, &f.out("m"), &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for row in rows(f.out("m/tensors.csv")) {
        let v: f64 = row["value"].parse().unwrap();
        let (i, j) = (row["i"].parse::<usize>().unwrap(), row["j"].parse::<usize>().unwrap());
        let expected = match (row["kind"].as_str(), i == j) {
            ("M", true) => 2.0,
            ("R", true) => 0.5,
            _ => 0.0,
        };
        assert!((v - expected).abs() <= 1e-12, "{row:?}");
    }
    assert!(rows(f.out("m/checks.csv")).iter().all(|r| r["pass"] == "true"));
    let manifest: serde_json::Value = serde_json::from_str(&read(f.out("m/manifest.json"))).unwrap();
    assert_eq!(manifest["command"], "micro");
    assert!(manifest["files"].as_array().unwrap().len() >= 3);
}

#[test]
fn config_errors_exit_with_2() {
    let f = Fixture::new();
    let cfg = f.scenario("bad", &LAMINATE.replace("tau = 0.05", "tau = 0.03"));
    let o = run("run", &cfg, &f.out("r"), &[]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("time.tau"));

    let cfg = f.scenario("unknown", &LAMINATE.replace("[micro]", "[micro]\nspacing = 3"));
    assert_eq!(code(&run("micro", &cfg, &f.out("m"), &[])), 2);

    let missing = f.out("missing.toml");
    assert_eq!(code(&run("run", &missing, &f.out("r"), &[])), 2);

    let good = f.scenario("good", LAMINATE);
    let o = run("converge", &good, &f.out("c"), &["micro-M", "--levels", "4,8"]);
    assert_eq!(code(&o), 2);
    // unknown subcommand arguments are usage errors
    assert_eq!(code(&fehmm(&["converge", "micro-Q", "--levels", "4,8,16", "--config", "x"])), 2);
}

#[test]
fn zero_data_gives_a_zero_trajectory() {
    let f = Fixture::new();
    let cfg = f.scenario("zero", &LAMINATE.replace("initial = \"smooth\"\nsource = \"pulse\"", "initial = \"zero\"\nsource = \"none\""));
    let o = run("run", &cfg, &f.out("r"), &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let traj = rows(f.out("r/trajectory.csv"));
    assert_eq!(traj.len(), 11);
    for r in &traj {
        assert_eq!(r["norm_mh"].parse::<f64>().unwrap(), 0.0);
        assert_eq!(r["within_bound"], "true");
    }
}

#[test]
fn run_respects_the_stability_bound_and_writes_fields() {
    let f = Fixture::new();
    let body = LAMINATE.to_string() + "\n";
    let cfg = f.scenario("lam", &body);
    // output flags appended to the generated [output] section
    std::fs::write(&cfg, read(&cfg) + "vtk = true\nmatrices = true\nkeep_every = 5\n").unwrap();
    let o = run("run", &cfg, &f.out("r"), &["--jobs", "1"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for r in rows(f.out("r/trajectory.csv")) {
        assert!(r["norm_mh"].parse::<f64>().unwrap() <= r["bound"].parse::<f64>().unwrap() * (1.0 + 1e-12));
    }
    assert_eq!(rows(f.out("r/stability.csv")).len(), 11);
    assert!(f.out("r/field_00010.vtk").exists());
    assert!(read(f.out("r/lhs.mtx")).starts_with("%%MatrixMarket"));
}

#[test]
fn outputs_are_deterministic() {
    let f = Fixture::new();
    let cfg = f.scenario("lam", LAMINATE);
    for out in ["a", "b"] {
        assert_eq!(code(&run("run", &cfg, &f.out(out), &["--no-cache"])), 0);
        assert_eq!(code(&run("micro", &cfg, &f.out(&format!("{out}m")), &["--no-cache"])), 0);
        assert_eq!(code(&run("verify", &cfg, &f.out(&format!("{out}v")), &["--seed", "7"])), 0);
    }
    for file in ["trajectory.csv", "stability.csv"] {
        assert_eq!(read(f.out("a").join(file)), read(f.out("b").join(file)), "{file}");
    }
    for file in ["tensors.csv", "correctors.csv", "checks.csv"] {
        assert_eq!(read(f.out("am").join(file)), read(f.out("bm").join(file)), "{file}");
    }
    assert_eq!(read(f.out("av/verify.csv")), read(f.out("bv/verify.csv")));
}

#[test]
fn warm_cache_matches_cold_run() {
    let f = Fixture::new();
    let cfg = f.scenario("lam", LAMINATE);
    let cold = run("run", &cfg, &f.out("cold"), &[]);
    assert_eq!(code(&cold), 0);
    assert!(!String::from_utf8_lossy(&cold.stdout).contains("cached"));
    let warm = run("run", &cfg, &f.out("warm"), &[]);
    assert!(String::from_utf8_lossy(&warm.stdout).contains("cached"));
    assert_eq!(read(f.out("cold/trajectory.csv")), read(f.out("warm/trajectory.csv")));
    assert_eq!(read(f.out("cold/stability.csv")), read(f.out("warm/stability.csv")));

    let cache = f.dir.path().join("cache");
    let ls = fehmm(&["cache", "ls", "--dir", cache.to_str().unwrap()]);
    assert_eq!(code(&ls), 0);
    assert_eq!(String::from_utf8_lossy(&ls.stdout).lines().count(), 1);
    let clear = fehmm(&["cache", "clear", "--config", cfg.to_str().unwrap()]);
    assert!(String::from_utf8_lossy(&clear.stdout).contains("removed 1"));
    let ls = fehmm(&["cache", "ls", "--dir", cache.to_str().unwrap()]);
    assert_eq!(String::from_utf8_lossy(&ls.stdout).lines().count(), 0);
}

#[test]
fn verify_flags_an_indefinite_mass() {
    let f = Fixture::new();
    let mut m = vec!["0.0"; 36];
    for i in 0..6 {
        m[i * 6 + i] = if i == 2 { "-1.0" } else { "1.0" };
    }
    let body = CONSTANT.replace(
        "model = \"isotropic\"\nm = { kind = \"constant\", value = 2.0 }\nr = { kind = \"constant\", value = 0.5 }",
        &format!("model = \"matrix\"\nn = 6\nm = [{}]\nr = [{}]", m.join(", "), vec!["0.0"; 36].join(", ")),
    );
    let cfg = f.scenario("indefinite", &body);
    let o = run("verify", &cfg, &f.out("v"), &[]);
    assert_eq!(code(&o), 4);
    let checks = rows(f.out("v/verify.csv"));
    let pd = checks.iter().find(|r| r["check"] == "m_positive_definite").unwrap();
    assert_eq!(pd["pass"], "false");
    let json: serde_json::Value = serde_json::from_str(&read(f.out("v/verify.json"))).unwrap();
    assert!(json["checks"].as_array().unwrap().iter().any(|c| c["pass"] == false));

    let cfg = f.scenario("constant", CONSTANT);
    let o = run("verify", &cfg, &f.out("ok"), &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let checks = rows(f.out("ok/verify.csv"));
    assert!(checks.iter().any(|r| r["check"] == "sobolev_contraction"));
    assert!(checks.iter().all(|r| r["pass"] == "true"));
}

#[test]
fn converge_reports_rates() {
    let f = Fixture::new();
    let cfg = f.scenario("lam", LAMINATE);
    // layers on the micro grid are resolved exactly
    let o = run("converge", &cfg, &f.out("c"), &["micro-M", "--levels", "4,8,16"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let fits = rows(f.out("c/fits_micro-M.csv"));
    assert_eq!(fits.len(), 1);
    assert_eq!(fits[0]["status"], "exact");
    assert_eq!(rows(f.out("c/rates_micro-M.csv")).len(), 3);

    let smooth = LAMINATE
        .replace(
            "m = { kind = \"piecewise\", axis = 0, values = [2.0, 4.0], fractions = [0.5, 0.5] }",
            "m = { kind = \"sinusoid\", axis = 0, mean = 3.0, amplitude = 1.0 }",
        )
        .replace("t_final = 0.5", "t_final = 1.0");
    let cfg = f.scenario("smooth", &smooth);
    let o = run("converge", &cfg, &f.out("g"), &["micro-G", "--levels", "4,8,16"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let fits = rows(f.out("g/fits_micro-G.csv"));
    assert_eq!(fits.len(), 3);
    for r in fits {
        assert_eq!(r["status"], "pass");
        assert!(r["slope"].parse::<f64>().unwrap() >= 0.75);
    }
}
