//! Command implementations behind the CLI: micro → tensors → macro, with the
//! tensor cache in between, plus convergence and invariant drivers.

use std::path::{Path, PathBuf};

use log::{info, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::cache::{hex, TensorCache};
use crate::config::{ScenarioConfig, ScenarioKind};
use crate::effective::EffectiveTensorTable;
use crate::error::{Error, Result};
use crate::io::{fmt, write_csv, write_vtk, RunManifest};
use crate::macro_fem::forms::assemble_curl;
use crate::macro_fem::NedelecSpace;
use crate::materials::BoundSampler;
use crate::mesh::build_macro_mesh;
use crate::micro::forms::assemble_micro_forms;
use crate::micro::{PeriodicLagrangeSpace, SobolevStepper};
use crate::oracles::Manufactured;
use crate::quadrature::{GaussLegendre, TensorRule};
use crate::sparse::dot;
use crate::studies::{macro_study, micro_tensor_study, sobolev_study, Study, StudyReport};
use crate::timeloop::{MacroProblem, StabilityReport, Trajectory};

/// Macro space and tensor table of a scenario.
pub struct Prepared {
    pub space: NedelecSpace,
    pub table: EffectiveTensorTable,
    pub from_cache: bool,
}

pub fn macro_space(cfg: &ScenarioConfig) -> Result<NedelecSpace> {
    let mesh = build_macro_mesh(cfg.macro_.cells, cfg.macro_.origin, cfg.macro_.extent)?;
    NedelecSpace::new(mesh, cfg.macro_.order, cfg.n() / 3)
}

pub fn micro_space(cfg: &ScenarioConfig) -> Result<PeriodicLagrangeSpace> {
    PeriodicLagrangeSpace::new(cfg.micro.cells, cfg.micro.order, cfg.n() / 3)
}

/// Builds or loads the tensor table. A cached table is used only if its hash
/// and point count match.
pub fn prepare(cfg: &ScenarioConfig, cache: Option<&TensorCache>) -> Result<Prepared> {
    let space = macro_space(cfg)?;
    let hash = cfg.table_hash();
    let steps = cfg.steps();
    if cfg.scenario.kind == ScenarioKind::Manufactured {
        let mut table = Manufactured::standard().table(space.n_points(), cfg.time.tau, steps);
        table.hash = hash;
        return Ok(Prepared {
            space,
            table,
            from_cache: false,
        });
    }
    if let Some(table) = cache.and_then(|c| c.get(&hash)) {
        if table.n_points() == space.n_points() && table.n == cfg.n() {
            info!("tensor table {} loaded from cache", hex(&hash));
            return Ok(Prepared {
                space,
                table,
                from_cache: true,
            });
        }
        warn!("cached tensor table {} does not fit the macro mesh, recomputing", hex(&hash));
    }
    let coeffs = cfg.coefficients.as_ref().expect("validated hmm scenario has coefficients");
    let micro = micro_space(cfg)?;
    let table = EffectiveTensorTable::compute(
        coeffs,
        &space.points(),
        &micro,
        cfg.time.tau,
        steps,
        cfg.cell_options(),
        hash,
    )?;
    if let Some(c) = cache {
        c.put(&table)?;
    }
    Ok(Prepared {
        space,
        table,
        from_cache: false,
    })
}

fn out_dir(cfg: &ScenarioConfig, out: Option<&Path>) -> Result<PathBuf> {
    let dir = out.map(Path::to_path_buf).unwrap_or_else(|| cfg.output.dir.clone());
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn bool_str(b: bool) -> String {
    b.to_string()
}

pub struct MicroOutcome {
    pub table: EffectiveTensorTable,
    pub violations: Vec<String>,
    pub files: Vec<PathBuf>,
}

/// Solves the cell problems, caches the table and writes `tensors.csv`,
/// `correctors.csv` and `checks.csv`.
pub fn cmd_micro(cfg: &ScenarioConfig, out: Option<&Path>, cache: Option<&TensorCache>) -> Result<MicroOutcome> {
    let dir = out_dir(cfg, out)?;
    let mut manifest = RunManifest::new("micro", hex(&cfg.config_hash()));
    let prepared = manifest.time("cell problems", || prepare(cfg, cache))?;
    let table = prepared.table;
    manifest.table_hash = Some(hex(&table.hash));

    let tensors = dir.join("tensors.csv");
    manifest.time("write", || table.write_csv(&tensors))?;
    manifest.add_file(&tensors);

    let correctors = dir.join("correctors.csv");
    let mut rows = Vec::new();
    for (p, e) in table.entries.iter().enumerate() {
        let b = e.tensor_bounds();
        for j in 0..e.norms.m.len() {
            rows.push(vec![
                p.to_string(),
                j.to_string(),
                fmt(e.norms.m[j]),
                fmt(b.w_m),
                fmt(e.norms.g0[j]),
                fmt(b.w_g0),
                fmt(e.norms.n0[j]),
                fmt(b.w_n0),
            ]);
        }
    }
    write_csv(
        &correctors,
        &["entry", "j", "norm_m", "bound_m", "norm_g0", "bound_g0", "norm_n0", "bound_n0"],
        rows,
    )?;
    manifest.add_file(&correctors);

    let checks_path = dir.join("checks.csv");
    let mut violations = Vec::new();
    let mut rows = Vec::new();
    for (p, c) in table.checks().iter().enumerate() {
        for v in c.violations() {
            violations.push(format!("entry {p}: {v}"));
        }
        let items = [
            ("min_eig_m_minus_alpha", c.min_eig_m - c.alpha, -1e-9, c.min_eig_m >= c.alpha - 1e-9),
            ("r_ratio", c.r_ratio, 1.0, c.r_ratio <= 1.0 + 1e-9),
            ("g_ratio", c.g_ratio, 1.0, c.g_ratio <= 1.0 + 1e-9),
            ("j_ratio", c.j_ratio, 1.0, c.j_ratio <= 1.0 + 1e-9),
            ("w_m_ratio", c.w_m_ratio, 1.0, c.w_m_ratio <= 1.0 + 1e-9),
            ("w_g0_ratio", c.w_g0_ratio, 1.0, c.w_g0_ratio <= 1.0 + 1e-9),
            ("w_n0_ratio", c.w_n0_ratio, 1.0, c.w_n0_ratio <= 1.0 + 1e-9),
            ("n_plus_m", c.n_plus_m, 1e-10, c.n_plus_m <= 1e-10),
            ("j0_routes", c.j0_routes, 1e-10, c.j0_routes <= 1e-10),
        ];
        for (name, value, limit, pass) in items {
            rows.push(vec![p.to_string(), name.into(), fmt(value), fmt(limit), bool_str(pass)]);
        }
    }
    write_csv(&checks_path, &["entry", "check", "value", "limit", "pass"], rows)?;
    manifest.add_file(&checks_path);
    if !violations.is_empty() {
        manifest.status = "invariant violation".into();
    }
    manifest.write(&dir)?;
    let files = manifest.files.clone();
    if let Some(v) = violations.first() {
        return Err(Error::invariant(v.clone()));
    }
    Ok(MicroOutcome {
        table,
        violations,
        files,
    })
}

pub struct RunOutcome {
    pub trajectory: Trajectory,
    pub report: StabilityReport,
    pub from_cache: bool,
    pub files: Vec<PathBuf>,
}

/// Integrates the macro system and writes `trajectory.csv` and
/// `stability.csv`. A violated stability bound is reported after the files
/// are written.
pub fn cmd_run(cfg: &ScenarioConfig, out: Option<&Path>, cache: Option<&TensorCache>) -> Result<RunOutcome> {
    let dir = out_dir(cfg, out)?;
    let mut manifest = RunManifest::new("run", hex(&cfg.config_hash()));
    let prepared = manifest.time("tensors", || prepare(cfg, cache))?;
    let (space, table) = (&prepared.space, &prepared.table);
    manifest.table_hash = Some(hex(&table.hash));
    let u0 = space.interpolate(|x| cfg.initial(x));
    let mut problem = manifest.time("assembly", || MacroProblem::new(space, table, cfg.time.tau, &u0, cfg.source()))?;
    problem.solver_rtol = cfg.solver.macro_rtol;
    let (traj, report) = manifest.time("time loop", || problem.run(&u0, cfg.steps(), cfg.output.keep_every))?;

    let path = dir.join("trajectory.csv");
    write_csv(
        &path,
        &["step", "t", "norm_mh", "norm_l2", "bound", "energy_rel_drift", "within_bound"],
        traj.records.iter().map(|r| {
            vec![
                r.step.to_string(),
                fmt(r.t),
                fmt(r.norm_mh),
                fmt(r.norm_l2),
                fmt(r.bound),
                fmt(r.energy_rel_drift),
                bool_str(r.within_bound),
            ]
        }),
    )?;
    manifest.add_file(&path);
    let path = dir.join("stability.csv");
    write_csv(
        &path,
        &["step", "t", "g_sup", "c_g", "j_l1", "bound"],
        (0..report.bound.len()).map(|m| {
            vec![
                m.to_string(),
                fmt(m as f64 * cfg.time.tau),
                fmt(report.g_sup[m]),
                fmt(report.c_g[m]),
                fmt(report.j_l1[m]),
                fmt(report.bound[m]),
            ]
        }),
    )?;
    manifest.add_file(&path);
    if cfg.output.vtk {
        let mut states: Vec<(usize, &[f64])> = traj.snapshots.iter().map(|(m, u)| (*m, u.as_slice())).collect();
        if states.is_empty() {
            states.push((cfg.steps(), &traj.final_state));
        }
        for (m, u) in states {
            let p = dir.join(format!("field_{m:05}.vtk"));
            write_vtk(&p, space, u, &format!("{} step {m}", cfg.scenario.name))?;
            manifest.add_file(p);
        }
    }
    if cfg.output.matrices {
        for (name, mat) in [
            ("mass.mtx", &problem.forms.mass),
            ("damping.mtx", &problem.forms.damping),
            ("curl.mtx", &problem.forms.curl),
            ("lhs.mtx", problem.lhs()),
        ] {
            let p = dir.join(name);
            mat.write_matrix_market(std::io::BufWriter::new(std::fs::File::create(&p)?))?;
            manifest.add_file(p);
        }
    }
    let ok = traj.all_within_bound();
    if !ok {
        manifest.status = "stability bound exceeded".into();
    }
    manifest.write(&dir)?;
    if !ok {
        let bad = traj.records.iter().find(|r| !r.within_bound).expect("a record is out of bound");
        return Err(Error::invariant(format!(
            "||u|| = {:e} exceeds the stability bound {:e} at t = {}",
            bad.norm_mh, bad.bound, bad.t
        )));
    }
    Ok(RunOutcome {
        trajectory: traj,
        report,
        from_cache: prepared.from_cache,
        files: manifest.files.clone(),
    })
}

/// Runs one convergence study. Micro studies use the scenario coefficients
/// and time step; `sobolev` compares at `t_final / 10` and `t_final`;
/// `micro-G`/`micro-J` at `t_final / 4`, `t_final / 2`, `t_final`; `macro`
/// uses the manufactured solution.
pub fn converge_study(cfg: &ScenarioConfig, study: Study, levels: &[usize]) -> Result<StudyReport> {
    let (tau, tf) = (cfg.time.tau, cfg.time.t_final);
    let coeffs = || {
        cfg.coefficients
            .as_ref()
            .ok_or_else(|| Error::config("coefficients: required for micro studies"))
    };
    match study {
        Study::MicroM | Study::MicroR => micro_tensor_study(coeffs()?, study, levels, cfg.micro.order, tau, &[]),
        Study::MicroG | Study::MicroJ => micro_tensor_study(
            coeffs()?,
            study,
            levels,
            cfg.micro.order,
            tau,
            &[0.25 * tf, 0.5 * tf, tf],
        ),
        Study::Sobolev => sobolev_study(coeffs()?, levels, tau, &[0.1 * tf, tf], 256),
        Study::Macro => macro_study(levels, tau, tf),
    }
}

/// [`converge_study`] plus `rates_<study>.csv` and `fits_<study>.csv`. A slope
/// below theory is an invariant violation; errors at roundoff are "exact".
pub fn cmd_converge(cfg: &ScenarioConfig, study: Study, levels: &[usize], out: Option<&Path>) -> Result<StudyReport> {
    let dir = out_dir(cfg, out)?;
    let mut manifest = RunManifest::new(&format!("converge {study}"), hex(&cfg.config_hash()));
    let report = manifest.time("study", || converge_study(cfg, study, levels))?;
    let rates = dir.join(format!("rates_{study}.csv"));
    write_csv(
        &rates,
        &["study", "level", "cells", "h", "t", "error"],
        report.rows.iter().map(|r| {
            vec![
                study.to_string(),
                r.level.to_string(),
                r.cells.to_string(),
                fmt(r.h),
                fmt(r.t),
                fmt(r.error),
            ]
        }),
    )?;
    manifest.add_file(&rates);
    let fits = dir.join(format!("fits_{study}.csv"));
    write_csv(
        &fits,
        &["study", "t", "slope", "intercept", "residual", "theory", "status"],
        report.fits.iter().map(|f| {
            let (s, i, r) = f
                .fit
                .as_ref()
                .map_or((String::new(), String::new(), String::new()), |x| {
                    (fmt(x.slope), fmt(x.intercept), fmt(x.residual))
                });
            vec![study.to_string(), fmt(f.t), s, i, r, fmt(f.theory), f.status.as_str().into()]
        }),
    )?;
    manifest.add_file(&fits);
    if !report.passed() {
        manifest.status = "rate below theory".into();
    }
    manifest.write(&dir)?;
    if !report.passed() {
        return Err(Error::invariant(format!(
            "{study}: observed slope {:.3} below theoretical {} - {}",
            report.min_slope().unwrap_or(f64::NAN),
            study.theory(cfg.micro.order),
            crate::studies::RATE_SLACK
        )));
    }
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub value: f64,
    pub limit: f64,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub scenario: String,
    pub checks: Vec<CheckResult>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }
}

fn check(name: &str, value: f64, limit: f64, pass: bool, detail: impl Into<String>) -> CheckResult {
    CheckResult {
        name: name.into(),
        value,
        limit,
        pass,
        detail: detail.into(),
    }
}

/// Number of Sobolev steps in the contraction check.
pub const CONTRACTION_STEPS: usize = 200;

/// Runs the invariant suite without stopping at the first failure.
pub fn verify_suite(cfg: &ScenarioConfig, seed: u64) -> Result<VerifyReport> {
    let mut checks = Vec::new();

    // quadrature: the 2-point rule is exact for cubics, the 3D rule for
    // tensor cubics
    let g = GaussLegendre::new(2);
    let e1: f64 = g.points.iter().zip(&g.weights).map(|(x, w)| w * x.powi(3)).sum::<f64>() - 0.25;
    let r = TensorRule::gauss(2);
    let e3: f64 = r
        .points
        .iter()
        .zip(&r.weights)
        .map(|(p, w)| w * p[0].powi(3) * p[1] * p[2].powi(2))
        .sum::<f64>()
        - 0.25 * 0.5 / 3.0;
    let qerr = e1.abs().max(e3.abs());
    checks.push(check("quadrature_exactness", qerr, 1e-14, qerr <= 1e-14, "Gauss rules on cubic monomials"));

    // skew-symmetry of the Maxwell operator, structurally and on random vectors
    let space = macro_space(cfg)?;
    let a = assemble_curl(&space);
    let defect = a.skew_defect() / a.max_abs().max(1.0);
    checks.push(check("maxwell_skew_defect", defect, 1e-12, defect <= 1e-12, "|A + A^T| / |A|"));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let u: Vec<f64> = (0..space.n_free()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let au = a.matvec(&u);
        worst = worst.max(dot(&u, &au).abs() / (dot(&u, &u) * a.max_abs().max(1.0)));
    }
    checks.push(check("maxwell_skew_random", worst, 1e-12, worst <= 1e-12, format!("10 vectors, seed {seed}")));

    if cfg.scenario.kind == ScenarioKind::Manufactured {
        let t = Manufactured::standard().table(1, cfg.time.tau, 0);
        tensor_checks(&t, &mut checks);
        return Ok(VerifyReport {
            scenario: cfg.scenario.name.clone(),
            checks,
        });
    }

    // coefficient ellipticity, sampled at the micro quadrature points
    let coeffs = cfg.coefficients.as_ref().expect("validated hmm scenario has coefficients");
    let micro = micro_space(cfg)?;
    let n = coeffs.n();
    let mut sampler = BoundSampler::new(n);
    let (mut m, mut rr) = (vec![0.0; n * n], vec![0.0; n * n]);
    let x0 = space.point(0);
    crate::micro::forms::for_each_point(&micro, |_, _, _, _, y| {
        coeffs.eval(x0, y, &mut m, &mut rr);
        sampler.sample(&m, &rr);
    });
    let alpha = sampler.bounds.alpha;
    checks.push(check("m_positive_definite", alpha, 0.0, alpha > 0.0, "smallest eigenvalue of M(y)"));
    if alpha <= 0.0 {
        return Ok(VerifyReport {
            scenario: cfg.scenario.name.clone(),
            checks,
        });
    }

    // Sobolev contraction over CONTRACTION_STEPS steps for every j
    let forms = assemble_micro_forms(&micro, coeffs, x0)?;
    let opts = cfg.cell_options();
    let sol = crate::micro::solve_cell(&micro, coeffs, x0, cfg.time.tau, 0, opts)?;
    let stepper = SobolevStepper::new(&micro, &forms, cfg.time.tau, opts);
    let mut growth = f64::NEG_INFINITY;
    let mut failure = String::new();
    for (j, w0) in sol.w_g0.iter().chain(&sol.w_n0).enumerate() {
        match stepper.evolve(w0, CONTRACTION_STEPS, |_, _| {}) {
            Ok(norms) => {
                for w in norms.windows(2) {
                    if w[0] > 0.0 {
                        growth = growth.max(w[1] / w[0] - 1.0);
                    }
                }
            }
            Err(Error::Invariant(msg)) => {
                failure = format!("corrector {j}: {msg}");
                growth = f64::INFINITY;
                break;
            }
            Err(e) => return Err(e),
        }
    }
    let slack = cfg.solver.contraction_slack;
    checks.push(check(
        "sobolev_contraction",
        // no nonzero corrector: nothing to contract
        if growth == f64::NEG_INFINITY { 0.0 } else { growth },
        slack,
        growth <= slack,
        if failure.is_empty() {
            format!("{CONTRACTION_STEPS} Crank-Nicolson steps, largest relative change {growth:e}")
        } else {
            failure
        },
    ));

    // effective tensors and corrector bounds on the scenario table
    let prepared = prepare(cfg, None)?;
    tensor_checks(&prepared.table, &mut checks);
    Ok(VerifyReport {
        scenario: cfg.scenario.name.clone(),
        checks,
    })
}

fn tensor_checks(table: &EffectiveTensorTable, checks: &mut Vec<CheckResult>) {
    let all = table.checks();
    let worst = |f: &dyn Fn(&crate::effective::EntryCheck) -> f64| all.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
    let margin = worst(&|c| c.alpha - c.min_eig_m);
    checks.push(check("mh_min_eigenvalue", -margin, -1e-9, margin <= 1e-9, "lambda_min(M^H) - alpha"));
    type Field = fn(&crate::effective::EntryCheck) -> f64;
    let ratios: [(&str, Field); 6] = [
        ("r_bound_ratio", |c| c.r_ratio),
        ("g_bound_ratio", |c| c.g_ratio),
        ("j_bound_ratio", |c| c.j_ratio),
        ("w_m_bound_ratio", |c| c.w_m_ratio),
        ("w_g0_bound_ratio", |c| c.w_g0_ratio),
        ("w_n0_bound_ratio", |c| c.w_n0_ratio),
    ];
    for (name, f) in ratios {
        let v = worst(&f);
        checks.push(check(name, v, 1.0, v <= 1.0 + 1e-9, "largest |value| / bound"));
    }
    let v = worst(&|c| c.n_plus_m);
    checks.push(check("n_equals_minus_m", v, 1e-10, v <= 1e-10, "max |w^N(0) + w^M|"));
    let v = worst(&|c| c.j0_routes);
    checks.push(check("j0_routes_agree", v, 1e-10, v <= 1e-10, "corrector vs direct J^H(0)"));
}

/// Writes `verify.csv` and `verify.json`. Failed checks are part of the
/// report, not an error; see [`verify_failure`].
pub fn cmd_verify(cfg: &ScenarioConfig, seed: u64, out: Option<&Path>) -> Result<VerifyReport> {
    let dir = out_dir(cfg, out)?;
    let mut manifest = RunManifest::new("verify", hex(&cfg.config_hash()));
    let report = manifest.time("suite", || verify_suite(cfg, seed))?;
    let csv = dir.join("verify.csv");
    write_csv(
        &csv,
        &["check", "value", "limit", "pass"],
        report
            .checks
            .iter()
            .map(|c| vec![c.name.clone(), fmt(c.value), fmt(c.limit), bool_str(c.pass)]),
    )?;
    manifest.add_file(&csv);
    let json = dir.join("verify.json");
    std::fs::write(
        &json,
        serde_json::to_string_pretty(&report).map_err(|e| Error::Assembly(e.to_string()))?,
    )?;
    manifest.add_file(&json);
    if !report.passed() {
        manifest.status = "invariant violation".into();
    }
    manifest.write(&dir)?;
    Ok(report)
}

/// The first failed check as an invariant error.
pub fn verify_failure(report: &VerifyReport) -> Option<Error> {
    report
        .checks
        .iter()
        .find(|c| !c.pass)
        .map(|c| Error::invariant(format!("{}: {:e} (limit {:e}) {}", c.name, c.value, c.limit, c.detail)))
}
