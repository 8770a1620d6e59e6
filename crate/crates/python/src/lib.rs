//! Python bindings: scenarios, effective tensor tables, macroscopic runs,
//! the invariant suite and convergence studies.

use std::path::PathBuf;

use nalgebra::DMatrix;
use pyo3::create_exception;
use pyo3::exceptions::{PyIndexError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use fehmm_core::cache::{hex, TensorCache};
use fehmm_core::config::ScenarioConfig;
use fehmm_core::effective::EffectiveTensorTable;
use fehmm_core::harness;
use fehmm_core::materials::Profile;
use fehmm_core::oracles::laminate_effective as laminate_oracle;
use fehmm_core::studies::Study;
use fehmm_core::timeloop::MacroProblem;
use fehmm_core::Error;

create_exception!(fehmm_py, ConfigError, PyValueError);
create_exception!(fehmm_py, NumericalError, PyRuntimeError);
create_exception!(fehmm_py, InvariantError, PyRuntimeError);

fn to_py(e: Error) -> PyErr {
    let msg = e.to_string();
    match e.exit_code() {
        3 => NumericalError::new_err(msg),
        4 => InvariantError::new_err(msg),
        _ => ConfigError::new_err(msg),
    }
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

/// A validated scenario configuration.
#[pyclass(module = "fehmm_py", skip_from_py_object)]
#[derive(Clone)]
struct Scenario {
    cfg: ScenarioConfig,
}

impl Scenario {
    fn edit(&mut self, f: impl FnOnce(&mut ScenarioConfig)) -> PyResult<()> {
        let mut cfg = self.cfg.clone();
        f(&mut cfg);
        cfg.validate().map_err(to_py)?;
        self.cfg = cfg;
        Ok(())
    }
}

#[pymethods]
impl Scenario {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Scenario {
            cfg: ScenarioConfig::load(&path).map_err(to_py)?,
        })
    }

    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        Ok(Scenario {
            cfg: ScenarioConfig::from_toml(text).map_err(to_py)?,
        })
    }

    fn to_toml(&self) -> String {
        self.cfg.to_toml()
    }

    #[getter]
    fn name(&self) -> String {
        self.cfg.scenario.name.clone()
    }

    /// System dimension `3 (2 + N_E)`.
    #[getter]
    fn n(&self) -> usize {
        self.cfg.n()
    }

    #[getter]
    fn steps(&self) -> usize {
        self.cfg.steps()
    }

    #[getter]
    fn tau(&self) -> f64 {
        self.cfg.time.tau
    }

    #[getter]
    fn t_final(&self) -> f64 {
        self.cfg.time.t_final
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.cfg.scenario.seed
    }

    /// Changes `t_final` and `tau` together; rejected unless `tau` divides
    /// `t_final`.
    fn set_time(&mut self, t_final: f64, tau: f64) -> PyResult<()> {
        self.edit(|c| {
            c.time.t_final = t_final;
            c.time.tau = tau;
        })
    }

    fn set_macro_cells(&mut self, cells: [usize; 3]) -> PyResult<()> {
        self.edit(|c| c.macro_.cells = cells)
    }

    fn set_micro_cells(&mut self, cells: [usize; 3]) -> PyResult<()> {
        self.edit(|c| c.micro.cells = cells)
    }

    /// Hex digest of everything the tensor table depends on.
    fn table_hash(&self) -> String {
        hex(&self.cfg.table_hash())
    }

    fn __repr__(&self) -> String {
        format!(
            "Scenario(name={:?}, n={}, t_final={}, tau={})",
            self.cfg.scenario.name,
            self.cfg.n(),
            self.cfg.time.t_final,
            self.cfg.time.tau
        )
    }
}

/// Effective tensors `M^H`, `R^H`, `G^H(t_m)`, `J^H(t_m)` at every macroscopic
/// quadrature point (one shared entry for x-independent media).
#[pyclass(module = "fehmm_py")]
struct TensorTable {
    table: EffectiveTensorTable,
}

impl TensorTable {
    fn entry(&self, p: usize) -> PyResult<&fehmm_core::effective::TensorEntry> {
        let n = self.table.entries.len();
        let idx = if n == 1 { 0 } else { p };
        self.table
            .entries
            .get(idx)
            .ok_or_else(|| PyIndexError::new_err(format!("point {p} out of range ({n} entries)")))
    }

    fn kernel<'a>(&self, k: &'a [DMatrix<f64>], m: usize) -> PyResult<&'a DMatrix<f64>> {
        k.get(m)
            .ok_or_else(|| PyIndexError::new_err(format!("time index {m} beyond {} steps", k.len() - 1)))
    }
}

#[pymethods]
impl TensorTable {
    #[getter]
    fn n(&self) -> usize {
        self.table.n
    }

    #[getter]
    fn n_entries(&self) -> usize {
        self.table.entries.len()
    }

    #[getter]
    fn n_points(&self) -> usize {
        self.table.n_points()
    }

    #[getter]
    fn steps(&self) -> usize {
        self.table.meta.steps
    }

    #[getter]
    fn tau(&self) -> f64 {
        self.table.meta.tau
    }

    #[getter]
    fn hash(&self) -> String {
        hex(&self.table.hash)
    }

    #[pyo3(signature = (point = 0))]
    fn m_h(&self, point: usize) -> PyResult<Vec<Vec<f64>>> {
        Ok(rows(&self.entry(point)?.m_h))
    }

    #[pyo3(signature = (point = 0))]
    fn r_h(&self, point: usize) -> PyResult<Vec<Vec<f64>>> {
        Ok(rows(&self.entry(point)?.r_h))
    }

    /// `G^H(t_m)` at grid index `m`.
    #[pyo3(signature = (m, point = 0))]
    fn g_h(&self, m: usize, point: usize) -> PyResult<Vec<Vec<f64>>> {
        let e = self.entry(point)?;
        Ok(rows(self.kernel(&e.g_h, m)?))
    }

    /// `J^H(t_m)` at grid index `m`.
    #[pyo3(signature = (m, point = 0))]
    fn j_h(&self, m: usize, point: usize) -> PyResult<Vec<Vec<f64>>> {
        let e = self.entry(point)?;
        Ok(rows(self.kernel(&e.j_h, m)?))
    }

    /// Bound checks per entry as dictionaries.
    fn checks<'py>(&self, py: Python<'py>) -> PyResult<Vec<Bound<'py, PyDict>>> {
        self.table
            .checks()
            .iter()
            .map(|c| {
                let d = PyDict::new(py);
                d.set_item("min_eig_m", c.min_eig_m)?;
                d.set_item("alpha", c.alpha)?;
                d.set_item("r_ratio", c.r_ratio)?;
                d.set_item("g_ratio", c.g_ratio)?;
                d.set_item("j_ratio", c.j_ratio)?;
                d.set_item("w_m_ratio", c.w_m_ratio)?;
                d.set_item("w_g0_ratio", c.w_g0_ratio)?;
                d.set_item("w_n0_ratio", c.w_n0_ratio)?;
                d.set_item("n_plus_m", c.n_plus_m)?;
                d.set_item("violations", c.violations())?;
                Ok(d)
            })
            .collect()
    }
}

/// Per-step record of a macroscopic run.
#[pyclass(module = "fehmm_py", get_all)]
struct RunResult {
    times: Vec<f64>,
    norm_mh: Vec<f64>,
    norm_l2: Vec<f64>,
    bound: Vec<f64>,
    energy_rel_drift: Vec<f64>,
    within_bound: bool,
    final_state: Vec<f64>,
}

#[pymethods]
impl RunResult {
    fn __repr__(&self) -> String {
        format!(
            "RunResult(steps={}, final_norm={:e}, within_bound={})",
            self.times.len().saturating_sub(1),
            self.norm_mh.last().copied().unwrap_or(0.0),
            self.within_bound
        )
    }
}

fn cache(dir: Option<PathBuf>) -> Option<TensorCache> {
    dir.map(TensorCache::new)
}

/// Solves the cell problems of a scenario (or loads them from `cache_dir`).
#[pyfunction]
#[pyo3(signature = (scenario, cache_dir = None))]
fn compute_tensors(py: Python<'_>, scenario: &Scenario, cache_dir: Option<PathBuf>) -> PyResult<TensorTable> {
    let cfg = scenario.cfg.clone();
    let table = py
        .detach(move || harness::prepare(&cfg, cache(cache_dir).as_ref()))
        .map_err(to_py)?
        .table;
    Ok(TensorTable { table })
}

/// Integrates the macroscopic system without writing files.
#[pyfunction]
#[pyo3(signature = (scenario, cache_dir = None))]
fn run(py: Python<'_>, scenario: &Scenario, cache_dir: Option<PathBuf>) -> PyResult<RunResult> {
    let cfg = scenario.cfg.clone();
    py.detach(move || {
        let p = harness::prepare(&cfg, cache(cache_dir).as_ref())?;
        let u0 = p.space.interpolate(|x| cfg.initial(x));
        let mut problem = MacroProblem::new(&p.space, &p.table, cfg.time.tau, &u0, cfg.source())?;
        problem.solver_rtol = cfg.solver.macro_rtol;
        let (traj, _) = problem.run(&u0, cfg.steps(), 0)?;
        Ok(RunResult {
            times: traj.records.iter().map(|r| r.t).collect(),
            norm_mh: traj.records.iter().map(|r| r.norm_mh).collect(),
            norm_l2: traj.records.iter().map(|r| r.norm_l2).collect(),
            bound: traj.records.iter().map(|r| r.bound).collect(),
            energy_rel_drift: traj.records.iter().map(|r| r.energy_rel_drift).collect(),
            within_bound: traj.all_within_bound(),
            final_state: traj.final_state,
        })
    })
    .map_err(to_py)
}

/// Runs the invariant suite; returns `(name, value, limit, passed)` tuples.
#[pyfunction]
#[pyo3(signature = (scenario, seed = None))]
fn verify(py: Python<'_>, scenario: &Scenario, seed: Option<u64>) -> PyResult<Vec<(String, f64, f64, bool)>> {
    let cfg = scenario.cfg.clone();
    let seed = seed.unwrap_or(cfg.scenario.seed);
    let report = py.detach(move || harness::verify_suite(&cfg, seed)).map_err(to_py)?;
    Ok(report.checks.into_iter().map(|c| (c.name, c.value, c.limit, c.pass)).collect())
}

/// Convergence study (`micro-M`, `micro-R`, `micro-G`, `micro-J`, `sobolev`,
/// `macro`). Returns `{"rows": [(cells, h, t, error)], "fits": [(t, slope,
/// theory, status)]}`; `slope` is `None` when the errors are at roundoff.
#[pyfunction]
fn converge<'py>(py: Python<'py>, scenario: &Scenario, study: &str, levels: Vec<usize>) -> PyResult<Bound<'py, PyDict>> {
    let study: Study = study.parse().map_err(to_py)?;
    let cfg = scenario.cfg.clone();
    let report = py
        .detach(move || harness::converge_study(&cfg, study, &levels))
        .map_err(to_py)?;
    let d = PyDict::new(py);
    let rows: Vec<(usize, f64, f64, f64)> = report.rows.iter().map(|r| (r.cells, r.h, r.t, r.error)).collect();
    let fits: Vec<(f64, Option<f64>, f64, &str)> = report
        .fits
        .iter()
        .map(|f| (f.t, f.fit.as_ref().map(|x| x.slope), f.theory, f.status.as_str()))
        .collect();
    d.set_item("rows", rows)?;
    d.set_item("fits", fits)?;
    d.set_item("passed", report.passed())?;
    Ok(d)
}

/// Closed-form effective coefficient of a layered scalar medium per axis:
/// harmonic mean along `axis`, arithmetic mean across it.
#[pyfunction]
#[pyo3(signature = (values, fractions, axis = 0))]
fn laminate_effective(values: Vec<f64>, fractions: Vec<f64>, axis: usize) -> PyResult<[f64; 3]> {
    let p = Profile::Piecewise { axis, values, fractions };
    p.validate("profile").map_err(to_py)?;
    laminate_oracle(&p).map_err(to_py)
}

#[pymodule]
fn fehmm_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("ConfigError", m.py().get_type::<ConfigError>())?;
    m.add("NumericalError", m.py().get_type::<NumericalError>())?;
    m.add("InvariantError", m.py().get_type::<InvariantError>())?;
    m.add_class::<Scenario>()?;
    m.add_class::<TensorTable>()?;
    m.add_class::<RunResult>()?;
    m.add_function(wrap_pyfunction!(compute_tensors, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    m.add_function(wrap_pyfunction!(converge, m)?)?;
    m.add_function(wrap_pyfunction!(laminate_effective, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
