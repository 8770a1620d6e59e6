//! Scenario files: TOML with one table per concern.
//!
//! ```toml
//! [scenario]
//! name = "laminate"
//! kind = "hmm"            # or "manufactured"
//!
//! [coefficients.material]
//! model = "isotropic"
//! m = { kind = "piecewise", axis = 0, values = [2.0, 4.0], fractions = [0.5, 0.5] }
//! r = { kind = "constant", value = 1.0 }
//!
//! [micro]
//! cells = [8, 8, 8]
//!
//! [macro]
//! cells = [4, 4, 4]
//!
//! [time]
//! t_final = 1.0
//! tau = 0.05
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cache::scenario_hash;
use crate::error::{Error, Result};
use crate::materials::Coefficients;
use crate::micro::CellOptions;
use crate::oracles::manufactured::{field_s, field_t, Manufactured};
use crate::studies::time_index;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    /// Effective tensors from cell problems.
    Hmm,
    /// Constant effective tensors with a closed-form solution.
    Manufactured,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSection {
    pub name: String,
    #[serde(default = "default_kind")]
    pub kind: ScenarioKind,
    /// Number of polarisation blocks; checked against the coefficient model.
    pub n_e: Option<usize>,
    #[serde(default)]
    pub seed: u64,
}

fn default_kind() -> ScenarioKind {
    ScenarioKind::Hmm
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MicroSection {
    pub cells: [usize; 3],
    #[serde(default = "one")]
    pub order: usize,
    /// Size of the sampling cell; the cell problems are solved in rescaled
    /// coordinates, so it only scales reported micro mesh sizes.
    #[serde(default = "unit")]
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MacroSection {
    pub cells: [usize; 3],
    #[serde(default = "one")]
    pub order: usize,
    #[serde(default)]
    pub origin: [f64; 3],
    #[serde(default = "unit_box")]
    pub extent: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSection {
    pub t_final: f64,
    pub tau: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialData {
    Zero,
    /// `E = S`, `H = T` (smooth, PEC-compatible), polarisations zero.
    Smooth,
    Manufactured,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SourceData {
    None,
    /// Gaussian-in-time current `exp(-((t - 0.5)/0.15)^2) S(x)` in the E block.
    Pulse,
    Manufactured,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    #[serde(default = "initial_zero")]
    pub initial: InitialData,
    #[serde(default = "source_none")]
    pub source: SourceData,
    #[serde(default = "unit")]
    pub amplitude: f64,
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection {
            initial: InitialData::Zero,
            source: SourceData::None,
            amplitude: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    #[serde(default = "cell_rtol")]
    pub cell_rtol: f64,
    #[serde(default = "fine_rtol")]
    pub sobolev_rtol: f64,
    #[serde(default = "fine_rtol")]
    pub macro_rtol: f64,
    #[serde(default = "slack")]
    pub contraction_slack: f64,
}

impl Default for SolverSection {
    fn default() -> Self {
        SolverSection {
            cell_rtol: cell_rtol(),
            sobolev_rtol: fine_rtol(),
            macro_rtol: fine_rtol(),
            contraction_slack: slack(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "out_dir")]
    pub dir: PathBuf,
    #[serde(default = "cache_dir")]
    pub cache_dir: PathBuf,
    /// Keep every k-th macro state for VTK output (0: final state only).
    #[serde(default)]
    pub keep_every: usize,
    #[serde(default)]
    pub vtk: bool,
    /// Also write the macro system matrices in Matrix Market format.
    #[serde(default)]
    pub matrices: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: out_dir(),
            cache_dir: cache_dir(),
            keep_every: 0,
            vtk: false,
            matrices: false,
        }
    }
}

fn one() -> usize {
    1
}
fn unit() -> f64 {
    1.0
}
fn unit_box() -> [f64; 3] {
    [1.0; 3]
}
fn initial_zero() -> InitialData {
    InitialData::Zero
}
fn source_none() -> SourceData {
    SourceData::None
}
fn cell_rtol() -> f64 {
    1e-11
}
fn fine_rtol() -> f64 {
    1e-13
}
fn slack() -> f64 {
    1e-12
}
fn out_dir() -> PathBuf {
    PathBuf::from("out")
}
fn cache_dir() -> PathBuf {
    PathBuf::from(".fehmm-cache")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: ScenarioSection,
    pub coefficients: Option<Coefficients>,
    pub micro: MicroSection,
    #[serde(rename = "macro")]
    pub macro_: MacroSection,
    pub time: TimeSection,
    #[serde(default)]
    pub data: DataSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub output: OutputSection,
}

/// Everything that determines an effective tensor table.
#[derive(Serialize)]
struct TableKey<'a> {
    kind: ScenarioKind,
    coefficients: &'a Option<Coefficients>,
    micro_cells: [usize; 3],
    micro_order: usize,
    macro_cells: [usize; 3],
    macro_order: usize,
    origin: [f64; 3],
    extent: [f64; 3],
    tau: f64,
    steps: usize,
    cell_rtol: f64,
    sobolev_rtol: f64,
    contraction_slack: f64,
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config is serialisable")
    }

    /// Field dimension `n = 3 (2 + N_E)`.
    pub fn n(&self) -> usize {
        match (&self.scenario.kind, &self.coefficients) {
            (ScenarioKind::Manufactured, _) => 6,
            (_, Some(c)) => c.n(),
            (_, None) => 0,
        }
    }

    pub fn steps(&self) -> usize {
        time_index(self.time.t_final, self.time.tau).unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, msg: String| Err(Error::config(format!("{field}: {msg}")));
        let positive = |field: &str, v: f64| -> Result<()> {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(format!("{field}: must be positive, got {v}")))
            }
        };
        positive("time.tau", self.time.tau)?;
        positive("time.t_final", self.time.t_final)?;
        if time_index(self.time.t_final, self.time.tau).is_err() {
            return bad(
                "time.tau",
                format!("does not divide t_final = {} (tau = {})", self.time.t_final, self.time.tau),
            );
        }
        positive("solver.cell_rtol", self.solver.cell_rtol)?;
        positive("solver.sobolev_rtol", self.solver.sobolev_rtol)?;
        positive("solver.macro_rtol", self.solver.macro_rtol)?;
        positive("solver.contraction_slack", self.solver.contraction_slack)?;
        positive("micro.delta", self.micro.delta)?;
        if !self.data.amplitude.is_finite() {
            return bad("data.amplitude", "must be finite".into());
        }
        if self.micro.cells.iter().any(|c| *c == 0) {
            return bad("micro.cells", "every axis needs at least one cell".into());
        }
        if !(1..=2).contains(&self.micro.order) {
            return bad("micro.order", format!("supported orders are 1 and 2, got {}", self.micro.order));
        }
        if self.macro_.cells.iter().any(|c| *c == 0) {
            return bad("macro.cells", "every axis needs at least one cell".into());
        }
        if self.macro_.order != 1 {
            return Err(Error::NotImplemented(format!(
                "macro.order: only lowest-order edge elements are available, got {}",
                self.macro_.order
            )));
        }
        for e in self.macro_.extent {
            positive("macro.extent", e)?;
        }
        match self.scenario.kind {
            ScenarioKind::Hmm => {
                let Some(c) = &self.coefficients else {
                    return bad("coefficients", "required for kind = \"hmm\"".into());
                };
                c.validate().map_err(|e| match e {
                    Error::Config(m) => Error::config(format!("coefficients: {m}")),
                    Error::Scenario(m) => Error::scenario(format!("coefficients: {m}")),
                    other => other,
                })?;
                if self.data.initial == InitialData::Manufactured || self.data.source == SourceData::Manufactured {
                    return bad("data", "manufactured data requires scenario.kind = \"manufactured\"".into());
                }
            }
            ScenarioKind::Manufactured => {
                if self.data.initial != InitialData::Manufactured || self.data.source != SourceData::Manufactured {
                    return bad("data", "kind = \"manufactured\" needs initial = source = \"manufactured\"".into());
                }
                if self.macro_.origin != [0.0; 3] || self.macro_.extent != [1.0; 3] {
                    return bad("macro", "the manufactured solution lives on the unit cube".into());
                }
            }
        }
        let n = self.n();
        if let Some(ne) = self.scenario.n_e {
            if n != 3 * (2 + ne) {
                return bad("scenario.n_e", format!("N_E = {ne} needs n = {}, the model has n = {n}", 3 * (2 + ne)));
            }
        }
        Ok(())
    }

    pub fn cell_options(&self) -> CellOptions {
        CellOptions {
            rtol: self.solver.cell_rtol,
            cn_rtol: self.solver.sobolev_rtol,
            contraction_slack: self.solver.contraction_slack,
            store_trajectories: false,
        }
    }

    /// Hash of everything that determines the tensor table.
    pub fn table_hash(&self) -> [u8; 32] {
        scenario_hash(&TableKey {
            kind: self.scenario.kind,
            coefficients: &self.coefficients,
            micro_cells: self.micro.cells,
            micro_order: self.micro.order,
            macro_cells: self.macro_.cells,
            macro_order: self.macro_.order,
            origin: self.macro_.origin,
            extent: self.macro_.extent,
            tau: self.time.tau,
            steps: self.steps(),
            cell_rtol: self.solver.cell_rtol,
            sobolev_rtol: self.solver.sobolev_rtol,
            contraction_slack: self.solver.contraction_slack,
        })
    }

    /// Hash of the whole configuration.
    pub fn config_hash(&self) -> [u8; 32] {
        scenario_hash(self)
    }

    fn unit_coords(&self, x: [f64; 3]) -> [f64; 3] {
        let (o, e) = (self.macro_.origin, self.macro_.extent);
        [(x[0] - o[0]) / e[0], (x[1] - o[1]) / e[1], (x[2] - o[2]) / e[2]]
    }

    /// Initial field as an `n`-vector.
    pub fn initial(&self, x: [f64; 3]) -> Vec<f64> {
        let n = self.n();
        let a = self.data.amplitude;
        match self.data.initial {
            InitialData::Zero => vec![0.0; n],
            InitialData::Smooth => {
                let y = self.unit_coords(x);
                let mut u = vec![0.0; n];
                let (s, t) = (field_s(y), field_t(y));
                for d in 0..3 {
                    u[d] = a * s[d];
                    u[n - 3 + d] = a * t[d];
                }
                u
            }
            InitialData::Manufactured => Manufactured::standard().initial(x).iter().map(|v| a * v).collect(),
        }
    }

    /// Source `g(t, x)`, if any.
    pub fn source(&self) -> Option<Box<dyn Fn(f64, [f64; 3]) -> Vec<f64> + Sync>> {
        let n = self.n();
        let a = self.data.amplitude;
        match self.data.source {
            SourceData::None => None,
            SourceData::Pulse => {
                let (o, e) = (self.macro_.origin, self.macro_.extent);
                Some(Box::new(move |t, x| {
                    let y = [(x[0] - o[0]) / e[0], (x[1] - o[1]) / e[1], (x[2] - o[2]) / e[2]];
                    let p = a * (-((t - 0.5) / 0.15).powi(2)).exp();
                    let s = field_s(y);
                    let mut g = vec![0.0; n];
                    for d in 0..3 {
                        g[d] = p * s[d];
                    }
                    g
                }))
            }
            SourceData::Manufactured => {
                let mf = Manufactured::standard();
                Some(Box::new(move |t, x| mf.source(t, x).iter().map(|v| a * v).collect()))
            }
        }
    }
}

/// Sampling-cell mesh size in physical units.
pub fn micro_mesh_size(cfg: &ScenarioConfig) -> f64 {
    let c = cfg.micro.cells;
    cfg.micro.delta / c[0].min(c[1]).min(c[2]) as f64
}
