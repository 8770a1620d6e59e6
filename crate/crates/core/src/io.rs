//! Output files: CSV tables, legacy VTK fields and the run manifest.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::macro_fem::NedelecSpace;

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(e) => Error::Io(e),
        other => Error::Assembly(format!("CSV: {other:?}")),
    }
}

/// Writes a CSV file with a fixed header; values are formatted by the caller.
pub fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        if row.len() != header.len() {
            return Err(Error::Assembly(format!(
                "CSV row has {} fields, header {}",
                row.len(),
                header.len()
            )));
        }
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Shortest round-trip representation, so equal values print identically.
pub fn fmt(v: f64) -> String {
    format!("{v:e}")
}

/// Cell-centred field on the macro mesh as a VTK structured-points file, one
/// vector array per 3-block (`E`, `P1`.., `H`) plus the curl of `E`.
pub fn write_vtk(path: &Path, space: &NedelecSpace, u: &[f64], title: &str) -> Result<()> {
    let mesh = &space.mesh;
    let [nx, ny, nz] = mesh.cells_per_axis;
    let h = mesh.cell_size();
    let mut f = BufWriter::new(File::create(path)?);
    writeln!(f, "# vtk DataFile Version 3.0")?;
    writeln!(f, "{}", title.replace('\n', " "))?;
    writeln!(f, "ASCII")?;
    writeln!(f, "DATASET STRUCTURED_POINTS")?;
    writeln!(f, "DIMENSIONS {} {} {}", nx + 1, ny + 1, nz + 1)?;
    writeln!(f, "ORIGIN {} {} {}", mesh.origin[0], mesh.origin[1], mesh.origin[2])?;
    writeln!(f, "SPACING {} {} {}", h[0], h[1], h[2])?;
    writeln!(f, "CELL_DATA {}", mesh.n_cells())?;
    let centres: Vec<(Vec<f64>, Vec<f64>)> = (0..mesh.n_cells())
        .map(|c| {
            let o = mesh.cell_origin(c);
            space.eval(u, [o[0] + 0.5 * h[0], o[1] + 0.5 * h[1], o[2] + 0.5 * h[2]])
        })
        .collect();
    let nc = space.n_comp;
    for b in 0..nc {
        let name = match b {
            0 => "E".to_string(),
            b if b == nc - 1 => "H".to_string(),
            b => format!("P{b}"),
        };
        writeln!(f, "VECTORS {name} double")?;
        for (v, _) in &centres {
            writeln!(f, "{:e} {:e} {:e}", v[3 * b], v[3 * b + 1], v[3 * b + 2])?;
        }
    }
    writeln!(f, "VECTORS curlE double")?;
    for (_, c) in &centres {
        writeln!(f, "{:e} {:e} {:e}", c[0], c[1], c[2])?;
    }
    f.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct PhaseTiming {
    pub phase: String,
    pub seconds: f64,
}

/// Provenance of one command invocation.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config_hash: String,
    pub table_hash: Option<String>,
    pub version: String,
    pub timings: Vec<PhaseTiming>,
    pub files: Vec<PathBuf>,
    pub status: String,
}

impl RunManifest {
    pub fn new(command: &str, config_hash: String) -> Self {
        RunManifest {
            command: command.to_string(),
            config_hash,
            table_hash: None,
            version: format!("fehmm {}", env!("CARGO_PKG_VERSION")),
            timings: Vec::new(),
            files: Vec::new(),
            status: "ok".into(),
        }
    }

    pub fn time<T>(&mut self, phase: &str, f: impl FnOnce() -> T) -> T {
        let start = std::time::Instant::now();
        let out = f();
        self.timings.push(PhaseTiming {
            phase: phase.to_string(),
            seconds: start.elapsed().as_secs_f64(),
        });
        out
    }

    pub fn add_file(&mut self, p: impl Into<PathBuf>) {
        self.files.push(p.into());
    }

    /// Writes `manifest.json` into `dir` after checking every listed file exists.
    pub fn write(&mut self, dir: &Path) -> Result<PathBuf> {
        if let Some(missing) = self.files.iter().find(|p| !p.exists()) {
            return Err(Error::Assembly(format!("manifest lists missing file {}", missing.display())));
        }
        let path = dir.join("manifest.json");
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Assembly(e.to_string()))?;
        std::fs::write(&path, text)?;
        Ok(path)
    }
}
