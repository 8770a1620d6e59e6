//! HMM tensors at the macroscopic quadrature points.

use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::materials::{CoefficientBounds, Coefficients};
use crate::micro::{solve_cell, CellOptions, CellSolution, PeriodicLagrangeSpace};

/// Micro discretisation the table was computed with.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MicroMeta {
    pub order: usize,
    pub cells: [usize; 3],
    /// Micro mesh size (largest cell edge).
    pub h: f64,
    pub tau: f64,
    pub steps: usize,
}

/// Norms of the static correctors, kept for the a-priori bound checks.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CorrectorNorms {
    pub m: Vec<f64>,
    pub g0: Vec<f64>,
    pub n0: Vec<f64>,
    /// `max |w^N_j(0) + w^M_j|` over all `j` and DOFs.
    pub n_plus_m: f64,
    /// `max |J^H(0) - J0_direct|`.
    pub j0_routes: f64,
    /// `max |M^H - (M^H)^T|` before symmetrisation.
    pub m_h_asymmetry: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensorEntry {
    pub x: [f64; 3],
    pub bounds: CoefficientBounds,
    pub m_h: DMatrix<f64>,
    pub r_h: DMatrix<f64>,
    pub g_h: Vec<DMatrix<f64>>,
    pub j_h: Vec<DMatrix<f64>>,
    pub norms: CorrectorNorms,
}

impl TensorEntry {
    pub fn from_cell(sol: &CellSolution) -> Self {
        let mut n_plus_m: f64 = 0.0;
        for (wn, wm) in sol.w_n0.iter().zip(&sol.w_m) {
            for (a, b) in wn.iter().zip(wm) {
                n_plus_m = n_plus_m.max((a + b).abs());
            }
        }
        TensorEntry {
            x: sol.x,
            bounds: sol.bounds,
            m_h: sol.m_h.clone(),
            r_h: sol.r_h.clone(),
            g_h: sol.g_h.clone(),
            j_h: sol.j_h.clone(),
            norms: CorrectorNorms {
                m: sol.norms_m.clone(),
                g0: sol.norms_g.iter().map(|v| v[0]).collect(),
                n0: sol.norms_n.iter().map(|v| v[0]).collect(),
                n_plus_m,
                j0_routes: (&sol.j_h[0] - &sol.j0_direct).amax(),
                m_h_asymmetry: sol.m_h_asymmetry,
            },
        }
    }

    /// A-priori bounds on the tensors in terms of `alpha`, `C_M`, `C_R`.
    pub fn tensor_bounds(&self) -> TensorBounds {
        TensorBounds::from(self.bounds)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TensorBounds {
    pub m: f64,
    pub r: f64,
    pub g: f64,
    pub j: f64,
    pub w_m: f64,
    pub w_g0: f64,
    pub w_n0: f64,
}

impl From<CoefficientBounds> for TensorBounds {
    fn from(b: CoefficientBounds) -> Self {
        let CoefficientBounds { alpha, c_m, c_r } = b;
        TensorBounds {
            m: c_m,
            r: 4.0 * c_r * c_m / alpha,
            g: 4.0 * (c_r / alpha).powi(2) * c_m,
            j: 2.0 * c_r * c_m / alpha,
            w_m: c_m.sqrt(),
            w_g0: 2.0 * (c_r / alpha) * c_m.sqrt(),
            w_n0: c_m.sqrt(),
        }
    }
}

/// Outcome of checking one entry against its invariants. Ratios are
/// `value / bound`, so anything above one is a violation.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EntryCheck {
    pub min_eig_m: f64,
    pub alpha: f64,
    pub r_ratio: f64,
    pub g_ratio: f64,
    pub j_ratio: f64,
    pub w_m_ratio: f64,
    pub w_g0_ratio: f64,
    pub w_n0_ratio: f64,
    pub min_eig_sym_r: f64,
    pub n_plus_m: f64,
    pub j0_routes: f64,
    pub m_h_asymmetry: f64,
}

impl EntryCheck {
    /// Human-readable list of violated invariants.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        let tol = 1e-9;
        if self.min_eig_m < self.alpha - tol {
            v.push(format!("lambda_min(M^H) = {:.6e} < alpha = {:.6e}", self.min_eig_m, self.alpha));
        }
        for (name, r) in [
            ("R^H", self.r_ratio),
            ("G^H", self.g_ratio),
            ("J^H", self.j_ratio),
            ("w^M", self.w_m_ratio),
            ("w^G(0)", self.w_g0_ratio),
            ("w^N(0)", self.w_n0_ratio),
        ] {
            if r > 1.0 + tol {
                v.push(format!("{name} exceeds its bound by a factor {r:.6}"));
            }
        }
        if self.min_eig_sym_r < -tol {
            v.push(format!("sym(R^H) has eigenvalue {:.3e}", self.min_eig_sym_r));
        }
        if self.n_plus_m > 1e-10 {
            v.push(format!("w^N(0) + w^M = {:.3e}", self.n_plus_m));
        }
        if self.j0_routes > 1e-10 {
            v.push(format!("J^H(0) routes differ by {:.3e}", self.j0_routes));
        }
        if self.m_h_asymmetry > 1e-12 {
            v.push(format!("M^H asymmetry {:.3e}", self.m_h_asymmetry));
        }
        v
    }
}

fn amax_ratio(mats: &[DMatrix<f64>], bound: f64) -> f64 {
    let v = mats.iter().map(|a| a.amax()).fold(0.0, f64::max);
    if v == 0.0 {
        0.0
    } else {
        v / bound
    }
}

fn max_ratio(v: &[f64], bound: f64) -> f64 {
    let m = v.iter().cloned().fold(0.0, f64::max);
    if m == 0.0 {
        0.0
    } else {
        m / bound
    }
}

pub fn check_entry(e: &TensorEntry) -> EntryCheck {
    let b = e.tensor_bounds();
    let min_eig_m = e.m_h.clone().symmetric_eigen().eigenvalues.min();
    let sym_r = (&e.r_h + e.r_h.transpose()) * 0.5;
    EntryCheck {
        min_eig_m,
        alpha: e.bounds.alpha,
        r_ratio: amax_ratio(std::slice::from_ref(&e.r_h), b.r),
        g_ratio: amax_ratio(&e.g_h, b.g),
        j_ratio: amax_ratio(&e.j_h, b.j),
        w_m_ratio: max_ratio(&e.norms.m, b.w_m),
        w_g0_ratio: max_ratio(&e.norms.g0, b.w_g0),
        w_n0_ratio: max_ratio(&e.norms.n0, b.w_n0),
        min_eig_sym_r: sym_r.symmetric_eigen().eigenvalues.min(),
        n_plus_m: e.norms.n_plus_m,
        j0_routes: e.norms.j0_routes,
        m_h_asymmetry: e.norms.m_h_asymmetry,
    }
}

/// Tensors for every macroscopic quadrature point. Points with identical
/// micro problems share one entry through `point_index`.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveTensorTable {
    pub n: usize,
    pub hash: [u8; 32],
    pub meta: MicroMeta,
    pub entries: Vec<TensorEntry>,
    pub point_index: Vec<usize>,
}

impl EffectiveTensorTable {
    /// Solves the cell problems for all `points`, in parallel over distinct
    /// micro problems. Macroscopically constant coefficients need one solve.
    pub fn compute(
        coeffs: &Coefficients,
        points: &[[f64; 3]],
        space: &PeriodicLagrangeSpace,
        tau: f64,
        steps: usize,
        opts: CellOptions,
        hash: [u8; 32],
    ) -> Result<Self> {
        coeffs.validate()?;
        if points.is_empty() {
            return Err(Error::config("no quadrature points to compute tensors for"));
        }
        let (unique, point_index): (Vec<[f64; 3]>, Vec<usize>) = if coeffs.x_independent() {
            (vec![points[0]], vec![0; points.len()])
        } else {
            (points.to_vec(), (0..points.len()).collect())
        };
        let entries = unique
            .par_iter()
            .map(|&x| solve_cell(space, coeffs, x, tau, steps, opts).map(|s| TensorEntry::from_cell(&s)))
            .collect::<Result<Vec<_>>>()?;
        let h = space.h();
        Ok(EffectiveTensorTable {
            n: coeffs.n(),
            hash,
            meta: MicroMeta {
                order: space.order,
                cells: space.cells,
                h: h[0].max(h[1]).max(h[2]),
                tau,
                steps,
            },
            entries,
            point_index,
        })
    }

    /// Table with the same tensors at every point and kernels given as
    /// functions of time.
    pub fn uniform(
        m_h: DMatrix<f64>,
        r_h: DMatrix<f64>,
        g: impl Fn(f64) -> DMatrix<f64>,
        j: impl Fn(f64) -> DMatrix<f64>,
        n_points: usize,
        tau: f64,
        steps: usize,
    ) -> Self {
        let n = m_h.nrows();
        let eig = m_h.clone().symmetric_eigen().eigenvalues;
        let c_r = r_h.clone().svd(false, false).singular_values.max();
        let bounds = CoefficientBounds {
            alpha: eig.min(),
            c_m: eig.max(),
            c_r,
        };
        let grid: Vec<f64> = (0..=steps).map(|m| m as f64 * tau).collect();
        EffectiveTensorTable {
            n,
            hash: [0; 32],
            meta: MicroMeta {
                order: 0,
                cells: [0; 3],
                h: 0.0,
                tau,
                steps,
            },
            entries: vec![TensorEntry {
                x: [0.0; 3],
                bounds,
                m_h,
                r_h,
                g_h: grid.iter().map(|&t| g(t)).collect(),
                j_h: grid.iter().map(|&t| j(t)).collect(),
                norms: CorrectorNorms::default(),
            }],
            point_index: vec![0; n_points],
        }
    }

    pub fn n_points(&self) -> usize {
        self.point_index.len()
    }

    pub fn grid_len(&self) -> usize {
        self.meta.steps + 1
    }

    pub fn entry(&self, point: usize) -> &TensorEntry {
        &self.entries[self.point_index[point]]
    }

    /// Coefficient bounds merged over all entries.
    pub fn bounds(&self) -> CoefficientBounds {
        self.entries
            .iter()
            .fold(CoefficientBounds::empty(), |acc, e| acc.merge(&e.bounds))
    }

    pub fn kernel_is_zero(&self) -> bool {
        self.entries.iter().all(|e| e.g_h.iter().all(|g| g.amax() == 0.0))
    }

    pub fn source_is_zero(&self) -> bool {
        self.entries.iter().all(|e| e.j_h.iter().all(|g| g.amax() == 0.0))
    }

    pub fn checks(&self) -> Vec<EntryCheck> {
        self.entries.iter().map(check_entry).collect()
    }

    /// Fails with an invariant error naming the first violation.
    pub fn verify(&self) -> Result<()> {
        for (k, c) in self.checks().iter().enumerate() {
            if let Some(v) = c.violations().first() {
                return Err(Error::invariant(format!("tensor entry {k}: {v}")));
            }
        }
        Ok(())
    }

    /// Long-format CSV: `point,t,kind,i,j,value,bound`, one row per entry.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "point,t,kind,i,j,value,bound")?;
        let tau = self.meta.tau;
        for (p, e) in self.entries.iter().enumerate() {
            let b = e.tensor_bounds();
            let mut rows = |t: f64, kind: &str, a: &DMatrix<f64>, bound: f64| -> std::io::Result<()> {
                for i in 0..self.n {
                    for j in 0..self.n {
                        writeln!(f, "{p},{t},{kind},{i},{j},{:e},{:e}", a[(i, j)], bound)?;
                    }
                }
                Ok(())
            };
            rows(0.0, "M", &e.m_h, b.m)?;
            rows(0.0, "R", &e.r_h, b.r)?;
            for (m, g) in e.g_h.iter().enumerate() {
                rows(m as f64 * tau, "G", g, b.g)?;
            }
            for (m, j) in e.j_h.iter().enumerate() {
                rows(m as f64 * tau, "J", j, b.j)?;
            }
        }
        f.flush()?;
        Ok(())
    }
}
