//! High-resolution cell solutions used as surrogate exact correctors.

use crate::error::{Error, Result};
use crate::materials::Coefficients;
use crate::micro::{solve_cell, CellOptions, CellSolution, PeriodicLagrangeSpace};

/// Largest fine reference the oracle will build.
pub const REFERENCE_DOF_LIMIT: usize = 2_000_000;

pub struct FineReference {
    pub space: PeriodicLagrangeSpace,
    pub solution: CellSolution,
}

/// Solves the cell problems at `x` on `coarse` refined `factor` times per axis.
pub fn fine_reference_correctors(
    coeffs: &Coefficients,
    coarse: [usize; 3],
    factor: usize,
    order: usize,
    x: [f64; 3],
    tau: f64,
    steps: usize,
) -> Result<FineReference> {
    if factor < 4 {
        return Err(Error::config(format!("reference refinement factor must be at least 4, got {factor}")));
    }
    let cells = coarse.map(|c| c * factor);
    let n_comp = coeffs.n() / 3;
    let nodes: usize = cells.iter().map(|c| c * order).product();
    let dofs = nodes * n_comp;
    if dofs > REFERENCE_DOF_LIMIT {
        return Err(Error::config(format!(
            "fine reference would have {dofs} DOFs, limit is {REFERENCE_DOF_LIMIT}"
        )));
    }
    let space = PeriodicLagrangeSpace::new(cells, order, n_comp)?;
    let solution = solve_cell(&space, coeffs, x, tau, steps, CellOptions::default())?;
    Ok(FineReference { space, solution })
}
