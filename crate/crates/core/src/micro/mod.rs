//! Periodic micro problems on the unit cell.

pub mod cell;
pub mod forms;
pub mod space;

pub use cell::{solve_cell, sobolev_evolve, CellOptions, CellSolution, SobolevStepper};
pub use forms::{assemble_micro_forms, MicroForms};
pub use space::PeriodicLagrangeSpace;

/// `H^1(Y)` distance between a field on `coarse` and one on `fine`, for one
/// component, integrated with the quadrature of the fine space. The two spaces
/// need not be nested.
pub fn micro_h1_distance(
    coarse: &PeriodicLagrangeSpace,
    u_coarse: &[f64],
    fine: &PeriodicLagrangeSpace,
    u_fine: &[f64],
    comp: usize,
) -> f64 {
    let mut acc = 0.0;
    forms::for_each_point(fine, |_, _, _, w, y| {
        let (vc, gc) = coarse.eval(u_coarse, comp, y);
        let (vf, gf) = fine.eval(u_fine, comp, y);
        let d = [gc[0] - gf[0], gc[1] - gf[1], gc[2] - gf[2]];
        acc += w * ((vc - vf).powi(2) + d[0] * d[0] + d[1] * d[1] + d[2] * d[2]);
    });
    acc.sqrt()
}

/// Sum over all components of [`micro_h1_distance`], squared then rooted.
pub fn micro_h1_distance_all(
    coarse: &PeriodicLagrangeSpace,
    u_coarse: &[f64],
    fine: &PeriodicLagrangeSpace,
    u_fine: &[f64],
) -> f64 {
    (0..coarse.n_comp)
        .map(|c| micro_h1_distance(coarse, u_coarse, fine, u_fine, c).powi(2))
        .sum::<f64>()
        .sqrt()
}
