//! Cell problems for one macroscopic point: the elliptic corrector `w^M`,
//! the Sobolev initial values `w^G(0)`, `w^N(0)`, their Crank–Nicolson
//! evolution, and the HMM tensors obtained from them.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::materials::{CoefficientBounds, Coefficients};
use crate::micro::forms::{assemble_micro_forms, for_each_point, MicroForms};
use crate::micro::space::PeriodicLagrangeSpace;
use crate::solvers::{cg, gmres, LinearOperator, SolverOptions};
use crate::sparse::{dot, norm2, CsrMatrix};

#[derive(Debug, Clone, Copy)]
pub struct CellOptions {
    /// Relative residual for the static cell problems.
    pub rtol: f64,
    /// Relative residual for each Crank–Nicolson step.
    pub cn_rtol: f64,
    /// Allowed relative growth of the m-norm per step.
    pub contraction_slack: f64,
    pub store_trajectories: bool,
}

impl Default for CellOptions {
    fn default() -> Self {
        CellOptions {
            rtol: 1e-11,
            cn_rtol: 1e-13,
            contraction_slack: 1e-12,
            store_trajectories: false,
        }
    }
}

/// Load vector together with the norm it would have without cancellation,
/// which sets the scale below which the load is treated as zero.
#[derive(Debug, Clone)]
pub struct Load {
    pub values: Vec<f64>,
    pub magnitude: f64,
}

impl Load {
    fn negated(&self) -> Load {
        Load {
            values: self.values.iter().map(|v| -v).collect(),
            magnitude: self.magnitude,
        }
    }
}

fn solve_static(op: &dyn LinearOperator, load: &Load, rtol: f64) -> Result<Vec<f64>> {
    let n = op.dim();
    let mut x = vec![0.0; n];
    let mut opts = SolverOptions::new(rtol, 10 * n.max(10));
    opts.atol = 1e-2 * rtol * load.magnitude;
    cg(op, &load.values, &mut x, &opts)?;
    Ok(x)
}

/// Right-hand sides `b^M_j(v) = -int M e_j . grad v` for all `j`.
pub fn corrector_m_loads(space: &PeriodicLagrangeSpace, coeffs: &Coefficients, x: [f64; 3]) -> Vec<Load> {
    let n = coeffs.n();
    let nc = n / 3;
    let ns = space.n_scalar();
    let grads: Vec<Vec<[f64; 3]>> = (0..space.rule.len()).map(|q| space.grads(q)).collect();
    let mut b = vec![vec![0.0; space.n_dofs()]; n];
    let mut babs = vec![vec![0.0; space.n_dofs()]; n];
    let mut m = vec![0.0; n * n];
    let mut r = vec![0.0; n * n];
    for_each_point(space, |_, nodes, q, w, y| {
        coeffs.eval(x, y, &mut m, &mut r);
        for (a, &s) in nodes.iter().enumerate() {
            let g = grads[q][a];
            for c in 0..nc {
                for j in 0..n {
                    let v = w
                        * (m[(3 * c) * n + j] * g[0] + m[(3 * c + 1) * n + j] * g[1] + m[(3 * c + 2) * n + j] * g[2]);
                    if v != 0.0 {
                        b[j][c * ns + s] -= v;
                        babs[j][c * ns + s] += v.abs();
                    }
                }
            }
        }
    });
    b.into_iter()
        .zip(babs)
        .map(|(values, a)| Load {
            values,
            magnitude: norm2(&a),
        })
        .collect()
}

/// Everything computed from `w^M` in one sweep over the micro quadrature.
#[derive(Debug, Clone)]
pub struct CorrectedAverages {
    pub m_h: DMatrix<f64>,
    pub r_h: DMatrix<f64>,
    /// Loads of the `w^G(0)` problems, `-int R (e_j + grad w^M_j) . grad v`.
    pub loads_g: Vec<Load>,
    /// `q_i(v) = int R grad v . (e_i + grad w^M_i)`, so that
    /// `G^H_ij = q_i(w^G_j)`.
    pub test_functionals: Vec<Vec<f64>>,
    /// `-int R grad w^M_j . (e_i + grad w^M_i)`: the extra source at `t = 0`
    /// evaluated without the `w^N` corrector.
    pub j0_direct: DMatrix<f64>,
    /// `M^H - (M^H)^T` before symmetrisation.
    pub m_h_asymmetry: f64,
}

/// Gradients of all `n` fields at a quadrature point, as the `n x n` matrix
/// whose column `j` is `grad w_j`.
fn field_gradients(
    fields: &[Vec<f64>],
    nodes: &[usize],
    grads: &[[f64; 3]],
    ns: usize,
    n: usize,
    out: &mut [f64],
) {
    let nc = n / 3;
    out.iter_mut().for_each(|v| *v = 0.0);
    for (j, f) in fields.iter().enumerate() {
        for c in 0..nc {
            let off = c * ns;
            let (mut g0, mut g1, mut g2) = (0.0, 0.0, 0.0);
            for (a, &s) in nodes.iter().enumerate() {
                let u = f[off + s];
                if u != 0.0 {
                    g0 += u * grads[a][0];
                    g1 += u * grads[a][1];
                    g2 += u * grads[a][2];
                }
            }
            out[(3 * c) * n + j] = g0;
            out[(3 * c + 1) * n + j] = g1;
            out[(3 * c + 2) * n + j] = g2;
        }
    }
}

pub fn corrected_averages(
    space: &PeriodicLagrangeSpace,
    coeffs: &Coefficients,
    x: [f64; 3],
    w_m: &[Vec<f64>],
) -> CorrectedAverages {
    let n = coeffs.n();
    let nc = n / 3;
    let ns = space.n_scalar();
    let grads: Vec<Vec<[f64; 3]>> = (0..space.rule.len()).map(|q| space.grads(q)).collect();
    let mut m = vec![0.0; n * n];
    let mut r = vec![0.0; n * n];
    let mut dw = vec![0.0; n * n];
    let mut m_h = DMatrix::zeros(n, n);
    let mut r_h = DMatrix::zeros(n, n);
    let mut j0 = DMatrix::zeros(n, n);
    let mut loads = vec![vec![0.0; space.n_dofs()]; n];
    let mut loads_abs = vec![vec![0.0; space.n_dofs()]; n];
    let mut qf = vec![vec![0.0; space.n_dofs()]; n];
    for_each_point(space, |_, nodes, q, w, y| {
        coeffs.eval(x, y, &mut m, &mut r);
        field_gradients(w_m, nodes, &grads[q], ns, n, &mut dw);
        // G = I + dW (columns g_j)
        let gm = DMatrix::from_fn(n, n, |i, j| dw[i * n + j] + if i == j { 1.0 } else { 0.0 });
        let mm = DMatrix::from_row_slice(n, n, &m);
        let rm = DMatrix::from_row_slice(n, n, &r);
        let dwm = DMatrix::from_row_slice(n, n, &dw);
        m_h += (gm.transpose() * &mm * &gm) * w;
        let rg = &rm * &gm; // columns R g_j
        r_h += (gm.transpose() * &rg) * w;
        // (R grad w^M_j) . g_i
        j0 -= (gm.transpose() * (&rm * &dwm)) * w;
        if rm.iter().all(|v| *v == 0.0) {
            return;
        }
        let rtg = rm.transpose() * &gm; // columns R^T g_i
        for (a, &s) in nodes.iter().enumerate() {
            let g = grads[q][a];
            for c in 0..nc {
                let idx = c * ns + s;
                for j in 0..n {
                    let v = w * (rg[(3 * c, j)] * g[0] + rg[(3 * c + 1, j)] * g[1] + rg[(3 * c + 2, j)] * g[2]);
                    loads[j][idx] -= v;
                    loads_abs[j][idx] += v.abs();
                    qf[j][idx] +=
                        w * (rtg[(3 * c, j)] * g[0] + rtg[(3 * c + 1, j)] * g[1] + rtg[(3 * c + 2, j)] * g[2]);
                }
            }
        }
    });
    let m_h_asymmetry = (&m_h - m_h.transpose()).amax();
    let m_h = (&m_h + m_h.transpose()) * 0.5;
    CorrectedAverages {
        m_h,
        r_h,
        loads_g: loads
            .into_iter()
            .zip(loads_abs)
            .map(|(values, a)| Load {
                values,
                magnitude: norm2(&a),
            })
            .collect(),
        test_functionals: qf,
        j0_direct: j0,
        m_h_asymmetry,
    }
}

/// Crank–Nicolson propagator for `m(dw/dt, v) + r(w, v) = 0`.
pub struct SobolevStepper<'a> {
    space: &'a PeriodicLagrangeSpace,
    forms: &'a MicroForms,
    plus: CsrMatrix,
    minus: CsrMatrix,
    pub tau: f64,
    opts: CellOptions,
}

impl<'a> SobolevStepper<'a> {
    pub fn new(space: &'a PeriodicLagrangeSpace, forms: &'a MicroForms, tau: f64, opts: CellOptions) -> Self {
        SobolevStepper {
            space,
            forms,
            plus: forms.km.lin_comb(1.0, &forms.kr, 0.5 * tau),
            minus: forms.km.lin_comb(1.0, &forms.kr, -0.5 * tau),
            tau,
            opts,
        }
    }

    /// One step `(K_m + tau/2 K_r) w+ = (K_m - tau/2 K_r) w`, warm-started at `w`.
    pub fn step(&self, w: &[f64]) -> Result<Vec<f64>> {
        let rhs = self.minus.matvec(w);
        let mut x = w.to_vec();
        let op = self.forms.augmented(&self.plus, self.space);
        let n = op.dim();
        let opts = SolverOptions::new(self.opts.cn_rtol, 10 * n.max(10));
        if self.forms.kr_symmetric {
            cg(&op, &rhs, &mut x, &opts)?;
        } else {
            gmres(&op, &rhs, &mut x, &opts)?;
        }
        Ok(x)
    }

    /// Evolves `steps` steps, calling `visit(m, w_m)` for `m = 0..=steps`.
    /// Returns the m-norms; growth beyond the slack is an invariant violation.
    pub fn evolve(&self, w0: &[f64], steps: usize, mut visit: impl FnMut(usize, &[f64])) -> Result<Vec<f64>> {
        let mut norms = Vec::with_capacity(steps + 1);
        let mut w = w0.to_vec();
        norms.push(self.forms.m_norm(&w));
        visit(0, &w);
        let zero = w.iter().all(|v| *v == 0.0);
        for m in 1..=steps {
            if !zero {
                w = self.step(&w)?;
            }
            let nm = self.forms.m_norm(&w);
            let prev = norms[m - 1];
            if nm > prev * (1.0 + self.opts.contraction_slack) + f64::MIN_POSITIVE {
                return Err(Error::invariant(format!(
                    "Sobolev m-norm grew from {prev:.16e} to {nm:.16e} at step {m}"
                )));
            }
            norms.push(nm);
            visit(m, &w);
        }
        Ok(norms)
    }
}

/// Convenience wrapper returning the whole trajectory.
pub fn sobolev_evolve(
    space: &PeriodicLagrangeSpace,
    forms: &MicroForms,
    w0: &[f64],
    tau: f64,
    steps: usize,
    opts: CellOptions,
) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let stepper = SobolevStepper::new(space, forms, tau, opts);
    let mut traj = Vec::with_capacity(steps + 1);
    let norms = stepper.evolve(w0, steps, |_, w| traj.push(w.to_vec()))?;
    Ok((traj, norms))
}

/// Solved cell problems and the HMM tensors at one macroscopic point.
#[derive(Debug, Clone)]
pub struct CellSolution {
    pub x: [f64; 3],
    pub bounds: CoefficientBounds,
    pub m_h: DMatrix<f64>,
    pub r_h: DMatrix<f64>,
    /// `G^H(t_m)` and `J^H(t_m)` on the time grid.
    pub g_h: Vec<DMatrix<f64>>,
    pub j_h: Vec<DMatrix<f64>>,
    pub j0_direct: DMatrix<f64>,
    pub m_h_asymmetry: f64,
    pub w_m: Vec<Vec<f64>>,
    pub w_g0: Vec<Vec<f64>>,
    pub w_n0: Vec<Vec<f64>>,
    /// `||w(t_m)||_m` per corrector and grid node.
    pub norms_g: Vec<Vec<f64>>,
    pub norms_n: Vec<Vec<f64>>,
    pub norms_m: Vec<f64>,
    /// Full trajectories, only if requested.
    pub traj_g: Option<Vec<Vec<Vec<f64>>>>,
    pub traj_n: Option<Vec<Vec<Vec<f64>>>>,
    /// Largest relative Galerkin residual of the `w^M` problems.
    pub galerkin_residual: f64,
}

pub fn solve_corrector_m(space: &PeriodicLagrangeSpace, forms: &MicroForms, load: &Load, rtol: f64) -> Result<Vec<f64>> {
    solve_static(&forms.augmented(&forms.km, space), load, rtol)
}

/// `w^G_j(0)`: `m(w, v) = -int R (e_j + grad w^M_j) . grad v`.
pub fn solve_initial_g(space: &PeriodicLagrangeSpace, forms: &MicroForms, load_g: &Load, rtol: f64) -> Result<Vec<f64>> {
    solve_static(&forms.augmented(&forms.km, space), load_g, rtol)
}

/// `w^N_j(0)`: `m(w, v) = int M e_j . grad v`, i.e. the `w^M` problem with the
/// load negated. CG is odd in the right-hand side, so the result is exactly
/// `-w^M_j`.
pub fn solve_initial_n(space: &PeriodicLagrangeSpace, forms: &MicroForms, load_m: &Load, rtol: f64) -> Result<Vec<f64>> {
    solve_static(&forms.augmented(&forms.km, space), &load_m.negated(), rtol)
}

/// Solves every cell problem at `x` and tabulates the tensors on the grid
/// `t_m = m * tau`, `m = 0..=steps`.
pub fn solve_cell(
    space: &PeriodicLagrangeSpace,
    coeffs: &Coefficients,
    x: [f64; 3],
    tau: f64,
    steps: usize,
    opts: CellOptions,
) -> Result<CellSolution> {
    let n = coeffs.n();
    let forms = assemble_micro_forms(space, coeffs, x)?;
    let loads_m = corrector_m_loads(space, coeffs, x);
    let mut w_m = Vec::with_capacity(n);
    let mut galerkin: f64 = 0.0;
    for load in &loads_m {
        let w = solve_corrector_m(space, &forms, load, opts.rtol)?;
        let res = forms.km.matvec(&w);
        let r: Vec<f64> = res.iter().zip(&load.values).map(|(a, b)| a - b).collect();
        if load.magnitude > 0.0 {
            galerkin = galerkin.max(norm2(&r) / load.magnitude);
        }
        w_m.push(w);
    }
    let avg = corrected_averages(space, coeffs, x, &w_m);
    let mut w_g0 = Vec::with_capacity(n);
    let mut w_n0 = Vec::with_capacity(n);
    for j in 0..n {
        w_g0.push(solve_initial_g(space, &forms, &avg.loads_g[j], opts.rtol)?);
        w_n0.push(solve_initial_n(space, &forms, &loads_m[j], opts.rtol)?);
    }

    let stepper = SobolevStepper::new(space, &forms, tau, opts);
    let q = &avg.test_functionals;
    let mut g_h = vec![DMatrix::zeros(n, n); steps + 1];
    let mut j_h = vec![DMatrix::zeros(n, n); steps + 1];
    let mut norms_g = Vec::with_capacity(n);
    let mut norms_n = Vec::with_capacity(n);
    let mut traj_g = opts.store_trajectories.then(Vec::new);
    let mut traj_n = opts.store_trajectories.then(Vec::new);
    for j in 0..n {
        let mut tg = Vec::new();
        norms_g.push(stepper.evolve(&w_g0[j], steps, |m, w| {
            for i in 0..n {
                g_h[m][(i, j)] = dot(&q[i], w);
            }
            if opts.store_trajectories {
                tg.push(w.to_vec());
            }
        })?);
        let mut tn = Vec::new();
        norms_n.push(stepper.evolve(&w_n0[j], steps, |m, w| {
            for i in 0..n {
                j_h[m][(i, j)] = dot(&q[i], w);
            }
            if opts.store_trajectories {
                tn.push(w.to_vec());
            }
        })?);
        if let (Some(a), Some(b)) = (traj_g.as_mut(), traj_n.as_mut()) {
            a.push(tg);
            b.push(tn);
        }
    }
    let norms_m = w_m.iter().map(|w| forms.m_norm(w)).collect();
    Ok(CellSolution {
        x,
        bounds: forms.bounds,
        m_h: avg.m_h,
        r_h: avg.r_h,
        g_h,
        j_h,
        j0_direct: avg.j0_direct,
        m_h_asymmetry: avg.m_h_asymmetry,
        w_m,
        w_g0,
        w_n0,
        norms_g,
        norms_n,
        norms_m,
        traj_g,
        traj_n,
        galerkin_residual: galerkin,
    })
}
