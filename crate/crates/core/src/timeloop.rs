//! Crank–Nicolson time stepping with trapezoidal convolution quadrature for
//! `M u' + (R + A) u + int_0^t G(t - s) u(s) ds = F(t) - J(t) u_0`.
//!
//! With `Ct^{m+1} = tau [G_{m+1} u^0 / 2 + sum_{l=1}^{m} G_{m+1-l} u^l]` the
//! step reads
//!
//! ```text
//! [M + tau/2 (R + A) + tau^2/4 G_0] u^{m+1}
//!     = [M - tau/2 (R + A)] u^m + tau/2 (F^{m+1} + F^m)
//!       - tau/2 (J^{m+1} + J^m) u_0 - tau/2 (C^m + Ct^{m+1}),
//! ```
//!
//! where `C^m = Ct^m + tau/2 G_0 u^m` (and `C^0 = 0`) is the full trapezoid
//! sum at `t_m`. Only one history sum is formed per step.

use nalgebra::DMatrix;

use crate::effective::EffectiveTensorTable;
use crate::error::{Error, Result};
use crate::macro_fem::forms::{assemble_gram, assemble_macro_forms, energy_norm, lift, project};
use crate::macro_fem::{MacroForms, NedelecSpace};
use crate::solvers::{gmres, SolverOptions};
use crate::sparse::{axpy, dot, CsrMatrix};

/// A semi-discrete linear Volterra system that the stepper can integrate.
pub trait MemoryOperator {
    fn dim(&self) -> usize;
    fn tau(&self) -> f64;
    /// Representation of a state in which the kernel acts (e.g. values at
    /// quadrature points).
    fn lift(&self, u: &[f64]) -> Vec<f64>;
    /// `acc += weight * G(t_m) lifted`.
    fn kernel_accumulate(&self, m: usize, weight: f64, lifted: &[f64], acc: &mut [f64]);
    /// Maps an accumulated lifted quantity back to a load vector.
    fn kernel_project(&self, acc: &[f64]) -> Vec<f64>;
    fn kernel_is_zero(&self) -> bool;
    /// `G(0) u` as a load vector.
    fn apply_kernel0(&self, u: &[f64]) -> Vec<f64>;
    fn apply_mass(&self, u: &[f64]) -> Vec<f64>;
    /// `(R + A) u`.
    fn apply_stiffness(&self, u: &[f64]) -> Vec<f64>;
    /// Solves `[M + tau/2 (R + A) + tau^2/4 G(0)] x = rhs`, `x` holding a guess.
    fn solve(&self, rhs: &[f64], x: &mut [f64]) -> Result<()>;
    /// `F(t_m)`.
    fn load(&self, m: usize) -> Vec<f64>;
    /// `J(t_m) u_0` as a load vector.
    fn extra_source(&self, m: usize) -> Vec<f64>;
    /// Number of grid steps the kernel tables cover.
    fn max_steps(&self) -> usize;
}

/// Current state plus the stored history.
#[derive(Debug, Clone)]
pub struct MacroState {
    pub m: usize,
    pub t: f64,
    pub u: Vec<f64>,
    /// Lifted `u^0..u^m`.
    pub history: Vec<Vec<f64>>,
    /// `Ct^m` (zero for `m = 0`).
    partial: Vec<f64>,
    zero_kernel: bool,
}

impl MacroState {
    pub fn new(op: &dyn MemoryOperator, u0: Vec<f64>) -> Self {
        let zero_kernel = op.kernel_is_zero();
        MacroState {
            m: 0,
            t: 0.0,
            history: if zero_kernel { Vec::new() } else { vec![op.lift(&u0)] },
            partial: vec![0.0; op.dim()],
            u: u0,
            zero_kernel,
        }
    }
}

/// Advances `state` by one step.
pub fn step(op: &dyn MemoryOperator, state: &mut MacroState) -> Result<()> {
    let m = state.m;
    if m + 1 > op.max_steps() {
        return Err(Error::config(format!(
            "kernel tables cover {} steps, cannot take step {}",
            op.max_steps(),
            m + 1
        )));
    }
    let tau = op.tau();
    let n = op.dim();
    let mut rhs = op.apply_mass(&state.u);
    axpy(-0.5 * tau, &op.apply_stiffness(&state.u), &mut rhs);
    let f0 = op.load(m);
    let f1 = op.load(m + 1);
    let j0 = op.extra_source(m);
    let j1 = op.extra_source(m + 1);
    for i in 0..n {
        rhs[i] += 0.5 * tau * (f0[i] + f1[i]) - 0.5 * tau * (j0[i] + j1[i]);
    }
    let mut partial_next = vec![0.0; n];
    if !state.zero_kernel {
        // C^m = Ct^m + tau/2 G_0 u^m
        let mut c_m = state.partial.clone();
        if m > 0 {
            axpy(0.5 * tau, &op.apply_kernel0(&state.u), &mut c_m);
        }
        // Ct^{m+1} = tau [G_{m+1} u^0 / 2 + sum_{l=1}^m G_{m+1-l} u^l]
        let mut acc = vec![0.0; state.history[0].len()];
        op.kernel_accumulate(m + 1, 0.5 * tau, &state.history[0], &mut acc);
        for l in 1..=m {
            op.kernel_accumulate(m + 1 - l, tau, &state.history[l], &mut acc);
        }
        partial_next = op.kernel_project(&acc);
        for i in 0..n {
            rhs[i] -= 0.5 * tau * (c_m[i] + partial_next[i]);
        }
    }
    let mut x = state.u.clone();
    op.solve(&rhs, &mut x)?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::numerical(format!("non-finite state at step {}", m + 1), f64::NAN));
    }
    if !state.zero_kernel {
        state.history.push(op.lift(&x));
    }
    state.partial = partial_next;
    state.u = x;
    state.m = m + 1;
    state.t = (m + 1) as f64 * tau;
    Ok(())
}

/// One row of the trajectory report.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub t: f64,
    pub norm_mh: f64,
    pub norm_l2: f64,
    pub bound: f64,
    pub energy_rel_drift: f64,
    pub within_bound: bool,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub records: Vec<StepRecord>,
    /// Stored states, every `keep_every`-th step (always including the last).
    pub snapshots: Vec<(usize, Vec<f64>)>,
    pub final_state: Vec<f64>,
}

impl Trajectory {
    pub fn all_within_bound(&self) -> bool {
        self.records.iter().all(|r| r.within_bound)
    }

    pub fn max_energy_drift(&self) -> f64 {
        self.records.iter().map(|r| r.energy_rel_drift.abs()).fold(0.0, f64::max)
    }

    /// True if the `m^H`-norm never increases (with relative slack).
    pub fn norm_non_increasing(&self, slack: f64) -> bool {
        self.records
            .windows(2)
            .all(|w| w[1].norm_mh <= w[0].norm_mh * (1.0 + slack))
    }
}

/// Integrates `steps` steps. `norms(u) -> (||u||_{m^H}, ||u||_{L^2})`,
/// `bound(m)` is the stability bound at `t_m`.
pub fn run(
    op: &dyn MemoryOperator,
    u0: Vec<f64>,
    steps: usize,
    norms: impl Fn(&[f64]) -> (f64, f64),
    bound: impl Fn(usize) -> f64,
    keep_every: usize,
) -> Result<Trajectory> {
    let mut state = MacroState::new(op, u0);
    let mut records = Vec::with_capacity(steps + 1);
    let mut snapshots = Vec::new();
    let (n0, l0) = norms(&state.u);
    let e0 = n0 * n0;
    let record = |m: usize, t: f64, nm: f64, nl: f64| {
        let b = bound(m);
        StepRecord {
            step: m,
            t,
            norm_mh: nm,
            norm_l2: nl,
            bound: b,
            energy_rel_drift: if e0 > 0.0 { (nm * nm - e0) / e0 } else { nm * nm },
            within_bound: nm <= b * (1.0 + 1e-12) + 1e-300,
        }
    };
    records.push(record(0, 0.0, n0, l0));
    if keep_every > 0 {
        snapshots.push((0, state.u.clone()));
    }
    for _ in 0..steps {
        step(op, &mut state)?;
        let (nm, nl) = norms(&state.u);
        records.push(record(state.m, state.t, nm, nl));
        if keep_every > 0 && (state.m % keep_every == 0 || state.m == steps) {
            snapshots.push((state.m, state.u.clone()));
        }
    }
    Ok(Trajectory {
        records,
        snapshots,
        final_state: state.u,
    })
}

/// Source `g(t, x)` as an `n`-vector, or none.
pub type SourceFn<'a> = Box<dyn Fn(f64, [f64; 3]) -> Vec<f64> + Sync + 'a>;

/// The FE-HMM system on a Nédélec space.
pub struct MacroProblem<'a> {
    pub space: &'a NedelecSpace,
    pub table: &'a EffectiveTensorTable,
    pub forms: MacroForms,
    pub gram: CsrMatrix,
    stiffness: CsrMatrix,
    lhs: CsrMatrix,
    tau: f64,
    source: Option<SourceFn<'a>>,
    u0_lifted: Vec<f64>,
    zero_kernel: bool,
    zero_extra: bool,
    pub solver_rtol: f64,
}

impl<'a> MacroProblem<'a> {
    pub fn new(
        space: &'a NedelecSpace,
        table: &'a EffectiveTensorTable,
        tau: f64,
        u0: &[f64],
        source: Option<SourceFn<'a>>,
    ) -> Result<Self> {
        if (table.meta.tau - tau).abs() > 1e-12 * tau {
            return Err(Error::config(format!(
                "tensor table was built for tau = {}, time loop uses {tau}",
                table.meta.tau
            )));
        }
        let forms = assemble_macro_forms(space, table)?;
        let stiffness = forms.damping.lin_comb(1.0, &forms.curl, 1.0);
        let zero_kernel = table.kernel_is_zero();
        let mut lhs = forms.mass.lin_comb(1.0, &stiffness, 0.5 * tau);
        if !zero_kernel {
            lhs = lhs.lin_comb(1.0, &forms.kernel0, 0.25 * tau * tau);
        }
        let zero_extra = table.source_is_zero() || u0.iter().all(|v| *v == 0.0);
        Ok(MacroProblem {
            space,
            table,
            gram: assemble_gram(space),
            stiffness,
            lhs,
            tau,
            source,
            u0_lifted: lift(space, u0),
            zero_kernel,
            zero_extra,
            forms,
            solver_rtol: 1e-13,
        })
    }

    pub fn norm_mh(&self, u: &[f64]) -> f64 {
        energy_norm(&self.forms.mass, u)
    }

    pub fn norm_l2(&self, u: &[f64]) -> f64 {
        energy_norm(&self.gram, u)
    }

    /// Quadrature `L^2` norm of the source at `t`.
    pub fn source_norm(&self, t: f64) -> f64 {
        let Some(g) = &self.source else { return 0.0 };
        let nq = self.space.rule.len();
        let mut acc = 0.0;
        for p in 0..self.space.n_points() {
            let v = g(t, self.space.point(p));
            acc += self.space.weight(p % nq) * v.iter().map(|x| x * x).sum::<f64>();
        }
        acc.sqrt()
    }

    pub fn lhs(&self) -> &CsrMatrix {
        &self.lhs
    }

    fn pointwise(&self, mats: impl Fn(usize) -> &'a DMatrix<f64>, weight: f64, lifted: &[f64], acc: &mut [f64]) {
        let n = self.space.n();
        for p in 0..self.space.n_points() {
            let g = mats(p);
            let x = &lifted[p * n..(p + 1) * n];
            if x.iter().all(|v| *v == 0.0) {
                continue;
            }
            let y = &mut acc[p * n..(p + 1) * n];
            for i in 0..n {
                let mut s = 0.0;
                for j in 0..n {
                    s += g[(i, j)] * x[j];
                }
                y[i] += weight * s;
            }
        }
    }
}

impl MemoryOperator for MacroProblem<'_> {
    fn dim(&self) -> usize {
        self.space.n_free()
    }

    fn tau(&self) -> f64 {
        self.tau
    }

    fn lift(&self, u: &[f64]) -> Vec<f64> {
        lift(self.space, u)
    }

    fn kernel_accumulate(&self, m: usize, weight: f64, lifted: &[f64], acc: &mut [f64]) {
        let t = self.table;
        self.pointwise(|p| &t.entry(p).g_h[m], weight, lifted, acc);
    }

    fn kernel_project(&self, acc: &[f64]) -> Vec<f64> {
        project(self.space, acc)
    }

    fn kernel_is_zero(&self) -> bool {
        self.zero_kernel
    }

    fn apply_kernel0(&self, u: &[f64]) -> Vec<f64> {
        self.forms.kernel0.matvec(u)
    }

    fn apply_mass(&self, u: &[f64]) -> Vec<f64> {
        self.forms.mass.matvec(u)
    }

    fn apply_stiffness(&self, u: &[f64]) -> Vec<f64> {
        self.stiffness.matvec(u)
    }

    fn solve(&self, rhs: &[f64], x: &mut [f64]) -> Result<()> {
        let n = self.dim();
        let opts = SolverOptions::new(self.solver_rtol, 20 * n.max(50));
        gmres(&self.lhs, rhs, x, &opts)?;
        Ok(())
    }

    fn load(&self, m: usize) -> Vec<f64> {
        match &self.source {
            None => vec![0.0; self.dim()],
            Some(g) => {
                let t = m as f64 * self.tau;
                crate::macro_fem::forms::load_from_fn(self.space, |x| g(t, x))
            }
        }
    }

    fn extra_source(&self, m: usize) -> Vec<f64> {
        if self.zero_extra {
            return vec![0.0; self.dim()];
        }
        let mut acc = vec![0.0; self.u0_lifted.len()];
        let t = self.table;
        self.pointwise(|p| &t.entry(p).j_h[m], 1.0, &self.u0_lifted, &mut acc);
        project(self.space, &acc)
    }

    fn max_steps(&self) -> usize {
        self.table.meta.steps
    }
}

/// Stability bound on the grid:
/// `e^{C_G(t)} [t/alpha sup|g| + (1 + |J|_{L1(L_inf)}/alpha) |u_0|]` with
/// `C_G(t) = (1/alpha) int_0^t |G|_{L1(0,s;L_inf)} ds`. Time integrals use the
/// trapezoid rule on the grid; `L_inf` is the maximum over quadrature points
/// of the spectral norm.
#[derive(Debug, Clone)]
pub struct StabilityReport {
    pub alpha: f64,
    pub u0_norm: f64,
    pub g_sup: Vec<f64>,
    pub c_g: Vec<f64>,
    pub j_l1: Vec<f64>,
    pub bound: Vec<f64>,
}

pub fn spectral_norm(a: &DMatrix<f64>) -> f64 {
    if a.iter().all(|v| *v == 0.0) {
        0.0
    } else {
        a.clone().svd(false, false).singular_values.max()
    }
}

/// Sup-in-space spectral norms of `G^H(t_m)` and `J^H(t_m)` over the grid.
pub fn kernel_sup_norms(table: &EffectiveTensorTable) -> (Vec<f64>, Vec<f64>) {
    let len = table.grid_len();
    let mut g = vec![0.0f64; len];
    let mut j = vec![0.0f64; len];
    for e in &table.entries {
        for m in 0..len {
            g[m] = g[m].max(spectral_norm(&e.g_h[m]));
            j[m] = j[m].max(spectral_norm(&e.j_h[m]));
        }
    }
    (g, j)
}

/// Bound at every grid node from the sup norms of `g(t_m)`, `G(t_m)`,
/// `J(t_m)`.
pub fn stability_bound(alpha: f64, tau: f64, u0_norm: f64, g_norm: &[f64], g_kernel: &[f64], j_kernel: &[f64]) -> StabilityReport {
    let len = g_kernel.len();
    let mut g_l1 = vec![0.0; len];
    let mut c_g = vec![0.0; len];
    let mut j_l1 = vec![0.0; len];
    let mut g_sup = vec![0.0; len];
    let mut bound = vec![0.0; len];
    for m in 0..len {
        if m > 0 {
            g_l1[m] = g_l1[m - 1] + 0.5 * tau * (g_kernel[m - 1] + g_kernel[m]);
            c_g[m] = c_g[m - 1] + 0.5 * tau * (g_l1[m - 1] + g_l1[m]) / alpha;
            j_l1[m] = j_l1[m - 1] + 0.5 * tau * (j_kernel[m - 1] + j_kernel[m]);
            g_sup[m] = g_sup[m - 1];
        }
        g_sup[m] = f64::max(g_sup[m], g_norm.get(m).copied().unwrap_or(0.0));
        let t = m as f64 * tau;
        bound[m] = c_g[m].exp() * (t / alpha * g_sup[m] + (1.0 + j_l1[m] / alpha) * u0_norm);
    }
    StabilityReport {
        alpha,
        u0_norm,
        g_sup,
        c_g,
        j_l1,
        bound,
    }
}

impl MacroProblem<'_> {
    pub fn stability_report(&self, u0: &[f64], steps: usize) -> StabilityReport {
        let (g, j) = kernel_sup_norms(self.table);
        let g_norm: Vec<f64> = (0..=steps).map(|m| self.source_norm(m as f64 * self.tau)).collect();
        stability_bound(
            self.table.bounds().alpha,
            self.tau,
            self.norm_mh(u0),
            &g_norm,
            &g[..=steps],
            &j[..=steps],
        )
    }

    /// Runs with the stability bound attached to every record.
    pub fn run(&self, u0: &[f64], steps: usize, keep_every: usize) -> Result<(Trajectory, StabilityReport)> {
        let report = self.stability_report(u0, steps);
        let traj = run(
            self,
            u0.to_vec(),
            steps,
            |u| (self.norm_mh(u), self.norm_l2(u)),
            |m| report.bound[m],
            keep_every,
        )?;
        Ok((traj, report))
    }
}

/// `u' = -int_0^t e^{-(t-s)} u(s) ds`, `u(0) = 1`: the smallest Volterra
/// problem with a closed-form solution,
/// `u = e^{-t/2} (cos wt + sin(wt) / (2w))`, `w = sqrt(3)/2`.
pub struct ScalarSurrogate {
    pub tau: f64,
    pub steps: usize,
}

impl ScalarSurrogate {
    pub fn exact(t: f64) -> f64 {
        let w = 3f64.sqrt() / 2.0;
        (-t / 2.0).exp() * ((w * t).cos() + (w * t).sin() / (2.0 * w))
    }

    /// Final-time error of the stepper.
    pub fn error(&self) -> Result<f64> {
        let mut state = MacroState::new(self, vec![1.0]);
        for _ in 0..self.steps {
            step(self, &mut state)?;
        }
        Ok((state.u[0] - Self::exact(state.t)).abs())
    }
}

impl MemoryOperator for ScalarSurrogate {
    fn dim(&self) -> usize {
        1
    }
    fn tau(&self) -> f64 {
        self.tau
    }
    fn lift(&self, u: &[f64]) -> Vec<f64> {
        u.to_vec()
    }
    fn kernel_accumulate(&self, m: usize, weight: f64, lifted: &[f64], acc: &mut [f64]) {
        acc[0] += weight * (-(m as f64) * self.tau).exp() * lifted[0];
    }
    fn kernel_project(&self, acc: &[f64]) -> Vec<f64> {
        acc.to_vec()
    }
    fn kernel_is_zero(&self) -> bool {
        false
    }
    fn apply_kernel0(&self, u: &[f64]) -> Vec<f64> {
        u.to_vec()
    }
    fn apply_mass(&self, u: &[f64]) -> Vec<f64> {
        u.to_vec()
    }
    fn apply_stiffness(&self, _: &[f64]) -> Vec<f64> {
        vec![0.0]
    }
    fn solve(&self, rhs: &[f64], x: &mut [f64]) -> Result<()> {
        x[0] = rhs[0] / (1.0 + 0.25 * self.tau * self.tau);
        Ok(())
    }
    fn load(&self, _: usize) -> Vec<f64> {
        vec![0.0]
    }
    fn extra_source(&self, _: usize) -> Vec<f64> {
        vec![0.0]
    }
    fn max_steps(&self) -> usize {
        self.steps
    }
}

/// Discrete energy `1/2 u^T M u`.
pub fn energy(mass: &CsrMatrix, u: &[f64]) -> f64 {
    0.5 * dot(u, &mass.matvec(u))
}
