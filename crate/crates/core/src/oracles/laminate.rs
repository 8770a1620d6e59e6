//! Closed-form and semi-analytic references for laminated media, where every
//! cell problem collapses to an ODE in the lamination coordinate.
//!
//! For `M = a(y) I`, `R = r(y) I` varying along one axis, only the corrector
//! of the lamination direction is non-trivial. With `p = dw/dy`:
//!
//! * `a (1 + p_M) = a_h` (harmonic mean), so `M^0 = a_h`, `R^0 = <r a_h^2 / a^2>`;
//! * the Sobolev flow `a p_t + r p = c(t)`, `<p> = 0`, gives
//!   `G^0(t) = <r p_G a_h / a>` and `J^0(t) = <r p_N a_h / a>`,
//!   with `p_N(0) = 1 - a_h / a` and `a p_G(0) + r a_h / a` constant.
//!
//! Transverse directions carry the arithmetic means and no memory.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::materials::{Coefficients, Material, Profile};
use crate::quadrature::GaussLegendre;

/// Analytic effective tensor of a scalar profile: harmonic mean along the
/// lamination axis, arithmetic mean across it.
pub fn laminate_effective(profile: &Profile) -> Result<[f64; 3]> {
    match profile {
        Profile::Constant { value } => Ok([*value; 3]),
        Profile::Piecewise {
            axis,
            values,
            fractions,
        } => {
            let arith: f64 = values.iter().zip(fractions).map(|(v, f)| v * f).sum();
            let harm = 1.0 / values.iter().zip(fractions).map(|(v, f)| f / v).sum::<f64>();
            let mut out = [arith; 3];
            out[*axis] = harm;
            Ok(out)
        }
        Profile::Sinusoid {
            axis, mean, amplitude, ..
        } => {
            // <1 / (c + s sin)> = 1 / sqrt(c^2 - s^2)
            let mut out = [*mean; 3];
            out[*axis] = (mean * mean - amplitude * amplitude).sqrt();
            Ok(out)
        }
        Profile::Smooth { .. } => Err(Error::NotImplemented(
            "laminate formula needs a profile that varies along a single axis".into(),
        )),
    }
}

/// Semi-analytic oracle for `M = a I_6`, `R = r I_6` laminates.
#[derive(Debug, Clone)]
pub struct Laminate1d {
    pub axis: usize,
    a: Vec<f64>,
    r: Vec<f64>,
    w: Vec<f64>,
    a_h: f64,
}

impl Laminate1d {
    /// Composite Gauss rule with `intervals` cells of 6 points; piecewise
    /// interfaces must fall on cell boundaries for full accuracy.
    pub fn new(a: &Profile, r: &Profile, intervals: usize) -> Result<Self> {
        let axis = match (a.axis(), r.axis()) {
            (Some(i), Some(j)) if i != j => {
                return Err(Error::NotImplemented("M and R laminated along different axes".into()))
            }
            (Some(i), _) | (None, Some(i)) => i,
            (None, None) => 0,
        };
        if matches!(a, Profile::Smooth { .. }) || matches!(r, Profile::Smooth { .. }) {
            return Err(Error::NotImplemented("smooth 3D profile is not a laminate".into()));
        }
        let g = GaussLegendre::new(6);
        let h = 1.0 / intervals as f64;
        let (mut av, mut rv, mut w) = (Vec::new(), Vec::new(), Vec::new());
        for k in 0..intervals {
            for (s, gw) in g.points.iter().zip(&g.weights) {
                let mut y = [0.5; 3];
                y[axis] = (k as f64 + s) * h;
                av.push(a.eval(y));
                rv.push(r.eval(y));
                w.push(gw * h);
            }
        }
        let a_h = 1.0 / av.iter().zip(&w).map(|(a, w)| w / a).sum::<f64>();
        Ok(Laminate1d {
            axis,
            a: av,
            r: rv,
            w,
            a_h,
        })
    }

    pub fn from_coefficients(c: &Coefficients, intervals: usize) -> Result<Self> {
        match &c.material {
            Material::Isotropic { m, r } if c.x_modulation == 0.0 => Self::new(m, r, intervals),
            _ => Err(Error::NotImplemented(
                "laminate oracle covers x-independent isotropic media only".into(),
            )),
        }
    }

    fn mean(&self, f: impl Fn(usize) -> f64) -> f64 {
        (0..self.w.len()).map(|k| self.w[k] * f(k)).sum()
    }

    pub fn harmonic_mean(&self) -> f64 {
        self.a_h
    }

    fn tensor(&self, lam: f64, trans: f64) -> DMatrix<f64> {
        let mut t = DMatrix::identity(6, 6) * trans;
        t[(self.axis, self.axis)] = lam;
        t[(3 + self.axis, 3 + self.axis)] = lam;
        t
    }

    fn memory(&self, lam: f64) -> DMatrix<f64> {
        self.tensor(lam, 0.0)
    }

    pub fn m_effective(&self) -> DMatrix<f64> {
        self.tensor(self.a_h, self.mean(|k| self.a[k]))
    }

    pub fn r_effective(&self) -> DMatrix<f64> {
        let ah = self.a_h;
        self.tensor(
            self.mean(|k| self.r[k] * ah * ah / (self.a[k] * self.a[k])),
            self.mean(|k| self.r[k]),
        )
    }

    fn initial_g(&self) -> Vec<f64> {
        let ah = self.a_h;
        let c0 = ah * self.mean(|k| self.r[k] * ah / (self.a[k] * self.a[k]));
        (0..self.w.len())
            .map(|k| (c0 - self.r[k] * ah / self.a[k]) / self.a[k])
            .collect()
    }

    fn initial_n(&self) -> Vec<f64> {
        (0..self.w.len()).map(|k| 1.0 - self.a_h / self.a[k]).collect()
    }

    fn kernel_value(&self, p: &[f64]) -> f64 {
        self.mean(|k| self.r[k] * p[k] * self.a_h / self.a[k])
    }

    /// One Crank–Nicolson step of the flow, exact in space.
    fn cn_step(&self, p: &[f64], tau: f64) -> Vec<f64> {
        let n = p.len();
        let plus: Vec<f64> = (0..n).map(|k| self.a[k] + 0.5 * tau * self.r[k]).collect();
        let pred: Vec<f64> = (0..n)
            .map(|k| (self.a[k] - 0.5 * tau * self.r[k]) * p[k] / plus[k])
            .collect();
        let c = -self.mean(|k| pred[k]) / self.mean(|k| 1.0 / plus[k]);
        (0..n).map(|k| pred[k] + c / plus[k]).collect()
    }

    fn rhs(&self, p: &[f64]) -> Vec<f64> {
        let n = p.len();
        let c = self.mean(|k| self.r[k] * p[k] / self.a[k]) / self.mean(|k| 1.0 / self.a[k]);
        (0..n).map(|k| (c - self.r[k] * p[k]) / self.a[k]).collect()
    }

    fn rk4_step(&self, p: &[f64], dt: f64) -> Vec<f64> {
        let add = |x: &[f64], y: &[f64], s: f64| -> Vec<f64> { x.iter().zip(y).map(|(a, b)| a + s * b).collect() };
        let k1 = self.rhs(p);
        let k2 = self.rhs(&add(p, &k1, 0.5 * dt));
        let k3 = self.rhs(&add(p, &k2, 0.5 * dt));
        let k4 = self.rhs(&add(p, &k3, dt));
        (0..p.len())
            .map(|k| p[k] + dt / 6.0 * (k1[k] + 2.0 * k2[k] + 2.0 * k3[k] + k4[k]))
            .collect()
    }

    /// `G^0`, `J^0` on the grid `t_m = m tau` using the same Crank–Nicolson
    /// time stepping as the micro solver; the only remaining error of a
    /// discrete kernel against this is spatial.
    pub fn kernels_cn(&self, tau: f64, steps: usize) -> (Vec<DMatrix<f64>>, Vec<DMatrix<f64>>) {
        let mut pg = self.initial_g();
        let mut pn = self.initial_n();
        let mut g = Vec::with_capacity(steps + 1);
        let mut j = Vec::with_capacity(steps + 1);
        for m in 0..=steps {
            if m > 0 {
                pg = self.cn_step(&pg, tau);
                pn = self.cn_step(&pn, tau);
            }
            g.push(self.memory(self.kernel_value(&pg)));
            j.push(self.memory(self.kernel_value(&pn)));
        }
        (g, j)
    }

    /// Time-continuous `G^0(t)`, `J^0(t)` at the requested (increasing) times,
    /// integrated with RK4 at step `dt`.
    pub fn kernels_exact(&self, times: &[f64], dt: f64) -> (Vec<DMatrix<f64>>, Vec<DMatrix<f64>>) {
        let mut pg = self.initial_g();
        let mut pn = self.initial_n();
        let mut t = 0.0;
        let mut g = Vec::new();
        let mut j = Vec::new();
        for &target in times {
            while t < target - 1e-14 {
                let h = dt.min(target - t);
                pg = self.rk4_step(&pg, h);
                pn = self.rk4_step(&pn, h);
                t += h;
            }
            g.push(self.memory(self.kernel_value(&pg)));
            j.push(self.memory(self.kernel_value(&pn)));
        }
        (g, j)
    }
}
