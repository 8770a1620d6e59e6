//! Smooth manufactured solution of the macroscopic system with constant
//! effective tensors on the unit cube.
//!
//! `E = S(x) cos t`, `H = T(x) sin t` with (`c_x = cos pi x`, `s_x = sin pi x`)
//! `S = (c_x s_y s_z, 2 s_x c_y s_z, 3 s_x s_y c_z)`, whose tangential trace
//! vanishes on every face, and `T = (c_x s_y, c_y s_z, c_z s_x)`. Every
//! component varies along its own axis, so edge elements see their generic
//! first-order `L^2` accuracy.
//! Kernels are `G(t) = e^{-t} G_c`, `J(t) = e^{-t} J_c`, so the memory
//! integrals have closed forms.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::effective::EffectiveTensorTable;

#[derive(Debug, Clone)]
pub struct Manufactured {
    pub m: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub g_c: DMatrix<f64>,
    pub j_c: DMatrix<f64>,
}

fn trig(x: [f64; 3]) -> ([f64; 3], [f64; 3]) {
    (x.map(|v| (PI * v).sin()), x.map(|v| (PI * v).cos()))
}

pub fn field_s(x: [f64; 3]) -> [f64; 3] {
    let ([sx, sy, sz], [cx, cy, cz]) = trig(x);
    [cx * sy * sz, 2.0 * sx * cy * sz, 3.0 * sx * sy * cz]
}

pub fn field_t(x: [f64; 3]) -> [f64; 3] {
    let ([sx, sy, sz], [cx, cy, cz]) = trig(x);
    [cx * sy, cy * sz, cz * sx]
}

pub fn curl_s(x: [f64; 3]) -> [f64; 3] {
    let ([sx, sy, sz], [cx, cy, cz]) = trig(x);
    [PI * sx * cy * cz, -2.0 * PI * cx * sy * cz, PI * cx * cy * sz]
}

pub fn curl_t(x: [f64; 3]) -> [f64; 3] {
    let (_, [cx, cy, cz]) = trig(x);
    [-PI * cy * cz, -PI * cz * cx, -PI * cx * cy]
}

impl Manufactured {
    /// The default instance: an anisotropic SPD mass, non-symmetric damping
    /// and a coupled kernel pair.
    pub fn standard() -> Self {
        let m = DMatrix::from_fn(6, 6, |i, j| {
            if i == j {
                2.0 + 0.25 * i as f64
            } else if i.abs_diff(j) == 1 {
                0.3
            } else {
                0.0
            }
        });
        let r = DMatrix::from_fn(6, 6, |i, j| {
            if i == j {
                0.5
            } else if j == i + 1 {
                0.2
            } else if i == j + 1 {
                -0.1
            } else {
                0.0
            }
        });
        let g_c = DMatrix::from_fn(6, 6, |i, j| if i == j { 0.4 } else if i == j + 3 { 0.1 } else { 0.0 });
        let j_c = DMatrix::from_fn(6, 6, |i, j| if i == j { -0.3 } else { 0.0 });
        Manufactured { m, r, g_c, j_c }
    }

    pub fn exact(&self, t: f64, x: [f64; 3]) -> Vec<f64> {
        let (s, tt) = (field_s(x), field_t(x));
        let mut u = Vec::with_capacity(6);
        u.extend(s.iter().map(|v| v * t.cos()));
        u.extend(tt.iter().map(|v| v * t.sin()));
        u
    }

    pub fn exact_curl(&self, t: f64, x: [f64; 3]) -> Vec<f64> {
        let (cs, ct) = (curl_s(x), curl_t(x));
        let mut u = Vec::with_capacity(6);
        u.extend(cs.iter().map(|v| v * t.cos()));
        u.extend(ct.iter().map(|v| v * t.sin()));
        u
    }

    pub fn initial(&self, x: [f64; 3]) -> Vec<f64> {
        self.exact(0.0, x)
    }

    /// `g = M u_t + R u + A u + int_0^t G(t - s) u(s) ds + J(t) u_0`.
    pub fn source(&self, t: f64, x: [f64; 3]) -> Vec<f64> {
        let (s, tt) = (field_s(x), field_t(x));
        let (cs, ct) = (curl_s(x), curl_t(x));
        let e = (-t).exp();
        let ic = 0.5 * (t.cos() + t.sin() - e);
        let is = 0.5 * (t.sin() - t.cos() + e);
        let vec6 = |a: [f64; 3], fa: f64, b: [f64; 3], fb: f64| {
            DVector::from_iterator(6, a.iter().map(|v| v * fa).chain(b.iter().map(|v| v * fb)))
        };
        let u = vec6(s, t.cos(), tt, t.sin());
        let ut = vec6(s, -t.sin(), tt, t.cos());
        let au = vec6(ct, -t.sin(), cs, t.cos());
        let mem = vec6(s, ic, tt, is);
        let u0 = vec6(s, 1.0, tt, 0.0);
        let g = &self.m * ut + &self.r * u + au + &self.g_c * mem + &self.j_c * u0 * e;
        g.as_slice().to_vec()
    }

    /// Tensor table with the constant tensors at `n_points` points.
    pub fn table(&self, n_points: usize, tau: f64, steps: usize) -> EffectiveTensorTable {
        let (g, j) = (self.g_c.clone(), self.j_c.clone());
        EffectiveTensorTable::uniform(
            self.m.clone(),
            self.r.clone(),
            move |t| &g * (-t).exp(),
            move |t| &j * (-t).exp(),
            n_points,
            tau,
            steps,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn num_curl(f: impl Fn([f64; 3]) -> [f64; 3], x: [f64; 3]) -> [f64; 3] {
        let h = 1e-6;
        let d = |i: usize, j: usize| {
            let mut xp = x;
            let mut xm = x;
            xp[j] += h;
            xm[j] -= h;
            (f(xp)[i] - f(xm)[i]) / (2.0 * h)
        };
        [d(2, 1) - d(1, 2), d(0, 2) - d(2, 0), d(1, 0) - d(0, 1)]
    }

    #[test]
    fn curls_match_finite_differences() {
        for x in [[0.1, 0.4, 0.7], [0.9, 0.2, 0.35]] {
            let (a, b) = (num_curl(field_s, x), curl_s(x));
            let (c, d) = (num_curl(field_t, x), curl_t(x));
            for i in 0..3 {
                assert!((a[i] - b[i]).abs() < 1e-8);
                assert!((c[i] - d[i]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn tangential_trace_vanishes() {
        let s = field_s([0.0, 0.3, 0.6]);
        assert!(s[1].abs() < 1e-15 && s[2].abs() < 1e-15);
        let s = field_s([0.3, 1.0, 0.6]);
        assert!(s[0].abs() < 1e-15 && s[2].abs() < 1e-15);
    }

    #[test]
    fn source_is_consistent_with_the_equation() {
        // residual of the continuous equation via finite differences in t and
        // trapezoidal quadrature of the memory term
        let mf = Manufactured::standard();
        let x = [0.3, 0.55, 0.8];
        let t = 0.9;
        let dt = 1e-5;
        let u = |t: f64| DVector::from_vec(mf.exact(t, x));
        let ut = (u(t + dt) - u(t - dt)) / (2.0 * dt);
        let cu = mf.exact_curl(t, x);
        let au = DVector::from_vec(vec![-cu[3], -cu[4], -cu[5], cu[0], cu[1], cu[2]]);
        let k = 4000;
        let h = t / k as f64;
        let mut mem = DVector::zeros(6);
        for i in 0..=k {
            let s = i as f64 * h;
            let w = if i == 0 || i == k { 0.5 * h } else { h };
            mem += &mf.g_c * u(s) * ((-(t - s)).exp() * w);
        }
        let lhs = &mf.m * ut + &mf.r * u(t) + au + mem + &mf.j_c * u(0.0) * (-t).exp();
        let g = DVector::from_vec(mf.source(t, x));
        assert!((lhs - g).amax() < 1e-6);
    }
}
