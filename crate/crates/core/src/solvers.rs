//! Jacobi-preconditioned Krylov solvers.

use crate::error::{Error, Result};
use crate::sparse::{axpy, dot, norm2, CsrMatrix};

/// Anything that can be applied to a vector and exposes its diagonal.
pub trait LinearOperator {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
    fn diagonal(&self) -> Vec<f64>;
}

impl LinearOperator for CsrMatrix {
    fn dim(&self) -> usize {
        self.nrows
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.matvec_into(x, y)
    }

    fn diagonal(&self) -> Vec<f64> {
        CsrMatrix::diagonal(self)
    }
}

/// `A + s * sum_c mu_c mu_c^T`: a sparse matrix plus rank-one terms, used to
/// pin the mean of each component of a periodic field.
pub struct RankOneAugmented<'a> {
    pub base: &'a CsrMatrix,
    /// Support offset and weights of each rank-one vector.
    pub vectors: Vec<(usize, &'a [f64])>,
    pub scale: f64,
}

impl LinearOperator for RankOneAugmented<'_> {
    fn dim(&self) -> usize {
        self.base.nrows
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.base.matvec_into(x, y);
        for &(off, mu) in &self.vectors {
            let s = self.scale * dot(mu, &x[off..off + mu.len()]);
            axpy(s, mu, &mut y[off..off + mu.len()]);
        }
    }

    fn diagonal(&self) -> Vec<f64> {
        let mut d = self.base.diagonal();
        for &(off, mu) in &self.vectors {
            for (k, m) in mu.iter().enumerate() {
                d[off + k] += self.scale * m * m;
            }
        }
        d
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveStats {
    pub iterations: usize,
    pub residual: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    /// Stop once `||r|| <= rtol * ||b|| + atol`.
    pub rtol: f64,
    pub atol: f64,
    pub max_iter: usize,
    /// GMRES restart length.
    pub restart: usize,
}

impl SolverOptions {
    pub fn new(rtol: f64, max_iter: usize) -> Self {
        SolverOptions {
            rtol,
            atol: 0.0,
            max_iter,
            restart: 60,
        }
    }
}

fn jacobi(op: &dyn LinearOperator) -> Vec<f64> {
    op.diagonal()
        .into_iter()
        .map(|d| if d.abs() > 0.0 { 1.0 / d } else { 1.0 })
        .collect()
}

/// Preconditioned conjugate gradients; `x` holds the initial guess on entry.
pub fn cg(op: &dyn LinearOperator, b: &[f64], x: &mut [f64], opts: &SolverOptions) -> Result<SolveStats> {
    let n = op.dim();
    let pinv = jacobi(op);
    let target = opts.rtol * norm2(b) + opts.atol;
    let mut r = vec![0.0; n];
    op.apply(x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let mut res = norm2(&r);
    if res <= target {
        return Ok(SolveStats {
            iterations: 0,
            residual: res,
        });
    }
    let mut z: Vec<f64> = r.iter().zip(&pinv).map(|(a, p)| a * p).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    for it in 1..=opts.max_iter {
        op.apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::numerical(
                format!("conjugate gradients broke down at iteration {it} (p^T A p = {pap:.3e})"),
                res,
            ));
        }
        let alpha = rz / pap;
        axpy(alpha, &p, x);
        axpy(-alpha, &ap, &mut r);
        res = norm2(&r);
        if res <= target {
            return Ok(SolveStats {
                iterations: it,
                residual: res,
            });
        }
        for i in 0..n {
            z[i] = r[i] * pinv[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::numerical(
        format!("conjugate gradients did not converge in {} iterations", opts.max_iter),
        res,
    ))
}

/// Restarted GMRES with right Jacobi preconditioning.
pub fn gmres(op: &dyn LinearOperator, b: &[f64], x: &mut [f64], opts: &SolverOptions) -> Result<SolveStats> {
    let n = op.dim();
    let pinv = jacobi(op);
    let target = opts.rtol * norm2(b) + opts.atol;
    let m = opts.restart.max(1).min(n.max(1));
    let mut total = 0;
    let mut r = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut zbuf = vec![0.0; n];
    loop {
        op.apply(x, &mut r);
        for i in 0..n {
            r[i] = b[i] - r[i];
        }
        let beta = norm2(&r);
        if beta <= target {
            return Ok(SolveStats {
                iterations: total,
                residual: beta,
            });
        }
        if total >= opts.max_iter {
            return Err(Error::numerical(
                format!("GMRES did not converge in {} iterations", opts.max_iter),
                beta,
            ));
        }
        let mut v: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
        v.push(r.iter().map(|ri| ri / beta).collect());
        let mut h = vec![vec![0.0; m]; m + 1];
        let (mut cs, mut sn) = (vec![0.0; m], vec![0.0; m]);
        let mut g = vec![0.0; m + 1];
        g[0] = beta;
        let mut k_used = 0;
        for k in 0..m {
            for i in 0..n {
                zbuf[i] = v[k][i] * pinv[i];
            }
            op.apply(&zbuf, &mut w);
            // modified Gram-Schmidt
            for (j, vj) in v.iter().enumerate() {
                let hjk = dot(&w, vj);
                h[j][k] = hjk;
                axpy(-hjk, vj, &mut w);
            }
            let hn = norm2(&w);
            h[k + 1][k] = hn;
            for j in 0..k {
                let t = cs[j] * h[j][k] + sn[j] * h[j + 1][k];
                h[j + 1][k] = -sn[j] * h[j][k] + cs[j] * h[j + 1][k];
                h[j][k] = t;
            }
            let d = (h[k][k] * h[k][k] + h[k + 1][k] * h[k + 1][k]).sqrt();
            if d == 0.0 {
                k_used = k;
                break;
            }
            cs[k] = h[k][k] / d;
            sn[k] = h[k + 1][k] / d;
            h[k][k] = d;
            h[k + 1][k] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            k_used = k + 1;
            total += 1;
            let lucky = hn <= f64::EPSILON * beta;
            if g[k + 1].abs() <= target || total >= opts.max_iter || lucky {
                break;
            }
            v.push(w.iter().map(|wi| wi / hn).collect());
        }
        if k_used == 0 {
            return Err(Error::numerical("GMRES breakdown: zero Krylov direction", beta));
        }
        // back substitution
        let mut y = vec![0.0; k_used];
        for i in (0..k_used).rev() {
            let mut s = g[i];
            for j in i + 1..k_used {
                s -= h[i][j] * y[j];
            }
            y[i] = s / h[i][i];
        }
        for i in 0..n {
            let mut s = 0.0;
            for (j, yj) in y.iter().enumerate() {
                s += yj * v[j][i];
            }
            x[i] += s * pinv[i];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplace_1d(n: usize) -> CsrMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0 + 0.01 * i as f64));
            if i > 0 {
                t.push((i, i - 1, -1.0));
            }
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
            }
        }
        CsrMatrix::from_triplets(n, n, t).unwrap()
    }

    #[test]
    fn cg_solves_spd_system() {
        let a = laplace_1d(50);
        let xs: Vec<f64> = (0..50).map(|i| (i as f64 * 0.3).sin()).collect();
        let b = a.matvec(&xs);
        let mut x = vec![0.0; 50];
        let st = cg(&a, &b, &mut x, &SolverOptions::new(1e-12, 500)).unwrap();
        assert!(st.iterations <= 50);
        let err: f64 = x.iter().zip(&xs).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-9, "{err}");
    }

    #[test]
    fn cg_reports_non_convergence() {
        let a = laplace_1d(50);
        let b = vec![1.0; 50];
        let mut x = vec![0.0; 50];
        let e = cg(&a, &b, &mut x, &SolverOptions::new(1e-14, 2)).unwrap_err();
        assert!(matches!(e, Error::Numerical { residual, .. } if residual > 0.0));
    }

    #[test]
    fn gmres_solves_nonsymmetric_system() {
        let n = 40;
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 3.0));
            if i > 0 {
                t.push((i, i - 1, -1.5));
            }
            if i + 1 < n {
                t.push((i, i + 1, 0.7));
            }
        }
        let a = CsrMatrix::from_triplets(n, n, t).unwrap();
        let xs: Vec<f64> = (0..n).map(|i| 1.0 / (1.0 + i as f64)).collect();
        let b = a.matvec(&xs);
        let mut x = vec![0.0; n];
        let mut opts = SolverOptions::new(1e-13, 400);
        opts.restart = 7;
        gmres(&a, &b, &mut x, &opts).unwrap();
        let err: f64 = x.iter().zip(&xs).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-10, "{err}");
    }

    #[test]
    fn rank_one_augmentation_pins_the_mean() {
        // periodic 1D Laplacian is singular; the augmented operator is not
        let n = 16;
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            t.push((i, (i + 1) % n, -1.0));
            t.push((i, (i + n - 1) % n, -1.0));
        }
        let a = CsrMatrix::from_triplets(n, n, t).unwrap();
        let mu = vec![1.0 / n as f64; n];
        let op = RankOneAugmented {
            base: &a,
            vectors: vec![(0, &mu)],
            scale: 2.0 * n as f64 * n as f64,
        };
        let b: Vec<f64> = (0..n)
            .map(|i| (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
            .collect();
        let mut x = vec![0.0; n];
        cg(&op, &b, &mut x, &SolverOptions::new(1e-13, 200)).unwrap();
        let mean: f64 = x.iter().sum::<f64>() / n as f64;
        assert!(mean.abs() < 1e-12);
        let r = a.matvec(&x);
        let err: f64 = r.iter().zip(&b).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-10);
    }
}
