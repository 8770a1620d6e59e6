//! Dense-matrix references: exact exponentials of small semi-discrete systems
//! and a 1D periodic P1 discretisation of laminate cell problems.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::materials::Profile;
use crate::quadrature::GaussLegendre;
use crate::sparse::CsrMatrix;

/// Largest constrained system the Sobolev oracle will factor.
pub const SOBOLEV_LIMIT: usize = 500;
/// Largest macro system the method-of-lines oracle will exponentiate.
pub const MOL_LIMIT: usize = 2000;

/// Orthonormal basis of the complement of `span(constraints)`.
fn complement_basis(dim: usize, constraints: &[DVector<f64>]) -> DMatrix<f64> {
    if constraints.is_empty() {
        return DMatrix::identity(dim, dim);
    }
    let c = DMatrix::from_columns(constraints);
    let q = c.qr().q();
    let p = DMatrix::identity(dim, dim) - &q * q.transpose();
    let eig = p.symmetric_eigen();
    let cols: Vec<DVector<f64>> = (0..dim)
        .filter(|&i| eig.eigenvalues[i] > 0.5)
        .map(|i| eig.eigenvectors.column(i).into_owned())
        .collect();
    DMatrix::from_columns(&cols)
}

enum Propagator {
    /// `K_m = L L^T`, `L^{-1} K_r L^{-T} = V diag(lambda) V^T`.
    Symmetric {
        left: DMatrix<f64>,
        right: DMatrix<f64>,
        lambda: DVector<f64>,
    },
    General(DMatrix<f64>),
}

/// `w(t) = exp(-K_m^{-1} K_r t) w(0)` on the subspace orthogonal to the
/// constraint vectors (the zero-mean space for periodic cell problems).
pub struct DenseSobolev {
    basis: DMatrix<f64>,
    prop: Propagator,
}

impl DenseSobolev {
    pub fn new(km: &DMatrix<f64>, kr: &DMatrix<f64>, constraints: &[DVector<f64>]) -> Result<Self> {
        let dim = km.nrows();
        if dim.saturating_sub(constraints.len()) > SOBOLEV_LIMIT {
            return Err(Error::config(format!(
                "dense Sobolev oracle is limited to {SOBOLEV_LIMIT} constrained DOFs, got {}",
                dim - constraints.len()
            )));
        }
        let basis = complement_basis(dim, constraints);
        let m = basis.transpose() * km * &basis;
        let r = basis.transpose() * kr * &basis;
        let m = (&m + m.transpose()) * 0.5;
        let chol = m
            .clone()
            .cholesky()
            .ok_or_else(|| Error::numerical("constrained m-form is not positive definite", 0.0))?;
        let symmetric = (&r - r.transpose()).amax() <= 1e-14 * r.amax().max(1.0);
        let prop = if symmetric {
            let l = chol.l();
            let linv = l
                .clone()
                .try_inverse()
                .ok_or_else(|| Error::numerical("singular Cholesky factor", 0.0))?;
            let s = &linv * &r * linv.transpose();
            let eig = ((&s + s.transpose()) * 0.5).symmetric_eigen();
            Propagator::Symmetric {
                left: linv.transpose() * &eig.eigenvectors,
                right: eig.eigenvectors.transpose() * l.transpose(),
                lambda: eig.eigenvalues,
            }
        } else {
            Propagator::General(chol.solve(&r))
        };
        Ok(DenseSobolev { basis, prop })
    }

    pub fn evolve(&self, w0: &[f64], t: f64) -> Vec<f64> {
        let c0 = self.basis.transpose() * DVector::from_column_slice(w0);
        let c = match &self.prop {
            Propagator::Symmetric { left, right, lambda } => {
                let mut z = right * c0;
                for (zi, l) in z.iter_mut().zip(lambda.iter()) {
                    *zi *= (-l * t).exp();
                }
                left * z
            }
            Propagator::General(a) => (a * -t).exp() * c0,
        };
        (&self.basis * c).as_slice().to_vec()
    }
}

/// One-shot form of [`DenseSobolev`].
pub fn dense_sobolev_oracle(
    km: &DMatrix<f64>,
    kr: &DMatrix<f64>,
    constraints: &[DVector<f64>],
    w0: &[f64],
    t: f64,
) -> Result<Vec<f64>> {
    Ok(DenseSobolev::new(km, kr, constraints)?.evolve(w0, t))
}

/// `u(t) = exp(-M^{-1} K t) u(0)` for `M u' + K u = 0`, evaluated at each time.
pub fn dense_mol(mass: &CsrMatrix, stiffness: &CsrMatrix, u0: &[f64], times: &[f64]) -> Result<Vec<Vec<f64>>> {
    let n = mass.nrows;
    if n > MOL_LIMIT {
        return Err(Error::config(format!("dense method-of-lines oracle is limited to {MOL_LIMIT} DOFs, got {n}")));
    }
    let m = mass.to_dense();
    let chol = m
        .cholesky()
        .ok_or_else(|| Error::numerical("mass matrix is not positive definite", 0.0))?;
    let a = chol.solve(&stiffness.to_dense());
    let u0 = DVector::from_column_slice(u0);
    Ok(times
        .iter()
        .map(|&t| ((&a * -t).exp() * &u0).as_slice().to_vec())
        .collect())
}

/// Periodic P1 elements on `[0, 1)` for scalar coefficients `a(y)`, `r(y)`,
/// i.e. the cell problems of a laminate in its lamination coordinate.
pub struct Periodic1d {
    pub cells: usize,
    pub km: DMatrix<f64>,
    pub kr: DMatrix<f64>,
    /// `int a phi_i'`, `int r phi_i'`.
    load_a: DVector<f64>,
    load_r: DVector<f64>,
    means: DVector<f64>,
    gauss: GaussLegendre,
    a: Profile,
    r: Profile,
    axis: usize,
}

impl Periodic1d {
    pub fn new(a: &Profile, r: &Profile, cells: usize) -> Result<Self> {
        if cells < 2 {
            return Err(Error::config("periodic 1D mesh needs at least 2 cells"));
        }
        let axis = a.axis().or(r.axis()).unwrap_or(0);
        let h = 1.0 / cells as f64;
        let gauss = GaussLegendre::new(4);
        let mut km = DMatrix::zeros(cells, cells);
        let mut kr = DMatrix::zeros(cells, cells);
        let mut load_a = DVector::zeros(cells);
        let mut load_r = DVector::zeros(cells);
        for k in 0..cells {
            let nodes = [k, (k + 1) % cells];
            let d = [-1.0 / h, 1.0 / h];
            for (s, w) in gauss.points.iter().zip(&gauss.weights) {
                let mut y = [0.5; 3];
                y[axis] = (k as f64 + s) * h;
                let (av, rv) = (a.eval(y), r.eval(y));
                for i in 0..2 {
                    load_a[nodes[i]] += w * h * av * d[i];
                    load_r[nodes[i]] += w * h * rv * d[i];
                    for j in 0..2 {
                        km[(nodes[i], nodes[j])] += w * h * av * d[i] * d[j];
                        kr[(nodes[i], nodes[j])] += w * h * rv * d[i] * d[j];
                    }
                }
            }
        }
        Ok(Periodic1d {
            cells,
            km,
            kr,
            load_a,
            load_r,
            means: DVector::from_element(cells, h),
            gauss,
            a: a.clone(),
            r: r.clone(),
            axis,
        })
    }

    fn solve_zero_mean(&self, k: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
        let q = complement_basis(self.cells, std::slice::from_ref(&self.means));
        let kq = q.transpose() * k * &q;
        let c = kq
            .cholesky()
            .ok_or_else(|| Error::numerical("1D cell matrix is not positive definite", 0.0))?
            .solve(&(q.transpose() * b));
        Ok(q * c)
    }

    /// `w^M`: `m(w, v) = -int a v'`.
    pub fn corrector_m(&self) -> Result<Vec<f64>> {
        Ok(self.solve_zero_mean(&self.km, &-&self.load_a)?.as_slice().to_vec())
    }

    /// `w^G(0)`: `m(w, v) = -int r (1 + w_M') v'`.
    pub fn corrector_g0(&self, w_m: &[f64]) -> Result<Vec<f64>> {
        let wm = DVector::from_column_slice(w_m);
        let b = -(&self.load_r + &self.kr * wm);
        Ok(self.solve_zero_mean(&self.km, &b)?.as_slice().to_vec())
    }

    pub fn sobolev(&self) -> Result<DenseSobolev> {
        DenseSobolev::new(&self.km, &self.kr, std::slice::from_ref(&self.means))
    }

    /// Value and derivative at `y` (in the lamination coordinate).
    pub fn eval(&self, w: &[f64], y: f64) -> (f64, f64) {
        let s = (y - y.floor()) * self.cells as f64;
        let k = (s.floor() as usize).min(self.cells - 1);
        let xi = s - k as f64;
        let (w0, w1) = (w[k], w[(k + 1) % self.cells]);
        (w0 + xi * (w1 - w0), (w1 - w0) * self.cells as f64)
    }

    /// `H^1(0,1)` distance to `other(y) -> (value, derivative)`, integrated on
    /// this mesh with a 4-point rule per cell.
    pub fn h1_distance(&self, w: &[f64], other: impl Fn(f64) -> (f64, f64)) -> f64 {
        let h = 1.0 / self.cells as f64;
        let mut acc = 0.0;
        for k in 0..self.cells {
            for (s, wq) in self.gauss.points.iter().zip(&self.gauss.weights) {
                let y = (k as f64 + s) * h;
                let (v, d) = self.eval(w, y);
                let (vo, dov) = other(y);
                acc += wq * h * ((v - vo).powi(2) + (d - dov).powi(2));
            }
        }
        acc.sqrt()
    }

    /// `M^0` along the lamination axis from the discrete corrector.
    pub fn m_effective(&self, w_m: &[f64]) -> f64 {
        let h = 1.0 / self.cells as f64;
        let mut acc = 0.0;
        for k in 0..self.cells {
            for (s, wq) in self.gauss.points.iter().zip(&self.gauss.weights) {
                let mut y = [0.5; 3];
                y[self.axis] = (k as f64 + s) * h;
                let (_, d) = self.eval(w_m, y[self.axis]);
                acc += wq * h * self.a.eval(y) * (1.0 + d);
            }
        }
        acc
    }

    pub fn profiles(&self) -> (&Profile, &Profile) {
        (&self.a, &self.r)
    }
}
