//! Compressed sparse row matrices with deterministic assembly.

use std::io::Write;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        CsrMatrix {
            nrows,
            ncols,
            indptr: vec![0; nrows + 1],
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        CsrMatrix {
            nrows: n,
            ncols: n,
            indptr: (0..=n).collect(),
            indices: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    /// Builds a matrix from `(row, col, value)` triplets. Duplicates are summed
    /// in their original order, so the result does not depend on hashing or
    /// thread scheduling.
    pub fn from_triplets(nrows: usize, ncols: usize, mut triplets: Vec<(usize, usize, f64)>) -> Result<Self> {
        if let Some(&(r, c, _)) = triplets.iter().find(|t| t.0 >= nrows || t.1 >= ncols) {
            return Err(Error::Assembly(format!(
                "triplet ({r}, {c}) outside a {nrows}x{ncols} matrix"
            )));
        }
        triplets.sort_by_key(|t| (t.0, t.1));
        let mut indptr = vec![0; nrows + 1];
        let mut indices = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                indices.push(c);
                values.push(v);
                indptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..nrows {
            indptr[r + 1] += indptr[r];
        }
        Ok(CsrMatrix {
            nrows,
            ncols,
            indptr,
            indices,
            values,
        })
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let (a, b) = (self.indptr[r], self.indptr[r + 1]);
        (&self.indices[a..b], &self.values[a..b])
    }

    /// Position of entry `(r, c)` in the value array, if it is structurally present.
    pub fn position(&self, r: usize, c: usize) -> Option<usize> {
        let (a, b) = (self.indptr[r], self.indptr[r + 1]);
        self.indices[a..b].binary_search(&c).ok().map(|k| a + k)
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.position(r, c).map_or(0.0, |k| self.values[k])
    }

    /// Adds a dense local matrix (row-major, `rows.len() x cols.len()`).
    /// Entries whose row or column is `None` are dropped.
    pub fn add_local(&mut self, rows: &[Option<usize>], cols: &[Option<usize>], local: &[f64]) {
        let nc = cols.len();
        for (a, ra) in rows.iter().enumerate() {
            let Some(r) = *ra else { continue };
            for (b, cb) in cols.iter().enumerate() {
                let Some(c) = *cb else { continue };
                let v = local[a * nc + b];
                if v != 0.0 {
                    let k = self
                        .position(r, c)
                        .expect("local entry outside the sparsity pattern");
                    self.values[k] += v;
                }
            }
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.ncols);
        for (r, yr) in y.iter_mut().enumerate() {
            let mut s = 0.0;
            for k in self.indptr[r]..self.indptr[r + 1] {
                s += self.values[k] * x[self.indices[k]];
            }
            *yr = s;
        }
    }

    /// `y += alpha * A x`
    pub fn matvec_add(&self, alpha: f64, x: &[f64], y: &mut [f64]) {
        for (r, yr) in y.iter_mut().enumerate() {
            let mut s = 0.0;
            for k in self.indptr[r]..self.indptr[r + 1] {
                s += self.values[k] * x[self.indices[k]];
            }
            *yr += alpha * s;
        }
    }

    pub fn transpose(&self) -> CsrMatrix {
        let mut counts = vec![0usize; self.ncols + 1];
        for &c in &self.indices {
            counts[c + 1] += 1;
        }
        for c in 0..self.ncols {
            counts[c + 1] += counts[c];
        }
        let mut next = counts.clone();
        let mut indices = vec![0; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        for r in 0..self.nrows {
            for k in self.indptr[r]..self.indptr[r + 1] {
                let c = self.indices[k];
                indices[next[c]] = r;
                values[next[c]] = self.values[k];
                next[c] += 1;
            }
        }
        CsrMatrix {
            nrows: self.ncols,
            ncols: self.nrows,
            indptr: counts,
            indices,
            values,
        }
    }

    /// `a * self + b * other`, on the union of both patterns.
    pub fn lin_comb(&self, a: f64, other: &CsrMatrix, b: f64) -> CsrMatrix {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols));
        let mut indptr = vec![0; self.nrows + 1];
        let mut indices = Vec::with_capacity(self.nnz().max(other.nnz()));
        let mut values = Vec::with_capacity(self.nnz().max(other.nnz()));
        for r in 0..self.nrows {
            let (ci, cv) = self.row(r);
            let (oi, ov) = other.row(r);
            let (mut p, mut q) = (0, 0);
            while p < ci.len() || q < oi.len() {
                let take_self = q >= oi.len() || (p < ci.len() && ci[p] <= oi[q]);
                let take_other = p >= ci.len() || (q < oi.len() && oi[q] <= ci[p]);
                if take_self && take_other {
                    indices.push(ci[p]);
                    values.push(a * cv[p] + b * ov[q]);
                    p += 1;
                    q += 1;
                } else if take_self {
                    indices.push(ci[p]);
                    values.push(a * cv[p]);
                    p += 1;
                } else {
                    indices.push(oi[q]);
                    values.push(b * ov[q]);
                    q += 1;
                }
            }
            indptr[r + 1] = indices.len();
        }
        CsrMatrix {
            nrows: self.nrows,
            ncols: self.ncols,
            indptr,
            indices,
            values,
        }
    }

    pub fn scaled(&self, a: f64) -> CsrMatrix {
        let mut m = self.clone();
        m.values.iter_mut().for_each(|v| *v *= a);
        m
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows.min(self.ncols)).map(|r| self.get(r, r)).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest entry of `|A - A^T|`.
    pub fn asymmetry(&self) -> f64 {
        self.lin_comb(1.0, &self.transpose(), -1.0).max_abs()
    }

    /// Largest entry of `|A + A^T|`.
    pub fn skew_defect(&self) -> f64 {
        self.lin_comb(1.0, &self.transpose(), 1.0).max_abs()
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut d = nalgebra::DMatrix::zeros(self.nrows, self.ncols);
        for r in 0..self.nrows {
            for k in self.indptr[r]..self.indptr[r + 1] {
                d[(r, self.indices[k])] += self.values[k];
            }
        }
        d
    }

    /// Matrix Market coordinate export (1-based indices).
    pub fn write_matrix_market<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
        writeln!(w, "{} {} {}", self.nrows, self.ncols, self.nnz())?;
        for r in 0..self.nrows {
            for k in self.indptr[r]..self.indptr[r + 1] {
                writeln!(w, "{} {} {:.17e}", r + 1, self.indices[k] + 1, self.values[k])?;
            }
        }
        Ok(())
    }
}

/// Builds the zero-valued CSR pattern coupling every pair of DOFs that share
/// an element. `element_dofs(e)` returns the (possibly constrained) DOFs of
/// element `e`; `couples(a, b)` can prune structurally zero blocks given
/// local positions.
pub fn pattern_from_elements<F, C>(ndofs: usize, n_elements: usize, element_dofs: F, couples: C) -> CsrMatrix
where
    F: Fn(usize) -> Vec<Option<usize>>,
    C: Fn(usize, usize) -> bool,
{
    let mut rows: Vec<Vec<usize>> = vec![Vec::new(); ndofs];
    for e in 0..n_elements {
        let dofs = element_dofs(e);
        for (a, da) in dofs.iter().enumerate() {
            let Some(r) = *da else { continue };
            for (b, db) in dofs.iter().enumerate() {
                if let Some(c) = *db {
                    if couples(a, b) {
                        rows[r].push(c);
                    }
                }
            }
        }
    }
    let mut indptr = Vec::with_capacity(ndofs + 1);
    indptr.push(0);
    let mut indices = Vec::new();
    for row in rows.iter_mut() {
        row.sort_unstable();
        row.dedup();
        indices.extend_from_slice(row);
        indptr.push(indices.len());
    }
    let nnz = indices.len();
    CsrMatrix {
        nrows: ndofs,
        ncols: ndofs,
        indptr,
        indices,
        values: vec![0.0; nnz],
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> CsrMatrix {
        CsrMatrix::from_triplets(
            3,
            3,
            vec![(0, 0, 2.0), (2, 1, 1.0), (0, 2, -1.0), (0, 0, 1.0), (1, 1, 4.0)],
        )
        .unwrap()
    }

    #[test]
    fn triplets_merge_duplicates() {
        let a = sample();
        assert_eq!(a.nnz(), 4);
        assert_eq!(a.get(0, 0), 3.0);
        assert_eq!(a.get(2, 1), 1.0);
        assert_eq!(a.get(1, 0), 0.0);
        assert_eq!(a.matvec(&[1.0, 1.0, 1.0]), vec![2.0, 4.0, 1.0]);
    }

    #[test]
    fn out_of_range_triplet_is_rejected() {
        assert!(CsrMatrix::from_triplets(2, 2, vec![(2, 0, 1.0)]).is_err());
    }

    #[test]
    fn transpose_and_symmetry_measures() {
        let a = sample();
        let t = a.transpose();
        assert_eq!(t.get(2, 0), -1.0);
        assert_eq!(t.get(1, 2), 1.0);
        assert_eq!(t.transpose(), a);
        assert_eq!(a.asymmetry(), 1.0);
        let s = a.lin_comb(1.0, &t, 1.0);
        assert_eq!(s.asymmetry(), 0.0);
        let k = a.lin_comb(1.0, &t, -1.0);
        assert_eq!(k.skew_defect(), 0.0);
    }

    #[test]
    fn local_scatter_matches_triplets() {
        let mut p = pattern_from_elements(3, 2, |e| vec![Some(e), Some(e + 1)], |_, _| true);
        let local = [1.0, -1.0, -1.0, 1.0];
        for e in 0..2 {
            p.add_local(&[Some(e), Some(e + 1)], &[Some(e), Some(e + 1)], &local);
        }
        let d = p.to_dense();
        assert_eq!(d[(1, 1)], 2.0);
        assert_eq!(d[(0, 2)], 0.0);
        assert_eq!(d[(2, 1)], -1.0);
    }

    #[test]
    fn matrix_market_header() {
        let mut buf = Vec::new();
        sample().write_matrix_market(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("%%MatrixMarket matrix coordinate real general\n3 3 4\n"));
    }
}
