//! Lowest-order Nédélec (first kind) edge elements on a brick mesh, one copy
//! per 3-vector block of the `n`-component field.
//!
//! The local basis function of an edge along axis `a` with transverse offsets
//! `(b, c)` is `L_b(xi_t1) L_c(xi_t2) e_a / h_a`, where `L_0 = 1 - s`,
//! `L_1 = s`. Its tangential integral along its own edge is one and vanishes
//! on the other eleven. Edges are oriented along `+axis`, so no sign
//! corrections are needed.

use crate::error::{Error, Result};
use crate::mesh::{transverse, BrickMesh};
use crate::quadrature::{GaussLegendre, TensorRule};

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

/// Values and curls of the twelve local basis functions at reference
/// coordinates `xi` on a cell of size `h`.
pub fn local_basis(xi: [f64; 3], h: [f64; 3]) -> ([[f64; 3]; 12], [[f64; 3]; 12]) {
    let mut vals = [[0.0; 3]; 12];
    let mut curls = [[0.0; 3]; 12];
    let lin = |o: usize, s: f64| if o == 0 { (1.0 - s, -1.0) } else { (s, 1.0) };
    for a in 0..3 {
        let (t1, t2) = transverse(a);
        for k in 0..4 {
            let (l1, d1) = lin(k & 1, xi[t1]);
            let (l2, d2) = lin(k >> 1, xi[t2]);
            let l = 4 * a + k;
            vals[l][a] = l1 * l2 / h[a];
            let mut grad = [0.0; 3];
            grad[t1] = d1 * l2 / (h[a] * h[t1]);
            grad[t2] = l1 * d2 / (h[a] * h[t2]);
            let mut ea = [0.0; 3];
            ea[a] = 1.0;
            curls[l] = cross(grad, ea);
        }
    }
    (vals, curls)
}

/// Edge-element space for an `n_comp`-block field. Block 0 is the electric
/// field and carries the PEC constraint; the remaining blocks are free.
#[derive(Debug, Clone)]
pub struct NedelecSpace {
    pub mesh: BrickMesh,
    pub order: usize,
    pub n_comp: usize,
    pub rule: TensorRule,
    free: Vec<Option<usize>>,
    raw: Vec<usize>,
    /// Physical values and curls of the local basis at each rule point; the
    /// mesh is uniform so these are shared by all cells.
    vals: Vec<[[f64; 3]; 12]>,
    curls: Vec<[[f64; 3]; 12]>,
}

impl NedelecSpace {
    pub fn new(mesh: BrickMesh, order: usize, n_comp: usize) -> Result<Self> {
        if order != 1 {
            return Err(Error::NotImplemented(format!(
                "Nedelec order {order}; only the lowest order is available"
            )));
        }
        if n_comp < 2 {
            return Err(Error::config("a Maxwell field needs at least the E and H blocks"));
        }
        let ne = mesh.n_edges();
        let mut free = vec![None; n_comp * ne];
        let mut raw = Vec::new();
        for c in 0..n_comp {
            for e in 0..ne {
                if c == 0 && mesh.edge_on_boundary(e) {
                    continue;
                }
                free[c * ne + e] = Some(raw.len());
                raw.push(c * ne + e);
            }
        }
        let rule = TensorRule::gauss(2);
        let h = mesh.cell_size();
        let (vals, curls) = rule.points.iter().map(|&p| local_basis(p, h)).unzip();
        Ok(NedelecSpace {
            mesh,
            order,
            n_comp,
            rule,
            free,
            raw,
            vals,
            curls,
        })
    }

    /// Field dimension `n = 3 * n_comp`.
    pub fn n(&self) -> usize {
        3 * self.n_comp
    }

    pub fn n_raw(&self) -> usize {
        self.free.len()
    }

    pub fn n_free(&self) -> usize {
        self.raw.len()
    }

    pub fn free_index(&self, comp: usize, edge: usize) -> Option<usize> {
        self.free[comp * self.mesh.n_edges() + edge]
    }

    /// `(component, edge)` of a free DOF.
    pub fn dof_location(&self, dof: usize) -> (usize, usize) {
        let r = self.raw[dof];
        (r / self.mesh.n_edges(), r % self.mesh.n_edges())
    }

    /// Free DOFs of a cell, local index `c * 12 + l`.
    pub fn cell_dofs(&self, cell: usize) -> Vec<Option<usize>> {
        let edges = self.mesh.cell_edges(cell);
        (0..self.n_comp)
            .flat_map(|c| edges.iter().map(move |&e| self.free_index(c, e)))
            .collect()
    }

    pub fn n_points(&self) -> usize {
        self.mesh.n_cells() * self.rule.len()
    }

    /// Quadrature point `p = cell * Q + q`.
    pub fn point(&self, p: usize) -> [f64; 3] {
        let nq = self.rule.len();
        let o = self.mesh.cell_origin(p / nq);
        let h = self.mesh.cell_size();
        let xi = self.rule.points[p % nq];
        [o[0] + xi[0] * h[0], o[1] + xi[1] * h[1], o[2] + xi[2] * h[2]]
    }

    pub fn points(&self) -> Vec<[f64; 3]> {
        (0..self.n_points()).map(|p| self.point(p)).collect()
    }

    /// Quadrature weight `gamma_K^q` including the cell volume.
    pub fn weight(&self, q: usize) -> f64 {
        self.rule.weights[q] * self.mesh.cell_volume()
    }

    pub fn basis_at(&self, q: usize) -> &[[f64; 3]; 12] {
        &self.vals[q]
    }

    pub fn curl_at(&self, q: usize) -> &[[f64; 3]; 12] {
        &self.curls[q]
    }

    fn raw_coeff(&self, u: &[f64], comp: usize, edge: usize) -> f64 {
        self.free_index(comp, edge).map_or(0.0, |d| u[d])
    }

    /// Field value and curl (each an `n`-vector) at an arbitrary point.
    pub fn eval(&self, u: &[f64], x: [f64; 3]) -> (Vec<f64>, Vec<f64>) {
        let cell = self.mesh.locate(x);
        let o = self.mesh.cell_origin(cell);
        let h = self.mesh.cell_size();
        let xi = [(x[0] - o[0]) / h[0], (x[1] - o[1]) / h[1], (x[2] - o[2]) / h[2]];
        let (vals, curls) = local_basis(xi, h);
        self.combine(u, cell, &vals, &curls)
    }

    fn combine(&self, u: &[f64], cell: usize, vals: &[[f64; 3]; 12], curls: &[[f64; 3]; 12]) -> (Vec<f64>, Vec<f64>) {
        let edges = self.mesh.cell_edges(cell);
        let mut v = vec![0.0; self.n()];
        let mut c = vec![0.0; self.n()];
        for comp in 0..self.n_comp {
            for (l, &e) in edges.iter().enumerate() {
                let a = self.raw_coeff(u, comp, e);
                if a != 0.0 {
                    for d in 0..3 {
                        v[3 * comp + d] += a * vals[l][d];
                        c[3 * comp + d] += a * curls[l][d];
                    }
                }
            }
        }
        (v, c)
    }

    /// Value and curl at quadrature point `p`, using the tabulated basis.
    pub fn eval_at_point(&self, u: &[f64], p: usize) -> (Vec<f64>, Vec<f64>) {
        let nq = self.rule.len();
        let q = p % nq;
        self.combine(u, p / nq, &self.vals[q], &self.curls[q])
    }

    /// Edge interpolation: each DOF is the tangential integral of the matching
    /// block of `f` along its edge (3-point Gauss). Constrained DOFs are
    /// dropped.
    pub fn interpolate(&self, f: impl Fn([f64; 3]) -> Vec<f64>) -> Vec<f64> {
        let g = GaussLegendre::new(3);
        let mut out = vec![0.0; self.n_free()];
        let h = self.mesh.cell_size();
        for (e, edge) in self.mesh.edges.iter().enumerate() {
            let a = edge.axis;
            let x0 = self.mesh.vertices[edge.start];
            let mut acc = vec![0.0; self.n_comp];
            for (s, w) in g.points.iter().zip(&g.weights) {
                let mut x = x0;
                x[a] += s * h[a];
                let v = f(x);
                for (c, slot) in acc.iter_mut().enumerate() {
                    *slot += w * h[a] * v[3 * c + a];
                }
            }
            for (c, val) in acc.into_iter().enumerate() {
                if let Some(d) = self.free_index(c, e) {
                    out[d] = val;
                }
            }
        }
        out
    }
}
