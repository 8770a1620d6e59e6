use crate::error::{Error, Result};
use crate::mesh::{BrickMesh, PeriodicMap};
use crate::quadrature::TensorRule;

/// Values and derivatives of the 1D Lagrange basis of degree `k` on equispaced
/// nodes of `[0, 1]`.
pub fn lagrange_1d(k: usize, s: f64) -> (Vec<f64>, Vec<f64>) {
    let nodes: Vec<f64> = (0..=k).map(|i| i as f64 / k as f64).collect();
    let mut vals = vec![0.0; k + 1];
    let mut ders = vec![0.0; k + 1];
    for i in 0..=k {
        let mut v = 1.0;
        let mut d = 0.0;
        for j in 0..=k {
            if j == i {
                continue;
            }
            let denom = nodes[i] - nodes[j];
            // product rule on the running product
            d = d * (s - nodes[j]) / denom + v / denom;
            v *= (s - nodes[j]) / denom;
        }
        vals[i] = v;
        ders[i] = d;
    }
    (vals, ders)
}

/// Periodic `Q_k` Lagrange space on a uniform mesh of the unit cell with
/// `n_comp` scalar components. DOF `(c, a)` lives at index `c * n_scalar + a`.
#[derive(Debug, Clone)]
pub struct PeriodicLagrangeSpace {
    pub order: usize,
    pub cells: [usize; 3],
    pub n_comp: usize,
    nodes: [usize; 3],
    pub rule: TensorRule,
    ref_vals: Vec<Vec<f64>>,
    ref_grads: Vec<Vec<[f64; 3]>>,
    means: Vec<f64>,
}

impl PeriodicLagrangeSpace {
    pub fn new(cells: [usize; 3], order: usize, n_comp: usize) -> Result<Self> {
        if cells.iter().any(|&c| c < 2) {
            return Err(Error::config(format!("micro mesh needs at least 2 cells per axis, got {cells:?}")));
        }
        if !(1..=2).contains(&order) {
            return Err(Error::NotImplemented(format!("Lagrange order {order} (supported: 1, 2)")));
        }
        if n_comp == 0 {
            return Err(Error::config("at least one component required"));
        }
        let rule = TensorRule::gauss(order + 1);
        let nl = (order + 1).pow(3);
        let mut ref_vals = Vec::with_capacity(rule.len());
        let mut ref_grads = Vec::with_capacity(rule.len());
        for p in &rule.points {
            let (vx, dx) = lagrange_1d(order, p[0]);
            let (vy, dy) = lagrange_1d(order, p[1]);
            let (vz, dz) = lagrange_1d(order, p[2]);
            let mut v = vec![0.0; nl];
            let mut g = vec![[0.0; 3]; nl];
            for l in 0..=order {
                for j in 0..=order {
                    for i in 0..=order {
                        let a = i + (order + 1) * (j + (order + 1) * l);
                        v[a] = vx[i] * vy[j] * vz[l];
                        g[a] = [dx[i] * vy[j] * vz[l], vx[i] * dy[j] * vz[l], vx[i] * vy[j] * dz[l]];
                    }
                }
            }
            ref_vals.push(v);
            ref_grads.push(g);
        }
        let nodes = [order * cells[0], order * cells[1], order * cells[2]];
        let mut space = PeriodicLagrangeSpace {
            order,
            cells,
            n_comp,
            nodes,
            rule,
            ref_vals,
            ref_grads,
            means: Vec::new(),
        };
        let vol = 1.0 / (cells[0] * cells[1] * cells[2]) as f64;
        let mut means = vec![0.0; space.n_scalar()];
        for c in 0..space.n_cells() {
            let dofs = space.cell_nodes(c);
            for (q, w) in space.rule.weights.iter().enumerate() {
                for (a, &d) in dofs.iter().enumerate() {
                    means[d] += w * vol * space.ref_vals[q][a];
                }
            }
        }
        space.means = means;
        Ok(space)
    }

    /// Builds the space on a micro mesh, checking that the vertex
    /// identification of the mesh matches the DOF numbering.
    pub fn from_mesh(mesh: &BrickMesh, map: &PeriodicMap, order: usize, n_comp: usize) -> Result<Self> {
        if mesh.origin != [0.0; 3] || mesh.extent != [1.0; 3] {
            return Err(Error::config("micro space must live on the unit cell"));
        }
        let space = Self::new(mesh.cells_per_axis, order, n_comp)?;
        if order == 1 {
            for v in 0..mesh.n_vertices() {
                let [i, j, k] = mesh.vertex_coords(v);
                let s = space.node_index([i, j, k]);
                if map.free_index(v) != s {
                    return Err(Error::Assembly(format!(
                        "periodic map and DOF numbering disagree at vertex {v}"
                    )));
                }
            }
        }
        Ok(space)
    }

    pub fn n_cells(&self) -> usize {
        self.cells[0] * self.cells[1] * self.cells[2]
    }

    pub fn n_scalar(&self) -> usize {
        self.nodes[0] * self.nodes[1] * self.nodes[2]
    }

    pub fn n_dofs(&self) -> usize {
        self.n_comp * self.n_scalar()
    }

    pub fn n_local(&self) -> usize {
        (self.order + 1).pow(3)
    }

    pub fn h(&self) -> [f64; 3] {
        [
            1.0 / self.cells[0] as f64,
            1.0 / self.cells[1] as f64,
            1.0 / self.cells[2] as f64,
        ]
    }

    /// Mesh size used in rate studies (edge length of the cubic cell).
    pub fn mesh_size(&self) -> f64 {
        self.h().iter().cloned().fold(0.0, f64::max)
    }

    pub fn cell_volume(&self) -> f64 {
        let h = self.h();
        h[0] * h[1] * h[2]
    }

    pub fn cell_coords(&self, cell: usize) -> [usize; 3] {
        let [nx, ny, _] = self.cells;
        [cell % nx, (cell / nx) % ny, cell / (nx * ny)]
    }

    pub fn cell_origin(&self, cell: usize) -> [f64; 3] {
        let c = self.cell_coords(cell);
        let h = self.h();
        [c[0] as f64 * h[0], c[1] as f64 * h[1], c[2] as f64 * h[2]]
    }

    /// Scalar index of the grid node `idx`, wrapped periodically.
    pub fn node_index(&self, idx: [usize; 3]) -> usize {
        let [nx, ny, nz] = self.nodes;
        (idx[0] % nx) + nx * ((idx[1] % ny) + ny * (idx[2] % nz))
    }

    pub fn node_coord(&self, s: usize) -> [f64; 3] {
        let [nx, ny, _] = self.nodes;
        let idx = [s % nx, (s / nx) % ny, s / (nx * ny)];
        [
            idx[0] as f64 / self.nodes[0] as f64,
            idx[1] as f64 / self.nodes[1] as f64,
            idx[2] as f64 / self.nodes[2] as f64,
        ]
    }

    /// Scalar DOFs of a cell in local lexicographic order.
    pub fn cell_nodes(&self, cell: usize) -> Vec<usize> {
        let k = self.order;
        let c = self.cell_coords(cell);
        let mut out = Vec::with_capacity(self.n_local());
        for l in 0..=k {
            for j in 0..=k {
                for i in 0..=k {
                    out.push(self.node_index([k * c[0] + i, k * c[1] + j, k * c[2] + l]));
                }
            }
        }
        out
    }

    /// Reference basis values at quadrature point `q`.
    pub fn ref_values(&self, q: usize) -> &[f64] {
        &self.ref_vals[q]
    }

    /// Physical gradients of the local basis at quadrature point `q`.
    pub fn grads(&self, q: usize) -> Vec<[f64; 3]> {
        let h = self.h();
        self.ref_grads[q]
            .iter()
            .map(|g| [g[0] / h[0], g[1] / h[1], g[2] / h[2]])
            .collect()
    }

    /// `int phi_a` for every scalar basis function.
    pub fn means(&self) -> &[f64] {
        &self.means
    }

    /// Mean of one component of a field.
    pub fn mean(&self, field: &[f64], comp: usize) -> f64 {
        let ns = self.n_scalar();
        crate::sparse::dot(&self.means, &field[comp * ns..(comp + 1) * ns])
    }

    fn locate(&self, y: [f64; 3]) -> (usize, [f64; 3]) {
        let mut c = [0usize; 3];
        let mut xi = [0.0; 3];
        for a in 0..3 {
            let s = (y[a] - y[a].floor()) * self.cells[a] as f64;
            let i = (s.floor() as usize).min(self.cells[a] - 1);
            c[a] = i;
            xi[a] = s - i as f64;
        }
        let [nx, ny, _] = self.cells;
        (c[0] + nx * (c[1] + ny * c[2]), xi)
    }

    /// Value and gradient of one component at a point of the (periodic) cell.
    pub fn eval(&self, field: &[f64], comp: usize, y: [f64; 3]) -> (f64, [f64; 3]) {
        let (cell, xi) = self.locate(y);
        let k = self.order;
        let (vx, dx) = lagrange_1d(k, xi[0]);
        let (vy, dy) = lagrange_1d(k, xi[1]);
        let (vz, dz) = lagrange_1d(k, xi[2]);
        let h = self.h();
        let off = comp * self.n_scalar();
        let nodes = self.cell_nodes(cell);
        let mut v = 0.0;
        let mut g = [0.0; 3];
        for l in 0..=k {
            for j in 0..=k {
                for i in 0..=k {
                    let a = i + (k + 1) * (j + (k + 1) * l);
                    let u = field[off + nodes[a]];
                    v += u * vx[i] * vy[j] * vz[l];
                    g[0] += u * dx[i] * vy[j] * vz[l] / h[0];
                    g[1] += u * vx[i] * dy[j] * vz[l] / h[1];
                    g[2] += u * vx[i] * vy[j] * dz[l] / h[2];
                }
            }
        }
        (v, g)
    }

    /// Nodal interpolation of a scalar function into one component.
    pub fn interpolate_into(&self, f: impl Fn([f64; 3]) -> f64, comp: usize, field: &mut [f64]) {
        let ns = self.n_scalar();
        for s in 0..ns {
            field[comp * ns + s] = f(self.node_coord(s));
        }
    }

    /// True if `fine` contains this space (same or higher order, cells refined
    /// by an integer factor).
    pub fn nested_in(&self, fine: &PeriodicLagrangeSpace) -> bool {
        fine.order >= self.order
            && fine.n_comp == self.n_comp
            && (0..3).all(|a| fine.cells[a] % self.cells[a] == 0)
    }
}
