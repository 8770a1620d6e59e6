//! Structured hexahedral meshes: the macroscopic box and the periodic unit
//! cell used by the micro problems.

use crate::error::{Error, Result};

/// Tag carried by every boundary face.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryTag {
    /// Perfect electric conductor.
    Pec,
    /// Face identified with its opposite partner; the id names the pair.
    PeriodicPair(usize),
}

/// An edge oriented from its lexicographically smaller vertex to the larger.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Edge {
    pub axis: usize,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Face {
    /// Normal direction.
    pub axis: usize,
    pub vertices: [usize; 4],
    pub boundary: Option<BoundaryTag>,
}

/// Uniform brick mesh of an axis-aligned box.
///
/// Vertices, edges and faces are numbered lexicographically with the first
/// axis running fastest. Local vertex `v` of a cell sits at offset
/// `(v & 1, (v >> 1) & 1, (v >> 2) & 1)`.
#[derive(Debug, Clone)]
pub struct BrickMesh {
    pub cells_per_axis: [usize; 3],
    pub origin: [f64; 3],
    pub extent: [f64; 3],
    pub vertices: Vec<[f64; 3]>,
    pub cell_vertices: Vec<[usize; 8]>,
    pub edges: Vec<Edge>,
    pub faces: Vec<Face>,
}

impl BrickMesh {
    fn build(cells_per_axis: [usize; 3], origin: [f64; 3], extent: [f64; 3]) -> Result<Self> {
        for a in 0..3 {
            if cells_per_axis[a] == 0 {
                return Err(Error::config(format!("cells_per_axis[{a}] must be at least 1")));
            }
            if !(extent[a] > 0.0) || !extent[a].is_finite() {
                return Err(Error::config(format!(
                    "extent[{a}] must be positive, got {}",
                    extent[a]
                )));
            }
        }
        let [nx, ny, nz] = cells_per_axis;
        let h = [
            extent[0] / nx as f64,
            extent[1] / ny as f64,
            extent[2] / nz as f64,
        ];
        let mut mesh = BrickMesh {
            cells_per_axis,
            origin,
            extent,
            vertices: Vec::with_capacity((nx + 1) * (ny + 1) * (nz + 1)),
            cell_vertices: Vec::with_capacity(nx * ny * nz),
            edges: Vec::new(),
            faces: Vec::new(),
        };
        for k in 0..=nz {
            for j in 0..=ny {
                for i in 0..=nx {
                    mesh.vertices.push([
                        origin[0] + i as f64 * h[0],
                        origin[1] + j as f64 * h[1],
                        origin[2] + k as f64 * h[2],
                    ]);
                }
            }
        }
        for k in 0..nz {
            for j in 0..ny {
                for i in 0..nx {
                    let mut cv = [0; 8];
                    for (v, slot) in cv.iter_mut().enumerate() {
                        *slot = mesh.vertex_index(i + (v & 1), j + ((v >> 1) & 1), k + ((v >> 2) & 1));
                    }
                    mesh.cell_vertices.push(cv);
                }
            }
        }
        // edges, grouped by axis
        for axis in 0..3 {
            let mut n = [nx + 1, ny + 1, nz + 1];
            n[axis] -= 1;
            for k in 0..n[2] {
                for j in 0..n[1] {
                    for i in 0..n[0] {
                        let mut end = [i, j, k];
                        end[axis] += 1;
                        mesh.edges.push(Edge {
                            axis,
                            start: mesh.vertex_index(i, j, k),
                            end: mesh.vertex_index(end[0], end[1], end[2]),
                        });
                    }
                }
            }
        }
        // faces, grouped by normal axis
        for axis in 0..3 {
            let (t1, t2) = ((axis + 1) % 3, (axis + 2) % 3);
            let mut n = [nx, ny, nz];
            n[axis] += 1;
            for k in 0..n[2] {
                for j in 0..n[1] {
                    for i in 0..n[0] {
                        let base = [i, j, k];
                        let mut verts = [0; 4];
                        for (c, slot) in verts.iter_mut().enumerate() {
                            let mut p = base;
                            p[t1] += c & 1;
                            p[t2] += (c >> 1) & 1;
                            *slot = mesh.vertex_index(p[0], p[1], p[2]);
                        }
                        let on_boundary = base[axis] == 0 || base[axis] == cells_per_axis[axis];
                        mesh.faces.push(Face {
                            axis,
                            vertices: verts,
                            boundary: on_boundary.then_some(BoundaryTag::Pec),
                        });
                    }
                }
            }
        }
        Ok(mesh)
    }

    pub fn n_cells(&self) -> usize {
        self.cell_vertices.len()
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn n_faces(&self) -> usize {
        self.faces.len()
    }

    pub fn cell_size(&self) -> [f64; 3] {
        [
            self.extent[0] / self.cells_per_axis[0] as f64,
            self.extent[1] / self.cells_per_axis[1] as f64,
            self.extent[2] / self.cells_per_axis[2] as f64,
        ]
    }

    /// Largest cell diameter.
    pub fn mesh_size(&self) -> f64 {
        let h = self.cell_size();
        (h[0] * h[0] + h[1] * h[1] + h[2] * h[2]).sqrt()
    }

    pub fn vertex_index(&self, i: usize, j: usize, k: usize) -> usize {
        let [nx, ny, _] = self.cells_per_axis;
        i + (nx + 1) * (j + (ny + 1) * k)
    }

    pub fn cell_index(&self, i: usize, j: usize, k: usize) -> usize {
        let [nx, ny, _] = self.cells_per_axis;
        i + nx * (j + ny * k)
    }

    pub fn cell_coords(&self, cell: usize) -> [usize; 3] {
        let [nx, ny, _] = self.cells_per_axis;
        [cell % nx, (cell / nx) % ny, cell / (nx * ny)]
    }

    /// Lower corner of a cell.
    pub fn cell_origin(&self, cell: usize) -> [f64; 3] {
        self.vertices[self.cell_vertices[cell][0]]
    }

    pub fn cell_volume(&self) -> f64 {
        let h = self.cell_size();
        h[0] * h[1] * h[2]
    }

    /// Number of edges parallel to `axis`.
    pub fn n_edges_along(&self, axis: usize) -> usize {
        let mut n = [
            self.cells_per_axis[0] + 1,
            self.cells_per_axis[1] + 1,
            self.cells_per_axis[2] + 1,
        ];
        n[axis] -= 1;
        n[0] * n[1] * n[2]
    }

    /// Global index of the edge parallel to `axis` starting at vertex `(i, j, k)`.
    pub fn edge_index(&self, axis: usize, i: usize, j: usize, k: usize) -> usize {
        let mut n = [
            self.cells_per_axis[0] + 1,
            self.cells_per_axis[1] + 1,
            self.cells_per_axis[2] + 1,
        ];
        n[axis] -= 1;
        let offset: usize = (0..axis).map(|a| self.n_edges_along(a)).sum();
        offset + i + n[0] * (j + n[1] * k)
    }

    /// The 12 edges of a cell: four per axis, ordered by the offsets of the
    /// two transverse coordinates (first transverse axis fastest).
    pub fn cell_edges(&self, cell: usize) -> [usize; 12] {
        let [i, j, k] = self.cell_coords(cell);
        let mut out = [0; 12];
        for axis in 0..3 {
            let (t1, t2) = transverse(axis);
            for c in 0..4 {
                let mut p = [i, j, k];
                p[t1] += c & 1;
                p[t2] += (c >> 1) & 1;
                out[4 * axis + c] = self.edge_index(axis, p[0], p[1], p[2]);
            }
        }
        out
    }

    /// True if the edge lies in the boundary of the box.
    pub fn edge_on_boundary(&self, edge: usize) -> bool {
        let e = self.edges[edge];
        let idx = self.vertex_coords(e.start);
        let (t1, t2) = transverse(e.axis);
        idx[t1] == 0
            || idx[t1] == self.cells_per_axis[t1]
            || idx[t2] == 0
            || idx[t2] == self.cells_per_axis[t2]
    }

    pub fn vertex_coords(&self, v: usize) -> [usize; 3] {
        let [nx, ny, _] = self.cells_per_axis;
        [v % (nx + 1), (v / (nx + 1)) % (ny + 1), v / ((nx + 1) * (ny + 1))]
    }

    /// Cell containing a point (points on interior planes go to the upper cell).
    pub fn locate(&self, x: [f64; 3]) -> usize {
        let h = self.cell_size();
        let mut c = [0usize; 3];
        for a in 0..3 {
            let s = ((x[a] - self.origin[a]) / h[a]).floor();
            c[a] = (s.max(0.0) as usize).min(self.cells_per_axis[a] - 1);
        }
        self.cell_index(c[0], c[1], c[2])
    }

    pub fn boundary_faces(&self) -> impl Iterator<Item = &Face> {
        self.faces.iter().filter(|f| f.boundary.is_some())
    }
}

/// The two axes orthogonal to `axis`, in increasing order.
pub fn transverse(axis: usize) -> (usize, usize) {
    match axis {
        0 => (1, 2),
        1 => (0, 2),
        _ => (0, 1),
    }
}

/// Builds the macroscopic box mesh with every boundary face tagged PEC.
pub fn build_macro_mesh(cells_per_axis: [usize; 3], origin: [f64; 3], extent: [f64; 3]) -> Result<BrickMesh> {
    BrickMesh::build(cells_per_axis, origin, extent)
}

/// Vertex identification on the periodic unit cell.
#[derive(Debug, Clone)]
pub struct PeriodicMap {
    /// `(master, slave)` vertex pairs identified across each axis.
    pub pairs: [Vec<(usize, usize)>; 3],
    /// Representative vertex for every vertex of the mesh.
    master: Vec<usize>,
    /// Compact index of the representative, `0..n_free`.
    free_index: Vec<usize>,
    n_free: usize,
}

impl PeriodicMap {
    pub fn master(&self, v: usize) -> usize {
        self.master[v]
    }

    /// Applies the identification to a whole vertex list.
    pub fn apply(&self, verts: &[usize]) -> Vec<usize> {
        verts.iter().map(|&v| self.master[v]).collect()
    }

    pub fn free_index(&self, v: usize) -> usize {
        self.free_index[v]
    }

    pub fn n_free(&self) -> usize {
        self.n_free
    }
}

/// Builds the periodic unit-cell mesh `(0, 1)^3`.
pub fn build_micro_mesh(cells_per_axis: [usize; 3]) -> Result<(BrickMesh, PeriodicMap)> {
    if cells_per_axis.iter().any(|&n| n < 2) {
        return Err(Error::config(format!(
            "micro mesh needs at least 2 cells per axis, got {cells_per_axis:?}"
        )));
    }
    let mut mesh = BrickMesh::build(cells_per_axis, [0.0; 3], [1.0; 3])?;
    let n = cells_per_axis;

    // pair ids: consecutive per axis, in face enumeration order
    let mut next_id = 0;
    let mut ids = std::collections::HashMap::new();
    for f in mesh.faces.iter_mut() {
        if f.boundary.is_none() {
            continue;
        }
        let v0 = f.vertices[0];
        let [i, j, k] = {
            let [nx, ny, _] = n;
            [v0 % (nx + 1), (v0 / (nx + 1)) % (ny + 1), v0 / ((nx + 1) * (ny + 1))]
        };
        let mut key = [i, j, k];
        key[f.axis] = 0;
        let id = *ids.entry((f.axis, key)).or_insert_with(|| {
            let id = next_id;
            next_id += 1;
            id
        });
        f.boundary = Some(BoundaryTag::PeriodicPair(id));
    }

    let nv = mesh.n_vertices();
    let mut master = vec![0; nv];
    let mut pairs: [Vec<(usize, usize)>; 3] = Default::default();
    for v in 0..nv {
        let c = mesh.vertex_coords(v);
        let m = [c[0] % n[0], c[1] % n[1], c[2] % n[2]];
        master[v] = mesh.vertex_index(m[0], m[1], m[2]);
        for a in 0..3 {
            if c[a] == n[a] {
                let mut p = c;
                p[a] = 0;
                pairs[a].push((mesh.vertex_index(p[0], p[1], p[2]), v));
            }
        }
    }
    let mut free_index = vec![usize::MAX; nv];
    let mut n_free = 0;
    for v in 0..nv {
        if master[v] == v {
            free_index[v] = n_free;
            n_free += 1;
        }
    }
    for v in 0..nv {
        free_index[v] = free_index[master[v]];
    }
    Ok((
        mesh,
        PeriodicMap {
            pairs,
            master,
            free_index,
            n_free,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_cube_combinatorics() {
        let m = build_macro_mesh([1, 1, 1], [0.0; 3], [1.0; 3]).unwrap();
        assert_eq!(m.n_cells(), 1);
        assert_eq!(m.n_vertices(), 8);
        assert_eq!(m.n_edges(), 12);
        assert_eq!(m.n_faces(), 6);
        assert!(m.faces.iter().all(|f| f.boundary == Some(BoundaryTag::Pec)));
        assert!((0..12).all(|e| m.edge_on_boundary(e)));
    }

    #[test]
    fn structured_counts_match_enumeration() {
        let m = build_macro_mesh([2, 2, 2], [0.0; 3], [1.0; 3]).unwrap();
        assert_eq!(m.n_cells(), 8);
        assert_eq!(m.n_vertices(), 27);
        assert_eq!(m.n_edges(), 54);
        // 3 N (N+1)^2 closed form
        assert_eq!(m.n_edges(), 3 * 2 * 9);

        let m = build_macro_mesh([4, 2, 1], [0.0; 3], [1.0; 3]).unwrap();
        assert_eq!(m.n_cells(), 8);
        assert_eq!(m.n_vertices(), 5 * 3 * 2);
        assert_eq!(m.n_edges(), 4 * 3 * 2 + 5 * 2 * 2 + 5 * 3);
        assert_eq!(m.n_faces(), 5 * 2 + 4 * 3 + 4 * 2 * 2);
    }

    #[test]
    fn bad_extent_is_config_error() {
        assert!(matches!(
            build_macro_mesh([1, 1, 1], [0.0; 3], [1.0, 0.0, 1.0]),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            build_macro_mesh([1, 1, 1], [0.0; 3], [1.0, -2.0, 1.0]),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            build_macro_mesh([0, 1, 1], [0.0; 3], [1.0; 3]),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn edges_point_along_positive_axis() {
        let m = build_macro_mesh([3, 2, 2], [0.1, 0.2, 0.3], [1.0, 2.0, 0.5]).unwrap();
        for e in &m.edges {
            let d = [
                m.vertices[e.end][0] - m.vertices[e.start][0],
                m.vertices[e.end][1] - m.vertices[e.start][1],
                m.vertices[e.end][2] - m.vertices[e.start][2],
            ];
            for a in 0..3 {
                if a == e.axis {
                    assert!(d[a] > 0.0);
                } else {
                    assert_eq!(d[a], 0.0);
                }
            }
        }
        // cell edges really belong to the cell
        for c in 0..m.n_cells() {
            let verts = m.cell_vertices[c];
            for e in m.cell_edges(c) {
                assert!(verts.contains(&m.edges[e].start));
                assert!(verts.contains(&m.edges[e].end));
            }
        }
    }

    #[test]
    fn cell_volumes_sum_to_domain_volume() {
        let m = build_macro_mesh([3, 5, 2], [0.0; 3], [1.5, 0.7, 2.0]).unwrap();
        let total = m.cell_volume() * m.n_cells() as f64;
        assert!((total - 1.5 * 0.7 * 2.0).abs() < 1e-14);
        let (u, _) = build_micro_mesh([3, 4, 5]).unwrap();
        assert!((u.cell_volume() * u.n_cells() as f64 - 1.0).abs() < 1e-14);
    }

    #[test]
    fn micro_mesh_periodic_counts() {
        let (m, p) = build_micro_mesh([2, 2, 2]).unwrap();
        assert_eq!(m.n_vertices(), 27);
        assert_eq!(p.n_free(), 8);
        let (_, p) = build_micro_mesh([4, 4, 4]).unwrap();
        assert_eq!(p.n_free(), 64);
        assert!(matches!(build_micro_mesh([1, 2, 2]), Err(Error::Config(_))));
    }

    #[test]
    fn periodic_map_is_idempotent_and_preserves_coordinates() {
        let (m, p) = build_micro_mesh([3, 3, 3]).unwrap();
        let all: Vec<usize> = (0..m.n_vertices()).collect();
        let once = p.apply(&all);
        let twice = p.apply(&once);
        assert_eq!(once, twice);
        for a in 0..3 {
            for &(master, slave) in &p.pairs[a] {
                let xm = m.vertices[master];
                let xs = m.vertices[slave];
                let mut d = [xs[0] - xm[0], xs[1] - xm[1], xs[2] - xm[2]];
                d[a] -= 1.0;
                assert!(d.iter().map(|x| x * x).sum::<f64>().sqrt() < 1e-14);
            }
        }
        // the corner vertex folds onto a single master
        let corner = m.vertex_index(3, 3, 3);
        assert_eq!(p.master(corner), m.vertex_index(0, 0, 0));
        assert!(m
            .boundary_faces()
            .all(|f| matches!(f.boundary, Some(BoundaryTag::PeriodicPair(_)))));
    }

    #[test]
    fn periodic_pairs_match_opposite_faces() {
        let (m, _) = build_micro_mesh([2, 3, 4]).unwrap();
        let mut count = std::collections::HashMap::new();
        for f in m.boundary_faces() {
            if let Some(BoundaryTag::PeriodicPair(id)) = f.boundary {
                *count.entry(id).or_insert(0) += 1;
            }
        }
        assert!(count.values().all(|&c| c == 2));
        assert_eq!(count.len(), 3 * 4 + 2 * 4 + 2 * 3);
    }
}
