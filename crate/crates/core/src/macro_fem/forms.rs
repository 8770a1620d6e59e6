use nalgebra::DMatrix;

use crate::effective::EffectiveTensorTable;
use crate::error::{Error, Result};
use crate::macro_fem::space::{local_basis, NedelecSpace};
use crate::quadrature::TensorRule;
use crate::sparse::{dot, pattern_from_elements, CsrMatrix};

/// Assembled macroscopic operators on the free DOFs.
#[derive(Debug, Clone)]
pub struct MacroForms {
    /// `m^H(phi_j, phi_i)`.
    pub mass: CsrMatrix,
    /// `r^H(phi_j, phi_i)`.
    pub damping: CsrMatrix,
    /// Curl pairing `a(phi_j, phi_i)`, skew on the constrained space.
    pub curl: CsrMatrix,
    /// `g^H(0)`, the kernel at the first grid node.
    pub kernel0: CsrMatrix,
}

fn pattern(space: &NedelecSpace) -> CsrMatrix {
    pattern_from_elements(space.n_free(), space.mesh.n_cells(), |c| space.cell_dofs(c), |_, _| true)
}

/// `sum_K sum_q gamma T(x_q) phi_j(x_q) . phi_i(x_q)` for a tensor field given
/// per quadrature point.
pub fn assemble_weighted<'a>(space: &NedelecSpace, tensor: impl Fn(usize) -> &'a DMatrix<f64>) -> CsrMatrix {
    let mut out = pattern(space);
    let nc = space.n_comp;
    let nq = space.rule.len();
    let nl = 12 * nc;
    let mut local = vec![0.0; nl * nl];
    for cell in 0..space.mesh.n_cells() {
        local.iter_mut().for_each(|v| *v = 0.0);
        for q in 0..nq {
            let t = tensor(cell * nq + q);
            let w = space.weight(q);
            let phi = space.basis_at(q);
            for c in 0..nc {
                for cp in 0..nc {
                    let block = t.fixed_view::<3, 3>(3 * c, 3 * cp);
                    if block.iter().all(|v| *v == 0.0) {
                        continue;
                    }
                    for lp in 0..12 {
                        let tp = [
                            block[(0, 0)] * phi[lp][0] + block[(0, 1)] * phi[lp][1] + block[(0, 2)] * phi[lp][2],
                            block[(1, 0)] * phi[lp][0] + block[(1, 1)] * phi[lp][1] + block[(1, 2)] * phi[lp][2],
                            block[(2, 0)] * phi[lp][0] + block[(2, 1)] * phi[lp][1] + block[(2, 2)] * phi[lp][2],
                        ];
                        for l in 0..12 {
                            local[(c * 12 + l) * nl + cp * 12 + lp] +=
                                w * (tp[0] * phi[l][0] + tp[1] * phi[l][1] + tp[2] * phi[l][2]);
                        }
                    }
                }
            }
        }
        let dofs = space.cell_dofs(cell);
        out.add_local(&dofs, &dofs, &local);
    }
    out
}

/// `a(Phi, Psi) = -(curl Phi_H, Psi_E) + (curl Phi_E, Psi_H)`; row = test.
pub fn assemble_curl(space: &NedelecSpace) -> CsrMatrix {
    let mut out = pattern(space);
    let nc = space.n_comp;
    let nl = 12 * nc;
    let hb = nc - 1;
    let mut local = vec![0.0; nl * nl];
    for cell in 0..space.mesh.n_cells() {
        local.iter_mut().for_each(|v| *v = 0.0);
        for q in 0..space.rule.len() {
            let w = space.weight(q);
            let phi = space.basis_at(q);
            let curl = space.curl_at(q);
            for l in 0..12 {
                for lp in 0..12 {
                    let v = w * (curl[lp][0] * phi[l][0] + curl[lp][1] * phi[l][1] + curl[lp][2] * phi[l][2]);
                    local[l * nl + hb * 12 + lp] -= v;
                    local[(hb * 12 + l) * nl + lp] += v;
                }
            }
        }
        let dofs = space.cell_dofs(cell);
        out.add_local(&dofs, &dofs, &local);
    }
    out
}

/// Unweighted quadrature Gram matrix (the `L^2` inner product on the space).
pub fn assemble_gram(space: &NedelecSpace) -> CsrMatrix {
    let id = DMatrix::identity(space.n(), space.n());
    assemble_weighted(space, |_| &id)
}

pub fn assemble_macro_forms(space: &NedelecSpace, table: &EffectiveTensorTable) -> Result<MacroForms> {
    if table.n != space.n() {
        return Err(Error::Assembly(format!(
            "tensor table has n = {} but the space carries n = {}",
            table.n,
            space.n()
        )));
    }
    if table.n_points() != space.n_points() {
        let p = table.n_points().min(space.n_points());
        return Err(Error::Assembly(format!(
            "no tensor for quadrature point {p} at {:?} (table has {} points, mesh has {})",
            space.point(p.min(space.n_points().saturating_sub(1))),
            table.n_points(),
            space.n_points()
        )));
    }
    Ok(MacroForms {
        mass: assemble_weighted(space, |p| &table.entry(p).m_h),
        damping: assemble_weighted(space, |p| &table.entry(p).r_h),
        curl: assemble_curl(space),
        kernel0: assemble_weighted(space, |p| &table.entry(p).g_h[0]),
    })
}

/// Field values at all quadrature points, `n` per point.
pub fn lift(space: &NedelecSpace, u: &[f64]) -> Vec<f64> {
    let n = space.n();
    let nq = space.rule.len();
    let mut out = vec![0.0; space.n_points() * n];
    for cell in 0..space.mesh.n_cells() {
        let dofs = space.cell_dofs(cell);
        for q in 0..nq {
            let phi = space.basis_at(q);
            let v = &mut out[(cell * nq + q) * n..(cell * nq + q + 1) * n];
            for (k, d) in dofs.iter().enumerate() {
                if let Some(d) = *d {
                    let a = u[d];
                    if a != 0.0 {
                        let (c, l) = (k / 12, k % 12);
                        for i in 0..3 {
                            v[3 * c + i] += a * phi[l][i];
                        }
                    }
                }
            }
        }
    }
    out
}

/// Load vector `b_i = sum_p gamma_p V(x_p) . phi_i(x_p)` of point values `V`.
pub fn project(space: &NedelecSpace, values: &[f64]) -> Vec<f64> {
    let n = space.n();
    let nq = space.rule.len();
    let mut out = vec![0.0; space.n_free()];
    for cell in 0..space.mesh.n_cells() {
        let dofs = space.cell_dofs(cell);
        for q in 0..nq {
            let w = space.weight(q);
            let phi = space.basis_at(q);
            let v = &values[(cell * nq + q) * n..(cell * nq + q + 1) * n];
            if v.iter().all(|x| *x == 0.0) {
                continue;
            }
            for (k, d) in dofs.iter().enumerate() {
                if let Some(d) = *d {
                    let (c, l) = (k / 12, k % 12);
                    out[d] += w * (v[3 * c] * phi[l][0] + v[3 * c + 1] * phi[l][1] + v[3 * c + 2] * phi[l][2]);
                }
            }
        }
    }
    out
}

/// Load of a source given as a function of position.
pub fn load_from_fn(space: &NedelecSpace, f: impl Fn([f64; 3]) -> Vec<f64>) -> Vec<f64> {
    let vals: Vec<f64> = (0..space.n_points()).flat_map(|p| f(space.point(p))).collect();
    project(space, &vals)
}

/// `sqrt(u^T A u)` for a symmetric positive semi-definite `A`.
pub fn energy_norm(a: &CsrMatrix, u: &[f64]) -> f64 {
    dot(u, &a.matvec(u)).max(0.0).sqrt()
}

/// Weighted `L^2` distance `(int (u_h - u) . W (u_h - u))^(1/2)` with an
/// `order^3` Gauss rule per cell; `W = I` gives the plain `L^2` error.
pub fn weighted_l2_error(
    space: &NedelecSpace,
    u: &[f64],
    exact: impl Fn([f64; 3]) -> Vec<f64>,
    weight: &DMatrix<f64>,
    order: usize,
) -> f64 {
    let rule = TensorRule::gauss(order);
    let h = space.mesh.cell_size();
    let vol = space.mesh.cell_volume();
    let n = space.n();
    let mut acc = 0.0;
    for cell in 0..space.mesh.n_cells() {
        let o = space.mesh.cell_origin(cell);
        for (xi, w) in rule.points.iter().zip(&rule.weights) {
            let x = [o[0] + xi[0] * h[0], o[1] + xi[1] * h[1], o[2] + xi[2] * h[2]];
            let (vals, _) = local_basis(*xi, h);
            let uh = eval_cell(space, u, cell, &vals);
            let ue = exact(x);
            let e = nalgebra::DVector::from_fn(n, |i, _| uh[i] - ue[i]);
            acc += w * vol * e.dot(&(weight * &e));
        }
    }
    acc.max(0.0).sqrt()
}

/// `L^2` errors of the field and of its curl, per block, for interpolation
/// studies.
pub fn hcurl_error(
    space: &NedelecSpace,
    u: &[f64],
    exact: impl Fn([f64; 3]) -> Vec<f64>,
    exact_curl: impl Fn([f64; 3]) -> Vec<f64>,
    order: usize,
) -> (f64, f64) {
    let rule = TensorRule::gauss(order);
    let h = space.mesh.cell_size();
    let vol = space.mesh.cell_volume();
    let (mut ev, mut ec) = (0.0, 0.0);
    for cell in 0..space.mesh.n_cells() {
        let o = space.mesh.cell_origin(cell);
        for (xi, w) in rule.points.iter().zip(&rule.weights) {
            let x = [o[0] + xi[0] * h[0], o[1] + xi[1] * h[1], o[2] + xi[2] * h[2]];
            let (vals, curls) = local_basis(*xi, h);
            let uh = eval_cell(space, u, cell, &vals);
            let ch = eval_cell(space, u, cell, &curls);
            let ue = exact(x);
            let ce = exact_curl(x);
            for i in 0..space.n() {
                ev += w * vol * (uh[i] - ue[i]).powi(2);
                ec += w * vol * (ch[i] - ce[i]).powi(2);
            }
        }
    }
    (ev.sqrt(), ec.sqrt())
}

fn eval_cell(space: &NedelecSpace, u: &[f64], cell: usize, basis: &[[f64; 3]; 12]) -> Vec<f64> {
    let mut v = vec![0.0; space.n()];
    for (k, d) in space.cell_dofs(cell).iter().enumerate() {
        if let Some(d) = *d {
            let (c, l) = (k / 12, k % 12);
            for i in 0..3 {
                v[3 * c + i] += u[d] * basis[l][i];
            }
        }
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_macro_mesh;

    fn space(cells: [usize; 3], n_comp: usize) -> NedelecSpace {
        NedelecSpace::new(build_macro_mesh(cells, [0.0; 3], [1.0, 0.5, 2.0]).unwrap(), 1, n_comp).unwrap()
    }

    #[test]
    fn curl_pairing_is_skew() {
        for nc in [2, 3] {
            let s = space([3, 2, 2], nc);
            let a = assemble_curl(&s);
            assert!(a.skew_defect() <= 1e-12 * a.max_abs().max(1.0), "{}", a.skew_defect());
            assert!(a.max_abs() > 0.0);
        }
    }

    #[test]
    fn curl_pairing_skew_on_random_vectors() {
        let s = space([2, 2, 2], 3);
        let a = assemble_curl(&s);
        let mut state = 12345u64;
        for _ in 0..100 {
            let v: Vec<f64> = (0..s.n_free())
                .map(|_| {
                    state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                    (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
                })
                .collect();
            let q = dot(&v, &a.matvec(&v));
            assert!(q.abs() < 1e-12);
        }
    }

    #[test]
    fn gram_matches_lift_and_project() {
        let s = space([2, 2, 1], 2);
        let g = assemble_gram(&s);
        let u: Vec<f64> = (0..s.n_free()).map(|i| (i as f64 * 0.7).sin()).collect();
        let gu = g.matvec(&u);
        let pu = project(&s, &lift(&s, &u));
        let err = gu.iter().zip(&pu).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-14);
        // positive definite on free DOFs: the Rayleigh quotient is positive
        assert!(dot(&u, &gu) > 0.0);
    }

    #[test]
    fn constant_tensor_mass_equals_exact_integral() {
        // quadrature is exact for products of lowest-order edge functions, so
        // a 2^3 and a 4^3 rule give the same matrix
        let s = space([2, 1, 1], 2);
        let m = DMatrix::from_fn(6, 6, |i, j| if i == j { 2.0 } else if i.abs_diff(j) == 3 { 0.5 } else { 0.0 });
        let a = assemble_weighted(&s, |_| &m);
        let u: Vec<f64> = (0..s.n_free()).map(|i| 1.0 + (i % 5) as f64).collect();
        let quad = dot(&u, &a.matvec(&u));
        let exact = weighted_l2_error(&s, &u, |_| vec![0.0; 6], &m, 4).powi(2);
        assert!((quad - exact).abs() < 1e-13 * exact);
    }

    #[test]
    fn interpolation_error_halves_with_h() {
        let pi = std::f64::consts::PI;
        let f = |x: [f64; 3]| vec![0.0, 0.0, 0.0, (pi * x[1]).sin(), 0.0, 0.0];
        let c = |x: [f64; 3]| vec![0.0, 0.0, 0.0, 0.0, 0.0, -pi * (pi * x[1]).cos()];
        let err = |k: usize| {
            let s = NedelecSpace::new(build_macro_mesh([k; 3], [0.0; 3], [1.0; 3]).unwrap(), 1, 2).unwrap();
            let u = s.interpolate(f);
            let (e0, e1) = hcurl_error(&s, &u, f, c, 4);
            (e0 * e0 + e1 * e1).sqrt()
        };
        let ratio = err(4) / err(8);
        assert!((ratio - 2.0).abs() < 0.2, "{ratio}");
    }
}
