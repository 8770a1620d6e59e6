use crate::error::{Error, Result};
use crate::materials::{BoundSampler, CoefficientBounds, Coefficients};
use crate::micro::space::PeriodicLagrangeSpace;
use crate::solvers::RankOneAugmented;
use crate::sparse::{pattern_from_elements, CsrMatrix};

/// Stiffness-type matrices of the weighted forms `m(phi, psi) = int M grad phi . grad psi`
/// and `r(phi, psi) = int R grad phi . grad psi` on the periodic space, for a
/// fixed macroscopic point.
#[derive(Debug, Clone)]
pub struct MicroForms {
    pub n: usize,
    pub x: [f64; 3],
    pub km: CsrMatrix,
    pub kr: CsrMatrix,
    pub bounds: CoefficientBounds,
    /// Smallest eigenvalue of the symmetric part of `R` over the samples.
    pub min_r_eig: f64,
    pub kr_symmetric: bool,
    /// Weight of the rank-one mean-pinning terms.
    pub aug_scale: f64,
}

/// Calls `f(cell, nodes, q, weight, y)` for every micro quadrature point.
pub(crate) fn for_each_point<F>(space: &PeriodicLagrangeSpace, mut f: F)
where
    F: FnMut(usize, &[usize], usize, f64, [f64; 3]),
{
    let h = space.h();
    let vol = space.cell_volume();
    for cell in 0..space.n_cells() {
        let nodes = space.cell_nodes(cell);
        let o = space.cell_origin(cell);
        for (q, p) in space.rule.points.iter().enumerate() {
            let y = [o[0] + p[0] * h[0], o[1] + p[1] * h[1], o[2] + p[2] * h[2]];
            f(cell, &nodes, q, space.rule.weights[q] * vol, y);
        }
    }
}

fn block_is_zero(t: &[f64], n: usize, c: usize, cp: usize) -> bool {
    (0..3).all(|d| (0..3).all(|dp| t[(3 * c + d) * n + 3 * cp + dp] == 0.0))
}

/// Assembles `K_m` and `K_r` and samples `alpha`, `C_M`, `C_R` at the
/// quadrature points.
pub fn assemble_micro_forms(space: &PeriodicLagrangeSpace, coeffs: &Coefficients, x: [f64; 3]) -> Result<MicroForms> {
    let n = coeffs.n();
    let nc = n / 3;
    if space.n_comp != nc {
        return Err(Error::config(format!(
            "space has {} components but the coefficients need {nc}",
            space.n_comp
        )));
    }
    let nl = space.n_local();
    let ns = space.n_scalar();
    let mut m = vec![0.0; n * n];
    let mut r = vec![0.0; n * n];

    // first pass: bounds and structural coupling of the components
    let mut sampler = BoundSampler::new(n);
    let mut mask = vec![false; nc * nc];
    let mut asym: f64 = 0.0;
    for_each_point(space, |_, _, _, _, y| {
        coeffs.eval(x, y, &mut m, &mut r);
        for i in 0..n {
            for j in 0..i {
                asym = asym.max((m[i * n + j] - m[j * n + i]).abs());
            }
        }
        sampler.sample(&m, &r);
        for c in 0..nc {
            for cp in 0..nc {
                if !mask[c * nc + cp] && !(block_is_zero(&m, n, c, cp) && block_is_zero(&r, n, c, cp)) {
                    mask[c * nc + cp] = true;
                }
            }
        }
    });
    let bounds = sampler.bounds;
    if asym > 1e-12 * bounds.c_m.max(1.0) {
        return Err(Error::scenario(format!("M is not symmetric (defect {asym:.3e})")));
    }
    if !(bounds.alpha > 0.0) {
        return Err(Error::scenario(format!(
            "M is not positive definite at x = {x:?}: smallest sampled eigenvalue {:.6e}",
            bounds.alpha
        )));
    }
    if sampler.min_r_eig < -1e-12 * bounds.c_r.max(1.0) {
        return Err(Error::scenario(format!(
            "R is not positive semi-definite at x = {x:?}: smallest sampled eigenvalue {:.6e}",
            sampler.min_r_eig
        )));
    }

    let element_dofs = |cell: usize| -> Vec<Option<usize>> {
        let nodes = space.cell_nodes(cell);
        (0..nc)
            .flat_map(|c| nodes.iter().map(move |&s| Some(c * ns + s)))
            .collect()
    };
    let pattern = pattern_from_elements(space.n_dofs(), space.n_cells(), element_dofs, |a, b| {
        mask[(a / nl) * nc + b / nl]
    });
    let mut km = pattern.clone();
    let mut kr = pattern;

    let grads: Vec<Vec<[f64; 3]>> = (0..space.rule.len()).map(|q| space.grads(q)).collect();
    let nloc = nc * nl;
    let mut lm = vec![0.0; nloc * nloc];
    let mut lr = vec![0.0; nloc * nloc];
    let mut tg = vec![[0.0; 3]; nl];
    let mut current = usize::MAX;
    let mut dofs: Vec<Option<usize>> = Vec::new();
    let flush = |dofs: &[Option<usize>], lm: &mut Vec<f64>, lr: &mut Vec<f64>, km: &mut CsrMatrix, kr: &mut CsrMatrix| {
        km.add_local(dofs, dofs, lm);
        kr.add_local(dofs, dofs, lr);
        lm.iter_mut().for_each(|v| *v = 0.0);
        lr.iter_mut().for_each(|v| *v = 0.0);
    };
    for_each_point(space, |cell, nodes, q, w, y| {
        if cell != current {
            if current != usize::MAX {
                flush(&dofs, &mut lm, &mut lr, &mut km, &mut kr);
            }
            current = cell;
            dofs = (0..nc)
                .flat_map(|c| nodes.iter().map(move |&s| Some(c * ns + s)))
                .collect();
        }
        coeffs.eval(x, y, &mut m, &mut r);
        let g = &grads[q];
        for (t, local) in [(&m, &mut lm), (&r, &mut lr)] {
            for c in 0..nc {
                for cp in 0..nc {
                    if block_is_zero(t, n, c, cp) {
                        continue;
                    }
                    // tg[b] = T_{c,c'} grad phi_b
                    for b in 0..nl {
                        for d in 0..3 {
                            let row = (3 * c + d) * n + 3 * cp;
                            tg[b][d] = t[row] * g[b][0] + t[row + 1] * g[b][1] + t[row + 2] * g[b][2];
                        }
                    }
                    for a in 0..nl {
                        let ga = g[a];
                        let base = (c * nl + a) * nloc + cp * nl;
                        for b in 0..nl {
                            local[base + b] += w * (tg[b][0] * ga[0] + tg[b][1] * ga[1] + tg[b][2] * ga[2]);
                        }
                    }
                }
            }
        }
    });
    if current != usize::MAX {
        flush(&dofs, &mut lm, &mut lr, &mut km, &mut kr);
    }

    let kr_symmetric = kr.asymmetry() <= 1e-14 * kr.max_abs().max(f64::MIN_POSITIVE);
    let mu2: f64 = space.means().iter().map(|v| v * v).sum();
    let diag = km.diagonal();
    let avg = diag.iter().sum::<f64>() / diag.len() as f64;
    Ok(MicroForms {
        n,
        x,
        km,
        kr,
        bounds,
        min_r_eig: sampler.min_r_eig,
        kr_symmetric,
        aug_scale: avg / mu2,
    })
}

impl MicroForms {
    pub fn n_comp(&self) -> usize {
        self.n / 3
    }

    /// `base + s * sum_c mu_c mu_c^T` with one mean-pinning term per component.
    pub fn augmented<'a>(&self, base: &'a CsrMatrix, space: &'a PeriodicLagrangeSpace) -> RankOneAugmented<'a> {
        let ns = space.n_scalar();
        RankOneAugmented {
            base,
            vectors: (0..self.n_comp()).map(|c| (c * ns, space.means())).collect(),
            scale: self.aug_scale,
        }
    }

    /// `||w||_m = sqrt(w^T K_m w)`.
    pub fn m_norm(&self, w: &[f64]) -> f64 {
        crate::sparse::dot(w, &self.km.matvec(w)).max(0.0).sqrt()
    }

    /// Gram matrix of the gradients (unit weight), used for norm equivalence checks.
    pub fn gradient_gram(space: &PeriodicLagrangeSpace) -> Result<CsrMatrix> {
        let n = 3 * space.n_comp;
        let mat = crate::materials::Material::Matrix {
            n,
            m: identity(n),
            r: vec![0.0; n * n],
        };
        Ok(assemble_micro_forms(space, &crate::materials::Coefficients::new(mat), [0.0; 3])?.km)
    }
}

fn identity(n: usize) -> Vec<f64> {
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::materials::{Material, Profile};

    fn iso(m: f64, r: f64) -> Coefficients {
        Coefficients::new(Material::Isotropic {
            m: Profile::constant(m),
            r: Profile::constant(r),
        })
    }

    #[test]
    fn unit_weight_gives_gradient_gram() {
        let s = PeriodicLagrangeSpace::new([2, 2, 2], 1, 2).unwrap();
        let f = assemble_micro_forms(&s, &iso(1.0, 0.0), [0.0; 3]).unwrap();
        let gram = MicroForms::gradient_gram(&s).unwrap();
        assert!(f.km.lin_comb(1.0, &gram, -1.0).max_abs() < 1e-14);
        // constants are in the kernel
        let ones = vec![1.0; s.n_dofs()];
        assert!(f.km.matvec(&ones).iter().all(|v| v.abs() < 1e-13));
        // R = 0 gives the zero matrix
        assert_eq!(f.kr.max_abs(), 0.0);
    }

    #[test]
    fn scalar_homogeneity() {
        let s = PeriodicLagrangeSpace::new([3, 2, 2], 2, 2).unwrap();
        let a = assemble_micro_forms(&s, &iso(1.0, 1.0), [0.0; 3]).unwrap();
        let b = assemble_micro_forms(&s, &iso(2.5, 1.0), [0.0; 3]).unwrap();
        assert!(b.km.lin_comb(1.0, &a.km, -2.5).max_abs() < 1e-13 * b.km.max_abs());
        assert!(a.kr_symmetric);
        assert_eq!(b.bounds.alpha, 2.5);
    }

    #[test]
    fn indefinite_m_is_rejected() {
        let s = PeriodicLagrangeSpace::new([2, 2, 2], 1, 2).unwrap();
        let e = assemble_micro_forms(&s, &iso(-1.0, 0.0), [0.0; 3]).unwrap_err();
        assert!(matches!(e, Error::Scenario(_)));
    }
}
