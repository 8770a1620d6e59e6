//! Locally periodic coefficient models `M(x, y)` and `R(x, y)`.
//!
//! `x` is the macroscopic position, `y` the fast variable on the unit cell.
//! All tensors are `n x n`, row-major, with the field ordered as
//! `(E, P_1, .., P_{N_E}, H)` in blocks of three.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Scalar periodic profile on the unit cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Profile {
    Constant {
        value: f64,
    },
    /// Piecewise constant along one axis; `fractions` are the layer
    /// thicknesses and must sum to one.
    Piecewise {
        axis: usize,
        values: Vec<f64>,
        fractions: Vec<f64>,
    },
    /// `mean + amplitude * sin(2 pi y_axis + phase)`
    Sinusoid {
        axis: usize,
        mean: f64,
        amplitude: f64,
        #[serde(default)]
        phase: f64,
    },
    /// `mean + amplitude * cos(2 pi y_1) cos(2 pi y_2) cos(2 pi y_3)`
    Smooth {
        mean: f64,
        amplitude: f64,
    },
}

impl Profile {
    pub fn constant(value: f64) -> Self {
        Profile::Constant { value }
    }

    pub fn eval(&self, y: [f64; 3]) -> f64 {
        match self {
            Profile::Constant { value } => *value,
            Profile::Piecewise {
                axis,
                values,
                fractions,
            } => {
                let s = y[*axis] - y[*axis].floor();
                let mut acc = 0.0;
                for (v, f) in values.iter().zip(fractions) {
                    acc += f;
                    if s < acc {
                        return *v;
                    }
                }
                *values.last().unwrap()
            }
            Profile::Sinusoid {
                axis,
                mean,
                amplitude,
                phase,
            } => mean + amplitude * (2.0 * PI * y[*axis] + phase).sin(),
            Profile::Smooth { mean, amplitude } => {
                mean + amplitude
                    * (2.0 * PI * y[0]).cos()
                    * (2.0 * PI * y[1]).cos()
                    * (2.0 * PI * y[2]).cos()
            }
        }
    }

    /// Exact range of the profile.
    pub fn range(&self) -> (f64, f64) {
        match self {
            Profile::Constant { value } => (*value, *value),
            Profile::Piecewise { values, .. } => (
                values.iter().cloned().fold(f64::INFINITY, f64::min),
                values.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            ),
            Profile::Sinusoid {
                mean, amplitude, ..
            }
            | Profile::Smooth { mean, amplitude } => (mean - amplitude.abs(), mean + amplitude.abs()),
        }
    }

    pub fn is_constant(&self) -> bool {
        match self {
            Profile::Constant { .. } => true,
            Profile::Piecewise { values, .. } => values.windows(2).all(|w| w[0] == w[1]),
            Profile::Sinusoid { amplitude, .. } | Profile::Smooth { amplitude, .. } => *amplitude == 0.0,
        }
    }

    pub fn validate(&self, name: &str) -> Result<()> {
        let bad = |msg: String| Err(Error::config(format!("{name}: {msg}")));
        match self {
            Profile::Piecewise {
                axis,
                values,
                fractions,
            } => {
                if *axis > 2 {
                    return bad(format!("axis {axis} out of range"));
                }
                if values.is_empty() || values.len() != fractions.len() {
                    return bad("values and fractions must be non-empty and of equal length".into());
                }
                if fractions.iter().any(|f| !(*f > 0.0)) {
                    return bad("fractions must be positive".into());
                }
                let s: f64 = fractions.iter().sum();
                if (s - 1.0).abs() > 1e-12 {
                    return bad(format!("fractions sum to {s}, expected 1"));
                }
            }
            Profile::Sinusoid { axis, .. } if *axis > 2 => return bad(format!("axis {axis} out of range")),
            _ => {}
        }
        let (lo, hi) = self.range();
        if !lo.is_finite() || !hi.is_finite() {
            return bad("non-finite values".into());
        }
        Ok(())
    }

    /// Interface positions of a piecewise profile (interior ones only).
    pub fn interfaces(&self) -> Vec<f64> {
        match self {
            Profile::Piecewise { fractions, .. } => {
                let mut acc = 0.0;
                let mut out = Vec::new();
                for f in &fractions[..fractions.len() - 1] {
                    acc += f;
                    out.push(acc);
                }
                out
            }
            _ => Vec::new(),
        }
    }

    pub fn axis(&self) -> Option<usize> {
        match self {
            Profile::Piecewise { axis, .. } | Profile::Sinusoid { axis, .. } => Some(*axis),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "kebab-case")]
pub enum Material {
    /// `M = m(y) I_n`, `R = r(y) I_n` with `n = 6`.
    Isotropic { m: Profile, r: Profile },
    /// Conductive Maxwell medium, `n = 6`. `sigma_m` is an optional magnetic
    /// loss.
    Maxwell {
        eps: Profile,
        mu: Profile,
        sigma: Profile,
        sigma_m: Profile,
    },
    /// Debye orientation polarization (`N_E = 1`, `n = 9`) written in the
    /// symmetric first-order form.
    Debye {
        eps_inf: Profile,
        eps_delta: Profile,
        tau_d: Profile,
        mu: Profile,
        sigma: Profile,
    },
    /// Constant `n x n` tensors, row-major.
    Matrix { n: usize, m: Vec<f64>, r: Vec<f64> },
}

impl Material {
    pub fn n(&self) -> usize {
        match self {
            Material::Isotropic { .. } | Material::Maxwell { .. } => 6,
            Material::Debye { .. } => 9,
            Material::Matrix { n, .. } => *n,
        }
    }

    pub fn n_e(&self) -> usize {
        self.n() / 3 - 2
    }

    fn profiles(&self) -> Vec<(&'static str, &Profile)> {
        match self {
            Material::Isotropic { m, r } => vec![("m", m), ("r", r)],
            Material::Maxwell {
                eps,
                mu,
                sigma,
                sigma_m,
            } => vec![("eps", eps), ("mu", mu), ("sigma", sigma), ("sigma_m", sigma_m)],
            Material::Debye {
                eps_inf,
                eps_delta,
                tau_d,
                mu,
                sigma,
            } => vec![
                ("eps_inf", eps_inf),
                ("eps_delta", eps_delta),
                ("tau_d", tau_d),
                ("mu", mu),
                ("sigma", sigma),
            ],
            Material::Matrix { .. } => Vec::new(),
        }
    }

    /// True if neither tensor depends on the fast variable.
    pub fn is_constant(&self) -> bool {
        self.profiles().iter().all(|(_, p)| p.is_constant())
    }

    /// All interface coordinates of piecewise profiles, per axis.
    pub fn interfaces(&self) -> [Vec<f64>; 3] {
        let mut out: [Vec<f64>; 3] = Default::default();
        for (_, p) in self.profiles() {
            if let Some(a) = p.axis() {
                out[a].extend(p.interfaces());
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in self.profiles() {
            p.validate(name)?;
        }
        let positive = |name: &str, p: &Profile| -> Result<()> {
            let (lo, _) = p.range();
            if lo > 0.0 {
                Ok(())
            } else {
                Err(Error::scenario(format!("{name} must be positive, minimum is {lo}")))
            }
        };
        let nonneg = |name: &str, p: &Profile| -> Result<()> {
            let (lo, _) = p.range();
            if lo >= 0.0 {
                Ok(())
            } else {
                Err(Error::scenario(format!("{name} must be non-negative, minimum is {lo}")))
            }
        };
        match self {
            Material::Isotropic { m, r } => {
                positive("m", m)?;
                nonneg("r", r)?;
            }
            Material::Maxwell {
                eps,
                mu,
                sigma,
                sigma_m,
            } => {
                positive("eps", eps)?;
                positive("mu", mu)?;
                nonneg("sigma", sigma)?;
                nonneg("sigma_m", sigma_m)?;
            }
            Material::Debye {
                eps_inf,
                eps_delta,
                tau_d,
                mu,
                sigma,
            } => {
                positive("eps_inf", eps_inf)?;
                positive("eps_delta", eps_delta)?;
                positive("tau_d", tau_d)?;
                positive("mu", mu)?;
                nonneg("sigma", sigma)?;
            }
            Material::Matrix { n, m, r } => {
                if *n == 0 || n % 3 != 0 || *n < 6 {
                    return Err(Error::config(format!("matrix dimension {n} is not 3(2+N_E)")));
                }
                if m.len() != n * n || r.len() != n * n {
                    return Err(Error::config(format!("matrix tensors must have {} entries", n * n)));
                }
                let mm = nalgebra::DMatrix::from_row_slice(*n, *n, m);
                if (&mm - mm.transpose()).amax() > 1e-14 * mm.amax() {
                    return Err(Error::scenario("M must be symmetric"));
                }
            }
        }
        Ok(())
    }

    /// Writes `M(y)` into `m` and `R(y)` into `r` (row-major `n x n`).
    pub fn eval(&self, y: [f64; 3], m: &mut [f64], r: &mut [f64]) {
        let n = self.n();
        m.iter_mut().for_each(|v| *v = 0.0);
        r.iter_mut().for_each(|v| *v = 0.0);
        let diag = |t: &mut [f64], block: usize, v: f64| {
            for d in 0..3 {
                let i = 3 * block + d;
                t[i * n + i] = v;
            }
        };
        match self {
            Material::Isotropic { m: pm, r: pr } => {
                let (a, b) = (pm.eval(y), pr.eval(y));
                for blk in 0..2 {
                    diag(m, blk, a);
                    diag(r, blk, b);
                }
            }
            Material::Maxwell {
                eps,
                mu,
                sigma,
                sigma_m,
            } => {
                diag(m, 0, eps.eval(y));
                diag(m, 1, mu.eval(y));
                diag(r, 0, sigma.eval(y));
                diag(r, 1, sigma_m.eval(y));
            }
            Material::Debye {
                eps_inf,
                eps_delta,
                tau_d,
                mu,
                sigma,
            } => {
                let (ei, ed, td) = (eps_inf.eval(y), eps_delta.eval(y), tau_d.eval(y));
                diag(m, 0, ei);
                diag(m, 1, 1.0 / ed);
                diag(m, 2, mu.eval(y));
                diag(r, 0, sigma.eval(y) + ed / td);
                diag(r, 1, 1.0 / (ed * td));
                for d in 0..3 {
                    r[d * n + 3 + d] = -1.0 / td;
                    r[(3 + d) * n + d] = -1.0 / td;
                }
            }
            Material::Matrix { m: mm, r: rr, .. } => {
                m.copy_from_slice(mm);
                r.copy_from_slice(rr);
            }
        }
    }
}

/// Material plus an optional slow modulation `M(x, y) = (1 + a sin(pi x_1)) M(y)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficients {
    pub material: Material,
    #[serde(default)]
    pub x_modulation: f64,
}

impl Coefficients {
    pub fn new(material: Material) -> Self {
        Coefficients {
            material,
            x_modulation: 0.0,
        }
    }

    pub fn n(&self) -> usize {
        self.material.n()
    }

    /// True if the tensors do not depend on the macroscopic position, so a
    /// single set of cell problems serves every quadrature point.
    pub fn x_independent(&self) -> bool {
        self.x_modulation == 0.0
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.x_modulation.abs() < 1.0) {
            return Err(Error::config(format!(
                "x_modulation must lie in (-1, 1), got {}",
                self.x_modulation
            )));
        }
        self.material.validate()
    }

    pub fn eval(&self, x: [f64; 3], y: [f64; 3], m: &mut [f64], r: &mut [f64]) {
        self.material.eval(y, m, r);
        if self.x_modulation != 0.0 {
            let f = 1.0 + self.x_modulation * (PI * x[0]).sin();
            m.iter_mut().for_each(|v| *v *= f);
        }
    }
}

/// Extreme eigenvalues of a symmetric matrix.
pub fn symmetric_eigen_range(a: &[f64], n: usize) -> (f64, f64) {
    let m = nalgebra::DMatrix::from_row_slice(n, n, a);
    let sym = (&m + m.transpose()) * 0.5;
    let e = sym.symmetric_eigenvalues();
    (e.min(), e.max())
}

/// Spectral norm (largest singular value).
pub fn spectral_norm(a: &[f64], n: usize) -> f64 {
    if a.iter().all(|v| *v == 0.0) {
        return 0.0;
    }
    let m = nalgebra::DMatrix::from_row_slice(n, n, a);
    m.singular_values().max()
}

/// `alpha`, `C_M`, `C_R` sampled over a set of points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoefficientBounds {
    pub alpha: f64,
    pub c_m: f64,
    pub c_r: f64,
}

impl CoefficientBounds {
    pub fn empty() -> Self {
        CoefficientBounds {
            alpha: f64::INFINITY,
            c_m: 0.0,
            c_r: 0.0,
        }
    }

    pub fn merge(&self, other: &CoefficientBounds) -> Self {
        CoefficientBounds {
            alpha: self.alpha.min(other.alpha),
            c_m: self.c_m.max(other.c_m),
            c_r: self.c_r.max(other.c_r),
        }
    }
}

/// Accumulates bounds over samples, memoising repeated tensors (laminates
/// revisit the same few values many times).
pub struct BoundSampler {
    n: usize,
    pub bounds: CoefficientBounds,
    pub min_r_eig: f64,
    cache: std::collections::HashMap<Vec<u64>, (f64, f64, f64, f64)>,
}

impl BoundSampler {
    pub fn new(n: usize) -> Self {
        BoundSampler {
            n,
            bounds: CoefficientBounds::empty(),
            min_r_eig: f64::INFINITY,
            cache: std::collections::HashMap::new(),
        }
    }

    pub fn sample(&mut self, m: &[f64], r: &[f64]) {
        let key: Vec<u64> = m.iter().chain(r).map(|v| v.to_bits()).collect();
        let n = self.n;
        let vals = if let Some(v) = self.cache.get(&key) {
            *v
        } else {
            let (lo, hi) = symmetric_eigen_range(m, n);
            let cr = spectral_norm(r, n);
            let (rlo, _) = symmetric_eigen_range(r, n);
            let v = (lo, hi, cr, rlo);
            if self.cache.len() < 100_000 {
                self.cache.insert(key, v);
            }
            v
        };
        self.bounds.alpha = self.bounds.alpha.min(vals.0);
        self.bounds.c_m = self.bounds.c_m.max(vals.1);
        self.bounds.c_r = self.bounds.c_r.max(vals.2);
        self.min_r_eig = self.min_r_eig.min(vals.3);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn piecewise_profile_layers() {
        let p = Profile::Piecewise {
            axis: 0,
            values: vec![2.0, 4.0],
            fractions: vec![0.5, 0.5],
        };
        assert_eq!(p.eval([0.1, 0.9, 0.9]), 2.0);
        assert_eq!(p.eval([0.5, 0.0, 0.0]), 4.0);
        assert_eq!(p.eval([0.99, 0.0, 0.0]), 4.0);
        assert_eq!(p.range(), (2.0, 4.0));
        assert_eq!(p.interfaces(), vec![0.5]);
        p.validate("a").unwrap();
    }

    #[test]
    fn bad_fractions_rejected() {
        let p = Profile::Piecewise {
            axis: 0,
            values: vec![2.0, 4.0],
            fractions: vec![0.5, 0.4],
        };
        assert!(matches!(p.validate("a"), Err(Error::Config(_))));
    }

    #[test]
    fn debye_tensors_are_symmetric_and_semidefinite() {
        let mat = Material::Debye {
            eps_inf: Profile::constant(1.5),
            eps_delta: Profile::constant(2.0),
            tau_d: Profile::constant(0.5),
            mu: Profile::constant(1.0),
            sigma: Profile::constant(0.1),
        };
        assert_eq!(mat.n(), 9);
        assert_eq!(mat.n_e(), 1);
        let mut m = vec![0.0; 81];
        let mut r = vec![0.0; 81];
        mat.eval([0.3; 3], &mut m, &mut r);
        let (lo, hi) = symmetric_eigen_range(&m, 9);
        assert!((lo - 0.5).abs() < 1e-14 && (hi - 1.5).abs() < 1e-14);
        let rm = nalgebra::DMatrix::from_row_slice(9, 9, &r);
        assert_eq!(rm.clone(), rm.transpose());
        let (rlo, _) = symmetric_eigen_range(&r, 9);
        assert!(rlo > -1e-14);
        // H block undamped
        assert!((6..9).all(|i| (0..9).all(|j| r[i * 9 + j] == 0.0)));
    }

    #[test]
    fn modulation_scales_only_m() {
        let mut c = Coefficients::new(Material::Isotropic {
            m: Profile::constant(2.0),
            r: Profile::constant(1.0),
        });
        c.x_modulation = 0.5;
        let mut m = vec![0.0; 36];
        let mut r = vec![0.0; 36];
        c.eval([0.5, 0.0, 0.0], [0.0; 3], &mut m, &mut r);
        assert!((m[0] - 3.0).abs() < 1e-15);
        assert_eq!(r[0], 1.0);
        assert!(!c.x_independent());
    }

    #[test]
    fn sampler_tracks_bounds() {
        let mut s = BoundSampler::new(6);
        let mut m = vec![0.0; 36];
        let mut r = vec![0.0; 36];
        let mat = Material::Isotropic {
            m: Profile::Sinusoid {
                axis: 0,
                mean: 3.0,
                amplitude: 1.0,
                phase: 0.0,
            },
            r: Profile::constant(0.5),
        };
        for y in [0.25, 0.75, 0.1] {
            mat.eval([y, 0.0, 0.0], &mut m, &mut r);
            s.sample(&m, &r);
        }
        assert!((s.bounds.alpha - 2.0).abs() < 1e-14);
        assert!((s.bounds.c_m - 4.0).abs() < 1e-14);
        assert!((s.bounds.c_r - 0.5).abs() < 1e-14);
    }
}
