use serde::Serialize;

use crate::error::{Error, Result};

/// Least-squares slope of `log e` against `log h`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateFit {
    pub h: Vec<f64>,
    pub error: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual of the fit in log space.
    pub residual: f64,
}

impl RateFit {
    /// Slopes between consecutive levels.
    pub fn pairwise(&self) -> Vec<f64> {
        self.h
            .windows(2)
            .zip(self.error.windows(2))
            .map(|(h, e)| (e[0] / e[1]).ln() / (h[0] / h[1]).ln())
            .collect()
    }
}

pub fn fit_rate(h: &[f64], error: &[f64]) -> Result<RateFit> {
    if h.len() != error.len() {
        return Err(Error::config("rate fit needs one error per mesh size"));
    }
    if h.len() < 3 {
        return Err(Error::config(format!("rate fit needs at least 3 levels, got {}", h.len())));
    }
    if h.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::config("mesh sizes must be positive"));
    }
    let strictly_decreasing = h.windows(2).all(|w| w[1] < w[0]);
    let strictly_increasing = h.windows(2).all(|w| w[1] > w[0]);
    if !(strictly_decreasing || strictly_increasing) {
        return Err(Error::config("mesh sizes must be monotone"));
    }
    if let Some(e) = error.iter().find(|e| !(**e > 0.0)) {
        return Err(Error::DegenerateFit(format!("non-positive error {e:e}")));
    }
    let x: Vec<f64> = h.iter().map(|v| v.ln()).collect();
    let y: Vec<f64> = error.iter().map(|v| v.ln()).collect();
    let k = x.len() as f64;
    let mx = x.iter().sum::<f64>() / k;
    let my = y.iter().sum::<f64>() / k;
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual = (x
        .iter()
        .zip(&y)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum::<f64>()
        / k)
        .sqrt();
    if !slope.is_finite() {
        return Err(Error::DegenerateFit("slope is not finite".into()));
    }
    Ok(RateFit {
        h: h.to_vec(),
        error: error.to_vec(),
        slope,
        intercept,
        residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_power_laws() {
        let h = [0.5, 0.25, 0.125, 0.0625];
        let e2: Vec<f64> = h.iter().map(|v| v * v).collect();
        assert!((fit_rate(&h, &e2).unwrap().slope - 2.0).abs() < 1e-12);
        let e1: Vec<f64> = h.iter().map(|v| 3.0 * v).collect();
        let f = fit_rate(&h, &e1).unwrap();
        assert!((f.slope - 1.0).abs() < 1e-12);
        assert!(f.residual < 1e-12);
        assert!(f.pairwise().iter().all(|s| (s - 1.0).abs() < 1e-12));
    }

    #[test]
    fn noisy_quadratic_stays_in_window() {
        let h = [0.5, 0.25, 0.125, 0.0625];
        for signs in 0..16u32 {
            let e: Vec<f64> = h
                .iter()
                .enumerate()
                .map(|(i, v)| v * v * if signs >> i & 1 == 1 { 1.05 } else { 0.95 })
                .collect();
            let s = fit_rate(&h, &e).unwrap().slope;
            assert!((1.85..=2.15).contains(&s), "{s}");
        }
    }

    #[test]
    fn degenerate_and_invalid_inputs() {
        assert!(matches!(
            fit_rate(&[0.5, 0.25, 0.125], &[1e-3, 0.0, 1e-5]),
            Err(Error::DegenerateFit(_))
        ));
        assert!(matches!(fit_rate(&[0.5, 0.25], &[1.0, 0.5]), Err(Error::Config(_))));
        assert!(matches!(fit_rate(&[0.5, 0.5, 0.25], &[1.0, 0.5, 0.2]), Err(Error::Config(_))));
    }
}
