//! Gauss–Legendre rules on the unit interval and their tensor products on
//! axis-aligned bricks.

use std::f64::consts::PI;

/// One-dimensional Gauss–Legendre rule on `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussLegendre {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    /// `n`-point rule, exact for polynomials of degree `2n - 1`.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss rule needs at least one point");
        let mut points = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            // Chebyshev-like initial guess, refined with Newton on P_n.
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 1.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            // map [-1, 1] -> [0, 1]
            points[i] = 0.5 * (1.0 - x);
            points[n - 1 - i] = 0.5 * (1.0 + x);
            weights[i] = 0.5 * w;
            weights[n - 1 - i] = 0.5 * w;
        }
        GaussLegendre { points, weights }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Tensor-product rule on the reference cube `[0, 1]^3`.
#[derive(Debug, Clone)]
pub struct TensorRule {
    /// Reference coordinates in `[0, 1]^3`.
    pub points: Vec<[f64; 3]>,
    /// Weights summing to one.
    pub weights: Vec<f64>,
}

impl TensorRule {
    /// `n^3` Gauss points; exact for `Q^{2n-1, 2n-1, 2n-1}`.
    pub fn gauss(n: usize) -> Self {
        let g = GaussLegendre::new(n);
        let mut points = Vec::with_capacity(n * n * n);
        let mut weights = Vec::with_capacity(n * n * n);
        for k in 0..n {
            for j in 0..n {
                for i in 0..n {
                    points.push([g.points[i], g.points[j], g.points[k]]);
                    weights.push(g.weights[i] * g.weights[j] * g.weights[k]);
                }
            }
        }
        TensorRule { points, weights }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Maps the rule onto the brick `origin + [0, size]`, returning physical
    /// points and weights scaled by the brick volume.
    pub fn on_brick(&self, origin: [f64; 3], size: [f64; 3]) -> (Vec<[f64; 3]>, Vec<f64>) {
        let vol = size[0] * size[1] * size[2];
        let pts = self
            .points
            .iter()
            .map(|p| {
                [
                    origin[0] + p[0] * size[0],
                    origin[1] + p[1] * size[1],
                    origin[2] + p[2] * size[2],
                ]
            })
            .collect();
        let w = self.weights.iter().map(|w| w * vol).collect();
        (pts, w)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_are_positive_and_sum_to_one() {
        for n in 1..=8 {
            let g = GaussLegendre::new(n);
            assert!(g.weights.iter().all(|&w| w > 0.0));
            let s: f64 = g.weights.iter().sum();
            assert!((s - 1.0).abs() < 1e-14, "n={n} sum={s}");
            assert!(g.points.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn exact_up_to_degree_2n_minus_1() {
        for n in 1..=6 {
            let g = GaussLegendre::new(n);
            for deg in 0..(2 * n) {
                let q: f64 = g
                    .points
                    .iter()
                    .zip(&g.weights)
                    .map(|(x, w)| w * x.powi(deg as i32))
                    .sum();
                let exact = 1.0 / (deg as f64 + 1.0);
                assert!((q - exact).abs() < 1e-14, "n={n} deg={deg}");
            }
        }
    }

    #[test]
    fn two_point_rule_matches_closed_form() {
        let g = GaussLegendre::new(2);
        let a = 0.5 - 0.5 / 3f64.sqrt();
        assert!((g.points[0] - a).abs() < 1e-15);
        assert!((g.points[1] - (1.0 - a)).abs() < 1e-15);
    }

    #[test]
    fn tensor_rule_integrates_q222_monomials() {
        // 2^3 Gauss points must integrate Q^{2,2,2} exactly.
        let rule = TensorRule::gauss(2);
        let (pts, w) = rule.on_brick([0.5, -1.0, 2.0], [0.25, 0.5, 2.0]);
        let lo = [0.5, -1.0, 2.0];
        let hi = [0.75, -0.5, 4.0];
        for a in 0..=2 {
            for b in 0..=2 {
                for c in 0..=2 {
                    let q: f64 = pts
                        .iter()
                        .zip(&w)
                        .map(|(p, w)| w * p[0].powi(a) * p[1].powi(b) * p[2].powi(c))
                        .sum();
                    let int1 = |l: f64, h: f64, e: i32| {
                        (h.powi(e + 1) - l.powi(e + 1)) / (e as f64 + 1.0)
                    };
                    let exact = int1(lo[0], hi[0], a) * int1(lo[1], hi[1], b) * int1(lo[2], hi[2], c);
                    assert!((q - exact).abs() <= 1e-14 * exact.abs().max(1.0), "{a}{b}{c}");
                }
            }
        }
    }
}
