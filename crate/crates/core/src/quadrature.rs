//! Gauss–Legendre rules.

use std::f64::consts::PI;

/// Nodes and weights of the n-point Gauss–Legendre rule on [-1, 1].
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        GaussLegendre { nodes, weights }
    }

    /// Nodes and weights mapped to [a, b].
    pub fn on(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(&x, &w)| (mid + half * x, half * w))
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        self.on(a, b).map(|(x, w)| w * f(x)).sum()
    }
}

// P_n(x) and P_n'(x) by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
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

/// Breakpoints on [lo, 1] graded geometrically toward both ends.
///
/// Decades below 1/2 get `per_decade` panels each; above 1/2 the gaps
/// `1 - x` halve down to 2^-`right_levels`.
pub fn graded_breakpoints(lo: f64, per_decade: usize, right_levels: u32) -> Vec<f64> {
    assert!(lo > 0.0 && lo < 1.0);
    let mut pts = Vec::new();
    if lo < 0.5 {
        let decades = (0.5f64 / lo).log10();
        let n = ((decades * per_decade as f64).ceil() as usize).max(1);
        let ratio = (0.5f64 / lo).powf(1.0 / n as f64);
        let mut x = lo;
        for _ in 0..n {
            pts.push(x);
            x *= ratio;
        }
        pts.push(0.5);
        for k in 2..=right_levels {
            pts.push(1.0 - 0.5f64.powi(k as i32));
        }
    } else {
        pts.push(lo);
        let mut k = 1;
        while 1.0 - 0.5f64.powi(k) <= lo {
            k += 1;
        }
        while k as u32 <= right_levels {
            pts.push(1.0 - 0.5f64.powi(k));
            k += 1;
        }
    }
    pts.push(1.0);
    pts.dedup_by(|a, b| (*a - *b).abs() <= f64::EPSILON * b.abs());
    pts
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integrates_polynomials_exactly() {
        let gl = GaussLegendre::new(8);
        // degree 15 is exact for 8 points
        let v = gl.integrate(0.0, 2.0, |x| x.powi(15));
        assert!((v - 2f64.powi(16) / 16.0).abs() < 1e-9);
        let w: f64 = gl.weights.iter().sum();
        assert!((w - 2.0).abs() < 1e-14);
    }

    #[test]
    fn sixty_four_points() {
        let gl = GaussLegendre::new(64);
        let v = gl.integrate(0.0, std::f64::consts::PI, f64::sin);
        assert!((v - 2.0).abs() < 1e-14);
        assert!(gl.nodes.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn breakpoints_are_increasing() {
        let b = graded_breakpoints(1e-9, 2, 30);
        assert_eq!(b[0], 1e-9);
        assert_eq!(*b.last().unwrap(), 1.0);
        assert!(b.windows(2).all(|w| w[0] < w[1]));
        let c = graded_breakpoints(0.7, 2, 10);
        assert!(c.windows(2).all(|w| w[0] < w[1]));
    }
}
