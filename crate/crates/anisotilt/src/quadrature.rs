//! Gauss–Legendre rules.

use std::f64::consts::PI;

/// Gauss–Legendre nodes and weights on [-1, 1].
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    /// Builds an `n`-point rule by Newton iteration on the Legendre recurrence.
    ///
    /// # Panics
    /// Panics if `n == 0`.
    pub fn new(n: usize) -> Self {
        assert!(n > 0, "Gauss-Legendre rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = (n + 1) / 2;
        for i in 0..m {
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-15 {
                    let (_, d) = legendre_with_derivative(n, x);
                    dp = d;
                    break;
                }
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Nodes and weights mapped affinely onto [a, b].
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(&x, &w)| (mid + half * x, half * w))
    }

    pub fn integrate(&self, a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
        self.mapped(a, b).map(|(x, w)| w * f(x)).sum()
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let (p, pm1) = if n == 1 { (x, 1.0) } else { (p1, p0) };
    let d = n as f64 * (x * p - pm1) / (x * x - 1.0);
    (p, d)
}

/// Composite rule over `[a, b]` split at `breaks`, with `per_panel` nodes in each panel.
pub fn composite(breaks: &[f64], per_panel: usize) -> Vec<(f64, f64)> {
    let rule = GaussLegendre::new(per_panel);
    breaks
        .windows(2)
        .filter(|w| w[1] > w[0])
        .flat_map(|w| rule.mapped(w[0], w[1]).collect::<Vec<_>>())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_point_rule() {
        let r = GaussLegendre::new(2);
        let s = 1.0 / 3f64.sqrt();
        assert!((r.nodes()[0] + s).abs() < 1e-15);
        assert!((r.nodes()[1] - s).abs() < 1e-15);
        assert!((r.weights()[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn exact_for_polynomials() {
        for n in [1usize, 3, 8, 17, 64] {
            let r = GaussLegendre::new(n);
            let deg = 2 * n - 1;
            let got = r.integrate(0.0, 2.0, |x| x.powi(deg as i32));
            let want = 2f64.powi(deg as i32 + 1) / (deg as f64 + 1.0);
            assert!((got / want - 1.0).abs() < 1e-12, "n={n}");
        }
    }

    #[test]
    fn weights_sum_to_interval_length() {
        let r = GaussLegendre::new(128);
        let s: f64 = r.weights().iter().sum();
        assert!((s - 2.0).abs() < 1e-13);
        assert!(r.nodes().windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn composite_handles_kinks() {
        let rule = composite(&[0.0, 0.3, 1.0], 4);
        let got: f64 = rule.iter().map(|&(x, w)| w * (x - 0.3f64).abs()).sum();
        let want = 0.3 * 0.3 / 2.0 + 0.7 * 0.7 / 2.0;
        assert!((got - want).abs() < 1e-14);
    }
}
