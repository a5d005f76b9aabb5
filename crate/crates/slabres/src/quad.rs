//! Gauss–Legendre rules, graded panel decompositions and 2D quadrature rules
//! on hole cross-sections.

use serde::{Deserialize, Serialize};

/// One-dimensional Gauss–Legendre rule on [-1, 1].
#[derive(Debug, Clone)]
pub struct Gauss1D {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Gauss1D {
    /// Nodes and weights by Newton iteration on the Legendre recurrence.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            // Tricomi-style initial guess, then Newton.
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_and_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-15 {
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
        Gauss1D { nodes, weights }
    }

    /// Rescale the rule to the interval [a, b].
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let mid = 0.5 * (a + b);
        let half = 0.5 * (b - a);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(&x, &w)| (mid + half * x, half * w))
    }
}

fn legendre_and_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Split [a, b] into panels graded geometrically toward either end.
///
/// `levels_a` / `levels_b` control the depth at each end: the smallest panel
/// adjacent to an end with L levels has relative width 2^-(L+1) (0 disables
/// the grading at that end).
pub fn graded_panels(a: f64, b: f64, levels_a: usize, levels_b: usize) -> Vec<(f64, f64)> {
    let mut cuts = vec![0.0, 1.0];
    if levels_a > 0 && levels_b > 0 {
        cuts.push(0.5);
    }
    for j in 1..=levels_a {
        let t = 0.5f64.powi(j as i32 + if levels_b > 0 { 1 } else { 0 });
        cuts.push(t);
    }
    for j in 1..=levels_b {
        let t = 0.5f64.powi(j as i32 + if levels_a > 0 { 1 } else { 0 });
        cuts.push(1.0 - t);
    }
    cuts.sort_by(|x, y| x.partial_cmp(y).unwrap());
    cuts.dedup();
    cuts.windows(2)
        .map(|w| (a + (b - a) * w[0], a + (b - a) * w[1]))
        .collect()
}

/// Composite rule: `p`-point Gauss on each graded panel.
pub fn graded_gauss(a: f64, b: f64, levels_a: usize, levels_b: usize, p: usize) -> (Vec<f64>, Vec<f64>) {
    let gauss = Gauss1D::new(p);
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    for (pa, pb) in graded_panels(a, b, levels_a, levels_b) {
        for (x, w) in gauss.mapped(pa, pb) {
            nodes.push(x);
            weights.push(w);
        }
    }
    (nodes, weights)
}

/// Quadrature rule on a hole cross-section.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct QuadratureRule {
    /// Points inside the generating domain G.
    pub nodes: Vec<[f64; 2]>,
    /// Positive weights; they sum to the (unit) area of G.
    pub weights: Vec<f64>,
    /// Order parameter the rule was built with.
    pub order: usize,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Tensor Gauss–Legendre rule on the centered unit square.
    pub fn unit_square(order: usize) -> Self {
        let g = Gauss1D::new(order);
        let pts: Vec<(f64, f64)> = g.mapped(-0.5, 0.5).collect();
        let mut nodes = Vec::with_capacity(order * order);
        let mut weights = Vec::with_capacity(order * order);
        for &(x, wx) in &pts {
            for &(y, wy) in &pts {
                nodes.push([x, y]);
                weights.push(wx * wy);
            }
        }
        QuadratureRule { nodes, weights, order }
    }

    /// Polar rule on the unit-area disk: `order` radial Gauss points times
    /// a uniform angular grid of 2*order points.
    pub fn unit_disk(order: usize) -> Self {
        let radius = 1.0 / std::f64::consts::PI.sqrt();
        let n_theta = 2 * order;
        let g = Gauss1D::new(order);
        let radial: Vec<(f64, f64)> = g.mapped(0.0, radius).collect();
        let dtheta = 2.0 * std::f64::consts::PI / n_theta as f64;
        let mut nodes = Vec::with_capacity(order * n_theta);
        let mut weights = Vec::with_capacity(order * n_theta);
        for it in 0..n_theta {
            let theta = (it as f64 + 0.5) * dtheta;
            let (s, c) = theta.sin_cos();
            for &(r, wr) in &radial {
                nodes.push([r * c, r * s]);
                weights.push(wr * r * dtheta);
            }
        }
        QuadratureRule { nodes, weights, order }
    }

    /// Sum of weights (should equal the area of G).
    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn gauss_matches_known_two_point_rule() {
        let g = Gauss1D::new(2);
        let x = 1.0 / 3.0f64.sqrt();
        assert_abs_diff_eq!(g.nodes[0], -x, epsilon = 1e-15);
        assert_abs_diff_eq!(g.nodes[1], x, epsilon = 1e-15);
        assert_abs_diff_eq!(g.weights[0], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn gauss_integrates_polynomials_exactly() {
        for n in [3usize, 8, 17, 32] {
            let g = Gauss1D::new(n);
            // Degree 2n-1 monomial over [-1,1].
            let d = 2 * n - 1;
            let num: f64 = g
                .nodes
                .iter()
                .zip(&g.weights)
                .map(|(&x, &w)| w * x.powi(d as i32))
                .sum();
            assert_abs_diff_eq!(num, 0.0, epsilon = 1e-13);
            let d2 = 2 * n - 2;
            let num2: f64 = g
                .nodes
                .iter()
                .zip(&g.weights)
                .map(|(&x, &w)| w * x.powi(d2 as i32))
                .sum();
            assert_abs_diff_eq!(num2, 2.0 / (d2 as f64 + 1.0), epsilon = 1e-13);
        }
    }

    #[test]
    fn square_rule_weights_sum_to_area() {
        let q = QuadratureRule::unit_square(16);
        assert_abs_diff_eq!(q.total_weight(), 1.0, epsilon = 1e-13);
    }

    #[test]
    fn disk_rule_weights_sum_to_area() {
        let q = QuadratureRule::unit_disk(24);
        assert_abs_diff_eq!(q.total_weight(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn graded_panels_cover_interval() {
        let panels = graded_panels(0.0, 1.0, 4, 4);
        let total: f64 = panels.iter().map(|(a, b)| b - a).sum();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-15);
        assert!(panels.first().unwrap().0 == 0.0);
        assert!(panels.last().unwrap().1 == 1.0);
        // Smallest panel hugs the ends.
        assert!(panels[0].1 - panels[0].0 < 0.05);
        let one_sided = graded_panels(0.0, 1.0, 3, 0);
        assert_eq!(one_sided.len(), 4);
        assert!(one_sided[0].1 - one_sided[0].0 < 0.2);
    }

    #[test]
    fn graded_gauss_handles_weak_singularity() {
        // f(t) = t ln t integrates to -1/4 on [0,1].
        let (nodes, weights) = graded_gauss(0.0, 1.0, 14, 0, 10);
        let val: f64 = nodes
            .iter()
            .zip(&weights)
            .map(|(&t, &w)| if t > 0.0 { w * t * t.ln() } else { 0.0 })
            .sum();
        assert_abs_diff_eq!(val, -0.25, epsilon = 1e-10);
    }
}
