//! Composite Gauss-Legendre rules with breakpoint-aligned panels.

use std::num::NonZeroUsize;

use gauss_quad::legendre::GaussLegendre;

/// Gauss-Legendre nodes and weights mapped to `[0, 1]`.
#[derive(Debug, Clone)]
pub struct GaussRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussRule {
    pub fn new(order: usize) -> Self {
        let order = NonZeroUsize::new(order.max(1)).unwrap();
        let rule = GaussLegendre::new(order);
        let (nodes, weights) = rule
            .into_iter()
            .map(|(x, w)| (0.5 * (x + 1.0), 0.5 * w))
            .unzip();
        Self { nodes, weights }
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    /// Nodes and weights of the rule on `[a, b]`.
    pub fn points(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let h = b - a;
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(x, w)| (a + h * x, h * w))
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        self.points(a, b).map(|(x, w)| w * f(x)).sum()
    }

    /// Integrates over `[a, b]` with panel edges at every breakpoint inside
    /// the interval, then splits each piece into panels no wider than
    /// `max_width`.
    pub fn integrate_composite<F: FnMut(f64) -> f64>(
        &self,
        a: f64,
        b: f64,
        breakpoints: &[f64],
        max_width: f64,
        mut f: F,
    ) -> f64 {
        let mut total = 0.0;
        for_each_panel(a, b, breakpoints, max_width, |lo, hi| {
            total += self.integrate(lo, hi, &mut f);
        });
        total
    }
}

/// Calls `visit(lo, hi)` for consecutive panels covering `[a, b]`.
pub fn for_each_panel<V: FnMut(f64, f64)>(
    a: f64,
    b: f64,
    breakpoints: &[f64],
    max_width: f64,
    mut visit: V,
) {
    if b <= a {
        return;
    }
    let mut edges: Vec<f64> = Vec::with_capacity(breakpoints.len() + 2);
    edges.push(a);
    edges.extend(breakpoints.iter().copied().filter(|&x| x > a && x < b));
    edges.push(b);
    edges.sort_by(|x, y| x.partial_cmp(y).unwrap());
    edges.dedup_by(|x, y| (*x - *y).abs() < 1e-14);
    for w in edges.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let pieces = ((hi - lo) / max_width).ceil().max(1.0) as usize;
        let step = (hi - lo) / pieces as f64;
        for p in 0..pieces {
            let l = lo + step * p as f64;
            let r = if p + 1 == pieces { hi } else { l + step };
            visit(l, r);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_for_polynomials() {
        let rule = GaussRule::new(4);
        // degree 7 is integrated exactly by a 4-point rule
        let v = rule.integrate(0.0, 2.0, |x| x.powi(7));
        assert!((v - 2f64.powi(8) / 8.0).abs() < 1e-11);
    }

    #[test]
    fn composite_handles_kinks() {
        let rule = GaussRule::new(8);
        let v = rule.integrate_composite(0.0, 1.0, &[0.3], 0.25, |x| (x - 0.3).abs());
        let exact = 0.5 * 0.3 * 0.3 + 0.5 * 0.7 * 0.7;
        assert!((v - exact).abs() < 1e-14);
    }

    #[test]
    fn panels_cover_interval() {
        let mut covered = 0.0;
        let mut last = 0.0;
        for_each_panel(0.0, 1.0, &[0.5, 0.5, 2.0, -1.0], 0.2, |lo, hi| {
            assert!((lo - last).abs() < 1e-15);
            covered += hi - lo;
            last = hi;
        });
        assert!((covered - 1.0).abs() < 1e-15);
        assert_eq!(last, 1.0);
    }
}
