//! Closed-form densities and covariance kernels of the Arratia point measure.
//!
//! For the point measure `N_t` of the flow at time `t`:
//!
//! * one-point density `rho1 = 1 / sqrt(pi t)`,
//! * two-point density `rho2(z) = (1/(pi t)) [1 + (z / 2 sqrt t) e^{-z^2/4t}
//!   int_{z/sqrt t}^inf e^{-v^2/4} dv - e^{-z^2/2t}]` with `z = |v2 - v1|`,
//! * pair correlation `g(x) = rho2(|x|) - 1/(pi t)`,
//! * limiting kernel `G(v1, v2) = g(v1 - v2) + 2 sum_{l >= 1} g(v1 - v2 + l)`
//!   and its symmetrization `G~ = (G(u, v) + G(v, u)) / 2`, which equals the
//!   periodized pair correlation `sum_{l in Z} g(u - v + l)`.
//!
//! Double integrals against `G~` are reduced to one dimension through that
//! translation structure: `iint f(u) h(v) G~(u, v) = int_0^1 K(d) c(d) dd`
//! where `K` is the periodized correlation and `c(d) = int_0^1 f(v + d) h(v) dv`.
//! `K` is smooth on `(0, 1)`; its only kink sits at the panel edge `d = 0`.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use libm::{erf, erfc};

use crate::error::{Error, Result};
use crate::periodic::PeriodicFunction;
use crate::quadrature::{for_each_panel, GaussRule};

pub const DEFAULT_ABS_TOL: f64 = 1e-10;
pub const DEFAULT_QUAD_POINTS: usize = 64;
pub const DEFAULT_Q_NODES: usize = 200;

const PANEL_ORDER: usize = 8;

/// Flow time plus the numerical settings shared by every kernel evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelContext {
    t: f64,
    series_truncation: usize,
    quad_points: usize,
    abs_tol: f64,
}

/// Settings from which a [`KernelContext`] is derived; the truncation is
/// chosen adaptively unless given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KernelSettings {
    pub abs_tol: f64,
    pub quad_points: usize,
    pub series_truncation: Option<usize>,
}

impl Default for KernelSettings {
    fn default() -> Self {
        Self {
            abs_tol: DEFAULT_ABS_TOL,
            quad_points: DEFAULT_QUAD_POINTS,
            series_truncation: None,
        }
    }
}

impl KernelSettings {
    pub fn context(&self, t: f64) -> Result<KernelContext> {
        match self.series_truncation {
            Some(l) => KernelContext::with_truncation(t, l, self.quad_points, self.abs_tol),
            None => KernelContext::with_settings(t, self.abs_tol, self.quad_points),
        }
    }
}

/// Both forms of the alpha-mixing bound for block integrals at distance `h`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixingBound {
    /// `4 int_{h/3}^inf (2 pi t)^{-1/2} e^{-x^2/2} dx`
    pub integral_form: f64,
    /// `12 / (h sqrt(2 pi t)) e^{-h^2/18}`
    pub closed_form: f64,
}

impl KernelContext {
    pub fn new(t: f64) -> Result<Self> {
        Self::with_settings(t, DEFAULT_ABS_TOL, DEFAULT_QUAD_POINTS)
    }

    /// Picks the smallest truncation whose lattice tail is within `abs_tol`.
    pub fn with_settings(t: f64, abs_tol: f64, quad_points: usize) -> Result<Self> {
        check_time(t)?;
        if !(abs_tol > 0.0) {
            return Err(Error::Domain(format!("abs_tol must be positive, got {abs_tol}")));
        }
        let mut l = 1;
        while lattice_tail_bound(t, l) > abs_tol {
            l += 1;
            if l > 1_000_000 {
                return Err(Error::Truncation {
                    terms: l,
                    bound: lattice_tail_bound(t, l),
                    tol: abs_tol,
                });
            }
        }
        Self::with_truncation(t, l, quad_points, abs_tol)
    }

    pub fn with_truncation(
        t: f64,
        series_truncation: usize,
        quad_points: usize,
        abs_tol: f64,
    ) -> Result<Self> {
        let ctx = Self {
            t,
            series_truncation,
            quad_points,
            abs_tol,
        };
        ctx.validate()?;
        Ok(ctx)
    }

    pub fn validate(&self) -> Result<()> {
        check_time(self.t)?;
        if self.series_truncation < 1 {
            return Err(Error::Domain("series truncation must be at least 1".into()));
        }
        if self.quad_points < 4 {
            return Err(Error::Domain(format!(
                "quad_points must be at least 4, got {}",
                self.quad_points
            )));
        }
        if !(self.abs_tol >= 0.0) {
            return Err(Error::Domain("abs_tol must be nonnegative".into()));
        }
        let bound = self.tail_bound();
        if bound > self.abs_tol {
            return Err(Error::Truncation {
                terms: self.series_truncation,
                bound,
                tol: self.abs_tol,
            });
        }
        Ok(())
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn series_truncation(&self) -> usize {
        self.series_truncation
    }

    pub fn quad_points(&self) -> usize {
        self.quad_points
    }

    pub fn abs_tol(&self) -> f64 {
        self.abs_tol
    }

    /// Same settings at another time, re-deriving the truncation.
    pub fn at_time(&self, t: f64) -> Result<Self> {
        Self::with_settings(t, self.abs_tol.max(1e-300), self.quad_points)
    }

    pub fn tail_bound(&self) -> f64 {
        lattice_tail_bound(self.t, self.series_truncation)
    }

    pub fn rho1(&self) -> f64 {
        1.0 / (PI * self.t).sqrt()
    }

    pub fn rho2(&self, v1: f64, v2: f64) -> f64 {
        1.0 / (PI * self.t) + self.g(v2 - v1)
    }

    /// `rho2(z) - 1/(pi t)`, evaluated without the cancellation of the
    /// leading constant.
    pub fn g(&self, x: f64) -> f64 {
        pair_correlation(self.t, x)
    }

    /// `G(v1, v2) = g(d) + 2 sum_{l=1}^{L} g(d + l)`, `d = v1 - v2`.
    pub fn g_kernel(&self, v1: f64, v2: f64) -> f64 {
        let d = v1 - v2;
        let mut s = self.g(d);
        for l in 1..=self.series_truncation {
            s += 2.0 * self.g(d + l as f64);
        }
        s
    }

    /// `G~(u, v) = (G(u, v) + G(v, u)) / 2`.
    pub fn g_sym(&self, u: f64, v: f64) -> f64 {
        0.5 * (self.g_kernel(u, v) + self.g_kernel(v, u))
    }

    /// `sum_{|l| <= L} g(d + l)`: the periodized pair correlation, equal to
    /// `G~(u, v)` at `d = u - v`.
    pub fn periodized(&self, d: f64) -> f64 {
        let d = d - d.floor();
        let mut s = self.g(d);
        for l in 1..=self.series_truncation {
            let l = l as f64;
            s += self.g(d + l) + self.g(d - l);
        }
        s
    }

    /// `iint f(u) h(v) G~(u, v) du dv` over the unit square.
    pub fn kernel_bilinear(&self, f: &PeriodicFunction, h: &PeriodicFunction) -> f64 {
        if f.is_zero() || h.is_zero() {
            return 0.0;
        }
        let inner_rule = GaussRule::new(PANEL_ORDER);
        let outer_rule = GaussRule::new(PANEL_ORDER);
        let osc = f.oscillation() + h.oscillation();
        let base_width = PANEL_ORDER as f64 / self.quad_points as f64;
        let width = base_width.min(0.5 / osc);
        let bf = f.breakpoints();
        let bh = h.breakpoints();
        let mut outer_bp: Vec<f64> = Vec::new();
        for &a in &bf {
            for &b in &bh {
                outer_bp.push((a - b).rem_euclid(1.0));
            }
        }
        let mut inner_bp = bh.clone();
        outer_rule.integrate_composite(0.0, 1.0, &outer_bp, width, |d| {
            inner_bp.truncate(bh.len());
            inner_bp.extend(bf.iter().map(|b| (b - d).rem_euclid(1.0)));
            let c = inner_rule
                .integrate_composite(0.0, 1.0, &inner_bp, width, |v| f.eval(v + d) * h.eval(v));
            self.periodized(d) * c
        })
    }

    /// Matrix of `iint f_i(u) f_j(v) G~(u, v)` over a family of functions.
    ///
    /// Families that are piecewise constant on a common dyadic grid (Haar
    /// systems) use exact cell correlations; everything else uses a shared
    /// midpoint grid for the inner integral, which is spectrally accurate
    /// for smooth periodic functions.
    pub fn kernel_bilinear_matrix(&self, fs: &[PeriodicFunction]) -> DMatrix<f64> {
        let m = fs.len();
        if let Some(cells) = common_cell_grid(fs) {
            return self.cell_bilinear_matrix(fs, cells);
        }
        if fs.iter().any(|f| !f.breakpoints().is_empty()) {
            let mut out = DMatrix::zeros(m, m);
            for i in 0..m {
                for j in i..m {
                    let v = self.kernel_bilinear(&fs[i], &fs[j]);
                    out[(i, j)] = v;
                    out[(j, i)] = v;
                }
            }
            return out;
        }
        let max_osc = fs.iter().map(|f| f.oscillation()).fold(1.0, f64::max);
        let p = (self.quad_points).max((4.0 * max_osc) as usize + 32);
        let inner: Vec<f64> = (0..p).map(|k| (k as f64 + 0.5) / p as f64).collect();
        let base: Vec<Vec<f64>> = fs
            .iter()
            .map(|f| inner.iter().map(|&v| f.eval(v)).collect())
            .collect();
        let rule = GaussRule::new(PANEL_ORDER + 4);
        let width = (PANEL_ORDER as f64 / self.quad_points as f64).min(0.5 / (2.0 * max_osc));
        let mut out = DMatrix::zeros(m, m);
        let mut shifted = vec![vec![0.0; p]; m];
        for_each_panel(0.0, 1.0, &[], width, |lo, hi| {
            for (d, w) in rule.points(lo, hi) {
                let kw = w * self.periodized(d) / p as f64;
                for (i, f) in fs.iter().enumerate() {
                    for (k, &v) in inner.iter().enumerate() {
                        shifted[i][k] = f.eval(v + d);
                    }
                }
                for i in 0..m {
                    for j in 0..m {
                        let c: f64 = shifted[i].iter().zip(&base[j]).map(|(a, b)| a * b).sum();
                        out[(i, j)] += kw * c;
                    }
                }
            }
        });
        symmetrize(&mut out);
        out
    }

    fn cell_bilinear_matrix(&self, fs: &[PeriodicFunction], cells: usize) -> DMatrix<f64> {
        let m = fs.len();
        let values: Vec<Vec<f64>> = fs.iter().map(|f| cell_values(f, cells)).collect();
        // corr[i][j][s] = (1/n) sum_c a_i[c + s] a_j[c]
        let n = cells;
        let mut corr = vec![vec![vec![0.0; n]; m]; m];
        for i in 0..m {
            for j in 0..m {
                for s in 0..n {
                    let mut acc = 0.0;
                    for c in 0..n {
                        acc += values[i][(c + s) % n] * values[j][c];
                    }
                    corr[i][j][s] = acc / n as f64;
                }
            }
        }
        let rule = GaussRule::new(PANEL_ORDER);
        let width = 1.0 / n as f64;
        let mut out = DMatrix::zeros(m, m);
        for s in 0..n {
            let lo = s as f64 * width;
            for (d, w) in rule.points(lo, lo + width) {
                let theta = (d - lo) / width;
                let kw = w * self.periodized(d);
                for i in 0..m {
                    for j in 0..m {
                        let c = (1.0 - theta) * corr[i][j][s] + theta * corr[i][j][(s + 1) % n];
                        out[(i, j)] += kw * c;
                    }
                }
            }
        }
        symmetrize(&mut out);
        out
    }

    /// Limiting variance of `X_t^n(f)`.
    pub fn sigma2(&self, f: &PeriodicFunction) -> Result<f64> {
        let v = self.kernel_bilinear(f, f) + self.rho1() * f.inner(f);
        if v < -self.abs_tol.max(1e-12) {
            return Err(Error::NumericalConsistency(format!(
                "limit variance of {f} is negative ({v:e})"
            )));
        }
        Ok(v.max(0.0))
    }

    /// Limiting covariance of `(X_t^n(f), X_t^n(h))`.
    pub fn cov_zeta(&self, f: &PeriodicFunction, h: &PeriodicFunction) -> Result<f64> {
        let cross = 0.5 * (self.kernel_bilinear(f, h) + self.kernel_bilinear(h, f));
        let v = cross + self.rho1() * f.inner(h);
        if !v.is_finite() {
            return Err(Error::NumericalConsistency(format!(
                "covariance of {f} and {h} is not finite"
            )));
        }
        if f == h && v < -self.abs_tol.max(1e-12) {
            return Err(Error::NumericalConsistency(format!(
                "limit variance of {f} is negative ({v:e})"
            )));
        }
        Ok(v)
    }

    pub fn mixing_bound(&self, h: f64) -> Result<MixingBound> {
        if !(h > 0.0) {
            return Err(Error::Domain(format!("mixing distance must be positive, got {h}")));
        }
        let a = h / 3.0;
        // int_a^inf e^{-x^2/2} dx = sqrt(pi/2) erfc(a / sqrt 2)
        let tail = (PI / 2.0).sqrt() * erfc(a / 2f64.sqrt());
        Ok(MixingBound {
            integral_form: 4.0 * tail / (2.0 * PI * self.t).sqrt(),
            closed_form: 12.0 / (h * (2.0 * PI * self.t).sqrt()) * (-h * h / 18.0).exp(),
        })
    }

    /// Uniform bound `(pi t)^{-n/2}` on the n-point density.
    pub fn density_upper_bound(&self, n: u32) -> Result<f64> {
        if n == 0 {
            return Err(Error::Domain("density order must be at least 1".into()));
        }
        Ok((PI * self.t).powf(-(n as f64) / 2.0))
    }

    /// `E int_k^{k+1} f dN_t`, the same for every block.
    pub fn mean_block_integral(&self, f: &PeriodicFunction) -> f64 {
        if f.zero_mean() {
            return 0.0;
        }
        self.rho1() * f.integral()
    }

    /// Average of `rho2` over separations in `[z_lo, z_hi]`.
    pub fn rho2_bin_average(&self, z_lo: f64, z_hi: f64) -> f64 {
        let rule = GaussRule::new(16);
        let width = (z_hi - z_lo).max(1e-300);
        rule.integrate_composite(z_lo, z_hi, &[], 0.25, |z| self.rho2(0.0, z)) / width
    }
}

fn check_time(t: f64) -> Result<()> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::Domain(format!("time must be positive and finite, got {t}")));
    }
    Ok(())
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Smallest dyadic cell count on which every function is piecewise
/// constant, if the family is of that kind.
fn common_cell_grid(fs: &[PeriodicFunction]) -> Option<usize> {
    use crate::periodic::Shape;
    let mut level = 0u32;
    let mut any_haar = false;
    for f in fs {
        match f.shape() {
            Shape::Zero | Shape::Constant => {}
            Shape::Cos(0) | Shape::Sin(0) => {}
            Shape::Haar { level: l, .. } => {
                any_haar = true;
                level = level.max(l + 1);
            }
            _ => return None,
        }
    }
    any_haar.then_some(1usize << level)
}

fn cell_values(f: &PeriodicFunction, cells: usize) -> Vec<f64> {
    (0..cells)
        .map(|c| f.eval((c as f64 + 0.5) / cells as f64))
        .collect()
}

/// `rho2(|x|) - 1/(pi t)` at time `t`.
pub fn pair_correlation(t: f64, x: f64) -> f64 {
    let z = x.abs();
    let st = t.sqrt();
    let a = z / (2.0 * st);
    let corr = a * (-a * a).exp() * PI.sqrt() * erfc(a);
    (corr - (-z * z / (2.0 * t)).exp()) / (PI * t)
}

/// Upper envelope of `|g|`: `(1/(pi t)) e^{-x^2/2t} (1 + sqrt(pi) |x| / (2 sqrt t))`,
/// from `erfc(a) <= e^{-a^2}`.
pub fn pair_correlation_envelope(t: f64, x: f64) -> f64 {
    let z = x.abs();
    (-z * z / (2.0 * t)).exp() * (1.0 + PI.sqrt() * z / (2.0 * t.sqrt())) / (PI * t)
}

/// Bound on `sum_{|l| > L} |g(d + l)|` uniformly in `d in [-1, 1]`.
pub fn lattice_tail_bound(t: f64, l: usize) -> f64 {
    // the envelope decreases beyond its maximizer
    let c = PI.sqrt() / (2.0 * t.sqrt());
    let peak = (-1.0 + (1.0 + 4.0 * c * c * t).sqrt()) / (2.0 * c);
    let mut total = 0.0;
    let mut k = l + 1;
    loop {
        let x = ((k - 1) as f64).max(peak);
        let term = 2.0 * pair_correlation_envelope(t, x);
        total += term;
        if (term < 1e-300 || term < total * 1e-17) && (k - 1) as f64 > peak {
            break;
        }
        k += 1;
        if k > l + 10_000_000 {
            break;
        }
    }
    total
}

/// Gaussian density with the given mean and variance.
pub fn gaussian_density(mean: f64, variance: f64, x: f64) -> f64 {
    let d = x - mean;
    (-d * d / (2.0 * variance)).exp() / (2.0 * PI * variance).sqrt()
}

/// `P(two coalescing Brownian motions at distance gap have met by time s)`.
pub fn coalescence_probability(s: f64, gap: f64) -> f64 {
    erfc(gap.abs() / (2.0 * s.sqrt()))
}

/// Density of the meeting-then-shared position of the pair started at
/// `a <= b`, on the event that they have met by time `s`:
/// `P(phi(a) = phi(b), phi(a) in du) = q_s(a, b, u) du`.
///
/// The difference of the pair is a Brownian motion of rate 2 and the
/// midpoint an independent one of rate 1/2; after meeting, the pair moves as
/// one standard Brownian motion. With `r` the meeting time,
/// `q = int_0^s f_hit(r) N(u; (a+b)/2, s - r/2) dr`. Substituting
/// `r = gap^2 / (4 y^2)` turns `f_hit(r) dr` into `(2/sqrt pi) e^{-y^2} dy`
/// on `y >= gap / (2 sqrt s)`, which is smooth down to `gap = 0`.
pub fn q_density(s: f64, a: f64, b: f64, u: f64) -> Result<f64> {
    q_density_with_nodes(s, a, b, u, DEFAULT_Q_NODES)
}

pub fn q_density_with_nodes(s: f64, a: f64, b: f64, u: f64, nodes: usize) -> Result<f64> {
    if !(s > 0.0) {
        return Err(Error::Domain(format!("elapsed time must be positive, got {s}")));
    }
    if b < a {
        return Err(Error::Domain(format!("q-density needs a <= b, got a={a}, b={b}")));
    }
    let gap = b - a;
    let mid = 0.5 * (a + b);
    if gap == 0.0 {
        return Ok(gaussian_density(a, s, u));
    }
    let y0 = gap / (2.0 * s.sqrt());
    if y0 > 27.0 {
        return Ok(0.0);
    }
    let span = 9.0;
    let order = PANEL_ORDER;
    let panels = (nodes / order).max(1);
    let rule = GaussRule::new(order);
    let g2 = gap * gap / 4.0;
    // the variance s - r/2 moves fastest just above y0, so grade panels there
    let mut edges = Vec::new();
    let mut step = y0 / 16.0;
    while step < span {
        edges.push(y0 + step);
        step *= 2.0;
    }
    let v = rule.integrate_composite(y0, y0 + span, &edges, span / panels as f64, |y| {
        let r = g2 / (y * y);
        (-y * y).exp() * gaussian_density(mid, s - 0.5 * r, u)
    }) * 2.0
        / PI.sqrt();
    if !v.is_finite() {
        return Err(Error::Numeric(format!(
            "q-density quadrature failed at s={s}, a={a}, b={b}, u={u}"
        )));
    }
    Ok(v.max(0.0))
}

/// `erf` re-exported for callers assembling Gaussian tails.
pub fn erf_fn(x: f64) -> f64 {
    erf(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx(t: f64) -> KernelContext {
        KernelContext::new(t).unwrap()
    }

    #[test]
    fn rho1_values() {
        assert!((ctx(1.0).rho1() - 0.564_189_583_547_756_3).abs() < 1e-15);
        assert!((ctx(1.0 / PI).rho1() - 1.0).abs() < 1e-15);
        assert!((ctx(4.0).rho1() - 0.282_094_791_773_878_1).abs() < 1e-15);
    }

    #[test]
    fn bad_time_rejected() {
        assert!(matches!(KernelContext::new(0.0), Err(Error::Domain(_))));
        assert!(matches!(KernelContext::new(-1.0), Err(Error::Domain(_))));
        assert!(matches!(KernelContext::new(f64::NAN), Err(Error::Domain(_))));
    }

    #[test]
    fn rho2_limits() {
        let c = ctx(1.0);
        assert_eq!(c.rho2(0.3, 0.3), 0.0);
        let far = c.rho2(0.0, 50.0);
        assert!((far - 1.0 / PI).abs() < 1e-15);
        assert!((far / c.rho1().powi(2) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rho2_nonnegative_and_decorrelates() {
        for t in [0.25f64, 1.0, 3.0] {
            let c = ctx(t);
            let st = t.sqrt();
            for i in 0..=2000 {
                let z = 10.0 * st * i as f64 / 2000.0;
                let r = c.rho2(0.0, z);
                assert!(r >= 0.0, "rho2({z}) = {r} at t = {t}");
                assert!(r <= c.density_upper_bound(2).unwrap() + 1e-15);
                if z >= 8.0 * st {
                    assert!((r / c.rho1().powi(2) - 1.0).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn g_values() {
        let c = ctx(1.0);
        assert!((c.g(0.0) + 1.0 / PI).abs() < 1e-15);
        assert!(c.g(10.0).abs() < 1e-12);
        let c = ctx(0.5);
        for x in [0.1, 0.7, 1.3] {
            assert_eq!(c.g(x), c.g(-x));
        }
    }

    #[test]
    fn envelope_dominates_g() {
        for t in [0.1f64, 1.0, 5.0] {
            for i in 0..4000 {
                let x = i as f64 * 0.005 * t.sqrt();
                assert!(pair_correlation(t, x).abs() <= pair_correlation_envelope(t, x) * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn truncation_is_adaptive_and_checked() {
        let c = ctx(1.0);
        assert!(c.tail_bound() <= 1e-10);
        assert!(lattice_tail_bound(1.0, c.series_truncation() - 1) > 1e-10);
        assert!(matches!(
            KernelContext::with_truncation(25.0, 1, 64, 1e-10),
            Err(Error::Truncation { .. })
        ));
        assert!(KernelContext::with_truncation(1.0, 5, 3, 1e-10).is_err());
    }

    #[test]
    fn g_sym_is_symmetric_and_periodized() {
        let c = ctx(1.0);
        let mut s = crate::rng::AuxStream::new(5, 0);
        for _ in 0..100 {
            let (u, v) = (s.uniform(), s.uniform());
            assert_eq!(c.g_sym(u, v), c.g_sym(v, u));
            assert!((c.g_sym(u, v) - c.periodized(u - v)).abs() < 1e-14);
        }
    }

    #[test]
    fn mixing_bound_values() {
        let c = ctx(1.0);
        let b = c.mixing_bound(3.0).unwrap();
        assert!((b.closed_form - 0.967_882_898_1).abs() < 1e-9);
        assert!(c.mixing_bound(60.0).unwrap().closed_form < 1e-80);
        assert!(c.mixing_bound(0.0).is_err());
        for i in 1..=20 {
            let h = 0.5 * i as f64;
            let b = c.mixing_bound(h).unwrap();
            assert!(b.integral_form <= b.closed_form);
        }
    }

    #[test]
    fn density_bounds() {
        let c = ctx(1.0);
        assert!((c.density_upper_bound(1).unwrap() - 1.0 / PI.sqrt()).abs() < 1e-15);
        assert!((c.density_upper_bound(2).unwrap() - 1.0 / PI).abs() < 1e-15);
        let c4 = ctx(4.0);
        assert!((c4.density_upper_bound(4).unwrap() - (4.0 * PI).powi(-2)).abs() < 1e-18);
        assert!(c.density_upper_bound(0).is_err());
    }

    #[test]
    fn mean_block_integral_values() {
        let c = ctx(1.0);
        assert_eq!(c.mean_block_integral(&PeriodicFunction::cos(1)), 0.0);
        let one = PeriodicFunction::constant(1.0);
        assert!((c.mean_block_integral(&one) - 1.0 / PI.sqrt()).abs() < 1e-14);
        let hat = PeriodicFunction::hat(0.25).unwrap();
        assert!((c.mean_block_integral(&hat) - 0.5 / PI.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn sigma2_basics() {
        let c = ctx(1.0);
        assert_eq!(c.sigma2(&PeriodicFunction::zero()).unwrap(), 0.0);
        let f = PeriodicFunction::hat(0.2).unwrap();
        let s1 = c.sigma2(&f).unwrap();
        let s3 = c.sigma2(&f.clone().scaled(3.0)).unwrap();
        assert!((s3 - 9.0 * s1).abs() < 1e-12 * s3.max(1.0));
        let cos = PeriodicFunction::cos(1);
        let sin = PeriodicFunction::sin(1);
        assert!((c.cov_zeta(&cos, &cos).unwrap() - c.sigma2(&cos).unwrap()).abs() < 1e-12);
        assert_eq!(c.cov_zeta(&cos, &sin).unwrap(), c.cov_zeta(&sin, &cos).unwrap());
    }

    #[test]
    fn q_density_special_cases() {
        let s = 0.7;
        for u in [-1.0, 0.2, 1.5] {
            let q = q_density(s, 0.2, 0.2, u).unwrap();
            assert!((q - gaussian_density(0.2, s, u)).abs() < 1e-15);
        }
        assert!(q_density(0.0, 0.0, 1.0, 0.0).is_err());
        assert!(q_density(1.0, 1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn q_density_translation_invariant() {
        let a = q_density(0.5, -0.3, 0.4, 0.1).unwrap();
        let b = q_density(0.5, 9.7, 10.4, 10.1).unwrap();
        assert!((a - b).abs() < 1e-13);
    }
}
