//! Integrals against finite point measures and their factorial powers.
//!
//! The factorial power `N^(k)` counts ordered k-tuples of distinct atoms,
//! the tensor power `N^{⊗k}` all ordered k-tuples. For product integrands
//! the two are related by integer coefficients indexed by integer partitions
//! of `k`; [`conversion_coefficients`] recovers them by fitting brute-force
//! integrals on random configurations.
//!
//! The second half of the module handles a point measure together with a
//! monotone map of its atoms: the image measure `nu` of distinct values,
//! the measures `mu_{k, phi}` of tuples collapsing to one point, and the
//! inclusion-exclusion identity between them.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{gaussian_density, q_density, KernelContext};
use crate::periodic::PeriodicFunction;
use crate::rng::AuxStream;

/// Largest number of tuples a brute-force power integral may visit.
pub const TUPLE_GUARD: f64 = 1e7;

/// Finite sorted atoms observed in a closed window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointMeasure {
    atoms: Vec<f64>,
    window: (f64, f64),
}

impl PointMeasure {
    pub fn new(atoms: Vec<f64>, window: (f64, f64)) -> Result<Self> {
        let (lo, hi) = window;
        if lo.is_nan() || hi.is_nan() || lo > hi {
            return Err(Error::Window(format!("window [{lo}, {hi}] is invalid")));
        }
        if atoms.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Domain("atoms must be strictly increasing".into()));
        }
        if atoms.iter().any(|&x| !(x >= lo && x <= hi)) {
            return Err(Error::Window(format!("atoms must lie in [{lo}, {hi}]")));
        }
        Ok(Self { atoms, window })
    }

    /// Sorts and deduplicates `atoms` first; the window is their hull.
    pub fn from_unsorted(mut atoms: Vec<f64>) -> Result<Self> {
        if atoms.iter().any(|x| !x.is_finite()) {
            return Err(Error::Domain("atoms must be finite".into()));
        }
        atoms.sort_by(|a, b| a.partial_cmp(b).unwrap());
        atoms.dedup();
        let window = match (atoms.first(), atoms.last()) {
            (Some(&a), Some(&b)) => (a, b),
            _ => (0.0, 0.0),
        };
        Self::new(atoms, window)
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    pub fn window(&self) -> (f64, f64) {
        self.window
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// Atoms in the half-open interval `[a, b)`.
    pub fn atoms_in(&self, a: f64, b: f64) -> &[f64] {
        let i = self.atoms.partition_point(|&x| x < a);
        let j = self.atoms.partition_point(|&x| x < b).max(i);
        &self.atoms[i..j]
    }

    /// `int f dN`.
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.atoms.iter().map(|&x| f(x)).sum()
    }

    fn guard(&self, k: usize) -> Result<()> {
        if k == 0 || k > 4 {
            return Err(Error::UnsupportedOrder(k));
        }
        let visits = (self.atoms.len() as f64).powi(k as i32);
        if visits > TUPLE_GUARD {
            return Err(Error::Size(format!(
                "{} atoms to the power {k} exceeds the tuple guard {TUPLE_GUARD:e}",
                self.atoms.len()
            )));
        }
        Ok(())
    }

    /// `int F dN^(k)`: sum over ordered k-tuples of distinct atoms.
    pub fn factorial_integral<F: FnMut(&[f64]) -> f64>(&self, k: usize, f: F) -> Result<f64> {
        self.guard(k)?;
        Ok(tuple_sum(&self.atoms, k, true, f))
    }

    /// `int F dN^{⊗k}`: sum over all ordered k-tuples.
    pub fn tensor_integral<F: FnMut(&[f64]) -> f64>(&self, k: usize, f: F) -> Result<f64> {
        self.guard(k)?;
        Ok(tuple_sum(&self.atoms, k, false, f))
    }

    /// `int_k^{k+1} f dN` over the half-open block `[k, k+1)`.
    pub fn block_integral(&self, f: &PeriodicFunction, k: i64) -> Result<f64> {
        let (a, b) = (k as f64, k as f64 + 1.0);
        let (lo, hi) = self.window;
        if a < lo || b > hi {
            return Err(Error::Window(format!(
                "block [{a}, {b}] is not inside the window [{lo}, {hi}]"
            )));
        }
        Ok(self.atoms_in(a, b).iter().map(|&x| f.eval(x)).sum())
    }

    /// `X^n(f) = sum_{k<n} (A_k f - E A_k f) / sqrt(n)`.
    pub fn clt_statistic(&self, f: &PeriodicFunction, n: usize, ctx: &KernelContext) -> Result<f64> {
        if n == 0 {
            return Err(Error::Domain("block count must be positive".into()));
        }
        let (lo, hi) = self.window;
        if lo > 0.0 || hi < n as f64 {
            return Err(Error::Window(format!(
                "window [{lo}, {hi}] does not cover [0, {n}]"
            )));
        }
        let total: f64 = self.atoms_in(0.0, n as f64).iter().map(|&x| f.eval(x)).sum();
        let mean = ctx.mean_block_integral(f);
        Ok((total - n as f64 * mean) / (n as f64).sqrt())
    }
}

fn tuple_sum<F: FnMut(&[f64]) -> f64>(atoms: &[f64], k: usize, distinct: bool, mut f: F) -> f64 {
    let m = atoms.len();
    if m == 0 || (distinct && k > m) {
        return 0.0;
    }
    let mut idx = vec![0usize; k];
    let mut args = vec![0.0; k];
    let mut total = 0.0;
    loop {
        let ok = !distinct || (0..k).all(|a| (0..a).all(|b| idx[a] != idx[b]));
        if ok {
            for (slot, &i) in args.iter_mut().zip(&idx) {
                *slot = atoms[i];
            }
            total += f(&args);
        }
        let mut pos = k;
        loop {
            if pos == 0 {
                return total;
            }
            pos -= 1;
            idx[pos] += 1;
            if idx[pos] < m {
                break;
            }
            idx[pos] = 0;
        }
    }
}

/// Integer partitions of `n` as ascending part lists, ordered by number of
/// parts (most first), then lexicographically.
pub fn partitions(n: usize) -> Vec<Vec<usize>> {
    fn rec(rest: usize, min: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if rest == 0 {
            out.push(cur.clone());
            return;
        }
        for p in min..=rest {
            cur.push(p);
            rec(rest - p, p, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if n > 0 {
        rec(n, 1, &mut Vec::new(), &mut out);
    }
    out.sort_by(|a, b| b.len().cmp(&a.len()).then_with(|| a.cmp(b)));
    out
}

/// Coefficients linking tensor and factorial integrals of `phi^{⊗n}` for
/// one partition `(l_1, ..., l_k)` of `n`:
///
/// * `tensor = sum A * int phi^{l_1} ⊗ ... ⊗ phi^{l_k} dN^(k)`
/// * `factorial = sum a * prod_i int phi^{l_i} dN`
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConversionCoefficient {
    pub partition: Vec<usize>,
    pub tensor_to_factorial: i64,
    pub factorial_to_tensor: i64,
}

/// Fits the conversion coefficients for `n <= 4` by least squares over
/// brute-force integrals on random configurations and rounds them.
pub fn conversion_coefficients(n: usize) -> Result<Vec<ConversionCoefficient>> {
    if n == 0 || n > 4 {
        return Err(Error::UnsupportedOrder(n));
    }
    let parts = partitions(n);
    let rows = 4 * parts.len() + 8;
    let mut rng = AuxStream::new(0x5eed_c0ef, n as u32);
    let mut x_a = DMatrix::zeros(rows, parts.len());
    let mut y_a = DVector::zeros(rows);
    let mut x_b = DMatrix::zeros(rows, parts.len());
    let mut y_b = DVector::zeros(rows);
    for r in 0..rows {
        let (measure, phi) = random_configuration(&mut rng, 3 + r % 5);
        let phi = &phi;
        y_a[r] = measure.tensor_integral(n, |u| u.iter().map(|&x| phi(x)).product())?;
        y_b[r] = measure.factorial_integral(n, |u| u.iter().map(|&x| phi(x)).product())?;
        for (c, part) in parts.iter().enumerate() {
            let k = part.len();
            x_a[(r, c)] = measure.factorial_integral(k, |u| {
                u.iter().zip(part).map(|(&x, &l)| phi(x).powi(l as i32)).product()
            })?;
            x_b[(r, c)] = part
                .iter()
                .map(|&l| measure.integrate(|x| phi(x).powi(l as i32)))
                .product();
        }
    }
    let a = fit_integers(&x_a, &y_a)?;
    let b = fit_integers(&x_b, &y_b)?;
    Ok(parts
        .into_iter()
        .zip(a.into_iter().zip(b))
        .map(|(partition, (a, b))| ConversionCoefficient {
            partition,
            tensor_to_factorial: a,
            factorial_to_tensor: b,
        })
        .collect())
}

/// A random measure with `atoms` atoms and a random quadratic `phi`.
fn random_configuration(rng: &mut AuxStream, atoms: usize) -> (PointMeasure, impl Fn(f64) -> f64) {
    let pts: Vec<f64> = (0..atoms).map(|_| rng.uniform_in(-1.0, 1.0)).collect();
    let c = [rng.normal(), rng.normal(), rng.normal()];
    let measure = PointMeasure::from_unsorted(pts).expect("finite atoms");
    (measure, move |x: f64| c[0] + c[1] * x + c[2] * x * x)
}

fn fit_integers(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<Vec<i64>> {
    let svd = x.clone().svd(true, true);
    let sol = svd
        .solve(y, 1e-12)
        .map_err(|e| Error::Internal(format!("conversion fit failed: {e}")))?;
    let rounded: Vec<i64> = sol.iter().map(|v| v.round() as i64).collect();
    let fitted = x * DVector::from_iterator(rounded.len(), rounded.iter().map(|&v| v as f64));
    let scale = y.amax().max(1.0);
    let resid = (&fitted - y).amax();
    let drift = sol
        .iter()
        .zip(&rounded)
        .map(|(s, &r)| (s - r as f64).abs())
        .fold(0.0, f64::max);
    if resid > 1e-9 * scale || drift > 1e-6 {
        return Err(Error::Internal(format!(
            "conversion coefficients inconsistent: residual {resid:e}, rounding drift {drift:e}"
        )));
    }
    Ok(rounded)
}

/// A non-decreasing map defined on the atoms of a point measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotoneAtomMap {
    domain: PointMeasure,
    values: Vec<f64>,
}

impl MonotoneAtomMap {
    pub fn new(domain: PointMeasure, values: Vec<f64>) -> Result<Self> {
        if values.len() != domain.len() {
            return Err(Error::Domain(format!(
                "{} values for {} atoms",
                values.len(),
                domain.len()
            )));
        }
        if values.windows(2).any(|w| !(w[0] <= w[1])) {
            return Err(Error::Domain("map values must be non-decreasing".into()));
        }
        Ok(Self { domain, values })
    }

    pub fn domain(&self) -> &PointMeasure {
        &self.domain
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Distinct images with the size of their preimage, in order.
    pub fn level_sets(&self) -> Vec<(f64, usize)> {
        let mut out: Vec<(f64, usize)> = Vec::new();
        for &v in &self.values {
            match out.last_mut() {
                Some((y, m)) if *y == v => *m += 1,
                _ => out.push((v, 1)),
            }
        }
        out
    }

    /// `nu`: unit mass at every distinct image.
    pub fn nu_measure(&self) -> PointMeasure {
        let atoms: Vec<f64> = self.level_sets().into_iter().map(|(y, _)| y).collect();
        let window = match (atoms.first(), atoms.last()) {
            (Some(&a), Some(&b)) => (a, b),
            _ => (0.0, 0.0),
        };
        PointMeasure::new(atoms, window).expect("level sets are strictly increasing")
    }

    /// `mu_{k, phi}` as (image, mass) pairs: each ordered k-tuple of distinct
    /// atoms inside one level set deposits unit mass at the level's image,
    /// so a level of size `m` carries `m! / (m - k)!`.
    pub fn mu_k_phi(&self, k: usize) -> Result<Vec<(f64, u128)>> {
        if k == 0 {
            return Err(Error::UnsupportedOrder(k));
        }
        Ok(self
            .level_sets()
            .into_iter()
            .filter(|&(_, m)| m >= k)
            .map(|(y, m)| (y, falling_factorial(m as u128, k as u128)))
            .collect())
    }

    /// Both sides of `int f dnu = sum_k (-1)^{k+1} / k! int f dmu_{k,phi}`.
    ///
    /// The right side is assembled per level set as an exact integer
    /// multiple of `f(y)`; it is finite because `mu_{k,phi}` vanishes beyond
    /// the largest level set.
    pub fn inclusion_exclusion_eval<F: Fn(f64) -> f64>(&self, f: F) -> Result<(f64, f64)> {
        let mut lhs = 0.0;
        let mut rhs = 0.0;
        for (y, m) in self.level_sets() {
            let fy = f(y);
            lhs += fy;
            rhs += alternating_binomial_sum(m)? as f64 * fy;
        }
        Ok((lhs, rhs))
    }
}

/// `nu` for a measure and a map defined on it.
pub fn nu_measure(n: &PointMeasure, phi: &MonotoneAtomMap) -> Result<PointMeasure> {
    if phi.domain() != n {
        return Err(Error::Domain("map is defined on a different measure".into()));
    }
    Ok(phi.nu_measure())
}

fn falling_factorial(m: u128, k: u128) -> u128 {
    ((m - k + 1)..=m).product()
}

/// `sum_{k=1}^{m} (-1)^{k+1} m! / ((m-k)! k!)` in exact arithmetic.
fn alternating_binomial_sum(m: usize) -> Result<i128> {
    if m > 120 {
        return Err(Error::Size(format!(
            "level set of size {m} exceeds exact binomial range"
        )));
    }
    let mut binom: i128 = 1;
    let mut total: i128 = 0;
    for k in 1..=m as i128 {
        binom = binom * (m as i128 - k + 1) / k;
        total += if k % 2 == 1 { binom } else { -binom };
    }
    Ok(total)
}

/// `xi_k(v) = int q_s(u_*, u^*, v) N^(k)(du)` over atoms within `cutoff`
/// of `v`, for `k` in {1, 2}.
///
/// Dropping atoms farther than `cutoff >= 8 sqrt(s)` changes each term by
/// less than the Gaussian tail `e^{-32}` relative to its peak.
pub fn xi_process(n: &PointMeasure, k: usize, s: f64, v: f64, cutoff: f64) -> Result<f64> {
    if !(s > 0.0) {
        return Err(Error::Domain(format!("elapsed time must be positive, got {s}")));
    }
    if !(cutoff >= 8.0 * s.sqrt()) {
        return Err(Error::Config(format!(
            "cutoff {cutoff} is below 8 sqrt(s) = {}",
            8.0 * s.sqrt()
        )));
    }
    let near = {
        let i = n.atoms.partition_point(|&x| x < v - cutoff);
        let j = n.atoms.partition_point(|&x| x <= v + cutoff).max(i);
        &n.atoms[i..j]
    };
    match k {
        1 => Ok(near.iter().map(|&u| gaussian_density(u, s, v)).sum()),
        2 => {
            let mut total = 0.0;
            for (i, &a) in near.iter().enumerate() {
                for &b in &near[i + 1..] {
                    total += 2.0 * q_density(s, a, b, v)?;
                }
            }
            Ok(total)
        }
        _ => Err(Error::UnsupportedOrder(k)),
    }
}
