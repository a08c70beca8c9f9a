//! Finite-basis sampler for the limiting Gaussian field and its Wick calculus.
//!
//! The field `zeta` is the centered Gaussian process on `L2([0, 1])` with
//! covariance `(f, (rho1 + G~) h)`, where `rho1 = 1/sqrt(pi t)` is the white
//! part. On an orthonormal basis `e_0, ..., e_{M-1}` it is represented by the
//! coefficient vector `zeta(e_i)`.

use log::warn;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::KernelContext;
use crate::periodic::PeriodicFunction;
use crate::rng::{normal_pair, Philox4x32, DOMAIN_FIELD};

/// Eigenvalues below this are treated as kernel inconsistencies rather than
/// quadrature noise.
pub const EIGEN_TOLERANCE: f64 = 1e-8;
/// Relative L2 residual allowed when projecting a kernel onto a basis.
pub const DEFAULT_RESIDUAL_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisFamily {
    /// `1, sqrt2 cos 2 pi x, sqrt2 sin 2 pi x, sqrt2 cos 4 pi x, ...`
    Trigonometric,
    /// `1` followed by Haar wavelets level by level.
    Haar,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BasisSpec {
    pub family: BasisFamily,
    pub size: usize,
    #[serde(default = "yes")]
    pub includes_constant: bool,
}

fn yes() -> bool {
    true
}

impl BasisSpec {
    pub fn new(family: BasisFamily, size: usize) -> Self {
        Self {
            family,
            size,
            includes_constant: true,
        }
    }

    pub fn functions(&self) -> Result<Vec<PeriodicFunction>> {
        if self.size == 0 {
            return Err(Error::Domain("basis size must be positive".into()));
        }
        let mut out = Vec::with_capacity(self.size);
        if self.includes_constant {
            out.push(PeriodicFunction::constant(1.0));
        }
        let r2 = std::f64::consts::SQRT_2;
        match self.family {
            BasisFamily::Trigonometric => {
                let mut k = 1;
                while out.len() < self.size {
                    out.push(PeriodicFunction::cos(k).scaled(r2));
                    if out.len() < self.size {
                        out.push(PeriodicFunction::sin(k).scaled(r2));
                    }
                    k += 1;
                }
            }
            BasisFamily::Haar => {
                let mut level = 0;
                'outer: loop {
                    for index in 0..(1u32 << level) {
                        if out.len() == self.size {
                            break 'outer;
                        }
                        out.push(PeriodicFunction::haar(level, index)?);
                    }
                    level += 1;
                }
            }
        }
        Ok(out)
    }

    /// Largest deviation of the Gram matrix from the identity.
    pub fn orthonormality_defect(&self) -> Result<f64> {
        let fs = self.functions()?;
        let mut worst: f64 = 0.0;
        for i in 0..fs.len() {
            for j in i..fs.len() {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((fs[i].inner(&fs[j]) - target).abs());
            }
        }
        Ok(worst)
    }
}

/// Covariance of the basis coefficients of `zeta`.
#[derive(Debug, Clone)]
pub struct CovarianceModel {
    t: f64,
    basis: BasisSpec,
    matrix: DMatrix<f64>,
    sqrt: DMatrix<f64>,
    eigen_floor: f64,
    floored: usize,
}

impl CovarianceModel {
    /// Entries `rho1 delta_ij + iint e_i G~ e_j`.
    pub fn build(basis: &BasisSpec, ctx: &KernelContext) -> Result<Self> {
        Self::build_with_kernel(basis, ctx, true)
    }

    /// As [`CovarianceModel::build`]; without the kernel only the white part
    /// `rho1 * I` remains.
    pub fn build_with_kernel(basis: &BasisSpec, ctx: &KernelContext, kernel: bool) -> Result<Self> {
        let fs = basis.functions()?;
        let m = fs.len();
        let mut matrix = if kernel {
            ctx.kernel_bilinear_matrix(&fs)
        } else {
            DMatrix::zeros(m, m)
        };
        for i in 0..m {
            matrix[(i, i)] += ctx.rho1();
        }
        Self::from_matrix(ctx.t(), basis.clone(), matrix)
    }

    /// Wraps an explicit symmetric matrix, flooring small negative
    /// eigenvalues at zero.
    pub fn from_matrix(t: f64, basis: BasisSpec, matrix: DMatrix<f64>) -> Result<Self> {
        let m = matrix.nrows();
        if matrix.ncols() != m {
            return Err(Error::Domain("covariance matrix must be square".into()));
        }
        for i in 0..m {
            for j in 0..i {
                let (a, b) = (matrix[(i, j)], matrix[(j, i)]);
                if (a - b).abs() > 1e-12 * a.abs().max(b.abs()).max(1.0) {
                    return Err(Error::Domain(format!(
                        "covariance matrix is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("covariance matrix has non-finite entries".into()));
        }
        let eig = SymmetricEigen::new(matrix.clone());
        let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
        if min < -EIGEN_TOLERANCE {
            return Err(Error::KernelConsistency(min));
        }
        let mut floored = 0;
        let roots = eig.eigenvalues.map(|l| {
            if l < 0.0 {
                floored += 1;
                0.0
            } else {
                l.sqrt()
            }
        });
        if floored > 0 {
            warn!("floored {floored} negative covariance eigenvalue(s), smallest {min:e}");
        }
        let q = &eig.eigenvectors;
        let sqrt = q * DMatrix::from_diagonal(&roots) * q.transpose();
        Ok(Self {
            t,
            basis,
            matrix,
            sqrt,
            eigen_floor: 0.0,
            floored,
        })
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn basis(&self) -> &BasisSpec {
        &self.basis
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn eigen_floor(&self) -> f64 {
        self.eigen_floor
    }

    /// Number of eigenvalues raised to the floor.
    pub fn floored_count(&self) -> usize {
        self.floored
    }

    /// Draw `draw` of the field under `seed`: `S z` with `S` the symmetric
    /// square root and `z` standard normals from the field counter domain.
    pub fn sample_field(&self, seed: u64, draw: u64) -> GaussianFieldSample {
        let philox = Philox4x32::new(seed);
        let m = self.dim();
        let mut z = DVector::zeros(m);
        for pair in 0..m.div_ceil(2) {
            let block = philox.block([pair as u32, draw as u32, (draw >> 32) as u32, DOMAIN_FIELD]);
            let (a, b) = normal_pair(block);
            z[2 * pair] = a;
            if 2 * pair + 1 < m {
                z[2 * pair + 1] = b;
            }
        }
        GaussianFieldSample {
            coefficients: (&self.sqrt * z).iter().copied().collect(),
        }
    }
}

/// Coefficients `zeta(e_i)` of one draw of the field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianFieldSample {
    pub coefficients: Vec<f64>,
}

/// Isserlis-corrected product of up to three coefficients.
pub fn wick_product(sample: &GaussianFieldSample, cov: &CovarianceModel, indices: &[usize]) -> Result<f64> {
    let z = &sample.coefficients;
    let c = cov.matrix();
    if let Some(&bad) = indices.iter().find(|&&i| i >= z.len()) {
        return Err(Error::Domain(format!("basis index {bad} out of range")));
    }
    Ok(match *indices {
        [] => 1.0,
        [i] => z[i],
        [i, j] => z[i] * z[j] - c[(i, j)],
        [i, j, k] => {
            z[i] * z[j] * z[k] - c[(i, j)] * z[k] - c[(i, k)] * z[j] - c[(j, k)] * z[i]
        }
        _ => return Err(Error::UnsupportedOrder(indices.len())),
    })
}

/// Symmetric coefficient tensor of order 2 or 3, stored densely.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HSForm {
    order: usize,
    dim: usize,
    coeffs: Vec<f64>,
}

impl HSForm {
    pub fn new(order: usize, dim: usize, coeffs: Vec<f64>) -> Result<Self> {
        if !(2..=3).contains(&order) {
            return Err(Error::UnsupportedOrder(order));
        }
        if coeffs.len() != dim.pow(order as u32) {
            return Err(Error::Domain(format!(
                "{} coefficients for a {dim}-dimensional order-{order} form",
                coeffs.len()
            )));
        }
        let form = Self { order, dim, coeffs };
        form.check_symmetric(1e-12)?;
        Ok(form)
    }

    pub fn zero(order: usize, dim: usize) -> Result<Self> {
        Self::new(order, dim, vec![0.0; dim.pow(order as u32)])
    }

    pub fn from_matrix(a: &DMatrix<f64>) -> Result<Self> {
        let dim = a.nrows();
        let mut coeffs = Vec::with_capacity(dim * dim);
        for i in 0..dim {
            for j in 0..dim {
                coeffs.push(a[(i, j)]);
            }
        }
        Self::new(2, dim, coeffs)
    }

    /// Builds a form from a symmetric function of the index tuple.
    pub fn from_fn<F: Fn(&[usize]) -> f64>(order: usize, dim: usize, f: F) -> Result<Self> {
        let mut coeffs = Vec::with_capacity(dim.pow(order as u32));
        let mut idx = vec![0usize; order];
        for flat in 0..dim.pow(order as u32) {
            let mut r = flat;
            for slot in idx.iter_mut().rev() {
                *slot = r % dim;
                r /= dim;
            }
            coeffs.push(f(&idx));
        }
        Self::new(order, dim, coeffs)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn at2(&self, i: usize, j: usize) -> f64 {
        self.coeffs[i * self.dim + j]
    }

    fn at3(&self, i: usize, j: usize, k: usize) -> f64 {
        self.coeffs[(i * self.dim + j) * self.dim + k]
    }

    fn check_symmetric(&self, tol: f64) -> Result<()> {
        let d = self.dim;
        let scale = self.coeffs.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let bad = match self.order {
            2 => (0..d).any(|i| (0..i).any(|j| (self.at2(i, j) - self.at2(j, i)).abs() > tol * scale)),
            _ => (0..d).any(|i| {
                (0..d).any(|j| {
                    (0..d).any(|k| {
                        let v = self.at3(i, j, k);
                        [self.at3(j, i, k), self.at3(i, k, j), self.at3(k, j, i)]
                            .iter()
                            .any(|w| (v - w).abs() > tol * scale)
                    })
                })
            }),
        };
        if bad {
            return Err(Error::Domain("form coefficients are not symmetric".into()));
        }
        Ok(())
    }

    /// `sum_{i..} a_{i..} a_{i..}`.
    pub fn hs_norm_squared(&self) -> f64 {
        self.coeffs.iter().map(|v| v * v).sum()
    }

    /// `E[A(zeta, ..., zeta)^2] = k! <A, C^{⊗k} A>`.
    pub fn second_moment(&self, cov: &CovarianceModel) -> Result<f64> {
        self.check_dim(cov)?;
        let c = cov.matrix();
        let d = self.dim;
        match self.order {
            2 => {
                let a = DMatrix::from_row_slice(d, d, &self.coeffs);
                let ac = &a * c;
                Ok(2.0 * (&ac * &ac).trace())
            }
            _ => {
                // contract one index at a time: B = (C ⊗ C ⊗ C) A
                let mut b = self.coeffs.clone();
                for axis in 0..3 {
                    b = contract_axis(&b, c, d, axis);
                }
                Ok(6.0 * b.iter().zip(&self.coeffs).map(|(x, y)| x * y).sum::<f64>())
            }
        }
    }

    fn check_dim(&self, cov: &CovarianceModel) -> Result<()> {
        if cov.dim() != self.dim {
            return Err(Error::Domain(format!(
                "form of dimension {} applied to a {}-dimensional field",
                self.dim,
                cov.dim()
            )));
        }
        Ok(())
    }
}

fn contract_axis(t: &[f64], c: &DMatrix<f64>, d: usize, axis: usize) -> Vec<f64> {
    let stride = d.pow(2 - axis as u32);
    (0..t.len())
        .map(|flat| {
            let digit = (flat / stride) % d;
            let base = flat - digit * stride;
            (0..d).map(|m| c[(digit, m)] * t[base + m * stride]).sum()
        })
        .collect()
}

/// `A(zeta, ..., zeta) = sum a_{i..} (zeta_i * ... * zeta_k)` with Wick products.
pub fn hs_form_apply(form: &HSForm, sample: &GaussianFieldSample, cov: &CovarianceModel) -> Result<f64> {
    form.check_dim(cov)?;
    let z = &sample.coefficients;
    let c = cov.matrix();
    let d = form.dim;
    match form.order {
        2 => {
            let mut total = 0.0;
            for i in 0..d {
                for j in 0..d {
                    total += form.at2(i, j) * (z[i] * z[j] - c[(i, j)]);
                }
            }
            Ok(total)
        }
        _ => {
            // symmetry folds the three pair corrections into one term
            let mut total = 0.0;
            for i in 0..d {
                for j in 0..d {
                    let zij = z[i] * z[j];
                    let cij = c[(i, j)];
                    for (k, &zk) in z.iter().enumerate().take(d) {
                        let a = form.at3(i, j, k);
                        if a != 0.0 {
                            total += a * (zij * zk - 3.0 * cij * zk);
                        }
                    }
                }
            }
            Ok(total)
        }
    }
}

/// A symmetric kernel `f(x, y) = sum_w w a(x) b(y)` on the unit square.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparableKernel2 {
    pub terms: Vec<(f64, PeriodicFunction, PeriodicFunction)>,
}

impl SeparableKernel2 {
    pub fn new(terms: Vec<(f64, PeriodicFunction, PeriodicFunction)>) -> Self {
        Self { terms }
    }

    /// `w a(x) a(y)`.
    pub fn product(a: PeriodicFunction) -> Self {
        Self::new(vec![(1.0, a.clone(), a)])
    }

    pub fn zero() -> Self {
        Self::new(Vec::new())
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        self.terms.iter().map(|(w, a, b)| w * a.eval(x) * b.eval(y)).sum()
    }

    /// Largest asymmetry `|f(x, y) - f(y, x)|` on a 32 x 32 grid.
    pub fn asymmetry(&self) -> f64 {
        let g = |i: usize| (i as f64 + 0.37) / 32.0;
        let mut worst: f64 = 0.0;
        for i in 0..32 {
            for j in 0..32 {
                worst = worst.max((self.eval(g(i), g(j)) - self.eval(g(j), g(i))).abs());
            }
        }
        worst
    }

    /// Largest `|int_0^1 f(x, y) dx|` over a grid of `y`.
    pub fn marginal_mean_defect(&self) -> f64 {
        let means: Vec<f64> = self.terms.iter().map(|(w, a, _)| w * a.integral()).collect();
        let mut worst: f64 = 0.0;
        for i in 0..64 {
            let y = (i as f64 + 0.5) / 64.0;
            let v: f64 = self.terms.iter().zip(&means).map(|((_, _, b), m)| m * b.eval(y)).sum();
            worst = worst.max(v.abs());
        }
        worst
    }

    /// `iint f^2`.
    pub fn norm_squared(&self) -> f64 {
        let mut total = 0.0;
        for (w1, a1, b1) in &self.terms {
            for (w2, a2, b2) in &self.terms {
                total += w1 * w2 * a1.inner(a2) * b1.inner(b2);
            }
        }
        total
    }

    /// `iint f G~`, equal to `iint f G` for symmetric `f`.
    pub fn kernel_integral(&self, ctx: &KernelContext) -> f64 {
        self.terms
            .iter()
            .map(|(w, a, b)| w * ctx.kernel_bilinear(a, b))
            .sum()
    }

    /// `int_0^1 f(x, x) dx`.
    pub fn diagonal_integral(&self) -> f64 {
        self.terms.iter().map(|(w, a, b)| w * a.inner(b)).sum()
    }

    /// `(1/n) int_{[0,n)^2} f dN^(2)` computed in linear time from the
    /// separable structure.
    pub fn factorial_statistic(&self, atoms: &[f64], n: usize) -> f64 {
        let mut total = 0.0;
        for (w, a, b) in &self.terms {
            let (mut sa, mut sb, mut diag) = (0.0, 0.0, 0.0);
            for &x in atoms {
                let (av, bv) = (a.eval(x), b.eval(x));
                sa += av;
                sb += bv;
                diag += av * bv;
            }
            total += w * (sa * sb - diag);
        }
        total / n as f64
    }

    /// `(1/n) int_{[0,n)^2} f dN^{⊗2}`, diagonal included.
    pub fn tensor_statistic(&self, atoms: &[f64], n: usize) -> f64 {
        let mut total = 0.0;
        for (w, a, b) in &self.terms {
            let sa: f64 = atoms.iter().map(|&x| a.eval(x)).sum();
            let sb: f64 = atoms.iter().map(|&x| b.eval(x)).sum();
            total += w * sa * sb;
        }
        total / n as f64
    }

    /// Projects onto the basis and reports the relative L2 residual.
    pub fn expand(&self, basis: &BasisSpec) -> Result<(HSForm, f64)> {
        let fs = basis.functions()?;
        let m = fs.len();
        let mut a = DMatrix::zeros(m, m);
        for (w, fa, fb) in &self.terms {
            let pa: Vec<f64> = fs.iter().map(|e| fa.inner(e)).collect();
            let pb: Vec<f64> = fs.iter().map(|e| fb.inner(e)).collect();
            for i in 0..m {
                for j in 0..m {
                    a[(i, j)] += w * pa[i] * pb[j];
                }
            }
        }
        let sym = (&a + a.transpose()) * 0.5;
        let norm2 = self.norm_squared();
        let captured: f64 = sym.iter().map(|v| v * v).sum();
        let residual = if norm2 > 0.0 {
            ((norm2 - captured).max(0.0) / norm2).sqrt()
        } else {
            0.0
        };
        Ok((HSForm::from_matrix(&sym)?, residual))
    }
}

/// `A_f(zeta, zeta) + iint f G`, prepared once for repeated draws.
#[derive(Debug, Clone)]
pub struct LimitFunctionalK2 {
    pub form: HSForm,
    pub shift: f64,
    pub residual: f64,
}

impl LimitFunctionalK2 {
    /// Fails with a basis-resolution error when the projection residual
    /// exceeds `residual_tol`, or when `f` is not symmetric with zero
    /// marginal means.
    pub fn new(
        f: &SeparableKernel2,
        basis: &BasisSpec,
        ctx: &KernelContext,
        residual_tol: f64,
    ) -> Result<Self> {
        if f.asymmetry() > 1e-10 {
            return Err(Error::Domain("kernel must be symmetric".into()));
        }
        if f.marginal_mean_defect() > 1e-10 {
            return Err(Error::Domain("kernel must have zero marginal means".into()));
        }
        let (form, residual) = f.expand(basis)?;
        if residual > residual_tol {
            return Err(Error::BasisResolution {
                residual,
                tol: residual_tol,
            });
        }
        Ok(Self {
            form,
            shift: f.kernel_integral(ctx),
            residual,
        })
    }

    pub fn apply(&self, sample: &GaussianFieldSample, cov: &CovarianceModel) -> Result<f64> {
        Ok(hs_form_apply(&self.form, sample, cov)? + self.shift)
    }

    /// Variance of the functional, `2 tr(A C A C)`.
    pub fn variance(&self, cov: &CovarianceModel) -> Result<f64> {
        self.form.second_moment(cov)
    }
}

/// One-shot form of [`LimitFunctionalK2`].
pub fn limit_functional_k2(
    f: &SeparableKernel2,
    sample: &GaussianFieldSample,
    cov: &CovarianceModel,
    ctx: &KernelContext,
) -> Result<f64> {
    LimitFunctionalK2::new(f, cov.basis(), ctx, DEFAULT_RESIDUAL_TOL)?.apply(sample, cov)
}
