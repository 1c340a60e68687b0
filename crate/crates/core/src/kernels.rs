//! Dense symmetric kernel matrices.
//!
//! A [`KernelMatrix`] is an `n x n` symmetric matrix of pairwise similarities.
//! Its induced squared distance is `d(a, b) = K[a,a] + K[b,b] - 2 K[a,b]`.
//! Matrices produced by [`project_psd`], [`linear_kernel`] and conic
//! combinations of certified kernels carry a `psd_certified` flag.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Entrywise tolerance for accepting a matrix as symmetric.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Eigenvalues below this are clipped to zero during PSD projection.
pub const EIGEN_FLOOR: f64 = 1e-12;

/// Minimum eigenvalue tolerated for a matrix to be certified PSD.
pub const PSD_TOL: f64 = 1e-8;

/// Traces at or below this are treated as degenerate.
pub const TRACE_FLOOR: f64 = 1e-14;

/// Allowed deviation from unit trace for auxiliary kernels.
pub const UNIT_TRACE_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct KernelMatrix {
    entries: DMatrix<f64>,
    psd_certified: bool,
}

impl KernelMatrix {
    /// Wraps a square matrix that is symmetric to within [`SYMMETRY_TOL`].
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        if !entries.is_square() {
            return Err(Error::InvalidInput(format!(
                "kernel matrix must be square, got {}x{}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        let asym = max_asymmetry(&entries);
        if asym.is_nan() || asym > SYMMETRY_TOL {
            return Err(Error::InvalidInput(format!(
                "kernel matrix is not symmetric (max |K - K^T| = {asym:e})"
            )));
        }
        Ok(Self {
            entries,
            psd_certified: false,
        })
    }

    /// Averages a square matrix with its transpose.
    pub fn symmetrized(entries: &DMatrix<f64>) -> Result<Self> {
        if !entries.is_square() {
            return Err(Error::InvalidInput("kernel matrix must be square".into()));
        }
        Ok(Self {
            entries: symmetrize(entries),
            psd_certified: false,
        })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            entries: DMatrix::identity(n, n),
            psd_certified: true,
        }
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            entries: DMatrix::zeros(n, n),
            psd_certified: true,
        }
    }

    /// Checks the minimum eigenvalue and sets the certification flag when it
    /// is at least `-PSD_TOL`. Returns the updated flag.
    pub fn certify_psd(&mut self) -> bool {
        self.psd_certified = min_eigenvalue(self) >= -PSD_TOL;
        self.psd_certified
    }

    pub(crate) fn from_parts(entries: DMatrix<f64>, psd_certified: bool) -> Self {
        Self {
            entries,
            psd_certified,
        }
    }

    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.entries
    }

    pub fn is_psd_certified(&self) -> bool {
        self.psd_certified
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[(i, j)]
    }

    pub fn trace(&self) -> f64 {
        self.entries.trace()
    }

    /// Induced squared distance without argument checks.
    #[inline]
    pub fn distance(&self, a: usize, b: usize) -> f64 {
        let k = &self.entries;
        k[(a, a)] + k[(b, b)] - 2.0 * k[(a, b)]
    }

    /// Multiplies by a nonnegative scalar, keeping the certification flag.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            entries: &self.entries * factor,
            psd_certified: self.psd_certified && factor >= 0.0,
        }
    }
}

/// Largest entrywise `|K - K^T|`.
pub fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for j in 0..n {
        for i in (j + 1)..n {
            let d = (m[(i, j)] - m[(j, i)]).abs();
            if d > worst || d.is_nan() {
                worst = d;
            }
        }
    }
    worst
}

pub(crate) fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    let mut out = m.clone();
    for j in 0..n {
        for i in (j + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    out
}

/// `K[a,a] + K[b,b] - 2 K[a,b]`.
pub fn kernel_distance(k: &KernelMatrix, a: usize, b: usize) -> Result<f64> {
    let n = k.n();
    if a >= n || b >= n {
        return Err(Error::InvalidArgument(format!(
            "index out of range: ({a}, {b}) for n = {n}"
        )));
    }
    if a == b {
        return Err(Error::InvalidArgument(format!(
            "distance needs two distinct objects, got {a} twice"
        )));
    }
    Ok(k.distance(a, b))
}

/// A fixed list of unit-trace auxiliary kernels together with nonnegative
/// combination weights.
#[derive(Clone, Debug, PartialEq)]
pub struct AuxKernelBank {
    n: usize,
    kernels: Vec<KernelMatrix>,
    weights: Vec<f64>,
}

impl AuxKernelBank {
    pub fn new(n: usize, kernels: Vec<KernelMatrix>, weights: Vec<f64>) -> Result<Self> {
        if kernels.len() != weights.len() {
            return Err(Error::DimensionMismatch {
                expected: kernels.len(),
                found: weights.len(),
            });
        }
        for (i, k) in kernels.iter().enumerate() {
            if k.n() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: k.n(),
                });
            }
            let tr = k.trace();
            if (tr - 1.0).abs().is_nan() || (tr - 1.0).abs() > UNIT_TRACE_TOL {
                return Err(Error::InvalidInput(format!(
                    "auxiliary kernel {i} has trace {tr}, expected 1"
                )));
            }
        }
        check_weights(&weights)?;
        Ok(Self {
            n,
            kernels,
            weights,
        })
    }

    /// A bank with uniform weights `1/A`.
    pub fn uniform(n: usize, kernels: Vec<KernelMatrix>) -> Result<Self> {
        let a = kernels.len();
        let weights = if a == 0 {
            Vec::new()
        } else {
            vec![1.0 / a as f64; a]
        };
        Self::new(n, kernels, weights)
    }

    pub fn empty(n: usize) -> Self {
        Self {
            n,
            kernels: Vec::new(),
            weights: Vec::new(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.kernels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kernels.is_empty()
    }

    pub fn kernels(&self) -> &[KernelMatrix] {
        &self.kernels
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn set_weights(&mut self, weights: Vec<f64>) -> Result<()> {
        if weights.len() != self.kernels.len() {
            return Err(Error::DimensionMismatch {
                expected: self.kernels.len(),
                found: weights.len(),
            });
        }
        check_weights(&weights)?;
        self.weights = weights;
        Ok(())
    }

    pub fn with_weights(mut self, weights: Vec<f64>) -> Result<Self> {
        self.set_weights(weights)?;
        Ok(self)
    }
}

fn check_weights(weights: &[f64]) -> Result<()> {
    match weights.iter().position(|w| !w.is_finite() || *w < 0.0) {
        Some(i) => Err(Error::InvalidInput(format!(
            "kernel weight {i} is {} (weights must be finite and nonnegative)",
            weights[i]
        ))),
        None => Ok(()),
    }
}

/// `sum_a mu_a K_a`.
pub fn conic_combine(bank: &AuxKernelBank) -> KernelMatrix {
    let mut acc = DMatrix::zeros(bank.n, bank.n);
    for (k, &w) in bank.kernels.iter().zip(&bank.weights) {
        if w != 0.0 {
            acc += k.matrix() * w;
        }
    }
    let certified = bank.kernels.iter().all(KernelMatrix::is_psd_certified);
    KernelMatrix::from_parts(acc, certified)
}

/// `K0 + sum_a mu_a K_a`.
pub fn compose_ak(k0: &KernelMatrix, bank: &AuxKernelBank) -> Result<KernelMatrix> {
    if k0.n() != bank.n {
        return Err(Error::DimensionMismatch {
            expected: bank.n,
            found: k0.n(),
        });
    }
    let mut acc = k0.matrix().clone();
    for (k, &w) in bank.kernels.iter().zip(&bank.weights) {
        if w != 0.0 {
            acc += k.matrix() * w;
        }
    }
    let certified =
        k0.is_psd_certified() && bank.kernels.iter().all(KernelMatrix::is_psd_certified);
    Ok(KernelMatrix::from_parts(acc, certified))
}

fn eigen(m: &DMatrix<f64>) -> Result<SymmetricEigen<f64, nalgebra::Dyn>> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("matrix has non-finite entries".into()));
    }
    SymmetricEigen::try_new(symmetrize(m), f64::EPSILON, 0)
        .ok_or_else(|| Error::Numerical("symmetric eigendecomposition did not converge".into()))
}

/// Frobenius-nearest PSD matrix: eigendecompose the symmetrized input, clip
/// eigenvalues below [`EIGEN_FLOOR`] to zero and reassemble.
pub fn project_psd(m: &DMatrix<f64>) -> Result<KernelMatrix> {
    if !m.is_square() {
        return Err(Error::InvalidInput(
            "cannot project a non-square matrix".into(),
        ));
    }
    let n = m.nrows();
    let eig = eigen(m)?;
    let keep: Vec<usize> = (0..n)
        .filter(|&i| eig.eigenvalues[i] >= EIGEN_FLOOR)
        .collect();
    if keep.len() == n {
        // Nothing to clip; the symmetrized input is already the projection.
        return Ok(KernelMatrix::from_parts(symmetrize(m), true));
    }
    let mut scaled = DMatrix::zeros(n, keep.len());
    let mut basis = DMatrix::zeros(n, keep.len());
    for (col, &i) in keep.iter().enumerate() {
        let v = eig.eigenvectors.column(i);
        basis.set_column(col, &v);
        scaled.set_column(col, &(v * eig.eigenvalues[i]));
    }
    let out = scaled * basis.transpose();
    Ok(KernelMatrix::from_parts(symmetrize(&out), true))
}

/// Sorted (ascending) eigenvalues of a symmetric matrix.
pub fn eigenvalues(k: &KernelMatrix) -> Result<Vec<f64>> {
    let eig = eigen(k.matrix())?;
    let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    vals.sort_by(f64::total_cmp);
    Ok(vals)
}

pub fn min_eigenvalue(k: &KernelMatrix) -> f64 {
    match eigenvalues(k) {
        Ok(v) => v.first().copied().unwrap_or(0.0),
        Err(_) => f64::NAN,
    }
}

/// Gram matrix `F F^T` of the rows of `features`.
pub fn linear_kernel(features: &DMatrix<f64>) -> KernelMatrix {
    let gram = features * features.transpose();
    KernelMatrix::from_parts(symmetrize(&gram), true)
}

/// `exp(-|f_i - f_j|^2 / (2 sigma^2))` over the rows of `features`.
pub fn gaussian_kernel(features: &DMatrix<f64>, sigma: f64) -> Result<KernelMatrix> {
    if sigma.is_nan() || sigma <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "sigma must be positive, got {sigma}"
        )));
    }
    let n = features.nrows();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        k[(i, i)] = 1.0;
        for j in 0..i {
            let d2 = (features.row(i) - features.row(j)).norm_squared();
            let v = (-d2 / (2.0 * sigma * sigma)).exp();
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    Ok(KernelMatrix::from_parts(k, true))
}

/// Subtracts the column means, so the linear kernel of the result is the
/// centered Gram matrix. Distances are unaffected.
pub fn center_columns(features: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = features.clone();
    let n = features.nrows() as f64;
    for mut col in out.column_iter_mut() {
        let mean = col.sum() / n;
        col.add_scalar_mut(-mean);
    }
    out
}

pub fn unit_trace_normalize(k: &KernelMatrix) -> Result<KernelMatrix> {
    let tr = k.trace();
    if tr.is_nan() || tr <= TRACE_FLOOR {
        return Err(Error::DegenerateKernel(tr));
    }
    Ok(k.scaled(1.0 / tr))
}

/// Number of eigenvalues greater than `tol` times the largest eigenvalue.
pub fn numerical_rank(k: &KernelMatrix, tol: f64) -> Result<usize> {
    let vals = eigenvalues(k)?;
    let max = vals.last().copied().unwrap_or(0.0);
    if max.is_nan() || max <= 0.0 {
        return Ok(0);
    }
    let cutoff = tol * max;
    Ok(vals.iter().filter(|&&v| v > cutoff).count())
}
