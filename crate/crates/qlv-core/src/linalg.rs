//! Dense complex linear algebra: matrices, Kronecker products, conjugate
//! transposes, traces and Hermiticity/positivity checks. This is the substrate
//! every density-operator computation in the crate sits on.
//!
//! Matrices are stored row-major. All operations are pure functions on
//! immutable inputs, so values can be shared freely between workers.

use num_complex::Complex64;

use crate::error::{QlvError, Result};

/// Hard cap on system size: operators never exceed `2^MAX_QUBITS` rows.
pub const MAX_QUBITS: usize = 12;

/// Largest supported matrix dimension (`2^MAX_QUBITS`).
pub const MAX_DIM: usize = 1 << MAX_QUBITS;

/// Numerical tolerances used when validating operators.
///
/// Defaults absorb double-precision accumulation over matrices up to
/// 4096x4096; they can be overridden where coarser or tighter checks are
/// needed.
#[derive(Debug, Clone, Copy)]
pub struct Tolerances {
    /// Max entrywise deviation |M - M^dagger| tolerated for Hermitian checks.
    pub hermiticity: f64,
    /// Max deviation of the trace from 1 for density operators.
    pub trace: f64,
    /// Magnitude of the most negative eigenvalue tolerated as numerical noise.
    pub psd: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            hermiticity: 1e-10,
            trace: 1e-10,
            psd: 1e-8,
        }
    }
}

/// Dense complex matrix in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl ComplexMatrix {
    /// Builds a matrix from row-major entries, rejecting shape mismatches and
    /// non-finite entries.
    pub fn new(rows: usize, cols: usize, data: Vec<Complex64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(QlvError::ShapeMismatch(format!(
                "matrix dimensions must be positive, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(QlvError::ShapeMismatch(format!(
                "expected {} entries for a {rows}x{cols} matrix, got {}",
                rows * cols,
                data.len()
            )));
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(QlvError::Validation(
                "matrix entries must be finite".into(),
            ));
        }
        Ok(ComplexMatrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        ComplexMatrix {
            rows,
            cols,
            data: vec![Complex64::ZERO; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = Complex64::ONE;
        }
        m
    }

    /// Convenience constructor from real row-major entries.
    pub fn from_real(rows: usize, cols: usize, entries: &[f64]) -> Result<Self> {
        Self::new(
            rows,
            cols,
            entries.iter().map(|&x| Complex64::new(x, 0.0)).collect(),
        )
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    /// Row-major entry slice.
    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: Complex64) {
        self.data[i * self.cols + j] = value;
    }

    /// Conjugate transpose. Involutive: `m.dagger().dagger() == m` exactly.
    pub fn dagger(&self) -> ComplexMatrix {
        let mut out = ComplexMatrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j].conj();
            }
        }
        out
    }

    /// Kronecker product `self (x) other`, with the left factor on the high
    /// bits. Errors once the result would exceed the `MAX_QUBITS` limit.
    pub fn kron(&self, other: &ComplexMatrix) -> Result<ComplexMatrix> {
        let rows = self.rows.checked_mul(other.rows);
        let cols = self.cols.checked_mul(other.cols);
        let (rows, cols) = match (rows, cols) {
            (Some(r), Some(c)) if r <= MAX_DIM && c <= MAX_DIM => (r, c),
            _ => {
                return Err(QlvError::SizeLimit(format!(
                    "kron result would exceed the {MAX_DIM}x{MAX_DIM} limit \
                     ({}x{} (x) {}x{})",
                    self.rows, self.cols, other.rows, other.cols
                )))
            }
        };
        let mut out = ComplexMatrix::zeros(rows, cols);
        for i0 in 0..self.rows {
            for j0 in 0..self.cols {
                let a = self.data[i0 * self.cols + j0];
                if a == Complex64::ZERO {
                    continue;
                }
                for i1 in 0..other.rows {
                    let dst = (i0 * other.rows + i1) * cols + j0 * other.cols;
                    let src = i1 * other.cols;
                    for j1 in 0..other.cols {
                        out.data[dst + j1] = a * other.data[src + j1];
                    }
                }
            }
        }
        Ok(out)
    }

    /// Plain matrix product.
    pub fn matmul(&self, other: &ComplexMatrix) -> Result<ComplexMatrix> {
        if self.cols != other.rows {
            return Err(QlvError::ShapeMismatch(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = ComplexMatrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == Complex64::ZERO {
                    continue;
                }
                let src = k * other.cols;
                let dst = i * other.cols;
                for j in 0..other.cols {
                    out.data[dst + j] += a * other.data[src + j];
                }
            }
        }
        Ok(out)
    }

    /// Matrix-vector product.
    pub fn mul_vec(&self, v: &[Complex64]) -> Result<Vec<Complex64>> {
        if self.cols != v.len() {
            return Err(QlvError::ShapeMismatch(format!(
                "cannot apply {}x{} matrix to a vector of length {}",
                self.rows,
                self.cols,
                v.len()
            )));
        }
        let mut out = vec![Complex64::ZERO; self.rows];
        for i in 0..self.rows {
            let row = &self.data[i * self.cols..(i + 1) * self.cols];
            out[i] = row.iter().zip(v).map(|(a, b)| a * b).sum();
        }
        Ok(out)
    }

    pub fn scale(&self, factor: Complex64) -> ComplexMatrix {
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z * factor).collect(),
        }
    }

    pub fn add(&self, other: &ComplexMatrix) -> Result<ComplexMatrix> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(QlvError::ShapeMismatch(format!(
                "cannot add {}x{} and {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a + b)
                .collect(),
        })
    }

    pub fn sub(&self, other: &ComplexMatrix) -> Result<ComplexMatrix> {
        self.add(&other.scale(-Complex64::ONE))
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.rows.min(self.cols))
            .map(|i| self.data[i * self.cols + i])
            .sum()
    }

    /// Largest entrywise absolute difference to `other`.
    pub fn max_abs_diff(&self, other: &ComplexMatrix) -> f64 {
        debug_assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// Max entrywise deviation from the conjugate transpose.
    pub fn hermiticity_defect(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let mut worst = 0.0f64;
        for i in 0..self.rows {
            for j in i..self.cols {
                let d = (self.data[i * self.cols + j] - self.data[j * self.cols + i].conj()).norm();
                worst = worst.max(d);
            }
        }
        worst
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_defect() <= tol
    }
}

/// Kronecker product as a free function, for folding chains of factors.
pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
    a.kron(b)
}

/// Folds `m (x) m (x) ... (x) m` (`n` factors).
pub fn kron_power(m: &ComplexMatrix, n: usize) -> Result<ComplexMatrix> {
    if n == 0 {
        return Err(QlvError::Domain("kron power requires n >= 1".into()));
    }
    let mut out = m.clone();
    for _ in 1..n {
        out = out.kron(m)?;
    }
    Ok(out)
}

/// Conjugate transpose as a free function.
pub fn dagger(a: &ComplexMatrix) -> ComplexMatrix {
    a.dagger()
}

/// `Tr(a * b)` computed as `sum_ij a[i][j] * b[j][i]` without forming the
/// product matrix.
pub fn trace_product(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<Complex64> {
    if !a.is_square() || !b.is_square() || a.rows() != b.rows() {
        return Err(QlvError::ShapeMismatch(format!(
            "trace_product requires square matrices of equal dimension, got {}x{} and {}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    let n = a.rows();
    let mut acc = Complex64::ZERO;
    for i in 0..n {
        for j in 0..n {
            acc += a.get(i, j) * b.get(j, i);
        }
    }
    Ok(acc)
}

/// Smallest eigenvalue of a Hermitian matrix.
///
/// Backed by nalgebra's Hermitian eigensolver; inputs failing the Hermiticity
/// check are rejected.
pub fn min_eigenvalue(a: &ComplexMatrix) -> Result<f64> {
    min_eigenvalue_with(a, &Tolerances::default())
}

pub fn min_eigenvalue_with(a: &ComplexMatrix, tol: &Tolerances) -> Result<f64> {
    if !a.is_square() {
        return Err(QlvError::ShapeMismatch(format!(
            "eigenvalues require a square matrix, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    let defect = a.hermiticity_defect();
    if defect > tol.hermiticity {
        return Err(QlvError::Validation(format!(
            "matrix is not Hermitian (defect {defect:.3e} > {:.3e})",
            tol.hermiticity
        )));
    }
    let n = a.rows();
    let m = nalgebra::DMatrix::from_fn(n, n, |i, j| a.get(i, j));
    let eigenvalues = m.symmetric_eigenvalues();
    Ok(eigenvalues.iter().copied().fold(f64::INFINITY, f64::min))
}

/// The four Pauli matrices in the single-qubit basis.
pub mod pauli {
    use super::ComplexMatrix;
    use num_complex::Complex64;

    const O: Complex64 = Complex64::ZERO;
    const L: Complex64 = Complex64::ONE;

    /// sigma_o = |0><0| + |1><1|
    pub fn sigma_o() -> ComplexMatrix {
        ComplexMatrix::new(2, 2, vec![L, O, O, L]).expect("static matrix")
    }

    /// sigma_x = |0><1| + |1><0|
    pub fn sigma_x() -> ComplexMatrix {
        ComplexMatrix::new(2, 2, vec![O, L, L, O]).expect("static matrix")
    }

    /// sigma_y = i(|1><0| - |0><1|)
    pub fn sigma_y() -> ComplexMatrix {
        let i = Complex64::new(0.0, 1.0);
        ComplexMatrix::new(2, 2, vec![O, -i, i, O]).expect("static matrix")
    }

    /// sigma_z = |0><0| - |1><1|
    pub fn sigma_z() -> ComplexMatrix {
        ComplexMatrix::new(2, 2, vec![L, O, O, -L]).expect("static matrix")
    }
}

/// An N-qubit density operator: Hermitian, unit-trace, positive semidefinite
/// (up to numerical noise) matrix of dimension `2^N`.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityOperator {
    num_qubits: usize,
    matrix: ComplexMatrix,
}

impl DensityOperator {
    /// Fully validating constructor: checks dimension, Hermiticity, trace and
    /// (via an eigendecomposition) positive semidefiniteness.
    pub fn new(num_qubits: usize, matrix: ComplexMatrix) -> Result<Self> {
        let rho = Self::from_matrix_trusted(num_qubits, matrix)?;
        rho.validate_psd(&Tolerances::default())?;
        Ok(rho)
    }

    /// Constructor for operators that are positive semidefinite by
    /// construction (pure-state projectors, CPTP channel outputs). Checks the
    /// cheap invariants only; `validate_psd` remains available for audits.
    pub(crate) fn from_matrix_trusted(num_qubits: usize, matrix: ComplexMatrix) -> Result<Self> {
        if num_qubits == 0 || num_qubits > MAX_QUBITS {
            return Err(QlvError::SizeLimit(format!(
                "density operators support 1..={MAX_QUBITS} qubits, got {num_qubits}"
            )));
        }
        let dim = 1usize << num_qubits;
        if matrix.rows() != dim || matrix.cols() != dim {
            return Err(QlvError::ShapeMismatch(format!(
                "a {num_qubits}-qubit density operator must be {dim}x{dim}, got {}x{}",
                matrix.rows(),
                matrix.cols()
            )));
        }
        let tol = Tolerances::default();
        let defect = matrix.hermiticity_defect();
        if defect > tol.hermiticity {
            return Err(QlvError::Validation(format!(
                "density operator is not Hermitian (defect {defect:.3e})"
            )));
        }
        let trace = matrix.trace();
        if (trace.re - 1.0).abs() > tol.trace || trace.im.abs() > tol.trace {
            return Err(QlvError::Validation(format!(
                "density operator trace is {trace}, expected 1"
            )));
        }
        Ok(DensityOperator { num_qubits, matrix })
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn dim(&self) -> usize {
        1 << self.num_qubits
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.matrix
    }

    /// Tr(rho^2); equals 1 for pure states.
    pub fn purity(&self) -> f64 {
        trace_product(&self.matrix, &self.matrix)
            .expect("density operator matrices are square")
            .re
    }

    /// Re-checks all invariants, including positivity, against `tol`.
    pub fn validate(&self, tol: &Tolerances) -> Result<()> {
        let defect = self.matrix.hermiticity_defect();
        if defect > tol.hermiticity {
            return Err(QlvError::Validation(format!(
                "Hermiticity defect {defect:.3e} exceeds {:.3e}",
                tol.hermiticity
            )));
        }
        let trace = self.matrix.trace();
        if (trace.re - 1.0).abs() > tol.trace || trace.im.abs() > tol.trace {
            return Err(QlvError::Validation(format!(
                "trace {trace} deviates from 1 beyond {:.3e}",
                tol.trace
            )));
        }
        self.validate_psd(tol)
    }

    fn validate_psd(&self, tol: &Tolerances) -> Result<()> {
        let min = min_eigenvalue_with(&self.matrix, tol)?;
        if min < -tol.psd {
            return Err(QlvError::Validation(format!(
                "minimum eigenvalue {min:.3e} below -{:.3e}",
                tol.psd
            )));
        }
        Ok(())
    }
}
