//! Dense complex linear algebra for finite-dimensional quantum objects.
//!
//! Everything is stored row-major. A composite space declared with subsystem
//! dimensions `[d0, d1, ..., dn]` is flattened with `d_n` varying fastest, so the
//! basis of `H0 ⊗ H1` reads `|00⟩, |01⟩, ..., |10⟩, ...`.

use std::fmt;
use std::ops::{Add, Mul, Sub};

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{QcmError, Result};
use crate::validation::ValidationReport;

pub type C64 = Complex64;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);

/// Absolute tolerance used for PSD, completeness and trace checks.
pub const DEFAULT_TOL: f64 = 1e-9;

#[inline]
pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Splits a flat row-major index into per-mode digits.
pub fn unflatten(mut index: usize, dims: &[usize]) -> Vec<usize> {
    let mut digits = vec![0; dims.len()];
    for k in (0..dims.len()).rev() {
        digits[k] = index % dims[k];
        index /= dims[k];
    }
    digits
}

pub fn flatten(digits: &[usize], dims: &[usize]) -> usize {
    digits
        .iter()
        .zip(dims)
        .fold(0, |acc, (&digit, &dim)| acc * dim + digit)
}

/// Dense multi-index array of complex amplitudes.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexTensor {
    dims: Vec<usize>,
    data: Vec<C64>,
}

impl ComplexTensor {
    pub fn new(dims: Vec<usize>, data: Vec<C64>) -> Result<Self> {
        if dims.is_empty() {
            return Err(QcmError::InvalidTensor("mode list is empty".into()));
        }
        if let Some(mode) = dims.iter().position(|&d| d == 0) {
            return Err(QcmError::InvalidTensor(format!("mode {mode} has dimension 0")));
        }
        let expected: usize = dims.iter().product();
        if expected != data.len() {
            return Err(QcmError::DimensionMismatch {
                context: "tensor data length".into(),
                expected,
                found: data.len(),
            });
        }
        Ok(Self { dims, data })
    }

    pub fn zeros(dims: Vec<usize>) -> Result<Self> {
        let len = dims.iter().product();
        Self::new(dims, vec![ZERO; len])
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn get(&self, digits: &[usize]) -> C64 {
        self.data[flatten(digits, &self.dims)]
    }

    /// Reorders modes: mode `k` of the result is mode `perm[k]` of `self`.
    pub fn permute(&self, perm: &[usize]) -> Result<Self> {
        let n = self.dims.len();
        let mut seen = vec![false; n];
        if perm.len() != n || perm.iter().any(|&p| p >= n || std::mem::replace(&mut seen[p], true)) {
            return Err(QcmError::InvalidTensor(format!(
                "{perm:?} is not a permutation of {n} modes"
            )));
        }
        let new_dims: Vec<usize> = perm.iter().map(|&p| self.dims[p]).collect();
        let data = permute_data(&self.dims, &self.data, perm);
        Ok(Self { dims: new_dims, data })
    }
}

/// Row-major data of a tensor after reordering its modes; `perm` must be a permutation.
pub(crate) fn permute_data(dims: &[usize], data: &[C64], perm: &[usize]) -> Vec<C64> {
    let n = dims.len();
    if perm.iter().enumerate().all(|(k, &p)| k == p) {
        return data.to_vec();
    }
    let new_dims: Vec<usize> = perm.iter().map(|&p| dims[p]).collect();
    let old_strides = strides(dims);
    let moved: Vec<usize> = perm.iter().map(|&p| old_strides[p]).collect();
    let mut out = Vec::with_capacity(data.len());
    let mut digits = vec![0usize; n];
    let mut offset = 0usize;
    for _ in 0..data.len() {
        out.push(data[offset]);
        // odometer increment over the new mode order
        for k in (0..n).rev() {
            digits[k] += 1;
            offset += moved[k];
            if digits[k] < new_dims[k] {
                break;
            }
            offset -= moved[k] * new_dims[k];
            digits[k] = 0;
        }
    }
    out
}

pub(crate) fn strides(dims: &[usize]) -> Vec<usize> {
    let mut s = vec![1usize; dims.len()];
    for k in (0..dims.len().saturating_sub(1)).rev() {
        s[k] = s[k + 1] * dims[k + 1];
    }
    s
}

/// Tensor product; the result's modes are `a.dims ++ b.dims`.
pub fn tensor_product(a: &ComplexTensor, b: &ComplexTensor) -> ComplexTensor {
    let mut dims = a.dims.clone();
    dims.extend_from_slice(&b.dims);
    let mut data = Vec::with_capacity(a.data.len() * b.data.len());
    for &x in &a.data {
        data.extend(b.data.iter().map(|&y| x * y));
    }
    ComplexTensor { dims, data }
}

/// Row-major complex matrix; the two-mode special case of [`ComplexTensor`].
#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            write!(f, "  ")?;
            for col in 0..self.cols {
                let z = self[(r, col)];
                write!(f, "{:+.4}{:+.4}i ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(QcmError::InvalidTensor(format!("matrix shape {rows}x{cols}")));
        }
        if data.len() != rows * cols {
            return Err(QcmError::DimensionMismatch {
                context: format!("{rows}x{cols} matrix data"),
                expected: rows * cols,
                found: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![ZERO; rows * cols],
        }
    }

    pub fn identity(d: usize) -> Self {
        let mut m = Self::zeros(d, d);
        for i in 0..d {
            m[(i, i)] = ONE;
        }
        m
    }

    pub fn scalar(z: C64) -> Self {
        Self {
            rows: 1,
            cols: 1,
            data: vec![z],
        }
    }

    pub fn from_rows(rows: &[Vec<C64>]) -> Result<Self> {
        let r = rows.len();
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|row| row.len() != cols) {
            return Err(QcmError::DimensionMismatch {
                context: format!("matrix row {bad}"),
                expected: cols,
                found: rows[bad].len(),
            });
        }
        Self::new(r, cols, rows.concat())
    }

    pub fn from_real_rows(rows: &[&[f64]]) -> Result<Self> {
        let rows: Vec<Vec<C64>> = rows
            .iter()
            .map(|row| row.iter().map(|&x| c(x, 0.0)).collect())
            .collect();
        Self::from_rows(&rows)
    }

    pub fn diagonal(entries: &[C64]) -> Self {
        let mut m = Self::zeros(entries.len(), entries.len());
        for (i, &z) in entries.iter().enumerate() {
            m[(i, i)] = z;
        }
        m
    }

    /// Matrix unit `|i⟩⟨j|` in dimension `d`.
    pub fn unit(d: usize, i: usize, j: usize) -> Self {
        let mut m = Self::zeros(d, d);
        m[(i, j)] = ONE;
        m
    }

    /// `|psi⟩⟨phi|`.
    pub fn outer(psi: &[C64], phi: &[C64]) -> Self {
        let mut m = Self::zeros(psi.len(), phi.len());
        for (i, &a) in psi.iter().enumerate() {
            for (j, &b) in phi.iter().enumerate() {
                m[(i, j)] = a * b.conj();
            }
        }
        m
    }

    /// Column vector (d x 1).
    pub fn column(v: &[C64]) -> Self {
        Self {
            rows: v.len(),
            cols: 1,
            data: v.to_vec(),
        }
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

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn row_vecs(&self) -> Vec<Vec<C64>> {
        self.data.chunks(self.cols).map(<[C64]>::to_vec).collect()
    }

    pub fn adjoint(&self) -> Self {
        let mut m = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for col in 0..self.cols {
                m[(col, r)] = self[(r, col)].conj();
            }
        }
        m
    }

    pub fn trace(&self) -> C64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn scale(&self, z: C64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| x * z).collect(),
        }
    }

    /// Kronecker product `self ⊗ other` in the row-major composite basis.
    pub fn kron(&self, other: &Matrix) -> Matrix {
        let rows = self.rows * other.rows;
        let cols = self.cols * other.cols;
        let mut m = Matrix::zeros(rows, cols);
        for r1 in 0..self.rows {
            for c1 in 0..self.cols {
                let a = self[(r1, c1)];
                if a == ZERO {
                    continue;
                }
                for r2 in 0..other.rows {
                    for c2 in 0..other.cols {
                        m[(r1 * other.rows + r2, c1 * other.cols + c2)] = a * other[(r2, c2)];
                    }
                }
            }
        }
        m
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(QcmError::DimensionMismatch {
                context: "matrix product inner dimension".into(),
                expected: self.cols,
                found: other.rows,
            });
        }
        let mut m = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == ZERO {
                    continue;
                }
                let row = &other.data[k * other.cols..(k + 1) * other.cols];
                let out = &mut m.data[i * other.cols..(i + 1) * other.cols];
                for (o, &b) in out.iter_mut().zip(row) {
                    *o += a * b;
                }
            }
        }
        Ok(m)
    }

    /// Largest entrywise modulus of `self - other`; infinite on shape mismatch.
    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        if self.rows != other.rows || self.cols != other.cols {
            return f64::INFINITY;
        }
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Deviation from Hermiticity, `max |A - A†|`.
    pub fn hermiticity_defect(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        self.max_abs_diff(&self.adjoint())
    }

    /// Eigen-decomposition of the Hermitian part `(A + A†)/2`.
    ///
    /// Returns ascending eigenvalues and the matching orthonormal eigenvectors as columns.
    pub fn hermitian_eigen(&self) -> Result<(Vec<f64>, Matrix)> {
        if !self.is_square() {
            return Err(QcmError::DimensionMismatch {
                context: "eigen-decomposition of a non-square matrix".into(),
                expected: self.rows,
                found: self.cols,
            });
        }
        let n = self.rows;
        let herm = DMatrix::from_fn(n, n, |i, j| (self[(i, j)] + self[(j, i)].conj()) * 0.5);
        let eig = herm.symmetric_eigen();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
        let mut vectors = Matrix::zeros(n, n);
        for (col, &k) in order.iter().enumerate() {
            for row in 0..n {
                vectors[(row, col)] = eig.eigenvectors[(row, k)];
            }
        }
        Ok((values, vectors))
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        Ok(self.hermitian_eigen()?.0.first().copied().unwrap_or(0.0))
    }

    pub fn to_tensor(&self) -> ComplexTensor {
        ComplexTensor {
            dims: vec![self.rows, self.cols],
            data: self.data.clone(),
        }
    }

    pub fn from_tensor(t: &ComplexTensor) -> Result<Self> {
        match t.dims() {
            [r, col] => Self::new(*r, *col, t.data().to_vec()),
            dims => Err(QcmError::InvalidTensor(format!(
                "a matrix needs exactly two modes, got {}",
                dims.len()
            ))),
        }
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = C64;
    fn index(&self, (r, col): (usize, usize)) -> &C64 {
        &self.data[r * self.cols + col]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (r, col): (usize, usize)) -> &mut C64 {
        &mut self.data[r * self.cols + col]
    }
}

impl Add for &Matrix {
    type Output = Matrix;
    fn add(self, rhs: &Matrix) -> Matrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols), "shape mismatch in add");
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &Matrix {
    type Output = Matrix;
    fn sub(self, rhs: &Matrix) -> Matrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols), "shape mismatch in sub");
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }
}

impl Mul for &Matrix {
    type Output = Matrix;
    fn mul(self, rhs: &Matrix) -> Matrix {
        self.matmul(rhs).expect("shape mismatch in mul")
    }
}

/// A linear map given by Kraus operators `ρ ↦ Σ K ρ K†`.
///
/// Construction only checks shapes, so trace-decreasing CP maps are representable
/// too; [`validate_cptp`] decides whether the map is a channel.
#[derive(Debug, Clone, PartialEq)]
pub struct KrausChannel {
    in_dim: usize,
    out_dim: usize,
    kraus: Vec<Matrix>,
}

impl KrausChannel {
    pub fn new(in_dim: usize, out_dim: usize, kraus: Vec<Matrix>) -> Result<Self> {
        if kraus.is_empty() {
            return Err(QcmError::InvalidTensor("Kraus list is empty".into()));
        }
        for (a, k) in kraus.iter().enumerate() {
            if k.rows() != out_dim {
                return Err(QcmError::DimensionMismatch {
                    context: format!("Kraus operator {a} rows"),
                    expected: out_dim,
                    found: k.rows(),
                });
            }
            if k.cols() != in_dim {
                return Err(QcmError::DimensionMismatch {
                    context: format!("Kraus operator {a} columns"),
                    expected: in_dim,
                    found: k.cols(),
                });
            }
        }
        Ok(Self {
            in_dim,
            out_dim,
            kraus,
        })
    }

    pub fn identity(d: usize) -> Self {
        Self {
            in_dim: d,
            out_dim: d,
            kraus: vec![Matrix::identity(d)],
        }
    }

    pub fn unitary(u: Matrix) -> Result<Self> {
        Self::new(u.cols(), u.rows(), vec![u])
    }

    /// Preparation of `rho` from the trivial input space.
    pub fn from_state(rho: &Matrix) -> Result<Self> {
        let (values, vectors) = rho.hermitian_eigen()?;
        let d = rho.rows();
        let mut kraus = Vec::new();
        for (k, &lambda) in values.iter().enumerate() {
            if lambda < -DEFAULT_TOL {
                return Err(QcmError::Numeric(format!(
                    "state has negative eigenvalue {lambda:e}"
                )));
            }
            if lambda <= 0.0 {
                continue;
            }
            let s = lambda.sqrt();
            let col: Vec<C64> = (0..d).map(|r| vectors[(r, k)] * s).collect();
            kraus.push(Matrix::column(&col));
        }
        if kraus.is_empty() {
            kraus.push(Matrix::zeros(d, 1));
        }
        Self::new(1, d, kraus)
    }

    /// Converts a Choi matrix `J = Σ |i⟩⟨j| ⊗ E(|i⟩⟨j|)` (input factor first).
    pub fn from_choi(choi: &Matrix, in_dim: usize, out_dim: usize, tol: f64) -> Result<Self> {
        let n = in_dim * out_dim;
        if choi.rows() != n || choi.cols() != n {
            return Err(QcmError::DimensionMismatch {
                context: "Choi matrix side".into(),
                expected: n,
                found: choi.rows().max(choi.cols()),
            });
        }
        let (values, vectors) = choi.hermitian_eigen()?;
        let mut kraus = Vec::new();
        for (k, &lambda) in values.iter().enumerate() {
            if lambda < -tol {
                return Err(QcmError::Numeric(format!(
                    "Choi matrix has negative eigenvalue {lambda:e}; map is not completely positive"
                )));
            }
            if lambda <= tol {
                continue;
            }
            let s = lambda.sqrt();
            let mut op = Matrix::zeros(out_dim, in_dim);
            for i in 0..in_dim {
                for o in 0..out_dim {
                    op[(o, i)] = vectors[(i * out_dim + o, k)] * s;
                }
            }
            kraus.push(op);
        }
        if kraus.is_empty() {
            kraus.push(Matrix::zeros(out_dim, in_dim));
        }
        Self::new(in_dim, out_dim, kraus)
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn kraus(&self) -> &[Matrix] {
        &self.kraus
    }

    /// `Σ K† K`; the identity for trace-preserving maps.
    pub fn completeness(&self) -> Matrix {
        let mut sum = Matrix::zeros(self.in_dim, self.in_dim);
        for k in &self.kraus {
            sum = &sum + &(&k.adjoint() * k);
        }
        sum
    }

    /// `self ∘ first`.
    pub fn after(&self, first: &KrausChannel) -> Result<KrausChannel> {
        if first.out_dim != self.in_dim {
            return Err(QcmError::DimensionMismatch {
                context: "channel composition".into(),
                expected: self.in_dim,
                found: first.out_dim,
            });
        }
        let mut kraus = Vec::with_capacity(self.kraus.len() * first.kraus.len());
        for a in &self.kraus {
            for b in &first.kraus {
                kraus.push(a * b);
            }
        }
        KrausChannel::new(first.in_dim, self.out_dim, kraus)
    }

    /// Parallel composition `self ⊗ other`.
    pub fn tensor(&self, other: &KrausChannel) -> KrausChannel {
        let mut kraus = Vec::with_capacity(self.kraus.len() * other.kraus.len());
        for a in &self.kraus {
            for b in &other.kraus {
                kraus.push(a.kron(b));
            }
        }
        KrausChannel {
            in_dim: self.in_dim * other.in_dim,
            out_dim: self.out_dim * other.out_dim,
            kraus,
        }
    }
}

/// Measurement with one effect per outcome label.
#[derive(Debug, Clone, PartialEq)]
pub struct Povm {
    dim: usize,
    elements: Vec<Matrix>,
}

impl Povm {
    pub fn new(dim: usize, elements: Vec<Matrix>) -> Result<Self> {
        if elements.is_empty() {
            return Err(QcmError::InvalidTensor("POVM has no elements".into()));
        }
        for (x, e) in elements.iter().enumerate() {
            if e.rows() != dim || e.cols() != dim {
                return Err(QcmError::DimensionMismatch {
                    context: format!("POVM element {x}"),
                    expected: dim,
                    found: if e.rows() != dim { e.rows() } else { e.cols() },
                });
            }
        }
        Ok(Self { dim, elements })
    }

    /// Projective measurement in the computational basis.
    pub fn computational(dim: usize) -> Self {
        Self {
            dim,
            elements: (0..dim).map(|i| Matrix::unit(dim, i, i)).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn elements(&self) -> &[Matrix] {
        &self.elements
    }
}

fn check_subsystems(rows: usize, cols: usize, subsystem_dims: &[usize]) -> Result<()> {
    if let Some(mode) = subsystem_dims.iter().position(|&d| d == 0) {
        return Err(QcmError::InvalidTensor(format!("subsystem {mode} has dimension 0")));
    }
    let total: usize = subsystem_dims.iter().product();
    if rows != total {
        return Err(QcmError::DimensionMismatch {
            context: "subsystem dimensions vs matrix rows (mode 0)".into(),
            expected: total,
            found: rows,
        });
    }
    if cols != total {
        return Err(QcmError::DimensionMismatch {
            context: "subsystem dimensions vs matrix columns (mode 1)".into(),
            expected: total,
            found: cols,
        });
    }
    Ok(())
}

fn check_indices(indices: &[usize], n: usize, what: &str) -> Result<()> {
    for &k in indices {
        if k >= n {
            return Err(QcmError::DimensionMismatch {
                context: format!("{what} subsystem index {k}"),
                expected: n,
                found: k,
            });
        }
    }
    Ok(())
}

/// Traces out the subsystems listed in `traced`; kept subsystems keep their relative order.
pub fn partial_trace(m: &Matrix, subsystem_dims: &[usize], traced: &[usize]) -> Result<Matrix> {
    check_subsystems(m.rows(), m.cols(), subsystem_dims)?;
    check_indices(traced, subsystem_dims.len(), "traced")?;
    let n = subsystem_dims.len();
    let is_traced: Vec<bool> = (0..n).map(|k| traced.contains(&k)).collect();
    let kept_dims: Vec<usize> = (0..n).filter(|&k| !is_traced[k]).map(|k| subsystem_dims[k]).collect();
    let traced_dims: Vec<usize> = (0..n).filter(|&k| is_traced[k]).map(|k| subsystem_dims[k]).collect();
    let kept_total: usize = kept_dims.iter().product();
    let traced_total: usize = traced_dims.iter().product();
    let sys_strides = strides(subsystem_dims);
    let kept_strides: Vec<usize> = (0..n).filter(|&k| !is_traced[k]).map(|k| sys_strides[k]).collect();
    let traced_strides: Vec<usize> = (0..n).filter(|&k| is_traced[k]).map(|k| sys_strides[k]).collect();
    let offset = |flat: usize, dims: &[usize], st: &[usize]| -> usize {
        unflatten(flat, dims).iter().zip(st).map(|(d, s)| d * s).sum()
    };
    let kept_offsets: Vec<usize> = (0..kept_total).map(|k| offset(k, &kept_dims, &kept_strides)).collect();
    let traced_offsets: Vec<usize> = (0..traced_total).map(|t| offset(t, &traced_dims, &traced_strides)).collect();

    let mut out = Matrix::zeros(kept_total, kept_total);
    for (r, &ro) in kept_offsets.iter().enumerate() {
        for (col, &co) in kept_offsets.iter().enumerate() {
            out[(r, col)] = traced_offsets.iter().map(|&t| m[(ro + t, co + t)]).sum();
        }
    }
    Ok(out)
}

/// Removes coherences between computational basis states of each target subsystem.
pub fn decohere(m: &Matrix, subsystem_dims: &[usize], targets: &[usize]) -> Result<Matrix> {
    check_subsystems(m.rows(), m.cols(), subsystem_dims)?;
    check_indices(targets, subsystem_dims.len(), "decohered")?;
    let mut out = m.clone();
    if targets.is_empty() {
        return Ok(out);
    }
    let digits: Vec<Vec<usize>> = (0..m.rows()).map(|i| unflatten(i, subsystem_dims)).collect();
    for r in 0..m.rows() {
        for col in 0..m.cols() {
            if targets.iter().any(|&t| digits[r][t] != digits[col][t]) {
                out[(r, col)] = ZERO;
            }
        }
    }
    Ok(out)
}

/// `Σ K ρ K†`.
pub fn apply_channel(ch: &KrausChannel, rho: &Matrix) -> Result<Matrix> {
    if rho.rows() != ch.in_dim() || rho.cols() != ch.in_dim() {
        return Err(QcmError::DimensionMismatch {
            context: "channel input".into(),
            expected: ch.in_dim(),
            found: if rho.rows() != ch.in_dim() { rho.rows() } else { rho.cols() },
        });
    }
    let mut out = Matrix::zeros(ch.out_dim(), ch.out_dim());
    for k in ch.kraus() {
        out = &out + &(&(k * rho) * &k.adjoint());
    }
    Ok(out)
}

/// Checks trace preservation `Σ K† K = 𝟙`.
pub fn validate_cptp(ch: &KrausChannel, tol: f64) -> ValidationReport {
    let mut report = ValidationReport::new();
    let deviation = ch.completeness().max_abs_diff(&Matrix::identity(ch.in_dim()));
    report.record_deviation(deviation);
    if !(deviation <= tol) {
        report.fail(
            "",
            format!("Kraus completeness Σ K†K deviates from identity by {deviation:e}"),
        );
    }
    report
}

/// Checks Hermiticity, positivity (smallest eigenvalue ≥ −tol) and completeness.
pub fn validate_povm(p: &Povm, tol: f64) -> ValidationReport {
    let mut report = ValidationReport::new();
    let mut sum = Matrix::zeros(p.dim(), p.dim());
    for (x, e) in p.elements().iter().enumerate() {
        let herm = e.hermiticity_defect();
        report.record_deviation(herm);
        if !(herm <= tol) {
            report.fail(format!("element {x}"), format!("not Hermitian (defect {herm:e})"));
        }
        match e.min_eigenvalue() {
            Ok(lambda) => {
                report.record_deviation((-lambda).max(0.0));
                if !(lambda >= -tol) {
                    report.fail(
                        format!("element {x}"),
                        format!("not positive semidefinite (smallest eigenvalue {lambda:e})"),
                    );
                }
            }
            Err(e) => report.fail(format!("element {x}"), e.to_string()),
        }
        sum = &sum + e;
    }
    let deviation = sum.max_abs_diff(&Matrix::identity(p.dim()));
    report.record_deviation(deviation);
    if !(deviation <= tol) {
        report.fail("", format!("elements sum to identity only within {deviation:e}"));
    }
    report
}

/// Checks that `rho` is a density matrix: Hermitian, PSD, unit trace.
pub fn validate_state(rho: &Matrix, tol: f64) -> ValidationReport {
    let mut report = ValidationReport::new();
    if !rho.is_square() {
        report.fail("", format!("state is {}x{}, not square", rho.rows(), rho.cols()));
        return report;
    }
    let herm = rho.hermiticity_defect();
    report.record_deviation(herm);
    if !(herm <= tol) {
        report.fail("", format!("not Hermitian (defect {herm:e})"));
    }
    match rho.min_eigenvalue() {
        Ok(lambda) if !(lambda >= -tol) => {
            report.record_deviation(-lambda);
            report.fail("", format!("not positive semidefinite (smallest eigenvalue {lambda:e})"));
        }
        Ok(_) => {}
        Err(e) => report.fail("", e.to_string()),
    }
    let trace_dev = (rho.trace() - ONE).norm();
    report.record_deviation(trace_dev);
    if !(trace_dev <= tol) {
        report.fail("", format!("trace deviates from 1 by {trace_dev:e}"));
    }
    report
}

/// Reorders the tensor factors of a square operator: factor `k` of the result is factor `perm[k]` of `m`.
pub fn permute_subsystems(m: &Matrix, subsystem_dims: &[usize], perm: &[usize]) -> Result<Matrix> {
    check_subsystems(m.rows(), m.cols(), subsystem_dims)?;
    let n = subsystem_dims.len();
    let mut dims = subsystem_dims.to_vec();
    dims.extend_from_slice(subsystem_dims);
    let mut full_perm: Vec<usize> = perm.to_vec();
    full_perm.extend(perm.iter().map(|&p| p + n));
    let t = ComplexTensor::new(dims, m.data().to_vec())?.permute(&full_perm)?;
    Matrix::new(m.rows(), m.cols(), t.data)
}
