//! Complex skew-symmetric matrices and Pfaffians.
//!
//! Covariance matrices of Gaussian operators are skew-symmetric, and Z-string
//! traces of Gaussian operators are Pfaffians of their principal submatrices.
//! The Pfaffian is computed by Parlett-Reid elimination with partial pivoting,
//! which reduces the matrix to tridiagonal skew form in `O(n³)`.

use num_complex::Complex64;

use crate::error::{invalid, Result};

/// Absolute tolerance on `A + Aᵀ` accepted at construction.
pub const SKEW_TOLERANCE: f64 = 1e-12;

/// Pivot magnitude below which a column counts as structurally zero.
pub const ZERO_PIVOT: f64 = 1e-14;

/// Even-dimensional complex skew-symmetric matrix, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SkewMatrix {
    dim: usize,
    data: Vec<Complex64>,
}

impl SkewMatrix {
    /// Validates and symmetrizes `entries` (row-major, `dim × dim`).
    ///
    /// The stored matrix is `(A − Aᵀ)/2`, so drift within [`SKEW_TOLERANCE`]
    /// is absorbed.
    pub fn new(dim: usize, entries: Vec<Complex64>) -> Result<Self> {
        if dim == 0 || !dim.is_multiple_of(2) {
            return Err(invalid(format!(
                "skew matrix dimension must be even and positive, got {dim}"
            )));
        }
        if entries.len() != dim * dim {
            return Err(invalid(format!(
                "expected {} entries for a {dim}x{dim} matrix, got {}",
                dim * dim,
                entries.len()
            )));
        }
        for p in 0..dim {
            for q in p..dim {
                let sum = entries[p * dim + q] + entries[q * dim + p];
                if !(sum.norm() <= SKEW_TOLERANCE) {
                    return Err(invalid(format!(
                        "matrix is not skew-symmetric at ({p}, {q}): |A+Aᵀ| = {:e}",
                        sum.norm()
                    )));
                }
            }
        }
        let mut data = vec![Complex64::new(0.0, 0.0); dim * dim];
        for p in 0..dim {
            for q in (p + 1)..dim {
                let v = (entries[p * dim + q] - entries[q * dim + p]) * 0.5;
                data[p * dim + q] = v;
                data[q * dim + p] = -v;
            }
        }
        Ok(Self { dim, data })
    }

    /// Real-valued variant of [`SkewMatrix::new`].
    pub fn from_real(dim: usize, entries: &[f64]) -> Result<Self> {
        Self::new(dim, entries.iter().map(|&x| Complex64::new(x, 0.0)).collect())
    }

    /// Builds a matrix from its strict upper triangle, listed row by row.
    pub fn from_upper(dim: usize, upper: &[Complex64]) -> Result<Self> {
        if dim == 0 || !dim.is_multiple_of(2) {
            return Err(invalid(format!(
                "skew matrix dimension must be even and positive, got {dim}"
            )));
        }
        if upper.len() != dim * (dim - 1) / 2 {
            return Err(invalid(format!(
                "expected {} upper-triangle entries, got {}",
                dim * (dim - 1) / 2,
                upper.len()
            )));
        }
        let mut m = Self::zeros(dim);
        let mut it = upper.iter();
        for p in 0..dim {
            for q in (p + 1)..dim {
                m.set(p, q, *it.next().unwrap());
            }
        }
        Ok(m)
    }

    /// The zero matrix. Panics if `dim` is odd or zero.
    pub fn zeros(dim: usize) -> Self {
        assert!(
            dim > 0 && dim.is_multiple_of(2),
            "skew matrix dimension must be even and positive"
        );
        Self {
            dim,
            data: vec![Complex64::new(0.0, 0.0); dim * dim],
        }
    }

    pub(crate) fn from_raw_unchecked(dim: usize, data: Vec<Complex64>) -> Self {
        debug_assert_eq!(data.len(), dim * dim);
        Self { dim, data }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, p: usize, q: usize) -> Complex64 {
        self.data[p * self.dim + q]
    }

    /// Sets `A[p][q] = v` and `A[q][p] = −v`. Diagonal writes are ignored.
    pub fn set(&mut self, p: usize, q: usize, v: Complex64) {
        if p == q {
            return;
        }
        self.data[p * self.dim + q] = v;
        self.data[q * self.dim + p] = -v;
    }

    /// Row-major entries.
    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn conj(&self) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|z| z.conj()).collect(),
        }
    }

    /// Largest imaginary part in magnitude.
    pub fn max_imag(&self) -> f64 {
        self.data.iter().fold(0.0, |m, z| m.max(z.im.abs()))
    }

    pub fn pfaffian(&self) -> Complex64 {
        let mut work = self.data.clone();
        pfaffian_in_place(&mut work, self.dim)
    }

    /// Principal submatrix on strictly increasing `rows`.
    pub fn principal_submatrix(&self, rows: &[usize]) -> Result<SkewMatrix> {
        if rows.is_empty() || !rows.len().is_multiple_of(2) {
            return Err(invalid(format!(
                "principal submatrix needs an even, nonzero number of rows, got {}",
                rows.len()
            )));
        }
        for w in rows.windows(2) {
            if w[1] <= w[0] {
                return Err(invalid(format!("row indices must be strictly increasing: {rows:?}")));
            }
        }
        if let Some(&last) = rows.last() {
            if last >= self.dim {
                return Err(invalid(format!(
                    "row index {last} out of range for dimension {}",
                    self.dim
                )));
            }
        }
        let k = rows.len();
        let mut data = Vec::with_capacity(k * k);
        for &r in rows {
            for &c in rows {
                data.push(self.data[r * self.dim + c]);
            }
        }
        Ok(Self { dim: k, data })
    }

    /// Direct sum `self ⊕ other`.
    pub fn direct_sum(&self, other: &SkewMatrix) -> SkewMatrix {
        let dim = self.dim + other.dim;
        let mut m = Self::zeros(dim);
        for p in 0..self.dim {
            for q in 0..self.dim {
                m.data[p * dim + q] = self.get(p, q);
            }
        }
        for p in 0..other.dim {
            for q in 0..other.dim {
                m.data[(p + self.dim) * dim + q + self.dim] = other.get(p, q);
            }
        }
        m
    }
}

/// Pfaffian of a validated skew-symmetric matrix.
pub fn pfaffian(a: &SkewMatrix) -> Complex64 {
    a.pfaffian()
}

/// Parlett-Reid Pfaffian on a row-major `n × n` buffer, destroying it.
///
/// The buffer must hold a skew-symmetric matrix with `n` even; `n = 0` gives 1.
pub(crate) fn pfaffian_in_place(a: &mut [Complex64], n: usize) -> Complex64 {
    debug_assert_eq!(a.len(), n * n);
    debug_assert!(n.is_multiple_of(2));
    let mut pf = Complex64::new(1.0, 0.0);
    let mut k = 0;
    while k + 1 < n {
        // pivot: largest |A[i][k]| for i > k
        let mut kp = k + 1;
        let mut best = a[(k + 1) * n + k].norm();
        for i in (k + 2)..n {
            let v = a[i * n + k].norm();
            if v > best {
                best = v;
                kp = i;
            }
        }
        if best < ZERO_PIVOT {
            return Complex64::new(0.0, 0.0);
        }
        if kp != k + 1 {
            swap_row_col(a, n, k + 1, kp);
            pf = -pf;
        }
        let pivot = a[k * n + k + 1];
        pf *= pivot;
        if k + 2 < n {
            // A[k+2:, k+2:] += τ ⊗ A[k+2:, k+1] − A[k+2:, k+1] ⊗ τ,  τ = A[k, k+2:] / A[k, k+1]
            let inv = pivot.inv();
            for i in (k + 2)..n {
                let tau_i = a[k * n + i] * inv;
                let col_i = a[i * n + k + 1];
                for j in (k + 2)..n {
                    let tau_j = a[k * n + j] * inv;
                    let col_j = a[j * n + k + 1];
                    a[i * n + j] += tau_i * col_j - col_i * tau_j;
                }
            }
        }
        k += 2;
    }
    pf
}

fn swap_row_col(a: &mut [Complex64], n: usize, r: usize, s: usize) {
    for j in 0..n {
        a.swap(r * n + j, s * n + j);
    }
    for i in 0..n {
        a.swap(i * n + r, i * n + s);
    }
}

/// Largest dimension differentiated through the subset recursion; beyond it
/// the table of `2^n` partial Pfaffians stops paying for itself.
const SUBSET_GRADIENT_MAX: usize = 12;

/// Gradient of the Pfaffian.
///
/// Returns the antisymmetric `n × n` array `D` with `D[p][q] = ∂pf/∂A[p][q]`
/// for `p < q` (the pair `A[p][q] = −A[q][p]` moving together) and
/// `D[q][p] = −D[p][q]`. Stays exact when `pf(A) = 0`.
pub(crate) fn pfaffian_gradient(a: &[Complex64], n: usize) -> Vec<Complex64> {
    if n <= SUBSET_GRADIENT_MAX {
        subset_gradient(a, n)
    } else {
        minor_gradient(a, n)
    }
}

/// Reverse-mode sweep over `pf(S) = Σ_j ± A[i][j] pf(S∖{i,j})`, `i = min S`.
fn subset_gradient(a: &[Complex64], n: usize) -> Vec<Complex64> {
    let zero = Complex64::new(0.0, 0.0);
    let mut grad = vec![zero; n * n];
    if n == 0 {
        return grad;
    }
    let full = (1usize << n) - 1;
    let mut pf = vec![zero; full + 1];
    pf[0] = Complex64::new(1.0, 0.0);
    for mask in 1..=full {
        if mask.count_ones() % 2 == 1 {
            continue;
        }
        let i = mask.trailing_zeros() as usize;
        let mut rest = mask & !(1 << i);
        let mut sign = 1.0;
        let mut s = zero;
        while rest != 0 {
            let j = rest.trailing_zeros() as usize;
            rest &= rest - 1;
            s += a[i * n + j] * pf[mask & !(1 << i) & !(1 << j)] * sign;
            sign = -sign;
        }
        pf[mask] = s;
    }
    let mut adj = vec![zero; full + 1];
    adj[full] = Complex64::new(1.0, 0.0);
    for mask in (1..=full).rev() {
        let g = adj[mask];
        if g == zero || mask.count_ones() % 2 == 1 {
            continue;
        }
        let i = mask.trailing_zeros() as usize;
        let mut rest = mask & !(1 << i);
        let mut sign = 1.0;
        while rest != 0 {
            let j = rest.trailing_zeros() as usize;
            rest &= rest - 1;
            let sub = mask & !(1 << i) & !(1 << j);
            grad[i * n + j] += g * pf[sub] * sign;
            adj[sub] += g * a[i * n + j] * sign;
            sign = -sign;
        }
    }
    for p in 0..n {
        for q in (p + 1)..n {
            grad[q * n + p] = -grad[p * n + q];
        }
    }
    grad
}

/// One Pfaffian per `(n−2)`-minor.
fn minor_gradient(a: &[Complex64], n: usize) -> Vec<Complex64> {
    let mut grad = vec![Complex64::new(0.0, 0.0); n * n];
    if n == 2 {
        grad[1] = Complex64::new(1.0, 0.0);
        grad[2] = Complex64::new(-1.0, 0.0);
        return grad;
    }
    let m = n - 2;
    let mut minor = vec![Complex64::new(0.0, 0.0); m * m];
    let mut keep = Vec::with_capacity(m);
    for p in 0..n {
        for q in (p + 1)..n {
            keep.clear();
            keep.extend((0..n).filter(|&i| i != p && i != q));
            for (ii, &i) in keep.iter().enumerate() {
                for (jj, &j) in keep.iter().enumerate() {
                    minor[ii * m + jj] = a[i * n + j];
                }
            }
            let sign = if (p + q + 1) % 2 == 0 { 1.0 } else { -1.0 };
            let d = pfaffian_in_place(&mut minor, m) * sign;
            grad[p * n + q] = d;
            grad[q * n + p] = -d;
        }
    }
    grad
}
