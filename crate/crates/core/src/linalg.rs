//! Dense symmetric linear algebra for small kernels.
//!
//! Everything here targets matrices of order at most 16: cyclic Jacobi
//! eigenvalues, LU determinants of principal submatrices, Gauss-Jordan
//! inverses, and the elementary-symmetric-polynomial recursion that
//! normalizes size-conditioned DPPs.

use thiserror::Error;

/// Largest matrix order the module accepts.
pub const MAX_ORDER: usize = 16;

/// Jacobi stops once the off-diagonal Frobenius norm drops below this
/// fraction of the full Frobenius norm.
const JACOBI_REL_TOL: f64 = 1e-10;
const JACOBI_MAX_SWEEPS: usize = 100;

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("matrix order {0} outside supported range 1..={MAX_ORDER}")]
    OrderOutOfRange(usize),
    #[error("expected {expected} entries for order {order}, got {got}")]
    BadEntryCount { order: usize, expected: usize, got: usize },
    #[error("entries not symmetric at ({i},{j}): {a} vs {b}")]
    NotSymmetric { i: usize, j: usize, a: f64, b: f64 },
    #[error("jacobi did not converge in {JACOBI_MAX_SWEEPS} sweeps; off-diagonal residual {residual:.3e}")]
    NoConvergence { residual: f64 },
    #[error("index list must be strictly increasing within 0..{order}")]
    BadIndexList { order: usize },
    #[error("esp order k={k} exceeds eigenvalue count m={m}")]
    EspOutOfRange { k: usize, m: usize },
    #[error("singular matrix: pivot {pivot:.3e} in column {col}")]
    SingularMatrix { col: usize, pivot: f64 },
}

/// Symmetric matrix of order <= 16, stored dense row-major.
///
/// Symmetry is exact by construction: [`SmallSymMatrix::from_entries`]
/// rejects any mismatch and the other constructors only ever write
/// mirrored pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct SmallSymMatrix {
    order: usize,
    entries: Vec<f64>,
}

impl SmallSymMatrix {
    pub fn from_entries(order: usize, entries: Vec<f64>) -> Result<Self, LinalgError> {
        check_order(order)?;
        if entries.len() != order * order {
            return Err(LinalgError::BadEntryCount {
                order,
                expected: order * order,
                got: entries.len(),
            });
        }
        for i in 0..order {
            for j in (i + 1)..order {
                let a = entries[i * order + j];
                let b = entries[j * order + i];
                if a != b {
                    return Err(LinalgError::NotSymmetric { i, j, a, b });
                }
            }
        }
        Ok(Self { order, entries })
    }

    /// Build from a generator evaluated on the upper triangle and
    /// mirrored, so symmetry holds bit-for-bit.
    pub fn from_fn<F: FnMut(usize, usize) -> f64>(
        order: usize,
        mut f: F,
    ) -> Result<Self, LinalgError> {
        check_order(order)?;
        let mut entries = vec![0.0; order * order];
        for i in 0..order {
            for j in i..order {
                let v = f(i, j);
                entries[i * order + j] = v;
                entries[j * order + i] = v;
            }
        }
        Ok(Self { order, entries })
    }

    pub fn diagonal(diag: &[f64]) -> Result<Self, LinalgError> {
        let order = diag.len();
        check_order(order)?;
        let mut entries = vec![0.0; order * order];
        for (i, &d) in diag.iter().enumerate() {
            entries[i * order + i] = d;
        }
        Ok(Self { order, entries })
    }

    pub fn identity(order: usize) -> Result<Self, LinalgError> {
        Self::diagonal(&vec![1.0; order])
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.order + j]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn trace(&self) -> f64 {
        (0..self.order).map(|i| self.get(i, i)).sum()
    }

    pub fn add_to_diagonal(&mut self, eps: f64) {
        for i in 0..self.order {
            self.entries[i * self.order + i] += eps;
        }
    }

    pub fn principal_submatrix(&self, idx: &[usize]) -> Result<SmallSymMatrix, LinalgError> {
        check_index_list(idx, self.order)?;
        if idx.is_empty() {
            return Err(LinalgError::OrderOutOfRange(0));
        }
        let m = idx.len();
        let mut entries = vec![0.0; m * m];
        for (a, &i) in idx.iter().enumerate() {
            for (b, &j) in idx.iter().enumerate() {
                entries[a * m + b] = self.get(i, j);
            }
        }
        Ok(SmallSymMatrix { order: m, entries })
    }

    fn frobenius(&self) -> f64 {
        self.entries.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

fn check_order(order: usize) -> Result<(), LinalgError> {
    if order == 0 || order > MAX_ORDER {
        return Err(LinalgError::OrderOutOfRange(order));
    }
    Ok(())
}

fn check_index_list(idx: &[usize], order: usize) -> Result<(), LinalgError> {
    for (pos, &i) in idx.iter().enumerate() {
        if i >= order || (pos > 0 && idx[pos - 1] >= i) {
            return Err(LinalgError::BadIndexList { order });
        }
    }
    Ok(())
}

/// Eigenvalues of a symmetric matrix via cyclic Jacobi rotations,
/// returned in descending order.
pub fn eigenvalues_sym(m: &SmallSymMatrix) -> Result<Vec<f64>, LinalgError> {
    let n = m.order;
    let norm = m.frobenius();
    let mut a = m.entries.clone();
    if n == 1 || norm == 0.0 {
        let mut eigs: Vec<f64> = (0..n).map(|i| a[i * n + i]).collect();
        eigs.sort_by(|x, y| y.partial_cmp(x).unwrap());
        return Ok(eigs);
    }

    let mut converged = false;
    for _sweep in 0..JACOBI_MAX_SWEEPS {
        if off_diagonal_norm(&a, n) < JACOBI_REL_TOL * norm {
            converged = true;
            break;
        }
        for p in 0..n - 1 {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                // Stable tangent of the rotation angle.
                let t = if theta >= 0.0 {
                    1.0 / (theta + (1.0 + theta * theta).sqrt())
                } else {
                    -1.0 / (-theta + (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                a[p * n + p] = app - t * apq;
                a[q * n + q] = aqq + t * apq;
                a[p * n + q] = 0.0;
                a[q * n + p] = 0.0;
                for i in 0..n {
                    if i == p || i == q {
                        continue;
                    }
                    let aip = a[i * n + p];
                    let aiq = a[i * n + q];
                    let new_ip = c * aip - s * aiq;
                    let new_iq = s * aip + c * aiq;
                    a[i * n + p] = new_ip;
                    a[p * n + i] = new_ip;
                    a[i * n + q] = new_iq;
                    a[q * n + i] = new_iq;
                }
            }
        }
    }
    if !converged {
        let residual = off_diagonal_norm(&a, n);
        if residual >= JACOBI_REL_TOL * norm {
            return Err(LinalgError::NoConvergence { residual });
        }
    }
    let mut eigs: Vec<f64> = (0..n).map(|i| a[i * n + i]).collect();
    eigs.sort_by(|x, y| y.partial_cmp(x).unwrap());
    Ok(eigs)
}

fn off_diagonal_norm(a: &[f64], n: usize) -> f64 {
    let mut sum = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            sum += 2.0 * a[i * n + j] * a[i * n + j];
        }
    }
    sum.sqrt()
}

/// Determinant of the principal submatrix indexed by `idx`.
/// The empty index list yields 1 by convention.
pub fn det_principal_submatrix(m: &SmallSymMatrix, idx: &[usize]) -> Result<f64, LinalgError> {
    check_index_list(idx, m.order)?;
    if idx.is_empty() {
        return Ok(1.0);
    }
    let k = idx.len();
    let mut sub = vec![0.0; k * k];
    for (a, &i) in idx.iter().enumerate() {
        for (b, &j) in idx.iter().enumerate() {
            sub[a * k + b] = m.get(i, j);
        }
    }
    Ok(lu_det(&mut sub, k))
}

/// In-place LU determinant with partial pivoting and sign tracking.
pub(crate) fn lu_det(a: &mut [f64], n: usize) -> f64 {
    let mut det = 1.0;
    for col in 0..n {
        let mut pivot_row = col;
        let mut pivot_abs = a[col * n + col].abs();
        for r in (col + 1)..n {
            let v = a[r * n + col].abs();
            if v > pivot_abs {
                pivot_abs = v;
                pivot_row = r;
            }
        }
        if pivot_abs == 0.0 {
            return 0.0;
        }
        if pivot_row != col {
            for j in 0..n {
                a.swap(col * n + j, pivot_row * n + j);
            }
            det = -det;
        }
        let pivot = a[col * n + col];
        det *= pivot;
        for r in (col + 1)..n {
            let factor = a[r * n + col] / pivot;
            if factor == 0.0 {
                continue;
            }
            for j in col..n {
                a[r * n + j] -= factor * a[col * n + j];
            }
        }
    }
    det
}

/// Gauss-Jordan inverse with partial pivoting, also returning the
/// determinant as `(sign, log|det|)` so callers can stay in the log
/// domain for large kernels.
pub(crate) fn invert_with_logdet(
    a: &[f64],
    n: usize,
) -> Result<(f64, f64, Vec<f64>), LinalgError> {
    let mut work = a.to_vec();
    let mut inv = vec![0.0; n * n];
    let (sign, log_abs) = invert_with_logdet_into(&mut work, &mut inv, n)?;
    Ok((sign, log_abs, inv))
}

/// Allocation-free core of [`invert_with_logdet`]: `work` holds the
/// matrix on entry and is destroyed; `inv` receives the inverse.
pub(crate) fn invert_with_logdet_into(
    work: &mut [f64],
    inv: &mut [f64],
    n: usize,
) -> Result<(f64, f64), LinalgError> {
    inv[..n * n].fill(0.0);
    for i in 0..n {
        inv[i * n + i] = 1.0;
    }
    let mut sign = 1.0;
    let mut log_abs = 0.0;
    for col in 0..n {
        let mut pivot_row = col;
        let mut pivot_abs = work[col * n + col].abs();
        for r in (col + 1)..n {
            let v = work[r * n + col].abs();
            if v > pivot_abs {
                pivot_abs = v;
                pivot_row = r;
            }
        }
        if pivot_abs == 0.0 {
            return Err(LinalgError::SingularMatrix { col, pivot: 0.0 });
        }
        if pivot_row != col {
            for j in 0..n {
                work.swap(col * n + j, pivot_row * n + j);
                inv.swap(col * n + j, pivot_row * n + j);
            }
            sign = -sign;
        }
        let pivot = work[col * n + col];
        sign *= pivot.signum();
        log_abs += pivot.abs().ln();
        let inv_pivot = 1.0 / pivot;
        for j in 0..n {
            work[col * n + j] *= inv_pivot;
            inv[col * n + j] *= inv_pivot;
        }
        for r in 0..n {
            if r == col {
                continue;
            }
            let factor = work[r * n + col];
            if factor == 0.0 {
                continue;
            }
            for j in 0..n {
                work[r * n + j] -= factor * work[col * n + j];
                inv[r * n + j] -= factor * inv[col * n + j];
            }
        }
    }
    Ok((sign, log_abs))
}

/// Cholesky-based inverse and log-determinant for symmetric positive
/// definite matrices. `work` holds the matrix on entry and is
/// destroyed; `inv` receives the inverse. Returns None when a pivot is
/// nonpositive, i.e. the matrix is not numerically positive definite.
pub(crate) fn spd_inverse_logdet_into(work: &mut [f64], inv: &mut [f64], n: usize) -> Option<f64> {
    // In-place lower Cholesky.
    let mut logdet = 0.0;
    for j in 0..n {
        let mut d = work[j * n + j];
        for t in 0..j {
            let l = work[j * n + t];
            d -= l * l;
        }
        if d <= 0.0 {
            return None;
        }
        let root = d.sqrt();
        logdet += 2.0 * root.ln();
        work[j * n + j] = root;
        let inv_root = 1.0 / root;
        for i in (j + 1)..n {
            let mut v = work[i * n + j];
            for t in 0..j {
                v -= work[i * n + t] * work[j * n + t];
            }
            work[i * n + j] = v * inv_root;
        }
    }
    // Invert L in place (lower triangular).
    for j in 0..n {
        work[j * n + j] = 1.0 / work[j * n + j];
        for i in (j + 1)..n {
            let mut v = 0.0;
            for t in j..i {
                v -= work[i * n + t] * work[t * n + j];
            }
            work[i * n + j] = v / work[i * n + i];
        }
    }
    // A^{-1} = L^{-T} L^{-1}, filled symmetrically.
    for i in 0..n {
        for j in i..n {
            let mut v = 0.0;
            for t in j..n {
                v += work[t * n + i] * work[t * n + j];
            }
            inv[i * n + j] = v;
            inv[j * n + i] = v;
        }
    }
    Some(logdet)
}

/// The `e_l^m` recursion grid for elementary symmetric polynomials:
/// `e[l][m] = e[l][m-1] + lambda_m * e[l-1][m-1]`, with a unit base row
/// and a zero base column.
#[derive(Debug, Clone)]
pub struct EspTable {
    k: usize,
    m: usize,
    e: Vec<f64>,
}

impl EspTable {
    pub fn compute(k: usize, lambdas: &[f64]) -> Result<Self, LinalgError> {
        let m = lambdas.len();
        if k > m {
            return Err(LinalgError::EspOutOfRange { k, m });
        }
        let cols = m + 1;
        let mut e = vec![0.0; (k + 1) * cols];
        for col in 0..cols {
            e[col] = 1.0;
        }
        for l in 1..=k {
            for col in 1..cols {
                e[l * cols + col] = e[l * cols + col - 1] + lambdas[col - 1] * e[(l - 1) * cols + col - 1];
            }
        }
        Ok(Self { k, m, e })
    }

    pub fn get(&self, l: usize, m: usize) -> f64 {
        self.e[l * (self.m + 1) + m]
    }

    /// The final cell `e_k^m`.
    pub fn value(&self) -> f64 {
        self.get(self.k, self.m)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn m(&self) -> usize {
        self.m
    }
}

/// Sum over all k-element products of `lambdas`, in O(m*k) time.
pub fn esp(k: usize, lambdas: &[f64]) -> Result<f64, LinalgError> {
    Ok(EspTable::compute(k, lambdas)?.value())
}
