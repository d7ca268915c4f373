//! Complex dense helpers shared by the channel, observation and estimation code.
//!
//! Matrices are `nalgebra` column-major; `vec(·)` is column-major stacking,
//! which is exactly the storage order, so `vec`/`unvec` are copies.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;
pub type RMatrix = DMatrix<f64>;

pub const J: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Column-major vectorization.
pub fn vec(m: &CMatrix) -> CVector {
    CVector::from_column_slice(m.as_slice())
}

/// Inverse of [`vec`].
pub fn unvec(v: &CVector, nrows: usize, ncols: usize) -> CMatrix {
    assert_eq!(v.len(), nrows * ncols, "unvec: length mismatch");
    CMatrix::from_column_slice(nrows, ncols, v.as_slice())
}

/// Dense Kronecker product `a ⊗ b`.
pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

pub fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

pub fn frobenius_sq(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum()
}

pub fn frobenius(m: &CMatrix) -> f64 {
    frobenius_sq(m).sqrt()
}

pub fn is_identity(m: &CMatrix) -> bool {
    m.is_square()
        && m.iter().enumerate().all(|(k, z)| {
            let (i, j) = (k % m.nrows(), k / m.nrows());
            if i == j {
                *z == Complex64::new(1.0, 0.0)
            } else {
                *z == Complex64::new(0.0, 0.0)
            }
        })
}

/// `a^H · b` without materializing the adjoint.
pub fn adjoint_mul(a: &CMatrix, b: &CMatrix) -> CMatrix {
    gemm(a, b, true)
}

/// `a · b`.
pub fn mul(a: &CMatrix, b: &CMatrix) -> CMatrix {
    gemm(a, b, false)
}

fn gemm(a: &CMatrix, b: &CMatrix, adjoint_a: bool) -> CMatrix {
    gemm_slices(
        a.as_slice(),
        a.nrows(),
        a.ncols(),
        adjoint_a,
        b.as_slice(),
        b.nrows(),
        b.ncols(),
    )
}

/// `op(a) · b` on column-major slices, `op` being identity or adjoint.
///
/// Lets callers multiply contiguous column ranges of a larger matrix
/// without copying them out.
pub fn gemm_slices(
    a: &[Complex64],
    a_rows: usize,
    a_cols: usize,
    adjoint_a: bool,
    b: &[Complex64],
    b_rows: usize,
    b_cols: usize,
) -> CMatrix {
    assert_eq!(a.len(), a_rows * a_cols, "gemm: lhs storage size");
    assert_eq!(b.len(), b_rows * b_cols, "gemm: rhs storage size");
    let (m, k) = if adjoint_a {
        (a_cols, a_rows)
    } else {
        (a_rows, a_cols)
    };
    assert_eq!(k, b_rows, "gemm: inner dimension mismatch");
    let n = b_cols;
    let mut c = CMatrix::zeros(m, n);
    if m == 0 || n == 0 || k == 0 {
        return c;
    }
    // The kernel has no conjugate option, so the adjoint reads a conjugated
    // copy with swapped strides: element (i, l) of aᴴ sits at l + i·a_rows.
    let conj;
    let (a_ptr, rsa, csa) = if adjoint_a {
        conj = a.iter().map(|z| z.conj()).collect::<Vec<_>>();
        (conj.as_ptr(), a_rows as isize, 1isize)
    } else {
        (a.as_ptr(), 1isize, a_rows as isize)
    };
    // SAFETY: Complex64 is #[repr(C)] { re, im }, layout-identical to [f64; 2],
    // and the strides describe exactly the column-major buffers checked above.
    unsafe {
        matrixmultiply::zgemm(
            matrixmultiply::CGemmOption::Standard,
            matrixmultiply::CGemmOption::Standard,
            m,
            k,
            n,
            [1.0, 0.0],
            a_ptr as *const [f64; 2],
            rsa,
            csa,
            b.as_ptr() as *const [f64; 2],
            1,
            b_rows as isize,
            [0.0, 0.0],
            c.as_mut_ptr() as *mut [f64; 2],
            1,
            m as isize,
        );
    }
    c
}

/// Applies `(a ⊗ b)` to `vec(m)` as `vec(b · m · aᵀ)`.
pub fn kron_apply(a: &CMatrix, b: &CMatrix, v: &CVector) -> CVector {
    let m = unvec(v, b.ncols(), a.ncols());
    vec(&mul(&mul(b, &m), &a.transpose()))
}

/// Numerical rank from singular values, relative to the largest one.
pub fn rank(m: &CMatrix, rel_tol: f64) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.clone().singular_values();
    let max = sv.iter().cloned().fold(0.0, f64::max);
    if max == 0.0 {
        return 0;
    }
    sv.iter().filter(|s| **s > rel_tol * max).count()
}

/// Parses a nested `[[[re, im], ...], ...]` row-major array into a matrix.
pub fn from_nested(rows: &[Vec<[f64; 2]>]) -> Option<CMatrix> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return None;
    }
    Some(CMatrix::from_fn(nrows, ncols, |i, j| {
        Complex64::new(rows[i][j][0], rows[i][j][1])
    }))
}

pub fn to_nested(m: &CMatrix) -> Vec<Vec<[f64; 2]>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(r: usize, c: usize, seed: f64) -> CMatrix {
        CMatrix::from_fn(r, c, |i, j| {
            let t = seed + (i * 31 + j * 17) as f64;
            Complex64::new((t * 0.37).sin(), (t * 0.91).cos())
        })
    }

    #[test]
    fn gemm_matches_nalgebra() {
        let a = sample(7, 5, 0.3);
        let b = sample(5, 9, 1.1);
        let c = mul(&a, &b);
        assert!(frobenius(&(c - &a * &b)) < 1e-12);

        let a = sample(5, 7, 2.0);
        let c = adjoint_mul(&a, &b);
        assert!(frobenius(&(c - a.adjoint() * &b)) < 1e-12);
    }

    #[test]
    fn vec_unvec_roundtrip() {
        let m = sample(4, 3, 0.0);
        let v = vec(&m);
        assert_eq!(v[1], m[(1, 0)]);
        assert_eq!(v[4], m[(0, 1)]);
        assert_eq!(unvec(&v, 4, 3), m);
    }

    #[test]
    fn kron_apply_matches_dense() {
        let a = sample(3, 3, 0.5);
        let b = sample(2, 2, 1.5);
        let v = CVector::from_fn(6, |i, _| Complex64::new(i as f64, 1.0 - i as f64));
        let dense = kron(&a, &b) * &v;
        assert!((kron_apply(&a, &b, &v) - dense).norm() < 1e-12);
    }

    #[test]
    fn nested_roundtrip() {
        let m = sample(2, 3, 4.0);
        assert_eq!(from_nested(&to_nested(&m)).unwrap(), m);
        assert!(from_nested(&[vec![[0.0, 0.0]], vec![]]).is_none());
    }
}
