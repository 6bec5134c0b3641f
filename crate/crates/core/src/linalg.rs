//! Dense Cholesky factorization and triangular solves for the small
//! (tens of points) Gram matrices the surrogates use.

use crate::scalar::Scalar;

/// Lower-triangular factor `L` with `L Lᵀ = A`, or `None` if a pivot is not
/// strictly positive.
pub fn cholesky<T: Scalar>(a: &[Vec<T>]) -> Option<Vec<Vec<T>>> {
    let n = a.len();
    let mut l = vec![vec![T::zero(); n]; n];
    for j in 0..n {
        let mut d = a[j][j];
        for k in 0..j {
            d = d - l[j][k] * l[j][k];
        }
        if !(d > T::zero()) || !d.is_finite() {
            return None;
        }
        let d = d.sqrt();
        l[j][j] = d;
        for i in (j + 1)..n {
            let mut s = a[i][j];
            for k in 0..j {
                s = s - l[i][k] * l[j][k];
            }
            l[i][j] = s / d;
        }
    }
    Some(l)
}

/// Solves `L x = b`.
pub fn solve_lower<T: Scalar>(l: &[Vec<T>], b: &[T]) -> Vec<T> {
    let n = b.len();
    let mut x = vec![T::zero(); n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s = s - l[i][k] * x[k];
        }
        x[i] = s / l[i][i];
    }
    x
}

/// Solves `Lᵀ x = b`.
pub fn solve_upper_t<T: Scalar>(l: &[Vec<T>], b: &[T]) -> Vec<T> {
    let n = b.len();
    let mut x = vec![T::zero(); n];
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in (i + 1)..n {
            s = s - l[k][i] * x[k];
        }
        x[i] = s / l[i][i];
    }
    x
}

pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}
