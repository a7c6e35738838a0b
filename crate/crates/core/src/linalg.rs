//! Small dense helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

use crate::C64;

pub(crate) fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

pub(crate) fn to_complex(m: &DMatrix<f64>) -> DMatrix<C64> {
    m.map(c)
}

/// Eigen-decomposition of a Hermitian matrix with eigenvalues ascending.
pub fn eigh(m: &DMatrix<C64>) -> (DVector<f64>, DMatrix<C64>) {
    let n = m.nrows();
    let sym = (m + m.adjoint()) * c(0.5);
    let eig = sym.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

/// Real symmetric eigenproblem, eigenvalues ascending, each eigenvector's
/// largest-magnitude component made positive.
pub fn eigh_real(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = m.nrows();
    let eig = m.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let col = eig.eigenvectors.column(src);
        let pivot = col.iter().copied().fold(0.0f64, |acc, v| if v.abs() > acc.abs() + 1e-12 { v } else { acc });
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        vectors.set_column(dst, &(col * sign));
    }
    (values, vectors)
}

/// Inverse of a positive semidefinite Hermitian matrix with eigenvalues
/// lifted by `eps * exp(-lambda / eps)`. Also returns the condition number
/// of the regularized matrix.
pub fn regularized_inverse(m: &DMatrix<C64>, eps: f64) -> (DMatrix<C64>, f64) {
    let (values, vectors) = eigh(m);
    let lifted: Vec<f64> = values
        .iter()
        .map(|&v| {
            let v = v.max(0.0);
            v + eps * (-v / eps).exp()
        })
        .collect();
    let max = lifted.iter().copied().fold(0.0, f64::max);
    let min = lifted.iter().copied().fold(f64::INFINITY, f64::min);
    let inv = DMatrix::from_diagonal(&DVector::from_iterator(lifted.len(), lifted.iter().map(|v| c(1.0 / v))));
    (&vectors * inv * vectors.adjoint(), max / min)
}

/// `S^{-1/2}` for a Hermitian positive definite overlap matrix.
pub fn inverse_sqrt(s: &DMatrix<C64>) -> DMatrix<C64> {
    let (values, vectors) = eigh(s);
    let d = DMatrix::from_diagonal(&values.map(|v| c(1.0 / v.sqrt())));
    &vectors * d * vectors.adjoint()
}

pub fn sqrt_herm(s: &DMatrix<C64>) -> DMatrix<C64> {
    let (values, vectors) = eigh(s);
    let d = DMatrix::from_diagonal(&values.map(|v| c(v.max(0.0).sqrt())));
    &vectors * d * vectors.adjoint()
}

/// Max-abs deviation of `X^H X` from the identity.
pub fn orthonormality_deviation(x: &DMatrix<C64>) -> f64 {
    let s = x.adjoint() * x;
    let mut worst = 0.0f64;
    for i in 0..s.nrows() {
        for j in 0..s.ncols() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((s[(i, j)] - c(target)).norm());
        }
    }
    worst
}

/// Modified Gram-Schmidt on the columns, applied twice.
pub fn gram_schmidt(x: &mut DMatrix<C64>) {
    for _ in 0..2 {
        for j in 0..x.ncols() {
            for i in 0..j {
                let proj = x.column(i).dotc(&x.column(j));
                let ci = x.column(i).clone_owned();
                let mut cj = x.column_mut(j);
                cj -= ci * proj;
            }
            let norm = x.column(j).norm();
            x.column_mut(j).scale_mut(1.0 / norm);
        }
    }
}

/// Apply `(1 - X X^H)` to `y`, assuming orthonormal columns in `x`.
pub fn project_out(x: &DMatrix<C64>, y: &mut DMatrix<C64>) {
    let overlap = x.adjoint() * &*y;
    *y -= x * overlap;
}

/// Real matrix times complex matrix, using two real products.
pub fn real_times_complex(a: &DMatrix<f64>, b: &DMatrix<C64>) -> DMatrix<C64> {
    let re = a * b.map(|z| z.re);
    let im = a * b.map(|z| z.im);
    DMatrix::from_fn(re.nrows(), re.ncols(), |i, j| C64::new(re[(i, j)], im[(i, j)]))
}

/// Permanent by Ryser's formula.
pub fn permanent(m: &DMatrix<C64>) -> C64 {
    let n = m.nrows();
    if n == 0 {
        return c(1.0);
    }
    let mut total = C64::new(0.0, 0.0);
    for subset in 1u64..(1u64 << n) {
        let mut prod = c(1.0);
        for i in 0..n {
            let mut row = C64::new(0.0, 0.0);
            for j in 0..n {
                if subset & (1 << j) != 0 {
                    row += m[(i, j)];
                }
            }
            prod *= row;
        }
        let sign = if (n - subset.count_ones() as usize) % 2 == 0 { 1.0 } else { -1.0 };
        total += prod * sign;
    }
    total
}

pub fn determinant(m: &DMatrix<C64>) -> C64 {
    if m.nrows() == 0 {
        return c(1.0);
    }
    m.clone().determinant()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn permanent_of_small_matrices() {
        let m = DMatrix::from_row_slice(2, 2, &[c(1.0), c(2.0), c(3.0), c(4.0)]);
        assert!((permanent(&m) - c(10.0)).norm() < 1e-14);
        let ones = DMatrix::from_element(3, 3, c(1.0));
        assert!((permanent(&ones) - c(6.0)).norm() < 1e-14);
    }

    #[test]
    fn regularized_inverse_of_regular_matrix() {
        let m = DMatrix::from_row_slice(2, 2, &[c(2.0), C64::new(0.5, 0.1), C64::new(0.5, -0.1), c(1.0)]);
        let (inv, cond) = regularized_inverse(&m, 1e-10);
        assert!((inv * &m - DMatrix::identity(2, 2)).camax() < 1e-12);
        assert!(cond > 1.0 && cond.is_finite());
    }

    #[test]
    fn regularized_inverse_of_singular_matrix_is_finite() {
        let m = DMatrix::from_row_slice(2, 2, &[c(1.0), c(0.0), c(0.0), c(0.0)]);
        let (inv, cond) = regularized_inverse(&m, 1e-10);
        assert!((inv[(1, 1)].re - 1e10).abs() < 1.0);
        assert!((cond - 1e10).abs() < 1.0);
    }
}
