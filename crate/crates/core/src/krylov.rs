//! Matrix-free Krylov methods for Hermitian operators.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::C64;

fn dot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm(a: &[C64]) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Lowest eigenpair of a Hermitian operator by restarted Lanczos with full
/// reorthogonalization. Converged when `||H x - theta x|| < tol`.
pub fn lanczos_lowest<F>(dim: usize, mut apply: F, start: &[C64], tol: f64, max_restarts: usize) -> Result<(f64, Vec<C64>)>
where
    F: FnMut(&[C64], &mut [C64]),
{
    let krylov_dim = dim.min(60);
    let mut x: Vec<C64> = start.to_vec();
    let mut nx = norm(&x);
    if !(nx > 0.0) {
        x = (0..dim).map(|i| C64::new(1.0 + (i % 7) as f64 * 0.1, 0.0)).collect();
        nx = norm(&x);
    }
    x.iter_mut().for_each(|z| *z /= nx);
    let mut residual = f64::INFINITY;
    let mut hx = vec![C64::new(0.0, 0.0); dim];
    for restart in 0..=max_restarts {
        let mut basis: Vec<Vec<C64>> = vec![x.clone()];
        let mut alpha = Vec::new();
        let mut beta: Vec<f64> = Vec::new();
        let mut w = vec![C64::new(0.0, 0.0); dim];
        for j in 0..krylov_dim {
            apply(&basis[j], &mut w);
            let a = dot(&basis[j], &w).re;
            alpha.push(a);
            // full reorthogonalization, twice
            for _ in 0..2 {
                for v in &basis {
                    let p = dot(v, &w);
                    w.iter_mut().zip(v).for_each(|(wi, vi)| *wi -= vi * p);
                }
            }
            let b = norm(&w);
            if j + 1 == krylov_dim || b < 1e-14 {
                break;
            }
            beta.push(b);
            basis.push(w.iter().map(|z| z / b).collect());
        }
        let k = alpha.len();
        let t = DMatrix::from_fn(k, k, |i, j| {
            if i == j {
                alpha[i]
            } else if i + 1 == j {
                beta[i]
            } else if j + 1 == i {
                beta[j]
            } else {
                0.0
            }
        });
        let eig = t.symmetric_eigen();
        let (imin, theta) = eig
            .eigenvalues
            .iter()
            .copied()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        let s: DVector<f64> = eig.eigenvectors.column(imin).into_owned();
        x.iter_mut().for_each(|z| *z = C64::new(0.0, 0.0));
        for (v, &si) in basis.iter().zip(s.iter()) {
            x.iter_mut().zip(v).for_each(|(xi, vi)| *xi += vi * si);
        }
        let nx = norm(&x);
        x.iter_mut().for_each(|z| *z /= nx);
        apply(&x, &mut hx);
        let theta_x = dot(&x, &hx).re;
        residual = hx.iter().zip(&x).map(|(h, xi)| (h - xi * theta_x).norm_sqr()).sum::<f64>().sqrt();
        log::trace!("lanczos restart {restart}: theta = {theta} residual = {residual:e}");
        if residual < tol {
            return Ok((theta_x, x));
        }
    }
    Err(Error::EigenNotConverged {
        residual,
        iterations: max_restarts + 1,
    })
}

/// `exp(-i H dt) v` by a Lanczos approximation whose dimension grows until
/// the estimated error falls below `tol`.
pub fn expm_krylov<F>(mut apply: F, v: &[C64], dt: f64, tol: f64, max_dim: usize) -> Result<Vec<C64>>
where
    F: FnMut(&[C64], &mut [C64]),
{
    let dim = v.len();
    let nv = norm(v);
    if nv == 0.0 {
        return Ok(v.to_vec());
    }
    let max_dim = max_dim.min(dim).max(1);
    let mut basis: Vec<Vec<C64>> = vec![v.iter().map(|z| z / nv).collect()];
    let mut alpha = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut w = vec![C64::new(0.0, 0.0); dim];
    loop {
        let j = alpha.len();
        apply(&basis[j], &mut w);
        alpha.push(dot(&basis[j], &w).re);
        for _ in 0..2 {
            for b in &basis {
                let p = dot(b, &w);
                w.iter_mut().zip(b).for_each(|(wi, bi)| *wi -= bi * p);
            }
        }
        let b = norm(&w);
        let k = alpha.len();
        let coeffs = tridiagonal_exp(&alpha, &beta, dt);
        // error estimate: weight leaking into the next Krylov vector
        let err = b * coeffs[k - 1].norm() * dt.abs();
        if err < tol || b < 1e-14 || k >= max_dim {
            if err >= tol && b >= 1e-14 {
                return Err(Error::Propagation {
                    time: dt,
                    reason: format!("Krylov exponential did not converge (error {err:e} at dimension {k})"),
                });
            }
            let mut out = vec![C64::new(0.0, 0.0); dim];
            for (bv, &c) in basis.iter().zip(coeffs.iter()) {
                out.iter_mut().zip(bv).for_each(|(o, bi)| *o += bi * c * nv);
            }
            return Ok(out);
        }
        beta.push(b);
        basis.push(w.iter().map(|z| z / b).collect());
    }
}

/// First column of `exp(-i T dt)` for a real symmetric tridiagonal `T`.
fn tridiagonal_exp(alpha: &[f64], beta: &[f64], dt: f64) -> Vec<C64> {
    let k = alpha.len();
    let t = DMatrix::from_fn(k, k, |i, j| {
        if i == j {
            alpha[i]
        } else if i + 1 == j {
            beta[i]
        } else if j + 1 == i {
            beta[j]
        } else {
            0.0
        }
    });
    let eig = t.symmetric_eigen();
    (0..k)
        .map(|i| {
            (0..k)
                .map(|n| {
                    let phase = C64::new(0.0, -eig.eigenvalues[n] * dt).exp();
                    phase * eig.eigenvectors[(i, n)] * eig.eigenvectors[(0, n)]
                })
                .sum()
        })
        .collect()
}
