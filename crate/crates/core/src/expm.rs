//! Action of `exp(-i H dt)` on a state for a frozen real-symmetric `H`.
//!
//! [`ChebyshevKernel`] expands the exponential in Chebyshev polynomials of the
//! rescaled Hamiltonian, with Bessel-function coefficients. It needs only
//! sparse products and is converged to round-off, so it is unitary to machine
//! precision. [`dense_exp_apply`] diagonalizes instead and is used as the
//! independent route.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::hamiltonian::HamiltonianSnapshot;

/// Coefficients whose magnitude falls below this are dropped.
const SERIES_TOL: f64 = 1e-18;

/// `J_0(x), J_1(x), …` for `x ≥ 0`, truncated after the last term above `tol`.
///
/// Miller's backward recurrence normalized with `J_0 + 2 Σ J_{2k} = 1`.
pub fn bessel_j_sequence(x: f64, tol: f64) -> Vec<f64> {
    assert!(x >= 0.0 && x.is_finite(), "bessel argument {x}");
    if x == 0.0 {
        return vec![1.0];
    }
    let start = (x + 12.0 * x.cbrt() + 40.0).ceil() as usize;
    let start = start + start % 2;
    let mut j = vec![0.0; start + 2];
    j[start] = 1e-280;
    for k in (1..=start).rev() {
        j[k - 1] = 2.0 * k as f64 / x * j[k] - j[k + 1];
        if j[k - 1].abs() > 1e250 {
            for v in &mut j[k - 1..] {
                *v *= 1e-250;
            }
        }
    }
    let norm = j[0] + 2.0 * j.iter().skip(2).step_by(2).sum::<f64>();
    for v in &mut j {
        *v /= norm;
    }
    let last = j.iter().rposition(|v| v.abs() > tol).unwrap_or(0);
    j.truncate(last + 1);
    j
}

/// Reusable buffers for the Chebyshev propagator.
#[derive(Clone, Debug, Default)]
pub struct ChebyshevKernel {
    prev: Vec<Complex64>,
    cur: Vec<Complex64>,
    next: Vec<Complex64>,
    acc: Vec<Complex64>,
}

impl ChebyshevKernel {
    pub fn new() -> Self {
        Self::default()
    }

    /// Replace `psi` by `exp(-i h dt) psi`. `dt` may be negative.
    pub fn apply(&mut self, h: &HamiltonianSnapshot, psi: &mut [Complex64], dt: f64) {
        let n = psi.len();
        assert_eq!(n, h.dim(), "state and Hamiltonian dimensions differ");
        let (lo, hi) = h.spectral_bounds();
        let center = 0.5 * (hi + lo);
        let half_width = 0.5 * (hi - lo);
        let global = Complex64::from_polar(1.0, -center * dt);
        if half_width <= f64::EPSILON * center.abs().max(1.0) {
            // H is (numerically) a multiple of the identity.
            psi.iter_mut().for_each(|a| *a *= global);
            return;
        }
        let bessel = bessel_j_sequence(half_width * dt.abs(), SERIES_TOL);
        // (-i)^k for positive dt, (+i)^k for negative dt.
        let rot = if dt >= 0.0 {
            Complex64::new(0.0, -1.0)
        } else {
            Complex64::new(0.0, 1.0)
        };

        for buf in [&mut self.prev, &mut self.cur, &mut self.next, &mut self.acc] {
            buf.clear();
            buf.resize(n, Complex64::new(0.0, 0.0));
        }
        let scale = 1.0 / half_width;

        self.prev.copy_from_slice(psi);
        for (a, p) in self.acc.iter_mut().zip(&self.prev) {
            *a = p * bessel[0];
        }
        if bessel.len() > 1 {
            // T_1 = (H - c)/r
            h.apply(&self.prev, &mut self.cur);
            for (c, p) in self.cur.iter_mut().zip(&self.prev) {
                *c = (*c - p * center) * scale;
            }
            let mut phase = rot;
            let coef = phase * (2.0 * bessel[1]);
            for (a, c) in self.acc.iter_mut().zip(&self.cur) {
                *a += c * coef;
            }
            for &jk in &bessel[2..] {
                h.apply(&self.cur, &mut self.next);
                for ((nx, c), p) in self.next.iter_mut().zip(&self.cur).zip(&self.prev) {
                    *nx = (*nx - c * center) * (2.0 * scale) - p;
                }
                phase *= rot;
                let coef = phase * (2.0 * jk);
                for (a, nx) in self.acc.iter_mut().zip(&self.next) {
                    *a += nx * coef;
                }
                std::mem::swap(&mut self.prev, &mut self.cur);
                std::mem::swap(&mut self.cur, &mut self.next);
            }
        }
        for (p, a) in psi.iter_mut().zip(&self.acc) {
            *p = a * global;
        }
    }
}

/// Replace `psi` by `exp(-i m dt) psi` through a full eigendecomposition of
/// the real symmetric matrix `m`.
pub fn dense_exp_apply(m: &DMatrix<f64>, psi: &mut [Complex64], dt: f64) {
    let eig = SymmetricEigen::new(m.clone());
    let v = &eig.eigenvectors;
    let n = psi.len();
    let mut coeff = vec![Complex64::new(0.0, 0.0); n];
    for (k, c) in coeff.iter_mut().enumerate() {
        let overlap: Complex64 = (0..n).map(|i| psi[i] * v[(i, k)]).sum();
        *c = overlap * Complex64::from_polar(1.0, -eig.eigenvalues[k] * dt);
    }
    for (i, p) in psi.iter_mut().enumerate() {
        *p = (0..n).map(|k| coeff[k] * v[(i, k)]).sum();
    }
}
