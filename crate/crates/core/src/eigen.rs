//! Eigenvalues of small dense real matrices.
//!
//! The primary route builds the characteristic polynomial with the
//! Faddeev-LeVerrier recursion, finds its roots with Aberth-Ehrlich
//! iteration, then polishes every root with Newton steps on
//! `det(M - lambda I)` evaluated from the matrix itself, which removes the
//! rounding introduced by forming the coefficients. Each eigenvalue is then
//! checked against the determinant residual.
//!
//! [`qr_eigenvalues`] is an independent route through a real Schur
//! decomposition, used to cross-check the primary one.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

pub const MAX_DIM: usize = 4;

const ABERTH_MAX_ITERATIONS: usize = 500;
const POLISH_ITERATIONS: usize = 6;
const RESIDUAL_TOLERANCE: f64 = 1e-8;

/// Monic characteristic polynomial `det(lambda I - M)`, lowest degree first.
pub fn characteristic_polynomial(m: &DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows();
    let mut coeffs = vec![0.0; n + 1];
    coeffs[n] = 1.0;
    let mut acc = DMatrix::<f64>::zeros(n, n);
    for k in 1..=n {
        acc = m * &acc;
        for i in 0..n {
            acc[(i, i)] += coeffs[n - k + 1];
        }
        coeffs[n - k] = -(m * &acc).trace() / k as f64;
    }
    coeffs
}

fn horner(coeffs: &[f64], z: Complex64) -> (Complex64, Complex64) {
    let mut p = Complex64::new(0.0, 0.0);
    let mut dp = Complex64::new(0.0, 0.0);
    for &c in coeffs.iter().rev() {
        dp = dp * z + p;
        p = p * z + c;
    }
    (p, dp)
}

/// Roots of a monic real polynomial (lowest degree first).
pub fn polynomial_roots(coeffs: &[f64]) -> Result<Vec<Complex64>> {
    let n = coeffs.len().saturating_sub(1);
    if n == 0 {
        return Ok(Vec::new());
    }
    // Fujiwara bound on the root moduli
    let bound = (0..n)
        .map(|k| {
            let c = coeffs[k].abs();
            if k == 0 {
                (c / 2.0).powf(1.0 / n as f64)
            } else {
                c.powf(1.0 / (n - k) as f64)
            }
        })
        .fold(0.0_f64, f64::max)
        * 2.0;
    let radius = if bound > 0.0 { bound } else { 1.0 };
    let mut z: Vec<Complex64> = (0..n)
        .map(|k| {
            Complex64::from_polar(
                radius,
                2.0 * std::f64::consts::PI * k as f64 / n as f64 + 0.4,
            )
        })
        .collect();

    // a root is settled once |p(z)| is at the rounding level of its evaluation
    let mut settled = vec![false; n];
    for _ in 0..ABERTH_MAX_ITERATIONS {
        let mut converged = true;
        for k in 0..n {
            if settled[k] {
                continue;
            }
            let (p, dp) = horner(coeffs, z[k]);
            let noise = 8.0
                * f64::EPSILON
                * coeffs
                    .iter()
                    .rev()
                    .fold(0.0, |acc, c| acc * z[k].norm() + c.abs());
            if p.norm() <= noise {
                settled[k] = true;
                continue;
            }
            let ratio = p / dp;
            let repulsion: Complex64 = (0..n)
                .filter(|&j| j != k)
                .map(|j| Complex64::new(1.0, 0.0) / (z[k] - z[j]))
                .sum();
            let step = ratio / (Complex64::new(1.0, 0.0) - ratio * repulsion);
            if !step.is_finite() {
                continue;
            }
            z[k] -= step;
            if step.norm() > 1e-14 * (1.0 + z[k].norm()) {
                converged = false;
            }
        }
        if converged {
            return Ok(z);
        }
    }
    Err(Error::EigenNonConvergence {
        iterations: ABERTH_MAX_ITERATIONS,
    })
}

fn shifted(m: &DMatrix<f64>, lambda: Complex64) -> DMatrix<Complex64> {
    let n = m.nrows();
    DMatrix::from_fn(n, n, |i, j| {
        let v = Complex64::new(m[(i, j)], 0.0);
        if i == j {
            v - lambda
        } else {
            v
        }
    })
}

/// Newton on `det(M - lambda I)`: `lambda += 1 / tr((M - lambda I)^-1)`.
fn polish(m: &DMatrix<f64>, lambda: Complex64, separation: f64) -> Complex64 {
    let mut current = lambda;
    for _ in 0..POLISH_ITERATIONS {
        let Some(inv) = shifted(m, current).lu().try_inverse() else {
            break;
        };
        let step = Complex64::new(1.0, 0.0) / inv.trace();
        if !step.is_finite() {
            break;
        }
        // never let a polishing step hop onto a neighbouring eigenvalue
        if (current + step - lambda).norm() > 0.25 * separation {
            break;
        }
        current += step;
        if step.norm() <= 1e-15 * (1.0 + current.norm()) {
            break;
        }
    }
    current
}

fn scale_of(m: &DMatrix<f64>) -> f64 {
    m.norm().max(1.0)
}

/// `|det(M - lambda I)|` relative to `max(1, ||M||_F)^n`.
pub fn determinant_residual(m: &DMatrix<f64>, lambda: Complex64) -> f64 {
    let n = m.nrows() as i32;
    shifted(m, lambda).determinant().norm() / scale_of(m).powi(n)
}

fn sort_spectrum(values: &mut [Complex64]) {
    values.sort_by(|a, b| b.re.total_cmp(&a.re).then(b.im.total_cmp(&a.im)));
}

fn check_input(m: &DMatrix<f64>) -> Result<()> {
    if !m.is_square() || m.nrows() == 0 || m.nrows() > MAX_DIM {
        return Err(Error::invalid(
            "matrix",
            format!(
                "expected a square matrix of size 1..={MAX_DIM}, got {}x{}",
                m.nrows(),
                m.ncols()
            ),
        ));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("matrix", "entries must be finite"));
    }
    Ok(())
}

/// All eigenvalues of `m`, sorted by decreasing real part.
pub fn eigenvalues(m: &DMatrix<f64>) -> Result<Vec<Complex64>> {
    check_input(m)?;
    let coeffs = characteristic_polynomial(m);
    let roots = polynomial_roots(&coeffs)?;
    let scale = scale_of(m);

    let mut values: Vec<Complex64> = roots
        .iter()
        .enumerate()
        .map(|(k, &root)| {
            let separation = roots
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != k)
                .map(|(_, other)| (root - other).norm())
                .fold(f64::INFINITY, f64::min);
            let separation = if separation.is_finite() {
                separation
            } else {
                scale
            };
            polish(m, root, separation)
        })
        .collect();

    // real input: snap numerically real roots onto the axis and make pairs exact conjugates
    for v in values.iter_mut() {
        if v.im.abs() <= 1e-12 * scale {
            v.im = 0.0;
        }
    }
    let snapshot = values.clone();
    for (k, v) in values.iter_mut().enumerate() {
        if v.im == 0.0 {
            continue;
        }
        let partner = snapshot
            .iter()
            .enumerate()
            .filter(|&(j, w)| j != k && w.im * v.im < 0.0)
            .min_by(|a, b| {
                (a.1.conj() - *v)
                    .norm()
                    .total_cmp(&(b.1.conj() - *v).norm())
            });
        if let Some((_, w)) = partner {
            let re = 0.5 * (v.re + w.re);
            let im = 0.5 * (v.im.abs() + w.im.abs());
            *v = Complex64::new(re, im.copysign(v.im));
        }
    }

    for v in &values {
        let residual = determinant_residual(m, *v);
        if !(residual <= RESIDUAL_TOLERANCE) {
            return Err(Error::EigenResidual {
                re: v.re,
                im: v.im,
                residual,
                bound: RESIDUAL_TOLERANCE,
            });
        }
    }
    sort_spectrum(&mut values);
    Ok(values)
}

/// Independent route: eigenvalues from a real Schur decomposition (shifted QR).
pub fn qr_eigenvalues(m: &DMatrix<f64>) -> Result<Vec<Complex64>> {
    check_input(m)?;
    let mut values: Vec<Complex64> = nalgebra::Schur::try_new(m.clone(), f64::EPSILON, 10_000)
        .ok_or(Error::EigenNonConvergence { iterations: 10_000 })?
        .complex_eigenvalues()
        .iter()
        .map(|c| Complex64::new(c.re, c.im))
        .collect();
    sort_spectrum(&mut values);
    Ok(values)
}

/// Largest pairwise distance under the best matching of two spectra.
pub fn spectrum_distance(a: &[Complex64], b: &[Complex64]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    let mut order: Vec<usize> = (0..b.len()).collect();
    let mut best = f64::INFINITY;
    permute(&mut order, 0, &mut |perm| {
        let worst = a
            .iter()
            .zip(perm)
            .map(|(x, &j)| (*x - b[j]).norm())
            .fold(0.0, f64::max);
        best = best.min(worst);
    });
    best
}

fn permute(items: &mut Vec<usize>, k: usize, visit: &mut impl FnMut(&[usize])) {
    if k == items.len() {
        visit(items);
        return;
    }
    for i in k..items.len() {
        items.swap(k, i);
        permute(items, k + 1, visit);
        items.swap(k, i);
    }
}

/// Largest real part, `-inf` for an empty spectrum.
pub fn max_real_part(values: &[Complex64]) -> f64 {
    values
        .iter()
        .map(|v| v.re)
        .fold(f64::NEG_INFINITY, f64::max)
}
