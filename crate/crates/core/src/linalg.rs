//! Dense matrix functions used by the sampling maps: exponential, principal
//! logarithm, characteristic polynomial and condition numbers.

use nalgebra::{DMatrix, DVector, Schur};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::poly::Poly;

/// Matrix exponential (scaling and squaring with a degree-13 Padé approximant).
pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    a.exp()
}

/// Diagonal scaling `d` (powers of two) such that `D^{-1} A D` has rows and
/// columns of comparable 1-norm (Parlett-Reinsch balancing, no permutation).
pub(crate) fn balance(a: &DMatrix<f64>) -> DVector<f64> {
    const RADIX: f64 = 2.0;
    let n = a.nrows();
    let mut m = a.clone();
    let mut d = DVector::from_element(n, 1.0);
    let mut done = false;
    for _ in 0..100 {
        if done {
            break;
        }
        done = true;
        for i in 0..n {
            let mut c: f64 = (0..n).filter(|&j| j != i).map(|j| m[(j, i)].abs()).sum();
            let r: f64 = (0..n).filter(|&j| j != i).map(|j| m[(i, j)].abs()).sum();
            if c == 0.0 || r == 0.0 {
                continue;
            }
            let s = c + r;
            let mut f = 1.0;
            while c < r / RADIX {
                f *= RADIX;
                c *= RADIX * RADIX;
            }
            while c >= r * RADIX {
                f /= RADIX;
                c /= RADIX * RADIX;
            }
            if (c + r) / f < 0.95 * s {
                done = false;
                d[i] *= f;
                for j in 0..n {
                    m[(i, j)] /= f;
                    m[(j, i)] *= f;
                }
            }
        }
    }
    d
}

/// An eigenvalue counts as lying on the closed negative real axis when its
/// imaginary part is negligible against its modulus.
pub(crate) fn on_negative_real_axis(z: Complex64) -> bool {
    z.re <= 0.0 && z.im.abs() <= 1e-12 * z.norm().max(1e-300)
}

/// Principal matrix logarithm of a real matrix.
///
/// Complex Schur form, then inverse scaling and squaring on the triangular
/// factor: repeated triangular square roots until `T - I` is small, a Padé
/// approximant of `log(I + X)` evaluated as Gauss-Legendre quadrature of
/// `X (I + tX)^{-1}` on `[0, 1]`, and `2^s` rescaling.
///
/// Fails with [`Error::NegativeRealPole`] when an eigenvalue sits on the
/// closed negative real axis or the result is not real to `1e-8` relative.
pub fn logm(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "logm needs a square matrix");
    let ac = a.map(|x| Complex64::new(x, 0.0));
    let (q, mut t) = Schur::new(ac).unpack();
    for i in 0..n {
        if on_negative_real_axis(t[(i, i)]) {
            return Err(Error::NegativeRealPole);
        }
    }
    // Entries below the diagonal are rounding residue of the decomposition.
    for j in 0..n {
        for i in (j + 1)..n {
            t[(i, j)] = Complex64::new(0.0, 0.0);
        }
    }

    let eye = DMatrix::<Complex64>::identity(n, n);
    let mut squarings = 0u32;
    while one_norm(&(&t - &eye)) > 0.25 {
        t = sqrtm_triangular(&t);
        squarings += 1;
        if squarings > 64 {
            return Err(Error::InvalidInput("logarithm scaling did not reduce the matrix".into()));
        }
    }
    let x = &t - &eye;
    let mut log_t = DMatrix::<Complex64>::zeros(n, n);
    for (node, weight) in gauss_legendre_unit(8) {
        let solved = (&eye + x.scale(node))
            .lu()
            .solve(&x)
            .ok_or_else(|| Error::InvalidInput("singular Padé factor in logm".into()))?;
        log_t += solved * Complex64::new(weight, 0.0);
    }
    log_t *= Complex64::new(2f64.powi(squarings as i32), 0.0);

    let full = &q * log_t * q.adjoint();
    let norm = full.iter().fold(0.0f64, |m, z| m.max(z.norm()));
    let imag = full.iter().fold(0.0f64, |m, z| m.max(z.im.abs()));
    if imag > 1e-8 * norm.max(1.0) {
        return Err(Error::NegativeRealPole);
    }
    Ok(full.map(|z| z.re))
}

fn one_norm(m: &DMatrix<Complex64>) -> f64 {
    (0..m.ncols())
        .map(|j| m.column(j).iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Principal square root of an upper-triangular matrix (Björck-Hammarling).
fn sqrtm_triangular(t: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let n = t.nrows();
    let mut r = DMatrix::<Complex64>::zeros(n, n);
    for j in 0..n {
        r[(j, j)] = t[(j, j)].sqrt();
        for i in (0..j).rev() {
            let mut s = t[(i, j)];
            for k in (i + 1)..j {
                s -= r[(i, k)] * r[(k, j)];
            }
            r[(i, j)] = s / (r[(i, i)] + r[(j, j)]);
        }
    }
    r
}

/// Gauss-Legendre nodes and weights mapped to `[0, 1]`.
fn gauss_legendre_unit(m: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(m);
    for i in 0..m {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=m {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = m as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        out.push((0.5 * (x + 1.0), 0.5 * w));
    }
    out
}

/// Monic characteristic polynomial `det(zI - A)` in ascending powers, as the
/// product of the linear and quadratic factors of the Schur eigenvalues.
///
/// Better than [`char_poly`] for dense matrices with clustered eigenvalues
/// (sampled dynamics near z = 1); worse for companion-like matrices whose
/// eigenvalues are ill-conditioned.
pub fn char_poly_from_spectrum(a: &DMatrix<f64>) -> Poly {
    if a.nrows() == 0 {
        return Poly::one();
    }
    let mut eig: Vec<Complex64> = a.clone().complex_eigenvalues().iter().copied().collect();
    eig.sort_by(|x, y| x.re.total_cmp(&y.re).then(x.im.total_cmp(&y.im)));
    let mut p = Poly::one();
    for z in &eig {
        if z.im > 0.0 {
            p = &p * &Poly::new(vec![z.norm_sqr(), -2.0 * z.re, 1.0]);
        } else if z.im == 0.0 {
            p = &p * &Poly::new(vec![-z.re, 1.0]);
        }
    }
    p
}

/// Monic characteristic polynomial `det(zI - A)` in ascending powers, via
/// Hessenberg reduction and the leading-minor recurrence.
pub fn char_poly(a: &DMatrix<f64>) -> Poly {
    let n = a.nrows();
    if n == 0 {
        return Poly::one();
    }
    let h = a.clone().hessenberg().h();
    // p[k] = char poly of the leading k x k block
    let mut p: Vec<Poly> = Vec::with_capacity(n + 1);
    p.push(Poly::one());
    for k in 1..=n {
        let kk = k - 1;
        let lin = Poly::new(vec![-h[(kk, kk)], 1.0]);
        let mut next = &lin * &p[k - 1];
        let mut prod = 1.0;
        for i in (1..k).rev() {
            // row i-1 (0-based), column kk
            prod *= h[(i, i - 1)];
            let coef = h[(i - 1, kk)] * prod;
            if coef != 0.0 {
                next = &next - &p[i - 1].scale(coef);
            }
        }
        p.push(next);
    }
    let mut out = p.pop().unwrap().into_coeffs();
    out.truncate(n + 1);
    out[n] = 1.0;
    Poly::new(out)
}

/// 2-norm condition number; infinite for a singular matrix.
pub fn cond(a: &DMatrix<f64>) -> f64 {
    let sv = a.clone().singular_values();
    let max = sv.iter().fold(0.0f64, |m, &s| m.max(s));
    let min = sv.iter().fold(f64::INFINITY, |m, &s| m.min(s));
    if min == 0.0 || !min.is_finite() {
        f64::INFINITY
    } else {
        max / min
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        (a - b).iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    #[test]
    fn log_inverts_exp() {
        let a = DMatrix::from_row_slice(
            3,
            3,
            &[-0.3, 1.2, 0.0, -0.8, -0.1, 0.4, 0.2, 0.0, -1.5],
        );
        let l = logm(&expm(&a)).unwrap();
        assert!(max_abs_diff(&l, &a) < 1e-12);
    }

    #[test]
    fn log_of_defective_matrix() {
        // Jordan block: Parlett-style divided differences break here.
        let a = DMatrix::from_row_slice(3, 3, &[0.5, 1.0, 0.0, 0.0, 0.5, 1.0, 0.0, 0.0, 0.5]);
        let l = logm(&a).unwrap();
        assert!(max_abs_diff(&expm(&l), &a) < 1e-13);
    }

    #[test]
    fn log_rejects_negative_eigenvalue() {
        let a = DMatrix::from_row_slice(2, 2, &[-0.5, 0.0, 0.0, 0.8]);
        assert_eq!(logm(&a), Err(Error::NegativeRealPole));
    }

    #[test]
    fn char_poly_matches_roots() {
        let a = DMatrix::from_row_slice(
            4,
            4,
            &[
                1.0, 2.0, 0.5, -1.0, 0.3, -0.7, 1.1, 0.0, 2.0, 0.1, 0.4, 0.9, -0.6, 0.8, 0.0, 1.3,
            ],
        );
        let p = char_poly(&a);
        for ev in a.complex_eigenvalues().iter() {
            assert!(p.eval_complex(*ev).norm() < 1e-10);
        }
        let trace: f64 = (0..4).map(|i| a[(i, i)]).sum();
        assert!((p.coeff(3) + trace).abs() < 1e-12);
        assert!((p.coeff(0) - a.determinant()).abs() < 1e-10);
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let nodes = gauss_legendre_unit(8);
        let integral: f64 = nodes.iter().map(|(x, w)| w * x.powi(15)).sum();
        assert!((integral - 1.0 / 16.0).abs() < 1e-15);
    }
}
