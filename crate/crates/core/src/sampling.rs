//! Exact zero-order-hold sampling maps between CT and DT models.
//!
//! All DT transfer functions produced here are exact at the sampling
//! instants for piecewise-constant inputs. The inverse direction goes through
//! the principal matrix logarithm of the augmented companion matrix.

use nalgebra::{DMatrix, DVector, RowDVector};

use crate::error::{Error, Result};
use crate::linalg::{balance, char_poly, char_poly_from_spectrum, cond, expm, logm, on_negative_real_axis};
use crate::lti::{
    balanced, markov_numerator, state_space_to_polys, to_state_space, CtModel, Domain, DtModel, Rational,
    StateSpace, TransferFunction,
};
use crate::poly::Poly;

fn check_period(h: f64) -> Result<()> {
    if h > 0.0 && h.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("sampling period must be positive, got {h}")))
    }
}

/// `(Φ, Γ) = (e^{Ah}, ∫_0^h e^{As} ds B)` from one augmented exponential.
pub(crate) fn discretize_ss(ss: &StateSpace, h: f64) -> (DMatrix<f64>, DVector<f64>) {
    let n = ss.order();
    let mut aug = DMatrix::<f64>::zeros(n + 1, n + 1);
    aug.view_mut((0, 0), (n, n)).copy_from(&(&ss.a * h));
    aug.view_mut((0, n), (n, 1)).copy_from(&(&ss.b * h));
    let e = expm(&aug);
    let phi = e.view((0, 0), (n, n)).into_owned();
    let gamma = e.view((0, n), (n, 1)).column(0).into_owned();
    (phi, gamma)
}

/// ZOH equivalent of the CT filter `num(p) / den(p)`.
///
/// Returns `(num_q, den_q)` in ascending powers of `q`, with `den_q` monic.
pub fn zoh_rational(num: &Poly, den: &Poly, h: f64) -> Result<(Poly, Poly)> {
    check_period(h)?;
    let den = den.trim();
    if den.is_zero() {
        return Err(Error::SingularDenominator);
    }
    if num.degree() > den.degree() && !num.is_zero() {
        return Err(Error::ImproperFilter);
    }
    let ss = balanced(&to_state_space(&Rational::new(num.clone(), den.clone(), Domain::Continuous))?);
    if ss.order() == 0 {
        return Ok((Poly::constant(ss.d), Poly::one()));
    }
    let (phi, gamma) = discretize_ss(&ss, h);
    let den_q = char_poly_from_spectrum(&phi);
    let num_q = markov_numerator(&phi, &gamma, &ss.c, ss.d, &den_q);
    Ok((num_q, den_q))
}

/// Same as [`zoh_rational`] but with the DT denominator supplied (monic).
fn zoh_numerator_over(num: &Poly, den: &Poly, h: f64, den_q: &Poly) -> Result<Poly> {
    if num.degree() > den.degree() && !num.is_zero() {
        return Err(Error::ImproperFilter);
    }
    let ss = balanced(&to_state_space(&Rational::new(num.clone(), den.clone(), Domain::Continuous))?);
    if ss.order() == 0 {
        return Ok(Poly::constant(ss.d));
    }
    let (phi, gamma) = discretize_ss(&ss, h);
    Ok(markov_numerator(&phi, &gamma, &ss.c, ss.d, den_q))
}

/// Block-triangular realization of `x(p) / den(p)^2` of order `2n`.
///
/// With `Ā` the monic denominator, `x/lead² = Q Ā + R` and the output is
/// `Q/Ā` read from the first companion block plus `R/Ā²` from the second
/// block, which is driven by the first state of the first block. The
/// dynamics matrix keeps the scale of the order-`n` companion instead of the
/// companion of the squared polynomial.
fn squared_realization(x: &Poly, den: &Poly) -> Result<StateSpace> {
    let den = den.trim();
    let n = den.degree();
    let lead = den.coeff(n);
    if x.degree() > 2 * n && !x.is_zero() {
        return Err(Error::ImproperFilter);
    }
    let monic = den.scale(1.0 / lead);
    let xs = x.scale(1.0 / (lead * lead));
    let (q, r) = xs.div_rem(&monic);
    let mut a = DMatrix::<f64>::zeros(2 * n, 2 * n);
    for blk in 0..2 {
        let o = blk * n;
        for i in 0..n - 1 {
            a[(o + i, o + i + 1)] = 1.0;
        }
        for j in 0..n {
            a[(o + n - 1, o + j)] = -monic.coeff(j);
        }
    }
    a[(2 * n - 1, 0)] = 1.0;
    let mut b = DVector::<f64>::zeros(2 * n);
    b[n - 1] = 1.0;
    let d = q.coeff(n);
    let mut c = RowDVector::<f64>::zeros(2 * n);
    for j in 0..n {
        c[j] = q.coeff(j) - d * monic.coeff(j);
        c[n + j] = r.coeff(j);
    }
    Ok(StateSpace { a, b, c, d })
}

/// ZOH equivalent of `x(p) / den(p)^2`, returned over the squared monic DT
/// denominator of `1/den`.
pub fn zoh_over_squared(x: &Poly, den: &Poly, h: f64) -> Result<(Poly, Poly)> {
    check_period(h)?;
    let den = den.trim();
    if den.degree() == 0 {
        let c = den.coeff(0);
        return Ok((x.scale(1.0 / (c * c)), Poly::one()));
    }
    let (_, base) = zoh_rational(&Poly::one(), &den, h)?;
    let den_q = &base * &base;
    let num_q = zoh_over_squared_with(x, &den, h, &den_q)?;
    Ok((num_q, den_q))
}

fn zoh_over_squared_with(x: &Poly, den: &Poly, h: f64, den_q: &Poly) -> Result<Poly> {
    let ss = balanced(&squared_realization(x, den)?);
    let (phi, gamma) = discretize_ss(&ss, h);
    Ok(markov_numerator(&phi, &gamma, &ss.c, ss.d, den_q))
}

/// Exact ZOH equivalent of a CT model in the constant-term-one normalization.
pub fn zoh_discretize(ct: &CtModel, h: f64) -> Result<DtModel> {
    check_period(h)?;
    let (num_q, den_q) = zoh_rational(&ct.numerator(), &ct.denominator(), h)?;
    DtModel::from_polys(&num_q, &den_q, h)
}

/// Validity flags of the inverse ZOH map at a DT model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ZohDomainCertificate {
    pub dt_negative_real_pole: bool,
    pub ct_imag_part_bound_ok: bool,
}

impl ZohDomainCertificate {
    pub fn is_valid(&self) -> bool {
        !self.dt_negative_real_pole && self.ct_imag_part_bound_ok
    }
}

/// Evaluate both bijectivity conditions of the inverse ZOH map from the DT
/// pole locations: no pole on the closed negative real axis, and
/// `π/h > 2 max |Im λ_c|` where `λ_c = log(z)/h`.
pub fn check_domain(dt: &DtModel) -> ZohDomainCertificate {
    let poles = match dt.poles() {
        Ok(p) => p,
        Err(_) => {
            return ZohDomainCertificate {
                dt_negative_real_pole: false,
                ct_imag_part_bound_ok: true,
            }
        }
    };
    let h = dt.h();
    let negative = poles.iter().any(|&z| on_negative_real_axis(z));
    let max_im = poles
        .iter()
        .map(|z| (z.im.atan2(z.re) / h).abs())
        .fold(0.0f64, f64::max);
    ZohDomainCertificate {
        dt_negative_real_pole: negative,
        ct_imag_part_bound_ok: std::f64::consts::PI / h > 2.0 * max_im,
    }
}

fn require_domain(dt: &DtModel) -> Result<()> {
    let cert = check_domain(dt);
    if cert.dt_negative_real_pole {
        Err(Error::NegativeRealPole)
    } else if !cert.ct_imag_part_bound_ok {
        Err(Error::FrequencyBound)
    } else {
        Ok(())
    }
}

/// `(A_c, B_c) = log(M)/h` for the augmented companion matrix `M` built from
/// `α`, with last column `[0, ..., 0, 1/α_n, 1]`.
fn log_augmented(alpha: &[f64], h: f64) -> Result<(DMatrix<f64>, DVector<f64>, DVector<f64>)> {
    let n = alpha.len();
    let an = alpha[n - 1];
    if an == 0.0 {
        return Err(Error::SingularDenominator);
    }
    let mut m = DMatrix::<f64>::zeros(n + 1, n + 1);
    for i in 0..n - 1 {
        m[(i, i + 1)] = 1.0;
    }
    m[(n - 1, 0)] = -1.0 / an;
    for j in 1..n {
        m[(n - 1, j)] = -alpha[j - 1] / an;
    }
    m[(n - 1, n)] = 1.0 / an;
    m[(n, n)] = 1.0;
    let d = balance(&m);
    let mb = DMatrix::from_fn(n + 1, n + 1, |i, j| m[(i, j)] * d[j] / d[i]);
    let l = logm(&mb)? / h;
    let a = l.view((0, 0), (n, n)).into_owned();
    let b = l.view((0, n), (n, 1)).column(0) / d[n];
    Ok((a, b, d.rows(0, n).into_owned()))
}

/// Inverse ZOH transformation.
///
/// The result is biproper for biproper inputs; a strictly proper DT model
/// maps to a strictly proper CT model with `m = n - 1`.
pub fn inverse_zoh(dt: &DtModel) -> Result<CtModel> {
    let n = dt.n();
    if n == 0 {
        return CtModel::new(Vec::new(), dt.beta().to_vec());
    }
    require_domain(dt)?;
    // CT realization in balanced coordinates: output row is scaled by `scale`
    let (a, b, scale) = log_augmented(dt.alpha(), dt.h())?;
    let alpha = dt.alpha();
    let an = alpha[n - 1];
    let beta_n = if dt.beta().len() == n + 1 { dt.beta()[n] } else { 0.0 };
    let d = beta_n / an;
    let beta = |k: usize| dt.beta().get(k).copied().unwrap_or(0.0);
    let c = RowDVector::from_fn(n, |_, j| {
        let alpha_j = if j == 0 { 1.0 } else { alpha[j - 1] };
        (beta(j) - beta_n * alpha_j / an) * scale[j]
    });
    let (num, den) = state_space_to_polys(&StateSpace { a, b, c, d });
    let ct = CtModel::from_polys(&num, &den)?;
    let len = if dt.beta().len() == n + 1 { n + 1 } else { n };
    ct.with_numerator_len(len)
}

/// CT denominator coefficients `[a_1..a_n]` paired with the DT denominator `α`.
pub fn ct_denominator_from_alpha(alpha: &[f64], h: f64) -> Result<Vec<f64>> {
    let n = alpha.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let probe = DtModel::new(alpha.to_vec(), vec![1.0], h)?;
    require_domain(&probe)?;
    let (a, _, _) = log_augmented(alpha, h)?;
    let den = char_poly(&a);
    let c0 = den.coeff(0);
    if c0 == 0.0 {
        return Err(Error::DegenerateNormalization);
    }
    Ok((1..=n).map(|k| den.coeff(k) / c0).collect())
}

fn monic_alpha(alpha: &[f64]) -> Poly {
    let an = alpha[alpha.len() - 1];
    let mut c = vec![1.0 / an];
    c.extend(alpha.iter().map(|x| x / an));
    Poly::new(c)
}

/// `N_{d,i}` for `i = 0..count`: numerators of the ZOH equivalents of
/// `p^i / A_c(p)` over the DT denominator `A_d(q)` built from `α`.
fn basis_from_ct(a_c: &[f64], alpha: &[f64], h: f64, count: usize) -> Result<Vec<Poly>> {
    let n = alpha.len();
    let mut den = vec![1.0];
    den.extend_from_slice(a_c);
    let den = Poly::new(den);
    let den_q = monic_alpha(alpha);
    let an = alpha[n - 1];
    (0..count)
        .map(|i| Ok(zoh_numerator_over(&Poly::monomial(i, 1.0), &den, h, &den_q)?.scale(an)))
        .collect()
}

/// Basis numerators `N_{d,0..n-1}(q)` for the DT denominator `α`, with the CT
/// denominator recovered through the inverse ZOH map.
pub fn numerator_basis_polys(alpha: &[f64], h: f64) -> Result<Vec<Poly>> {
    let a_c = ct_denominator_from_alpha(alpha, h)?;
    basis_from_ct(&a_c, alpha, h, alpha.len())
}

/// DT model parametrized by `ρ = [α_1..α_n, γ_0..γ_m]`, where the `γ` are
/// exactly the numerator coefficients of the CT equivalent:
/// `G_d(q) = Σ_i N_{d,i}(q) γ_i / A_d(q)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptedDtModel {
    alpha: Vec<f64>,
    gamma: Vec<f64>,
    basis: Vec<Poly>,
    a_c: Vec<f64>,
    h: f64,
}

impl AdaptedDtModel {
    pub fn new(alpha: Vec<f64>, gamma: Vec<f64>, h: f64) -> Result<Self> {
        check_period(h)?;
        if alpha.is_empty() {
            return Err(Error::InvalidModel("adapted model needs n >= 1".into()));
        }
        if gamma.is_empty() || gamma.len() > alpha.len() + 1 {
            return Err(Error::InvalidModel(format!(
                "adapted model needs 1..={} numerator terms, got {}",
                alpha.len() + 1,
                gamma.len()
            )));
        }
        let a_c = ct_denominator_from_alpha(&alpha, h)?;
        let basis = basis_from_ct(&a_c, &alpha, h, gamma.len())?;
        Ok(AdaptedDtModel { alpha, gamma, basis, a_c, h })
    }

    pub fn from_params(rho: &[f64], n: usize, h: f64) -> Result<Self> {
        if rho.len() <= n {
            return Err(Error::InvalidModel("adapted parameter vector too short".into()));
        }
        AdaptedDtModel::new(rho[..n].to_vec(), rho[n..].to_vec(), h)
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }
    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }
    pub fn basis(&self) -> &[Poly] {
        &self.basis
    }
    /// CT denominator `[a_1..a_n]` paired with `α`.
    pub fn ct_denominator(&self) -> &[f64] {
        &self.a_c
    }
    pub fn h(&self) -> f64 {
        self.h
    }
    pub fn n(&self) -> usize {
        self.alpha.len()
    }
    pub fn m(&self) -> usize {
        self.gamma.len() - 1
    }

    pub fn params(&self) -> Vec<f64> {
        let mut v = self.alpha.clone();
        v.extend_from_slice(&self.gamma);
        v
    }

    /// `Σ_i N_{d,i}(q) γ_i`.
    pub fn dt_numerator(&self) -> Poly {
        self.basis
            .iter()
            .zip(&self.gamma)
            .fold(Poly::zero(), |acc, (p, g)| &acc + &p.scale(*g))
    }

    /// The same system in the standard `[α, β]` parametrization, with `n`
    /// numerator terms (`n + 1` when `m = n`).
    pub fn to_dt_model(&self) -> Result<DtModel> {
        let n = self.n();
        let len = if self.m() == n { n + 1 } else { n };
        let num = self.dt_numerator();
        let beta = (0..len).map(|k| num.coeff(k)).collect();
        DtModel::new(self.alpha.clone(), beta, self.h)
    }

    pub fn denominator(&self) -> Poly {
        let mut c = vec![1.0];
        c.extend_from_slice(&self.alpha);
        Poly::new(c)
    }
}

/// `ρ = f̃^{-1}(θ_c)`: DT denominator from the ZOH map, numerator copied.
pub fn adapted_forward(ct: &CtModel, h: f64) -> Result<AdaptedDtModel> {
    if ct.n() == 0 {
        return Err(Error::InvalidModel("adapted model needs n >= 1".into()));
    }
    let dt = zoh_discretize(ct, h)?;
    let alpha = dt.alpha().to_vec();
    let basis = basis_from_ct(ct.a(), &alpha, h, ct.m() + 1)?;
    Ok(AdaptedDtModel {
        alpha,
        gamma: ct.b().to_vec(),
        basis,
        a_c: ct.a().to_vec(),
        h,
    })
}

/// `θ_c = f̃(ρ)`: inverse ZOH on the denominator, identity on the numerator.
pub fn adapted_inverse(rho: &AdaptedDtModel) -> Result<CtModel> {
    let a = ct_denominator_from_alpha(rho.alpha(), rho.h())?;
    CtModel::new(a, rho.gamma().to_vec())
}

/// Central finite-difference Jacobian `∂a_s/∂α_r` of the denominator part of
/// `f̃`, column `r` per `α_r`, step `1e-6 max(1, |α_r|)`.
pub fn adapted_jacobian(alpha: &[f64], h: f64) -> Result<DMatrix<f64>> {
    let n = alpha.len();
    let mut jac = DMatrix::<f64>::zeros(n, n);
    for r in 0..n {
        let step = 1e-6 * alpha[r].abs().max(1.0);
        let mut plus = alpha.to_vec();
        plus[r] += step;
        let mut minus = alpha.to_vec();
        minus[r] -= step;
        let ap = ct_denominator_from_alpha(&plus, h)?;
        let am = ct_denominator_from_alpha(&minus, h)?;
        for s in 0..n {
            jac[(s, r)] = (ap[s] - am[s]) / (2.0 * step);
        }
    }
    Ok(jac)
}

/// Instrument numerators `M_{d,r}(q)`, `r = 1..n`: `M_{d,r} / A_d^2` is the
/// ZOH equivalent of `(Σ_s p^s ∂a_s/∂α_r) B_c(p) / A_c(p)^2`, so
/// `-M_{d,r}/A_d^2 u` is the derivative of the model output along `α_r`.
pub fn instrument_polys(rho: &AdaptedDtModel) -> Result<Vec<Poly>> {
    let n = rho.n();
    let h = rho.h();
    let jac = adapted_jacobian(rho.alpha(), h)?;
    let c = cond(&jac);
    if !(c <= 1e12) {
        return Err(Error::JacobianSingular(c));
    }
    let mut den = vec![1.0];
    den.extend_from_slice(rho.ct_denominator());
    let den = Poly::new(den);
    let b_c = Poly::new(rho.gamma().to_vec());
    let base = monic_alpha(rho.alpha());
    let den_q = &base * &base;
    let an = rho.alpha()[n - 1];
    (0..n)
        .map(|r| {
            let mut x = vec![0.0; n + 1];
            for s in 0..n {
                x[s + 1] = jac[(s, r)];
            }
            let x = &Poly::new(x) * &b_c;
            Ok(zoh_over_squared_with(&x, &den, h, &den_q)?.scale(an * an))
        })
        .collect()
}

/// Relative degree of the ZOH equivalent read off the sampled step response:
/// the first `r` with `y(rh)` above `1e-10` of the window maximum. Returns
/// `r_max + 1` when every sample in the window is negligible.
pub fn relative_degree_from_step(ct: &impl TransferFunction, h: f64, r_max: usize) -> Result<usize> {
    check_period(h)?;
    let ss = balanced(&to_state_space(ct)?);
    if ss.d != 0.0 {
        return Ok(0);
    }
    if ss.order() == 0 {
        return Ok(r_max + 1);
    }
    let (phi, gamma) = discretize_ss(&ss, h);
    let mut x = DVector::<f64>::zeros(ss.order());
    let mut samples = Vec::with_capacity(r_max);
    for _ in 0..r_max {
        x = &phi * x + &gamma;
        samples.push((&ss.c * &x)[0]);
    }
    let peak = samples.iter().fold(0.0f64, |m, y| m.max(y.abs()));
    if peak == 0.0 {
        return Ok(r_max + 1);
    }
    Ok(samples
        .iter()
        .position(|y| y.abs() > 1e-10 * peak)
        .map(|k| k + 1)
        .unwrap_or(r_max + 1))
}
