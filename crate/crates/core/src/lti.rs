//! Transfer-function models in both time domains.
//!
//! Denominators are stored with their constant term fixed to one:
//! `A_c(p) = a_n p^n + ... + a_1 p + 1` and `A_d(q) = α_n q^n + ... + α_1 q + 1`.
//! Parameter vectors are laid out as `[a_1, ..., a_n, b_0, ..., b_m]` in both
//! domains; that layout is the on-disk contract of the command-line tool.

use nalgebra::{DMatrix, DVector, RowDVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::poly::Poly;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Domain {
    Continuous,
    Discrete { h: f64 },
}

/// Anything with a numerator and denominator polynomial in a known domain.
pub trait TransferFunction {
    fn numerator(&self) -> Poly;
    fn denominator(&self) -> Poly;
    fn domain(&self) -> Domain;

    fn poles(&self) -> Result<Vec<Complex64>> {
        let den = self.denominator();
        if den.trim().degree() == 0 {
            return Ok(Vec::new());
        }
        den.roots()
    }
}

/// Unnormalized rational transfer function, used for filters and for systems
/// the constant-term-one convention cannot represent (integrators).
#[derive(Debug, Clone, PartialEq)]
pub struct Rational {
    pub num: Poly,
    pub den: Poly,
    pub domain: Domain,
}

impl Rational {
    pub fn new(num: Poly, den: Poly, domain: Domain) -> Self {
        Rational { num, den, domain }
    }
}

impl TransferFunction for Rational {
    fn numerator(&self) -> Poly {
        self.num.clone()
    }
    fn denominator(&self) -> Poly {
        self.den.clone()
    }
    fn domain(&self) -> Domain {
        self.domain
    }
}

fn check_finite(v: &[f64], what: &str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidModel(format!("non-finite {what} coefficient")))
    }
}

/// Continuous-time model `B_c(p) / A_c(p)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CtModel {
    a: Vec<f64>,
    b: Vec<f64>,
}

impl CtModel {
    /// `a = [a_1..a_n]`, `b = [b_0..b_m]` with `m <= n` and `a_n != 0`.
    pub fn new(a: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        check_finite(&a, "denominator")?;
        check_finite(&b, "numerator")?;
        if b.is_empty() {
            return Err(Error::InvalidModel("empty numerator".into()));
        }
        if let Some(&an) = a.last() {
            if an == 0.0 {
                return Err(Error::SingularDenominator);
            }
        }
        if b.len() > a.len() + 1 {
            return Err(Error::InvalidModel(format!(
                "improper model: numerator degree {} exceeds order {}",
                b.len() - 1,
                a.len()
            )));
        }
        Ok(CtModel { a, b })
    }

    /// Unpack `[a_1..a_n, b_0..b_m]` for a known order `n`.
    pub fn from_params(theta: &[f64], n: usize) -> Result<Self> {
        if theta.len() <= n {
            return Err(Error::InvalidModel(format!(
                "parameter vector of length {} too short for order {n}",
                theta.len()
            )));
        }
        CtModel::new(theta[..n].to_vec(), theta[n..].to_vec())
    }

    /// Normalize an arbitrary `num / den` to the constant-term-one convention.
    pub fn from_polys(num: &Poly, den: &Poly) -> Result<Self> {
        let den = den.trim();
        let c0 = den.coeff(0);
        if c0 == 0.0 {
            return Err(Error::DegenerateNormalization);
        }
        let n = den.degree();
        let a = (1..=n).map(|k| den.coeff(k) / c0).collect();
        let m = num.degree();
        let b = (0..=m).map(|k| num.coeff(k) / c0).collect();
        CtModel::new(a, b)
    }

    pub fn a(&self) -> &[f64] {
        &self.a
    }
    pub fn b(&self) -> &[f64] {
        &self.b
    }
    pub fn n(&self) -> usize {
        self.a.len()
    }
    pub fn m(&self) -> usize {
        self.b.len() - 1
    }

    pub fn params(&self) -> Vec<f64> {
        let mut v = self.a.clone();
        v.extend_from_slice(&self.b);
        v
    }

    /// Same denominator, numerator padded with zeros (or truncated) to `m + 1` terms.
    pub fn with_numerator_len(&self, len: usize) -> Result<Self> {
        let mut b = self.b.clone();
        b.resize(len, 0.0);
        CtModel::new(self.a.clone(), b)
    }

    pub fn rational(&self) -> Rational {
        Rational::new(self.numerator(), self.denominator(), Domain::Continuous)
    }
}

impl TransferFunction for CtModel {
    fn numerator(&self) -> Poly {
        Poly::new(self.b.clone())
    }
    fn denominator(&self) -> Poly {
        let mut c = vec![1.0];
        c.extend_from_slice(&self.a);
        Poly::new(c)
    }
    fn domain(&self) -> Domain {
        Domain::Continuous
    }
}

/// Discrete-time model `B_d(q) / A_d(q)` with sampling period `h`.
///
/// `beta` holds `n` coefficients for strictly proper models (the `β_n = 0`
/// entry is omitted) and `n + 1` for biproper ones.
#[derive(Debug, Clone, PartialEq)]
pub struct DtModel {
    alpha: Vec<f64>,
    beta: Vec<f64>,
    h: f64,
}

impl DtModel {
    pub fn new(alpha: Vec<f64>, beta: Vec<f64>, h: f64) -> Result<Self> {
        check_finite(&alpha, "denominator")?;
        check_finite(&beta, "numerator")?;
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::InvalidInput(format!("sampling period must be positive, got {h}")));
        }
        if beta.is_empty() {
            return Err(Error::InvalidModel("empty numerator".into()));
        }
        if let Some(&an) = alpha.last() {
            if an == 0.0 {
                return Err(Error::SingularDenominator);
            }
        }
        if beta.len() > alpha.len() + 1 {
            return Err(Error::InvalidModel("improper DT model".into()));
        }
        Ok(DtModel { alpha, beta, h })
    }

    pub fn from_params(theta: &[f64], n: usize, h: f64) -> Result<Self> {
        if theta.len() <= n {
            return Err(Error::InvalidModel(format!(
                "parameter vector of length {} too short for order {n}",
                theta.len()
            )));
        }
        DtModel::new(theta[..n].to_vec(), theta[n..].to_vec(), h)
    }

    /// Normalize `num(q) / den(q)`. A pole at `z = 0` cannot be represented.
    /// The numerator keeps `n` coefficients unless it has degree `n`.
    pub fn from_polys(num: &Poly, den: &Poly, h: f64) -> Result<Self> {
        let den = den.trim();
        let c0 = den.coeff(0);
        if c0 == 0.0 {
            return Err(Error::DegenerateNormalization);
        }
        let n = den.degree();
        let alpha = (1..=n).map(|k| den.coeff(k) / c0).collect();
        let len = if num.degree() >= n { n + 1 } else { n.max(1) };
        let beta = (0..len).map(|k| num.coeff(k) / c0).collect();
        DtModel::new(alpha, beta, h)
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }
    pub fn beta(&self) -> &[f64] {
        &self.beta
    }
    pub fn h(&self) -> f64 {
        self.h
    }
    pub fn n(&self) -> usize {
        self.alpha.len()
    }
    /// Highest stored numerator power.
    pub fn m(&self) -> usize {
        self.beta.len() - 1
    }
    pub fn is_biproper(&self) -> bool {
        self.beta.len() == self.alpha.len() + 1 && self.beta[self.alpha.len()] != 0.0
    }

    pub fn params(&self) -> Vec<f64> {
        let mut v = self.alpha.clone();
        v.extend_from_slice(&self.beta);
        v
    }

    pub fn rational(&self) -> Rational {
        Rational::new(self.numerator(), self.denominator(), self.domain())
    }
}

impl TransferFunction for DtModel {
    fn numerator(&self) -> Poly {
        Poly::new(self.beta.clone())
    }
    fn denominator(&self) -> Poly {
        let mut c = vec![1.0];
        c.extend_from_slice(&self.alpha);
        Poly::new(c)
    }
    fn domain(&self) -> Domain {
        Domain::Discrete { h: self.h }
    }
}

/// SISO state-space realization.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub c: RowDVector<f64>,
    pub d: f64,
}

impl StateSpace {
    pub fn order(&self) -> usize {
        self.a.nrows()
    }

    /// `C (ξI - A)^{-1} B + D`.
    pub fn eval(&self, z: Complex64) -> Result<Complex64> {
        let n = self.order();
        if n == 0 {
            return Ok(Complex64::new(self.d, 0.0));
        }
        let m = DMatrix::<Complex64>::from_fn(n, n, |i, j| {
            let diag = if i == j { z } else { Complex64::new(0.0, 0.0) };
            diag - self.a[(i, j)]
        });
        let rhs = self.b.map(|x| Complex64::new(x, 0.0));
        let x = m.lu().solve(&rhs).ok_or(Error::PoleEvaluation)?;
        let y: Complex64 = (0..n).map(|i| x[i] * self.c[i]).sum();
        Ok(y + self.d)
    }
}

/// Controllable companion realization in the layout
/// `last row = [-1/a_n, -a_1/a_n, ..., -a_{n-1}/a_n]`, `B = e_n / a_n`.
/// With this input scaling, state `k` carries `ξ^{k-1} / A(ξ) u`.
pub fn to_state_space(model: &impl TransferFunction) -> Result<StateSpace> {
    let den = model.denominator().trim();
    let n = den.degree();
    let lead = den.coeff(n);
    if lead == 0.0 {
        return Err(Error::SingularDenominator);
    }
    let num = model.numerator().trim();
    if num.degree() > n && !num.is_zero() {
        return Err(Error::InvalidModel("improper transfer function".into()));
    }
    if n == 0 {
        return Ok(StateSpace {
            a: DMatrix::zeros(0, 0),
            b: DVector::zeros(0),
            c: RowDVector::zeros(0),
            d: num.coeff(0) / lead,
        });
    }
    let mut a = DMatrix::<f64>::zeros(n, n);
    for i in 0..n - 1 {
        a[(i, i + 1)] = 1.0;
    }
    for j in 0..n {
        a[(n - 1, j)] = -den.coeff(j) / lead;
    }
    let mut b = DVector::<f64>::zeros(n);
    b[n - 1] = 1.0 / lead;
    let d = num.coeff(n) / lead;
    let c = RowDVector::from_fn(n, |_, j| num.coeff(j) - d * den.coeff(j));
    Ok(StateSpace { a, b, c, d })
}

/// `B(z) / A(z)` in the model's own variable.
pub fn tf_eval(model: &impl TransferFunction, z: Complex64) -> Result<Complex64> {
    let den = model.denominator();
    let dz = den.eval_complex(z);
    let scale: f64 = den
        .coeffs()
        .iter()
        .enumerate()
        .map(|(k, c)| c.abs() * z.norm().powi(k as i32))
        .sum();
    if dz.norm() <= 1e-14 * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::PoleEvaluation);
    }
    Ok(model.numerator().eval_complex(z) / dz)
}

/// CT: every pole strictly in the open left half-plane. DT: every pole
/// strictly inside the unit circle. No margin.
pub fn is_stable(model: &impl TransferFunction) -> bool {
    let poles = match model.poles() {
        Ok(p) => p,
        Err(_) => return false,
    };
    match model.domain() {
        Domain::Continuous => poles.iter().all(|p| p.re < 0.0),
        Domain::Discrete { .. } => poles.iter().all(|p| p.norm() < 1.0),
    }
}

/// `deg A - deg B` of the trimmed polynomials.
pub fn relative_degree(model: &impl TransferFunction) -> Result<usize> {
    let num = model.numerator();
    if num.is_zero() {
        return Err(Error::ZeroNumerator);
    }
    let dn = model.denominator().degree();
    let nn = num.degree();
    if nn > dn {
        return Err(Error::InvalidModel("improper transfer function".into()));
    }
    Ok(dn - nn)
}

/// Transfer function of a realization, returned in the model's normalization.
/// Same transfer function in the coordinates `x = D x'` that balance the
/// dynamics matrix. Companion forms of models with spread-out poles have norms
/// in the thousands, and every later step loses accuracy in proportion.
pub(crate) fn balanced(ss: &StateSpace) -> StateSpace {
    let d = crate::linalg::balance(&ss.a);
    let n = ss.order();
    StateSpace {
        a: DMatrix::from_fn(n, n, |i, j| ss.a[(i, j)] * d[j] / d[i]),
        b: DVector::from_fn(n, |i, _| ss.b[i] / d[i]),
        c: RowDVector::from_fn(n, |_, j| ss.c[j] * d[j]),
        d: ss.d,
    }
}

pub fn state_space_to_polys(ss: &StateSpace) -> (Poly, Poly) {
    let ss = &balanced(ss);
    let den = crate::linalg::char_poly(&ss.a);
    let num = markov_numerator(&ss.a, &ss.b, &ss.c, ss.d, &den);
    (num, den)
}

/// Numerator of `C (ξI - F)^{-1} G + D` over a known monic denominator
/// `den(ξ) = det(ξI - F)`, from the Markov parameters `C F^{k-1} G`.
/// Callers pass balanced realizations.
pub(crate) fn markov_numerator(
    f: &DMatrix<f64>,
    g: &DVector<f64>,
    c: &RowDVector<f64>,
    d: f64,
    den: &Poly,
) -> Poly {
    let n = f.nrows();
    // den = ξ^n + d_1 ξ^{n-1} + ... ; descending coefficients
    let desc: Vec<f64> = (0..=n).map(|i| den.coeff(n - i)).collect();
    let mut markov = Vec::with_capacity(n);
    let mut v = g.clone();
    for _ in 0..n {
        markov.push((c * &v)[0]);
        v = f * v;
    }
    let mut num = vec![0.0; n + 1];
    for k in 1..=n {
        let s: f64 = (0..k).map(|i| desc[i] * markov[k - 1 - i]).sum();
        num[n - k] = s;
    }
    for (k, c) in num.iter_mut().enumerate() {
        *c += d * den.coeff(k);
    }
    Poly::new(num)
}

/// ARMA noise model `v = C(q)/D(q) e` with `C = 1 + c_1 q^{-1} + ...` and
/// `D = 1 + d_1 q^{-1} + ...`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NoiseModel {
    c: Vec<f64>,
    d: Vec<f64>,
}

impl NoiseModel {
    pub fn new(c: Vec<f64>, d: Vec<f64>) -> Result<Self> {
        if d.len() < c.len() {
            return Err(Error::InvalidModel(format!(
                "noise orders need n_d >= m_c, got m_c={} n_d={}",
                c.len(),
                d.len()
            )));
        }
        if c.iter().chain(&d).any(|x| !x.is_finite()) {
            return Err(Error::InvalidModel("non-finite noise parameter".into()));
        }
        Ok(NoiseModel { c, d })
    }

    /// `C = D = 1`.
    pub fn white() -> Self {
        NoiseModel::default()
    }

    /// Zero-valued parameters of the given orders.
    pub fn zeros(m_c: usize, n_d: usize) -> Self {
        NoiseModel { c: vec![0.0; m_c], d: vec![0.0; n_d] }
    }

    pub fn c(&self) -> &[f64] {
        &self.c
    }
    pub fn d(&self) -> &[f64] {
        &self.d
    }

    /// `[1, c_1, ..., c_{m_c}]` in ascending powers of `q^{-1}`.
    pub fn c_backward(&self) -> Vec<f64> {
        std::iter::once(1.0).chain(self.c.iter().copied()).collect()
    }

    /// `[1, d_1, ..., d_{n_d}]` in ascending powers of `q^{-1}`.
    pub fn d_backward(&self) -> Vec<f64> {
        std::iter::once(1.0).chain(self.d.iter().copied()).collect()
    }

    /// `[d_1..d_{n_d}, c_1..c_{m_c}]`.
    pub fn params(&self) -> Vec<f64> {
        self.d.iter().chain(&self.c).copied().collect()
    }

    pub fn is_white(&self) -> bool {
        self.c.iter().chain(&self.d).all(|&x| x == 0.0)
    }

    /// Roots of `C` and `D` (as polynomials in `q`) strictly inside the unit circle.
    pub fn is_stable_invertible(&self) -> bool {
        let inside = |p: &[f64]| {
            let poly = Poly::new(p.iter().rev().copied().collect());
            match poly.roots() {
                Ok(r) => r.iter().all(|z| z.norm() < 1.0),
                Err(_) => true,
            }
        };
        inside(&self.c_backward()) && inside(&self.d_backward())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn rao_garnier() -> CtModel {
        CtModel::new(vec![0.26, 0.255, 0.003125, 0.000625], vec![1.0, -4.0]).unwrap()
    }

    #[test]
    fn noise_model_orders_and_stability() {
        assert!(NoiseModel::new(vec![0.4, 0.1], vec![-0.7]).is_err());
        let h = NoiseModel::new(vec![0.4], vec![-0.7]).unwrap();
        assert!(h.is_stable_invertible());
        assert_eq!(h.params(), vec![-0.7, 0.4]);
        assert!(!NoiseModel::new(vec![], vec![-1.2]).unwrap().is_stable_invertible());
        assert!(NoiseModel::white().is_white());
    }

    #[test]
    fn first_order_state_space() {
        let m = CtModel::new(vec![1.0], vec![1.0]).unwrap();
        let ss = to_state_space(&m).unwrap();
        assert_eq!(ss.a[(0, 0)], -1.0);
        assert_eq!(ss.b[0], 1.0);
        assert_eq!(ss.c[0], 1.0);
        assert_eq!(ss.d, 0.0);
    }

    #[test]
    fn biproper_pass_through() {
        let m = DtModel::new(vec![-0.5, 0.2], vec![0.1, 0.3, 0.2], 0.1).unwrap();
        let ss = to_state_space(&m).unwrap();
        assert!((ss.d - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rao_garnier_companion_last_row() {
        let ss = to_state_space(&rao_garnier()).unwrap();
        let expected = [-1600.0, -416.0, -408.0, -5.0];
        for (j, e) in expected.iter().enumerate() {
            assert!((ss.a[(3, j)] - e).abs() < 1e-9, "{} vs {e}", ss.a[(3, j)]);
        }
    }

    #[test]
    fn rao_garnier_poles() {
        let m = rao_garnier();
        let poles = m.poles().unwrap();
        assert_eq!(poles.len(), 4);
        let den = m.denominator();
        for p in &poles {
            assert!(den.eval_complex(*p).norm() < 1e-8);
        }
        let mut im: Vec<f64> = poles.iter().map(|p| p.im.abs()).collect();
        im.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((im[0] - 1.936_491_673).abs() < 1e-6);
        assert!((im[3] - 19.899_748_74).abs() < 1e-6);
        assert!(is_stable(&m));
    }

    #[test]
    fn tf_eval_examples() {
        let m = CtModel::new(vec![1.0], vec![1.0]).unwrap();
        let g0 = tf_eval(&m, Complex64::new(0.0, 0.0)).unwrap();
        assert_eq!(g0, Complex64::new(1.0, 0.0));
        let gj = tf_eval(&m, Complex64::new(0.0, 1.0)).unwrap();
        assert!((gj - Complex64::new(0.5, -0.5)).norm() < 1e-15);
        assert_eq!(
            tf_eval(&m, Complex64::new(-1.0, 0.0)),
            Err(Error::PoleEvaluation)
        );
        let rg = tf_eval(&rao_garnier(), Complex64::new(0.0, 0.0)).unwrap();
        assert_eq!(rg, Complex64::new(1.0, 0.0));
    }

    #[test]
    fn stability_boundaries() {
        let unstable = CtModel::new(vec![-1.0], vec![1.0]).unwrap();
        assert!(!is_stable(&unstable));
        // pole at z: 1 - z^{-1}... A_d(q) = 1 + α_1 q with root -1/α_1
        let inside = DtModel::new(vec![-1.0 / 0.999], vec![1.0], 0.1).unwrap();
        let outside = DtModel::new(vec![-1.0 / 1.001], vec![1.0], 0.1).unwrap();
        assert!(is_stable(&inside));
        assert!(!is_stable(&outside));
        // exactly on the unit circle is unstable
        let on = DtModel::new(vec![-1.0], vec![1.0], 0.1).unwrap();
        assert!(!is_stable(&on));
    }

    #[test]
    fn relative_degrees() {
        assert_eq!(relative_degree(&rao_garnier()).unwrap(), 3);
        let bi = CtModel::new(vec![1.0], vec![1.0, 2.0]).unwrap();
        assert_eq!(relative_degree(&bi).unwrap(), 0);
        let zero = CtModel::new(vec![1.0], vec![0.0]).unwrap();
        assert_eq!(relative_degree(&zero), Err(Error::ZeroNumerator));
    }

    #[test]
    fn degenerate_normalization_rejected() {
        let num = Poly::new(vec![1.0]);
        let den = Poly::new(vec![0.0, 0.5, 1.0]);
        assert_eq!(
            DtModel::from_polys(&num, &den, 0.1),
            Err(Error::DegenerateNormalization)
        );
    }

    #[test]
    fn state_space_round_trip_rao_garnier() {
        let m = rao_garnier();
        let ss = to_state_space(&m).unwrap();
        let (num, den) = state_space_to_polys(&ss);
        let back = CtModel::from_polys(&num, &den).unwrap();
        for (x, y) in back.a().iter().zip(m.a()) {
            assert!((x - y).abs() <= 1e-10 * y.abs());
        }
        for (x, y) in back.b().iter().zip(m.b()) {
            assert!((x - y).abs() <= 1e-10 * y.abs().max(1.0));
        }
    }
}
