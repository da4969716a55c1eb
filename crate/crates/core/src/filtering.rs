//! Prefiltering of sampled signals and assembly of the filtered regressor,
//! instrument and output for every estimator variant.
//!
//! CT filters are applied by discretizing them under ZOH and running the DT
//! recursion, which is exact at the sampling instants. Every filter starts
//! from zero initial conditions.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::lti::{CtModel, DtModel, NoiseModel, TransferFunction};
use crate::poly::Poly;
use crate::sampling::{
    instrument_polys, zoh_discretize, zoh_over_squared, zoh_rational, AdaptedDtModel,
};

/// Uniformly sampled real signal.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledSignal {
    values: Vec<f64>,
    h: f64,
}

impl SampledSignal {
    pub fn new(values: Vec<f64>, h: f64) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::InvalidInput(format!("sampling period must be positive, got {h}")));
        }
        if values.is_empty() {
            return Err(Error::InsufficientData("empty signal".into()));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite sample at index {k}")));
        }
        Ok(SampledSignal { values, h })
    }

    /// No validation; filter outputs may legitimately blow up.
    pub(crate) fn from_raw(values: Vec<f64>, h: f64) -> Self {
        SampledSignal { values, h }
    }

    pub fn zeros(len: usize, h: f64) -> Self {
        SampledSignal { values: vec![0.0; len], h }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
    pub fn h(&self) -> f64 {
        self.h
    }
    pub fn len(&self) -> usize {
        self.values.len()
    }
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Causal DT filter in `q^{-1}` normal form:
/// `a_0 y(k) + a_1 y(k-1) + ... = b_0 x(k) + b_1 x(k-1) + ...`, stored with `a_0 = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct DtFilter {
    b: Vec<f64>,
    a: Vec<f64>,
}

impl DtFilter {
    pub fn from_backward(b: Vec<f64>, a: Vec<f64>) -> Result<Self> {
        let a0 = a.first().copied().unwrap_or(0.0);
        if a0 == 0.0 {
            return Err(Error::SingularDenominator);
        }
        let mut b: Vec<f64> = b.iter().map(|x| x / a0).collect();
        let mut a: Vec<f64> = a.iter().map(|x| x / a0).collect();
        while b.len() > 1 && b[b.len() - 1] == 0.0 {
            b.pop();
        }
        if b.is_empty() {
            b.push(0.0);
        }
        while a.len() > 1 && a[a.len() - 1] == 0.0 {
            a.pop();
        }
        Ok(DtFilter { b, a })
    }

    /// `num(q) / den(q)` with both polynomials in ascending powers of `q`.
    pub fn from_q(num: &Poly, den: &Poly) -> Result<Self> {
        let den = den.trim();
        if den.is_zero() {
            return Err(Error::SingularDenominator);
        }
        let n = den.degree();
        if !num.is_zero() && num.degree() > n {
            return Err(Error::ImproperFilter);
        }
        let b = (0..=n).map(|k| num.coeff(n - k)).collect();
        let a = (0..=n).map(|k| den.coeff(n - k)).collect();
        DtFilter::from_backward(b, a)
    }

    pub fn identity() -> Self {
        DtFilter { b: vec![1.0], a: vec![1.0] }
    }

    pub fn is_identity(&self) -> bool {
        self.b == [1.0] && self.a == [1.0]
    }

    /// Denominator roots (in `q`) strictly inside the unit circle.
    pub fn is_stable(&self) -> bool {
        if self.a.len() < 2 {
            return true;
        }
        let den = Poly::new(self.a.iter().rev().copied().collect());
        match den.roots() {
            Ok(r) => r.iter().all(|z| z.norm() < 1.0),
            Err(_) => true,
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; x.len()];
        for k in 0..x.len() {
            let mut acc = 0.0;
            for (j, bj) in self.b.iter().enumerate().take(k + 1) {
                acc += bj * x[k - j];
            }
            for (j, aj) in self.a.iter().enumerate().take(k + 1).skip(1) {
                acc -= aj * y[k - j];
            }
            y[k] = acc;
        }
        y
    }
}

/// Filter output plus the instability flag; the caller decides whether an
/// unstable denominator is acceptable.
#[derive(Debug, Clone, PartialEq)]
pub struct Filtered {
    pub signal: SampledSignal,
    pub unstable: bool,
}

/// Apply `num(q)/den(q)` to `x` with zero initial conditions.
pub fn dt_filter(num: &Poly, den: &Poly, x: &SampledSignal) -> Result<Filtered> {
    let f = DtFilter::from_q(num, den)?;
    Ok(Filtered {
        signal: SampledSignal::from_raw(f.apply(x.values()), x.h()),
        unstable: !f.is_stable(),
    })
}

/// Apply the CT filter `num(p)/den(p)` to the ZOH reconstruction of `x` and
/// sample the output.
pub fn ct_filter_sampled(num: &Poly, den: &Poly, x: &SampledSignal) -> Result<Filtered> {
    let (nq, dq) = zoh_rational(num, den, x.h())?;
    dt_filter(&nq, &dq, x)
}

/// The system part of a model in any of the three parametrizations.
#[derive(Debug, Clone, PartialEq)]
pub enum SystemModel {
    Discrete(DtModel),
    Continuous(CtModel),
    Adapted(AdaptedDtModel),
}

impl SystemModel {
    /// `θ` for the standard kinds, `ρ` for the adapted one.
    pub fn params(&self) -> Vec<f64> {
        match self {
            SystemModel::Discrete(m) => m.params(),
            SystemModel::Continuous(m) => m.params(),
            SystemModel::Adapted(m) => m.params(),
        }
    }

    pub fn n(&self) -> usize {
        match self {
            SystemModel::Discrete(m) => m.n(),
            SystemModel::Continuous(m) => m.n(),
            SystemModel::Adapted(m) => m.n(),
        }
    }

    /// Number of numerator parameters.
    pub fn numerator_len(&self) -> usize {
        match self {
            SystemModel::Discrete(m) => m.beta().len(),
            SystemModel::Continuous(m) => m.b().len(),
            SystemModel::Adapted(m) => m.gamma().len(),
        }
    }

    /// A model of the same kind and orders carrying new parameters.
    pub fn with_params(&self, theta: &[f64]) -> Result<SystemModel> {
        let n = self.n();
        if theta.len() != n + self.numerator_len() {
            return Err(Error::InvalidInput(format!(
                "expected {} parameters, got {}",
                n + self.numerator_len(),
                theta.len()
            )));
        }
        Ok(match self {
            SystemModel::Discrete(m) => SystemModel::Discrete(DtModel::from_params(theta, n, m.h())?),
            SystemModel::Continuous(_) => SystemModel::Continuous(CtModel::from_params(theta, n)?),
            SystemModel::Adapted(m) => {
                SystemModel::Adapted(AdaptedDtModel::from_params(theta, n, m.h())?)
            }
        })
    }

    /// DT transfer function acting on samples with period `h`.
    pub fn to_dt(&self, h: f64) -> Result<DtModel> {
        match self {
            SystemModel::Discrete(m) => Ok(m.clone()),
            SystemModel::Continuous(m) => zoh_discretize(m, h),
            SystemModel::Adapted(m) => m.to_dt_model(),
        }
    }

    /// Noise-free model output for a ZOH input.
    pub fn simulate(&self, u: &SampledSignal) -> Result<SampledSignal> {
        let dt = self.to_dt(u.h())?;
        let f = DtFilter::from_q(&dt.numerator(), &dt.denominator())?;
        Ok(SampledSignal::from_raw(f.apply(u.values()), u.h()))
    }
}

/// Filtered regressor, instrument and output with the warm-up rows dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionData {
    pub regressors: DMatrix<f64>,
    pub instruments: DMatrix<f64>,
    pub outputs: DVector<f64>,
}

/// The `D/C` whitening prefilter.
pub fn noise_prefilter(noise: &NoiseModel) -> Result<DtFilter> {
    DtFilter::from_backward(noise.d_backward(), noise.c_backward())
}

fn prefiltered(noise: &NoiseModel, x: &SampledSignal) -> Result<Vec<f64>> {
    let f = noise_prefilter(noise)?;
    if f.is_identity() {
        Ok(x.values().to_vec())
    } else {
        Ok(f.apply(x.values()))
    }
}

fn check_pair(u: &SampledSignal, y: &SampledSignal) -> Result<()> {
    if u.len() != y.len() {
        return Err(Error::InvalidInput(format!(
            "input has {} samples, output {}",
            u.len(),
            y.len()
        )));
    }
    if (u.h() - y.h()).abs() > 1e-12 * u.h() {
        return Err(Error::InvalidInput("input and output sampling periods differ".into()));
    }
    Ok(())
}

fn dt_den(m: &DtModel) -> Poly {
    m.denominator()
}

fn ct_filter(num: &Poly, den: &Poly, h: f64) -> Result<DtFilter> {
    let (nq, dq) = zoh_rational(num, den, h)?;
    DtFilter::from_q(&nq, &dq)
}

/// Filters producing the output columns `-ξ^i/A y`, `i = 1..n`.
fn output_column_filters(model: &SystemModel, h: f64) -> Result<Vec<DtFilter>> {
    let n = model.n();
    match model {
        SystemModel::Discrete(m) => {
            let a = dt_den(m);
            (1..=n).map(|i| DtFilter::from_q(&Poly::monomial(i, -1.0), &a)).collect()
        }
        SystemModel::Adapted(m) => {
            let a = m.denominator();
            (1..=n).map(|i| DtFilter::from_q(&Poly::monomial(i, -1.0), &a)).collect()
        }
        SystemModel::Continuous(m) => {
            let a = m.denominator();
            (1..=n).map(|i| ct_filter(&Poly::monomial(i, -1.0), &a, h)).collect()
        }
    }
}

/// Filters producing the input columns shared by regressor and instrument.
fn input_column_filters(model: &SystemModel, h: f64) -> Result<Vec<DtFilter>> {
    let len = model.numerator_len();
    match model {
        SystemModel::Discrete(m) => {
            let a = dt_den(m);
            (0..len).map(|i| DtFilter::from_q(&Poly::monomial(i, 1.0), &a)).collect()
        }
        SystemModel::Adapted(m) => {
            let a = m.denominator();
            m.basis().iter().map(|ni| DtFilter::from_q(ni, &a)).collect()
        }
        SystemModel::Continuous(m) => {
            let a = m.denominator();
            (0..len).map(|i| ct_filter(&Poly::monomial(i, 1.0), &a, h)).collect()
        }
    }
}

/// Filters producing the instrument's denominator columns, i.e. the model
/// output gradient with respect to the denominator parameters.
fn gradient_column_filters(model: &SystemModel, h: f64) -> Result<Vec<DtFilter>> {
    let n = model.n();
    match model {
        SystemModel::Discrete(m) => {
            let a = dt_den(m);
            let a2 = &a * &a;
            let b = m.numerator();
            (1..=n)
                .map(|i| DtFilter::from_q(&(&Poly::monomial(i, -1.0) * &b), &a2))
                .collect()
        }
        SystemModel::Adapted(m) => {
            let a = m.denominator();
            let a2 = &a * &a;
            instrument_polys(m)?
                .iter()
                .map(|mr| DtFilter::from_q(&-mr, &a2))
                .collect()
        }
        SystemModel::Continuous(m) => {
            let a = m.denominator();
            let b = m.numerator();
            (1..=n)
                .map(|i| {
                    let x = &Poly::monomial(i, -1.0) * &b;
                    let (nq, dq) = zoh_over_squared(&x, &a, h)?;
                    DtFilter::from_q(&nq, &dq)
                })
                .collect()
        }
    }
}

fn output_filter(model: &SystemModel, h: f64) -> Result<DtFilter> {
    match model {
        SystemModel::Discrete(m) => DtFilter::from_q(&Poly::one(), &dt_den(m)),
        SystemModel::Adapted(m) => DtFilter::from_q(&Poly::one(), &m.denominator()),
        SystemModel::Continuous(m) => ct_filter(&Poly::one(), &m.denominator(), h),
    }
}

fn columns(filters: &[DtFilter], x: &[f64]) -> Vec<Vec<f64>> {
    filters.iter().map(|f| f.apply(x)).collect()
}

fn to_matrix(cols: &[Vec<f64>], skip: usize) -> DMatrix<f64> {
    let rows = cols.first().map_or(0, |c| c.len().saturating_sub(skip));
    DMatrix::from_fn(rows, cols.len(), |i, j| cols[j][i + skip])
}

/// Filtered regressor: `n` output columns then the input columns.
pub fn build_regressor(
    model: &SystemModel,
    noise: &NoiseModel,
    u: &SampledSignal,
    y: &SampledSignal,
) -> Result<DMatrix<f64>> {
    check_pair(u, y)?;
    let (uf, yf) = (prefiltered(noise, u)?, prefiltered(noise, y)?);
    let mut cols = columns(&output_column_filters(model, u.h())?, &yf);
    cols.extend(columns(&input_column_filters(model, u.h())?, &uf));
    Ok(to_matrix(&cols, 0))
}

/// Filtered instrument: the prefiltered gradient of the model output with
/// respect to the parameters. Uses the input only.
pub fn build_instrument(
    model: &SystemModel,
    noise: &NoiseModel,
    u: &SampledSignal,
) -> Result<DMatrix<f64>> {
    let uf = prefiltered(noise, u)?;
    let mut cols = columns(&gradient_column_filters(model, u.h())?, &uf);
    cols.extend(columns(&input_column_filters(model, u.h())?, &uf));
    Ok(to_matrix(&cols, 0))
}

/// Regressor of the adapted parametrization: `-q^i/A_d y` and `N_{d,i}/A_d u`.
pub fn build_adapted_regressor(
    rho: &AdaptedDtModel,
    noise: &NoiseModel,
    u: &SampledSignal,
    y: &SampledSignal,
) -> Result<DMatrix<f64>> {
    build_regressor(&SystemModel::Adapted(rho.clone()), noise, u, y)
}

/// Instrument of the adapted parametrization: `-M_{d,r}/A_d² u` and `N_{d,i}/A_d u`.
pub fn build_adapted_instrument(
    rho: &AdaptedDtModel,
    noise: &NoiseModel,
    u: &SampledSignal,
) -> Result<DMatrix<f64>> {
    build_instrument(&SystemModel::Adapted(rho.clone()), noise, u)
}

/// `(D/C)(1/A) y`, prefilter first.
pub fn build_filtered_output(
    model: &SystemModel,
    noise: &NoiseModel,
    y: &SampledSignal,
) -> Result<DVector<f64>> {
    let yf = prefiltered(noise, y)?;
    Ok(DVector::from_vec(output_filter(model, y.h())?.apply(&yf)))
}

/// Everything one IV step needs, with the first `n_skip` rows dropped.
pub fn build_regression(
    model: &SystemModel,
    noise: &NoiseModel,
    u: &SampledSignal,
    y: &SampledSignal,
    n_skip: usize,
) -> Result<RegressionData> {
    check_pair(u, y)?;
    let h = u.h();
    let (uf, yf) = (prefiltered(noise, u)?, prefiltered(noise, y)?);
    let input_cols = columns(&input_column_filters(model, h)?, &uf);
    let mut reg = columns(&output_column_filters(model, h)?, &yf);
    reg.extend(input_cols.iter().cloned());
    let mut inst = columns(&gradient_column_filters(model, h)?, &uf);
    inst.extend(input_cols);
    let out = output_filter(model, h)?.apply(&yf);
    if n_skip >= out.len() {
        return Err(Error::InsufficientData(format!(
            "warm-up discard {n_skip} leaves no rows of {}",
            out.len()
        )));
    }
    Ok(RegressionData {
        regressors: to_matrix(&reg, n_skip),
        instruments: to_matrix(&inst, n_skip),
        outputs: DVector::from_column_slice(&out[n_skip..]),
    })
}
