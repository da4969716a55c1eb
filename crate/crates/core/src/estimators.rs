//! Iterative refined instrumental-variable estimators in DT, CT and adapted
//! DT form, with an ARMA prediction-error noise step.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::filtering::{
    build_regression, noise_prefilter, ct_filter_sampled, DtFilter, RegressionData,
    SampledSignal, SystemModel,
};
use crate::linalg::cond;
use crate::lti::{CtModel, DtModel, NoiseModel};
use crate::poly::Poly;
use crate::sampling::{
    adapted_forward, adapted_inverse, check_domain, inverse_zoh, zoh_rational, AdaptedDtModel,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TimeDomain {
    Discrete,
    Continuous,
}

/// Estimator variant: time domain, whether the noise model is estimated, and
/// whether the adapted DT parametrization is used.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EstimatorKind {
    pub domain: TimeDomain,
    pub noise_modeled: bool,
    pub adapted: bool,
}

impl EstimatorKind {
    pub const SRIV: EstimatorKind = EstimatorKind::raw(TimeDomain::Discrete, false, false);
    pub const RIV: EstimatorKind = EstimatorKind::raw(TimeDomain::Discrete, true, false);
    pub const SRIVC: EstimatorKind = EstimatorKind::raw(TimeDomain::Continuous, false, false);
    pub const RIVC: EstimatorKind = EstimatorKind::raw(TimeDomain::Continuous, true, false);
    pub const ASRIV: EstimatorKind = EstimatorKind::raw(TimeDomain::Discrete, false, true);
    pub const ARIV: EstimatorKind = EstimatorKind::raw(TimeDomain::Discrete, true, true);

    const fn raw(domain: TimeDomain, noise_modeled: bool, adapted: bool) -> Self {
        EstimatorKind { domain, noise_modeled, adapted }
    }

    pub fn new(domain: TimeDomain, noise_modeled: bool, adapted: bool) -> Result<Self> {
        if adapted && domain == TimeDomain::Continuous {
            return Err(Error::InvalidInput("adapted CT estimator is not supported".into()));
        }
        Ok(EstimatorKind::raw(domain, noise_modeled, adapted))
    }

    pub fn name(&self) -> &'static str {
        match (self.domain, self.noise_modeled, self.adapted) {
            (TimeDomain::Discrete, false, false) => "sriv",
            (TimeDomain::Discrete, true, false) => "riv",
            (TimeDomain::Continuous, false, false) => "srivc",
            (TimeDomain::Continuous, true, false) => "rivc",
            (TimeDomain::Discrete, false, true) => "asriv",
            (TimeDomain::Discrete, true, true) => "ariv",
            (TimeDomain::Continuous, _, true) => "invalid",
        }
    }

    pub const ALL: [EstimatorKind; 6] = [
        EstimatorKind::SRIV,
        EstimatorKind::RIV,
        EstimatorKind::SRIVC,
        EstimatorKind::RIVC,
        EstimatorKind::ASRIV,
        EstimatorKind::ARIV,
    ];
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EstimatorKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        EstimatorKind::ALL
            .into_iter()
            .find(|k| k.name() == lower)
            .ok_or_else(|| Error::InvalidInput(format!("unknown estimator '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Init {
    LeastSquares,
    /// Parameter vector in the kind's own layout (`θ` or `ρ`).
    Given(Vec<f64>),
}

/// Orders and iteration controls.
///
/// `m` is the numerator degree in the estimator's own variable: `p` for CT
/// and adapted kinds, `q` for the standard DT kinds (so a strictly proper DT
/// model of order `n` has `m = n - 1`).
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorConfig {
    pub n: usize,
    pub m: usize,
    pub m_c: usize,
    pub n_d: usize,
    pub max_iter: usize,
    pub tol: f64,
    pub n_skip: usize,
    pub stabilize: bool,
    pub init: Init,
}

impl EstimatorConfig {
    pub fn new(n: usize, m: usize) -> Self {
        EstimatorConfig {
            n,
            m,
            m_c: 0,
            n_d: 0,
            max_iter: 100,
            tol: 1e-8,
            n_skip: 0,
            stabilize: true,
            init: Init::LeastSquares,
        }
    }

    pub fn with_noise_orders(mut self, m_c: usize, n_d: usize) -> Self {
        self.m_c = m_c;
        self.n_d = n_d;
        self
    }

    pub fn with_init(mut self, init: Init) -> Self {
        self.init = init;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.m > self.n {
            return Err(Error::InvalidInput(format!("need n >= m, got n={} m={}", self.n, self.m)));
        }
        if self.m_c > self.n_d {
            return Err(Error::InvalidInput(format!(
                "need n_d >= m_c, got m_c={} n_d={}",
                self.m_c, self.n_d
            )));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidInput("tolerance must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub params: Vec<f64>,
    pub condition: f64,
    pub residual_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimationReport {
    pub kind: EstimatorKind,
    pub model: SystemModel,
    pub theta_final: Vec<f64>,
    pub eta_final: NoiseModel,
    pub iterations: usize,
    pub converged: bool,
    pub trace: Vec<IterationRecord>,
    pub warnings: Vec<String>,
    /// Error that aborted the loop, if any.
    pub failure: Option<Error>,
    /// `Σ N_{d,i} γ_i` for the adapted kinds.
    pub dt_numerator: Option<Vec<f64>>,
}

impl EstimationReport {
    pub fn condition_numbers(&self) -> Vec<f64> {
        self.trace.iter().map(|r| r.condition).collect()
    }
}

/// One IV solve of `[Σ φ̂ φᵀ] θ = Σ φ̂ y_f`; returns `θ` and the condition
/// number of the modified normal matrix.
pub fn iv_step(data: &RegressionData) -> Result<(DVector<f64>, f64)> {
    let rows = data.regressors.nrows();
    let p = data.regressors.ncols();
    if rows <= p {
        return Err(Error::InsufficientData(format!("{rows} rows for {p} parameters")));
    }
    let scale = 1.0 / rows as f64;
    let normal = data.instruments.tr_mul(&data.regressors) * scale;
    let rhs = data.instruments.tr_mul(&data.outputs) * scale;
    let c = cond(&normal);
    if !(c <= 1e14) {
        return Err(Error::SingularNormalMatrix(c));
    }
    let theta = normal.lu().solve(&rhs).ok_or(Error::SingularNormalMatrix(f64::INFINITY))?;
    Ok((theta, c))
}

fn ls_solve(regressors: DMatrix<f64>, outputs: DVector<f64>) -> Result<DVector<f64>> {
    let data = RegressionData {
        instruments: regressors.clone(),
        regressors,
        outputs,
    };
    Ok(iv_step(&data)?.0)
}

// ---------------------------------------------------------------------------
// Stabilization

/// Reflect DT poles on or outside the unit circle to `0.999/z̄`, keeping the
/// constant term one. `None` when already stable.
fn stabilize_dt_denominator(alpha: &[f64]) -> Option<Vec<f64>> {
    if alpha.is_empty() {
        return None;
    }
    let den = Poly::new(std::iter::once(1.0).chain(alpha.iter().copied()).collect());
    let roots = den.roots().ok()?;
    if roots.iter().all(|z| z.norm() < 1.0) {
        return None;
    }
    let moved: Vec<Complex64> = roots
        .iter()
        .map(|&z| if z.norm() >= 1.0 { 0.999 / z.conj() } else { z })
        .collect();
    renormalized(&moved)
}

/// Reflect CT poles with `Re >= 0` to `-z̄`, then clamp to `Re <= -1e-6`.
fn stabilize_ct_denominator(a: &[f64]) -> Option<Vec<f64>> {
    if a.is_empty() {
        return None;
    }
    let den = Poly::new(std::iter::once(1.0).chain(a.iter().copied()).collect());
    let roots = den.roots().ok()?;
    if roots.iter().all(|z| z.re < 0.0) {
        return None;
    }
    let moved: Vec<Complex64> = roots
        .iter()
        .map(|&z| {
            if z.re >= 0.0 {
                let r = -z.conj();
                Complex64::new(r.re.min(-1e-6), r.im)
            } else {
                z
            }
        })
        .collect();
    renormalized(&moved)
}

fn renormalized(roots: &[Complex64]) -> Option<Vec<f64>> {
    let p = Poly::from_roots(roots);
    let c0 = p.coeff(0);
    if c0 == 0.0 {
        return None;
    }
    Some((1..=roots.len()).map(|k| p.coeff(k) / c0).collect())
}

/// Move unstable poles inside the stability region; numerator unchanged.
/// Stable models are returned unchanged.
pub fn stabilize_model(model: &SystemModel) -> Result<SystemModel> {
    Ok(match model {
        SystemModel::Discrete(m) => match stabilize_dt_denominator(m.alpha()) {
            Some(alpha) => SystemModel::Discrete(DtModel::new(alpha, m.beta().to_vec(), m.h())?),
            None => model.clone(),
        },
        SystemModel::Continuous(m) => match stabilize_ct_denominator(m.a()) {
            Some(a) => SystemModel::Continuous(CtModel::new(a, m.b().to_vec())?),
            None => model.clone(),
        },
        SystemModel::Adapted(m) => match stabilize_dt_denominator(m.alpha()) {
            Some(alpha) => {
                SystemModel::Adapted(AdaptedDtModel::new(alpha, m.gamma().to_vec(), m.h())?)
            }
            None => model.clone(),
        },
    })
}

/// Build the next iterate from an IV solution, stabilizing the denominator
/// before the adapted basis is rebuilt. Returns whether poles were moved.
fn next_model(current: &SystemModel, theta: &[f64], stabilize: bool) -> Result<(SystemModel, bool)> {
    let n = current.n();
    match current {
        SystemModel::Adapted(m) => {
            let mut alpha = theta[..n].to_vec();
            let mut moved = false;
            if stabilize {
                if let Some(s) = stabilize_dt_denominator(&alpha) {
                    alpha = s;
                    moved = true;
                }
            }
            let next = AdaptedDtModel::new(alpha, theta[n..].to_vec(), m.h())?;
            Ok((SystemModel::Adapted(next), moved))
        }
        _ => {
            let next = current.with_params(theta)?;
            if !stabilize {
                return Ok((next, false));
            }
            let s = stabilize_model(&next)?;
            let moved = s != next;
            Ok((s, moved))
        }
    }
}

// ---------------------------------------------------------------------------
// Noise step

fn sum_sq(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

/// Reflect roots outside the unit circle to `1/ρ̄`; roots left on the circle
/// are shrunk by 0.999. Coefficients in `q^{-1}` order without the leading 1.
fn project_inside(coeffs: &[f64]) -> Vec<f64> {
    if coeffs.is_empty() {
        return Vec::new();
    }
    let poly = Poly::new(
        coeffs
            .iter()
            .rev()
            .copied()
            .chain(std::iter::once(1.0))
            .collect(),
    );
    let roots = match poly.roots() {
        Ok(r) => r,
        Err(_) => return coeffs.to_vec(),
    };
    if roots.iter().all(|z| z.norm() < 1.0) {
        return coeffs.to_vec();
    }
    let moved: Vec<Complex64> = roots
        .iter()
        .map(|&z| {
            let r = if z.norm() > 1.0 { 1.0 / z.conj() } else { z };
            if r.norm() >= 1.0 {
                r * 0.999
            } else {
                r
            }
        })
        .collect();
    let p = Poly::from_roots(&moved);
    let k = coeffs.len();
    (1..=k).map(|i| p.coeff(k - i)).collect()
}

fn ls_coeffs(rows: &[Vec<f64>], target: &[f64]) -> Result<Vec<f64>> {
    let p = rows.first().map_or(0, |r| r.len());
    let phi = DMatrix::from_fn(rows.len(), p, |i, j| rows[i][j]);
    Ok(ls_solve(phi, DVector::from_column_slice(target))?.as_slice().to_vec())
}

/// Hannan-Rissanen: long AR fit for the innovations, then one linear
/// regression for `D` and `C`.
fn hannan_rissanen(v: &[f64], m_c: usize, n_d: usize) -> Result<NoiseModel> {
    let n = v.len();
    let long = (n / 10).clamp(1, 50).max(m_c + n_d);
    let rows: Vec<Vec<f64>> = (long..n).map(|k| (1..=long).map(|j| -v[k - j]).collect()).collect();
    let ar = ls_coeffs(&rows, &v[long..])?;
    let mut e = vec![0.0; n];
    for k in long..n {
        e[k] = v[k] + (1..=long).map(|j| ar[j - 1] * v[k - j]).sum::<f64>();
    }
    let start = long + m_c.max(n_d);
    let rows: Vec<Vec<f64>> = (start..n)
        .map(|k| {
            (1..=n_d)
                .map(|i| -v[k - i])
                .chain((1..=m_c).map(|i| e[k - i]))
                .collect()
        })
        .collect();
    let target: Vec<f64> = (start..n).map(|k| v[k] - e[k]).collect();
    let coef = ls_coeffs(&rows, &target)?;
    let d = project_inside(&coef[..n_d]);
    let c = project_inside(&coef[n_d..]);
    NoiseModel::new(c, d)
}

fn prediction_errors(noise: &NoiseModel, v: &[f64]) -> Result<Vec<f64>> {
    Ok(noise_prefilter(noise)?.apply(v))
}

/// Fit `D(q) v = C(q) e` by minimizing `Σ ((D/C) v)²`.
///
/// Gauss-Newton from a Hannan-Rissanen start (white noise if that start is
/// degenerate), step halving up to 20 times,
/// with every candidate projected to keep `C` and `D` minimum phase. A zero
/// residual yields `C = D = 1`.
pub fn arma_pem(residual: &SampledSignal, m_c: usize, n_d: usize) -> Result<NoiseModel> {
    let v = residual.values();
    if m_c + n_d == 0 {
        return Ok(NoiseModel::white());
    }
    if m_c > n_d {
        return Err(Error::InvalidInput(format!(
            "need n_d >= m_c, got m_c={m_c} n_d={n_d}"
        )));
    }
    if v.len() <= 10 * (m_c + n_d) {
        return Err(Error::InsufficientData(format!(
            "{} residual samples for {} noise parameters",
            v.len(),
            m_c + n_d
        )));
    }
    if v.iter().all(|&x| x == 0.0) {
        return Ok(NoiseModel::zeros(m_c, n_d));
    }

    // The long AR fit can predict a deterministic residual (sinusoids) almost
    // perfectly, leaving no innovations to regress on.
    let mut eta = match hannan_rissanen(v, m_c, n_d) {
        Ok(eta) => eta,
        Err(Error::SingularNormalMatrix(_)) => NoiseModel::zeros(m_c, n_d),
        Err(e) => return Err(e),
    };
    let mut eps = prediction_errors(&eta, v)?;
    let mut cost = sum_sq(&eps);
    let p = m_c + n_d;
    for _ in 0..100 {
        // 1/C applied to v and ε, then delayed
        let inv_c = DtFilter::from_backward(vec![1.0], eta.c_backward())?;
        let vc = inv_c.apply(v);
        let ec = inv_c.apply(&eps);
        let n = v.len();
        let jac = DMatrix::from_fn(n, p, |k, j| {
            if j < n_d {
                let i = j + 1;
                if k >= i { vc[k - i] } else { 0.0 }
            } else {
                let i = j - n_d + 1;
                if k >= i { -ec[k - i] } else { 0.0 }
            }
        });
        let eps_v = DVector::from_column_slice(&eps);
        let grad = jac.tr_mul(&eps_v);
        let normal = jac.tr_mul(&jac);
        let step = match normal.clone().lu().solve(&grad) {
            Some(s) => -s,
            None => break,
        };
        let params = eta.params();
        let stationary =
            grad.amax() <= 1e-10 * cost.max(f64::MIN_POSITIVE) || step.amax() <= 1e-12;
        let mut accepted = None;
        let mut mu = 1.0;
        for _ in 0..20 {
            let cand: Vec<f64> = params.iter().zip(step.iter()).map(|(x, s)| x + mu * s).collect();
            let d = project_inside(&cand[..n_d]);
            let c = project_inside(&cand[n_d..]);
            let model = NoiseModel::new(c, d)?;
            let e = prediction_errors(&model, v)?;
            let cst = sum_sq(&e);
            if cst.is_finite() && cst < cost {
                accepted = Some((model, e, cst));
                break;
            }
            mu *= 0.5;
        }
        match accepted {
            Some((model, e, cst)) => {
                let rel = (cost - cst) / cost;
                eta = model;
                eps = e;
                cost = cst;
                if rel < 1e-12 {
                    break;
                }
            }
            None if stationary => break,
            None => {
                // Halving exhausted away from a stationary point.
                let rel_grad = grad.amax() / (normal.amax().sqrt() * cost.sqrt());
                if rel_grad > 1e-6 {
                    return Err(Error::PemDiverged);
                }
                break;
            }
        }
    }
    Ok(eta)
}

// ---------------------------------------------------------------------------
// Initialization

fn check_signals(u: &SampledSignal, y: &SampledSignal) -> Result<()> {
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

/// DT ARX fit in the constant-term-one normalization with `beta_len`
/// numerator coefficients `β_0..`.
fn arx(u: &SampledSignal, y: &SampledSignal, n: usize, beta_len: usize) -> Result<DtModel> {
    let (uv, yv) = (u.values(), y.values());
    if n == 0 {
        let b = ls_solve(
            DMatrix::from_column_slice(uv.len(), 1, uv),
            DVector::from_column_slice(yv),
        )?;
        return DtModel::new(Vec::new(), vec![b[0]], u.h());
    }
    // q^{-1} form: y(k) + ā_1 y(k-1) + ... = Σ b̄_d u(k-d), with β_i at delay n - i
    let delays: Vec<usize> = (0..beta_len).map(|i| n - i).collect();
    let rows = yv.len() - n;
    let phi = DMatrix::from_fn(rows, n + beta_len, |r, j| {
        let k = r + n;
        if j < n {
            -yv[k - j - 1]
        } else {
            uv[k - delays[j - n]]
        }
    });
    let sol = ls_solve(phi, DVector::from_column_slice(&yv[n..]))?;
    // den(q) = q^n + ā_1 q^{n-1} + ... + ā_n, so the constant term is ā_n
    let c0 = sol[n - 1];
    if c0 == 0.0 {
        return Err(Error::DegenerateNormalization);
    }
    let alpha: Vec<f64> = (1..=n)
        .map(|k| if k == n { 1.0 / c0 } else { sol[n - 1 - k] / c0 })
        .collect();
    let beta: Vec<f64> = (0..beta_len).map(|i| sol[n + i] / c0).collect();
    DtModel::new(alpha, beta, u.h())
}

/// Refit `b_0..b_m` by least squares with `A_c` held fixed.
fn refit_ct_numerator(a: &[f64], m: usize, u: &SampledSignal, y: &SampledSignal) -> Result<CtModel> {
    let den = Poly::new(std::iter::once(1.0).chain(a.iter().copied()).collect());
    let cols: Vec<Vec<f64>> = (0..=m)
        .map(|i| {
            let (nq, dq) = zoh_rational(&Poly::monomial(i, 1.0), &den, u.h())?;
            Ok(DtFilter::from_q(&nq, &dq)?.apply(u.values()))
        })
        .collect::<Result<_>>()?;
    let phi = DMatrix::from_fn(u.len(), m + 1, |k, j| cols[j][k]);
    let b = ls_solve(phi, DVector::from_column_slice(y.values()))?;
    CtModel::new(a.to_vec(), b.as_slice().to_vec())
}

/// State-variable-filter least squares with `F(p) = (λp + 1)^{-n}`, `λ = 10h`.
fn svf_init(u: &SampledSignal, y: &SampledSignal, n: usize, m: usize) -> Result<CtModel> {
    let lambda = 10.0 * u.h();
    let mut f = Poly::one();
    for _ in 0..n {
        f = &f * &Poly::new(vec![1.0, lambda]);
    }
    let col = |i: usize, x: &SampledSignal, sign: f64| -> Result<Vec<f64>> {
        Ok(ct_filter_sampled(&Poly::monomial(i, sign), &f, x)?.signal.into_values())
    };
    let mut cols = Vec::with_capacity(n + m + 1);
    for i in 1..=n {
        cols.push(col(i, y, -1.0)?);
    }
    for i in 0..=m {
        cols.push(col(i, u, 1.0)?);
    }
    let target = col(0, y, 1.0)?;
    let phi = DMatrix::from_fn(u.len(), cols.len(), |k, j| cols[j][k]);
    let theta = ls_solve(phi, DVector::from_vec(target))?;
    CtModel::from_params(theta.as_slice(), n)
}

fn ct_least_squares(u: &SampledSignal, y: &SampledSignal, n: usize, m: usize) -> Result<CtModel> {
    let dt_len = if m == n { n + 1 } else { n.max(1) };
    let via_dt = arx(u, y, n, dt_len).and_then(|dt| {
        let dt = match stabilize_dt_denominator(dt.alpha()) {
            Some(alpha) => DtModel::new(alpha, dt.beta().to_vec(), dt.h())?,
            None => dt,
        };
        let ct = inverse_zoh(&dt)?;
        refit_ct_numerator(ct.a(), m, u, y)
    });
    let ct = match via_dt {
        Ok(ct) => ct,
        Err(_) => svf_init(u, y, n, m)?,
    };
    Ok(match stabilize_ct_denominator(ct.a()) {
        Some(a) => CtModel::new(a, ct.b().to_vec())?,
        None => ct,
    })
}

/// Least-squares starting point: ARX in DT; ARX followed by the inverse ZOH
/// map (state-variable-filter fallback) in CT.
pub fn least_squares_init(
    u: &SampledSignal,
    y: &SampledSignal,
    n: usize,
    m: usize,
    domain: TimeDomain,
) -> Result<SystemModel> {
    check_signals(u, y)?;
    if m > n {
        return Err(Error::InvalidInput(format!("need n >= m, got n={n} m={m}")));
    }
    if u.len() <= 2 * (n + m + 1) {
        return Err(Error::InsufficientData(format!(
            "{} samples for {} parameters",
            u.len(),
            n + m + 1
        )));
    }
    match domain {
        TimeDomain::Discrete => Ok(SystemModel::Discrete(arx(u, y, n, m + 1)?)),
        TimeDomain::Continuous => Ok(SystemModel::Continuous(ct_least_squares(u, y, n, m)?)),
    }
}

fn initial_model(
    kind: EstimatorKind,
    cfg: &EstimatorConfig,
    u: &SampledSignal,
    y: &SampledSignal,
) -> Result<SystemModel> {
    let (n, m, h) = (cfg.n, cfg.m, u.h());
    match (&cfg.init, kind.adapted, kind.domain) {
        (Init::Given(theta), false, TimeDomain::Discrete) => {
            check_len(theta, n + m + 1)?;
            Ok(SystemModel::Discrete(DtModel::from_params(theta, n, h)?))
        }
        (Init::Given(theta), false, TimeDomain::Continuous) => {
            check_len(theta, n + m + 1)?;
            Ok(SystemModel::Continuous(CtModel::from_params(theta, n)?))
        }
        (Init::Given(rho), true, _) => {
            check_len(rho, n + m + 1)?;
            Ok(SystemModel::Adapted(AdaptedDtModel::from_params(rho, n, h)?))
        }
        (Init::LeastSquares, false, domain) => least_squares_init(u, y, n, m, domain),
        (Init::LeastSquares, true, _) => match least_squares_init(u, y, n, m, TimeDomain::Continuous)? {
            SystemModel::Continuous(ct) => Ok(SystemModel::Adapted(adapted_forward(&ct, h)?)),
            _ => unreachable!("CT initialization returns a CT model"),
        },
    }
}

fn check_len(theta: &[f64], expect: usize) -> Result<()> {
    if theta.len() == expect {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!(
            "initial vector has {} entries, expected {expect}",
            theta.len()
        )))
    }
}

fn inf_norm(x: &[f64]) -> f64 {
    x.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Noise-free model residual `y - G u`.
pub fn model_residual(model: &SystemModel, u: &SampledSignal, y: &SampledSignal) -> Result<SampledSignal> {
    let yhat = model.simulate(u)?;
    let v = y.values().iter().zip(yhat.values()).map(|(a, b)| a - b).collect();
    SampledSignal::new(v, y.h())
}

/// Run the estimator loop: noise step (if modeled), IV step on the filtered
/// data, optional stabilization, until the relative parameter change drops
/// below `tol`. Errors inside the loop are recorded in the report.
pub fn run_estimator(
    kind: EstimatorKind,
    cfg: &EstimatorConfig,
    u: &SampledSignal,
    y: &SampledSignal,
) -> Result<EstimationReport> {
    EstimatorKind::new(kind.domain, kind.noise_modeled, kind.adapted)?;
    cfg.validate()?;
    check_signals(u, y)?;
    if kind.adapted && cfg.n == 0 {
        return Err(Error::InvalidInput("adapted estimators need n >= 1".into()));
    }
    let p = cfg.n + cfg.m + 1;
    if u.len() <= cfg.n_skip + p {
        return Err(Error::InsufficientData(format!(
            "{} samples, {} skipped, {p} parameters",
            u.len(),
            cfg.n_skip
        )));
    }

    let mut warnings = Vec::new();
    let mut model = initial_model(kind, cfg, u, y)?;
    if cfg.stabilize {
        let s = stabilize_model(&model)?;
        if s != model {
            warnings.push("initial model stabilized".to_string());
            model = s;
        }
    }
    let mut eta = if kind.noise_modeled {
        NoiseModel::zeros(cfg.m_c, cfg.n_d)
    } else {
        NoiseModel::white()
    };
    let mut trace = Vec::new();
    let mut converged = false;
    let mut failure = None;

    for iter in 0..cfg.max_iter {
        let step = (|| -> Result<(SystemModel, NoiseModel, f64, f64, bool)> {
            let noise = if kind.noise_modeled {
                arma_pem(&model_residual(&model, u, y)?, cfg.m_c, cfg.n_d)?
            } else {
                NoiseModel::white()
            };
            let data = build_regression(&model, &noise, u, y, cfg.n_skip)?;
            let (theta, condition) = iv_step(&data)?;
            let resid = &data.outputs - &data.regressors * &theta;
            let rnorm = resid.norm() / (resid.len() as f64).sqrt();
            let (next, moved) = next_model(&model, theta.as_slice(), cfg.stabilize)?;
            Ok((next, noise, condition, rnorm, moved))
        })();
        match step {
            Err(e) => {
                failure = Some(e);
                break;
            }
            Ok((next, noise, condition, residual_norm, moved)) => {
                if moved {
                    warnings.push(format!("iteration {}: model stabilized", iter + 1));
                }
                let new_params = next.params();
                let diff: Vec<f64> = new_params
                    .iter()
                    .zip(model.params())
                    .map(|(a, b)| a - b)
                    .collect();
                let change = inf_norm(&diff) / inf_norm(&new_params).max(f64::MIN_POSITIVE);
                trace.push(IterationRecord { params: new_params, condition, residual_norm });
                model = next;
                eta = noise;
                if change < cfg.tol {
                    converged = true;
                    break;
                }
            }
        }
    }
    if !converged && failure.is_none() && cfg.max_iter > 0 {
        warnings.push(format!("no convergence within {} iterations", cfg.max_iter));
    }

    let dt_numerator = match &model {
        SystemModel::Adapted(rho) => Some(rho.to_dt_model()?.beta().to_vec()),
        _ => None,
    };
    Ok(EstimationReport {
        kind,
        theta_final: model.params(),
        model,
        eta_final: eta,
        iterations: trace.len(),
        converged,
        trace,
        warnings,
        failure,
        dt_numerator,
    })
}

// ---------------------------------------------------------------------------
// Cross-domain equivalence

#[derive(Debug, Clone, PartialEq)]
pub struct EquivalenceVerdict {
    /// `‖θ_c(mapped) - θ_c‖∞ / ‖θ_c‖∞` with numerators zero-padded to equal length.
    pub deviation: f64,
    /// Same measure restricted to the numerator coefficients.
    pub numerator_deviation: f64,
    pub threshold: f64,
    pub equivalent: bool,
    pub mapped: CtModel,
}

/// Map the DT limiting point to CT (inverse ZOH for the standard kinds, the
/// adapted inverse otherwise) and compare it with the CT limiting point.
pub fn check_equivalence(
    dt: &EstimationReport,
    ct: &EstimationReport,
    threshold: f64,
) -> Result<EquivalenceVerdict> {
    if !dt.converged || !ct.converged {
        return Err(Error::NotConverged);
    }
    let mapped = match &dt.model {
        SystemModel::Discrete(m) => {
            let cert = check_domain(m);
            if cert.dt_negative_real_pole {
                return Err(Error::NegativeRealPole);
            }
            if !cert.ct_imag_part_bound_ok {
                return Err(Error::FrequencyBound);
            }
            inverse_zoh(m)?
        }
        SystemModel::Adapted(rho) => adapted_inverse(rho)?,
        SystemModel::Continuous(_) => {
            return Err(Error::InvalidInput("first report must come from a DT estimator".into()))
        }
    };
    let reference = match &ct.model {
        SystemModel::Continuous(m) => m.clone(),
        _ => return Err(Error::InvalidInput("second report must come from a CT estimator".into())),
    };
    if mapped.n() != reference.n() {
        return Err(Error::InvalidInput("model orders differ".into()));
    }
    let len = mapped.b().len().max(reference.b().len());
    let pad = |b: &[f64]| -> Vec<f64> { (0..len).map(|i| b.get(i).copied().unwrap_or(0.0)).collect() };
    let (bm, br) = (pad(mapped.b()), pad(reference.b()));
    let diff_a: Vec<f64> = mapped.a().iter().zip(reference.a()).map(|(x, y)| x - y).collect();
    let diff_b: Vec<f64> = bm.iter().zip(&br).map(|(x, y)| x - y).collect();
    let full_ref: Vec<f64> = reference.a().iter().chain(&br).copied().collect();
    let full_diff: Vec<f64> = diff_a.iter().chain(&diff_b).copied().collect();
    let deviation = inf_norm(&full_diff) / inf_norm(&full_ref).max(f64::MIN_POSITIVE);
    let numerator_deviation = inf_norm(&diff_b) / inf_norm(&br).max(f64::MIN_POSITIVE);
    Ok(EquivalenceVerdict {
        deviation,
        numerator_deviation,
        threshold,
        equivalent: deviation < threshold,
        mapped,
    })
}

/// DT-side initialization linked to a CT one: the ZOH image for standard
/// kinds, the adapted forward map for adapted kinds.
pub fn linked_init(kind: EstimatorKind, ct: &CtModel, h: f64) -> Result<Vec<f64>> {
    match (kind.domain, kind.adapted) {
        (TimeDomain::Continuous, _) => Ok(ct.params()),
        (TimeDomain::Discrete, false) => Ok(crate::sampling::zoh_discretize(ct, h)?.params()),
        (TimeDomain::Discrete, true) => Ok(adapted_forward(ct, h)?.params()),
    }
}

/// `m` to use for a DT kind so that it describes the same model class as a
/// CT model with numerator degree `ct_m` and order `n`.
pub fn dt_numerator_degree(kind: EstimatorKind, n: usize, ct_m: usize) -> usize {
    match (kind.domain, kind.adapted) {
        (TimeDomain::Discrete, false) if ct_m == n => n,
        (TimeDomain::Discrete, false) => n.saturating_sub(1),
        _ => ct_m,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::zoh_discretize;

    fn sig(v: Vec<f64>, h: f64) -> SampledSignal {
        SampledSignal::new(v, h).unwrap()
    }

    #[test]
    fn kind_names_round_trip() {
        for k in EstimatorKind::ALL {
            assert_eq!(k.to_string().parse::<EstimatorKind>().unwrap(), k);
        }
        assert!(EstimatorKind::new(TimeDomain::Continuous, true, true).is_err());
        assert!("foo".parse::<EstimatorKind>().is_err());
    }

    #[test]
    fn iv_step_exact_on_consistent_system() {
        let phi = DMatrix::from_fn(20, 2, |i, j| ((i * 3 + j * 7) % 5) as f64 - 2.0 + j as f64);
        let theta = DVector::from_vec(vec![0.7, -1.3]);
        let data = RegressionData {
            regressors: phi.clone(),
            instruments: phi.clone(),
            outputs: &phi * &theta,
        };
        let (est, c) = iv_step(&data).unwrap();
        assert!((est - theta).amax() < 1e-13);
        assert!(c >= 1.0);
    }

    #[test]
    fn iv_step_rank_deficient() {
        let col: Vec<f64> = (0..20).map(|i| (i as f64).sin()).collect();
        let phi = DMatrix::from_fn(20, 2, |i, _| col[i]);
        let data = RegressionData {
            regressors: phi.clone(),
            instruments: phi,
            outputs: DVector::from_vec(col),
        };
        assert!(matches!(iv_step(&data), Err(Error::SingularNormalMatrix(_))));
    }

    #[test]
    fn stabilize_dt_reflects_and_shrinks() {
        // A_d(q) = 1 - q/2: pole at 2
        let m = SystemModel::Discrete(DtModel::new(vec![-0.5], vec![1.0], 0.1).unwrap());
        let s = stabilize_model(&m).unwrap();
        let SystemModel::Discrete(d) = &s else { panic!() };
        // pole 0.4995 -> A_d = 1 - q/0.4995
        assert!((d.alpha()[0] + 1.0 / 0.4995).abs() < 1e-12);
        assert_eq!(d.beta(), &[1.0]);
        assert_eq!(stabilize_model(&s).unwrap(), s);
    }

    #[test]
    fn stabilize_ct_reflects() {
        // A_c(p) = 1 - p: pole at +1
        let m = SystemModel::Continuous(CtModel::new(vec![-1.0], vec![2.0]).unwrap());
        let SystemModel::Continuous(c) = stabilize_model(&m).unwrap() else { panic!() };
        assert!((c.a()[0] - 1.0).abs() < 1e-14);
        let stable = SystemModel::Continuous(CtModel::new(vec![0.3, 0.02], vec![1.0]).unwrap());
        assert_eq!(stabilize_model(&stable).unwrap(), stable);
        // pole at the origin side: A_c = 1 + p + 0 -> clamp keeps Re <= -1e-6
        let marginal = stabilize_ct_denominator(&[0.0, 1.0]).unwrap();
        let roots = Poly::new(vec![1.0, marginal[0], marginal[1]]).roots().unwrap();
        assert!(roots.iter().all(|z| z.re <= -1e-6 * 0.999));
    }

    fn white_noise(n: usize, seed: u64) -> Vec<f64> {
        use rand::SeedableRng;
        use rand_distr::{Distribution, StandardNormal};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    #[test]
    fn pem_recovers_noise_model() {
        let e = white_noise(10_000, 11);
        let v = DtFilter::from_backward(vec![1.0, 0.4], vec![1.0, -0.7]).unwrap().apply(&e);
        let eta = arma_pem(&sig(v, 0.05), 1, 1).unwrap();
        assert!((eta.c()[0] - 0.4).abs() < 0.05, "{eta:?}");
        assert!((eta.d()[0] + 0.7).abs() < 0.05, "{eta:?}");
    }

    #[test]
    fn pem_on_white_residual() {
        let e = white_noise(10_000, 12);
        let eta = arma_pem(&sig(e, 0.05), 1, 1).unwrap();
        // with c ≈ d the parameters trade off; check the implied filter is near identity
        let imp = noise_prefilter(&eta).unwrap().apply(&[1.0, 0.0, 0.0]);
        assert!(imp[1].abs() < 0.05 && imp[2].abs() < 0.05, "{eta:?}");
    }

    #[test]
    fn pem_zero_residual() {
        let eta = arma_pem(&sig(vec![0.0; 500], 0.1), 1, 1).unwrap();
        assert_eq!(eta, NoiseModel::zeros(1, 1));
        assert!(arma_pem(&sig(vec![1.0; 15], 0.1), 1, 1).is_err());
    }

    fn multisine(n: usize, h: f64) -> SampledSignal {
        let freqs = [1.0, 1.9, 2.1, 18.0, 22.0];
        sig(
            (1..=n)
                .map(|k| freqs.iter().map(|w| (w * k as f64 * h).sin()).sum())
                .collect(),
            h,
        )
    }

    fn rao_garnier() -> CtModel {
        CtModel::new(vec![0.26, 0.255, 0.003125, 0.000625], vec![1.0, -4.0]).unwrap()
    }

    #[test]
    fn arx_exact_on_noise_free_dt_data() {
        let h = 0.05;
        let dt = zoh_discretize(&rao_garnier(), h).unwrap();
        let u = multisine(2000, h);
        let y = SystemModel::Discrete(dt.clone()).simulate(&u).unwrap();
        let init = least_squares_init(&u, &y, 4, 3, TimeDomain::Discrete).unwrap();
        for (a, b) in init.params().iter().zip(dt.params()) {
            assert!((a - b).abs() < 1e-8 * b.abs().max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn ct_init_noise_free() {
        let h = 0.05;
        let u = multisine(10_000, h);
        let y = SystemModel::Continuous(rao_garnier()).simulate(&u).unwrap();
        let init = least_squares_init(&u, &y, 4, 1, TimeDomain::Continuous).unwrap();
        for (a, b) in init.params().iter().zip(rao_garnier().params()) {
            assert!((a - b).abs() < 0.05 * b.abs(), "{a} vs {b}");
        }
        assert!(least_squares_init(&sig(vec![1.0; 5], h), &sig(vec![1.0; 5], h), 4, 1, TimeDomain::Continuous).is_err());
    }

    #[test]
    fn zero_iterations_returns_init() {
        let h = 0.05;
        let u = multisine(1000, h);
        let y = SystemModel::Continuous(rao_garnier()).simulate(&u).unwrap();
        let mut cfg = EstimatorConfig::new(4, 1);
        cfg.max_iter = 0;
        let rep = run_estimator(EstimatorKind::SRIVC, &cfg, &u, &y).unwrap();
        assert!(!rep.converged);
        assert_eq!(rep.iterations, 0);
        assert!(rep.trace.is_empty());
    }

    #[test]
    fn srivc_noise_free() {
        let h = 0.05;
        let u = multisine(10_000, h);
        let y = SystemModel::Continuous(rao_garnier()).simulate(&u).unwrap();
        let rep = run_estimator(EstimatorKind::SRIVC, &EstimatorConfig::new(4, 1), &u, &y).unwrap();
        assert!(rep.converged, "{:?}", rep.failure);
        for (a, b) in rep.theta_final.iter().zip(rao_garnier().params()) {
            assert!((a - b).abs() < 1e-6 * b.abs(), "{a} vs {b}");
        }
    }

    #[test]
    fn riv_without_noise_orders_matches_sriv() {
        let h = 0.05;
        let u = multisine(2000, h);
        let clean = SystemModel::Continuous(rao_garnier()).simulate(&u).unwrap();
        let e = white_noise(2000, 3);
        let y = sig(clean.values().iter().zip(&e).map(|(a, b)| a + b).collect(), h);
        let cfg = EstimatorConfig::new(4, 3);
        let a = run_estimator(EstimatorKind::SRIV, &cfg, &u, &y).unwrap();
        let b = run_estimator(EstimatorKind::RIV, &cfg, &u, &y).unwrap();
        assert_eq!(a.trace, b.trace);
    }
}
