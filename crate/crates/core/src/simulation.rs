//! Benchmark data generation and the Monte Carlo driver.
//!
//! Noise draws use ChaCha8 seeded with the experiment seed, one stream per
//! run index, so results do not depend on how runs are scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimators::{
    dt_numerator_degree, run_estimator, EstimationReport, EstimatorConfig, EstimatorKind,
};
use crate::filtering::{DtFilter, SampledSignal, SystemModel};
use crate::lti::{CtModel, NoiseModel};
use crate::sampling::zoh_discretize;

/// Name of the generator behind every noise realization.
pub const RNG_ALGORITHM: &str = "ChaCha8 (rand_chacha), seed_from_u64(seed), stream = run index";

/// `u(kh) = Σ_i amp_i sin(ω_i k h + φ_i)` for `k = 1..=n`.
pub fn multisine_zoh(
    freqs: &[f64],
    amps: &[f64],
    phases: &[f64],
    n: usize,
    h: f64,
) -> Result<SampledSignal> {
    if freqs.len() != amps.len() || freqs.len() != phases.len() {
        return Err(Error::InvalidInput(format!(
            "multisine needs equal counts, got {} frequencies, {} amplitudes, {} phases",
            freqs.len(),
            amps.len(),
            phases.len()
        )));
    }
    let values = (1..=n)
        .map(|k| {
            let t = k as f64 * h;
            freqs
                .iter()
                .zip(amps)
                .zip(phases)
                .map(|((w, a), p)| a * (w * t + p).sin())
                .sum()
        })
        .collect();
    SampledSignal::new(values, h)
}

/// `Σ h_k²` for the impulse response of `C/D`, stopped once a term falls
/// below `1e-12` of the running sum.
pub fn impulse_energy(noise: &NoiseModel) -> Result<f64> {
    if !noise.is_stable_invertible() {
        return Err(Error::UnstableNoiseFilter);
    }
    let shaping = DtFilter::from_backward(noise.c_backward(), noise.d_backward())?;
    let warm = noise.c().len().max(noise.d().len());
    let mut block = 1024;
    loop {
        let mut x = vec![0.0; block];
        x[0] = 1.0;
        let resp = shaping.apply(&x);
        let mut sum = 0.0;
        for (k, r) in resp.iter().enumerate() {
            let term = r * r;
            sum += term;
            if k > warm && term < 1e-12 * sum {
                return Ok(sum);
            }
        }
        if block >= 1 << 24 {
            return Err(Error::UnstableNoiseFilter);
        }
        block *= 4;
    }
}

/// `(C/D) e` with white Gaussian `e` scaled so that the output variance is
/// `target_variance`.
pub fn arma_noise_with_rng(
    noise: &NoiseModel,
    target_variance: f64,
    n: usize,
    h: f64,
    rng: &mut ChaCha8Rng,
) -> Result<SampledSignal> {
    if !(target_variance >= 0.0) {
        return Err(Error::InvalidInput("noise variance must be non-negative".into()));
    }
    let g2 = impulse_energy(noise)?;
    let sigma = (target_variance / g2).sqrt();
    if sigma == 0.0 {
        return SampledSignal::new(vec![0.0; n], h);
    }
    let dist = Normal::new(0.0, sigma).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let e: Vec<f64> = (0..n).map(|_| dist.sample(rng)).collect();
    let shaping = DtFilter::from_backward(noise.c_backward(), noise.d_backward())?;
    SampledSignal::new(shaping.apply(&e), h)
}

/// Seeded variant of [`arma_noise_with_rng`] on stream 0.
pub fn arma_noise(
    noise: &NoiseModel,
    target_variance: f64,
    n: usize,
    h: f64,
    seed: u64,
) -> Result<SampledSignal> {
    let mut rng = run_rng(seed, 0);
    arma_noise_with_rng(noise, target_variance, n, h, &mut rng)
}

fn run_rng(seed: u64, run: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(run);
    rng
}

/// `y = G_d u + noise` with the exact ZOH equivalent of `ct`.
pub fn simulate_system(ct: &CtModel, u: &SampledSignal, noise: &SampledSignal) -> Result<SampledSignal> {
    if u.len() != noise.len() {
        return Err(Error::InvalidInput(format!(
            "input has {} samples, noise {}",
            u.len(),
            noise.len()
        )));
    }
    let clean = SystemModel::Continuous(ct.clone()).simulate(u)?;
    let y = clean.values().iter().zip(noise.values()).map(|(a, b)| a + b).collect();
    SampledSignal::new(y, u.h())
}

fn population_variance(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n
}

/// `10 log10(var(clean) / var(noise))` with population variances.
pub fn snr(clean: &SampledSignal, noise: &SampledSignal) -> Result<f64> {
    if clean.len() != noise.len() {
        return Err(Error::InvalidInput("signal lengths differ".into()));
    }
    let vn = population_variance(noise.values());
    if vn == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (population_variance(clean.values()) / vn).log10())
}

/// Everything that defines a Monte Carlo experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub system: CtModel,
    pub noise: NoiseModel,
    pub h: f64,
    pub n_samples: usize,
    pub freqs: Vec<f64>,
    pub amps: Vec<f64>,
    pub phases: Vec<f64>,
    /// Variance of the filtered noise `(C/D) e`.
    pub noise_variance: f64,
    pub runs: usize,
    pub seed: u64,
    pub methods: Vec<EstimatorKind>,
    pub max_iter: usize,
    pub tol: f64,
}

impl ExperimentSpec {
    /// Fourth-order benchmark `(1 - 4p) / ((0.25p² + 0.005p + 1)(0.0025p² + 0.255p + 1))`
    /// expanded, sampled at 50 ms with `(1 + 0.4q⁻¹)/(1 - 0.7q⁻¹)` noise of
    /// variance 6 and a five-tone multisine with unit amplitudes and zero phases.
    pub fn rao_garnier(runs: usize, seed: u64) -> Self {
        ExperimentSpec {
            system: CtModel::new(vec![0.26, 0.255, 0.003125, 0.000625], vec![1.0, -4.0])
                .expect("benchmark model is valid"),
            noise: NoiseModel::new(vec![0.4], vec![-0.7]).expect("benchmark noise is valid"),
            h: 0.05,
            n_samples: 10_000,
            freqs: vec![1.0, 1.9, 2.1, 18.0, 22.0],
            amps: vec![1.0; 5],
            phases: vec![0.0; 5],
            noise_variance: 6.0,
            runs,
            seed,
            methods: vec![
                EstimatorKind::SRIV,
                EstimatorKind::ASRIV,
                EstimatorKind::RIV,
                EstimatorKind::ARIV,
            ],
            max_iter: 100,
            tol: 1e-8,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.runs == 0 || self.n_samples == 0 {
            return Err(Error::InvalidInput("runs and sample count must be positive".into()));
        }
        if !(self.h > 0.0) {
            return Err(Error::InvalidInput("sampling period must be positive".into()));
        }
        let nyquist = std::f64::consts::PI / self.h;
        for (i, w) in self.freqs.iter().enumerate() {
            if !(*w < nyquist) {
                return Err(Error::InvalidInput(format!("frequency {w} is not below π/h")));
            }
            if self.freqs[..i].contains(w) {
                return Err(Error::InvalidInput(format!("frequency {w} repeated")));
            }
        }
        if self.freqs.len() != self.amps.len() || self.freqs.len() != self.phases.len() {
            return Err(Error::InvalidInput("multisine lists differ in length".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidInput("no estimator selected".into()));
        }
        Ok(())
    }

    pub fn input(&self) -> Result<SampledSignal> {
        multisine_zoh(&self.freqs, &self.amps, &self.phases, self.n_samples, self.h)
    }

    /// Noise realization of run `run`.
    pub fn noise_realization(&self, run: usize) -> Result<SampledSignal> {
        let mut rng = run_rng(self.seed, run as u64);
        arma_noise_with_rng(&self.noise, self.noise_variance, self.n_samples, self.h, &mut rng)
    }

    /// SNR of run 0 in dB.
    pub fn snr(&self) -> Result<f64> {
        let u = self.input()?;
        let clean = SystemModel::Continuous(self.system.clone()).simulate(&u)?;
        snr(&clean, &self.noise_realization(0)?)
    }

    fn config_for(&self, kind: EstimatorKind) -> EstimatorConfig {
        let n = self.system.n();
        let m = dt_numerator_degree(kind, n, self.system.m());
        let mut cfg = EstimatorConfig::new(n, m);
        if kind.noise_modeled {
            cfg = cfg.with_noise_orders(self.noise.c().len(), self.noise.d().len());
        }
        cfg.max_iter = self.max_iter;
        cfg.tol = self.tol;
        cfg
    }
}

/// Per-method mean squared errors over the completed runs.
#[derive(Debug, Clone, PartialEq)]
pub struct MseRow {
    pub method: EstimatorKind,
    /// `None` where the parameter does not apply (noise terms of the
    /// simplified kinds) or no run completed.
    pub mse: Vec<Option<f64>>,
    pub completed: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MseTable {
    pub labels: Vec<String>,
    pub rows: Vec<MseRow>,
}

impl MseTable {
    pub fn row(&self, method: EstimatorKind) -> Option<&MseRow> {
        self.rows.iter().find(|r| r.method == method)
    }

    /// MSE of the parameter labelled `label` for `method`.
    pub fn get(&self, method: EstimatorKind, label: &str) -> Option<f64> {
        let j = self.labels.iter().position(|l| l == label)?;
        self.row(method)?.mse[j]
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("method");
        for l in &self.labels {
            out.push(',');
            out.push_str(l);
        }
        out.push_str(",completed,failed\n");
        for r in &self.rows {
            out.push_str(r.method.name());
            for v in &r.mse {
                out.push(',');
                match v {
                    Some(x) => out.push_str(&format!("{x:.16e}")),
                    None => out.push('-'),
                }
            }
            out.push_str(&format!(",{},{}\n", r.completed, r.failed));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub run: usize,
    pub method: EstimatorKind,
    pub converged: bool,
    pub iterations: usize,
    pub error: Option<String>,
}

pub fn run_log_csv(log: &[RunRecord]) -> String {
    let mut out = String::from("run,method,converged,iterations,error\n");
    for r in log {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.run,
            r.method.name(),
            r.converged,
            r.iterations,
            r.error.as_deref().unwrap_or("")
        ));
    }
    out
}

/// Compensated running sum.
#[derive(Debug, Default, Clone, Copy)]
struct Kahan {
    sum: f64,
    comp: f64,
}

impl Kahan {
    fn add(&mut self, x: f64) {
        let y = x - self.comp;
        let t = self.sum + y;
        self.comp = (t - self.sum) - y;
        self.sum = t;
    }
}

/// DT-side estimate scored against the ZOH equivalent of the true system:
/// `[α, β]` with adapted kinds reporting the reconstructed `β`.
fn scored_params(report: &EstimationReport, h: f64) -> Result<Vec<f64>> {
    match &report.model {
        SystemModel::Discrete(m) => Ok(m.params()),
        SystemModel::Continuous(m) => Ok(zoh_discretize(m, h)?.params()),
        SystemModel::Adapted(m) => Ok(m.to_dt_model()?.params()),
    }
}

type RunOutcome = std::result::Result<(Vec<f64>, Vec<f64>), ()>;

/// Monte Carlo over noise realizations with a fixed input. Failed or
/// non-converged runs are excluded from the MSE and counted; more than 20%
/// failures for any method is an error.
pub fn monte_carlo(spec: &ExperimentSpec) -> Result<(MseTable, Vec<RunRecord>)> {
    spec.validate()?;
    let u = spec.input()?;
    let clean = SystemModel::Continuous(spec.system.clone()).simulate(&u)?;
    let truth = zoh_discretize(&spec.system, spec.h)?;
    let n = truth.n();
    let beta_len = truth.beta().len();
    let true_noise = spec.noise.params();
    let n_d = spec.noise.d().len();

    let mut labels: Vec<String> = (1..=n).map(|i| format!("alpha_{i}")).collect();
    labels.extend((0..beta_len).map(|i| format!("beta_{i}")));
    labels.extend((1..=n_d).map(|i| format!("d_{i}")));
    labels.extend((1..=spec.noise.c().len()).map(|i| format!("c_{i}")));
    let true_system = truth.params();

    let per_run: Vec<Result<Vec<(RunOutcome, RunRecord)>>> = (0..spec.runs)
        .into_par_iter()
        .map(|run| {
            let noise = spec.noise_realization(run)?;
            let y: Vec<f64> = clean.values().iter().zip(noise.values()).map(|(a, b)| a + b).collect();
            let y = SampledSignal::new(y, spec.h)?;
            let mut out = Vec::with_capacity(spec.methods.len());
            for &kind in &spec.methods {
                let cfg = spec.config_for(kind);
                let (outcome, record) = match run_estimator(kind, &cfg, &u, &y) {
                    Ok(rep) => {
                        let record = RunRecord {
                            run,
                            method: kind,
                            converged: rep.converged,
                            iterations: rep.iterations,
                            error: rep.failure.as_ref().map(|e| e.token().to_string()),
                        };
                        let scored = if rep.converged && rep.failure.is_none() {
                            scored_params(&rep, spec.h)
                                .ok()
                                .filter(|p| p.len() == true_system.len() && p.iter().all(|x| x.is_finite()))
                                .map(|p| (p, rep.eta_final.params()))
                        } else {
                            None
                        };
                        (scored.ok_or(()), record)
                    }
                    Err(e) => (
                        Err(()),
                        RunRecord {
                            run,
                            method: kind,
                            converged: false,
                            iterations: 0,
                            error: Some(e.token().to_string()),
                        },
                    ),
                };
                out.push((outcome, record));
            }
            Ok(out)
        })
        .collect();

    let mut log = Vec::with_capacity(spec.runs * spec.methods.len());
    let mut rows = Vec::with_capacity(spec.methods.len());
    let mut accum: Vec<Vec<Kahan>> = vec![vec![Kahan::default(); labels.len()]; spec.methods.len()];
    let mut completed = vec![0usize; spec.methods.len()];
    for run in per_run {
        for (j, (outcome, record)) in run?.into_iter().enumerate() {
            if let Ok((sys, eta)) = outcome {
                completed[j] += 1;
                for (k, (est, tru)) in sys.iter().zip(&true_system).enumerate() {
                    accum[j][k].add((est - tru) * (est - tru));
                }
                if spec.methods[j].noise_modeled {
                    for (k, (est, tru)) in eta.iter().zip(&true_noise).enumerate() {
                        accum[j][true_system.len() + k].add((est - tru) * (est - tru));
                    }
                }
            }
            log.push(record);
        }
    }
    for (j, &kind) in spec.methods.iter().enumerate() {
        let failed = spec.runs - completed[j];
        if failed * 5 > spec.runs {
            return Err(Error::TooManyFailures {
                method: kind.name().to_string(),
                failed,
                runs: spec.runs,
            });
        }
        let mse = (0..labels.len())
            .map(|k| {
                let applies = k < true_system.len() || kind.noise_modeled;
                (applies && completed[j] > 0).then(|| accum[j][k].sum / completed[j] as f64)
            })
            .collect();
        rows.push(MseRow { method: kind, mse, completed: completed[j], failed });
    }
    Ok((MseTable { labels, rows }, log))
}
