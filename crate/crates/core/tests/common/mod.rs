#![allow(dead_code)]

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rivkit::filtering::SampledSignal;
use rivkit::{CtModel, NoiseModel, Poly};

pub fn rao_garnier() -> CtModel {
    CtModel::new(vec![0.26, 0.255, 0.003125, 0.000625], vec![1.0, -4.0]).unwrap()
}

pub fn benchmark_noise() -> NoiseModel {
    NoiseModel::new(vec![0.4], vec![-0.7]).unwrap()
}

/// Stable CT model of order `n`, strictly proper with numerator degree drawn
/// from 0..n. Poles have real parts in [-8, -0.3]; zeros have real parts of
/// either sign with the same magnitude range. Every root satisfies
/// |Im| < 0.4·π/h, so no zero sits beyond what the samples can resolve.
pub fn random_stable_ct(rng: &mut ChaCha8Rng, n: usize, h: f64) -> CtModel {
    let poles = random_roots(rng, n, h, false);
    let m = rng.random_range(0..n);
    let zeros = random_roots(rng, m, h, true);
    let gain = rng.random_range(0.5..2.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    let num = Poly::from_roots(&zeros).scale(gain);
    CtModel::from_polys(&num, &Poly::from_roots(&poles)).unwrap()
}

fn random_roots(rng: &mut ChaCha8Rng, count: usize, h: f64, either_sign: bool) -> Vec<Complex64> {
    let im_max = 0.4 * std::f64::consts::PI / h;
    let mut roots = Vec::with_capacity(count);
    while roots.len() < count {
        let mut re = -rng.random_range(0.3..8.0);
        if either_sign && rng.random_bool(0.5) {
            re = -re;
        }
        if count - roots.len() >= 2 && rng.random_bool(0.4) {
            let im = rng.random_range(0.05..im_max);
            roots.push(Complex64::new(re, im));
            roots.push(Complex64::new(re, -im));
        } else {
            roots.push(Complex64::new(re, 0.0));
        }
    }
    roots
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Sum of sinusoids rich enough to excite order-4 dynamics.
pub fn test_input(len: usize, h: f64) -> SampledSignal {
    let v = (0..len)
        .map(|k| {
            let t = k as f64 * h;
            t.sin() + (1.9 * t).sin() + (2.1 * t).sin() + 0.5 * (7.0 * t + 0.3).sin() + 0.3 * (18.0 * t).sin()
        })
        .collect();
    SampledSignal::new(v, h).unwrap()
}

/// ‖got − reference‖∞ / ‖reference‖∞, zero-padding length mismatches.
pub fn max_rel_err(got: &[f64], reference: &[f64]) -> f64 {
    let len = got.len().max(reference.len());
    let norm = reference.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let diff = (0..len)
        .map(|i| (got.get(i).copied().unwrap_or(0.0) - reference.get(i).copied().unwrap_or(0.0)).abs())
        .fold(0.0, f64::max);
    diff / norm
}

/// Largest entrywise relative error; entries that are zero in the reference
/// are scaled by the reference norm instead.
pub fn max_entry_rel_err(got: &[f64], reference: &[f64]) -> f64 {
    let len = got.len().max(reference.len());
    let norm = reference.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    (0..len)
        .map(|i| {
            let g = got.get(i).copied().unwrap_or(0.0);
            let r = reference.get(i).copied().unwrap_or(0.0);
            (g - r).abs() / if r == 0.0 { norm } else { r.abs() }
        })
        .fold(0.0, f64::max)
}

/// Order-4 system with O(1) coefficients: poles -1, -2, -1±i, zero at -2.
/// Finite-difference steps of 1e-6 are small against every parameter.
pub fn gradient_test_system() -> CtModel {
    CtModel::new(vec![2.5, 2.5, 1.25, 0.25], vec![1.0, 0.5]).unwrap()
}

pub const H: f64 = 0.05;

/// Benchmark multisine input.
pub fn multisine(len: usize) -> SampledSignal {
    rivkit::simulation::multisine_zoh(&[1.0, 1.9, 2.1, 18.0, 22.0], &[1.0; 5], &[0.0; 5], len, H).unwrap()
}

/// Multisine covering 0.2 to 7 rad/s, for systems with bandwidth near 1 rad/s.
pub fn slow_multisine(len: usize) -> SampledSignal {
    slow_multisine_at(len, H)
}

pub fn slow_multisine_at(len: usize, h: f64) -> SampledSignal {
    let freqs = [0.2, 0.5, 0.9, 1.4, 2.0, 3.0, 4.5, 7.0];
    rivkit::simulation::multisine_zoh(&freqs, &[1.0; 8], &[0.0, 1.1, 2.3, 0.4, 1.9, 3.0, 0.7, 2.6], len, h).unwrap()
}

/// `(u, y)` for `ct` driven by the benchmark multisine, with
/// benchmark-coloured noise at the requested SNR (dB); `None` gives
/// noise-free data.
pub fn experiment(ct: &CtModel, len: usize, seed: u64, snr_db: Option<f64>) -> (SampledSignal, SampledSignal) {
    experiment_with(ct, multisine(len), seed, snr_db)
}

pub fn experiment_with(
    ct: &CtModel,
    u: SampledSignal,
    seed: u64,
    snr_db: Option<f64>,
) -> (SampledSignal, SampledSignal) {
    let len = u.len();
    let clean = rivkit::filtering::SystemModel::Continuous(ct.clone()).simulate(&u).unwrap();
    let var = match snr_db {
        None => 0.0,
        Some(db) => {
            let v = clean.values();
            let mean = v.iter().sum::<f64>() / v.len() as f64;
            let pv = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / v.len() as f64;
            pv / 10f64.powf(db / 10.0)
        }
    };
    let noise = rivkit::simulation::arma_noise(&benchmark_noise(), var, len, u.h(), seed).unwrap();
    let y = rivkit::simulation::simulate_system(ct, &u, &noise).unwrap();
    (u, y)
}
