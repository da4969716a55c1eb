mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rivkit::estimators::EstimatorKind;
use rivkit::simulation::{arma_noise, monte_carlo, multisine_zoh, ExperimentSpec, MseTable};
use rivkit::NoiseModel;

fn variance(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n
}

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(f)
}

fn small_spec(runs: usize, seed: u64) -> ExperimentSpec {
    let mut spec = ExperimentSpec::rao_garnier(runs, seed);
    spec.n_samples = 3000;
    spec
}

#[test]
fn monte_carlo_is_independent_of_scheduling() {
    let spec = small_spec(6, 21);
    let (serial, serial_log) = in_pool(1, || monte_carlo(&spec).unwrap());
    let (parallel, parallel_log) = in_pool(4, || monte_carlo(&spec).unwrap());
    assert_eq!(serial.to_csv(), parallel.to_csv());
    assert_eq!(serial_log, parallel_log);
    let (again, _) = in_pool(3, || monte_carlo(&spec).unwrap());
    assert_eq!(serial, again);
}

#[test]
fn seed_changes_the_table() {
    let (a, _) = monte_carlo(&small_spec(3, 1)).unwrap();
    let (b, _) = monte_carlo(&small_spec(3, 2)).unwrap();
    assert_ne!(a.to_csv(), b.to_csv());
}

#[test]
fn every_run_is_accounted_for() {
    let spec = small_spec(5, 4);
    let (table, log) = monte_carlo(&spec).unwrap();
    assert_eq!(log.len(), spec.runs * spec.methods.len());
    for row in &table.rows {
        assert_eq!(row.completed + row.failed, spec.runs, "{}", row.method);
        assert!(row.mse.iter().flatten().all(|v| *v >= 0.0));
    }
}

#[test]
fn noise_free_monte_carlo_has_zero_mse() {
    let mut spec = small_spec(3, 0);
    spec.noise_variance = 0.0;
    spec.methods = EstimatorKind::ALL.to_vec();
    let (table, _) = monte_carlo(&spec).unwrap();
    // Without noise the noise-model terms have nothing to converge to.
    let system_labels: Vec<&String> =
        table.labels.iter().filter(|l| l.starts_with("alpha") || l.starts_with("beta")).collect();
    assert_eq!(system_labels.len(), 8);
    for row in &table.rows {
        assert_eq!(row.completed, 3, "{}", row.method);
        for label in &system_labels {
            let v = table.get(row.method, label).unwrap();
            assert!(v < 1e-12, "{} {label}: {v:e}", row.method);
        }
    }
}

#[test]
fn noise_variance_is_calibrated() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xca1);
    let mut models = vec![NoiseModel::white(), common::benchmark_noise()];
    for _ in 0..8 {
        let c = rng.random_range(-0.8..0.8);
        let d = rng.random_range(-0.8..0.8);
        models.push(NoiseModel::new(vec![c], vec![d]).unwrap());
    }
    for (i, model) in models.iter().enumerate() {
        let target = rng.random_range(0.5..10.0);
        let v = arma_noise(model, target, 100_000, 0.05, 100 + i as u64).unwrap();
        let got = variance(v.values());
        assert!((got / target - 1.0).abs() < 0.05, "{model:?}: {got} vs {target}");
    }
}

#[test]
fn multisine_spectrum_peaks_at_its_tones() {
    let spec = ExperimentSpec::rao_garnier(1, 0);
    let u = spec.input().unwrap();
    let n = u.len();
    let power = |w: f64| {
        let (mut re, mut im) = (0.0, 0.0);
        for (k, v) in u.values().iter().enumerate() {
            let ph = w * (k + 1) as f64 * spec.h;
            re += v * ph.cos();
            im += v * ph.sin();
        }
        (re * re + im * im) / (n * n) as f64
    };
    for &w in &spec.freqs {
        // a unit tone carries power 1/4 at its own frequency
        assert!((power(w) - 0.25).abs() < 0.01, "tone {w}: {}", power(w));
    }
    for w in [0.5, 1.5, 5.0, 10.0, 20.0, 30.0] {
        assert!(power(w) < 1e-3, "off-tone {w}: {}", power(w));
    }
    let single = multisine_zoh(&[2.0], &[3.0], &[0.5], 8, 0.1).unwrap();
    for (k, v) in single.values().iter().enumerate() {
        assert!((v - 3.0 * (0.2 * (k + 1) as f64 + 0.5).sin()).abs() < 1e-15);
    }
}

fn denominator_mse(table: &MseTable, method: EstimatorKind) -> Vec<f64> {
    (1..=4).map(|i| table.get(method, &format!("alpha_{i}")).unwrap()).collect()
}

#[test]
fn doubling_the_noise_does_not_shrink_denominator_mse() {
    let mut spec = ExperimentSpec::rao_garnier(50, 3);
    spec.n_samples = 4000;
    let (base, _) = monte_carlo(&spec).unwrap();
    spec.noise_variance *= 2.0;
    let (louder, _) = monte_carlo(&spec).unwrap();
    for &method in &spec.methods {
        for (lo, hi) in denominator_mse(&base, method).iter().zip(denominator_mse(&louder, method)) {
            assert!(hi >= 0.5 * lo, "{method}: {hi:e} against {lo:e}");
        }
    }
}
