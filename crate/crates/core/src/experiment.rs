//! Monte Carlo comparison of white-noise and designed inputs.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design_map::SignPattern;
use crate::error::{Error, Result};
use crate::estimator::{self, DataRecord, InputSequence, Prior, SearchConfig};
use crate::kernels::{KernelFamily, KernelSpec};
use crate::solver::{self, Criterion, DesignProblem, SolverOptions};

/// Length of the simulated response used for the tail test.
const RESPONSE_HORIZON: usize = 2000;
const TAIL_FRACTION: f64 = 0.05;
const MAX_ATTEMPTS: usize = 100_000;
pub const POLE_RADIUS_RANGE: (f64, f64) = (0.4, 0.95);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestSystem {
    /// `g_1, …, g_n`, unit Euclidean norm.
    pub impulse_response: Vec<f64>,
    pub pole_radii: Vec<f64>,
    /// Draws rejected before this one was accepted, plus one.
    pub attempts: usize,
}

/// Random stable system of the given order in modal form: real poles and
/// complex pairs with radii uniform in `[0.4, 0.95]` and Gaussian residues.
/// Draws are rejected until the response beyond `n_trunc` carries at most
/// 5% of its absolute sum.
pub fn generate_test_system(seed: u64, order_true: usize, n_trunc: usize) -> Result<TestSystem> {
    if n_trunc == 0 || order_true == 0 {
        return Err(Error::InvalidInput("system order and truncation must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (r_lo, r_hi) = POLE_RADIUS_RANGE;
    for attempt in 1..=MAX_ATTEMPTS {
        let pairs = rng.random_range(0..=order_true / 2);
        let mut g = vec![0.0; RESPONSE_HORIZON];
        let mut radii = Vec::with_capacity(order_true);
        for _ in 0..pairs {
            let r = rng.random_range(r_lo..=r_hi);
            let angle = rng.random_range(0.0..std::f64::consts::PI);
            let phase = rng.random_range(0.0..std::f64::consts::TAU);
            let amp: f64 = StandardNormal.sample(&mut rng);
            let mut rk = 1.0;
            for (k, gk) in g.iter_mut().enumerate() {
                rk *= r;
                *gk += amp * rk * (angle * (k + 1) as f64 + phase).cos();
            }
            radii.extend([r, r]);
        }
        for _ in 0..order_true - 2 * pairs {
            let r = rng.random_range(r_lo..=r_hi);
            let p = if rng.random::<bool>() { r } else { -r };
            let amp: f64 = StandardNormal.sample(&mut rng);
            let mut pk = 1.0;
            for gk in g.iter_mut() {
                pk *= p;
                *gk += amp * pk;
            }
            radii.push(r);
        }
        let total: f64 = g.iter().map(|v| v.abs()).sum();
        let tail: f64 = g[n_trunc.min(RESPONSE_HORIZON)..].iter().map(|v| v.abs()).sum();
        if total > 0.0 && tail <= TAIL_FRACTION * total {
            g.truncate(n_trunc);
            let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                g.iter_mut().for_each(|v| *v /= norm);
                return Ok(TestSystem {
                    impulse_response: g,
                    pole_radii: radii,
                    attempts: attempt,
                });
            }
        }
    }
    Err(Error::SearchFailure)
}

fn noise_free_output(sys: &TestSystem, u: &InputSequence) -> Result<Vec<f64>> {
    estimator::build_circulant_regressor(u.values(), sys.impulse_response.len())?
        .matvec(&sys.impulse_response)
}

fn sample_variance(x: &[f64]) -> f64 {
    if x.len() < 2 {
        return 0.0;
    }
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (x.len() - 1) as f64
}

/// `var(Φ(u)·g) / σ²` with the sample variance of the noise-free output.
pub fn empirical_snr(sys: &TestSystem, u: &InputSequence, sigma2: f64) -> Result<f64> {
    Ok(sample_variance(&noise_free_output(sys, u)?) / sigma2)
}

fn add_noise(clean: Vec<f64>, sigma2: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sd = sigma2.sqrt();
    clean
        .into_iter()
        .map(|x| {
            let e: f64 = StandardNormal.sample(&mut rng);
            x + sd * e
        })
        .collect()
}

/// Circular simulation with noise variance chosen so that the noise-free
/// output's sample variance is `snr·σ²`.
pub fn simulate_record(sys: &TestSystem, u: &InputSequence, snr: f64, seed: u64) -> Result<DataRecord> {
    if !(snr > 0.0 && snr.is_finite()) {
        return Err(Error::InvalidInput(format!("SNR must be positive, got {snr}")));
    }
    let clean = noise_free_output(sys, u)?;
    let var = sample_variance(&clean);
    if !(var > 0.0) {
        return Err(Error::ZeroInput);
    }
    let sigma2 = var / snr;
    DataRecord::new(u.clone(), add_noise(clean, sigma2, seed), Some(sigma2))
}

/// Circular simulation with a prescribed noise variance.
pub fn simulate_with_variance(
    sys: &TestSystem,
    u: &InputSequence,
    sigma2: f64,
    seed: u64,
) -> Result<DataRecord> {
    if !(sigma2 > 0.0 && sigma2.is_finite()) {
        return Err(Error::InvalidInput(format!("noise variance must be positive, got {sigma2}")));
    }
    let clean = noise_free_output(sys, u)?;
    DataRecord::new(u.clone(), add_noise(clean, sigma2, seed), Some(sigma2))
}

/// `100·(1 − ‖θ̂ − θ₀‖ / ‖θ₀ − mean(θ₀)‖)`.
pub fn fit_metric(theta_hat: &[f64], theta0: &[f64]) -> Result<f64> {
    if theta_hat.len() != theta0.len() {
        return Err(Error::DimensionMismatch {
            expected: theta0.len(),
            got: theta_hat.len(),
        });
    }
    let mean = theta0.iter().sum::<f64>() / theta0.len() as f64;
    let spread = theta0.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>().sqrt();
    if !(spread > 0.0) {
        return Err(Error::DegenerateTruth);
    }
    let err = theta_hat
        .iter()
        .zip(theta0)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    Ok(100.0 * (1.0 - err / spread))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum InputPolicy {
    #[serde(rename = "W")]
    WhiteNoise,
    D,
    A,
    E,
}

impl From<Criterion> for InputPolicy {
    fn from(c: Criterion) -> Self {
        match c {
            Criterion::D => InputPolicy::D,
            Criterion::A => InputPolicy::A,
            Criterion::E => InputPolicy::E,
        }
    }
}

impl InputPolicy {
    pub fn label(&self) -> &'static str {
        match self {
            InputPolicy::WhiteNoise => "W",
            InputPolicy::D => "D",
            InputPolicy::A => "A",
            InputPolicy::E => "E",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub system_id: usize,
    pub policy: InputPolicy,
    pub fit: f64,
    pub snr: f64,
    pub seed: u64,
}

fn default_order_true() -> usize {
    30
}

fn default_criteria() -> Vec<Criterion> {
    Criterion::ALL.to_vec()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McConfig {
    pub systems: usize,
    pub n: usize,
    #[serde(rename = "N")]
    pub n_samples: usize,
    pub energy: f64,
    pub snr_range: (f64, f64),
    pub kernel_family: KernelFamily,
    #[serde(default = "default_criteria")]
    pub criteria: Vec<Criterion>,
    pub master_seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default = "default_order_true")]
    pub order_true: usize,
    #[serde(default)]
    pub search: SearchConfig,
}

impl McConfig {
    /// 50 systems, `n = 20`, `N = 50`, `𝓔 = 10`, TC kernel, SNR in `[1, 10]`.
    pub fn desk_scale(master_seed: u64) -> Self {
        McConfig {
            systems: 50,
            n: 20,
            n_samples: 50,
            energy: 10.0,
            snr_range: (1.0, 10.0),
            kernel_family: KernelFamily::TC,
            criteria: default_criteria(),
            master_seed,
            output_dir: None,
            order_true: 30,
            search: SearchConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(m));
        if self.n == 0 || self.n > self.n_samples {
            return bad(format!("need 1 ≤ n ≤ N, got n = {}, N = {}", self.n, self.n_samples));
        }
        if !(self.energy > 0.0 && self.energy.is_finite()) {
            return bad(format!("energy must be positive, got {}", self.energy));
        }
        let (lo, hi) = self.snr_range;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return bad(format!("invalid SNR range [{lo}, {hi}]"));
        }
        if matches!(self.kernel_family, KernelFamily::Diagonal | KernelFamily::CustomInverse) {
            return bad(format!("{:?} kernels cannot be tuned", self.kernel_family));
        }
        if self.order_true == 0 {
            return bad("order_true must be positive".into());
        }
        let m = estimator::default_noise_order(self.n_samples, self.n);
        if self.n_samples < m + 2 {
            return Err(Error::InsufficientDof {
                dof: self.n_samples.saturating_sub(m),
            });
        }
        Ok(())
    }

    pub fn policies(&self) -> Vec<InputPolicy> {
        let mut p = vec![InputPolicy::WhiteNoise];
        for c in &self.criteria {
            let policy = InputPolicy::from(*c);
            if !p.contains(&policy) {
                p.push(policy);
            }
        }
        p
    }
}

/// Per-system quantities from the preliminary experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemRun {
    pub system_id: usize,
    pub preliminary_snr: f64,
    pub sigma2: f64,
    pub sigma2_hat: f64,
    pub kernel: KernelSpec,
    /// Criteria whose solver stopped on its budget.
    pub unconverged: Vec<Criterion>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub system_id: usize,
    pub error: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyStats {
    pub count: usize,
    pub mean: Option<f64>,
    pub median: Option<f64>,
    pub q1: Option<f64>,
    pub q3: Option<f64>,
    pub median_snr: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub systems: usize,
    pub policies: BTreeMap<String, PolicyStats>,
    pub median_preliminary_snr: Option<f64>,
    pub failures: Vec<Failure>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct McOutcome {
    pub reports: Vec<FitReport>,
    pub runs: Vec<SystemRun>,
    pub summary: Summary,
}

/// Seeds for one system, drawn in a fixed order.
struct SystemSeeds {
    system: u64,
    preliminary_input: u64,
    preliminary_noise: u64,
    snr: f64,
    test_input: u64,
    test_noise: [u64; 4],
}

impl SystemSeeds {
    fn draw(master_seed: u64, system_id: usize, snr_range: (f64, f64)) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
        rng.set_stream(system_id as u64);
        SystemSeeds {
            system: rng.random(),
            preliminary_input: rng.random(),
            preliminary_noise: rng.random(),
            snr: rng.random_range(snr_range.0..=snr_range.1),
            test_input: rng.random(),
            test_noise: [rng.random(), rng.random(), rng.random(), rng.random()],
        }
    }
}

/// Gaussian white noise rescaled to energy exactly `energy`.
pub fn white_noise_input(n_samples: usize, energy: f64, seed: u64) -> Result<InputSequence> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw: Vec<f64> = (0..n_samples).map(|_| StandardNormal.sample(&mut rng)).collect();
    InputSequence::rescaled(raw, energy)
}

fn tuned_kernel(cfg: &McConfig, rec: &DataRecord, sigma2: f64) -> Result<KernelSpec> {
    estimator::fit_hyperparameters(
        &rec.output,
        rec.input.values(),
        cfg.n,
        sigma2,
        cfg.kernel_family,
        &cfg.search,
    )
}

/// Runs the full pipeline for one system.
pub fn run_system(cfg: &McConfig, system_id: usize) -> Result<(SystemRun, Vec<FitReport>)> {
    let seeds = SystemSeeds::draw(cfg.master_seed, system_id, cfg.snr_range);
    let sys = generate_test_system(seeds.system, cfg.order_true, cfg.n)?;

    let u0 = white_noise_input(cfg.n_samples, cfg.energy, seeds.preliminary_input)?;
    let prelim = simulate_record(&sys, &u0, seeds.snr, seeds.preliminary_noise)?;
    let sigma2 = prelim.noise_variance.expect("simulated records carry σ²");
    let m = estimator::default_noise_order(cfg.n_samples, cfg.n);
    let sigma2_hat = estimator::estimate_noise_variance(&prelim.output, u0.values(), m)?;
    if !(sigma2_hat > 0.0) {
        return Err(Error::InvalidInput("estimated noise variance is zero".into()));
    }
    let kernel = tuned_kernel(cfg, &prelim, sigma2_hat)?;
    let prior = Prior::from_spec(&kernel)?;

    let mut reports = Vec::new();
    let mut unconverged = Vec::new();
    for (slot, policy) in cfg.policies().into_iter().enumerate() {
        let u = match policy {
            InputPolicy::WhiteNoise => white_noise_input(cfg.n_samples, cfg.energy, seeds.test_input)?,
            designed => {
                let crit = match designed {
                    InputPolicy::D => Criterion::D,
                    InputPolicy::A => Criterion::A,
                    _ => Criterion::E,
                };
                let problem =
                    DesignProblem::new(kernel.clone(), sigma2_hat, cfg.n_samples, cfg.energy, crit)?;
                let opts = SolverOptions {
                    signs: SignPattern::AllPositive,
                    ..SolverOptions::default()
                };
                let sol = solver::solve_with(&problem, &opts)?;
                if !sol.certificate.converged {
                    unconverged.push(crit);
                }
                sol.u
            }
        };
        let noise_seed = seeds.test_noise[slot];
        let rec = simulate_with_variance(&sys, &u, sigma2, noise_seed)?;
        let est = estimator::rls_estimate(&rec, &prior, sigma2_hat)?;
        reports.push(FitReport {
            system_id,
            policy,
            fit: fit_metric(&est.theta, &sys.impulse_response)?,
            snr: empirical_snr(&sys, &u, sigma2)?,
            seed: noise_seed,
        });
    }
    let run = SystemRun {
        system_id,
        preliminary_snr: empirical_snr(&sys, &u0, sigma2)?,
        sigma2,
        sigma2_hat,
        kernel,
        unconverged,
    };
    Ok((run, reports))
}

pub fn run_monte_carlo(cfg: &McConfig) -> Result<McOutcome> {
    cfg.validate()?;
    let results: Vec<(usize, Result<(SystemRun, Vec<FitReport>)>)> = (0..cfg.systems)
        .into_par_iter()
        .map(|id| (id, run_system(cfg, id)))
        .collect();

    let mut reports = Vec::new();
    let mut runs = Vec::new();
    let mut failures = Vec::new();
    for (id, res) in results {
        match res {
            Ok((run, mut reps)) => {
                runs.push(run);
                reports.append(&mut reps);
            }
            Err(e) => failures.push(Failure {
                system_id: id,
                error: e.to_string(),
            }),
        }
    }
    reports.sort_by(|a, b| (a.system_id, a.policy).cmp(&(b.system_id, b.policy)));
    let summary = summarize(cfg, &reports, &runs, failures);
    Ok(McOutcome {
        reports,
        runs,
        summary,
    })
}

/// Quantile with linear interpolation between order statistics.
pub fn quantile(sorted: &[f64], p: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Some(sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo]))
}

fn stats(fits: &[f64], snrs: &[f64]) -> PolicyStats {
    let mut f = fits.to_vec();
    f.sort_by(|a, b| a.total_cmp(b));
    let mut s = snrs.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    PolicyStats {
        count: f.len(),
        mean: (!f.is_empty()).then(|| f.iter().sum::<f64>() / f.len() as f64),
        median: quantile(&f, 0.5),
        q1: quantile(&f, 0.25),
        q3: quantile(&f, 0.75),
        median_snr: quantile(&s, 0.5),
    }
}

fn summarize(cfg: &McConfig, reports: &[FitReport], runs: &[SystemRun], failures: Vec<Failure>) -> Summary {
    let policies = cfg
        .policies()
        .into_iter()
        .map(|p| {
            let (fits, snrs): (Vec<f64>, Vec<f64>) = reports
                .iter()
                .filter(|r| r.policy == p)
                .map(|r| (r.fit, r.snr))
                .unzip();
            (p.label().to_string(), stats(&fits, &snrs))
        })
        .collect();
    let mut prelim: Vec<f64> = runs.iter().map(|r| r.preliminary_snr).collect();
    prelim.sort_by(|a, b| a.total_cmp(b));
    Summary {
        systems: cfg.systems,
        policies,
        median_preliminary_snr: quantile(&prelim, 0.5),
        failures,
    }
}

pub fn write_fits_csv(path: &Path, reports: &[FitReport]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    if reports.is_empty() {
        w.write_record(["system_id", "policy", "fit", "snr", "seed"])?;
    }
    for r in reports {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_summary(path: &Path, summary: &Summary) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(summary)? + "\n")?;
    Ok(())
}

/// Writes `fits.csv` and `summary.json` into `dir`.
pub fn write_outputs(dir: &Path, outcome: &McOutcome) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_fits_csv(&dir.join("fits.csv"), &outcome.reports)?;
    write_summary(&dir.join("summary.json"), &outcome.summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generator_is_deterministic_and_bounded() {
        let a = generate_test_system(11, 30, 20).unwrap();
        let b = generate_test_system(11, 30, 20).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.impulse_response.len(), 20);
        assert_eq!(a.pole_radii.len(), 30);
        assert!(a.pole_radii.iter().all(|r| (0.4..=0.95).contains(r)));
        let norm: f64 = a.impulse_response.iter().map(|v| v * v).sum();
        assert!((norm - 1.0).abs() < 1e-12);
        assert_ne!(a, generate_test_system(12, 30, 20).unwrap());
    }

    #[test]
    fn fit_metric_examples() {
        let t0 = [1.0, 0.5, -0.25, 0.0];
        assert_eq!(fit_metric(&t0, &t0).unwrap(), 100.0);
        let mean = t0.iter().sum::<f64>() / 4.0;
        assert!(fit_metric(&[mean; 4], &t0).unwrap().abs() < 1e-12);
        let mirrored: Vec<f64> = t0.iter().map(|v| 2.0 * v - mean).collect();
        assert!(fit_metric(&mirrored, &t0).unwrap().abs() < 1e-12);
        assert!(matches!(fit_metric(&[1.0; 3], &[2.0; 3]), Err(Error::DegenerateTruth)));
    }

    #[test]
    fn simulation_noise_free_limit() {
        let sys = generate_test_system(3, 30, 8).unwrap();
        let u = white_noise_input(40, 10.0, 5).unwrap();
        let rec = simulate_with_variance(&sys, &u, 1e-12, 9).unwrap();
        let est = estimator::ls_estimate(&rec, 8).unwrap();
        for (a, b) in est.theta.iter().zip(&sys.impulse_response) {
            assert!((a - b).abs() < 1e-4);
        }
        let again = simulate_with_variance(&sys, &u, 1e-12, 9).unwrap();
        assert_eq!(rec.output, again.output);
    }

    #[test]
    fn simulated_snr_matches_request() {
        let sys = generate_test_system(4, 30, 10).unwrap();
        let u = white_noise_input(60, 10.0, 1).unwrap();
        let clean = noise_free_output(&sys, &u).unwrap();
        let mut ratio = 0.0;
        let reps = 1000;
        for seed in 0..reps {
            let rec = simulate_record(&sys, &u, 4.0, seed).unwrap();
            let noise: Vec<f64> = rec.output.iter().zip(&clean).map(|(y, x)| y - x).collect();
            ratio += sample_variance(&clean) / sample_variance(&noise);
        }
        let avg = ratio / reps as f64;
        // E[1/χ²] inflates the mean ratio by (N−1)/(N−3)
        let expected = 4.0 * 59.0 / 57.0;
        assert!((avg / expected - 1.0).abs() < 0.1, "{avg}");
        let zero = InputSequence::new(vec![0.0; 60]);
        assert!(matches!(simulate_record(&sys, &zero, 4.0, 0), Err(Error::ZeroInput)));
    }

    #[test]
    fn white_noise_power_is_exact() {
        let u = white_noise_input(50, 10.0, 2).unwrap();
        let e: f64 = u.values().iter().map(|v| v * v).sum();
        assert!((e - 10.0).abs() < 1e-10);
    }

    #[test]
    fn quantiles() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile(&v, 0.5), Some(3.0));
        assert_eq!(quantile(&v, 0.25), Some(2.0));
        assert_eq!(quantile(&[1.0, 2.0], 0.5), Some(1.5));
        assert_eq!(quantile(&[], 0.5), None);
    }

    #[test]
    fn zero_systems_is_empty() {
        let mut cfg = McConfig::desk_scale(1);
        cfg.systems = 0;
        let out = run_monte_carlo(&cfg).unwrap();
        assert!(out.reports.is_empty());
        assert_eq!(out.summary.policies["W"].count, 0);
        assert!(out.summary.failures.is_empty());
    }

    #[test]
    fn config_json_and_validation() {
        let cfg: McConfig = serde_json::from_str(
            r#"{"systems":2,"n":5,"N":12,"energy":3,"snr_range":[1,10],
                "kernel_family":"TC","criteria":["D","A"],"master_seed":7,"output_dir":"out"}"#,
        )
        .unwrap();
        assert_eq!(cfg.n_samples, 12);
        assert_eq!(cfg.policies(), vec![InputPolicy::WhiteNoise, InputPolicy::D, InputPolicy::A]);
        cfg.validate().unwrap();
        let mut bad = cfg.clone();
        bad.n = 20;
        assert!(bad.validate().is_err());
        let mut bad = cfg;
        bad.snr_range = (0.0, 1.0);
        assert!(bad.validate().is_err());
    }

    #[test]
    fn small_run_is_reproducible() {
        let cfg = McConfig {
            systems: 2,
            n: 6,
            n_samples: 16,
            energy: 4.0,
            snr_range: (1.0, 10.0),
            kernel_family: KernelFamily::TC,
            criteria: vec![Criterion::D, Criterion::A],
            master_seed: 3,
            output_dir: None,
            order_true: 30,
            search: SearchConfig {
                refine_iterations: 50,
                ..SearchConfig::default()
            },
        };
        let a = run_monte_carlo(&cfg).unwrap();
        let b = run_monte_carlo(&cfg).unwrap();
        assert_eq!(a.reports, b.reports);
        assert_eq!(a.reports.len(), 6);
        assert!(a.reports.iter().all(|r| r.fit <= 100.0));
    }
}
