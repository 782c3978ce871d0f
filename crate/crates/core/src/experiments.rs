//! Seeded Monte-Carlo comparison of the direct and indirect designs.
//!
//! Randomness contract: every random draw in a sweep comes from a ChaCha
//! stream keyed by `(master_seed, sweep_point, trial, domain)`, packed
//! injectively into the 256-bit ChaCha seed. Trials run in parallel but are
//! collected and reduced in index order, so results are bit-identical for
//! any worker count.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::direct::{direct_design, empirical_sigma_min, implicit_model_error, theorem1_bound, BehaviorDataset};
use crate::error::{Error, Result};
use crate::indirect::indirect_design;
use crate::lti::{noise_output_variance, random_system, simulate, toeplitz_g, LtiSystem};
use crate::matops::{default_rank_tol, Matrix, Vector};
use crate::task::{cost, optimal_input, suboptimality_gap, ControlTask};

/// Rejection-sampling budget for random systems.
pub const SYSTEM_ATTEMPTS: usize = 1000;

const DOMAIN_TRIAL: u64 = 1;
const DOMAIN_SYSTEM: u64 = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Direct,
    Indirect,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Direct => "direct",
            Method::Indirect => "indirect",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// System order.
    pub n: usize,
    #[serde(rename = "T")]
    pub horizon: usize,
    #[serde(rename = "L_values")]
    pub lags: Vec<usize>,
    #[serde(rename = "N_grid")]
    pub n_grid: Vec<usize>,
    pub trials: usize,
    /// Input standard deviation.
    pub sigma_u: f64,
    /// Process-noise standard deviation, `Omega_w = omega_scalar^2 I`.
    pub omega_scalar: f64,
    pub q_weight: f64,
    pub r_weight: f64,
    pub y_ref: f64,
    pub master_seed: u64,
    pub methods: Vec<Method>,
    #[serde(default)]
    pub t_grid: Vec<usize>,
    /// Signal-to-noise ratios `sigma_u^2 / omega^2`.
    #[serde(default)]
    pub snr_grid: Vec<f64>,
    #[serde(default)]
    pub eps_grid: Vec<f64>,
    /// Draw a fresh system at every sweep point instead of one per sweep.
    #[serde(default)]
    pub redraw_system: bool,
    /// Rescale `A` to spectral radius 0.9.
    #[serde(default)]
    pub stabilize: bool,
}

/// Keys accepted in configuration files, in declaration order.
pub const CONFIG_KEYS: &[&str] = &[
    "n",
    "T",
    "L_values",
    "N_grid",
    "trials",
    "sigma_u",
    "omega_scalar",
    "q_weight",
    "r_weight",
    "y_ref",
    "master_seed",
    "methods",
    "t_grid",
    "snr_grid",
    "eps_grid",
    "redraw_system",
    "stabilize",
];

fn invalid(key: &str, reason: impl Into<String>) -> Error {
    Error::Config {
        key: key.to_string(),
        reason: reason.into(),
    }
}

impl ExperimentConfig {
    /// Small built-in N-sweep used by `demo`.
    pub fn demo() -> Self {
        ExperimentConfig {
            n: 3,
            horizon: 5,
            lags: vec![2, 4],
            n_grid: vec![20, 100, 500],
            trials: 20,
            sigma_u: 1.0,
            omega_scalar: 0.75f64.sqrt(),
            q_weight: 1.0,
            r_weight: 1.0,
            y_ref: 1.0,
            master_seed: 7,
            methods: vec![Method::Direct, Method::Indirect],
            t_grid: vec![],
            snr_grid: vec![],
            eps_grid: vec![],
            redraw_system: false,
            stabilize: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(invalid("n", "must be at least 1"));
        }
        if self.horizon == 0 {
            return Err(invalid("T", "must be at least 1"));
        }
        if self.trials == 0 {
            return Err(invalid("trials", "must be at least 1"));
        }
        if self.n_grid.is_empty() || self.n_grid.contains(&0) {
            return Err(invalid("N_grid", "must be non-empty with values >= 1"));
        }
        if !(self.sigma_u.is_finite() && self.sigma_u > 0.0) {
            return Err(invalid("sigma_u", "must be finite and > 0"));
        }
        if !(self.omega_scalar.is_finite() && self.omega_scalar >= 0.0) {
            return Err(invalid("omega_scalar", "must be finite and >= 0"));
        }
        if !(self.q_weight.is_finite() && self.q_weight > 0.0) {
            return Err(invalid("q_weight", "must be finite and > 0"));
        }
        if !(self.r_weight.is_finite() && self.r_weight > 0.0) {
            return Err(invalid("r_weight", "must be finite and > 0"));
        }
        if !self.y_ref.is_finite() {
            return Err(invalid("y_ref", "must be finite"));
        }
        if self.methods.is_empty() {
            return Err(invalid("methods", "must name at least one method"));
        }
        if self.t_grid.contains(&0) {
            return Err(invalid("t_grid", "values must be >= 1"));
        }
        let min_horizon = self.t_grid.iter().copied().chain([self.horizon]).min().unwrap_or(self.horizon);
        if self.methods.contains(&Method::Indirect) {
            if self.lags.is_empty() {
                return Err(invalid("L_values", "indirect method needs at least one L"));
            }
            if let Some(l) = self.lags.iter().find(|&&l| l == 0 || l > min_horizon) {
                return Err(invalid("L_values", format!("L = {l} outside 1..={min_horizon}")));
            }
        }
        if self.snr_grid.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(invalid("snr_grid", "values must be finite and > 0"));
        }
        if self.eps_grid.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
            return Err(invalid("eps_grid", "values must be finite and > 0"));
        }
        Ok(())
    }

    pub fn task(&self, horizon: usize) -> Result<ControlTask> {
        ControlTask::constant(horizon, self.q_weight, self.r_weight, self.y_ref)
    }

    /// `sigma_u^2 / omega^2` (infinite without process noise).
    pub fn snr(&self) -> f64 {
        snr_of(self.sigma_u, self.omega_scalar)
    }
}

fn snr_of(sigma_u: f64, omega: f64) -> f64 {
    if omega == 0.0 {
        f64::INFINITY
    } else {
        (sigma_u * sigma_u) / (omega * omega)
    }
}

/// Deterministic random stream for `(master_seed, point, trial, domain)`.
pub fn stream(master_seed: u64, point: u64, trial: u64, domain: u64) -> ChaCha8Rng {
    let mut seed = [0u8; 32];
    seed[0..8].copy_from_slice(&master_seed.to_le_bytes());
    seed[8..16].copy_from_slice(&point.to_le_bytes());
    seed[16..24].copy_from_slice(&trial.to_le_bytes());
    seed[24..32].copy_from_slice(&domain.to_le_bytes());
    ChaCha8Rng::from_seed(seed)
}

pub fn trial_stream(master_seed: u64, point: usize, trial: usize) -> ChaCha8Rng {
    stream(master_seed, point as u64, trial as u64, DOMAIN_TRIAL)
}

/// The configured ground-truth system with process noise `omega^2 I`.
pub fn system_for(config: &ExperimentConfig, point: Option<usize>, omega: f64) -> Result<LtiSystem> {
    let point_key = point.map(|p| p as u64 + 1).unwrap_or(0);
    let mut rng = stream(config.master_seed, point_key, 0, DOMAIN_SYSTEM);
    let mut sys = random_system(config.n, &mut rng, SYSTEM_ATTEMPTS)?;
    if config.stabilize {
        sys = sys.rescaled_to_spectral_radius(0.9);
    }
    sys.with_isotropic_noise(omega * omega)
}

/// `N` independent experiments from `x_0 = 0` with i.i.d. `N(0, sigma_u^2)` inputs.
pub fn generate_dataset<R: Rng + ?Sized>(
    sys: &LtiSystem,
    horizon: usize,
    experiments: usize,
    sigma_u: f64,
    rng: &mut R,
) -> Result<BehaviorDataset> {
    if horizon == 0 || experiments == 0 {
        return Err(Error::Dimension("dataset needs T >= 1 and N >= 1".into()));
    }
    let mut u = Matrix::zeros(horizon, experiments);
    let mut y = Matrix::zeros(horizon, experiments);
    let mut v = Matrix::zeros(horizon, experiments);
    for k in 0..experiments {
        let uk = Vector::from_fn(horizon, |_, _| sigma_u * rng.sample::<f64, _>(StandardNormal));
        let tr = simulate(sys, &uk, rng)?;
        u.set_column(k, &tr.u);
        y.set_column(k, &tr.y);
        v.set_column(k, &tr.v);
    }
    BehaviorDataset::new(u, y)?.with_noise(v)
}

/// One grid point of a sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepPoint {
    pub horizon: usize,
    pub experiments: usize,
    pub omega: f64,
    pub sigma_u: f64,
    pub lags: Vec<usize>,
    pub methods: Vec<Method>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrialRecord {
    pub f_star: f64,
    pub direct_gap: Option<f64>,
    /// `(L, gap)` per configured lag.
    pub indirect_gaps: Vec<(usize, f64)>,
    /// `||V U^†||_F`
    pub delta_frobenius: f64,
    pub sigma_min_emp: f64,
}

/// Precomputed truth for a `(system, horizon)` pair.
#[derive(Clone, Debug)]
pub struct Benchmark {
    pub sys: LtiSystem,
    pub task: ControlTask,
    pub g: Matrix,
    pub f_star: f64,
}

impl Benchmark {
    pub fn new(sys: LtiSystem, task: ControlTask) -> Result<Self> {
        let g = toeplitz_g(&sys, task.horizon());
        let u_star = optimal_input(&task, &g)?;
        let f_star = cost(&task, &u_star, &(&g * &u_star))?;
        Ok(Benchmark { sys, task, g, f_star })
    }
}

/// One fresh dataset, both designs, gaps against the true model.
pub fn run_trial(bench: &Benchmark, point: &SweepPoint, rng: &mut ChaCha8Rng) -> Result<TrialRecord> {
    let data = generate_dataset(&bench.sys, point.horizon, point.experiments, point.sigma_u, rng)?;
    let tol = default_rank_tol(point.horizon, point.experiments);
    let direct_gap = if point.methods.contains(&Method::Direct) {
        let u_hat = direct_design(&bench.task, &data, tol)?;
        Some(suboptimality_gap(&bench.task, &bench.g, &u_hat)?.gap)
    } else {
        None
    };
    let mut indirect_gaps = Vec::new();
    if point.methods.contains(&Method::Indirect) {
        for &lag in &point.lags {
            let windows = point.experiments * (point.horizon - lag + 1);
            let u_hat = indirect_design(&bench.task, &data, lag, default_rank_tol(windows, 2 * lag))?;
            indirect_gaps.push((lag, suboptimality_gap(&bench.task, &bench.g, &u_hat)?.gap));
        }
    }
    let delta = implicit_model_error(&data, tol)?;
    Ok(TrialRecord {
        f_star: bench.f_star,
        direct_gap,
        indirect_gaps,
        delta_frobenius: delta.norm(),
        sigma_min_emp: empirical_sigma_min(&data),
    })
}

/// Mean with a two-sided 95% Student-t interval.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Summary {
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

pub fn summarize(values: &[f64]) -> Result<Summary> {
    let k = values.len();
    if k == 0 {
        return Err(Error::Dimension("cannot summarize an empty sample".into()));
    }
    let mean = values.iter().sum::<f64>() / k as f64;
    if k == 1 {
        return Ok(Summary { mean, ci_low: mean, ci_high: mean });
    }
    let var = values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (k - 1) as f64;
    let half = student_t_975(k - 1) * (var / k as f64).sqrt();
    Ok(Summary {
        mean,
        ci_low: mean - half,
        ci_high: mean + half,
    })
}

/// 0.975 quantile of Student's t with `dof` degrees of freedom.
pub fn student_t_975(dof: usize) -> f64 {
    StudentsT::new(0.0, 1.0, dof as f64)
        .expect("positive degrees of freedom")
        .inverse_cdf(0.975)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepFamily {
    N,
    T,
    Snr,
}

impl SweepFamily {
    pub fn name(self) -> &'static str {
        match self {
            SweepFamily::N => "N",
            SweepFamily::T => "T",
            SweepFamily::Snr => "snr",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub sweep_name: &'static str,
    /// The family's swept parameter: `N`, `T` or `snr`.
    pub sweep_value: f64,
    pub method: Method,
    /// `None` for the direct method.
    pub lag: Option<usize>,
    pub horizon: usize,
    pub experiments: usize,
    pub snr: f64,
    pub mean_gap: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub trial_count: usize,
    pub master_seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    pub fn find(&self, method: Method, lag: Option<usize>, horizon: usize, experiments: usize, snr: f64) -> Option<&SweepRow> {
        self.rows.iter().find(|r| {
            r.method == method
                && r.lag == lag
                && r.horizon == horizon
                && r.experiments == experiments
                && (r.snr == snr || (r.snr - snr).abs() <= 1e-12 * snr.abs())
        })
    }
}

struct PlannedPoint {
    point: SweepPoint,
    sweep_value: f64,
    snr: f64,
}

fn plan(config: &ExperimentConfig, family: SweepFamily) -> Result<Vec<PlannedPoint>> {
    let make = |horizon: usize, experiments: usize, omega: f64, sweep_value: f64| PlannedPoint {
        point: SweepPoint {
            horizon,
            experiments,
            omega,
            sigma_u: config.sigma_u,
            lags: config.lags.clone(),
            methods: config.methods.clone(),
        },
        sweep_value,
        snr: snr_of(config.sigma_u, omega),
    };
    let mut out = Vec::new();
    match family {
        SweepFamily::N => {
            for &n in &config.n_grid {
                out.push(make(config.horizon, n, config.omega_scalar, n as f64));
            }
        }
        SweepFamily::T => {
            if config.t_grid.is_empty() {
                return Err(invalid("t_grid", "T-sweep needs a non-empty t_grid"));
            }
            for &t in &config.t_grid {
                for &n in &config.n_grid {
                    out.push(make(t, n, config.omega_scalar, t as f64));
                }
            }
        }
        SweepFamily::Snr => {
            if config.snr_grid.is_empty() {
                return Err(invalid("snr_grid", "SNR-sweep needs a non-empty snr_grid"));
            }
            for &snr in &config.snr_grid {
                let omega = config.sigma_u / snr.sqrt();
                for &n in &config.n_grid {
                    let mut p = make(config.horizon, n, omega, snr);
                    p.snr = snr;
                    out.push(p);
                }
            }
        }
    }
    Ok(out)
}

/// Runs every grid point of `family` for `config.trials` trials each.
pub fn sweep(config: &ExperimentConfig, family: SweepFamily) -> Result<SweepResult> {
    config.validate()?;
    let planned = plan(config, family)?;

    let mut benches = Vec::with_capacity(planned.len());
    for (idx, p) in planned.iter().enumerate() {
        let point_key = config.redraw_system.then_some(idx);
        let sys = system_for(config, point_key, p.point.omega)?;
        benches.push(Benchmark::new(sys, config.task(p.point.horizon)?)?);
    }

    let jobs: Vec<(usize, usize)> = (0..planned.len())
        .flat_map(|p| (0..config.trials).map(move |t| (p, t)))
        .collect();
    let records: Vec<TrialRecord> = jobs
        .par_iter()
        .map(|&(p, t)| {
            let mut rng = trial_stream(config.master_seed, p, t);
            run_trial(&benches[p], &planned[p].point, &mut rng)
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    for (p, planned_point) in planned.iter().enumerate() {
        let recs = &records[p * config.trials..(p + 1) * config.trials];
        let point = &planned_point.point;
        let mut push = |method: Method, lag: Option<usize>, gaps: Vec<f64>| -> Result<()> {
            if gaps.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFiniteResult {
                    context: format!("{method} gap at T={} N={}", point.horizon, point.experiments),
                });
            }
            let s = summarize(&gaps)?;
            rows.push(SweepRow {
                sweep_name: family.name(),
                sweep_value: planned_point.sweep_value,
                method,
                lag,
                horizon: point.horizon,
                experiments: point.experiments,
                snr: planned_point.snr,
                mean_gap: s.mean,
                ci_low: s.ci_low,
                ci_high: s.ci_high,
                trial_count: gaps.len(),
                master_seed: config.master_seed,
            });
            Ok(())
        };
        if point.methods.contains(&Method::Direct) {
            push(Method::Direct, None, recs.iter().filter_map(|r| r.direct_gap).collect())?;
        }
        if point.methods.contains(&Method::Indirect) {
            for (i, &lag) in point.lags.iter().enumerate() {
                push(Method::Indirect, Some(lag), recs.iter().map(|r| r.indirect_gaps[i].1).collect())?;
            }
        }
    }
    Ok(SweepResult { rows })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Theorem1Row {
    pub experiments: usize,
    pub eps: f64,
    pub empirical_freq: f64,
    pub bound: f64,
    pub excluded_trials: usize,
    pub trial_count: usize,
    pub master_seed: u64,
}

/// Per-`N` summary of the implicit model error over included trials.
#[derive(Clone, Debug)]
pub struct DeltaSummary {
    pub experiments: usize,
    pub mean_delta: Matrix,
    /// Standard error of each entry of `mean_delta`.
    pub std_error: Matrix,
    pub mean_frobenius: f64,
    /// Smallest `sigma_min(U U' / N)` over included trials.
    pub min_sigma_min: f64,
    pub included: usize,
    pub excluded: usize,
}

#[derive(Clone, Debug)]
pub struct Theorem1Report {
    pub sigma_w: f64,
    pub sigma_u: f64,
    pub rows: Vec<Theorem1Row>,
    pub per_n: Vec<DeltaSummary>,
}

/// Empirical check of the tail bound on `||V U^†||_F` over `N_grid`.
///
/// Trials whose empirical input covariance is numerically singular are
/// excluded and counted. The bound for each `(N, eps)` uses the smallest
/// `sigma_min` among the included trials.
pub fn verify_theorem1(config: &ExperimentConfig, eps_grid: &[f64], trials: usize) -> Result<Theorem1Report> {
    config.validate()?;
    if trials == 0 {
        return Err(invalid("trials", "must be at least 1"));
    }
    if eps_grid.is_empty() || eps_grid.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
        return Err(invalid("eps_grid", "must be non-empty with values > 0"));
    }
    let horizon = config.horizon;
    let sys = system_for(config, None, config.omega_scalar)?;
    let sigma_w = noise_output_variance(&sys, horizon);
    let sigma_u = config.sigma_u * config.sigma_u;

    let mut rows = Vec::new();
    let mut per_n = Vec::new();
    for (p, &experiments) in config.n_grid.iter().enumerate() {
        let samples: Vec<Option<(Matrix, f64)>> = (0..trials)
            .into_par_iter()
            .map(|t| {
                let mut rng = trial_stream(config.master_seed, p, t);
                let data = generate_dataset(&sys, horizon, experiments, config.sigma_u, &mut rng)?;
                let sigma_min = empirical_sigma_min(&data);
                let cov_scale = {
                    let u = data.u();
                    (u * u.transpose() / experiments as f64).norm()
                };
                if experiments < horizon || sigma_min <= default_rank_tol(horizon, experiments) * cov_scale {
                    return Ok(None);
                }
                let delta = implicit_model_error(&data, default_rank_tol(horizon, experiments))?;
                Ok(Some((delta, sigma_min)))
            })
            .collect::<Result<_>>()?;

        let included: Vec<&(Matrix, f64)> = samples.iter().flatten().collect();
        let excluded = trials - included.len();
        let k = included.len();
        let mut mean_delta = Matrix::zeros(horizon, horizon);
        let mut sq = Matrix::zeros(horizon, horizon);
        let mut mean_frobenius = 0.0;
        let mut min_sigma_min = f64::INFINITY;
        for (delta, sigma_min) in &included {
            mean_delta += delta;
            sq += delta.component_mul(delta);
            mean_frobenius += delta.norm();
            min_sigma_min = min_sigma_min.min(*sigma_min);
        }
        if k > 0 {
            mean_delta /= k as f64;
            mean_frobenius /= k as f64;
        }
        let std_error = if k > 1 {
            let kf = k as f64;
            let var = (sq / kf - mean_delta.component_mul(&mean_delta)) * (kf / (kf - 1.0));
            var.map(|x| (x.max(0.0) / kf).sqrt())
        } else {
            Matrix::from_element(horizon, horizon, f64::NAN)
        };

        for &eps in eps_grid {
            let (freq, bound) = if k == 0 {
                (f64::NAN, f64::NAN)
            } else {
                let hits = included.iter().filter(|(d, _)| d.norm() >= eps).count();
                (
                    hits as f64 / k as f64,
                    theorem1_bound(horizon, experiments, eps, sigma_w, sigma_u, min_sigma_min)?,
                )
            };
            rows.push(Theorem1Row {
                experiments,
                eps,
                empirical_freq: freq,
                bound,
                excluded_trials: excluded,
                trial_count: trials,
                master_seed: config.master_seed,
            });
        }
        per_n.push(DeltaSummary {
            experiments,
            mean_delta,
            std_error,
            mean_frobenius,
            min_sigma_min,
            included: k,
            excluded,
        });
    }
    Ok(Theorem1Report {
        sigma_w,
        sigma_u,
        rows,
        per_n,
    })
}
