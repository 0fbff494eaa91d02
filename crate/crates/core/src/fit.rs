//! Projected multi-start EM under a scale-ratio floor.
//!
//! Plain EM on a location-scale mixture happily walks into the degenerate
//! spikes that make the unconstrained MLE undefined. The estimator here
//! projects the scales back into the feasible set after every M-step
//! (clamping small scales up to `b * sigma_max`), runs several starts that
//! cover both benign and degenerate basins, and keeps the best feasible
//! log-likelihood.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::families::Family;
use crate::mixture::{
    meets_ratio_floor, project_scales, validate_data, Component, MixtureParams,
};
use crate::seed::derive_rng;
use rand::Rng;

/// Scales are never allowed to collapse all the way to zero inside an
/// M-step; this keeps intermediate parameters valid until the projection
/// lifts them back above the configured guard.
const MSTEP_SCALE_FLOOR: f64 = 1e-300;

/// Damping applied to each of the five weighted-score updates in the
/// logistic M-step.
const LOGISTIC_DAMPING: f64 = 0.5;
/// Fisher information of the logistic log-scale per observation, (pi^2+3)/9.
const LOGISTIC_LOG_SCALE_INFO: f64 = 1.4299560445654842;
/// Number of damped score iterations in the logistic M-step.
const LOGISTIC_SCORE_ITERS: usize = 5;

/// How the starts of a multi-start fit are initialized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum InitStrategy {
    /// Locations at the (m - 1/2)/M data quantiles, scales at std/M,
    /// uniform weights. Fully deterministic: every start is identical.
    QuantileSpread,
    /// Start 0 is the plain quantile spread; later starts jitter locations,
    /// scales, and weights around it.
    #[default]
    RandomJitter,
    /// Each start plants component 0 on a random data point with scale
    /// `b * std` (a degenerate spike basin); the rest spread over quantiles.
    Adversarial,
}

/// Configuration for [`fit_constrained`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    /// Component count M.
    pub num_components: usize,
    /// Family of each component; length M, uniform not allowed.
    pub families: Vec<Family>,
    /// Scale-ratio floor b in (0, 1).
    pub ratio_floor: f64,
    pub restarts: usize,
    pub max_iters: usize,
    /// Convergence threshold on |delta loglik| / max(1, |loglik|).
    pub rel_tol: f64,
    pub init_strategy: InitStrategy,
    /// Absolute floor applied by the projection alongside the ratio floor.
    pub guard_floor: f64,
    pub seed: u64,
}

impl FitConfig {
    pub const DEFAULT_RESTARTS: usize = 10;
    pub const DEFAULT_MAX_ITERS: usize = 500;
    pub const DEFAULT_REL_TOL: f64 = 1e-8;
    pub const DEFAULT_GUARD_FLOOR: f64 = 1e-30;

    /// All-normal mixture with the default knobs.
    pub fn normal(num_components: usize, ratio_floor: f64, seed: u64) -> Self {
        FitConfig {
            num_components,
            families: vec![Family::Normal; num_components],
            ratio_floor,
            restarts: Self::DEFAULT_RESTARTS,
            max_iters: Self::DEFAULT_MAX_ITERS,
            rel_tol: Self::DEFAULT_REL_TOL,
            init_strategy: InitStrategy::default(),
            guard_floor: Self::DEFAULT_GUARD_FLOOR,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_components == 0 {
            return Err(Error::config("num_components", "must be at least 1"));
        }
        if self.families.len() != self.num_components {
            return Err(Error::config(
                "families",
                format!(
                    "expected {} entries, got {}",
                    self.num_components,
                    self.families.len()
                ),
            ));
        }
        if self.families.contains(&Family::Uniform) {
            return Err(Error::config(
                "families",
                "uniform components cannot be fitted: their scale likelihood is a step function",
            ));
        }
        if !(self.ratio_floor > 0.0 && self.ratio_floor < 1.0) {
            return Err(Error::config(
                "ratio_floor",
                format!("must lie in (0, 1), got {}", self.ratio_floor),
            ));
        }
        if self.restarts == 0 {
            return Err(Error::config("restarts", "must be at least 1"));
        }
        if self.max_iters == 0 {
            return Err(Error::config("max_iters", "must be at least 1"));
        }
        if !(self.rel_tol.is_finite() && self.rel_tol > 0.0) {
            return Err(Error::config(
                "rel_tol",
                format!("must be positive and finite, got {}", self.rel_tol),
            ));
        }
        if !(self.guard_floor.is_finite() && self.guard_floor > 0.0) {
            return Err(Error::config(
                "guard_floor",
                format!("must be positive and finite, got {}", self.guard_floor),
            ));
        }
        Ok(())
    }
}

/// Outcome of a constrained fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub theta_hat: MixtureParams,
    /// Log-likelihood of `theta_hat`; always equals
    /// `theta_hat.loglik(data)` for the data that produced it.
    pub loglik: f64,
    /// EM iterations each start ran (aborted starts report the iterations
    /// completed before the abort).
    pub iterations_per_start: Vec<usize>,
    pub best_start_index: usize,
    /// Whether the best start met `rel_tol` before `max_iters`.
    pub converged: bool,
    /// Raised-scale events in the best start, summed over its iterations.
    pub projection_activations: usize,
    /// Whether the absolute guard floor (rather than the ratio floor) ever
    /// bound a scale in the best start.
    pub guard_floor_hit: bool,
    pub aborted_starts: usize,
}

/// One unconstrained EM step: responsibilities from `theta`, then exact
/// (normal, Laplace) or damped-score (logistic) weighted M-steps.
///
/// For all-normal mixtures this is textbook EM, so the data log-likelihood
/// never decreases. Errors if some data point has zero density under every
/// component (responsibilities undefined) or a component family is uniform.
pub fn em_step(theta: &MixtureParams, data: &[f64]) -> Result<MixtureParams> {
    validate_data(data)?;
    if theta.components().iter().any(|c| c.family == Family::Uniform) {
        return Err(Error::config(
            "families",
            "uniform components cannot be fitted: their scale likelihood is a step function",
        ));
    }
    let (resp, _) = responsibilities(theta, data)?;
    m_step(theta, data, &resp)
}

/// E-step: responsibilities (row-major, `n x M`) and the log-likelihood of
/// `theta` on `data`, which falls out of the same pass.
fn responsibilities(theta: &MixtureParams, data: &[f64]) -> Result<(Vec<f64>, f64)> {
    let m = theta.num_components();
    // per-component constants hoisted out of the data loop
    let evals: Vec<(Family, f64, f64, f64)> = theta
        .components()
        .iter()
        .map(|c| (c.family, c.mu, c.sigma, c.weight.ln() - c.sigma.ln()))
        .collect();
    let mut resp = vec![0.0; data.len() * m];
    let mut loglik = 0.0;
    let mut terms = vec![0.0; m];
    for (i, &x) in data.iter().enumerate() {
        let mut lse = f64::NEG_INFINITY;
        for (j, &(family, mu, sigma, log_scale)) in evals.iter().enumerate() {
            let t = if log_scale == f64::NEG_INFINITY {
                f64::NEG_INFINITY
            } else {
                log_scale + family.standard_logpdf((x - mu) / sigma)
            };
            terms[j] = t;
            lse = crate::mixture::logaddexp(lse, t);
        }
        if lse == f64::NEG_INFINITY {
            return Err(Error::VanishingDensity { row: i });
        }
        for j in 0..m {
            resp[i * m + j] = (terms[j] - lse).exp();
        }
        loglik += lse;
    }
    Ok((resp, loglik))
}

fn m_step(theta: &MixtureParams, data: &[f64], resp: &[f64]) -> Result<MixtureParams> {
    let m = theta.num_components();
    let n = data.len();
    // ascending order of the data, shared by every weighted-median M-step
    let mut order: Option<Vec<usize>> = None;
    let weight_sums: Vec<f64> = (0..m)
        .map(|j| (0..n).map(|i| resp[i * m + j]).sum())
        .collect();
    let total: f64 = weight_sums.iter().sum();

    let mut components = Vec::with_capacity(m);
    for (j, old) in theta.components().iter().enumerate() {
        let wsum = weight_sums[j];
        let weight = wsum / total;
        if wsum == 0.0 {
            // a dead component keeps its parameters and zero weight
            components.push(Component {
                weight: 0.0,
                ..*old
            });
            continue;
        }
        let col = |i: usize| resp[i * m + j];
        let (mu, sigma) = match old.family {
            Family::Normal => {
                let mu = (0..n).map(|i| col(i) * data[i]).sum::<f64>() / wsum;
                let var = (0..n)
                    .map(|i| {
                        let d = data[i] - mu;
                        col(i) * d * d
                    })
                    .sum::<f64>()
                    / wsum;
                (mu, var.sqrt())
            }
            Family::Laplace => {
                let order = order.get_or_insert_with(|| {
                    let mut idx: Vec<usize> = (0..n).collect();
                    idx.sort_by(|&a, &b| data[a].total_cmp(&data[b]));
                    idx
                });
                let mu = weighted_median(data, order, &col, wsum);
                let mad = (0..n).map(|i| col(i) * (data[i] - mu).abs()).sum::<f64>() / wsum;
                (mu, mad)
            }
            Family::Logistic => logistic_score_step(data, &col, wsum, old.mu, old.sigma),
            Family::Uniform => unreachable!("uniform components are rejected before the M-step"),
        };
        components.push(Component {
            family: old.family,
            weight,
            mu,
            sigma: sigma.max(MSTEP_SCALE_FLOOR),
        });
    }
    MixtureParams::new(components)
}

/// Smallest data value whose cumulative responsibility reaches half the
/// component's total weight.
fn weighted_median(data: &[f64], order: &[usize], col: &dyn Fn(usize) -> f64, wsum: f64) -> f64 {
    let half = wsum / 2.0;
    let mut cum = 0.0;
    for &i in order {
        cum += col(i);
        if cum >= half {
            return data[i];
        }
    }
    data[*order.last().expect("data is non-empty")]
}

/// Five damped Newton-style updates on the logistic weighted score, using
/// the per-observation Fisher information 1/(3 s^2) for the location and
/// (pi^2+3)/9 for the log-scale.
fn logistic_score_step(
    data: &[f64],
    col: &dyn Fn(usize) -> f64,
    wsum: f64,
    mut mu: f64,
    mut sigma: f64,
) -> (f64, f64) {
    for _ in 0..LOGISTIC_SCORE_ITERS {
        let mut score_mu = 0.0;
        let mut score_log_s = 0.0;
        for (i, &x) in data.iter().enumerate() {
            let w = col(i);
            if w == 0.0 {
                continue;
            }
            let z = (x - mu) / sigma;
            let t = (0.5 * z).tanh();
            score_mu += w * t;
            score_log_s += w * (z * t - 1.0);
        }
        let g_mu = score_mu / wsum;
        let g_log_s = score_log_s / wsum;
        mu += LOGISTIC_DAMPING * 3.0 * sigma * g_mu;
        sigma *= (LOGISTIC_DAMPING * g_log_s / LOGISTIC_LOG_SCALE_INFO).exp();
        sigma = sigma.max(MSTEP_SCALE_FLOOR);
    }
    (mu, sigma)
}

struct StartOutcome {
    theta: Option<MixtureParams>,
    loglik: f64,
    iterations: usize,
    converged: bool,
    projection_activations: usize,
    guard_floor_hit: bool,
    abort: Option<String>,
}

/// Maximize the constrained likelihood by projected multi-start EM.
///
/// Every start initializes per the configured strategy, is projected into
/// the feasible set, and alternates EM steps with scale projection until
/// the relative log-likelihood change drops below `rel_tol` or `max_iters`
/// is hit. The start with the highest feasible log-likelihood wins; exact
/// ties go to the lowest start index. Identical (data, config) inputs give
/// identical results.
pub fn fit_constrained(data: &[f64], config: &FitConfig) -> Result<FitResult> {
    config.validate()?;
    validate_data(data)?;

    let mut sorted = data.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = data.len() as f64;
    let mean = data.iter().sum::<f64>() / n;
    let std = (data.iter().map(|&x| (x - mean) * (x - mean)).sum::<f64>() / n).sqrt();

    let outcomes: Vec<StartOutcome> = (0..config.restarts)
        .map(|start| run_start(data, &sorted, std, config, start))
        .collect();

    let mut best: Option<usize> = None;
    for (k, o) in outcomes.iter().enumerate() {
        if o.theta.is_none() {
            continue;
        }
        let better = match best {
            None => true,
            Some(b) => o.loglik > outcomes[b].loglik,
        };
        if better {
            best = Some(k);
        }
    }
    let aborted = outcomes.iter().filter(|o| o.theta.is_none()).count();
    let Some(best_idx) = best else {
        let first = outcomes
            .iter()
            .find_map(|o| o.abort.clone())
            .unwrap_or_else(|| "no start produced a candidate".into());
        return Err(Error::AllStartsAborted(first));
    };

    let best_outcome = &outcomes[best_idx];
    let theta_hat = best_outcome.theta.clone().expect("best start has a candidate");
    debug_assert!(meets_ratio_floor(&theta_hat, config.ratio_floor));
    Ok(FitResult {
        theta_hat,
        loglik: best_outcome.loglik,
        iterations_per_start: outcomes.iter().map(|o| o.iterations).collect(),
        best_start_index: best_idx,
        converged: best_outcome.converged,
        projection_activations: best_outcome.projection_activations,
        guard_floor_hit: best_outcome.guard_floor_hit,
        aborted_starts: aborted,
    })
}

fn run_start(
    data: &[f64],
    sorted: &[f64],
    std: f64,
    config: &FitConfig,
    start: usize,
) -> StartOutcome {
    let mut rng = derive_rng(config.seed, &[start as u64]);
    let init = initialize(sorted, std, config, start, &mut rng);
    let mut outcome = StartOutcome {
        theta: None,
        loglik: f64::NEG_INFINITY,
        iterations: 0,
        converged: false,
        projection_activations: 0,
        guard_floor_hit: false,
        abort: None,
    };
    let projected = match project_scales(&init, config.ratio_floor, config.guard_floor) {
        Ok((theta, effect)) => {
            outcome.projection_activations += effect.raised;
            outcome.guard_floor_hit |= effect.guard_hit;
            theta
        }
        Err(e) => {
            outcome.abort = Some(e.to_string());
            return outcome;
        }
    };

    let mut theta = projected;
    let mut prev_loglik = f64::NEG_INFINITY;
    for iter in 0..=config.max_iters {
        let (resp, loglik) = match responsibilities(&theta, data) {
            Ok(r) => r,
            Err(e) => {
                outcome.abort = Some(e.to_string());
                return outcome;
            }
        };
        let rel_change = (loglik - prev_loglik).abs() / loglik.abs().max(1.0);
        if iter > 0 && rel_change < config.rel_tol {
            outcome.theta = Some(theta);
            outcome.loglik = loglik;
            outcome.converged = true;
            return outcome;
        }
        if iter == config.max_iters {
            outcome.theta = Some(theta);
            outcome.loglik = loglik;
            return outcome;
        }
        prev_loglik = loglik;
        let stepped = match m_step(&theta, data, &resp) {
            Ok(t) => t,
            Err(e) => {
                outcome.abort = Some(e.to_string());
                return outcome;
            }
        };
        match project_scales(&stepped, config.ratio_floor, config.guard_floor) {
            Ok((t, effect)) => {
                outcome.projection_activations += effect.raised;
                outcome.guard_floor_hit |= effect.guard_hit;
                theta = t;
            }
            Err(e) => {
                outcome.abort = Some(e.to_string());
                return outcome;
            }
        }
        outcome.iterations = iter + 1;
    }
    unreachable!("loop returns at or before max_iters");
}

fn initialize(
    sorted: &[f64],
    std: f64,
    config: &FitConfig,
    start: usize,
    rng: &mut impl Rng,
) -> MixtureParams {
    let m = config.num_components;
    let base_sigma = (std / m as f64).max(MSTEP_SCALE_FLOOR);
    let quantile = |q: f64| {
        let idx = (q * (sorted.len() - 1) as f64).round() as usize;
        sorted[idx.min(sorted.len() - 1)]
    };
    let spread = |families: &[Family]| -> Vec<Component> {
        families
            .iter()
            .enumerate()
            .map(|(j, &family)| Component {
                family,
                weight: 1.0 / m as f64,
                mu: quantile((j as f64 + 0.5) / m as f64),
                sigma: base_sigma,
            })
            .collect()
    };

    let components = match config.init_strategy {
        InitStrategy::QuantileSpread => spread(&config.families),
        InitStrategy::RandomJitter => {
            let mut comps = spread(&config.families);
            if start > 0 {
                let mut raw_weights = vec![0.0; m];
                for (j, c) in comps.iter_mut().enumerate() {
                    c.mu += std * rng.random_range(-0.75..0.75);
                    c.sigma = base_sigma * rng.random_range(-1.5..1.5f64).exp();
                    raw_weights[j] = -rng.random::<f64>().max(f64::MIN_POSITIVE).ln();
                }
                let total: f64 = raw_weights.iter().sum();
                for (c, w) in comps.iter_mut().zip(&raw_weights) {
                    c.weight = w / total;
                }
            }
            comps
        }
        InitStrategy::Adversarial => {
            let mut comps: Vec<Component> = config
                .families
                .iter()
                .enumerate()
                .map(|(j, &family)| {
                    let q = if m > 1 {
                        (j as f64 - 0.5) / (m - 1) as f64
                    } else {
                        0.5
                    };
                    Component {
                        family,
                        weight: 1.0 / m as f64,
                        mu: quantile(q.clamp(0.0, 1.0)),
                        sigma: std.max(MSTEP_SCALE_FLOOR),
                    }
                })
                .collect();
            let idx = rng.random_range(0..sorted.len());
            comps[0].mu = sorted[idx];
            comps[0].sigma = (config.ratio_floor * std).max(MSTEP_SCALE_FLOOR);
            comps
        }
    };
    normalize_weights(components)
}

fn normalize_weights(mut components: Vec<Component>) -> MixtureParams {
    let total: f64 = components.iter().map(|c| c.weight).sum();
    for c in &mut components {
        c.weight /= total;
    }
    MixtureParams::new(components).expect("initializer builds valid parameters")
}
