//! Empirical checks of the analytic bounds behind the constrained MLE.
//!
//! Each check here takes an inequality that the theory asserts
//! deterministically (density envelopes, the step-function domination, the
//! log-likelihood ceiling on the constrained band, tail bounds on sample
//! extremes, interval hit counts) and slams random inputs into it, counting
//! violations and tracking the worst margin. A healthy bound shows zero
//! violations with a nonnegative worst margin; the tolerances below absorb
//! floating-point rounding only, not statistical slack.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::families::{Family, ALL_FAMILIES};
use crate::mixture::{
    meets_ratio_floor, meets_scale_floor, validate_data, Component, ConstraintSchedule,
    MixtureParams,
};
use crate::report::{fmt_f64, fmt_opt_f64, CsvRecord};
use crate::seed::derive_rng;

/// Absolute slack allowed when a density is compared to its envelope.
pub const ENVELOPE_TOL: f64 = 1e-12;
/// Relative tolerance on the crossover identity
/// `(1/sigma) v1 (nu/sigma)^-beta = v0 sigma`.
pub const CROSSOVER_RTOL: f64 = 1e-9;
/// Absolute slack allowed when a scaled density is compared to the step
/// bound.
pub const STEP_BOUND_TOL: f64 = 1e-12;
/// Absolute slack (in log-likelihood units) allowed on the ceiling margin.
pub const CEILING_TOL: f64 = 1e-9;
/// Smallest scale the band sampler will draw. This is a sampling floor,
/// not the projection guard: it only keeps drawn scales representable.
pub const DRAW_SCALE_FLOOR: f64 = 1e-300;
/// Grid resolution used to estimate the sup of a mixture density.
const SUP_DENSITY_GRID: usize = 100_000;

/// Outcome of one bound check; `worst_margin >= 0` (up to the check's
/// tolerance) means the bound held on every case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCheckReport {
    pub check: String,
    /// Sample size for data-driven checks; absent for pointwise ones.
    pub n: Option<usize>,
    /// Number of random cases evaluated.
    pub draws: usize,
    pub violations: usize,
    /// Minimum over cases of (bound - value).
    pub worst_margin: f64,
    pub a0: Option<f64>,
    pub zeta: Option<f64>,
    pub a_n: Option<f64>,
    /// Concentration-interval half-width at the largest admissible scale.
    pub w_n: Option<f64>,
    /// Intervals of half-width `w_n` needed to tile `[-a_n, a_n]`.
    pub k_wn: Option<f64>,
    /// Estimated sup of the data-generating density.
    pub u0: Option<f64>,
}

impl BoundCheckReport {
    fn new(check: &str, n: Option<usize>, draws: usize) -> Self {
        BoundCheckReport {
            check: check.to_string(),
            n,
            draws,
            violations: 0,
            worst_margin: f64::INFINITY,
            a0: None,
            zeta: None,
            a_n: None,
            w_n: None,
            k_wn: None,
            u0: None,
        }
    }

    fn absorb(&mut self, margin: f64, tol: f64) {
        if margin < -tol {
            self.violations += 1;
        }
        if margin < self.worst_margin {
            self.worst_margin = margin;
        }
    }

    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

impl CsvRecord for BoundCheckReport {
    fn csv_header() -> &'static str {
        "check,n,draws,violations,worst_margin,a0,zeta,a_n,w_n,k_wn,u0"
    }

    fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.check,
            self.n.map(|n| n.to_string()).unwrap_or_default(),
            self.draws,
            self.violations,
            fmt_f64(self.worst_margin),
            fmt_opt_f64(self.a0),
            fmt_opt_f64(self.zeta),
            fmt_opt_f64(self.a_n),
            fmt_opt_f64(self.w_n),
            fmt_opt_f64(self.k_wn),
            fmt_opt_f64(self.u0),
        )
    }
}

/// Check `f(z) <= min(v0, v1 |z|^-beta)` for every family on a dense grid
/// over [-50, 50] plus `points` log-spread random arguments.
pub fn check_envelope(points: usize, seed: u64) -> Vec<BoundCheckReport> {
    ALL_FAMILIES
        .iter()
        .map(|&family| {
            let envelope = family.envelope();
            let mut report =
                BoundCheckReport::new(&format!("envelope-{family}"), None, 2 * points);
            let mut rng = derive_rng(seed, &[family as u64]);
            for i in 0..points {
                let z = -50.0 + 100.0 * (i as f64 / points.max(1) as f64);
                report.absorb(envelope.bound(z) - family.standard_pdf(z), ENVELOPE_TOL);
            }
            for _ in 0..points {
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                let z = sign * 10f64.powf(rng.random_range(-8.0..4.0));
                report.absorb(envelope.bound(z) - family.standard_pdf(z), ENVELOPE_TOL);
            }
            report
        })
        .collect()
}

/// Check the crossover identity at `nu(sigma)` for every family over
/// `draws` log-uniform scales: the decaying tail of the scaled envelope
/// meets the constant cap exactly there.
pub fn check_crossover(draws: usize, seed: u64) -> Vec<BoundCheckReport> {
    ALL_FAMILIES
        .iter()
        .map(|&family| {
            let envelope = family.envelope();
            let mut report =
                BoundCheckReport::new(&format!("crossover-{family}"), None, draws);
            let mut rng = derive_rng(seed, &[family as u64]);
            for _ in 0..draws {
                let sigma = 10f64.powf(rng.random_range(-6.0..3.0));
                let nu = family.nu_unchecked(sigma);
                let tail = envelope.v1 * (nu / sigma).powf(-envelope.beta) / sigma;
                let cap = envelope.v0 * sigma;
                let rel = (tail - cap).abs() / cap;
                report.absorb(CROSSOVER_RTOL - rel, 0.0);
            }
            report
        })
        .collect()
}

/// Check that the two-piece step function dominates the scaled density on
/// random (family, x, mu, sigma) tuples, half of them clustered around the
/// crossover radius where the pieces meet.
pub fn check_step_bound(draws: usize, seed: u64) -> BoundCheckReport {
    let mut report = BoundCheckReport::new("step-bound", None, draws);
    let mut rng = derive_rng(seed, &[]);
    for _ in 0..draws {
        let family = ALL_FAMILIES[rng.random_range(0..ALL_FAMILIES.len())];
        let mu = rng.random_range(-10.0..10.0);
        let sigma = 10f64.powf(rng.random_range(-4.0..2.0));
        let x = if rng.random::<bool>() {
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            mu + sign * rng.random_range(0.0..3.0) * family.nu_unchecked(sigma)
        } else {
            rng.random_range(-20.0..20.0)
        };
        let density = family.standard_pdf((x - mu) / sigma) / sigma;
        let bound = family
            .step_bound(x, mu, sigma)
            .expect("drawn scales are positive");
        report.absorb(bound - density, STEP_BOUND_TOL);
    }
    report
}

/// Margin of the log-likelihood ceiling for one parameter point inside the
/// constrained band.
///
/// For parameters meeting the ratio floor `b` whose smallest scale lies
/// below `c`, the log-likelihood is bounded by counting how many
/// observations fall inside the concentration intervals: points inside
/// contribute at most `log(v0max / sigma_min)`, points outside at most
/// `log(v0max * sigma_max)`. Returns `ceiling - loglik`; nonnegative means
/// the bound held. Errors if the parameters sit outside the band.
pub fn loglik_bound_margin(
    theta: &MixtureParams,
    data: &[f64],
    ratio_floor: f64,
    scale_floor: f64,
) -> Result<f64> {
    validate_data(data)?;
    if !meets_ratio_floor(theta, ratio_floor) {
        return Err(Error::config(
            "theta",
            format!("scale ratio {} is below the floor {ratio_floor}", theta.min_scale_ratio()),
        ));
    }
    if meets_scale_floor(theta, scale_floor) {
        return Err(Error::config(
            "theta",
            format!(
                "smallest scale {} is not below {scale_floor}; the ceiling only binds on the \
                 near-degenerate band",
                theta.sigma_min()
            ),
        ));
    }
    let v0_max = theta
        .components()
        .iter()
        .map(|c| c.family.envelope().v0)
        .fold(f64::NEG_INFINITY, f64::max);
    let inside = theta.concentration_intervals().count_within(data) as f64;
    let outside = data.len() as f64 - inside;
    let ceiling = inside * (v0_max / theta.sigma_min()).ln()
        + outside * (v0_max * theta.sigma_max()).ln();
    Ok(ceiling - theta.loglik(data)?)
}

/// Configuration of a ceiling sweep over random band draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CeilingSweepConfig {
    /// Data-generating mixture.
    pub model: MixtureParams,
    pub schedule: ConstraintSchedule,
    pub n: usize,
    pub draws: usize,
    pub seed: u64,
}

/// Sweep the log-likelihood ceiling: each draw samples a fresh dataset
/// from the model and a fresh parameter point from the constrained band at
/// sample size `n`, then checks `loglik <= ceiling`.
pub fn check_loglik_bound(config: &CeilingSweepConfig) -> Result<BoundCheckReport> {
    if config.n == 0 {
        return Err(Error::config("n", "need at least one observation"));
    }
    if config.draws == 0 {
        return Err(Error::config("draws", "need at least one draw"));
    }
    let log_b = config.schedule.log_ratio_floor(config.n);
    let log_c = config.schedule.log_scale_floor(config.n);
    let ratio_floor = log_b.exp();
    if !(ratio_floor > 0.0 && ratio_floor < 1.0) {
        return Err(Error::config(
            "schedule",
            format!("ratio floor at n = {} is {ratio_floor}, outside (0, 1)", config.n),
        ));
    }
    let scale_floor = log_c.exp();
    let families: Vec<Family> = config.model.components().iter().map(|c| c.family).collect();

    let margins: Vec<f64> = (0..config.draws)
        .into_par_iter()
        .map(|i| {
            let mut rng = derive_rng(config.seed, &[i as u64]);
            let data = config.model.sample(config.n, &mut rng)?;
            let lo = data.iter().cloned().fold(f64::INFINITY, f64::min) - 1.0;
            let hi = data.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 1.0;
            let theta = draw_in_band(&families, log_b, log_c, (lo, hi), &mut rng)?;
            loglik_bound_margin(&theta, &data, ratio_floor, scale_floor)
        })
        .collect::<Result<_>>()?;

    let mut report = BoundCheckReport::new("loglik-bound", Some(config.n), config.draws);
    for margin in margins {
        report.absorb(margin, CEILING_TOL);
    }
    Ok(report)
}

/// Configuration for the sample-extremes check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtremesConfig {
    pub model: MixtureParams,
    /// Scale constant of the extremes bound `a_n = a0 * n^((2+zeta)/(beta-1))`.
    pub a0: f64,
    pub zeta: f64,
    pub sample_sizes: Vec<usize>,
    pub replicates: usize,
    pub seed: u64,
}

/// Growth rate of the extremes bound, driven by the slowest (smallest
/// beta) envelope tail among the model's families.
fn extremes_exponent(model: &MixtureParams, zeta: f64) -> f64 {
    let beta = model
        .components()
        .iter()
        .map(|c| c.family.envelope().beta)
        .fold(f64::INFINITY, f64::min);
    (2.0 + zeta) / (beta - 1.0)
}

/// Check `max_i |x_i| <= a_n` over replicated samples at each sample size.
///
/// The bound is asymptotic (almost surely, eventually), so violations at
/// honest rates are informative rather than fatal; the report carries the
/// count and the worst margin per sample size.
pub fn check_extremes(config: &ExtremesConfig) -> Result<Vec<BoundCheckReport>> {
    if !(config.a0.is_finite() && config.a0 > 0.0) {
        return Err(Error::config("a0", format!("must be positive, got {}", config.a0)));
    }
    if !(config.zeta.is_finite() && config.zeta > 0.0) {
        return Err(Error::config("zeta", format!("must be positive, got {}", config.zeta)));
    }
    if config.sample_sizes.is_empty() {
        return Err(Error::config("sample_sizes", "need at least one size"));
    }
    if config.sample_sizes.contains(&0) {
        return Err(Error::config("sample_sizes", "sizes must be at least 1"));
    }
    if config.replicates == 0 {
        return Err(Error::config("replicates", "need at least one replicate"));
    }
    let exponent = extremes_exponent(&config.model, config.zeta);
    config
        .sample_sizes
        .iter()
        .map(|&n| {
            let a_n = config.a0 * (n as f64).powf(exponent);
            let margins: Vec<f64> = (0..config.replicates)
                .into_par_iter()
                .map(|r| {
                    let mut rng = derive_rng(config.seed, &[n as u64, r as u64]);
                    let data = config.model.sample(n, &mut rng)?;
                    let max_abs = data.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
                    Ok(a_n - max_abs)
                })
                .collect::<Result<_>>()?;
            let mut report = BoundCheckReport::new("extremes", Some(n), config.replicates);
            for margin in margins {
                report.absorb(margin, 0.0);
            }
            report.a0 = Some(config.a0);
            report.zeta = Some(config.zeta);
            report.a_n = Some(a_n);
            Ok(report)
        })
        .collect()
}

/// Configuration for the concentration-interval counting check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalCountConfig {
    pub model: MixtureParams,
    pub schedule: ConstraintSchedule,
    pub n: usize,
    pub draws: usize,
    pub seed: u64,
    /// Center drawn locations on the densest data points instead of
    /// spreading them over `[-a_n, a_n]`.
    #[serde(default)]
    pub adversarial: bool,
    #[serde(default = "default_a0")]
    pub a0: f64,
    #[serde(default = "default_zeta")]
    pub zeta: f64,
}

fn default_a0() -> f64 {
    10.0
}

fn default_zeta() -> f64 {
    1.0
}

/// Check that no band draw captures more than `4M` observations inside its
/// concentration intervals, on one fixed dataset per configuration.
///
/// The report also carries the deterministic tiling quantities: the
/// half-width `w_n` of the widest admissible interval, the count `k(w_n)`
/// of such intervals needed to cover `[-a_n, a_n]`, and an estimate of the
/// sup of the data-generating density.
pub fn check_interval_count(config: &IntervalCountConfig) -> Result<BoundCheckReport> {
    if config.n == 0 {
        return Err(Error::config("n", "need at least one observation"));
    }
    if config.draws == 0 {
        return Err(Error::config("draws", "need at least one draw"));
    }
    if !(config.a0.is_finite() && config.a0 > 0.0) {
        return Err(Error::config("a0", format!("must be positive, got {}", config.a0)));
    }
    if !(config.zeta.is_finite() && config.zeta > 0.0) {
        return Err(Error::config("zeta", format!("must be positive, got {}", config.zeta)));
    }
    let log_b = config.schedule.log_ratio_floor(config.n);
    let log_c = config.schedule.log_scale_floor(config.n);
    let ratio_floor = log_b.exp();
    if !(ratio_floor > 0.0 && ratio_floor < 1.0) {
        return Err(Error::config(
            "schedule",
            format!("ratio floor at n = {} is {ratio_floor}, outside (0, 1)", config.n),
        ));
    }

    let mut data = config
        .model
        .sample(config.n, &mut derive_rng(config.seed, &[0]))?;
    data.sort_by(f64::total_cmp);
    let families: Vec<Family> = config.model.components().iter().map(|c| c.family).collect();
    let m = families.len();
    let exponent = extremes_exponent(&config.model, config.zeta);
    let a_n = config.a0 * (config.n as f64).powf(exponent);
    let dense_targets = if config.adversarial {
        Some(densest_points(&data, m))
    } else {
        None
    };

    let counts: Vec<usize> = (0..config.draws)
        .into_par_iter()
        .map(|i| {
            let mut rng = derive_rng(config.seed, &[1, i as u64]);
            let mut theta = draw_in_band(&families, log_b, log_c, (-a_n, a_n), &mut rng)?;
            if let Some(targets) = &dense_targets {
                let comps: Vec<Component> = theta
                    .components()
                    .iter()
                    .zip(targets)
                    .map(|(c, &mu)| Component { mu, ..*c })
                    .collect();
                theta = MixtureParams::new(comps)?;
            }
            Ok(theta.concentration_intervals().count_within(&data))
        })
        .collect::<Result<_>>()?;

    let bound = 4 * m;
    let mut report = BoundCheckReport::new("interval-count", Some(config.n), config.draws);
    for count in counts {
        report.absorb(bound as f64 - count as f64, 0.0);
    }

    // widest admissible interval: the scale ceiling c/b forced by the band,
    // pushed through the slowest-growing crossover among the families
    let log_scale_ceiling = log_c - log_b;
    let log_w = families
        .iter()
        .map(|f| {
            let e = f.envelope();
            (1.0 - 2.0 / e.beta) * log_scale_ceiling + (e.v1 / e.v0).ln() / e.beta
        })
        .fold(f64::NEG_INFINITY, f64::max);
    let w_n = log_w.exp();
    report.a0 = Some(config.a0);
    report.zeta = Some(config.zeta);
    report.a_n = Some(a_n);
    report.w_n = Some(w_n);
    report.k_wn = Some((a_n / w_n).ceil());
    report.u0 = Some(sup_density_estimate(&config.model, &data));
    Ok(report)
}

/// The `count` data values with the tightest five-point neighborhoods,
/// used as adversarial interval centers.
fn densest_points(sorted: &[f64], count: usize) -> Vec<f64> {
    let n = sorted.len();
    if n <= count || n < 5 {
        return sorted.iter().take(count.max(1)).cloned().collect();
    }
    let mut spans: Vec<(f64, usize)> = (2..n - 2)
        .map(|i| (sorted[i + 2] - sorted[i - 2], i))
        .collect();
    spans.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    spans.iter().take(count).map(|&(_, i)| sorted[i]).collect()
}

/// Grid estimate of `sup_x f(x)` over the data range extended by one unit
/// and every component location.
fn sup_density_estimate(model: &MixtureParams, sorted_data: &[f64]) -> f64 {
    let mut lo = sorted_data[0] - 1.0;
    let mut hi = sorted_data[sorted_data.len() - 1] + 1.0;
    for c in model.components() {
        lo = lo.min(c.mu - 1.0);
        hi = hi.max(c.mu + 1.0);
    }
    let step = (hi - lo) / (SUP_DENSITY_GRID - 1) as f64;
    let mut best = f64::NEG_INFINITY;
    for i in 0..SUP_DENSITY_GRID {
        best = best.max(model.logpdf(lo + step * i as f64));
    }
    for c in model.components() {
        best = best.max(model.logpdf(c.mu));
    }
    best.exp()
}

/// Draw a random parameter point from the band: ratio floor met, smallest
/// scale strictly below the scale floor.
///
/// The smallest scale is log-uniform on `[DRAW_SCALE_FLOOR, scale_floor)`,
/// the remaining scales sit log-uniformly within the admissible ratio
/// range above it, locations are uniform on `mu_range`, and weights are a
/// uniform simplex draw. Errors with [`Error::EmptyDrawBand`] when the
/// scale floor has decayed below the sampling floor.
pub fn draw_in_band(
    families: &[Family],
    log_ratio_floor: f64,
    log_scale_floor: f64,
    mu_range: (f64, f64),
    rng: &mut impl Rng,
) -> Result<MixtureParams> {
    if families.is_empty() {
        return Err(Error::EmptyMixture);
    }
    let log_floor = DRAW_SCALE_FLOOR.ln();
    // stay strictly inside the band so that post-rounding membership
    // checks on the exponentiated values cannot flip
    let hi = log_scale_floor - 1e-9 * (1.0 + log_scale_floor.abs());
    if hi <= log_floor {
        return Err(Error::EmptyDrawBand {
            log_floor,
            log_ceiling: log_scale_floor,
        });
    }
    let log_sigma_min = rng.random_range(log_floor..hi);
    let log_ratio_lo = log_ratio_floor * (1.0 - 1e-9);
    let mut weights = Vec::with_capacity(families.len());
    let mut components = Vec::with_capacity(families.len());
    for (j, &family) in families.iter().enumerate() {
        let log_sigma = if j == 0 {
            log_sigma_min
        } else {
            log_sigma_min - rng.random_range(log_ratio_lo..0.0)
        };
        weights.push(-rng.random::<f64>().max(f64::MIN_POSITIVE).ln());
        components.push(Component {
            family,
            weight: 0.0,
            mu: rng.random_range(mu_range.0..mu_range.1),
            sigma: log_sigma.exp(),
        });
    }
    let total: f64 = weights.iter().sum();
    for (c, w) in components.iter_mut().zip(&weights) {
        c.weight = w / total;
    }
    MixtureParams::new(components)
}
