//! Demonstrations of likelihood degeneracy in unconstrained mixtures.
//!
//! Two classic failure modes are reproduced on demand. First, pinning one
//! component on a data point and shrinking its scale sends the likelihood
//! to infinity along an explicit parameter path. Second, a spike whose
//! scale decays like `exp(-n^r)` keeps its per-observation log-likelihood
//! advantage growing with `n`, and the reported ratio floors show exactly
//! which constraint schedules exclude it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::families::Family;
use crate::mixture::{validate_data, Component, MixtureParams};
use crate::report::{fmt_f64, CsvRecord};
use crate::seed::derive_rng;

/// Largest spike exponent in the unbounded-likelihood walk; `10^-300` is
/// still a normal positive double.
const MAX_SPIKE_EXPONENT: u32 = 300;

/// Peak density of the standard normal, the spike family used by both
/// demonstrations.
const NORMAL_V0: f64 = 0.3989422804014327;

/// One step of the unbounded-likelihood walk.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnboundedRow {
    /// Spike scale is `10^-k`.
    pub k: u32,
    pub sigma1: f64,
    pub loglik: f64,
}

impl CsvRecord for UnboundedRow {
    fn csv_header() -> &'static str {
        "k,sigma1,loglik"
    }

    fn csv_row(&self) -> String {
        format!("{},{},{}", self.k, fmt_f64(self.sigma1), fmt_f64(self.loglik))
    }
}

/// Walk the degenerate path: a two-component normal mixture with one
/// component pinned at the first observation and scale `10^-k`, the other
/// fixed at the sample moments, equal weights.
///
/// The log-likelihood grows without bound in `k` because the spike term
/// contributes `k ln 10` while every other term stabilizes.
pub fn unbounded_likelihood_demo(data: &[f64], k_max: u32) -> Result<Vec<UnboundedRow>> {
    validate_data(data)?;
    if data.len() < 2 {
        return Err(Error::config("data", "need at least two observations"));
    }
    if k_max > MAX_SPIKE_EXPONENT {
        return Err(Error::config(
            "k_max",
            format!("spike scales below 10^-{MAX_SPIKE_EXPONENT} are not representable"),
        ));
    }
    let n = data.len() as f64;
    let mean = data.iter().sum::<f64>() / n;
    let std = (data.iter().map(|&x| (x - mean) * (x - mean)).sum::<f64>() / n).sqrt();
    if std == 0.0 {
        return Err(Error::config("data", "constant data has no spread component"));
    }
    (0..=k_max)
        .map(|k| {
            let sigma1 = 10f64.powi(-(k as i32));
            let theta = MixtureParams::new(vec![
                Component {
                    family: Family::Normal,
                    weight: 0.5,
                    mu: data[0],
                    sigma: sigma1,
                },
                Component {
                    family: Family::Normal,
                    weight: 0.5,
                    mu: mean,
                    sigma: std,
                },
            ])?;
            Ok(UnboundedRow {
                k,
                sigma1,
                loglik: theta.loglik(data)?,
            })
        })
        .collect()
}

/// One sample size of the divergence-rate demonstration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DivergenceRow {
    pub n: usize,
    /// Per-observation log-likelihood of the spike path at this `n`.
    pub mean_loglik_pathological: f64,
    /// Per-observation log-likelihood of the data-generating parameters.
    pub mean_loglik_true: f64,
    /// Log of the scale ratio the spike path actually has, i.e. the log
    /// ratio floor a schedule would need to admit it.
    pub log_ratio_floor_required: f64,
    /// Whether the spike scale `exp(-n^r)` underflowed, forcing the exact
    /// closed-form evaluation instead of the generic density code.
    pub scale_underflowed: bool,
    /// The spike meets a floor decaying like `exp(-n^r)` by construction.
    pub meets_floor_at_r: bool,
    /// Whether it also meets the slower reference decay `exp(-n^d)`.
    pub meets_floor_at_reference: bool,
}

impl CsvRecord for DivergenceRow {
    fn csv_header() -> &'static str {
        "n,mean_loglik_pathological,mean_loglik_true,log_ratio_floor_required,scale_underflowed,meets_floor_at_r,meets_floor_at_reference"
    }

    fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.n,
            fmt_f64(self.mean_loglik_pathological),
            fmt_f64(self.mean_loglik_true),
            fmt_f64(self.log_ratio_floor_required),
            self.scale_underflowed,
            self.meets_floor_at_r,
            self.meets_floor_at_reference,
        )
    }
}

/// Track the spike path `sigma_1 = exp(-n^r)` across sample sizes.
///
/// At each `n` a fresh sample is drawn from `model`, and the pathological
/// mixture places a spike of that scale on the first observation plus
/// standard normal components elsewhere (component count
/// `max(2, model components)`, equal weights). When the spike scale is
/// representable the mean log-likelihood is evaluated by the ordinary
/// density code; once it underflows, the spike's contribution
/// `ln(weight * v0) + n^r` is exact in closed form because every other
/// term it could interact with is smaller by hundreds of orders of
/// magnitude.
pub fn divergence_demo(
    model: &MixtureParams,
    r: f64,
    d_reference: f64,
    sample_sizes: &[usize],
    seed: u64,
) -> Result<Vec<DivergenceRow>> {
    if !(r.is_finite() && r > 0.0) {
        return Err(Error::config("r", format!("must be positive and finite, got {r}")));
    }
    if !(d_reference > 0.0 && d_reference < 1.0) {
        return Err(Error::config(
            "d_reference",
            format!("must lie in (0, 1), got {d_reference}"),
        ));
    }
    if sample_sizes.is_empty() {
        return Err(Error::config("sample_sizes", "need at least one size"));
    }
    if sample_sizes.contains(&0) {
        return Err(Error::config("sample_sizes", "sizes must be at least 1"));
    }
    let m_path = model.num_components().max(2);

    sample_sizes
        .iter()
        .map(|&n| {
            let data = model.sample(n, &mut derive_rng(seed, &[n as u64]))?;
            let exponent = (n as f64).powf(r);
            let log_sigma1 = -exponent;
            let sigma1 = log_sigma1.exp();
            let scale_underflowed = sigma1 == 0.0;
            let mean_path = if scale_underflowed {
                analytic_mean_loglik(&data, m_path, exponent)
            } else {
                spike_mixture(&data, m_path, sigma1)?.loglik(&data)? / n as f64
            };
            let log_ref_floor = -(n as f64).powf(d_reference);
            Ok(DivergenceRow {
                n,
                mean_loglik_pathological: mean_path,
                mean_loglik_true: model.loglik(&data)? / n as f64,
                log_ratio_floor_required: log_sigma1,
                scale_underflowed,
                meets_floor_at_r: log_sigma1 >= -exponent,
                meets_floor_at_reference: log_sigma1 >= log_ref_floor,
            })
        })
        .collect()
}

fn spike_mixture(data: &[f64], m_path: usize, sigma1: f64) -> Result<MixtureParams> {
    let weight = 1.0 / m_path as f64;
    let mut components = vec![Component {
        family: Family::Normal,
        weight,
        mu: data[0],
        sigma: sigma1,
    }];
    components.resize(
        m_path,
        Component {
            family: Family::Normal,
            weight,
            mu: 0.0,
            sigma: 1.0,
        },
    );
    MixtureParams::new(components)
}

/// Mean log-likelihood of the spike mixture when the spike scale has
/// underflowed: the observation under the spike contributes
/// `ln(weight * v0) + exponent`, any other observation sees only the
/// standard normal components.
fn analytic_mean_loglik(data: &[f64], m_path: usize, exponent: f64) -> f64 {
    let weight = 1.0 / m_path as f64;
    let filler_mass = ((m_path - 1) as f64 * weight).ln();
    let total: f64 = data
        .iter()
        .map(|&x| {
            if x == data[0] {
                (weight * NORMAL_V0).ln() + exponent
            } else {
                filler_mass + Family::Normal.standard_logpdf(x)
            }
        })
        .sum();
    total / data.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn unbounded_walk_grows_without_bound() {
        let data = vec![-1.2, -0.3, 0.4, 0.9, 2.0];
        let rows = unbounded_likelihood_demo(&data, 300).unwrap();
        assert_eq!(rows.len(), 301);
        assert_eq!(rows[0].sigma1, 1.0);
        assert_relative_eq!(rows[300].sigma1, 1e-300, max_relative = 1e-12);
        // beyond the first few steps the spike term dominates and each step
        // adds ln 10
        for pair in rows.windows(2).skip(3) {
            let gain = pair[1].loglik - pair[0].loglik;
            assert!(gain > 0.0, "k = {}: gain {gain}", pair[1].k);
        }
        let tail_gain = rows[300].loglik - rows[299].loglik;
        assert_relative_eq!(tail_gain, 10f64.ln(), max_relative = 1e-6);
        assert!(rows[300].loglik > 600.0);
    }

    #[test]
    fn unbounded_walk_rejects_bad_inputs() {
        assert!(unbounded_likelihood_demo(&[1.0], 5).is_err());
        assert!(unbounded_likelihood_demo(&[1.0, 1.0], 5).is_err());
        assert!(unbounded_likelihood_demo(&[0.0, 1.0], 301).is_err());
    }

    #[test]
    fn divergence_switches_to_the_exact_path_when_scales_underflow() {
        let model = MixtureParams::single(Family::Normal, 0.0, 1.0).unwrap();
        let rows = divergence_demo(&model, 2.0, 0.5, &[10, 100], 42).unwrap();
        assert_eq!(rows.len(), 2);
        // exp(-100) is representable, exp(-10000) is not
        assert!(!rows[0].scale_underflowed);
        assert!(rows[1].scale_underflowed);
        // the spike advantage grows roughly like n^(r-1)
        assert!(rows[0].mean_loglik_pathological > rows[0].mean_loglik_true + 5.0);
        assert!(rows[1].mean_loglik_pathological > 90.0);
        assert!(rows[0].meets_floor_at_r);
        assert!(!rows[0].meets_floor_at_reference);
    }

    #[test]
    fn direct_and_analytic_paths_agree_where_both_apply() {
        let model = MixtureParams::single(Family::Normal, 0.0, 1.0).unwrap();
        let n = 10;
        let data = model.sample(n, &mut derive_rng(42, &[n as u64])).unwrap();
        let exponent = (n as f64).powf(2.0);
        let direct = spike_mixture(&data, 2, (-exponent).exp())
            .unwrap()
            .loglik(&data)
            .unwrap()
            / n as f64;
        let analytic = analytic_mean_loglik(&data, 2, exponent);
        assert_relative_eq!(direct, analytic, max_relative = 1e-12);
    }

    #[test]
    fn slow_decay_meets_the_reference_floor() {
        let model = MixtureParams::single(Family::Normal, 0.0, 1.0).unwrap();
        // r below the reference exponent decays more slowly, so the spike
        // stays inside the reference constraint set
        let rows = divergence_demo(&model, 0.3, 0.5, &[100], 7).unwrap();
        assert!(rows[0].meets_floor_at_r);
        assert!(rows[0].meets_floor_at_reference);
        assert!(!rows[0].scale_underflowed);
    }
}
