//! Brute-force constrained maximizer over a parameter grid.
//!
//! For one or two components on small samples, scanning a dense grid of
//! (weight, location, log-scale) combinations gives an estimator-agnostic
//! reference optimum: slow, exact over its grid, and immune to local
//! maxima. The scan is capped at 10^8 grid points and rejects samples with
//! more than 30 observations, which keeps a full sweep affordable.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::families::Family;
use crate::mixture::{logaddexp, validate_data, Component, MixtureParams};

/// Largest admissible number of grid points.
const MAX_GRID_POINTS: u128 = 100_000_000;
/// Largest sample size the oracle accepts.
const MAX_ORACLE_SAMPLE: usize = 30;

/// Axis resolutions for the grid scan.
///
/// `mu` and `sigma_log10` are `(low, high, count)` ranges; scales run over
/// `10^level` for `count` evenly spaced levels. `alpha` is the number of
/// interior first-component weights `i / (alpha + 1)`, used only for
/// two-component scans.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub alpha: usize,
    pub mu: (f64, f64, usize),
    pub sigma_log10: (f64, f64, usize),
}

impl GridSpec {
    fn validate(&self, num_components: usize) -> Result<()> {
        if num_components == 2 && self.alpha == 0 {
            return Err(Error::config("alpha", "two-component scans need at least 1 weight"));
        }
        for (name, &(lo, hi, count)) in [("mu", &self.mu), ("sigma_log10", &self.sigma_log10)] {
            if count == 0 {
                return Err(Error::config(name, "axis needs at least 1 point"));
            }
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::config(
                    name,
                    format!("range must be finite with low <= high, got ({lo}, {hi})"),
                ));
            }
        }
        Ok(())
    }
}

/// Result of a [`grid_search`] scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSearchResult {
    pub theta: MixtureParams,
    pub loglik: f64,
    /// Points in the full product grid.
    pub total_points: u128,
    /// Points that satisfied the scale-ratio floor and were evaluated.
    pub feasible_points: u128,
}

fn linspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let step = (hi - lo) / (count - 1) as f64;
    (0..count).map(|i| lo + step * i as f64).collect()
}

/// Exhaustively maximize the log-likelihood over the grid, restricted to
/// points whose scale ratio meets `ratio_floor`.
///
/// Supports one or two components of a single `family`. Exact
/// log-likelihood ties resolve to the lowest linear grid index, so the
/// result is deterministic regardless of thread count. Errors if the grid
/// is oversized, no grid point is feasible, or the sample is too large.
pub fn grid_search(
    data: &[f64],
    num_components: usize,
    family: Family,
    ratio_floor: f64,
    spec: &GridSpec,
) -> Result<GridSearchResult> {
    validate_data(data)?;
    if data.len() > MAX_ORACLE_SAMPLE {
        return Err(Error::config(
            "data",
            format!("oracle scans at most {MAX_ORACLE_SAMPLE} observations, got {}", data.len()),
        ));
    }
    if !(num_components == 1 || num_components == 2) {
        return Err(Error::config(
            "num_components",
            format!("grid oracle supports 1 or 2 components, got {num_components}"),
        ));
    }
    if !(ratio_floor > 0.0 && ratio_floor < 1.0) {
        return Err(Error::config(
            "ratio_floor",
            format!("must lie in (0, 1), got {ratio_floor}"),
        ));
    }
    spec.validate(num_components)?;

    let mus = linspace(spec.mu.0, spec.mu.1, spec.mu.2);
    let levels = linspace(spec.sigma_log10.0, spec.sigma_log10.1, spec.sigma_log10.2);
    let sigmas: Vec<f64> = levels.iter().map(|l| 10f64.powf(*l)).collect();
    let pairs = (mus.len() * sigmas.len()) as u128;
    let total_points = if num_components == 1 {
        pairs
    } else {
        spec.alpha as u128 * pairs * pairs
    };
    if total_points > MAX_GRID_POINTS {
        return Err(Error::GridTooLarge { points: total_points });
    }

    // per (mu, sigma) pair: component log-density at every observation
    let tables: Vec<Vec<f64>> = (0..mus.len() * sigmas.len())
        .map(|p| {
            let mu = mus[p / sigmas.len()];
            let sigma = sigmas[p % sigmas.len()];
            data.iter()
                .map(|&x| family.standard_logpdf((x - mu) / sigma) - sigma.ln())
                .collect()
        })
        .collect();

    let build = |p: usize| (mus[p / sigmas.len()], sigmas[p % sigmas.len()]);

    if num_components == 1 {
        // every single-component point is feasible: the ratio is vacuously 1
        let best = (0..tables.len())
            .into_par_iter()
            .map(|p| (tables[p].iter().sum::<f64>(), p))
            .reduce(|| (f64::NEG_INFINITY, usize::MAX), pick_better);
        if best.1 == usize::MAX {
            return Err(Error::GridInfeasible);
        }
        let (mu, sigma) = build(best.1);
        return Ok(GridSearchResult {
            theta: MixtureParams::single(family, mu, sigma)?,
            loglik: best.0,
            total_points,
            feasible_points: total_points,
        });
    }

    let alphas: Vec<f64> = (1..=spec.alpha)
        .map(|i| i as f64 / (spec.alpha + 1) as f64)
        .collect();
    let num_pairs = tables.len();
    let feasible = |p1: usize, p2: usize| {
        let s1 = sigmas[p1 % sigmas.len()];
        let s2 = sigmas[p2 % sigmas.len()];
        (s1 / s2).min(s2 / s1) >= ratio_floor
    };

    // linear index: ((a * num_pairs) + p1) * num_pairs + p2
    let (best, feasible_points) = (0..alphas.len() * num_pairs)
        .into_par_iter()
        .map(|outer| {
            let a_idx = outer / num_pairs;
            let p1 = outer % num_pairs;
            let log_a = alphas[a_idx].ln();
            let log_b = (1.0 - alphas[a_idx]).ln();
            let t1 = &tables[p1];
            let mut local_best = (f64::NEG_INFINITY, usize::MAX);
            let mut local_feasible = 0u128;
            for (p2, t2) in tables.iter().enumerate() {
                if !feasible(p1, p2) {
                    continue;
                }
                local_feasible += 1;
                let ll: f64 = t1
                    .iter()
                    .zip(t2)
                    .map(|(&a, &b)| logaddexp(log_a + a, log_b + b))
                    .sum();
                let idx = outer * num_pairs + p2;
                local_best = pick_better(local_best, (ll, idx));
            }
            (local_best, local_feasible)
        })
        .reduce(
            || ((f64::NEG_INFINITY, usize::MAX), 0u128),
            |(ba, ca), (bb, cb)| (pick_better(ba, bb), ca + cb),
        );

    if best.1 == usize::MAX {
        return Err(Error::GridInfeasible);
    }
    let p2 = best.1 % num_pairs;
    let p1 = (best.1 / num_pairs) % num_pairs;
    let a_idx = best.1 / (num_pairs * num_pairs);
    let (mu1, s1) = build(p1);
    let (mu2, s2) = build(p2);
    let alpha = alphas[a_idx];
    let theta = MixtureParams::new(vec![
        Component {
            family,
            weight: alpha,
            mu: mu1,
            sigma: s1,
        },
        Component {
            family,
            weight: 1.0 - alpha,
            mu: mu2,
            sigma: s2,
        },
    ])?;
    Ok(GridSearchResult {
        theta,
        loglik: best.0,
        total_points,
        feasible_points,
    })
}

/// Higher log-likelihood wins; exact ties go to the lower linear index.
fn pick_better(a: (f64, usize), b: (f64, usize)) -> (f64, usize) {
    if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) {
        b
    } else {
        a
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn spec(alpha: usize, mu: (f64, f64, usize), sig: (f64, f64, usize)) -> GridSpec {
        GridSpec {
            alpha,
            mu,
            sigma_log10: sig,
        }
    }

    #[test]
    fn single_component_matches_direct_scan() {
        let data = vec![-1.0, 0.0, 1.0];
        let result = grid_search(
            &data,
            1,
            Family::Normal,
            0.5,
            &spec(0, (-2.0, 2.0, 41), (-0.5, 0.5, 21)),
        )
        .unwrap();
        // the grid contains (mu, sigma) = (0, 1); the sample MLE is
        // mu = 0, sigma = sqrt(2/3) ~ 0.8165, and the nearest grid scale
        // 10^-0.1 ~ 0.794 beats sigma = 1
        let c = result.theta.components()[0];
        assert_eq!(c.mu, 0.0);
        assert_relative_eq!(c.sigma, 10f64.powf(-0.1), max_relative = 1e-12);
        assert_eq!(result.total_points, 41 * 21);
        assert_eq!(result.feasible_points, 41 * 21);
        assert_relative_eq!(
            result.loglik,
            result.theta.loglik(&data).unwrap(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn two_component_optimum_beats_every_explicit_point() {
        let data = vec![-3.1, -2.9, -3.0, 2.9, 3.0, 3.1, 3.05];
        let grid = spec(3, (-4.0, 4.0, 17), (-1.0, 0.5, 7));
        let result = grid_search(&data, 2, Family::Normal, 0.01, &grid).unwrap();
        assert_relative_eq!(
            result.loglik,
            result.theta.loglik(&data).unwrap(),
            max_relative = 1e-12
        );
        // exhaustive re-check against a simple sequential scan
        let mus = super::linspace(-4.0, 4.0, 17);
        let sigmas: Vec<f64> = super::linspace(-1.0, 0.5, 7)
            .into_iter()
            .map(|l| 10f64.powf(l))
            .collect();
        let mut best = f64::NEG_INFINITY;
        for a in 1..=3 {
            let alpha = a as f64 / 4.0;
            for &mu1 in &mus {
                for &s1 in &sigmas {
                    for &mu2 in &mus {
                        for &s2 in &sigmas {
                            if (s1 / s2).min(s2 / s1) < 0.01 {
                                continue;
                            }
                            let theta = MixtureParams::new(vec![
                                Component {
                                    family: Family::Normal,
                                    weight: alpha,
                                    mu: mu1,
                                    sigma: s1,
                                },
                                Component {
                                    family: Family::Normal,
                                    weight: 1.0 - alpha,
                                    mu: mu2,
                                    sigma: s2,
                                },
                            ])
                            .unwrap();
                            best = best.max(theta.loglik(&data).unwrap());
                        }
                    }
                }
            }
        }
        assert_relative_eq!(result.loglik, best, max_relative = 1e-10);
    }

    #[test]
    fn ratio_floor_excludes_points() {
        let data = vec![0.0, 0.1, 5.0];
        // scales 0.01 and 1.0 only: ratio 0.01 < floor 0.5, so only the
        // equal-scale pairings are feasible
        let grid = spec(1, (0.0, 5.0, 2), (-2.0, 0.0, 2));
        let result = grid_search(&data, 2, Family::Normal, 0.5, &grid).unwrap();
        assert_eq!(result.total_points, 16);
        assert_eq!(result.feasible_points, 8);
        let comps = result.theta.components();
        assert_eq!(comps[0].sigma, comps[1].sigma);
    }

    #[test]
    fn oversized_grid_is_rejected() {
        let data = vec![0.0, 1.0];
        let oversized = spec(100, (0.0, 1.0, 1000), (-1.0, 1.0, 1000));
        assert!(matches!(
            grid_search(&data, 2, Family::Normal, 0.5, &oversized),
            Err(Error::GridTooLarge { .. })
        ));
    }

    #[test]
    fn sample_size_guard() {
        let data = vec![0.0; 31];
        let err = grid_search(
            &data,
            1,
            Family::Normal,
            0.5,
            &spec(0, (0.0, 1.0, 2), (0.0, 0.0, 1)),
        )
        .unwrap_err();
        assert!(matches!(err, Error::InvalidConfig { field: "data", .. }));
    }

    #[test]
    fn tie_break_is_lowest_linear_index() {
        // symmetric data and grid: the mirrored two-component labelings
        // have identical likelihoods, so the scan must return the lowest
        // linear index deterministically
        let data = vec![-1.0, 1.0];
        let grid = spec(1, (-1.0, 1.0, 2), (0.0, 0.0, 1));
        let a = grid_search(&data, 2, Family::Normal, 0.5, &grid).unwrap();
        let b = grid_search(&data, 2, Family::Normal, 0.5, &grid).unwrap();
        assert_eq!(a.theta, b.theta);
        let comps = a.theta.components();
        // lowest index puts component 1 at the leftmost optimal location
        assert_eq!(comps[0].mu, -1.0);
        assert_eq!(comps[1].mu, 1.0);
    }

    #[test]
    fn laplace_family_grid_runs() {
        let data = vec![-0.5, 0.0, 0.5, 4.0];
        let result = grid_search(
            &data,
            1,
            Family::Laplace,
            0.5,
            &spec(0, (-1.0, 4.0, 11), (-0.5, 0.5, 11)),
        )
        .unwrap();
        assert!(result.loglik.is_finite());
    }
}
