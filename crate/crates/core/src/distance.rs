//! Label-invariant distance between mixture parameter vectors.
//!
//! Mixture parameters are only identified up to component relabeling, so a
//! meaningful distance must match components before comparing them. This
//! module minimizes a Euclidean distance over all label permutations, with
//! one wrinkle: when a component's weight is negligible on either side, its
//! location and scale are statistically meaningless and only the weight
//! discrepancy is charged.

use itertools::Itertools;

use crate::error::{Error, Result};
use crate::mixture::MixtureParams;

/// Weights below this threshold mark a component as effectively absent, so
/// its location and scale are excluded from the distance.
pub const NEGLIGIBLE_WEIGHT: f64 = 1e-6;

/// Exact permutation matching scans M! orderings; beyond this the scan is
/// refused rather than silently approximated.
const MAX_EXACT_COMPONENTS: usize = 10;

/// Smallest-over-relabelings Euclidean distance on (weight, location,
/// scale) triples.
///
/// For each pairing of component `a` with component `b`, the squared
/// contribution is `(wa - wb)^2` plus, only when both weights are at least
/// [`NEGLIGIBLE_WEIGHT`], `(mua - mub)^2 + (sigmaa - sigmab)^2`. The result
/// is symmetric, zero on identical parameters (up to relabeling), and
/// satisfies the triangle inequality for a fixed component count.
pub fn param_distance(a: &MixtureParams, b: &MixtureParams) -> Result<f64> {
    if a.num_components() != b.num_components() {
        return Err(Error::ComponentMismatch(
            a.num_components(),
            b.num_components(),
        ));
    }
    let m = a.num_components();
    if m > MAX_EXACT_COMPONENTS {
        return Err(Error::config(
            "num_components",
            format!("exact label matching supports at most {MAX_EXACT_COMPONENTS} components, got {m}"),
        ));
    }
    let ca = a.components();
    let cb = b.components();
    let mut best = f64::INFINITY;
    for perm in (0..m).permutations(m) {
        let mut sq = 0.0;
        for (i, &j) in perm.iter().enumerate() {
            let (x, y) = (&ca[i], &cb[j]);
            let dw = x.weight - y.weight;
            sq += dw * dw;
            if x.weight >= NEGLIGIBLE_WEIGHT && y.weight >= NEGLIGIBLE_WEIGHT {
                let dmu = x.mu - y.mu;
                let dsigma = x.sigma - y.sigma;
                sq += dmu * dmu + dsigma * dsigma;
            }
        }
        if sq < best {
            best = sq;
        }
    }
    Ok(best.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::families::Family;
    use crate::mixture::Component;
    use approx::assert_relative_eq;

    fn two_normals(w1: f64, mu1: f64, s1: f64, mu2: f64, s2: f64) -> MixtureParams {
        MixtureParams::new(vec![
            Component {
                family: Family::Normal,
                weight: w1,
                mu: mu1,
                sigma: s1,
            },
            Component {
                family: Family::Normal,
                weight: 1.0 - w1,
                mu: mu2,
                sigma: s2,
            },
        ])
        .unwrap()
    }

    #[test]
    fn relabeling_is_free() {
        // weights 0.25 and 0.75 are exact in binary, so the permuted copy
        // matches bit for bit
        let a = two_normals(0.25, -1.0, 0.5, 4.0, 2.0);
        let b = two_normals(0.75, 4.0, 2.0, -1.0, 0.5);
        assert_eq!(param_distance(&a, &b).unwrap(), 0.0);
    }

    #[test]
    fn swapped_labels_with_perturbed_weight() {
        // components permuted and each weight off by 0.1 in the matched
        // pairing: sqrt(0.1^2 + 0.1^2) under the identity pairing loses to
        // the cross pairing only when locations agree, so here the matched
        // distance is exactly sqrt(0.02)
        let a = two_normals(0.5, -2.0, 1.0, 2.0, 1.0);
        let b = two_normals(0.6, 2.0, 1.0, -2.0, 1.0);
        assert_relative_eq!(
            param_distance(&a, &b).unwrap(),
            0.02f64.sqrt(),
            max_relative = 1e-15
        );
    }

    #[test]
    fn negligible_weight_drops_location_and_scale() {
        // the second component of `a` is effectively absent, so its wild
        // location is not charged; only the weight gap counts for that pair
        let a = two_normals(1.0 - 1e-9, 0.0, 1.0, 1e6, 1.0);
        let b = two_normals(0.9, 0.0, 1.0, 3.0, 1.0);
        let d = param_distance(&a, &b).unwrap();
        let expected = ((1.0 - 1e-9 - 0.9f64).powi(2) + (1e-9 - 0.1f64).powi(2)).sqrt();
        assert_relative_eq!(d, expected, max_relative = 1e-12);
    }

    #[test]
    fn negligible_weight_rule_is_symmetric() {
        let a = two_normals(1.0 - 1e-9, 0.0, 1.0, 1e6, 1.0);
        let b = two_normals(0.9, 0.0, 1.0, 3.0, 1.0);
        assert_eq!(
            param_distance(&a, &b).unwrap(),
            param_distance(&b, &a).unwrap()
        );
    }

    #[test]
    fn component_count_mismatch_errors() {
        let a = MixtureParams::single(Family::Normal, 0.0, 1.0).unwrap();
        let b = two_normals(0.5, 0.0, 1.0, 1.0, 1.0);
        assert!(matches!(
            param_distance(&a, &b),
            Err(Error::ComponentMismatch(1, 2))
        ));
    }

    #[test]
    fn identical_singletons_are_at_distance_zero() {
        let a = MixtureParams::single(Family::Normal, 1.0, 2.0).unwrap();
        assert_eq!(param_distance(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn matched_euclidean_distance_on_singletons() {
        let a = MixtureParams::single(Family::Normal, 0.0, 1.0).unwrap();
        let b = MixtureParams::single(Family::Normal, 3.0, 5.0).unwrap();
        assert_relative_eq!(
            param_distance(&a, &b).unwrap(),
            25.0f64.sqrt(),
            max_relative = 1e-15
        );
    }
}
