//! Mixture parameters, density evaluation, sampling, and the scale-floor
//! machinery: ratio floors, decaying floor schedules, projection back into
//! the feasible set, and the per-component concentration intervals used by
//! the likelihood ceiling.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::families::Family;

/// Mixture weights must sum to one within this tolerance.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;

/// One location-scale component with its mixture weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub family: Family,
    pub weight: f64,
    pub mu: f64,
    pub sigma: f64,
}

impl Component {
    /// Scaled log-density `ln[(1/sigma) f((x - mu)/sigma)]`, ignoring weight.
    #[inline]
    pub fn logpdf(&self, x: f64) -> f64 {
        self.family.standard_logpdf((x - self.mu) / self.sigma) - self.sigma.ln()
    }
}

/// A validated finite mixture of location-scale components.
///
/// Invariants enforced at construction and deserialization: at least one
/// component; finite weights in [0, 1] summing to one within
/// [`WEIGHT_SUM_TOL`]; finite locations; finite, strictly positive scales.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMixture")]
pub struct MixtureParams {
    components: Vec<Component>,
}

#[derive(Deserialize)]
struct RawMixture {
    components: Vec<Component>,
}

impl TryFrom<RawMixture> for MixtureParams {
    type Error = Error;

    fn try_from(raw: RawMixture) -> Result<Self> {
        MixtureParams::new(raw.components)
    }
}

impl MixtureParams {
    pub fn new(components: Vec<Component>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::EmptyMixture);
        }
        let mut sum = 0.0;
        for (index, c) in components.iter().enumerate() {
            if !(c.weight.is_finite() && (0.0..=1.0).contains(&c.weight)) {
                return Err(Error::InvalidWeight {
                    index,
                    value: c.weight,
                });
            }
            if !c.mu.is_finite() {
                return Err(Error::InvalidLocation {
                    index,
                    value: c.mu,
                });
            }
            if !(c.sigma.is_finite() && c.sigma > 0.0) {
                return Err(Error::InvalidScale {
                    index,
                    value: c.sigma,
                });
            }
            sum += c.weight;
        }
        if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::WeightSum(sum));
        }
        Ok(MixtureParams { components })
    }

    /// Single-component convenience constructor.
    pub fn single(family: Family, mu: f64, sigma: f64) -> Result<Self> {
        MixtureParams::new(vec![Component {
            family,
            weight: 1.0,
            mu,
            sigma,
        }])
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn num_components(&self) -> usize {
        self.components.len()
    }

    pub fn sigma_min(&self) -> f64 {
        self.components.iter().map(|c| c.sigma).fold(f64::INFINITY, f64::min)
    }

    pub fn sigma_max(&self) -> f64 {
        self.components.iter().map(|c| c.sigma).fold(0.0, f64::max)
    }

    /// Smallest scale ratio over ordered component pairs, which is always
    /// `sigma_min / sigma_max`; defined as 1 for a single component (the
    /// minimum over an empty pair set is vacuous).
    pub fn min_scale_ratio(&self) -> f64 {
        if self.components.len() < 2 {
            1.0
        } else {
            self.sigma_min() / self.sigma_max()
        }
    }

    /// Mixture log-density `ln sum_m w_m (1/sigma_m) f_m((x - mu_m)/sigma_m)`.
    ///
    /// Accumulated by running log-sum-exp, so scales down to 1e-300 neither
    /// overflow nor underflow the intermediate terms. Returns `-inf` (never
    /// an error, never NaN) when every component vanishes at `x`, e.g.
    /// outside a uniform component's support.
    pub fn logpdf(&self, x: f64) -> f64 {
        let mut acc = f64::NEG_INFINITY;
        for c in &self.components {
            if c.weight == 0.0 {
                continue;
            }
            let term = c.weight.ln() + c.logpdf(x);
            acc = logaddexp(acc, term);
        }
        acc
    }

    /// Sum of [`Self::logpdf`] over the dataset; `-inf` if any point is
    /// outside the mixture's support.
    pub fn loglik(&self, data: &[f64]) -> Result<f64> {
        validate_data(data)?;
        Ok(data.iter().map(|&x| self.logpdf(x)).sum())
    }

    /// Draw `n` points: pick a component by weight, then scale and shift a
    /// standard draw from its family.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<f64>> {
        if n == 0 {
            return Err(Error::EmptySample);
        }
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let c = &self.components[self.pick_component(rng)];
            out.push(c.mu + c.sigma * c.family.sample_standard(rng));
        }
        Ok(out)
    }

    fn pick_component<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut cum = 0.0;
        for (i, c) in self.components.iter().enumerate() {
            cum += c.weight;
            if u < cum {
                return i;
            }
        }
        self.components.len() - 1
    }

    /// Per-component closed intervals `[mu_m - nu(sigma_m), mu_m + nu(sigma_m)]`
    /// in which a component's scaled density can exceed its plateau bound.
    pub fn concentration_intervals(&self) -> IntervalSet {
        IntervalSet::new(
            self.components
                .iter()
                .map(|c| {
                    let nu = c.family.nu_unchecked(c.sigma);
                    (c.mu - nu, c.mu + nu)
                })
                .collect(),
        )
    }
}

/// `ln(e^a + e^b)` with the usual max shift; exact when either side is `-inf`.
#[inline]
pub fn logaddexp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

pub(crate) fn validate_data(data: &[f64]) -> Result<()> {
    if data.is_empty() {
        return Err(Error::EmptyData);
    }
    for (row, &x) in data.iter().enumerate() {
        if !x.is_finite() {
            return Err(Error::NonfiniteData { row, value: x });
        }
    }
    Ok(())
}

/// Does the smallest scale ratio clear the floor `b`? Vacuously true for a
/// single component.
pub fn meets_ratio_floor(theta: &MixtureParams, b: f64) -> bool {
    theta.min_scale_ratio() >= b
}

/// Do all scales clear the absolute floor `c`?
pub fn meets_scale_floor(theta: &MixtureParams, c: f64) -> bool {
    theta.sigma_min() >= c
}

/// Decaying floor schedule: a ratio floor `b(n) = b0 * exp(-n^d)` and an
/// absolute scale floor `c(n) = exp(-n^d')` with `0 < d < d' < 1`. Both
/// floors vanish as `n` grows, but the scale floor decays faster, so the
/// ceiling `c(n)/b(n)` that the two floors jointly impose on parameters
/// below the scale floor also tends to zero. That is the regime the
/// consistency experiments and degeneracy checks probe.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSchedule")]
pub struct ConstraintSchedule {
    b0: f64,
    d: f64,
    dprime: f64,
}

#[derive(Deserialize)]
struct RawSchedule {
    b0: f64,
    d: f64,
    dprime: f64,
}

impl TryFrom<RawSchedule> for ConstraintSchedule {
    type Error = Error;

    fn try_from(raw: RawSchedule) -> Result<Self> {
        ConstraintSchedule::new(raw.b0, raw.d, raw.dprime)
    }
}

impl ConstraintSchedule {
    pub fn new(b0: f64, d: f64, dprime: f64) -> Result<Self> {
        if !(b0.is_finite() && b0 > 0.0) {
            return Err(Error::config("b0", format!("must be positive and finite, got {b0}")));
        }
        if !(d.is_finite() && d > 0.0 && d < 1.0) {
            return Err(Error::config("d", format!("must lie in (0, 1), got {d}")));
        }
        if !(dprime.is_finite() && dprime > d && dprime < 1.0) {
            return Err(Error::config(
                "dprime",
                format!("must lie in (d, 1) = ({d}, 1), got {dprime}"),
            ));
        }
        Ok(ConstraintSchedule { b0, d, dprime })
    }

    pub fn b0(&self) -> f64 {
        self.b0
    }

    pub fn d(&self) -> f64 {
        self.d
    }

    pub fn dprime(&self) -> f64 {
        self.dprime
    }

    /// Ratio floor `b0 * exp(-n^d)`. May underflow to zero for enormous
    /// `n^d`; use [`Self::log_ratio_floor`] when the magnitude matters.
    pub fn ratio_floor(&self, n: usize) -> f64 {
        self.log_ratio_floor(n).exp()
    }

    /// Scale floor `exp(-n^d')`, with the same underflow caveat.
    pub fn scale_floor(&self, n: usize) -> f64 {
        self.log_scale_floor(n).exp()
    }

    /// Both floors at once: `(b(n), c(n))`.
    pub fn floors(&self, n: usize) -> (f64, f64) {
        (self.ratio_floor(n), self.scale_floor(n))
    }

    pub fn log_ratio_floor(&self, n: usize) -> f64 {
        self.b0.ln() - (n as f64).powf(self.d)
    }

    pub fn log_scale_floor(&self, n: usize) -> f64 {
        -(n as f64).powf(self.dprime)
    }
}

/// Outcome of a projection: how many scales were raised, and whether the
/// absolute guard (rather than the ratio floor) was the binding constraint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ProjectionEffect {
    pub raised: usize,
    pub guard_hit: bool,
}

/// Clamp every scale up to `max(sigma_m, b * sigma_max, guard_floor)`.
///
/// Weights and locations are untouched; the largest scale never moves (for
/// any `guard_floor` at or below it), so the result always clears the ratio
/// floor `b`. This is the projection used after every M-step.
pub fn project_scales(
    theta: &MixtureParams,
    b: f64,
    guard_floor: f64,
) -> Result<(MixtureParams, ProjectionEffect)> {
    if !(b > 0.0 && b < 1.0) {
        return Err(Error::config("b", format!("ratio floor must lie in (0, 1), got {b}")));
    }
    if !(guard_floor.is_finite() && guard_floor > 0.0) {
        return Err(Error::config(
            "guard_floor",
            format!("must be positive and finite, got {guard_floor}"),
        ));
    }
    let sigma_max = theta.sigma_max();
    let mut floor = (b * sigma_max).max(guard_floor);
    let guard_binds = guard_floor > b * sigma_max;
    // the rounded product can divide back to one ulp below b; nudge the
    // floor until the exact ratio comparison is guaranteed to pass
    while floor < sigma_max && floor / sigma_max < b {
        floor = floor.next_up();
    }
    let mut effect = ProjectionEffect::default();
    let components = theta
        .components()
        .iter()
        .map(|&c| {
            if c.sigma < floor {
                effect.raised += 1;
                effect.guard_hit |= guard_binds;
                Component {
                    sigma: floor,
                    ..c
                }
            } else {
                c
            }
        })
        .collect();
    Ok((MixtureParams::new(components)?, effect))
}

/// A union of closed intervals, merged and sorted at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalSet {
    intervals: Vec<(f64, f64)>,
}

impl IntervalSet {
    pub fn new(mut raw: Vec<(f64, f64)>) -> Self {
        raw.retain(|&(lo, hi)| lo <= hi);
        raw.sort_by(|a, b| a.partial_cmp(b).expect("interval endpoints must not be NaN"));
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(raw.len());
        for (lo, hi) in raw {
            match merged.last_mut() {
                Some(last) if lo <= last.1 => last.1 = last.1.max(hi),
                _ => merged.push((lo, hi)),
            }
        }
        IntervalSet { intervals: merged }
    }

    /// The merged intervals, sorted by lower endpoint.
    pub fn intervals(&self) -> &[(f64, f64)] {
        &self.intervals
    }

    pub fn contains(&self, x: f64) -> bool {
        let idx = self.intervals.partition_point(|&(lo, _)| lo <= x);
        idx > 0 && x <= self.intervals[idx - 1].1
    }

    /// How many data points land in the union; each point counted once.
    pub fn count_within(&self, data: &[f64]) -> usize {
        data.iter().filter(|&&x| self.contains(x)).count()
    }

    /// Total length of the union.
    pub fn total_length(&self) -> f64 {
        self.intervals.iter().map(|&(lo, hi)| hi - lo).sum()
    }
}

/// True when every weight exceeds `tol` and no two components of the same
/// family coincide within `tol` in both location and scale: the parameter
/// describes a mixture that genuinely has all its components.
pub fn is_genuine_mixture(theta: &MixtureParams, tol: f64) -> bool {
    let comps = theta.components();
    if comps.iter().any(|c| c.weight <= tol) {
        return false;
    }
    for i in 0..comps.len() {
        for j in (i + 1)..comps.len() {
            if comps[i].family == comps[j].family
                && (comps[i].mu - comps[j].mu).abs() <= tol
                && (comps[i].sigma - comps[j].sigma).abs() <= tol
            {
                return false;
            }
        }
    }
    true
}
