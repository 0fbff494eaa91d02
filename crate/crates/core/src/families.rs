//! Standard location-scale families and their polynomial tail envelopes.
//!
//! Each family is a density on the real line with location 0 and scale 1; a
//! component with location `mu` and scale `sigma` has density
//! `(1/sigma) * f((x - mu)/sigma)`. Every family carries envelope constants
//! `(v0, v1, beta)` with `f(z) <= min(v0, v1 * |z|^-beta)` for all `z`, and
//! the two branches cross at the radius `nu(sigma)`. That crossover is what
//! the degeneracy bounds in the rest of the crate are built on. Families
//! with tails heavier than `|z|^-4` (e.g. Cauchy) are deliberately absent:
//! the extreme-order bounds need `beta > 2` with room to spare.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tail exponent shared by every built-in family.
pub const ENVELOPE_BETA: f64 = 4.0;

pub(crate) const INV_SQRT_2PI: f64 = 0.3989422804014327;
const HALF_LN_2PI: f64 = 0.9189385332046727;
const LN_2: f64 = std::f64::consts::LN_2;

// sup_z z^4 phi(z) = 16 e^-2 / sqrt(2 pi), attained at z = 2
const NORMAL_V1: f64 = 0.8638554642110088;
// sup_z z^4 (1/2) e^-|z| = 128 e^-4, attained at z = 4
const LAPLACE_V1: f64 = 2.344401777757975;
// sup_z z^4 e^-z (1 + e^-z)^-2, attained at the root of z tanh(z/2) = 4
const LOGISTIC_V1: f64 = 4.532165450546352;
// sup_{|z| <= 1/2} z^4 = (1/2)^4
const UNIFORM_V1: f64 = 0.0625;

/// Envelope constants: `f(z) <= min(v0, v1 * |z|^-beta)` for all `z`.
///
/// `v0` is the exact peak `sup_z f(z)` and `v1` the exact tail coefficient
/// `sup_z |z|^beta f(z)`, so both branches of the envelope are tight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Envelope {
    pub v0: f64,
    pub v1: f64,
    pub beta: f64,
}

impl Envelope {
    /// Pointwise envelope value `min(v0, v1 * |z|^-beta)`.
    pub fn bound(&self, z: f64) -> f64 {
        let tail = self.v1 * z.abs().powf(-self.beta);
        self.v0.min(tail)
    }
}

/// Built-in standard families. Serialized in lowercase (`"normal"`, ...).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Normal,
    Laplace,
    Logistic,
    /// Uniform on [-1/2, 1/2]; supported for evaluation and sampling only,
    /// never for fitting (its likelihood in scale is a step function).
    Uniform,
}

pub const ALL_FAMILIES: [Family; 4] = [
    Family::Normal,
    Family::Laplace,
    Family::Logistic,
    Family::Uniform,
];

impl Family {
    /// Density of the standard (location 0, scale 1) member at `z`.
    pub fn standard_pdf(self, z: f64) -> f64 {
        match self {
            Family::Normal => INV_SQRT_2PI * (-0.5 * z * z).exp(),
            Family::Laplace => 0.5 * (-z.abs()).exp(),
            Family::Logistic => {
                // e^-|z| / (1 + e^-|z|)^2, written tail-first so large |z|
                // underflows gracefully instead of dividing inf by inf
                let e = (-z.abs()).exp();
                let d = 1.0 + e;
                e / (d * d)
            }
            Family::Uniform => {
                if z.abs() <= 0.5 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Log-density of the standard member; `-inf` off the support.
    pub fn standard_logpdf(self, z: f64) -> f64 {
        match self {
            Family::Normal => -0.5 * z * z - HALF_LN_2PI,
            Family::Laplace => -z.abs() - LN_2,
            Family::Logistic => {
                let a = -z.abs();
                a - 2.0 * a.exp().ln_1p()
            }
            Family::Uniform => {
                if z.abs() <= 0.5 {
                    0.0
                } else {
                    f64::NEG_INFINITY
                }
            }
        }
    }

    /// The `(v0, v1, beta)` envelope for this family.
    pub fn envelope(self) -> Envelope {
        let (v0, v1) = match self {
            Family::Normal => (INV_SQRT_2PI, NORMAL_V1),
            Family::Laplace => (0.5, LAPLACE_V1),
            Family::Logistic => (0.25, LOGISTIC_V1),
            Family::Uniform => (1.0, UNIFORM_V1),
        };
        Envelope {
            v0,
            v1,
            beta: ENVELOPE_BETA,
        }
    }

    /// Crossover radius `nu(sigma) = (v1/v0)^(1/beta) * sigma^(1 - 2/beta)`:
    /// beyond `|x - mu| = nu(sigma)` the scaled tail envelope
    /// `(1/sigma) v1 |z|^-beta` drops below the plateau value `v0 * sigma`.
    pub fn nu(self, sigma: f64) -> Result<f64> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::NonpositiveScale(sigma));
        }
        Ok(self.nu_unchecked(sigma))
    }

    pub(crate) fn nu_unchecked(self, sigma: f64) -> f64 {
        let e = self.envelope();
        (e.v1 / e.v0).powf(1.0 / e.beta) * sigma.powf(1.0 - 2.0 / e.beta)
    }

    /// Step-function bound on the scaled density:
    /// `max{ 1[|x - mu| <= nu(sigma)] * v0 / sigma, v0 * sigma }`.
    ///
    /// Dominates `(1/sigma) f((x - mu)/sigma)` everywhere: inside the
    /// crossover radius the plateau `v0/sigma` applies, outside it the tail
    /// envelope is below `v0 * sigma` by the crossover identity.
    pub fn step_bound(self, x: f64, mu: f64, sigma: f64) -> Result<f64> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::NonpositiveScale(sigma));
        }
        let v0 = self.envelope().v0;
        let plateau = if (x - mu).abs() <= self.nu_unchecked(sigma) {
            v0 / sigma
        } else {
            0.0
        };
        Ok(plateau.max(v0 * sigma))
    }

    /// Draw from the standard member.
    pub fn sample_standard<R: Rng + ?Sized>(self, rng: &mut R) -> f64 {
        match self {
            Family::Normal => StandardNormal.sample(rng),
            Family::Laplace => {
                let u = open_unit(rng);
                if u < 0.5 {
                    (2.0 * u).ln()
                } else {
                    -(2.0 * (1.0 - u)).ln()
                }
            }
            Family::Logistic => {
                let u = open_unit(rng);
                (u / (1.0 - u)).ln()
            }
            Family::Uniform => rng.random::<f64>() - 0.5,
        }
    }
}

/// Uniform draw clamped into the open interval (0, 1) so inverse-CDF
/// transforms never hit a pole.
fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.random::<f64>().clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Family::Normal => "normal",
            Family::Laplace => "laplace",
            Family::Logistic => "logistic",
            Family::Uniform => "uniform",
        };
        f.write_str(name)
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "normal" => Ok(Family::Normal),
            "laplace" => Ok(Family::Laplace),
            "logistic" => Ok(Family::Logistic),
            "uniform" => Ok(Family::Uniform),
            other => Err(Error::config(
                "family",
                format!("unknown family {other:?}; expected normal, laplace, logistic, or uniform"),
            )),
        }
    }
}
