//! Scalar Gaussian machinery: the standard normal CDF/PDF and the closed-form
//! moments of rectified Gaussians and of the maximum of two Gaussians.
//!
//! Both moment routines work in standardized units (divide by the standard
//! deviation, compute, scale back) so that the `E[Y^2] - E[Y]^2` step cancels
//! against quantities of order one rather than of order `mean^2`.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

/// Variances below this are treated as point masses.
pub const MIN_VARIANCE: f64 = 1e-12;

/// Mean and variance of one scalar activation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentPair {
    pub mean: f64,
    pub variance: f64,
}

impl MomentPair {
    pub fn new(mean: f64, variance: f64) -> Self {
        MomentPair { mean, variance }
    }

    /// A point mass at `value`.
    pub fn point(value: f64) -> Self {
        MomentPair {
            mean: value,
            variance: 0.0,
        }
    }

    pub fn std_dev(&self) -> f64 {
        self.variance.max(0.0).sqrt()
    }
}

/// Standard normal cumulative distribution function.
pub fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z * FRAC_1_SQRT_2)
}

/// Standard normal density.
pub fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

/// Clamps a variance produced by moment subtraction. `scale` is the
/// magnitude the cancellation happened at.
fn clamp_variance(v: f64, scale: f64) -> f64 {
    if v < 0.0 {
        debug_assert!(
            v > -1e-9 * scale.max(1.0),
            "variance cancellation too large: {v} at scale {scale}"
        );
        0.0
    } else {
        v
    }
}

/// Moments of `max(0, X)` for `X ~ N(mean, variance)`.
pub fn relu_gaussian_moments(input: MomentPair) -> MomentPair {
    let MomentPair { mean, variance } = input;
    if variance < MIN_VARIANCE {
        return MomentPair::point(mean.max(0.0));
    }
    let sd = variance.sqrt();
    let r = mean / sd;
    let cdf = std_normal_cdf(r);
    let pdf = std_normal_pdf(r);

    // Standardized: E[Y]/sd = r Φ(r) + φ(r), E[Y²]/sd² = (r² + 1) Φ(r) + r φ(r).
    let m1 = r * cdf + pdf;
    let m2 = (r * r + 1.0) * cdf + r * pdf;
    let v = clamp_variance(m2 - m1 * m1, m2);

    MomentPair {
        mean: (sd * m1).max(0.0),
        variance: variance * v,
    }
}

/// Gaussian approximation to `max(A, B)` for independent `A` and `B`, by
/// matching the exact first two moments of the maximum.
///
/// Inputs are put into a canonical order (larger mean first) so the result
/// does not depend on argument order.
pub fn max_pair_moments(a: MomentPair, b: MomentPair) -> MomentPair {
    let (a, b) = if (b.mean, b.variance) > (a.mean, a.variance) {
        (b, a)
    } else {
        (a, b)
    };
    let total = a.variance + b.variance;
    if total < MIN_VARIANCE {
        return a;
    }
    let theta = total.sqrt();
    let alpha = (a.mean - b.mean) / theta;
    let cdf = std_normal_cdf(alpha);
    let cdf_neg = std_normal_cdf(-alpha);
    let pdf = std_normal_pdf(alpha);
    if cdf_neg == 0.0 && pdf == 0.0 {
        return a;
    }

    // Shift by b.mean and scale by theta; a then sits at alpha, b at 0.
    let sa = a.variance / total;
    let sb = b.variance / total;
    let m1 = alpha * cdf + pdf;
    let m2 = (alpha * alpha + sa) * cdf + sb * cdf_neg + alpha * pdf;
    let v = clamp_variance(m2 - m1 * m1, m2);

    MomentPair {
        mean: (b.mean + theta * m1).max(a.mean),
        variance: total * v,
    }
}
