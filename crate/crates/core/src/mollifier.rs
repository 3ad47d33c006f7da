//! Smooth step-function family used to model rapid changes.
//!
//! The building block is the classic bump seed `phi(s) = exp(-1/s)` for
//! positive `s`, zero otherwise. From it we form the odd sigmoid `chi`
//! interpolating -1 to +1 over (-1, 1), and its affine reparameterization
//! `chi_step` over an arbitrary interval (a, a').

use crate::error::DishamError;

/// Smooth seed function: 0 for `s <= 0`, `exp(-1/s)` for `s > 0`.
pub fn phi(s: f64) -> f64 {
    if s <= 0.0 {
        return 0.0;
    }
    let v = (-s.recip()).exp();
    // For subnormal s the reciprocal overflows to inf; exp(-inf) is 0.
    if v == 0.0 {
        0.0
    } else {
        v
    }
}

/// Derivative of [`phi`]: 0 for `s <= 0`, `s^-2 exp(-1/s)` for `s > 0`.
pub fn dphi(s: f64) -> f64 {
    if s <= 0.0 {
        return 0.0;
    }
    let e = (-s.recip()).exp();
    // The exponential underflows long before s^-2 overflows; returning 0
    // here avoids an inf * 0 NaN for subnormal s.
    if e == 0.0 {
        return 0.0;
    }
    e / (s * s)
}

/// Both numerator terms of `chi`, computed once and reused so that
/// `chi(-s) == -chi(s)` holds bit-exactly.
fn chi_parts(s: f64) -> (f64, f64) {
    (phi(1.0 + s), phi(1.0 - s))
}

/// Odd smooth sigmoid: -1 for `s <= -1`, +1 for `s >= 1`, strictly
/// increasing in between.
pub fn chi(s: f64) -> f64 {
    let (fp, fm) = chi_parts(s);
    (fp - fm) / (fp + fm)
}

/// Derivative of [`chi`], by its closed form. Zero for `|s| >= 1`,
/// strictly positive inside (-1, 1).
pub fn dchi(s: f64) -> f64 {
    let (fp, fm) = chi_parts(s);
    let denom = fp + fm;
    let c = (fp - fm) / denom;
    ((1.0 - c) * dphi(1.0 + s) + (1.0 + c) * dphi(1.0 - s)) / denom
}

/// Interval (a, a') over which a step profile interpolates -1 to +1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepProfile {
    a: f64,
    a_prime: f64,
}

impl StepProfile {
    pub fn new(a: f64, a_prime: f64) -> Result<Self, DishamError> {
        if !(a_prime > a) || !a.is_finite() || !a_prime.is_finite() {
            return Err(DishamError::InvalidArgument(format!(
                "step profile requires a' > a, got ({a}, {a_prime})"
            )));
        }
        Ok(Self { a, a_prime })
    }

    pub fn lower(&self) -> f64 {
        self.a
    }

    pub fn upper(&self) -> f64 {
        self.a_prime
    }

    pub fn width(&self) -> f64 {
        self.a_prime - self.a
    }

    /// Affine map of (a, a') onto (-1, 1).
    fn rescale(&self, s: f64) -> f64 {
        (2.0 * s - self.a_prime - self.a) / (self.a_prime - self.a)
    }
}

/// Step model over a profile: -1 for `s <= a`, +1 for `s >= a'`.
pub fn chi_step(profile: StepProfile, s: f64) -> f64 {
    chi(profile.rescale(s))
}

/// Derivative of [`chi_step`]; zero outside (a, a').
pub fn dchi_step(profile: StepProfile, s: f64) -> f64 {
    dchi(profile.rescale(s)) * 2.0 / profile.width()
}
