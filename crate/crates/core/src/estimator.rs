//! BLUE fusion at the fusion center and its conditional variance.

use crate::error::{Error, Result};
use crate::model::NetworkRealization;
use crate::numeric::compensated_sum;

/// One received snapshot together with the gains that produced it.
#[derive(Debug, Clone, Copy)]
pub struct FusionInput<'a> {
    pub y: &'a [f64],
    pub realization: &'a NetworkRealization,
    pub a2: &'a [f64],
}

/// Linear unbiased minimum-variance combination of the received signals.
///
/// Sensor `i` is weighted by `h a g / (a^2 g^2 sigma_o2 + sigma_c2)` with
/// `a = sqrt(a2)`; the result is normalized by the sum of `h a g` times
/// those weights so that the estimate is unbiased.
pub fn blue_estimate(input: &FusionInput<'_>) -> Result<f64> {
    let k = input.realization.len();
    check_len("y", input.y.len(), k)?;
    check_len("a2", input.a2.len(), k)?;

    let mut num = Vec::with_capacity(k);
    let mut den = Vec::with_capacity(k);
    for (((s, c), &a2), &y) in input
        .realization
        .sensors()
        .iter()
        .zip(input.realization.channels())
        .zip(input.a2)
        .zip(input.y)
    {
        let a = a2.max(0.0).sqrt();
        let coupling = s.h * a * c.g;
        let noise = a2 * c.g * c.g * s.sigma_o2 + c.sigma_c2;
        num.push(coupling * y / noise);
        den.push(coupling * coupling / noise);
    }
    let den = compensated_sum(den);
    if den <= 0.0 {
        return Err(Error::AllChannelsSilent);
    }
    Ok(compensated_sum(num) / den)
}

/// `sigma_theta2 / sum_i beta_i gamma_i a_i^2 sigma_oi^2 / (1 + gamma_i a_i^2 sigma_oi^2)`.
///
/// Returns `+inf` when no sensor carries information.
pub fn blue_variance_from_gains(realization: &NetworkRealization, a2: &[f64]) -> f64 {
    let info = compensated_sum(realization.stats().iter().zip(a2).map(|(s, &a2)| {
        let x = s.gain_snr * a2;
        if x > 0.0 {
            s.beta * x / (1.0 + x)
        } else {
            0.0
        }
    }));
    if info > 0.0 {
        realization.sigma_theta2() / info
    } else {
        f64::INFINITY
    }
}

/// `sigma_theta2 / sum(b)`, `+inf` when the sum is zero.
pub fn blue_variance_from_b(sigma_theta2: f64, b: &[f64]) -> f64 {
    let sum = compensated_sum(b.iter().copied());
    if sum > 0.0 {
        sigma_theta2 / sum
    } else {
        f64::INFINITY
    }
}

/// Forward map `a2 -> b`, the per-sensor information contribution.
pub fn b_from_gains(realization: &NetworkRealization, a2: &[f64]) -> Vec<f64> {
    realization
        .stats()
        .iter()
        .zip(a2)
        .map(|(s, &a2)| {
            let x = s.gain_snr * a2;
            if x > 0.0 {
                s.beta * x / (1.0 + x)
            } else {
                0.0
            }
        })
        .collect()
}

fn check_len(what: &'static str, got: usize, expected: usize) -> Result<()> {
    if got == expected {
        Ok(())
    } else {
        Err(Error::LengthMismatch {
            what,
            got,
            expected,
        })
    }
}
