//! Domain types for a sensor network snapshot and the elementary per-sensor
//! quantities derived from them.
//!
//! Everything here is linear: variances in watts, SNRs as plain ratios.
//! Decibel handling lives at the config boundary.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fixed observation model of one sensor: `x = h * theta + n`, `Var(n) = sigma_o2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorProfile {
    pub h: f64,
    pub sigma_o2: f64,
}

impl SensorProfile {
    pub fn new(h: f64, sigma_o2: f64) -> Result<Self> {
        let s = SensorProfile { h, sigma_o2 };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.h.is_finite() {
            return Err(Error::InvalidParameter {
                name: "h",
                value: self.h,
                reason: "must be finite",
            });
        }
        positive("sigma_o2", self.sigma_o2)
    }
}

/// One block-fading channel snapshot: `y = g * z + w`, `Var(w) = sigma_c2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelRealization {
    pub g: f64,
    pub sigma_c2: f64,
}

impl ChannelRealization {
    pub fn new(g: f64, sigma_c2: f64) -> Result<Self> {
        let c = ChannelRealization { g, sigma_c2 };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.g.is_finite() {
            return Err(Error::InvalidParameter {
                name: "g",
                value: self.g,
                reason: "must be finite",
            });
        }
        positive("sigma_c2", self.sigma_c2)
    }
}

/// Per-sensor quantities computed once per realization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorStats {
    /// Observation SNR.
    pub beta: f64,
    /// Channel SNR.
    pub gamma: f64,
    /// Activation score `(1 + beta) / (beta * gamma)`; `+inf` for degenerate
    /// sensors. Smaller is better.
    pub delta: f64,
    /// `sigma_o2 * (1 + beta)`, so that `P = a2 * power_scale`.
    pub power_scale: f64,
    /// `gamma * sigma_o2`, the factor multiplying `a2` inside the variance.
    pub gain_snr: f64,
}

impl SensorStats {
    pub fn is_degenerate(&self) -> bool {
        !(self.beta > 0.0 && self.gamma > 0.0)
    }
}

/// A complete snapshot: sensors, their channels, the parameter prior and the
/// variance target at the fusion center.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkRealization {
    sensors: Vec<SensorProfile>,
    channels: Vec<ChannelRealization>,
    sigma_theta2: f64,
    d0_target: f64,
    stats: Vec<SensorStats>,
}

impl NetworkRealization {
    pub fn new(
        sensors: Vec<SensorProfile>,
        channels: Vec<ChannelRealization>,
        sigma_theta2: f64,
        d0_target: f64,
    ) -> Result<Self> {
        if sensors.is_empty() {
            return Err(Error::LengthMismatch {
                what: "sensors",
                got: 0,
                expected: 1,
            });
        }
        if channels.len() != sensors.len() {
            return Err(Error::LengthMismatch {
                what: "channels",
                got: channels.len(),
                expected: sensors.len(),
            });
        }
        positive("sigma_theta2", sigma_theta2)?;
        positive("d0_target", d0_target)?;
        for s in &sensors {
            s.validate()?;
        }
        for c in &channels {
            c.validate()?;
        }

        let stats = sensors
            .iter()
            .zip(&channels)
            .map(|(s, c)| {
                let beta = observation_snr(s, sigma_theta2);
                let gamma = channel_snr(c);
                let gain_snr = gamma * s.sigma_o2;
                SensorStats {
                    beta,
                    gamma,
                    delta: delta(beta, gamma).unwrap_or(f64::INFINITY),
                    power_scale: s.sigma_o2 * (1.0 + beta),
                    gain_snr,
                }
            })
            .collect();

        Ok(NetworkRealization {
            sensors,
            channels,
            sigma_theta2,
            d0_target,
            stats,
        })
    }

    /// Same network and channels with a different variance target.
    pub fn with_target(&self, d0_target: f64) -> Result<Self> {
        positive("d0_target", d0_target)?;
        Ok(NetworkRealization {
            d0_target,
            ..self.clone()
        })
    }

    pub fn len(&self) -> usize {
        self.sensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sensors.is_empty()
    }

    pub fn sensors(&self) -> &[SensorProfile] {
        &self.sensors
    }

    pub fn channels(&self) -> &[ChannelRealization] {
        &self.channels
    }

    pub fn sigma_theta2(&self) -> f64 {
        self.sigma_theta2
    }

    pub fn d0_target(&self) -> f64 {
        self.d0_target
    }

    pub fn stats(&self) -> &[SensorStats] {
        &self.stats
    }

    /// Required `sum(b)`, i.e. `sigma_theta2 / D0`.
    pub fn target_sum_b(&self) -> f64 {
        self.sigma_theta2 / self.d0_target
    }

    /// Sum of `beta` over sensors that can contribute at all.
    pub fn usable_beta_sum(&self) -> f64 {
        crate::numeric::compensated_sum(
            self.stats
                .iter()
                .filter(|s| !s.is_degenerate())
                .map(|s| s.beta),
        )
    }

    /// Smallest variance any finite allocation can approach.
    pub fn min_achievable_variance(&self) -> f64 {
        let sum = self.usable_beta_sum();
        if sum > 0.0 {
            self.sigma_theta2 / sum
        } else {
            f64::INFINITY
        }
    }

    /// Transmit powers implied by squared gains.
    pub fn powers(&self, a2: &[f64]) -> Vec<f64> {
        self.stats
            .iter()
            .zip(a2)
            .map(|(s, &a2)| a2 * s.power_scale)
            .collect()
    }

    pub fn power_scales(&self) -> Vec<f64> {
        self.stats.iter().map(|s| s.power_scale).collect()
    }
}

/// Output of a power-allocation solve, indexed by the original sensor order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationResult {
    pub b: Vec<f64>,
    pub lambda0: f64,
    pub k1: usize,
    pub a2: Vec<f64>,
    pub power: Vec<f64>,
    pub cost_j: f64,
    pub variance: f64,
}

/// `|h|^2 sigma_theta2 / sigma_o2`.
pub fn observation_snr(s: &SensorProfile, sigma_theta2: f64) -> f64 {
    s.h * s.h * sigma_theta2 / s.sigma_o2
}

/// `|g|^2 / sigma_c2`.
pub fn channel_snr(c: &ChannelRealization) -> f64 {
    c.g * c.g / c.sigma_c2
}

/// `(1 + beta) / (beta * gamma)`.
pub fn delta(beta: f64, gamma: f64) -> Result<f64> {
    if !(beta > 0.0 && gamma > 0.0) {
        return Err(Error::DegenerateSensor);
    }
    Ok((1.0 + beta) / (beta * gamma))
}

/// `a2 * sigma_o2 * (1 + beta)`.
pub fn transmit_power(a2: f64, s: &SensorProfile, beta: f64) -> f64 {
    a2 * s.sigma_o2 * (1.0 + beta)
}

fn positive(name: &'static str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name,
            value,
            reason: "must be positive and finite",
        })
    }
}
