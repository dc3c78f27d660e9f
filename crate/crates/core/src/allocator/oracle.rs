//! Reference solver for small networks: projected gradient descent in
//! `b`-space from several random starts. It shares no code with the
//! closed-form path and exists to cross-check it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{assemble, FEASIBILITY_MARGIN};
use crate::error::{Error, Result};
use crate::model::{AllocationResult, NetworkRealization};

pub const ORACLE_MAX_SENSORS: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleConfig {
    pub starts: usize,
    pub max_iters: usize,
    pub seed: u64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            starts: 6,
            max_iters: 20_000,
            seed: 0x5eed,
        }
    }
}

struct Problem {
    beta: Vec<f64>,
    /// `P_i = scale_i * b_i / (beta_i - b_i)`
    scale: Vec<f64>,
    cap: Vec<f64>,
    target: f64,
}

impl Problem {
    fn objective(&self, b: &[f64]) -> f64 {
        let mut f = 0.0;
        for ((&b, &beta), &scale) in b.iter().zip(&self.beta).zip(&self.scale) {
            if b >= beta {
                return f64::INFINITY;
            }
            let p = scale * b / (beta - b);
            f += p * p;
        }
        f
    }

    fn gradient(&self, b: &[f64], out: &mut [f64]) {
        for i in 0..b.len() {
            let gap = self.beta[i] - b[i];
            let p = self.scale[i] * b[i] / gap;
            out[i] = 2.0 * p * self.scale[i] * self.beta[i] / (gap * gap);
        }
    }

    /// Euclidean projection onto `{sum(b) = target, 0 <= b <= cap}`.
    fn project(&self, z: &[f64], out: &mut [f64]) {
        let fill = |tau: f64, out: &mut [f64]| {
            let mut s = 0.0;
            for i in 0..z.len() {
                out[i] = (z[i] - tau).clamp(0.0, self.cap[i]);
                s += out[i];
            }
            s
        };
        let mut lo = z
            .iter()
            .zip(&self.cap)
            .map(|(z, c)| z - c)
            .fold(f64::INFINITY, f64::min);
        let mut hi = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if fill(mid, out) > self.target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        fill(0.5 * (lo + hi), out);
    }

    fn descend(&self, start: &[f64], max_iters: usize) -> (Vec<f64>, f64) {
        let n = start.len();
        let mut x = vec![0.0; n];
        self.project(start, &mut x);
        let mut fx = self.objective(&x);
        let mut gx = vec![0.0; n];
        self.gradient(&x, &mut gx);
        let gnorm = gx.iter().map(|g| g * g).sum::<f64>().sqrt();
        let mut step = if gnorm > 0.0 {
            self.target / gnorm
        } else {
            1.0
        };

        let mut y = vec![0.0; n];
        let mut gy = vec![0.0; n];
        let mut trial = vec![0.0; n];
        for _ in 0..max_iters {
            let mut accepted = false;
            let mut fy = fx;
            for _ in 0..100 {
                for i in 0..n {
                    trial[i] = x[i] - step * gx[i];
                }
                self.project(&trial, &mut y);
                fy = self.objective(&y);
                let mut lin = 0.0;
                let mut sq = 0.0;
                for i in 0..n {
                    let d = y[i] - x[i];
                    lin += gx[i] * d;
                    sq += d * d;
                }
                if fy <= fx + lin + sq / (2.0 * step) {
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
            if !accepted {
                break;
            }
            self.gradient(&y, &mut gy);
            let mut ss = 0.0;
            let mut sy = 0.0;
            for i in 0..n {
                let s = y[i] - x[i];
                ss += s * s;
                sy += s * (gy[i] - gx[i]);
            }
            let moved = ss.sqrt();
            x.copy_from_slice(&y);
            gx.copy_from_slice(&gy);
            let improved = fx - fy;
            fx = fy;
            if moved <= 1e-15 * self.target
                || improved <= 1e-16 * fx.abs() && moved <= 1e-12 * self.target
            {
                break;
            }
            // Barzilai-Borwein step for the next iteration
            step = if sy > 0.0 { ss / sy } else { step * 2.0 };
        }
        (x, fx)
    }
}

/// Solve the `b`-space program directly. Limited to
/// [`ORACLE_MAX_SENSORS`] sensors.
pub fn brute_force_oracle(
    realization: &NetworkRealization,
    cfg: &OracleConfig,
) -> Result<AllocationResult> {
    let k = realization.len();
    if k > ORACLE_MAX_SENSORS {
        return Err(Error::InvalidParameter {
            name: "k",
            value: k as f64,
            reason: "the reference solver handles at most 6 sensors",
        });
    }
    let stats = realization.stats();
    let usable: Vec<usize> = (0..k).filter(|&i| !stats[i].is_degenerate()).collect();
    let target = realization.target_sum_b();
    let beta_sum: f64 = usable.iter().map(|&i| stats[i].beta).sum();
    if usable.is_empty() || target >= beta_sum * (1.0 - FEASIBILITY_MARGIN) {
        return Err(Error::InfeasibleTarget {
            d0: realization.d0_target(),
            min_variance: realization.min_achievable_variance(),
        });
    }

    let problem = Problem {
        beta: usable.iter().map(|&i| stats[i].beta).collect(),
        scale: usable
            .iter()
            .map(|&i| stats[i].power_scale / stats[i].gain_snr)
            .collect(),
        cap: usable
            .iter()
            .map(|&i| stats[i].beta * (1.0 - 1e-12))
            .collect(),
        target,
    };

    // starts are interior: halfway between the proportional point
    // b_i = target * beta_i / sum(beta) and a random feasible point
    let proportional: Vec<f64> = problem.beta.iter().map(|b| target * b / beta_sum).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut random = vec![0.0; usable.len()];
    for start_index in 0..cfg.starts.max(1) {
        let start: Vec<f64> = if start_index == 0 {
            proportional.clone()
        } else {
            let w: Vec<f64> = (0..usable.len())
                .map(|_| rng.random_range(0.01..1.0))
                .collect();
            let total: f64 = w.iter().sum();
            let raw: Vec<f64> = w.iter().map(|w| target * w / total).collect();
            problem.project(&raw, &mut random);
            proportional
                .iter()
                .zip(&random)
                .map(|(p, r)| 0.5 * (p + r))
                .collect()
        };
        let (x, fx) = problem.descend(&start, cfg.max_iters);
        if best.as_ref().is_none_or(|(_, bf)| fx < *bf) {
            best = Some((x, fx));
        }
    }
    let (x, _) = best.expect("at least one start");

    let mut b = vec![0.0; k];
    for (&i, &v) in usable.iter().zip(&x) {
        b[i] = v;
    }
    let active: Vec<usize> = usable
        .iter()
        .copied()
        .filter(|&i| b[i] > 1e-12 * target)
        .collect();
    // average stationarity gradient over the active sensors
    let lambda0 = if active.is_empty() {
        0.0
    } else {
        active
            .iter()
            .map(|&i| {
                let s = &stats[i];
                let gap = s.beta - b[i];
                let scale = s.power_scale / s.gain_snr;
                2.0 * scale * b[i] / gap * scale * s.beta / (gap * gap)
            })
            .sum::<f64>()
            / active.len() as f64
    };
    assemble(realization, b, lambda0, active.len())
}
