//! Minimum L2-norm power allocation under a BLUE variance target.
//!
//! The solver works in the auxiliary variables
//! `b_i = beta_i gamma_i a_i^2 sigma_oi^2 / (1 + gamma_i a_i^2 sigma_oi^2)`,
//! in which the variance constraint becomes `sum(b) = sigma_theta2 / D0` and
//! the objective `sum_i P_i^2` is separable and convex on `0 <= b_i < beta_i`.
//!
//! For a fixed equality multiplier `lambda0` each `b_i` is the unique root of
//! the stationarity cubic
//!
//! ```text
//! 2 beta_i^3 delta_i^2 b_i / (beta_i - b_i)^3 = lambda0
//! ```
//!
//! where `delta_i = (1 + beta_i) / (beta_i gamma_i)`. This is the gradient of
//! `sum_i P_i^2` with `P_i = a_i^2 sigma_oi^2 (1 + beta_i) = b_i (1 + beta_i) / (gamma_i (beta_i - b_i))`;
//! `sigma_oi` cancels out of the power. Writing
//! `u = 1 - b / beta` and `c = beta delta^2 / lambda0` the cubic is
//! `u^3 + 2 c u - 2 c = 0`, solved in closed form by Cardano. The multiplier
//! is then found by bisection on `sum_i b_i(lambda0) = sigma_theta2 / D0`,
//! over an active set that is a prefix of the sensors sorted by `delta`.

mod oracle;

pub use oracle::{brute_force_oracle, OracleConfig};

use log::debug;

use crate::error::{Error, Result};
use crate::estimator::blue_variance_from_gains;
use crate::model::{AllocationResult, NetworkRealization};
use crate::numeric::{compensated_sum, l2_norm};

/// Targets closer than this (relative) to `sum(beta)` are rejected: the gains
/// diverge as `b_i -> beta_i`.
pub const FEASIBILITY_MARGIN: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    /// Relative width of the final `lambda0` bracket.
    pub lambda_tol: f64,
    /// Relative stationarity residual accepted from the closed form.
    pub residual_tol: f64,
    pub max_bracket_doublings: u32,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            lambda_tol: 1e-12,
            residual_tol: 1e-8,
            max_bracket_doublings: 200,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda_tol", self.lambda_tol),
            ("residual_tol", self.residual_tol),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter {
                    name,
                    value: v,
                    reason: "tolerance must be positive",
                });
            }
        }
        if self.max_bracket_doublings == 0 {
            return Err(Error::InvalidParameter {
                name: "max_bracket_doublings",
                value: 0.0,
                reason: "must be at least 1",
            });
        }
        Ok(())
    }
}

/// Which route produced a root in [`b_given_lambda`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RootPath {
    ClosedForm,
    NumericFallback,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BRoot {
    pub b: f64,
    pub path: RootPath,
}

/// `u = 1 - b / beta` from Cardano's formula for `u^3 + 2cu - 2c = 0`.
///
/// The textbook form `cbrt(cT) (1 - (2/3) cbrt(c / T^2))` cancels badly for
/// large `c`; since `1 - w^3 = 2 / T` with `w = (2/3) cbrt(c / T^2)`, the
/// second factor is evaluated as `(2 / T) / (1 + w + w^2)`.
fn unsaturated_fraction(c: f64) -> f64 {
    let t = 1.0 + (1.0 + 8.0 * c / 27.0).sqrt();
    let w = 2.0 / 3.0 * (c / (t * t)).cbrt();
    c.cbrt() * t.cbrt() * (2.0 / t) / (1.0 + w + w * w)
}

/// Closed-form root of the stationarity cubic, clamped at zero.
///
/// `beta [1 - cbrt(beta delta^2 T / lambda0) (1 - (2/3) cbrt(beta delta^2 / (lambda0 T^2)))]^+`
/// with `T = 1 + sqrt(1 + 8 beta delta^2 / (27 lambda0))`.
pub fn b_closed_form(beta: f64, delta: f64, lambda0: f64) -> f64 {
    let c = beta * delta * delta / lambda0;
    if !c.is_finite() {
        return 0.0;
    }
    let u = unsaturated_fraction(c);
    // near saturation of u, use the cubic itself: 1 - u = u^3 / (2c)
    let v = if u > 0.5 {
        u * u * u / (2.0 * c)
    } else {
        1.0 - u
    };
    beta * v.max(0.0)
}

/// Left-hand side of the stationarity condition, `2 beta^3 delta^2 b / (beta - b)^3`.
pub fn stationarity_gradient(beta: f64, delta: f64, b: f64) -> f64 {
    let v = b / beta;
    let u = 1.0 - v;
    2.0 * beta * delta * delta * v / (u * u * u)
}

/// Relative stationarity residual of `b` at multiplier `lambda0`.
pub fn stationarity_residual(beta: f64, delta: f64, lambda0: f64, b: f64) -> f64 {
    (stationarity_gradient(beta, delta, b) - lambda0).abs() / lambda0
}

/// Check a positive closed-form root against the cubic.
pub fn validate_root(beta: f64, delta: f64, lambda0: f64, b: f64, tol: f64) -> Result<()> {
    if b <= 0.0 {
        return Ok(());
    }
    let residual = stationarity_residual(beta, delta, lambda0, b);
    if residual <= tol {
        Ok(())
    } else {
        Err(Error::ClosedFormMismatch { residual })
    }
}

/// Root of `2 c v - (1 - v)^3 = 0` on `(0, 1)` by bisection, returned as `b = beta v`.
pub fn b_numeric(beta: f64, delta: f64, lambda0: f64) -> f64 {
    let c = beta * delta * delta / lambda0;
    if !c.is_finite() {
        return 0.0;
    }
    let f = |v: f64| 2.0 * c * v - (1.0 - v).powi(3);
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    beta * 0.5 * (lo + hi)
}

/// Optimal `b` for one sensor at multiplier `lambda0`, residual-checked, with
/// a numeric fallback when the closed form does not satisfy the cubic.
pub fn b_given_lambda(beta: f64, delta: f64, lambda0: f64, cfg: &SolverConfig) -> Result<BRoot> {
    for (name, v) in [("beta", beta), ("delta", delta), ("lambda0", lambda0)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::InvalidParameter {
                name,
                value: v,
                reason: "must be positive and finite",
            });
        }
    }
    let b = b_closed_form(beta, delta, lambda0);
    match validate_root(beta, delta, lambda0, b, cfg.residual_tol) {
        Ok(()) => Ok(BRoot {
            b,
            path: RootPath::ClosedForm,
        }),
        Err(err) => {
            debug!("beta={beta:e} delta={delta:e} lambda0={lambda0:e}: {err}; solving numerically");
            Ok(BRoot {
                b: b_numeric(beta, delta, lambda0),
                path: RootPath::NumericFallback,
            })
        }
    }
}

/// `sum_i beta_i u_i(lambda0) - rhs` over the active `(beta, delta)` pairs,
/// with `rhs = sum(beta) - sigma_theta2 / D0`. Since `beta u = beta - b`, the
/// sum is `sum(beta - b)`; it decreases in `lambda0`.
pub fn lambda_residual(active: &[(f64, f64)], lambda0: f64, rhs: f64) -> f64 {
    let lhs = compensated_sum(active.iter().map(|&(beta, delta)| {
        let c = beta * delta * delta / lambda0;
        if c.is_finite() {
            beta * unsaturated_fraction(c)
        } else {
            beta
        }
    }));
    lhs - rhs
}

fn sum_b(active: &[(f64, f64)], lambda0: f64) -> f64 {
    compensated_sum(
        active
            .iter()
            .map(|&(beta, delta)| b_closed_form(beta, delta, lambda0)),
    )
}

/// Multiplier `lambda0` at which the active set's `b` values sum to `target_sum_b`.
///
/// Brackets by doubling/halving from `lambda0 = 1`, checking that the sum is
/// monotone along the way, then bisects geometrically.
pub fn solve_lambda0(active: &[(f64, f64)], target_sum_b: f64, cfg: &SolverConfig) -> Result<f64> {
    cfg.validate()?;
    if !(target_sum_b > 0.0 && target_sum_b.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "target_sum_b",
            value: target_sum_b,
            reason: "must be positive and finite",
        });
    }
    let max_sum_b = compensated_sum(active.iter().map(|p| p.0));
    if active.is_empty() || target_sum_b >= max_sum_b * (1.0 - FEASIBILITY_MARGIN) {
        return Err(Error::Infeasible {
            target_sum_b,
            max_sum_b,
        });
    }

    let g = |lambda0: f64| sum_b(active, lambda0) - target_sum_b;

    let mut lo = 1.0_f64;
    let mut hi = 1.0_f64;
    let g1 = g(1.0);
    if g1 == 0.0 {
        return Ok(1.0);
    }
    if g1 < 0.0 {
        let mut g_prev = g1;
        let mut found = false;
        for _ in 0..cfg.max_bracket_doublings {
            hi = lo * 2.0;
            let g_hi = g(hi);
            if g_hi < g_prev {
                return Err(Error::NonMonotone { lambda0: hi });
            }
            if g_hi >= 0.0 {
                found = true;
                break;
            }
            lo = hi;
            g_prev = g_hi;
        }
        if !found {
            return Err(Error::BracketFailure {
                doublings: cfg.max_bracket_doublings,
            });
        }
    } else {
        let mut g_prev = g1;
        let mut found = false;
        for _ in 0..cfg.max_bracket_doublings {
            lo = hi * 0.5;
            let g_lo = g(lo);
            if g_lo > g_prev {
                return Err(Error::NonMonotone { lambda0: lo });
            }
            if g_lo < 0.0 {
                found = true;
                break;
            }
            hi = lo;
            g_prev = g_lo;
        }
        if !found {
            return Err(Error::BracketFailure {
                doublings: cfg.max_bracket_doublings,
            });
        }
    }

    let (mut g_lo, mut g_hi) = (g(lo), g(hi));
    while hi / lo - 1.0 > cfg.lambda_tol {
        let mid = (lo * hi).sqrt();
        if mid <= lo || mid >= hi {
            break;
        }
        let g_mid = g(mid);
        if g_mid < 0.0 {
            lo = mid;
            g_lo = g_mid;
        } else {
            hi = mid;
            g_hi = g_mid;
        }
    }
    Ok(if g_hi.abs() <= g_lo.abs() { hi } else { lo })
}

/// Full solve: sort usable sensors by `delta`, then shrink the active prefix
/// from all of them until every active `b` is strictly positive.
pub fn waterfill(realization: &NetworkRealization, cfg: &SolverConfig) -> Result<AllocationResult> {
    cfg.validate()?;
    let stats = realization.stats();
    let mut order: Vec<usize> = (0..stats.len())
        .filter(|&i| !stats[i].is_degenerate())
        .collect();
    // stable: equal deltas keep input order
    order.sort_by(|&a, &b| stats[a].delta.total_cmp(&stats[b].delta));

    let target = realization.target_sum_b();
    let beta_sum = realization.usable_beta_sum();
    if order.is_empty() || target >= beta_sum * (1.0 - FEASIBILITY_MARGIN) {
        return Err(Error::InfeasibleTarget {
            d0: realization.d0_target(),
            min_variance: realization.min_achievable_variance(),
        });
    }

    let pairs: Vec<(f64, f64)> = order
        .iter()
        .map(|&i| (stats[i].beta, stats[i].delta))
        .collect();

    for k1 in (1..=pairs.len()).rev() {
        let active = &pairs[..k1];
        let lambda0 = match solve_lambda0(active, target, cfg) {
            Ok(l) => l,
            // a shorter prefix has an even smaller sum(beta)
            Err(Error::Infeasible { .. }) => break,
            Err(e) => return Err(e),
        };
        let roots = active
            .iter()
            .map(|&(beta, delta)| b_given_lambda(beta, delta, lambda0, cfg))
            .collect::<Result<Vec<_>>>()?;
        if roots.iter().any(|r| r.b <= 0.0) {
            debug!("k1={k1}: some b underflowed to zero, shrinking active set");
            continue;
        }
        let fallbacks = roots
            .iter()
            .filter(|r| r.path == RootPath::NumericFallback)
            .count();
        if fallbacks > 0 {
            debug!("{fallbacks} of {k1} roots used the numeric fallback");
        }

        let mut b = vec![0.0; stats.len()];
        for (&i, r) in order.iter().zip(&roots) {
            b[i] = r.b;
        }
        return assemble(realization, b, lambda0, k1);
    }
    Err(Error::NoActiveSet)
}

pub(crate) fn assemble(
    realization: &NetworkRealization,
    b: Vec<f64>,
    lambda0: f64,
    k1: usize,
) -> Result<AllocationResult> {
    let a2 = gains_from_b(realization, &b)?;
    let power = realization.powers(&a2);
    let cost_j = cost_j(&power);
    let variance = blue_variance_from_gains(realization, &a2);
    Ok(AllocationResult {
        b,
        lambda0,
        k1,
        a2,
        power,
        cost_j,
        variance,
    })
}

/// Squared gains from `b`: `a_i^2 = b_i / (gamma_i sigma_oi^2 (beta_i - b_i))`.
pub fn gains_from_b(realization: &NetworkRealization, b: &[f64]) -> Result<Vec<f64>> {
    if b.len() != realization.len() {
        return Err(Error::LengthMismatch {
            what: "b",
            got: b.len(),
            expected: realization.len(),
        });
    }
    realization
        .stats()
        .iter()
        .zip(b)
        .enumerate()
        .map(|(index, (s, &b))| {
            if b == 0.0 {
                return Ok(0.0);
            }
            if !(b > 0.0 && b < s.beta && s.gain_snr > 0.0) {
                return Err(Error::BOutOfRange {
                    index,
                    b,
                    beta: s.beta,
                });
            }
            Ok(b / (s.gain_snr * (s.beta - b)))
        })
        .collect()
}

/// L2 norm of the transmit-power vector.
pub fn cost_j(power: &[f64]) -> f64 {
    l2_norm(power)
}
