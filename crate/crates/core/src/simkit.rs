//! Random network instances, the equal-power baseline and the Monte-Carlo
//! driver.
//!
//! Every random draw comes from a ChaCha8 stream keyed by
//! `(seed, domain, K)` and selected by an index, so any trial can be
//! regenerated in isolation and the results do not depend on how trials are
//! scheduled across threads.
//!
//! The sensor layout (observation gains, observation noise, distances) is
//! drawn once per `(seed, K)`; each trial redraws only the Rayleigh fading.
//! Set `redraw_layout` to draw a fresh layout for every trial instead.

use std::collections::BTreeMap;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Deserializer, Serialize};

use crate::allocator::{waterfill, SolverConfig, FEASIBILITY_MARGIN};
use crate::codebook::{gain_cost, select_index, train, Codebook, TrainingSet};
use crate::error::{Error, Result};
use crate::estimator::{b_from_gains, blue_variance_from_gains};
use crate::model::{ChannelRealization, NetworkRealization, SensorProfile};
use crate::numeric::{compensated_sum, mean_and_se};
use crate::par::{map_indexed, Execution};

const DOMAIN_LAYOUT: u64 = 1;
const DOMAIN_FADING: u64 = 2;
const DOMAIN_TRAINING_LAYOUT: u64 = 3;
const DOMAIN_TRAINING_FADING: u64 = 4;
const DOMAIN_LLOYD: u64 = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    /// Sensor counts to sweep. A single number is accepted.
    #[serde(deserialize_with = "one_or_many")]
    pub k: Vec<usize>,
    pub d0_grid: Vec<f64>,
    pub sigma_theta2: f64,
    pub h_mean: f64,
    pub h_var: f64,
    /// Mean `h^2` after rescaling; `None` keeps the raw Gaussian draws.
    pub h_power_target: Option<f64>,
    pub sigma_o2_range: (f64, f64),
    /// Mean observation-noise variance after rescaling; `None` keeps the raw draws.
    pub noise_power_target: Option<f64>,
    /// Channel noise variance in watts.
    pub sigma_c2: f64,
    pub eta0: f64,
    pub ref_dist: f64,
    pub alpha: f64,
    pub dist_range: (f64, f64),
    pub trials: usize,
    pub seed: u64,
    pub codebook_bits: Option<u32>,
    pub training_m: usize,
    pub lloyd_epsilon: f64,
    pub redraw_layout: bool,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            k: vec![50],
            d0_grid: vec![0.01, 0.02, 0.05, 0.1],
            sigma_theta2: 1.0,
            h_mean: 1.0,
            h_var: 0.09,
            h_power_target: Some(1.2),
            sigma_o2_range: (0.05, 0.15),
            noise_power_target: None,
            sigma_c2: 1e-12,
            eta0: 1e-3,
            ref_dist: 1.0,
            alpha: 2.0,
            dist_range: (50.0, 150.0),
            trials: 10_000,
            seed: 0,
            codebook_bits: None,
            training_m: 5_000,
            lloyd_epsilon: 1e-4,
            redraw_layout: false,
        }
    }
}

fn one_or_many<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<usize>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany {
        One(usize),
        Many(Vec<usize>),
    }
    Ok(match OneOrMany::deserialize(d)? {
        OneOrMany::One(k) => vec![k],
        OneOrMany::Many(ks) => ks,
    })
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

fn range(name: &'static str, (lo, hi): (f64, f64)) -> Result<()> {
    positive(name, lo)?;
    positive(name, hi)?;
    if lo > hi {
        return Err(Error::InvalidParameter {
            name,
            value: lo,
            reason: "lower bound exceeds upper bound",
        });
    }
    Ok(())
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k.is_empty() || self.k.contains(&0) {
            return Err(Error::InvalidParameter {
                name: "k",
                value: 0.0,
                reason: "need at least one sensor count, each at least 1",
            });
        }
        if self.d0_grid.is_empty() {
            return Err(Error::InvalidParameter {
                name: "d0_grid",
                value: 0.0,
                reason: "must not be empty",
            });
        }
        for &d0 in &self.d0_grid {
            positive("d0_grid", d0)?;
        }
        positive("sigma_theta2", self.sigma_theta2)?;
        if !self.h_mean.is_finite() {
            return Err(Error::InvalidParameter {
                name: "h_mean",
                value: self.h_mean,
                reason: "must be finite",
            });
        }
        positive("h_var", self.h_var)?;
        if let Some(t) = self.h_power_target {
            positive("h_power_target", t)?;
        }
        range("sigma_o2_range", self.sigma_o2_range)?;
        if let Some(t) = self.noise_power_target {
            positive("noise_power_target", t)?;
        }
        positive("sigma_c2", self.sigma_c2)?;
        positive("eta0", self.eta0)?;
        positive("ref_dist", self.ref_dist)?;
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "alpha",
                value: self.alpha,
                reason: "must be non-negative and finite",
            });
        }
        range("dist_range", self.dist_range)?;
        if self.trials == 0 {
            return Err(Error::InvalidParameter {
                name: "trials",
                value: 0.0,
                reason: "must be at least 1",
            });
        }
        if self.training_m == 0 {
            return Err(Error::InvalidParameter {
                name: "training_m",
                value: 0.0,
                reason: "must be at least 1",
            });
        }
        positive("lloyd_epsilon", self.lloyd_epsilon)?;
        if let Some(bits) = self.codebook_bits {
            if !(1..=24).contains(&bits) {
                return Err(Error::InvalidParameter {
                    name: "codebook_bits",
                    value: bits as f64,
                    reason: "must be between 1 and 24",
                });
            }
        }
        Ok(())
    }
}

fn stream(seed: u64, domain: u64, k: usize, index: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&domain.to_le_bytes());
    key[16..24].copy_from_slice(&(k as u64).to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    rng
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

/// Per-sensor quantities that stay fixed while the fading changes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    pub h: Vec<f64>,
    pub sigma_o2: Vec<f64>,
    pub distance: Vec<f64>,
}

impl Layout {
    pub fn len(&self) -> usize {
        self.h.len()
    }

    pub fn is_empty(&self) -> bool {
        self.h.is_empty()
    }

    /// `sigma_o2 * (1 + beta)`, the factor turning a squared gain into watts.
    pub fn power_scales(&self, sigma_theta2: f64) -> Vec<f64> {
        self.h
            .iter()
            .zip(&self.sigma_o2)
            .map(|(h, s)| s * (1.0 + h * h * sigma_theta2 / s))
            .collect()
    }
}

fn draw_layout(cfg: &SimulationConfig, k: usize, rng: &mut ChaCha8Rng) -> Layout {
    let normal = Normal::new(cfg.h_mean, cfg.h_var.sqrt()).expect("validated variance");
    let mut h: Vec<f64> = (0..k).map(|_| normal.sample(rng)).collect();
    let mut sigma_o2: Vec<f64> = (0..k).map(|_| uniform(rng, cfg.sigma_o2_range)).collect();
    let distance: Vec<f64> = (0..k).map(|_| uniform(rng, cfg.dist_range)).collect();

    if let Some(target) = cfg.h_power_target {
        let power = compensated_sum(h.iter().map(|x| x * x)) / k as f64;
        if power > 0.0 {
            let scale = (target / power).sqrt();
            h.iter_mut().for_each(|x| *x *= scale);
        }
    }
    if let Some(target) = cfg.noise_power_target {
        let mean = compensated_sum(sigma_o2.iter().copied()) / k as f64;
        sigma_o2.iter_mut().for_each(|x| *x *= target / mean);
    }
    Layout {
        h,
        sigma_o2,
        distance,
    }
}

/// The fixed layout used for every trial with `K = k`.
pub fn base_layout(cfg: &SimulationConfig, k: usize) -> Layout {
    draw_layout(cfg, k, &mut stream(cfg.seed, DOMAIN_LAYOUT, k, 0))
}

/// Rayleigh amplitude with `E[f^2] = 1`.
pub fn rayleigh(rng: &mut ChaCha8Rng) -> f64 {
    let normal = Normal::new(0.0, std::f64::consts::FRAC_1_SQRT_2).expect("constant");
    let x: f64 = normal.sample(rng);
    let y: f64 = normal.sample(rng);
    x.hypot(y)
}

/// `eta0 * (d / ref_dist)^-alpha`.
pub fn path_loss(cfg: &SimulationConfig, distance: f64) -> f64 {
    cfg.eta0 * (distance / cfg.ref_dist).powf(-cfg.alpha)
}

fn compose(
    cfg: &SimulationConfig,
    layout: &Layout,
    d0: f64,
    rng: &mut ChaCha8Rng,
) -> Result<NetworkRealization> {
    let sensors = layout
        .h
        .iter()
        .zip(&layout.sigma_o2)
        .map(|(&h, &s)| SensorProfile::new(h, s))
        .collect::<Result<Vec<_>>>()?;
    let channels = layout
        .distance
        .iter()
        .map(|&d| ChannelRealization::new(path_loss(cfg, d) * rayleigh(rng), cfg.sigma_c2))
        .collect::<Result<Vec<_>>>()?;
    NetworkRealization::new(sensors, channels, cfg.sigma_theta2, d0)
}

/// Network seen in Monte-Carlo trial `trial` with `K = k`. Every `d0` shares
/// the same draws.
pub fn sample_realization(
    cfg: &SimulationConfig,
    k: usize,
    d0: f64,
    trial: u64,
) -> Result<NetworkRealization> {
    let layout = if cfg.redraw_layout {
        draw_layout(cfg, k, &mut stream(cfg.seed, DOMAIN_LAYOUT, k, trial + 1))
    } else {
        base_layout(cfg, k)
    };
    compose(
        cfg,
        &layout,
        d0,
        &mut stream(cfg.seed, DOMAIN_FADING, k, trial),
    )
}

/// Network for training vector `index`. Independent of the trial draws but
/// on the same layout.
pub fn sample_training_realization(
    cfg: &SimulationConfig,
    k: usize,
    d0: f64,
    index: u64,
) -> Result<NetworkRealization> {
    let layout = if cfg.redraw_layout {
        draw_layout(
            cfg,
            k,
            &mut stream(cfg.seed, DOMAIN_TRAINING_LAYOUT, k, index),
        )
    } else {
        base_layout(cfg, k)
    };
    compose(
        cfg,
        &layout,
        d0,
        &mut stream(cfg.seed, DOMAIN_TRAINING_FADING, k, index),
    )
}

/// Smallest common per-sensor power meeting the variance target, and its
/// cost `sqrt(K) * P`.
pub fn equal_power_baseline(realization: &NetworkRealization) -> Result<(f64, f64)> {
    let target = realization.target_sum_b();
    if target >= realization.usable_beta_sum() * (1.0 - FEASIBILITY_MARGIN) || target.is_nan() {
        return Err(Error::InfeasibleTarget {
            d0: realization.d0_target(),
            min_variance: realization.min_achievable_variance(),
        });
    }
    let scales = realization.power_scales();
    let sum_b = |p: f64| {
        let a2: Vec<f64> = scales.iter().map(|s| p / s).collect();
        compensated_sum(b_from_gains(realization, &a2))
    };

    let (mut lo, mut hi) = (1.0, 1.0);
    while sum_b(hi) < target {
        lo = hi;
        hi *= 2.0;
        if !hi.is_finite() {
            return Err(Error::BracketFailure { doublings: 1024 });
        }
    }
    if lo == hi {
        while sum_b(lo) >= target {
            hi = lo;
            lo *= 0.5;
            if lo == 0.0 {
                break;
            }
        }
    }
    loop {
        let mid = (lo * hi).sqrt().max(lo).min(hi);
        let mid = if mid <= lo || mid >= hi {
            0.5 * (lo + hi)
        } else {
            mid
        };
        if mid <= lo || mid >= hi {
            break;
        }
        if sum_b(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((hi, (realization.len() as f64).sqrt() * hi))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: u64,
    pub d0: f64,
    pub k: usize,
    pub l: Option<u32>,
    pub cost_full: Option<f64>,
    pub cost_equal: Option<f64>,
    pub cost_quantized: Option<f64>,
    pub variance_quantized: Option<f64>,
    pub k1: Option<usize>,
    pub feasible: bool,
}

/// Evaluate one realization under full feedback, equal power and, if given,
/// the codebook.
pub fn evaluate(
    realization: &NetworkRealization,
    trial: u64,
    book: Option<&Codebook>,
    solver: &SolverConfig,
) -> Result<TrialRecord> {
    let mut record = TrialRecord {
        trial,
        d0: realization.d0_target(),
        k: realization.len(),
        l: book.map(Codebook::bits),
        cost_full: None,
        cost_equal: None,
        cost_quantized: None,
        variance_quantized: None,
        k1: None,
        feasible: false,
    };
    let full = match waterfill(realization, solver) {
        Ok(a) => a,
        Err(Error::InfeasibleTarget { .. }) | Err(Error::Infeasible { .. }) => return Ok(record),
        Err(e) => return Err(e),
    };
    let (_, cost_equal) = equal_power_baseline(realization)?;
    record.cost_full = Some(full.cost_j);
    record.cost_equal = Some(cost_equal);
    record.k1 = Some(full.k1);
    record.feasible = true;
    if let Some(book) = book {
        let a2 = book.entry(select_index(book, &full.a2)?);
        record.cost_quantized = Some(gain_cost(a2, &realization.power_scales()));
        record.variance_quantized = Some(blue_variance_from_gains(realization, a2));
    }
    Ok(record)
}

/// Trial `trial` of the `(k, d0)` cell.
pub fn run_trial(
    cfg: &SimulationConfig,
    k: usize,
    d0: f64,
    trial: u64,
    book: Option<&Codebook>,
) -> Result<TrialRecord> {
    let realization = sample_realization(cfg, k, d0, trial)?;
    evaluate(&realization, trial, book, &SolverConfig::default())
}

/// Whether `book` is meant for the `(k, d0)` cell.
pub fn book_applies(book: &Codebook, k: usize, d0: f64) -> bool {
    book.k() == k && book.meta.d0.is_none_or(|b| b == d0)
}

/// Reject codebooks that cannot be used with `cfg`.
pub fn check_book(cfg: &SimulationConfig, book: &Codebook) -> Result<()> {
    if !cfg.k.contains(&book.k()) {
        return Err(Error::DimensionMismatch {
            what: "codebook K vs config K",
            got: book.k(),
            expected: cfg.k[0],
        });
    }
    if !cfg.redraw_layout {
        let scales = base_layout(cfg, book.k()).power_scales(cfg.sigma_theta2);
        let same = scales
            .iter()
            .zip(book.power_scale())
            .all(|(a, b)| a.to_bits() == b.to_bits());
        if !same {
            return Err(Error::LayoutMismatch);
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub d0: f64,
    pub k: usize,
    pub l: Option<u32>,
    pub trials: usize,
    pub infeasible: usize,
    pub mean_cost_full: Option<f64>,
    pub se_cost_full: Option<f64>,
    pub mean_cost_equal: Option<f64>,
    pub se_cost_equal: Option<f64>,
    pub mean_cost_quantized: Option<f64>,
    pub se_cost_quantized: Option<f64>,
    pub mean_variance_quantized: Option<f64>,
    /// Mean over feasible trials of `max(0, variance_quantized / d0 - 1)`.
    pub mean_overshoot: Option<f64>,
    /// Feasible trials whose quantized allocation misses the variance target.
    pub violations: Option<usize>,
}

/// Cells keyed by `d0=<d0>|k=<k>|l=<bits or full>`.
pub type SweepSummary = BTreeMap<String, CellSummary>;

pub fn cell_key(d0: f64, k: usize, l: Option<u32>) -> String {
    match l {
        Some(l) => format!("d0={d0}|k={k}|l={l}"),
        None => format!("d0={d0}|k={k}|l=full"),
    }
}

fn summarize_cell(records: &[TrialRecord]) -> CellSummary {
    let first = &records[0];
    let feasible: Vec<&TrialRecord> = records.iter().filter(|r| r.feasible).collect();
    let stat = |f: &dyn Fn(&TrialRecord) -> Option<f64>| {
        let xs: Vec<f64> = feasible.iter().filter_map(|r| f(r)).collect();
        mean_and_se(&xs)
    };
    let full = stat(&|r| r.cost_full);
    let equal = stat(&|r| r.cost_equal);
    let quantized = stat(&|r| r.cost_quantized);
    let variance = stat(&|r| r.variance_quantized);
    let overshoots: Vec<f64> = feasible
        .iter()
        .filter_map(|r| r.variance_quantized.map(|v| (v / r.d0 - 1.0).max(0.0)))
        .collect();
    let overshoot = mean_and_se(&overshoots);
    CellSummary {
        d0: first.d0,
        k: first.k,
        l: first.l,
        trials: records.len(),
        infeasible: records.len() - feasible.len(),
        mean_cost_full: full.map(|s| s.0),
        se_cost_full: full.map(|s| s.1),
        mean_cost_equal: equal.map(|s| s.0),
        se_cost_equal: equal.map(|s| s.1),
        mean_cost_quantized: quantized.map(|s| s.0),
        se_cost_quantized: quantized.map(|s| s.1),
        mean_variance_quantized: variance.map(|s| s.0),
        mean_overshoot: overshoot.map(|s| s.0),
        violations: overshoot.map(|_| overshoots.iter().filter(|&&o| o > 0.0).count()),
    }
}

/// Aggregate records into cells. Records of a cell are reduced in the order
/// given.
pub fn summarize(records: &[TrialRecord]) -> SweepSummary {
    let mut cells: BTreeMap<String, Vec<TrialRecord>> = BTreeMap::new();
    for r in records {
        cells
            .entry(cell_key(r.d0, r.k, r.l))
            .or_default()
            .push(r.clone());
    }
    cells
        .into_iter()
        .map(|(key, rs)| (key, summarize_cell(&rs)))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutput {
    pub records: Vec<TrialRecord>,
    pub summary: SweepSummary,
}

/// Run trials `0..cfg.trials` for every `(K, D0)` cell. The codebook, if
/// any, is applied to the cells it was trained for; the others are
/// full-feedback only.
pub fn monte_carlo(
    cfg: &SimulationConfig,
    book: Option<&Codebook>,
    exec: Execution,
) -> Result<SweepOutput> {
    cfg.validate()?;
    if let Some(book) = book {
        check_book(cfg, book)?;
    }
    let solver = SolverConfig::default();
    let mut records = Vec::with_capacity(cfg.k.len() * cfg.d0_grid.len() * cfg.trials);
    for &k in &cfg.k {
        for &d0 in &cfg.d0_grid {
            let cell_book = book.filter(|b| book_applies(b, k, d0));
            let cell = map_indexed(cfg.trials, exec, |t| {
                let realization = sample_realization(cfg, k, d0, t as u64)?;
                evaluate(&realization, t as u64, cell_book, &solver)
            });
            for r in cell {
                records.push(r?);
            }
        }
    }
    let summary = summarize(&records);
    Ok(SweepOutput { records, summary })
}

/// Optimal allocations for `cfg.training_m` training realizations. Returns
/// the set and how many realizations were infeasible and skipped.
pub fn build_training_set(
    cfg: &SimulationConfig,
    k: usize,
    d0: f64,
    exec: Execution,
) -> Result<(TrainingSet, usize)> {
    cfg.validate()?;
    let solver = SolverConfig::default();
    let solved = map_indexed(cfg.training_m, exec, |j| {
        let realization = sample_training_realization(cfg, k, d0, j as u64)?;
        match waterfill(&realization, &solver) {
            Ok(a) => Ok(Some(a.a2)),
            Err(Error::InfeasibleTarget { .. }) | Err(Error::Infeasible { .. }) => Ok(None),
            Err(e) => Err(e),
        }
    });
    let mut vectors = Vec::with_capacity(solved.len());
    let mut skipped = 0;
    for s in solved {
        match s? {
            Some(v) => vectors.push(v),
            None => skipped += 1,
        }
    }
    let set = TrainingSet::new(vectors, base_layout(cfg, k).power_scales(cfg.sigma_theta2))?;
    Ok((set, skipped))
}

/// Build a training set for `(k, d0)` and run Lloyd training on it.
///
/// Only meaningful for a fixed layout; with `redraw_layout` the stored
/// power scales belong to the base layout.
pub fn train_codebook(
    cfg: &SimulationConfig,
    k: usize,
    d0: f64,
    bits: u32,
    exec: Execution,
) -> Result<Codebook> {
    let (set, skipped) = build_training_set(cfg, k, d0, exec)?;
    let lloyd_seed = stream(cfg.seed, DOMAIN_LLOYD, k, bits as u64).random();
    let mut book = train(&set, bits, cfg.lloyd_epsilon, lloyd_seed, exec)?;
    book.meta.d0 = Some(d0);
    book.meta.skipped = skipped;
    book.meta.m = cfg.training_m;
    Ok(book)
}

pub const CSV_HEADER: [&str; 10] = [
    "trial",
    "d0",
    "k",
    "l",
    "cost_full",
    "cost_equal",
    "cost_quantized",
    "variance_quantized",
    "k1",
    "feasible",
];

pub fn write_csv<W: Write>(out: W, records: &[TrialRecord]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(out);
    let fmt = |e: csv::Error| Error::Format(e.to_string());
    w.write_record(CSV_HEADER).map_err(fmt)?;
    for r in records {
        w.serialize(r).map_err(fmt)?;
    }
    w.flush().map_err(|e| Error::Format(e.to_string()))
}

pub fn read_csv<R: std::io::Read>(input: R) -> Result<Vec<TrialRecord>> {
    let mut rdr = csv::Reader::from_reader(input);
    let header = rdr.headers().map_err(|e| Error::Format(e.to_string()))?;
    if header.iter().ne(CSV_HEADER) {
        return Err(Error::Format(format!("unexpected CSV header {header:?}")));
    }
    rdr.deserialize()
        .map(|r| r.map_err(|e| Error::Format(e.to_string())))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::allocator::waterfill;
    use crate::codebook::TrainingMeta;

    fn small(k: usize) -> SimulationConfig {
        SimulationConfig {
            k: vec![k],
            d0_grid: vec![0.05],
            trials: 40,
            training_m: 64,
            ..Default::default()
        }
    }

    #[test]
    fn path_loss_at_reference_distance() {
        let cfg = SimulationConfig::default();
        assert_eq!(path_loss(&cfg, cfg.ref_dist), cfg.eta0);
        assert_eq!(path_loss(&cfg, 10.0), cfg.eta0 * 0.01);
    }

    #[test]
    fn realizations_are_reproducible() {
        let cfg = small(8);
        let a = sample_realization(&cfg, 8, 0.05, 3).unwrap();
        let b = sample_realization(&cfg, 8, 0.05, 3).unwrap();
        assert_eq!(a, b);
        let c = sample_realization(&cfg, 8, 0.05, 4).unwrap();
        assert_eq!(a.sensors(), c.sensors());
        assert_ne!(a.channels(), c.channels());
        let t = sample_training_realization(&cfg, 8, 0.05, 3).unwrap();
        assert_ne!(a.channels(), t.channels());
    }

    #[test]
    fn redrawn_layouts_differ() {
        let cfg = SimulationConfig {
            redraw_layout: true,
            ..small(5)
        };
        let a = sample_realization(&cfg, 5, 0.05, 0).unwrap();
        let b = sample_realization(&cfg, 5, 0.05, 1).unwrap();
        assert_ne!(a.sensors(), b.sensors());
    }

    #[test]
    fn rayleigh_has_unit_power() {
        let mut rng = stream(7, 99, 0, 0);
        let n = 100_000;
        let p = compensated_sum((0..n).map(|_| rayleigh(&mut rng).powi(2))) / n as f64;
        assert!((p - 1.0).abs() < 0.01, "E[f^2] = {p}");
    }

    #[test]
    fn layout_normalization() {
        let cfg = SimulationConfig {
            noise_power_target: Some(0.01),
            ..SimulationConfig::default()
        };
        let layout = base_layout(&cfg, 40);
        let hp = layout.h.iter().map(|h| h * h).sum::<f64>() / 40.0;
        let np = layout.sigma_o2.iter().sum::<f64>() / 40.0;
        assert!((hp - 1.2).abs() < 1e-12);
        assert!((np - 0.01).abs() < 1e-14);
        for d in &layout.distance {
            assert!((50.0..150.0).contains(d));
        }
        let raw = base_layout(&SimulationConfig::default(), 40);
        for s in &raw.sigma_o2 {
            assert!((0.05..0.15).contains(s));
        }
    }

    #[test]
    fn equal_power_single_sensor_matches_waterfill() {
        let cfg = SimulationConfig {
            d0_grid: vec![0.5],
            ..small(1)
        };
        let n = sample_realization(&cfg, 1, 0.5, 0).unwrap();
        let full = waterfill(&n, &SolverConfig::default()).unwrap();
        let (p, cost) = equal_power_baseline(&n).unwrap();
        assert!((p - full.power[0]).abs() <= 1e-12 * p);
        assert_eq!(cost, p);
    }

    #[test]
    fn equal_power_symmetric_matches_waterfill() {
        let sensors = vec![SensorProfile::new(1.1, 0.1).unwrap(); 4];
        let channels = vec![ChannelRealization::new(1e-7, 1e-12).unwrap(); 4];
        let n = NetworkRealization::new(sensors, channels, 1.0, 0.05).unwrap();
        let full = waterfill(&n, &SolverConfig::default()).unwrap();
        let (_, cost) = equal_power_baseline(&n).unwrap();
        assert!((cost - full.cost_j).abs() <= 1e-10 * cost);
    }

    #[test]
    fn equal_power_meets_target() {
        let cfg = small(20);
        for t in 0..20 {
            let n = sample_realization(&cfg, 20, 0.05, t).unwrap();
            let (p, cost) = equal_power_baseline(&n).unwrap();
            let a2: Vec<f64> = n.power_scales().iter().map(|s| p / s).collect();
            let v = blue_variance_from_gains(&n, &a2);
            assert!((0.05 * (1.0 - 1e-9)..=0.05 * (1.0 + 1e-12)).contains(&v));
            let full = waterfill(&n, &SolverConfig::default()).unwrap();
            assert!(full.cost_j <= cost + 1e-9);
            assert!((full.variance - 0.05).abs() <= 1e-6 * 0.05);
        }
    }

    #[test]
    fn infeasible_trials_are_recorded() {
        let cfg = SimulationConfig {
            d0_grid: vec![1e-6],
            trials: 3,
            ..small(3)
        };
        let out = monte_carlo(&cfg, None, Execution::Sequential).unwrap();
        assert_eq!(out.records.len(), 3);
        assert!(out
            .records
            .iter()
            .all(|r| !r.feasible && r.cost_full.is_none()));
        let cell = &out.summary[&cell_key(1e-6, 3, None)];
        assert_eq!(cell.infeasible, 3);
        assert_eq!(cell.mean_cost_full, None);
        assert!(equal_power_baseline(&sample_realization(&cfg, 3, 1e-6, 0).unwrap()).is_err());
    }

    #[test]
    fn single_trial_summary_is_the_record() {
        let cfg = SimulationConfig {
            trials: 1,
            ..small(6)
        };
        let out = monte_carlo(&cfg, None, Execution::Sequential).unwrap();
        let r = &out.records[0];
        let cell = &out.summary[&cell_key(0.05, 6, None)];
        assert_eq!(cell.mean_cost_full, r.cost_full);
        assert_eq!(cell.mean_cost_equal, r.cost_equal);
        assert_eq!(cell.se_cost_full, Some(0.0));
        assert_eq!(cell.mean_cost_quantized, None);
        assert_eq!(r.cost_quantized, None);
    }

    #[test]
    fn perfect_codebook_reproduces_full_feedback() {
        let cfg = SimulationConfig {
            trials: 4,
            ..small(4)
        };
        let vectors: Vec<Vec<f64>> = (0..4)
            .map(|t| {
                let n = sample_realization(&cfg, 4, 0.05, t).unwrap();
                waterfill(&n, &SolverConfig::default()).unwrap().a2
            })
            .collect();
        let book = Codebook::new(
            2,
            vectors,
            base_layout(&cfg, 4).power_scales(cfg.sigma_theta2),
            TrainingMeta {
                m: 4,
                epsilon: 1e-4,
                seed: 0,
                iterations: 0,
                final_distortion: 0.0,
                distortion_log: vec![],
                d0: Some(0.05),
                skipped: 0,
            },
        )
        .unwrap();
        let out = monte_carlo(&cfg, Some(&book), Execution::Sequential).unwrap();
        for r in &out.records {
            assert_eq!(r.l, Some(2));
            let q = r.cost_quantized.unwrap();
            let f = r.cost_full.unwrap();
            assert!((q - f).abs() <= 1e-12 * f);
            assert!((r.variance_quantized.unwrap() - 0.05).abs() <= 1e-9);
        }
    }

    #[test]
    fn trained_book_is_applied_to_its_cell_only() {
        let cfg = SimulationConfig {
            d0_grid: vec![0.05, 0.1],
            trials: 10,
            ..small(10)
        };
        let book = train_codebook(&cfg, 10, 0.05, 2, Execution::Sequential).unwrap();
        assert_eq!(book.meta.d0, Some(0.05));
        assert_eq!(book.meta.skipped, 0);
        let out = monte_carlo(&cfg, Some(&book), Execution::Sequential).unwrap();
        assert!(out.summary.contains_key(&cell_key(0.05, 10, Some(2))));
        assert!(out.summary.contains_key(&cell_key(0.1, 10, None)));
        for r in &out.records {
            let v = r.variance_quantized;
            assert_eq!(v.is_some(), r.d0 == 0.05);
            assert!(v.is_none_or(f64::is_finite));
        }

        let other_k = SimulationConfig {
            k: vec![11],
            ..cfg.clone()
        };
        assert!(matches!(
            monte_carlo(&other_k, Some(&book), Execution::Sequential),
            Err(Error::DimensionMismatch { .. })
        ));
        let other_seed = SimulationConfig { seed: 1, ..cfg };
        assert_eq!(
            monte_carlo(&other_seed, Some(&book), Execution::Sequential),
            Err(Error::LayoutMismatch)
        );
    }

    #[test]
    fn parallel_matches_sequential() {
        let cfg = SimulationConfig {
            k: vec![5, 12],
            d0_grid: vec![0.02, 0.05],
            trials: 30,
            ..small(5)
        };
        let a = monte_carlo(&cfg, None, Execution::Sequential).unwrap();
        let b = monte_carlo(&cfg, None, Execution::Parallel).unwrap();
        assert_eq!(a, b);
        let mut ca = Vec::new();
        let mut cb = Vec::new();
        write_csv(&mut ca, &a.records).unwrap();
        write_csv(&mut cb, &b.records).unwrap();
        assert_eq!(ca, cb);
    }

    #[test]
    fn csv_round_trip() {
        let cfg = SimulationConfig {
            d0_grid: vec![0.05, 1e-6],
            trials: 5,
            ..small(4)
        };
        let out = monte_carlo(&cfg, None, Execution::Sequential).unwrap();
        let mut buf = Vec::new();
        write_csv(&mut buf, &out.records).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(
            "trial,d0,k,l,cost_full,cost_equal,cost_quantized,variance_quantized,k1,feasible\n"
        ));
        assert!(text.lines().nth(1).unwrap().starts_with("0,0.05,4,,"));
        assert_eq!(read_csv(buf.as_slice()).unwrap(), out.records);
    }

    #[test]
    fn config_validation() {
        assert!(SimulationConfig::default().validate().is_ok());
        let bad = [
            SimulationConfig {
                trials: 0,
                ..Default::default()
            },
            SimulationConfig {
                k: vec![],
                ..Default::default()
            },
            SimulationConfig {
                d0_grid: vec![-1.0],
                ..Default::default()
            },
            SimulationConfig {
                sigma_o2_range: (0.2, 0.1),
                ..Default::default()
            },
            SimulationConfig {
                h_var: 0.0,
                ..Default::default()
            },
            SimulationConfig {
                codebook_bits: Some(0),
                ..Default::default()
            },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
        let cfg: SimulationConfig = serde_json::from_str(r#"{"k": 20}"#).unwrap();
        assert_eq!(cfg.k, vec![20]);
        let cfg: SimulationConfig = serde_json::from_str(r#"{"k": [20, 50]}"#).unwrap();
        assert_eq!(cfg.k, vec![20, 50]);
        assert!(serde_json::from_str::<SimulationConfig>(r#"{"kk": 1}"#).is_err());
    }
}
