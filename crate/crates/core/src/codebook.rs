//! Limited-feedback codebooks of squared-gain vectors, trained with a
//! generalized Lloyd iteration.
//!
//! The distortion between two gain vectors is the absolute difference of
//! their costs `J = ||P||_2`, so both the nearest-neighbor partition and the
//! centroid update reduce to comparisons of cached scalar costs. The full
//! vectors are only carried along as codeword payloads. Centroids are cell
//! medoids: the member whose cost is a median of the cell.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;

use crate::error::{Error, Result};
use crate::numeric::{compensated_sum, l2_norm};
use crate::par::{map_indexed, Execution};

/// `J(a) = ||a2 .* power_scale||_2`.
pub fn gain_cost(a2: &[f64], power_scale: &[f64]) -> f64 {
    let powers: Vec<f64> = a2.iter().zip(power_scale).map(|(a, s)| a * s).collect();
    l2_norm(&powers)
}

/// `|J(codeword) - J(target)|`.
pub fn word_distortion(codeword: &[f64], target: &[f64], power_scale: &[f64]) -> f64 {
    (gain_cost(codeword, power_scale) - gain_cost(target, power_scale)).abs()
}

/// Optimal squared-gain vectors for a fixed sensor layout, with their costs.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    vectors: Vec<Vec<f64>>,
    costs: Vec<f64>,
    power_scale: Vec<f64>,
}

impl TrainingSet {
    pub fn new(vectors: Vec<Vec<f64>>, power_scale: Vec<f64>) -> Result<Self> {
        let k = power_scale.len();
        for v in &vectors {
            if v.len() != k {
                return Err(Error::DimensionMismatch {
                    what: "training vector length",
                    got: v.len(),
                    expected: k,
                });
            }
        }
        let costs = vectors.iter().map(|v| gain_cost(v, &power_scale)).collect();
        Ok(TrainingSet {
            vectors,
            costs,
            power_scale,
        })
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn k(&self) -> usize {
        self.power_scale.len()
    }

    pub fn vectors(&self) -> &[Vec<f64>] {
        &self.vectors
    }

    pub fn costs(&self) -> &[f64] {
        &self.costs
    }

    pub fn power_scale(&self) -> &[f64] {
        &self.power_scale
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingMeta {
    pub m: usize,
    pub epsilon: f64,
    pub seed: u64,
    pub iterations: usize,
    pub final_distortion: f64,
    /// Book distortion of the initial codebook followed by one value per iteration.
    pub distortion_log: Vec<f64>,
    /// Variance target the training vectors were solved for.
    #[serde(default)]
    pub d0: Option<f64>,
    /// Training realizations dropped because their allocation was infeasible.
    #[serde(default)]
    pub skipped: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    bits: u32,
    entries: Vec<Vec<f64>>,
    power_scale: Vec<f64>,
    cost_cache: Vec<f64>,
    pub meta: TrainingMeta,
}

impl Codebook {
    pub fn new(
        bits: u32,
        entries: Vec<Vec<f64>>,
        power_scale: Vec<f64>,
        meta: TrainingMeta,
    ) -> Result<Self> {
        let rows = 1usize
            .checked_shl(bits)
            .filter(|_| bits < usize::BITS)
            .ok_or(Error::InvalidParameter {
                name: "bits",
                value: bits as f64,
                reason: "too many bits",
            })?;
        if entries.len() != rows {
            return Err(Error::DimensionMismatch {
                what: "codebook rows",
                got: entries.len(),
                expected: rows,
            });
        }
        let k = power_scale.len();
        for row in &entries {
            if row.len() != k {
                return Err(Error::DimensionMismatch {
                    what: "codeword length",
                    got: row.len(),
                    expected: k,
                });
            }
            if let Some(&bad) = row.iter().find(|x| !(**x >= 0.0 && x.is_finite())) {
                return Err(Error::InvalidParameter {
                    name: "entries",
                    value: bad,
                    reason: "squared gains must be finite and non-negative",
                });
            }
        }
        let cost_cache = entries.iter().map(|r| gain_cost(r, &power_scale)).collect();
        Ok(Codebook {
            bits,
            entries,
            power_scale,
            cost_cache,
            meta,
        })
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn k(&self) -> usize {
        self.power_scale.len()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[Vec<f64>] {
        &self.entries
    }

    pub fn entry(&self, index: usize) -> &[f64] {
        &self.entries[index]
    }

    pub fn costs(&self) -> &[f64] {
        &self.cost_cache
    }

    pub fn power_scale(&self) -> &[f64] {
        &self.power_scale
    }

    pub fn to_json(&self) -> Result<String> {
        let num = |x: f64| {
            RawValue::from_string(format!("{x:.16e}")).map_err(|e| Error::Format(e.to_string()))
        };
        let entries = self
            .entries
            .iter()
            .map(|row| row.iter().map(|&x| num(x)).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        let power_scale = self
            .power_scale
            .iter()
            .map(|&x| num(x))
            .collect::<Result<Vec<_>>>()?;
        let file = CodebookFileOut {
            bits: self.bits,
            k: self.k(),
            entries,
            power_scale,
            training_meta: &self.meta,
        };
        let mut s =
            serde_json::to_string_pretty(&file).map_err(|e| Error::Format(e.to_string()))?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: CodebookFileIn =
            serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
        if file.power_scale.len() != file.k {
            return Err(Error::DimensionMismatch {
                what: "power_scale length",
                got: file.power_scale.len(),
                expected: file.k,
            });
        }
        Codebook::new(
            file.bits,
            file.entries,
            file.power_scale,
            file.training_meta,
        )
    }
}

#[derive(Serialize)]
struct CodebookFileOut<'a> {
    bits: u32,
    k: usize,
    entries: Vec<Vec<Box<RawValue>>>,
    power_scale: Vec<Box<RawValue>>,
    training_meta: &'a TrainingMeta,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CodebookFileIn {
    bits: u32,
    k: usize,
    entries: Vec<Vec<f64>>,
    power_scale: Vec<f64>,
    training_meta: TrainingMeta,
}

/// Index of the codeword cost closest to `cost`; ties go to the lower index.
pub fn nearest_cost(code_costs: &[f64], cost: f64) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, &c) in code_costs.iter().enumerate() {
        let d = (c - cost).abs();
        if d < best_d {
            best = i;
            best_d = d;
        }
    }
    best
}

/// Nearest-neighbor partition of the training set.
pub fn assign_cells(
    book: &Codebook,
    training: &TrainingSet,
    exec: Execution,
) -> Result<Vec<usize>> {
    check_k(book, training)?;
    Ok(assign_costs(book.costs(), training.costs(), exec))
}

fn assign_costs(code_costs: &[f64], costs: &[f64], exec: Execution) -> Vec<usize> {
    map_indexed(costs.len(), exec, |i| nearest_cost(code_costs, costs[i]))
}

/// Medoid of a cell given as training indices in increasing order: the
/// lowest-index member whose cost lies in the median interval of the cell.
pub fn centroid(training: &TrainingSet, members: &[usize]) -> Result<usize> {
    if members.is_empty() {
        return Err(Error::EmptyCell);
    }
    let costs = training.costs();
    let mut js: Vec<f64> = members.iter().map(|&i| costs[i]).collect();
    js.sort_by(f64::total_cmp);
    let n = js.len();
    let (lo, hi) = if n % 2 == 1 {
        (js[n / 2], js[n / 2])
    } else {
        (js[n / 2 - 1], js[n / 2])
    };
    Ok(members
        .iter()
        .copied()
        .filter(|&i| costs[i] >= lo && costs[i] <= hi)
        .min()
        .expect("median interval contains a member"))
}

/// Mean over the training set of the distortion to the nearest codeword.
pub fn book_distortion(book: &Codebook, training: &TrainingSet, exec: Execution) -> Result<f64> {
    check_k(book, training)?;
    if training.is_empty() {
        return Err(Error::InvalidParameter {
            name: "training",
            value: 0.0,
            reason: "training set is empty",
        });
    }
    Ok(distortion_of_costs(book.costs(), training.costs(), exec))
}

fn distortion_of_costs(code_costs: &[f64], costs: &[f64], exec: Execution) -> f64 {
    let mins = map_indexed(costs.len(), exec, |i| {
        (code_costs[nearest_cost(code_costs, costs[i])] - costs[i]).abs()
    });
    compensated_sum(mins) / costs.len() as f64
}

/// Codeword index the fusion center would broadcast for an optimal allocation.
pub fn select_index(book: &Codebook, optimal_a2: &[f64]) -> Result<usize> {
    if optimal_a2.len() != book.k() {
        return Err(Error::DimensionMismatch {
            what: "allocation length",
            got: optimal_a2.len(),
            expected: book.k(),
        });
    }
    Ok(nearest_cost(
        book.costs(),
        gain_cost(optimal_a2, book.power_scale()),
    ))
}

/// Generalized Lloyd training.
///
/// Starts from `2^bits` distinct training vectors drawn uniformly with `seed`
/// and alternates partition and medoid updates until the book distortion
/// drops by no more than `epsilon` in one iteration. Empty cells are reseeded
/// with the training vectors farthest from the surviving codewords.
pub fn train(
    training: &TrainingSet,
    bits: u32,
    epsilon: f64,
    seed: u64,
    exec: Execution,
) -> Result<Codebook> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "epsilon",
            value: epsilon,
            reason: "must be positive",
        });
    }
    if bits >= 31 {
        return Err(Error::InvalidParameter {
            name: "bits",
            value: bits as f64,
            reason: "too many bits",
        });
    }
    let size = 1usize << bits;
    let m = training.len();
    if m < size {
        return Err(Error::TooFewTrainingVectors {
            m,
            needed: size,
            bits,
        });
    }
    let costs = training.costs();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut code: Vec<usize> = rand::seq::index::sample(&mut rng, m, size).into_vec();
    let code_costs = |code: &[usize]| code.iter().map(|&i| costs[i]).collect::<Vec<_>>();

    let mut new_cost = distortion_of_costs(&code_costs(&code), costs, exec);
    let mut log = vec![new_cost];
    let mut iterations = 0;
    loop {
        iterations += 1;
        let old_cost = new_cost;
        let current = code_costs(&code);
        let partition = assign_costs(&current, costs, exec);

        let mut cells: Vec<Vec<usize>> = vec![Vec::new(); size];
        for (i, &cell) in partition.iter().enumerate() {
            cells[cell].push(i);
        }
        let medoids = map_indexed(size, exec, |c| centroid(training, &cells[c]).ok());

        let mut next: Vec<Option<usize>> = medoids;
        // farthest-first reseeding of empty cells against the surviving medoids
        while let Some(slot) = next.iter().position(Option::is_none) {
            let kept: Vec<usize> = next.iter().flatten().copied().collect();
            let kept_costs = code_costs(&kept);
            let gaps = map_indexed(m, exec, |i| {
                if kept.contains(&i) {
                    f64::NEG_INFINITY
                } else if kept_costs.is_empty() {
                    0.0
                } else {
                    (kept_costs[nearest_cost(&kept_costs, costs[i])] - costs[i]).abs()
                }
            });
            let mut pick = 0;
            for i in 1..m {
                if gaps[i] > gaps[pick] {
                    pick = i;
                }
            }
            next[slot] = Some(pick);
        }
        code = next.into_iter().map(|c| c.expect("filled")).collect();

        new_cost = distortion_of_costs(&code_costs(&code), costs, exec);
        log.push(new_cost);
        if old_cost - new_cost <= epsilon {
            break;
        }
    }

    let entries = code
        .iter()
        .map(|&i| training.vectors()[i].clone())
        .collect();
    Codebook::new(
        bits,
        entries,
        training.power_scale().to_vec(),
        TrainingMeta {
            m,
            epsilon,
            seed,
            iterations,
            final_distortion: new_cost,
            distortion_log: log,
            d0: None,
            skipped: 0,
        },
    )
}

fn check_k(book: &Codebook, training: &TrainingSet) -> Result<()> {
    if book.k() != training.k() {
        return Err(Error::DimensionMismatch {
            what: "codebook K vs training K",
            got: book.k(),
            expected: training.k(),
        });
    }
    Ok(())
}
