//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.
//!
//! `ACCEPTANCE_LONG=1` runs the limited-feedback criterion at full scale
//! (M = 5000 training vectors, 10000 trials).

use std::time::{Duration, Instant};

use blue_power::allocator::{
    b_given_lambda, brute_force_oracle, waterfill, OracleConfig, RootPath, SolverConfig,
};
use blue_power::codebook::{train, Codebook};
use blue_power::model::{ChannelRealization, NetworkRealization, SensorProfile};
use blue_power::par::{with_threads, Execution};
use blue_power::simkit::{
    build_training_set, cell_key, monte_carlo, train_codebook, write_csv, SimulationConfig,
    SweepOutput,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const MID_D0: f64 = 0.02;

struct Outcome {
    pass: bool,
    detail: String,
}

fn report(id: u32, name: &str, limit: Option<Duration>, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let mut out = f();
    let elapsed = start.elapsed();
    if let Some(limit) = limit {
        if elapsed > limit {
            out.pass = false;
            out.detail
                .push_str(&format!("; exceeded {:.0} s limit", limit.as_secs_f64()));
        }
    }
    println!(
        "[{}] {id}. {name}: {} ({:.2} s)",
        if out.pass { "PASS" } else { "FAIL" },
        out.detail,
        elapsed.as_secs_f64()
    );
    out.pass
}

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    (rng.random_range(lo.ln()..hi.ln())).exp()
}

/// Random heterogeneous network with a target between 5% and 95% of the
/// largest achievable `sum(b)`.
fn random_network(rng: &mut ChaCha8Rng, k: usize) -> NetworkRealization {
    let sigma_theta2 = log_uniform(rng, 0.1, 10.0);
    let mut sensors = Vec::with_capacity(k);
    let mut channels = Vec::with_capacity(k);
    let mut beta_sum = 0.0;
    for _ in 0..k {
        let beta = log_uniform(rng, 0.1, 100.0);
        let gamma = log_uniform(rng, 1e-3, 10.0);
        let sigma_o2 = log_uniform(rng, 0.01, 1.0);
        let sigma_c2 = log_uniform(rng, 1e-12, 1.0);
        sensors
            .push(SensorProfile::new((beta * sigma_o2 / sigma_theta2).sqrt(), sigma_o2).unwrap());
        channels.push(ChannelRealization::new((gamma * sigma_c2).sqrt(), sigma_c2).unwrap());
        beta_sum += beta;
    }
    let fill = rng.random_range(0.05..0.95);
    NetworkRealization::new(
        sensors,
        channels,
        sigma_theta2,
        sigma_theta2 / (fill * beta_sum),
    )
    .unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn kkt_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let solver = SolverConfig::default();
    let (mut worst_stat, mut worst_sum, mut worst_var) = (0.0f64, 0.0f64, 0.0f64);
    for n in 0..1000 {
        let net = random_network(&mut rng, 1 + n % 8);
        let a = waterfill(&net, &solver).unwrap();
        for (s, &b) in net.stats().iter().zip(&a.b) {
            if b > 0.0 {
                // d/db of (b (1 + beta) / ((beta - b) gamma))^2
                let grad = 2.0 * s.beta * b * (1.0 + s.beta).powi(2)
                    / ((s.beta - b).powi(3) * s.gamma * s.gamma);
                worst_stat = worst_stat.max(rel(grad, a.lambda0));
            }
        }
        worst_sum = worst_sum.max(rel(a.b.iter().sum(), net.sigma_theta2() / net.d0_target()));
        worst_var = worst_var.max(rel(a.variance, net.d0_target()));
    }
    Outcome {
        pass: worst_stat <= 1e-8 && worst_sum <= 1e-8 && worst_var <= 1e-6,
        detail: format!(
            "max stationarity {worst_stat:.2e}, max sum(b) {worst_sum:.2e}, max variance {worst_var:.2e} (relative)"
        ),
    }
}

fn oracle_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for n in 0..200 {
        let net = random_network(&mut rng, 1 + n % 4);
        let fast = waterfill(&net, &SolverConfig::default()).unwrap();
        let slow = brute_force_oracle(&net, &OracleConfig::default()).unwrap();
        worst = worst.max(rel(fast.cost_j, slow.cost_j));
    }
    Outcome {
        pass: worst <= 1e-3,
        detail: format!("max relative cost gap {worst:.2e} over 200 instances"),
    }
}

/// Root of `2 beta^3 delta^2 b = lambda0 (beta - b)^3` by bisection on the
/// polynomial.
fn cubic_root(beta: f64, delta: f64, lambda0: f64) -> f64 {
    let f = |b: f64| 2.0 * beta.powi(3) * delta * delta * b - lambda0 * (beta - b).powi(3);
    let (mut lo, mut hi) = (0.0, beta);
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            return mid;
        }
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
}

fn closed_form_validation() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let solver = SolverConfig::default();
    let mut worst = 0.0f64;
    let mut fallbacks = 0;
    for _ in 0..10_000 {
        let beta = log_uniform(&mut rng, 1e-2, 1e3);
        let delta = log_uniform(&mut rng, 1e-2, 1e3);
        let lambda0 = log_uniform(&mut rng, 1e-6, 1e6) * beta * delta * delta;
        let root = b_given_lambda(beta, delta, lambda0, &solver).unwrap();
        if root.path == RootPath::NumericFallback {
            fallbacks += 1;
        }
        worst = worst.max(rel(root.b, cubic_root(beta, delta, lambda0)));
    }
    Outcome {
        pass: worst <= 1e-9,
        detail: format!("max relative error {worst:.2e}, numeric fallback used {fallbacks} times"),
    }
}

fn csv_bytes(out: &SweepOutput) -> Vec<u8> {
    let mut buf = Vec::new();
    write_csv(&mut buf, &out.records).unwrap();
    buf
}

fn dominance_config() -> SimulationConfig {
    SimulationConfig {
        k: vec![50],
        d0_grid: vec![MID_D0],
        trials: 1000,
        seed: 4,
        ..Default::default()
    }
}

fn dominance(out: &SweepOutput) -> Outcome {
    let feasible: Vec<_> = out.records.iter().filter(|r| r.feasible).collect();
    let violations = feasible
        .iter()
        .filter(|r| r.cost_full.unwrap() > r.cost_equal.unwrap())
        .count();
    let cell = &out.summary[&cell_key(MID_D0, 50, None)];
    Outcome {
        pass: violations == 0 && !feasible.is_empty(),
        detail: format!(
            "{violations} of {} feasible trials violate; mean full {:.4e} W vs equal {:.4e} W",
            feasible.len(),
            cell.mean_cost_full.unwrap_or(f64::NAN),
            cell.mean_cost_equal.unwrap_or(f64::NAN)
        ),
    }
}

fn scaling_config() -> SimulationConfig {
    SimulationConfig {
        k: vec![20, 50, 100],
        d0_grid: vec![MID_D0],
        trials: 1000,
        seed: 5,
        redraw_layout: true,
        ..Default::default()
    }
}

fn scaling(out: &SweepOutput) -> Outcome {
    let cell = |k| &out.summary[&cell_key(MID_D0, k, None)];
    let stat = |k| {
        let c = cell(k);
        (
            c.mean_cost_full.unwrap_or(f64::NAN),
            c.se_cost_full.unwrap_or(f64::NAN),
        )
    };
    let (m20, s20) = stat(20);
    let (m50, s50) = stat(50);
    let (m100, s100) = stat(100);
    let gap_a = (m20 - m50) / (s20 * s20 + s50 * s50).sqrt();
    let gap_b = (m50 - m100) / (s50 * s50 + s100 * s100).sqrt();
    Outcome {
        pass: gap_a > 2.0 && gap_b > 2.0,
        detail: format!(
            "mean cost K=20 {m20:.4e}, K=50 {m50:.4e}, K=100 {m100:.4e} W; gaps {gap_a:.1} and {gap_b:.1} SE"
        ),
    }
}

fn lloyd_books(threads: Option<usize>) -> Vec<Codebook> {
    let cfg = SimulationConfig {
        k: vec![50],
        training_m: 1000,
        seed: 6,
        ..Default::default()
    };
    with_threads(threads, || {
        let (set, _) = build_training_set(&cfg, 50, MID_D0, Execution::Parallel).unwrap();
        [2, 4, 6]
            .iter()
            .map(|&bits| train(&set, bits, 1e-4, 6, Execution::Parallel).unwrap())
            .collect()
    })
}

fn lloyd_suite(books: &[Codebook]) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for book in books {
        let log = &book.meta.distortion_log;
        let monotone = log.windows(2).all(|w| w[1] <= w[0]);
        let last = log[log.len() - 2] - log[log.len() - 1];
        pass &= monotone && last <= 1e-4;
        parts.push(format!(
            "L={} D_B {:.4e} in {} iterations{}",
            book.bits(),
            book.meta.final_distortion,
            book.meta.iterations,
            if monotone { "" } else { " (log increased)" }
        ));
    }
    let d: Vec<f64> = books.iter().map(|b| b.meta.final_distortion).collect();
    pass &= d[2] < d[1] && d[1] < d[0];
    Outcome {
        pass,
        detail: parts.join(", "),
    }
}

struct FeedbackRun {
    full: SweepOutput,
    quantized: Vec<SweepOutput>,
}

fn feedback_run(threads: Option<usize>) -> FeedbackRun {
    let long = std::env::var_os("ACCEPTANCE_LONG").is_some();
    let cfg = SimulationConfig {
        k: vec![50],
        d0_grid: vec![MID_D0],
        trials: if long { 10_000 } else { 2_000 },
        training_m: 5_000,
        seed: 7,
        ..Default::default()
    };
    with_threads(threads, || {
        let full = monte_carlo(&cfg, None, Execution::Parallel).unwrap();
        let quantized = [2, 4, 6, 8]
            .iter()
            .map(|&bits| {
                let book = train_codebook(&cfg, 50, MID_D0, bits, Execution::Parallel).unwrap();
                monte_carlo(&cfg, Some(&book), Execution::Parallel).unwrap()
            })
            .collect();
        FeedbackRun { full, quantized }
    })
}

fn limited_feedback(run: &FeedbackRun) -> Outcome {
    let full = run.full.summary[&cell_key(MID_D0, 50, None)]
        .mean_cost_full
        .unwrap();
    let stats: Vec<(u32, f64, f64, f64)> = run
        .quantized
        .iter()
        .zip([2u32, 4, 6, 8])
        .map(|(out, l)| {
            let c = &out.summary[&cell_key(MID_D0, 50, Some(l))];
            (
                l,
                c.mean_cost_quantized.unwrap(),
                c.se_cost_quantized.unwrap(),
                c.mean_overshoot.unwrap(),
            )
        })
        .collect();
    let monotone = stats
        .windows(2)
        .all(|w| w[1].1 <= w[0].1 + 2.0 * (w[0].2 * w[0].2 + w[1].2 * w[1].2).sqrt());
    let gap = |m: f64| (m - full).abs() / full;
    let closer = gap(stats[3].1) < gap(stats[0].1);
    let cols: Vec<String> = stats
        .iter()
        .map(|(l, m, se, o)| {
            format!(
                "L={l} {m:.4e}±{se:.1e} (gap {:+.2}%, overshoot {:.1}%)",
                100.0 * (m - full) / full,
                100.0 * o
            )
        })
        .collect();
    Outcome {
        pass: monotone && closer,
        detail: format!(
            "full {full:.4e} W; {}; non-increasing within 2 SE: {monotone}; gap shrinks: {closer}",
            cols.join(", ")
        ),
    }
}

fn main() {
    let mut all = true;
    all &= report(1, "KKT suite", Some(Duration::from_secs(10)), kkt_suite);
    all &= report(
        2,
        "oracle equivalence",
        Some(Duration::from_secs(60)),
        oracle_equivalence,
    );
    all &= report(
        3,
        "closed-form validation",
        Some(Duration::from_secs(5)),
        closed_form_validation,
    );

    let mut dominance_out = None;
    all &= report(
        4,
        "dominance over equal power",
        Some(Duration::from_secs(30)),
        || {
            let out = with_threads(Some(4), || {
                monte_carlo(&dominance_config(), None, Execution::Parallel).unwrap()
            });
            let o = dominance(&out);
            dominance_out = Some(out);
            o
        },
    );
    let mut scaling_out = None;
    all &= report(5, "K-scaling", None, || {
        let out = with_threads(Some(4), || {
            monte_carlo(&scaling_config(), None, Execution::Parallel).unwrap()
        });
        let o = scaling(&out);
        scaling_out = Some(out);
        o
    });
    let mut books = Vec::new();
    all &= report(6, "Lloyd suite", None, || {
        books = lloyd_books(Some(4));
        lloyd_suite(&books)
    });
    let mut feedback = None;
    all &= report(
        7,
        "limited-feedback convergence",
        Some(Duration::from_secs(600)),
        || {
            let run = feedback_run(Some(4));
            let o = limited_feedback(&run);
            feedback = Some(run);
            o
        },
    );
    all &= report(8, "determinism across thread counts", None, || {
        let mut same = Vec::new();
        let a = with_threads(Some(1), || {
            monte_carlo(&dominance_config(), None, Execution::Parallel).unwrap()
        });
        same.push((
            "4",
            csv_bytes(&a) == csv_bytes(dominance_out.as_ref().unwrap()),
        ));
        let a = with_threads(Some(1), || {
            monte_carlo(&scaling_config(), None, Execution::Parallel).unwrap()
        });
        same.push((
            "5",
            csv_bytes(&a) == csv_bytes(scaling_out.as_ref().unwrap()),
        ));
        let a = lloyd_books(Some(1));
        same.push((
            "6",
            a.iter()
                .map(|b| b.to_json().unwrap())
                .eq(books.iter().map(|b| b.to_json().unwrap())),
        ));
        let a = feedback_run(Some(1));
        let b = feedback.as_ref().unwrap();
        same.push((
            "7",
            csv_bytes(&a.full) == csv_bytes(&b.full)
                && a.quantized
                    .iter()
                    .map(csv_bytes)
                    .eq(b.quantized.iter().map(csv_bytes)),
        ));
        let bad: Vec<&str> = same.iter().filter(|s| !s.1).map(|s| s.0).collect();
        Outcome {
            pass: bad.is_empty(),
            detail: if bad.is_empty() {
                "outputs of criteria 4-7 byte-identical with 1 and 4 threads".into()
            } else {
                format!("outputs differ for criteria {}", bad.join(", "))
            },
        }
    });
    if !all {
        std::process::exit(1);
    }
}
