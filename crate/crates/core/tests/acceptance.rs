//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any fails.

use std::f64::consts::{LN_2, PI};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use erasefl::aggregation::SchemeKind;
use erasefl::analysis::{fluctuation_stats, le_cam_check, poisson_binomial_pmf, ErasureProfile};
use erasefl::channel::{
    blocklength, channel_dispersion, erasure_prob_long, outage_threshold, per_short, q_function, shannon_capacity,
    LinkBudget, Regime,
};
use erasefl::learning::{local_gradient, local_loss, Dataset, FeatureMap, LearnerConfig, ModelParams};
use erasefl::simulation::{run_experiment, run_monte_carlo, DatasetSpec, ExperimentConfig, MonteCarloResult};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

// ---------------------------------------------------------------------------
// Independent oracles

/// erf by its everywhere-positive series; accurate to ~1e-16 for z < 3.
fn erf_series(z: f64) -> f64 {
    let z2 = z * z;
    let mut term = z;
    let mut sum = z;
    let mut n = 0.0;
    while term > 1e-18 * sum {
        n += 1.0;
        term *= 2.0 * z2 / (2.0 * n + 1.0);
        sum += term;
    }
    2.0 / PI.sqrt() * (-z2).exp() * sum
}

/// erfc by its continued fraction, evaluated bottom-up; for z >= 3.
fn erfc_continued_fraction(z: f64) -> f64 {
    let mut f = z;
    for n in (1..=200).rev() {
        f = z + (n as f64 / 2.0) / f;
    }
    (-z * z).exp() / PI.sqrt() / f
}

fn q_oracle(x: f64) -> f64 {
    if x < 0.0 {
        return 1.0 - q_oracle(-x);
    }
    let z = x / 2f64.sqrt();
    let erfc = if z < 3.0 { 1.0 - erf_series(z) } else { erfc_continued_fraction(z) };
    0.5 * erfc
}

fn capacity_oracle(g: f64) -> f64 {
    (1.0 + g).ln() / LN_2
}

fn dispersion_oracle(g: f64) -> f64 {
    let log2e = 1.0 / LN_2;
    (1.0 - 1.0 / ((1.0 + g) * (1.0 + g))) * log2e * log2e
}

fn per_short_oracle(g: f64, k: u64, n: u64) -> f64 {
    let (k, n) = (k as f64, n as f64);
    q_oracle((n * capacity_oracle(g) - k + 0.5 * n.log2()) / (n * dispersion_oracle(g)).sqrt())
}

/// Success-count pmf by enumerating all `2^U` reception patterns.
fn enumerated_pmf(eps: &[f64]) -> Vec<f64> {
    let users = eps.len();
    let mut pmf = vec![0.0; users + 1];
    for pattern in 0u32..(1 << users) {
        let mut p = 1.0;
        for (u, e) in eps.iter().enumerate() {
            p *= if pattern & (1 << u) != 0 { 1.0 - e } else { *e };
        }
        pmf[pattern.count_ones() as usize] += p;
    }
    pmf
}

/// Least-squares optimum of the half-squared loss by the normal equations.
fn least_squares_loss(features: &FeatureMap, data: &[Dataset]) -> f64 {
    let d = features.dim();
    let mut a = vec![vec![0.0; d + 1]; d];
    let mut count = 0usize;
    for ds in data {
        for (x, y) in ds.samples() {
            let phi = features.features(x);
            for i in 0..d {
                for j in 0..d {
                    a[i][j] += phi[i] * phi[j];
                }
                a[i][d] += phi[i] * y;
            }
            count += 1;
        }
    }
    // Gaussian elimination with partial pivoting.
    for col in 0..d {
        let pivot = (col..d).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, pivot);
        let pivot_row = a[col].clone();
        for row in a.iter_mut().skip(col + 1) {
            let f = row[col] / pivot_row[col];
            for (v, p) in row.iter_mut().zip(&pivot_row).skip(col) {
                *v -= f * p;
            }
        }
    }
    let mut w = vec![0.0; d];
    for row in (0..d).rev() {
        let s: f64 = (row + 1..d).map(|k| a[row][k] * w[k]).sum();
        w[row] = (a[row][d] - s) / a[row][row];
    }
    let mut total = 0.0;
    for ds in data {
        for (x, y) in ds.samples() {
            let pred: f64 = features.features(x).iter().zip(&w).map(|(p, c)| p * c).sum();
            total += 0.5 * (y - pred) * (y - pred);
        }
    }
    total / count as f64
}

/// Largest eigenvalue of the pooled-loss Hessian `(1/N) sum phi phi^T`.
fn hessian_top_eigenvalue(features: &FeatureMap, data: &[Dataset]) -> f64 {
    let d = features.dim();
    let mut h = vec![vec![0.0; d]; d];
    let mut count = 0.0;
    for ds in data {
        for x in ds.xs() {
            let phi = features.features(*x);
            for i in 0..d {
                for j in 0..d {
                    h[i][j] += phi[i] * phi[j];
                }
            }
            count += 1.0;
        }
    }
    let mut v = vec![1.0; d];
    let mut lambda = 0.0;
    for _ in 0..10_000 {
        let hv: Vec<f64> = (0..d).map(|i| (0..d).map(|j| h[i][j] * v[j]).sum::<f64>() / count).collect();
        let norm = hv.iter().map(|x| x * x).sum::<f64>().sqrt();
        v = hv.iter().map(|x| x / norm).collect();
        if (norm - lambda).abs() < 1e-14 * norm {
            return norm;
        }
        lambda = norm;
    }
    lambda
}

// ---------------------------------------------------------------------------
// Experiment helpers

fn experiment(
    users: usize,
    local_iterations: usize,
    gamma0_db: f64,
    rate: f64,
    scheme: SchemeKind,
    replicas: usize,
) -> ExperimentConfig {
    let link = LinkBudget::from_db(gamma0_db, 100, rate, Regime::ShortPacket).unwrap();
    let mut cfg = ExperimentConfig::new(
        DatasetSpec::new(users, 100),
        LearnerConfig::new(0.05, local_iterations).unwrap(),
        scheme,
        link,
    );
    cfg.replicas = replicas;
    cfg.base_seed = 2024;
    cfg
}

/// Per-replica variance of the trailing window, averaged over replicas.
fn trailing_variance(result: &MonteCarloResult, window: usize) -> f64 {
    let n = result.replicas.len();
    (0..n).map(|r| fluctuation_stats(&result.mse_series(r), window).unwrap().variance).sum::<f64>() / n as f64
}

/// Rounds until the mean trajectory stays within 10% of its plateau, the
/// plateau being the mean of the trailing window.
fn rounds_to_plateau(mean_mse: &[f64], window: usize) -> usize {
    let plateau = mean_mse[mean_mse.len() - window..].iter().sum::<f64>() / window as f64;
    mean_mse.iter().rposition(|v| (v - plateau).abs() > 0.1 * plateau).map_or(0, |i| i + 1)
}

// ---------------------------------------------------------------------------
// Criteria

fn channel_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = [0.0f64; 4];
    for _ in 0..1000 {
        let g = 10f64.powf(rng.random_range(-2.0..3.0));
        let k: u64 = rng.random_range(20..=2000);
        let rate: f64 = rng.random_range(0.05..=1.0);
        let n = blocklength(k, rate).unwrap();
        let x: f64 = rng.random_range(-12.0..12.0);
        let errs = [
            (q_function(x) - q_oracle(x)).abs(),
            (shannon_capacity(g).unwrap() - capacity_oracle(g)).abs(),
            (channel_dispersion(g).unwrap() - dispersion_oracle(g)).abs(),
            (per_short(g, k, n).unwrap() - per_short_oracle(g, k, n)).abs(),
        ];
        for (w, e) in worst.iter_mut().zip(errs) {
            *w = w.max(e);
        }
    }
    let max = worst.iter().copied().fold(0.0, f64::max);
    outcome(
        max <= 1e-9,
        format!(
            "max abs err Q {:.1e}, C {:.1e}, V {:.1e}, per_short {:.1e} (tol 1e-9)",
            worst[0], worst[1], worst[2], worst[3]
        ),
    )
}

fn outage_consistency() -> Outcome {
    const DRAWS: usize = 1_000_000;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst_z = 0.0f64;
    for _ in 0..20 {
        let db: f64 = rng.random_range(-5.0..15.0);
        let rate: f64 = rng.random_range(0.1..=1.0);
        let link = LinkBudget::from_db(db, 100, rate, Regime::LongPacket).unwrap();
        let threshold = outage_threshold(rate).unwrap();
        let mut outages = 0usize;
        for _ in 0..DRAWS {
            if link.sample_fading(&mut rng).gamma < threshold {
                outages += 1;
            }
        }
        let p = erasure_prob_long(link.gamma0(), rate).unwrap();
        let se = (p * (1.0 - p) / DRAWS as f64).sqrt();
        let z = (outages as f64 / DRAWS as f64 - p).abs() / se;
        worst_z = worst_z.max(z);
    }
    outcome(worst_z <= 3.0, format!("worst deviation {worst_z:.2} standard errors over 20 points (tol 3)"))
}

fn le_cam_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut failures = 0;
    let mut dyadic_mismatch = 0;
    let mut worst_general = 0.0f64;
    let mut enumerated = 0;
    for i in 0..1000 {
        let users = rng.random_range(1..=15usize);
        let dyadic = i % 2 == 0;
        let eps: Vec<f64> = (0..users)
            .map(|_| if dyadic { rng.random_range(0..=16u32) as f64 / 16.0 } else { rng.random_range(0.0..=1.0) })
            .collect();
        let profile = ErasureProfile::new(eps.clone()).unwrap();
        if !le_cam_check(&profile).holds {
            failures += 1;
        }
        if users <= 12 {
            enumerated += 1;
            let dp = poisson_binomial_pmf(&profile);
            let exact = enumerated_pmf(&eps);
            if dyadic {
                if dp.mass() != exact.as_slice() {
                    dyadic_mismatch += 1;
                }
            } else {
                for (a, b) in dp.mass().iter().zip(&exact) {
                    worst_general = worst_general.max((a - b).abs());
                }
            }
        }
    }
    outcome(
        failures == 0 && dyadic_mismatch == 0 && worst_general <= 1e-12,
        format!(
            "{failures} bound violations in 1000 profiles; DP vs enumeration on {enumerated} profiles: \
             {dyadic_mismatch} dyadic mismatches, max general diff {worst_general:.1e}"
        ),
    )
}

fn scheme_reduction() -> Outcome {
    let schemes = [
        SchemeKind::ErrorFree,
        SchemeKind::NoMemory,
        SchemeKind::PerUserMemory,
        SchemeKind::global_memory_equal(3).unwrap(),
    ];
    let runs: Vec<Vec<u64>> = schemes
        .iter()
        .map(|s| {
            let mut cfg = experiment(10, 1, 3.0, 0.9, s.clone(), 1);
            cfg.max_rounds = Some(200);
            cfg.forced_erasure = Some(0.0);
            run_experiment(&cfg).unwrap().iter().map(|l| l.mse.to_bits()).collect()
        })
        .collect();
    let identical = runs.iter().all(|r| r == &runs[0]) && runs[0].len() == 200;
    outcome(identical, format!("4 schemes x 200 rounds, bitwise identical: {identical}"))
}

fn fig1_reproduction() -> Outcome {
    let run = |s: SchemeKind| {
        let mut cfg = experiment(3, 2, 3.0, 0.9, s, 100);
        cfg.max_rounds = Some(300);
        run_monte_carlo(&cfg).unwrap()
    };
    let ef = run(SchemeKind::ErrorFree);
    let nm = run(SchemeKind::NoMemory);
    let pu = run(SchemeKind::PerUserMemory);
    let gm = run(SchemeKind::global_memory_equal(2).unwrap());
    let (ef_f, nm_f, pu_f, gm_f) = (ef.final_mse_mean(), nm.final_mse_mean(), pu.final_mse_mean(), gm.final_mse_mean());
    let a = (pu_f - ef_f).abs() / ef_f;
    let (nm_v, pu_v) = (trailing_variance(&nm, 50), trailing_variance(&pu, 50));
    let b = nm_v / pu_v;
    let c = gm_f >= pu_f.min(nm_f) && gm_f <= pu_f.max(nm_f);
    outcome(
        a <= 0.1 && b >= 2.0 && c,
        format!(
            "(a) per-user vs error-free {:.2}% (tol 10%); (b) no-memory/per-user trailing var {b:.1}x (need 2x); \
             (c) m=2 final {gm_f:.6} within [{:.6}, {:.6}]: {c}",
            100.0 * a,
            pu_f.min(nm_f),
            pu_f.max(nm_f)
        ),
    )
}

fn rate_snr_tradeoff() -> Outcome {
    let final_mse = |db: f64, rate: f64| {
        let mut cfg = experiment(10, 1, db, rate, SchemeKind::PerUserMemory, 100);
        cfg.time_budget = Some(1500);
        run_monte_carlo(&cfg).unwrap().final_mse_mean()
    };
    let (hi5, hi9) = (final_mse(3.0, 0.5), final_mse(3.0, 0.9));
    let (lo5, lo9) = (final_mse(-3.0, 0.5), final_mse(-3.0, 0.9));
    outcome(
        hi9 < hi5 && lo5 < lo9,
        format!("3 dB: R=0.9 {hi9:.1} < R=0.5 {hi5:.1}; -3 dB: R=0.5 {lo5:.1} < R=0.9 {lo9:.1}"),
    )
}

fn memory_depth() -> Outcome {
    let run = |s: SchemeKind| {
        let mut cfg = experiment(10, 1, 3.0, 0.9, s, 100);
        cfg.max_rounds = Some(1000);
        run_monte_carlo(&cfg).unwrap()
    };
    let nm = run(SchemeKind::NoMemory);
    let pu = run(SchemeKind::PerUserMemory);
    let m1 = run(SchemeKind::global_memory_equal(1).unwrap());
    let m2 = run(SchemeKind::global_memory_equal(2).unwrap());
    let m4 = run(SchemeKind::global_memory_equal(4).unwrap());
    let (v1, vn) = (trailing_variance(&m1, 50), trailing_variance(&nm, 50));
    let (f1, fp) = (m1.final_mse_mean(), pu.final_mse_mean());
    let (s2, s4) = (rounds_to_plateau(&m2.mean_mse, 50), rounds_to_plateau(&m4.mean_mse, 50));
    outcome(
        v1 < vn && f1 > fp && s4 >= s2,
        format!(
            "trailing var m=1 {v1:.2e} < no-memory {vn:.2e}; final m=1 {f1:.7} > per-user {fp:.7}; \
             rounds to plateau m=4 {s4} >= m=2 {s2}"
        ),
    )
}

fn time_accounting() -> Outcome {
    let rounds = |rate: f64| {
        let mut cfg = experiment(3, 1, 3.0, rate, SchemeKind::PerUserMemory, 1);
        cfg.time_budget = Some(1500);
        cfg.rounds().unwrap()
    };
    let (r5, r9) = (rounds(0.5), rounds(0.9));
    outcome(
        r5 == 7 && r9 == 13 && r5 as u64 == 1500 / 200 && r9 as u64 == 1500 / 112,
        format!("R=0.5 -> {r5} rounds, R=0.9 -> {r9} rounds (expect 7, 13)"),
    )
}

fn optimizer_checks() -> Outcome {
    // Finite differences on random least-squares instances.
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst_rel = 0.0f64;
    for _ in 0..100 {
        let degree = rng.random_range(1..=4usize);
        let features = FeatureMap::normalized(degree, rng.random_range(-2.0..2.0), rng.random_range(0.5..3.0)).unwrap();
        let samples: Vec<(f64, f64)> =
            (0..rng.random_range(1..=40)).map(|_| (rng.random_range(-3.0..3.0), rng.random_range(-5.0..5.0))).collect();
        let data = Dataset::new(samples).unwrap();
        let omega = ModelParams::new((0..features.dim()).map(|_| rng.random_range(-2.0..2.0)).collect());
        let grad = local_gradient(&omega, &features, &data).unwrap();
        let h = 1e-6;
        let mut diff_sq = 0.0;
        for i in 0..features.dim() {
            let (mut plus, mut minus) = (omega.clone(), omega.clone());
            plus[i] += h;
            minus[i] -= h;
            let fd = (local_loss(&plus, &features, &data).unwrap() - local_loss(&minus, &features, &data).unwrap()) / (2.0 * h);
            diff_sq += (fd - grad[i]) * (fd - grad[i]);
        }
        let norm = grad.as_slice().iter().map(|g| g * g).sum::<f64>().sqrt();
        worst_rel = worst_rel.max(diff_sq.sqrt() / norm.max(1e-3));
    }

    // Error-free descent at the configured step and just under 2 / L.
    let base = experiment(10, 1, 3.0, 0.9, SchemeKind::ErrorFree, 1);
    let datasets = base.datasets().unwrap();
    let features = base.feature_map().unwrap();
    let threshold = 2.0 / hessian_top_eigenvalue(&features, &datasets);
    let optimum = least_squares_loss(&features, &datasets);
    let mut monotone = true;
    let mut plateau = f64::NAN;
    for eta in [0.05, 0.95 * threshold] {
        let mut cfg = base.clone();
        cfg.learner = LearnerConfig::new(eta, 1).unwrap();
        cfg.max_rounds = Some(400);
        let mse: Vec<f64> = run_experiment(&cfg).unwrap().iter().map(|l| l.mse).collect();
        monotone &= mse.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12));
        if eta == 0.05 {
            plateau = *mse.last().unwrap();
        }
    }
    let gap = (plateau - optimum) / optimum;
    outcome(
        worst_rel <= 1e-4 && monotone && 0.05 < threshold && gap.abs() <= 0.2,
        format!(
            "max FD rel err {worst_rel:.1e} (tol 1e-4); monotone descent at eta 0.05 and {:.3} (threshold {threshold:.3}): \
             {monotone}; plateau {plateau:.4} vs LS optimum {optimum:.4} ({:+.2}%)",
            0.95 * threshold,
            100.0 * gap
        ),
    )
}

fn main() -> ExitCode {
    type Criterion = (&'static str, Duration, fn() -> Outcome);
    let criteria: [Criterion; 9] = [
        ("channel math oracle", Duration::from_secs(1), channel_oracle),
        ("outage consistency", Duration::from_secs(10), outage_consistency),
        ("Le Cam suite", Duration::from_secs(10), le_cam_suite),
        ("scheme reduction", Duration::from_secs(5), scheme_reduction),
        ("memory comparison (U=3)", Duration::from_secs(60), fig1_reproduction),
        ("rate-SNR tradeoff", Duration::from_secs(120), rate_snr_tradeoff),
        ("memory depth (U=10)", Duration::from_secs(120), memory_depth),
        ("time accounting", Duration::from_secs(1), time_accounting),
        ("gradient and descent", Duration::from_secs(5), optimizer_checks),
    ];
    let mut failed = 0;
    for (i, (name, budget, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = check();
        let elapsed = start.elapsed();
        let in_time = elapsed <= *budget;
        let pass = result.pass && in_time;
        if !pass {
            failed += 1;
        }
        println!(
            "criterion {}: {} {name}: {} [{:.2}s, budget {}s{}]",
            i + 1,
            if pass { "PASS" } else { "FAIL" },
            result.detail,
            elapsed.as_secs_f64(),
            budget.as_secs(),
            if in_time { "" } else { ", over budget" }
        );
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE }
}
