//! Acceptance criteria. Each check prints one `criterion N PASS|FAIL` line.
//!
//! Criteria 1–5 and 10 run with the default test suite. The training
//! criteria need long runs and are ignored by default:
//!
//! ```text
//! cargo test --release -p mmq-core --test acceptance -- --ignored --nocapture
//! ```
//!
//! `dg_smoke_training_criteria` covers 6 (scaled variant), 8 and 9 in about
//! an hour on one core; `dg_full_scale` and `cn_more_penalty_contrast` take
//! CPU-hours.

mod common;

use std::path::Path;
use std::time::{Duration, Instant};

use common::gradcheck;
use mmq_core::baselines::{tabular_matrix_learn, MatrixLearnConfig, TabularRule};
use mmq_core::envs::{matrix_crossover, matrix_threshold_sweep, MatrixAction, PAYOFF};
use mmq_core::harness::{csv_path, final_window_mean, run_experiment, run_seed, ExperimentConfig, RunRecord};
use mmq_core::theory::{
    alignment_check, contraction_check, mc_min_distance_experiment, FiniteJointMdp, SubsetRule,
};
use mmq_core::SimRng;
use rand::{Rng, SeedableRng};
use tempfile::tempdir;

fn report(n: u32, name: &str, passed: bool, detail: &str) -> bool {
    println!("criterion {n} {} {name}: {detail}", if passed { "PASS" } else { "FAIL" });
    passed
}

fn within(elapsed: Duration, limit_secs: u64) -> bool {
    elapsed <= Duration::from_secs(limit_secs)
}

#[test]
fn c01_gradient_suite() {
    let start = Instant::now();
    let cases = [
        gradcheck::mse_cases(),
        gradcheck::pinball_cases(),
        gradcheck::gaussian_nll_cases(),
        gradcheck::critic_chain_cases(),
    ];
    let total = 4 * gradcheck::CASES_PER_HEAD;
    let failures: Vec<String> = cases.into_iter().flatten().collect();
    let t = start.elapsed();
    let ok = report(
        1,
        "gradient suite",
        failures.is_empty() && total >= 100 && within(t, 60),
        &format!("{total} cases, {} mismatches, {:.2}s", failures.len(), t.as_secs_f64()),
    );
    assert!(ok, "{}", failures.join("\n"));
}

#[test]
fn c02_min_distance_expectation() {
    let start = Instant::now();
    let mut rng = SimRng::seed_from_u64(2);
    let mut bad = Vec::new();
    for m in [1usize, 5, 15, 50] {
        for c in [0.0, 0.5, 0.9] {
            let e = mc_min_distance_experiment(1.0, c, m, 100_000, &mut rng).unwrap();
            // Recomputed here rather than trusting the estimate's own fields.
            let closed = (1.0 + f64::powi(c, m as i32 + 1)) / (m as f64 + 1.0);
            let bound = 2.0 / (m as f64 + 1.0);
            if !(e.mean < bound && (e.mean - closed).abs() <= 3.0 * e.std_err) {
                bad.push(format!("M={m} c={c}: mean {} closed {closed} se {}", e.mean, e.std_err));
            }
        }
    }
    let t = start.elapsed();
    let ok = report(
        2,
        "min-distance expectation",
        bad.is_empty() && within(t, 60),
        &format!("12 settings, {} off, {:.2}s", bad.len(), t.as_secs_f64()),
    );
    assert!(ok, "{}", bad.join("\n"));
}

#[test]
fn c03_contraction() {
    let start = Instant::now();
    let mut rng = SimRng::seed_from_u64(3);
    let gammas = [0.5, 0.9, 0.99];
    let mut worst_excess = f64::NEG_INFINITY;
    for i in 0..20 {
        let gamma = gammas[i % 3];
        let n = rng.random_range(2..=10);
        let mdp = FiniteJointMdp::random(n, [2, 2], gamma, &mut rng).unwrap();
        for agent in 0..2 {
            let rule = SubsetRule::random_subsets(&mdp, agent, &mut rng);
            let ratio = contraction_check(&mdp, agent, &rule, 100, &mut rng).unwrap();
            worst_excess = worst_excess.max(ratio - gamma);
        }
    }
    let t = start.elapsed();
    let ok = report(
        3,
        "contraction",
        worst_excess <= 1e-12 && within(t, 60),
        &format!("max(ratio − γ) = {worst_excess:.3e}, {:.2}s", t.as_secs_f64()),
    );
    assert!(ok);
}

#[test]
fn c04_alignment() {
    let start = Instant::now();
    let mut rng = SimRng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    for i in 0..20 {
        let gamma = [0.5, 0.9, 0.99][i % 3];
        let n = rng.random_range(2..=10);
        let mdp = FiniteJointMdp::random(n, [2, 2], gamma, &mut rng).unwrap();
        worst = worst.max(alignment_check(&mdp).unwrap().gap);
    }
    let t = start.elapsed();
    let ok = report(
        4,
        "alignment",
        worst <= 1e-8 && within(t, 120),
        &format!("max gap {worst:.3e}, {:.2}s", t.as_secs_f64()),
    );
    assert!(ok);
}

#[test]
fn c05_matrix_game() {
    let start = Instant::now();
    let crossover = matrix_crossover(&PAYOFF).unwrap();
    let sweep = matrix_threshold_sweep(&PAYOFF, 20).unwrap();
    // The crossing itself is solved exactly; the sweep row there only ties
    // up to rounding in the expected values.
    let at = sweep.iter().find(|r| r.p_a == crossover);
    let sweep_ok = crossover == 0.4 && at.is_some_and(|r| (r.q[0] - r.q[1]).abs() < 1e-12);

    let safe = |a: MatrixAction| a != MatrixAction::A;
    let mut average_safe = 0;
    let mut optimistic_opt = 0;
    for seed in 0..8 {
        let cfg = MatrixLearnConfig::uniform(TabularRule::Average, 5000);
        let r = tabular_matrix_learn(&cfg, &mut SimRng::seed_from_u64(seed)).unwrap();
        average_safe += usize::from(safe(r.greedy.0) && safe(r.greedy.1));
        let cfg = MatrixLearnConfig::uniform(TabularRule::OptimisticMax, 5000);
        let r = tabular_matrix_learn(&cfg, &mut SimRng::seed_from_u64(seed)).unwrap();
        optimistic_opt += usize::from(r.greedy_return() == 3.0);
    }
    let t = start.elapsed();
    let ok = report(
        5,
        "matrix game",
        sweep_ok && average_safe >= 7 && optimistic_opt == 8 && within(t, 10),
        &format!(
            "crossover {crossover}, average rule on {{B,C}} in {average_safe}/8, optimistic max on (A,A) in {optimistic_opt}/8, {:.2}s",
            t.as_secs_f64()
        ),
    );
    assert!(ok);
}

#[test]
fn c10_determinism() {
    let mut identical = true;
    for algo in ["mmq", "iddpg"] {
        let (a, b) = (tempdir().unwrap(), tempdir().unwrap());
        for dir in [a.path(), b.path()] {
            let cfg = ExperimentConfig::parse(&format!(
                "env.name = dg\nalgo.name = {algo}\nalgo.hidden = 32,32\nalgo.pretrain_steps = 1000\n\
                 run.total_steps = 3000\nrun.eval_interval = 1000\nrun.eval_episodes = 3\n\
                 run.output_dir = {}\n",
                dir.display()
            ))
            .unwrap();
            run_seed(&cfg, 5).unwrap();
        }
        let read = |d: &Path| std::fs::read(csv_path(d, "dg", algo, 5)).unwrap();
        identical &= read(a.path()) == read(b.path());
    }
    assert!(report(10, "determinism", identical, "re-run seed 5 for mmq and iddpg, CSVs compared byte for byte"));
}

// ---------------------------------------------------------------------------
// Training criteria.

fn dg_config(algo: &str, extra: &str, out: &Path) -> ExperimentConfig {
    ExperimentConfig::parse(&format!(
        "env.name = dg\nalgo.name = {algo}\n{extra}\nrun.eval_interval = 2000\nrun.eval_episodes = 10\n\
         run.output_dir = {}\n",
        out.display()
    ))
    .unwrap()
}

fn finals(records: &[RunRecord]) -> Vec<f64> {
    records
        .iter()
        .map(|r| {
            let returns: Vec<f64> = r.points.iter().map(|p| p.mean_return).collect();
            final_window_mean(&returns).unwrap_or(f64::NAN)
        })
        .collect()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn std_dev(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() as f64 - 1.0)).sqrt()
}

fn fmt(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.2}")).collect();
    format!("[{}]", parts.join(", "))
}

/// Optimal-region radius of the two-agent differential game.
const DG2_CENTRE: f64 = 0.13;

#[test]
#[ignore = "about an hour of training on one core"]
fn dg_smoke_training_criteria() {
    let dir = tempdir().unwrap();
    let smoke = "algo.hidden = 64,64\nrun.total_steps = 50000\nrun.seeds = 0..3";

    let start = Instant::now();
    let mmq = run_experiment(&dg_config("mmq", smoke, &dir.path().join("mmq"))).unwrap();
    let iddpg = run_experiment(&dg_config("iddpg", smoke, &dir.path().join("iddpg"))).unwrap();
    let pair_time = start.elapsed();
    let unshifted = format!("{smoke}\nalgo.reward_shift = 0");
    let mmq_c0 = run_experiment(&dg_config("mmq", &unshifted, &dir.path().join("mmq_c0"))).unwrap();

    let (m, i) = (finals(&mmq), finals(&iddpg));
    let centre: Vec<f64> = mmq
        .iter()
        .map(|r| r.final_point().and_then(|p| p.metric).unwrap_or(f64::NAN))
        .collect();
    let reached = centre.iter().filter(|l| **l < DG2_CENTRE).count();
    let c6 = report(
        6,
        "differential game, scaled smoke",
        mean(&m) > mean(&i) && 3 * reached >= 2 * mmq.len() && within(pair_time, 30 * 60),
        &format!(
            "mmq {} (mean {:.2}) vs iddpg {} (mean {:.2}); mmq final l {} reached centre {reached}/{}; {:.0}s",
            fmt(&m),
            mean(&m),
            fmt(&i),
            mean(&i),
            fmt(&centre),
            mmq.len(),
            pair_time.as_secs_f64()
        ),
    );

    let coverage_logged = mmq.iter().all(|r| r.points.iter().all(|p| p.coverage.is_some()));
    let cov: Vec<f64> = mmq
        .iter()
        .map(|r| {
            let c: Vec<f64> = r.points.iter().filter_map(|p| p.coverage).collect();
            final_window_mean(&c).unwrap_or(f64::NAN)
        })
        .collect();
    let c8 = report(
        8,
        "coverage statistic",
        coverage_logged && mean(&cov) >= 90.0,
        &format!("final coverage per seed {} (mean {:.1}%), logged at every eval: {coverage_logged}", fmt(&cov), mean(&cov)),
    );

    let z = finals(&mmq_c0);
    let c9 = report(
        9,
        "negative-shift ablation",
        mean(&m) >= mean(&z),
        &format!("c=2 {} (mean {:.2}) vs c=0 {} (mean {:.2})", fmt(&m), mean(&m), fmt(&z), mean(&z)),
    );
    assert!(c6 && c8 && c9);
}

#[test]
#[ignore = "several CPU-hours per algorithm"]
fn dg_full_scale() {
    let dir = tempdir().unwrap();
    let full = "run.total_steps = 500000\nrun.seeds = 0..8";
    let mmq = finals(&run_experiment(&dg_config("mmq", full, &dir.path().join("mmq"))).unwrap());
    let iddpg = finals(&run_experiment(&dg_config("iddpg", full, &dir.path().join("iddpg"))).unwrap());
    let trapped = iddpg.iter().filter(|r| **r < 16.0).count();
    let ok = report(
        6,
        "differential game, full scale",
        mean(&mmq) >= 18.0 && mean(&mmq) > mean(&iddpg) && trapped >= 1,
        &format!("mmq {} (mean {:.2}) vs iddpg {} (mean {:.2}), iddpg seeds below 16: {trapped}", fmt(&mmq), mean(&mmq), fmt(&iddpg), mean(&iddpg)),
    );
    assert!(ok);
}

#[test]
#[ignore = "many CPU-hours"]
fn cn_more_penalty_contrast() {
    let dir = tempdir().unwrap();
    let cfg = |algo: &str| {
        ExperimentConfig::parse(&format!(
            "env.name = cn_more_penalty\nalgo.name = {algo}\nrun.total_steps = 150000\nrun.seeds = 0..4\n\
             run.eval_interval = 5000\nrun.output_dir = {}\n",
            dir.path().join(algo).display()
        ))
        .unwrap()
    };
    let mmq = finals(&run_experiment(&cfg("mmq")).unwrap());
    let iddpg = finals(&run_experiment(&cfg("iddpg")).unwrap());
    let margin = mean(&mmq) - mean(&iddpg);
    let spread = std_dev(&mmq) + std_dev(&iddpg);
    let ok = report(
        7,
        "CN + more penalty contrast",
        margin > spread,
        &format!("mmq {} vs iddpg {}: margin {margin:.2}, sum of std devs {spread:.2}", fmt(&mmq), fmt(&iddpg)),
    );
    assert!(ok);
}
