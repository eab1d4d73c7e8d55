use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rand::SeedableRng;

use mmq_core::baselines::{tabular_matrix_learn, MatrixLearnConfig, TabularRule};
use mmq_core::envs::{matrix_crossover, matrix_threshold_sweep, PAYOFF};
use mmq_core::harness::{evaluate_checkpoint, load_config, run_experiment, summarize_dir};
use mmq_core::theory::{run_theory_suite, SuiteSize};
use mmq_core::SimRng;

const EXIT_USAGE: u8 = 64;
const EXIT_THEORY_FAILED: u8 = 2;

#[derive(Parser)]
#[command(name = "mmq", version, about = "MaxMax Q-learning experiments and checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train every configured seed and write CSVs and a summary.
    Train { config: PathBuf },
    /// Replay greedy episodes from a checkpoint directory.
    Eval { checkpoint: PathBuf, config: PathBuf },
    /// Run the theory checks; exits 2 if any fails.
    Theory {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Fewer trials, for a fast sanity pass.
        #[arg(long)]
        quick: bool,
    },
    /// Expected-value sweep and tabular learners on the coordination game.
    Matrix {
        #[arg(long, default_value_t = 20)]
        points: usize,
        #[arg(long, default_value_t = 5000)]
        episodes: usize,
        #[arg(long, default_value_t = 8)]
        seeds: u64,
    },
    /// Summarize the CSVs in a run directory.
    Summarize { dir: PathBuf },
}

fn run(cmd: Command) -> mmq_core::Result<ExitCode> {
    match cmd {
        Command::Train { config } => {
            let cfg = load_config(&config)?;
            let records = run_experiment(&cfg)?;
            for r in &records {
                match (&r.failure, r.final_point()) {
                    (Some(msg), _) => println!("seed {}: failed: {msg}", r.seed),
                    (None, Some(p)) => println!("seed {}: final return {:.4} at step {}", r.seed, p.mean_return, p.env_step),
                    (None, None) => println!("seed {}: no evaluation points", r.seed),
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Eval { checkpoint, config } => {
            let cfg = load_config(&config)?;
            let out = evaluate_checkpoint(&cfg, &checkpoint)?;
            println!("mean_return={}", out.mean_return);
            if let Some(m) = out.mean_metric {
                println!("mean_metric={m}");
            }
            if let Some(c) = out.coverage {
                println!("coverage={c}");
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Theory { seed, quick } => {
            let size = if quick {
                SuiteSize { mc_trials: 10_000, mdps: 6, pairs_per_mdp: 20 }
            } else {
                SuiteSize::default()
            };
            let report = run_theory_suite(seed, size)?;
            print!("{report}");
            Ok(if report.all_passed() { ExitCode::SUCCESS } else { ExitCode::from(EXIT_THEORY_FAILED) })
        }
        Command::Matrix { points, episodes, seeds } => {
            let crossover = matrix_crossover(&PAYOFF)?;
            println!("{:>6}  {:>8}  {:>8}  {:>8}  best", "p(A)", "Q(A)", "Q(B)", "Q(C)");
            for row in matrix_threshold_sweep(&PAYOFF, points)? {
                let mark = if (row.p_a - crossover).abs() < 1e-12 { "  <- crossover" } else { "" };
                println!(
                    "{:>6.3}  {:>8.3}  {:>8.3}  {:>8.3}  {:?}{mark}",
                    row.p_a, row.q[0], row.q[1], row.q[2], row.best
                );
            }
            println!("crossover p(A) = {crossover}");
            for rule in [TabularRule::Average, TabularRule::OptimisticMax] {
                let mut coordinated = 0;
                for seed in 0..seeds {
                    let mut rng = SimRng::seed_from_u64(seed);
                    let r = tabular_matrix_learn(&MatrixLearnConfig::uniform(rule, episodes), &mut rng)?;
                    println!(
                        "{} seed {seed}: greedy ({:?}, {:?}) return {}",
                        rule.name(),
                        r.greedy.0,
                        r.greedy.1,
                        r.greedy_return()
                    );
                    coordinated += usize::from(r.greedy_return() == 3.0);
                }
                println!("{}: optimal joint action in {coordinated}/{seeds} seeds", rule.name());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Summarize { dir } => {
            let table = summarize_dir(&dir)?;
            print!("{table}");
            println!();
            print!("{}", table.to_csv());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
