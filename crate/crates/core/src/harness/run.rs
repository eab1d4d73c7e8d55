use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::SeedableRng;

use super::checkpoint::Checkpoint;
use super::config::{AlgoKind, EnvConfig, EnvKind, ExperimentConfig};
use crate::agent::{AgentDims, Batch, Learner, MmqAgent, Transition, UpdateCounters};
use crate::baselines::DdpgAgent;
use crate::envs::{DifferentialGame, Environment, MpeEnv, MpeTaskSpec};
use crate::error::{Error, Result};
use crate::par;
use crate::SimRng;

pub const CSV_HEADER: &str = "seed,env_step,mean_return";
pub const DIAG_HEADER: &str = "env_step,mean_return,progress_metric,coverage,critic_loss,actor_loss,critic_updates,actor_updates";
pub const WORKERS_ENV: &str = "MMQ_WORKERS";

pub fn make_env(cfg: &EnvConfig) -> Result<Box<dyn Environment>> {
    Ok(match cfg.kind {
        EnvKind::Differential => Box::new(DifferentialGame::new(cfg.n_agents, cfg.noise)?),
        EnvKind::Particle(task) => Box::new(MpeEnv::new(MpeTaskSpec::new(task, cfg.n_agents)?)),
    })
}

/// Seed of agent `i` within run `seed`.
fn agent_seed(seed: u64, i: usize) -> u64 {
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(1000 * (i as u64 + 1))
}

fn eval_seed(seed: u64, step: u64) -> u64 {
    (seed ^ 0x5eed_e7a1).wrapping_mul(0x2545_f491_4f6c_dd1d).wrapping_add(step)
}

/// One learner per agent, each seeing the global state.
pub fn make_learners(cfg: &ExperimentConfig, env: &dyn Environment, seed: u64) -> Result<Vec<Box<dyn Learner>>> {
    let dims = AgentDims {
        state_dim: env.state_dim(),
        action_dim: env.action_dim(),
        state_box: env.state_bounds(),
    };
    (0..env.n_agents())
        .map(|i| -> Result<Box<dyn Learner>> {
            let s = agent_seed(seed, i);
            let p = cfg.algo.params.clone();
            Ok(match cfg.algo.kind {
                AlgoKind::Mmq => Box::new(MmqAgent::new(p, dims.clone(), s)?),
                AlgoKind::Iddpg => Box::new(DdpgAgent::new(p, &dims, None, cfg.algo.shift_baseline, s)?),
                AlgoKind::Hyddpg => Box::new(DdpgAgent::new(
                    p,
                    &dims,
                    Some(cfg.algo.hysteretic),
                    cfg.algo.shift_baseline,
                    s,
                )?),
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalOutcome {
    pub mean_return: f64,
    /// Mean task metric at the end of each episode, when the task has one.
    pub mean_metric: Option<f64>,
    /// Mean next-state coverage over agents on the evaluation transitions.
    pub coverage: Option<f64>,
}

/// Greedy rollouts with raw rewards. Evaluation transitions never enter a
/// replay buffer, so they serve as a held-out set for coverage.
pub fn evaluate(
    env: &mut dyn Environment,
    learners: &[Box<dyn Learner>],
    episodes: usize,
    rng: &mut SimRng,
) -> Result<EvalOutcome> {
    let mut total = 0.0;
    let mut metric_sum = 0.0;
    let mut has_metric = true;
    let mut held_out: Vec<Vec<Transition>> = vec![Vec::new(); learners.len()];
    for _ in 0..episodes.max(1) {
        let mut state = env.reset(rng);
        loop {
            let joint = learners
                .iter()
                .map(|l| l.act_greedy(&state))
                .collect::<Result<Vec<_>>>()?;
            let res = env.step(&joint, rng);
            total += res.reward;
            for (i, a) in joint.iter().enumerate() {
                held_out[i].push(Transition {
                    state: state.clone(),
                    action: a.clone(),
                    reward: res.reward,
                    next_state: res.next_state.clone(),
                });
            }
            state = res.next_state;
            if res.done {
                break;
            }
        }
        match env.progress_metric(&state) {
            Some(m) => metric_sum += m,
            None => has_metric = false,
        }
    }
    let n = episodes.max(1) as f64;
    let mut cov = Vec::new();
    for (l, ts) in learners.iter().zip(&held_out) {
        if let Some(c) = l.coverage_on(&Batch::from_transitions(ts))? {
            cov.push(c);
        }
    }
    Ok(EvalOutcome {
        mean_return: total / n,
        mean_metric: has_metric.then_some(metric_sum / n),
        coverage: (!cov.is_empty()).then(|| cov.iter().sum::<f64>() / cov.len() as f64),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalPoint {
    pub env_step: u64,
    pub mean_return: f64,
    pub metric: Option<f64>,
    pub coverage: Option<f64>,
    pub critic_loss: Option<f64>,
    pub actor_loss: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunRecord {
    pub seed: u64,
    pub env: String,
    pub algo: String,
    pub points: Vec<EvalPoint>,
    pub counters: Vec<UpdateCounters>,
    /// Set when the seed aborted on a numeric failure.
    pub failure: Option<String>,
}

impl RunRecord {
    pub fn final_point(&self) -> Option<&EvalPoint> {
        self.points.last()
    }
}

pub fn run_stem(env: &str, algo: &str, seed: u64) -> String {
    format!("{env}_{algo}_seed{seed}")
}

pub fn csv_path(dir: &Path, env: &str, algo: &str, seed: u64) -> PathBuf {
    dir.join(format!("{}.csv", run_stem(env, algo, seed)))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

struct RunningMean {
    sum: f64,
    n: usize,
}

impl RunningMean {
    fn take(&mut self) -> Option<f64> {
        let out = (self.n > 0).then(|| self.sum / self.n as f64);
        self.sum = 0.0;
        self.n = 0;
        out
    }
}

/// Trains and evaluates one seed, writing its CSV as it goes.
pub fn run_seed(cfg: &ExperimentConfig, seed: u64) -> Result<RunRecord> {
    let dir = &cfg.run.output_dir;
    fs::create_dir_all(dir)?;
    let env_name = cfg.env.kind.name();
    let algo_name = cfg.algo.kind.name();
    let stem = run_stem(env_name, algo_name, seed);
    let mut csv = BufWriter::new(File::create(csv_path(dir, env_name, algo_name, seed))?);
    let mut diag = BufWriter::new(File::create(dir.join(format!("{stem}_diag.csv")))?);
    writeln!(csv, "{CSV_HEADER}")?;
    writeln!(diag, "{DIAG_HEADER}")?;

    let mut env = make_env(&cfg.env)?;
    let mut eval_env = make_env(&cfg.env)?;
    let mut learners = make_learners(cfg, env.as_ref(), seed)?;
    let mut rng = SimRng::seed_from_u64(seed);
    let mut record = RunRecord {
        seed,
        env: env_name.to_string(),
        algo: algo_name.to_string(),
        points: Vec::new(),
        counters: Vec::new(),
        failure: None,
    };

    let mut critic = RunningMean { sum: 0.0, n: 0 };
    let mut actor = RunningMean { sum: 0.0, n: 0 };
    let mut state = env.reset(&mut rng);
    let outcome: Result<()> = (|| {
        for step in 1..=cfg.run.total_steps {
            let joint = learners
                .iter_mut()
                .map(|l| l.act(&state))
                .collect::<Result<Vec<_>>>()?;
            let res = env.step(&joint, &mut rng);
            for (l, a) in learners.iter_mut().zip(&joint) {
                if let Some(d) = l.observe(&state, a, res.reward, &res.next_state)? {
                    critic.sum += d.critic_loss;
                    critic.n += 1;
                    actor.sum += d.actor_loss;
                    actor.n += 1;
                }
            }
            state = if res.done { env.reset(&mut rng) } else { res.next_state };

            if step % cfg.run.eval_interval == 0 || step == cfg.run.total_steps {
                let mut eval_rng = SimRng::seed_from_u64(eval_seed(seed, step));
                let out = evaluate(eval_env.as_mut(), &learners, cfg.run.eval_episodes, &mut eval_rng)?;
                if !out.mean_return.is_finite() {
                    return Err(Error::NumericFailure(format!("non-finite evaluation return at step {step}")));
                }
                let point = EvalPoint {
                    env_step: step,
                    mean_return: out.mean_return,
                    metric: out.mean_metric,
                    coverage: out.coverage,
                    critic_loss: critic.take(),
                    actor_loss: actor.take(),
                };
                writeln!(csv, "{seed},{step},{}", point.mean_return)?;
                csv.flush()?;
                let counters: Vec<UpdateCounters> = learners.iter().map(|l| l.counters()).collect();
                writeln!(
                    diag,
                    "{step},{},{},{},{},{},{},{}",
                    point.mean_return,
                    opt(point.metric),
                    opt(point.coverage),
                    opt(point.critic_loss),
                    opt(point.actor_loss),
                    counters.iter().map(|c| c.critic_updates).sum::<u64>(),
                    counters.iter().map(|c| c.actor_updates).sum::<u64>(),
                )?;
                diag.flush()?;
                log::info!(
                    "{stem} step {step}: return {:.4}{}",
                    point.mean_return,
                    point.coverage.map(|c| format!(", coverage {c:.1}%")).unwrap_or_default()
                );
                record.points.push(point);
            }
        }
        Ok(())
    })();
    record.counters = learners.iter().map(|l| l.counters()).collect();
    match outcome {
        Ok(()) => {}
        Err(Error::NumericFailure(msg)) => {
            log::error!("{stem} aborted: {msg}");
            fs::write(dir.join(format!("{stem}_failure.txt")), format!("{msg}\n"))?;
            record.failure = Some(msg);
        }
        Err(e) => return Err(e),
    }
    if cfg.run.checkpoint && record.failure.is_none() {
        Checkpoint::from_learners(&learners).save(&dir.join("checkpoints").join(&stem))?;
    }
    Ok(record)
}

/// Worker count: `MMQ_WORKERS`, then `run.workers`, then one per seed.
pub fn worker_count(cfg: &ExperimentConfig) -> Result<usize> {
    if let Ok(v) = std::env::var(WORKERS_ENV) {
        return match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(Error::InvalidConfig(format!("{WORKERS_ENV} must be a positive integer, got `{v}`"))),
        };
    }
    Ok(cfg.run.workers.unwrap_or(cfg.run.seeds.len()).max(1))
}

/// Runs every seed (in parallel when enabled) and writes `summary.txt` when
/// at least two seeds finished.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<RunRecord>> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.run.output_dir)?;
    let workers = worker_count(cfg)?;
    let results = par::with_workers(workers, || par::map_slice(&cfg.run.seeds, |&s| run_seed(cfg, s)));
    let records = results.into_iter().collect::<Result<Vec<_>>>()?;
    let done: Vec<RunRecord> = records.iter().filter(|r| !r.points.is_empty()).cloned().collect();
    if done.len() >= 2 {
        let table = super::summary::summarize(&done)?;
        fs::write(cfg.run.output_dir.join("summary.txt"), table.to_string())?;
    }
    Ok(records)
}

/// Loads a checkpoint into freshly built learners and runs greedy episodes
/// on the first configured seed's evaluation stream.
pub fn evaluate_checkpoint(cfg: &ExperimentConfig, dir: &Path) -> Result<EvalOutcome> {
    let seed = cfg.run.seeds[0];
    let mut env = make_env(&cfg.env)?;
    let mut learners = make_learners(cfg, env.as_ref(), seed)?;
    Checkpoint::load(dir)?.apply(&mut learners)?;
    let mut rng = SimRng::seed_from_u64(eval_seed(seed, u64::MAX));
    evaluate(env.as_mut(), &learners, cfg.run.eval_episodes, &mut rng)
}
