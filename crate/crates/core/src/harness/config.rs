use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::agent::{Exploration, ForwardModelKind, MmqConfig};
use crate::baselines::HystereticConfig;
use crate::envs::{MpeTask, NoiseConfig};
use crate::error::{Error, Result};
use crate::nn::DimReduction;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EnvKind {
    Differential,
    Particle(MpeTask),
}

impl EnvKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "dg" => Ok(Self::Differential),
            other => MpeTask::parse(other).map(Self::Particle),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Differential => "dg",
            Self::Particle(t) => t.name(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnvConfig {
    pub kind: EnvKind,
    pub n_agents: usize,
    pub noise: NoiseConfig,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AlgoKind {
    Mmq,
    Iddpg,
    Hyddpg,
}

impl AlgoKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "mmq" => Ok(Self::Mmq),
            "iddpg" => Ok(Self::Iddpg),
            "hyddpg" => Ok(Self::Hyddpg),
            other => Err(Error::InvalidConfig(format!("unknown algorithm `{other}`"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Mmq => "mmq",
            Self::Iddpg => "iddpg",
            Self::Hyddpg => "hyddpg",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AlgoConfig {
    pub kind: AlgoKind,
    pub params: MmqConfig,
    pub hysteretic: HystereticConfig,
    /// Whether DDPG baselines also store shifted rewards.
    pub shift_baseline: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub total_steps: u64,
    pub eval_interval: u64,
    pub eval_episodes: usize,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    /// Parallel seed workers; `None` uses one per seed.
    pub workers: Option<usize>,
    pub checkpoint: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub env: EnvConfig,
    pub algo: AlgoConfig,
    pub run: RunConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            env: EnvConfig {
                kind: EnvKind::Differential,
                n_agents: 2,
                noise: NoiseConfig::default(),
            },
            algo: AlgoConfig {
                kind: AlgoKind::Mmq,
                params: MmqConfig::default(),
                hysteretic: HystereticConfig::default(),
                shift_baseline: false,
            },
            run: RunConfig {
                total_steps: 500_000,
                eval_interval: 2000,
                eval_episodes: 10,
                seeds: (0..8).collect(),
                output_dir: PathBuf::from("runs"),
                workers: None,
                checkpoint: false,
            },
        }
    }
}

/// Every accepted key, in the order `to_text` writes them.
pub const CONFIG_KEYS: &[&str] = &[
    "env.name",
    "env.n_agents",
    "env.sigma_s",
    "env.sigma_r",
    "algo.name",
    "algo.M",
    "algo.tau_l",
    "algo.tau_u",
    "algo.gamma",
    "algo.reward_shift",
    "algo.epsilon",
    "algo.exploration",
    "algo.exploration_std",
    "algo.pretrain_steps",
    "algo.critic_ratio",
    "algo.target_mix",
    "algo.batch_size",
    "algo.buffer_capacity",
    "algo.lr",
    "algo.hidden",
    "algo.forward_model",
    "algo.quantile_reduction",
    "algo.beta",
    "algo.shift_baseline",
    "run.total_steps",
    "run.eval_interval",
    "run.eval_episodes",
    "run.seeds",
    "run.output_dir",
    "run.workers",
    "run.checkpoint",
];

fn num<T: std::str::FromStr>(line: usize, key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::Parse {
        line,
        msg: format!("`{key}` expects a number, got `{v}`"),
    })
}

fn boolean(line: usize, key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Parse {
            line,
            msg: format!("`{key}` expects true/false, got `{v}`"),
        }),
    }
}

fn usize_list(line: usize, key: &str, v: &str) -> Result<Vec<usize>> {
    if v.is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|p| num(line, key, p.trim())).collect()
}

/// `a..b`, or a comma list.
fn seed_list(line: usize, v: &str) -> Result<Vec<u64>> {
    if let Some((a, b)) = v.split_once("..") {
        let (a, b): (u64, u64) = (num(line, "run.seeds", a.trim())?, num(line, "run.seeds", b.trim())?);
        return Ok((a..b).collect());
    }
    v.split(',').map(|p| num(line, "run.seeds", p.trim())).collect()
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut exploration_std = None;
        let mut gaussian = false;
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| Error::Parse {
                line,
                msg: format!("expected key=value, got `{content}`"),
            })?;
            let (key, v) = (key.trim(), value.trim());
            let p = &mut cfg.algo.params;
            match key {
                "env.name" => cfg.env.kind = EnvKind::parse(v).map_err(|e| Error::Parse { line, msg: e.to_string() })?,
                "env.n_agents" => cfg.env.n_agents = num(line, key, v)?,
                "env.sigma_s" => cfg.env.noise.sigma_s = num(line, key, v)?,
                "env.sigma_r" => cfg.env.noise.sigma_r = num(line, key, v)?,
                "algo.name" => cfg.algo.kind = AlgoKind::parse(v).map_err(|e| Error::Parse { line, msg: e.to_string() })?,
                "algo.M" => p.samples = num(line, key, v)?,
                "algo.tau_l" => p.tau_lower = num(line, key, v)?,
                "algo.tau_u" => p.tau_upper = num(line, key, v)?,
                "algo.gamma" => p.gamma = num(line, key, v)?,
                "algo.reward_shift" => p.reward_shift = num(line, key, v)?,
                "algo.epsilon" => p.epsilon = num(line, key, v)?,
                "algo.exploration" => {
                    gaussian = match v {
                        "uniform" => false,
                        "gaussian" => true,
                        _ => {
                            return Err(Error::Parse {
                                line,
                                msg: format!("exploration must be uniform or gaussian, got `{v}`"),
                            })
                        }
                    }
                }
                "algo.exploration_std" => exploration_std = Some(num(line, key, v)?),
                "algo.pretrain_steps" => p.pretrain_steps = num(line, key, v)?,
                "algo.critic_ratio" => p.critic_ratio = num(line, key, v)?,
                "algo.target_mix" => p.target_mix = num(line, key, v)?,
                "algo.batch_size" => p.batch_size = num(line, key, v)?,
                "algo.buffer_capacity" => p.buffer_capacity = num(line, key, v)?,
                "algo.lr" => p.lr = num(line, key, v)?,
                "algo.hidden" => p.hidden = usize_list(line, key, v)?,
                "algo.forward_model" => {
                    p.forward_model = ForwardModelKind::parse(v).map_err(|e| Error::Parse { line, msg: e.to_string() })?
                }
                "algo.quantile_reduction" => {
                    p.quantile_reduction = match v {
                        "mean" => DimReduction::Mean,
                        "sum" => DimReduction::Sum,
                        _ => {
                            return Err(Error::Parse {
                                line,
                                msg: format!("quantile_reduction must be mean or sum, got `{v}`"),
                            })
                        }
                    }
                }
                "algo.beta" => cfg.algo.hysteretic.beta = num(line, key, v)?,
                "algo.shift_baseline" => cfg.algo.shift_baseline = boolean(line, key, v)?,
                "run.total_steps" => cfg.run.total_steps = num(line, key, v)?,
                "run.eval_interval" => cfg.run.eval_interval = num(line, key, v)?,
                "run.eval_episodes" => cfg.run.eval_episodes = num(line, key, v)?,
                "run.seeds" => cfg.run.seeds = seed_list(line, v)?,
                "run.output_dir" => cfg.run.output_dir = PathBuf::from(v),
                "run.workers" => cfg.run.workers = Some(num(line, key, v)?),
                "run.checkpoint" => cfg.run.checkpoint = boolean(line, key, v)?,
                _ => {
                    return Err(Error::UnknownKey {
                        line,
                        key: key.to_string(),
                    })
                }
            }
        }
        if gaussian {
            cfg.algo.params.exploration = Exploration::Gaussian {
                std: exploration_std.unwrap_or(0.1),
            };
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.algo.params.validate()?;
        self.algo.hysteretic.validate()?;
        self.env.noise.validate()?;
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.env.n_agents == 0 {
            return bad("env.n_agents must be positive");
        }
        if self.run.total_steps == 0 || self.run.eval_interval == 0 || self.run.eval_episodes == 0 {
            return bad("run counts must be positive");
        }
        if self.run.seeds.is_empty() {
            return bad("at least one seed is required");
        }
        let mut s = self.run.seeds.clone();
        s.sort_unstable();
        s.dedup();
        if s.len() != self.run.seeds.len() {
            return bad("seeds must be distinct");
        }
        if self.run.workers == Some(0) {
            return bad("run.workers must be positive");
        }
        Ok(())
    }

    /// Text form accepted by [`ExperimentConfig::parse`].
    pub fn to_text(&self) -> String {
        let p = &self.algo.params;
        let list = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(out, "{k}={v}");
        };
        put("env.name", self.env.kind.name().into());
        put("env.n_agents", self.env.n_agents.to_string());
        put("env.sigma_s", self.env.noise.sigma_s.to_string());
        put("env.sigma_r", self.env.noise.sigma_r.to_string());
        put("algo.name", self.algo.kind.name().into());
        put("algo.M", p.samples.to_string());
        put("algo.tau_l", p.tau_lower.to_string());
        put("algo.tau_u", p.tau_upper.to_string());
        put("algo.gamma", p.gamma.to_string());
        put("algo.reward_shift", p.reward_shift.to_string());
        put("algo.epsilon", p.epsilon.to_string());
        match p.exploration {
            Exploration::Uniform => put("algo.exploration", "uniform".into()),
            Exploration::Gaussian { std } => {
                put("algo.exploration", "gaussian".into());
                put("algo.exploration_std", std.to_string());
            }
        }
        put("algo.pretrain_steps", p.pretrain_steps.to_string());
        put("algo.critic_ratio", p.critic_ratio.to_string());
        put("algo.target_mix", p.target_mix.to_string());
        put("algo.batch_size", p.batch_size.to_string());
        put("algo.buffer_capacity", p.buffer_capacity.to_string());
        put("algo.lr", p.lr.to_string());
        put("algo.hidden", list(&p.hidden));
        put("algo.forward_model", p.forward_model.name().into());
        put(
            "algo.quantile_reduction",
            match p.quantile_reduction {
                DimReduction::Mean => "mean",
                DimReduction::Sum => "sum",
            }
            .into(),
        );
        put("algo.beta", self.algo.hysteretic.beta.to_string());
        put("algo.shift_baseline", self.algo.shift_baseline.to_string());
        put("run.total_steps", self.run.total_steps.to_string());
        put("run.eval_interval", self.run.eval_interval.to_string());
        put("run.eval_episodes", self.run.eval_episodes.to_string());
        put(
            "run.seeds",
            self.run.seeds.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(","),
        );
        put("run.output_dir", self.run.output_dir.display().to_string());
        if let Some(w) = self.run.workers {
            put("run.workers", w.to_string());
        }
        put("run.checkpoint", self.run.checkpoint.to_string());
        out
    }
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    ExperimentConfig::parse(&std::fs::read_to_string(path)?)
}
