//! Cooperative particle tasks with a solo-entry penalty.
//!
//! State layout: for each agent `[px, py, vx, vy]`, then `[x, y]` per
//! landmark (targets, or the prey in predator-prey), then a cargo flag for
//! the sequential task.

use rand::Rng;

use super::{clamp_action, EnvState, Environment, JointAction, StateBox, StepResult};
use crate::error::{invalid_config, shape, Result};
use crate::SimRng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MpeTask {
    /// Cooperative navigation, penalty 0.2.
    Cn,
    /// Cooperative navigation, penalty 0.5.
    MorePenalty,
    /// Two targets: A with the penalised rule, B penalty-free but worth less.
    Ht,
    /// Cooperative navigation with agents of different size and speed.
    Ha,
    /// Predators must enclose a scripted evader together.
    Pp,
    /// Picking up cargo at B raises the reward for entering A afterwards.
    Sequential,
}

impl MpeTask {
    pub fn parse(name: &str) -> Result<Self> {
        Ok(match name {
            "cn" => Self::Cn,
            "cn_more_penalty" | "more_penalty" => Self::MorePenalty,
            "cn_ht" | "ht" => Self::Ht,
            "cn_ha" | "ha" => Self::Ha,
            "pp" => Self::Pp,
            "sequential" => Self::Sequential,
            other => return Err(invalid_config(format!("unknown particle task `{other}`"))),
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Cn => "cn",
            Self::MorePenalty => "cn_more_penalty",
            Self::Ht => "cn_ht",
            Self::Ha => "cn_ha",
            Self::Pp => "pp",
            Self::Sequential => "sequential",
        }
    }

    pub fn landmarks(self) -> usize {
        match self {
            Self::Ht | Self::Sequential => 2,
            _ => 1,
        }
    }

    pub fn has_cargo(self) -> bool {
        self == Self::Sequential
    }

    pub fn episode_length(self) -> usize {
        if self == Self::Sequential {
            50
        } else {
            25
        }
    }

    fn penalty(self) -> f64 {
        match self {
            Self::Cn | Self::Ha => 0.2,
            Self::MorePenalty | Self::Pp | Self::Ht | Self::Sequential => 0.5,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MpePhysics {
    pub dt: f64,
    pub damping: f64,
    pub accel: f64,
    /// Half-width of the square arena.
    pub arena: f64,
    /// Prey speed relative to a predator's top speed.
    pub prey_speed_ratio: f64,
    pub wall_margin: f64,
}

impl Default for MpePhysics {
    fn default() -> Self {
        Self {
            dt: 0.1,
            damping: 0.25,
            accel: 5.0,
            arena: 1.5,
            prey_speed_ratio: 1.3,
            wall_margin: 0.1,
        }
    }
}

impl MpePhysics {
    /// Steady-state speed per unit of action along one axis.
    pub fn top_speed(&self, speed_mult: f64) -> f64 {
        self.accel * speed_mult * self.dt / self.damping
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MpeTaskSpec {
    pub task: MpeTask,
    pub n_agents: usize,
    /// Nominal agent radius.
    pub r_a: f64,
    pub r_t: f64,
    pub alpha: f64,
    /// Per-agent radius.
    pub radii: Vec<f64>,
    /// Per-agent acceleration multiplier.
    pub speed_mult: Vec<f64>,
    pub physics: MpePhysics,
}

impl MpeTaskSpec {
    pub fn new(task: MpeTask, n_agents: usize) -> Result<Self> {
        if n_agents < 2 {
            return Err(invalid_config(format!("particle tasks need at least 2 agents, got {n_agents}")));
        }
        if matches!(task, MpeTask::Ha | MpeTask::Ht | MpeTask::Sequential) && n_agents != 2 {
            return Err(invalid_config(format!("task `{}` is defined for 2 agents", task.name())));
        }
        let r_a = 0.15;
        let (radii, speed_mult) = if task == MpeTask::Ha {
            (vec![0.15, 0.20], vec![1.0, 0.7])
        } else {
            (vec![r_a; n_agents], vec![1.0; n_agents])
        };
        Ok(Self {
            task,
            n_agents,
            r_a,
            r_t: 0.05,
            alpha: if task == MpeTask::Pp { 0.3 } else { 0.2 },
            radii,
            speed_mult,
            physics: MpePhysics::default(),
        })
    }

    /// Radius of the scoring disk around a target.
    pub fn r_d(&self) -> f64 {
        self.r_t + self.alpha
    }

    pub fn state_dim(&self) -> usize {
        4 * self.n_agents + 2 * self.task.landmarks() + usize::from(self.task.has_cargo())
    }

    pub fn agent_pos(&self, state: &[f64], i: usize) -> [f64; 2] {
        [state[4 * i], state[4 * i + 1]]
    }

    pub fn landmark(&self, state: &[f64], k: usize) -> [f64; 2] {
        let base = 4 * self.n_agents + 2 * k;
        [state[base], state[base + 1]]
    }

    fn landmark_index(&self, k: usize) -> usize {
        4 * self.n_agents + 2 * k
    }

    pub fn cargo_index(&self) -> Option<usize> {
        self.task.has_cargo().then(|| self.state_dim() - 1)
    }

    /// `D_i ∩ D ≠ ∅`, tested on center distance.
    fn overlaps(&self, state: &[f64], i: usize, target: [f64; 2]) -> bool {
        dist(self.agent_pos(state, i), target) <= self.radii[i] + self.r_d()
    }

    fn count_inside(&self, state: &[f64], target: [f64; 2]) -> usize {
        (0..self.n_agents).filter(|&i| self.overlaps(state, i, target)).count()
    }

    fn min_dist(&self, state: &[f64], target: [f64; 2]) -> f64 {
        (0..self.n_agents)
            .map(|i| dist(self.agent_pos(state, i), target))
            .fold(f64::INFINITY, f64::min)
    }

    fn min_radius(&self) -> f64 {
        self.radii.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// All agents inside → `r_in`; none → `r_out`; otherwise `r_out − p`.
fn three_case(inside: usize, n: usize, r_in: f64, r_out: f64, p: f64) -> f64 {
    if inside == n {
        r_in
    } else if inside == 0 {
        r_out
    } else {
        r_out - p
    }
}

pub fn mpe_reward(state: &[f64], spec: &MpeTaskSpec) -> Result<f64> {
    if state.len() != spec.state_dim() {
        return Err(shape(format!(
            "state has {} entries, task `{}` expects {}",
            state.len(),
            spec.task.name(),
            spec.state_dim()
        )));
    }
    let n = spec.n_agents;
    let target = spec.landmark(state, 0);
    let inside = spec.count_inside(state, target);
    let reward = match spec.task {
        MpeTask::Cn | MpeTask::MorePenalty | MpeTask::Ha | MpeTask::Pp => {
            let r_in = -3.0 * spec.min_dist(state, target);
            let r_out = -3.0 * (spec.r_d() + spec.min_radius());
            three_case(inside, n, r_in, r_out, spec.task.penalty())
        }
        MpeTask::Ht => {
            let inside_b = spec.count_inside(state, spec.landmark(state, 1));
            if inside == n {
                0.0
            } else if inside_b == n {
                -2.5
            } else {
                three_case(inside, n, 0.0, -3.0, 0.5)
            }
        }
        MpeTask::Sequential => {
            let cargo = state[spec.cargo_index().unwrap()] > 0.5;
            let r_in = if cargo { -0.5 } else { -3.0 };
            three_case(inside, n, r_in, -6.0, 0.5)
        }
    };
    Ok(reward)
}

/// Unit direction for the scripted evader: straight away from the nearest
/// predator (lowest index on ties). Components that would push into a wall
/// within the margin are dropped; if nothing is left the prey slides along
/// the free axis direction that ends furthest from that predator.
pub fn pp_prey_policy(state: &[f64], spec: &MpeTaskSpec) -> [f64; 2] {
    let prey = spec.landmark(state, 0);
    let (mut nearest, mut best) = (0, f64::INFINITY);
    for i in 0..spec.n_agents {
        let d = dist(prey, spec.agent_pos(state, i));
        if d < best {
            best = d;
            nearest = i;
        }
    }
    let hunter = spec.agent_pos(state, nearest);
    let mut dir = if best > 1e-12 {
        [(prey[0] - hunter[0]) / best, (prey[1] - hunter[1]) / best]
    } else {
        [1.0, 0.0]
    };
    let edge = spec.physics.arena - spec.physics.wall_margin;
    let blocked = |p: f64, d: f64| (p >= edge && d > 0.0) || (p <= -edge && d < 0.0);
    for c in 0..2 {
        if blocked(prey[c], dir[c]) {
            dir[c] = 0.0;
        }
    }
    let norm = (dir[0] * dir[0] + dir[1] * dir[1]).sqrt();
    if norm > 1e-9 {
        return [dir[0] / norm, dir[1] / norm];
    }
    let step = spec.physics.top_speed(1.0) * spec.physics.prey_speed_ratio * spec.physics.dt;
    let mut choice = [0.0, 0.0];
    let mut far = f64::NEG_INFINITY;
    for cand in [[0.0, 1.0], [0.0, -1.0], [1.0, 0.0], [-1.0, 0.0]] {
        if blocked(prey[0], cand[0]) || blocked(prey[1], cand[1]) {
            continue;
        }
        let moved = [prey[0] + step * cand[0], prey[1] + step * cand[1]];
        let d = dist(moved, hunter);
        if d > far {
            far = d;
            choice = cand;
        }
    }
    choice
}

fn mpe_transition(state: &[f64], joint: &JointAction, spec: &MpeTaskSpec) -> EnvState {
    let ph = &spec.physics;
    let mut next = state.to_vec();
    for i in 0..spec.n_agents {
        let a = &joint[i];
        let accel = ph.accel * spec.speed_mult[i];
        for c in 0..2 {
            let act = clamp_action(a.get(c).copied().unwrap_or(0.0));
            let v = (1.0 - ph.damping) * state[4 * i + 2 + c] + act * accel * ph.dt;
            let x = state[4 * i + c] + v * ph.dt;
            let clamped = x.clamp(-ph.arena, ph.arena);
            next[4 * i + c] = clamped;
            next[4 * i + 2 + c] = if clamped == x { v } else { 0.0 };
        }
    }
    if spec.task == MpeTask::Pp {
        let dir = pp_prey_policy(state, spec);
        let speed = ph.top_speed(1.0) * ph.prey_speed_ratio;
        let base = spec.landmark_index(0);
        for c in 0..2 {
            next[base + c] = (state[base + c] + dir[c] * speed * ph.dt).clamp(-ph.arena, ph.arena);
        }
    }
    if let Some(ci) = spec.cargo_index() {
        let b = spec.landmark(&next, 1);
        if spec.count_inside(&next, b) == spec.n_agents {
            next[ci] = 1.0;
        }
    }
    next
}

#[derive(Clone, Debug)]
pub struct MpeEnv {
    spec: MpeTaskSpec,
    state: EnvState,
    t: usize,
}

impl MpeEnv {
    pub fn new(spec: MpeTaskSpec) -> Self {
        let dim = spec.state_dim();
        Self {
            spec,
            state: vec![0.0; dim],
            t: 0,
        }
    }

    pub fn spec(&self) -> &MpeTaskSpec {
        &self.spec
    }

    pub fn set_state(&mut self, state: EnvState) {
        self.state = state;
    }

    /// Landmarks uniform in `[-1, 1]²` (two-target tasks keep their scoring
    /// disks apart); agents uniform in the arena outside every scoring disk.
    pub fn sample_start(spec: &MpeTaskSpec, rng: &mut SimRng) -> EnvState {
        let mut s = vec![0.0; spec.state_dim()];
        let max_r = spec.radii.iter().copied().fold(0.0, f64::max);
        let mut landmarks: Vec<[f64; 2]> = Vec::new();
        while landmarks.len() < spec.task.landmarks() {
            let p = [rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0)];
            if landmarks.iter().all(|q| dist(p, *q) > 2.0 * (spec.r_d() + max_r)) {
                landmarks.push(p);
            }
        }
        for (k, p) in landmarks.iter().enumerate() {
            let base = spec.landmark_index(k);
            s[base] = p[0];
            s[base + 1] = p[1];
        }
        let arena = spec.physics.arena;
        for i in 0..spec.n_agents {
            loop {
                let p = [rng.random_range(-arena..=arena), rng.random_range(-arena..=arena)];
                if landmarks.iter().all(|q| dist(p, *q) > spec.radii[i] + spec.r_d()) {
                    s[4 * i] = p[0];
                    s[4 * i + 1] = p[1];
                    break;
                }
            }
        }
        s
    }
}

impl Environment for MpeEnv {
    fn name(&self) -> &str {
        self.spec.task.name()
    }

    fn n_agents(&self) -> usize {
        self.spec.n_agents
    }

    fn state_dim(&self) -> usize {
        self.spec.state_dim()
    }

    fn action_dim(&self) -> usize {
        2
    }

    fn episode_length(&self) -> usize {
        self.spec.task.episode_length()
    }

    fn state_bounds(&self) -> StateBox {
        let ph = &self.spec.physics;
        let mut b = StateBox::uniform(self.spec.state_dim(), -ph.arena, ph.arena);
        for i in 0..self.spec.n_agents {
            let v = ph.top_speed(self.spec.speed_mult[i]);
            for c in 2..4 {
                b.low[4 * i + c] = -v;
                b.high[4 * i + c] = v;
            }
        }
        if let Some(ci) = self.spec.cargo_index() {
            b.low[ci] = 0.0;
            b.high[ci] = 1.0;
        }
        b
    }

    fn reset(&mut self, rng: &mut SimRng) -> EnvState {
        self.t = 0;
        self.state = Self::sample_start(&self.spec, rng);
        self.state.clone()
    }

    fn step(&mut self, joint: &JointAction, _rng: &mut SimRng) -> StepResult {
        let next = mpe_transition(&self.state, joint, &self.spec);
        let reward = mpe_reward(&next, &self.spec).expect("state layout is maintained by the env");
        self.state = next.clone();
        self.t += 1;
        StepResult {
            next_state: next,
            reward,
            done: self.t >= self.episode_length(),
        }
    }
}
