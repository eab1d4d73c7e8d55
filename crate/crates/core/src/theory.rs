//! Executable checks of the MaxMax operator's theory on brute-forceable
//! finite MDPs: the nearest-sample distance bound, sup-norm contraction,
//! alignment of individual and joint optima, and degradation of the fixed
//! point when the best next state is perturbed.

use std::fmt;

use rand::{Rng, SeedableRng};

use crate::error::{Error, Result};
use crate::par;
use crate::SimRng;

const MC_CHUNK: usize = 4096;
const VI_MAX_SWEEPS: usize = 100_000;
const VI_TOL: f64 = 1e-13;

/// Monte-Carlo estimate of `E[min_k |c − X_k|]` for `X_k ~ U[−u, u]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub std_err: f64,
    pub trials: usize,
    /// `u/(M+1) · (1 + |c/u|^{M+1})`.
    pub closed_form: f64,
    /// `2u/(M+1)`.
    pub bound: f64,
}

impl McEstimate {
    pub fn below_bound(&self) -> bool {
        self.mean < self.bound
    }

    pub fn within_std_errs(&self, k: f64) -> bool {
        (self.mean - self.closed_form).abs() <= k * self.std_err
    }
}

pub fn min_distance_closed_form(u: f64, c: f64, m: usize) -> f64 {
    u / (m as f64 + 1.0) * (1.0 + (c.abs() / u).powi(m as i32 + 1))
}

pub fn mc_min_distance_experiment(u: f64, c: f64, m: usize, trials: usize, rng: &mut SimRng) -> Result<McEstimate> {
    if !(u > 0.0 && u.is_finite()) || !c.is_finite() || c.abs() > u || m == 0 || trials == 0 {
        return Err(Error::InvalidConfig(format!(
            "need u > 0, |c| ≤ u, M ≥ 1, trials ≥ 1 (got u={u}, c={c}, M={m}, trials={trials})"
        )));
    }
    let chunks = trials.div_ceil(MC_CHUNK);
    let seeds: Vec<u64> = (0..chunks).map(|_| rng.random()).collect();
    let partial = par::map_indexed(chunks, |i| {
        let mut r = SimRng::seed_from_u64(seeds[i]);
        let n = MC_CHUNK.min(trials - i * MC_CHUNK);
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let mut best = f64::INFINITY;
            for _ in 0..m {
                let x = r.random_range(-u..=u);
                best = best.min((c - x).abs());
            }
            s += best;
            s2 += best * best;
        }
        (s, s2)
    });
    let (s, s2) = partial.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0, a.1 + p.1));
    let n = trials as f64;
    let mean = s / n;
    let var = if trials > 1 { ((s2 - n * mean * mean) / (n - 1.0)).max(0.0) } else { 0.0 };
    Ok(McEstimate {
        mean,
        std_err: (var / n).sqrt(),
        trials,
        closed_form: min_distance_closed_form(u, c, m),
        bound: 2.0 * u / (m as f64 + 1.0),
    })
}

/// Deterministic two-agent MDP with reward `R(s, s')`.
#[derive(Clone, Debug, PartialEq)]
pub struct FiniteJointMdp {
    pub n_states: usize,
    pub n_actions: [usize; 2],
    /// `next[s][a1][a2]`.
    pub next: Vec<Vec<Vec<usize>>>,
    /// `reward[s][s']`.
    pub reward: Vec<Vec<f64>>,
    pub gamma: f64,
}

/// `Q[s][a]` for one agent, or `Q[s][a1·|A2| + a2]` for the joint table.
pub type QTable = Vec<Vec<f64>>;

impl FiniteJointMdp {
    pub fn new(next: Vec<Vec<Vec<usize>>>, reward: Vec<Vec<f64>>, gamma: f64) -> Result<Self> {
        let n = next.len();
        if n == 0 || next[0].is_empty() || next[0][0].is_empty() {
            return Err(Error::InvalidConfig("MDP needs at least one state and action".into()));
        }
        let n_actions = [next[0].len(), next[0][0].len()];
        if !(0.0..1.0).contains(&gamma) {
            return Err(Error::InvalidConfig(format!("gamma {gamma} outside [0, 1)")));
        }
        for row in &next {
            if row.len() != n_actions[0] || row.iter().any(|r| r.len() != n_actions[1] || r.iter().any(|s| *s >= n)) {
                return Err(Error::InvalidConfig("malformed transition table".into()));
            }
        }
        if reward.len() != n || reward.iter().any(|r| r.len() != n || r.iter().any(|v| !v.is_finite())) {
            return Err(Error::InvalidConfig("reward table must be finite and |S|×|S|".into()));
        }
        Ok(Self { n_states: n, n_actions, next, reward, gamma })
    }

    /// Uniformly random transitions and rewards in `[−1, 1]`.
    pub fn random(n_states: usize, n_actions: [usize; 2], gamma: f64, rng: &mut SimRng) -> Result<Self> {
        let next = (0..n_states)
            .map(|_| {
                (0..n_actions[0])
                    .map(|_| (0..n_actions[1]).map(|_| rng.random_range(0..n_states)).collect())
                    .collect()
            })
            .collect();
        let reward = (0..n_states)
            .map(|_| (0..n_states).map(|_| rng.random_range(-1.0..=1.0)).collect())
            .collect();
        Self::new(next, reward, gamma)
    }

    /// `S_{s,a_i}`: next states reachable by agent `agent` playing `a`,
    /// sorted and deduplicated.
    pub fn reachable(&self, agent: usize, s: usize, a: usize) -> Vec<usize> {
        let mut v: Vec<usize> = if agent == 0 {
            self.next[s][a].clone()
        } else {
            self.next[s].iter().map(|row| row[a]).collect()
        };
        v.sort_unstable();
        v.dedup();
        v
    }

    fn joint_width(&self) -> usize {
        self.n_actions[0] * self.n_actions[1]
    }

    /// Optimal joint action values by value iteration.
    pub fn joint_q_star(&self) -> Result<QTable> {
        let width = self.joint_width();
        let mut q = vec![vec![0.0; width]; self.n_states];
        let a2 = self.n_actions[1];
        iterate(&mut q, |q, s, j| {
            let sp = self.next[s][j / a2][j % a2];
            self.reward[s][sp] + self.gamma * row_max(&q[sp])
        })?;
        Ok(q)
    }
}

fn row_max(row: &[f64]) -> f64 {
    row.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
}

fn sup_norm_diff(a: &QTable, b: &QTable) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| x.iter().zip(y).map(|(p, q)| (p - q).abs()))
        .fold(0.0, f64::max)
}

/// Synchronous fixed-point iteration of `q[s][a] ← f(q, s, a)`.
fn iterate<F>(q: &mut QTable, f: F) -> Result<()>
where
    F: Fn(&QTable, usize, usize) -> f64,
{
    for _ in 0..VI_MAX_SWEEPS {
        let next: QTable = (0..q.len())
            .map(|s| (0..q[s].len()).map(|a| f(q, s, a)).collect())
            .collect();
        let delta = sup_norm_diff(&next, q);
        *q = next;
        let magnitude = q.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        if delta <= VI_TOL * (1.0 + magnitude) {
            return Ok(());
        }
    }
    Err(Error::NumericFailure(format!("value iteration did not converge in {VI_MAX_SWEEPS} sweeps")))
}

/// Candidate next-state set for each `(s, a_i)`.
#[derive(Clone, Debug, PartialEq)]
pub enum SubsetRule {
    /// Exactly `S_{s,a_i}`.
    Reachable,
    /// Explicit nonempty sets indexed `[s][a_i]`.
    Fixed(Vec<Vec<Vec<usize>>>),
}

impl SubsetRule {
    /// A random nonempty subset of `S_{s,a_i}` per pair.
    pub fn random_subsets(mdp: &FiniteJointMdp, agent: usize, rng: &mut SimRng) -> Self {
        let sets = (0..mdp.n_states)
            .map(|s| {
                (0..mdp.n_actions[agent])
                    .map(|a| {
                        let full = mdp.reachable(agent, s, a);
                        let keep: Vec<usize> = full.iter().copied().filter(|_| rng.random::<bool>()).collect();
                        if keep.is_empty() {
                            vec![full[rng.random_range(0..full.len())]]
                        } else {
                            keep
                        }
                    })
                    .collect()
            })
            .collect();
        Self::Fixed(sets)
    }

    fn set(&self, mdp: &FiniteJointMdp, agent: usize, s: usize, a: usize) -> Vec<usize> {
        match self {
            Self::Reachable => mdp.reachable(agent, s, a),
            Self::Fixed(sets) => sets[s][a].clone(),
        }
    }
}

/// `(T_Ŝ Q)(s, a_i) = max_{s' ∈ Ŝ(s, a_i)} [R(s, s') + γ max_a' Q(s', a')]`.
pub fn apply_operator(mdp: &FiniteJointMdp, agent: usize, subsets: &SubsetRule, q: &QTable) -> Result<QTable> {
    let mut out = vec![vec![0.0; mdp.n_actions[agent]]; mdp.n_states];
    for (s, row) in out.iter_mut().enumerate() {
        for (a, v) in row.iter_mut().enumerate() {
            let set = subsets.set(mdp, agent, s, a);
            if set.is_empty() {
                return Err(Error::InvalidArgument(format!("empty candidate set at ({s}, {a})")));
            }
            *v = set
                .iter()
                .map(|&sp| mdp.reward[s][sp] + mdp.gamma * row_max(&q[sp]))
                .fold(f64::NEG_INFINITY, f64::max);
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct OperatorResult {
    pub q1: QTable,
    pub q2: QTable,
    pub tq1: QTable,
    pub tq2: QTable,
    pub before: f64,
    pub after: f64,
}

impl OperatorResult {
    pub fn ratio(&self) -> Option<f64> {
        (self.before > 0.0).then(|| self.after / self.before)
    }
}

pub fn operator_pair(
    mdp: &FiniteJointMdp,
    agent: usize,
    subsets: &SubsetRule,
    q1: QTable,
    q2: QTable,
) -> Result<OperatorResult> {
    let tq1 = apply_operator(mdp, agent, subsets, &q1)?;
    let tq2 = apply_operator(mdp, agent, subsets, &q2)?;
    Ok(OperatorResult {
        before: sup_norm_diff(&q1, &q2),
        after: sup_norm_diff(&tq1, &tq2),
        q1,
        q2,
        tq1,
        tq2,
    })
}

/// Largest observed `‖TQ₁ − TQ₂‖∞ / ‖Q₁ − Q₂‖∞` over random table pairs;
/// pairs at distance zero are skipped.
pub fn contraction_check(
    mdp: &FiniteJointMdp,
    agent: usize,
    subsets: &SubsetRule,
    trials: usize,
    rng: &mut SimRng,
) -> Result<f64> {
    let mut worst: f64 = 0.0;
    let na = mdp.n_actions[agent];
    for _ in 0..trials {
        let scale = 10f64.powf(rng.random_range(-1.0..2.0));
        let mut table = || -> QTable {
            (0..mdp.n_states)
                .map(|_| (0..na).map(|_| rng.random_range(-scale..=scale)).collect())
                .collect()
        };
        let q1 = table();
        let q2 = table();
        if let Some(r) = operator_pair(mdp, agent, subsets, q1, q2)?.ratio() {
            worst = worst.max(r);
        }
    }
    Ok(worst)
}

/// Fixed point of `T_Ŝ` for one agent.
pub fn individual_fixed_point(mdp: &FiniteJointMdp, agent: usize, subsets: &SubsetRule) -> Result<QTable> {
    let sets: Vec<Vec<Vec<usize>>> = (0..mdp.n_states)
        .map(|s| (0..mdp.n_actions[agent]).map(|a| subsets.set(mdp, agent, s, a)).collect())
        .collect();
    if sets.iter().flatten().any(|v| v.is_empty()) {
        return Err(Error::InvalidArgument("empty candidate set".into()));
    }
    let mut q = vec![vec![0.0; mdp.n_actions[agent]]; mdp.n_states];
    iterate(&mut q, |q, s, a| {
        sets[s][a]
            .iter()
            .map(|&sp| mdp.reward[s][sp] + mdp.gamma * row_max(&q[sp]))
            .fold(f64::NEG_INFINITY, f64::max)
    })?;
    Ok(q)
}

#[derive(Clone, Debug, PartialEq)]
pub struct AlignmentResult {
    pub joint: QTable,
    pub individual: [QTable; 2],
    /// `max_s |max_{a_i} Q_i(s, ·) − max_a Q*(s, ·)|` over both agents.
    pub gap: f64,
}

pub fn alignment_check(mdp: &FiniteJointMdp) -> Result<AlignmentResult> {
    let joint = mdp.joint_q_star()?;
    let q0 = individual_fixed_point(mdp, 0, &SubsetRule::Reachable)?;
    let q1 = individual_fixed_point(mdp, 1, &SubsetRule::Reachable)?;
    let mut gap: f64 = 0.0;
    for s in 0..mdp.n_states {
        let v = row_max(&joint[s]);
        gap = gap.max((row_max(&q0[s]) - v).abs()).max((row_max(&q1[s]) - v).abs());
    }
    Ok(AlignmentResult { joint, individual: [q0, q1], gap })
}

/// Best next state under the ideal individual values; first index on ties.
fn ideal_next(mdp: &FiniteJointMdp, agent: usize, ideal: &QTable, s: usize, a: usize) -> usize {
    let mut best = None::<(usize, f64)>;
    for sp in mdp.reachable(agent, s, a) {
        let v = mdp.reward[s][sp] + mdp.gamma * row_max(&ideal[sp]);
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((sp, v));
        }
    }
    best.expect("reachable set is nonempty").0
}

/// Fixed point when the selected next state may be replaced by any
/// reachable state within line distance `eps` of the ideal one, chosen
/// adversarially.
pub fn perturbed_fixed_point(mdp: &FiniteJointMdp, agent: usize, eps: f64) -> Result<QTable> {
    let ideal = individual_fixed_point(mdp, agent, &SubsetRule::Reachable)?;
    let sets: Vec<Vec<Vec<usize>>> = (0..mdp.n_states)
        .map(|s| {
            (0..mdp.n_actions[agent])
                .map(|a| {
                    let star = ideal_next(mdp, agent, &ideal, s, a);
                    mdp.reachable(agent, s, a)
                        .into_iter()
                        .filter(|sp| (*sp as f64 - star as f64).abs() <= eps)
                        .collect()
                })
                .collect()
        })
        .collect();
    let mut q = vec![vec![0.0; mdp.n_actions[agent]]; mdp.n_states];
    iterate(&mut q, |q, s, a| {
        sets[s][a]
            .iter()
            .map(|&sp| mdp.reward[s][sp] + mdp.gamma * row_max(&q[sp]))
            .fold(f64::INFINITY, f64::min)
    })?;
    Ok(q)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpsilonGapPoint {
    pub epsilon: f64,
    pub gap: f64,
}

/// Sup-norm gap between the ideal and perturbed fixed points for each `ε`.
pub fn epsilon_gap_experiment(mdp: &FiniteJointMdp, agent: usize, schedule: &[f64]) -> Result<Vec<EpsilonGapPoint>> {
    if schedule.iter().any(|e| !(*e >= 0.0 && e.is_finite())) {
        return Err(Error::InvalidArgument("epsilons must be finite and nonnegative".into()));
    }
    let ideal = individual_fixed_point(mdp, agent, &SubsetRule::Reachable)?;
    schedule
        .iter()
        .map(|&epsilon| {
            let q = perturbed_fixed_point(mdp, agent, epsilon)?;
            Ok(EpsilonGapPoint { epsilon, gap: sup_norm_diff(&ideal, &q) })
        })
        .collect()
}

/// True when the gap never grows as `ε` shrinks.
pub fn gap_is_monotone(points: &[EpsilonGapPoint]) -> bool {
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| a.epsilon.total_cmp(&b.epsilon));
    sorted.windows(2).all(|w| w[0].gap <= w[1].gap + 1e-12)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TheoryCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TheoryReport {
    pub checks: Vec<TheoryCheck>,
}

impl TheoryReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    fn push(&mut self, name: &str, passed: bool, detail: String) {
        self.checks.push(TheoryCheck { name: name.to_string(), passed, detail });
    }
}

impl fmt::Display for TheoryReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(f, "{} {} {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail)?;
        }
        Ok(())
    }
}

/// Sizes for [`run_theory_suite`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SuiteSize {
    pub mc_trials: usize,
    pub mdps: usize,
    pub pairs_per_mdp: usize,
}

impl Default for SuiteSize {
    fn default() -> Self {
        Self { mc_trials: 100_000, mdps: 20, pairs_per_mdp: 100 }
    }
}

pub fn run_theory_suite(seed: u64, size: SuiteSize) -> Result<TheoryReport> {
    let mut rng = SimRng::seed_from_u64(seed);
    let mut report = TheoryReport::default();

    for m in [1usize, 5, 15, 50] {
        for c in [0.0, 0.5, 0.9] {
            let e = mc_min_distance_experiment(1.0, c, m, size.mc_trials, &mut rng)?;
            report.push(
                &format!("min_distance[M={m},c={c}]"),
                e.below_bound() && e.within_std_errs(3.0),
                format!(
                    "mean={:.6} se={:.2e} closed_form={:.6} bound={:.6}",
                    e.mean, e.std_err, e.closed_form, e.bound
                ),
            );
        }
    }

    let gammas = [0.5, 0.9, 0.99];
    let mut worst_ratio = vec![0.0f64; gammas.len()];
    let mut worst_gap: f64 = 0.0;
    let mut monotone = true;
    let mut zero_at_zero = true;
    for i in 0..size.mdps {
        let g = gammas[i % gammas.len()];
        let n = rng.random_range(2..=10);
        let mdp = FiniteJointMdp::random(n, [2, 2], g, &mut rng)?;
        for agent in 0..2 {
            let rule = SubsetRule::random_subsets(&mdp, agent, &mut rng);
            let r = contraction_check(&mdp, agent, &rule, size.pairs_per_mdp, &mut rng)?;
            let slot = &mut worst_ratio[i % gammas.len()];
            *slot = slot.max(r);
        }
        worst_gap = worst_gap.max(alignment_check(&mdp)?.gap);
        let pts = epsilon_gap_experiment(&mdp, 0, &[8.0, 4.0, 2.0, 1.0, 0.5, 0.0])?;
        monotone &= gap_is_monotone(&pts);
        zero_at_zero &= pts.last().is_some_and(|p| p.gap <= 1e-9);
    }
    for (g, r) in gammas.iter().zip(&worst_ratio) {
        report.push(
            &format!("contraction[gamma={g}]"),
            *r <= g + 1e-12,
            format!("max_ratio={r:.12}"),
        );
    }
    report.push("alignment", worst_gap <= 1e-8, format!("max_gap={worst_gap:.3e}"));
    report.push(
        "epsilon_gap",
        monotone && zero_at_zero,
        format!("monotone={monotone} zero_at_zero={zero_at_zero}"),
    );
    Ok(report)
}
