use crate::error::{invalid_config, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MatrixAction {
    A,
    B,
    C,
}

impl MatrixAction {
    pub const ALL: [MatrixAction; 3] = [MatrixAction::A, MatrixAction::B, MatrixAction::C];

    pub fn from_index(i: usize) -> Result<Self> {
        Self::ALL
            .get(i)
            .copied()
            .ok_or_else(|| invalid_config(format!("matrix action index {i} out of range 0..3")))
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Coordination game: `(A, A)` pays +3, a lone `A` pays −6, anything among
/// `{B, C}` pays 0.
pub const PAYOFF: [[f64; 3]; 3] = [[3.0, -6.0, -6.0], [-6.0, 0.0, 0.0], [-6.0, 0.0, 0.0]];

pub fn matrix_payoff(a1: MatrixAction, a2: MatrixAction) -> f64 {
    PAYOFF[a1.index()][a2.index()]
}

/// Expected payoff of each own action against a fixed mixed strategy of the
/// other agent: `Q(a) = Σ_b payoff[a][b] · π(b)`.
pub fn matrix_expected_q(payoff: &[[f64; 3]; 3], pi_other: &[f64; 3]) -> Result<[f64; 3]> {
    let total: f64 = pi_other.iter().sum();
    if (total - 1.0).abs() > 1e-9 || pi_other.iter().any(|p| *p < 0.0) {
        return Err(invalid_config(format!(
            "opponent strategy must be a distribution, got {pi_other:?}"
        )));
    }
    let mut q = [0.0; 3];
    for (a, row) in payoff.iter().enumerate() {
        q[a] = row.iter().zip(pi_other).map(|(r, p)| r * p).sum();
    }
    Ok(q)
}

/// Opponent strategy placing `p` on A and splitting the rest evenly.
pub fn opponent_mix(p: f64) -> [f64; 3] {
    [p, (1.0 - p) / 2.0, (1.0 - p) / 2.0]
}

/// One row of the expected-value sweep over the opponent's weight on A.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepRow {
    pub p_a: f64,
    pub q: [f64; 3],
    pub best: MatrixAction,
}

/// Expected values at `p_a = k / points` for `k = 0..=points`.
pub fn matrix_threshold_sweep(payoff: &[[f64; 3]; 3], points: usize) -> Result<Vec<SweepRow>> {
    if points == 0 {
        return Err(invalid_config("sweep needs at least one interval"));
    }
    (0..=points)
        .map(|k| {
            let p_a = k as f64 / points as f64;
            let q = matrix_expected_q(payoff, &opponent_mix(p_a))?;
            let mut best = 0;
            for i in 1..3 {
                if q[i] > q[best] {
                    best = i;
                }
            }
            Ok(SweepRow { p_a, q, best: MatrixAction::ALL[best] })
        })
        .collect()
}

/// Opponent weight on A above which A's expected value beats B's. Both are
/// affine in `p`, so the crossing is solved directly.
pub fn matrix_crossover(payoff: &[[f64; 3]; 3]) -> Result<f64> {
    let line = |a: usize| {
        let at0 = (payoff[a][1] + payoff[a][2]) / 2.0;
        (payoff[a][0] - at0, at0)
    };
    let (sa, ia) = line(0);
    let (sb, ib) = line(1);
    if sa == sb {
        return Err(invalid_config("expected values of A and B never cross"));
    }
    Ok((ib - ia) / (sa - sb))
}
