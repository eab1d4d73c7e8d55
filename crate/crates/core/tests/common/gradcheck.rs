//! Finite-difference checks of every loss head.

use mmq_core::nn::{DimReduction, FeedForwardNet, LossHead, OutputActivation};
use mmq_core::SimRng;
use ndarray::{s, Array1, Array2};
use rand::{Rng, SeedableRng};

const STEP: f64 = 1e-6;
const REL_TOL: f64 = 1e-4;
const ABS_FLOOR: f64 = 1e-6;
pub const CASES_PER_HEAD: usize = 30;

fn close(analytic: f64, numeric: f64) -> bool {
    let err = (analytic - numeric).abs();
    err <= ABS_FLOOR || err <= REL_TOL * analytic.abs().max(numeric.abs())
}

fn random_net(rng: &mut SimRng, input: usize, output: usize, tanh: bool) -> FeedForwardNet {
    let depth = rng.random_range(1..=2);
    let mut sizes = vec![input];
    for _ in 0..depth {
        sizes.push(rng.random_range(2..=6));
    }
    sizes.push(output);
    let mut net = FeedForwardNet::new(&sizes, rng.random()).unwrap();
    // Non-zero biases so the ReLU pattern is not symmetric around zero.
    for layer in net.layers_mut() {
        layer.bias.mapv_inplace(|_| rng.random_range(-0.3..0.3));
    }
    if tanh {
        net = net.with_output(OutputActivation::Tanh { scale: rng.random_range(0.5..2.0) });
    }
    net
}

fn random_matrix(rng: &mut SimRng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.0..1.0))
}

/// Compares parameter and input gradients of `loss(net, x)` against central
/// differences. Returns the first offending entry, if any.
fn check<F>(net: &FeedForwardNet, x: &Array2<f64>, analytic_params: &[f64], analytic_input: &Array2<f64>, loss: F) -> Option<String>
where
    F: Fn(&FeedForwardNet, &Array2<f64>) -> f64,
{
    let params = net.flat_params();
    let mut probe = net.clone();
    for (i, &g) in analytic_params.iter().enumerate() {
        let mut p = params.clone();
        p[i] += STEP;
        probe.set_flat_params(&p).unwrap();
        let up = loss(&probe, x);
        p[i] -= 2.0 * STEP;
        probe.set_flat_params(&p).unwrap();
        let down = loss(&probe, x);
        let numeric = (up - down) / (2.0 * STEP);
        if !close(g, numeric) {
            return Some(format!("param {i}: analytic {g}, numeric {numeric}"));
        }
    }
    for ((r, c), &g) in analytic_input.indexed_iter() {
        let mut xp = x.clone();
        xp[[r, c]] += STEP;
        let up = loss(net, &xp);
        xp[[r, c]] -= 2.0 * STEP;
        let down = loss(net, &xp);
        let numeric = (up - down) / (2.0 * STEP);
        if !close(g, numeric) {
            return Some(format!("input ({r},{c}): analytic {g}, numeric {numeric}"));
        }
    }
    None
}

fn run_cases<F>(head_name: &str, seed: u64, mut case: F) -> Vec<String>
where
    F: FnMut(&mut SimRng) -> Option<String>,
{
    let mut rng = SimRng::seed_from_u64(seed);
    (0..CASES_PER_HEAD)
        .filter_map(|k| case(&mut rng).map(|m| format!("{head_name} case {k}: {m}")))
        .collect()
}

pub fn mse_cases() -> Vec<String> {
    run_cases("mse", 1, |rng| {
        let (n, d_in, d_out) = (rng.random_range(1..5), rng.random_range(1..5), rng.random_range(1..4));
        let tanh = rng.random_bool(0.3);
        let net = random_net(rng, d_in, d_out, tanh);
        let x = random_matrix(rng, n, d_in);
        let t = random_matrix(rng, n, d_out);
        let w: Option<Vec<f64>> = rng
            .random_bool(0.5)
            .then(|| (0..n).map(|_| rng.random_range(0.1..2.0)).collect());
        let head = LossHead::Mse { targets: t.view(), weights: w.as_deref() };
        let (_, g) = net.backward(x.view(), &head).unwrap();
        check(&net, &x, &g.flatten(), &g.input, |net, x| {
            let head = LossHead::Mse { targets: t.view(), weights: w.as_deref() };
            net.backward(x.view(), &head).unwrap().0
        })
    })
}

pub fn pinball_cases() -> Vec<String> {
    run_cases("pinball", 2, |rng| {
        let (n, d_in, d_out) = (rng.random_range(1..5), rng.random_range(1..5), rng.random_range(1..4));
        let net = random_net(rng, d_in, d_out, false);
        let x = random_matrix(rng, n, d_in);
        let t = random_matrix(rng, n, d_out);
        let tau = rng.random_range(0.02..0.98);
        let reduction = if rng.random_bool(0.5) { DimReduction::Mean } else { DimReduction::Sum };
        let head = LossHead::Pinball { tau, targets: t.view(), reduction };
        let (_, g) = net.backward(x.view(), &head).unwrap();
        check(&net, &x, &g.flatten(), &g.input, |net, x| {
            let head = LossHead::Pinball { tau, targets: t.view(), reduction };
            net.backward(x.view(), &head).unwrap().0
        })
    })
}

pub fn gaussian_nll_cases() -> Vec<String> {
    run_cases("gaussian_nll", 3, |rng| {
        let (n, d_in, dims) = (rng.random_range(1..5), rng.random_range(1..5), rng.random_range(1..3));
        let net = random_net(rng, d_in, 2 * dims, false);
        let x = random_matrix(rng, n, d_in);
        let t = random_matrix(rng, n, dims);
        let head = LossHead::GaussianNll { targets: t.view() };
        let (_, g) = net.backward(x.view(), &head).unwrap();
        check(&net, &x, &g.flatten(), &g.input, |net, x| {
            net.backward(x.view(), &LossHead::GaussianNll { targets: t.view() }).unwrap().0
        })
    })
}

/// The actor loss `−mean Q(s, π(s))` through a fixed critic: the analytic
/// gradient chains the critic's action gradient into the actor, the numeric
/// one perturbs the actor and re-evaluates the critic.
pub fn critic_chain_cases() -> Vec<String> {
    run_cases("critic_chain", 4, |rng| {
        let (n, s_dim, a_dim) = (rng.random_range(1..5), rng.random_range(1..4), rng.random_range(1..3));
        let actor = random_net(rng, s_dim, a_dim, true);
        let critic = random_net(rng, s_dim + a_dim, 1, false);
        let states = random_matrix(rng, n, s_dim);

        let critic_q = |actor: &FeedForwardNet, states: &Array2<f64>| -> (Array1<f64>, Array2<f64>) {
            let actions = actor.forward_batch(states.view()).unwrap();
            let mut joint = Array2::zeros((n, s_dim + a_dim));
            joint.slice_mut(s![.., ..s_dim]).assign(states);
            joint.slice_mut(s![.., s_dim..]).assign(&actions);
            let q = critic.forward_batch(joint.view()).unwrap().column(0).to_owned();
            let grads = critic.backward_from(joint.view(), Array2::ones((n, 1))).unwrap();
            (q, grads.input.slice(s![.., s_dim..]).to_owned())
        };

        let (q, dq_da) = critic_q(&actor, &states);
        let head = LossHead::CriticChain { q: q.view(), dq_da: dq_da.view() };
        let (loss, g) = actor.backward(states.view(), &head).unwrap();
        assert!((loss + q.mean().unwrap()).abs() < 1e-12);
        // The head's input gradient only covers the path through the actor;
        // the critic's own state input is held fixed, so compare against a
        // loss that feeds the perturbed state only into the actor.
        check(&actor, &states, &g.flatten(), &g.input, |actor, x| {
            let actions = actor.forward_batch(x.view()).unwrap();
            let mut joint = Array2::zeros((n, s_dim + a_dim));
            joint.slice_mut(s![.., ..s_dim]).assign(&states);
            joint.slice_mut(s![.., s_dim..]).assign(&actions);
            -critic.forward_batch(joint.view()).unwrap().column(0).mean().unwrap()
        })
    })
}
