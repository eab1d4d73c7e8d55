use std::f64::consts::PI;

use ndarray::{Array2, ArrayView1, ArrayView2};

use crate::error::{invalid_config, shape, Result};

/// Clamp range for predicted log-variances.
pub const LOGVAR_MIN: f64 = -10.0;
pub const LOGVAR_MAX: f64 = 5.0;

/// How per-dimension pinball terms are combined within one sample.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum DimReduction {
    #[default]
    Mean,
    Sum,
}

/// Loss heads understood by [`super::FeedForwardNet::backward`]. All heads
/// average over the batch.
#[derive(Clone, Debug)]
pub enum LossHead<'a> {
    /// `w_n · (y − t)²`, averaged over batch and output dims.
    Mse {
        targets: ArrayView2<'a, f64>,
        weights: Option<&'a [f64]>,
    },
    /// Pinball loss on `u = y − t` (see [`loss_pinball`]).
    Pinball {
        tau: f64,
        targets: ArrayView2<'a, f64>,
        reduction: DimReduction,
    },
    /// Output is `[mean (D) | raw log-variance (D)]`.
    GaussianNll { targets: ArrayView2<'a, f64> },
    /// Actor objective `−Q(s, π(s))`: `q` holds the critic values and
    /// `dq_da` the critic's gradient with respect to the action input.
    CriticChain {
        q: ArrayView1<'a, f64>,
        dq_da: ArrayView2<'a, f64>,
    },
}

impl LossHead<'_> {
    /// Canonical names, as accepted in configs.
    pub const NAMES: [&'static str; 4] = ["mse", "pinball", "gaussian_nll", "critic_chain"];

    pub fn check_name(name: &str) -> Result<()> {
        if Self::NAMES.contains(&name) {
            Ok(())
        } else {
            Err(invalid_config(format!(
                "unknown loss head `{name}` (expected one of {:?})",
                Self::NAMES
            )))
        }
    }

    /// Loss value and `∂L/∂output`.
    pub(crate) fn evaluate(&self, out: ArrayView2<f64>) -> Result<(f64, Array2<f64>)> {
        let (n, d) = out.dim();
        let n_f = n.max(1) as f64;
        match self {
            LossHead::Mse { targets, weights } => {
                expect_dim("mse targets", targets.dim(), (n, d))?;
                if let Some(w) = weights {
                    if w.len() != n {
                        return Err(shape(format!("{} weights for batch of {n}", w.len())));
                    }
                }
                let scale = 1.0 / (n_f * d as f64);
                let mut grad = Array2::zeros((n, d));
                let mut loss = 0.0;
                for i in 0..n {
                    let w = weights.map_or(1.0, |w| w[i]);
                    for j in 0..d {
                        let diff = out[[i, j]] - targets[[i, j]];
                        loss += w * diff * diff * scale;
                        grad[[i, j]] = 2.0 * w * diff * scale;
                    }
                }
                Ok((loss, grad))
            }
            LossHead::Pinball {
                tau,
                targets,
                reduction,
            } => {
                check_tau(*tau)?;
                expect_dim("pinball targets", targets.dim(), (n, d))?;
                let dim_scale = match reduction {
                    DimReduction::Mean => 1.0 / d as f64,
                    DimReduction::Sum => 1.0,
                };
                let scale = dim_scale / n_f;
                let mut grad = Array2::zeros((n, d));
                let mut loss = 0.0;
                for i in 0..n {
                    for j in 0..d {
                        let u = out[[i, j]] - targets[[i, j]];
                        loss += pinball(*tau, u) * scale;
                        grad[[i, j]] = pinball_slope(*tau, u) * scale;
                    }
                }
                Ok((loss, grad))
            }
            LossHead::GaussianNll { targets } => {
                if d % 2 != 0 {
                    return Err(shape(format!("gaussian head needs an even output width, got {d}")));
                }
                let dims = d / 2;
                expect_dim("gaussian targets", targets.dim(), (n, dims))?;
                let mut grad = Array2::zeros((n, d));
                let mut loss = 0.0;
                for i in 0..n {
                    for j in 0..dims {
                        let mean = out[[i, j]];
                        let raw = out[[i, dims + j]];
                        let logvar = raw.clamp(LOGVAR_MIN, LOGVAR_MAX);
                        let var = logvar.exp();
                        let err = targets[[i, j]] - mean;
                        loss += 0.5 * ((2.0 * PI).ln() + logvar + err * err / var) / n_f;
                        grad[[i, j]] = -err / var / n_f;
                        if raw > LOGVAR_MIN && raw < LOGVAR_MAX {
                            grad[[i, dims + j]] = 0.5 * (1.0 - err * err / var) / n_f;
                        }
                    }
                }
                Ok((loss, grad))
            }
            LossHead::CriticChain { q, dq_da } => {
                expect_dim("critic action gradient", dq_da.dim(), (n, d))?;
                if q.len() != n {
                    return Err(shape(format!("{} q-values for batch of {n}", q.len())));
                }
                let loss = -q.sum() / n_f;
                let grad = dq_da.mapv(|g| -g / n_f);
                Ok((loss, grad))
            }
        }
    }
}

fn expect_dim(what: &str, got: (usize, usize), want: (usize, usize)) -> Result<()> {
    if got == want {
        Ok(())
    } else {
        Err(shape(format!("{what}: got {got:?}, expected {want:?}")))
    }
}

fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau < 1.0 {
        Ok(())
    } else {
        Err(invalid_config(format!("quantile level must lie in (0, 1), got {tau}")))
    }
}

/// `τu` for `u ≥ 0`, `(τ − 1)u` for `u < 0`.
#[inline]
fn pinball(tau: f64, u: f64) -> f64 {
    if u >= 0.0 {
        tau * u
    } else {
        (tau - 1.0) * u
    }
}

/// Subgradient; zero at the kink.
#[inline]
fn pinball_slope(tau: f64, u: f64) -> f64 {
    if u > 0.0 {
        tau
    } else if u < 0.0 {
        tau - 1.0
    } else {
        0.0
    }
}

/// Sum over dimensions of the pinball loss of `u = prediction − target`.
///
/// Over-prediction is charged `τ` per unit and under-prediction `1 − τ`, so a
/// constant minimising this loss sits at the `(1 − τ)`-quantile of the targets.
pub fn loss_pinball(tau: f64, prediction: &[f64], target: &[f64]) -> Result<f64> {
    check_tau(tau)?;
    if prediction.len() != target.len() {
        return Err(shape(format!(
            "prediction has {} dims, target {}",
            prediction.len(),
            target.len()
        )));
    }
    Ok(prediction
        .iter()
        .zip(target)
        .map(|(p, t)| pinball(tau, p - t))
        .sum())
}

/// `−Σ_d log N(target_d | mean_d, exp(logvar_d))`, log-variances clamped to
/// `[LOGVAR_MIN, LOGVAR_MAX]`.
pub fn loss_gaussian_nll(mean: &[f64], logvar: &[f64], target: &[f64]) -> Result<f64> {
    if mean.len() != target.len() || logvar.len() != target.len() {
        return Err(shape(format!(
            "mean {}, logvar {}, target {}",
            mean.len(),
            logvar.len(),
            target.len()
        )));
    }
    Ok(mean
        .iter()
        .zip(logvar)
        .zip(target)
        .map(|((m, lv), t)| {
            let lv = lv.clamp(LOGVAR_MIN, LOGVAR_MAX);
            let err = t - m;
            0.5 * ((2.0 * PI).ln() + lv + err * err / lv.exp())
        })
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Error;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn pinball_examples() {
        assert_abs_diff_eq!(loss_pinball(0.95, &[1.0], &[0.0]).unwrap(), 0.95, epsilon = 1e-15);
        assert_abs_diff_eq!(loss_pinball(0.95, &[0.0], &[1.0]).unwrap(), 0.05, epsilon = 1e-15);
        assert_eq!(loss_pinball(0.3, &[0.4, -2.0], &[0.4, -2.0]).unwrap(), 0.0);
    }

    #[test]
    fn pinball_rejects_bad_tau_and_shapes() {
        assert!(matches!(loss_pinball(0.0, &[1.0], &[0.0]), Err(Error::InvalidConfig(_))));
        assert!(matches!(loss_pinball(1.0, &[1.0], &[0.0]), Err(Error::InvalidConfig(_))));
        assert!(matches!(loss_pinball(0.5, &[1.0], &[0.0, 1.0]), Err(Error::Shape(_))));
    }

    #[test]
    fn pinball_subgradient_is_zero_at_tie() {
        let out = array![[0.5, 1.0]];
        let t = array![[0.5, 0.0]];
        let head = LossHead::Pinball {
            tau: 0.95,
            targets: t.view(),
            reduction: DimReduction::Sum,
        };
        let (_, g) = head.evaluate(out.view()).unwrap();
        assert_eq!(g[[0, 0]], 0.0);
        assert_abs_diff_eq!(g[[0, 1]], 0.95, epsilon = 1e-15);
    }

    #[test]
    fn gaussian_examples() {
        let half_log_2pi = 0.5 * (2.0 * PI).ln();
        assert_abs_diff_eq!(loss_gaussian_nll(&[0.0], &[0.0], &[0.0]).unwrap(), 0.9189385332046727, epsilon = 1e-12);
        assert_abs_diff_eq!(loss_gaussian_nll(&[1.0], &[0.0], &[0.0]).unwrap(), half_log_2pi + 0.5, epsilon = 1e-12);
        let one = loss_gaussian_nll(&[0.3], &[-0.4], &[1.1]).unwrap();
        let two = loss_gaussian_nll(&[0.3, 0.3], &[-0.4, -0.4], &[1.1, 1.1]).unwrap();
        assert_abs_diff_eq!(two, 2.0 * one, epsilon = 1e-12);
    }

    #[test]
    fn head_names() {
        for n in LossHead::NAMES {
            LossHead::check_name(n).unwrap();
        }
        assert!(matches!(LossHead::check_name("hinge"), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn mse_zero_at_target() {
        let out = array![[1.0], [2.0]];
        let head = LossHead::Mse { targets: out.view(), weights: None };
        let (l, g) = head.evaluate(out.view()).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.iter().all(|&v| v == 0.0));
    }
}
