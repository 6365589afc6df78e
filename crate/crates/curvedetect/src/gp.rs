//! Exact Gaussian-process regression: posterior predictive, log marginal
//! likelihood with closed-form gradients, and Adam-based hyperparameter
//! fitting.
//!
//! All linear solves go through Cholesky factorization of
//! `K + (sigma2 + jitter) I`; the kernel is not guaranteed positive
//! semi-definite (the offset beta can be negative), so a bounded jitter
//! escalation backs every factorization.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::GpError;
use crate::kernel::{build_gram, GPHyperparams, GramMatrix, JITTER_CEIL};

/// The scored subset of the perturbation pool, candidate always at index 0.
#[derive(Debug, Clone, PartialEq)]
pub struct TypicalSet {
    /// Positions within the perturbation pool; `indices[0] == 0` is the
    /// candidate itself.
    pub indices: Vec<usize>,
    /// Source-model log-probabilities (nats) aligned with `indices`.
    pub targets: Vec<f64>,
}

impl TypicalSet {
    pub fn new(indices: Vec<usize>, targets: Vec<f64>) -> Result<Self, GpError> {
        if indices.len() != targets.len() {
            return Err(GpError::DimensionMismatch {
                context: format!(
                    "{} indices vs {} targets",
                    indices.len(),
                    targets.len()
                ),
            });
        }
        if indices.first() != Some(&0) {
            return Err(GpError::DimensionMismatch {
                context: "typical set must start with the candidate (index 0)".into(),
            });
        }
        let mut seen = indices.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != indices.len() {
            return Err(GpError::DimensionMismatch {
                context: "typical-set indices must be distinct".into(),
            });
        }
        if targets.iter().any(|t| !t.is_finite()) {
            return Err(GpError::DimensionMismatch {
                context: "typical-set targets must be finite".into(),
            });
        }
        Ok(TypicalSet { indices, targets })
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn targets_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.targets)
    }
}

/// GP posterior over a set of test points.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorPrediction {
    pub means: Vec<f64>,
    pub variances: Vec<f64>,
    /// Full posterior covariance, populated on request.
    pub covariance: Option<DMatrix<f64>>,
}

/// Adam settings for marginal-likelihood maximization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    pub iterations: usize,
    /// Cosine-decay the learning rate over `iterations`.
    pub cosine_schedule: bool,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            learning_rate: 0.01,
            iterations: 50,
            cosine_schedule: true,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Factorizes `K + (sigma2 + jitter) I`, escalating jitter tenfold on
/// failure up to `JITTER_CEIL`. Returns the factorization and the jitter
/// that succeeded.
pub fn cholesky_with_escalation(
    gram: &DMatrix<f64>,
    sigma2: f64,
    jitter_start: f64,
) -> Result<(Cholesky<f64, Dyn>, f64), GpError> {
    let n = gram.nrows();
    let mut jitter = jitter_start;
    loop {
        let mut m = gram.clone();
        for i in 0..n {
            m[(i, i)] += sigma2 + jitter;
        }
        if let Some(chol) = Cholesky::new(m) {
            return Ok((chol, jitter));
        }
        jitter *= 10.0;
        if jitter > JITTER_CEIL {
            return Err(GpError::NumericalFailure {
                max_jitter: JITTER_CEIL,
            });
        }
    }
}

/// Posterior predictive mean and variance at test points.
///
/// `gram_tt` is the train/train kernel block, `k_star_train` the test/train
/// cross block, `k_star_star_diag` the test self-covariances. Negative
/// predicted variances within roundoff (`>= -1e-9`) are clamped to zero;
/// anything more negative is a genuine PSD violation and errors out.
pub fn posterior_predict(
    train: &TypicalSet,
    hyper: &GPHyperparams,
    gram_tt: &GramMatrix,
    k_star_train: &GramMatrix,
    k_star_star_diag: &[f64],
) -> Result<PosteriorPrediction, GpError> {
    let t = train.len();
    if t == 0 {
        return Err(GpError::DimensionMismatch {
            context: "empty training set".into(),
        });
    }
    if gram_tt.nrows() != t || gram_tt.ncols() != t {
        return Err(GpError::DimensionMismatch {
            context: format!(
                "gram_tt is {}x{}, train has {} points",
                gram_tt.nrows(),
                gram_tt.ncols(),
                t
            ),
        });
    }
    if k_star_train.ncols() != t || k_star_train.nrows() != k_star_star_diag.len() {
        return Err(GpError::DimensionMismatch {
            context: format!(
                "k_star_train is {}x{}, expected {}x{}",
                k_star_train.nrows(),
                k_star_train.ncols(),
                k_star_star_diag.len(),
                t
            ),
        });
    }

    let (chol, _) = cholesky_with_escalation(&gram_tt.entries, hyper.sigma2, hyper.jitter)?;
    let y = train.targets_vector();
    let alpha_vec = chol.solve(&y);
    let means_vec = &k_star_train.entries * &alpha_vec;

    // diag(K*t M^{-1} Kt*) via the solved cross block
    let solved_cross = chol.solve(&k_star_train.entries.transpose());
    let mut variances = Vec::with_capacity(k_star_star_diag.len());
    for (i, &kss) in k_star_star_diag.iter().enumerate() {
        let reduction: f64 = k_star_train
            .entries
            .row(i)
            .iter()
            .zip(solved_cross.column(i).iter())
            .map(|(a, b)| a * b)
            .sum();
        let mut var = kss - reduction;
        if var < 0.0 {
            if var >= -1e-9 {
                var = 0.0;
            } else {
                return Err(GpError::NumericalFailure {
                    max_jitter: var.abs(),
                });
            }
        }
        variances.push(var);
    }

    Ok(PosteriorPrediction {
        means: means_vec.iter().copied().collect(),
        variances,
        covariance: None,
    })
}

/// Log marginal likelihood of the targets, in the proportional form
/// `-(y' M^{-1} y + log|M|)` with `M = K_tt + sigma2 I`.
pub fn log_marginal_objective(
    train: &TypicalSet,
    gram_tt: &GramMatrix,
    hyper: &GPHyperparams,
) -> Result<f64, GpError> {
    let t = train.len();
    if gram_tt.nrows() != t || gram_tt.ncols() != t {
        return Err(GpError::DimensionMismatch {
            context: "gram_tt inconsistent with training set".into(),
        });
    }
    let (chol, _) = cholesky_with_escalation(&gram_tt.entries, hyper.sigma2, hyper.jitter)?;
    let y = train.targets_vector();
    let alpha_vec = chol.solve(&y);
    let quad = y.dot(&alpha_vec);
    let logdet: f64 = chol.l().diagonal().iter().map(|d| 2.0 * d.ln()).sum();
    Ok(-(quad + logdet))
}

/// Closed-form gradients of [`log_marginal_objective`] with respect to
/// (alpha, beta, sigma2), using `d/dtheta = u' (dM/dtheta) u - tr(M^{-1}
/// dM/dtheta)` with `u = M^{-1} y`.
pub fn objective_gradients(
    train: &TypicalSet,
    sim_tt: &DMatrix<f64>,
    hyper: &GPHyperparams,
) -> Result<(f64, f64, f64), GpError> {
    let t = train.len();
    if sim_tt.nrows() != t || sim_tt.ncols() != t {
        return Err(GpError::DimensionMismatch {
            context: "sim_tt inconsistent with training set".into(),
        });
    }
    let gram_tt = build_gram(sim_tt, true, hyper)?;
    let (chol, _) = cholesky_with_escalation(&gram_tt.entries, hyper.sigma2, hyper.jitter)?;
    let y = train.targets_vector();
    let u = chol.solve(&y);
    let m_inv = chol.inverse();

    // dM/dalpha = sim_tt
    let d_alpha = {
        let su = sim_tt * &u;
        let quad = u.dot(&su);
        let trace: f64 = (0..t)
            .map(|i| m_inv.row(i).iter().zip(sim_tt.column(i).iter()).map(|(a, b)| a * b).sum::<f64>())
            .sum();
        quad - trace
    };
    // dM/dbeta = all-ones
    let d_beta = {
        let s: f64 = u.iter().sum();
        let quad = s * s;
        let trace: f64 = m_inv.iter().sum();
        quad - trace
    };
    // dM/dsigma2 = I
    let d_sigma2 = {
        let quad = u.dot(&u);
        let trace = m_inv.trace();
        quad - trace
    };
    Ok((d_alpha, d_beta, d_sigma2))
}

/// Fits (alpha, beta, sigma2) by Adam on the log marginal likelihood.
///
/// Optimizes `log alpha` and `log sigma2` (positivity) and raw `beta`,
/// projected to `beta >= 0` after each step: a constant covariance offset
/// is a valid kernel term only when non-negative, and letting beta drift
/// below zero makes the affine kernel indefinite, which surfaces later as
/// hard numerical failures in prediction. Returns the iterate with the
/// best objective seen, which is never worse than the (finite-objective)
/// initialization. A numerical failure mid-run ends the search early and
/// returns the best iterate found. Deterministic.
pub fn fit_hyperparameters(
    train: &TypicalSet,
    sim_tt: &DMatrix<f64>,
    init: &GPHyperparams,
    opt: &OptimizerConfig,
) -> Result<GPHyperparams, GpError> {
    init.validate().map_err(GpError::Kernel)?;
    let objective = |h: &GPHyperparams| -> Result<f64, GpError> {
        let gram = build_gram(sim_tt, true, h)?;
        log_marginal_objective(train, &gram, h)
    };

    // coordinates: (log alpha, beta, log sigma2)
    let mut params = [init.alpha.ln(), init.beta.max(0.0), init.sigma2.ln()];
    let to_hyper = |p: &[f64; 3]| GPHyperparams {
        alpha: p[0].exp(),
        beta: p[1],
        sigma2: p[2].exp(),
        jitter: init.jitter,
    };

    let mut best = *init;
    let mut best_obj = objective(init)?;

    let mut m = [0.0f64; 3];
    let mut v = [0.0f64; 3];
    for step in 0..opt.iterations {
        let hyper = to_hyper(&params);
        let Ok((da, db, ds)) = objective_gradients(train, sim_tt, &hyper) else {
            break;
        };
        // chain rule through the log reparameterization
        let grad = [da * hyper.alpha, db, ds * hyper.sigma2];

        let lr = if opt.cosine_schedule {
            let frac = step as f64 / opt.iterations as f64;
            opt.learning_rate * 0.5 * (1.0 + (std::f64::consts::PI * frac).cos())
        } else {
            opt.learning_rate
        };

        let t_adam = (step + 1) as f64;
        for k in 0..3 {
            m[k] = opt.beta1 * m[k] + (1.0 - opt.beta1) * grad[k];
            v[k] = opt.beta2 * v[k] + (1.0 - opt.beta2) * grad[k] * grad[k];
            let m_hat = m[k] / (1.0 - opt.beta1.powf(t_adam));
            let v_hat = v[k] / (1.0 - opt.beta2.powf(t_adam));
            // ascent on the objective
            params[k] += lr * m_hat / (v_hat.sqrt() + opt.epsilon);
        }
        params[1] = params[1].max(0.0);

        let hyper = to_hyper(&params);
        if let Ok(obj) = objective(&hyper) {
            if obj > best_obj {
                best_obj = obj;
                best = hyper;
            }
        }
    }
    Ok(best)
}

/// Default initialization when no warmer start exists: unit scale, zero
/// offset, noise scaled to the target spread.
pub fn default_init(targets: &[f64], jitter: f64) -> GPHyperparams {
    let n = targets.len() as f64;
    let mean = targets.iter().sum::<f64>() / n.max(1.0);
    let var = targets.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n.max(1.0);
    GPHyperparams {
        alpha: 1.0,
        beta: 0.0,
        sigma2: (0.1 * var).max(1e-4),
        jitter,
    }
}

#[cfg(test)]
pub mod test_oracles {
    //! Dense linear-algebra oracles, independent of the Cholesky path.

    use super::*;

    /// Posterior mean/variance by explicit matrix inversion.
    pub fn dense_posterior(
        y: &DVector<f64>,
        k_tt: &DMatrix<f64>,
        k_st: &DMatrix<f64>,
        k_ss_diag: &[f64],
        sigma2: f64,
        jitter: f64,
    ) -> (Vec<f64>, Vec<f64>) {
        let n = k_tt.nrows();
        let mut m = k_tt.clone();
        for i in 0..n {
            m[(i, i)] += sigma2 + jitter;
        }
        let m_inv = m.try_inverse().expect("oracle inverse");
        let means = k_st * &m_inv * y;
        let cov_red = k_st * &m_inv * k_st.transpose();
        let vars: Vec<f64> = k_ss_diag
            .iter()
            .enumerate()
            .map(|(i, &kss)| kss - cov_red[(i, i)])
            .collect();
        (means.iter().copied().collect(), vars)
    }

    /// Proportional log marginal likelihood by explicit inverse plus
    /// eigenvalue log-determinant.
    pub fn dense_objective(y: &DVector<f64>, k_tt: &DMatrix<f64>, sigma2: f64, jitter: f64) -> f64 {
        let n = k_tt.nrows();
        let mut m = k_tt.clone();
        for i in 0..n {
            m[(i, i)] += sigma2 + jitter;
        }
        let m_inv = m.clone().try_inverse().expect("oracle inverse");
        let quad = y.dot(&(&m_inv * y));
        let logdet: f64 = m
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .map(|e| e.ln())
            .sum();
        -(quad + logdet)
    }
}
