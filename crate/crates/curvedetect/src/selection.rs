//! Sequential typical-sample selection: initialize the typical set, then
//! alternate GP hyperparameter fitting with argmax-uncertainty selection
//! until the query budget is spent or the uncertainty floor is reached.
//!
//! The GP is fit on candidate-centered targets (each score minus the
//! candidate's score) and predictions are shifted back. Centering keeps the
//! zero-mean prior sensible for log-probabilities and makes the whole
//! pipeline exactly invariant to a constant shift of the scorer.

use rand::prelude::*;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{DetectError, GpError};
use crate::gp::{
    default_init, fit_hyperparameters, log_marginal_objective, posterior_predict, OptimizerConfig,
    PosteriorPrediction, TypicalSet,
};
use crate::kernel::{build_gram, GPHyperparams, SimilarityMatrix};
use crate::providers::Scorer;
use crate::types::TextSample;

/// Settings for the selection loop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionConfig {
    /// Initial typical-set size S; the candidate plus S-1 random picks.
    pub initial_size: usize,
    /// Maximum typical-set size T; equals the total query budget.
    pub budget: usize,
    /// Early-stop threshold on the max predictive std over the pool;
    /// 0 disables early stopping.
    pub uncertainty_floor: f64,
    pub rng_seed: u64,
    /// Refit from the default initialization each step instead of
    /// warm-starting from the previous fit.
    pub cold_start: bool,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig {
            initial_size: 2,
            budget: 10,
            uncertainty_floor: 0.0,
            rng_seed: 0,
            cold_start: false,
        }
    }
}

impl SelectionConfig {
    pub fn validate(&self) -> Result<(), DetectError> {
        if self.initial_size < 1 || self.initial_size >= self.budget {
            return Err(DetectError::InvalidConfig(format!(
                "need 1 <= initial_size < budget, got S={} T={}",
                self.initial_size, self.budget
            )));
        }
        if !(self.uncertainty_floor >= 0.0) {
            return Err(DetectError::InvalidConfig(
                "uncertainty_floor must be >= 0".into(),
            ));
        }
        Ok(())
    }
}

/// Pool of candidate positions not yet selected.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolState {
    pub indices: Vec<usize>,
}

impl PoolState {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// One selection step, for auditing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionStep {
    pub chosen_index: usize,
    /// Predictive variance of the chosen point at selection time.
    pub variance: f64,
    /// Marginal-likelihood objective after the subsequent refit.
    pub objective: f64,
}

/// Final state of one selection run.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateFit {
    pub typical_set: TypicalSet,
    pub hyper: GPHyperparams,
    pub selection_trace: Vec<SelectionStep>,
    pub queries_used: usize,
}

/// A selection failure carrying whatever fit existed when it happened.
#[derive(Debug)]
pub struct SelectionFailure {
    pub error: DetectError,
    pub partial: Option<SurrogateFit>,
}

impl From<DetectError> for SelectionFailure {
    fn from(error: DetectError) -> Self {
        SelectionFailure {
            error,
            partial: None,
        }
    }
}

fn centered(train: &TypicalSet) -> TypicalSet {
    let base = train.targets[0];
    TypicalSet {
        indices: train.indices.clone(),
        targets: train.targets.iter().map(|y| y - base).collect(),
    }
}

/// GP posterior over the pool positions, with the candidate-centering shift
/// applied and undone. Means are in the scorer's own units.
pub fn pool_posterior(
    train: &TypicalSet,
    hyper: &GPHyperparams,
    sim: &SimilarityMatrix,
    pool: &[usize],
) -> Result<PosteriorPrediction, GpError> {
    let train_c = centered(train);
    let sim_tt = sim.block(&train.indices, &train.indices);
    let sim_st = sim.block(pool, &train.indices);
    let gram_tt = build_gram(&sim_tt, true, hyper)?;
    let gram_st = build_gram(&sim_st, false, hyper)?;
    let kss: Vec<f64> = pool.iter().map(|_| hyper.alpha + hyper.beta).collect();
    let mut pred = posterior_predict(&train_c, hyper, &gram_tt, &gram_st, &kss)?;
    let base = train.targets[0];
    for m in &mut pred.means {
        *m += base;
    }
    Ok(pred)
}

fn fit_centered(
    train: &TypicalSet,
    sim: &SimilarityMatrix,
    warm: Option<&GPHyperparams>,
    jitter: f64,
    opt: &OptimizerConfig,
) -> Result<(GPHyperparams, f64), GpError> {
    let train_c = centered(train);
    let sim_tt = sim.block(&train.indices, &train.indices);
    let init = match warm {
        Some(h) => *h,
        None => default_init(&train_c.targets, jitter),
    };
    let hyper = fit_hyperparameters(&train_c, &sim_tt, &init, opt)?;
    let gram = build_gram(&sim_tt, true, &hyper)?;
    let obj = log_marginal_objective(&train_c, &gram, &hyper)?;
    Ok((hyper, obj))
}

/// Seeds the typical set: the candidate (already scored) plus S-1 uniform
/// random pool picks, scored in one batch request.
pub fn initialize_typical_set(
    candidate_logp: f64,
    pool: &PoolState,
    cfg: &SelectionConfig,
    scorer: &dyn Scorer,
    samples: &[TextSample],
) -> Result<(TypicalSet, PoolState), DetectError> {
    let extra = cfg.initial_size.saturating_sub(1);
    if pool.len() < extra {
        return Err(DetectError::PoolExhausted);
    }
    let mut rng = ChaCha12Rng::seed_from_u64(cfg.rng_seed);
    let mut remaining = pool.indices.clone();
    let mut picked = Vec::with_capacity(extra);
    for _ in 0..extra {
        let k = rng.gen_range(0..remaining.len());
        picked.push(remaining.swap_remove(k));
    }

    let mut indices = vec![0usize];
    let mut targets = vec![candidate_logp];
    if !picked.is_empty() {
        let batch: Vec<TextSample> = picked.iter().map(|&i| samples[i].clone()).collect();
        let scores = scorer
            .score_batch(&batch)
            .map_err(DetectError::ScorerFailure)?;
        indices.extend(&picked);
        targets.extend(scores);
    }
    remaining.sort_unstable();
    let typical = TypicalSet::new(indices, targets)?;
    Ok((typical, PoolState { indices: remaining }))
}

/// The pool position with the largest predictive variance; ties break to
/// the lowest pool index.
pub fn select_next(pred: &PosteriorPrediction, pool: &PoolState) -> Result<usize, DetectError> {
    if pool.is_empty() || pred.variances.is_empty() {
        return Err(DetectError::EmptyPool);
    }
    debug_assert_eq!(pred.variances.len(), pool.len());
    let mut best_pos = 0usize;
    for i in 1..pool.len() {
        let better = pred.variances[i] > pred.variances[best_pos]
            || (pred.variances[i] == pred.variances[best_pos]
                && pool.indices[i] < pool.indices[best_pos]);
        if better {
            best_pos = i;
        }
    }
    Ok(pool.indices[best_pos])
}

/// Runs the full selection loop over `samples` (candidate at index 0,
/// perturbations after it). Total scorer queries equal the final
/// typical-set size.
pub fn run_selection_loop(
    samples: &[TextSample],
    sim: &SimilarityMatrix,
    cfg: &SelectionConfig,
    scorer: &dyn Scorer,
    opt: &OptimizerConfig,
) -> Result<SurrogateFit, SelectionFailure> {
    cfg.validate()?;
    if sim.len() != samples.len() {
        return Err(DetectError::InvalidConfig(format!(
            "similarity matrix covers {} texts, have {} samples",
            sim.len(),
            samples.len()
        ))
        .into());
    }
    if samples.len() < 2 {
        return Err(DetectError::PoolExhausted.into());
    }

    let candidate_logp = scorer
        .score_batch(&samples[..1])
        .map_err(DetectError::ScorerFailure)?[0];
    let pool = PoolState {
        indices: (1..samples.len()).collect(),
    };
    let (mut typical, mut pool) =
        initialize_typical_set(candidate_logp, &pool, cfg, scorer, samples)?;
    let mut trace = Vec::new();
    let jitter = 1e-6;

    let (mut hyper, _obj) = fit_centered(&typical, sim, None, jitter, opt)
        .map_err(|e| partial_failure(e.into(), &typical, None, &trace))?;

    while typical.len() < cfg.budget && !pool.is_empty() {
        let pred = pool_posterior(&typical, &hyper, sim, &pool.indices)
            .map_err(|e| partial_failure(e.into(), &typical, Some(hyper), &trace))?;
        let max_std = pred
            .variances
            .iter()
            .cloned()
            .fold(0.0f64, f64::max)
            .sqrt();
        if cfg.uncertainty_floor > 0.0 && max_std < cfg.uncertainty_floor {
            break;
        }
        let chosen = select_next(&pred, &pool)
            .map_err(|e| partial_failure(e, &typical, Some(hyper), &trace))?;
        let pos = pool.indices.iter().position(|&i| i == chosen).unwrap();
        let variance = pred.variances[pos];

        let score = scorer
            .score_batch(std::slice::from_ref(&samples[chosen]))
            .map_err(|e| {
                partial_failure(
                    DetectError::ScorerFailure(e),
                    &typical,
                    Some(hyper),
                    &trace,
                )
            })?[0];
        pool.indices.remove(pos);
        typical.indices.push(chosen);
        typical.targets.push(score);

        let warm = if cfg.cold_start { None } else { Some(&hyper) };
        let (new_hyper, objective) = fit_centered(&typical, sim, warm, jitter, opt)
            .map_err(|e| partial_failure(e.into(), &typical, Some(hyper), &trace))?;
        hyper = new_hyper;
        trace.push(SelectionStep {
            chosen_index: chosen,
            variance,
            objective,
        });
    }

    let queries_used = typical.len();
    Ok(SurrogateFit {
        typical_set: typical,
        hyper,
        selection_trace: trace,
        queries_used,
    })
}

fn partial_failure(
    error: DetectError,
    typical: &TypicalSet,
    hyper: Option<GPHyperparams>,
    trace: &[SelectionStep],
) -> SelectionFailure {
    SelectionFailure {
        error,
        partial: hyper.map(|h| SurrogateFit {
            typical_set: typical.clone(),
            hyper: h,
            selection_trace: trace.to_vec(),
            queries_used: typical.len(),
        }),
    }
}
