//! Probability-curvature detection: the candidate's log-probability minus
//! the mean log-probability of its perturbations, estimated either with the
//! GP surrogate (exact scores for the typical set, posterior means for the
//! rest) or with the random-perturbation baseline under the same budget.

use rand::prelude::*;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::DetectError;
use crate::gp::OptimizerConfig;
use crate::kernel::{symmetrize, SimilarityMatrix};
use crate::providers::{Perturber, Scorer, SimilarityProvider};
use crate::selection::{pool_posterior, run_selection_loop, SelectionConfig, SurrogateFit};
use crate::types::{derive_seed, TextSample};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Surrogate,
    Baseline,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Method::Surrogate => write!(f, "surrogate"),
            Method::Baseline => write!(f, "baseline"),
        }
    }
}

/// Detection settings for one candidate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionConfig {
    /// Number of perturbations N used to estimate the measure.
    pub n_perturbations: usize,
    /// Total scorer queries allowed; equals the typical-set budget T.
    pub query_budget: usize,
    /// Optional decision cutoff; when present the result carries a decision.
    pub threshold: Option<f64>,
    pub method: Method,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        DetectionConfig {
            n_perturbations: 200,
            query_budget: 10,
            threshold: None,
            method: Method::Surrogate,
        }
    }
}

impl DetectionConfig {
    pub fn validate(&self) -> Result<(), DetectError> {
        if self.n_perturbations < 1 {
            return Err(DetectError::InvalidConfig(
                "n_perturbations must be >= 1".into(),
            ));
        }
        if self.query_budget < 2 {
            return Err(DetectError::InvalidConfig(
                "query_budget must be >= 2".into(),
            ));
        }
        Ok(())
    }
}

/// Outcome of one detection run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DetectionResult {
    pub candidate_id: String,
    /// The curvature measure (nats); larger means more machine-like.
    pub measure: f64,
    pub queries_used: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub decision: Option<bool>,
    pub method: Method,
    #[serde(skip)]
    pub fit: Option<SurrogateFit>,
}

/// The Monte-Carlo curvature measure: candidate log-probability minus the
/// mean perturbation log-probability.
pub fn estimate_measure(
    candidate_logp: f64,
    perturbation_scores: &[f64],
) -> Result<f64, DetectError> {
    if perturbation_scores.is_empty() {
        return Err(DetectError::EmptyScores);
    }
    if perturbation_scores.iter().any(|s| !s.is_finite()) {
        return Err(DetectError::InvalidConfig(
            "perturbation scores must be finite".into(),
        ));
    }
    let mean = perturbation_scores.iter().sum::<f64>() / perturbation_scores.len() as f64;
    Ok(candidate_logp - mean)
}

/// Strict threshold decision.
pub fn decide(measure: f64, threshold: f64) -> bool {
    measure > threshold
}

/// Candidate plus its N perturbations, candidate first. The same list is
/// shared between methods for paired comparisons.
pub fn prepare_samples(
    candidate: &TextSample,
    perturber: &dyn Perturber,
    n: usize,
    seed: u64,
) -> Result<Vec<TextSample>, DetectError> {
    let perturbations = perturber
        .perturb_batch(candidate, n, seed)
        .map_err(DetectError::PerturberFailure)?;
    let mut samples = Vec::with_capacity(n + 1);
    samples.push(candidate.clone());
    samples.extend(perturbations);
    Ok(samples)
}

/// Surrogate measure over a prepared sample list and similarity matrix.
/// Typical-set positions keep their exact queried scores; every other
/// perturbation gets the GP posterior mean.
pub fn surrogate_measure(
    samples: &[TextSample],
    sim: &SimilarityMatrix,
    scorer: &dyn Scorer,
    sel: &SelectionConfig,
    opt: &OptimizerConfig,
) -> Result<(f64, SurrogateFit), DetectError> {
    let fit = run_selection_loop(samples, sim, sel, scorer, opt).map_err(|f| f.error)?;
    let n = samples.len() - 1;

    let mut scores = vec![f64::NAN; n + 1];
    for (pos, &idx) in fit.typical_set.indices.iter().enumerate() {
        scores[idx] = fit.typical_set.targets[pos];
    }
    let unscored: Vec<usize> = (1..=n).filter(|i| scores[*i].is_nan()).collect();
    if !unscored.is_empty() {
        let pred = pool_posterior(&fit.typical_set, &fit.hyper, sim, &unscored)?;
        for (k, &idx) in unscored.iter().enumerate() {
            scores[idx] = pred.means[k];
        }
    }
    let measure = estimate_measure(scores[0], &scores[1..])?;
    Ok((measure, fit))
}

/// Baseline (DetectGPT-style) measure: the candidate plus `budget - 1`
/// seeded-random perturbations from the shared list, all scored exactly.
pub fn baseline_measure(
    samples: &[TextSample],
    scorer: &dyn Scorer,
    budget: usize,
    seed: u64,
) -> Result<(f64, usize), DetectError> {
    let n = samples.len() - 1;
    let take = budget - 1;
    if take > n {
        return Err(DetectError::InvalidConfig(format!(
            "budget {budget} needs {take} perturbations, only {n} available"
        )));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut pool: Vec<usize> = (1..=n).collect();
    let mut picked = Vec::with_capacity(take);
    for _ in 0..take {
        let k = rng.gen_range(0..pool.len());
        picked.push(pool.swap_remove(k));
    }

    // one batched request: candidate plus the chosen perturbations
    let mut batch: Vec<TextSample> = Vec::with_capacity(take + 1);
    batch.push(samples[0].clone());
    batch.extend(picked.iter().map(|&i| samples[i].clone()));
    let scored = scorer
        .score_batch(&batch)
        .map_err(DetectError::ScorerFailure)?;
    let measure = estimate_measure(scored[0], &scored[1..])?;
    Ok((measure, take + 1))
}

/// Full surrogate pipeline for one candidate: perturb, build the similarity
/// matrix, run the selection loop, interpolate, and compute the measure.
pub fn surrogate_detect(
    candidate: &TextSample,
    scorer: &dyn Scorer,
    perturber: &dyn Perturber,
    similarity: &dyn SimilarityProvider,
    det: &DetectionConfig,
    sel: &SelectionConfig,
    opt: &OptimizerConfig,
) -> Result<DetectionResult, DetectError> {
    det.validate()?;
    sel.validate()?;
    if det.query_budget != sel.budget {
        return Err(DetectError::InvalidConfig(format!(
            "query_budget {} must equal selection budget {}",
            det.query_budget, sel.budget
        )));
    }
    let samples = prepare_samples(
        candidate,
        perturber,
        det.n_perturbations,
        derive_seed(sel.rng_seed, 0x70, 0),
    )?;
    let raw = similarity
        .similarity_batch(&samples)
        .map_err(DetectError::SimilarityFailure)?;
    let sim = symmetrize(&raw)?;
    let (measure, fit) = surrogate_measure(&samples, &sim, scorer, sel, opt)?;
    Ok(DetectionResult {
        candidate_id: candidate.id.clone(),
        measure,
        queries_used: fit.queries_used,
        decision: det.threshold.map(|d| decide(measure, d)),
        method: Method::Surrogate,
        fit: Some(fit),
    })
}

/// Full baseline pipeline for one candidate under the same budget.
pub fn baseline_detect(
    candidate: &TextSample,
    scorer: &dyn Scorer,
    perturber: &dyn Perturber,
    det: &DetectionConfig,
    seed: u64,
) -> Result<DetectionResult, DetectError> {
    det.validate()?;
    let samples = prepare_samples(
        candidate,
        perturber,
        det.n_perturbations,
        derive_seed(seed, 0x70, 0),
    )?;
    let (measure, queries_used) =
        baseline_measure(&samples, scorer, det.query_budget, derive_seed(seed, 0x71, 0))?;
    Ok(DetectionResult {
        candidate_id: candidate.id.clone(),
        measure,
        queries_used,
        decision: det.threshold.map(|d| decide(measure, d)),
        method: Method::Baseline,
        fit: None,
    })
}
