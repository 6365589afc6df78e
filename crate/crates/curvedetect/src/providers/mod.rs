//! Provider abstractions for the three external capabilities: log-probability
//! scoring, perturbation, and pairwise similarity. Each exists as a remote
//! batch HTTP client and as a deterministic offline substitute.

mod offline;
mod remote;

pub use offline::{LatentPerturber, LatentSimilarity, SyntheticScorer, TokenF1Similarity, TokenPerturber};
pub use remote::{
    parse_logprob_response, parse_perturb_response, parse_similarity_response, RemotePerturber,
    RemoteScorer, RemoteSimilarity,
};

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::ProviderError;
use crate::types::TextSample;

/// Scores passages with the source model: one total sequence
/// log-probability (nats) per input, order-preserving.
pub trait Scorer: Send + Sync {
    fn score_batch(&self, texts: &[TextSample]) -> Result<Vec<f64>, ProviderError>;
    /// Self-reported configuration string, recorded in run metadata.
    fn config_string(&self) -> String;
}

/// Samples semantically close rewrites of a passage.
pub trait Perturber: Send + Sync {
    fn perturb_batch(
        &self,
        text: &TextSample,
        n: usize,
        seed: u64,
    ) -> Result<Vec<TextSample>, ProviderError>;
    fn config_string(&self) -> String;
}

/// Pairwise similarity scores over a set of passages. The raw matrix need
/// not be symmetric; the kernel module symmetrizes it.
pub trait SimilarityProvider: Send + Sync {
    fn similarity_batch(&self, texts: &[TextSample]) -> Result<DMatrix<f64>, ProviderError>;
    fn config_string(&self) -> String;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ProviderKind {
    Remote,
    #[default]
    Offline,
}

/// Configuration of a scorer provider.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScorerSpec {
    pub kind: ProviderKind,
    pub endpoint: Option<String>,
    /// Model identifier forwarded verbatim to the service.
    pub model: Option<String>,
    pub timeout_secs: u64,
    pub max_batch: usize,
    pub retries: usize,
}

impl Default for ScorerSpec {
    fn default() -> Self {
        ScorerSpec {
            kind: ProviderKind::Offline,
            endpoint: None,
            model: None,
            timeout_secs: 60,
            max_batch: 32,
            retries: 3,
        }
    }
}

/// Configuration of a perturber provider.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PerturberSpec {
    pub kind: ProviderKind,
    pub endpoint: Option<String>,
    pub mask_fraction: f64,
    pub span_length: usize,
    pub seed: u64,
    pub timeout_secs: u64,
    pub retries: usize,
}

impl Default for PerturberSpec {
    fn default() -> Self {
        PerturberSpec {
            kind: ProviderKind::Offline,
            endpoint: None,
            mask_fraction: 0.15,
            span_length: 2,
            seed: 0,
            timeout_secs: 60,
            retries: 3,
        }
    }
}

impl PerturberSpec {
    pub fn validate(&self) -> Result<(), ProviderError> {
        if !(self.mask_fraction > 0.0 && self.mask_fraction < 1.0) {
            return Err(ProviderError::InvalidArgument(format!(
                "mask_fraction {} not in (0, 1)",
                self.mask_fraction
            )));
        }
        if self.span_length < 1 {
            return Err(ProviderError::InvalidArgument(
                "span_length must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Configuration of a similarity provider.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimilaritySpec {
    pub kind: ProviderKind,
    pub endpoint: Option<String>,
    pub timeout_secs: u64,
    pub max_batch: usize,
    pub retries: usize,
}

impl Default for SimilaritySpec {
    fn default() -> Self {
        SimilaritySpec {
            kind: ProviderKind::Offline,
            endpoint: None,
            timeout_secs: 60,
            max_batch: 64,
            retries: 3,
        }
    }
}

/// Wraps any scorer with an exact, monotone query counter. Budget-soundness
/// tests and the selection loop's accounting both rely on it.
pub struct CountingScorer {
    inner: Arc<dyn Scorer>,
    count: AtomicUsize,
}

impl CountingScorer {
    pub fn new(inner: Arc<dyn Scorer>) -> Self {
        CountingScorer {
            inner,
            count: AtomicUsize::new(0),
        }
    }

    /// Total texts scored so far (one query per text).
    pub fn queries(&self) -> usize {
        self.count.load(Ordering::SeqCst)
    }
}

impl Scorer for CountingScorer {
    fn score_batch(&self, texts: &[TextSample]) -> Result<Vec<f64>, ProviderError> {
        let out = self.inner.score_batch(texts)?;
        self.count.fetch_add(texts.len(), Ordering::SeqCst);
        Ok(out)
    }

    fn config_string(&self) -> String {
        self.inner.config_string()
    }
}

/// Adds a constant to every score of an inner scorer. Used by the
/// translation-equivariance checks.
pub struct ShiftedScorer {
    pub inner: Arc<dyn Scorer>,
    pub shift: f64,
}

impl Scorer for ShiftedScorer {
    fn score_batch(&self, texts: &[TextSample]) -> Result<Vec<f64>, ProviderError> {
        Ok(self
            .inner
            .score_batch(texts)?
            .into_iter()
            .map(|s| s + self.shift)
            .collect())
    }

    fn config_string(&self) -> String {
        format!("shift({})+{}", self.shift, self.inner.config_string())
    }
}
