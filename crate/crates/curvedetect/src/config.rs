//! Run configuration: a single JSON document mirroring the full settings
//! tree. Precedence is flags > file > defaults; the CLI layer applies flag
//! overrides after loading.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::detect::DetectionConfig;
use crate::gp::OptimizerConfig;
use crate::providers::{
    LatentPerturber, LatentSimilarity, Perturber, PerturberSpec, ProviderKind, RemotePerturber,
    RemoteScorer, RemoteSimilarity, Scorer, ScorerSpec, SimilarityProvider, SimilaritySpec,
    SyntheticScorer, TokenF1Similarity, TokenPerturber,
};
use crate::selection::SelectionConfig;
use crate::sim::WorldSpec;

pub const SCORER_URL_ENV: &str = "CD_SCORER_URL";
pub const PERTURBER_URL_ENV: &str = "CD_PERTURBER_URL";
pub const SIM_URL_ENV: &str = "CD_SIM_URL";

/// Everything one run needs; serializes to the config file format and to
/// the metadata sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub scorer: ScorerSpec,
    pub perturber: PerturberSpec,
    pub similarity: SimilaritySpec,
    pub detection: DetectionConfig,
    pub selection: SelectionConfig,
    pub optimizer: OptimizerConfig,
    pub world: Option<WorldSpec>,
    pub dataset: Option<String>,
    pub output: Option<String>,
    pub seed: u64,
    pub log_level: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            scorer: ScorerSpec::default(),
            perturber: PerturberSpec::default(),
            similarity: SimilaritySpec::default(),
            detection: DetectionConfig::default(),
            selection: SelectionConfig::default(),
            optimizer: OptimizerConfig::default(),
            world: None,
            dataset: None,
            output: None,
            seed: 0,
            log_level: "info".into(),
        }
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self, String> {
        let body = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        parse_run_config(&body)
    }

    /// Mode-independent validation; mode-specific requirements live in the
    /// command handlers, before any network call.
    pub fn validate(&self) -> Result<(), String> {
        self.perturber.validate().map_err(|e| e.to_string())?;
        if self.scorer.kind == ProviderKind::Remote && self.scorer.endpoint.is_none() {
            return Err("remote scorer requires an endpoint URL".into());
        }
        if self.perturber.kind == ProviderKind::Remote && self.perturber.endpoint.is_none() {
            return Err("remote perturber requires an endpoint URL".into());
        }
        if self.similarity.kind == ProviderKind::Remote && self.similarity.endpoint.is_none() {
            return Err("remote similarity requires an endpoint URL".into());
        }
        if self.scorer.max_batch < 1 || self.similarity.max_batch < 1 {
            return Err("batch size must be >= 1".into());
        }
        if let Some(w) = &self.world {
            w.validate()?;
        }
        self.selection.validate().map_err(|e| e.to_string())?;
        self.detection.validate().map_err(|e| e.to_string())?;
        Ok(())
    }

    pub fn build_scorer(&self) -> Result<Arc<dyn Scorer>, String> {
        match self.scorer.kind {
            ProviderKind::Remote => {
                let url = self
                    .scorer
                    .endpoint
                    .clone()
                    .ok_or("remote scorer requires an endpoint URL")?;
                Ok(Arc::new(RemoteScorer::new(
                    &url,
                    self.scorer.model.as_deref().unwrap_or("default"),
                    self.scorer.timeout_secs,
                    self.scorer.max_batch,
                    self.scorer.retries,
                )))
            }
            ProviderKind::Offline => {
                let world = self.world.clone().ok_or(
                    "offline scoring needs a simulation world (--simulate-world); \
                     plain text has no offline scorer",
                )?;
                Ok(Arc::new(SyntheticScorer { world }))
            }
        }
    }

    pub fn build_perturber(&self) -> Result<Arc<dyn Perturber>, String> {
        match self.perturber.kind {
            ProviderKind::Remote => {
                let url = self
                    .perturber
                    .endpoint
                    .clone()
                    .ok_or("remote perturber requires an endpoint URL")?;
                Ok(Arc::new(RemotePerturber::new(
                    &url,
                    self.perturber.mask_fraction,
                    self.perturber.span_length,
                    self.perturber.timeout_secs,
                    self.perturber.retries,
                )))
            }
            ProviderKind::Offline => match &self.world {
                Some(world) => Ok(Arc::new(LatentPerturber {
                    world: world.clone(),
                })),
                None => Ok(Arc::new(TokenPerturber {
                    mask_fraction: self.perturber.mask_fraction,
                    span_length: self.perturber.span_length,
                })),
            },
        }
    }

    pub fn build_similarity(&self) -> Result<Arc<dyn SimilarityProvider>, String> {
        match self.similarity.kind {
            ProviderKind::Remote => {
                let url = self
                    .similarity
                    .endpoint
                    .clone()
                    .ok_or("remote similarity requires an endpoint URL")?;
                Ok(Arc::new(RemoteSimilarity::new(
                    &url,
                    self.similarity.timeout_secs,
                    self.similarity.retries,
                )))
            }
            ProviderKind::Offline => match &self.world {
                Some(world) => Ok(Arc::new(LatentSimilarity {
                    length_scale: world.similarity_length_scale,
                })),
                None => Ok(Arc::new(TokenF1Similarity)),
            },
        }
    }
}

/// Parses a JSON run config; entry point shared with the fuzz targets.
pub fn parse_run_config(body: &str) -> Result<RunConfig, String> {
    let cfg: RunConfig = serde_json::from_str(body).map_err(|e| format!("invalid config: {e}"))?;
    Ok(cfg)
}

/// Parses a JSON world spec; entry point shared with the fuzz targets.
pub fn parse_world_spec(body: &str) -> Result<WorldSpec, String> {
    let world: WorldSpec =
        serde_json::from_str(body).map_err(|e| format!("invalid world spec: {e}"))?;
    world.validate()?;
    Ok(world)
}
