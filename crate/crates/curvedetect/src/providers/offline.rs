//! Deterministic offline providers. The latent family runs the pipeline
//! against the simulation world; the token family gives a dependency-free
//! text mode (whitespace tokens, unigram-F1 similarity).

use std::collections::HashMap;

use nalgebra::DMatrix;
use rand::prelude::*;
use rand_chacha::ChaCha12Rng;

use super::{Perturber, Scorer, SimilarityProvider};
use crate::error::ProviderError;
use crate::sim::{self, WorldSpec};
use crate::types::TextSample;

fn latent_of<'a>(s: &'a TextSample) -> Result<&'a [f64], ProviderError> {
    s.latent.as_deref().ok_or_else(|| ProviderError::MissingField {
        id: s.id.clone(),
        field: "latent".into(),
    })
}

fn text_of<'a>(s: &'a TextSample) -> Result<&'a str, ProviderError> {
    s.text.as_deref().ok_or_else(|| ProviderError::MissingField {
        id: s.id.clone(),
        field: "text".into(),
    })
}

/// Scores a latent sample with the world's log-density.
pub struct SyntheticScorer {
    pub world: WorldSpec,
}

impl Scorer for SyntheticScorer {
    fn score_batch(&self, texts: &[TextSample]) -> Result<Vec<f64>, ProviderError> {
        if texts.is_empty() {
            return Err(ProviderError::InvalidArgument("empty batch".into()));
        }
        texts
            .iter()
            .map(|s| {
                let v = latent_of(s)?;
                sim::log_density(&self.world, v)
                    .map_err(|e| ProviderError::InvalidArgument(e.to_string()))
            })
            .collect()
    }

    fn config_string(&self) -> String {
        format!(
            "offline-synthetic(dim={},modes={},seed={})",
            self.world.dim,
            self.world.n_modes(),
            self.world.seed
        )
    }
}

/// Isotropic Gaussian neighbors in latent space.
pub struct LatentPerturber {
    pub world: WorldSpec,
}

impl Perturber for LatentPerturber {
    fn perturb_batch(
        &self,
        text: &TextSample,
        n: usize,
        seed: u64,
    ) -> Result<Vec<TextSample>, ProviderError> {
        if n == 0 {
            return Err(ProviderError::InvalidArgument("n must be >= 1".into()));
        }
        let v = latent_of(text)?;
        let neighbors = sim::perturb_latent(&self.world, v, n, seed);
        Ok(neighbors
            .into_iter()
            .enumerate()
            .map(|(k, nb)| sim::perturbation_sample(text, k, nb))
            .collect())
    }

    fn config_string(&self) -> String {
        format!("offline-latent(scale={})", self.world.perturb_scale)
    }
}

/// RBF similarity over latent vectors. Symmetric with unit diagonal by
/// construction, so symmetrization is the identity on its output.
pub struct LatentSimilarity {
    pub length_scale: f64,
}

impl SimilarityProvider for LatentSimilarity {
    fn similarity_batch(&self, texts: &[TextSample]) -> Result<DMatrix<f64>, ProviderError> {
        if texts.len() < 2 {
            return Err(ProviderError::InvalidArgument(
                "similarity needs at least 2 texts".into(),
            ));
        }
        let vecs: Vec<&[f64]> = texts
            .iter()
            .map(latent_of)
            .collect::<Result<_, _>>()?;
        let n = vecs.len();
        Ok(DMatrix::from_fn(n, n, |i, j| {
            sim::latent_similarity(vecs[i], vecs[j], self.length_scale)
        }))
    }

    fn config_string(&self) -> String {
        format!("offline-rbf(l={})", self.length_scale)
    }
}

/// Mask-and-fill over whitespace tokens: masks `ceil(mask_fraction * tokens)`
/// positions in spans of `span_length` and refills them with seeded draws
/// from the text's own vocabulary.
pub struct TokenPerturber {
    pub mask_fraction: f64,
    pub span_length: usize,
}

impl TokenPerturber {
    /// The deterministic mask plan for one perturbation: sorted distinct
    /// token positions to replace. Exposed so tests can replay it.
    pub fn mask_plan(&self, n_tokens: usize, rng: &mut impl Rng) -> Vec<usize> {
        let target = (self.mask_fraction * n_tokens as f64).ceil() as usize;
        let target = target.clamp(1, n_tokens);
        let mut chosen: Vec<usize> = Vec::new();
        while chosen.len() < target {
            let start = rng.gen_range(0..n_tokens);
            for p in start..(start + self.span_length).min(n_tokens) {
                if chosen.len() >= target {
                    break;
                }
                if !chosen.contains(&p) {
                    chosen.push(p);
                }
            }
        }
        chosen.sort_unstable();
        chosen
    }
}

impl Perturber for TokenPerturber {
    fn perturb_batch(
        &self,
        text: &TextSample,
        n: usize,
        seed: u64,
    ) -> Result<Vec<TextSample>, ProviderError> {
        if n == 0 {
            return Err(ProviderError::InvalidArgument("n must be >= 1".into()));
        }
        let body = text_of(text)?;
        let tokens: Vec<&str> = body.split_whitespace().collect();
        if tokens.len() < self.span_length {
            return Err(ProviderError::TextTooShort {
                tokens: tokens.len(),
                span_length: self.span_length,
            });
        }
        let vocab: Vec<&str> = {
            let mut v: Vec<&str> = tokens.clone();
            v.sort_unstable();
            v.dedup();
            v
        };
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut out = Vec::with_capacity(n);
        for k in 0..n {
            let plan = self.mask_plan(tokens.len(), &mut rng);
            let mut new_tokens: Vec<String> = tokens.iter().map(|t| t.to_string()).collect();
            for &p in &plan {
                let replacement = if vocab.len() > 1 {
                    // draw from the vocabulary minus the current token
                    loop {
                        let c = vocab[rng.gen_range(0..vocab.len())];
                        if c != tokens[p] {
                            break c.to_string();
                        }
                    }
                } else {
                    format!("{}'", tokens[p])
                };
                new_tokens[p] = replacement;
            }
            let mut s = TextSample::from_text(
                format!("{}-p{k:04}", text.id),
                new_tokens.join(" "),
            );
            s.source_model = text.source_model.clone();
            out.push(s);
        }
        Ok(out)
    }

    fn config_string(&self) -> String {
        format!(
            "offline-token(mask={},span={})",
            self.mask_fraction, self.span_length
        )
    }
}

/// Unigram F1 over whitespace token multisets: harmonic mean of token
/// precision and recall. Symmetric with unit diagonal.
pub struct TokenF1Similarity;

pub(crate) fn token_f1(a: &str, b: &str) -> f64 {
    fn count(t: &str) -> HashMap<&str, usize> {
        let mut m: HashMap<&str, usize> = HashMap::new();
        for tok in t.split_whitespace() {
            *m.entry(tok).or_default() += 1;
        }
        m
    }
    let ca = count(a);
    let cb = count(b);
    let na: usize = ca.values().sum();
    let nb: usize = cb.values().sum();
    if na == 0 || nb == 0 {
        return 0.0;
    }
    let overlap: usize = ca
        .iter()
        .map(|(tok, &c)| c.min(*cb.get(tok).unwrap_or(&0)))
        .sum();
    if overlap == 0 {
        return 0.0;
    }
    let p = overlap as f64 / na as f64;
    let r = overlap as f64 / nb as f64;
    2.0 * p * r / (p + r)
}

impl SimilarityProvider for TokenF1Similarity {
    fn similarity_batch(&self, texts: &[TextSample]) -> Result<DMatrix<f64>, ProviderError> {
        if texts.len() < 2 {
            return Err(ProviderError::InvalidArgument(
                "similarity needs at least 2 texts".into(),
            ));
        }
        let bodies: Vec<&str> = texts.iter().map(text_of).collect::<Result<_, _>>()?;
        let n = bodies.len();
        Ok(DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                1.0
            } else {
                token_f1(bodies[i], bodies[j])
            }
        }))
    }

    fn config_string(&self) -> String {
        "offline-token-f1".into()
    }
}
