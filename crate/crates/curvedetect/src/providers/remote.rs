//! HTTP batch clients for hosted scorer / perturber / similarity services.
//!
//! Wire protocol: UTF-8 JSON over POST.
//!   POST {base}/v1/logprob     {"model", "texts": [...]}             -> {"log_probs": [...]}
//!   POST {base}/v1/perturb     {"text", "n", "mask_fraction",
//!                               "span_length", "seed"}               -> {"perturbations": [...]}
//!   POST {base}/v1/similarity  {"texts": [...]}                      -> {"matrix": [[...]]}
//!
//! Requests carry an `Idempotency-Key` header that is stable across retries.
//! Retries use exponential backoff with jitter and apply to timeouts,
//! connection errors, and 5xx statuses; partial batches are never returned.

use std::time::Duration;

use nalgebra::DMatrix;
use serde::Deserialize;
use serde_json::json;

use super::{Perturber, Scorer, SimilarityProvider};
use crate::error::ProviderError;
use crate::types::TextSample;

const AUTH_TOKEN_ENV: &str = "CD_API_TOKEN";

struct HttpClient {
    client: reqwest::blocking::Client,
    endpoint: String,
    timeout_secs: u64,
    retries: usize,
}

impl HttpClient {
    fn new(endpoint: &str, timeout_secs: u64, retries: usize) -> Self {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(timeout_secs))
            .build()
            .expect("reqwest client");
        HttpClient {
            client,
            endpoint: endpoint.trim_end_matches('/').to_string(),
            timeout_secs,
            retries,
        }
    }

    fn post(&self, path: &str, body: &serde_json::Value) -> Result<Vec<u8>, ProviderError> {
        let url = format!("{}{}", self.endpoint, path);
        let request_id = uuid::Uuid::new_v4().to_string();
        let mut attempt = 0usize;
        loop {
            let mut req = self
                .client
                .post(&url)
                .header("Idempotency-Key", &request_id)
                .header("Content-Type", "application/json")
                .json(body);
            if let Ok(token) = std::env::var(AUTH_TOKEN_ENV) {
                req = req.bearer_auth(token);
            }
            let result = req.send();
            match result {
                Ok(resp) => {
                    let status = resp.status();
                    if status.is_success() {
                        return resp.bytes().map(|b| b.to_vec()).map_err(|e| {
                            ProviderError::MalformedResponse {
                                request_id: request_id.clone(),
                                detail: e.to_string(),
                            }
                        });
                    }
                    if status.is_server_error() && attempt < self.retries {
                        attempt += 1;
                        backoff(attempt);
                        continue;
                    }
                    return Err(ProviderError::HttpStatus {
                        request_id,
                        endpoint: url,
                        code: status.as_u16(),
                    });
                }
                Err(e) if (e.is_timeout() || e.is_connect()) && attempt < self.retries => {
                    attempt += 1;
                    backoff(attempt);
                }
                Err(e) if e.is_timeout() => {
                    return Err(ProviderError::Timeout {
                        request_id,
                        endpoint: url,
                        seconds: self.timeout_secs,
                    });
                }
                Err(e) => {
                    return Err(ProviderError::MalformedResponse {
                        request_id,
                        detail: e.to_string(),
                    });
                }
            }
        }
    }
}

fn backoff(attempt: usize) {
    let base = 100u64 << attempt.min(6);
    let jitter = uuid::Uuid::new_v4().as_u128() as u64 % (base / 2 + 1);
    std::thread::sleep(Duration::from_millis(base + jitter));
}

fn text_of(s: &TextSample) -> Result<&str, ProviderError> {
    s.text.as_deref().ok_or_else(|| ProviderError::MissingField {
        id: s.id.clone(),
        field: "text".into(),
    })
}

#[derive(Deserialize)]
struct LogprobResponse {
    log_probs: Vec<f64>,
}

/// Parses a `/v1/logprob` response body, enforcing the length contract.
pub fn parse_logprob_response(body: &[u8], expected: usize) -> Result<Vec<f64>, String> {
    let parsed: LogprobResponse =
        serde_json::from_slice(body).map_err(|e| format!("invalid JSON: {e}"))?;
    if parsed.log_probs.len() != expected {
        return Err(format!(
            "expected {expected} log_probs, got {}",
            parsed.log_probs.len()
        ));
    }
    if parsed.log_probs.iter().any(|x| !x.is_finite()) {
        return Err("non-finite log probability".into());
    }
    Ok(parsed.log_probs)
}

#[derive(Deserialize)]
struct PerturbResponse {
    perturbations: Vec<String>,
}

/// Parses a `/v1/perturb` response body, enforcing the count contract.
pub fn parse_perturb_response(body: &[u8], expected: usize) -> Result<Vec<String>, String> {
    let parsed: PerturbResponse =
        serde_json::from_slice(body).map_err(|e| format!("invalid JSON: {e}"))?;
    if parsed.perturbations.len() != expected {
        return Err(format!(
            "expected {expected} perturbations, got {}",
            parsed.perturbations.len()
        ));
    }
    Ok(parsed.perturbations)
}

#[derive(Deserialize)]
struct SimilarityResponse {
    matrix: Vec<Vec<f64>>,
}

/// Parses a `/v1/similarity` response body into a square raw matrix.
pub fn parse_similarity_response(body: &[u8], expected: usize) -> Result<DMatrix<f64>, String> {
    let parsed: SimilarityResponse =
        serde_json::from_slice(body).map_err(|e| format!("invalid JSON: {e}"))?;
    if parsed.matrix.len() != expected {
        return Err(format!(
            "expected {expected} rows, got {}",
            parsed.matrix.len()
        ));
    }
    for (i, row) in parsed.matrix.iter().enumerate() {
        if row.len() != expected {
            return Err(format!("row {i} has {} cols, expected {expected}", row.len()));
        }
    }
    Ok(DMatrix::from_fn(expected, expected, |i, j| {
        parsed.matrix[i][j]
    }))
}

/// Remote log-probability scorer.
pub struct RemoteScorer {
    http: HttpClient,
    model: String,
    max_batch: usize,
}

impl RemoteScorer {
    pub fn new(endpoint: &str, model: &str, timeout_secs: u64, max_batch: usize, retries: usize) -> Self {
        RemoteScorer {
            http: HttpClient::new(endpoint, timeout_secs, retries),
            model: model.to_string(),
            max_batch: max_batch.max(1),
        }
    }
}

impl Scorer for RemoteScorer {
    fn score_batch(&self, texts: &[TextSample]) -> Result<Vec<f64>, ProviderError> {
        if texts.is_empty() {
            return Err(ProviderError::InvalidArgument("empty batch".into()));
        }
        let mut out = Vec::with_capacity(texts.len());
        for chunk in texts.chunks(self.max_batch) {
            let bodies: Vec<&str> = chunk.iter().map(text_of).collect::<Result<_, _>>()?;
            let body = json!({ "model": self.model, "texts": bodies });
            let bytes = self.http.post("/v1/logprob", &body)?;
            let scores = parse_logprob_response(&bytes, chunk.len()).map_err(|detail| {
                ProviderError::MalformedResponse {
                    request_id: "logprob".into(),
                    detail,
                }
            })?;
            out.extend(scores);
        }
        Ok(out)
    }

    fn config_string(&self) -> String {
        format!("remote-scorer(model={},endpoint={})", self.model, self.http.endpoint)
    }
}

/// Remote mask-and-fill perturber.
pub struct RemotePerturber {
    http: HttpClient,
    pub mask_fraction: f64,
    pub span_length: usize,
}

impl RemotePerturber {
    pub fn new(
        endpoint: &str,
        mask_fraction: f64,
        span_length: usize,
        timeout_secs: u64,
        retries: usize,
    ) -> Self {
        RemotePerturber {
            http: HttpClient::new(endpoint, timeout_secs, retries),
            mask_fraction,
            span_length,
        }
    }
}

impl Perturber for RemotePerturber {
    fn perturb_batch(
        &self,
        text: &TextSample,
        n: usize,
        seed: u64,
    ) -> Result<Vec<TextSample>, ProviderError> {
        if n == 0 {
            return Err(ProviderError::InvalidArgument("n must be >= 1".into()));
        }
        let body = json!({
            "text": text_of(text)?,
            "n": n,
            "mask_fraction": self.mask_fraction,
            "span_length": self.span_length,
            "seed": seed,
        });
        let bytes = self.http.post("/v1/perturb", &body)?;
        let variants = parse_perturb_response(&bytes, n).map_err(|detail| {
            ProviderError::MalformedResponse {
                request_id: "perturb".into(),
                detail,
            }
        })?;
        Ok(variants
            .into_iter()
            .enumerate()
            .map(|(k, t)| {
                let mut s = TextSample::from_text(format!("{}-p{k:04}", text.id), t);
                s.source_model = text.source_model.clone();
                s
            })
            .collect())
    }

    fn config_string(&self) -> String {
        format!(
            "remote-perturber(mask={},span={},endpoint={})",
            self.mask_fraction, self.span_length, self.http.endpoint
        )
    }
}

/// Remote pairwise similarity (BertScore-style) client.
pub struct RemoteSimilarity {
    http: HttpClient,
}

impl RemoteSimilarity {
    pub fn new(endpoint: &str, timeout_secs: u64, retries: usize) -> Self {
        RemoteSimilarity {
            http: HttpClient::new(endpoint, timeout_secs, retries),
        }
    }
}

impl SimilarityProvider for RemoteSimilarity {
    fn similarity_batch(&self, texts: &[TextSample]) -> Result<DMatrix<f64>, ProviderError> {
        if texts.len() < 2 {
            return Err(ProviderError::InvalidArgument(
                "similarity needs at least 2 texts".into(),
            ));
        }
        let bodies: Vec<&str> = texts.iter().map(text_of).collect::<Result<_, _>>()?;
        let body = json!({ "texts": bodies });
        let bytes = self.http.post("/v1/similarity", &body)?;
        parse_similarity_response(&bytes, texts.len()).map_err(|detail| {
            ProviderError::MalformedResponse {
                request_id: "similarity".into(),
                detail,
            }
        })
    }

    fn config_string(&self) -> String {
        format!("remote-similarity(endpoint={})", self.http.endpoint)
    }
}
