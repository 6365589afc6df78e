//! Dataset ingestion, AUROC, query-budget sweeps, cross source/proxy
//! matrices, and typicality reports.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::detect::{baseline_measure, prepare_samples, surrogate_measure, Method};
use crate::error::EvalError;
use crate::gp::OptimizerConfig;
use crate::kernel::{symmetrize, SimilarityMatrix};
use crate::providers::{Perturber, Scorer, SimilarityProvider};
use crate::selection::{SelectionConfig, SurrogateFit};
use crate::types::{derive_seed, Label, TextSample};

/// A labeled detection corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub name: String,
    pub records: Vec<TextSample>,
}

impl LabeledDataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn has_both_classes(&self) -> bool {
        let m = self
            .records
            .iter()
            .any(|r| r.label == Some(Label::Machine));
        let h = self.records.iter().any(|r| r.label == Some(Label::Human));
        m && h
    }
}

/// Rank-statistic AUROC: P(score_machine > score_human) + 0.5 P(tie),
/// computed with average ranks so ties are exact.
pub fn auroc(scores: &[f64], labels: &[bool]) -> Result<f64, EvalError> {
    if scores.len() != labels.len() {
        return Err(EvalError::ParseError {
            line: 0,
            detail: "scores and labels must have equal length".into(),
        });
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(EvalError::SingleClass);
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap());

    // average ranks over tie groups, 1-based
    let mut ranks = vec![0.0f64; scores.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg = (i + 1 + j + 1) as f64 / 2.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }

    let rank_sum_pos: f64 = (0..scores.len()).filter(|&k| labels[k]).map(|k| ranks[k]).sum();
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// Loads a JSONL dataset, one record per line. Blank lines are skipped;
/// malformed lines are reported with their line number.
pub fn load_dataset(path: &Path) -> Result<LabeledDataset, EvalError> {
    let file = std::fs::File::open(path).map_err(|source| EvalError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let reader = std::io::BufReader::new(file);
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into());
    parse_dataset(reader, &name)
}

/// Parses JSONL from any reader; entry point shared with the fuzz targets.
pub fn parse_dataset<R: BufRead>(reader: R, name: &str) -> Result<LabeledDataset, EvalError> {
    let mut records: Vec<TextSample> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| EvalError::ParseError {
            line: lineno + 1,
            detail: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record: TextSample =
            serde_json::from_str(&line).map_err(|e| EvalError::ParseError {
                line: lineno + 1,
                detail: e.to_string(),
            })?;
        if record.label.is_none() {
            return Err(EvalError::MissingLabel { line: lineno + 1 });
        }
        if record.text.is_none() && record.latent.is_none() {
            return Err(EvalError::ParseError {
                line: lineno + 1,
                detail: "record needs either text or latent".into(),
            });
        }
        if let Some(latent) = &record.latent {
            if latent.iter().any(|x| !x.is_finite()) {
                return Err(EvalError::ParseError {
                    line: lineno + 1,
                    detail: "latent coordinates must be finite".into(),
                });
            }
        }
        if !seen.insert(record.id.clone()) {
            return Err(EvalError::DuplicateId {
                id: record.id,
                line: lineno + 1,
            });
        }
        records.push(record);
    }
    Ok(LabeledDataset {
        name: name.to_string(),
        records,
    })
}

/// Writes a dataset as JSONL (the inverse of [`load_dataset`]).
pub fn save_dataset<W: Write>(dataset: &LabeledDataset, mut out: W) -> std::io::Result<()> {
    for record in &dataset.records {
        serde_json::to_writer(&mut out, record)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// The detection providers for one run.
pub struct ProviderSet {
    pub scorer: Arc<dyn Scorer>,
    pub perturber: Arc<dyn Perturber>,
    pub similarity: Arc<dyn SimilarityProvider>,
}

/// One sweep cell: a (dataset, method, budget, seed) AUROC.
#[derive(Debug, Clone, Serialize)]
pub struct SweepCell {
    pub dataset: String,
    pub method: Method,
    pub budget: usize,
    pub seed: u64,
    pub auroc: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Seed-aggregated statistics for one (method, budget).
#[derive(Debug, Clone, Serialize)]
pub struct SweepAggregate {
    pub method: Method,
    pub budget: usize,
    pub mean_auroc: f64,
    pub var_auroc: f64,
    pub n_seeds: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepReport {
    pub cells: Vec<SweepCell>,
    pub aggregates: Vec<SweepAggregate>,
}

impl SweepReport {
    /// CSV with header `dataset,method,budget,seed,auroc`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["dataset", "method", "budget", "seed", "auroc"])?;
        for c in &self.cells {
            let auroc = c
                .auroc
                .map(|a| a.to_string())
                .unwrap_or_else(|| "failed".into());
            w.write_record([
                c.dataset.as_str(),
                &c.method.to_string(),
                &c.budget.to_string(),
                &c.seed.to_string(),
                &auroc,
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn has_failures(&self) -> bool {
        self.cells.iter().any(|c| c.auroc.is_none())
    }
}

fn aggregate(cells: &[SweepCell]) -> Vec<SweepAggregate> {
    let mut groups: BTreeMap<(String, usize), Vec<f64>> = BTreeMap::new();
    for c in cells {
        if let Some(a) = c.auroc {
            groups
                .entry((c.method.to_string(), c.budget))
                .or_default()
                .push(a);
        }
    }
    groups
        .into_iter()
        .map(|((method, budget), vals)| {
            let n = vals.len() as f64;
            let mean = vals.iter().sum::<f64>() / n;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            SweepAggregate {
                method: if method == "surrogate" {
                    Method::Surrogate
                } else {
                    Method::Baseline
                },
                budget,
                mean_auroc: mean,
                var_auroc: var,
                n_seeds: vals.len(),
            }
        })
        .collect()
}

/// Per-candidate measures for every (method, budget) pair, sharing one
/// perturbation set. Exactly mirrors the composition of `surrogate_detect`
/// and `baseline_detect` with `rng_seed = candidate_seed`.
#[allow(clippy::too_many_arguments)]
fn candidate_measures(
    candidate: &TextSample,
    providers: &ProviderSet,
    budgets: &[usize],
    methods: &[Method],
    n_perturbations: usize,
    base_sel: &SelectionConfig,
    opt: &OptimizerConfig,
    candidate_seed: u64,
) -> Vec<(Method, usize, Result<f64, String>)> {
    let samples = match prepare_samples(
        candidate,
        providers.perturber.as_ref(),
        n_perturbations,
        derive_seed(candidate_seed, 0x70, 0),
    ) {
        Ok(s) => s,
        Err(e) => {
            let msg = e.to_string();
            return methods
                .iter()
                .flat_map(|&m| {
                    let msg = msg.clone();
                    budgets.iter().map(move |&q| (m, q, Err(msg.clone())))
                })
                .collect();
        }
    };

    let needs_surrogate = methods.contains(&Method::Surrogate);
    let sim: Option<SimilarityMatrix> = if needs_surrogate {
        match providers
            .similarity
            .similarity_batch(&samples)
            .map_err(|e| e.to_string())
            .and_then(|raw| symmetrize(&raw).map_err(|e| e.to_string()))
        {
            Ok(s) => Some(s),
            Err(e) => {
                return methods
                    .iter()
                    .flat_map(|&m| {
                        budgets.iter().map({
                            let e = e.clone();
                            move |&q| {
                                if m == Method::Surrogate {
                                    (m, q, Err(e.clone()))
                                } else {
                                    (m, q, Err("skipped".to_string()))
                                }
                            }
                        })
                    })
                    .collect();
            }
        }
    } else {
        None
    };

    let mut out = Vec::new();
    for &method in methods {
        for &q in budgets {
            let res = match method {
                Method::Surrogate => {
                    let sel = SelectionConfig {
                        budget: q,
                        rng_seed: candidate_seed,
                        ..*base_sel
                    };
                    surrogate_measure(
                        &samples,
                        sim.as_ref().unwrap(),
                        providers.scorer.as_ref(),
                        &sel,
                        opt,
                    )
                    .map(|(m, _)| m)
                    .map_err(|e| e.to_string())
                }
                Method::Baseline => baseline_measure(
                    &samples,
                    providers.scorer.as_ref(),
                    q,
                    derive_seed(candidate_seed, 0x71, 0),
                )
                .map(|(m, _)| m)
                .map_err(|e| e.to_string()),
            };
            out.push((method, q, res));
        }
    }
    out
}

/// Runs both detectors over a budget grid and seeds, computing one AUROC per
/// (method, budget, seed) cell. Cells are independent jobs; provider
/// failures flag the affected cell without aborting the sweep.
#[allow(clippy::too_many_arguments)]
pub fn run_budget_sweep(
    dataset: &LabeledDataset,
    budgets: &[usize],
    methods: &[Method],
    seeds: &[u64],
    providers: &ProviderSet,
    n_perturbations: usize,
    base_sel: &SelectionConfig,
    opt: &OptimizerConfig,
) -> Result<SweepReport, EvalError> {
    if !dataset.has_both_classes() {
        return Err(EvalError::SingleClass);
    }
    if let Some(&q) = budgets.iter().find(|&&q| q < 2) {
        return Err(EvalError::ParseError {
            line: 0,
            detail: format!("budget {q} < 2"),
        });
    }

    let mut cells = Vec::new();
    for &seed in seeds {
        // per-candidate measures, parallel across candidates
        let per_candidate: Vec<Vec<(Method, usize, Result<f64, String>)>> = dataset
            .records
            .par_iter()
            .enumerate()
            .map(|(i, candidate)| {
                candidate_measures(
                    candidate,
                    providers,
                    budgets,
                    methods,
                    n_perturbations,
                    base_sel,
                    opt,
                    derive_seed(seed, 0xC0, i as u64),
                )
            })
            .collect();

        for &method in methods {
            for &q in budgets {
                let mut scores = Vec::with_capacity(dataset.len());
                let mut labels = Vec::with_capacity(dataset.len());
                let mut first_error: Option<String> = None;
                for (i, per) in per_candidate.iter().enumerate() {
                    let entry = per
                        .iter()
                        .find(|(m, b, _)| *m == method && *b == q)
                        .expect("cell present");
                    match &entry.2 {
                        Ok(m) => {
                            scores.push(*m);
                            labels.push(dataset.records[i].label == Some(Label::Machine));
                        }
                        Err(e) => {
                            if first_error.is_none() {
                                first_error = Some(e.clone());
                            }
                        }
                    }
                }
                let cell = if let Some(err) = first_error {
                    SweepCell {
                        dataset: dataset.name.clone(),
                        method,
                        budget: q,
                        seed,
                        auroc: None,
                        error: Some(err),
                    }
                } else {
                    match auroc(&scores, &labels) {
                        Ok(a) => SweepCell {
                            dataset: dataset.name.clone(),
                            method,
                            budget: q,
                            seed,
                            auroc: Some(a),
                            error: None,
                        },
                        Err(e) => SweepCell {
                            dataset: dataset.name.clone(),
                            method,
                            budget: q,
                            seed,
                            auroc: None,
                            error: Some(e.to_string()),
                        },
                    }
                };
                cells.push(cell);
            }
        }
    }
    let aggregates = aggregate(&cells);
    Ok(SweepReport { cells, aggregates })
}

/// Cross source/proxy AUROC grid.
#[derive(Debug, Clone)]
pub struct CrossMatrix {
    pub sources: Vec<String>,
    pub proxies: Vec<String>,
    /// cells[source][proxy], Err is the failure flag.
    pub cells: Vec<Vec<Result<f64, String>>>,
}

impl CrossMatrix {
    pub fn row_mean(&self, i: usize) -> Option<f64> {
        mean_of(self.cells[i].iter())
    }

    pub fn col_mean(&self, j: usize) -> Option<f64> {
        mean_of(self.cells.iter().map(|row| &row[j]))
    }

    pub fn has_failures(&self) -> bool {
        self.cells.iter().flatten().any(|c| c.is_err())
    }

    /// CSV `source,proxy,auroc` plus `__rowmean__` / `__colmean__`
    /// pseudo-rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["source", "proxy", "auroc"])?;
        for (i, src) in self.sources.iter().enumerate() {
            for (j, proxy) in self.proxies.iter().enumerate() {
                let v = match &self.cells[i][j] {
                    Ok(a) => a.to_string(),
                    Err(_) => "failed".into(),
                };
                w.write_record([src.as_str(), proxy.as_str(), &v])?;
            }
        }
        for (i, src) in self.sources.iter().enumerate() {
            let v = self
                .row_mean(i)
                .map(|m| m.to_string())
                .unwrap_or_else(|| "failed".into());
            w.write_record([src.as_str(), "__rowmean__", &v])?;
        }
        for (j, proxy) in self.proxies.iter().enumerate() {
            let v = self
                .col_mean(j)
                .map(|m| m.to_string())
                .unwrap_or_else(|| "failed".into());
            w.write_record(["__colmean__", proxy.as_str(), &v])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn mean_of<'a>(cells: impl Iterator<Item = &'a Result<f64, String>>) -> Option<f64> {
    let vals: Vec<f64> = cells.filter_map(|c| c.as_ref().ok().copied()).collect();
    if vals.is_empty() {
        None
    } else {
        Some(vals.iter().sum::<f64>() / vals.len() as f64)
    }
}

/// Detects each source partition's candidates with every proxy scorer.
/// Per-cell failures are flagged; other cells proceed.
#[allow(clippy::too_many_arguments)]
pub fn run_cross_matrix(
    dataset: &LabeledDataset,
    proxies: &[(String, Arc<dyn Scorer>)],
    perturber: Arc<dyn Perturber>,
    similarity: Arc<dyn SimilarityProvider>,
    budget: usize,
    n_perturbations: usize,
    base_sel: &SelectionConfig,
    opt: &OptimizerConfig,
    seed: u64,
) -> Result<CrossMatrix, EvalError> {
    if proxies.is_empty() {
        return Err(EvalError::ParseError {
            line: 0,
            detail: "cross matrix needs at least one proxy scorer".into(),
        });
    }
    let mut partitions: BTreeMap<String, Vec<TextSample>> = BTreeMap::new();
    for r in &dataset.records {
        let tag = r.source_model.clone().ok_or_else(|| EvalError::ParseError {
            line: 0,
            detail: format!("record {} has no source_model tag", r.id),
        })?;
        partitions.entry(tag).or_default().push(r.clone());
    }

    let sources: Vec<String> = partitions.keys().cloned().collect();
    let proxy_names: Vec<String> = proxies.iter().map(|(n, _)| n.clone()).collect();

    let cells: Vec<Vec<Result<f64, String>>> = sources
        .iter()
        .map(|src| {
            let records = &partitions[src];
            proxies
                .par_iter()
                .map(|(_, scorer)| {
                    let providers = ProviderSet {
                        scorer: Arc::clone(scorer),
                        perturber: Arc::clone(&perturber),
                        similarity: Arc::clone(&similarity),
                    };
                    cross_cell_auroc(
                        records,
                        &providers,
                        budget,
                        n_perturbations,
                        base_sel,
                        opt,
                        seed,
                    )
                })
                .collect()
        })
        .collect();

    Ok(CrossMatrix {
        sources,
        proxies: proxy_names,
        cells,
    })
}

fn cross_cell_auroc(
    records: &[TextSample],
    providers: &ProviderSet,
    budget: usize,
    n_perturbations: usize,
    base_sel: &SelectionConfig,
    opt: &OptimizerConfig,
    seed: u64,
) -> Result<f64, String> {
    let mut scores = Vec::with_capacity(records.len());
    let mut labels = Vec::with_capacity(records.len());
    for (i, candidate) in records.iter().enumerate() {
        let per = candidate_measures(
            candidate,
            providers,
            &[budget],
            &[Method::Surrogate],
            n_perturbations,
            base_sel,
            opt,
            derive_seed(seed, 0xC0, i as u64),
        );
        match &per[0].2 {
            Ok(m) => {
                scores.push(*m);
                labels.push(candidate.label == Some(Label::Machine));
            }
            Err(e) => return Err(e.clone()),
        }
    }
    auroc(&scores, &labels).map_err(|e| e.to_string())
}

/// One row of the typicality report.
#[derive(Debug, Clone, Serialize)]
pub struct TypicalityRow {
    /// Selection index k (1-based over post-candidate selections).
    pub k: usize,
    /// Mean similarity of the k-th selection to selections 0..k-1.
    pub row_mean_similarity: f64,
    /// Its queried score.
    pub score: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TypicalityReport {
    pub rows: Vec<TypicalityRow>,
    /// Spearman correlation between k and row-mean similarity.
    pub spearman: f64,
}

impl TypicalityReport {
    /// CSV `k,row_mean_similarity,score`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["k", "row_mean_similarity", "score"])?;
        for r in &self.rows {
            w.write_record([
                r.k.to_string(),
                r.row_mean_similarity.to_string(),
                r.score.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// For each selection after the first, the mean similarity to all earlier
/// selections (diagonal excluded by construction).
pub fn typicality_report(
    fit: &SurrogateFit,
    sim: &SimilarityMatrix,
) -> Result<TypicalityReport, EvalError> {
    let indices = &fit.typical_set.indices;
    if indices.len() < 2 {
        return Err(EvalError::TooFewSelections { got: indices.len() });
    }
    let mut rows = Vec::with_capacity(indices.len() - 1);
    for k in 1..indices.len() {
        let mean = (0..k)
            .map(|j| sim.get(indices[k], indices[j]))
            .sum::<f64>()
            / k as f64;
        rows.push(TypicalityRow {
            k,
            row_mean_similarity: mean,
            score: fit.typical_set.targets[k],
        });
    }
    let ks: Vec<f64> = rows.iter().map(|r| r.k as f64).collect();
    let ms: Vec<f64> = rows.iter().map(|r| r.row_mean_similarity).collect();
    let spearman = spearman_correlation(&ks, &ms);
    Ok(TypicalityReport { rows, spearman })
}

fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].partial_cmp(&xs[b]).unwrap());
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let avg = (i + 1 + j + 1) as f64 / 2.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation (Pearson over average ranks). Returns 0 when
/// either input is constant.
pub fn spearman_correlation(xs: &[f64], ys: &[f64]) -> f64 {
    let rx = average_ranks(xs);
    let ry = average_ranks(ys);
    let n = rx.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for i in 0..rx.len() {
        cov += (rx[i] - mx) * (ry[i] - my);
        vx += (rx[i] - mx).powi(2);
        vy += (ry[i] - my).powi(2);
    }
    if vx == 0.0 || vy == 0.0 {
        0.0
    } else {
        cov / (vx.sqrt() * vy.sqrt())
    }
}

#[cfg(test)]
pub mod test_oracles {
    /// Exhaustive pair-counting AUROC oracle.
    pub fn pair_counting_auroc(scores: &[f64], labels: &[bool]) -> f64 {
        let mut wins = 0.0;
        let mut pairs = 0.0;
        for i in 0..scores.len() {
            if !labels[i] {
                continue;
            }
            for j in 0..scores.len() {
                if labels[j] {
                    continue;
                }
                pairs += 1.0;
                if scores[i] > scores[j] {
                    wins += 1.0;
                } else if scores[i] == scores[j] {
                    wins += 0.5;
                }
            }
        }
        wins / pairs
    }
}
