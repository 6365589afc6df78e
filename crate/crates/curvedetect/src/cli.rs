//! Command-line entry points: `detect`, `sweep`, `cross`, `simulate`.
//!
//! Exit codes: 0 success, 1 invalid configuration, 2 provider failure,
//! 3 partial results (some sweep/cross cells failed but output was written).

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use log::warn;
use serde_json::json;

use crate::config::{
    parse_world_spec, RunConfig, PERTURBER_URL_ENV, SCORER_URL_ENV, SIM_URL_ENV,
};
use crate::detect::{baseline_detect, surrogate_detect, DetectionResult, Method};
use crate::error::DetectError;
use crate::eval::{
    load_dataset, run_budget_sweep, run_cross_matrix, save_dataset, LabeledDataset, ProviderSet,
};
use crate::providers::{ProviderKind, Scorer, SyntheticScorer};
use crate::sim::{sample_world, WorldSpec};
use crate::types::{derive_seed, TextSample};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_PROVIDER: i32 = 2;
pub const EXIT_PARTIAL: i32 = 3;

#[derive(Parser)]
#[command(name = "curvedetect", version, about = "Query-efficient machine-text detection")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Detect whether one passage is machine-generated.
    Detect(DetectArgs),
    /// AUROC over a budget grid for surrogate and baseline detectors.
    Sweep(SweepArgs),
    /// Cross source/proxy AUROC matrix.
    Cross(CrossArgs),
    /// Generate a synthetic world and export a labeled dataset.
    Simulate(SimulateArgs),
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// JSON config file; flags override file values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Use offline providers only; never opens a network connection.
    #[arg(long)]
    offline: bool,
    #[arg(long)]
    scorer_url: Option<String>,
    #[arg(long)]
    perturber_url: Option<String>,
    #[arg(long)]
    sim_url: Option<String>,
    /// Simulation world spec (JSON file) for offline runs.
    #[arg(long)]
    simulate_world: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n_perturbations: Option<usize>,
    #[arg(long)]
    mask_fraction: Option<f64>,
    #[arg(long)]
    span_length: Option<usize>,
    /// Adam learning rate.
    #[arg(long)]
    lr: Option<f64>,
    /// Adam iterations per refit.
    #[arg(long)]
    iters: Option<usize>,
    /// Initial typical-set size S.
    #[arg(long)]
    init_size: Option<usize>,
    /// Early-stop threshold on max predictive std (0 disables).
    #[arg(long)]
    uncertainty_floor: Option<f64>,
    #[arg(long)]
    log_level: Option<String>,
}

#[derive(Args)]
struct DetectArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Candidate passage given inline.
    #[arg(long)]
    text: Option<String>,
    /// JSONL file; the first record is the candidate.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Query budget Q (typical-set size T).
    #[arg(long)]
    budget: Option<usize>,
    /// Decision cutoff; when given the result carries a decision field.
    #[arg(long)]
    threshold: Option<f64>,
    /// Use the random-perturbation baseline instead of the surrogate.
    #[arg(long)]
    baseline: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// JSONL dataset; generated from the world when omitted.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Comma-separated query budgets.
    #[arg(long, value_delimiter = ',', default_value = "3,4,5,6,7,8,9,10")]
    budgets: Vec<usize>,
    /// Comma-separated methods: surrogate,baseline.
    #[arg(long, value_delimiter = ',', default_value = "surrogate,baseline")]
    methods: Vec<String>,
    /// Number of random runs to aggregate over.
    #[arg(long, default_value_t = 3)]
    seeds: usize,
    /// Candidates per class when generating a dataset from the world.
    #[arg(long, default_value_t = 50)]
    per_class: usize,
}

#[derive(Args)]
struct CrossArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// World spec JSON files; each acts as a source and as a proxy scorer.
    #[arg(long, value_delimiter = ',')]
    worlds: Vec<PathBuf>,
    /// Optional JSONL dataset with source_model tags; generated from the
    /// worlds when omitted.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    budget: Option<usize>,
    /// Candidates per class per world when generating.
    #[arg(long, default_value_t = 25)]
    per_class: usize,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long, default_value_t = 2)]
    dim: usize,
    #[arg(long, default_value_t = 4)]
    modes: usize,
    #[arg(long, default_value_t = 50)]
    n_machine: usize,
    #[arg(long, default_value_t = 50)]
    n_human: usize,
    #[arg(long)]
    human_offset: Option<f64>,
    #[arg(long)]
    perturb_scale: Option<f64>,
    /// Where to write the world spec JSON (defaults to <out>.world.json).
    #[arg(long)]
    world_out: Option<PathBuf>,
}

pub fn run() -> i32 {
    let cli = Cli::parse();
    match cli.command {
        Command::Detect(args) => cmd_detect(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Cross(args) => cmd_cross(args),
        Command::Simulate(args) => cmd_simulate(args),
    }
}

fn init_logging(level: &str) {
    let _ = env_logger::Builder::new()
        .parse_filters(level)
        .format_timestamp(None)
        .try_init();
}

/// Flags > file > defaults.
fn resolve_config(common: &CommonArgs) -> Result<RunConfig, String> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };

    if common.offline {
        cfg.scorer.kind = ProviderKind::Offline;
        cfg.perturber.kind = ProviderKind::Offline;
        cfg.similarity.kind = ProviderKind::Offline;
        cfg.scorer.endpoint = None;
        cfg.perturber.endpoint = None;
        cfg.similarity.endpoint = None;
    } else {
        let scorer_url = common
            .scorer_url
            .clone()
            .or_else(|| std::env::var(SCORER_URL_ENV).ok());
        if let Some(url) = scorer_url {
            cfg.scorer.kind = ProviderKind::Remote;
            cfg.scorer.endpoint = Some(url);
        }
        let perturber_url = common
            .perturber_url
            .clone()
            .or_else(|| std::env::var(PERTURBER_URL_ENV).ok());
        if let Some(url) = perturber_url {
            cfg.perturber.kind = ProviderKind::Remote;
            cfg.perturber.endpoint = Some(url);
        }
        let sim_url = common
            .sim_url
            .clone()
            .or_else(|| std::env::var(SIM_URL_ENV).ok());
        if let Some(url) = sim_url {
            cfg.similarity.kind = ProviderKind::Remote;
            cfg.similarity.endpoint = Some(url);
        }
    }

    if let Some(path) = &common.simulate_world {
        let body = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read world spec {}: {e}", path.display()))?;
        cfg.world = Some(parse_world_spec(&body)?);
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(n) = common.n_perturbations {
        cfg.detection.n_perturbations = n;
    }
    if let Some(f) = common.mask_fraction {
        cfg.perturber.mask_fraction = f;
    }
    if let Some(s) = common.span_length {
        cfg.perturber.span_length = s;
    }
    if let Some(lr) = common.lr {
        cfg.optimizer.learning_rate = lr;
    }
    if let Some(iters) = common.iters {
        cfg.optimizer.iterations = iters;
    }
    if let Some(s) = common.init_size {
        cfg.selection.initial_size = s;
    }
    if let Some(f) = common.uncertainty_floor {
        cfg.selection.uncertainty_floor = f;
    }
    if let Some(level) = &common.log_level {
        cfg.log_level = level.clone();
    }
    if let Some(out) = &common.out {
        cfg.output = Some(out.display().to_string());
    }
    Ok(cfg)
}

/// Full resolved config plus provider configuration strings and seeds —
/// enough to reproduce the run exactly.
fn write_sidecar(
    out: Option<&Path>,
    cfg: &RunConfig,
    seeds: &[u64],
    provider_strings: &[String],
) -> std::io::Result<()> {
    let Some(out) = out else {
        return Ok(());
    };
    let meta = json!({
        "config": cfg,
        "seeds": seeds,
        "providers": provider_strings,
    });
    let path = PathBuf::from(format!("{}.meta.json", out.display()));
    std::fs::write(path, serde_json::to_string_pretty(&meta).unwrap())
}

fn fail_config(msg: &str) -> i32 {
    eprintln!("error: {msg}");
    EXIT_CONFIG
}

fn exit_code_for(err: &DetectError) -> i32 {
    match err {
        DetectError::ScorerFailure(_)
        | DetectError::PerturberFailure(_)
        | DetectError::SimilarityFailure(_) => EXIT_PROVIDER,
        DetectError::InvalidConfig(_) => EXIT_CONFIG,
        _ => EXIT_PROVIDER,
    }
}

fn cmd_detect(args: DetectArgs) -> i32 {
    let mut cfg = match resolve_config(&args.common) {
        Ok(c) => c,
        Err(e) => return fail_config(&e),
    };
    if let Some(q) = args.budget {
        cfg.detection.query_budget = q;
        cfg.selection.budget = q;
    } else {
        cfg.selection.budget = cfg.detection.query_budget;
    }
    cfg.detection.threshold = args.threshold.or(cfg.detection.threshold);
    cfg.detection.method = if args.baseline {
        Method::Baseline
    } else {
        Method::Surrogate
    };
    cfg.selection.rng_seed = cfg.seed;
    init_logging(&cfg.log_level);
    if let Err(e) = cfg.validate() {
        return fail_config(&e);
    }

    let candidate = match (&args.text, &args.input, &cfg.world) {
        (Some(text), _, _) => TextSample::from_text("candidate", text.clone()),
        (None, Some(path), _) => match load_dataset(path) {
            Ok(ds) if !ds.is_empty() => {
                if ds.len() > 1 {
                    warn!("input has {} records; detecting the first only", ds.len());
                }
                ds.records.into_iter().next().unwrap()
            }
            Ok(_) => return fail_config("input dataset is empty"),
            Err(e) => return fail_config(&e.to_string()),
        },
        (None, None, Some(world)) => {
            // no explicit candidate: draw one machine sample from the world
            let mut w = world.clone();
            w.seed = cfg.seed;
            sample_world(&w, 1, 0).remove(0)
        }
        (None, None, None) => {
            return fail_config(
                "missing candidate: pass --text, --input, or --simulate-world\n\
                 usage: curvedetect detect --text \"...\" [--budget Q] [--threshold D]",
            );
        }
    };

    let scorer = match cfg.build_scorer() {
        Ok(s) => s,
        Err(e) => return fail_config(&e),
    };
    let perturber = match cfg.build_perturber() {
        Ok(p) => p,
        Err(e) => return fail_config(&e),
    };

    let result: Result<DetectionResult, DetectError> = match cfg.detection.method {
        Method::Surrogate => {
            let similarity = match cfg.build_similarity() {
                Ok(s) => s,
                Err(e) => return fail_config(&e),
            };
            surrogate_detect(
                &candidate,
                scorer.as_ref(),
                perturber.as_ref(),
                similarity.as_ref(),
                &cfg.detection,
                &cfg.selection,
                &cfg.optimizer,
            )
        }
        Method::Baseline => baseline_detect(
            &candidate,
            scorer.as_ref(),
            perturber.as_ref(),
            &cfg.detection,
            cfg.seed,
        ),
    };

    match result {
        Ok(res) => {
            let body = serde_json::to_string_pretty(&res).unwrap();
            let out = args.common.out.as_deref();
            if let Some(path) = out {
                if let Err(e) = std::fs::write(path, &body) {
                    eprintln!("error: cannot write {}: {e}", path.display());
                    return EXIT_CONFIG;
                }
            } else {
                println!("{body}");
            }
            let _ = write_sidecar(out, &cfg, &[cfg.seed], &[scorer.config_string()]);
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    }
}

fn load_or_generate_dataset(
    input: Option<&Path>,
    cfg: &RunConfig,
    per_class: usize,
) -> Result<LabeledDataset, String> {
    match input {
        Some(path) => load_dataset(path).map_err(|e| e.to_string()),
        None => {
            let world = cfg
                .world
                .clone()
                .unwrap_or_else(|| WorldSpec::benchmark(2, 4, cfg.seed));
            let mut records = sample_world(&world, per_class, per_class);
            for r in &mut records {
                r.source_model = Some(format!("world-{}", world.seed));
            }
            Ok(LabeledDataset {
                name: format!("generated-{}", world.seed),
                records,
            })
        }
    }
}

fn cmd_sweep(args: SweepArgs) -> i32 {
    let mut cfg = match resolve_config(&args.common) {
        Ok(c) => c,
        Err(e) => return fail_config(&e),
    };
    init_logging(&cfg.log_level);

    let methods: Result<Vec<Method>, String> = args
        .methods
        .iter()
        .map(|m| match m.as_str() {
            "surrogate" => Ok(Method::Surrogate),
            "baseline" => Ok(Method::Baseline),
            other => Err(format!("unknown method {other}")),
        })
        .collect();
    let methods = match methods {
        Ok(m) => m,
        Err(e) => return fail_config(&e),
    };
    if args.budgets.iter().any(|&q| q < 2) {
        return fail_config("every budget must be >= 2");
    }
    let max_budget = *args.budgets.iter().max().unwrap_or(&2);
    cfg.detection.query_budget = max_budget;
    cfg.selection.budget = max_budget;
    // offline sweep with no world: generate one so the scorer exists
    if cfg.scorer.kind == ProviderKind::Offline && cfg.world.is_none() {
        cfg.world = Some(WorldSpec::benchmark(2, 4, cfg.seed));
    }
    if let Err(e) = cfg.validate() {
        return fail_config(&e);
    }

    let dataset = match load_or_generate_dataset(args.input.as_deref(), &cfg, args.per_class) {
        Ok(d) => d,
        Err(e) => return fail_config(&e),
    };
    let providers = match build_provider_set(&cfg) {
        Ok(p) => p,
        Err(e) => return fail_config(&e),
    };
    let seeds: Vec<u64> = (0..args.seeds as u64)
        .map(|i| derive_seed(cfg.seed, 0xEE, i))
        .collect();

    let report = match run_budget_sweep(
        &dataset,
        &args.budgets,
        &methods,
        &seeds,
        &providers,
        cfg.detection.n_perturbations,
        &cfg.selection,
        &cfg.optimizer,
    ) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_PROVIDER;
        }
    };

    let csv_result = match args.common.out.as_deref() {
        Some(path) => std::fs::File::create(path)
            .map_err(|e| e.to_string())
            .and_then(|f| report.write_csv(f).map_err(|e| e.to_string())),
        None => report
            .write_csv(std::io::stdout().lock())
            .map_err(|e| e.to_string()),
    };
    if let Err(e) = csv_result {
        eprintln!("error: cannot write report: {e}");
        return EXIT_CONFIG;
    }
    let _ = write_sidecar(
        args.common.out.as_deref(),
        &cfg,
        &seeds,
        &[
            providers.scorer.config_string(),
            providers.perturber.config_string(),
            providers.similarity.config_string(),
        ],
    );
    if report.has_failures() {
        eprintln!("warning: some cells failed; partial results written");
        EXIT_PARTIAL
    } else {
        EXIT_OK
    }
}

fn build_provider_set(cfg: &RunConfig) -> Result<ProviderSet, String> {
    Ok(ProviderSet {
        scorer: cfg.build_scorer()?,
        perturber: cfg.build_perturber()?,
        similarity: cfg.build_similarity()?,
    })
}

fn cmd_cross(args: CrossArgs) -> i32 {
    let mut cfg = match resolve_config(&args.common) {
        Ok(c) => c,
        Err(e) => return fail_config(&e),
    };
    init_logging(&cfg.log_level);
    if let Some(q) = args.budget {
        cfg.detection.query_budget = q;
        cfg.selection.budget = q;
    } else {
        cfg.selection.budget = cfg.detection.query_budget;
    }
    if args.worlds.is_empty() {
        return fail_config("cross needs --worlds with at least one world spec");
    }

    let mut worlds: Vec<(String, WorldSpec)> = Vec::new();
    for path in &args.worlds {
        let body = match std::fs::read_to_string(path) {
            Ok(b) => b,
            Err(e) => return fail_config(&format!("cannot read {}: {e}", path.display())),
        };
        let world = match parse_world_spec(&body) {
            Ok(w) => w,
            Err(e) => return fail_config(&e),
        };
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "world".into());
        worlds.push((name, world));
    }
    cfg.world = Some(worlds[0].1.clone());
    if let Err(e) = cfg.validate() {
        return fail_config(&e);
    }

    // dataset: provided, or each world's own samples tagged by world name
    let dataset = match &args.input {
        Some(path) => match load_dataset(path) {
            Ok(d) => d,
            Err(e) => return fail_config(&e.to_string()),
        },
        None => {
            let mut records = Vec::new();
            for (name, world) in &worlds {
                let mut ws = sample_world(world, args.per_class, args.per_class);
                for (i, r) in ws.iter_mut().enumerate() {
                    r.id = format!("{name}-{i:04}-{}", r.id);
                    r.source_model = Some(name.clone());
                }
                records.extend(ws);
            }
            LabeledDataset {
                name: "cross".into(),
                records,
            }
        }
    };

    let proxies: Vec<(String, Arc<dyn Scorer>)> = worlds
        .iter()
        .map(|(name, world)| {
            (
                name.clone(),
                Arc::new(SyntheticScorer {
                    world: world.clone(),
                }) as Arc<dyn Scorer>,
            )
        })
        .collect();
    let perturber = match cfg.build_perturber() {
        Ok(p) => p,
        Err(e) => return fail_config(&e),
    };
    let similarity = match cfg.build_similarity() {
        Ok(s) => s,
        Err(e) => return fail_config(&e),
    };

    let matrix = match run_cross_matrix(
        &dataset,
        &proxies,
        perturber,
        similarity,
        cfg.detection.query_budget,
        cfg.detection.n_perturbations,
        &cfg.selection,
        &cfg.optimizer,
        cfg.seed,
    ) {
        Ok(m) => m,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_PROVIDER;
        }
    };

    let csv_result = match args.common.out.as_deref() {
        Some(path) => std::fs::File::create(path)
            .map_err(|e| e.to_string())
            .and_then(|f| matrix.write_csv(f).map_err(|e| e.to_string())),
        None => matrix
            .write_csv(std::io::stdout().lock())
            .map_err(|e| e.to_string()),
    };
    if let Err(e) = csv_result {
        eprintln!("error: cannot write matrix: {e}");
        return EXIT_CONFIG;
    }
    let _ = write_sidecar(args.common.out.as_deref(), &cfg, &[cfg.seed], &[]);
    if matrix.has_failures() {
        eprintln!("warning: some cells failed; partial results written");
        EXIT_PARTIAL
    } else {
        EXIT_OK
    }
}

fn cmd_simulate(args: SimulateArgs) -> i32 {
    let cfg = match resolve_config(&args.common) {
        Ok(c) => c,
        Err(e) => return fail_config(&e),
    };
    init_logging(&cfg.log_level);

    let mut world = cfg
        .world
        .clone()
        .unwrap_or_else(|| WorldSpec::benchmark(args.dim, args.modes, cfg.seed));
    if let Some(h) = args.human_offset {
        world.human_offset = h;
    }
    if let Some(p) = args.perturb_scale {
        world.perturb_scale = p;
    }
    if let Err(e) = world.validate() {
        return fail_config(&e);
    }

    let mut records = sample_world(&world, args.n_machine, args.n_human);
    let tag = format!("world-{}", world.seed);
    for r in &mut records {
        r.source_model = Some(tag.clone());
    }
    let dataset = LabeledDataset {
        name: tag,
        records,
    };

    let out = args.common.out.as_deref();
    match out {
        Some(path) => {
            let file = match std::fs::File::create(path) {
                Ok(f) => f,
                Err(e) => return fail_config(&format!("cannot write {}: {e}", path.display())),
            };
            if let Err(e) = save_dataset(&dataset, file) {
                return fail_config(&format!("cannot write dataset: {e}"));
            }
            let world_path = args
                .world_out
                .clone()
                .unwrap_or_else(|| PathBuf::from(format!("{}.world.json", path.display())));
            if let Err(e) = std::fs::write(
                &world_path,
                serde_json::to_string_pretty(&world).unwrap(),
            ) {
                return fail_config(&format!("cannot write {}: {e}", world_path.display()));
            }
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            if save_dataset(&dataset, &mut lock).is_err() {
                return EXIT_CONFIG;
            }
            let _ = lock.flush();
        }
    }
    let _ = write_sidecar(out, &cfg, &[world.seed], &[]);
    EXIT_OK
}
