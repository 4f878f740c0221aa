use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;
use starformer::checkpoint::load_checkpoint;
use starformer::config::{OrderingMode, Profile, RunConfig};
use starformer::dataset::load_dataset;
use starformer::error::{Error, Result};
use starformer::formats::{
    self, decode_connectivity, encode_connectivity, prepare_output_dir, read_atlas, read_bytes, read_config_json,
    read_json, write_json, ConnectivityEntry, ConnectivityIndex, CONNECTIVITY_INDEX,
};
use starformer::pipeline::{
    self, compute_connectivity, cross_validate, evaluate_checkpoint, explain_checkpoint, ordering_file, ordering_rng,
    sampled_ec_ordering, OrderingFile, OrderingPlan, THREADS_ENV,
};
use starformer::report::{write_importance, write_run};
use starformer::synthetic::{generate_synthetic, SyntheticSpec};
use starformer_core::temporal::{audit_complexity, Extension, WindowSchedule};

/// Spatio-temporal transformer pipeline for ROI time series classification.
#[derive(Parser)]
#[command(name = "starformer", version, after_help = format!(
    "Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric failure.\n\
     Errors are printed to stderr as one JSON line.\n\
     {THREADS_ENV} sets the worker thread count (default: all cores)."
))]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a two-class VAR(1) cohort from a spec file.
    GenSynthetic(GenSyntheticArgs),
    /// Estimate per-subject effective-connectivity matrices.
    Connectivity(ConnectivityArgs),
    /// Build a network-grouped centrality ordering from connectivity matrices.
    Centrality(CentralityArgs),
    /// Cross-validate the model and save per-fold checkpoints.
    Train(TrainArgs),
    /// Score a dataset with a checkpoint.
    Eval(EvalArgs),
    /// Per-ROI attention importance from a checkpoint.
    Explain(ExplainArgs),
    /// Count attention multiply-accumulates against full attention.
    AuditComplexity(AuditArgs),
}

#[derive(Args)]
struct GenSyntheticArgs {
    #[arg(long)]
    spec: PathBuf,
    /// Output directory; must be absent or empty.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the seed in the spec.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct ConnectivityArgs {
    /// Dataset manifest.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 1)]
    lag: usize,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Output directory; must be absent or empty.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CentralityArgs {
    /// Directory written by `connectivity`.
    #[arg(long)]
    g_dir: PathBuf,
    #[arg(long)]
    atlas: PathBuf,
    /// Fraction of patients whose centrality is averaged.
    #[arg(long, default_value_t = 0.10)]
    subsample: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    /// Fixed ordering for every fold; without it each fold builds its own
    /// from its training subjects.
    #[arg(long)]
    ordering: Option<PathBuf>,
    /// Run config JSON naming a profile plus overrides.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Profile used when no config is given; defaults to the manifest's.
    #[arg(long)]
    profile: Option<String>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config ordering mode: ec, random or identity.
    #[arg(long)]
    ordering_mode: Option<String>,
    /// Run only the first N folds of the plan.
    #[arg(long)]
    max_folds: Option<usize>,
    /// Output directory; must be absent or empty.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ExplainArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Fraction of ROIs listed as most influential.
    #[arg(long, default_value_t = 0.05)]
    top: f64,
    /// Weight of the temporal scores; the checkpoint's value by default.
    #[arg(long)]
    temporal_weight: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AuditArgs {
    #[arg(long, default_value_t = 128)]
    m: usize,
    #[arg(long, default_value_t = 128)]
    d: usize,
    #[arg(long, default_value = "16,8,4,4,8,16", value_delimiter = ',')]
    schedule: Vec<usize>,
    #[arg(long, default_value_t = 8)]
    heads: usize,
    /// Key context per window: w/4, w/2 or w.
    #[arg(long, default_value = "w/2")]
    extension: String,
    #[arg(long)]
    out: PathBuf,
}

fn ok_line(value: serde_json::Value) {
    let mut v = json!({"status": "ok"});
    if let (Some(o), serde_json::Value::Object(extra)) = (v.as_object_mut(), value) {
        o.extend(extra);
    }
    println!("{v}");
}

fn gen_synthetic(a: GenSyntheticArgs) -> Result<()> {
    let mut spec: SyntheticSpec = read_config_json(&a.spec)?;
    if let Some(seed) = a.seed {
        spec.seed = seed;
    }
    let manifest = generate_synthetic(&spec, &a.out)?;
    ok_line(json!({
        "command": "gen-synthetic",
        "subjects": manifest.subjects.len(),
        "seed": spec.seed,
        "manifest": a.out.join("manifest.json"),
    }));
    Ok(())
}

fn file_stem(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' })
        .collect()
}

fn connectivity(a: ConnectivityArgs) -> Result<()> {
    let ds = load_dataset(&a.data)?;
    prepare_output_dir(&a.out)?;
    let graphs = compute_connectivity(&ds, a.lag, a.alpha)?;
    let roi_ids = ds.atlas.roi_ids();
    let mut subjects = Vec::with_capacity(graphs.len());
    for (s, g) in ds.subjects.iter().zip(&graphs) {
        let file = format!("{}.csv", file_stem(&s.id));
        formats::write_bytes(&a.out.join(&file), &encode_connectivity(g, &roi_ids))?;
        subjects.push(ConnectivityEntry {
            id: s.id.clone(),
            label: s.label as u8,
            file,
            edges: g.edge_count(),
            singular_pairs: g.warnings,
        });
    }
    let index = ConnectivityIndex {
        lag: a.lag,
        alpha: a.alpha,
        roi_ids,
        subjects,
    };
    write_json(&a.out.join(CONNECTIVITY_INDEX), &index)?;
    ok_line(json!({"command": "connectivity", "subjects": graphs.len(), "out": a.out}));
    Ok(())
}

fn centrality(a: CentralityArgs) -> Result<()> {
    let index_path = a.g_dir.join(CONNECTIVITY_INDEX);
    let index: ConnectivityIndex = read_json(&index_path)?;
    let atlas = read_atlas(&a.atlas)?;
    if atlas.roi_ids() != index.roi_ids {
        return Err(Error::parse(&index_path, 0, "ROI ids differ from the atlas"));
    }
    let mut graphs = Vec::with_capacity(index.subjects.len());
    for s in &index.subjects {
        let path = a.g_dir.join(&s.file);
        let (g, ids) = decode_connectivity(&read_bytes(&path)?, &path, index.alpha, index.lag)?;
        if ids != index.roi_ids {
            return Err(Error::parse(&path, 1, "ROI ids differ from the index"));
        }
        graphs.push(g);
    }
    let partition = atlas.partition()?;
    let labels: Vec<usize> = index.subjects.iter().map(|s| usize::from(s.label)).collect();
    let ids: Vec<String> = index.subjects.iter().map(|s| s.id.clone()).collect();
    let all: Vec<usize> = (0..graphs.len()).collect();
    let mut rng = ordering_rng(a.seed, 0);
    let sampled = sampled_ec_ordering(&graphs, &labels, &all, &partition, a.subsample, &mut rng)?;
    let file = ordering_file(&atlas, &sampled, a.seed, a.subsample, &ids);
    write_json(&a.out, &file)?;
    ok_line(json!({
        "command": "centrality",
        "sampled": file.sampled_subjects.len(),
        "unconverged": file.unconverged,
        "seed": a.seed,
        "out": a.out,
    }));
    Ok(())
}

fn run_config(a: &TrainArgs, manifest_profile: &str) -> Result<RunConfig> {
    let mut cfg = match (&a.config, &a.profile) {
        (Some(path), _) => RunConfig::load(path)?,
        (None, Some(p)) => RunConfig::profile(p.parse()?),
        (None, None) => RunConfig::profile(manifest_profile.parse().unwrap_or(Profile::Abide)),
    };
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    if let Some(mode) = &a.ordering_mode {
        cfg.ordering.mode = mode.parse::<OrderingMode>()?;
    }
    cfg.check()?;
    Ok(cfg)
}

fn train(a: TrainArgs) -> Result<()> {
    let ds = load_dataset(&a.data)?;
    let cfg = run_config(&a, &ds.manifest.profile)?;
    let plan = match &a.ordering {
        Some(path) => {
            let file: OrderingFile = read_json(path)?;
            if file.roi_ids != ds.atlas.roi_ids() {
                return Err(Error::parse(path, 0, "ordering ROI ids differ from the dataset atlas"));
            }
            OrderingPlan::Fixed(file.ordering()?)
        }
        None => OrderingPlan::PerFold {
            mode: cfg.ordering.mode,
            graphs: None,
        },
    };
    prepare_output_dir(&a.out)?;
    let cv = cross_validate(&ds, &cfg, &plan, a.max_folds)?;
    let metrics = write_run(&a.out, &ds, &cfg, &cv)?;
    ok_line(json!({
        "command": "train",
        "seed": cfg.seed,
        "folds": metrics.per_fold.len(),
        "acc": metrics.report.acc.mean,
        "auc": metrics.report.auc.map(|s| s.mean),
        "out": a.out,
    }));
    Ok(())
}

fn eval(a: EvalArgs) -> Result<()> {
    let ck = load_checkpoint(&a.checkpoint, None)?;
    let ds = load_dataset(&a.data)?;
    let report = evaluate_checkpoint(&ck, &ds)?;
    write_json(&a.out, &report)?;
    ok_line(json!({
        "command": "eval",
        "subjects": report.subjects.len(),
        "acc": report.metrics.acc,
        "auc": report.metrics.auc,
        "out": a.out,
    }));
    Ok(())
}

fn explain(a: ExplainArgs) -> Result<()> {
    let ck = load_checkpoint(&a.checkpoint, None)?;
    let ds = load_dataset(&a.data)?;
    let weight = a.temporal_weight.unwrap_or(ck.meta.temporal_weight);
    let (rows, meta) = explain_checkpoint(&ck, &ds, weight, a.top)?;
    write_importance(&a.out, &rows, &meta)?;
    ok_line(json!({"command": "explain", "top_rois": meta.top_rois, "out": a.out}));
    Ok(())
}

fn audit(a: AuditArgs) -> Result<()> {
    let schedule = WindowSchedule::new(a.schedule.clone(), a.m)?;
    let ext: Extension = a.extension.parse()?;
    let report = audit_complexity(&schedule, a.d, a.heads, ext)?;
    write_json(&a.out, &report)?;
    ok_line(json!({
        "command": "audit-complexity",
        "reduction_factor": report.reduction_factor,
        "out": a.out,
    }));
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let pool = pipeline::thread_pool()?;
    pool.install(|| match cli.command {
        Command::GenSynthetic(a) => gen_synthetic(a),
        Command::Connectivity(a) => connectivity(a),
        Command::Centrality(a) => centrality(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Explain(a) => explain(a),
        Command::AuditComplexity(a) => audit(a),
    })
}

fn error_line(kind: &str, code: &str, exit: i32, message: &str) -> String {
    let message = message.split_whitespace().collect::<Vec<_>>().join(" ");
    json!({"status": "error", "kind": kind, "code": code, "exit": exit, "message": message}).to_string()
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprintln!("{}", error_line("config", "usage", 2, &e.to_string()));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let exit = e.exit_code();
            let kind = match exit {
                2 => "config",
                3 => "data",
                _ => "numeric",
            };
            eprintln!("{}", error_line(kind, e.code(), exit, &e.to_string()));
            ExitCode::from(exit as u8)
        }
    }
}
