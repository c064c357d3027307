//! Experiment driver CLI: corpus generation, training, evaluation,
//! few-shot and forgetting measurement, the untrained-encoder probe, and
//! result-table rendering.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 training
//! divergence.

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand};
use rotasym::classifiers::probe_pretrained;
use rotasym::dataset::{
    build_corpus, generate_corpus, load_triples, read_corpus, save_triples, write_corpus,
    GenerateConfig, NliExample, SplitSet,
};
use rotasym::encoder::{init_params, Vocabulary};
use rotasym::error::{RunError, TrainError};
use rotasym::experiment::{
    evaluate, load_artifact, make_proxy_corpus, measure_few_shot, measure_forgetting,
    save_artifact, save_train_log, train, MethodId, RunConfig, FEW_SHOT_SCHEDULE,
};
use rotasym::report::{parse_report, render_report, EvalReport, ProbeReport, ReportFormat};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(
    name = "rotasym",
    version,
    about = "Symmetry-aware encoder retraining experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the benchmark corpus, the proxy corpus, and a manifest.
    Generate(GenerateArgs),
    /// Train one method and save its artifact and training log.
    Train(TrainArgs),
    /// Evaluate a trained artifact on the test splits of both modes.
    Eval(EvalArgs),
    /// Scan the few-shot schedule for the smallest sufficient sample count.
    Fewshot(MeasureArgs),
    /// Measure the catastrophic-forgetting delta on the proxy task.
    Forget(MeasureArgs),
    /// Probe the untrained encoder with a fixed-metric 1-NN classifier.
    Probe(ProbeArgs),
    /// Render collected results as a table or JSONL.
    Report(ReportArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Output directory for corpus files.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Synthesize this many entities (ignored with --triples).
    #[arg(long, default_value_t = 200)]
    entities: usize,
    /// Triples per relation to synthesize (ignored with --triples).
    #[arg(long, default_value_t = 100)]
    per_relation: usize,
    /// Read triples from a 5-column TSV instead of synthesizing.
    #[arg(long)]
    triples: Option<PathBuf>,
    #[arg(long, default_value_t = 0.8)]
    train_frac: f64,
    #[arg(long, default_value_t = 0.1)]
    dev_frac: f64,
    #[arg(long, default_value_t = 0.1)]
    test_frac: f64,
    /// Allow entities to appear in multiple splits.
    #[arg(long)]
    no_entity_disjoint: bool,
    /// Size of the generated proxy corpus.
    #[arg(long, default_value_t = 1200)]
    proxy_size: usize,
}

#[derive(Args, Clone)]
struct RunArgs {
    /// Method: random-label, knn-fixed, knn-learnt, or fine-tune.
    #[arg(long)]
    method: Option<String>,
    /// Flat key=value config file; command-line flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    margin: Option<f64>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    accuracy_target: Option<f64>,
    #[arg(long)]
    init_scale: Option<f64>,
}

#[derive(Args)]
struct TrainArgs {
    /// Corpus directory produced by `generate`.
    #[arg(long)]
    corpus: PathBuf,
    /// Output directory for the artifact and log.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Args)]
struct EvalArgs {
    /// Artifact directory (or artifact.json path) from `train`.
    #[arg(long)]
    artifact: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    /// Output directory; defaults to the artifact directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MeasureArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated subset sizes (fewshot only).
    #[arg(long)]
    schedule: Option<String>,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Args)]
struct ProbeArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = 16)]
    dim: usize,
    #[arg(long, default_value_t = 0.1)]
    init_scale: f64,
    /// Cap on the number of test examples scored.
    #[arg(long, default_value_t = 500)]
    test_slice: usize,
}

#[derive(Args)]
struct ReportArgs {
    /// Run directory containing probe.json and per-method subdirectories.
    #[arg(long)]
    run: PathBuf,
    /// table or jsonl.
    #[arg(long, default_value = "table")]
    format: String,
    /// Write here as well as to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap's own help/version output is not an error.
            if e.use_stderr() {
                eprintln!("{e}");
                std::process::exit(1);
            }
            print!("{e}");
            std::process::exit(0);
        }
    };
    let result = match cli.command {
        Command::Generate(args) => cmd_generate(args),
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Fewshot(args) => cmd_fewshot(args),
        Command::Forget(args) => cmd_forget(args),
        Command::Probe(args) => cmd_probe(args),
        Command::Report(args) => cmd_report(args),
    };
    if let Err(e) = result {
        eprintln!("error: {e:#}");
        std::process::exit(exit_code(&e));
    }
}

fn exit_code(e: &anyhow::Error) -> i32 {
    match e.downcast_ref::<RunError>() {
        Some(RunError::Train(TrainError::Divergence { .. }))
        | Some(RunError::Train(TrainError::NonFiniteGradient { .. })) => 3,
        Some(RunError::Config(_)) => 1,
        _ => 2,
    }
}

/// FNV-1a over the canonical config rendering; recorded in manifests.
fn config_hash(text: &str) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for byte in text.bytes() {
        hash ^= byte as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

fn canonical_config(cfg: &RunConfig) -> String {
    format!(
        "method={}\nseed={}\ndim={}\nlr={}\nbatch_size={}\nmargin={}\nk={}\nmax_epochs={}\naccuracy_target={}\ninit_scale={}\n",
        cfg.method, cfg.seed, cfg.dim, cfg.lr, cfg.batch_size, cfg.margin, cfg.k,
        cfg.max_epochs, cfg.accuracy_target, cfg.init_scale
    )
}

fn write_manifest(dir: &Path, command: &str, cfg: &RunConfig) -> Result<()> {
    let canonical = canonical_config(cfg);
    let manifest = serde_json::json!({
        "command": command,
        "tool_version": env!("CARGO_PKG_VERSION"),
        "config_hash": format!("{:016x}", config_hash(&canonical)),
        "config": canonical,
    });
    std::fs::write(dir.join("run_manifest.json"), manifest.to_string())?;
    Ok(())
}

/// Parses a flat key=value config file. Lines starting with '#' and blank
/// lines are ignored.
fn parse_config_file(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read config {}", path.display()))?;
    let mut values = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(anyhow!(RunError::Config(format!(
                "{}:{}: expected key=value, got {line:?}",
                path.display(),
                i + 1
            ))));
        };
        values.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(values)
}

fn parse_from<T: std::str::FromStr>(
    values: &BTreeMap<String, String>,
    key: &str,
) -> Result<Option<T>>
where
    T::Err: std::fmt::Display,
{
    match values.get(key) {
        None => Ok(None),
        Some(raw) => raw
            .parse::<T>()
            .map(Some)
            .map_err(|e| anyhow!(RunError::Config(format!("config key {key}={raw:?}: {e}")))),
    }
}

/// Resolves defaults, then config-file values, then command-line flags.
fn resolve_run_config(args: &RunArgs) -> Result<RunConfig> {
    let file_values = match &args.config {
        Some(path) => parse_config_file(path)?,
        None => BTreeMap::new(),
    };
    let method_name = args
        .method
        .clone()
        .or_else(|| file_values.get("method").cloned())
        .ok_or_else(|| anyhow!(RunError::Config("--method is required".to_string())))?;
    let method: MethodId = method_name.parse().map_err(anyhow::Error::new)?;
    let seed = args.seed.or(parse_from(&file_values, "seed")?).unwrap_or(7);
    let mut cfg = RunConfig::desk(method, seed);
    if let Some(v) = parse_from(&file_values, "dim")? {
        cfg.dim = v;
    }
    if let Some(v) = parse_from(&file_values, "lr")? {
        cfg.lr = v;
    }
    if let Some(v) = parse_from(&file_values, "batch_size")? {
        cfg.batch_size = v;
    }
    if let Some(v) = parse_from(&file_values, "margin")? {
        cfg.margin = v;
    }
    if let Some(v) = parse_from(&file_values, "k")? {
        cfg.k = v;
    }
    if let Some(v) = parse_from(&file_values, "max_epochs")? {
        cfg.max_epochs = v;
    }
    if let Some(v) = parse_from(&file_values, "accuracy_target")? {
        cfg.accuracy_target = v;
    }
    if let Some(v) = parse_from(&file_values, "init_scale")? {
        cfg.init_scale = v;
    }
    if let Some(v) = file_values.get("lexicalized_path") {
        cfg.lexicalized_path = Some(v.clone());
    }
    if let Some(v) = file_values.get("delexicalized_path") {
        cfg.delexicalized_path = Some(v.clone());
    }
    if let Some(v) = file_values.get("proxy_path") {
        cfg.proxy_path = Some(v.clone());
    }
    if let Some(v) = args.dim {
        cfg.dim = v;
    }
    if let Some(v) = args.lr {
        cfg.lr = v;
    }
    if let Some(v) = args.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = args.margin {
        cfg.margin = v;
    }
    if let Some(v) = args.k {
        cfg.k = v;
    }
    if let Some(v) = args.max_epochs {
        cfg.max_epochs = v;
    }
    if let Some(v) = args.accuracy_target {
        cfg.accuracy_target = v;
    }
    if let Some(v) = args.init_scale {
        cfg.init_scale = v;
    }
    Ok(cfg)
}

struct CorpusDir {
    lexicalized: SplitSet<NliExample>,
    delexicalized: SplitSet<NliExample>,
    proxy: SplitSet<NliExample>,
}

fn read_split(dir: &Path, stem: &str) -> Result<SplitSet<NliExample>> {
    let read = |split: &str| -> Result<Vec<NliExample>> {
        let path = dir.join(format!("{stem}_{split}.jsonl"));
        read_corpus(&path).map_err(|e| anyhow!(RunError::Data(e)))
    };
    Ok(SplitSet {
        train: read("train")?,
        dev: read("dev")?,
        test: read("test")?,
    })
}

fn load_corpus_dir(dir: &Path) -> Result<CorpusDir> {
    Ok(CorpusDir {
        lexicalized: read_split(dir, "lexicalized")?,
        delexicalized: read_split(dir, "delexicalized")?,
        proxy: read_split(dir, "proxy")?,
    })
}

fn cmd_generate(args: GenerateArgs) -> Result<()> {
    let cfg = GenerateConfig {
        seed: args.seed,
        n_entities: args.entities,
        n_per_relation: args.per_relation,
        train_fraction: args.train_frac,
        dev_fraction: args.dev_frac,
        test_fraction: args.test_frac,
        entity_disjoint: !args.no_entity_disjoint,
    };
    let corpus = match &args.triples {
        Some(path) => {
            let triples = load_triples(path).map_err(|e| anyhow!(RunError::Data(e)))?;
            build_corpus(&triples, &cfg).map_err(|e| anyhow!(RunError::Data(e)))?
        }
        None => generate_corpus(&cfg).map_err(|e| anyhow!(RunError::Data(e)))?,
    };
    let proxy = make_proxy_corpus(args.seed, args.proxy_size).map_err(|e| anyhow!(e))?;

    std::fs::create_dir_all(&args.out)?;
    save_triples(&args.out.join("triples.tsv"), &corpus.triples)
        .map_err(|e| anyhow!(RunError::Data(e)))?;
    let write_split = |stem: &str, split: &SplitSet<NliExample>| -> Result<()> {
        write_corpus(&args.out.join(format!("{stem}_train.jsonl")), &split.train)
            .map_err(|e| anyhow!(RunError::Data(e)))?;
        write_corpus(&args.out.join(format!("{stem}_dev.jsonl")), &split.dev)
            .map_err(|e| anyhow!(RunError::Data(e)))?;
        write_corpus(&args.out.join(format!("{stem}_test.jsonl")), &split.test)
            .map_err(|e| anyhow!(RunError::Data(e)))?;
        Ok(())
    };
    write_split("lexicalized", &corpus.lexicalized)?;
    write_split("delexicalized", &corpus.delexicalized)?;
    write_split("proxy", &proxy)?;
    let manifest = serde_json::to_string(&corpus.manifest)?;
    std::fs::write(args.out.join("manifest.json"), manifest)?;
    let (train_n, dev_n, test_n) = corpus.lexicalized.sizes();
    eprintln!(
        "generated {} triples -> {} examples per mode (train {train_n} / dev {dev_n} / test {test_n}) in {}",
        corpus.triples.len(),
        corpus.manifest.examples_per_mode,
        args.out.display()
    );
    Ok(())
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let mut cfg = resolve_run_config(&args.run)?;
    cfg.lexicalized_path = Some(
        args.corpus
            .join("lexicalized_train.jsonl")
            .display()
            .to_string(),
    );
    cfg.delexicalized_path = Some(
        args.corpus
            .join("delexicalized_train.jsonl")
            .display()
            .to_string(),
    );
    cfg.proxy_path = Some(args.corpus.join("proxy_train.jsonl").display().to_string());
    let corpus = load_corpus_dir(&args.corpus)?;
    let (artifact, log) = train(&cfg, &corpus.lexicalized).map_err(|e| anyhow!(e))?;
    std::fs::create_dir_all(&args.out)?;
    save_artifact(&args.out.join("artifact.json"), &artifact).map_err(|e| anyhow!(e))?;
    save_train_log(&args.out.join("train_log.jsonl"), &log).map_err(|e| anyhow!(e))?;
    write_manifest(&args.out, "train", &cfg)?;
    eprintln!(
        "trained {} for {} steps; artifact in {}",
        cfg.method,
        log.len(),
        args.out.display()
    );
    Ok(())
}

fn artifact_path(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join("artifact.json")
    } else {
        path.to_path_buf()
    }
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let artifact = load_artifact(&artifact_path(&args.artifact)).map_err(|e| anyhow!(e))?;
    let corpus = load_corpus_dir(&args.corpus)?;
    let lex = evaluate(&artifact, &corpus.lexicalized.test).map_err(|e| anyhow!(e))?;
    let delex = evaluate(&artifact, &corpus.delexicalized.test).map_err(|e| anyhow!(e))?;
    let report = EvalReport {
        method: artifact.config.method,
        accuracy_lexicalized: lex,
        accuracy_delexicalized: delex,
        training_samples_used: artifact.training_samples_used,
        forgetting_delta: None,
        seed: artifact.config.seed,
        wall_time_secs: None,
    };
    let out_dir = args.out.unwrap_or_else(|| {
        if args.artifact.is_dir() {
            args.artifact.clone()
        } else {
            args.artifact
                .parent()
                .unwrap_or(Path::new("."))
                .to_path_buf()
        }
    });
    std::fs::create_dir_all(&out_dir)?;
    std::fs::write(out_dir.join("eval.json"), serde_json::to_string(&report)?)?;
    println!(
        "{}: lexicalized {:.4}, delexicalized {:.4}",
        artifact.config.method, lex, delex
    );
    Ok(())
}

fn cmd_fewshot(args: MeasureArgs) -> Result<()> {
    let cfg = resolve_run_config(&args.run)?;
    let corpus = load_corpus_dir(&args.corpus)?;
    let schedule: Vec<usize> = match &args.schedule {
        Some(text) => text
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<usize>()
                    .map_err(|e| anyhow!(RunError::Config(format!("schedule entry {s:?}: {e}"))))
            })
            .collect::<Result<_>>()?,
        None => FEW_SHOT_SCHEDULE.to_vec(),
    };
    let outcome = measure_few_shot(&cfg, &schedule, &corpus.lexicalized, &corpus.proxy)
        .map_err(|e| anyhow!(e))?;
    std::fs::create_dir_all(&args.out)?;
    let record = serde_json::json!({
        "method": cfg.method.to_string(),
        "seed": cfg.seed,
        "schedule": schedule,
        "reached_at": outcome.reached_at,
        "trace": outcome.trace,
    });
    std::fs::write(args.out.join("fewshot.json"), record.to_string())?;
    write_manifest(&args.out, "fewshot", &cfg)?;
    match outcome.reached_at {
        Some(n) => println!("{}: target reached with {n} training samples", cfg.method),
        None => println!("{}: target not reached within the schedule", cfg.method),
    }
    Ok(())
}

fn cmd_forget(args: MeasureArgs) -> Result<()> {
    let cfg = resolve_run_config(&args.run)?;
    let corpus = load_corpus_dir(&args.corpus)?;
    let outcome =
        measure_forgetting(&cfg, &corpus.lexicalized, &corpus.proxy).map_err(|e| anyhow!(e))?;
    std::fs::create_dir_all(&args.out)?;
    let record = serde_json::json!({
        "method": cfg.method.to_string(),
        "seed": cfg.seed,
        "proxy_accuracy_before": outcome.proxy_accuracy_before,
        "proxy_accuracy_after": outcome.proxy_accuracy_after,
        "delta": outcome.delta,
    });
    std::fs::write(args.out.join("forget.json"), record.to_string())?;
    write_manifest(&args.out, "forget", &cfg)?;
    if outcome.delta < 0.0 {
        println!(
            "{}: proxy accuracy improved by {:.4} (negative forgetting)",
            cfg.method, -outcome.delta
        );
    } else {
        println!("{}: forgetting delta {:.4}", cfg.method, outcome.delta);
    }
    Ok(())
}

fn cmd_probe(args: ProbeArgs) -> Result<()> {
    let corpus = load_corpus_dir(&args.corpus)?;
    let vocab = Vocabulary::from_texts(
        corpus
            .lexicalized
            .train
            .iter()
            .flat_map(|e| [e.premise.as_str(), e.hypothesis.as_str()]),
    );
    let params = init_params(args.seed, args.dim, vocab.len(), args.init_scale);
    let slice =
        |v: &[NliExample]| -> Vec<NliExample> { v.iter().take(args.test_slice).cloned().collect() };
    let lex = probe_pretrained(
        &slice(&corpus.lexicalized.test),
        &corpus.lexicalized.train,
        &vocab,
        &params,
    )
    .map_err(|e| anyhow!(RunError::Classify(e)))?;
    let delex = probe_pretrained(
        &slice(&corpus.delexicalized.test),
        &corpus.delexicalized.train,
        &vocab,
        &params,
    )
    .map_err(|e| anyhow!(RunError::Classify(e)))?;
    let report = ProbeReport {
        accuracy_lexicalized: lex,
        accuracy_delexicalized: delex,
        seed: args.seed,
    };
    std::fs::create_dir_all(&args.out)?;
    std::fs::write(args.out.join("probe.json"), serde_json::to_string(&report)?)?;
    println!("untrained 1-NN probe: lexicalized {lex:.4}, delexicalized {delex:.4}");
    Ok(())
}

fn cmd_report(args: ReportArgs) -> Result<()> {
    let format: ReportFormat = args.format.parse().map_err(|e: RunError| anyhow!(e))?;
    let mut reports: Vec<EvalReport> = Vec::new();
    for method in MethodId::ALL {
        let dir = args.run.join(method.to_string());
        let eval_path = dir.join("eval.json");
        if !eval_path.exists() {
            continue;
        }
        let mut report: EvalReport = serde_json::from_str(&std::fs::read_to_string(&eval_path)?)
            .with_context(|| format!("parsing {}", eval_path.display()))?;
        let forget_path = dir.join("forget.json");
        if forget_path.exists() {
            let record: serde_json::Value =
                serde_json::from_str(&std::fs::read_to_string(&forget_path)?)?;
            report.forgetting_delta = record.get("delta").and_then(|v| v.as_f64());
        }
        let fewshot_path = dir.join("fewshot.json");
        if fewshot_path.exists() {
            let record: serde_json::Value =
                serde_json::from_str(&std::fs::read_to_string(&fewshot_path)?)?;
            if let Some(n) = record.get("reached_at").and_then(|v| v.as_u64()) {
                report.training_samples_used = n as usize;
            }
        }
        reports.push(report);
    }
    let probe_path = args.run.join("probe.json");
    let probe: Option<ProbeReport> = if probe_path.exists() {
        Some(serde_json::from_str(&std::fs::read_to_string(&probe_path)?)?)
    } else {
        None
    };
    if reports.is_empty() && probe.is_none() {
        return Err(anyhow!(RunError::EmptyCorpus(format!(
            "no eval.json or probe.json found under {}",
            args.run.display()
        ))));
    }
    let rendered = render_report(&reports, probe.as_ref(), format);
    if let ReportFormat::Jsonl = format {
        // Round-trip check: the structured form must parse back exactly.
        let (parsed, parsed_probe) = parse_report(&rendered).map_err(|e| anyhow!(e))?;
        debug_assert_eq!(parsed, reports);
        debug_assert_eq!(parsed_probe, probe);
    }
    if let Some(out) = &args.out {
        if let Some(parent) = out.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent)?;
            }
        }
        std::fs::write(out, &rendered)?;
    }
    print!("{rendered}");
    Ok(())
}
