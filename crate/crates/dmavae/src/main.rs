//! Command-line front end for the pipeline: synthetic data generation, model
//! training, effect estimation, benchmarking, and the discrimination audit.
//! Flags have flat key-value config-file equivalents; flags win on conflict.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use dmavae::bench::{emit_report, run_benchmark, BenchSpec, Method, Target};
use dmavae::estimate::estimate_effects;
use dmavae::model::{make_cmavae, make_dmavae, ModelConfig};
use dmavae::scm::{self, sample_dataset, CaseId, Dataset};
use dmavae::train::{train, TrainConfig};
use dmavae::{adult, io, Error, Result};

#[derive(Parser)]
#[command(
    name = "dmavae",
    version,
    about = "Causal mediation analysis under latent confounding"
)]
struct Cli {
    /// master seed (config key: seed)
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// output directory (config key: out)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// flat key-value config file; flags override its entries
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a synthetic dataset and its ground-truth effect sidecar
    Generate(GenerateArgs),
    /// Train a model on a dataset CSV and write a checkpoint
    Train(TrainArgs),
    /// Estimate natural effects from a checkpoint and a dataset
    Estimate(EstimateArgs),
    /// Run the benchmark grid and emit CSV/JSON/SVG reports
    Bench(BenchArgs),
    /// Audit a dataset for direct and indirect discrimination
    Audit(AuditArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// generator spec file (key-value); the default spec when omitted
    #[arg(long)]
    spec: Option<PathBuf>,
    /// number of records (config key: n)
    #[arg(long)]
    n: Option<usize>,
    /// confounder case applied to the spec (config key: case)
    #[arg(long)]
    case: Option<String>,
}

#[derive(Args)]
struct TrainArgs {
    /// dataset CSV (config key: data)
    #[arg(long)]
    data: Option<PathBuf>,
    /// model kind: dmavae or cmavae (config key: model)
    #[arg(long)]
    model: Option<String>,
    /// comma-separated hidden widths (config key: hidden)
    #[arg(long)]
    hidden: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// early-stopping patience in epochs (config key: patience)
    #[arg(long)]
    patience: Option<usize>,
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Monte-Carlo draws per record (config key: samples)
    #[arg(long)]
    samples: Option<usize>,
}

#[derive(Args)]
struct BenchArgs {
    /// generator spec file for the grid base (config key: spec)
    #[arg(long)]
    spec: Option<PathBuf>,
    /// comma-separated case ids (config key: cases)
    #[arg(long)]
    cases: Option<String>,
    /// comma-separated sample sizes (config key: sizes)
    #[arg(long)]
    sizes: Option<String>,
    #[arg(long)]
    reps: Option<usize>,
    /// comma-separated methods (config key: methods)
    #[arg(long)]
    methods: Option<String>,
    /// comma-separated targets (config key: targets)
    #[arg(long)]
    targets: Option<String>,
    #[arg(long)]
    samples: Option<usize>,
    /// models trained and averaged per variational cell (config key: ensemble)
    #[arg(long)]
    ensemble: Option<usize>,
    #[arg(long)]
    hidden: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
}

#[derive(Args)]
struct AuditArgs {
    /// raw UCI-layout file to ingest (config key: adult)
    #[arg(long)]
    adult: Option<PathBuf>,
    /// pre-encoded dataset CSV, alternative to --adult (config key: data)
    #[arg(long)]
    data: Option<PathBuf>,
    /// reuse a trained checkpoint instead of training in place
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// discrimination threshold (config key: tau)
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    hidden: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    samples: Option<usize>,
}

/// Config entries already validated as `key = value` lines.
struct Config(BTreeMap<String, String>);

impl Config {
    fn load(path: Option<&Path>) -> Result<Config> {
        let mut map = BTreeMap::new();
        if let Some(path) = path {
            let text =
                fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
            for (i, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                    path: path.display().to_string(),
                    line: i + 1,
                    msg: format!("expected `key = value`, found {line:?}"),
                })?;
                map.insert(k.trim().to_string(), v.trim().to_string());
            }
        }
        Ok(Config(map))
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.0.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .parse()
                .map(Some)
                .map_err(|_| Error::Argument(format!("config key {key}: invalid value {raw:?}"))),
        }
    }

    fn path(&self, key: &str) -> Option<PathBuf> {
        self.0.get(key).map(PathBuf::from)
    }
}

fn parse_list<T: FromStr>(raw: &str, what: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    raw.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse()
                .map_err(|e| Error::Argument(format!("invalid {what} {s:?}: {e}")))
        })
        .collect()
}

fn parse_usize_list(raw: &str, what: &str) -> Result<Vec<usize>> {
    raw.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse()
                .map_err(|_| Error::Argument(format!("invalid {what} {s:?}")))
        })
        .collect()
}

fn ensure_out(out: &Path) -> Result<()> {
    fs::create_dir_all(out).map_err(|e| Error::io(out.display().to_string(), e))
}

fn require_file(path: &Path, what: &str) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::Argument(format!(
            "{what} {} does not exist",
            path.display()
        )))
    }
}

fn load_spec(flag: Option<&Path>, cfg: &Config) -> Result<scm::ScmSpec> {
    match flag.map(PathBuf::from).or_else(|| cfg.path("spec")) {
        Some(path) => {
            require_file(&path, "spec file")?;
            io::read_spec_kv(&path)
        }
        None => Ok(scm::default_spec()),
    }
}

fn load_dataset(flag: Option<&Path>, cfg: &Config) -> Result<Dataset> {
    let path = flag
        .map(PathBuf::from)
        .or_else(|| cfg.path("data"))
        .ok_or_else(|| Error::Argument("--data is required".into()))?;
    require_file(&path, "dataset")?;
    io::read_dataset_csv(&path)
}

fn train_config(
    epochs: Option<usize>,
    batch_size: Option<usize>,
    lr: Option<f64>,
    patience: Option<usize>,
    seed: u64,
    cfg: &Config,
) -> Result<TrainConfig> {
    let base = TrainConfig::default();
    Ok(TrainConfig {
        epochs: epochs.or(cfg.get("epochs")?).unwrap_or(base.epochs),
        batch_size: batch_size
            .or(cfg.get("batch_size")?)
            .unwrap_or(base.batch_size),
        lr: lr.or(cfg.get("lr")?).unwrap_or(base.lr),
        seed,
        patience: patience.or(cfg.get("patience")?),
        ..base
    })
}

fn model_config(
    data: &Dataset,
    hidden: Option<&str>,
    seed: u64,
    cfg: &Config,
) -> Result<ModelConfig> {
    let hidden_raw = hidden
        .map(str::to_string)
        .or_else(|| cfg.0.get("hidden").cloned());
    let hidden = match hidden_raw {
        Some(raw) => parse_usize_list(&raw, "hidden width")?,
        None => vec![16, 16],
    };
    Ok(ModelConfig {
        d_x: data.d_x(),
        m_kind: data.m_kind,
        y_kind: data.y_kind,
        hidden,
        seed,
        ..ModelConfig::default()
    })
}

fn cmd_generate(args: &GenerateArgs, seed: u64, out: &Path, cfg: &Config) -> Result<()> {
    let mut spec = load_spec(args.spec.as_deref(), cfg)?;
    if let Some(raw) = args.case.clone().or_else(|| cfg.0.get("case").cloned()) {
        let case: CaseId = raw.parse()?;
        spec = scm::case_spec(case, &spec)?;
    }
    let n = args.n.or(cfg.get("n")?).unwrap_or(5000);
    let data = sample_dataset(&spec, n, seed)?;
    ensure_out(out)?;
    io::write_dataset_csv(&out.join("dataset.csv"), &data)?;
    if let Some(truth) = &data.truth {
        io::write_truth_kv(&out.join("truth.kv"), truth)?;
    }
    io::write_spec_kv(&out.join("spec.kv"), &spec)?;
    println!(
        "wrote {} records to {}",
        n,
        out.join("dataset.csv").display()
    );
    Ok(())
}

fn cmd_train(args: &TrainArgs, seed: u64, out: &Path, cfg: &Config) -> Result<()> {
    let data = load_dataset(args.data.as_deref(), cfg)?;
    let kind = args
        .model
        .clone()
        .or_else(|| cfg.0.get("model").cloned())
        .unwrap_or_else(|| "dmavae".to_string());
    let mc = model_config(&data, args.hidden.as_deref(), seed, cfg)?;
    let mut model = match kind.as_str() {
        "dmavae" => make_dmavae(&mc)?,
        "cmavae" => make_cmavae(&mc)?,
        other => return Err(Error::Argument(format!("unknown model kind {other}"))),
    };
    let tc = train_config(
        args.epochs,
        args.batch_size,
        args.lr,
        args.patience,
        seed,
        cfg,
    )?;
    let trace = train(&mut model, &data, &tc)?;
    ensure_out(out)?;
    io::write_checkpoint(&out.join("checkpoint.json"), &model, Some(&tc))?;
    let trace_path = out.join("trace.csv");
    let file = fs::File::create(&trace_path)
        .map_err(|e| Error::io(trace_path.display().to_string(), e))?;
    trace
        .write_csv(file)
        .map_err(|e| Error::io(trace_path.display().to_string(), e))?;
    println!(
        "trained {} for {} epochs, final loss {:.6}",
        kind,
        trace.epochs.len(),
        trace.final_loss().unwrap_or(f64::NAN)
    );
    Ok(())
}

fn cmd_estimate(args: &EstimateArgs, seed: u64, out: &Path, cfg: &Config) -> Result<()> {
    let data = load_dataset(args.data.as_deref(), cfg)?;
    let ckpt_path = args
        .checkpoint
        .clone()
        .or_else(|| cfg.path("checkpoint"))
        .ok_or_else(|| Error::Argument("--checkpoint is required".into()))?;
    require_file(&ckpt_path, "checkpoint")?;
    let ckpt = io::read_checkpoint(&ckpt_path)?;
    let samples = args.samples.or(cfg.get("samples")?).unwrap_or(100);
    let est = estimate_effects(&ckpt.model, &data, samples, seed)?;
    ensure_out(out)?;
    io::write_estimate(&out.join("estimate.json"), &est)?;
    println!(
        "nde {:.4}  nie {:.4}  nie_r {:.4}  te {:.4}",
        est.nde, est.nie, est.nie_r, est.te
    );
    Ok(())
}

fn cmd_bench(args: &BenchArgs, seed: u64, out: &Path, cfg: &Config) -> Result<()> {
    let base = load_spec(args.spec.as_deref(), cfg)?;
    let defaults = BenchSpec::default();
    let pick = |flag: Option<String>, key: &str| flag.or_else(|| cfg.0.get(key).cloned());
    let cases: Vec<CaseId> = match pick(args.cases.clone(), "cases") {
        Some(raw) => parse_list(&raw, "case")?,
        None => defaults.cases.clone(),
    };
    let sizes = match pick(args.sizes.clone(), "sizes") {
        Some(raw) => parse_usize_list(&raw, "size")?,
        None => defaults.sizes.clone(),
    };
    let methods: Vec<Method> = match pick(args.methods.clone(), "methods") {
        Some(raw) => parse_list(&raw, "method")?,
        None => defaults.methods.clone(),
    };
    let targets: Vec<Target> = match pick(args.targets.clone(), "targets") {
        Some(raw) => parse_list(&raw, "target")?,
        None => defaults.targets.clone(),
    };
    let hidden = match pick(args.hidden.clone(), "hidden") {
        Some(raw) => parse_usize_list(&raw, "hidden width")?,
        None => defaults.hidden.clone(),
    };
    let spec = BenchSpec {
        base,
        cases,
        sizes,
        reps: args.reps.or(cfg.get("reps")?).unwrap_or(defaults.reps),
        methods,
        targets,
        seed,
        train: train_config(args.epochs, args.batch_size, args.lr, None, seed, cfg)?,
        hidden,
        n_samples: args
            .samples
            .or(cfg.get("samples")?)
            .unwrap_or(defaults.n_samples),
        ensemble: args
            .ensemble
            .or(cfg.get("ensemble")?)
            .unwrap_or(defaults.ensemble),
        out_dir: Some(out.display().to_string()),
    };
    let report = run_benchmark(&spec)?;
    emit_report(&report, out)?;
    println!(
        "benchmark finished: {} cells, report in {}",
        report.cells.len(),
        out.display()
    );
    Ok(())
}

fn cmd_audit(args: &AuditArgs, seed: u64, out: &Path, cfg: &Config) -> Result<()> {
    let adult_path = args.adult.clone().or_else(|| cfg.path("adult"));
    let data_path = args.data.clone().or_else(|| cfg.path("data"));
    ensure_out(out)?;
    let data = match (adult_path, data_path) {
        (Some(raw), None) => {
            require_file(&raw, "adult file")?;
            let (data, mapping) = adult::ingest_adult(&raw)?;
            adult::write_mapping(&out.join("mapping.json"), &mapping)?;
            data
        }
        (None, Some(csv)) => {
            require_file(&csv, "dataset")?;
            io::read_dataset_csv(&csv)?
        }
        _ => {
            return Err(Error::Argument(
                "exactly one of --adult or --data is required".into(),
            ))
        }
    };
    let tau = args.tau.or(cfg.get("tau")?).unwrap_or(0.05);
    if tau <= 0.0 {
        return Err(Error::Argument("tau must be > 0".into()));
    }
    let model = match args.checkpoint.clone().or_else(|| cfg.path("checkpoint")) {
        Some(path) => {
            require_file(&path, "checkpoint")?;
            io::read_checkpoint(&path)?.model
        }
        None => {
            let mc = model_config(&data, args.hidden.as_deref(), seed, cfg)?;
            let mut model = make_dmavae(&mc)?;
            let tc = train_config(args.epochs, args.batch_size, None, None, seed, cfg)?;
            train(&mut model, &data, &tc)?;
            model
        }
    };
    let samples = args.samples.or(cfg.get("samples")?).unwrap_or(100);
    let est = estimate_effects(&model, &data, samples, seed)?;
    io::write_estimate(&out.join("estimate.json"), &est)?;
    let report = io::AuditReport::new(&est, tau, data.len());
    io::write_audit(&out.join("audit.json"), &report)?;
    println!(
        "nde {:.4} ({}), nie {:.4} ({}), tau {tau}",
        report.nde,
        if report.direct_flag {
            "direct discrimination flagged"
        } else {
            "no direct flag"
        },
        report.nie,
        if report.indirect_flag {
            "indirect discrimination flagged"
        } else {
            "no indirect flag"
        },
    );
    Ok(())
}

/// Usage-shaped failures (bad arguments, missing or malformed inputs) exit 2;
/// runtime failures exit 1.
fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Argument(_) | Error::Parse { .. } | Error::Spec(_) => 2,
        Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => 2,
        _ => 1,
    }
}

fn run(cli: &Cli) -> Result<()> {
    let cfg = Config::load(cli.config.as_deref())?;
    let seed = match cli.seed {
        Some(s) => s,
        None => cfg.get("seed")?.unwrap_or(0),
    };
    let out = cli
        .out
        .clone()
        .or_else(|| cfg.path("out"))
        .unwrap_or_else(|| PathBuf::from("."));
    match &cli.command {
        Command::Generate(args) => cmd_generate(args, seed, &out, &cfg),
        Command::Train(args) => cmd_train(args, seed, &out, &cfg),
        Command::Estimate(args) => cmd_estimate(args, seed, &out, &cfg),
        Command::Bench(args) => cmd_bench(args, seed, &out, &cfg),
        Command::Audit(args) => cmd_audit(args, seed, &out, &cfg),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}
