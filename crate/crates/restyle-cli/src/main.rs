//! Command-line pipeline: corpus generation, training, transfer and its
//! variants, evaluation, and style-vector export.
//!
//! Every subcommand validates its input paths before any output file is
//! created, requires or generates-and-logs a seed, and logs its resolved
//! configuration as one JSON line on stderr so a run can be reproduced from
//! the log alone.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use restyle::corpus::{
    documents_to_records, generate_synthetic_corpus, read_records, write_records, CorpusRecord,
    SyntheticStyleSpec,
};
use restyle::corruption::TuningRanges;
use restyle::eval::{evaluate_transfer, export_style_vectors};
use restyle::inference::{ExemplarConfig, TransferMode, TransferRequest, TransferSession};
use restyle::model::{load_checkpoint, save_checkpoint, DecodeMode, DecodeOptions, Model};
use restyle::rng::stream;
use restyle::training::{evaluate_heldout, train, TrainConfig};

#[derive(Parser)]
#[command(name = "restyle", version, about = "Label-free text style transfer at desk scale")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic style corpus as JSON-lines adjacent-pair records.
    GenCorpus(GenCorpusArgs),
    /// Train a model on a corpus file and write a checkpoint.
    Train(TrainArgs),
    /// Restyle inputs using exemplar sets.
    Transfer(TransferArgs),
    /// Complete prompts in the exemplar target style (add 40-70%, delete 0%).
    Complete(CompleteArgs),
    /// Shorten inputs in their own style (add 0-5%, delete 40-90%).
    Shorten(ShortenArgs),
    /// Randomly augment inputs by noising their style vectors.
    Augment(AugmentArgs),
    /// Evaluate transfer accuracy/content/G-score with the oracle classifier.
    Eval(EvalArgs),
    /// Export style vectors as a binary matrix plus a labels sidecar.
    ExportStyles(ExportArgs),
    /// Report held-out denoising loss for a checkpoint.
    EvalHeldout(EvalHeldoutArgs),
}

#[derive(Args)]
struct GenCorpusArgs {
    /// Synthetic style spec (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output corpus path (JSON lines).
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1000)]
    num_docs: usize,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct TrainArgs {
    /// Training config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Corpus file (JSON lines).
    #[arg(long)]
    corpus: PathBuf,
    /// Where to write the checkpoint.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Overrides the seed in the config file.
    #[arg(long)]
    seed: Option<u64>,
    /// Metrics stream (newline-delimited JSON); stdout when omitted.
    #[arg(long)]
    metrics: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct StyledIoArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Exemplar/settings config (JSON).
    #[arg(long)]
    exemplars: PathBuf,
    /// Input text file, one input per line.
    #[arg(long)]
    input: PathBuf,
    /// Output records (JSON lines).
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config's delta scale.
    #[arg(long)]
    lambda: Option<f64>,
    /// Overrides the config's add range, as LO:HI.
    #[arg(long, value_parser = parse_range)]
    add_range: Option<(f64, f64)>,
    /// Overrides the config's delete range, as LO:HI.
    #[arg(long, value_parser = parse_range)]
    delete_range: Option<(f64, f64)>,
    /// Source class name (defaults to the config's first class).
    #[arg(long)]
    source: Option<String>,
    /// Target class name (defaults to the config's second class).
    #[arg(long)]
    target: Option<String>,
    #[arg(long, value_enum)]
    decode: Option<DecodeArg>,
    #[arg(long)]
    temperature: Option<f64>,
}

#[derive(Args)]
struct TransferArgs {
    #[command(flatten)]
    io: StyledIoArgs,
    #[arg(long, value_enum, default_value_t = ModeArg::Delta)]
    mode: ModeArg,
}

#[derive(Args)]
struct CompleteArgs {
    #[command(flatten)]
    io: StyledIoArgs,
}

#[derive(Args)]
struct ShortenArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct AugmentArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Standard deviation of the style noise.
    #[arg(long, default_value_t = 0.08)]
    sigma: f64,
    /// Augmentations per input line.
    #[arg(long, default_value_t = 1)]
    samples: usize,
    #[arg(long, value_parser = parse_range, default_value = "0.1:0.3")]
    add_range: (f64, f64),
    #[arg(long, value_parser = parse_range, default_value = "0.1:0.3")]
    delete_range: (f64, f64),
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    exemplars: PathBuf,
    /// Labeled test corpus (JSON lines with style_id).
    #[arg(long)]
    input: PathBuf,
    /// Synthetic style spec defining the oracle classifier.
    #[arg(long)]
    spec: PathBuf,
    /// Report output path (JSON).
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Cap on evaluated records.
    #[arg(long)]
    limit: Option<usize>,
}

#[derive(Args)]
struct ExportArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Corpus records whose targets get embedded (JSON lines).
    #[arg(long)]
    input: PathBuf,
    /// Output stem: writes <out>.bin and <out>.json.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    limit: Option<usize>,
}

#[derive(Args)]
struct EvalHeldoutArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Delta,
    Overwrite,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DecodeArg {
    Greedy,
    Sample,
}

fn parse_range(s: &str) -> std::result::Result<(f64, f64), String> {
    let (lo, hi) = s
        .split_once(':')
        .ok_or_else(|| format!("range '{s}' must look like LO:HI"))?;
    let lo: f64 = lo.parse().map_err(|_| format!("bad range low '{lo}'"))?;
    let hi: f64 = hi.parse().map_err(|_| format!("bad range high '{hi}'"))?;
    Ok((lo, hi))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(classify_error(&err))
        }
    }
}

/// Distinct exit codes: 3 missing file, 4 invalid config/input, 1 other.
fn classify_error(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(io) = cause.downcast_ref::<std::io::Error>() {
            if io.kind() == std::io::ErrorKind::NotFound {
                return 3;
            }
        }
        if let Some(re) = cause.downcast_ref::<restyle::RestyleError>() {
            match re {
                restyle::RestyleError::Io(io) if io.kind() == std::io::ErrorKind::NotFound => {
                    return 3
                }
                restyle::RestyleError::Config(_)
                | restyle::RestyleError::Json(_)
                | restyle::RestyleError::Checkpoint(_) => return 4,
                _ => {}
            }
        }
        if cause.downcast_ref::<serde_json::Error>().is_some() {
            return 4;
        }
    }
    1
}

fn require_file(path: &Path, what: &str) -> Result<()> {
    if !path.is_file() {
        bail!(
            "{} not found: {}",
            what,
            path.display()
        );
    }
    Ok(())
}

/// Explicit seed, or a generated one; either way it is logged.
fn resolve_seed(seed: Option<u64>) -> u64 {
    seed.unwrap_or_else(|| {
        use std::time::{SystemTime, UNIX_EPOCH};
        let nanos = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_nanos() as u64)
            .unwrap_or(0);
        nanos ^ std::process::id() as u64
    })
}

fn log_resolved(command: &str, resolved: serde_json::Value) {
    eprintln!(
        "{}",
        serde_json::json!({ "resolved": { "command": command }, "config": resolved })
    );
}

fn read_input_lines(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading input {}", path.display()))?;
    Ok(text
        .lines()
        .map(str::to_string)
        .filter(|l| !l.trim().is_empty())
        .collect())
}

fn write_outcomes(path: &Path, outcomes: &[restyle::inference::TransferOutcome]) -> Result<()> {
    let mut out = std::io::BufWriter::new(
        std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?,
    );
    for outcome in outcomes {
        serde_json::to_writer(&mut out, outcome)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

fn load_model(path: &Path) -> Result<Model> {
    require_file(path, "checkpoint")?;
    load_checkpoint(path).with_context(|| format!("loading checkpoint {}", path.display()))
}

/// Applies flag overrides on top of the exemplar config (flags win).
fn apply_overrides(config: &mut ExemplarConfig, io: &StyledIoArgs) -> Result<()> {
    if let Some(l) = io.lambda {
        config.lambda = l;
    }
    if let Some(add) = io.add_range {
        config.ranges = TuningRanges::new(add, config.ranges.delete)?;
    }
    if let Some(del) = io.delete_range {
        config.ranges = TuningRanges::new(config.ranges.add, del)?;
    }
    let mut decode = config.decode.unwrap_or(DecodeOptions::greedy(64));
    if let Some(mode) = io.decode {
        decode.mode = match mode {
            DecodeArg::Greedy => DecodeMode::Greedy,
            DecodeArg::Sample => DecodeMode::Sample,
        };
    }
    if let Some(t) = io.temperature {
        decode.temperature = t;
    }
    config.decode = Some(decode);
    config.validate()?;
    Ok(())
}

fn styled_setup(io: &StyledIoArgs) -> Result<(Model, ExemplarConfig, Vec<String>, u64)> {
    require_file(&io.checkpoint, "checkpoint")?;
    require_file(&io.exemplars, "exemplar config")?;
    require_file(&io.input, "input file")?;
    let model = load_model(&io.checkpoint)?;
    let mut config = ExemplarConfig::load(&io.exemplars)?;
    apply_overrides(&mut config, io)?;
    let inputs = read_input_lines(&io.input)?;
    let seed = resolve_seed(io.seed);
    Ok((model, config, inputs, seed))
}

fn source_target<'c>(
    config: &'c ExemplarConfig,
    io: &StyledIoArgs,
) -> Result<(&'c restyle::inference::ExemplarSet, &'c restyle::inference::ExemplarSet)> {
    let source = match &io.source {
        Some(name) => config.class(name)?,
        None => &config.classes[0],
    };
    let target = match &io.target {
        Some(name) => config.class(name)?,
        None => &config.classes[1],
    };
    Ok((source, target))
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::GenCorpus(args) => {
            require_file(&args.config, "style spec")?;
            let text = std::fs::read_to_string(&args.config)?;
            let spec: SyntheticStyleSpec = serde_json::from_str(&text)?;
            let seed = resolve_seed(args.seed);
            log_resolved(
                "gen-corpus",
                serde_json::json!({
                    "config": args.config.display().to_string(),
                    "num_docs": args.num_docs,
                    "seed": seed,
                    "out": args.out.display().to_string(),
                }),
            );
            let docs = generate_synthetic_corpus(&spec, args.num_docs, seed)?;
            let records = documents_to_records(&docs);
            write_records(&args.out, &records)?;
            println!(
                "{}",
                serde_json::json!({"documents": docs.len(), "records": records.len()})
            );
            Ok(())
        }
        Command::Train(args) => {
            require_file(&args.config, "train config")?;
            require_file(&args.corpus, "corpus")?;
            let mut config = TrainConfig::load(&args.config)?;
            if let Some(seed) = args.seed {
                config.seed = seed;
            }
            log_resolved("train", serde_json::to_value(&config)?);
            let records = read_records(&args.corpus)?;
            let mut metrics_out: Box<dyn Write> = match &args.metrics {
                Some(path) => Box::new(std::io::BufWriter::new(
                    std::fs::File::create(path)
                        .with_context(|| format!("creating {}", path.display()))?,
                )),
                None => Box::new(std::io::stdout()),
            };
            let outcome = train(&config, &records, |m| {
                let line = serde_json::to_string(m).expect("metrics serialize");
                let _ = writeln!(metrics_out, "{line}");
            })?;
            save_checkpoint(&args.checkpoint, &outcome.model, "adam")?;
            println!("{}", serde_json::to_string(&outcome.summary)?);
            Ok(())
        }
        Command::Transfer(args) => {
            let (model, config, inputs, seed) = styled_setup(&args.io)?;
            log_resolved(
                "transfer",
                serde_json::json!({
                    "checkpoint": args.io.checkpoint.display().to_string(),
                    "exemplars": serde_json::to_value(&config)?,
                    "mode": if args.mode == ModeArg::Overwrite { "overwrite" } else { "delta" },
                    "seed": seed,
                }),
            );
            let (source, target) = source_target(&config, &args.io)?;
            let mut session = TransferSession::new(&model);
            let mut outcomes = Vec::new();
            for (i, input) in inputs.iter().enumerate() {
                let req = TransferRequest {
                    input: input.clone(),
                    source: source.clone(),
                    target: target.clone(),
                    lambda: config.lambda,
                    ranges: config.ranges,
                    mode: if args.mode == ModeArg::Overwrite {
                        TransferMode::Overwrite
                    } else {
                        TransferMode::Delta
                    },
                    decode: config.decode.expect("decode resolved"),
                };
                let mut rng = stream(seed, &["cli-transfer".into(), i.into()]);
                outcomes.push(session.transfer_detailed(&req, &mut rng)?);
            }
            write_outcomes(&args.io.out, &outcomes)?;
            Ok(())
        }
        Command::Complete(args) => {
            let (model, config, inputs, seed) = styled_setup(&args.io)?;
            log_resolved(
                "complete",
                serde_json::json!({
                    "checkpoint": args.io.checkpoint.display().to_string(),
                    "lambda": config.lambda,
                    "seed": seed,
                }),
            );
            let (source, target) = source_target(&config, &args.io)?;
            let decode = config.decode.expect("decode resolved");
            let mut session = TransferSession::new(&model);
            let mut outcomes = Vec::new();
            for (i, prompt) in inputs.iter().enumerate() {
                let mut rng = stream(seed, &["cli-complete".into(), i.into()]);
                outcomes.push(session.complete(prompt, source, target, config.lambda, &decode, &mut rng)?);
            }
            write_outcomes(&args.io.out, &outcomes)?;
            Ok(())
        }
        Command::Shorten(args) => {
            require_file(&args.checkpoint, "checkpoint")?;
            require_file(&args.input, "input file")?;
            let model = load_model(&args.checkpoint)?;
            let inputs = read_input_lines(&args.input)?;
            let seed = resolve_seed(args.seed);
            log_resolved(
                "shorten",
                serde_json::json!({
                    "checkpoint": args.checkpoint.display().to_string(),
                    "seed": seed,
                }),
            );
            let mut session = TransferSession::new(&model);
            let mut outcomes = Vec::new();
            for (i, input) in inputs.iter().enumerate() {
                let mut rng = stream(seed, &["cli-shorten".into(), i.into()]);
                outcomes.push(session.shorten(input, &mut rng)?);
            }
            write_outcomes(&args.out, &outcomes)?;
            Ok(())
        }
        Command::Augment(args) => {
            require_file(&args.checkpoint, "checkpoint")?;
            require_file(&args.input, "input file")?;
            let model = load_model(&args.checkpoint)?;
            let inputs = read_input_lines(&args.input)?;
            let seed = resolve_seed(args.seed);
            let ranges = TuningRanges::new(args.add_range, args.delete_range)?;
            log_resolved(
                "augment",
                serde_json::json!({
                    "checkpoint": args.checkpoint.display().to_string(),
                    "sigma": args.sigma,
                    "samples": args.samples,
                    "ranges": serde_json::to_value(ranges)?,
                    "seed": seed,
                }),
            );
            let mut session = TransferSession::new(&model);
            let mut outcomes = Vec::new();
            for (i, input) in inputs.iter().enumerate() {
                for k in 0..args.samples {
                    let mut rng =
                        stream(seed, &["cli-augment".into(), i.into(), k.into()]);
                    outcomes.push(session.augment(input, args.sigma, &ranges, &mut rng)?);
                }
            }
            write_outcomes(&args.out, &outcomes)?;
            Ok(())
        }
        Command::Eval(args) => {
            require_file(&args.checkpoint, "checkpoint")?;
            require_file(&args.exemplars, "exemplar config")?;
            require_file(&args.input, "test corpus")?;
            require_file(&args.spec, "style spec")?;
            let model = load_model(&args.checkpoint)?;
            let exemplars = ExemplarConfig::load(&args.exemplars)?;
            let spec: SyntheticStyleSpec =
                serde_json::from_str(&std::fs::read_to_string(&args.spec)?)?;
            spec.validate()?;
            let mut records = read_records(&args.input)?;
            if let Some(limit) = args.limit {
                records.truncate(limit);
            }
            let seed = resolve_seed(args.seed);
            log_resolved(
                "eval",
                serde_json::json!({
                    "checkpoint": args.checkpoint.display().to_string(),
                    "records": records.len(),
                    "seed": seed,
                }),
            );
            let report = evaluate_transfer(&model, &records, &exemplars, &spec, seed)?;
            std::fs::write(&args.out, serde_json::to_string_pretty(&report)?)?;
            println!("{}", serde_json::to_string(&report)?);
            Ok(())
        }
        Command::ExportStyles(args) => {
            require_file(&args.checkpoint, "checkpoint")?;
            require_file(&args.input, "corpus")?;
            let model = load_model(&args.checkpoint)?;
            let mut records = read_records(&args.input)?;
            if let Some(limit) = args.limit {
                records.truncate(limit);
            }
            log_resolved(
                "export-styles",
                serde_json::json!({
                    "checkpoint": args.checkpoint.display().to_string(),
                    "records": records.len(),
                }),
            );
            let vectors = ndarray_matrix(&model, &records)?;
            let labels: Vec<String> = records
                .iter()
                .map(|r| r.style_id.clone().unwrap_or_else(|| "unlabeled".into()))
                .collect();
            let bin = args.out.with_extension("bin");
            let meta = args.out.with_extension("json");
            export_style_vectors(&bin, &meta, &vectors, &labels)?;
            println!(
                "{}",
                serde_json::json!({
                    "vectors": labels.len(),
                    "bin": bin.display().to_string(),
                    "meta": meta.display().to_string(),
                })
            );
            Ok(())
        }
        Command::EvalHeldout(args) => {
            require_file(&args.checkpoint, "checkpoint")?;
            require_file(&args.input, "corpus")?;
            let model = load_model(&args.checkpoint)?;
            let records = read_records(&args.input)?;
            let seed = resolve_seed(args.seed);
            log_resolved(
                "eval-heldout",
                serde_json::json!({
                    "checkpoint": args.checkpoint.display().to_string(),
                    "seed": seed,
                }),
            );
            let report = evaluate_heldout(
                &model,
                &records,
                &restyle::corruption::NoiseToggles::default(),
                seed,
            )?;
            std::fs::write(&args.out, serde_json::to_string_pretty(&report)?)?;
            println!("{}", serde_json::to_string(&report)?);
            Ok(())
        }
    }
}

fn ndarray_matrix(
    model: &Model,
    records: &[CorpusRecord],
) -> Result<ndarray::Array2<f64>> {
    let d = model.config().d_model;
    let mut matrix = ndarray::Array2::zeros((records.len(), d));
    for (i, record) in records.iter().enumerate() {
        let toks = model.vocab().tokenize(&record.target);
        let style = model
            .extract_style(&toks)
            .with_context(|| format!("record {i} has an untokenizable target"))?;
        matrix.row_mut(i).assign(&style.values);
    }
    Ok(matrix)
}
