use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use segdst_core::data::{self, DatasetBundle, DatasetFormat};
use segdst_core::evaluate::{score_dataset, PredictionRecord};
use segdst_core::parse::ParseMode;
use segdst_core::{build_prompt, LabelSchema, PromptVariant};
use segdst_llm::{cache_stats, CacheDir, GenerationParams};

mod run;

#[derive(Parser)]
#[command(name = "segdst", version, about = "Zero-shot dialogue segmentation and state tracking")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Prompt a backend for every conversation, then parse and score.
    Run(RunArgs),
    /// Rescore a predictions file without calling a backend.
    Score(ScoreArgs),
    /// Print the exact prompt `run` would send for one conversation.
    Render(RenderArgs),
    /// Write a dataset out as canonical JSONL.
    Convert(ConvertArgs),
    /// Inspect a generation cache.
    Cache {
        #[command(subcommand)]
        command: CacheCommand,
    },
}

#[derive(Subcommand)]
enum CacheCommand {
    Stats {
        #[arg(long)]
        cache_dir: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Mwoz21,
    Mwoz24,
    Dialseg711,
    Jsonl,
}

impl From<FormatArg> for DatasetFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Mwoz21 => DatasetFormat::Mwoz21,
            FormatArg::Mwoz24 => DatasetFormat::Mwoz24,
            FormatArg::Dialseg711 => DatasetFormat::Dialseg711,
            FormatArg::Jsonl => DatasetFormat::Jsonl,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SplitArg {
    All,
    Dev,
    Test,
}

#[derive(Args)]
struct DatasetArgs {
    /// Dataset file (or directory for dialseg711).
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, value_enum)]
    format: FormatArg,
    /// Restrict to one side of the seeded dev/test split.
    #[arg(long, value_enum, default_value = "all")]
    split: SplitArg,
    /// Conversations in the dev side of the split.
    #[arg(long, default_value_t = 150)]
    n_dev: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl DatasetArgs {
    fn load(&self) -> anyhow::Result<DatasetBundle> {
        let bundle = data::load(&self.dataset, self.format.into())
            .with_context(|| format!("loading {}", self.dataset.display()))?;
        if self.split == SplitArg::All {
            return Ok(bundle);
        }
        let (dev, test) = data::split_dev_test(&bundle, self.n_dev, self.seed)?;
        Ok(if self.split == SplitArg::Dev { dev } else { test })
    }
}

#[derive(Args)]
struct PromptArgs {
    #[arg(long, value_parser = parse_variant)]
    variant: PromptVariant,
    /// Label schema JSON; defaults to the bundled schema for the variant.
    #[arg(long)]
    schema: Option<PathBuf>,
}

impl PromptArgs {
    fn schema(&self) -> anyhow::Result<LabelSchema> {
        load_schema(self.schema.as_deref(), self.variant)
    }
}

fn load_schema(path: Option<&Path>, variant: PromptVariant) -> anyhow::Result<LabelSchema> {
    Ok(match path {
        Some(p) => LabelSchema::load(p).with_context(|| format!("loading schema {}", p.display()))?,
        None if variant == PromptVariant::S3dstMwoz => LabelSchema::mwoz(),
        None => LabelSchema::open_domain(),
    })
}

fn parse_variant(s: &str) -> Result<PromptVariant, String> {
    s.parse().map_err(|e: segdst_core::Error| e.to_string())
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BackendArg {
    Http,
    Replay,
    Record,
    Mock,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    dataset: DatasetArgs,
    #[command(flatten)]
    prompt: PromptArgs,
    #[arg(long, value_enum)]
    backend: BackendArg,
    /// Chat-completion URL for http and record backends.
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long, default_value = "gpt-4")]
    model: String,
    #[arg(long, default_value_t = 0.0)]
    temperature: f64,
    #[arg(long, default_value_t = 1500)]
    max_output_tokens: u32,
    /// Conversations processed in parallel.
    #[arg(long, default_value_t = 4)]
    concurrency: usize,
    /// Override the Pk/WindowDiff window (clamped per conversation).
    #[arg(long)]
    window_size: Option<usize>,
    /// Output directory for predictions.jsonl and report.json.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    /// JSON object mapping conversation id to scripted model output.
    #[arg(long)]
    mock_script: Option<PathBuf>,
    /// Treat any parser repair as a failure.
    #[arg(long)]
    strict_parse: bool,
    /// Per-request timeout in seconds for the http backend.
    #[arg(long, default_value_t = 120)]
    timeout_secs: u64,
}

impl RunArgs {
    fn params(&self) -> GenerationParams {
        GenerationParams {
            model: self.model.clone(),
            temperature: self.temperature,
            max_output_tokens: self.max_output_tokens,
        }
    }

    fn parse_mode(&self) -> ParseMode {
        if self.strict_parse {
            ParseMode::Strict
        } else {
            ParseMode::Lenient
        }
    }
}

#[derive(Args)]
struct ScoreArgs {
    #[command(flatten)]
    dataset: DatasetArgs,
    /// predictions.jsonl written by `run`.
    #[arg(long)]
    predictions: PathBuf,
    /// Needed only when the predictions file is empty.
    #[arg(long, value_parser = parse_variant)]
    variant: Option<PromptVariant>,
    #[arg(long)]
    window_size: Option<usize>,
    /// Keep only these report sections.
    #[arg(long, value_enum, value_delimiter = ',')]
    metrics: Vec<MetricArg>,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MetricArg {
    Jga,
    Labels,
    Pk,
    WindowDiff,
}

#[derive(Args)]
struct RenderArgs {
    #[command(flatten)]
    dataset: DatasetArgs,
    #[command(flatten)]
    prompt: PromptArgs,
    /// Conversation id.
    #[arg(long)]
    id: String,
}

#[derive(Args)]
struct ConvertArgs {
    #[command(flatten)]
    dataset: DatasetArgs,
    /// Output JSONL path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn read_predictions(path: &Path) -> anyhow::Result<Vec<PredictionRecord>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| serde_json::from_str(l).with_context(|| format!("{}:{}", path.display(), n + 1)))
        .collect()
}

pub(crate) fn write_json(path: &Path, value: &impl serde::Serialize) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn score(args: &ScoreArgs) -> anyhow::Result<()> {
    let bundle = args.dataset.load()?;
    let records = read_predictions(&args.predictions)?;
    let variant = match (records.first(), args.variant) {
        (Some(r), _) => r.variant,
        (None, Some(v)) => v,
        (None, None) => bail!("predictions file is empty; pass --variant"),
    };
    let mut preds = std::collections::BTreeMap::new();
    for r in records {
        let id = r.id.clone();
        if preds.insert(id.clone(), r).is_some() {
            bail!("conversation {id} appears twice in the predictions file");
        }
    }
    let (mut report, warnings) = score_dataset(&bundle, variant, &preds, args.window_size)?;
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    if !args.metrics.is_empty() {
        let keep = |m| args.metrics.contains(&m);
        if !keep(MetricArg::Jga) {
            report.jga.clear();
        }
        if !keep(MetricArg::Labels) {
            report.per_label_accuracy.clear();
        }
        if !keep(MetricArg::Pk) {
            report.pk = None;
        }
        if !keep(MetricArg::WindowDiff) {
            report.window_diff = None;
        }
    }
    match &args.out {
        Some(path) => write_json(path, &report),
        None => {
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(())
        }
    }
}

fn render(args: &RenderArgs) -> anyhow::Result<()> {
    let bundle = args.dataset.load()?;
    let conv = bundle
        .get(&args.id)
        .with_context(|| format!("no conversation with id {}", args.id))?;
    let prompt = build_prompt(args.prompt.variant, conv, &args.prompt.schema()?)?;
    let mut out = std::io::stdout().lock();
    out.write_all(prompt.text.as_bytes())?;
    out.flush()?;
    Ok(())
}

fn convert(args: &ConvertArgs) -> anyhow::Result<()> {
    let bundle = args.dataset.load()?;
    match &args.out {
        Some(path) => {
            let mut file = std::io::BufWriter::new(
                fs::File::create(path).with_context(|| format!("creating {}", path.display()))?,
            );
            data::write_jsonl(&bundle, &mut file)?;
            file.flush()?;
        }
        None => data::write_jsonl(&bundle, &mut std::io::stdout().lock())?,
    }
    eprintln!(
        "{} conversations, {} turns, {} gold boundaries",
        bundle.conversations.len(),
        bundle.turn_count(),
        bundle.boundary_count()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(args) => run::run(args),
        Command::Score(args) => score(args),
        Command::Render(args) => render(args),
        Command::Convert(args) => convert(args),
        Command::Cache {
            command: CacheCommand::Stats { cache_dir },
        } => cache_stats(&CacheDir::new(cache_dir))
            .map_err(anyhow::Error::from)
            .and_then(|s| Ok(println!("{}", serde_json::to_string_pretty(&s)?))),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
