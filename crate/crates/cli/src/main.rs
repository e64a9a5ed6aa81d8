use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use shapprune_core::oracle::{format_score_file, read_score_file, CountingOracle, NormalizedOracle, ScoreFileHeader};
use shapprune_core::pipeline::{self, OracleSource, PipelineConfig};
use shapprune_core::shapley::{efficiency_check, DirectScorer, ScoreMode, SurrogateScorer};
use shapprune_core::surrogate::{load_checkpoint, save_checkpoint};
use shapprune_core::{
    best_pair_search, estimate_contributions, exact_shapley, make_plan, normalize_score, rank_volatility,
    sample_stratified, train, EstimatorConfig, HammingWeightPlan, Mask, MaskScoreRecord, SamplerConfig,
    ShapleyReport, TrainConfig, UtilityOracle, Variant,
};

#[derive(Parser)]
#[command(name = "shapprune", version, about = "Rank layers for pruning by their estimated contribution")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw stratified retain-masks.
    Sample(SampleArgs),
    /// Score masks with an oracle and write a score file.
    Evaluate(EvaluateArgs),
    /// Fit the surrogate to a score file.
    Train(TrainArgs),
    /// Monte Carlo layer contributions from a surrogate or an oracle.
    Estimate(EstimateArgs),
    /// Turn a report into a pruning plan.
    Plan(PlanArgs),
    /// Exact Shapley values by enumeration (small layer counts only).
    Exact(ExactArgs),
    /// Interaction diagnostics.
    #[command(subcommand)]
    Diagnose(Diagnose),
    /// Run all three stages from a config file.
    RunAll(RunAllArgs),
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct OracleArgs {
    /// Synthetic game spec (JSON).
    #[arg(long)]
    oracle: Option<PathBuf>,
    /// Measured score table (JSON Lines).
    #[arg(long)]
    table: Option<PathBuf>,
}

impl OracleArgs {
    fn load(&self) -> Result<Box<dyn UtilityOracle>> {
        let source = match (&self.oracle, &self.table) {
            (Some(path), _) => OracleSource::GameFile(path.clone()),
            (None, Some(path)) => OracleSource::ScoreTable(path.clone()),
            (None, None) => bail!("pass --oracle or --table"),
        };
        Ok(source.resolve()?)
    }
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long)]
    layers: usize,
    /// Hamming weights (retained-layer counts), comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    weights: Vec<usize>,
    #[arg(long)]
    count: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Reject repeated masks within a stratum.
    #[arg(long)]
    dedupe: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Masks as written by `sample`.
    #[arg(long)]
    masks: PathBuf,
    #[command(flatten)]
    source: OracleArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 200)]
    epochs: usize,
    #[arg(long, default_value_t = 0.008)]
    lr: f64,
    #[arg(long, default_value_t = 0.9)]
    momentum: f64,
    #[arg(long, default_value_t = 300)]
    batch: usize,
    #[arg(long, default_value_t = 0.1)]
    lr_decay_factor: f64,
    #[arg(long, default_value_t = 100)]
    lr_decay_every: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long)]
    no_shuffle: bool,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    loss_curve: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Force,
    Add,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Force => Variant::Force,
            VariantArg::Add => Variant::Add,
        }
    }
}

#[derive(Args)]
struct EstimateArgs {
    /// Surrogate checkpoint.
    #[arg(long, conflicts_with_all = ["oracle", "table"], required_unless_present_any = ["oracle", "table"])]
    scorer: Option<PathBuf>,
    #[arg(long, conflicts_with = "table")]
    oracle: Option<PathBuf>,
    #[arg(long)]
    table: Option<PathBuf>,
    /// Score oracle coalitions by raw utility instead of the normalized score.
    #[arg(long)]
    raw: bool,
    #[arg(long, value_delimiter = ',', required = true)]
    weights: Vec<usize>,
    #[arg(long, default_value_t = 80_000)]
    mc: usize,
    #[arg(long, default_value_t = 43)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = VariantArg::Force)]
    variant: VariantArg,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PlanArgs {
    #[arg(long)]
    report: PathBuf,
    #[arg(long)]
    remove: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExactArgs {
    #[command(flatten)]
    source: OracleArgs,
    /// Compute on the normalized score game rather than raw utilities.
    #[arg(long)]
    normalized: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Diagnose {
    /// Exhaustive best pair against greedy and static deletion.
    Pairs {
        #[command(flatten)]
        source: OracleArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rank shifts of single-layer removal costs across contexts.
    Volatility {
        #[command(flatten)]
        source: OracleArgs,
        /// Context masks, one `{"mask": ...}` object per line.
        #[arg(long)]
        contexts: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunAllArgs {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: PathBuf,
    /// Override a config key, e.g. `--set seed=7`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long, env = "SHAPPRUNE_OUT_DIR")]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Serialize, Deserialize)]
struct MaskLine {
    mask: Mask,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    stratum: Option<usize>,
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            if !text.ends_with('\n') {
                stdout.write_all(b"\n")?;
            }
            Ok(())
        }
    }
}

fn emit_json<T: Serialize>(out: Option<&Path>, value: &T) -> Result<()> {
    emit(out, &serde_json::to_string_pretty(value)?)
}

fn read_mask_lines(path: &Path) -> Result<Vec<MaskLine>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).with_context(|| format!("{}:{}", path.display(), i + 1)))
        .collect()
}

fn sample(args: SampleArgs) -> Result<()> {
    let plan = HammingWeightPlan::even(&args.weights, args.count)?;
    let mut config = SamplerConfig::new(args.layers, plan, args.seed);
    config.dedupe = args.dedupe;
    let mut text = String::new();
    for s in sample_stratified(&config)? {
        let line = MaskLine {
            mask: s.mask,
            stratum: Some(s.stratum),
        };
        text.push_str(&serde_json::to_string(&line)?);
        text.push('\n');
    }
    emit(args.out.as_deref(), &text)
}

fn evaluate(args: EvaluateArgs) -> Result<()> {
    let inner = args.source.load()?;
    let baseline = inner.baseline_utility()?;
    let oracle = CountingOracle::new(inner);
    let direction = oracle.direction();
    let mut records = Vec::new();
    for line in read_mask_lines(&args.masks)? {
        let raw = oracle
            .evaluate(&line.mask)
            .with_context(|| format!("evaluating mask {}", line.mask))?;
        let score = normalize_score(raw, baseline, direction)?.score;
        let mut record = MaskScoreRecord::new(line.mask, raw, score);
        if let Some(k) = line.stratum {
            record = record.with_meta("stratum", k);
        }
        records.push(record);
    }
    let header = ScoreFileHeader {
        baseline_utility: baseline,
        layer_count: oracle.layer_count(),
        direction,
    };
    emit(args.out.as_deref(), &format_score_file(&header, &records)?)?;
    eprintln!("{} oracle calls", oracle.calls());
    Ok(())
}

fn train_cmd(args: TrainArgs) -> Result<()> {
    let data = read_score_file(&args.data)?;
    let config = TrainConfig {
        learning_rate: args.lr,
        momentum: args.momentum,
        lr_decay_factor: args.lr_decay_factor,
        lr_decay_every: args.lr_decay_every,
        epochs: args.epochs,
        batch_size: args.batch,
        seed: args.seed,
        shuffle: !args.no_shuffle,
    };
    let outcome = train(&data.records, &config)?;
    save_checkpoint(&outcome.model, &args.out)?;
    if let Some(path) = &args.loss_curve {
        let mut csv = String::from("epoch,learning_rate,loss\n");
        for (epoch, loss) in outcome.loss_curve.iter().enumerate() {
            csv.push_str(&format!("{epoch},{},{loss}\n", config.lr_at(epoch)));
        }
        fs::write(path, csv).with_context(|| format!("writing {}", path.display()))?;
    }
    if let Some(loss) = outcome.final_loss() {
        eprintln!("final loss {loss:.6e} after {} epochs", args.epochs);
    }
    Ok(())
}

fn estimate(args: EstimateArgs) -> Result<()> {
    let config = EstimatorConfig::new(args.mc, &args.weights, args.seed).with_variant(args.variant.into());
    let report = if let Some(path) = &args.scorer {
        let model = load_checkpoint(path)?;
        estimate_contributions(&SurrogateScorer::new(&model), &config)?
    } else {
        let source = OracleArgs {
            oracle: args.oracle.clone(),
            table: args.table.clone(),
        };
        let oracle = source.load()?;
        let mode = if args.raw { ScoreMode::Raw } else { ScoreMode::Normalized };
        estimate_contributions(&DirectScorer::new(oracle, mode)?, &config)?
    };
    eprintln!("{} scorer calls", report.scorer_calls);
    emit_json(args.out.as_deref(), &report)
}

fn plan(args: PlanArgs) -> Result<()> {
    let text = fs::read_to_string(&args.report).with_context(|| format!("reading {}", args.report.display()))?;
    let report: ShapleyReport =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", args.report.display()))?;
    emit_json(args.out.as_deref(), &make_plan(&report, args.remove)?)
}

#[derive(Serialize)]
struct ExactOutput {
    phi: Vec<f64>,
    ranking: Vec<usize>,
    normalized: bool,
    efficiency_gap: f64,
}

fn exact(args: ExactArgs) -> Result<()> {
    let oracle = args.source.load()?;
    let (phi, gap) = if args.normalized {
        let view = NormalizedOracle::new(&oracle)?;
        let phi = exact_shapley(&view)?;
        let gap = efficiency_check(&phi, &view)?;
        (phi, gap)
    } else {
        let phi = exact_shapley(&oracle)?;
        let gap = efficiency_check(&phi, &oracle)?;
        (phi, gap)
    };
    let ranking = shapprune_core::types::ascending_order(&phi);
    emit_json(
        args.out.as_deref(),
        &ExactOutput {
            phi,
            ranking,
            normalized: args.normalized,
            efficiency_gap: gap,
        },
    )
}

fn diagnose(cmd: Diagnose) -> Result<()> {
    match cmd {
        Diagnose::Pairs { source, out } => {
            let search = best_pair_search(&source.load()?)?;
            if search.interaction_detected() {
                eprintln!("interaction: best pair {:?} beats greedy {:?}", search.pair, search.greedy_pair);
            }
            emit_json(out.as_deref(), &search)
        }
        Diagnose::Volatility { source, contexts, out } => {
            let masks: Vec<Mask> = read_mask_lines(&contexts)?.into_iter().map(|l| l.mask).collect();
            if masks.is_empty() {
                bail!("{} holds no context masks", contexts.display());
            }
            emit_json(out.as_deref(), &rank_volatility(&source.load()?, &masks)?)
        }
    }
}

fn run_all(args: RunAllArgs) -> Result<()> {
    let mut config = PipelineConfig::from_file(&args.config)?;
    let base = Path::new(".");
    for item in &args.overrides {
        let (key, value) = item
            .split_once('=')
            .with_context(|| format!("--set expects KEY=VALUE, got {item:?}"))?;
        config.set(key.trim(), value.trim(), base)?;
    }
    if let Some(dir) = args.out_dir {
        config.output_dir = dir;
    }
    if args.workers.is_some() {
        config.workers = args.workers;
    }
    let out = pipeline::run_all(&config)?;
    for stage in &out.manifest.stages {
        eprintln!(
            "{}: {} oracle calls, {} surrogate forwards, {} ms",
            stage.stage, stage.oracle_calls, stage.surrogate_forwards, stage.wall_time_ms
        );
    }
    let ranking = &out.stage3.report.ranking;
    eprintln!("pruning order: {ranking:?}");
    eprintln!("outputs in {}", config.output_dir.display());
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Sample(args) => sample(args),
        Command::Evaluate(args) => evaluate(args),
        Command::Train(args) => train_cmd(args),
        Command::Estimate(args) => estimate(args),
        Command::Plan(args) => plan(args),
        Command::Exact(args) => exact(args),
        Command::Diagnose(cmd) => diagnose(cmd),
        Command::RunAll(args) => run_all(args),
    }
}
