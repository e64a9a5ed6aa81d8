//! Three-stage run: score sampled masks with the oracle, fit the surrogate,
//! then estimate contributions on the surrogate and emit pruning plans.

mod config;
mod manifest;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

pub use config::{OracleSource, PipelineConfig, REMOVE_COUNT_PRESETS};
pub use manifest::{FileEntry, Manifest, StageRecord, MANIFEST_FILE};

use crate::error::{Error, Result};
use crate::oracle::{write_score_file, read_score_file, CountingOracle, ScoreFileHeader, UtilityOracle};
use crate::pruner::make_plan;
use crate::record::{normalize_score, MaskScoreRecord};
use crate::rng::RNG_NAME;
use crate::sampler::{sample_stratified, SamplerConfig};
use crate::shapley::{estimate_contributions, EstimatorConfig, SurrogateScorer};
use crate::surrogate::{load_checkpoint, save_checkpoint, train};
use crate::types::{HammingWeightPlan, PruningPlan, ShapleyReport};

pub const SCORES_FILE: &str = "scores.jsonl";
pub const SURROGATE_FILE: &str = "surrogate.json";
pub const LOSS_CURVE_FILE: &str = "loss_curve.csv";
pub const REPORT_FILE: &str = "report.json";

pub fn plan_file_name(remove_count: usize) -> String {
    format!("plan_remove_{remove_count}.json")
}

#[derive(Debug)]
pub struct Stage1Output {
    pub records: Vec<MaskScoreRecord>,
    pub stage: StageRecord,
}

#[derive(Debug)]
pub struct Stage2Output {
    pub loss_curve: Vec<f64>,
    pub stage: StageRecord,
}

#[derive(Debug)]
pub struct Stage3Output {
    pub report: ShapleyReport,
    pub plans: Vec<PruningPlan>,
    pub stage: StageRecord,
}

#[derive(Debug)]
pub struct PipelineOutput {
    pub stage1: Stage1Output,
    pub stage2: Stage2Output,
    pub stage3: Stage3Output,
    pub manifest: Manifest,
}

fn in_pool<T: Send>(config: &PipelineConfig, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    match config.workers {
        None => f(),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::InvalidConfig(format!("worker pool: {e}")))?
            .install(f),
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Writes through a sibling temp file so a failed stage leaves no partial output.
fn write_atomic(path: &Path, write: impl FnOnce(&Path) -> Result<()>) -> Result<()> {
    let tmp = path.with_extension("partial");
    match write(&tmp) {
        Ok(()) => fs::rename(&tmp, path).map_err(|e| Error::io(path, e)),
        Err(e) => {
            let _ = fs::remove_file(&tmp);
            Err(e)
        }
    }
}

fn update_manifest(config: &PipelineConfig, stage: &StageRecord) -> Result<()> {
    let dir = &config.output_dir;
    let mut manifest = Manifest::load_or_default(dir)?;
    manifest.rng = RNG_NAME.to_string();
    manifest.config = Some(serde_json::to_value(config)?);
    manifest.record(stage.clone());
    manifest.save(dir)
}

fn elapsed_ms(start: Instant) -> u64 {
    start.elapsed().as_millis() as u64
}

/// Stage 1: sample masks per stratum and score each one with the oracle.
pub fn run_stage1(config: &PipelineConfig) -> Result<Stage1Output> {
    config.validate()?;
    let start = Instant::now();
    let source = config
        .oracle
        .as_ref()
        .ok_or_else(|| Error::InvalidConfig("no oracle or score table configured".into()))?;
    let inner = source.resolve()?;
    // The unpruned reference is measured once, outside the per-mask budget.
    let baseline = inner.baseline_utility()?;
    let oracle = CountingOracle::new(inner);
    if oracle.layer_count() != config.layer_count {
        return Err(Error::DimensionMismatch(format!(
            "oracle has {} layers, config has {}",
            oracle.layer_count(),
            config.layer_count
        )));
    }
    let plan = HammingWeightPlan::even(&config.hamming_weights, config.stage1_samples)?;
    let sampled = sample_stratified(&SamplerConfig::new(config.layer_count, plan.clone(), config.seed))?;
    let direction = oracle.direction();

    let raws: Vec<f64> = in_pool(config, || {
        sampled
            .par_chunks(config.mask_eval_batch)
            .map(|chunk| chunk.iter().map(|s| oracle.evaluate(&s.mask)).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()
            .map(|chunks| chunks.into_iter().flatten().collect())
    })?;

    let mut clamped = 0u64;
    let mut records = Vec::with_capacity(sampled.len());
    for (s, raw) in sampled.iter().zip(raws) {
        let norm = normalize_score(raw, baseline, direction)?;
        clamped += norm.clamped as u64;
        records.push(MaskScoreRecord::new(s.mask.clone(), raw, norm.score).with_meta("stratum", s.stratum));
    }

    ensure_dir(&config.output_dir)?;
    let header = ScoreFileHeader {
        baseline_utility: baseline,
        layer_count: config.layer_count,
        direction,
    };
    write_atomic(&config.output_dir.join(SCORES_FILE), |p| write_score_file(p, &header, &records))?;

    let stage = StageRecord {
        stage: "stage1".into(),
        seed: config.seed,
        oracle_calls: oracle.calls(),
        baseline_calls: 1,
        surrogate_forwards: 0,
        wall_time_ms: elapsed_ms(start),
        strata: plan.weights.clone(),
        stratum_counts: plan.per_stratum_counts.clone(),
        clamped_scores: clamped,
        outputs: vec![FileEntry::hash(&config.output_dir, SCORES_FILE)?],
    };
    update_manifest(config, &stage)?;
    Ok(Stage1Output { records, stage })
}

/// Stage 2: fit the surrogate to the stage 1 scores.
pub fn run_stage2(config: &PipelineConfig) -> Result<Stage2Output> {
    config.validate()?;
    let start = Instant::now();
    let dir = &config.output_dir;
    let scores = read_score_file(dir.join(SCORES_FILE))?;
    if scores.header.layer_count != config.layer_count {
        return Err(Error::DimensionMismatch(format!(
            "score file has {} layers, config has {}",
            scores.header.layer_count, config.layer_count
        )));
    }
    let outcome = train(&scores.records, &config.train_config())?;

    write_atomic(&dir.join(SURROGATE_FILE), |p| save_checkpoint(&outcome.model, p))?;
    let mut csv = String::from("epoch,learning_rate,loss\n");
    for (epoch, loss) in outcome.loss_curve.iter().enumerate() {
        csv.push_str(&format!("{epoch},{},{loss}\n", config.train_config().lr_at(epoch)));
    }
    let curve_path = dir.join(LOSS_CURVE_FILE);
    write_atomic(&curve_path, |p| fs::write(p, csv).map_err(|e| Error::io(p, e)))?;

    let stage = StageRecord {
        stage: "stage2".into(),
        seed: config.seed,
        oracle_calls: 0,
        baseline_calls: 0,
        surrogate_forwards: 0,
        wall_time_ms: elapsed_ms(start),
        strata: Vec::new(),
        stratum_counts: Vec::new(),
        clamped_scores: 0,
        outputs: vec![
            FileEntry::hash(dir, SURROGATE_FILE)?,
            FileEntry::hash(dir, LOSS_CURVE_FILE)?,
        ],
    };
    update_manifest(config, &stage)?;
    Ok(Stage2Output {
        loss_curve: outcome.loss_curve,
        stage,
    })
}

/// Stage 3: estimate contributions on the surrogate and write one plan per depth.
pub fn run_stage3(config: &PipelineConfig) -> Result<Stage3Output> {
    config.validate()?;
    let start = Instant::now();
    let dir = &config.output_dir;
    let model = load_checkpoint(dir.join(SURROGATE_FILE))?;
    if model.input_dim() != config.layer_count {
        return Err(Error::DimensionMismatch(format!(
            "surrogate expects {} layers, config has {}",
            model.input_dim(),
            config.layer_count
        )));
    }
    let estimator = EstimatorConfig::new(config.stage3_samples, &config.hamming_weights, config.stage3_seed())
        .with_variant(config.variant);
    let scorer = SurrogateScorer::new(&model);
    let report = in_pool(config, || estimate_contributions(&scorer, &estimator))?;

    let report_path = dir.join(REPORT_FILE);
    let report_json = serde_json::to_string_pretty(&report)?;
    write_atomic(&report_path, |p| fs::write(p, report_json).map_err(|e| Error::io(p, e)))?;
    let mut outputs = vec![FileEntry::hash(dir, REPORT_FILE)?];

    let mut plans = Vec::new();
    for n in config.effective_remove_counts() {
        let plan = make_plan(&report, n)?;
        let name = plan_file_name(n);
        let json = serde_json::to_string_pretty(&plan)?;
        write_atomic(&dir.join(&name), |p| fs::write(p, json).map_err(|e| Error::io(p, e)))?;
        outputs.push(FileEntry::hash(dir, &name)?);
        plans.push(plan);
    }

    let stage = StageRecord {
        stage: "stage3".into(),
        seed: config.stage3_seed(),
        oracle_calls: 0,
        baseline_calls: 0,
        surrogate_forwards: report.scorer_calls,
        wall_time_ms: elapsed_ms(start),
        strata: report.strata_used.weights.clone(),
        stratum_counts: report.strata_used.per_stratum_counts.clone(),
        clamped_scores: 0,
        outputs,
    };
    update_manifest(config, &stage)?;
    Ok(Stage3Output { report, plans, stage })
}

pub fn run_all(config: &PipelineConfig) -> Result<PipelineOutput> {
    config.validate()?;
    // Fail before any oracle work if the plans could never be produced.
    ensure_dir(&config.output_dir)?;
    let stage1 = run_stage1(config)?;
    let stage2 = run_stage2(config)?;
    let stage3 = run_stage3(config)?;
    let manifest = Manifest::load_or_default(&config.output_dir)?;
    Ok(PipelineOutput {
        stage1,
        stage2,
        stage3,
        manifest,
    })
}

/// Output directory file path helper for callers outside the crate.
pub fn output_path(config: &PipelineConfig, name: &str) -> PathBuf {
    config.output_dir.join(name)
}
