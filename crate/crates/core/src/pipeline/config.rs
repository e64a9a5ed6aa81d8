use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracle::{load_score_table, SyntheticGame, SyntheticGameSpec, UtilityOracle};
use crate::surrogate::TrainConfig;
use crate::types::Variant;

/// Pruning depths used when none are configured.
pub const REMOVE_COUNT_PRESETS: [usize; 4] = [3, 6, 9, 12];

/// Where coalition utilities come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleSource {
    /// Synthetic game given inline.
    Game(SyntheticGameSpec),
    /// Synthetic game spec stored as JSON.
    GameFile(PathBuf),
    /// Externally measured score table (JSON Lines).
    ScoreTable(PathBuf),
}

impl OracleSource {
    pub fn resolve(&self) -> Result<Box<dyn UtilityOracle>> {
        Ok(match self {
            OracleSource::Game(spec) => Box::new(SyntheticGame::from_spec(spec)?),
            OracleSource::GameFile(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                let spec: SyntheticGameSpec = serde_json::from_str(&text)
                    .map_err(|e| Error::parse(e.line(), e.to_string()).with_path(path))?;
                Box::new(SyntheticGame::from_spec(&spec)?)
            }
            OracleSource::ScoreTable(path) => Box::new(load_score_table(path)?),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub layer_count: usize,
    pub hamming_weights: Vec<usize>,
    pub stage1_samples: usize,
    pub stage2_epochs: usize,
    pub stage3_samples: usize,
    pub seed: u64,
    pub learning_rate: f64,
    pub momentum: f64,
    pub lr_decay_factor: f64,
    pub lr_decay_every: usize,
    pub batch_size: usize,
    /// Chunk size for parallel mask evaluation; does not affect results.
    pub mask_eval_batch: usize,
    pub variant: Variant,
    /// `None` means the presets that fit within `layer_count`.
    pub remove_counts: Option<Vec<usize>>,
    /// Worker threads for stages 1 and 3; `None` uses all cores.
    pub workers: Option<usize>,
    pub oracle: Option<OracleSource>,
    pub output_dir: PathBuf,
}

impl PipelineConfig {
    /// Defaults for a 32-layer model.
    pub fn new(layer_count: usize, hamming_weights: &[usize]) -> Self {
        PipelineConfig {
            layer_count,
            hamming_weights: hamming_weights.to_vec(),
            stage1_samples: 8000,
            stage2_epochs: 200,
            stage3_samples: 80_000,
            seed: 42,
            learning_rate: 0.008,
            momentum: 0.9,
            lr_decay_factor: 0.1,
            lr_decay_every: 100,
            batch_size: 300,
            mask_eval_batch: 45,
            variant: Variant::Force,
            remove_counts: None,
            workers: None,
            oracle: None,
            output_dir: PathBuf::from("shapprune-out"),
        }
    }

    pub fn with_oracle(mut self, oracle: OracleSource) -> Self {
        self.oracle = Some(oracle);
        self
    }

    pub fn with_output_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.output_dir = dir.into();
        self
    }

    /// Stage 3 base masks use an independent stream derived from the seed.
    pub fn stage3_seed(&self) -> u64 {
        self.seed.wrapping_add(1)
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            momentum: self.momentum,
            lr_decay_factor: self.lr_decay_factor,
            lr_decay_every: self.lr_decay_every,
            epochs: self.stage2_epochs,
            batch_size: self.batch_size,
            seed: self.seed,
            shuffle: true,
        }
    }

    pub fn effective_remove_counts(&self) -> Vec<usize> {
        match &self.remove_counts {
            Some(counts) => counts.clone(),
            None => REMOVE_COUNT_PRESETS
                .iter()
                .copied()
                .filter(|&n| n <= self.layer_count)
                .collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_count == 0 {
            return Err(Error::InvalidConfig("layer_count must be positive".into()));
        }
        if self.hamming_weights.is_empty() {
            return Err(Error::EmptyStrata);
        }
        if let Some(&k) = self.hamming_weights.iter().find(|&&k| k > self.layer_count) {
            return Err(Error::KExceedsL {
                k,
                layer_count: self.layer_count,
            });
        }
        if self.mask_eval_batch == 0 || self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch sizes must be positive".into()));
        }
        if let Some(&n) = self.effective_remove_counts().iter().find(|&&n| n > self.layer_count) {
            return Err(Error::RemoveCountExceedsL {
                requested: n,
                layer_count: self.layer_count,
            });
        }
        Ok(())
    }

    /// Parses a flat `key = value` file. Blank lines and `#` comments are
    /// ignored; relative oracle paths resolve against `base_dir`.
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let mut config = PipelineConfig::new(0, &[]);
        let mut layer_count = None;
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(line_no, format!("expected key = value, got {line:?}")))?;
            config.set(key.trim(), value.trim(), base_dir).map_err(|e| match e {
                Error::InvalidConfig(msg) => Error::parse(line_no, msg),
                other => other,
            })?;
            if key.trim() == "layer_count" {
                layer_count = Some(config.layer_count);
            }
        }
        if layer_count.is_none() {
            return Err(Error::InvalidConfig("config is missing layer_count".into()));
        }
        Ok(config)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base).map_err(|e| e.with_path(path))
    }

    /// Applies one override, as from a config line or the command line.
    pub fn set(&mut self, key: &str, value: &str, base_dir: &Path) -> Result<()> {
        match key {
            "layer_count" | "number_of_layers" => self.layer_count = int(key, value)?,
            "hamming_weights" => self.hamming_weights = int_list(key, value)?,
            "stage1_samples" => self.stage1_samples = int(key, value)?,
            "stage2_epochs" => self.stage2_epochs = int(key, value)?,
            "stage3_samples" => self.stage3_samples = int(key, value)?,
            "seed" | "random_seed" => self.seed = int(key, value)?,
            "learning_rate" => self.learning_rate = float(key, value)?,
            "momentum" => self.momentum = float(key, value)?,
            "lr_decay_factor" => self.lr_decay_factor = float(key, value)?,
            "lr_decay_every" => self.lr_decay_every = int(key, value)?,
            "batch_size" | "batch_size_of_training" => self.batch_size = int(key, value)?,
            "mask_eval_batch" | "batch_size_of_mask_evaluation" => self.mask_eval_batch = int(key, value)?,
            "variant" => self.variant = value.parse()?,
            "remove_counts" => self.remove_counts = Some(int_list(key, value)?),
            "workers" => self.workers = Some(int(key, value)?),
            "oracle" => self.oracle = Some(OracleSource::GameFile(base_dir.join(value))),
            "score_table" => self.oracle = Some(OracleSource::ScoreTable(base_dir.join(value))),
            "output_dir" => self.output_dir = base_dir.join(value),
            other => return Err(Error::InvalidConfig(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }
}

fn int<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    // thousands separators as written in experiment tables: 8,000
    let cleaned: String = value.chars().filter(|c| !matches!(c, ',' | '_')).collect();
    cleaned
        .parse()
        .map_err(|_| Error::InvalidConfig(format!("{key}: expected an integer, got {value:?}")))
}

fn float(key: &str, value: &str) -> Result<f64> {
    value
        .parse()
        .map_err(|_| Error::InvalidConfig(format!("{key}: expected a number, got {value:?}")))
}

fn int_list(key: &str, value: &str) -> Result<Vec<usize>> {
    let inner = value.trim_matches(|c| matches!(c, '{' | '}' | '[' | ']' | '(' | ')'));
    if inner.trim().is_empty() {
        return Ok(Vec::new());
    }
    inner.split(',').map(|part| int(key, part.trim())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_the_reference_configuration() {
        let config = PipelineConfig::new(32, &[30, 27, 24, 21, 18]);
        assert_eq!(config.stage1_samples, 8000);
        assert_eq!(config.stage2_epochs, 200);
        assert_eq!(config.stage3_samples, 80_000);
        assert_eq!(config.seed, 42);
        assert_eq!(config.batch_size, 300);
        assert_eq!(config.mask_eval_batch, 45);
        assert_eq!(config.effective_remove_counts(), vec![3, 6, 9, 12]);
        assert_eq!(config.stage3_seed(), 43);
        let train = config.train_config();
        assert_eq!(train.learning_rate, 0.008);
        assert_eq!(train.momentum, 0.9);
        config.validate().unwrap();
    }

    #[test]
    fn parses_flat_file() {
        let text = "\
# LLaMA-2-7B-like row
layer_count = 32
hamming_weights = {30, 27, 24, 21, 18}
stage1_samples = 8,000
stage3_samples = 80000   # surrogate scorings
random_seed = 7
variant = add
remove_counts = 3,6
oracle = games/deg.json
";
        let config = PipelineConfig::parse(text, Path::new("/tmp/exp")).unwrap();
        assert_eq!(config.layer_count, 32);
        assert_eq!(config.hamming_weights, vec![30, 27, 24, 21, 18]);
        assert_eq!(config.stage1_samples, 8000);
        assert_eq!(config.seed, 7);
        assert_eq!(config.variant, Variant::Add);
        assert_eq!(config.remove_counts, Some(vec![3, 6]));
        assert_eq!(
            config.oracle,
            Some(OracleSource::GameFile(PathBuf::from("/tmp/exp/games/deg.json")))
        );
    }

    #[test]
    fn bad_lines_report_line_numbers() {
        let err = PipelineConfig::parse("layer_count = 4\nstage1_samples = lots\n", Path::new(".")).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        let err = PipelineConfig::parse("layer_count = 4\nbogus = 1\n", Path::new(".")).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        assert!(PipelineConfig::parse("seed = 1\n", Path::new(".")).is_err());
    }

    #[test]
    fn remove_counts_are_checked() {
        let mut config = PipelineConfig::new(4, &[3]);
        assert_eq!(config.effective_remove_counts(), vec![3]);
        config.remove_counts = Some(vec![5]);
        assert!(matches!(config.validate(), Err(Error::RemoveCountExceedsL { .. })));
    }
}
