use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::datasets::{MockSpec, SmearConfig};
use crate::error::{Error, Result};
use crate::metrics::NnConfig;
use crate::odeint::SolverConfig;
use crate::train::TrainConfig;
use crate::velocity::{NetConfig, NetMode, TimeEmbedConfig};

/// What a model is trained for.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    #[default]
    Generate,
    Unfold,
}

impl Task {
    pub fn net_mode(self) -> NetMode {
        match self {
            Task::Generate => NetMode::Unconditional,
            Task::Unfold => NetMode::Conditional,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetSection {
    /// Event file used as training data, smearing input or detector input.
    pub path: Option<PathBuf>,
    /// Synthetic sample drawn by `mock`.
    pub mock: Option<MockSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub mode: Task,
    pub hidden: usize,
    pub blocks: usize,
    pub time: TimeEmbedConfig,
    pub cond_hidden: usize,
    pub cond_embed: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        let full = NetConfig::full(1, NetMode::Unconditional);
        Self {
            mode: Task::Generate,
            hidden: full.hidden,
            blocks: full.blocks,
            time: full.time,
            cond_hidden: full.cond_hidden,
            cond_embed: full.cond_embed,
        }
    }
}

impl ModelSection {
    pub fn net_config(&self, dim: usize) -> NetConfig {
        NetConfig {
            dim,
            hidden: self.hidden,
            blocks: self.blocks,
            time: self.time.clone(),
            mode: self.mode.net_mode(),
            cond_hidden: self.cond_hidden,
            cond_embed: self.cond_embed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PreprocessSection {
    pub scale: f64,
}

impl Default for PreprocessSection {
    fn default() -> Self {
        Self { scale: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SampleSection {
    pub n: usize,
    pub checkpoint: Option<PathBuf>,
}

impl Default for SampleSection {
    fn default() -> Self {
        Self { n: 100_000, checkpoint: None }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub gen: Option<PathBuf>,
    pub truth: Option<PathBuf>,
    pub train: Option<PathBuf>,
    /// Also write per-feature 50-bin counts.
    pub histograms: bool,
    pub nn: NnConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchSection {
    pub train_iterations: usize,
    pub train_batch: usize,
    pub inference_runs: usize,
    pub inference_samples: usize,
}

impl Default for BenchSection {
    fn default() -> Self {
        Self {
            train_iterations: 10,
            train_batch: 20_000,
            inference_runs: 5,
            inference_samples: 50_000,
        }
    }
}

/// Everything a command may read from the configuration file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub output: PathBuf,
    pub dataset: DatasetSection,
    pub model: ModelSection,
    pub preprocess: PreprocessSection,
    pub train: TrainConfig,
    pub solver: SolverConfig,
    pub smear: SmearConfig,
    pub sample: SampleSection,
    pub eval: EvalSection,
    pub bench: BenchSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            output: PathBuf::from("run"),
            dataset: DatasetSection::default(),
            model: ModelSection::default(),
            preprocess: PreprocessSection::default(),
            train: TrainConfig::default(),
            solver: SolverConfig::default(),
            smear: SmearConfig::default(),
            sample: SampleSection::default(),
            eval: EvalSection::default(),
            bench: BenchSection::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run configs serialize")
    }

    /// Applies `section.key=value` overrides. Values are read as TOML
    /// literals, falling back to plain strings; unknown keys are rejected.
    pub fn with_overrides<S: AsRef<str>>(&self, overrides: &[S]) -> Result<Self> {
        if overrides.is_empty() {
            return Ok(self.clone());
        }
        let mut root = toml::Table::try_from(self).map_err(|e| Error::Config(e.to_string()))?;
        for o in overrides {
            let o = o.as_ref();
            let (key, raw) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override `{o}` is not key=value")))?;
            let value = parse_value(raw.trim());
            let key = match key.trim() {
                "train.lr" => "train.learning_rate",
                k => k,
            };
            let parts: Vec<&str> = key.split('.').collect();
            if parts.iter().any(|p| p.is_empty()) {
                return Err(Error::Config(format!("bad override key `{key}`")));
            }
            let mut table = &mut root;
            for p in &parts[..parts.len() - 1] {
                let entry = table
                    .entry(p.to_string())
                    .or_insert_with(|| toml::Value::Table(toml::Table::new()));
                table = entry
                    .as_table_mut()
                    .ok_or_else(|| Error::Config(format!("`{p}` in `{key}` is not a section")))?;
            }
            table.insert(parts[parts.len() - 1].to_string(), value);
        }
        let text = toml::to_string(&root).map_err(|e| Error::Config(e.to_string()))?;
        Self::from_toml(&text)
    }
}

fn parse_value(raw: &str) -> toml::Value {
    #[derive(Deserialize)]
    struct Probe {
        v: toml::Value,
    }
    toml::from_str::<Probe>(&format!("v = {raw}"))
        .map(|p| p.v)
        .unwrap_or_else(|_| toml::Value::String(raw.to_string()))
}
