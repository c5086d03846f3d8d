use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{CorpusConfig, DomainSpec};
use crate::error::{Error, Result};
use crate::losses::Kernel;
use crate::model::{ModelConfig, Stage};
use crate::numkit::{AdamConfig, ScheduleConfig};

/// Settings of one training stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StageConfig {
    pub steps: u64,
    /// Utterances per step; for adaptation, the clean source batch size.
    pub batch_size: usize,
    /// Adaptation only: utterances per target domain per step.
    pub target_batch_size: usize,
    pub crop_frames: usize,
    pub schedule: ScheduleConfig,
    pub adam: AdamConfig,
    /// Adaptation only: kernel of the alignment term.
    pub kernel: Kernel,
    /// Fine-tuning only: replace the pretraining head with one sized for the
    /// in-domain speakers.
    pub reset_head: bool,
    /// Write an intermediate checkpoint every this many steps (0 disables).
    pub checkpoint_every: u64,
}

impl Default for StageConfig {
    fn default() -> Self {
        StageConfig {
            steps: 300,
            batch_size: 32,
            target_batch_size: 16,
            crop_frames: 100,
            schedule: ScheduleConfig::default(),
            adam: AdamConfig::default(),
            kernel: Kernel::Linear,
            reset_head: true,
            checkpoint_every: 0,
        }
    }
}

impl StageConfig {
    pub fn validate(&self, stage: Stage) -> Result<()> {
        let bad = |m: &str| Err(Error::contract(format!("[{stage}] {m}")));
        if self.steps == 0 {
            return bad("steps must be positive");
        }
        if self.batch_size == 0 || self.crop_frames == 0 {
            return bad("batch_size and crop_frames must be positive");
        }
        if stage == Stage::Adapt && (self.batch_size < 2 || self.target_batch_size < 2) {
            return bad("adaptation needs at least 2 samples per domain");
        }
        self.schedule.validate()
    }
}

/// Everything the command line reads from a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    /// The evaluation corpus; its clean train split drives fine-tuning and
    /// all of its train splits drive adaptation.
    pub corpus: CorpusConfig,
    /// Out-of-domain pretraining data: same generative world, other speakers,
    /// recorded clean and through an unrelated "wild" channel.
    pub pretrain_corpus: CorpusConfig,
    pub model: ModelConfig,
    pub pretrain: StageConfig,
    pub finetune: StageConfig,
    pub adapt: StageConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let schedule = ScheduleConfig {
            noam_warmup: 100,
            ..ScheduleConfig::default()
        };
        PipelineConfig {
            seed: 1,
            corpus: CorpusConfig::default(),
            pretrain_corpus: CorpusConfig {
                num_speakers: 200,
                first_speaker: 1000,
                domains: vec![DomainSpec::clean("clean"), DomainSpec::channel("wild", 0.4)],
                ..CorpusConfig::default()
            },
            model: ModelConfig::default(),
            pretrain: StageConfig {
                steps: 500,
                schedule,
                ..StageConfig::default()
            },
            finetune: StageConfig {
                steps: 300,
                schedule,
                ..StageConfig::default()
            },
            adapt: StageConfig {
                steps: 450,
                batch_size: 16,
                target_batch_size: 16,
                crop_frames: 40,
                schedule,
                kernel: Kernel::Rbf { bandwidth: None },
                ..StageConfig::default()
            },
        }
    }
}

impl PipelineConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Malformed {
            what: "config",
            detail: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn stage(&self, stage: Stage) -> &StageConfig {
        match stage {
            Stage::Pretrain => &self.pretrain,
            Stage::Finetune => &self.finetune,
            Stage::Adapt => &self.adapt,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        for stage in [Stage::Pretrain, Stage::Finetune, Stage::Adapt] {
            self.stage(stage).validate(stage)?;
        }
        Ok(())
    }

    /// Applies a `dotted.key=value` override. The value is read as a TOML
    /// value, falling back to a plain string.
    pub fn set(&mut self, assignment: &str) -> Result<()> {
        let (key, raw) = assignment
            .split_once('=')
            .ok_or_else(|| Error::contract(format!("override {assignment:?} is not key=value")))?;
        let value: toml::Value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(raw.to_string()));
        let mut root = toml::Value::try_from(&*self).expect("config serializes");
        let mut node = &mut root;
        let parts: Vec<&str> = key.trim().split('.').collect();
        for (i, part) in parts.iter().enumerate() {
            let table = node
                .as_table_mut()
                .ok_or_else(|| Error::contract(format!("override key {key:?} does not name a table")))?;
            if i + 1 == parts.len() {
                table.insert(part.to_string(), value);
                break;
            }
            node = table
                .entry(part.to_string())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        }
        *self = root.try_into().map_err(|e: toml::de::Error| Error::Malformed {
            what: "config override",
            detail: format!("{key}: {e}"),
        })?;
        Ok(())
    }
}
