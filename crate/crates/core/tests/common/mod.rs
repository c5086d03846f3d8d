#![allow(dead_code)]

pub mod grad;
pub mod oracle;

use xdsv::corpus::{render_corpus, Corpus, CorpusConfig};
use xdsv::model::{ExtractorConfig, LdeConfig, ModelConfig, SubnetConfig};
use xdsv::pipeline::PipelineConfig;

/// A pipeline small enough to run every stage in well under a second.
pub fn tiny_config(seed: u64) -> PipelineConfig {
    let mut cfg = PipelineConfig {
        seed,
        ..PipelineConfig::default()
    };
    let corpus = CorpusConfig {
        num_speakers: 4,
        utts_per_speaker: 10,
        frames_per_utt: 24,
        input_dim: 6,
        identity_dim: 4,
        ..CorpusConfig::default()
    };
    cfg.pretrain_corpus = CorpusConfig {
        num_speakers: 5,
        first_speaker: 1000,
        ..corpus.clone()
    };
    cfg.corpus = corpus;
    cfg.model = ModelConfig {
        extractor: ExtractorConfig {
            input_dim: 6,
            group_dims: [8, 8, 8, 6],
            context: [1, 1, 0, 0],
        },
        lde: LdeConfig { num_components: 3 },
        subnet: SubnetConfig {
            phi1_dims: [10, 10],
            phi2_dims: [6, 6],
        },
    };
    for stage in [&mut cfg.pretrain, &mut cfg.finetune, &mut cfg.adapt] {
        stage.steps = 6;
        stage.batch_size = 4;
        stage.target_batch_size = 3;
        stage.crop_frames = 16;
    }
    cfg.pretrain.schedule.noam_warmup = 3;
    cfg.finetune.schedule.noam_warmup = 3;
    cfg.adapt.schedule.noam_warmup = 3;
    cfg.validate().unwrap();
    cfg
}

pub fn corpora(cfg: &PipelineConfig) -> (Corpus, Corpus) {
    (
        render_corpus(cfg.seed, &cfg.pretrain_corpus).unwrap(),
        render_corpus(cfg.seed, &cfg.corpus).unwrap(),
    )
}
