use std::collections::BTreeSet;
use std::fmt;

use rand::Rng;

use crate::corpus::{Corpus, Split};
use crate::error::{Error, Result};
use crate::losses::{adaptation_objective, head_objective, LossBreakdown};
use crate::model::{
    extractor_forward, set_trainable, Checkpoint, Model, Stage, Trainable, ADAPT_BLOCK_LR_MULTIPLIER, OPTIM_PREFIX,
};
use crate::numkit::{adam_step, inv_decay_lr, noam_lr, noam_peak, progressive_mu, Moments, OptimState, ParamMap, Tensor};
use crate::rng::SeedTree;

use super::batch::{domain_pools, sample_batches, sample_labeled};
use super::config::PipelineConfig;

/// Utterances whose frames seed the dictionary before pretraining.
const DICT_INIT_UTTERANCES: usize = 8;
/// Smoothing of the running loss average.
const LOSS_EMA: f64 = 0.9;

/// What happened at one optimizer step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepLog {
    pub step: u64,
    /// Rate of the shared layers.
    pub lr: f64,
    /// Rate of the adaptation subnets and classifiers, when present.
    pub block_lr: Option<f64>,
    pub progress: f64,
    pub losses: LossBreakdown,
}

impl fmt::Display for StepLog {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let l = &self.losses;
        write!(f, "step={} lr={:e}", self.step, self.lr)?;
        if let Some(b) = self.block_lr {
            write!(f, " block_lr={b:e}")?;
        }
        write!(
            f,
            " p={} mu={} dis={} mmd={} cls={} total={}",
            self.progress, l.mu, l.dis, l.mmd, l.cls, l.total
        )
    }
}

/// Optimizer state and bookkeeping of a stage in progress.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainState {
    pub step: u64,
    pub optim: OptimState,
    /// Exponential moving average of the total loss (stored at 32-bit
    /// precision so that resumed runs see the same value).
    pub loss_avg: f32,
    pub log: Vec<StepLog>,
}

const LOSS_AVG_KEY: &str = "optim/loss_avg";

impl TrainState {
    pub fn new() -> Self {
        Self::default()
    }

    fn to_tensors(&self) -> ParamMap {
        let mut out = ParamMap::new();
        for (name, m) in &self.optim.moments {
            out.insert(format!("{OPTIM_PREFIX}{name}/m"), m.m.clone());
            out.insert(format!("{OPTIM_PREFIX}{name}/v"), m.v.clone());
            out.insert(format!("{OPTIM_PREFIX}{name}/vhat"), m.vhat.clone());
        }
        out.insert(LOSS_AVG_KEY.to_string(), Tensor::vector(vec![f64::from(self.loss_avg)]));
        out
    }

    /// Recovers the optimizer state stored alongside a checkpoint's
    /// parameters.
    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let mut moments = std::collections::BTreeMap::new();
        let mut loss_avg = 0.0;
        for (key, t) in ck.tensors.range(OPTIM_PREFIX.to_string()..) {
            let Some(rest) = key.strip_prefix(OPTIM_PREFIX) else { break };
            if key == LOSS_AVG_KEY {
                loss_avg = t.data()[0] as f32;
                continue;
            }
            let (name, part) = rest.rsplit_once('/').ok_or_else(|| Error::Malformed {
                what: "checkpoint",
                detail: format!("bad optimizer entry {key}"),
            })?;
            let slot = moments.entry(name.to_string()).or_insert_with(|| Moments {
                m: t.clone(),
                v: t.clone(),
                vhat: t.clone(),
            });
            match part {
                "m" => slot.m = t.clone(),
                "v" => slot.v = t.clone(),
                "vhat" => slot.vhat = t.clone(),
                _ => {
                    return Err(Error::Malformed {
                        what: "checkpoint",
                        detail: format!("bad optimizer entry {key}"),
                    })
                }
            }
        }
        Ok(TrainState {
            step: ck.step,
            optim: OptimState { step: ck.step, moments },
            loss_avg,
            log: Vec::new(),
        })
    }
}

/// Model parameters plus optimizer state, ready to be written.
pub fn stage_checkpoint(model: &Model, state: &TrainState) -> Checkpoint {
    let mut ck = model.to_checkpoint();
    ck.tensors.extend(state.to_tensors());
    ck
}

/// Learning rates at a 1-based step: `(shared layers, adaptation block)`.
///
/// * pretrain: Noam warm-up schedule;
/// * finetune: a constant tenth of the pretraining Noam peak;
/// * adapt: the inverse-decay rate `η_p` for the new subnets and
///   classifiers, a tenth of it for group 4 and the LDE layer.
pub fn learning_rates(stage: Stage, step: u64, cfg: &PipelineConfig) -> Result<(f64, Option<f64>)> {
    match stage {
        Stage::Pretrain => Ok((noam_lr(step, &cfg.pretrain.schedule)?, None)),
        Stage::Finetune => Ok((0.1 * noam_peak(&cfg.pretrain.schedule), None)),
        Stage::Adapt => {
            let block = inv_decay_lr(progress(step, cfg.adapt.steps)?, &cfg.adapt.schedule)?;
            Ok((block / ADAPT_BLOCK_LR_MULTIPLIER, Some(block)))
        }
    }
}

/// Training progress `p = step / steps` of a 1-based step.
pub fn progress(step: u64, steps: u64) -> Result<f64> {
    if step == 0 || step > steps {
        return Err(Error::contract(format!("step {step} outside 1..={steps}")));
    }
    Ok(step as f64 / steps as f64)
}

fn distinct_speakers(corpus: &Corpus, pool: &[usize]) -> usize {
    pool.iter()
        .map(|&i| corpus.manifest.records[i].speaker)
        .collect::<BTreeSet<_>>()
        .len()
}

fn check_input_dim(corpus: &Corpus, cfg: &PipelineConfig) -> Result<()> {
    let d = corpus.input_dim()?;
    if d != cfg.model.extractor.input_dim {
        return Err(Error::contract(format!(
            "corpus features have width {d}, model expects {}",
            cfg.model.extractor.input_dim
        )));
    }
    Ok(())
}

fn pretrain_pool(corpus: &Corpus) -> Vec<usize> {
    (0..corpus.manifest.num_domains())
        .flat_map(|d| corpus.indices(d, Split::Train))
        .collect()
}

/// A fresh model for pretraining on the pooled train splits of `corpus`,
/// its dictionary seeded from extractor frames of a few utterances.
pub fn prepare_pretrain(corpus: &Corpus, cfg: &PipelineConfig) -> Result<Model> {
    cfg.validate()?;
    check_input_dim(corpus, cfg)?;
    let pool = pretrain_pool(corpus);
    let speakers = distinct_speakers(corpus, &pool);
    if speakers < 2 {
        return Err(Error::contract(format!(
            "pretraining needs at least 2 speakers in the train split, found {speakers}"
        )));
    }
    let seeds = SeedTree::new(cfg.seed).child("pretrain");
    let mut model = Model::new(cfg.model.clone(), corpus.manifest.num_speakers, &seeds)?;
    let mut rng = seeds.get("dict-frames", 0);
    let mut frames: Vec<Vec<f64>> = Vec::new();
    for _ in 0..DICT_INIT_UTTERANCES {
        let i = pool[rng.gen_range(0..pool.len())];
        let out = extractor_forward(&corpus.features[i], &model.params, &cfg.model.extractor)?;
        let out = out.output();
        frames.extend((0..out.rows()).map(|t| out.row(t).to_vec()));
    }
    model.init_dictionary(&Tensor::from_rows(&frames)?, &seeds)?;
    Ok(model)
}

/// Turns a pretrained model into the starting point of fine-tuning.
pub fn prepare_finetune(mut model: Model, corpus: &Corpus, cfg: &PipelineConfig) -> Result<Model> {
    cfg.validate()?;
    if model.stage != Stage::Pretrain {
        return Err(Error::contract(format!(
            "fine-tuning starts from a pretrain checkpoint, got stage {}",
            model.stage
        )));
    }
    check_input_dim(corpus, cfg)?;
    let n = corpus.manifest.num_speakers;
    if cfg.finetune.reset_head {
        model.reset_head(n, &SeedTree::new(cfg.seed).child("finetune"))?;
    } else if model.num_speakers() != n {
        return Err(Error::contract(format!(
            "head has {} classes but corpus has {n} speakers; enable finetune.reset_head",
            model.num_speakers()
        )));
    }
    if corpus.indices(0, Split::Train).is_empty() {
        return Err(Error::contract("clean domain has no training utterances"));
    }
    model.stage = Stage::Finetune;
    model.step = 0;
    Ok(model)
}

/// Adds the per-domain subnets and classifiers to a fine-tuned model.
pub fn prepare_adapt(mut model: Model, corpus: &Corpus, cfg: &PipelineConfig) -> Result<Model> {
    cfg.validate()?;
    if model.stage != Stage::Finetune {
        return Err(Error::contract(format!(
            "adaptation starts from a finetune checkpoint, got stage {}",
            model.stage
        )));
    }
    check_input_dim(corpus, cfg)?;
    let targets = corpus.manifest.num_domains().saturating_sub(1);
    if targets < 2 {
        return Err(Error::contract(format!(
            "adaptation needs at least 2 target domains, corpus has {targets}"
        )));
    }
    domain_pools(corpus)?;
    model.add_adaptation_block(
        targets,
        corpus.manifest.num_speakers,
        &SeedTree::new(cfg.seed).child("adapt"),
    )?;
    model.stage = Stage::Adapt;
    model.step = 0;
    Ok(model)
}

/// Runs `model.stage` from `state.step + 1` up to the configured number of
/// steps. `on_checkpoint` receives an intermediate checkpoint every
/// `checkpoint_every` steps.
pub fn run_stage(
    mut model: Model,
    mut state: TrainState,
    corpus: &Corpus,
    cfg: &PipelineConfig,
    on_checkpoint: &mut dyn FnMut(&Checkpoint) -> Result<()>,
) -> Result<(Model, TrainState)> {
    let stage = model.stage;
    let sc = cfg.stage(stage).clone();
    sc.validate(stage)?;
    check_input_dim(corpus, cfg)?;
    if state.step > sc.steps {
        return Err(Error::contract(format!(
            "state is at step {} beyond the configured {} steps",
            state.step, sc.steps
        )));
    }
    let groups = set_trainable(&model.params, stage);
    let trainable = Trainable::from_groups(&groups);
    let seeds = SeedTree::new(cfg.seed);
    let stream = format!("batch/{}", stage.name());
    let pools = match stage {
        Stage::Pretrain => vec![pretrain_pool(corpus)],
        Stage::Finetune => vec![corpus.indices(0, Split::Train)],
        Stage::Adapt => domain_pools(corpus)?,
    };

    while state.step < sc.steps {
        let step = state.step + 1;
        let mut rng = seeds.get(&stream, step);
        let (lr, block_lr) = learning_rates(stage, step, cfg)?;
        let p = progress(step, sc.steps)?;
        let at_step = |e: Error| match e {
            Error::Numeric(m) => Error::Numeric(format!("{stage} step {step}: {m}")),
            other => other,
        };
        let (losses, grads) = match stage {
            Stage::Pretrain | Stage::Finetune => {
                let batch = sample_labeled(corpus, &pools[0], sc.batch_size, sc.crop_frames, &mut rng)?;
                let (loss, grads) = head_objective(&batch, &model.params, &model.config, trainable).map_err(at_step)?;
                (LossBreakdown::compose(0.0, 0.0, loss, 0.0), grads)
            }
            Stage::Adapt => {
                let batch = sample_batches(
                    corpus,
                    &pools,
                    sc.batch_size,
                    sc.target_batch_size,
                    sc.crop_frames,
                    &mut rng,
                )?;
                batch.validate(model.num_speakers().max(corpus.manifest.num_speakers))?;
                let mu = progressive_mu(p, sc.schedule.theta)?;
                adaptation_objective(&batch, &model.params, &model.config, mu, sc.kernel, trainable)
                    .map_err(at_step)?
            }
        };
        adam_step(&mut model.params, &groups, &grads, &mut state.optim, lr, &sc.adam).map_err(at_step)?;
        state.step = step;
        model.step = step;
        state.loss_avg = if step == 1 {
            losses.total as f32
        } else {
            (LOSS_EMA * f64::from(state.loss_avg) + (1.0 - LOSS_EMA) * losses.total) as f32
        };
        state.log.push(StepLog {
            step,
            lr,
            block_lr,
            progress: p,
            losses,
        });
        if sc.checkpoint_every > 0 && step.is_multiple_of(sc.checkpoint_every) && step < sc.steps {
            on_checkpoint(&stage_checkpoint(&model, &state))?;
        }
    }
    Ok((model, state))
}

fn no_checkpoints(_: &Checkpoint) -> Result<()> {
    Ok(())
}

pub fn pretrain(corpus: &Corpus, cfg: &PipelineConfig) -> Result<(Model, TrainState)> {
    let model = prepare_pretrain(corpus, cfg)?;
    run_stage(model, TrainState::new(), corpus, cfg, &mut no_checkpoints)
}

pub fn finetune(model: Model, corpus: &Corpus, cfg: &PipelineConfig) -> Result<(Model, TrainState)> {
    let model = prepare_finetune(model, corpus, cfg)?;
    run_stage(model, TrainState::new(), corpus, cfg, &mut no_checkpoints)
}

pub fn adapt(model: Model, corpus: &Corpus, cfg: &PipelineConfig) -> Result<(Model, TrainState)> {
    let model = prepare_adapt(model, corpus, cfg)?;
    run_stage(model, TrainState::new(), corpus, cfg, &mut no_checkpoints)
}

/// Continues a stage from one of its own intermediate checkpoints.
pub fn resume(ck: &Checkpoint, corpus: &Corpus, cfg: &PipelineConfig) -> Result<(Model, TrainState)> {
    let model = Model::from_checkpoint(ck, cfg.model.clone())?;
    let state = TrainState::from_checkpoint(ck)?;
    run_stage(model, state, corpus, cfg, &mut no_checkpoints)
}
