//! The speaker-embedding network: a shared frame-context extractor with LDE
//! pooling (Φ0), per-target-domain subnets (Φ1, Φ2), and softmax heads.

mod checkpoint;
mod config;
pub mod dense;
pub mod extractor;
pub mod lde;
pub mod subnet;

use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_VERSION, OPTIM_PREFIX};
pub use config::{ExtractorConfig, Fingerprint, LdeConfig, ModelConfig, SubnetConfig, NUM_GROUPS};
pub use extractor::{extractor_backward, extractor_forward, ExtractorCache};
pub use lde::{lde_backward, lde_forward, LdeCache};
pub use subnet::{
    classifier_backward, classifier_forward, head_backward, head_forward, subnet_backward, subnet_forward,
    SubnetCache, SubnetStage,
};

use crate::error::{Error, Result};
use crate::numkit::{ParamGroup, ParamMap, Tensor};
use crate::rng::SeedTree;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Pretrain,
    Finetune,
    Adapt,
}

impl Stage {
    pub fn tag(self) -> u8 {
        match self {
            Stage::Pretrain => 0,
            Stage::Finetune => 1,
            Stage::Adapt => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Stage::Pretrain),
            1 => Some(Stage::Finetune),
            2 => Some(Stage::Adapt),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Stage::Pretrain => "pretrain",
            Stage::Finetune => "finetune",
            Stage::Adapt => "adapt",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pretrain" => Ok(Stage::Pretrain),
            "finetune" => Ok(Stage::Finetune),
            "adapt" => Ok(Stage::Adapt),
            other => Err(Error::contract(format!("unknown stage {other:?}"))),
        }
    }
}

/// Parameter group a tensor belongs to, derived from its name.
pub fn group_of(param: &str) -> &'static str {
    let prefix = param.split('.').next().unwrap_or("");
    match prefix {
        "group1" => "group1",
        "group2" => "group2",
        "group3" => "group3",
        "group4" => "group4",
        "lde" => "lde",
        "head" => "head",
        p if p.starts_with("subnet") => "subnets",
        p if p.starts_with("classifier") => "classifiers",
        _ => "other",
    }
}

const GROUP_ORDER: [&str; 8] = [
    "group1",
    "group2",
    "group3",
    "group4",
    "lde",
    "head",
    "subnets",
    "classifiers",
];

/// Multiplier applied to the freshly initialised adaptation block relative
/// to the shared layers.
pub const ADAPT_BLOCK_LR_MULTIPLIER: f64 = 10.0;

/// Builds the freeze / learning-rate configuration for a stage.
///
/// * pretrain: every group trainable at multiplier 1;
/// * finetune: groups 1–3 frozen, group 4, LDE and the head trainable;
/// * adapt: groups 1–3 and the fine-tuning head frozen, group 4 and LDE at
///   multiplier 1, subnets and classifiers at multiplier 10.
pub fn set_trainable(params: &ParamMap, stage: Stage) -> Vec<ParamGroup> {
    GROUP_ORDER
        .iter()
        .filter_map(|&name| {
            let tensors: Vec<String> = params.keys().filter(|k| group_of(k) == name).cloned().collect();
            if tensors.is_empty() {
                return None;
            }
            let lower = matches!(name, "group1" | "group2" | "group3");
            let block = matches!(name, "subnets" | "classifiers");
            let group = ParamGroup::new(name, tensors);
            Some(match stage {
                Stage::Pretrain => group,
                Stage::Finetune => group.frozen(lower || block),
                Stage::Adapt => group
                    .frozen(lower || name == "head")
                    .with_multiplier(if block { ADAPT_BLOCK_LR_MULTIPLIER } else { 1.0 }),
            })
        })
        .collect()
}

/// Which parts of the network need gradients, derived from parameter groups.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Trainable {
    /// Lowest trainable extractor group (0-based); `NUM_GROUPS` if none.
    pub lowest_group: usize,
    pub lde: bool,
    pub head: bool,
    pub block: bool,
}

impl Trainable {
    pub fn all() -> Self {
        Trainable {
            lowest_group: 0,
            lde: true,
            head: true,
            block: true,
        }
    }

    pub fn from_groups(groups: &[ParamGroup]) -> Self {
        let live = |n: &str| groups.iter().any(|g| g.name == n && !g.frozen);
        let lowest_group = (0..NUM_GROUPS)
            .find(|g| live(&format!("group{}", g + 1)))
            .unwrap_or(NUM_GROUPS);
        Trainable {
            lowest_group,
            lde: live("lde"),
            head: live("head"),
            block: live("subnets") || live("classifiers"),
        }
    }

    /// True when gradients must flow back into Φ0 at all.
    pub fn phi0(&self) -> bool {
        self.lde || self.lowest_group < NUM_GROUPS
    }
}

/// Intermediates of one utterance's pass through Φ0.
#[derive(Debug, Clone)]
pub struct Phi0Cache {
    pub extractor: ExtractorCache,
    pub lde: LdeCache,
}

/// Φ0: extractor then LDE pooling. Returns the pooled `[K·D]` representation.
pub fn phi0_forward(x: &Tensor, params: &ParamMap, cfg: &ModelConfig) -> Result<(Vec<f64>, Phi0Cache)> {
    let extractor = extractor_forward(x, params, &cfg.extractor)?;
    let (pooled, lde) = lde_forward(extractor.output(), params)?;
    Ok((pooled, Phi0Cache { extractor, lde }))
}

/// Backward through Φ0 for one utterance, accumulating into `grads` only the
/// parameters marked trainable.
pub fn phi0_backward(
    cache: &Phi0Cache,
    d_pooled: &[f64],
    params: &ParamMap,
    cfg: &ModelConfig,
    trainable: Trainable,
    grads: &mut ParamMap,
) {
    if !trainable.phi0() {
        return;
    }
    let d_frames = lde_backward(cache.extractor.output(), &cache.lde, d_pooled, params, trainable.lde, grads);
    if trainable.lowest_group < NUM_GROUPS {
        extractor_backward(
            &cache.extractor,
            &d_frames,
            params,
            &cfg.extractor,
            trainable.lowest_group,
            grads,
        );
    }
}

/// Network parameters together with their architecture and training stage.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub stage: Stage,
    pub step: u64,
    pub params: ParamMap,
}

fn he_layer(params: &mut ParamMap, seeds: &SeedTree, w_name: String, b_name: String, fan_in: usize, fan_out: usize) {
    let mut rng = seeds.get(&format!("init/{w_name}"), 0);
    params.insert(w_name, dense::he_uniform(&mut rng, fan_in, fan_out));
    params.insert(b_name, Tensor::zeros(&[fan_out]));
}

impl Model {
    /// Fresh extractor, LDE and a `num_speakers`-way head. The dictionary
    /// starts at zero; use [`Model::init_dictionary`] once frames are
    /// available.
    pub fn new(config: ModelConfig, num_speakers: usize, seeds: &SeedTree) -> Result<Self> {
        config.validate()?;
        if num_speakers < 2 {
            return Err(Error::contract(format!(
                "speaker classification needs at least 2 speakers, got {num_speakers}"
            )));
        }
        let mut params = ParamMap::new();
        let e = &config.extractor;
        for g in 0..NUM_GROUPS {
            let fan_in = (2 * e.context[g] + 1) * e.group_input_dim(g);
            he_layer(
                &mut params,
                seeds,
                extractor::weight_name(g),
                extractor::bias_name(g),
                fan_in,
                e.group_dims[g],
            );
        }
        params.insert(
            lde::DICT.to_string(),
            Tensor::zeros(&[config.lde.num_components, e.output_dim()]),
        );
        params.insert(lde::LOG_SCALE.to_string(), Tensor::zeros(&[config.lde.num_components]));
        let mut model = Model {
            config,
            stage: Stage::Pretrain,
            step: 0,
            params,
        };
        model.reset_head(num_speakers, seeds)?;
        Ok(model)
    }

    /// Replaces the pooled-representation head with a fresh one.
    pub fn reset_head(&mut self, num_speakers: usize, seeds: &SeedTree) -> Result<()> {
        if num_speakers < 2 {
            return Err(Error::contract("head needs at least 2 classes"));
        }
        let width = self.config.lde_output_dim();
        he_layer(
            &mut self.params,
            seeds,
            subnet::HEAD_W.to_string(),
            subnet::HEAD_B.to_string(),
            width,
            num_speakers,
        );
        Ok(())
    }

    /// Sets the dictionary to `K` distinct rows drawn from `frames`.
    pub fn init_dictionary(&mut self, frames: &Tensor, seeds: &SeedTree) -> Result<()> {
        let k = self.config.lde.num_components;
        if frames.rows() < k || frames.cols() != self.config.extractor.output_dim() {
            return Err(Error::contract(format!(
                "dictionary init needs at least {k} frames of width {}",
                self.config.extractor.output_dim()
            )));
        }
        let mut rng = seeds.get("init/lde.dict", 0);
        let picks = sample(&mut rng, frames.rows(), k);
        let mut dict = Tensor::stack_rows(picks.iter().map(|i| frames.row(i)))?;
        dict.quantize_f32();
        self.params.insert(lde::DICT.to_string(), dict);
        Ok(())
    }

    /// Adds freshly initialised subnets and classifiers for target domains
    /// `1..=num_domains`.
    pub fn add_adaptation_block(&mut self, num_domains: usize, num_speakers: usize, seeds: &SeedTree) -> Result<()> {
        if num_domains < 1 {
            return Err(Error::contract("adaptation block needs at least one target domain"));
        }
        if num_speakers < 2 {
            return Err(Error::contract("domain classifiers need at least 2 classes"));
        }
        let widths = self.config.subnet.layer_dims();
        for h in 1..=num_domains {
            let mut fan_in = self.config.lde_output_dim();
            for (l, &out) in widths.iter().enumerate() {
                he_layer(
                    &mut self.params,
                    seeds,
                    subnet::subnet_weight(h, l),
                    subnet::subnet_bias(h, l),
                    fan_in,
                    out,
                );
                fan_in = out;
            }
            he_layer(
                &mut self.params,
                seeds,
                subnet::classifier_weight(h),
                subnet::classifier_bias(h),
                fan_in,
                num_speakers,
            );
        }
        Ok(())
    }

    pub fn num_speakers(&self) -> usize {
        self.params.get(subnet::HEAD_W).map_or(0, Tensor::cols)
    }

    /// Target domains with their own subnet.
    pub fn num_domains(&self) -> usize {
        subnet::count_domains(&self.params)
    }

    /// Verifies that tensor shapes agree with the architecture.
    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        let e = &self.config.extractor;
        let expect = |name: &str, dims: &[usize]| -> Result<()> {
            let t = extractor::lookup(&self.params, name)?;
            if t.dims() != dims {
                return Err(Error::structural(format!(
                    "{name} has dims {:?}, architecture needs {dims:?}",
                    t.dims()
                )));
            }
            Ok(())
        };
        for g in 0..NUM_GROUPS {
            let fan_in = (2 * e.context[g] + 1) * e.group_input_dim(g);
            expect(&extractor::weight_name(g), &[fan_in, e.group_dims[g]])?;
            expect(&extractor::bias_name(g), &[e.group_dims[g]])?;
        }
        let k = self.config.lde.num_components;
        expect(lde::DICT, &[k, e.output_dim()])?;
        expect(lde::LOG_SCALE, &[k])?;
        let c = self.num_speakers();
        expect(subnet::HEAD_W, &[self.config.lde_output_dim(), c])?;
        expect(subnet::HEAD_B, &[c])?;
        let widths = self.config.subnet.layer_dims();
        for h in 1..=self.num_domains() {
            let mut fan_in = self.config.lde_output_dim();
            for (l, &out) in widths.iter().enumerate() {
                expect(&subnet::subnet_weight(h, l), &[fan_in, out])?;
                expect(&subnet::subnet_bias(h, l), &[out])?;
                fan_in = out;
            }
            let wc = extractor::lookup(&self.params, &subnet::classifier_weight(h))?;
            if wc.rows() != fan_in {
                return Err(Error::structural(format!("classifier {h} input width mismatch")));
            }
        }
        if self.stage == Stage::Adapt && self.num_domains() < 2 {
            return Err(Error::structural("adapted model needs at least 2 target subnets"));
        }
        Ok(())
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            stage: self.stage,
            step: self.step,
            tensors: self.params.clone(),
            fingerprint: self.config.fingerprint(),
        }
    }

    /// Rebuilds a model from checkpoint tensors, ignoring optimizer entries.
    pub fn from_checkpoint(ck: &Checkpoint, config: ModelConfig) -> Result<Self> {
        if ck.fingerprint != config.fingerprint() {
            return Err(Error::FingerprintMismatch {
                expected: config.fingerprint().to_hex(),
                found: ck.fingerprint.to_hex(),
            });
        }
        let params = ck
            .tensors
            .iter()
            .filter(|(k, _)| !k.starts_with(checkpoint::OPTIM_PREFIX))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        let model = Model {
            config,
            stage: ck.stage,
            step: ck.step,
            params,
        };
        model.validate()?;
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn micro() -> ModelConfig {
        ModelConfig {
            extractor: ExtractorConfig {
                input_dim: 3,
                group_dims: [4, 4, 4, 3],
                context: [1, 0, 1, 0],
            },
            lde: LdeConfig { num_components: 2 },
            subnet: SubnetConfig {
                phi1_dims: [5, 4],
                phi2_dims: [4, 3],
            },
        }
    }

    fn adapted() -> Model {
        let seeds = SeedTree::new(3);
        let mut m = Model::new(micro(), 4, &seeds).unwrap();
        m.add_adaptation_block(3, 4, &seeds).unwrap();
        m
    }

    fn unfrozen(groups: &[ParamGroup]) -> Vec<&str> {
        groups.iter().filter(|g| !g.frozen).map(|g| g.name.as_str()).collect()
    }

    #[test]
    fn stage_freeze_rules() {
        let seeds = SeedTree::new(1);
        let m = Model::new(micro(), 4, &seeds).unwrap();
        let pre = set_trainable(&m.params, Stage::Pretrain);
        assert!(pre.iter().all(|g| !g.frozen && g.lr_multiplier == 1.0));
        let fine = set_trainable(&m.params, Stage::Finetune);
        assert_eq!(unfrozen(&fine), vec!["group4", "lde", "head"]);

        let a = adapted();
        let groups = set_trainable(&a.params, Stage::Adapt);
        assert_eq!(unfrozen(&groups), vec!["group4", "lde", "subnets", "classifiers"]);
        let mult = |n: &str| groups.iter().find(|g| g.name == n).unwrap().lr_multiplier;
        assert_eq!(mult("subnets") / mult("group4"), 10.0);
        assert_eq!(mult("classifiers") / mult("lde"), 10.0);
        let t = Trainable::from_groups(&groups);
        assert_eq!(t.lowest_group, 3);
        assert!(t.lde && !t.head && t.block);
    }

    #[test]
    fn zero_weights_zero_activations() {
        let seeds = SeedTree::new(1);
        let mut m = Model::new(micro(), 4, &seeds).unwrap();
        for (k, v) in m.params.iter_mut() {
            if k.starts_with("group") {
                *v = Tensor::zeros(v.dims());
            }
        }
        let x = Tensor::from_vec(&[5, 3], (0..15).map(|i| i as f64 - 7.0).collect()).unwrap();
        let c = extractor_forward(&x, &m.params, &m.config.extractor).unwrap();
        assert!(c.output().data().iter().all(|&v| v == 0.0));
        assert_eq!(c.output().rows(), 5);
    }

    #[test]
    fn counts_and_validation() {
        let a = adapted();
        assert_eq!(a.num_domains(), 3);
        assert_eq!(a.num_speakers(), 4);
        a.validate().unwrap();
        let mut broken = a.clone();
        broken.params.insert("group2.b".into(), Tensor::zeros(&[7]));
        assert!(matches!(broken.validate(), Err(Error::Structural(_))));
    }

    #[test]
    fn stage_names_round_trip() {
        for s in [Stage::Pretrain, Stage::Finetune, Stage::Adapt] {
            assert_eq!(s.name().parse::<Stage>().unwrap(), s);
            assert_eq!(Stage::from_tag(s.tag()), Some(s));
        }
        assert!("bogus".parse::<Stage>().is_err());
        assert_eq!(Stage::from_tag(9), None);
    }
}
