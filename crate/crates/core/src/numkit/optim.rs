use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::{ParamMap, Tensor};

/// A named set of parameters that share a learning-rate multiplier and a
/// freeze flag.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGroup {
    pub name: String,
    pub tensors: Vec<String>,
    pub lr_multiplier: f64,
    pub frozen: bool,
}

impl ParamGroup {
    pub fn new(name: impl Into<String>, tensors: Vec<String>) -> Self {
        ParamGroup {
            name: name.into(),
            tensors,
            lr_multiplier: 1.0,
            frozen: false,
        }
    }

    pub fn frozen(mut self, frozen: bool) -> Self {
        self.frozen = frozen;
        self
    }

    pub fn with_multiplier(mut self, m: f64) -> Self {
        self.lr_multiplier = m;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Decoupled weight decay, applied to the parameters as `lr · wd · w`.
    pub weight_decay: f64,
    pub amsgrad: bool,
    /// Round parameters and moments to `f32` after every update so that the
    /// in-memory state equals what a checkpoint stores.
    pub f32_storage: bool,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.98,
            eps: 1e-8,
            weight_decay: 1e-4,
            amsgrad: true,
            f32_storage: true,
        }
    }
}

/// First and second moments of one parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub m: Tensor,
    pub v: Tensor,
    /// Running elementwise maximum of `v` (AMSGrad).
    pub vhat: Tensor,
}

impl Moments {
    fn zeros_like(t: &Tensor) -> Self {
        Moments {
            m: Tensor::zeros(t.dims()),
            v: Tensor::zeros(t.dims()),
            vhat: Tensor::zeros(t.dims()),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct OptimState {
    pub step: u64,
    pub moments: BTreeMap<String, Moments>,
}

impl OptimState {
    pub fn new() -> Self {
        Self::default()
    }
}

/// One AMSGrad step over every unfrozen group.
///
/// Each parameter of an unfrozen group is updated with learning rate
/// `base_lr × lr_multiplier`. Frozen groups are skipped entirely: neither the
/// parameters nor their moments are touched.
pub fn adam_step(
    params: &mut ParamMap,
    groups: &[ParamGroup],
    grads: &ParamMap,
    state: &mut OptimState,
    base_lr: f64,
    cfg: &AdamConfig,
) -> Result<()> {
    if !(base_lr > 0.0 && base_lr.is_finite()) {
        return Err(Error::contract(format!("base_lr must be positive, got {base_lr}")));
    }
    // Validate everything before mutating anything.
    for group in groups.iter().filter(|g| !g.frozen) {
        for name in &group.tensors {
            let p = params
                .get(name)
                .ok_or_else(|| Error::structural(format!("group {} names missing parameter {name}", group.name)))?;
            let g = grads
                .get(name)
                .ok_or_else(|| Error::structural(format!("no gradient for trainable parameter {name}")))?;
            if !p.same_shape(g) {
                return Err(Error::structural(format!(
                    "gradient for {name} has dims {:?}, parameter has {:?}",
                    g.dims(),
                    p.dims()
                )));
            }
            g.check_finite(&format!("gradient of {name}"))?;
        }
    }

    state.step += 1;
    let t = state.step as f64;
    let bc1 = 1.0 - cfg.beta1.powf(t);
    let bc2 = 1.0 - cfg.beta2.powf(t);

    for group in groups.iter().filter(|g| !g.frozen) {
        let lr = base_lr * group.lr_multiplier;
        for name in &group.tensors {
            let p = params.get_mut(name).expect("validated above");
            let g = &grads[name];
            let mo = state
                .moments
                .entry(name.clone())
                .or_insert_with(|| Moments::zeros_like(p));
            let (m, v, vhat) = (mo.m.data_mut(), mo.v.data_mut(), mo.vhat.data_mut());
            for (i, (w, &gi)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
                m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
                v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
                let second = if cfg.amsgrad {
                    vhat[i] = vhat[i].max(v[i]);
                    vhat[i]
                } else {
                    v[i]
                };
                let m_hat = m[i] / bc1;
                let v_hat = second / bc2;
                *w -= lr * (m_hat / (v_hat.sqrt() + cfg.eps) + cfg.weight_decay * *w);
            }
            if cfg.f32_storage {
                p.quantize_f32();
                mo.m.quantize_f32();
                mo.v.quantize_f32();
                mo.vhat.quantize_f32();
            }
            p.check_finite(name)?;
        }
    }
    Ok(())
}
