//! Dense numeric core: tensors, the AMSGrad optimizer, learning-rate and
//! loss-weight schedules, and a finite-difference gradient checker.

mod gradcheck;
mod optim;
mod schedule;
mod tensor;

use std::collections::BTreeMap;

pub use gradcheck::{grad_check, GradCheck};
pub use optim::{adam_step, AdamConfig, Moments, OptimState, ParamGroup};
pub use schedule::{inv_decay_lr, noam_lr, noam_peak, progressive_mu, ScheduleConfig};
pub use tensor::Tensor;

/// Named tensors, ordered by name so iteration is deterministic.
pub type ParamMap = BTreeMap<String, Tensor>;

/// Accumulates `src` into `dst`, inserting missing entries.
pub fn accumulate(dst: &mut ParamMap, src: &ParamMap) {
    for (k, v) in src {
        match dst.get_mut(k) {
            Some(d) => d.add_scaled(v, 1.0),
            None => {
                dst.insert(k.clone(), v.clone());
            }
        }
    }
}
