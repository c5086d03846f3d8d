//! Browser bindings for three small views of the xdsv internals: the
//! adaptation schedules, the MMD between two point clouds and the EER of a
//! score set.
//!
//! Every exported function has a plain Rust twin (the `*_impl` functions)
//! so the numbers can be checked natively.

use rand::Rng;
use rand_distr::StandardNormal;
use wasm_bindgen::prelude::*;
use xdsv::eval::{eer, operating_points};
use xdsv::losses::{median_bandwidth, mmd_pair, Kernel};
use xdsv::numkit::{inv_decay_lr, noam_lr, progressive_mu, ScheduleConfig, Tensor};
use xdsv::rng::SeedTree;

/// Values per step in [`schedule_curves_impl`]'s output.
pub const SCHEDULE_STRIDE: usize = 5;

/// For steps `1..=steps`, rows of `[p, block_lr, backbone_lr, mu, noam_lr]`
/// flattened into one vector.
pub fn schedule_curves_impl(steps: u32, cfg: &ScheduleConfig) -> Result<Vec<f64>, String> {
    cfg.validate().map_err(|e| e.to_string())?;
    if steps == 0 {
        return Err("steps must be at least 1".into());
    }
    let mut out = Vec::with_capacity(steps as usize * SCHEDULE_STRIDE);
    for s in 1..=steps {
        let p = f64::from(s) / f64::from(steps);
        let block = inv_decay_lr(p, cfg).map_err(|e| e.to_string())?;
        let mu = progressive_mu(p, cfg.theta).map_err(|e| e.to_string())?;
        let noam = noam_lr(u64::from(s), cfg).map_err(|e| e.to_string())?;
        out.extend_from_slice(&[p, block, block / 10.0, mu, noam]);
    }
    Ok(out)
}

fn cloud<R: Rng>(rng: &mut R, n: usize, shift: f64, scale: f64) -> Tensor {
    let data = (0..n * 2)
        .map(|i| {
            let z: f64 = rng.sample(StandardNormal);
            let offset = if i % 2 == 0 { shift } else { 0.0 };
            offset + scale * z
        })
        .collect();
    Tensor::from_vec(&[n, 2], data).expect("n x 2 buffer")
}

/// Two 2-D Gaussian clouds of `n` points each. The source is standard
/// normal; the target is moved by `shift` along x and scaled by `scale`.
///
/// Output: `[linear_mmd, rbf_mmd, bandwidth, xs0, ys0, ..., xt0, yt0, ...]`.
/// A `bandwidth <= 0` picks the median heuristic.
pub fn mmd_clouds_impl(seed: u64, n: usize, shift: f64, scale: f64, bandwidth: f64) -> Result<Vec<f64>, String> {
    if n < 2 {
        return Err("each cloud needs at least 2 points".into());
    }
    if !(scale > 0.0 && scale.is_finite() && shift.is_finite()) {
        return Err("scale must be positive and shift finite".into());
    }
    let seeds = SeedTree::new(seed);
    let src = cloud(&mut seeds.get("demo/source", 0), n, 0.0, 1.0);
    let tgt = cloud(&mut seeds.get("demo/target", 0), n, shift, scale);
    let bw = if bandwidth > 0.0 { bandwidth } else { median_bandwidth(&src, &tgt) };
    let linear = mmd_pair(&src, &tgt, Kernel::Linear).map_err(|e| e.to_string())?;
    let rbf = mmd_pair(&src, &tgt, Kernel::Rbf { bandwidth: Some(bw) }).map_err(|e| e.to_string())?;
    let mut out = vec![linear, rbf, bw];
    out.extend_from_slice(src.data());
    out.extend_from_slice(tgt.data());
    Ok(out)
}

/// Gaussian target and non-target scores with means `separation` apart.
/// Output: the `n_target` target scores followed by the non-target scores.
pub fn gaussian_scores_impl(seed: u64, n_target: usize, n_nontarget: usize, separation: f64) -> Vec<f64> {
    let seeds = SeedTree::new(seed);
    let mut t = seeds.get("demo/targets", 0);
    let mut n = seeds.get("demo/nontargets", 0);
    let mut out: Vec<f64> = (0..n_target).map(|_| separation + t.sample::<f64, _>(StandardNormal)).collect();
    out.extend((0..n_nontarget).map(|_| n.sample::<f64, _>(StandardNormal)));
    out
}

/// Output: `[eer, threshold, thr0, far0, frr0, thr1, far1, frr1, ...]`.
pub fn eer_curve_impl(targets: &[f64], nontargets: &[f64]) -> Result<Vec<f64>, String> {
    let e = eer(targets, nontargets).map_err(|e| e.to_string())?;
    let points = operating_points(targets, nontargets).map_err(|e| e.to_string())?;
    let mut out = vec![e.eer, e.threshold];
    for p in points {
        out.extend_from_slice(&[p.threshold, p.far, p.frr]);
    }
    Ok(out)
}

#[wasm_bindgen]
pub fn schedule_curves(
    steps: u32,
    eta0: f64,
    alpha: f64,
    beta: f64,
    theta: f64,
    noam_dim: u32,
    noam_warmup: u32,
) -> Result<Vec<f64>, JsError> {
    let cfg = ScheduleConfig {
        eta0,
        alpha,
        beta,
        theta,
        noam_dim,
        noam_warmup,
        ..ScheduleConfig::default()
    };
    schedule_curves_impl(steps, &cfg).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn mmd_clouds(seed: u32, n: usize, shift: f64, scale: f64, bandwidth: f64) -> Result<Vec<f64>, JsError> {
    mmd_clouds_impl(u64::from(seed), n, shift, scale, bandwidth).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn gaussian_scores(seed: u32, n_target: usize, n_nontarget: usize, separation: f64) -> Vec<f64> {
    gaussian_scores_impl(u64::from(seed), n_target, n_nontarget, separation)
}

#[wasm_bindgen]
pub fn eer_curve(targets: &[f64], nontargets: &[f64]) -> Result<Vec<f64>, JsError> {
    eer_curve_impl(targets, nontargets).map_err(|e| JsError::new(&e))
}
