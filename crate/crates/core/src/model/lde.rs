//! Learnable dictionary encoding.
//!
//! For frames `f_t` and components `(d_k, s_k = exp σ_k)`:
//!
//! ```text
//! w_tk = softmax_k(−s_k ‖f_t − d_k‖²)
//! e_k  = Σ_t w_tk (f_t − d_k) / Σ_t w_tk
//! ```
//!
//! and the output is `[e_1, …, e_K]`. Per-component normalization is done in
//! log space so a component that every frame ignores still gets a finite
//! (weighted-mean) residual instead of `0/0`.
//!
//! All sums over frames run in a canonical frame order (rows sorted by
//! value), which makes the output bit-for-bit invariant to frame
//! permutations.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::model::extractor::{add_grad, lookup};
use crate::numkit::{ParamMap, Tensor};

pub const DICT: &str = "lde.dict";
pub const LOG_SCALE: &str = "lde.log_scale";

#[derive(Debug, Clone)]
pub struct LdeCache {
    order: Vec<usize>,
    /// Per-frame softmax weights `w_tk`, `[T × K]`.
    assign: Tensor,
    /// Per-component normalized weights `w_tk / Σ_t w_tk`, `[T × K]`.
    norm_assign: Tensor,
    /// Squared distances `‖f_t − d_k‖²`, `[T × K]`.
    sq_dist: Tensor,
    /// Aggregated residuals `e_k`, `[K × D]`.
    residuals: Tensor,
}

impl LdeCache {
    /// Per-frame assignment weights over components (rows sum to one).
    pub fn assignments(&self) -> &Tensor {
        &self.assign
    }
}

fn cmp_rows(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

fn canonical_order(frames: &Tensor) -> Vec<usize> {
    let mut order: Vec<usize> = (0..frames.rows()).collect();
    order.sort_by(|&a, &b| cmp_rows(frames.row(a), frames.row(b)));
    order
}

pub fn lde_forward(frames: &Tensor, params: &ParamMap) -> Result<(Vec<f64>, LdeCache)> {
    let t_len = frames.rows();
    if frames.rank() != 2 || t_len == 0 {
        return Err(Error::contract("LDE pooling needs at least one frame"));
    }
    let dict = lookup(params, DICT)?;
    let log_scale = lookup(params, LOG_SCALE)?;
    let (k_len, d) = (dict.rows(), dict.cols());
    if d != frames.cols() || log_scale.len() != k_len {
        return Err(Error::structural(format!(
            "LDE dictionary {:?} / scales {:?} do not match frame width {}",
            dict.dims(),
            log_scale.dims(),
            frames.cols()
        )));
    }
    let scale: Vec<f64> = log_scale.data().iter().map(|s| s.exp()).collect();

    let mut sq_dist = Tensor::zeros(&[t_len, k_len]);
    let mut assign = Tensor::zeros(&[t_len, k_len]);
    let mut log_assign = Tensor::zeros(&[t_len, k_len]);
    for t in 0..t_len {
        let f = frames.row(t);
        let mut logits = vec![0.0; k_len];
        for k in 0..k_len {
            let dist: f64 = f.iter().zip(dict.row(k)).map(|(a, b)| (a - b) * (a - b)).sum();
            sq_dist.set(t, k, dist);
            logits[k] = -scale[k] * dist;
        }
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
        for k in 0..k_len {
            let lw = logits[k] - lse;
            log_assign.set(t, k, lw);
            assign.set(t, k, lw.exp());
        }
    }

    let order = canonical_order(frames);
    let mut norm_assign = Tensor::zeros(&[t_len, k_len]);
    let mut residuals = Tensor::zeros(&[k_len, d]);
    for k in 0..k_len {
        let peak = order
            .iter()
            .map(|&t| log_assign.at(t, k))
            .fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for &t in &order {
            let w = (log_assign.at(t, k) - peak).exp();
            norm_assign.set(t, k, w);
            total += w;
        }
        let e = residuals.row_mut(k);
        for &t in &order {
            let w = norm_assign.at(t, k) / total;
            norm_assign.set(t, k, w);
            for ((acc, f), c) in e.iter_mut().zip(frames.row(t)).zip(dict.row(k)) {
                *acc += w * (f - c);
            }
        }
    }
    let out = residuals.data().to_vec();
    Ok((
        out,
        LdeCache {
            order,
            assign,
            norm_assign,
            sq_dist,
            residuals,
        },
    ))
}

/// Backward pass. `d_out` is the gradient with respect to the `[K·D]` output;
/// dictionary and scale gradients are accumulated into `grads` when
/// `train_params` is set. Returns the gradient with respect to the frames.
pub fn lde_backward(
    frames: &Tensor,
    cache: &LdeCache,
    d_out: &[f64],
    params: &ParamMap,
    train_params: bool,
    grads: &mut ParamMap,
) -> Tensor {
    let dict = &params[DICT];
    let scale: Vec<f64> = params[LOG_SCALE].data().iter().map(|s| s.exp()).collect();
    let (t_len, k_len, d) = (frames.rows(), dict.rows(), dict.cols());

    let mut d_frames = Tensor::zeros(&[t_len, d]);
    let mut d_dict = Tensor::zeros(&[k_len, d]);
    let mut d_log_scale = vec![0.0; k_len];
    let mut d_resid = vec![0.0; d];
    let mut contrib = vec![0.0; k_len];

    for &t in &cache.order {
        let f = frames.row(t);
        // c_tk = ŵ_tk · g_k·(r_tk − e_k): sensitivity to the frame's raw weight
        let mut c_sum = 0.0;
        for k in 0..k_len {
            let g = &d_out[k * d..(k + 1) * d];
            let e = cache.residuals.row(k);
            let proj: f64 = (0..d).map(|j| g[j] * (f[j] - dict.at(k, j) - e[j])).sum();
            contrib[k] = cache.norm_assign.at(t, k) * proj;
            c_sum += contrib[k];
        }
        let df = d_frames.row_mut(t);
        for k in 0..k_len {
            let g = &d_out[k * d..(k + 1) * d];
            let d_logit = contrib[k] - cache.assign.at(t, k) * c_sum;
            d_log_scale[k] += d_logit * (-scale[k] * cache.sq_dist.at(t, k));
            let direct = cache.norm_assign.at(t, k);
            let via_dist = -2.0 * scale[k] * d_logit;
            let dd = d_dict.row_mut(k);
            for j in 0..d {
                d_resid[j] = direct * g[j] + via_dist * (f[j] - dict.at(k, j));
                df[j] += d_resid[j];
                dd[j] -= d_resid[j];
            }
        }
    }
    if train_params {
        add_grad(grads, DICT.to_string(), d_dict);
        add_grad(grads, LOG_SCALE.to_string(), Tensor::vector(d_log_scale));
    }
    d_frames
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(dict: &[Vec<f64>], log_scale: &[f64]) -> ParamMap {
        let mut p = ParamMap::new();
        p.insert(DICT.into(), Tensor::from_rows(dict).unwrap());
        p.insert(LOG_SCALE.into(), Tensor::vector(log_scale.to_vec()));
        p
    }

    #[test]
    fn single_component_is_mean_residual() {
        let frames = Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, -2.0], vec![2.0, 3.0]]).unwrap();
        let p = params(&[vec![0.5, 0.5]], &[0.3]);
        let (out, cache) = lde_forward(&frames, &p).unwrap();
        assert!((out[0] - (2.0 - 0.5)).abs() < 1e-15);
        assert!((out[1] - (1.0 - 0.5)).abs() < 1e-15);
        assert!(cache.assignments().data().iter().all(|&w| w == 1.0));
    }

    #[test]
    fn sharp_scale_assigns_to_matching_component() {
        let d1 = vec![1.0, 0.0, -1.0];
        let d2 = vec![0.0, 2.0, 0.5];
        let frames = Tensor::from_rows(&[d2.clone(), d2.clone(), d2.clone(), d2.clone()]).unwrap();
        let s = 100f64.ln();
        let p = params(&[d1.clone(), d2], &[s, s]);
        let (out, cache) = lde_forward(&frames, &p).unwrap();
        // assignment to the matching component: 1/(1 + exp(−100·‖d2−d1‖²)) ≈ 1
        for t in 0..4 {
            assert!((cache.assignments().at(t, 1) - 1.0).abs() < 1e-12);
        }
        assert!(out[3..6].iter().all(|v| v.abs() < 1e-12));
        // the unused component still reports the (finite) mean residual
        let expected: Vec<f64> = (0..3).map(|j| frames.at(0, j) - d1[j]).collect();
        for j in 0..3 {
            assert!((out[j] - expected[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_input_rejected() {
        let p = params(&[vec![0.0]], &[0.0]);
        let frames = Tensor::from_vec(&[1, 1], vec![0.0]).unwrap();
        assert!(lde_forward(&frames, &p).is_ok());
        let bad = Tensor::zeros(&[1, 2]);
        assert!(matches!(lde_forward(&bad, &p), Err(Error::Structural(_))));
    }
}
