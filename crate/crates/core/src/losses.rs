//! Training objectives: cross-subnet discrepancy, MMD alignment, per-domain
//! classification, and their scheduled combination.
//!
//! Every loss returns its value together with the gradient with respect to
//! its inputs; [`adaptation_objective`] and [`head_objective`] chain those
//! through the network.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    classifier_backward, classifier_forward, head_backward, head_forward, phi0_backward, phi0_forward,
    subnet_backward, subnet_forward, ModelConfig, Phi0Cache, SubnetStage, Trainable,
};
use crate::numkit::{accumulate, progressive_mu, ParamMap, Tensor};
use crate::par::map_ordered;

/// Labelled utterances of one domain.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabeledBatch {
    pub features: Vec<Tensor>,
    pub labels: Vec<usize>,
}

impl LabeledBatch {
    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }
}

/// One adaptation step's worth of data: clean source samples and, for each
/// target domain `h = 1..=N` (stored at index `h − 1`), its own samples.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DomainBatch {
    pub source: LabeledBatch,
    pub targets: Vec<LabeledBatch>,
}

impl DomainBatch {
    pub fn validate(&self, num_speakers: usize) -> Result<()> {
        if self.source.len() < 2 || self.targets.iter().any(|t| t.len() < 2) {
            return Err(Error::contract(
                "adaptation batches need at least 2 samples per domain (unbiased MMD)",
            ));
        }
        for b in std::iter::once(&self.source).chain(&self.targets) {
            if b.features.len() != b.labels.len() {
                return Err(Error::structural("batch features and labels differ in length"));
            }
            if let Some(&l) = b.labels.iter().find(|&&l| l >= num_speakers) {
                return Err(Error::contract(format!("label {l} outside {num_speakers} speakers")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub dis: f64,
    pub mmd: f64,
    pub cls: f64,
    pub mu: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn compose(dis: f64, mmd: f64, cls: f64, mu: f64) -> Self {
        LossBreakdown {
            dis,
            mmd,
            cls,
            mu,
            total: mu * (mmd + dis) + cls,
        }
    }
}

/// Mean absolute pairwise difference between per-subnet outputs on the same
/// samples, averaged over the `N(N−1)/2` pairs.
pub fn discrepancy_loss(outputs: &[Tensor]) -> Result<(f64, Vec<Tensor>)> {
    let n = outputs.len();
    if n < 2 {
        return Err(Error::contract(format!("discrepancy needs at least 2 subnets, got {n}")));
    }
    let dims = outputs[0].dims();
    if outputs.iter().any(|o| o.dims() != dims) {
        return Err(Error::structural("discrepancy inputs must share a shape"));
    }
    let coef = 2.0 / (n * (n - 1)) as f64;
    let per_entry = coef / outputs[0].len() as f64;
    let mut grads: Vec<Tensor> = outputs.iter().map(|o| Tensor::zeros(o.dims())).collect();
    let mut total = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let mut pair = 0.0;
            for (idx, (a, b)) in outputs[i].data().iter().zip(outputs[j].data()).enumerate() {
                let diff = a - b;
                pair += diff.abs();
                let s = if diff > 0.0 {
                    per_entry
                } else if diff < 0.0 {
                    -per_entry
                } else {
                    0.0
                };
                grads[i].data_mut()[idx] += s;
                grads[j].data_mut()[idx] -= s;
            }
            total += pair;
        }
    }
    Ok((total * per_entry, grads))
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Kernel {
    /// `k(x, y) = xᵀy`; the MMD reduces to the squared distance of means.
    #[default]
    Linear,
    /// Gaussian `k(x, y) = exp(−‖x−y‖² / (2σ²))`. A bandwidth of `None`
    /// selects the median heuristic on the pooled pair.
    Rbf { bandwidth: Option<f64> },
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Median-heuristic bandwidth: `σ² = median(‖x−y‖²) / 2` over distinct pairs
/// of the pooled sample. Falls back to 1 when the median is zero.
pub fn median_bandwidth(src: &Tensor, tgt: &Tensor) -> f64 {
    let rows: Vec<&[f64]> = (0..src.rows())
        .map(|i| src.row(i))
        .chain((0..tgt.rows()).map(|i| tgt.row(i)))
        .collect();
    let mut d: Vec<f64> = Vec::with_capacity(rows.len() * rows.len() / 2);
    for i in 0..rows.len() {
        for j in i + 1..rows.len() {
            d.push(sq_dist(rows[i], rows[j]));
        }
    }
    if d.is_empty() {
        return 1.0;
    }
    d.sort_by(f64::total_cmp);
    let mid = d.len() / 2;
    let median = if d.len().is_multiple_of(2) { 0.5 * (d[mid - 1] + d[mid]) } else { d[mid] };
    if median > 0.0 {
        (median / 2.0).sqrt()
    } else {
        1.0
    }
}

/// MMD estimate between two samples and its gradient with respect to both.
///
/// The RBF estimate is the unbiased U-statistic (diagonal terms excluded
/// from the within-sample sums). Bandwidth is treated as a constant.
pub fn mmd_pair_grad(src: &Tensor, tgt: &Tensor, kernel: Kernel) -> Result<(f64, Tensor, Tensor)> {
    if src.cols() != tgt.cols() {
        return Err(Error::structural("MMD samples differ in dimension"));
    }
    let (n, m) = (src.rows(), tgt.rows());
    match kernel {
        Kernel::Linear => {
            if n < 1 || m < 1 {
                return Err(Error::contract("linear MMD needs at least one sample per side"));
            }
            let mut delta = src.mean_rows();
            delta.add_scaled(&tgt.mean_rows(), -1.0);
            let value = delta.squared_norm();
            let mut ds = Tensor::zeros(src.dims());
            let mut dt = Tensor::zeros(tgt.dims());
            for i in 0..n {
                for (g, d) in ds.row_mut(i).iter_mut().zip(delta.data()) {
                    *g = 2.0 * d / n as f64;
                }
            }
            for i in 0..m {
                for (g, d) in dt.row_mut(i).iter_mut().zip(delta.data()) {
                    *g = -2.0 * d / m as f64;
                }
            }
            Ok((value, ds, dt))
        }
        Kernel::Rbf { bandwidth } => {
            if n < 2 || m < 2 {
                return Err(Error::contract("unbiased RBF MMD needs at least 2 samples per side"));
            }
            let sigma = match bandwidth {
                Some(b) if b > 0.0 && b.is_finite() => b,
                Some(b) => return Err(Error::contract(format!("RBF bandwidth must be positive, got {b}"))),
                None => median_bandwidth(src, tgt),
            };
            let inv2s2 = 1.0 / (2.0 * sigma * sigma);
            let mut ds = Tensor::zeros(src.dims());
            let mut dt = Tensor::zeros(tgt.dims());
            let d = src.cols();
            // weight w on k(a, b) contributes −2·inv2s2·w·k·(a − b) to ∂/∂a
            let pair_term = |a: &[f64], b: &[f64], w: f64, ga: &mut [f64], gb: Option<&mut [f64]>| -> f64 {
                let k = (-sq_dist(a, b) * inv2s2).exp();
                let c = -2.0 * inv2s2 * w * k;
                let mut gb = gb;
                for j in 0..d {
                    let g = c * (a[j] - b[j]);
                    ga[j] += g;
                    if let Some(gb) = gb.as_deref_mut() {
                        gb[j] -= g;
                    }
                }
                w * k
            };
            let w_ss = 1.0 / (n * (n - 1)) as f64;
            let w_tt = 1.0 / (m * (m - 1)) as f64;
            let w_st = -2.0 / (n * m) as f64;
            let mut value = 0.0;
            // within-source, each unordered pair counted twice
            for i in 0..n {
                for j in i + 1..n {
                    let (gi, gj) = two_rows(&mut ds, i, j);
                    value += pair_term(src.row(i), src.row(j), 2.0 * w_ss, gi, Some(gj));
                }
            }
            for i in 0..m {
                for j in i + 1..m {
                    let (gi, gj) = two_rows(&mut dt, i, j);
                    value += pair_term(tgt.row(i), tgt.row(j), 2.0 * w_tt, gi, Some(gj));
                }
            }
            for i in 0..n {
                for j in 0..m {
                    value += pair_term(src.row(i), tgt.row(j), w_st, ds.row_mut(i), Some(dt.row_mut(j)));
                }
            }
            Ok((value, ds, dt))
        }
    }
}

fn two_rows(t: &mut Tensor, i: usize, j: usize) -> (&mut [f64], &mut [f64]) {
    debug_assert!(i < j);
    let c = t.cols();
    let (lo, hi) = t.data_mut().split_at_mut(j * c);
    (&mut lo[i * c..(i + 1) * c], &mut hi[..c])
}

pub fn mmd_pair(src: &Tensor, tgt: &Tensor, kernel: Kernel) -> Result<f64> {
    mmd_pair_grad(src, tgt, kernel).map(|(v, _, _)| v)
}

/// Sum of per-domain MMD values over (source, target) pairs.
pub fn mmd_loss(pairs: &[(Tensor, Tensor)], kernel: Kernel) -> Result<(f64, Vec<(Tensor, Tensor)>)> {
    let mut total = 0.0;
    let mut grads = Vec::with_capacity(pairs.len());
    for (s, t) in pairs {
        let (v, ds, dt) = mmd_pair_grad(s, t, kernel)?;
        total += v;
        grads.push((ds, dt));
    }
    Ok((total, grads))
}

/// Mean softmax cross-entropy and its gradient `(softmax − onehot) / n`.
pub fn cross_entropy_grad(logits: &Tensor, labels: &[usize]) -> Result<(f64, Tensor)> {
    let (n, c) = (logits.rows(), logits.cols());
    if labels.len() != n {
        return Err(Error::structural(format!("{n} logit rows but {} labels", labels.len())));
    }
    if let Some(&l) = labels.iter().find(|&&l| l >= c) {
        return Err(Error::contract(format!("label {l} out of range for {c} classes")));
    }
    let mut grad = Tensor::zeros(logits.dims());
    let mut loss = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        let row = logits.row(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|v| (v - max).exp()).sum();
        let log_z = max + sum.ln();
        loss += log_z - row[y];
        let g = grad.row_mut(i);
        for (gj, &v) in g.iter_mut().zip(row) {
            *gj = (v - log_z).exp() / n as f64;
        }
        g[y] -= 1.0 / n as f64;
    }
    Ok((loss / n as f64, grad))
}

pub fn cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<f64> {
    cross_entropy_grad(logits, labels).map(|(v, _)| v)
}

struct Pooled {
    matrix: Tensor,
    caches: Vec<Phi0Cache>,
}

fn pool_batch(features: &[Tensor], params: &ParamMap, cfg: &ModelConfig) -> Result<Pooled> {
    let results = map_ordered(features, |x| phi0_forward(x, params, cfg));
    let mut rows = Vec::with_capacity(features.len());
    let mut caches = Vec::with_capacity(features.len());
    for r in results {
        let (row, cache) = r?;
        rows.push(row);
        caches.push(cache);
    }
    let matrix = Tensor::stack_rows(rows.iter().map(Vec::as_slice))?;
    Ok(Pooled { matrix, caches })
}

/// Backward through Φ0 for every row of `d_pooled`; per-utterance gradients
/// are computed independently and summed in batch order.
fn unpool_batch(
    pooled: &Pooled,
    d_pooled: &Tensor,
    params: &ParamMap,
    cfg: &ModelConfig,
    trainable: Trainable,
    grads: &mut ParamMap,
) {
    if !trainable.phi0() {
        return;
    }
    let idx: Vec<usize> = (0..pooled.caches.len()).collect();
    let per_utt = map_ordered(&idx, |&i| {
        let mut g = ParamMap::new();
        phi0_backward(&pooled.caches[i], d_pooled.row(i), params, cfg, trainable, &mut g);
        g
    });
    for g in &per_utt {
        accumulate(grads, g);
    }
}

/// Σ over target domains of the domain classifier's cross-entropy on that
/// domain's samples. Source samples do not contribute.
pub fn cls_loss(batch: &DomainBatch, params: &ParamMap, cfg: &ModelConfig) -> Result<f64> {
    let mut total = 0.0;
    for (i, t) in batch.targets.iter().enumerate() {
        let h = i + 1;
        let pooled = pool_batch(&t.features, params, cfg)?;
        let emb = subnet_forward(&pooled.matrix, params, h, SubnetStage::Full)?;
        total += cross_entropy(&classifier_forward(emb.output(), params, h)?, &t.labels)?;
    }
    Ok(total)
}

/// The scheduled adaptation objective `μ(p)·(mmd + dis) + cls` and its
/// gradient with respect to every trainable parameter.
///
/// Clean source samples pass through Φ0 once and then through every
/// domain's subnet: their Φ1 outputs feed the discrepancy loss and their Φ2
/// outputs the source side of each domain's MMD. Target samples run through
/// their own domain's subnet and classifier.
pub fn adaptation_objective(
    batch: &DomainBatch,
    params: &ParamMap,
    cfg: &ModelConfig,
    mu: f64,
    kernel: Kernel,
    trainable: Trainable,
) -> Result<(LossBreakdown, ParamMap)> {
    let n_domains = batch.targets.len();
    if n_domains < 2 {
        return Err(Error::contract("adaptation needs at least 2 target domains"));
    }
    let src = pool_batch(&batch.source.features, params, cfg)?;
    let tgts = batch
        .targets
        .iter()
        .map(|t| pool_batch(&t.features, params, cfg))
        .collect::<Result<Vec<_>>>()?;

    let src_sub = (1..=n_domains)
        .map(|h| subnet_forward(&src.matrix, params, h, SubnetStage::Full))
        .collect::<Result<Vec<_>>>()?;
    let tgt_sub = (1..=n_domains)
        .map(|h| subnet_forward(&tgts[h - 1].matrix, params, h, SubnetStage::Full))
        .collect::<Result<Vec<_>>>()?;

    let phi1: Vec<Tensor> = src_sub.iter().map(|c| c.phi1().clone()).collect();
    let (dis, d_phi1) = discrepancy_loss(&phi1)?;

    let mut mmd = 0.0;
    let mut d_mmd = Vec::with_capacity(n_domains);
    for h in 0..n_domains {
        let (v, ds, dt) = mmd_pair_grad(src_sub[h].output(), tgt_sub[h].output(), kernel)?;
        mmd += v;
        d_mmd.push((ds, dt));
    }

    let mut cls = 0.0;
    let mut d_logits = Vec::with_capacity(n_domains);
    for h in 0..n_domains {
        let logits = classifier_forward(tgt_sub[h].output(), params, h + 1)?;
        let (v, g) = cross_entropy_grad(&logits, &batch.targets[h].labels)?;
        cls += v;
        d_logits.push(g);
    }

    let losses = LossBreakdown::compose(dis, mmd, cls, mu);
    if !losses.total.is_finite() {
        return Err(Error::numeric(format!("adaptation loss is non-finite: {losses:?}")));
    }

    let mut grads = ParamMap::new();
    let mut d_src = Tensor::zeros(src.matrix.dims());
    for h in 0..n_domains {
        let (mut ds, mut dt) = d_mmd[h].clone();
        ds.scale(mu);
        dt.scale(mu);
        let mut dp = d_phi1[h].clone();
        dp.scale(mu);

        let d_emb = classifier_backward(tgt_sub[h].output(), &d_logits[h], params, h + 1, &mut grads);
        dt.add_scaled(&d_emb, 1.0);
        let d_tgt = subnet_backward(&tgt_sub[h], None, Some(&dt), params, &mut grads);
        unpool_batch(&tgts[h], &d_tgt, params, cfg, trainable, &mut grads);

        let d = subnet_backward(&src_sub[h], Some(&dp), Some(&ds), params, &mut grads);
        d_src.add_scaled(&d, 1.0);
    }
    unpool_batch(&src, &d_src, params, cfg, trainable, &mut grads);
    Ok((losses, grads))
}

/// [`adaptation_objective`] with `μ` taken from the progressive schedule.
pub fn total_loss(
    batch: &DomainBatch,
    params: &ParamMap,
    cfg: &ModelConfig,
    p: f64,
    theta: f64,
    kernel: Kernel,
) -> Result<(LossBreakdown, ParamMap)> {
    let mu = progressive_mu(p, theta)?;
    adaptation_objective(batch, params, cfg, mu, kernel, Trainable::all())
}

/// Cross-entropy of the pooled-representation head, used by pretraining and
/// fine-tuning.
pub fn head_objective(
    batch: &LabeledBatch,
    params: &ParamMap,
    cfg: &ModelConfig,
    trainable: Trainable,
) -> Result<(f64, ParamMap)> {
    let pooled = pool_batch(&batch.features, params, cfg)?;
    let logits = head_forward(&pooled.matrix, params)?;
    let (loss, d_logits) = cross_entropy_grad(&logits, &batch.labels)?;
    if !loss.is_finite() {
        return Err(Error::numeric(format!("classification loss is non-finite ({loss})")));
    }
    let mut grads = ParamMap::new();
    let d_pooled = head_backward(&pooled.matrix, &d_logits, params, trainable.head, &mut grads);
    unpool_batch(&pooled, &d_pooled, params, cfg, trainable, &mut grads);
    Ok((loss, grads))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows(r: &[&[f64]]) -> Tensor {
        Tensor::from_rows(&r.iter().map(|x| x.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn discrepancy_hand_values() {
        let a = rows(&[&[1.0, 2.0]]);
        let b = rows(&[&[0.0, 4.0]]);
        assert_eq!(discrepancy_loss(&[a.clone(), b]).unwrap().0, 1.5);
        assert_eq!(discrepancy_loss(&[a.clone(), a.clone(), a.clone()]).unwrap().0, 0.0);
        assert!(matches!(discrepancy_loss(&[a]), Err(Error::Contract(_))));
    }

    #[test]
    fn linear_mmd_hand_value() {
        let s = rows(&[&[0.0, 0.0], &[2.0, 2.0]]);
        let t = rows(&[&[1.0, 0.0], &[3.0, 2.0]]);
        assert_eq!(mmd_pair(&s, &t, Kernel::Linear).unwrap(), 1.0);
        assert_eq!(mmd_pair(&s, &s, Kernel::Linear).unwrap(), 0.0);
    }

    #[test]
    fn rbf_rejects_bad_bandwidth_and_small_sets() {
        let s = rows(&[&[0.0], &[1.0]]);
        let one = rows(&[&[0.0]]);
        assert!(mmd_pair(&s, &s, Kernel::Rbf { bandwidth: Some(0.0) }).is_err());
        assert!(mmd_pair(&s, &one, Kernel::Rbf { bandwidth: Some(1.0) }).is_err());
        assert!(mmd_pair(&s, &one, Kernel::Linear).is_ok());
    }

    #[test]
    fn cross_entropy_values() {
        let uniform = Tensor::zeros(&[3, 4]);
        let v = cross_entropy(&uniform, &[0, 1, 3]).unwrap();
        assert!((v - 4f64.ln()).abs() < 1e-15);
        let confident = rows(&[&[20.0, 0.0, 0.0]]);
        assert!(cross_entropy(&confident, &[0]).unwrap() < 1e-8);
        assert!(matches!(cross_entropy(&uniform, &[4, 0, 0]), Err(Error::Contract(_))));
    }

    #[test]
    fn breakdown_composition() {
        let b = LossBreakdown::compose(0.5, 0.25, 2.0, 0.5);
        assert_eq!(b.total, 2.375);
        let z = LossBreakdown::compose(3.0, 4.0, 2.0, 0.0);
        assert_eq!(z.total, 2.0);
    }
}
