use crate::error::{Error, Result};
use crate::model::{phi0_forward, subnet_forward, Model, Stage, SubnetStage};
use crate::numkit::Tensor;

/// Un-normalized embedding of one utterance recorded in corpus `domain`.
///
/// Pretrained and fine-tuned models use the pooled representation. An
/// adapted model uses the subnet of the utterance's own domain; for the
/// clean domain (0), which has no subnet, it averages the outputs of all
/// target subnets.
pub fn embed_raw(x: &Tensor, model: &Model, domain: usize) -> Result<Vec<f64>> {
    let (pooled, _) = phi0_forward(x, &model.params, &model.config)?;
    if model.stage != Stage::Adapt {
        return Ok(pooled);
    }
    let n = model.num_domains();
    if domain > n {
        return Err(Error::UnknownDomain { domain, available: n });
    }
    let row = Tensor::from_vec(&[1, pooled.len()], pooled)?;
    let through = |h: usize| -> Result<Vec<f64>> {
        Ok(subnet_forward(&row, &model.params, h, SubnetStage::Full)?
            .output()
            .data()
            .to_vec())
    };
    if domain > 0 {
        return through(domain);
    }
    let mut mean = through(1)?;
    for h in 2..=n {
        for (m, v) in mean.iter_mut().zip(through(h)?) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    Ok(mean)
}

/// Scales `v` to unit length.
pub fn l2_normalize(mut v: Vec<f64>) -> Result<Vec<f64>> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !norm.is_finite() {
        return Err(Error::numeric("embedding has non-finite norm"));
    }
    if norm == 0.0 {
        return Err(Error::contract("cannot normalize a zero vector"));
    }
    for x in &mut v {
        *x /= norm;
    }
    Ok(v)
}

/// Length-normalized embedding, see [`embed_raw`].
pub fn embed_utterance(x: &Tensor, model: &Model, domain: usize) -> Result<Vec<f64>> {
    l2_normalize(embed_raw(x, model, domain)?)
}

pub fn cosine_score(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::structural("cosine of vectors with different lengths"));
    }
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::contract("cosine score of a zero vector"));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok(dot / (na * nb))
}

/// Speaker model from enrollment embeddings: their mean, length-normalized.
pub fn enroll_speaker(embeddings: &[Vec<f64>]) -> Result<Vec<f64>> {
    let first = embeddings
        .first()
        .ok_or_else(|| Error::contract("enrollment needs at least one embedding"))?;
    let mut mean = vec![0.0; first.len()];
    for e in embeddings {
        if e.len() != mean.len() {
            return Err(Error::structural("enrollment embeddings differ in length"));
        }
        for (m, v) in mean.iter_mut().zip(e) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= embeddings.len() as f64;
    }
    l2_normalize(mean)
}
