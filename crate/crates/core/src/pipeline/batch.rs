use rand::Rng;

use crate::corpus::{Corpus, Split};
use crate::error::{Error, Result};
use crate::losses::{DomainBatch, LabeledBatch};
use crate::numkit::Tensor;

/// Exactly `crop` frames of `x` starting at a random offset; utterances
/// shorter than `crop` are padded by repeating their last frame.
pub fn crop_frames<R: Rng>(x: &Tensor, crop: usize, rng: &mut R) -> Tensor {
    let t = x.rows();
    if t >= crop {
        let start = rng.gen_range(0..=t - crop);
        let rows = (start..start + crop).map(|i| x.row(i));
        return Tensor::stack_rows(rows).expect("non-empty crop");
    }
    let rows = (0..crop).map(|i| x.row(i.min(t - 1)));
    Tensor::stack_rows(rows).expect("non-empty crop")
}

/// `n` utterances drawn uniformly with replacement from `pool` (record
/// indices into `corpus`), each randomly cropped.
pub fn sample_labeled<R: Rng>(corpus: &Corpus, pool: &[usize], n: usize, crop: usize, rng: &mut R) -> Result<LabeledBatch> {
    if pool.is_empty() {
        return Err(Error::contract("cannot sample from an empty pool"));
    }
    let mut batch = LabeledBatch::default();
    for _ in 0..n {
        let i = pool[rng.gen_range(0..pool.len())];
        batch.features.push(crop_frames(&corpus.features[i], crop, rng));
        batch.labels.push(corpus.manifest.records[i].speaker);
    }
    Ok(batch)
}

/// Train-split record indices of each domain, clean first.
pub fn domain_pools(corpus: &Corpus) -> Result<Vec<Vec<usize>>> {
    let pools: Vec<Vec<usize>> = (0..corpus.manifest.num_domains())
        .map(|d| corpus.indices(d, Split::Train))
        .collect();
    if let Some(d) = pools.iter().position(Vec::is_empty) {
        return Err(Error::contract(format!(
            "domain {} has no training utterances",
            corpus.manifest.domain_names[d]
        )));
    }
    Ok(pools)
}

/// One adaptation step's data: `n_s` clean samples and `n_t` samples from
/// each target domain, in domain order.
pub fn sample_batches<R: Rng>(
    corpus: &Corpus,
    pools: &[Vec<usize>],
    n_s: usize,
    n_t: usize,
    crop: usize,
    rng: &mut R,
) -> Result<DomainBatch> {
    let (source, targets) = pools
        .split_first()
        .ok_or_else(|| Error::contract("corpus has no domains"))?;
    Ok(DomainBatch {
        source: sample_labeled(corpus, source, n_s, crop, rng)?,
        targets: targets
            .iter()
            .map(|p| sample_labeled(corpus, p, n_t, crop, rng))
            .collect::<Result<_>>()?,
    })
}
