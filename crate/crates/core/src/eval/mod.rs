//! Embedding extraction, cosine trial scoring, EER and report tables.

mod eer;
mod embed;
mod report;

use std::collections::HashMap;

use sha2::{Digest, Sha256};

pub use eer::{eer, eer_from_points, operating_points, relative_decrease, Eer, OperatingPoint};
pub use embed::{cosine_score, embed_raw, embed_utterance, enroll_speaker, l2_normalize};
pub use report::{compare_reports, Comparison, ComparisonRow, DomainResult, EvalReport};

use crate::corpus::{make_trials, Corpus, Split, TrialPair};
use crate::error::{Error, Result};
use crate::model::{Checkpoint, Model};
use crate::par::map_ordered;

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRecord {
    pub trial: TrialPair,
    pub score: f64,
}

/// EER of scored trials.
pub fn compute_eer(records: &[ScoreRecord]) -> Result<Eer> {
    let (targets, nontargets): (Vec<&ScoreRecord>, Vec<&ScoreRecord>) =
        records.iter().partition(|r| r.trial.is_target);
    let t: Vec<f64> = targets.iter().map(|r| r.score).collect();
    let n: Vec<f64> = nontargets.iter().map(|r| r.score).collect();
    eer(&t, &n)
}

/// Short content hash identifying a checkpoint in reports.
pub fn checkpoint_id(ck: &Checkpoint) -> Result<String> {
    let digest = Sha256::digest(ck.to_bytes()?);
    Ok(digest[..8].iter().map(|b| format!("{b:02x}")).collect())
}

/// Scores every trial of `domain`: each enrollment utterance forms its own
/// speaker model, compared by cosine with the test utterance embedding.
pub fn score_domain(model: &Model, corpus: &Corpus, domain: usize) -> Result<Vec<ScoreRecord>> {
    let trials = make_trials(&corpus.manifest, domain)?;
    let wanted: Vec<usize> = corpus
        .indices(domain, Split::Enroll)
        .into_iter()
        .chain(corpus.indices(domain, Split::Test))
        .collect();
    let embedded = map_ordered(&wanted, |&i| embed_utterance(&corpus.features[i], model, domain));
    let mut by_id: HashMap<&str, Vec<f64>> = HashMap::with_capacity(wanted.len());
    for (&i, e) in wanted.iter().zip(embedded) {
        let e = e?;
        by_id.insert(corpus.manifest.records[i].utt_id.as_str(), e);
    }
    let mut enrolled: HashMap<&str, Vec<f64>> = HashMap::new();
    for t in &trials {
        if !enrolled.contains_key(t.enroll_utt.as_str()) {
            let model_vec = enroll_speaker(&[by_id[t.enroll_utt.as_str()].clone()])?;
            enrolled.insert(t.enroll_utt.as_str(), model_vec);
        }
    }
    trials
        .iter()
        .map(|t| {
            let score = cosine_score(&enrolled[t.enroll_utt.as_str()], &by_id[t.test_utt.as_str()])?;
            if !score.is_finite() {
                return Err(Error::numeric(format!("score of {} vs {} is not finite", t.enroll_utt, t.test_utt)));
            }
            Ok(ScoreRecord {
                trial: t.clone(),
                score,
            })
        })
        .collect()
}

pub fn evaluate_domain(model: &Model, corpus: &Corpus, domain: usize) -> Result<DomainResult> {
    let scores = score_domain(model, corpus, domain)?;
    let e = compute_eer(&scores)?;
    Ok(DomainResult {
        domain: corpus.manifest.domain_names[domain].clone(),
        eer: e.eer,
        trials: scores.len(),
        targets: scores.iter().filter(|s| s.trial.is_target).count(),
    })
}

/// Evaluates `model` on the listed corpus domains.
pub fn evaluate(model: &Model, corpus: &Corpus, domains: &[usize]) -> Result<EvalReport> {
    let results = domains
        .iter()
        .map(|&d| evaluate_domain(model, corpus, d))
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport {
        checkpoint: checkpoint_id(&model.to_checkpoint())?,
        stage: model.stage.name().to_string(),
        domains: results,
    })
}
