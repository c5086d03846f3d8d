use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

use super::manifest::{CorpusManifest, Split};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TrialPair {
    pub enroll_utt: String,
    pub test_utt: String,
    pub is_target: bool,
}

/// Every enrollment utterance of `domain` against every test utterance of
/// the same domain, sorted by `(enroll_utt, test_utt)`.
pub fn make_trials(manifest: &CorpusManifest, domain: usize) -> Result<Vec<TrialPair>> {
    if domain >= manifest.num_domains() {
        return Err(Error::contract(format!(
            "domain {domain} not in corpus ({} domains)",
            manifest.num_domains()
        )));
    }
    let enroll: Vec<_> = manifest.select(domain, Split::Enroll).map(|(_, r)| r).collect();
    let test: Vec<_> = manifest.select(domain, Split::Test).map(|(_, r)| r).collect();
    if enroll.is_empty() || test.is_empty() {
        return Err(Error::contract(format!(
            "domain {} has {} enrollment and {} test utterances; both must be non-empty",
            manifest.domain_names[domain],
            enroll.len(),
            test.len()
        )));
    }
    let mut trials: Vec<TrialPair> = enroll
        .iter()
        .flat_map(|e| {
            test.iter().map(move |t| TrialPair {
                enroll_utt: e.utt_id.clone(),
                test_utt: t.utt_id.clone(),
                is_target: e.speaker == t.speaker,
            })
        })
        .collect();
    trials.sort();
    Ok(trials)
}

pub fn trials_to_text(trials: &[TrialPair]) -> String {
    trials
        .iter()
        .map(|t| format!("{} {} {}\n", t.enroll_utt, t.test_utt, u8::from(t.is_target)))
        .collect()
}

pub fn parse_trials(text: &str) -> Result<Vec<TrialPair>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            let f: Vec<&str> = line.split(' ').collect();
            let label = match f.as_slice() {
                [_, _, "1"] => true,
                [_, _, "0"] => false,
                _ => {
                    return Err(Error::Malformed {
                        what: "trial list",
                        detail: format!("line {}: expected `enroll test 0|1`", i + 1),
                    })
                }
            };
            Ok(TrialPair {
                enroll_utt: f[0].to_string(),
                test_utt: f[1].to_string(),
                is_target: label,
            })
        })
        .collect()
}

pub fn write_trials(path: &Path, trials: &[TrialPair]) -> Result<()> {
    fs::write(path, trials_to_text(trials)).map_err(|e| Error::io(path, e))
}

pub fn read_trials(path: &Path) -> Result<Vec<TrialPair>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_trials(&text)
}
