//! Synthetic multi-domain feature corpus: generation, domain transforms,
//! binary feature files, the manifest and trial lists.

mod domain;
mod features;
mod generate;
mod manifest;
mod trials;

use std::fs;
use std::path::Path;

pub use domain::{apply_domain_transform, DomainKind, DomainSpec, ResolvedDomain};
pub use features::{
    decode_features, encode_features, read_feature_shape, read_features, write_features, FEATURE_MAGIC,
    FEATURE_VERSION,
};
pub use generate::{default_domains, gen_corpus, render_corpus, utterance_stem, CorpusConfig};
pub use manifest::{split_counts, CorpusManifest, Split, UtteranceRecord, MANIFEST_FILE};
pub use trials::{make_trials, parse_trials, read_trials, trials_to_text, write_trials, TrialPair};

use crate::error::{Error, Result};
use crate::numkit::Tensor;
use crate::par::map_ordered;

/// A manifest together with every utterance's features, indexed like
/// `manifest.records`.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub manifest: CorpusManifest,
    pub features: Vec<Tensor>,
}

impl Corpus {
    pub fn load(dir: &Path) -> Result<Self> {
        let manifest = CorpusManifest::load(dir)?;
        let loaded = map_ordered(&manifest.records, |r| read_features(&dir.join(&r.relpath)));
        let features = loaded.into_iter().collect::<Result<Vec<_>>>()?;
        for (r, f) in manifest.records.iter().zip(&features) {
            if f.rows() != r.frames {
                return Err(Error::Malformed {
                    what: "corpus",
                    detail: format!("{} has {} frames, manifest says {}", r.relpath, f.rows(), r.frames),
                });
            }
        }
        let corpus = Corpus { manifest, features };
        corpus.input_dim()?;
        Ok(corpus)
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let items: Vec<(&UtteranceRecord, &Tensor)> = self.manifest.records.iter().zip(&self.features).collect();
        map_ordered(&items, |(r, f)| write_features(&dir.join(&r.relpath), f))
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        self.manifest.write(dir)
    }

    /// Feature width shared by every utterance.
    pub fn input_dim(&self) -> Result<usize> {
        let d = self
            .features
            .first()
            .map(Tensor::cols)
            .ok_or_else(|| Error::contract("corpus is empty"))?;
        if self.features.iter().any(|f| f.cols() != d) {
            return Err(Error::Malformed {
                what: "corpus",
                detail: "utterances differ in feature width".into(),
            });
        }
        Ok(d)
    }

    /// Record indices of one domain and split.
    pub fn indices(&self, domain: usize, split: Split) -> Vec<usize> {
        self.manifest.select(domain, split).map(|(i, _)| i).collect()
    }
}
