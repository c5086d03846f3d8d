use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::model::Fingerprint;

use super::features::read_feature_shape;

pub const MANIFEST_FILE: &str = "manifest.tsv";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Enroll,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Enroll => "enroll",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "enroll" => Ok(Split::Enroll),
            "test" => Ok(Split::Test),
            _ => Err(Error::Malformed {
                what: "manifest",
                detail: format!("unknown split {s:?}"),
            }),
        }
    }
}

/// `(train, enroll, test)` counts for `n` utterances at 7:1:2, with the
/// integer remainder going to train.
pub fn split_counts(n: usize) -> (usize, usize, usize) {
    let enroll = n / 10;
    let test = n * 2 / 10;
    (n - enroll - test, enroll, test)
}

/// One manifest line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UtteranceRecord {
    pub utt_id: String,
    /// Speaker label, `0..num_speakers` within this corpus.
    pub speaker: usize,
    /// 0 is the clean source domain; `1..` are targets.
    pub domain: usize,
    pub split: Split,
    pub relpath: String,
    pub frames: usize,
}

impl UtteranceRecord {
    /// Identifier shared by every rendering of the same recording.
    pub fn stem(&self) -> &str {
        self.utt_id.rsplit_once('-').map_or(&self.utt_id, |(s, _)| s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusManifest {
    pub seed: u64,
    pub fingerprint: Fingerprint,
    pub num_speakers: usize,
    pub domain_names: Vec<String>,
    pub records: Vec<UtteranceRecord>,
}

impl CorpusManifest {
    pub fn num_domains(&self) -> usize {
        self.domain_names.len()
    }

    pub fn domain_id(&self, name: &str) -> Option<usize> {
        self.domain_names.iter().position(|n| n == name)
    }

    /// Resolves a domain given by name or by numeric id.
    pub fn resolve_domain(&self, key: &str) -> Result<usize> {
        if let Some(id) = self.domain_id(key) {
            return Ok(id);
        }
        match key.parse::<usize>() {
            Ok(id) if id < self.num_domains() => Ok(id),
            _ => Err(Error::contract(format!(
                "domain {key:?} not in corpus (have {})",
                self.domain_names.join(", ")
            ))),
        }
    }

    pub fn select(&self, domain: usize, split: Split) -> impl Iterator<Item = (usize, &UtteranceRecord)> {
        self.records
            .iter()
            .enumerate()
            .filter(move |(_, r)| r.domain == domain && r.split == split)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!(
            "# xdsv-manifest seed={} speakers={} domains={} fingerprint={}\n",
            self.seed,
            self.num_speakers,
            self.domain_names.join(","),
            self.fingerprint
        );
        for r in &self.records {
            s.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\n",
                r.utt_id, r.speaker, r.domain, r.split, r.relpath, r.frames
            ));
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let malformed = |detail: String| Error::Malformed {
            what: "manifest",
            detail,
        };
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| malformed("empty manifest".into()))?;
        let fields = header
            .strip_prefix("# xdsv-manifest ")
            .ok_or_else(|| malformed("missing header line".into()))?;
        let mut seed = None;
        let mut speakers = None;
        let mut domains = None;
        let mut fingerprint = None;
        for kv in fields.split_whitespace() {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| malformed(format!("bad header field {kv:?}")))?;
            match k {
                "seed" => seed = v.parse().ok(),
                "speakers" => speakers = v.parse().ok(),
                "domains" => domains = Some(v.split(',').map(str::to_string).collect::<Vec<_>>()),
                "fingerprint" => fingerprint = Fingerprint::from_hex(v),
                _ => {}
            }
        }
        let (Some(seed), Some(num_speakers), Some(domain_names), Some(fingerprint)) =
            (seed, speakers, domains, fingerprint)
        else {
            return Err(malformed("header needs seed, speakers, domains and fingerprint".into()));
        };
        let mut records = Vec::new();
        for (i, line) in lines.enumerate() {
            if line.is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 6 {
                return Err(malformed(format!("line {}: expected 6 tab-separated fields", i + 2)));
            }
            let num = |s: &str| -> Result<usize> {
                s.parse()
                    .map_err(|_| malformed(format!("line {}: bad number {s:?}", i + 2)))
            };
            let r = UtteranceRecord {
                utt_id: cols[0].to_string(),
                speaker: num(cols[1])?,
                domain: num(cols[2])?,
                split: cols[3].parse()?,
                relpath: cols[4].to_string(),
                frames: num(cols[5])?,
            };
            if r.speaker >= num_speakers || r.domain >= domain_names.len() {
                return Err(malformed(format!("line {}: speaker or domain out of range", i + 2)));
            }
            records.push(r);
        }
        Ok(CorpusManifest {
            seed,
            fingerprint,
            num_speakers,
            domain_names,
            records,
        })
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join(MANIFEST_FILE);
        fs::write(&path, self.to_text()).map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Self::parse(&text)
    }

    /// Checks that every listed file exists and declares the listed frame
    /// count.
    pub fn verify_files(&self, dir: &Path) -> Result<()> {
        for r in &self.records {
            let (t, _) = read_feature_shape(&dir.join(&r.relpath))?;
            if t != r.frames {
                return Err(Error::Malformed {
                    what: "corpus",
                    detail: format!("{} has {t} frames, manifest says {}", r.relpath, r.frames),
                });
            }
        }
        Ok(())
    }
}
