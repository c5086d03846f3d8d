use std::collections::BTreeSet;
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Fingerprint;
use crate::numkit::Tensor;
use crate::par::map_ordered;
use crate::rng::SeedTree;

use super::domain::{apply_domain_transform, DomainKind, DomainSpec, ResolvedDomain};
use super::manifest::{split_counts, CorpusManifest, Split, UtteranceRecord};
use super::Corpus;

/// Generative settings for the synthetic corpus.
///
/// A speaker is a latent vector `z ~ N(0, I)` of length `identity_dim`. Its
/// utterances are frames `b + m + o + phonetic_std · (s ⊙ a_t)` where `b`
/// is a long-term level shared by every speaker (drawn per dimension from
/// `N(base_level, base_spread²)`), `m = identity_scale · zP` is the speaker
/// mean, `s = exp(timbre_scale · zQ)`
/// a speaker-specific per-dimension spread, `o ~ N(0, session_std² I)` a
/// per-utterance offset and `a_t` unit-variance AR(1) noise with coefficient
/// `ar_rho`. `P` and `Q` are fixed random projections shared by all speakers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    pub num_speakers: usize,
    /// Offset added to speaker indices when drawing identities, so corpora
    /// generated from the same seed can hold disjoint speaker sets.
    pub first_speaker: usize,
    pub utts_per_speaker: usize,
    pub frames_per_utt: usize,
    pub input_dim: usize,
    pub identity_dim: usize,
    pub identity_scale: f64,
    pub base_level: f64,
    pub base_spread: f64,
    pub timbre_scale: f64,
    pub phonetic_std: f64,
    pub ar_rho: f64,
    pub session_std: f64,
    pub domains: Vec<DomainSpec>,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            num_speakers: 20,
            first_speaker: 0,
            utts_per_speaker: 10,
            frames_per_utt: 100,
            input_dim: 20,
            identity_dim: 16,
            identity_scale: 1.0,
            base_level: 2.0,
            base_spread: 0.5,
            timbre_scale: 0.3,
            phonetic_std: 1.0,
            ar_rho: 0.7,
            session_std: 0.3,
            domains: default_domains(),
        }
    }
}

/// Clean source plus channel-shifted, far-field and noisy targets.
pub fn default_domains() -> Vec<DomainSpec> {
    vec![
        DomainSpec::clean("clean"),
        DomainSpec::channel("lena-booth", 0.5),
        DomainSpec::farfield("far-field", 0.5, 5),
        DomainSpec::noisy("noisy", 5.0),
    ]
}

impl CorpusConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_speakers < 2 {
            return Err(Error::contract(format!(
                "corpus needs at least 2 speakers, got {}",
                self.num_speakers
            )));
        }
        if self.utts_per_speaker == 0 || self.frames_per_utt == 0 || self.input_dim == 0 || self.identity_dim == 0 {
            return Err(Error::contract(
                "utts_per_speaker, frames_per_utt, input_dim and identity_dim must be positive",
            ));
        }
        let finite_nonneg = [
            ("identity_scale", self.identity_scale),
            ("base_spread", self.base_spread),
            ("timbre_scale", self.timbre_scale),
            ("phonetic_std", self.phonetic_std),
            ("session_std", self.session_std),
        ];
        for (name, v) in finite_nonneg {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::contract(format!("{name} must be finite and non-negative, got {v}")));
            }
        }
        if !self.base_level.is_finite() {
            return Err(Error::contract("base_level must be finite"));
        }
        if !(self.ar_rho > -1.0 && self.ar_rho < 1.0) {
            return Err(Error::contract(format!("ar_rho must lie in (-1, 1), got {}", self.ar_rho)));
        }
        match self.domains.first() {
            Some(d) if d.kind == DomainKind::Clean => {}
            _ => return Err(Error::contract("the first domain must be of kind clean")),
        }
        let mut names = BTreeSet::new();
        for d in &self.domains {
            d.validate(self.input_dim)?;
            if !names.insert(d.name.as_str()) {
                return Err(Error::contract(format!("duplicate domain name {}", d.name)));
            }
            if d.kind == DomainKind::Farfield && d.smear_width > self.frames_per_utt {
                return Err(Error::contract(format!(
                    "domain {}: smear width {} exceeds {} frames",
                    d.name, d.smear_width, self.frames_per_utt
                )));
            }
        }
        Ok(())
    }

    /// Identifies the generated data: hash of the seed and every setting.
    pub fn fingerprint(&self, seed: u64) -> Fingerprint {
        let body = toml::to_string(self).unwrap_or_default();
        Fingerprint::of_text(&format!("seed={seed}\n{body}"))
    }
}

/// Stem shared by all renderings of one recording.
pub fn utterance_stem(global_speaker: usize, utt: usize) -> String {
    format!("spk{global_speaker:04}-u{utt:02}")
}

fn gaussian_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize, scale: f64) -> Tensor {
    let data = (0..rows * cols)
        .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
        .collect();
    Tensor::from_vec(&[rows, cols], data).expect("positive dims")
}

struct Speaker {
    mean: Vec<f64>,
    spread: Vec<f64>,
}

fn draw_speaker(cfg: &CorpusConfig, seeds: &SeedTree, p: &Tensor, q: &Tensor, global: usize) -> Speaker {
    let mut rng = seeds.get("speaker", global as u64);
    let z = gaussian_matrix(&mut rng, 1, cfg.identity_dim, 1.0);
    let mean = z.matmul(p).map(|v| cfg.identity_scale * v).into_data();
    let spread = z.matmul(q).map(|v| (cfg.timbre_scale * v).exp()).into_data();
    Speaker { mean, spread }
}

fn render_clean(cfg: &CorpusConfig, seeds: &SeedTree, base: &[f64], spk: &Speaker, stem: &str) -> Tensor {
    let mut rng = seeds.get(&format!("utt/{stem}"), 0);
    let d = cfg.input_dim;
    let offset: Vec<f64> = (0..d)
        .map(|_| cfg.session_std * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let innov = (1.0 - cfg.ar_rho * cfg.ar_rho).sqrt();
    let mut state: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
    let mut out = Tensor::zeros(&[cfg.frames_per_utt, d]);
    for t in 0..cfg.frames_per_utt {
        if t > 0 {
            for a in state.iter_mut() {
                *a = cfg.ar_rho * *a + innov * rng.sample::<f64, _>(StandardNormal);
            }
        }
        for (j, v) in out.row_mut(t).iter_mut().enumerate() {
            *v = base[j] + spk.mean[j] + offset[j] + cfg.phonetic_std * spk.spread[j] * state[j];
        }
    }
    out
}

/// Generates the corpus in memory. Features are rounded to the 32-bit grid
/// so they equal what a write/read round trip returns.
pub fn render_corpus(seed: u64, cfg: &CorpusConfig) -> Result<Corpus> {
    cfg.validate()?;
    let seeds = SeedTree::new(seed);
    let p = gaussian_matrix(
        &mut seeds.get("world/projection", 0),
        cfg.identity_dim,
        cfg.input_dim,
        1.0 / (cfg.identity_dim as f64).sqrt(),
    );
    let q = gaussian_matrix(
        &mut seeds.get("world/timbre", 0),
        cfg.identity_dim,
        cfg.input_dim,
        1.0 / (cfg.identity_dim as f64).sqrt(),
    );
    let mut base_rng = seeds.get("world/base", 0);
    let base: Vec<f64> = (0..cfg.input_dim)
        .map(|_| cfg.base_level + cfg.base_spread * base_rng.sample::<f64, _>(StandardNormal))
        .collect();
    let domains: Vec<ResolvedDomain> = cfg
        .domains
        .iter()
        .map(|spec| ResolvedDomain {
            gain: spec.resolve_gain(cfg.input_dim, &mut seeds.get(&format!("world/gain/{}", spec.name), 0)),
            spec: spec.clone(),
        })
        .collect();

    let speakers: Vec<usize> = (0..cfg.num_speakers).collect();
    let identities = map_ordered(&speakers, |&s| draw_speaker(cfg, &seeds, &p, &q, cfg.first_speaker + s));

    let jobs: Vec<(usize, usize)> = speakers
        .iter()
        .flat_map(|&s| (0..cfg.utts_per_speaker).map(move |u| (s, u)))
        .collect();
    // one job renders a recording in every domain
    let rendered = map_ordered(&jobs, |&(s, u)| -> Result<Vec<Tensor>> {
        let stem = utterance_stem(cfg.first_speaker + s, u);
        let clean = render_clean(cfg, &seeds, &base, &identities[s], &stem);
        domains
            .iter()
            .map(|dom| {
                let mut noise = seeds.get(&format!("render/{}/{stem}", dom.spec.name), 0);
                let mut x = apply_domain_transform(&clean, dom, &mut noise)?;
                x.quantize_f32();
                x.check_finite(&format!("utterance {stem} in {}", dom.spec.name))?;
                Ok(x)
            })
            .collect()
    });
    let rendered = rendered.into_iter().collect::<Result<Vec<_>>>()?;

    let (n_train, n_enroll, _) = split_counts(cfg.utts_per_speaker);
    let mut records = Vec::with_capacity(jobs.len() * domains.len());
    let mut features = Vec::with_capacity(records.capacity());
    for (d, dom) in domains.iter().enumerate() {
        for (j, &(s, u)) in jobs.iter().enumerate() {
            let stem = utterance_stem(cfg.first_speaker + s, u);
            let split = if u < n_train {
                Split::Train
            } else if u < n_train + n_enroll {
                Split::Enroll
            } else {
                Split::Test
            };
            records.push(UtteranceRecord {
                utt_id: format!("{stem}-d{d}"),
                speaker: s,
                domain: d,
                split,
                relpath: format!("{}/{stem}.xdaf", dom.spec.name),
                frames: cfg.frames_per_utt,
            });
            features.push(rendered[j][d].clone());
        }
    }
    let manifest = CorpusManifest {
        seed,
        fingerprint: cfg.fingerprint(seed),
        num_speakers: cfg.num_speakers,
        domain_names: cfg.domains.iter().map(|d| d.name.clone()).collect(),
        records,
    };
    Ok(Corpus { manifest, features })
}

/// Generates the corpus and writes feature files plus the manifest under
/// `out`.
pub fn gen_corpus(seed: u64, cfg: &CorpusConfig, out: &Path) -> Result<CorpusManifest> {
    let corpus = render_corpus(seed, cfg)?;
    corpus.write(out)?;
    Ok(corpus.manifest)
}
