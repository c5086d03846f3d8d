use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DomainKind {
    Clean,
    Channel,
    Farfield,
    Noisy,
}

/// A simulated recording condition.
///
/// Only the fields relevant to `kind` are used: `channel_gain` (or a gain
/// vector drawn with log-spread `gain_spread`) for channel, `attenuation` and
/// `smear_width` for far-field, `snr_db` for noisy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    pub name: String,
    pub kind: DomainKind,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub channel_gain: Vec<f64>,
    #[serde(default)]
    pub gain_spread: f64,
    #[serde(default = "one")]
    pub attenuation: f64,
    #[serde(default = "one_usize")]
    pub smear_width: usize,
    #[serde(default)]
    pub snr_db: f64,
}

fn one() -> f64 {
    1.0
}

fn one_usize() -> usize {
    1
}

impl DomainSpec {
    pub fn clean(name: &str) -> Self {
        DomainSpec {
            name: name.into(),
            kind: DomainKind::Clean,
            channel_gain: Vec::new(),
            gain_spread: 0.0,
            attenuation: 1.0,
            smear_width: 1,
            snr_db: 0.0,
        }
    }

    pub fn channel(name: &str, gain_spread: f64) -> Self {
        DomainSpec {
            kind: DomainKind::Channel,
            gain_spread,
            ..Self::clean(name)
        }
    }

    pub fn farfield(name: &str, attenuation: f64, smear_width: usize) -> Self {
        DomainSpec {
            kind: DomainKind::Farfield,
            attenuation,
            smear_width,
            ..Self::clean(name)
        }
    }

    pub fn noisy(name: &str, snr_db: f64) -> Self {
        DomainSpec {
            kind: DomainKind::Noisy,
            snr_db,
            ..Self::clean(name)
        }
    }

    pub fn validate(&self, input_dim: usize) -> Result<()> {
        let bad = |m: String| Err(Error::contract(format!("domain {}: {m}", self.name)));
        if self.name.is_empty() || self.name.contains(char::is_whitespace) || self.name.contains(',') {
            return bad("name must be non-empty without whitespace or commas".into());
        }
        match self.kind {
            DomainKind::Clean => Ok(()),
            DomainKind::Channel => {
                if !self.channel_gain.is_empty()
                    && (self.channel_gain.len() != input_dim
                        || self.channel_gain.iter().any(|g| !(*g > 0.0 && g.is_finite())))
                {
                    return bad(format!("channel_gain must hold {input_dim} positive values"));
                }
                if !(self.gain_spread >= 0.0 && self.gain_spread.is_finite()) {
                    return bad("gain_spread must be non-negative".into());
                }
                Ok(())
            }
            DomainKind::Farfield => {
                if !(self.attenuation > 0.0 && self.attenuation.is_finite()) || self.smear_width == 0 {
                    return bad("far-field needs positive attenuation and smear_width >= 1".into());
                }
                Ok(())
            }
            DomainKind::Noisy => {
                if !self.snr_db.is_finite() {
                    return bad("snr_db must be finite".into());
                }
                Ok(())
            }
        }
    }

    /// Per-dimension channel gains, drawing them from `rng` when the spec
    /// does not list them explicitly.
    pub fn resolve_gain<R: Rng>(&self, input_dim: usize, rng: &mut R) -> Vec<f64> {
        if !self.channel_gain.is_empty() {
            return self.channel_gain.clone();
        }
        (0..input_dim)
            .map(|_| {
                let z: f64 = rng.sample(StandardNormal);
                (self.gain_spread * z).exp()
            })
            .collect()
    }
}

/// A domain spec with its channel gain resolved to a concrete vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedDomain {
    pub spec: DomainSpec,
    pub gain: Vec<f64>,
}

/// Renders clean features into the condition described by `domain`.
///
/// * clean: identity;
/// * channel: elementwise per-dimension gain;
/// * far-field: global attenuation, then a centred moving average of
///   `smear_width` frames (window truncated at the edges);
/// * noisy: additive white Gaussian noise with power set so that
///   `10·log10(P_signal / P_noise) = snr_db`, `P` being the mean square.
pub fn apply_domain_transform<R: Rng>(features: &Tensor, domain: &ResolvedDomain, noise: &mut R) -> Result<Tensor> {
    features.check_finite("input features")?;
    let (t_len, d) = (features.rows(), features.cols());
    let spec = &domain.spec;
    match spec.kind {
        DomainKind::Clean => Ok(features.clone()),
        DomainKind::Channel => {
            if domain.gain.len() != d {
                return Err(Error::structural(format!(
                    "channel gain has {} entries for {d}-dim features",
                    domain.gain.len()
                )));
            }
            let mut out = features.clone();
            for t in 0..t_len {
                for (v, g) in out.row_mut(t).iter_mut().zip(&domain.gain) {
                    *v *= g;
                }
            }
            Ok(out)
        }
        DomainKind::Farfield => {
            let w = spec.smear_width;
            if w > t_len {
                return Err(Error::contract(format!(
                    "smear width {w} exceeds utterance length {t_len}"
                )));
            }
            let left = (w - 1) / 2;
            let mut out = Tensor::zeros(features.dims());
            for t in 0..t_len {
                let lo = t.saturating_sub(left);
                let hi = (t + w - left).min(t_len);
                let count = (hi - lo) as f64;
                let o = out.row_mut(t);
                for s in lo..hi {
                    for (acc, v) in o.iter_mut().zip(features.row(s)) {
                        *acc += v;
                    }
                }
                for v in o.iter_mut() {
                    *v *= spec.attenuation / count;
                }
            }
            Ok(out)
        }
        DomainKind::Noisy => {
            let power = features.squared_norm() / features.len() as f64;
            let std = (power / 10f64.powf(spec.snr_db / 10.0)).sqrt();
            let mut out = features.clone();
            for v in out.data_mut() {
                let z: f64 = noise.sample(StandardNormal);
                *v += std * z;
            }
            Ok(out)
        }
    }
}
