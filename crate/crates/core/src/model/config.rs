use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const NUM_GROUPS: usize = 4;

/// Frame-context extractor: four dense layer groups, each splicing
/// `context[g]` frames on either side before its affine map.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtractorConfig {
    pub input_dim: usize,
    pub group_dims: [usize; NUM_GROUPS],
    pub context: [usize; NUM_GROUPS],
}

impl Default for ExtractorConfig {
    fn default() -> Self {
        ExtractorConfig {
            input_dim: 20,
            group_dims: [48, 48, 48, 32],
            context: [2, 1, 1, 0],
        }
    }
}

impl ExtractorConfig {
    pub fn output_dim(&self) -> usize {
        self.group_dims[NUM_GROUPS - 1]
    }

    /// Input width of group `g` (0-based) before context splicing.
    pub fn group_input_dim(&self, g: usize) -> usize {
        if g == 0 {
            self.input_dim
        } else {
            self.group_dims[g - 1]
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LdeConfig {
    pub num_components: usize,
}

impl Default for LdeConfig {
    fn default() -> Self {
        LdeConfig { num_components: 8 }
    }
}

/// Per-domain subnet widths: Φ1 is two layers, Φ2 is two layers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubnetConfig {
    pub phi1_dims: [usize; 2],
    pub phi2_dims: [usize; 2],
}

impl Default for SubnetConfig {
    fn default() -> Self {
        SubnetConfig {
            phi1_dims: [64, 64],
            phi2_dims: [32, 32],
        }
    }
}

impl SubnetConfig {
    /// Output widths of the four subnet layers in order.
    pub fn layer_dims(&self) -> [usize; 4] {
        [
            self.phi1_dims[0],
            self.phi1_dims[1],
            self.phi2_dims[0],
            self.phi2_dims[1],
        ]
    }

    pub fn embedding_dim(&self) -> usize {
        self.phi2_dims[1]
    }
}

/// Architecture hyperparameters. Data-dependent sizes (speaker count,
/// domain count) are read off the parameter shapes instead.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub extractor: ExtractorConfig,
    pub lde: LdeConfig,
    pub subnet: SubnetConfig,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let e = &self.extractor;
        if e.input_dim == 0 || e.group_dims.contains(&0) {
            return Err(Error::contract("extractor dims must be positive"));
        }
        if self.lde.num_components == 0 {
            return Err(Error::contract("LDE needs at least one component"));
        }
        if self.subnet.layer_dims().contains(&0) {
            return Err(Error::contract("subnet dims must be positive"));
        }
        Ok(())
    }

    /// Width of the pooled utterance representation (`K × D`).
    pub fn lde_output_dim(&self) -> usize {
        self.lde.num_components * self.extractor.output_dim()
    }

    /// Stable, line-oriented rendering used for fingerprinting.
    pub fn canonical_text(&self) -> String {
        let e = &self.extractor;
        let mut s = String::new();
        let join = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
        let _ = writeln!(s, "extractor.input_dim={}", e.input_dim);
        let _ = writeln!(s, "extractor.group_dims={}", join(&e.group_dims));
        let _ = writeln!(s, "extractor.context={}", join(&e.context));
        let _ = writeln!(s, "lde.num_components={}", self.lde.num_components);
        let _ = writeln!(s, "subnet.phi1_dims={}", join(&self.subnet.phi1_dims));
        let _ = writeln!(s, "subnet.phi2_dims={}", join(&self.subnet.phi2_dims));
        s
    }

    pub fn fingerprint(&self) -> Fingerprint {
        Fingerprint::of_text(&self.canonical_text())
    }
}

/// First 16 bytes of the SHA-256 of a canonical config text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Fingerprint(pub [u8; 16]);

impl Fingerprint {
    pub fn of_text(text: &str) -> Self {
        let digest = Sha256::digest(text.as_bytes());
        let mut out = [0u8; 16];
        out.copy_from_slice(&digest[..16]);
        Fingerprint(out)
    }

    pub fn to_hex(&self) -> String {
        self.0.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn from_hex(s: &str) -> Option<Self> {
        if s.len() != 32 {
            return None;
        }
        let mut out = [0u8; 16];
        for (i, b) in out.iter_mut().enumerate() {
            *b = u8::from_str_radix(s.get(2 * i..2 * i + 2)?, 16).ok()?;
        }
        Some(Fingerprint(out))
    }
}

impl std::fmt::Display for Fingerprint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.to_hex())
    }
}
