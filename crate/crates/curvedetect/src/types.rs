//! Core value types carried through the detection pipeline.

use serde::{Deserialize, Serialize};

/// Origin label of a passage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Human,
    Machine,
}

/// Where a sample came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Machine,
    Human,
    PerturbationOf(String),
}

/// A passage under consideration. In text mode `text` is set; in simulation
/// mode `latent` holds the sample's coordinates and `text` may be absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextSample {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latent: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<Label>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_model: Option<String>,
    /// Links a human/machine pair that shares a prompt prefix.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pair_key: Option<String>,
}

impl TextSample {
    pub fn from_text(id: impl Into<String>, text: impl Into<String>) -> Self {
        TextSample {
            id: id.into(),
            text: Some(text.into()),
            latent: None,
            label: None,
            source_model: None,
            pair_key: None,
        }
    }

    pub fn from_latent(id: impl Into<String>, latent: Vec<f64>) -> Self {
        TextSample {
            id: id.into(),
            text: None,
            latent: Some(latent),
            label: None,
            source_model: None,
            pair_key: None,
        }
    }
}

/// Expands one master seed into independent per-task streams. Counter-based
/// so the schedule of parallel workers cannot perturb any stream.
pub fn derive_seed(master: u64, tag: u64, index: u64) -> u64 {
    // splitmix64 over the concatenated inputs
    let mut z = master
        .wrapping_mul(0x9e37_79b9_7f4a_7c15)
        .wrapping_add(tag.wrapping_mul(0xbf58_476d_1ce4_e5b9))
        .wrapping_add(index.wrapping_add(1).wrapping_mul(0x94d0_49bb_1331_11eb));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
