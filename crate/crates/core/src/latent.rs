//! The generator's 100-dimensional latent seed, built from the most
//! confident sentence-level sentiment decisions.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sentiment::SentenceSentiment;

pub const LATENT_DIM: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceRef {
    pub doc_id: String,
    pub sentence_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentSeed {
    pub values: Vec<f64>,
    /// Source sentence of each component; `None` for zero padding.
    pub provenance: Vec<Option<SentenceRef>>,
    pub standardized: bool,
    /// Number of trailing components that are padding.
    pub padded: usize,
}

/// Component value convention.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LatentMode {
    /// `label × confidence`, keeping polarity.
    #[default]
    Signed,
    /// The raw confidence of the winning class.
    Unsigned,
}

/// Takes the 100 most confident sentences, breaking confidence ties by
/// `(doc_id, sentence_index)`. Fewer than 100 inputs are zero-padded.
pub fn select_top_confidence(sentiments: &[SentenceSentiment], mode: LatentMode) -> Result<LatentSeed> {
    if sentiments.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut ranked: Vec<&SentenceSentiment> = sentiments.iter().collect();
    ranked.sort_by(|a, b| {
        b.confidence
            .total_cmp(&a.confidence)
            .then_with(|| a.doc_id.cmp(&b.doc_id))
            .then(a.sentence_index.cmp(&b.sentence_index))
    });
    ranked.truncate(LATENT_DIM);
    let mut values: Vec<f64> = ranked
        .iter()
        .map(|s| match mode {
            LatentMode::Signed => s.label.as_f64() * s.confidence,
            LatentMode::Unsigned => s.confidence,
        })
        .collect();
    let mut provenance: Vec<Option<SentenceRef>> = ranked
        .iter()
        .map(|s| {
            Some(SentenceRef {
                doc_id: s.doc_id.clone(),
                sentence_index: s.sentence_index,
            })
        })
        .collect();
    let padded = LATENT_DIM - values.len();
    if padded > 0 {
        log::warn!(
            "only {} sentences available; zero-padding {} latent components",
            values.len(),
            padded
        );
        values.resize(LATENT_DIM, 0.0);
        provenance.resize(LATENT_DIM, None);
    }
    Ok(LatentSeed {
        values,
        provenance,
        standardized: false,
        padded,
    })
}

/// Rescales to zero mean and unit population standard deviation.
pub fn standardize(seed: &LatentSeed) -> Result<LatentSeed> {
    let values = standardize_values(&seed.values)?;
    Ok(LatentSeed {
        values,
        standardized: true,
        ..seed.clone()
    })
}

pub fn standardize_values(values: &[f64]) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::DegenerateLatent);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = libm::sqrt(var);
    if !(std > 0.0) || !std.is_finite() {
        return Err(Error::DegenerateLatent);
    }
    Ok(values.iter().map(|v| (v - mean) / std).collect())
}
