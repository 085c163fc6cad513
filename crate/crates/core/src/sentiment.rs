//! Multinomial Naive Bayes over three polarity classes, and keyword-context
//! sentiment built on top of its word-level decisions.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{LabeledSeedCorpus, NewsDocument};

pub const DEFAULT_ALPHA: f64 = 1.0;
pub const DEFAULT_CONTEXT_WINDOW: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "i8", into = "i8")]
pub enum Polarity {
    Negative,
    Neutral,
    Positive,
}

impl Polarity {
    /// Storage order for per-class arrays.
    pub const ALL: [Polarity; 3] = [Polarity::Negative, Polarity::Neutral, Polarity::Positive];
    /// Preference order when class scores tie exactly.
    const TIE_ORDER: [Polarity; 3] = [Polarity::Neutral, Polarity::Positive, Polarity::Negative];

    pub fn value(self) -> i8 {
        match self {
            Polarity::Negative => -1,
            Polarity::Neutral => 0,
            Polarity::Positive => 1,
        }
    }

    pub fn index(self) -> usize {
        (self.value() + 1) as usize
    }

    pub fn as_f64(self) -> f64 {
        f64::from(self.value())
    }
}

impl TryFrom<i8> for Polarity {
    type Error = String;

    fn try_from(v: i8) -> core::result::Result<Self, String> {
        match v {
            -1 => Ok(Polarity::Negative),
            0 => Ok(Polarity::Neutral),
            1 => Ok(Polarity::Positive),
            other => Err(alloc::format!("label must be -1, 0 or 1, got {other}")),
        }
    }
}

impl From<Polarity> for i8 {
    fn from(p: Polarity) -> i8 {
        p.value()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Vocabulary {
    index: BTreeMap<String, usize>,
    tokens: Vec<String>,
}

impl Vocabulary {
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        let mut index = BTreeMap::new();
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::InvalidArgument(alloc::format!("duplicate vocabulary token {t:?}")));
            }
        }
        Ok(Self { index, tokens })
    }

    fn insert(&mut self, token: &str) -> usize {
        if let Some(&i) = self.index.get(token) {
            return i;
        }
        let i = self.tokens.len();
        self.index.insert(token.into(), i);
        self.tokens.push(token.into());
        i
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

/// Log priors and Laplace-smoothed log likelihoods, classes in
/// [`Polarity::ALL`] order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "StoredModel", into = "StoredModel")]
pub struct NaiveBayesModel {
    pub alpha: f64,
    pub log_prior: [f64; 3],
    log_likelihood: Vec<[f64; 3]>,
    vocabulary: Vocabulary,
}

/// On-disk layout: vocabulary and likelihood rows are parallel arrays.
#[derive(Serialize, Deserialize)]
struct StoredModel {
    alpha: f64,
    classes: [i8; 3],
    priors: [f64; 3],
    vocabulary: Vec<String>,
    likelihoods: Vec<[f64; 3]>,
}

impl From<NaiveBayesModel> for StoredModel {
    fn from(m: NaiveBayesModel) -> Self {
        StoredModel {
            alpha: m.alpha,
            classes: Polarity::ALL.map(Polarity::value),
            priors: m.log_prior,
            vocabulary: m.vocabulary.tokens,
            likelihoods: m.log_likelihood,
        }
    }
}

impl TryFrom<StoredModel> for NaiveBayesModel {
    type Error = Error;

    fn try_from(s: StoredModel) -> Result<Self> {
        if s.classes != Polarity::ALL.map(Polarity::value) {
            return Err(Error::InvalidArgument("classes must be [-1, 0, 1]".into()));
        }
        if s.vocabulary.len() != s.likelihoods.len() {
            return Err(Error::LengthMismatch {
                left: s.vocabulary.len(),
                right: s.likelihoods.len(),
            });
        }
        Ok(Self {
            alpha: s.alpha,
            log_prior: s.priors,
            log_likelihood: s.likelihoods,
            vocabulary: Vocabulary::from_tokens(s.vocabulary)?,
        })
    }
}

impl core::fmt::Display for Polarity {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "{}", self.value())
    }
}

/// Decision for one sentence: the argmax class and its normalized posterior.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Classification {
    pub label: Polarity,
    pub confidence: f64,
    pub posterior: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceSentiment {
    pub doc_id: String,
    pub sentence_index: usize,
    pub label: Polarity,
    pub confidence: f64,
}

/// `P(y) = count(y) / total`, `P(x|y) = (count(x, y) + α) / (count(·, y) + αV)`.
pub fn train_nb(corpus: &LabeledSeedCorpus, alpha: f64) -> Result<NaiveBayesModel> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::InvalidArgument("smoothing alpha must be positive".into()));
    }
    let entries = corpus.entries();
    if entries.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut vocabulary = Vocabulary::default();
    let mut class_docs = [0usize; 3];
    let mut counts: Vec<[f64; 3]> = Vec::new();
    for (tokens, label) in entries {
        let c = label.index();
        class_docs[c] += 1;
        for token in tokens {
            let i = vocabulary.insert(token);
            if i == counts.len() {
                counts.push([0.0; 3]);
            }
            counts[i][c] += 1.0;
        }
    }
    for class in Polarity::ALL {
        if class_docs[class.index()] == 0 {
            return Err(Error::MissingClass(class.value()));
        }
    }
    let total = entries.len() as f64;
    let log_prior = class_docs.map(|n| libm::log(n as f64 / total));
    let v = vocabulary.len() as f64;
    let mut class_tokens = [0.0; 3];
    for row in &counts {
        for c in 0..3 {
            class_tokens[c] += row[c];
        }
    }
    let log_likelihood = counts
        .iter()
        .map(|row| core::array::from_fn(|c| libm::log((row[c] + alpha) / (class_tokens[c] + alpha * v))))
        .collect();
    Ok(NaiveBayesModel {
        alpha,
        log_prior,
        log_likelihood,
        vocabulary,
    })
}

impl NaiveBayesModel {
    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocabulary
    }

    /// `log P(x | y)` for an in-vocabulary token.
    pub fn log_likelihood(&self, token: &str) -> Option<[f64; 3]> {
        self.vocabulary.get(token).map(|i| self.log_likelihood[i])
    }

    /// Unnormalized log joint `log P(y) + Σ log P(x_k | y)`; tokens outside
    /// the vocabulary contribute nothing.
    pub fn log_scores(&self, sentence: &[String]) -> [f64; 3] {
        let mut scores = self.log_prior;
        for ll in sentence.iter().filter_map(|t| self.log_likelihood(t)) {
            for c in 0..3 {
                scores[c] += ll[c];
            }
        }
        scores
    }

    pub fn classify(&self, sentence: &[String]) -> Classification {
        let scores = self.log_scores(sentence);
        let label = argmax_with_ties(&scores);
        let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let weights = scores.map(|s| libm::exp(s - max));
        let norm: f64 = weights.iter().sum();
        let posterior = weights.map(|w| w / norm);
        Classification {
            label,
            confidence: posterior[label.index()],
            posterior,
        }
    }

    /// Class a single word leans towards: `argmax_y P(y | w)`.
    pub fn word_polarity(&self, token: &str) -> Option<Polarity> {
        let ll = self.log_likelihood(token)?;
        let scores: [f64; 3] = core::array::from_fn(|c| self.log_prior[c] + ll[c]);
        Some(argmax_with_ties(&scores))
    }
}

/// Log scores closer than this (relative) count as tied, so that the
/// summation order of a sentence's tokens cannot flip a decision.
pub const TIE_TOLERANCE: f64 = 1e-12;

fn argmax_with_ties(scores: &[f64; 3]) -> Polarity {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let slack = TIE_TOLERANCE * (1.0 + max.abs());
    Polarity::TIE_ORDER
        .into_iter()
        .find(|c| scores[c.index()] >= max - slack)
        .unwrap_or(Polarity::Neutral)
}

/// One sentiment per sentence, in order.
pub fn analyze_document(model: &NaiveBayesModel, doc: &NewsDocument) -> Vec<SentenceSentiment> {
    doc.sentences
        .iter()
        .enumerate()
        .map(|(i, sentence)| {
            let c = model.classify(sentence);
            SentenceSentiment {
                doc_id: doc.doc_id.clone(),
                sentence_index: i,
                label: c.label,
                confidence: c.confidence,
            }
        })
        .collect()
}

/// Mean word-level polarity of the tokens within `window` positions of each
/// occurrence of `keyword`, staying inside the sentence.
pub fn context_sentiment(
    model: &NaiveBayesModel,
    docs: &[NewsDocument],
    keyword: &str,
    window: usize,
) -> Result<f64> {
    if window == 0 {
        return Err(Error::InvalidArgument("context window must be at least 1".into()));
    }
    let mut found = false;
    let (mut sum, mut count) = (0.0, 0usize);
    for sentence in docs.iter().flat_map(|d| &d.sentences) {
        for (pos, _) in sentence.iter().enumerate().filter(|(_, t)| *t == keyword) {
            found = true;
            let lo = pos.saturating_sub(window);
            let hi = (pos + window).min(sentence.len() - 1);
            for (j, token) in sentence.iter().enumerate().take(hi + 1).skip(lo) {
                if j == pos {
                    continue;
                }
                if let Some(p) = model.word_polarity(token) {
                    sum += p.as_f64();
                    count += 1;
                }
            }
        }
    }
    if !found {
        return Err(Error::KeywordNotFound);
    }
    if count == 0 {
        return Err(Error::NoScorableContext);
    }
    Ok(sum / count as f64)
}

/// Mean sentence label per calendar day across `docs`.
pub fn daily_mean_sentiment(model: &NaiveBayesModel, docs: &[NewsDocument]) -> BTreeMap<chrono::NaiveDate, f64> {
    let mut acc: BTreeMap<chrono::NaiveDate, (f64, usize)> = BTreeMap::new();
    for doc in docs {
        let entry = acc.entry(doc.date).or_insert((0.0, 0));
        for s in &doc.sentences {
            entry.0 += model.classify(s).label.as_f64();
            entry.1 += 1;
        }
    }
    acc.into_iter()
        .filter(|(_, (_, n))| *n > 0)
        .map(|(d, (s, n))| (d, s / n as f64))
        .collect()
}
