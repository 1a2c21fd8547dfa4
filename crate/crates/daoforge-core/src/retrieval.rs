//! Sample database, utterance normalization, label assignment, pluggable
//! embeddings, and label-centric retrieval.
//!
//! Retrieval ranks label-overlapping samples by their marginal contribution
//! to the accrued label set, breaking ties toward the smallest embedding
//! distance, so samples with duplicate or subset labels sink even when they
//! sit close to the query in the vector space.

use std::collections::BTreeSet;
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pipeline::extract::{match_actions, EntityKind, LabeledUtterance};
use crate::registry::Registry;

/// Normalized `kind:value` tags with set semantics.
pub type LabelSet = BTreeSet<String>;

/// One retrieval unit: an utterance, its labels, and the program it maps to.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub utterance: String,
    pub normalized: String,
    pub labels: LabelSet,
    pub program: String,
    pub annotations: Vec<String>,
    /// Unit L2 norm, provider-fixed dimension.
    pub embedding: Vec<f32>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct SampleRecord {
    id: String,
    utterance: String,
    labels: Vec<String>,
    program: String,
    #[serde(default)]
    annotations: Vec<String>,
    #[serde(default)]
    embedding: Option<Vec<f32>>,
}

/// Normalization dictionary: verb synonyms to canonical verbs and token
/// aliases to contract symbols. Keys may be multi-word phrases.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Lexicon {
    #[serde(default)]
    pub verbs: IndexMap<String, String>,
    #[serde(default)]
    pub tokens: IndexMap<String, String>,
}

impl Lexicon {
    pub fn load(path: &Path) -> Result<Lexicon, DbError> {
        let text = std::fs::read_to_string(path)
            .map_err(|err| DbError::Io(path.display().to_string(), err.to_string()))?;
        let lexicon: Lexicon =
            serde_json::from_str(&text).map_err(|err| DbError::Json(err.to_string()))?;
        Ok(lexicon)
    }

    /// Replacement phrases sorted longest-first; token aliases win over verb
    /// synonyms at equal length. Every replacement also maps its own folded
    /// form to itself, which makes normalization idempotent.
    fn phrase_rules(&self) -> Vec<(Vec<String>, String)> {
        let mut rules: Vec<(Vec<String>, String)> = Vec::new();
        let mut add = |key: &str, replacement: &str| {
            let words: Vec<String> = key.split_whitespace().map(str::to_lowercase).collect();
            if words.is_empty() {
                return;
            }
            if !rules.iter().any(|(existing, _)| *existing == words) {
                rules.push((words, replacement.to_string()));
            }
        };
        for (key, replacement) in &self.tokens {
            add(key, replacement);
        }
        for (key, replacement) in &self.verbs {
            add(key, replacement);
        }
        for replacement in self.tokens.values().chain(self.verbs.values()) {
            add(replacement, replacement);
        }
        rules.sort_by_key(|(words, _)| std::cmp::Reverse(words.len()));
        rules
    }
}

/// Case-folds an utterance and replaces lexicon phrases: verb synonyms
/// collapse to their canonical verb, token aliases to contract symbols.
/// Idempotent: normalizing twice changes nothing.
pub fn normalize(utterance: &str, lexicon: &Lexicon) -> String {
    let rules = lexicon.phrase_rules();
    let words: Vec<&str> = utterance.split_whitespace().collect();
    let stripped: Vec<String> =
        words.iter().map(|w| strip_punctuation(w).to_lowercase()).collect();
    let mut out: Vec<String> = Vec::with_capacity(words.len());
    let mut i = 0;
    while i < words.len() {
        if stripped[i].is_empty() {
            i += 1;
            continue;
        }
        let mut matched = None;
        for (phrase, replacement) in &rules {
            if i + phrase.len() <= words.len()
                && (0..phrase.len()).all(|j| stripped[i + j] == phrase[j])
            {
                matched = Some((phrase.len(), replacement.clone()));
                break;
            }
        }
        match matched {
            Some((len, replacement)) => {
                out.push(replacement);
                i += len;
            }
            None => {
                out.push(stripped[i].clone());
                i += 1;
            }
        }
    }
    out.join(" ")
}

fn strip_punctuation(word: &str) -> &str {
    word.trim_matches(|c: char| !c.is_ascii_alphanumeric())
}

/// Derives the label set of a labeled utterance: intent, matched function
/// and protocol, one `param:` label per bound role, and network names.
pub fn assign_labels(
    normalized: &str,
    relations: &LabeledUtterance,
    registry: &Registry,
) -> LabelSet {
    let _ = normalized; // labels derive from the relation structure
    let mut labels = LabelSet::new();
    if let Some(intent) = &relations.intent {
        labels.insert(format!("intent:{}", intent.to_lowercase()));
    }
    for entity in &relations.entities {
        match entity.kind {
            EntityKind::Network => {
                labels.insert(format!("network:{}", entity.canonical.to_lowercase()));
            }
            EntityKind::Protocol => {
                labels.insert(format!("protocol:{}", entity.canonical.to_lowercase()));
            }
            _ => {}
        }
    }
    for role in &relations.roles {
        labels.insert(format!("param:{}", role.role.to_lowercase()));
    }
    for action in match_actions(relations, registry) {
        labels.insert(format!("fn:{}", action.action.to_lowercase()));
        labels.insert(format!("protocol:{}", action.protocol.to_lowercase()));
        if let Some(network) = registry.network(action.chain) {
            labels.insert(format!("network:{}", network.name.to_lowercase()));
        }
    }
    labels
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProviderError {
    #[error("embedding endpoint unreachable: {0}")]
    Http(String),
    #[error("embedding response malformed: {0}")]
    BadResponse(String),
    #[error("missing API key in {0}")]
    MissingKey(String),
}

/// A text-to-unit-vector encoder behind a fixed dimension.
pub trait EmbeddingProvider {
    fn name(&self) -> &str;
    fn dimension(&self) -> usize;
    fn embed(&self, text: &str) -> Result<Vec<f32>, ProviderError>;
}

/// Deterministic test embedding: hashed bag of words over a fixed
/// dimension, L2-normalized. The FNV-1a seed is frozen in configuration so
/// vectors are stable across runs and platforms.
#[derive(Debug, Clone)]
pub struct HashedEmbedding {
    pub dimension: usize,
    pub seed: u64,
}

impl Default for HashedEmbedding {
    fn default() -> Self {
        HashedEmbedding { dimension: 256, seed: 0 }
    }
}

const FNV_OFFSET: u64 = 0xcbf29ce484222325;
const FNV_PRIME: u64 = 0x100000001b3;

impl HashedEmbedding {
    fn bucket(&self, token: &str) -> usize {
        let mut hash = FNV_OFFSET ^ self.seed;
        for byte in token.as_bytes() {
            hash ^= u64::from(*byte);
            hash = hash.wrapping_mul(FNV_PRIME);
        }
        (hash % self.dimension as u64) as usize
    }
}

impl EmbeddingProvider for HashedEmbedding {
    fn name(&self) -> &str {
        "hashed-bag-of-words"
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, text: &str) -> Result<Vec<f32>, ProviderError> {
        let mut counts = vec![0f64; self.dimension];
        for token in text.split_whitespace() {
            counts[self.bucket(&token.to_lowercase())] += 1.0;
        }
        Ok(l2_normalize(&counts))
    }
}

fn l2_normalize(counts: &[f64]) -> Vec<f32> {
    let norm = counts.iter().map(|c| c * c).sum::<f64>().sqrt();
    if norm == 0.0 {
        return counts.iter().map(|_| 0f32).collect();
    }
    counts.iter().map(|c| (c / norm) as f32).collect()
}

/// Live encoder behind an embeddings HTTP endpoint.
pub struct LiveEmbedding {
    pub base_url: String,
    pub api_key: String,
    pub model: String,
    pub dimension: usize,
}

impl EmbeddingProvider for LiveEmbedding {
    fn name(&self) -> &str {
        "live"
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, text: &str) -> Result<Vec<f32>, ProviderError> {
        #[derive(Deserialize)]
        struct Item {
            embedding: Vec<f64>,
        }
        #[derive(Deserialize)]
        struct Response {
            data: Vec<Item>,
        }
        let client = reqwest::blocking::Client::new();
        let response = client
            .post(format!("{}/embeddings", self.base_url.trim_end_matches('/')))
            .bearer_auth(&self.api_key)
            .json(&serde_json::json!({ "model": self.model, "input": [text] }))
            .send()
            .map_err(|err| ProviderError::Http(err.to_string()))?;
        let parsed: Response =
            response.json().map_err(|err| ProviderError::BadResponse(err.to_string()))?;
        let item = parsed
            .data
            .into_iter()
            .next()
            .ok_or_else(|| ProviderError::BadResponse("empty data".into()))?;
        if item.embedding.len() != self.dimension {
            return Err(ProviderError::BadResponse(format!(
                "expected {} dimensions, got {}",
                self.dimension,
                item.embedding.len()
            )));
        }
        Ok(l2_normalize(&item.embedding))
    }
}

/// Euclidean distance; on unit vectors this ranks identically to cosine.
pub fn distance(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = f64::from(*x) - f64::from(*y);
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DbError {
    #[error("cannot read {0}: {1}")]
    Io(String, String),
    #[error("sample database is not valid JSON lines: {0}")]
    Json(String),
    #[error("duplicate sample id {0:?}")]
    DuplicateId(String),
    #[error("sample {id:?} embedding has {found} dimensions, provider uses {expected}")]
    DimensionMismatch { id: String, expected: usize, found: usize },
    #[error(transparent)]
    Provider(#[from] ProviderError),
}

/// The sample database plus its normalization lexicon.
#[derive(Debug, Clone, Default)]
pub struct SampleDb {
    pub samples: Vec<Sample>,
    pub lexicon: Lexicon,
}

impl SampleDb {
    /// Loads JSON-lines samples, normalizing utterances and computing any
    /// missing embeddings with the given provider.
    pub fn load(
        db_path: &Path,
        lexicon: Lexicon,
        provider: &dyn EmbeddingProvider,
    ) -> Result<SampleDb, DbError> {
        let text = std::fs::read_to_string(db_path)
            .map_err(|err| DbError::Io(db_path.display().to_string(), err.to_string()))?;
        Self::from_json_lines(&text, lexicon, provider)
    }

    pub fn from_json_lines(
        text: &str,
        lexicon: Lexicon,
        provider: &dyn EmbeddingProvider,
    ) -> Result<SampleDb, DbError> {
        let mut samples = Vec::new();
        let mut seen = BTreeSet::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let record: SampleRecord =
                serde_json::from_str(line).map_err(|err| DbError::Json(err.to_string()))?;
            if !seen.insert(record.id.clone()) {
                return Err(DbError::DuplicateId(record.id));
            }
            let normalized = normalize(&record.utterance, &lexicon);
            let embedding = match record.embedding {
                Some(vector) => {
                    if vector.len() != provider.dimension() {
                        return Err(DbError::DimensionMismatch {
                            id: record.id,
                            expected: provider.dimension(),
                            found: vector.len(),
                        });
                    }
                    vector
                }
                None => provider.embed(&normalized)?,
            };
            samples.push(Sample {
                id: record.id,
                utterance: record.utterance,
                normalized,
                labels: record.labels.into_iter().map(|l| l.to_lowercase()).collect(),
                program: record.program,
                annotations: record.annotations,
                embedding,
            });
        }
        Ok(SampleDb { samples, lexicon })
    }
}

/// One retrieval result with its selection metadata.
#[derive(Debug, Clone)]
pub struct Retrieved<'a> {
    pub sample: &'a Sample,
    pub distance: f64,
    /// Labels shared with the query.
    pub matched_labels: usize,
    /// New labels this sample added to the accrued set when picked.
    pub marginal_gain: usize,
}

/// Label-centric retrieval: filter samples sharing at least one label with
/// the query, then greedily pick whichever adds the most unseen labels,
/// scanning candidates nearest-first so ties go to the smallest distance
/// (equal distances fall back to sample-id order). Returns at most `k`.
pub fn lcr_retrieve<'a>(
    x_labels: &LabelSet,
    x_vector: &[f32],
    db: &'a SampleDb,
    k: usize,
) -> Vec<Retrieved<'a>> {
    let mut candidates: Vec<Retrieved<'a>> = db
        .samples
        .iter()
        .filter_map(|sample| {
            let matched = sample.labels.intersection(x_labels).count();
            (matched > 0).then(|| Retrieved {
                sample,
                distance: distance(&sample.embedding, x_vector),
                matched_labels: matched,
                marginal_gain: 0,
            })
        })
        .collect();
    candidates.sort_by(|a, b| {
        a.distance
            .total_cmp(&b.distance)
            .then_with(|| a.sample.id.cmp(&b.sample.id))
    });

    let mut selected: Vec<Retrieved<'a>> = Vec::new();
    let mut accrued: LabelSet = LabelSet::new();
    while !candidates.is_empty() {
        let mut best = 0;
        let mut max = 0;
        for (index, candidate) in candidates.iter().enumerate() {
            let coverage = accrued.len()
                + candidate.sample.labels.difference(&accrued).count();
            // strictly greater: the nearest candidate keeps ties
            if coverage > max {
                max = coverage;
                best = index;
            }
        }
        let mut chosen = candidates.remove(best);
        chosen.marginal_gain = max - accrued.len();
        accrued.extend(chosen.sample.labels.iter().cloned());
        selected.push(chosen);
    }
    selected.truncate(k);
    selected
}
