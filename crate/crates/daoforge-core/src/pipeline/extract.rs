//! Relation extraction: intent classification, entity extraction, and
//! semantic role labeling over user utterances.
//!
//! Two extractors implement the same interface: a deterministic rule
//! extractor driven by the lexicon and the registry's action patterns, and
//! a generator-backed extractor that poses the extraction task as a
//! query-response exchange and parses the structured reply.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::registry::{EntityClass, Registry, RoleSource};
use crate::retrieval::{normalize, Lexicon};

use super::generate::Generator;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum EntityKind {
    Asset,
    Market,
    Token,
    Protocol,
    Network,
    Number,
    Address,
}

/// One extracted entity: where it sits in the original text, what it is,
/// and its canonical value (an address, a number literal, or a name).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Entity {
    pub span: (usize, usize),
    pub kind: EntityKind,
    pub canonical: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RoleAssignment {
    pub entity: usize,
    pub role: String,
}

/// An utterance expanded with intent, entities, and semantic roles.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "camelCase")]
pub struct LabeledUtterance {
    pub original: String,
    pub normalized: String,
    pub intent: Option<String>,
    pub entities: Vec<Entity>,
    pub roles: Vec<RoleAssignment>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExtractorError {
    #[error("extraction generator failed: {0}")]
    Generator(String),
    #[error("extraction response malformed: {0}")]
    BadResponse(String),
}

pub trait RelationExtractor {
    fn extract(&self, utterance: &str) -> Result<LabeledUtterance, ExtractorError>;
}

/// A registry action instantiated against concrete entities.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatchedAction {
    pub protocol: String,
    pub action: String,
    pub chain: u64,
    /// (role name, entity index) in pattern role order.
    pub bindings: Vec<(String, usize)>,
}

/// Deterministic extractor: lexicon normalization plus registry pattern
/// rules. Total — unknown input yields an empty labeling, never an error.
pub struct RuleExtractor<'a> {
    pub lexicon: &'a Lexicon,
    pub registry: &'a Registry,
}

impl RelationExtractor for RuleExtractor<'_> {
    fn extract(&self, utterance: &str) -> Result<LabeledUtterance, ExtractorError> {
        let normalized = normalize(utterance, self.lexicon);
        let tokens: Vec<&str> = normalized.split_whitespace().collect();

        let chain = tokens
            .iter()
            .find_map(|t| self.registry.network_by_utterance_name(t))
            .map(|(chain, _)| chain)
            .unwrap_or(self.registry.home_chain_id);

        let mut entities = Vec::new();
        for token in &tokens {
            if let Some((_, config)) = self.registry.network_by_utterance_name(token) {
                push_unique(&mut entities, utterance, token, Entity {
                    span: (0, 0),
                    kind: EntityKind::Network,
                    canonical: config.name.clone(),
                });
                continue;
            }
            let dictionary_hits = self.registry.entities_by_symbol(&token.to_lowercase());
            if !dictionary_hits.is_empty() {
                // prefer the chain-scoped variant, then a chain-agnostic one
                let entry = dictionary_hits
                    .iter()
                    .find(|e| e.chains.contains(&chain))
                    .or_else(|| dictionary_hits.iter().find(|e| e.chains.is_empty()))
                    .copied();
                if let Some(entry) = entry {
                    let (kind, canonical) = match entry.kind {
                        EntityClass::Asset => (EntityKind::Asset, entry.address.to_string()),
                        EntityClass::Market => (EntityKind::Market, entry.address.to_string()),
                        EntityClass::Token => (EntityKind::Token, entry.address.to_string()),
                        EntityClass::Protocol => (
                            EntityKind::Protocol,
                            entry.protocol.clone().unwrap_or_else(|| entry.symbol.clone()),
                        ),
                    };
                    push_unique(&mut entities, utterance, token, Entity {
                        span: (0, 0),
                        kind,
                        canonical,
                    });
                }
                continue;
            }
            if is_address_token(token) {
                push_unique(&mut entities, utterance, token, Entity {
                    span: (0, 0),
                    kind: EntityKind::Address,
                    canonical: token.to_lowercase(),
                });
                continue;
            }
            if !token.is_empty() && token.bytes().all(|b| b.is_ascii_digit()) {
                push_unique(&mut entities, utterance, token, Entity {
                    span: (0, 0),
                    kind: EntityKind::Number,
                    canonical: token.to_string(),
                });
            }
        }

        let intents = known_intents(self.lexicon, self.registry);
        let intent = tokens.iter().find(|t| intents.contains(&t.to_string())).map(|t| t.to_string());

        let mut labeled = LabeledUtterance {
            original: utterance.to_string(),
            normalized,
            intent,
            entities,
            roles: vec![],
        };
        let actions = match_actions(&labeled, self.registry);
        let mut roles: Vec<RoleAssignment> = Vec::new();
        for action in &actions {
            for (role, entity) in &action.bindings {
                // one role per entity; the first assignment sticks
                if !roles.iter().any(|r| r.entity == *entity) {
                    roles.push(RoleAssignment { entity: *entity, role: role.clone() });
                }
            }
        }
        labeled.roles = roles;
        Ok(labeled)
    }
}

fn known_intents(lexicon: &Lexicon, registry: &Registry) -> Vec<String> {
    let mut intents: Vec<String> = lexicon.verbs.values().map(|v| v.to_lowercase()).collect();
    for actions in registry.actions.values() {
        for spec in actions.values() {
            if let Some(pattern) = &spec.pattern {
                intents.push(pattern.intent.to_lowercase());
            }
        }
    }
    intents.sort();
    intents.dedup();
    intents
}

fn is_address_token(token: &str) -> bool {
    token.len() == 42
        && (token.starts_with("0x") || token.starts_with("0X"))
        && token[2..].bytes().all(|b| b.is_ascii_hexdigit())
}

/// Appends an entity unless an identical one is already present, recovering
/// its span by a case-insensitive search over the original text.
fn push_unique(entities: &mut Vec<Entity>, original: &str, surface: &str, mut entity: Entity) {
    entity.span = find_span(original, surface).unwrap_or((0, 0));
    if !entities.iter().any(|e| e.kind == entity.kind && e.canonical == entity.canonical && e.span == entity.span)
    {
        entities.push(entity);
    }
}

fn find_span(original: &str, surface: &str) -> Option<(usize, usize)> {
    if surface.is_empty() {
        return None;
    }
    let haystack: String = original.chars().map(|c| c.to_ascii_lowercase()).collect();
    let needle: String = surface.chars().map(|c| c.to_ascii_lowercase()).collect();
    haystack.find(&needle).map(|start| (start, start + needle.len()))
}

/// Matches registry action patterns against a labeled utterance in the
/// order the pattern keywords appear, filling roles from per-source entity
/// queues. A pattern instantiates once per keyword mention, so "the supply
/// cap of X ... and the supply cap of Y" yields two actions; roles whose
/// queue is exhausted reuse the most recently consumed entity, which is how
/// one market declaration serves several cap updates.
pub fn match_actions(labeled: &LabeledUtterance, registry: &Registry) -> Vec<MatchedAction> {
    let tokens: Vec<&str> = labeled.normalized.split_whitespace().collect();
    let chain = labeled
        .entities
        .iter()
        .find(|e| e.kind == EntityKind::Network)
        .and_then(|e| registry.network_by_alias(&e.canonical))
        .map(|(chain, _)| chain)
        .unwrap_or(registry.home_chain_id);

    let evidence: Vec<String> = protocol_evidence(labeled, registry);

    struct Candidate<'r> {
        protocol: String,
        action: String,
        pattern: &'r crate::registry::ActionPattern,
        position: usize,
        /// Keyword mention count: how many instances the text asks for.
        mentions: usize,
    }

    let mut candidates: Vec<Candidate> = Vec::new();
    for (protocol_name, actions) in &registry.actions {
        for (action_name, spec) in actions {
            let Some(pattern) = &spec.pattern else { continue };
            if !tokens.contains(&pattern.intent.as_str()) {
                continue;
            }
            if let Some(required) = pattern.network {
                if required != chain {
                    continue;
                }
            }
            if !evidence.is_empty() && !evidence.contains(protocol_name) {
                continue;
            }
            let marker_words: Vec<&str> = if pattern.keywords.is_empty() {
                vec![pattern.intent.as_str()]
            } else {
                pattern.keywords.iter().map(String::as_str).collect()
            };
            let position = marker_words
                .iter()
                .map(|word| token_position(&tokens, word))
                .collect::<Option<Vec<usize>>>()
                .map(|positions| positions.into_iter().min().unwrap_or(usize::MAX));
            let Some(position) = position else { continue };
            let mentions = marker_words
                .iter()
                .map(|word| tokens.iter().filter(|t| *t == word).count())
                .min()
                .unwrap_or(0);
            candidates.push(Candidate {
                protocol: protocol_name.clone(),
                action: action_name.clone(),
                pattern,
                position,
                mentions,
            });
        }
    }
    candidates.sort_by_key(|c| c.position);

    let mut queues = SourceQueues::new(labeled);
    let mut matched = Vec::new();
    for candidate in candidates {
        for _ in 0..candidate.mentions {
            match queues.try_instance(&candidate.pattern.roles) {
                Some(bindings) => matched.push(MatchedAction {
                    protocol: candidate.protocol.clone(),
                    action: candidate.action.clone(),
                    chain,
                    bindings,
                }),
                None => break,
            }
        }
    }
    matched
}

fn protocol_evidence(labeled: &LabeledUtterance, registry: &Registry) -> Vec<String> {
    let mut evidence = Vec::new();
    for entity in &labeled.entities {
        match entity.kind {
            EntityKind::Protocol => {
                if registry.protocol(&entity.canonical).is_some() {
                    evidence.push(entity.canonical.clone());
                }
            }
            EntityKind::Asset | EntityKind::Market | EntityKind::Token => {
                for entry in &registry.entities {
                    if entry.address.to_string() == entity.canonical.to_lowercase() {
                        if let Some(protocol) = &entry.protocol {
                            evidence.push(protocol.clone());
                        }
                    }
                }
            }
            _ => {}
        }
    }
    evidence.sort();
    evidence.dedup();
    evidence
}

fn token_position(tokens: &[&str], word: &str) -> Option<usize> {
    tokens.iter().position(|t| *t == word)
}

/// Per-source entity queues with a cursor and the last consumed entity.
struct SourceQueues {
    queues: Vec<(RoleSource, Vec<usize>)>,
    cursors: Vec<usize>,
    last: Vec<Option<usize>>,
}

impl SourceQueues {
    fn new(labeled: &LabeledUtterance) -> SourceQueues {
        let sources = [
            (RoleSource::Asset, EntityKind::Asset),
            (RoleSource::Market, EntityKind::Market),
            (RoleSource::Token, EntityKind::Token),
            (RoleSource::Number, EntityKind::Number),
            (RoleSource::Address, EntityKind::Address),
        ];
        let queues: Vec<(RoleSource, Vec<usize>)> = sources
            .iter()
            .map(|(source, kind)| {
                let indices = labeled
                    .entities
                    .iter()
                    .enumerate()
                    .filter(|(_, e)| e.kind == *kind)
                    .map(|(i, _)| i)
                    .collect();
                (*source, indices)
            })
            .collect();
        let len = queues.len();
        SourceQueues { queues, cursors: vec![0; len], last: vec![None; len] }
    }

    fn slot(&self, source: RoleSource) -> usize {
        self.queues.iter().position(|(s, _)| *s == source).expect("all sources present")
    }

    /// Fills one role tuple. Fresh entities advance their cursor; exhausted
    /// queues fall back to the last consumed entity. Returns None when a
    /// role cannot be filled at all.
    fn try_instance(
        &mut self,
        roles: &[crate::registry::PatternRole],
    ) -> Option<Vec<(String, usize)>> {
        let mut bindings = Vec::with_capacity(roles.len());
        let mut fresh_slots: Vec<usize> = Vec::new();
        for role in roles {
            let slot = self.slot(role.source);
            let (_, queue) = &self.queues[slot];
            let cursor = self.cursors[slot] + fresh_slots.iter().filter(|s| **s == slot).count();
            if cursor < queue.len() {
                bindings.push((role.role.clone(), queue[cursor]));
                fresh_slots.push(slot);
            } else {
                bindings.push((role.role.clone(), self.last[slot]?));
            }
        }
        for slot in fresh_slots {
            let consumed = self.queues[slot].1[self.cursors[slot]];
            self.cursors[slot] += 1;
            self.last[slot] = Some(consumed);
        }
        Some(bindings)
    }
}

/// Query-response extractor backed by a pluggable generator: summarize the
/// utterance, then ask for the structured labeling as JSON.
pub struct GeneratorExtractor<'a> {
    pub generator: &'a dyn Generator,
    pub lexicon: &'a Lexicon,
}

impl RelationExtractor for GeneratorExtractor<'_> {
    fn extract(&self, utterance: &str) -> Result<LabeledUtterance, ExtractorError> {
        #[derive(Deserialize)]
        #[serde(rename_all = "camelCase")]
        struct ReplyEntity {
            text: String,
            kind: EntityKind,
            canonical: String,
        }
        #[derive(Deserialize)]
        #[serde(rename_all = "camelCase")]
        struct Reply {
            intent: Option<String>,
            #[serde(default)]
            entities: Vec<ReplyEntity>,
        }
        let prompt = format!(
            "Summarize the governance request below, then answer with only a JSON object \
             of the form {{\"intent\": string|null, \"entities\": [{{\"text\": string, \
             \"kind\": \"asset\"|\"market\"|\"token\"|\"protocol\"|\"network\"|\"number\"|\"address\", \
             \"canonical\": string}}]}}.\n\nRequest: {utterance}"
        );
        let response = self
            .generator
            .complete(&prompt)
            .map_err(|err| ExtractorError::Generator(err.to_string()))?;
        let json_part = response
            .find('{')
            .and_then(|start| response.rfind('}').map(|end| &response[start..=end]))
            .ok_or_else(|| ExtractorError::BadResponse("no JSON object in reply".into()))?;
        let reply: Reply = serde_json::from_str(json_part)
            .map_err(|err| ExtractorError::BadResponse(err.to_string()))?;
        let entities = reply
            .entities
            .into_iter()
            .map(|e| Entity {
                span: find_span(utterance, &e.text).unwrap_or((0, 0)),
                kind: e.kind,
                canonical: e.canonical,
            })
            .collect();
        Ok(LabeledUtterance {
            original: utterance.to_string(),
            normalized: normalize(utterance, self.lexicon),
            intent: reply.intent,
            entities,
            roles: vec![],
        })
    }
}
