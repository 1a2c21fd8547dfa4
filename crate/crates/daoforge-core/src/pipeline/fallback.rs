//! Tool-learning fallback for actions outside the registry vocabulary:
//! fetch the target contract's ABI, match a function by name similarity,
//! bind entity values to its parameters, and encode the call directly.

use std::path::PathBuf;

use serde::Deserialize;
use thiserror::Error;

use crate::abi::{encode_args, FunctionSig};
use crate::ast::{Address, Value, ValueKind};
use crate::evaluator::{Call, ProposalPayload};
use crate::registry::Registry;

use super::extract::{EntityKind, LabeledUtterance};

/// Default minimum name-similarity score for a usable function.
pub const DEFAULT_SIMILARITY_THRESHOLD: f64 = 0.6;

/// One callable function from a fetched ABI document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AbiFunction {
    pub name: String,
    pub params: Vec<ValueKind>,
}

impl AbiFunction {
    pub fn signature(&self) -> FunctionSig {
        FunctionSig::new(self.name.clone(), self.params.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AbiSourceError {
    #[error("no ABI available for {0}: {1}")]
    NotFound(Address, String),
    #[error("ABI endpoint unreachable: {0}")]
    Http(String),
    #[error("ABI document malformed: {0}")]
    BadDocument(String),
}

/// Supplies contract ABIs; fixture mode reads local files, live mode
/// queries a block-explorer API.
pub trait AbiSource {
    fn fetch_abi(&self, address: &Address) -> Result<Vec<AbiFunction>, AbiSourceError>;
}

/// Parses an Etherscan-style ABI document: a JSON array of entries.
/// Functions with parameter types outside the supported scalar kinds are
/// skipped rather than rejected.
pub fn parse_abi_document(text: &str) -> Result<Vec<AbiFunction>, AbiSourceError> {
    #[derive(Deserialize)]
    struct Input {
        #[serde(rename = "type")]
        kind: String,
    }
    #[derive(Deserialize)]
    struct Entry {
        #[serde(rename = "type")]
        kind: String,
        #[serde(default)]
        name: Option<String>,
        #[serde(default)]
        inputs: Vec<Input>,
    }
    let entries: Vec<Entry> =
        serde_json::from_str(text).map_err(|err| AbiSourceError::BadDocument(err.to_string()))?;
    let mut functions = Vec::new();
    for entry in entries {
        if entry.kind != "function" {
            continue;
        }
        let Some(name) = entry.name else { continue };
        let params: Option<Vec<ValueKind>> =
            entry.inputs.iter().map(|i| ValueKind::parse(&i.kind).ok()).collect();
        if let Some(params) = params {
            functions.push(AbiFunction { name, params });
        }
    }
    Ok(functions)
}

/// Reads `<dir>/<0xaddress>.json` ABI documents.
pub struct FixtureAbiSource {
    pub dir: PathBuf,
}

impl AbiSource for FixtureAbiSource {
    fn fetch_abi(&self, address: &Address) -> Result<Vec<AbiFunction>, AbiSourceError> {
        let path = self.dir.join(format!("{address}.json"));
        let text = std::fs::read_to_string(&path)
            .map_err(|err| AbiSourceError::NotFound(*address, err.to_string()))?;
        parse_abi_document(&text)
    }
}

/// Block-explorer contract-ABI endpoint client.
pub struct EtherscanAbiSource {
    pub base_url: String,
    pub api_key: String,
    pub chain_id: u64,
}

impl AbiSource for EtherscanAbiSource {
    fn fetch_abi(&self, address: &Address) -> Result<Vec<AbiFunction>, AbiSourceError> {
        #[derive(Deserialize)]
        struct Reply {
            status: String,
            result: String,
        }
        let client = reqwest::blocking::Client::new();
        let reply: Reply = client
            .get(&self.base_url)
            .query(&[
                ("chainid", self.chain_id.to_string()),
                ("module", "contract".into()),
                ("action", "getabi".into()),
                ("address", address.to_string()),
                ("apikey", self.api_key.clone()),
            ])
            .send()
            .map_err(|err| AbiSourceError::Http(err.to_string()))?
            .json()
            .map_err(|err| AbiSourceError::BadDocument(err.to_string()))?;
        if reply.status != "1" {
            return Err(AbiSourceError::NotFound(*address, reply.result));
        }
        parse_abi_document(&reply.result)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FallbackError {
    #[error("ABI fetch failed: {0}")]
    AbiFetch(#[from] AbiSourceError),
    #[error("no ABI function matches the request (best score {best:.2}, threshold {threshold:.2})")]
    NoMatchingFunction { best: f64, threshold: f64 },
    #[error("cannot bind parameters: {0}")]
    BindingFailure(String),
}

/// Builds a payload for an atypical request by matching the target
/// contract's ABI against the labeled intent and entities.
pub fn interpret_fallback(
    labeled: &LabeledUtterance,
    program: Option<&crate::ast::Program>,
    abi_source: &dyn AbiSource,
    registry: &Registry,
    threshold: f64,
) -> Result<ProposalPayload, FallbackError> {
    let (target, target_entity) = resolve_target(labeled, program, registry)
        .ok_or_else(|| FallbackError::BindingFailure("target contract unknown".into()))?;
    let functions = abi_source.fetch_abi(&target)?;

    let query = query_tokens(labeled);
    if query.is_empty() {
        return Err(FallbackError::BindingFailure("no intent or entities to match".into()));
    }
    let mut best: Option<(f64, &AbiFunction)> = None;
    for function in &functions {
        let score = jaccard(&query, &name_tokens(&function.name));
        if best.map(|(s, _)| score > s).unwrap_or(true) {
            best = Some((score, function));
        }
    }
    let (score, function) = best.ok_or(FallbackError::NoMatchingFunction {
        best: 0.0,
        threshold,
    })?;
    if score < threshold {
        return Err(FallbackError::NoMatchingFunction { best: score, threshold });
    }

    let values = bind_parameters(function, labeled, target_entity)?;
    let call = Call::encoded(target, function.signature().canonical(), encode_args(&values));
    Ok(ProposalPayload(vec![call]))
}

/// Target resolution order: a protocol literal in the synthesized program,
/// a protocol entity's primary role address, then a contract-like entity.
/// Returns the address and, when it came from an entity, that entity's
/// index (so parameter binding can skip it).
pub fn resolve_target(
    labeled: &LabeledUtterance,
    program: Option<&crate::ast::Program>,
    registry: &Registry,
) -> Option<(Address, Option<usize>)> {
    if let Some(program) = program {
        for statement in &program.statements {
            if let crate::ast::Statement::Assignment {
                value: crate::ast::Expr::Protocol(addresses),
                ..
            } = statement
            {
                if let Some(address) = addresses.first() {
                    return Some((*address, None));
                }
            }
        }
    }
    for (index, entity) in labeled.entities.iter().enumerate() {
        if entity.kind == EntityKind::Protocol {
            if let Some(protocol) = registry.protocol(&entity.canonical) {
                if let Some(address) = protocol.roles.values().next() {
                    return Some((*address, Some(index)));
                }
            }
        }
    }
    for (index, entity) in labeled.entities.iter().enumerate() {
        if matches!(entity.kind, EntityKind::Market | EntityKind::Token | EntityKind::Asset) {
            if let Ok(address) = Address::parse(&entity.canonical) {
                return Some((address, Some(index)));
            }
        }
    }
    for (index, entity) in labeled.entities.iter().enumerate() {
        if entity.kind == EntityKind::Address {
            if let Ok(address) = Address::parse(&entity.canonical) {
                return Some((address, Some(index)));
            }
        }
    }
    None
}

/// Case-folded tokens of the intent plus the surface text of name-like
/// entities; numbers and raw addresses stay out of the name match.
fn query_tokens(labeled: &LabeledUtterance) -> Vec<String> {
    let mut tokens: Vec<String> = Vec::new();
    if let Some(intent) = &labeled.intent {
        tokens.extend(intent.split_whitespace().map(str::to_lowercase));
    }
    for entity in &labeled.entities {
        if matches!(
            entity.kind,
            EntityKind::Asset | EntityKind::Market | EntityKind::Token | EntityKind::Protocol
        ) {
            let (start, end) = entity.span;
            if start < end && end <= labeled.original.len() {
                tokens.extend(labeled.original[start..end].split_whitespace().map(str::to_lowercase));
            }
        }
    }
    tokens.sort();
    tokens.dedup();
    tokens
}

/// Splits camelCase, snake_case, and digit boundaries into folded tokens.
fn name_tokens(name: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    let mut prev_lower = false;
    for ch in name.chars() {
        if ch == '_' || ch.is_ascii_digit() {
            if !current.is_empty() {
                tokens.push(std::mem::take(&mut current));
            }
            prev_lower = false;
            continue;
        }
        if ch.is_ascii_uppercase() && prev_lower {
            tokens.push(std::mem::take(&mut current));
        }
        prev_lower = ch.is_ascii_lowercase();
        current.push(ch.to_ascii_lowercase());
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens.sort();
    tokens.dedup();
    tokens
}

fn jaccard(a: &[String], b: &[String]) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 0.0;
    }
    let intersection = a.iter().filter(|t| b.contains(t)).count();
    let union = a.len() + b.len() - intersection;
    intersection as f64 / union as f64
}

/// Binds entity values to parameters by kind: addresses from address-like
/// entities in order (skipping the target itself), integers from number
/// entities, and bools default to true for an affirmative command.
fn bind_parameters(
    function: &AbiFunction,
    labeled: &LabeledUtterance,
    target_entity: Option<usize>,
) -> Result<Vec<Value>, FallbackError> {
    let mut addresses: Vec<Address> = Vec::new();
    let mut numbers: Vec<String> = Vec::new();
    for (index, entity) in labeled.entities.iter().enumerate() {
        if Some(index) == target_entity {
            continue;
        }
        match entity.kind {
            EntityKind::Address | EntityKind::Asset | EntityKind::Market | EntityKind::Token => {
                if let Ok(address) = Address::parse(&entity.canonical) {
                    addresses.push(address);
                }
            }
            EntityKind::Number => numbers.push(entity.canonical.clone()),
            _ => {}
        }
    }
    let mut addresses = addresses.into_iter();
    let mut numbers = numbers.into_iter();
    let mut values = Vec::with_capacity(function.params.len());
    for kind in &function.params {
        let value = match kind {
            ValueKind::Address => addresses
                .next()
                .map(Value::Address)
                .ok_or_else(|| FallbackError::BindingFailure("no address entity left".into()))?,
            ValueKind::Uint(_) | ValueKind::Int(_) => {
                let literal = numbers
                    .next()
                    .ok_or_else(|| FallbackError::BindingFailure("no number entity left".into()))?;
                crate::ast::make_value(*kind, &literal)
                    .map_err(|err| FallbackError::BindingFailure(err.to_string()))?
            }
            ValueKind::Bool => Value::Bool(true),
            other => {
                return Err(FallbackError::BindingFailure(format!(
                    "cannot bind a {other} parameter from the utterance"
                )));
            }
        };
        values.push(value);
    }
    Ok(values)
}
