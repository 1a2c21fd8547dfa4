//! Declarative state simulation and payload equivalence classification.
//!
//! Instead of executing bytecode, every known function signature maps to
//! the parameter writes it performs. Simulating a payload folds those
//! writes into a final (chain, contract, subject, parameter) -> value map;
//! two payloads are functionally equivalent when the maps agree, however
//! the calls were grouped into bridge messages.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::abi::{decode_args, FunctionSig};
use crate::ast::{Address, Value};
use crate::evaluator::{Call, CallPayload, ProposalPayload};
use crate::registry::Registry;

/// Where a write rule takes an address from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum AddrSource {
    /// The call's target contract.
    Target,
    /// A decoded address argument.
    FromArg(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum SubjectSource {
    Target,
    FromArg(usize),
    /// A fixed role label instead of an address.
    Role(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum ValueSource {
    FromArg(usize),
    /// An opaque marker, optionally keyed by an argument (e.g. the deployed
    /// implementation source).
    #[serde(rename_all = "camelCase")]
    Marker {
        prefix: String,
        #[serde(default)]
        from_arg: Option<usize>,
    },
}

/// One parameter write performed by a function call.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct WriteRule {
    pub parameter: String,
    pub contract: AddrSource,
    pub subject: SubjectSource,
    pub value: ValueSource,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct StateModelFile {
    rules: IndexMap<String, Vec<WriteRule>>,
    /// Bridge inbox -> destination chain; defaults to the registry's
    /// network table when absent.
    #[serde(default)]
    bridges: Option<IndexMap<String, u64>>,
}

/// The loaded state model: write rules per canonical signature plus the
/// bridge routing table.
#[derive(Debug, Clone)]
pub struct StateModel {
    rules: HashMap<String, (FunctionSig, Vec<WriteRule>)>,
    bridges: HashMap<Address, u64>,
    home_chain: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StateModelError {
    #[error("cannot read state model {0}: {1}")]
    Io(String, String),
    #[error("state model is not valid JSON: {0}")]
    Json(String),
    #[error("invalid state model: {0}")]
    Invalid(String),
}

impl StateModel {
    pub fn load(path: &Path, registry: &Registry) -> Result<StateModel, StateModelError> {
        let text = std::fs::read_to_string(path)
            .map_err(|err| StateModelError::Io(path.display().to_string(), err.to_string()))?;
        StateModel::from_json(&text, registry)
    }

    pub fn from_json(text: &str, registry: &Registry) -> Result<StateModel, StateModelError> {
        let file: StateModelFile =
            serde_json::from_str(text).map_err(|err| StateModelError::Json(err.to_string()))?;
        let mut rules = HashMap::new();
        for (sig_text, writes) in file.rules {
            let sig = FunctionSig::parse(&sig_text).map_err(|err| {
                StateModelError::Invalid(format!("rule signature {sig_text:?}: {err}"))
            })?;
            for write in &writes {
                for (label, index) in [
                    ("contract", addr_index(&write.contract)),
                    ("subject", subject_index(&write.subject)),
                ] {
                    if let Some(index) = index {
                        match sig.params.get(index) {
                            Some(crate::ast::ValueKind::Address) => {}
                            Some(other) => {
                                return Err(StateModelError::Invalid(format!(
                                    "{sig_text}: {label} argument {index} is {other}, expected address"
                                )));
                            }
                            None => {
                                return Err(StateModelError::Invalid(format!(
                                    "{sig_text}: {label} argument {index} out of range"
                                )));
                            }
                        }
                    }
                }
                let value_index = match &write.value {
                    ValueSource::FromArg(index) => Some(*index),
                    ValueSource::Marker { from_arg, .. } => *from_arg,
                };
                if let Some(index) = value_index {
                    if index >= sig.params.len() {
                        return Err(StateModelError::Invalid(format!(
                            "{sig_text}: value argument {index} out of range"
                        )));
                    }
                }
            }
            rules.insert(sig.canonical(), (sig, writes));
        }
        let bridges = match file.bridges {
            Some(map) => map
                .into_iter()
                .map(|(addr, chain)| {
                    Address::parse(&addr)
                        .map(|a| (a, chain))
                        .map_err(|err| StateModelError::Invalid(format!("bridge key: {err}")))
                })
                .collect::<Result<HashMap<_, _>, _>>()?,
            None => registry
                .networks
                .iter()
                .filter_map(|(chain, net)| net.bridge.as_ref().map(|b| (b.inbox, *chain)))
                .collect(),
        };
        Ok(StateModel { rules, bridges, home_chain: registry.home_chain_id })
    }
}

/// A write-set subject: a concrete address or a symbolic role.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Subject {
    Address(Address),
    Role(String),
}

impl fmt::Display for Subject {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Subject::Address(address) => write!(f, "{address}"),
            Subject::Role(role) => f.write_str(role),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct StateKey {
    pub chain: u64,
    pub contract: Address,
    pub subject: Subject,
    pub parameter: String,
}

/// The final write-set of a simulated payload; later writes to a key
/// overwrite earlier ones, and iteration order is the key order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct StateDelta {
    pub entries: BTreeMap<StateKey, Value>,
}

impl StateDelta {
    pub fn keys(&self) -> Vec<&StateKey> {
        self.entries.keys().collect()
    }

    pub fn same_keys(&self, other: &StateDelta) -> bool {
        self.entries.len() == other.entries.len()
            && self.entries.keys().zip(other.entries.keys()).all(|(a, b)| a == b)
    }
}

impl Serialize for StateDelta {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        #[serde(rename_all = "camelCase")]
        struct Entry<'a> {
            #[serde(flatten)]
            key: &'a StateKey,
            value: &'a Value,
        }
        serializer.collect_seq(self.entries.iter().map(|(key, value)| Entry { key, value }))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimulationError {
    #[error("no simulation rule for signature {0:?}")]
    UnsupportedSignature(String),
    #[error("call target {0} is not a known bridge inbox")]
    UnknownBridge(Address),
    #[error("cannot decode payload for {sig}: {reason}")]
    Decode { sig: String, reason: String },
}

/// Folds a payload into its final write-set. Bridge wrappers recurse into
/// their nested calls on the destination chain.
pub fn simulate(payload: &ProposalPayload, model: &StateModel) -> Result<StateDelta, SimulationError> {
    let mut delta = StateDelta::default();
    walk(payload.calls(), model.home_chain, model, &mut delta)?;
    Ok(delta)
}

fn walk(
    calls: &[Call],
    chain: u64,
    model: &StateModel,
    delta: &mut StateDelta,
) -> Result<(), SimulationError> {
    for call in calls {
        match &call.payload {
            CallPayload::Nested(nested) => {
                let destination = model
                    .bridges
                    .get(&call.address)
                    .copied()
                    .ok_or(SimulationError::UnknownBridge(call.address))?;
                walk(nested, destination, model, delta)?;
            }
            CallPayload::Encoded(args) => {
                let (sig, writes) = model
                    .rules
                    .get(&call.function_sig)
                    .ok_or_else(|| SimulationError::UnsupportedSignature(call.function_sig.clone()))?;
                let values = decode_args(&sig.params, args.as_slice()).map_err(|err| {
                    SimulationError::Decode { sig: call.function_sig.clone(), reason: err.to_string() }
                })?;
                for write in writes {
                    let contract = resolve_addr(&write.contract, call, &values);
                    let subject = match &write.subject {
                        SubjectSource::Target => Subject::Address(call.address),
                        SubjectSource::FromArg(index) => Subject::Address(expect_address(&values[*index])),
                        SubjectSource::Role(role) => Subject::Role(role.clone()),
                    };
                    let value = match &write.value {
                        ValueSource::FromArg(index) => values[*index].clone(),
                        ValueSource::Marker { prefix, from_arg } => {
                            let suffix = from_arg
                                .map(|index| format!(":{}", values[index].canonical_literal()))
                                .unwrap_or_default();
                            Value::Str(format!("{prefix}{suffix}"))
                        }
                    };
                    delta.entries.insert(
                        StateKey {
                            chain,
                            contract,
                            subject,
                            parameter: write.parameter.clone(),
                        },
                        value,
                    );
                }
            }
        }
    }
    Ok(())
}

fn resolve_addr(source: &AddrSource, call: &Call, values: &[Value]) -> Address {
    match source {
        AddrSource::Target => call.address,
        AddrSource::FromArg(index) => expect_address(&values[*index]),
    }
}

fn expect_address(value: &Value) -> Address {
    match value {
        Value::Address(address) => *address,
        _ => unreachable!("address sources validated against the signature at load"),
    }
}

fn addr_index(source: &AddrSource) -> Option<usize> {
    match source {
        AddrSource::Target => None,
        AddrSource::FromArg(index) => Some(*index),
    }
}

fn subject_index(source: &SubjectSource) -> Option<usize> {
    match source {
        SubjectSource::FromArg(index) => Some(*index),
        _ => None,
    }
}

/// Equivalence verdicts, strictest first when comparing: EM > FE > SA > EI.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MatchLevel {
    /// Invalid payload, simulation failure, or differing write-key sets.
    EI,
    /// Same write keys, at least one differing value; counted as a failure.
    SA,
    /// Byte-different payloads with identical state changes.
    FE,
    /// Byte-identical serialized payloads.
    EM,
}

impl MatchLevel {
    pub fn is_pass(&self) -> bool {
        matches!(self, MatchLevel::EM | MatchLevel::FE)
    }
}

impl fmt::Display for MatchLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MatchLevel::EM => "EM",
            MatchLevel::FE => "FE",
            MatchLevel::SA => "SA",
            MatchLevel::EI => "EI",
        })
    }
}

/// Classifies a generated payload against the golden one.
pub fn classify_equivalence(
    generated: &ProposalPayload,
    golden: &ProposalPayload,
    model: &StateModel,
) -> MatchLevel {
    if generated.to_canonical_json() == golden.to_canonical_json() {
        return MatchLevel::EM;
    }
    match (simulate(generated, model), simulate(golden, model)) {
        (Ok(ours), Ok(theirs)) => {
            if ours == theirs {
                MatchLevel::FE
            } else if ours.same_keys(&theirs) {
                MatchLevel::SA
            } else {
                MatchLevel::EI
            }
        }
        _ => MatchLevel::EI,
    }
}
