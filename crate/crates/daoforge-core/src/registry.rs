//! The governance registry: valid protocols, their action expansion
//! templates, bridgeable networks, and the entity dictionary used by the
//! rule extractor.
//!
//! Loaded from a single JSON document with `protocols`, `actions`,
//! `networks`, and `homeChainId` sections (plus an optional `entities`
//! list). Everything is validated up front so evaluation never meets a
//! dangling role or a malformed template.

use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ast::{make_value, Address, Value, ValueKind};
use crate::abi::FunctionSig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum ActionCategory {
    AddAct,
    UpdateAct,
    OperateAct,
}

/// Where a template argument comes from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum ArgBinding {
    /// The nth argument of the DAOLang action call.
    Arg(usize),
    /// A named field of an object passed as the nth action argument.
    ArgField(usize, String),
    /// A protocol role address.
    Role(String),
    /// The protocol's market map keyed by the nth action argument.
    MarketLookup(usize),
    /// A fixed registry constant.
    Constant(Value),
}

/// One concrete contract call emitted for an action.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ActionTemplate {
    pub target: String,
    #[serde(with = "sig_text")]
    pub function: FunctionSig,
    pub args: Vec<ArgBinding>,
}

/// How the rule extractor recognizes this action in an utterance and how
/// the template generator names its variables.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ActionPattern {
    pub intent: String,
    #[serde(default)]
    pub keywords: Vec<String>,
    /// Restricts the pattern to one chain (e.g. the Arbitrum deployment).
    #[serde(default)]
    pub network: Option<u64>,
    pub roles: Vec<PatternRole>,
    /// Protocol roles declared in generated programs, first one primary.
    #[serde(default)]
    pub declares: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PatternRole {
    pub role: String,
    pub source: RoleSource,
    /// Variable name used by the template generator; inline literal if None.
    #[serde(default)]
    pub var: Option<String>,
}

/// Which entity queue fills a pattern role.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum RoleSource {
    Asset,
    Market,
    Token,
    Number,
    Address,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ActionSpec {
    pub category: ActionCategory,
    /// Number of DAOLang-level arguments the action takes.
    pub arity: usize,
    pub templates: Vec<ActionTemplate>,
    #[serde(default)]
    pub pattern: Option<ActionPattern>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "camelCase")]
pub struct Protocol {
    pub roles: IndexMap<String, Address>,
    /// Market token address -> market proxy contract address.
    #[serde(default)]
    pub markets: IndexMap<String, Address>,
}

impl Protocol {
    pub fn role(&self, name: &str) -> Option<Address> {
        self.roles.get(name).copied()
    }

    pub fn market_proxy(&self, token: &Address) -> Option<Address> {
        self.markets.get(&token.to_string()).copied()
    }

    /// All contract addresses this protocol is known by.
    pub fn known_addresses(&self) -> impl Iterator<Item = Address> + '_ {
        self.roles.values().copied().chain(self.markets.values().copied())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BridgeConfig {
    pub inbox: Address,
    #[serde(with = "sig_text")]
    pub wrapper: FunctionSig,
    pub param_names: Vec<String>,
    /// Overridable wrapper parameters (submission cost, gas, refunds);
    /// unset parameters default to the zero value of their kind.
    #[serde(default)]
    pub defaults: IndexMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct NetworkConfig {
    pub name: String,
    pub symbol: String,
    #[serde(default)]
    pub aliases: Vec<String>,
    #[serde(default)]
    pub bridge: Option<BridgeConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum EntityClass {
    Asset,
    Market,
    Token,
    Protocol,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EntityEntry {
    pub symbol: String,
    pub kind: EntityClass,
    pub address: Address,
    /// Chains this entry applies to; empty means any chain.
    #[serde(default)]
    pub chains: Vec<u64>,
    /// Registry protocol this entity selects, if any.
    #[serde(default)]
    pub protocol: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Registry {
    pub home_chain_id: u64,
    pub protocols: IndexMap<String, Protocol>,
    /// protocol name -> action name -> spec
    pub actions: IndexMap<String, IndexMap<String, ActionSpec>>,
    #[serde(with = "chain_keyed")]
    pub networks: IndexMap<u64, NetworkConfig>,
    #[serde(default)]
    pub entities: Vec<EntityEntry>,
}

impl Registry {
    pub fn load(path: &Path) -> Result<Registry, RegistryError> {
        let text = std::fs::read_to_string(path)
            .map_err(|err| RegistryError::Io(path.display().to_string(), err.to_string()))?;
        Registry::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Registry, RegistryError> {
        let registry: Registry =
            serde_json::from_str(text).map_err(|err| RegistryError::Json(err.to_string()))?;
        registry.validate()?;
        Ok(registry)
    }

    pub fn protocol(&self, name: &str) -> Option<&Protocol> {
        self.protocols.get(name)
    }

    /// Finds the first protocol whose known addresses cover all of `addrs`.
    pub fn protocol_by_addresses(&self, addrs: &[Address]) -> Option<(&str, &Protocol)> {
        self.protocols.iter().find_map(|(name, protocol)| {
            let known: Vec<Address> = protocol.known_addresses().collect();
            addrs.iter().all(|a| known.contains(a)).then_some((name.as_str(), protocol))
        })
    }

    pub fn action(&self, protocol: &str, action: &str) -> Option<&ActionSpec> {
        self.actions.get(protocol)?.get(action)
    }

    pub fn network(&self, chain_id: u64) -> Option<&NetworkConfig> {
        self.networks.get(&chain_id)
    }

    /// Case-insensitive lookup over network names, symbols, and aliases.
    pub fn network_by_alias(&self, text: &str) -> Option<(u64, &NetworkConfig)> {
        let folded = text.to_lowercase();
        self.networks.iter().find_map(|(chain, config)| {
            let hit = config.name.to_lowercase() == folded
                || config.symbol.to_lowercase() == folded
                || config.aliases.iter().any(|a| a.to_lowercase() == folded);
            hit.then_some((*chain, config))
        })
    }

    /// Like [`Registry::network_by_alias`] but without the short symbol,
    /// which is a variable-naming convention and collides with asset
    /// tickers in utterances (`arb` vs the ARB token).
    pub fn network_by_utterance_name(&self, text: &str) -> Option<(u64, &NetworkConfig)> {
        let folded = text.to_lowercase();
        self.networks.iter().find_map(|(chain, config)| {
            let hit = config.name.to_lowercase() == folded
                || config.aliases.iter().any(|a| a.to_lowercase() == folded);
            hit.then_some((*chain, config))
        })
    }

    /// Entity entries matching a lowercased symbol.
    pub fn entities_by_symbol(&self, folded: &str) -> Vec<&EntityEntry> {
        self.entities.iter().filter(|e| e.symbol.to_lowercase() == folded).collect()
    }

    fn validate(&self) -> Result<(), RegistryError> {
        for (protocol_name, actions) in &self.actions {
            let protocol = self.protocols.get(protocol_name).ok_or_else(|| {
                RegistryError::Invalid(format!("actions reference unknown protocol {protocol_name:?}"))
            })?;
            for (action_name, spec) in actions {
                let context = format!("{protocol_name}:{action_name}");
                for template in &spec.templates {
                    if protocol.role(&template.target).is_none() {
                        return Err(RegistryError::Invalid(format!(
                            "{context}: target role {:?} missing from protocol",
                            template.target
                        )));
                    }
                    if template.args.len() != template.function.params.len() {
                        return Err(RegistryError::Invalid(format!(
                            "{context}: {} bindings for {} parameters",
                            template.args.len(),
                            template.function.params.len()
                        )));
                    }
                    for binding in &template.args {
                        match binding {
                            ArgBinding::Arg(i) | ArgBinding::ArgField(i, _) | ArgBinding::MarketLookup(i) => {
                                if *i >= spec.arity {
                                    return Err(RegistryError::Invalid(format!(
                                        "{context}: binding references argument {i} beyond arity {}",
                                        spec.arity
                                    )));
                                }
                            }
                            ArgBinding::Role(role) => {
                                if protocol.role(role).is_none() {
                                    return Err(RegistryError::Invalid(format!(
                                        "{context}: binding references unknown role {role:?}"
                                    )));
                                }
                            }
                            ArgBinding::Constant(_) => {}
                        }
                    }
                }
                if let Some(pattern) = &spec.pattern {
                    for declared in &pattern.declares {
                        if protocol.role(declared).is_none() {
                            return Err(RegistryError::Invalid(format!(
                                "{context}: pattern declares unknown role {declared:?}"
                            )));
                        }
                    }
                    if let Some(chain) = pattern.network {
                        if chain != self.home_chain_id && !self.networks.contains_key(&chain) {
                            return Err(RegistryError::Invalid(format!(
                                "{context}: pattern references unknown network {chain}"
                            )));
                        }
                    }
                }
            }
        }
        for (chain, network) in &self.networks {
            if let Some(bridge) = &network.bridge {
                let params = &bridge.wrapper.params;
                if params.last() != Some(&ValueKind::Bytes) {
                    return Err(RegistryError::Invalid(format!(
                        "network {chain}: wrapper's final parameter must be bytes"
                    )));
                }
                if bridge.param_names.len() != params.len() {
                    return Err(RegistryError::Invalid(format!(
                        "network {chain}: {} names for {} wrapper parameters",
                        bridge.param_names.len(),
                        params.len()
                    )));
                }
                for (name, literal) in &bridge.defaults {
                    let position = bridge
                        .param_names
                        .iter()
                        .position(|n| n == name)
                        .ok_or_else(|| {
                            RegistryError::Invalid(format!(
                                "network {chain}: default for unknown parameter {name:?}"
                            ))
                        })?;
                    let kind = params[position];
                    if kind == ValueKind::Bytes {
                        return Err(RegistryError::Invalid(format!(
                            "network {chain}: the bytes payload parameter takes no default"
                        )));
                    }
                    make_value(kind, literal).map_err(|err| {
                        RegistryError::Invalid(format!(
                            "network {chain}: bad default for {name:?}: {err}"
                        ))
                    })?;
                }
            }
        }
        for entity in &self.entities {
            if let Some(protocol) = &entity.protocol {
                if !self.protocols.contains_key(protocol) {
                    return Err(RegistryError::Invalid(format!(
                        "entity {:?} references unknown protocol {protocol:?}",
                        entity.symbol
                    )));
                }
            }
        }
        Ok(())
    }
}

/// `FunctionSig` as canonical signature text in JSON.
mod sig_text {
    use super::FunctionSig;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(sig: &FunctionSig, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&sig.canonical())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(deserializer: D) -> Result<FunctionSig, D::Error> {
        let text = String::deserialize(deserializer)?;
        FunctionSig::parse(&text).map_err(serde::de::Error::custom)
    }
}

/// Chain-id-keyed maps with string keys in JSON.
mod chain_keyed {
    use super::NetworkConfig;
    use indexmap::IndexMap;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(
        map: &IndexMap<u64, NetworkConfig>,
        serializer: S,
    ) -> Result<S::Ok, S::Error> {
        let keyed: IndexMap<String, &NetworkConfig> =
            map.iter().map(|(k, v)| (k.to_string(), v)).collect();
        keyed.serialize(serializer)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        deserializer: D,
    ) -> Result<IndexMap<u64, NetworkConfig>, D::Error> {
        let keyed: IndexMap<String, NetworkConfig> = IndexMap::deserialize(deserializer)?;
        keyed
            .into_iter()
            .map(|(k, v)| {
                k.parse::<u64>()
                    .map(|chain| (chain, v))
                    .map_err(|_| serde::de::Error::custom(format!("bad chain id key {k:?}")))
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RegistryError {
    #[error("cannot read registry {0}: {1}")]
    Io(String, String),
    #[error("registry is not valid JSON: {0}")]
    Json(String),
    #[error("invalid registry: {0}")]
    Invalid(String),
}

/// The zero value of a kind, used for unset wrapper defaults.
pub fn zero_value(kind: ValueKind) -> Value {
    match kind {
        ValueKind::Address => Value::Address(Address::ZERO),
        ValueKind::Uint(bits) => Value::Uint { bits, value: 0u8.into() },
        ValueKind::Int(bits) => Value::Int { bits, value: 0.into() },
        ValueKind::FixedBytes(len) => Value::FixedBytes(vec![0u8; len as usize]),
        ValueKind::Bytes => Value::Bytes(vec![]),
        ValueKind::String => Value::Str(String::new()),
        ValueKind::Bool => Value::Bool(false),
    }
}
