//! Symbolic evaluation of DAOLang programs into proposal payloads.
//!
//! Statements run in order against a store of identifier bindings; each
//! transaction statement expands through its registry templates into
//! concrete calls, which are wrapped into a bridge message when the target
//! network is not the home chain. Evaluation is deterministic: equal
//! (program, registry) inputs produce byte-identical payloads.

use std::collections::HashMap;
use std::fmt;

use num_bigint::BigUint;
use num_traits::Zero;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::abi::{encode_args, EncodedArgs};
use crate::ast::{Address, Expr, Program, Statement, Value, ValueKind};
use crate::registry::{ActionSpec, ArgBinding, Protocol, Registry};

/// A value an identifier can be bound to: a scalar, a network or protocol
/// declaration, or an object literal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RuntimeValue {
    Scalar(Value),
    Network(u64),
    Protocol(Vec<Address>),
    Object(Vec<(String, RuntimeValue)>),
}

impl RuntimeValue {
    fn describe(&self) -> String {
        match self {
            RuntimeValue::Scalar(value) => value.kind().to_string(),
            RuntimeValue::Network(_) => "network".into(),
            RuntimeValue::Protocol(_) => "protocol".into(),
            RuntimeValue::Object(_) => "object".into(),
        }
    }
}

/// Evaluation state: program counter, identifier store, accumulated calls.
#[derive(Debug, Default)]
pub struct EvalState {
    pub counter: usize,
    pub store: HashMap<String, RuntimeValue>,
    pub output: Vec<Call>,
}

/// One encoded transaction: target, wei value, canonical signature, and
/// either encoded argument bytes or — for bridge wrappers only — the list
/// of calls riding in the wrapper's `bytes` argument.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Call {
    pub address: Address,
    pub value: BigUint,
    pub function_sig: String,
    pub payload: CallPayload,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CallPayload {
    Encoded(EncodedArgs),
    Nested(Vec<Call>),
}

impl Call {
    pub fn encoded(address: Address, function_sig: impl Into<String>, args: EncodedArgs) -> Call {
        Call {
            address,
            value: BigUint::zero(),
            function_sig: function_sig.into(),
            payload: CallPayload::Encoded(args),
        }
    }
}

/// The ordered list of top-level calls a proposal executes.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProposalPayload(pub Vec<Call>);

impl ProposalPayload {
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn calls(&self) -> &[Call] {
        &self.0
    }

    /// Compact JSON with a fixed field order; the byte-equality surface
    /// used by the exact-match classifier.
    pub fn to_canonical_json(&self) -> String {
        serde_json::to_string(self).expect("payload serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<ProposalPayload, serde_json::Error> {
        serde_json::from_str(text)
    }
}

// Payload JSON mirrors the golden proposal shape:
// [{"address":"0x..","value":"0","functionSig":"..","payload":"0x.." | [..]}]
impl Serialize for Call {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut state = serializer.serialize_struct("Call", 4)?;
        state.serialize_field("address", &self.address)?;
        state.serialize_field("value", &self.value.to_string())?;
        state.serialize_field("functionSig", &self.function_sig)?;
        match &self.payload {
            CallPayload::Encoded(args) => state.serialize_field("payload", &args.to_hex())?,
            CallPayload::Nested(calls) => state.serialize_field("payload", calls)?,
        }
        state.end()
    }
}

impl<'de> Deserialize<'de> for Call {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(rename_all = "camelCase", deny_unknown_fields)]
        struct Repr {
            address: Address,
            value: String,
            function_sig: String,
            payload: PayloadRepr,
        }
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum PayloadRepr {
            Hex(String),
            Nested(Vec<Call>),
        }
        let repr = Repr::deserialize(deserializer)?;
        let value = repr
            .value
            .parse::<BigUint>()
            .map_err(|_| serde::de::Error::custom(format!("bad call value {:?}", repr.value)))?;
        let payload = match repr.payload {
            PayloadRepr::Hex(text) => CallPayload::Encoded(
                EncodedArgs::from_hex(&text).map_err(serde::de::Error::custom)?,
            ),
            PayloadRepr::Nested(calls) => CallPayload::Nested(calls),
        };
        Ok(Call { address: repr.address, value, function_sig: repr.function_sig, payload })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("unbound identifier {0:?}")]
    UnboundIdentifier(String),
    #[error("unknown protocol: {0}")]
    UnknownProtocol(String),
    #[error("unknown action {action:?} for protocol {protocol:?}")]
    UnknownAction { protocol: String, action: String },
    #[error("unknown network {0}")]
    UnknownNetwork(u64),
    #[error("type mismatch: {0}")]
    TypeMismatch(String),
    #[error("action {action:?} takes {expected} arguments, got {found}")]
    ArityMismatch { action: String, expected: usize, found: usize },
    #[error("bridge message for network {0} has no calls")]
    EmptyBridgePayload(u64),
}

/// Runs a parsed program under a registry and returns the payload.
pub fn eval_program(program: &Program, registry: &Registry) -> Result<ProposalPayload, EvalError> {
    let mut state = EvalState::default();
    for (index, statement) in program.statements.iter().enumerate() {
        state.counter = index;
        eval_statement(statement, &mut state, registry)?;
    }
    Ok(ProposalPayload(state.output))
}

/// Evaluates one statement against the running state.
pub fn eval_statement(
    statement: &Statement,
    state: &mut EvalState,
    registry: &Registry,
) -> Result<(), EvalError> {
    match statement {
        Statement::Expression(expr) => {
            eval_expr(expr, &state.store)?;
        }
        Statement::Assignment { name, value } => {
            let bound = eval_expr(value, &state.store)?;
            // re-assignment overwrites: last write wins
            state.store.insert(name.clone(), bound);
        }
        Statement::Transaction { network, protocol, action, args } => {
            let chain_id = resolve_network_ref(network, &state.store, registry)?;
            let protocol_name = resolve_protocol_ref(protocol, &state.store, registry)?;
            let mut values = Vec::with_capacity(args.len());
            for arg in args {
                values.push(eval_expr(arg, &state.store)?);
            }
            let calls = resolve_action(registry, &protocol_name, action, &values)?;
            let wrapped = wrap_cross_chain(registry, chain_id, calls)?;
            state.output.extend(wrapped);
        }
    }
    Ok(())
}

pub fn eval_expr(
    expr: &Expr,
    store: &HashMap<String, RuntimeValue>,
) -> Result<RuntimeValue, EvalError> {
    match expr {
        Expr::Identifier(name) => store
            .get(name)
            .cloned()
            .ok_or_else(|| EvalError::UnboundIdentifier(name.clone())),
        Expr::Constant(value) => Ok(RuntimeValue::Scalar(value.clone())),
        Expr::Object(pairs) => {
            let mut evaluated = Vec::with_capacity(pairs.len());
            for (key, value) in pairs {
                evaluated.push((key.clone(), eval_expr(value, store)?));
            }
            Ok(RuntimeValue::Object(evaluated))
        }
        Expr::Network(chain_id) => Ok(RuntimeValue::Network(*chain_id)),
        Expr::Protocol(addresses) => Ok(RuntimeValue::Protocol(addresses.clone())),
    }
}

fn resolve_network_ref(
    name: &str,
    store: &HashMap<String, RuntimeValue>,
    registry: &Registry,
) -> Result<u64, EvalError> {
    match store.get(name) {
        Some(RuntimeValue::Network(chain_id)) => Ok(*chain_id),
        Some(other) => Err(EvalError::TypeMismatch(format!(
            "{name:?} names a {}, expected a network",
            other.describe()
        ))),
        None => registry
            .network_by_alias(name)
            .map(|(chain, _)| chain)
            .ok_or_else(|| EvalError::UnboundIdentifier(name.to_string())),
    }
}

fn resolve_protocol_ref(
    name: &str,
    store: &HashMap<String, RuntimeValue>,
    registry: &Registry,
) -> Result<String, EvalError> {
    match store.get(name) {
        Some(RuntimeValue::Protocol(addresses)) => registry
            .protocol_by_addresses(addresses)
            .map(|(found, _)| found.to_string())
            .ok_or_else(|| {
                let listed: Vec<String> = addresses.iter().map(|a| a.to_string()).collect();
                EvalError::UnknownProtocol(format!(
                    "no registered protocol covers {}",
                    listed.join(", ")
                ))
            }),
        Some(other) => Err(EvalError::TypeMismatch(format!(
            "{name:?} names a {}, expected a protocol",
            other.describe()
        ))),
        None => {
            if registry.protocol(name).is_some() {
                Ok(name.to_string())
            } else {
                Err(EvalError::UnboundIdentifier(name.to_string()))
            }
        }
    }
}

/// Expands one action call into its template calls, binding and encoding
/// every argument.
pub fn resolve_action(
    registry: &Registry,
    protocol_name: &str,
    action_name: &str,
    args: &[RuntimeValue],
) -> Result<Vec<Call>, EvalError> {
    let protocol = registry
        .protocol(protocol_name)
        .ok_or_else(|| EvalError::UnknownProtocol(format!("{protocol_name:?} not registered")))?;
    let spec = registry.action(protocol_name, action_name).ok_or_else(|| {
        EvalError::UnknownAction { protocol: protocol_name.into(), action: action_name.into() }
    })?;
    if args.len() != spec.arity {
        return Err(EvalError::ArityMismatch {
            action: action_name.into(),
            expected: spec.arity,
            found: args.len(),
        });
    }
    expand_templates(spec, protocol, args)
}

fn expand_templates(
    spec: &ActionSpec,
    protocol: &Protocol,
    args: &[RuntimeValue],
) -> Result<Vec<Call>, EvalError> {
    let mut calls = Vec::with_capacity(spec.templates.len());
    for template in &spec.templates {
        let target = protocol
            .role(&template.target)
            .expect("templates validated against protocol roles at load");
        let mut bound = Vec::with_capacity(template.args.len());
        for (binding, kind) in template.args.iter().zip(&template.function.params) {
            bound.push(bind_argument(binding, *kind, protocol, args)?);
        }
        calls.push(Call::encoded(target, template.function.canonical(), encode_args(&bound)));
    }
    Ok(calls)
}

fn bind_argument(
    binding: &ArgBinding,
    kind: ValueKind,
    protocol: &Protocol,
    args: &[RuntimeValue],
) -> Result<Value, EvalError> {
    match binding {
        ArgBinding::Arg(index) => scalar_argument(&args[*index], *index).and_then(|v| coerce(v, kind)),
        ArgBinding::ArgField(index, field) => match &args[*index] {
            RuntimeValue::Object(pairs) => {
                let value = pairs
                    .iter()
                    .find(|(key, _)| key == field)
                    .map(|(_, value)| value)
                    .ok_or_else(|| {
                        EvalError::TypeMismatch(format!(
                            "argument {index} has no field {field:?}"
                        ))
                    })?;
                match value {
                    RuntimeValue::Scalar(scalar) => coerce(scalar.clone(), kind),
                    other => Err(EvalError::TypeMismatch(format!(
                        "field {field:?} is a {}, expected a scalar",
                        other.describe()
                    ))),
                }
            }
            other => Err(EvalError::TypeMismatch(format!(
                "argument {index} is a {}, expected an object with field {field:?}",
                other.describe()
            ))),
        },
        ArgBinding::Role(role) => {
            let address = protocol
                .role(role)
                .expect("role bindings validated at load");
            coerce(Value::Address(address), kind)
        }
        ArgBinding::MarketLookup(index) => {
            let token = match scalar_argument(&args[*index], *index)? {
                Value::Address(address) => address,
                other => {
                    return Err(EvalError::TypeMismatch(format!(
                        "market lookup needs an address, argument {index} is {}",
                        other.kind()
                    )));
                }
            };
            let proxy = protocol.market_proxy(&token).ok_or_else(|| {
                EvalError::TypeMismatch(format!("no market registered for token {token}"))
            })?;
            coerce(Value::Address(proxy), kind)
        }
        ArgBinding::Constant(value) => coerce(value.clone(), kind),
    }
}

fn scalar_argument(arg: &RuntimeValue, index: usize) -> Result<Value, EvalError> {
    match arg {
        RuntimeValue::Scalar(value) => Ok(value.clone()),
        other => Err(EvalError::TypeMismatch(format!(
            "argument {index} is a {}, expected a scalar value",
            other.describe()
        ))),
    }
}

/// Fits a value to a template parameter kind. Integer literals narrow to
/// the declared width when in range; everything else must match exactly.
pub fn coerce(value: Value, kind: ValueKind) -> Result<Value, EvalError> {
    if value.kind() == kind {
        return Ok(value);
    }
    let mismatch = |value: &Value| {
        EvalError::TypeMismatch(format!("cannot use {} where {kind} is expected", value.kind()))
    };
    match (&value, kind) {
        (Value::Uint { value: magnitude, .. }, ValueKind::Uint(bits)) => {
            Value::uint(bits, magnitude.clone()).map_err(|_| {
                EvalError::TypeMismatch(format!("{magnitude} does not fit in {kind}"))
            })
        }
        (Value::Uint { value: magnitude, .. }, ValueKind::Int(bits)) => {
            Value::int(bits, magnitude.clone().into()).map_err(|_| {
                EvalError::TypeMismatch(format!("{magnitude} does not fit in {kind}"))
            })
        }
        (Value::Int { value: signed, .. }, ValueKind::Int(bits)) => {
            Value::int(bits, signed.clone()).map_err(|_| {
                EvalError::TypeMismatch(format!("{signed} does not fit in {kind}"))
            })
        }
        (Value::Int { value: signed, .. }, ValueKind::Uint(bits)) => signed
            .to_biguint()
            .ok_or_else(|| mismatch(&value))
            .and_then(|magnitude| {
                Value::uint(bits, magnitude.clone()).map_err(|_| {
                    EvalError::TypeMismatch(format!("{magnitude} does not fit in {kind}"))
                })
            }),
        _ => Err(mismatch(&value)),
    }
}

/// Applies the network rule: home-chain calls pass through unchanged; a
/// bridgeable network wraps the calls into a single bridge message whose
/// `bytes` argument carries them.
pub fn wrap_cross_chain(
    registry: &Registry,
    chain_id: u64,
    calls: Vec<Call>,
) -> Result<Vec<Call>, EvalError> {
    if chain_id == registry.home_chain_id {
        return Ok(calls);
    }
    let network = registry.network(chain_id).ok_or(EvalError::UnknownNetwork(chain_id))?;
    let bridge = network.bridge.as_ref().ok_or(EvalError::UnknownNetwork(chain_id))?;
    if calls.is_empty() {
        return Err(EvalError::EmptyBridgePayload(chain_id));
    }
    Ok(vec![Call {
        address: bridge.inbox,
        value: BigUint::zero(),
        function_sig: bridge.wrapper.canonical(),
        payload: CallPayload::Nested(calls),
    }])
}

impl fmt::Display for Call {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.payload {
            CallPayload::Encoded(args) => {
                write!(f, "{} {} {}", self.address, self.function_sig, args.to_hex())
            }
            CallPayload::Nested(calls) => {
                write!(f, "{} {} [{} nested]", self.address, self.function_sig, calls.len())
            }
        }
    }
}
