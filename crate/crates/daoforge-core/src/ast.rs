//! DAOLang abstract syntax tree, typed runtime values, and the canonical
//! pretty-printer.
//!
//! Values carry Solidity-compatible semantic types (`address`, `uintN`,
//! `intN`, `bytesN`, `bytes`, `string`, `bool`) and are range-checked at
//! construction, so every downstream consumer can assume well-formedness.

use std::fmt;

use num_bigint::{BigInt, BigUint, Sign};
use num_traits::Num;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A 20-byte contract or account address.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Address(pub [u8; 20]);

impl Address {
    pub const ZERO: Address = Address([0u8; 20]);

    pub fn as_bytes(&self) -> &[u8; 20] {
        &self.0
    }

    /// Parses `0x`-prefixed or bare hex; exactly 40 hex digits, any case.
    pub fn parse(text: &str) -> Result<Address, ValueError> {
        let hex_part = text.strip_prefix("0x").or_else(|| text.strip_prefix("0X")).unwrap_or(text);
        if hex_part.len() != 40 {
            return Err(ValueError::Malformed {
                kind: ValueKind::Address,
                reason: format!("expected 40 hex digits, got {}", hex_part.len()),
            });
        }
        let bytes = hex::decode(hex_part).map_err(|_| ValueError::Malformed {
            kind: ValueKind::Address,
            reason: "invalid hex digit".into(),
        })?;
        let mut out = [0u8; 20];
        out.copy_from_slice(&bytes);
        Ok(Address(out))
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "0x{}", hex::encode(self.0))
    }
}

impl fmt::Debug for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Address({self})")
    }
}

impl std::str::FromStr for Address {
    type Err = ValueError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Address::parse(s)
    }
}

impl Serialize for Address {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Address {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        Address::parse(&text).map_err(serde::de::Error::custom)
    }
}

/// The semantic type of a [`Value`], mirroring Solidity's scalar types.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ValueKind {
    Address,
    /// Unsigned integer, bit width in 8..=256 step 8.
    Uint(u16),
    /// Signed integer, bit width in 8..=256 step 8.
    Int(u16),
    /// Fixed-size byte array, length in 1..=32.
    FixedBytes(u8),
    Bytes,
    String,
    Bool,
}

impl ValueKind {
    /// `true` for kinds encoded via offset/length framing in the ABI.
    pub fn is_dynamic(&self) -> bool {
        matches!(self, ValueKind::Bytes | ValueKind::String)
    }

    /// The canonical type name used in function signatures.
    pub fn canonical_name(&self) -> String {
        match self {
            ValueKind::Address => "address".into(),
            ValueKind::Uint(bits) => format!("uint{bits}"),
            ValueKind::Int(bits) => format!("int{bits}"),
            ValueKind::FixedBytes(len) => format!("bytes{len}"),
            ValueKind::Bytes => "bytes".into(),
            ValueKind::String => "string".into(),
            ValueKind::Bool => "bool".into(),
        }
    }

    /// Parses a type name. `uint`/`int` aliases canonicalize to the 256-bit
    /// forms as Solidity does for signatures.
    pub fn parse(text: &str) -> Result<ValueKind, ValueError> {
        let malformed = |reason: &str| ValueError::Malformed {
            kind: ValueKind::Bytes,
            reason: format!("bad type name {text:?}: {reason}"),
        };
        let kind = match text {
            "address" => ValueKind::Address,
            "bytes" => ValueKind::Bytes,
            "string" => ValueKind::String,
            "bool" => ValueKind::Bool,
            "uint" => ValueKind::Uint(256),
            "int" => ValueKind::Int(256),
            _ => {
                if let Some(bits) = text.strip_prefix("uint") {
                    ValueKind::Uint(parse_bits(bits).ok_or_else(|| malformed("bit width"))?)
                } else if let Some(bits) = text.strip_prefix("int") {
                    ValueKind::Int(parse_bits(bits).ok_or_else(|| malformed("bit width"))?)
                } else if let Some(len) = text.strip_prefix("bytes") {
                    let len: u8 = len.parse().map_err(|_| malformed("byte length"))?;
                    if len == 0 || len > 32 {
                        return Err(malformed("byte length out of 1..=32"));
                    }
                    ValueKind::FixedBytes(len)
                } else {
                    return Err(malformed("unknown type"));
                }
            }
        };
        Ok(kind)
    }
}

fn parse_bits(text: &str) -> Option<u16> {
    let bits: u16 = text.parse().ok()?;
    ((8..=256).contains(&bits) && bits.is_multiple_of(8)).then_some(bits)
}

impl fmt::Display for ValueKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.canonical_name())
    }
}

impl Serialize for ValueKind {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.canonical_name())
    }
}

impl<'de> Deserialize<'de> for ValueKind {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        ValueKind::parse(&text).map_err(serde::de::Error::custom)
    }
}

/// A range-checked runtime value.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Value {
    Address(Address),
    Uint { bits: u16, value: BigUint },
    Int { bits: u16, value: BigInt },
    FixedBytes(Vec<u8>),
    Bytes(Vec<u8>),
    Str(String),
    Bool(bool),
}

impl Value {
    pub fn kind(&self) -> ValueKind {
        match self {
            Value::Address(_) => ValueKind::Address,
            Value::Uint { bits, .. } => ValueKind::Uint(*bits),
            Value::Int { bits, .. } => ValueKind::Int(*bits),
            Value::FixedBytes(bytes) => ValueKind::FixedBytes(bytes.len() as u8),
            Value::Bytes(_) => ValueKind::Bytes,
            Value::Str(_) => ValueKind::String,
            Value::Bool(_) => ValueKind::Bool,
        }
    }

    /// Range-checked unsigned integer constructor.
    pub fn uint(bits: u16, value: BigUint) -> Result<Value, ValueError> {
        check_bits(bits)?;
        if value.bits() > bits as u64 {
            return Err(ValueError::OutOfRange {
                kind: ValueKind::Uint(bits),
                literal: value.to_string(),
            });
        }
        Ok(Value::Uint { bits, value })
    }

    /// Range-checked signed integer constructor.
    pub fn int(bits: u16, value: BigInt) -> Result<Value, ValueError> {
        check_bits(bits)?;
        let bound = BigInt::from(1u8) << (bits - 1);
        if value >= bound || value < -&bound {
            return Err(ValueError::OutOfRange {
                kind: ValueKind::Int(bits),
                literal: value.to_string(),
            });
        }
        Ok(Value::Int { bits, value })
    }

    pub fn fixed_bytes(bytes: Vec<u8>) -> Result<Value, ValueError> {
        if bytes.is_empty() || bytes.len() > 32 {
            return Err(ValueError::Malformed {
                kind: ValueKind::Bytes,
                reason: format!("fixed byte array length {} out of 1..=32", bytes.len()),
            });
        }
        Ok(Value::FixedBytes(bytes))
    }

    /// Convenience constructor for small unsigned constants.
    pub fn uint_from_u64(bits: u16, value: u64) -> Result<Value, ValueError> {
        Value::uint(bits, BigUint::from(value))
    }

    /// The canonical literal text; feeding it back through [`make_value`]
    /// with the same kind yields an equal value.
    pub fn canonical_literal(&self) -> String {
        match self {
            Value::Address(addr) => addr.to_string(),
            Value::Uint { value, .. } => value.to_string(),
            Value::Int { value, .. } => value.to_string(),
            Value::FixedBytes(bytes) | Value::Bytes(bytes) => format!("0x{}", hex::encode(bytes)),
            Value::Str(text) => quote_string(text),
            Value::Bool(flag) => flag.to_string(),
        }
    }
}

fn check_bits(bits: u16) -> Result<(), ValueError> {
    if (8..=256).contains(&bits) && bits.is_multiple_of(8) {
        Ok(())
    } else {
        Err(ValueError::Malformed {
            kind: ValueKind::Uint(256),
            reason: format!("bit width {bits} not in 8..=256 step 8"),
        })
    }
}

fn quote_string(text: &str) -> String {
    let mut out = String::with_capacity(text.len() + 2);
    out.push('"');
    for ch in text.chars() {
        match ch {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            '\r' => out.push_str("\\r"),
            other => out.push(other),
        }
    }
    out.push('"');
    out
}

fn unquote_string(raw: &str) -> Option<String> {
    let inner = raw.strip_prefix('"')?.strip_suffix('"')?;
    let mut out = String::with_capacity(inner.len());
    let mut chars = inner.chars();
    while let Some(ch) = chars.next() {
        if ch == '"' {
            return None; // unescaped quote can only be the terminator
        }
        if ch != '\\' {
            out.push(ch);
            continue;
        }
        match chars.next()? {
            '"' => out.push('"'),
            '\\' => out.push('\\'),
            'n' => out.push('\n'),
            't' => out.push('\t'),
            'r' => out.push('\r'),
            _ => return None,
        }
    }
    Some(out)
}

/// Value construction failure.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ValueError {
    #[error("literal {literal:?} out of range for {kind}")]
    OutOfRange { kind: ValueKind, literal: String },
    #[error("malformed {kind} literal: {reason}")]
    Malformed { kind: ValueKind, reason: String },
}

/// Builds a range-checked [`Value`] of the requested kind from a literal
/// token: hex address, decimal or `0x` hex integer, quoted string,
/// `true`/`false`, or `0x` hex bytes.
pub fn make_value(kind: ValueKind, raw: &str) -> Result<Value, ValueError> {
    let malformed = |reason: String| ValueError::Malformed { kind, reason };
    match kind {
        ValueKind::Address => Address::parse(raw).map(Value::Address),
        ValueKind::Uint(bits) => {
            let value = parse_biguint(raw).ok_or_else(|| malformed(format!("bad integer {raw:?}")))?;
            Value::uint(bits, value).map_err(|_| ValueError::OutOfRange {
                kind,
                literal: raw.to_string(),
            })
        }
        ValueKind::Int(bits) => {
            let value = if let Some(rest) = raw.strip_prefix('-') {
                let magnitude =
                    parse_biguint(rest).ok_or_else(|| malformed(format!("bad integer {raw:?}")))?;
                -BigInt::from_biguint(Sign::Plus, magnitude)
            } else {
                BigInt::from_biguint(
                    Sign::Plus,
                    parse_biguint(raw).ok_or_else(|| malformed(format!("bad integer {raw:?}")))?,
                )
            };
            Value::int(bits, value).map_err(|_| ValueError::OutOfRange {
                kind,
                literal: raw.to_string(),
            })
        }
        ValueKind::FixedBytes(len) => {
            let bytes = parse_hex_bytes(raw).ok_or_else(|| malformed(format!("bad hex {raw:?}")))?;
            if bytes.len() != len as usize {
                return Err(malformed(format!("expected {len} bytes, got {}", bytes.len())));
            }
            Value::fixed_bytes(bytes)
        }
        ValueKind::Bytes => parse_hex_bytes(raw)
            .map(Value::Bytes)
            .ok_or_else(|| malformed(format!("bad hex {raw:?}"))),
        ValueKind::String => unquote_string(raw)
            .map(Value::Str)
            .ok_or_else(|| malformed("expected a double-quoted string".into())),
        ValueKind::Bool => match raw {
            "true" => Ok(Value::Bool(true)),
            "false" => Ok(Value::Bool(false)),
            _ => Err(malformed(format!("expected true or false, got {raw:?}"))),
        },
    }
}

fn parse_biguint(raw: &str) -> Option<BigUint> {
    if raw.is_empty() {
        return None;
    }
    if let Some(hex_part) = raw.strip_prefix("0x").or_else(|| raw.strip_prefix("0X")) {
        if hex_part.is_empty() {
            return None;
        }
        BigUint::from_str_radix(hex_part, 16).ok()
    } else {
        BigUint::from_str_radix(raw, 10).ok()
    }
}

fn parse_hex_bytes(raw: &str) -> Option<Vec<u8>> {
    let hex_part = raw.strip_prefix("0x").or_else(|| raw.strip_prefix("0X"))?;
    hex::decode(hex_part).ok()
}

impl Serialize for Value {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut state = serializer.serialize_struct("Value", 2)?;
        state.serialize_field("kind", &self.kind())?;
        state.serialize_field("value", &self.canonical_literal())?;
        state.end()
    }
}

impl<'de> Deserialize<'de> for Value {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Repr {
            kind: ValueKind,
            value: String,
        }
        let repr = Repr::deserialize(deserializer)?;
        make_value(repr.kind, &repr.value).map_err(serde::de::Error::custom)
    }
}

/// A complete DAOLang program: an ordered statement sequence.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Program {
    pub statements: Vec<Statement>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Statement {
    /// A bare expression evaluated for its value.
    Expression(Expr),
    /// `name <- expr`
    Assignment { name: String, value: Expr },
    /// One action call under a network group:
    /// `network_ref(protocol_ref:action(args))`. A group with several
    /// comma-separated calls parses into one `Transaction` per call.
    Transaction { network: String, protocol: String, action: String, args: Vec<Expr> },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Expr {
    Identifier(String),
    Constant(Value),
    /// `{key: expr, ...}` with unique keys, order preserved.
    Object(Vec<(String, Expr)>),
    /// `network{chainId}`, chain id > 0.
    Network(u64),
    /// `protocol{addr, ...}`, non-empty.
    Protocol(Vec<Address>),
}

/// Emits the canonical surface form: one statement per line, `;` terminated,
/// lowercase keywords. The output reparses to a structurally equal program.
pub fn pretty_print(program: &Program) -> String {
    let mut out = String::new();
    for statement in &program.statements {
        print_statement(statement, &mut out);
        out.push('\n');
    }
    out
}

fn print_statement(statement: &Statement, out: &mut String) {
    match statement {
        Statement::Expression(expr) => {
            print_expr(expr, out);
            out.push(';');
        }
        Statement::Assignment { name, value } => {
            out.push_str(name);
            out.push_str(" <- ");
            print_expr(value, out);
            out.push(';');
        }
        Statement::Transaction { network, protocol, action, args } => {
            out.push_str(network);
            out.push('(');
            out.push_str(protocol);
            out.push(':');
            out.push_str(action);
            out.push('(');
            for (i, arg) in args.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                print_expr(arg, out);
            }
            out.push_str("));");
        }
    }
}

fn print_expr(expr: &Expr, out: &mut String) {
    match expr {
        Expr::Identifier(name) => out.push_str(name),
        Expr::Constant(value) => out.push_str(&value.canonical_literal()),
        Expr::Object(pairs) => {
            out.push('{');
            for (i, (key, value)) in pairs.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                out.push_str(key);
                out.push_str(": ");
                print_expr(value, out);
            }
            out.push('}');
        }
        Expr::Network(chain_id) => {
            out.push_str("network{");
            out.push_str(&chain_id.to_string());
            out.push('}');
        }
        Expr::Protocol(addresses) => {
            out.push_str("protocol{");
            for (i, address) in addresses.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&address.to_string());
            }
            out.push('}');
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn make_value_collateral_address() {
        let value = make_value(ValueKind::Address, "0x7f39c581f595b53c5cb19bd0b3f8da6c935e2ca0")
            .expect("address");
        match &value {
            Value::Address(addr) => {
                assert_eq!(addr.0.len(), 20);
                assert_eq!(addr.to_string(), "0x7f39c581f595b53c5cb19bd0b3f8da6c935e2ca0");
            }
            other => panic!("unexpected value {other:?}"),
        }
    }

    #[test]
    fn make_value_uint128_word() {
        let value = make_value(ValueKind::Uint(128), "5000").expect("uint128");
        assert_eq!(value, Value::uint_from_u64(128, 5000).unwrap());
        // 5000 = 0x1388, the third payload word of the golden fixture
        assert_eq!(make_value(ValueKind::Uint(128), "0x1388").unwrap(), value);
    }

    #[test]
    fn make_value_uint8_boundary() {
        assert_eq!(make_value(ValueKind::Uint(8), "255").unwrap(), Value::uint_from_u64(8, 255).unwrap());
        assert!(matches!(
            make_value(ValueKind::Uint(8), "256"),
            Err(ValueError::OutOfRange { .. })
        ));
    }

    #[test]
    fn make_value_bool() {
        assert_eq!(make_value(ValueKind::Bool, "true").unwrap(), Value::Bool(true));
        assert!(matches!(make_value(ValueKind::Bool, "yes"), Err(ValueError::Malformed { .. })));
    }

    #[test]
    fn make_value_int_bounds() {
        assert!(make_value(ValueKind::Int(8), "-128").is_ok());
        assert!(make_value(ValueKind::Int(8), "127").is_ok());
        assert!(matches!(make_value(ValueKind::Int(8), "128"), Err(ValueError::OutOfRange { .. })));
        assert!(matches!(make_value(ValueKind::Int(8), "-129"), Err(ValueError::OutOfRange { .. })));
    }

    #[test]
    fn make_value_bad_hex_length() {
        assert!(matches!(
            make_value(ValueKind::Address, "0x1234"),
            Err(ValueError::Malformed { .. })
        ));
        assert!(matches!(
            make_value(ValueKind::FixedBytes(4), "0x123456"),
            Err(ValueError::Malformed { .. })
        ));
    }

    #[test]
    fn canonical_literal_round_trips() {
        let samples = vec![
            make_value(ValueKind::Address, "0x316F9708bB98af7dA9c68C1C3b5e79039cD336E3").unwrap(),
            make_value(ValueKind::Uint(256), "123456789012345678901234567890").unwrap(),
            make_value(ValueKind::Int(64), "-42").unwrap(),
            make_value(ValueKind::FixedBytes(4), "0xdeadbeef").unwrap(),
            make_value(ValueKind::Bytes, "0x").unwrap(),
            make_value(ValueKind::String, "\"line\\none \\\"two\\\"\"").unwrap(),
            Value::Bool(false),
        ];
        for value in samples {
            let reparsed = make_value(value.kind(), &value.canonical_literal()).unwrap();
            assert_eq!(reparsed, value);
        }
    }

    #[test]
    fn kind_names_parse_back() {
        for name in ["address", "uint256", "uint8", "int128", "bytes32", "bytes1", "bytes", "string", "bool"] {
            let kind = ValueKind::parse(name).unwrap();
            assert_eq!(kind.canonical_name(), name);
        }
        assert_eq!(ValueKind::parse("uint").unwrap(), ValueKind::Uint(256));
        assert!(ValueKind::parse("uint7").is_err());
        assert!(ValueKind::parse("bytes33").is_err());
        assert!(ValueKind::parse("tuple").is_err());
    }

    #[test]
    fn empty_program_prints_empty() {
        assert_eq!(pretty_print(&Program::default()), "");
    }

    #[test]
    fn assignment_prints_canonically() {
        let program = Program {
            statements: vec![Statement::Assignment {
                name: "x".into(),
                value: Expr::Constant(Value::uint_from_u64(256, 5).unwrap()),
            }],
        };
        assert_eq!(pretty_print(&program), "x <- 5;\n");
    }
}
