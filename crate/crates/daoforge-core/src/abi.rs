//! Canonical function signatures, keccak-256 selectors, and Solidity ABI v2
//! encoding/decoding of argument tuples.
//!
//! The hash is the pre-standard Keccak (padding byte 0x01), not FIPS-202
//! SHA3-256 — the Ethereum convention, and the difference matters for every
//! selector.

use num_bigint::{BigInt, BigUint, Sign};
use serde::{Deserialize, Serialize};
use sha3::{Digest, Keccak256};
use thiserror::Error;

use crate::ast::{Address, Value, ValueKind};

/// A function name plus its ordered parameter kinds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionSig {
    pub name: String,
    pub params: Vec<ValueKind>,
}

impl FunctionSig {
    pub fn new(name: impl Into<String>, params: Vec<ValueKind>) -> Self {
        FunctionSig { name: name.into(), params }
    }

    /// `name(type1,type2,...)` with explicit bit widths and no spaces.
    pub fn canonical(&self) -> String {
        canonical_signature(&self.name, &self.params)
    }

    pub fn selector(&self) -> [u8; 4] {
        selector(&self.canonical())
    }

    /// Parses canonical signature text back into name and parameter kinds.
    pub fn parse(text: &str) -> Result<FunctionSig, SigParseError> {
        let open = text.find('(').ok_or_else(|| SigParseError(text.into()))?;
        if !text.ends_with(')') {
            return Err(SigParseError(text.into()));
        }
        let name = &text[..open];
        if name.is_empty() {
            return Err(SigParseError(text.into()));
        }
        let inner = &text[open + 1..text.len() - 1];
        let mut params = Vec::new();
        if !inner.is_empty() {
            for part in inner.split(',') {
                let kind = ValueKind::parse(part).map_err(|_| SigParseError(text.into()))?;
                params.push(kind);
            }
        }
        Ok(FunctionSig { name: name.to_string(), params })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unparseable function signature {0:?}")]
pub struct SigParseError(pub String);

/// Joins a name and parameter kinds into canonical signature text.
pub fn canonical_signature(name: &str, kinds: &[ValueKind]) -> String {
    let params: Vec<String> = kinds.iter().map(|k| k.canonical_name()).collect();
    format!("{name}({})", params.join(","))
}

/// Keccak-256 of arbitrary bytes.
pub fn keccak256(data: &[u8]) -> [u8; 32] {
    let mut hasher = Keccak256::new();
    hasher.update(data);
    hasher.finalize().into()
}

/// First 4 bytes of keccak-256 over the ASCII signature text.
pub fn selector(canonical: &str) -> [u8; 4] {
    let digest = keccak256(canonical.as_bytes());
    [digest[0], digest[1], digest[2], digest[3]]
}

/// ABI-encoded argument bytes (no selector).
#[derive(Debug, Clone, PartialEq, Eq, Default, Hash)]
pub struct EncodedArgs(pub Vec<u8>);

impl EncodedArgs {
    pub fn as_slice(&self) -> &[u8] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        format!("0x{}", hex::encode(&self.0))
    }

    pub fn from_hex(text: &str) -> Result<EncodedArgs, DecodeError> {
        let hex_part = text.strip_prefix("0x").or_else(|| text.strip_prefix("0X")).unwrap_or(text);
        hex::decode(hex_part).map(EncodedArgs).map_err(|_| DecodeError::BadHex)
    }
}

const WORD: usize = 32;

/// Encodes a tuple of values with head/tail layout: static kinds inline as
/// 32-byte words, dynamic kinds via offset, length, and right-padded data.
pub fn encode_args(values: &[Value]) -> EncodedArgs {
    let head_len = values.len() * WORD;
    let mut head: Vec<u8> = Vec::with_capacity(head_len);
    let mut tail: Vec<u8> = Vec::new();
    for value in values {
        if value.kind().is_dynamic() {
            let offset = head_len + tail.len();
            head.extend_from_slice(&uint_word(&BigUint::from(offset)));
            let data = match value {
                Value::Bytes(bytes) => bytes.as_slice(),
                Value::Str(text) => text.as_bytes(),
                _ => unreachable!("only bytes and string are dynamic"),
            };
            tail.extend_from_slice(&uint_word(&BigUint::from(data.len())));
            tail.extend_from_slice(data);
            let pad = (WORD - data.len() % WORD) % WORD;
            tail.resize(tail.len() + pad, 0u8);
        } else {
            head.extend_from_slice(&static_word(value));
        }
    }
    head.extend_from_slice(&tail);
    EncodedArgs(head)
}

fn static_word(value: &Value) -> [u8; 32] {
    let mut word = [0u8; 32];
    match value {
        Value::Address(addr) => word[12..].copy_from_slice(addr.as_bytes()),
        Value::Uint { value, .. } => return uint_word(value),
        Value::Int { value, .. } => return int_word(value),
        Value::FixedBytes(bytes) => word[..bytes.len()].copy_from_slice(bytes),
        Value::Bool(flag) => word[31] = *flag as u8,
        Value::Bytes(_) | Value::Str(_) => unreachable!("dynamic kinds have no static word"),
    }
    word
}

fn uint_word(value: &BigUint) -> [u8; 32] {
    let bytes = value.to_bytes_be();
    let mut word = [0u8; 32];
    word[WORD - bytes.len()..].copy_from_slice(&bytes);
    word
}

fn int_word(value: &BigInt) -> [u8; 32] {
    if value.sign() == Sign::Minus {
        // two's complement: 2^256 + value
        let modulus = BigUint::from(1u8) << 256;
        let as_unsigned = modulus - (-value).to_biguint().expect("negative magnitude");
        uint_word(&as_unsigned)
    } else {
        uint_word(&value.to_biguint().expect("non-negative"))
    }
}

/// Decode failure; strict about padding so corrupted payloads surface.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error("payload truncated: need {needed} bytes, have {have}")]
    Truncated { needed: usize, have: usize },
    #[error("dynamic offset {offset} out of bounds")]
    OffsetOutOfBounds { offset: usize },
    #[error("nonzero padding in {kind} word")]
    NonzeroPadding { kind: ValueKind },
    #[error("bool word is neither 0 nor 1")]
    InvalidBool,
    #[error("length word {length} too large")]
    LengthTooLarge { length: u128 },
    #[error("string payload is not valid UTF-8")]
    InvalidUtf8,
    #[error("payload is not valid hex text")]
    BadHex,
}

/// Left-inverse of [`encode_args`] for the given parameter kinds.
pub fn decode_args(kinds: &[ValueKind], data: &[u8]) -> Result<Vec<Value>, DecodeError> {
    let head_len = kinds.len() * WORD;
    if data.len() < head_len {
        return Err(DecodeError::Truncated { needed: head_len, have: data.len() });
    }
    let mut values = Vec::with_capacity(kinds.len());
    for (i, kind) in kinds.iter().enumerate() {
        let word = &data[i * WORD..(i + 1) * WORD];
        if kind.is_dynamic() {
            values.push(decode_dynamic(*kind, word, data)?);
        } else {
            values.push(decode_static(*kind, word)?);
        }
    }
    Ok(values)
}

fn decode_static(kind: ValueKind, word: &[u8]) -> Result<Value, DecodeError> {
    match kind {
        ValueKind::Address => {
            if word[..12].iter().any(|&b| b != 0) {
                return Err(DecodeError::NonzeroPadding { kind });
            }
            let mut addr = [0u8; 20];
            addr.copy_from_slice(&word[12..]);
            Ok(Value::Address(Address(addr)))
        }
        ValueKind::Uint(bits) => {
            let value = BigUint::from_bytes_be(word);
            Value::uint(bits, value).map_err(|_| DecodeError::NonzeroPadding { kind })
        }
        ValueKind::Int(bits) => {
            let unsigned = BigUint::from_bytes_be(word);
            let signed = if word[0] & 0x80 != 0 {
                BigInt::from_biguint(Sign::Plus, unsigned) - (BigInt::from(1u8) << 256)
            } else {
                BigInt::from_biguint(Sign::Plus, unsigned)
            };
            Value::int(bits, signed).map_err(|_| DecodeError::NonzeroPadding { kind })
        }
        ValueKind::FixedBytes(len) => {
            let len = len as usize;
            if word[len..].iter().any(|&b| b != 0) {
                return Err(DecodeError::NonzeroPadding { kind });
            }
            Ok(Value::FixedBytes(word[..len].to_vec()))
        }
        ValueKind::Bool => {
            if word[..31].iter().any(|&b| b != 0) || word[31] > 1 {
                return Err(DecodeError::InvalidBool);
            }
            Ok(Value::Bool(word[31] == 1))
        }
        ValueKind::Bytes | ValueKind::String => unreachable!("dynamic kinds decoded elsewhere"),
    }
}

fn decode_dynamic(kind: ValueKind, head_word: &[u8], data: &[u8]) -> Result<Value, DecodeError> {
    let offset = word_to_usize(head_word)
        .ok_or(DecodeError::OffsetOutOfBounds { offset: usize::MAX })?;
    let length_end = offset
        .checked_add(WORD)
        .ok_or(DecodeError::OffsetOutOfBounds { offset })?;
    if length_end > data.len() {
        return Err(DecodeError::OffsetOutOfBounds { offset });
    }
    let length = word_to_usize(&data[offset..length_end])
        .ok_or(DecodeError::LengthTooLarge { length: u128::MAX })?;
    let start = length_end;
    let end = start.checked_add(length).ok_or(DecodeError::LengthTooLarge {
        length: length as u128,
    })?;
    if end > data.len() {
        return Err(DecodeError::Truncated { needed: end, have: data.len() });
    }
    let bytes = data[start..end].to_vec();
    match kind {
        ValueKind::Bytes => Ok(Value::Bytes(bytes)),
        ValueKind::String => String::from_utf8(bytes)
            .map(Value::Str)
            .map_err(|_| DecodeError::InvalidUtf8),
        _ => unreachable!(),
    }
}

fn word_to_usize(word: &[u8]) -> Option<usize> {
    if word[..WORD - 8].iter().any(|&b| b != 0) {
        return None;
    }
    let mut buf = [0u8; 8];
    buf.copy_from_slice(&word[WORD - 8..]);
    usize::try_from(u64::from_be_bytes(buf)).ok()
}
