//! Primitive types and runtime values shared by the checker, the interpreter
//! and the simulator.

use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// The closed set of attribute and parameter types.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Type {
    Address,
    Bool,
    Uint,
    Bytes32,
    String,
}

impl Type {
    pub fn keyword(self) -> &'static str {
        match self {
            Type::Address => "address",
            Type::Bool => "bool",
            Type::Uint => "uint",
            Type::Bytes32 => "bytes32",
            Type::String => "string",
        }
    }

    pub fn from_keyword(s: &str) -> Option<Type> {
        Some(match s {
            "address" => Type::Address,
            "bool" => Type::Bool,
            "uint" => Type::Uint,
            "bytes32" => Type::Bytes32,
            "string" => Type::String,
            _ => return None,
        })
    }

    /// Zero value an attribute holds before the constructor runs.
    pub fn default_value(self) -> Value {
        match self {
            Type::Address => Value::Address(Address::zero()),
            Type::Bool => Value::Bool(false),
            Type::Uint => Value::Uint(0),
            Type::Bytes32 => Value::Bytes32(Bytes32::ZERO),
            Type::String => Value::String(String::new()),
        }
    }
}

impl fmt::Display for Type {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.keyword())
    }
}

/// Opaque account identity. Clients, contracts, miners and the oracle
/// are all named by plain strings.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Address(pub String);

impl Address {
    pub fn new(s: impl Into<String>) -> Self {
        Address(s.into())
    }

    pub fn zero() -> Self {
        Address("0x0".to_string())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl From<&str> for Address {
    fn from(s: &str) -> Self {
        Address(s.to_string())
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// A 256-bit word. Ordering is big-endian unsigned, which is what
/// `sha256(..) < diff` style comparisons need.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Bytes32(pub [u8; 32]);

impl Bytes32 {
    pub const ZERO: Bytes32 = Bytes32([0; 32]);
    pub const MAX: Bytes32 = Bytes32([0xff; 32]);

    pub fn to_hex(&self) -> String {
        format!("0x{}", hex::encode(self.0))
    }

    pub fn from_hex(s: &str) -> Option<Bytes32> {
        let digits = s.strip_prefix("0x")?;
        if digits.len() != 64 {
            return None;
        }
        let mut out = [0u8; 32];
        hex::decode_to_slice(digits, &mut out).ok()?;
        Some(Bytes32(out))
    }

    pub fn digest(bytes: &[u8]) -> Bytes32 {
        let d = Sha256::digest(bytes);
        let mut out = [0u8; 32];
        out.copy_from_slice(&d);
        Bytes32(out)
    }
}

impl fmt::Debug for Bytes32 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Display for Bytes32 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl Serialize for Bytes32 {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Bytes32 {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Bytes32::from_hex(&s).ok_or_else(|| serde::de::Error::custom(format!("invalid bytes32 literal {s:?}")))
    }
}

/// A typed runtime value. Serialized externally tagged, e.g. `{"uint": 2}`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Value {
    Address(Address),
    Bool(bool),
    Uint(u64),
    Bytes32(Bytes32),
    String(String),
}

impl Value {
    pub fn ty(&self) -> Type {
        match self {
            Value::Address(_) => Type::Address,
            Value::Bool(_) => Type::Bool,
            Value::Uint(_) => Type::Uint,
            Value::Bytes32(_) => Type::Bytes32,
            Value::String(_) => Type::String,
        }
    }

    /// Canonical byte encoding: a one-byte type tag followed by the payload.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        match self {
            Value::Address(a) => {
                out.push(1);
                out.extend_from_slice(a.0.as_bytes());
            }
            Value::Bool(b) => {
                out.push(2);
                out.push(*b as u8);
            }
            Value::Uint(n) => {
                out.push(3);
                out.extend_from_slice(&n.to_be_bytes());
            }
            Value::Bytes32(b) => {
                out.push(4);
                out.extend_from_slice(&b.0);
            }
            Value::String(s) => {
                out.push(5);
                out.extend_from_slice(s.as_bytes());
            }
        }
        out
    }

    pub fn sha256(&self) -> Bytes32 {
        Bytes32::digest(&self.canonical_bytes())
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Address(a) => write!(f, "{a}"),
            Value::Bool(b) => write!(f, "{b}"),
            Value::Uint(n) => write!(f, "{n}"),
            Value::Bytes32(b) => write!(f, "{b}"),
            Value::String(s) => write!(f, "{s:?}"),
        }
    }
}
