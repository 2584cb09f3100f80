//! Canonical encoding used for everything that is signed, hashed or persisted.
//!
//! The encoding is compact JSON with map keys in lexicographic byte order,
//! integers in minimal decimal form and no insignificant whitespace. Floating
//! point numbers are rejected so two implementations can never disagree on the
//! bytes of a record.

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest as _, Sha256};
use thiserror::Error;

/// Length in bytes of every digest produced by [`digest`].
pub const DIGEST_LEN: usize = 32;

/// A fixed-size SHA-256 digest.
pub type Digest = [u8; DIGEST_LEN];

#[derive(Debug, Error)]
pub enum CanonicalError {
    #[error("UNSUPPORTED_VALUE: {0}")]
    UnsupportedValue(String),
    #[error("malformed record: {0}")]
    Malformed(#[from] serde_json::Error),
    #[error("non-canonical encoding")]
    NotCanonical,
}

/// Serializes `value` into canonical bytes.
pub fn to_canonical_bytes<T: Serialize + ?Sized>(value: &T) -> Result<Vec<u8>, CanonicalError> {
    let value = serde_json::to_value(value)?;
    canonical_value_bytes(&value)
}

/// Canonical bytes of an already-built JSON value.
pub fn canonical_value_bytes(value: &Value) -> Result<Vec<u8>, CanonicalError> {
    check_supported(value)?;
    // serde_json's default map is a BTreeMap<String, _>, so keys come out in
    // byte order and the compact writer emits no whitespace.
    Ok(serde_json::to_vec(value)?)
}

/// Like [`to_canonical_bytes`] but for types whose fields are all known to be
/// encodable. Panics only on a programming error (a float slipped in).
pub fn encode<T: Serialize + ?Sized>(value: &T) -> Vec<u8> {
    to_canonical_bytes(value).expect("record contains only canonical-encodable values")
}

/// Decodes bytes produced by [`to_canonical_bytes`].
pub fn from_canonical_bytes<T: DeserializeOwned>(bytes: &[u8]) -> Result<T, CanonicalError> {
    Ok(serde_json::from_slice(bytes)?)
}

/// Decodes `bytes` and additionally checks that they are exactly the canonical
/// encoding of the decoded value.
pub fn from_canonical_bytes_strict<T: DeserializeOwned + Serialize>(bytes: &[u8]) -> Result<T, CanonicalError> {
    let decoded: T = serde_json::from_slice(bytes)?;
    if to_canonical_bytes(&decoded)? != bytes {
        return Err(CanonicalError::NotCanonical);
    }
    Ok(decoded)
}

fn check_supported(value: &Value) -> Result<(), CanonicalError> {
    match value {
        Value::Null | Value::Bool(_) | Value::String(_) => Ok(()),
        Value::Number(n) => {
            if n.is_i64() || n.is_u64() {
                Ok(())
            } else {
                Err(CanonicalError::UnsupportedValue(format!("non-integer number {n}")))
            }
        }
        Value::Array(items) => items.iter().try_for_each(check_supported),
        Value::Object(map) => map.values().try_for_each(check_supported),
    }
}

pub fn digest(bytes: &[u8]) -> Digest {
    Sha256::digest(bytes).into()
}

/// Serde adapter storing a [`Digest`] as a lowercase hex string.
pub mod hex_digest {
    use super::{Digest, DIGEST_LEN};
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(digest: &Digest, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(digest))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Digest, D::Error> {
        let text = String::deserialize(d)?;
        let bytes = hex::decode(&text).map_err(D::Error::custom)?;
        if bytes.len() != DIGEST_LEN {
            return Err(D::Error::custom(format!("digest must be {DIGEST_LEN} bytes")));
        }
        let mut out = [0u8; DIGEST_LEN];
        out.copy_from_slice(&bytes);
        Ok(out)
    }
}

/// Serde adapter storing arbitrary bytes as a lowercase hex string.
pub mod hex_bytes {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let text = String::deserialize(d)?;
        hex::decode(text).map_err(D::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn empty_map_is_two_bytes() {
        assert_eq!(canonical_value_bytes(&json!({})).unwrap(), b"{}");
    }

    #[test]
    fn key_order_does_not_matter() {
        let a: Value = serde_json::from_str(r#"{"b":1,"a":2}"#).unwrap();
        let b: Value = serde_json::from_str(r#"{"a":2,"b":1}"#).unwrap();
        let bytes = canonical_value_bytes(&a).unwrap();
        assert_eq!(bytes, canonical_value_bytes(&b).unwrap());
        assert_eq!(bytes, br#"{"a":2,"b":1}"#);
    }

    #[test]
    fn floats_are_rejected() {
        let err = canonical_value_bytes(&json!({"price": 1.5})).unwrap_err();
        assert!(matches!(err, CanonicalError::UnsupportedValue(_)));
        assert!(canonical_value_bytes(&json!([1, [2, {"x": 0.25}]])).is_err());
    }

    #[test]
    fn integers_are_minimal() {
        assert_eq!(canonical_value_bytes(&json!({"n": 0})).unwrap(), br#"{"n":0}"#);
        assert_eq!(canonical_value_bytes(&json!(u64::MAX)).unwrap(), b"18446744073709551615");
        assert_eq!(canonical_value_bytes(&json!(i64::MIN)).unwrap(), b"-9223372036854775808");
    }

    #[test]
    fn strict_decode_rejects_whitespace_and_key_disorder() {
        assert!(from_canonical_bytes_strict::<Value>(br#"{"a":1,"b":2}"#).is_ok());
        assert!(from_canonical_bytes_strict::<Value>(br#"{"b":2,"a":1}"#).is_err());
        assert!(from_canonical_bytes_strict::<Value>(br#"{"a": 1}"#).is_err());
    }

    #[test]
    fn unicode_stays_utf8() {
        let bytes = canonical_value_bytes(&json!({"name": "Café"})).unwrap();
        assert!(std::str::from_utf8(&bytes).unwrap().contains("Café"));
    }
}
