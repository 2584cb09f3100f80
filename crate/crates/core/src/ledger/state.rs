use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::types::{Namespace, StateKey, Version, WriteEntry};
use crate::canonical::{self, hex_bytes};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct VersionedValue {
    #[serde(with = "hex_bytes")]
    pub value: Vec<u8>,
    pub version: Version,
}

/// Read access to committed state.
pub trait StateView {
    fn get_state(&self, key: &StateKey) -> Option<&VersionedValue>;
}

/// Current value and version of every live key. Deleted keys are absent.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct WorldState {
    entries: BTreeMap<StateKey, VersionedValue>,
}

impl WorldState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn apply(&mut self, write: &WriteEntry, version: Version) {
        match &write.value {
            Some(value) => {
                self.entries.insert(write.key.clone(), VersionedValue { value: value.clone(), version });
            }
            None => {
                self.entries.remove(&write.key);
            }
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&StateKey, &VersionedValue)> {
        self.entries.iter()
    }

    pub fn scan(&self, namespace: Namespace) -> impl Iterator<Item = (&StateKey, &VersionedValue)> {
        self.entries.iter().filter(move |(k, _)| k.namespace == namespace)
    }

    /// Canonical bytes of the key -> value map, ignoring versions. Two ledgers
    /// that applied the same writes in the same order agree on these bytes even
    /// if they batched them into blocks differently.
    pub fn value_bytes(&self) -> Vec<u8> {
        let values: BTreeMap<String, String> =
            self.entries.iter().map(|(k, v)| (k.render(), hex::encode(&v.value))).collect();
        canonical::encode(&values)
    }

    /// Canonical bytes of the full state including versions.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let full: BTreeMap<String, &VersionedValue> = self.entries.iter().map(|(k, v)| (k.render(), v)).collect();
        canonical::encode(&full)
    }
}

impl StateView for WorldState {
    fn get_state(&self, key: &StateKey) -> Option<&VersionedValue> {
        self.entries.get(key)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct HistoryEntry {
    pub version: Version,
    /// `None` marks a delete (tombstone).
    pub value: Option<Vec<u8>>,
    pub tx_id: String,
}

/// Append-only per-key log of every valid write.
#[derive(Debug, Clone, Default)]
pub struct History {
    entries: BTreeMap<StateKey, Vec<HistoryEntry>>,
}

impl History {
    pub fn record(&mut self, write: &WriteEntry, version: Version, tx_id: &str) {
        self.entries.entry(write.key.clone()).or_default().push(HistoryEntry {
            version,
            value: write.value.clone(),
            tx_id: tx_id.to_string(),
        });
    }

    pub fn get(&self, key: &StateKey) -> &[HistoryEntry] {
        self.entries.get(key).map(Vec::as_slice).unwrap_or(&[])
    }
}

/// Read access to key history, used by provenance queries.
pub trait HistoryView {
    fn get_history(&self, key: &StateKey) -> &[HistoryEntry];
}

impl HistoryView for History {
    fn get_history(&self, key: &StateKey) -> &[HistoryEntry] {
        self.get(key)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn put(id: &str, v: &[u8]) -> WriteEntry {
        WriteEntry { key: StateKey::new(Namespace::Commodity, id), value: Some(v.to_vec()) }
    }

    #[test]
    fn delete_makes_key_absent() {
        let mut state = WorldState::new();
        state.apply(&put("a", b"1"), Version::new(1, 0));
        assert_eq!(state.get_state(&StateKey::new(Namespace::Commodity, "a")).unwrap().version, Version::new(1, 0));
        state.apply(&WriteEntry { key: StateKey::new(Namespace::Commodity, "a"), value: None }, Version::new(2, 0));
        assert!(state.get_state(&StateKey::new(Namespace::Commodity, "a")).is_none());
        assert!(state.is_empty());
    }

    #[test]
    fn value_bytes_ignore_versions() {
        let mut a = WorldState::new();
        let mut b = WorldState::new();
        a.apply(&put("x", b"v"), Version::new(1, 0));
        b.apply(&put("x", b"v"), Version::new(7, 3));
        assert_eq!(a.value_bytes(), b.value_bytes());
        assert_ne!(a.canonical_bytes(), b.canonical_bytes());
    }
}
