use super::model::*;
use super::ChaincodeError;
use crate::canonical;
use crate::ledger::{HistoryView, StateView};

/// Ownership chain and renovations of a commodity, with the commit version of
/// each event recovered from key history.
pub fn get_provenance<S: StateView + HistoryView + ?Sized>(
    state: &S,
    commodity_id: &str,
) -> Result<Provenance, ChaincodeError> {
    let key = commodity_key(commodity_id);
    let current = state.get_state(&key).ok_or(ChaincodeError::UnknownCommodity)?;
    let commodity: Commodity = decode(&current.value)?;

    // Record i was committed by the first write whose history had > i entries.
    let mut ownership_history = Vec::with_capacity(commodity.ownership_history.len());
    for entry in state.get_history(&key) {
        let Some(bytes) = &entry.value else { continue };
        let snapshot: Commodity = decode(bytes)?;
        while ownership_history.len() < snapshot.ownership_history.len() {
            let record = &snapshot.ownership_history[ownership_history.len()];
            ownership_history.push(OwnershipRecord {
                owner: record.owner.clone(),
                acquired_at_version: entry.version,
                via_listing_id: record.via_listing_id.clone(),
            });
        }
    }

    let mut renovations = Vec::with_capacity(commodity.renovation_ids.len());
    for renovation_id in &commodity.renovation_ids {
        let rkey = renovation_key(renovation_id);
        let first = state
            .get_history(&rkey)
            .first()
            .ok_or_else(|| ChaincodeError::CorruptState(format!("{rkey} has no history")))?;
        let bytes = first
            .value
            .as_deref()
            .ok_or_else(|| ChaincodeError::CorruptState(format!("{rkey} created as a delete")))?;
        renovations.push(RenovationRecord { renovation: decode(bytes)?, version: first.version });
    }
    renovations.sort_by_key(|r| r.version);

    let mut timeline: Vec<ProvenanceEvent> = ownership_history
        .iter()
        .cloned()
        .map(ProvenanceEvent::Ownership)
        .chain(renovations.iter().cloned().map(ProvenanceEvent::Renovation))
        .collect();
    timeline.sort_by_key(ProvenanceEvent::version);

    Ok(Provenance {
        commodity_id: commodity.commodity_id,
        description: commodity.description,
        owner: commodity.owner,
        ownership_history,
        renovations,
        timeline,
    })
}

fn decode<T: serde::de::DeserializeOwned>(bytes: &[u8]) -> Result<T, ChaincodeError> {
    canonical::from_canonical_bytes(bytes).map_err(|e| ChaincodeError::CorruptState(e.to_string()))
}
