//! Scripted network runs.
//!
//! A scenario is a JSON document naming identities, a network shape and an
//! ordered list of timed steps. String arguments of the form `"$name"` refer to
//! an identity declared in the scenario or to an id bound by an earlier step.
//!
//! ```json
//! {
//!   "name": "one sale",
//!   "profile": "art",
//!   "network": { "peers": 3 },
//!   "identities": [ { "name": "auc", "role": "AUCTIONEER" }, { "name": "ann", "role": "MEMBER" } ],
//!   "steps": [
//!     { "tick": 0, "actor": "ann", "operation": "create_commodity",
//!       "args": { "description": "vase", "idealPrice": 10 }, "bind": "vase" },
//!     { "tick": 1, "fault": "delay", "target": "peer2", "ticks": 3 }
//!   ],
//!   "expectations": { "commodities": { "$vase": { "owner": "$ann" } } }
//! }
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use super::network::{Fault, Network, NetworkConfig, NetworkError};
use super::trace::{TraceEvent, TraceRecord};
use crate::canonical;
use crate::chaincode::model::{commodity_key, listing_key, Commodity, CommodityListing, Profile};
use crate::chaincode::{self, CREATE_COMMODITY};
use crate::ledger::Ledger;
use crate::membership::{MembershipRegistry, Role};

/// Result fields that carry the id of a newly created entity, in the order
/// they are considered for `bind`.
const ID_FIELDS: [&str; 5] = ["auctionId", "commodityId", "listingId", "renovationId", "offerId"];

/// Ticks allowed for the network to drain after the last step.
pub const DRAIN_TICKS: u64 = 10_000;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("SCENARIO_PARSE_ERROR at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("SCENARIO_PARSE_ERROR in {location}: {message}")]
    Invalid { location: String, message: String },
    #[error(transparent)]
    Network(#[from] NetworkError),
}

impl ScenarioError {
    pub fn code(&self) -> &'static str {
        match self {
            ScenarioError::Parse { .. } | ScenarioError::Invalid { .. } => "SCENARIO_PARSE_ERROR",
            ScenarioError::Network(_) => "NETWORK_ERROR",
        }
    }

    fn invalid(location: impl Into<String>, message: impl Into<String>) -> Self {
        ScenarioError::Invalid { location: location.into(), message: message.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct IdentitySpec {
    pub name: String,
    pub role: Role,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct RawStep {
    tick: u64,
    #[serde(default)]
    actor: Option<String>,
    #[serde(default)]
    operation: Option<String>,
    #[serde(default)]
    args: Option<Value>,
    #[serde(default)]
    bind: Option<String>,
    #[serde(default)]
    expect: Option<String>,
    #[serde(default)]
    fault: Option<String>,
    #[serde(default)]
    target: Option<String>,
    #[serde(default)]
    ticks: Option<u64>,
    #[serde(default)]
    blocks: Option<u32>,
    #[serde(default)]
    count: Option<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StepAction {
    Invoke { actor: String, operation: String, args: Value, bind: Option<String>, expect: Option<String> },
    Fault(Fault),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub tick: u64,
    pub action: StepAction,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ListingExpectation {
    #[serde(default)]
    pub state: Option<String>,
    /// `Some(None)` expects no buyer.
    #[serde(default, with = "double_option")]
    pub done_buyer: Option<Option<String>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct CommodityExpectation {
    #[serde(default)]
    pub owner: Option<String>,
    #[serde(default)]
    pub ownership_history_length: Option<usize>,
    #[serde(default)]
    pub renovations: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct Expectations {
    #[serde(default)]
    pub listings: BTreeMap<String, ListingExpectation>,
    #[serde(default)]
    pub commodities: BTreeMap<String, CommodityExpectation>,
}

mod double_option {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(value: &Option<Option<String>>, s: S) -> Result<S::Ok, S::Error> {
        value.as_ref().and_then(Option::as_ref).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Option<String>>, D::Error> {
        Option::<String>::deserialize(d).map(Some)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct RawScenario {
    name: String,
    profile: Profile,
    #[serde(default)]
    network: NetworkConfig,
    identities: Vec<IdentitySpec>,
    steps: Vec<RawStep>,
    #[serde(default)]
    expectations: Expectations,
}

/// A parsed and statically checked scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub profile: Profile,
    pub network: NetworkConfig,
    pub identities: Vec<IdentitySpec>,
    pub steps: Vec<Step>,
    pub expectations: Expectations,
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Scenario, ScenarioError> {
        let raw: RawScenario = serde_json::from_str(text).map_err(|e| ScenarioError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        Scenario::from_raw(raw)
    }

    fn from_raw(raw: RawScenario) -> Result<Scenario, ScenarioError> {
        raw.network.policy()?;
        raw.network.orderer()?;

        let mut names: BTreeSet<String> = BTreeSet::new();
        for (i, identity) in raw.identities.iter().enumerate() {
            if identity.name.trim().is_empty() {
                return Err(ScenarioError::invalid(format!("identities[{i}]"), "empty name"));
            }
            if !names.insert(identity.name.clone()) {
                return Err(ScenarioError::invalid(
                    format!("identities[{i}]"),
                    format!("duplicate name {}", identity.name),
                ));
            }
        }

        let peers = raw.network.peer_ids();
        let mut steps = Vec::with_capacity(raw.steps.len());
        let mut last_tick = 0;
        for (i, step) in raw.steps.into_iter().enumerate() {
            let at = format!("steps[{i}]");
            if step.tick < last_tick {
                return Err(ScenarioError::invalid(at, "ticks must be non-decreasing"));
            }
            last_tick = step.tick;
            let action = match (&step.fault, &step.operation) {
                (Some(_), Some(_)) => {
                    return Err(ScenarioError::invalid(at, "a step is either an operation or a fault"))
                }
                (None, None) => return Err(ScenarioError::invalid(at, "step needs an operation or a fault")),
                (Some(kind), None) => {
                    if step.actor.is_some() || step.args.is_some() || step.bind.is_some() || step.expect.is_some() {
                        return Err(ScenarioError::invalid(
                            at,
                            "fault steps take only target, ticks, blocks and count",
                        ));
                    }
                    let target =
                        step.target.clone().ok_or_else(|| ScenarioError::invalid(&at, "fault needs a target"))?;
                    if !peers.contains(&target) {
                        return Err(ScenarioError::invalid(at, format!("unknown peer {target}")));
                    }
                    let gossip_fault = kind == "delay" || kind == "reorder";
                    if gossip_fault && target == peers[0] {
                        return Err(ScenarioError::invalid(at, "gossip faults cannot target the anchor peer"));
                    }
                    match kind.as_str() {
                        "delay" => Fault::Delay {
                            target,
                            ticks: step.ticks.ok_or_else(|| ScenarioError::invalid(&at, "delay needs ticks"))?,
                            blocks: step.blocks.unwrap_or(1).max(1),
                        },
                        "reorder" => Fault::Reorder { target },
                        "drop-endorsement" => Fault::DropEndorsement { target, count: step.count.unwrap_or(1).max(1) },
                        other => return Err(ScenarioError::invalid(at, format!("unknown fault {other}"))),
                    }
                    .into()
                }
                (None, Some(operation)) => {
                    if step.target.is_some() || step.ticks.is_some() || step.blocks.is_some() || step.count.is_some() {
                        return Err(ScenarioError::invalid(
                            at,
                            "operation steps take only actor, args, bind and expect",
                        ));
                    }
                    let actor =
                        step.actor.clone().ok_or_else(|| ScenarioError::invalid(&at, "operation needs an actor"))?;
                    if !names.contains(&actor) {
                        return Err(ScenarioError::invalid(at, format!("unknown actor {actor}")));
                    }
                    let known =
                        chaincode::MUTATING_OPERATIONS.contains(&operation.as_str()) || chaincode::is_query(operation);
                    if !known {
                        return Err(ScenarioError::invalid(at, format!("unknown operation {operation}")));
                    }
                    let args = step.args.clone().unwrap_or_else(|| Value::Object(Map::new()));
                    if !args.is_object() {
                        return Err(ScenarioError::invalid(at, "args must be an object"));
                    }
                    check_refs(&args, &names)
                        .map_err(|r| ScenarioError::invalid(&at, format!("unbound reference ${r}")))?;
                    if let Some(bind) = &step.bind {
                        let bind = bind.strip_prefix('$').unwrap_or(bind);
                        if !names.insert(bind.to_string()) {
                            return Err(ScenarioError::invalid(at, format!("name {bind} is already bound")));
                        }
                    }
                    StepAction::Invoke {
                        actor,
                        operation: operation.clone(),
                        args,
                        bind: step.bind.map(|b| b.trim_start_matches('$').to_string()),
                        expect: step.expect,
                    }
                }
            };
            steps.push(Step { tick: step.tick, action });
        }

        for (kind, subjects) in [
            ("listings", raw.expectations.listings.keys().collect::<Vec<_>>()),
            ("commodities", raw.expectations.commodities.keys().collect()),
        ] {
            for subject in subjects {
                check_refs(&Value::String(subject.clone()), &names).map_err(|r| {
                    ScenarioError::invalid(format!("expectations.{kind}"), format!("unbound reference ${r}"))
                })?;
            }
        }

        Ok(Scenario {
            name: raw.name,
            profile: raw.profile,
            network: raw.network,
            identities: raw.identities,
            steps,
            expectations: raw.expectations,
        })
    }
}

impl From<Fault> for StepAction {
    fn from(fault: Fault) -> Self {
        StepAction::Fault(fault)
    }
}

fn check_refs(value: &Value, names: &BTreeSet<String>) -> Result<(), String> {
    match value {
        Value::String(s) => match s.strip_prefix('$') {
            Some(name) if !names.contains(name) => Err(name.to_string()),
            _ => Ok(()),
        },
        Value::Array(items) => items.iter().try_for_each(|v| check_refs(v, names)),
        Value::Object(map) => map.values().try_for_each(|v| check_refs(v, names)),
        _ => Ok(()),
    }
}

/// Replaces every `"$name"` string with its binding. Returns the first
/// unresolved name on failure.
fn resolve(value: &Value, bindings: &BTreeMap<String, String>) -> Result<Value, String> {
    Ok(match value {
        Value::String(s) => match s.strip_prefix('$') {
            Some(name) => Value::String(bindings.get(name).cloned().ok_or_else(|| name.to_string())?),
            None => value.clone(),
        },
        Value::Array(items) => Value::Array(items.iter().map(|v| resolve(v, bindings)).collect::<Result<_, _>>()?),
        Value::Object(map) => Value::Object(
            map.iter().map(|(k, v)| Ok((k.clone(), resolve(v, bindings)?))).collect::<Result<_, String>>()?,
        ),
        other => other.clone(),
    })
}

/// What happened to one operation step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct StepOutcome {
    pub step: usize,
    pub tx_id: Option<String>,
    /// Commit flag for ordered transactions, `OK` for served queries, or the
    /// rejection code.
    pub outcome: String,
}

/// One unmet expectation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ExpectationFailure {
    pub subject: String,
    pub field: String,
    pub expected: String,
    pub actual: String,
}

impl fmt::Display for ExpectationFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {} expected {}, got {}", self.subject, self.field, self.expected, self.actual)
    }
}

#[derive(Debug)]
pub struct RunOutcome {
    pub network: Network,
    pub bindings: BTreeMap<String, String>,
    pub steps: Vec<StepOutcome>,
    pub failures: Vec<ExpectationFailure>,
    pub idle: bool,
}

impl RunOutcome {
    pub fn trace(&self) -> &[TraceRecord] {
        self.network.trace()
    }

    pub fn trace_bytes(&self) -> Vec<u8> {
        self.network.trace_bytes()
    }

    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Runs `scenario` on a fresh in-memory network.
pub fn run_scenario(scenario: &Scenario, seed: u64) -> Result<RunOutcome, ScenarioError> {
    run_scenario_on(scenario, seed, Ledger::new())
}

/// Runs `scenario` with `anchor` as the anchor peer's ledger.
pub fn run_scenario_on(scenario: &Scenario, seed: u64, anchor: Ledger) -> Result<RunOutcome, ScenarioError> {
    let registry = MembershipRegistry::new(format!("scenario:{}:{seed}", scenario.name).as_bytes());
    let mut network = Network::with_anchor_ledger(scenario.network.clone(), registry, seed, anchor)?;
    let mut bindings = BTreeMap::new();
    for spec in &scenario.identities {
        let identity = network
            .registry()
            .register_identity(&spec.name, spec.role)
            .map_err(|e| ScenarioError::invalid("identities", e.to_string()))?;
        network.record(TraceEvent::IdentityRegistered {
            name: spec.name.clone(),
            identity_id: identity.identity_id.clone(),
            role: spec.role.as_str().into(),
        });
        bindings.insert(spec.name.clone(), identity.identity_id);
    }

    let mut outcomes = Vec::new();
    let mut expected_outcomes = Vec::new();
    for (index, step) in scenario.steps.iter().enumerate() {
        while network.now() < step.tick {
            network.tick();
        }
        match &step.action {
            StepAction::Fault(fault) => network.inject(fault.clone())?,
            StepAction::Invoke { actor, operation, args, bind, expect } => {
                let outcome =
                    invoke(&mut network, scenario.profile, &mut bindings, index, actor, operation, args, bind);
                if let Some(expect) = expect {
                    expected_outcomes.push((outcomes.len(), expect.clone()));
                }
                outcomes.push(outcome);
            }
        }
    }
    let idle = network.run_until_idle(DRAIN_TICKS);

    for outcome in outcomes.iter_mut() {
        if let Some(tx_id) = &outcome.tx_id {
            outcome.outcome = match network.anchor().ledger().tx_location(tx_id) {
                Some(location) => location.flag.as_str().to_string(),
                None => "NOT_COMMITTED".to_string(),
            };
        }
    }

    let mut failures = Vec::new();
    for (slot, expect) in expected_outcomes {
        let outcome = &outcomes[slot];
        if outcome.outcome != expect {
            failures.push(ExpectationFailure {
                subject: format!("step {}", outcome.step),
                field: "outcome".into(),
                expected: expect,
                actual: outcome.outcome.clone(),
            });
        }
    }
    check_expectations(&network, &scenario.expectations, &bindings, &mut failures);

    Ok(RunOutcome { network, bindings, steps: outcomes, failures, idle })
}

#[allow(clippy::too_many_arguments)]
fn invoke(
    network: &mut Network,
    profile: Profile,
    bindings: &mut BTreeMap<String, String>,
    index: usize,
    actor: &str,
    operation: &str,
    args: &Value,
    bind: &Option<String>,
) -> StepOutcome {
    let skipped = |network: &mut Network, reason: String| {
        network.record(TraceEvent::StepSkipped { step: index, reason: reason.clone() });
        StepOutcome { step: index, tx_id: None, outcome: reason }
    };
    let mut args = match resolve(args, bindings) {
        Ok(args) => args,
        Err(name) => return skipped(network, format!("UNBOUND_REFERENCE({name})")),
    };
    if operation == CREATE_COMMODITY {
        if let Some(map) = args.as_object_mut() {
            if !map.contains_key("profile") && !map.contains_key("trackRenovations") {
                map.insert("profile".into(), serde_json::to_value(profile).expect("profile serializes"));
            }
        }
    }
    let creator = bindings[actor].clone();

    if chaincode::is_query(operation) {
        let outcome = match network.query(operation, &args) {
            Ok(_) => "OK".to_string(),
            Err(e) => e.code(),
        };
        return StepOutcome { step: index, tx_id: None, outcome };
    }

    match network.submit(&creator, operation, args) {
        Ok(receipt) => {
            if let Some(name) = bind {
                let id = ID_FIELDS.iter().find_map(|f| receipt.result.get(*f).and_then(Value::as_str));
                if let Some(id) = id {
                    bindings.insert(name.clone(), id.to_string());
                }
            }
            StepOutcome { step: index, tx_id: Some(receipt.tx_id), outcome: "PENDING".into() }
        }
        Err(err) => StepOutcome { step: index, tx_id: None, outcome: err.code() },
    }
}

fn check_expectations(
    network: &Network,
    expectations: &Expectations,
    bindings: &BTreeMap<String, String>,
    failures: &mut Vec<ExpectationFailure>,
) {
    let ledger = network.anchor().ledger();
    let lookup = |reference: &str| -> Option<String> {
        match reference.strip_prefix('$') {
            Some(name) => bindings.get(name).cloned(),
            None => Some(reference.to_string()),
        }
    };
    let show = |v: Option<&str>| v.map_or_else(|| "null".to_string(), str::to_string);
    let mut fail = |subject: &str, field: &str, expected: String, actual: String| {
        failures.push(ExpectationFailure { subject: subject.into(), field: field.into(), expected, actual });
    };

    for (reference, want) in &expectations.listings {
        let subject = format!("listing {reference}");
        let listing: Option<CommodityListing> = lookup(reference)
            .and_then(|id| ledger.get_state(&listing_key(&id)))
            .and_then(|v| canonical::from_canonical_bytes(&v.value).ok());
        let Some(listing) = listing else {
            fail(&subject, "exists", "true".into(), "false".into());
            continue;
        };
        if let Some(state) = &want.state {
            if state != listing.state.as_str() {
                fail(&subject, "state", state.clone(), listing.state.as_str().into());
            }
        }
        if let Some(buyer) = &want.done_buyer {
            let expected = buyer.as_deref().and_then(lookup);
            if expected != listing.done_buyer {
                fail(&subject, "doneBuyer", show(expected.as_deref()), show(listing.done_buyer.as_deref()));
            }
        }
    }

    for (reference, want) in &expectations.commodities {
        let subject = format!("commodity {reference}");
        let commodity: Option<Commodity> = lookup(reference)
            .and_then(|id| ledger.get_state(&commodity_key(&id)))
            .and_then(|v| canonical::from_canonical_bytes(&v.value).ok());
        let Some(commodity) = commodity else {
            fail(&subject, "exists", "true".into(), "false".into());
            continue;
        };
        if let Some(owner) = &want.owner {
            let expected = lookup(owner);
            if expected.as_deref() != Some(commodity.owner.as_str()) {
                fail(&subject, "owner", show(expected.as_deref()), commodity.owner.clone());
            }
        }
        if let Some(len) = want.ownership_history_length {
            if len != commodity.ownership_history.len() {
                fail(
                    &subject,
                    "ownershipHistoryLength",
                    len.to_string(),
                    commodity.ownership_history.len().to_string(),
                );
            }
        }
        if let Some(count) = want.renovations {
            if count != commodity.renovation_ids.len() {
                fail(&subject, "renovations", count.to_string(), commodity.renovation_ids.len().to_string());
            }
        }
    }
}
