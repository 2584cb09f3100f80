use std::convert::Infallible;

use axum::body::{Body, Bytes};
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use tracer_core::canonical;
use tracer_core::chaincode::model::{commodity_key, listing_key, Commodity, CommodityListing};
use tracer_core::chaincode::{self, ChaincodeError};
use tracer_core::ledger::Namespace;
use tracer_core::membership::Role;
use tracer_core::pipeline::{SubmitError, TxStatus};

use crate::AppState;

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/identities", post(register))
        .route("/auctions", post(create_auction))
        .route("/auctions/{id}/close", post(close_auction))
        .route("/commodities", post(create_commodity))
        .route("/commodities/{id}", get(get_commodity))
        .route("/commodities/{id}/provenance", get(get_provenance))
        .route("/commodities/{id}/renovations", post(add_renovation))
        .route("/listings", get(list_listings).post(create_listing))
        .route("/listings/{id}", get(get_listing))
        .route("/listings/{id}/bids", post(make_bid))
        .route("/listings/{id}/close", post(close_bidding))
        .route("/listings/{id}/transfer", post(transfer))
        .route("/blocks/{n}", get(get_block))
        .route("/chain/verify", get(verify_chain))
        .route("/transactions/{tx_id}", get(get_transaction))
        .route("/events", get(events))
        .with_state(state)
}

#[derive(Debug)]
struct ApiError {
    status: StatusCode,
    code: String,
    detail: Option<String>,
}

impl ApiError {
    fn new(status: StatusCode, code: impl Into<String>) -> Self {
        ApiError { status, code: code.into(), detail: None }
    }

    fn detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = Some(detail.into());
        self
    }
}

impl From<ChaincodeError> for ApiError {
    fn from(e: ChaincodeError) -> Self {
        let status = if e.is_not_found() {
            StatusCode::NOT_FOUND
        } else if matches!(e, ChaincodeError::BadArgs(_)) {
            StatusCode::UNPROCESSABLE_ENTITY
        } else {
            StatusCode::CONFLICT
        };
        let detail = match &e {
            ChaincodeError::BadArgs(d) | ChaincodeError::CorruptState(d) => Some(d.clone()),
            _ => None,
        };
        ApiError { status, code: e.code(), detail }
    }
}

impl From<SubmitError> for ApiError {
    fn from(e: SubmitError) -> Self {
        match e {
            SubmitError::Chaincode(e) => e.into(),
            SubmitError::BadSignature | SubmitError::Membership(_) => ApiError::new(StatusCode::UNAUTHORIZED, e.code()),
            SubmitError::UnsupportedValue(d) => {
                ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "UNSUPPORTED_VALUE").detail(d)
            }
            SubmitError::EndorsementShortfall { .. } => ApiError::new(StatusCode::SERVICE_UNAVAILABLE, e.code()),
        }
    }
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    error: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    detail: Option<&'a str>,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        canonical_response(self.status, &ErrorBody { error: &self.code, detail: self.detail.as_deref() })
    }
}

fn canonical_response<T: Serialize + ?Sized>(status: StatusCode, value: &T) -> Response {
    match canonical::to_canonical_bytes(value) {
        Ok(bytes) => (status, [(header::CONTENT_TYPE, "application/json")], bytes).into_response(),
        Err(e) => (StatusCode::INTERNAL_SERVER_ERROR, e.to_string()).into_response(),
    }
}

type ApiResult = Result<Response, ApiError>;

fn unprocessable(detail: impl Into<String>) -> ApiError {
    ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "BAD_ARGS").detail(detail)
}

/// Parses a JSON object body. An empty body counts as `{}`.
fn object_body(body: &[u8]) -> Result<Map<String, Value>, ApiError> {
    if body.iter().all(u8::is_ascii_whitespace) {
        return Ok(Map::new());
    }
    match serde_json::from_slice(body) {
        Ok(Value::Object(map)) => Ok(map),
        Ok(_) => Err(unprocessable("body must be a JSON object")),
        Err(e) => Err(unprocessable(e.to_string())),
    }
}

fn caller(state: &AppState, headers: &HeaderMap, body: &[u8]) -> Result<String, ApiError> {
    let header_str = |name: &str| headers.get(name).and_then(|v| v.to_str().ok()).map(str::to_string);
    let unauthorized = || ApiError::new(StatusCode::UNAUTHORIZED, "BAD_SIGNATURE");
    let id = header_str("x-identity-id").ok_or_else(unauthorized)?;
    let signature = header_str("x-signature").ok_or_else(unauthorized)?;
    if state.with(|s| s.authenticate(&id, &signature, body)) {
        Ok(id)
    } else {
        Err(unauthorized())
    }
}

/// Authenticates, builds arguments from the body and submits `operation`.
fn mutate(
    state: &AppState,
    headers: &HeaderMap,
    body: &[u8],
    operation: &str,
    build: impl FnOnce(&str, Map<String, Value>) -> Result<Map<String, Value>, ApiError>,
) -> ApiResult {
    let caller = caller(state, headers, body)?;
    let args = build(&caller, object_body(body)?)?;
    let receipt = state.with(|s| s.submit(&caller, operation, Value::Object(args)))?;
    Ok(canonical_response(StatusCode::ACCEPTED, &json!({ "txId": receipt.tx_id, "result": receipt.result })))
}

/// Adds the path id to the arguments, refusing a conflicting body field.
fn with_path_id(mut args: Map<String, Value>, field: &str, id: String) -> Result<Map<String, Value>, ApiError> {
    if args.contains_key(field) {
        return Err(unprocessable(format!("{field} comes from the path")));
    }
    args.insert(field.to_string(), Value::String(id));
    Ok(args)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RegisterBody {
    name: String,
    role: Role,
}

async fn register(State(state): State<AppState>, body: Bytes) -> ApiResult {
    let req: RegisterBody = serde_json::from_slice(&body).map_err(|e| unprocessable(e.to_string()))?;
    let (identity, key) = state.with(|s| s.register(&req.name, req.role)).map_err(|e| unprocessable(e.to_string()))?;
    Ok(canonical_response(StatusCode::CREATED, &json!({ "identity": identity, "signingKey": key })))
}

async fn create_auction(State(state): State<AppState>, headers: HeaderMap, body: Bytes) -> ApiResult {
    mutate(&state, &headers, &body, chaincode::INITIATE_AUCTION_ENVIRONMENT, |_, args| Ok(args))
}

async fn close_auction(
    State(state): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult {
    mutate(&state, &headers, &body, chaincode::CLOSE_ENVIRONMENT, |_, args| with_path_id(args, "auctionId", id))
}

async fn create_commodity(State(state): State<AppState>, headers: HeaderMap, body: Bytes) -> ApiResult {
    mutate(&state, &headers, &body, chaincode::CREATE_COMMODITY, |_, args| Ok(args))
}

async fn add_renovation(
    State(state): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult {
    mutate(&state, &headers, &body, chaincode::ADD_RENOVATION, |_, args| with_path_id(args, "commodityId", id))
}

async fn create_listing(State(state): State<AppState>, headers: HeaderMap, body: Bytes) -> ApiResult {
    mutate(&state, &headers, &body, chaincode::CREATE_COMMODITY_LISTING, |_, args| Ok(args))
}

async fn make_bid(State(state): State<AppState>, Path(id): Path<String>, headers: HeaderMap, body: Bytes) -> ApiResult {
    mutate(&state, &headers, &body, chaincode::MAKE_BID, |caller, mut args| {
        args.entry("potentialBuyer").or_insert_with(|| Value::String(caller.to_string()));
        with_path_id(args, "listingId", id)
    })
}

async fn close_bidding(
    State(state): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult {
    mutate(&state, &headers, &body, chaincode::CLOSE_BIDDING, |_, args| with_path_id(args, "listingId", id))
}

async fn transfer(State(state): State<AppState>, Path(id): Path<String>, headers: HeaderMap, body: Bytes) -> ApiResult {
    mutate(&state, &headers, &body, chaincode::TRANSFER_ASSETS, |_, args| with_path_id(args, "listingId", id))
}

fn decode_state<T: serde::de::DeserializeOwned>(bytes: &[u8]) -> Result<T, ApiError> {
    canonical::from_canonical_bytes(bytes)
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "CORRUPT_STATE").detail(e.to_string()))
}

async fn list_listings(State(state): State<AppState>) -> ApiResult {
    let listings = state.with(|s| {
        s.network()
            .anchor()
            .ledger()
            .state()
            .scan(Namespace::Listing)
            .map(|(_, v)| decode_state::<CommodityListing>(&v.value))
            .collect::<Result<Vec<_>, _>>()
    })?;
    Ok(canonical_response(StatusCode::OK, &listings))
}

async fn get_listing(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult {
    let value = state.with(|s| s.network().anchor().ledger().get_state(&listing_key(&id)).map(|v| v.value.clone()));
    let value = value.ok_or_else(|| ApiError::from(ChaincodeError::UnknownListing))?;
    Ok(canonical_response(StatusCode::OK, &decode_state::<CommodityListing>(&value)?))
}

async fn get_commodity(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult {
    let value = state.with(|s| s.network().anchor().ledger().get_state(&commodity_key(&id)).map(|v| v.value.clone()));
    let value = value.ok_or_else(|| ApiError::from(ChaincodeError::UnknownCommodity))?;
    Ok(canonical_response(StatusCode::OK, &decode_state::<Commodity>(&value)?))
}

async fn get_provenance(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult {
    let provenance = state.with(|s| chaincode::get_provenance(s.network().anchor().ledger(), &id))?;
    Ok(canonical_response(StatusCode::OK, &provenance))
}

async fn get_block(State(state): State<AppState>, Path(n): Path<String>) -> ApiResult {
    let not_found = || ApiError::new(StatusCode::NOT_FOUND, "UNKNOWN_BLOCK");
    let n: u64 = n.parse().map_err(|_| not_found())?;
    let block = state.with(|s| s.network().anchor().ledger().block(n).cloned()).ok_or_else(not_found)?;
    Ok(canonical_response(StatusCode::OK, &block))
}

async fn verify_chain(State(state): State<AppState>) -> ApiResult {
    let report = state.with(|s| s.network().anchor().ledger().verify_chain());
    Ok(canonical_response(StatusCode::OK, &report))
}

async fn get_transaction(State(state): State<AppState>, Path(tx_id): Path<String>) -> ApiResult {
    match state.with(|s| s.network().tx_status(&tx_id)) {
        TxStatus::Unknown => Err(ApiError::new(StatusCode::NOT_FOUND, "UNKNOWN_TRANSACTION")),
        status => Ok(canonical_response(StatusCode::OK, &json!({ "txId": tx_id, "status": status }))),
    }
}

#[derive(Deserialize)]
struct EventsQuery {
    #[serde(default)]
    since: u64,
    /// Keep the stream open for new events (default) or end after replay.
    #[serde(default = "yes")]
    follow: bool,
}

fn yes() -> bool {
    true
}

async fn events(State(state): State<AppState>, Query(query): Query<EventsQuery>) -> Response {
    let rx = state.subscribe();
    let follow = query.follow;
    let stream = futures_util::stream::unfold((query.since, rx, state), move |(since, mut rx, state)| async move {
        loop {
            let (chunk, last) = state.with(|s| {
                let events = s.events_since(since);
                (events.iter().flat_map(|e| e.to_line()).collect::<Vec<u8>>(), events.last().map(|e| e.event_seq))
            });
            if let Some(last) = last {
                return Some((Ok::<_, Infallible>(Bytes::from(chunk)), (last, rx, state)));
            }
            if !follow || rx.changed().await.is_err() {
                return None;
            }
        }
    });
    ([(header::CONTENT_TYPE, "text/plain; charset=utf-8")], Body::from_stream(stream)).into_response()
}
