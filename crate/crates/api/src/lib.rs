//! HTTP front end for the commodity ledger network.
//!
//! Mutations are authenticated with two headers: `x-identity-id` and
//! `x-signature`, the hex keyed-hash signature of the exact request body made
//! with the identity's signing key (returned once by `POST /identities`).
//! Accepted mutations answer `202 {txId, result}` as soon as they are
//! endorsed; the commit outcome arrives on `GET /events` or
//! `GET /transactions/{txId}`.

mod events;
mod routes;
mod service;

use std::sync::{Arc, Mutex, MutexGuard};
use std::time::Duration;

use tokio::net::TcpListener;
use tokio::sync::watch;

pub use events::{events_for_block, EventKind, EventRecord};
pub use routes::router;
pub use service::{save_registry, Service, ServiceConfig, ServiceError, IDENTITIES_FILE};

/// Shared handle used by the HTTP handlers and the background ticker.
#[derive(Clone)]
pub struct AppState {
    service: Arc<Mutex<Service>>,
    last_seq: Arc<watch::Sender<u64>>,
}

impl AppState {
    pub fn new(service: Service) -> Self {
        let (tx, _) = watch::channel(service.last_event_seq());
        AppState { service: Arc::new(Mutex::new(service)), last_seq: Arc::new(tx) }
    }

    fn lock(&self) -> MutexGuard<'_, Service> {
        self.service.lock().unwrap_or_else(|poisoned| poisoned.into_inner())
    }

    /// Runs `f` against the service and wakes event-stream readers if it
    /// produced new events.
    pub fn with<R>(&self, f: impl FnOnce(&mut Service) -> R) -> R {
        let mut service = self.lock();
        let out = f(&mut service);
        let last = service.last_event_seq();
        drop(service);
        self.last_seq.send_if_modified(|seq| std::mem::replace(seq, last) != last);
        out
    }

    fn subscribe(&self) -> watch::Receiver<u64> {
        self.last_seq.subscribe()
    }

    /// Advances logical time by one tick every `interval`.
    pub fn spawn_ticker(&self, interval: Duration) -> tokio::task::JoinHandle<()> {
        let state = self.clone();
        tokio::spawn(async move {
            let mut timer = tokio::time::interval(interval);
            timer.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
            loop {
                timer.tick().await;
                state.with(Service::tick);
            }
        })
    }
}

/// Serves the API on `listener`, ticking the network every `tick_interval`.
pub async fn serve(listener: TcpListener, state: AppState, tick_interval: Duration) -> std::io::Result<()> {
    let ticker = state.spawn_ticker(tick_interval);
    let result = axum::serve(listener, router(state)).await;
    ticker.abort();
    result
}
