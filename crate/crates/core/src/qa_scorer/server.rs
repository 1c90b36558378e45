use std::net::SocketAddr;
use std::sync::Arc;
use std::thread::JoinHandle;

use axum::extract::State;
use axum::http::StatusCode;
use axum::routing::post;
use axum::{Json, Router};
use tokio::sync::oneshot;

use super::remote::to_wire;
use super::wire::{BatchRequest, BatchResponse, ScoreRequest, ScoreResponse};
use super::{QaScorer, ScorerError, StubScorer};

/// A running loopback server. Shuts down on drop.
pub struct StubServer {
    addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    handle: Option<JoinHandle<()>>,
}

impl StubServer {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Block until the server stops (it only stops when dropped elsewhere or
    /// the process ends).
    pub fn wait(mut self) {
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

impl Drop for StubServer {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

type Shared = Arc<dyn QaScorer>;

fn score_one(
    scorer: &dyn QaScorer,
    req: &ScoreRequest,
) -> Result<ScoreResponse, (StatusCode, String)> {
    scorer
        .score(&req.question, &req.context)
        .map(|s| to_wire(&s))
        .map_err(|e| match e {
            ScorerError::EmptyQuestion => (StatusCode::BAD_REQUEST, e.to_string()),
            other => (StatusCode::INTERNAL_SERVER_ERROR, other.to_string()),
        })
}

async fn handle_score(
    State(scorer): State<Shared>,
    Json(req): Json<ScoreRequest>,
) -> Result<Json<ScoreResponse>, (StatusCode, String)> {
    score_one(scorer.as_ref(), &req).map(Json)
}

async fn handle_batch(
    State(scorer): State<Shared>,
    Json(req): Json<BatchRequest>,
) -> Result<Json<BatchResponse>, (StatusCode, String)> {
    let results = req
        .items
        .iter()
        .map(|item| score_one(scorer.as_ref(), item))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Json(BatchResponse { results }))
}

/// Serve `scorer` over the scoring protocol on `addr` (use port 0 for an
/// ephemeral port). Defaults to the [`StubScorer`] when `scorer` is `None`.
pub fn serve_stub(
    addr: SocketAddr,
    scorer: Option<Arc<dyn QaScorer>>,
) -> std::io::Result<StubServer> {
    let scorer: Shared = scorer.unwrap_or_else(|| Arc::new(StubScorer));
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .worker_threads(2)
        .enable_all()
        .build()?;
    let listener = runtime.block_on(tokio::net::TcpListener::bind(addr))?;
    let addr = listener.local_addr()?;
    let (tx, rx) = oneshot::channel::<()>();
    let app = Router::new()
        .route("/score", post(handle_score))
        .route("/score_batch", post(handle_batch))
        .with_state(scorer);
    let handle = std::thread::spawn(move || {
        runtime.block_on(async move {
            let server = axum::serve(listener, app).with_graceful_shutdown(async {
                let _ = rx.await;
            });
            if let Err(e) = server.await {
                log::error!("stub scorer server failed: {e}");
            }
        });
    });
    Ok(StubServer {
        addr,
        shutdown: Some(tx),
        handle: Some(handle),
    })
}
