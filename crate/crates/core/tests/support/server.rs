//! In-process embedding server speaking the wire protocol, with counters and
//! failure injection.

use std::collections::{HashMap, VecDeque};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde_json::{json, Value};

use resume_audit::embedder::MockEmbedder;

pub const MODEL: &str = "echo";

pub struct ServerState {
    pub dim: usize,
    pub requests: AtomicUsize,
    /// Texts embedded so far, across all requests.
    pub texts_seen: AtomicUsize,
    pub overrides: Mutex<HashMap<String, Vec<f32>>>,
    /// Status codes answered, in order, before normal service resumes.
    pub failures: Mutex<VecDeque<u16>>,
    pub reverse_order: AtomicBool,
    pub advertise_wrong_dim: AtomicBool,
    pub last_body: Mutex<Option<Value>>,
    pub mock: Option<MockEmbedder>,
}

impl ServerState {
    /// Raw vector for a text: an override, the wrapped mock scaled by 2.5, or
    /// a small deterministic pattern.
    fn vector(&self, text: &str) -> Vec<f32> {
        if let Some(v) = self.overrides.lock().unwrap().get(text) {
            return v.clone();
        }
        if let Some(m) = &self.mock {
            return m.embed(text).into_iter().map(|x| x * 2.5).collect();
        }
        let base = text.bytes().fold(7u32, |h, b| h.wrapping_mul(31).wrapping_add(b as u32));
        (0..self.dim).map(|i| ((base.wrapping_add(i as u32 * 977)) % 97) as f32 + 1.0).collect()
    }
}

pub struct EchoServer {
    pub url: String,
    pub state: Arc<ServerState>,
}

impl EchoServer {
    pub fn start(dim: usize) -> Self {
        Self::start_with(dim, None)
    }

    /// Serves the given mock embedder's vectors (scaled, so the client must renormalize).
    pub fn start_with(dim: usize, mock: Option<MockEmbedder>) -> Self {
        let state = Arc::new(ServerState {
            dim,
            requests: AtomicUsize::new(0),
            texts_seen: AtomicUsize::new(0),
            overrides: Mutex::new(HashMap::new()),
            failures: Mutex::new(VecDeque::new()),
            reverse_order: AtomicBool::new(false),
            advertise_wrong_dim: AtomicBool::new(false),
            last_body: Mutex::new(None),
            mock,
        });
        let app = Router::new()
            .route("/health", get(health))
            .route("/v1/embeddings", post(embeddings))
            .with_state(Arc::clone(&state));

        let (tx, rx) = std::sync::mpsc::channel();
        std::thread::spawn(move || {
            let rt = tokio::runtime::Builder::new_multi_thread()
                .worker_threads(2)
                .enable_all()
                .build()
                .unwrap();
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
                tx.send(listener.local_addr().unwrap()).unwrap();
                axum::serve(listener, app).await.unwrap();
            });
        });
        let addr = rx.recv().expect("server started");
        EchoServer {
            url: format!("http://{addr}"),
            state,
        }
    }

    pub fn requests(&self) -> usize {
        self.state.requests.load(Ordering::SeqCst)
    }

    pub fn fail_next(&self, codes: &[u16]) {
        self.state.failures.lock().unwrap().extend(codes);
    }

    pub fn set_vector(&self, text: &str, v: Vec<f32>) {
        self.state.overrides.lock().unwrap().insert(text.to_string(), v);
    }
}

fn error(status: StatusCode, msg: &str) -> Response {
    (status, Json(json!({ "error": msg }))).into_response()
}

async fn health(State(s): State<Arc<ServerState>>) -> Json<Value> {
    Json(json!({ "status": "ok", "model": MODEL, "dim": s.dim }))
}

async fn embeddings(State(s): State<Arc<ServerState>>, Json(body): Json<Value>) -> Response {
    s.requests.fetch_add(1, Ordering::SeqCst);
    *s.last_body.lock().unwrap() = Some(body.clone());

    if let Some(code) = s.failures.lock().unwrap().pop_front() {
        return error(StatusCode::from_u16(code).unwrap(), "injected failure");
    }
    if body.get("model").and_then(Value::as_str) != Some(MODEL) {
        return error(StatusCode::BAD_REQUEST, "unknown model");
    }
    if !matches!(body.get("role").and_then(Value::as_str), Some("query" | "document")) {
        return error(StatusCode::BAD_REQUEST, "role must be query or document");
    }
    let Some(input) = body.get("input").and_then(Value::as_array) else {
        return error(StatusCode::BAD_REQUEST, "input must be a list of strings");
    };
    let mut texts = Vec::with_capacity(input.len());
    for v in input {
        match v.as_str() {
            Some(t) => texts.push(t.to_string()),
            None => return error(StatusCode::BAD_REQUEST, "input must be a list of strings"),
        }
    }
    s.texts_seen.fetch_add(texts.len(), Ordering::SeqCst);

    let mut data: Vec<Value> = texts
        .iter()
        .enumerate()
        .map(|(i, t)| json!({ "index": i, "embedding": s.vector(t) }))
        .collect();
    if s.reverse_order.load(Ordering::SeqCst) {
        data.reverse();
    }
    let dim = if s.advertise_wrong_dim.load(Ordering::SeqCst) { s.dim + 1 } else { s.dim };
    Json(json!({ "data": data, "dim": dim })).into_response()
}
