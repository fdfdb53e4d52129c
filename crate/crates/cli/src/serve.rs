//! HTTP decode service: `POST /v1/decode` and `GET /v1/layouts`.

use std::collections::HashMap;
use std::sync::Arc;
use std::time::Instant;

use axum::body::Bytes;
use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use g2t_core::discretize::discretize;
use g2t_core::lexicon::read_word_list;
use g2t_core::neural::read_model;
use g2t_core::{Decoder, KeyboardLayout, LexiconTrie, NeuralDecoder, Point, TemplateSet, Trajectory};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tower_http::cors::CorsLayer;

use crate::commands::Context;
use crate::error::{CliError, CliResult};
use crate::ServeArgs;

pub const MAX_K: usize = 10;

/// Immutable state shared by all requests.
pub struct AppState {
    pub layouts: Vec<KeyboardLayout>,
    /// Keyed by request name: "neural" and/or "shark2".
    pub decoders: HashMap<&'static str, Decoder>,
    pub default_decoder: &'static str,
}

#[derive(Debug, Deserialize)]
pub struct DecodeRequest {
    pub points: Vec<[f64; 2]>,
    pub layout: Option<String>,
    pub decoder: Option<String>,
    pub k: Option<usize>,
}

#[derive(Debug, Serialize)]
pub struct CandidateOut {
    pub word: String,
    pub log_prob: f64,
}

#[derive(Debug, Serialize)]
pub struct DecodeResponse {
    pub candidates: Vec<CandidateOut>,
    pub latency_ms: f64,
    pub decoder: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub debug: Option<Value>,
}

fn error(status: StatusCode, message: impl Into<String>, extra: Option<(&str, Value)>) -> Response {
    let mut body = json!({ "error": message.into() });
    if let Some((k, v)) = extra {
        body[k] = v;
    }
    (status, Json(body)).into_response()
}

impl AppState {
    /// Loads the decoders named by the serve flags. At least one of
    /// `--model` or `--lexicon` is needed.
    pub fn from_args(ctx: &Context, args: &ServeArgs) -> CliResult<Self> {
        let words = args.lexicon.as_deref().map(read_word_list).transpose()?;
        let mut decoders = HashMap::new();
        if let Some(path) = &args.model {
            let model = read_model(path)?;
            let lexicon = words.clone().map(LexiconTrie::new).transpose()?.map(Arc::new);
            let width = args.beam_width.unwrap_or(ctx.file.beam.beam_width).max(MAX_K);
            decoders.insert("neural", Decoder::Neural(NeuralDecoder::new(model, lexicon, width, 4)?));
        }
        if let Some(words) = &words {
            decoders.insert("shark2", Decoder::Shark2(TemplateSet::build(words, &ctx.layout, ctx.file.shark2)?));
        }
        let default_decoder = if decoders.contains_key("neural") {
            "neural"
        } else if decoders.contains_key("shark2") {
            "shark2"
        } else {
            return Err(CliError::Usage("serve needs --model and/or --lexicon".into()));
        };
        Ok(Self {
            layouts: vec![ctx.layout.clone()],
            decoders,
            default_decoder,
        })
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/v1/decode", post(decode))
        .route("/v1/layouts", get(layouts))
        .layer(CorsLayer::permissive())
        .with_state(state)
}

async fn layouts(State(state): State<Arc<AppState>>) -> Json<Value> {
    Json(Value::Array(state.layouts.iter().map(KeyboardLayout::to_json_value).collect()))
}

async fn decode(
    State(state): State<Arc<AppState>>,
    Query(query): Query<HashMap<String, String>>,
    body: Bytes,
) -> Response {
    let req: DecodeRequest = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => return error(StatusCode::BAD_REQUEST, format!("malformed request: {e}"), None),
    };
    let debug = query.get("debug").is_some_and(|v| v == "1" || v == "true");
    let k = req.k.unwrap_or(4);
    if !(1..=MAX_K).contains(&k) {
        return error(StatusCode::UNPROCESSABLE_ENTITY, format!("k must be in [1, {MAX_K}], got {k}"), None);
    }
    if req.points.len() < 2 {
        return error(
            StatusCode::UNPROCESSABLE_ENTITY,
            format!("need at least 2 points, got {}", req.points.len()),
            None,
        );
    }
    let layout = match &req.layout {
        None => state.layouts[0].clone(),
        Some(name) => match state.layouts.iter().find(|l| l.name() == name) {
            Some(l) => l.clone(),
            None => {
                let names: Vec<&str> = state.layouts.iter().map(KeyboardLayout::name).collect();
                return error(
                    StatusCode::UNPROCESSABLE_ENTITY,
                    format!("unknown layout {name:?}"),
                    Some(("layouts", json!(names))),
                );
            }
        },
    };
    let name = req.decoder.clone().unwrap_or_else(|| state.default_decoder.to_string());
    if !state.decoders.contains_key(name.as_str()) {
        let mut available: Vec<&str> = state.decoders.keys().copied().collect();
        available.sort();
        return error(
            StatusCode::UNPROCESSABLE_ENTITY,
            format!("decoder {name:?} is not available"),
            Some(("decoders", json!(available))),
        );
    }
    let traj = match Trajectory::new(req.points.iter().map(|p| Point::new(p[0], p[1])).collect()) {
        Ok(t) => t,
        Err(e) => return error(StatusCode::UNPROCESSABLE_ENTITY, e.to_string(), None),
    };
    let worker = state.clone();
    let joined = tokio::task::spawn_blocking(move || {
        let decoder = &worker.decoders[name.as_str()];
        let start = Instant::now();
        let result = decoder.decode(&traj, &layout, k);
        let latency_ms = start.elapsed().as_secs_f64() * 1e3;
        let info = if debug { debug_info(decoder, &traj, &layout) } else { None };
        (result, latency_ms, decoder.name(), info)
    })
    .await;
    let (result, latency_ms, decoder_name, info) = match joined {
        Ok(r) => r,
        Err(e) => return error(StatusCode::INTERNAL_SERVER_ERROR, format!("decode task failed: {e}"), None),
    };
    match result {
        Ok(cands) => Json(DecodeResponse {
            candidates: cands
                .into_iter()
                .map(|c| CandidateOut {
                    word: c.word,
                    log_prob: c.log_prob,
                })
                .collect(),
            latency_ms,
            decoder: decoder_name.to_string(),
            debug: info,
        })
        .into_response(),
        Err(e) if e.is_numeric() => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string(), None),
        Err(e) => error(StatusCode::UNPROCESSABLE_ENTITY, e.to_string(), None),
    }
}

/// Frame count and region sequence as seen by a discretizing decoder.
fn debug_info(decoder: &Decoder, traj: &Trajectory, layout: &KeyboardLayout) -> Option<Value> {
    let pre = match decoder {
        Decoder::Neural(d) => d.model.preprocess.clone(),
        Decoder::Shark2(_) => Default::default(),
    };
    let (enc, unit) = pre.encode(traj, layout).ok()?;
    let d = discretize(&enc, &unit, &pre.discretizer()).ok()?;
    Some(json!({
        "frames": enc.len(),
        "regions": d.indices,
        "labels": d.labels(),
    }))
}

pub fn run(ctx: &Context, args: ServeArgs) -> CliResult<()> {
    let state = Arc::new(AppState::from_args(ctx, &args)?);
    let addr = format!("{}:{}", args.host, args.port);
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&addr)
            .await
            .map_err(|e| CliError::Usage(format!("cannot bind {addr}: {e}")))?;
        eprintln!("listening on http://{addr}");
        axum::serve(listener, router(state)).await?;
        Ok(())
    })
}
