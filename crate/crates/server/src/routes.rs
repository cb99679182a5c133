use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::Json;
use pic_core::link::serve_request;
use pic_core::model::tokenizer;
use pic_core::serving::RequestMetrics;
use pic_core::store::Expiry;
use pic_core::{compile_batch, split, CacheId, ChunkSpec, CompileVariant, LinkAlgorithm, PromptSegment, TokenId};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::{ApiError, AppState};

const DEFAULT_ALGORITHM: &str = "legolink:16";
const DEFAULT_MAX_NEW_TOKENS: usize = 16;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CompileRequest {
    Chunks {
        chunks: Vec<Vec<TokenId>>,
        #[serde(default)]
        variant: Option<String>,
    },
    Text {
        text: String,
        chunk_spec: String,
        #[serde(default)]
        variant: Option<String>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompileResponse {
    pub cache_ids: Vec<CacheId>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Message {
    Cached { cache_id: CacheId },
    Tokens { tokens: Vec<TokenId> },
    Text { text: String },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub messages: Vec<Message>,
    #[serde(default)]
    pub algorithm: Option<String>,
    #[serde(default)]
    pub max_new_tokens: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompletionResponse {
    pub tokens: Vec<TokenId>,
    pub text: String,
    pub metrics: RequestMetrics,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExpireResponse {
    pub expired: bool,
}

// Parsed by hand so every malformed body is a 400, not axum's 422.
fn parse<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("malformed body: {e}")))
}

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, ApiError> + Send + 'static,
) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f).await.map_err(|e| ApiError {
        status: axum::http::StatusCode::INTERNAL_SERVER_ERROR,
        message: e.to_string(),
    })?
}

pub async fn create_cache(State(state): State<AppState>, body: Bytes) -> Result<Json<CompileResponse>, ApiError> {
    let req: CompileRequest = parse(&body)?;
    let (chunks, variant) = match req {
        CompileRequest::Chunks { chunks, variant } => (chunks, variant),
        CompileRequest::Text { text, chunk_spec, variant } => {
            let spec: ChunkSpec = chunk_spec.parse()?;
            (split(&tokenizer::encode(&text), spec)?, variant)
        }
    };
    if chunks.is_empty() {
        return Err(ApiError::bad_request("no chunks to compile"));
    }
    let variant = match variant.as_deref() {
        None => CompileVariant::Standard,
        Some(v) => v.parse().map_err(|e: pic_core::PicError| ApiError::bad_request(e.to_string()))?,
    };
    let cache_ids = blocking(move || Ok(compile_batch(&state.weights, &state.store, &chunks, variant)?)).await?;
    Ok(Json(CompileResponse { cache_ids }))
}

pub async fn chat_completion(
    State(state): State<AppState>,
    body: Bytes,
) -> Result<Json<CompletionResponse>, ApiError> {
    let req: CompletionRequest = parse(&body)?;
    if req.messages.is_empty() {
        return Err(ApiError::bad_request("no messages"));
    }
    let algorithm: LinkAlgorithm = req.algorithm.as_deref().unwrap_or(DEFAULT_ALGORITHM).parse()?;
    let max_new_tokens = req.max_new_tokens.unwrap_or(DEFAULT_MAX_NEW_TOKENS);
    let segments: Vec<PromptSegment> = req
        .messages
        .into_iter()
        .map(|m| match m {
            Message::Cached { cache_id } => PromptSegment::Cached(cache_id),
            Message::Tokens { tokens } => PromptSegment::Literal(tokens),
            Message::Text { text } => PromptSegment::Literal(tokenizer::encode(&text)),
        })
        .collect();
    let out = blocking(move || {
        Ok(serve_request(&state.weights, &state.store, &segments, algorithm, max_new_tokens)?)
    })
    .await?;
    Ok(Json(CompletionResponse { text: tokenizer::decode(&out.tokens), tokens: out.tokens, metrics: out.metrics }))
}

pub async fn expire_cache(
    State(state): State<AppState>,
    Path(id): Path<u64>,
) -> Result<Json<ExpireResponse>, ApiError> {
    let expiry = blocking(move || Ok(state.store.expire(CacheId(id))?)).await?;
    Ok(Json(ExpireResponse { expired: matches!(expiry, Expiry::Removed { .. }) }))
}
