use std::sync::Arc;
use std::time::Instant;

use axum::body::Bytes;
use axum::extract::{FromRequest, Multipart, Request, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::Json;
use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::json;
use tintline::Error as CoreError;

use crate::store::Lookup;
use crate::AppState;

/// Decoded request, whichever encoding it arrived in.
#[derive(Debug, Default)]
pub struct ColorizeRequest {
    pub line_art: Vec<u8>,
    pub strokes: Option<Vec<u8>>,
    pub model_id: Option<String>,
}

/// JSON request body: images as base64 strings.
#[derive(Debug, Deserialize)]
struct JsonRequest {
    line_art: String,
    #[serde(default)]
    strokes: Option<String>,
    #[serde(default)]
    model_id: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ColorizeResponse {
    /// Base64 PNG.
    pub image: String,
    pub width: u32,
    pub height: u32,
    pub timing_ms: f64,
    pub model_id: String,
    pub request_id: String,
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
    pub request_id: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>, request_id: &str) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
            request_id: request_id.to_string(),
        }
    }

    fn bad_request(message: impl Into<String>, request_id: &str) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message, request_id)
    }

    /// Keep the extractor's status, so an oversized body stays 413.
    fn body(status: StatusCode, message: impl Into<String>, request_id: &str) -> Self {
        let code = if status == StatusCode::PAYLOAD_TOO_LARGE {
            "payload_too_large"
        } else {
            "bad_request"
        };
        Self::new(status, code, message, request_id)
    }

    fn undecodable(message: impl Into<String>, request_id: &str) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, "undecodable_image", message, request_id)
    }

    fn from_core(e: CoreError, request_id: &str) -> Self {
        match e {
            CoreError::ShapeMismatch { .. } => Self::new(StatusCode::BAD_REQUEST, "dimension_mismatch", e.to_string(), request_id),
            CoreError::InvalidArgument(_) | CoreError::InvalidData(_) => Self::bad_request(e.to_string(), request_id),
            CoreError::Decode(_) | CoreError::Image(_) => Self::undecodable(e.to_string(), request_id),
            other => Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", other.to_string(), request_id),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = Json(json!({
            "error": self.code,
            "message": self.message,
            "request_id": self.request_id,
        }));
        let mut resp = (self.status, body).into_response();
        if self.status == StatusCode::SERVICE_UNAVAILABLE {
            resp.headers_mut().insert(header::RETRY_AFTER, HeaderValue::from_static("1"));
        }
        resp
    }
}

fn content_type(headers: &HeaderMap) -> String {
    headers
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .unwrap_or("")
        .to_ascii_lowercase()
}

fn wants_png(headers: &HeaderMap) -> bool {
    headers
        .get(header::ACCEPT)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|a| a.contains("image/png"))
}

fn decode_base64(field: &str, value: &str, request_id: &str) -> Result<Vec<u8>, ApiError> {
    // Tolerate data URLs as produced by canvas.toDataURL().
    let raw = value.split_once(";base64,").map_or(value, |(_, b)| b);
    BASE64
        .decode(raw.trim())
        .map_err(|e| ApiError::undecodable(format!("{field} is not valid base64: {e}"), request_id))
}

async fn parse_multipart(mut form: Multipart, request_id: &str) -> Result<ColorizeRequest, ApiError> {
    let mut req = ColorizeRequest::default();
    let mut have_line = false;
    while let Some(field) = form
        .next_field()
        .await
        .map_err(|e| ApiError::body(e.status(), format!("malformed multipart body: {e}"), request_id))?
    {
        let name = field.name().unwrap_or("").to_string();
        let bytes = field
            .bytes()
            .await
            .map_err(|e| ApiError::body(e.status(), format!("cannot read field {name}: {e}"), request_id))?;
        match name.as_str() {
            "line_art" => {
                req.line_art = bytes.to_vec();
                have_line = true;
            }
            "strokes" if !bytes.is_empty() => req.strokes = Some(bytes.to_vec()),
            "strokes" => {}
            "model_id" => {
                let id = String::from_utf8(bytes.to_vec())
                    .map_err(|_| ApiError::bad_request("model_id is not UTF-8", request_id))?;
                if !id.trim().is_empty() {
                    req.model_id = Some(id.trim().to_string());
                }
            }
            other => log::debug!("ignoring multipart field {other}"),
        }
    }
    if !have_line {
        return Err(ApiError::bad_request("missing line_art field", request_id));
    }
    Ok(req)
}

fn parse_json(body: &[u8], request_id: &str) -> Result<ColorizeRequest, ApiError> {
    let parsed: JsonRequest =
        serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("malformed JSON body: {e}"), request_id))?;
    Ok(ColorizeRequest {
        line_art: decode_base64("line_art", &parsed.line_art, request_id)?,
        strokes: parsed
            .strokes
            .filter(|s| !s.is_empty())
            .map(|s| decode_base64("strokes", &s, request_id))
            .transpose()?,
        model_id: parsed.model_id.filter(|s| !s.is_empty()),
    })
}

pub async fn colorize(State(app): State<Arc<AppState>>, req: Request) -> Result<Response, ApiError> {
    let request_id = uuid::Uuid::new_v4().to_string();
    let started = Instant::now();
    let headers = req.headers().clone();
    let ctype = content_type(&headers);
    let parsed = if ctype.starts_with("multipart/form-data") {
        let form = Multipart::from_request(req, &())
            .await
            .map_err(|e| ApiError::body(e.status(), e.body_text(), &request_id))?;
        parse_multipart(form, &request_id).await?
    } else if ctype.starts_with("application/json") {
        let body = Bytes::from_request(req, &())
            .await
            .map_err(|e| ApiError::body(e.status(), e.body_text(), &request_id))?;
        parse_json(&body, &request_id)?
    } else {
        return Err(ApiError::new(
            StatusCode::UNSUPPORTED_MEDIA_TYPE,
            "unsupported_media_type",
            "send multipart/form-data or application/json",
            &request_id,
        ));
    };

    let model_id = match parsed.model_id.clone().or_else(|| app.store.default_id()) {
        Some(id) => id,
        None => return Err(ApiError::new(StatusCode::NOT_FOUND, "unknown_model", "no models are available", &request_id)),
    };
    let model = match app.store.get(&model_id) {
        Lookup::Ready(m) => m,
        Lookup::Loading => {
            return Err(ApiError::new(
                StatusCode::SERVICE_UNAVAILABLE,
                "model_loading",
                format!("model {model_id} is loading"),
                &request_id,
            ))
        }
        Lookup::Failed(msg) => {
            return Err(ApiError::new(
                StatusCode::INTERNAL_SERVER_ERROR,
                "model_failed",
                format!("model {model_id} failed to load: {msg}"),
                &request_id,
            ))
        }
        Lookup::Unknown => {
            return Err(ApiError::new(
                StatusCode::NOT_FOUND,
                "unknown_model",
                format!("unknown model {model_id}"),
                &request_id,
            ))
        }
    };

    let max_side = app.config.max_side;
    let forward_lock = Arc::clone(&app.forward_lock);
    let result = tokio::task::spawn_blocking(move || {
        let _device = forward_lock.lock().unwrap_or_else(|p| p.into_inner());
        let model = model.lock().unwrap_or_else(|p| p.into_inner());
        model.colorize_png(&parsed.line_art, parsed.strokes.as_deref(), max_side)
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string(), &request_id))?;
    let (png, out) = result.map_err(|e| ApiError::from_core(e, &request_id))?;
    let timing_ms = started.elapsed().as_secs_f64() * 1e3;
    let (_, height, width) = out.rgb.dim();
    log::info!("request {request_id}: model {model_id}, {width}x{height}, {timing_ms:.1} ms");

    if wants_png(&headers) {
        let mut resp = (StatusCode::OK, [(header::CONTENT_TYPE, "image/png")], png).into_response();
        let h = resp.headers_mut();
        for (name, value) in [
            ("x-request-id", request_id.clone()),
            ("x-model-id", model_id.clone()),
            ("x-timing-ms", format!("{timing_ms:.3}")),
        ] {
            if let Ok(v) = HeaderValue::from_str(&value) {
                h.insert(name, v);
            }
        }
        return Ok(resp);
    }
    Ok(Json(ColorizeResponse {
        image: BASE64.encode(&png),
        width: width as u32,
        height: height as u32,
        timing_ms,
        model_id,
        request_id,
    })
    .into_response())
}

pub async fn models(State(app): State<Arc<AppState>>) -> Json<serde_json::Value> {
    Json(json!({
        "default": app.store.default_id(),
        "models": app.store.list(),
    }))
}

pub async fn healthz(State(app): State<Arc<AppState>>) -> Json<serde_json::Value> {
    let models: serde_json::Map<String, serde_json::Value> = app
        .store
        .list()
        .into_iter()
        .map(|m| (m.id, serde_json::to_value(m.state).unwrap_or_default()))
        .collect();
    Json(json!({
        "status": app.store.status(),
        "models": models,
        "version": env!("CARGO_PKG_VERSION"),
    }))
}
