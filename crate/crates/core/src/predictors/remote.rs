//! Client for predictors served over HTTP.
//!
//! `POST {base}/predict` with a JSON body
//! `{"height", "width", "image", "pos", "neg", "prev"}` where `image` is
//! base64 of the raw row-major RGB bytes and the three guidance planes are
//! base64 of little-endian `f32` values. The response is `{"prob": ...}`, one
//! `f32` plane of the same size.

use std::time::{Duration, Instant};

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use super::{Predictor, PredictorInput};
use crate::error::{Error, Result};
use crate::types::ProbMap;

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictRequest {
    pub height: usize,
    pub width: usize,
    pub image: String,
    pub pos: String,
    pub neg: String,
    pub prev: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictResponse {
    pub prob: String,
}

pub fn encode_f32_plane(values: impl IntoIterator<Item = f64>) -> String {
    let bytes: Vec<u8> = values
        .into_iter()
        .flat_map(|v| (v as f32).to_le_bytes())
        .collect();
    STANDARD.encode(bytes)
}

pub fn decode_f32_plane(text: &str) -> Result<Vec<f32>> {
    let bytes = STANDARD
        .decode(text)
        .map_err(|e| Error::MalformedResponse(format!("bad base64: {e}")))?;
    if bytes.len() % 4 != 0 {
        return Err(Error::MalformedResponse(format!(
            "plane of {} bytes is not a whole number of f32 values",
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect())
}

impl PredictRequest {
    pub fn from_input(input: &PredictorInput<'_>) -> Self {
        let (height, width) = input.dims();
        Self {
            height,
            width,
            image: STANDARD.encode(input.image.as_bytes()),
            pos: encode_f32_plane(input.guidance.pos.data().iter().copied()),
            neg: encode_f32_plane(input.guidance.neg.data().iter().copied()),
            prev: encode_f32_plane(input.prev_mask.data().iter().map(|&b| if b { 1.0 } else { 0.0 })),
        }
    }
}

impl PredictResponse {
    /// Decodes the probability plane and checks it against the request size.
    pub fn decode(&self, height: usize, width: usize) -> Result<ProbMap> {
        let plane = decode_f32_plane(&self.prob)?;
        if plane.len() != height * width {
            return Err(Error::Shape {
                expected: (height, width),
                actual: (plane.len() / width.max(1), plane.len() % width.max(1)),
            });
        }
        ProbMap::from_vec_clamped(height, width, plane.into_iter().map(f64::from).collect())
    }
}

#[derive(Debug, Clone)]
pub struct RemotePredictor {
    endpoint: String,
    timeout: Duration,
    agent: ureq::Agent,
}

impl RemotePredictor {
    /// `base` is the server root (`http://host:port`); a URL already ending
    /// in `/predict` is used as is.
    pub fn new(base: &str) -> Self {
        Self::with_timeout(base, DEFAULT_TIMEOUT)
    }

    pub fn with_timeout(base: &str, timeout: Duration) -> Self {
        let trimmed = base.trim_end_matches('/');
        let endpoint = if trimmed.ends_with("/predict") {
            trimmed.to_string()
        } else {
            format!("{trimmed}/predict")
        };
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            endpoint,
            timeout,
            agent,
        }
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    pub fn timeout(&self) -> Duration {
        self.timeout
    }

    fn transport(&self, started: Instant, message: impl Into<String>) -> Error {
        Error::Transport {
            endpoint: self.endpoint.clone(),
            elapsed: started.elapsed(),
            message: message.into(),
        }
    }
}

impl Predictor for RemotePredictor {
    fn name(&self) -> String {
        format!("remote:{}", self.endpoint)
    }

    fn predict(&self, input: &PredictorInput<'_>) -> Result<ProbMap> {
        input.validate()?;
        let (h, w) = input.dims();
        let body = serde_json::to_string(&PredictRequest::from_input(input))?;
        let started = Instant::now();
        let mut response = self
            .agent
            .post(&self.endpoint)
            .header("Content-Type", "application/json")
            .send(body.as_str())
            .map_err(|e| self.transport(started, e.to_string()))?;
        let status = response.status();
        let text = response
            .body_mut()
            .read_to_string()
            .map_err(|e| self.transport(started, e.to_string()))?;
        if !status.is_success() {
            return Err(self.transport(started, format!("HTTP {status}: {text}")));
        }
        let parsed: PredictResponse =
            serde_json::from_str(&text).map_err(|e| Error::MalformedResponse(e.to_string()))?;
        parsed.decode(h, w)
    }
}
