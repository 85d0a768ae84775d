use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Multipart, Path, Query, State};
use axum::http::StatusCode;
use axum::Json;
use clickseg::imageproc::iou;
use clickseg::predictors::PredictorInput;
use clickseg::{rle, BinaryMask, Click, ColorImage, InteractionState, Polarity};
use serde::{Deserialize, Serialize};

use crate::error::ApiError;
use crate::SharedState;

#[derive(Debug, Deserialize)]
pub struct CreateQuery {
    predictor: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreateResponse {
    pub session_id: String,
    pub height: usize,
    pub width: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClickRequest {
    pub row: i64,
    pub col: i64,
    pub polarity: Polarity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClickResponse {
    pub mask: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iou: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskResponse {
    pub mask: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub height: usize,
    pub width: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateResponse {
    pub clicks: Vec<Click>,
    pub mask: String,
    pub dims: Dims,
    pub predictor: String,
}

fn decode_mask(bytes: &[u8], field: &str, dims: (usize, usize)) -> Result<BinaryMask, ApiError> {
    let gray = image::load_from_memory(bytes)
        .map_err(|e| ApiError::bad_request(format!("cannot decode `{field}`: {e}")))?
        .to_luma8();
    let (w, h) = gray.dimensions();
    if (h as usize, w as usize) != dims {
        return Err(ApiError::bad_request(format!(
            "`{field}` is {h}x{w}, image is {}x{}",
            dims.0, dims.1
        )));
    }
    BinaryMask::from_vec(dims.0, dims.1, gray.pixels().map(|p| p.0[0] != 0).collect()).map_err(ApiError::from)
}

pub async fn create_session(
    State(app): State<SharedState>,
    Query(query): Query<CreateQuery>,
    mut multipart: Multipart,
) -> Result<(StatusCode, Json<CreateResponse>), ApiError> {
    let predictor = query
        .predictor
        .unwrap_or_else(|| app.registry.default_name().to_string());
    if app.registry.get(&predictor).is_none() {
        return Err(ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            format!("unknown predictor `{predictor}`"),
        ));
    }

    let (mut image, mut mask, mut gt) = (None, None, None);
    while let Some(field) = multipart
        .next_field()
        .await
        .map_err(|e| ApiError::bad_request(e.body_text()))?
    {
        let name = field.name().unwrap_or_default().to_string();
        let bytes = field
            .bytes()
            .await
            .map_err(|e| ApiError::bad_request(e.body_text()))?;
        match name.as_str() {
            "image" => image = Some(bytes),
            "mask" => mask = Some(bytes),
            "gt" => gt = Some(bytes),
            other => return Err(ApiError::bad_request(format!("unexpected field `{other}`"))),
        }
    }
    let image = image.ok_or_else(|| ApiError::bad_request("missing `image` field"))?;
    let image = image::load_from_memory(&image)
        .map_err(|e| ApiError::bad_request(format!("cannot decode `image`: {e}")))?
        .to_rgb8();
    let image = ColorImage::from_rgb8(&image);
    let dims = image.dims();
    let mask = mask.map(|b| decode_mask(&b, "mask", dims)).transpose()?;
    let gt = gt.map(|b| decode_mask(&b, "gt", dims)).transpose()?;

    let state = InteractionState::new(Arc::new(image), mask)?;
    let session_id = app.store.insert(state, predictor, gt);
    log::info!("session {session_id} created ({}x{})", dims.0, dims.1);
    Ok((
        StatusCode::CREATED,
        Json(CreateResponse {
            session_id,
            height: dims.0,
            width: dims.1,
        }),
    ))
}

pub async fn add_click(
    State(app): State<SharedState>,
    Path(id): Path<String>,
    body: Result<Json<ClickRequest>, JsonRejection>,
) -> Result<Json<ClickResponse>, ApiError> {
    let Json(req) = body.map_err(|e| ApiError::bad_request(e.body_text()))?;
    let session = app.store.get(&id).ok_or_else(|| ApiError::not_found(&id))?;
    let mut record = session.lock().await;

    let (h, w) = record.state.dims();
    if req.row < 0 || req.col < 0 || req.row as usize >= h || req.col as usize >= w {
        return Err(ApiError::bad_request(format!(
            "click ({}, {}) outside {h}x{w} image",
            req.row, req.col
        )));
    }
    let click = record
        .state
        .next_click(Click::new(req.row as usize, req.col as usize, req.polarity))?;
    let factory = app
        .registry
        .get(&record.predictor)
        .ok_or_else(|| ApiError::upstream(format!("predictor `{}` is no longer registered", record.predictor)))?;

    let image = record.state.image().clone();
    let mut clicks = record.state.clicks().to_vec();
    clicks.push(click);
    let prev = record.state.prev_mask().clone();
    let gt = record.gt.clone().unwrap_or_else(|| BinaryMask::new(h, w));
    let encoding = app.encoding;
    let prob = tokio::task::spawn_blocking(move || {
        let input = PredictorInput::new(&image, &clicks, &prev, &encoding)?;
        factory.bind(&gt).predict(&input)
    })
    .await
    .map_err(ApiError::upstream)?
    .map_err(ApiError::upstream)?;

    // nothing above touched the record, so a failure leaves it as it was
    record.state.push_click(click, &prob).map_err(ApiError::upstream)?;
    record.updated = app.store.tick();
    let mask = record.state.prev_mask();
    let iou = match &record.gt {
        Some(gt) => Some(iou(mask, gt)?),
        None => None,
    };
    Ok(Json(ClickResponse {
        mask: rle::encode(mask),
        iou,
    }))
}

pub async fn undo(State(app): State<SharedState>, Path(id): Path<String>) -> Result<Json<MaskResponse>, ApiError> {
    let session = app.store.get(&id).ok_or_else(|| ApiError::not_found(&id))?;
    let mut record = session.lock().await;
    record.state.undo()?;
    record.updated = app.store.tick();
    Ok(Json(MaskResponse {
        mask: rle::encode(record.state.prev_mask()),
    }))
}

pub async fn get_state(State(app): State<SharedState>, Path(id): Path<String>) -> Result<Json<StateResponse>, ApiError> {
    let session = app.store.get(&id).ok_or_else(|| ApiError::not_found(&id))?;
    let record = session.lock().await;
    let (height, width) = record.state.dims();
    Ok(Json(StateResponse {
        clicks: record.state.clicks().to_vec(),
        mask: rle::encode(record.state.prev_mask()),
        dims: Dims { height, width },
        predictor: record.predictor.clone(),
    }))
}
