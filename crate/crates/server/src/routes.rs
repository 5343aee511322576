use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, get, post, put};
use axum::{Json, Router};
use disentangle_core::action::Baseline;
use disentangle_core::{DirectionRecord, DisentangleAction, Mask, Session};
use serde_json::json;

use crate::dto::*;
use crate::error::ApiError;
use crate::state::{AppState, SharedSession};

type ApiResult<T> = Result<T, ApiError>;

pub fn router(state: AppState) -> Router {
    let session = Router::new()
        .route("/", get(get_session))
        .route("/gallery", post(gallery))
        .route("/actions", post(action))
        .route("/exemplars", post(select))
        .route("/exemplars/{exemplar_id}", delete(deselect))
        .route("/exemplars/{exemplar_id}/weight", post(weight))
        .route("/compose", post(compose))
        .route("/test", post(test))
        .route("/test-images", post(add_test_image))
        .route("/test-images/{seed}", delete(remove_test_image))
        .route("/test-images/{seed}/strength", put(set_strength))
        .route("/masks", post(create_mask))
        .route("/masks/apply", post(apply_masks))
        .route("/masks/{mask_id}/cycle", post(cycle_mask))
        .route("/directions", post(save))
        .route("/log", get(export_log));
    Router::new()
        .route("/v1/health", get(health))
        .route("/v1/model", get(model))
        .route("/v1/sessions", post(create_session).get(list_sessions))
        .nest("/v1/sessions/{id}", session)
        .route("/v1/directions", get(list_directions))
        .route("/v1/directions/{name}", get(get_direction))
        .with_state(state)
}

fn lookup(state: &AppState, id: &str) -> ApiResult<SharedSession> {
    state.session(id).ok_or_else(|| ApiError::not_found(format!("no session `{id}`")))
}

/// Runs `f` on the session's blocking thread while holding its lock.
async fn with_session<T: Send + 'static>(
    state: &AppState,
    id: &str,
    f: impl FnOnce(&mut Session<f64>) -> ApiResult<T> + Send + 'static,
) -> ApiResult<T> {
    let session = lookup(state, id)?;
    tokio::task::spawn_blocking(move || f(&mut session.lock()))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
}

fn respond(s: &mut Session<f64>, action: DisentangleAction) -> ApiResult<Json<ActionResponse>> {
    let applied = s.apply(action)?;
    Ok(Json(ActionResponse {
        entry: applied.entry,
        outcome: applied.outcome.into(),
        session: SessionView::of(s),
    }))
}

async fn run(state: &AppState, id: &str, action: DisentangleAction) -> ApiResult<Json<ActionResponse>> {
    with_session(state, id, move |s| respond(s, action)).await
}

async fn health() -> Json<serde_json::Value> {
    Json(json!({ "status": "ok" }))
}

async fn model(State(state): State<AppState>) -> Json<ModelView> {
    let a = state.adapter();
    let (h, w) = a.resolution();
    let p = state.plugins();
    Json(ModelView {
        model_hash: a.model_hash().to_string(),
        latent_dim: a.latent_dim(),
        resolution: [h, w],
        layers: a
            .layout()
            .layers()
            .iter()
            .map(|l| LayerView {
                id: l.id.clone(),
                filters: l.filters,
                height: l.height,
                width: l.width,
            })
            .collect(),
        has_average: state.average().is_some(),
        plugins: PluginView {
            detector: p.detector.clone(),
            embedder: p.embedder.clone(),
            classifier: p.classifier.clone(),
        },
    })
}

async fn create_session(State(state): State<AppState>, body: Option<Json<CreateSession>>) -> ApiResult<Response> {
    let req = body.map(|Json(b)| b).unwrap_or_default();
    let session = state.create_session(req.id)?;
    let view = SessionView::of(&session.lock());
    Ok((StatusCode::CREATED, Json(view)).into_response())
}

async fn list_sessions(State(state): State<AppState>) -> Json<Vec<String>> {
    Json(state.session_ids())
}

async fn get_session(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<SessionView>> {
    with_session(&state, &id, |s| Ok(Json(SessionView::of(s)))).await
}

async fn gallery(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Json(req): Json<GalleryRequest>,
) -> ApiResult<Json<Vec<GalleryEntry>>> {
    with_session(&state, &id, move |s| {
        let items = s.gallery(req.count, req.page_seed)?;
        Ok(Json(
            items
                .iter()
                .map(|g| GalleryEntry {
                    exemplar_id: g.exemplar_id.clone(),
                    seed: g.seed,
                    thumbnail: image(&g.thumbnail),
                })
                .collect(),
        ))
    })
    .await
}

async fn action(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Json(a): Json<DisentangleAction>,
) -> ApiResult<Json<ActionResponse>> {
    run(&state, &id, a).await
}

async fn select(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Json(req): Json<SelectRequest>,
) -> ApiResult<Json<ActionResponse>> {
    let action = DisentangleAction::Select {
        exemplar_id: req.exemplar_id.unwrap_or_else(|| format!("ex-{}", req.seed)),
        seed: req.seed,
        polarity: req.polarity,
    };
    run(&state, &id, action).await
}

async fn deselect(
    State(state): State<AppState>,
    Path((id, exemplar_id)): Path<(String, String)>,
) -> ApiResult<Json<ActionResponse>> {
    run(&state, &id, DisentangleAction::Deselect { exemplar_id }).await
}

async fn weight(
    State(state): State<AppState>,
    Path((id, exemplar_id)): Path<(String, String)>,
    Json(req): Json<WeightRequest>,
) -> ApiResult<Json<ActionResponse>> {
    run(
        &state,
        &id,
        DisentangleAction::WeightAdjust {
            exemplar_id,
            steps: req.steps,
        },
    )
    .await
}

async fn compose(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<ActionResponse>> {
    // the session logs the terms it actually used
    let action = DisentangleAction::Compose {
        terms: Vec::new(),
        baseline: Baseline::Negatives,
    };
    run(&state, &id, action).await
}

async fn test(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<ActionResponse>> {
    run(&state, &id, DisentangleAction::Test).await
}

async fn add_test_image(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Json(req): Json<TestImageRequest>,
) -> ApiResult<Json<ActionResponse>> {
    with_session(&state, &id, move |s| {
        let strength = req.strength.unwrap_or(s.config().default_strength);
        respond(s, DisentangleAction::TestImageAdd { seed: req.seed, strength })
    })
    .await
}

async fn remove_test_image(
    State(state): State<AppState>,
    Path((id, seed)): Path<(String, u64)>,
) -> ApiResult<Json<ActionResponse>> {
    run(&state, &id, DisentangleAction::TestImageRemove { seed }).await
}

async fn set_strength(
    State(state): State<AppState>,
    Path((id, seed)): Path<(String, u64)>,
    Json(req): Json<StrengthRequest>,
) -> ApiResult<Json<ActionResponse>> {
    run(
        &state,
        &id,
        DisentangleAction::SetStrength {
            seed,
            strength: req.strength,
        },
    )
    .await
}

async fn create_mask(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Json(req): Json<MaskRequest>,
) -> ApiResult<Json<ActionResponse>> {
    let mask = match req {
        MaskRequest::Wire { mask } => mask,
        MaskRequest::Stroke {
            mask_id,
            created_from,
            stroke,
        } => {
            let (h, w) = state.adapter().resolution();
            Mask::from_stroke(mask_id, h, w, stroke, created_from)?.to_wire()
        }
    };
    run(&state, &id, DisentangleAction::MaskCreate { mask }).await
}

async fn cycle_mask(
    State(state): State<AppState>,
    Path((id, mask_id)): Path<(String, String)>,
) -> ApiResult<Json<ActionResponse>> {
    run(&state, &id, DisentangleAction::MaskCycle { mask_id }).await
}

async fn apply_masks(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Option<Json<ApplyRequest>>,
) -> ApiResult<Json<ActionResponse>> {
    let masks = body.map(|Json(b)| b.masks).unwrap_or_default();
    run(&state, &id, DisentangleAction::MaskApply { masks }).await
}

async fn save(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Json(req): Json<SaveRequest>,
) -> ApiResult<Json<ActionResponse>> {
    run(&state, &id, DisentangleAction::Save { name: req.name }).await
}

async fn export_log(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<LogQuery>,
) -> ApiResult<Response> {
    let log = with_session(&state, &id, |s| Ok(s.export_log())).await?;
    match q.format.as_deref() {
        None | Some("json") => Ok(Json(log).into_response()),
        Some("jsonl") => Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], log.to_jsonl()?).into_response()),
        Some(other) => Err(ApiError::new(
            StatusCode::BAD_REQUEST,
            "argument",
            format!("unknown log format `{other}` (json or jsonl)"),
        )),
    }
}

async fn list_directions(State(state): State<AppState>) -> Json<Vec<String>> {
    Json(state.store().list())
}

async fn get_direction(State(state): State<AppState>, Path(name): Path<String>) -> ApiResult<Json<DirectionRecord>> {
    Ok(Json(state.store().get(&name)?))
}
