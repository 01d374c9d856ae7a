use std::sync::Arc;

use axum::extract::rejection::QueryRejection;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::routing::{get, post};
use axum::{Json, Router};
use codecoach::bundle::ExerciseBundle;
use codecoach::config::AgentConfig;
use codecoach::grading::{GradeReport, GradingError, Submission, Visibility};
use codecoach::kce::{Concept, ConceptRegistry, LectureLocations, LectureUpload};
use codecoach::lace::{compute_metrics, LearnerMetrics, Scope};
use codecoach::scaffold::{FeedbackRequest, FeedbackResponse, RequestType, ScaffoldError, SrlPhase, Tutor};
use codecoach::xapi::{emit_run_event, emit_viewer_event, LrsError, LrsQuery, Statement, ViewerAction};
use codecoach::{Rational, Timestamp};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::auth::{Caller, Instructor};
use crate::error::{scrub, ApiError, Body};
use crate::state::AppState;

type ApiResult<T> = Result<T, ApiError>;
type Shared = State<Arc<AppState>>;

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/exercises", get(list_exercises).post(create_exercise))
        .route("/exercises/{id}", get(get_exercise))
        .route("/exercises/{id}/bundle", get(get_bundle))
        .route("/lectures", post(create_lecture))
        .route("/concepts", post(register_concepts))
        .route("/concepts/{id}", get(get_concept))
        .route("/submissions", post(submit))
        .route("/submissions/{id}", get(get_submission))
        .route("/feedback", post(feedback))
        .route("/metrics/{actor}", get(metrics))
        .route("/statements", get(statements))
        .route("/events/viewer", post(viewer_event))
        .route("/config", get(get_config).put(put_config))
        .fallback(|| async { ApiError::not_found("route") })
        .with_state(state)
}

/// Routes restricted to instructors, as `(method, path)` with sample ids.
pub const INSTRUCTOR_ROUTES: &[(&str, &str)] = &[
    ("POST", "/exercises"),
    ("GET", "/exercises/sample/bundle"),
    ("POST", "/lectures"),
    ("POST", "/concepts"),
    ("GET", "/metrics/sample"),
    ("GET", "/statements"),
    ("GET", "/config"),
    ("PUT", "/config"),
];

/// Routes open to any authenticated client.
pub const LEARNER_ROUTES: &[(&str, &str)] = &[
    ("GET", "/exercises"),
    ("GET", "/exercises/sample"),
    ("GET", "/concepts/sample"),
    ("POST", "/submissions"),
    ("GET", "/submissions/sample"),
    ("POST", "/feedback"),
    ("POST", "/events/viewer"),
];

async fn health() -> Json<Value> {
    Json(json!({ "status": "ok" }))
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f).await.map_err(ApiError::internal)?
}

#[derive(Serialize)]
struct ExerciseSummary<'a> {
    id: &'a str,
    title: &'a str,
    language_tag: &'a str,
    difficulty: u32,
    concept_tags: &'a [String],
}

async fn list_exercises(State(state): Shared, _caller: Caller) -> Json<Value> {
    let all = state.exercises();
    let items: Vec<ExerciseSummary> = all
        .iter()
        .map(|e| ExerciseSummary {
            id: &e.exercise.id,
            title: &e.exercise.title,
            language_tag: &e.exercise.language_tag,
            difficulty: e.exercise.difficulty,
            concept_tags: &e.exercise.concept_tags,
        })
        .collect();
    Json(json!({ "exercises": items }))
}

/// What a learner may see of an exercise.
#[derive(Debug, Serialize, Deserialize)]
pub struct ExerciseView {
    pub id: String,
    pub title: String,
    pub statement: String,
    pub language_tag: String,
    pub difficulty: u32,
    pub concept_tags: Vec<String>,
    pub tests: Vec<VisibleTest>,
    pub hidden_test_count: usize,
    pub total_marks: Rational,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct VisibleTest {
    pub id: String,
    pub stdin: String,
    pub expected: String,
    pub marks: Rational,
}

async fn get_exercise(State(state): Shared, _caller: Caller, Path(id): Path<String>) -> ApiResult<Json<ExerciseView>> {
    let stored = state.exercise(&id).ok_or_else(|| ApiError::not_found("exercise"))?;
    let ex = &stored.exercise;
    let tests = stored
        .bundle
        .tests
        .iter()
        .filter(|t| t.visibility == Visibility::Visible)
        .map(|t| VisibleTest { id: t.id.clone(), stdin: t.stdin.clone(), expected: t.expected.clone(), marks: t.marks })
        .collect::<Vec<_>>();
    Ok(Json(ExerciseView {
        id: ex.id.clone(),
        title: ex.title.clone(),
        statement: ex.statement.clone(),
        language_tag: ex.language_tag.clone(),
        difficulty: ex.difficulty,
        concept_tags: ex.concept_tags.clone(),
        hidden_test_count: stored.bundle.tests.len() - tests.len(),
        tests,
        total_marks: ex.total_marks(),
    }))
}

async fn get_bundle(State(state): Shared, _i: Instructor, Path(id): Path<String>) -> ApiResult<Json<ExerciseBundle>> {
    let stored = state.exercise(&id).ok_or_else(|| ApiError::not_found("exercise"))?;
    Ok(Json(stored.bundle.clone()))
}

async fn create_exercise(State(state): Shared, _i: Instructor, Body(body): Body<Value>) -> ApiResult<(StatusCode, Json<Value>)> {
    let bundle = ExerciseBundle::from_json(body).map_err(ApiError::invalid)?;
    let id = bundle.id.clone();
    blocking(move || state.add_exercise(bundle)).await?;
    tracing::info!(exercise = %id, "exercise stored");
    Ok((StatusCode::CREATED, Json(json!({ "id": id }))))
}

async fn create_lecture(
    State(state): Shared,
    _i: Instructor,
    Body(upload): Body<LectureUpload>,
) -> ApiResult<(StatusCode, Json<Value>)> {
    let id = upload.material_id.clone();
    let chunks = blocking(move || state.add_lecture(upload)).await?;
    Ok((StatusCode::CREATED, Json(json!({ "material_id": id, "chunk_ids": chunks }))))
}

async fn register_concepts(State(state): Shared, _i: Instructor, Body(reg): Body<ConceptRegistry>) -> ApiResult<Json<Value>> {
    let ids = blocking(move || state.add_concepts(reg.concepts)).await?;
    Ok(Json(json!({ "registered": ids })))
}

#[derive(Serialize)]
struct ConceptView {
    concept: Concept,
    /// Every transitive prerequisite, in study order.
    prerequisites: Vec<String>,
    locations: LectureLocations,
}

async fn get_concept(State(state): Shared, _caller: Caller, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let kb = state.knowledge.snapshot();
    let concept = kb.concepts().get(&id).cloned().ok_or_else(|| ApiError::not_found("concept"))?;
    let prerequisites = kb.concept_dependencies(&id).map_err(ApiError::internal)?;
    let locations = kb.locate_in_lecture(&id).map_err(ApiError::internal)?;
    Ok(Json(serde_json::to_value(ConceptView { concept, prerequisites, locations }).map_err(ApiError::internal)?))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SubmissionBody {
    exercise_id: String,
    #[serde(alias = "source")]
    source_code: String,
    #[serde(default)]
    actor_id: Option<String>,
}

fn grading_error(e: GradingError) -> ApiError {
    match e {
        GradingError::SourceTooLarge { .. } => ApiError::too_large(e.to_string()),
        other => ApiError::internal(other),
    }
}

fn lrs_error(e: LrsError) -> ApiError {
    ApiError::internal(e)
}

/// Learners get the redacted view of their report.
fn report_for(caller: &Caller, report: &GradeReport) -> GradeReport {
    if caller.is_instructor() {
        report.clone()
    } else {
        report.learner_view()
    }
}

async fn submit(State(state): Shared, caller: Caller, Body(body): Body<SubmissionBody>) -> ApiResult<(StatusCode, Json<GradeReport>)> {
    let actor_id = caller.acting_as(body.actor_id)?;
    let stored = state.exercise(&body.exercise_id).ok_or_else(|| ApiError::not_found("exercise"))?;
    let rt = state.runtime();
    rt.grader.check_source(&body.source_code).map_err(grading_error)?;
    let submission = Submission {
        id: uuid::Uuid::new_v4().simple().to_string(),
        exercise_id: body.exercise_id,
        actor_id,
        source_code: body.source_code,
        submitted_at: Timestamp::now(),
    };
    let st = Arc::clone(&state);
    let report = blocking(move || {
        let limits = rt.grader.limits_for(&stored.exercise);
        let report = rt.grader.run_submission(&submission, &stored.exercise, &limits).map_err(grading_error)?;
        let report = st.reports.save(report).map_err(grading_error)?;
        emit_run_event(&st.lrs, &submission, &report).map_err(lrs_error)?;
        Ok(report)
    })
    .await?;
    tracing::info!(submission = %report.submission_id, exercise = %report.exercise_id, passed = report.all_passed, "graded");
    Ok((StatusCode::CREATED, Json(report_for(&caller, &report))))
}

async fn get_submission(State(state): Shared, caller: Caller, Path(id): Path<String>) -> ApiResult<Json<GradeReport>> {
    let report = state.reports.get(&id).ok_or_else(|| ApiError::not_found("submission"))?;
    if !caller.is_instructor() && report.actor_id != caller.actor_id {
        return Err(ApiError::not_found("submission"));
    }
    Ok(Json(report_for(&caller, &report)))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FeedbackBody {
    exercise_id: String,
    phase: SrlPhase,
    request_type: RequestType,
    #[serde(default)]
    code_snapshot: String,
    #[serde(default)]
    latest_report_id: Option<String>,
    #[serde(default)]
    free_text: Option<String>,
    #[serde(default)]
    actor_id: Option<String>,
}

fn scaffold_error(e: ScaffoldError) -> ApiError {
    match e {
        ScaffoldError::UnknownExercise(_) => ApiError::not_found("exercise"),
        ScaffoldError::SourceTooLarge { .. } => ApiError::too_large(e.to_string()),
        ScaffoldError::ReportMismatch { .. } => {
            ApiError::invalid_field("latest_report_id", "report belongs to a different exercise")
        }
        other => ApiError::internal(other),
    }
}

async fn feedback(State(state): Shared, caller: Caller, Body(body): Body<FeedbackBody>) -> ApiResult<Json<FeedbackResponse>> {
    let actor_id = caller.acting_as(body.actor_id)?;
    if state.exercise(&body.exercise_id).is_none() {
        return Err(ApiError::not_found("exercise"));
    }
    let latest_report = match &body.latest_report_id {
        None => None,
        Some(id) => {
            let report = state.reports.get(id).filter(|r| caller.is_instructor() || r.actor_id == caller.actor_id);
            Some(report.ok_or_else(|| ApiError::not_found("report"))?.as_ref().clone())
        }
    };
    let mut req = FeedbackRequest::new(actor_id, body.exercise_id, body.phase, body.request_type, Timestamp::now())
        .with_code(body.code_snapshot);
    req.latest_report = latest_report;
    req.free_text = body.free_text;

    let rt = state.runtime();
    let permit = Arc::clone(&rt.llm_slots).acquire_owned().await.map_err(ApiError::internal)?;
    let resp = blocking(move || {
        let _permit = permit;
        let kb = state.knowledge.snapshot();
        let tutor = Tutor {
            knowledge: &kb,
            lrs: &state.lrs,
            policy: &state.policy,
            directives: &rt.directives,
            runners: rt.grader.sandbox().runners(),
            settings: rt.agent.tutor_settings(state.source_limit()),
        };
        tutor.generate_feedback(rt.llm.as_ref(), &req).map_err(scaffold_error)
    })
    .await?;
    Ok(Json(resp))
}

#[derive(Deserialize)]
struct MetricsQuery {
    #[serde(default)]
    exercise: Option<String>,
}

async fn metrics(
    State(state): Shared,
    _i: Instructor,
    Path(actor): Path<String>,
    query: Result<Query<MetricsQuery>, QueryRejection>,
) -> ApiResult<Json<LearnerMetrics>> {
    let Query(q) = query.map_err(|e| ApiError::invalid_field("query", scrub(&e.body_text())))?;
    let scope = match q.exercise {
        Some(id) if !id.is_empty() => Scope::Exercise(id),
        _ => Scope::Global,
    };
    let gap = state.runtime().agent.session_gap_s;
    let metrics = blocking(move || {
        let log = state.lrs.query(&LrsQuery::actor(actor.clone())).map_err(lrs_error)?;
        Ok(compute_metrics(&log, &actor, &scope, &state.policy, gap))
    })
    .await?;
    Ok(Json(metrics))
}

#[derive(Serialize)]
struct StatementPage {
    statements: Vec<Statement>,
}

async fn statements(
    State(state): Shared,
    _i: Instructor,
    query: Result<Query<LrsQuery>, QueryRejection>,
) -> ApiResult<Json<Value>> {
    let Query(q) = query.map_err(|e| ApiError::invalid_field("query", scrub(&e.body_text())))?;
    let page = blocking(move || {
        state.lrs.query(&q).map_err(|e| match e {
            LrsError::InvalidQuery(m) => ApiError::invalid_field("since", m),
            other => lrs_error(other),
        })
    })
    .await?;
    Ok(Json(serde_json::to_value(StatementPage { statements: page }).map_err(ApiError::internal)?))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ViewerBody {
    material_id: String,
    action: ViewerAction,
    #[serde(default)]
    page: Option<u32>,
    #[serde(default)]
    actor_id: Option<String>,
}

async fn viewer_event(State(state): Shared, caller: Caller, Body(body): Body<ViewerBody>) -> ApiResult<(StatusCode, Json<Value>)> {
    let actor_id = caller.acting_as(body.actor_id)?;
    if body.material_id.trim().is_empty() {
        return Err(ApiError::invalid_field("material_id", "must not be empty"));
    }
    let stmt = blocking(move || {
        emit_viewer_event(&state.lrs, &actor_id, &body.material_id, body.action, body.page, Timestamp::now()).map_err(
            |e| match e {
                LrsError::Validation(errs) => ApiError::invalid(errs),
                other => lrs_error(other),
            },
        )
    })
    .await?;
    Ok((StatusCode::CREATED, Json(json!({ "id": stmt.id }))))
}

async fn get_config(State(state): Shared, _i: Instructor) -> Json<AgentConfig> {
    Json(state.runtime().agent.clone())
}

async fn put_config(State(state): Shared, _i: Instructor, Body(body): Body<Value>) -> ApiResult<Json<AgentConfig>> {
    let agent = AgentConfig::from_json(body).map_err(ApiError::invalid)?;
    let rt = state.apply_config(agent)?;
    Ok(Json(rt.agent.clone()))
}
