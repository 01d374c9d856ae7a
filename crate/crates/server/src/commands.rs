//! Offline commands behind the CLI.

use std::path::Path;

use anyhow::Context as _;
use codecoach::bundle::ExerciseBundle;
use codecoach::grading::{GradeReport, Grader, RunnerRegistry, Sandbox, Submission};
use codecoach::kce::{ConceptRegistry, LectureUpload};
use codecoach::xapi::Lrs;
use codecoach::Timestamp;
use serde::Serialize;

use crate::settings::ServerConfig;
use crate::state::{write_atomic, AppState};

/// A grader built from the server settings, without touching the data
/// directory.
pub fn local_grader(cfg: &ServerConfig) -> anyhow::Result<Grader> {
    let base = match &cfg.runners_file {
        Some(path) => RunnerRegistry::load(path)?,
        None => RunnerRegistry::default(),
    };
    let runners = cfg.agent.apply_runner_limits(&base);
    Ok(Grader::new(Sandbox::new(runners).with_isolation(cfg.isolation.into())).with_source_limit(cfg.source_limit_bytes))
}

/// Grades `source_file` against the bundle in `exercise_dir`. Nothing is
/// logged or stored.
pub fn grade(cfg: &ServerConfig, exercise_dir: &Path, source_file: &Path, actor_id: &str) -> anyhow::Result<GradeReport> {
    let bundle = ExerciseBundle::load(exercise_dir)?;
    let exercise = bundle.to_exercise();
    let source_code =
        std::fs::read_to_string(source_file).with_context(|| format!("reading {}", source_file.display()))?;
    let grader = local_grader(cfg)?;
    let submission = Submission {
        id: format!("local-{}", uuid::Uuid::new_v4().simple()),
        exercise_id: exercise.id.clone(),
        actor_id: actor_id.to_string(),
        source_code,
        submitted_at: Timestamp::now(),
    };
    let limits = grader.limits_for(&exercise);
    Ok(grader.run_submission(&submission, &exercise, &limits)?)
}

#[derive(Debug, Default, Serialize)]
pub struct SeedSummary {
    pub concepts: usize,
    pub lectures: Vec<String>,
    pub exercises: Vec<String>,
}

/// Loads a course directory into the data directory:
/// `concepts.toml`, `lectures/*.toml` and `exercises/<id>/` bundles, in
/// that order.
pub fn seed(state: &AppState, dir: &Path) -> anyhow::Result<SeedSummary> {
    let mut summary = SeedSummary::default();
    let concepts_path = dir.join("concepts.toml");
    if concepts_path.exists() {
        let reg: ConceptRegistry = toml::from_str(&std::fs::read_to_string(&concepts_path)?)
            .with_context(|| format!("parsing {}", concepts_path.display()))?;
        summary.concepts = reg.concepts.len();
        state.add_concepts(reg.concepts).with_context(|| format!("registering {}", concepts_path.display()))?;
    }
    for path in entries(&dir.join("lectures"), |p| p.extension().is_some_and(|e| e == "toml"))? {
        let upload: LectureUpload =
            toml::from_str(&std::fs::read_to_string(&path)?).with_context(|| format!("parsing {}", path.display()))?;
        summary.lectures.push(upload.material_id.clone());
        state.add_lecture(upload).with_context(|| format!("ingesting {}", path.display()))?;
    }
    for path in entries(&dir.join("exercises"), |p| p.is_dir())? {
        let bundle = ExerciseBundle::load(&path)?;
        summary.exercises.push(bundle.id.clone());
        state.add_exercise(bundle).with_context(|| format!("storing {}", path.display()))?;
    }
    Ok(summary)
}

fn entries(dir: &Path, keep: impl Fn(&Path) -> bool) -> anyhow::Result<Vec<std::path::PathBuf>> {
    if !dir.is_dir() {
        return Ok(Vec::new());
    }
    let mut out: Vec<_> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| keep(p))
        .collect();
    out.sort();
    Ok(out)
}

/// Writes every stored statement as one JSON line to `out` (`-` for
/// stdout). Returns the count.
pub fn export_logs(cfg: &ServerConfig, out: &Path) -> anyhow::Result<usize> {
    let lrs = Lrs::open(cfg.data_dir.join("statements.ndjson"))?;
    if out == Path::new("-") {
        let stdout = std::io::stdout();
        let n = lrs.export_ndjson(stdout.lock())?;
        return Ok(n);
    }
    let mut buf = Vec::new();
    let n = lrs.export_ndjson(&mut buf)?;
    write_atomic(out, &buf).with_context(|| format!("writing {}", out.display()))?;
    Ok(n)
}
