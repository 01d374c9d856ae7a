//! Shared service state and its on-disk layout under the data directory:
//!
//! ```text
//! statements.ndjson      learning record store
//! reports/               grade reports by submission id
//! exercises/<id>/        exercise bundles
//! lectures/<id>.json     lecture uploads
//! concepts.json          concept registry
//! agent.toml             agent configuration saved through the API
//! anonymization.key      generated pseudonym key, when none is configured
//! ```

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use anyhow::Context as _;
use codecoach::bundle::ExerciseBundle;
use codecoach::config::{AgentConfig, LlmProvider};
use codecoach::grading::{is_safe_id, Exercise, Grader, IsolationMode, ReportStore, RunnerRegistry, Sandbox};
use codecoach::kce::{ConceptRegistry, ConceptSpec, KceError, KnowledgeBase, KnowledgeStore, LectureUpload};
use codecoach::lace::AnonymizationPolicy;
use codecoach::scaffold::{DirectiveTable, LlmClient};
use codecoach::validation::FieldErrors;
use codecoach::xapi::Lrs;
use rand::RngCore;
use tokio::runtime::Handle;
use tokio::sync::Semaphore;

use crate::error::ApiError;
use crate::llm::build_client;
use crate::settings::{ServerConfig, TokenEntry};

/// Everything derived from one agent configuration. Swapped as a whole;
/// requests hold the `Arc` they started with.
pub struct Runtime {
    pub agent: AgentConfig,
    pub directives: DirectiveTable,
    pub grader: Grader,
    pub llm: Arc<dyn LlmClient>,
    pub llm_slots: Arc<Semaphore>,
}

pub struct StoredExercise {
    pub bundle: ExerciseBundle,
    pub exercise: Exercise,
}

pub struct AppState {
    data_dir: PathBuf,
    base_runners: RunnerRegistry,
    isolation: IsolationMode,
    source_limit: usize,
    llm_api_key: Option<String>,
    tokens: HashMap<String, TokenEntry>,
    runtime: RwLock<Arc<Runtime>>,
    pub lrs: Lrs,
    pub knowledge: KnowledgeStore,
    pub reports: ReportStore,
    pub policy: AnonymizationPolicy,
    exercises: RwLock<BTreeMap<String, Arc<StoredExercise>>>,
    concepts: Mutex<BTreeMap<String, ConceptSpec>>,
    /// Serializes content uploads and config writes with their persistence.
    admin: Mutex<()>,
}

fn lock<T>(m: &Mutex<T>) -> std::sync::MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|p| p.into_inner())
}

impl AppState {
    /// Opens the data directory and reloads everything persisted in it.
    pub fn open(cfg: &ServerConfig) -> anyhow::Result<AppState> {
        let dir = cfg.data_dir.clone();
        std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        warn_if_readable_by_runs(&dir);
        let key = match &cfg.anonymization_key {
            Some(k) => k.clone(),
            None => load_or_create_key(&dir.join("anonymization.key"))?,
        };
        let policy = AnonymizationPolicy::new(key.into_bytes())?;
        let base_runners = match &cfg.runners_file {
            Some(path) => RunnerRegistry::load(path)?,
            None => RunnerRegistry::default(),
        };
        let lrs = Lrs::open(dir.join("statements.ndjson")).context("opening learning record store")?;
        let reports = ReportStore::open(dir.join("reports")).context("opening report store")?;

        let agent_path = dir.join("agent.toml");
        let mut agent = if agent_path.exists() {
            let text = std::fs::read_to_string(&agent_path)?;
            AgentConfig::from_toml(&text).map_err(|e| anyhow::anyhow!("{}: {e}", agent_path.display()))?
        } else {
            cfg.agent.clone()
        };
        cfg.llm_env.apply(&mut agent);
        agent.validate().map_err(|e| anyhow::anyhow!("agent config: {e}"))?;

        let state = AppState {
            tokens: cfg.tokens.iter().map(|t| (t.token.clone(), t.clone())).collect(),
            isolation: cfg.isolation.into(),
            source_limit: cfg.source_limit_bytes,
            llm_api_key: cfg.llm_api_key.clone(),
            runtime: RwLock::new(Arc::new(Runtime {
                directives: DirectiveTable::default(),
                grader: Grader::new(Sandbox::new(RunnerRegistry::default())),
                llm: Arc::new(codecoach::scaffold::DisabledClient),
                llm_slots: Arc::new(Semaphore::new(1)),
                agent: AgentConfig::default(),
            })),
            base_runners,
            lrs,
            knowledge: KnowledgeStore::new(KnowledgeBase::default()),
            reports,
            policy,
            exercises: RwLock::new(BTreeMap::new()),
            concepts: Mutex::new(BTreeMap::new()),
            admin: Mutex::new(()),
            data_dir: dir,
        };
        check_runner_limits(&agent, &state.base_runners).map_err(|e| anyhow::anyhow!("agent config: {e}"))?;
        *state.runtime.write().unwrap_or_else(|p| p.into_inner()) = Arc::new(state.build_runtime(agent));
        state.reload()?;
        Ok(state)
    }

    fn reload(&self) -> anyhow::Result<()> {
        let concepts_path = self.data_dir.join("concepts.json");
        if concepts_path.exists() {
            let reg: ConceptRegistry = serde_json::from_str(&std::fs::read_to_string(&concepts_path)?)
                .with_context(|| format!("parsing {}", concepts_path.display()))?;
            self.knowledge.register_concepts(&reg.concepts)?;
            lock(&self.concepts).extend(reg.concepts.into_iter().map(|c| (c.id.clone(), c)));
        }
        for path in sorted_entries(&self.data_dir.join("lectures"), |p| p.extension().is_some_and(|e| e == "json"))? {
            let upload: LectureUpload = serde_json::from_str(&std::fs::read_to_string(&path)?)
                .with_context(|| format!("parsing {}", path.display()))?;
            self.knowledge.ingest_lecture(&upload).with_context(|| format!("ingesting {}", path.display()))?;
        }
        for path in sorted_entries(&self.data_dir.join("exercises"), |p| p.is_dir())? {
            let bundle = ExerciseBundle::load(&path)?;
            self.knowledge.ingest_exercise(&bundle.to_knowledge())?;
            let exercise = bundle.to_exercise();
            self.exercises
                .write()
                .unwrap_or_else(|p| p.into_inner())
                .insert(bundle.id.clone(), Arc::new(StoredExercise { bundle, exercise }));
        }
        Ok(())
    }

    fn build_runtime(&self, agent: AgentConfig) -> Runtime {
        let runners = agent.apply_runner_limits(&self.base_runners);
        let grader =
            Grader::new(Sandbox::new(runners).with_isolation(self.isolation)).with_source_limit(self.source_limit);
        let llm = match Handle::try_current() {
            Ok(handle) => build_client(&agent.llm, self.llm_api_key.clone(), handle),
            Err(_) => build_client_offline(&agent),
        };
        Runtime {
            directives: agent.directive_table(),
            grader,
            llm,
            llm_slots: Arc::new(Semaphore::new(agent.llm.max_concurrent)),
            agent,
        }
    }

    pub fn runtime(&self) -> Arc<Runtime> {
        Arc::clone(&self.runtime.read().unwrap_or_else(|p| p.into_inner()))
    }

    pub fn source_limit(&self) -> usize {
        self.source_limit
    }

    pub fn token(&self, token: &str) -> Option<&TokenEntry> {
        self.tokens.get(token)
    }

    pub fn exercise(&self, id: &str) -> Option<Arc<StoredExercise>> {
        self.exercises.read().unwrap_or_else(|p| p.into_inner()).get(id).cloned()
    }

    pub fn exercises(&self) -> Vec<Arc<StoredExercise>> {
        self.exercises.read().unwrap_or_else(|p| p.into_inner()).values().cloned().collect()
    }

    /// Validates, persists and hot-applies a new agent configuration.
    pub fn apply_config(&self, agent: AgentConfig) -> Result<Arc<Runtime>, ApiError> {
        agent.validate().map_err(ApiError::invalid)?;
        check_runner_limits(&agent, &self.base_runners).map_err(ApiError::invalid)?;
        let _guard = lock(&self.admin);
        let text = toml::to_string(&agent).map_err(ApiError::internal)?;
        write_atomic(&self.data_dir.join("agent.toml"), text.as_bytes()).map_err(ApiError::internal)?;
        let rt = Arc::new(self.build_runtime(agent));
        *self.runtime.write().unwrap_or_else(|p| p.into_inner()) = Arc::clone(&rt);
        tracing::info!(provider = ?rt.agent.llm.provider_key, "agent configuration applied");
        Ok(rt)
    }

    /// Stores an exercise bundle, replacing any exercise with the same id.
    pub fn add_exercise(&self, bundle: ExerciseBundle) -> Result<(), ApiError> {
        bundle.validate().map_err(ApiError::invalid)?;
        if self.base_runners.get(&bundle.language_tag).is_err() {
            return Err(ApiError::invalid_field("language_tag", "no runner is configured for this language"));
        }
        let knowledge = bundle.to_knowledge();
        let _guard = lock(&self.admin);
        let mut trial = (*self.knowledge.snapshot()).clone();
        trial.ingest_exercise(&knowledge).map_err(|e| kce_invalid("bundle", e))?;
        bundle.save(&self.data_dir.join("exercises").join(&bundle.id)).map_err(ApiError::internal)?;
        self.knowledge.ingest_exercise(&knowledge).map_err(ApiError::internal)?;
        let exercise = bundle.to_exercise();
        self.exercises
            .write()
            .unwrap_or_else(|p| p.into_inner())
            .insert(bundle.id.clone(), Arc::new(StoredExercise { bundle, exercise }));
        Ok(())
    }

    /// Ingests a lecture; returns the new chunk ids.
    pub fn add_lecture(&self, upload: LectureUpload) -> Result<Vec<String>, ApiError> {
        if !is_safe_id(&upload.material_id) {
            return Err(ApiError::invalid_field("material_id", "may only contain letters, digits, '-', '_' and '.'"));
        }
        let _guard = lock(&self.admin);
        let mut trial = (*self.knowledge.snapshot()).clone();
        trial.ingest_lecture(&upload).map_err(|e| kce_invalid("concept_annotations", e))?;
        let body = serde_json::to_vec_pretty(&upload).map_err(ApiError::internal)?;
        write_atomic(&self.data_dir.join("lectures").join(format!("{}.json", upload.material_id)), &body)
            .map_err(ApiError::internal)?;
        self.knowledge.ingest_lecture(&upload).map_err(ApiError::internal)
    }

    /// Adds or replaces concepts. Nothing changes unless all resolve and the
    /// prerequisite graph stays acyclic.
    pub fn add_concepts(&self, specs: Vec<ConceptSpec>) -> Result<Vec<String>, ApiError> {
        let _guard = lock(&self.admin);
        let mut trial = (*self.knowledge.snapshot()).clone();
        trial.register_concepts(&specs).map_err(|e| kce_invalid("concepts", e))?;
        let mut all = lock(&self.concepts).clone();
        all.extend(specs.iter().map(|c| (c.id.clone(), c.clone())));
        let reg = ConceptRegistry { concepts: all.values().cloned().collect() };
        let body = serde_json::to_vec_pretty(&reg).map_err(ApiError::internal)?;
        write_atomic(&self.data_dir.join("concepts.json"), &body).map_err(ApiError::internal)?;
        self.knowledge.register_concepts(&specs).map_err(ApiError::internal)?;
        *lock(&self.concepts) = all;
        Ok(specs.into_iter().map(|c| c.id).collect())
    }
}

fn build_client_offline(agent: &AgentConfig) -> Arc<dyn LlmClient> {
    match agent.llm.provider_key {
        LlmProvider::Mock => Arc::new(codecoach::scaffold::MockClient),
        _ => Arc::new(codecoach::scaffold::DisabledClient),
    }
}

fn kce_invalid(path: &str, e: KceError) -> ApiError {
    let path = match &e {
        KceError::EmptyMaterial(_) => "pages",
        KceError::UnknownPrerequisite { .. } | KceError::Cycle(_) => "concepts",
        _ => path,
    };
    ApiError::invalid_field(path, e.to_string())
}

fn check_runner_limits(agent: &AgentConfig, runners: &RunnerRegistry) -> Result<(), FieldErrors> {
    let mut errs = FieldErrors::default();
    for tag in agent.runner_limits.keys() {
        if runners.get(tag).is_err() {
            errs.push(format!("runner_limits.{tag}"), "no runner is configured for this language");
        }
    }
    errs.into_result()
}

fn sorted_entries(dir: &Path, keep: impl Fn(&Path) -> bool) -> anyhow::Result<Vec<PathBuf>> {
    if !dir.is_dir() {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        let hidden = path.file_name().and_then(|n| n.to_str()).is_none_or(|n| n.starts_with('.'));
        if !hidden && keep(&path) {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("file");
    let tmp = dir.join(format!(".{name}.{}.tmp", uuid::Uuid::new_v4().simple()));
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)
}

fn load_or_create_key(path: &Path) -> anyhow::Result<String> {
    if path.exists() {
        let key = std::fs::read_to_string(path)?.trim().to_string();
        anyhow::ensure!(!key.is_empty(), "{} is empty", path.display());
        return Ok(key);
    }
    let mut bytes = [0u8; 32];
    rand::rng().fill_bytes(&mut bytes);
    let key: String = bytes.iter().map(|b| format!("{b:02x}")).collect();
    write_atomic(path, key.as_bytes())?;
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        std::fs::set_permissions(path, std::fs::Permissions::from_mode(0o600))?;
    }
    tracing::info!(path = %path.display(), "generated anonymization key");
    Ok(key)
}

/// Submitted programs may read the system roots; a data directory inside
/// them would expose hidden tests.
fn warn_if_readable_by_runs(dir: &Path) {
    let Ok(abs) = dir.canonicalize() else { return };
    if codecoach::grading::isolation::SYSTEM_READ_ROOTS.iter().any(|root| abs.starts_with(root)) {
        tracing::warn!(data_dir = %abs.display(), "data directory is readable by sandboxed programs; move it outside system directories");
    }
}
