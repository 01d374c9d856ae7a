#![allow(dead_code)]

use std::sync::Arc;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use codecoach_server::{router, AppState, Role, ServerConfig, TokenEntry};
use codecoach::grading::isolation;
use http_body_util::BodyExt;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use tempfile::TempDir;
use tower::ServiceExt;

pub const LEARNER: &str = "learner-token-alice";
pub const OTHER_LEARNER: &str = "learner-token-bob";
pub const INSTRUCTOR: &str = "instructor-token-carol";

pub const EXERCISE_ID: &str = "shout";
pub const SOLUTION_MARKER: &str = "shout_line_qv9";
pub const SOLUTION: &str = "import sys\n\ndef shout_line_qv9(text_value_kz):\n    cleaned_text_kz = text_value_kz.strip()\n    return cleaned_text_kz.upper() + \"!\"\n\nprint(shout_line_qv9(sys.stdin.readline()))\n";
pub const HIDDEN_INPUTS: [&str; 2] = ["zqxj hidden 4471", "kwvy secret 9083"];
pub const HIDDEN_EXPECTED: [&str; 2] = ["ZQXJ HIDDEN 4471!", "KWVY SECRET 9083!"];

/// Strings no learner-facing body may contain.
pub fn secrets() -> Vec<&'static str> {
    let mut s = vec![SOLUTION, SOLUTION_MARKER, "cleaned_text_kz"];
    s.extend(HIDDEN_EXPECTED);
    s.extend(HIDDEN_INPUTS);
    s
}

pub struct Harness {
    pub dir: TempDir,
    pub state: Arc<AppState>,
    pub app: Router,
}

pub fn config(dir: &TempDir) -> ServerConfig {
    let token = |token: &str, role, actor: &str| TokenEntry { token: token.into(), role, actor_id: actor.into() };
    ServerConfig {
        data_dir: dir.path().join("data"),
        anonymization_key: Some("test-key".into()),
        tokens: vec![
            token(LEARNER, Role::Learner, "alice"),
            token(OTHER_LEARNER, Role::Learner, "bob"),
            token(INSTRUCTOR, Role::Instructor, "carol"),
        ],
        ..ServerConfig::default()
    }
}

impl Harness {
    pub fn new() -> Self {
        Self::with_config(|_| {})
    }

    pub fn with_config(edit: impl FnOnce(&mut ServerConfig)) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = config(&dir);
        edit(&mut cfg);
        let state = Arc::new(AppState::open(&cfg).unwrap());
        let app = router(Arc::clone(&state));
        Harness { dir, state, app }
    }

    /// Short runner limits so looping programs end quickly.
    pub fn with_tight_limits() -> Self {
        Self::with_config(|c| {
            let tight = codecoach::grading::LimitOverrides { wall_ms: Some(800), cpu_ms: Some(500), ..Default::default() };
            c.agent.runner_limits.insert("python3".into(), tight);
        })
    }

    /// Reopens the same data directory, as after a restart.
    pub fn reopen(self) -> Self {
        let cfg = config(&self.dir);
        drop(self.app);
        drop(self.state);
        let state = Arc::new(AppState::open(&cfg).unwrap());
        let app = router(Arc::clone(&state));
        Harness { dir: self.dir, state, app }
    }

    pub async fn raw(&self, method: &str, path: &str, token: Option<&str>, body: Option<String>) -> (StatusCode, String) {
        let mut req = Request::builder().method(Method::from_bytes(method.as_bytes()).unwrap()).uri(path);
        if let Some(t) = token {
            req = req.header("authorization", format!("Bearer {t}"));
        }
        let req = match body {
            Some(b) => req.header("content-type", "application/json").body(Body::from(b)).unwrap(),
            None => req.body(Body::empty()).unwrap(),
        };
        let resp = self.app.clone().oneshot(req).await.unwrap();
        let status = resp.status();
        let bytes = resp.into_body().collect().await.unwrap().to_bytes();
        (status, String::from_utf8_lossy(&bytes).into_owned())
    }

    pub async fn call(&self, method: &str, path: &str, token: Option<&str>, body: Option<Value>) -> (StatusCode, Value) {
        let (status, text) = self.raw(method, path, token, body.map(|b| b.to_string())).await;
        let value = if text.is_empty() { Value::Null } else { serde_json::from_str(&text).unwrap_or(Value::String(text)) };
        (status, value)
    }

    pub async fn seed_course(&self) {
        let (s, body) = self.call("POST", "/concepts", Some(INSTRUCTOR), Some(concepts_json())).await;
        assert_eq!(s, StatusCode::OK, "{body}");
        let (s, body) = self.call("POST", "/lectures", Some(INSTRUCTOR), Some(lecture_json())).await;
        assert_eq!(s, StatusCode::CREATED, "{body}");
        let (s, body) = self.call("POST", "/exercises", Some(INSTRUCTOR), Some(exercise_json())).await;
        assert_eq!(s, StatusCode::CREATED, "{body}");
    }
}

pub fn concepts_json() -> Value {
    json!({"concepts": [
        {"id": "io", "name": "Input and output", "definition": "Reading standard input and printing results"},
        {"id": "strings", "name": "Strings", "definition": "Text values and their methods", "prerequisites": ["io"]}
    ]})
}

pub fn lecture_json() -> Value {
    json!({
        "material_id": "week1",
        "title": "Text and input",
        "pages": [
            {"page_no": 1, "text": "input() and sys.stdin.readline() read one line of text from standard input."},
            {"page_no": 2, "text": "String methods: strip removes surrounding whitespace, upper converts a string to upper case."}
        ],
        "concept_annotations": [{"concept_id": "io", "page": 1}, {"concept_id": "strings", "page": 2}]
    })
}

pub fn exercise_json() -> Value {
    let test = |id: &str, input: &str, expected: &str, hidden: bool| {
        json!({
            "id": id,
            "stdin": format!("{input}\n"),
            "expected": format!("{expected}\n"),
            "marks": "1",
            "visibility": if hidden { "hidden" } else { "visible" }
        })
    };
    json!({
        "id": EXERCISE_ID,
        "title": "Shout",
        "statement": "Read one line of text and print it in upper case followed by an exclamation mark.",
        "difficulty": 1,
        "concept_tags": ["io", "strings"],
        "limits": {"wall_ms": 4000},
        "typical_mistakes": [{"description": "Forgetting to strip the trailing newline", "symptom": "The mark appears on the next line"}],
        "tests": [
            test("v1", "hello", "HELLO!", false),
            test("v2", "abc def", "ABC DEF!", false),
            test("h1", HIDDEN_INPUTS[0], HIDDEN_EXPECTED[0], true),
            test("h2", HIDDEN_INPUTS[1], HIDDEN_EXPECTED[1], true),
        ],
        "solution": SOLUTION,
        "solution_file": "main.py"
    })
}

pub fn assert_no_secrets(context: &str, body: &str) {
    for s in secrets() {
        assert!(!body.contains(s), "{context}: body leaks {s:?}: {body}");
    }
}

pub fn random_text(rng: &mut ChaCha8Rng) -> String {
    const PIECES: &[&str] = &[
        "print(", ")", "input()", "'", "\"", "{", "}", "[", "]", "x", "42", " ", "\n", "#", "upper", "shout", "hidden",
        "solution", "tests", "null", "é", "\\", "../", "h1", "expected",
    ];
    let n = rng.random_range(0..24);
    (0..n).map(|_| PIECES[rng.random_range(0..PIECES.len())]).collect()
}

pub fn random_value(rng: &mut ChaCha8Rng, depth: u32) -> Value {
    match rng.random_range(0..if depth > 2 { 4 } else { 6 }) {
        0 => Value::Null,
        1 => json!(rng.random_range(-5i64..100)),
        2 => json!(rng.random_bool(0.5)),
        3 => Value::String(random_text(rng)),
        4 => Value::Array((0..rng.random_range(0..3)).map(|_| random_value(rng, depth + 1)).collect()),
        _ => {
            let keys = ["exercise_id", "phase", "request_type", "source_code", "latest_report_id", "free_text", "material_id", "action", "page"];
            let mut m = serde_json::Map::new();
            for _ in 0..rng.random_range(0..4) {
                m.insert(keys[rng.random_range(0..keys.len())].into(), random_value(rng, depth + 1));
            }
            Value::Object(m)
        }
    }
}

pub fn adversarial_sources(data_dir: &str) -> Vec<String> {
    let mut v = vec![
        "print(input().strip().upper() + '!')".to_string(),
        "print(input())".to_string(),
        "import sys\nsys.stderr.write(sys.stdin.read())\nraise SystemExit(3)".to_string(),
        "while True: pass".to_string(),
        "print(open('main.py').read())".to_string(),
    ];
    if isolation::capabilities().filesystem_confined() {
        v.push(format!(
            "import glob\nfor p in glob.glob('{data_dir}/**/*', recursive=True):\n    try: print(open(p).read())\n    except Exception: pass"
        ));
        v.push(format!("print(open('{data_dir}/exercises/shout/tests/h1/expected').read())"));
    }
    v
}

#[derive(Debug, Default)]
pub struct FuzzStats {
    pub requests: usize,
    pub graded: usize,
    pub leaks: Vec<String>,
}

/// Seeded random traffic against every learner endpoint, including programs
/// that try to read the hidden tests. Records any response carrying a secret.
pub async fn fuzz_learner_endpoints(h: &Harness, seed: u64, rounds: usize) -> FuzzStats {
    let data_dir = h.dir.path().join("data").to_string_lossy().into_owned();
    let sources = adversarial_sources(&data_dir);
    let mut stats = FuzzStats::default();
    let mut report_ids: Vec<String> = vec!["missing".into()];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let phases = ["planning", "program_creation", "error_correction", "self_monitoring", "self_reflection", "bogus"];
    for i in 0..rounds {
        let token = if rng.random_bool(0.8) { LEARNER } else { OTHER_LEARNER };
        let (method, path, body): (&str, String, Option<String>) = match rng.random_range(0..8) {
            0 => ("GET", "/exercises".into(), None),
            1 => ("GET", format!("/exercises/{}", if rng.random_bool(0.7) { EXERCISE_ID } else { "h1" }), None),
            2 => ("GET", format!("/concepts/{}", ["io", "strings", "zzz"][rng.random_range(0..3)]), None),
            3 => {
                let source = if rng.random_bool(0.5) { sources[i % sources.len()].clone() } else { random_text(&mut rng) };
                ("POST", "/submissions".into(), Some(json!({"exercise_id": EXERCISE_ID, "source_code": source}).to_string()))
            }
            4 => {
                let body = json!({
                    "exercise_id": if rng.random_bool(0.9) { EXERCISE_ID } else { "nope" },
                    "phase": phases[rng.random_range(0..phases.len())],
                    "request_type": if rng.random_bool(0.5) { "general_purpose" } else { "programming_specific" },
                    "code_snapshot": random_text(&mut rng),
                    "free_text": random_text(&mut rng),
                    "latest_report_id": report_ids[rng.random_range(0..report_ids.len())],
                });
                ("POST", "/feedback".into(), Some(body.to_string()))
            }
            5 => ("POST", "/events/viewer".into(), Some(random_value(&mut rng, 0).to_string())),
            6 => ("GET", format!("/submissions/{}", report_ids[rng.random_range(0..report_ids.len())]), None),
            _ => {
                let path = ["/submissions", "/feedback", "/events/viewer"][rng.random_range(0..3)];
                let body = if rng.random_bool(0.2) { random_text(&mut rng) } else { random_value(&mut rng, 0).to_string() };
                ("POST", path.into(), Some(body))
            }
        };
        stats.requests += 1;
        let (status, text) = h.raw(method, &path, Some(token), body.clone()).await;
        if let Some(s) = secrets().into_iter().find(|s| text.contains(s)) {
            stats.leaks.push(format!("#{i} {method} {path} {body:?} -> {status} leaked {s:?}"));
        }
        if path == "/submissions" && status == StatusCode::CREATED {
            let v: Value = serde_json::from_str(&text).unwrap();
            report_ids.push(v["submission_id"].as_str().unwrap().to_string());
            stats.graded += 1;
        }
    }
    stats
}
