//! Exercise bundles: the upload and on-disk form of an exercise with its
//! tests and reference solution.
//!
//! On disk a bundle is a directory holding `exercise.toml`, one
//! `tests/<id>/` directory per test (`stdin`, `expected`, `meta.toml`) and a
//! single file under `solution/`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::grading::{is_safe_id, CompareMode, Exercise, LimitOverrides, TestCase, Visibility};
use crate::kce::{ExerciseKnowledge, TypicalMistake};
use crate::rational::Rational;
use crate::validation::FieldErrors;

#[derive(Debug, thiserror::Error)]
pub enum BundleError {
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("invalid bundle: {0}")]
    Invalid(FieldErrors),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> BundleError + '_ {
    move |source| BundleError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BundleTest {
    pub id: String,
    #[serde(default)]
    pub stdin: String,
    pub expected: String,
    pub marks: Rational,
    #[serde(default)]
    pub visibility: Visibility,
    #[serde(default)]
    pub compare_mode: CompareMode,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExerciseBundle {
    pub id: String,
    pub title: String,
    pub statement: String,
    #[serde(default = "default_language")]
    pub language_tag: String,
    #[serde(default = "default_difficulty")]
    pub difficulty: u32,
    #[serde(default)]
    pub concept_tags: Vec<String>,
    #[serde(default, skip_serializing_if = "LimitOverrides::is_empty")]
    pub limits: LimitOverrides,
    #[serde(default)]
    pub typical_mistakes: Vec<TypicalMistake>,
    pub tests: Vec<BundleTest>,
    pub solution: String,
    /// File name used for the solution on disk.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solution_file: Option<String>,
}

fn default_language() -> String {
    "python3".into()
}

fn default_difficulty() -> u32 {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MetaDocument {
    id: String,
    title: String,
    statement: String,
    #[serde(default = "default_language")]
    language_tag: String,
    #[serde(default = "default_difficulty")]
    difficulty: u32,
    #[serde(default)]
    concept_tags: Vec<String>,
    #[serde(default, skip_serializing_if = "LimitOverrides::is_empty")]
    limits: LimitOverrides,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    typical_mistakes: Vec<TypicalMistake>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TestMeta {
    marks: Rational,
    #[serde(default)]
    visibility: Visibility,
    #[serde(default)]
    compare_mode: CompareMode,
}

impl ExerciseBundle {
    /// Parses and validates the JSON upload form, reporting errors by field
    /// path.
    pub fn from_json(value: serde_json::Value) -> Result<Self, FieldErrors> {
        let bundle: ExerciseBundle = serde_path_to_error::deserialize(value).map_err(|e| {
            let mut errs = FieldErrors::default();
            let path = e.path().to_string();
            errs.push(if path == "." { "bundle".to_string() } else { path }, e.inner().to_string());
            errs
        })?;
        bundle.validate()?;
        Ok(bundle)
    }

    pub fn validate(&self) -> Result<(), FieldErrors> {
        let mut errs = match self.to_exercise().validate() {
            Ok(()) => FieldErrors::default(),
            Err(e) => FieldErrors(
                e.0.into_iter()
                    .map(|mut f| {
                        if let Some(rest) = f.path.strip_prefix("test_cases") {
                            f.path = format!("tests{rest}");
                        }
                        f
                    })
                    .collect(),
            ),
        };
        if self.statement.trim().is_empty() {
            errs.push("statement", "must not be empty");
        }
        if self.solution.trim().is_empty() {
            errs.push("solution", "must not be empty");
        }
        if let Some(f) = &self.solution_file {
            if !is_safe_id(f) {
                errs.push("solution_file", "must be a plain file name");
            }
        }
        for (i, t) in self.tests.iter().enumerate() {
            if !t.id.trim().is_empty() && !is_safe_id(&t.id) {
                errs.push(format!("tests[{i}].id"), "may only contain letters, digits, '-', '_' and '.'");
            }
        }
        for (i, c) in self.concept_tags.iter().enumerate() {
            if c.trim().is_empty() {
                errs.push(format!("concept_tags[{i}]"), "must not be empty");
            }
        }
        for (i, m) in self.typical_mistakes.iter().enumerate() {
            if m.description.trim().is_empty() {
                errs.push(format!("typical_mistakes[{i}].description"), "must not be empty");
            }
        }
        for (name, v) in [
            ("wall_ms", self.limits.wall_ms.map(|v| v as u128)),
            ("cpu_ms", self.limits.cpu_ms.map(|v| v as u128)),
            ("memory_bytes", self.limits.memory_bytes.map(|v| v as u128)),
            ("output_cap_bytes", self.limits.output_cap_bytes.map(|v| v as u128)),
        ] {
            if v == Some(0) {
                errs.push(format!("limits.{name}"), "must be positive");
            }
        }
        errs.into_result()
    }

    pub fn to_exercise(&self) -> Exercise {
        Exercise {
            id: self.id.clone(),
            title: self.title.clone(),
            statement: self.statement.clone(),
            language_tag: self.language_tag.clone(),
            test_cases: self
                .tests
                .iter()
                .map(|t| TestCase {
                    id: t.id.clone(),
                    stdin_data: t.stdin.clone().into_bytes(),
                    expected_stdout: t.expected.clone().into_bytes(),
                    marks: t.marks,
                    visibility: t.visibility,
                    compare_mode: t.compare_mode,
                })
                .collect(),
            concept_tags: self.concept_tags.clone(),
            difficulty: self.difficulty,
            limits: self.limits,
        }
    }

    pub fn to_knowledge(&self) -> ExerciseKnowledge {
        ExerciseKnowledge {
            exercise_id: self.id.clone(),
            statement: self.statement.clone(),
            language_tag: self.language_tag.clone(),
            concepts: self.concept_tags.clone(),
            difficulty: self.difficulty,
            reference_solution: self.solution.clone(),
            typical_mistakes: self.typical_mistakes.clone(),
        }
    }

    /// Reads a bundle directory. Tests are ordered by directory name.
    pub fn load(dir: &Path) -> Result<Self, BundleError> {
        let meta_path = dir.join("exercise.toml");
        let meta: MetaDocument = read_toml(&meta_path)?;

        let tests_dir = dir.join("tests");
        let mut test_dirs: Vec<PathBuf> = Vec::new();
        if tests_dir.is_dir() {
            for entry in fs::read_dir(&tests_dir).map_err(io_err(&tests_dir))? {
                let entry = entry.map_err(io_err(&tests_dir))?;
                if entry.path().is_dir() {
                    test_dirs.push(entry.path());
                }
            }
        }
        test_dirs.sort();
        let mut tests = Vec::with_capacity(test_dirs.len());
        for td in test_dirs {
            let id = td.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            let tm: TestMeta = read_toml(&td.join("meta.toml"))?;
            let stdin_path = td.join("stdin");
            let stdin = if stdin_path.exists() { read_text(&stdin_path)? } else { String::new() };
            tests.push(BundleTest {
                id,
                stdin,
                expected: read_text(&td.join("expected"))?,
                marks: tm.marks,
                visibility: tm.visibility,
                compare_mode: tm.compare_mode,
            });
        }

        let sol_dir = dir.join("solution");
        let mut files: Vec<PathBuf> = fs::read_dir(&sol_dir)
            .map_err(io_err(&sol_dir))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file())
            .collect();
        files.sort();
        let sol_path = files
            .into_iter()
            .next()
            .ok_or_else(|| BundleError::Format { path: sol_dir.clone(), message: "no solution file".into() })?;
        let solution = read_text(&sol_path)?;

        let bundle = ExerciseBundle {
            id: meta.id,
            title: meta.title,
            statement: meta.statement,
            language_tag: meta.language_tag,
            difficulty: meta.difficulty,
            concept_tags: meta.concept_tags,
            limits: meta.limits,
            typical_mistakes: meta.typical_mistakes,
            tests,
            solution,
            solution_file: sol_path.file_name().map(|n| n.to_string_lossy().into_owned()),
        };
        bundle.validate().map_err(BundleError::Invalid)?;
        Ok(bundle)
    }

    /// Writes the bundle under `dir`, replacing any previous contents
    /// atomically.
    pub fn save(&self, dir: &Path) -> Result<(), BundleError> {
        let parent = dir.parent().unwrap_or(Path::new("."));
        fs::create_dir_all(parent).map_err(io_err(parent))?;
        let staging = tempfile::Builder::new().prefix(".bundle-").tempdir_in(parent).map_err(io_err(parent))?;
        let root = staging.path();
        let meta = MetaDocument {
            id: self.id.clone(),
            title: self.title.clone(),
            statement: self.statement.clone(),
            language_tag: self.language_tag.clone(),
            difficulty: self.difficulty,
            concept_tags: self.concept_tags.clone(),
            limits: self.limits,
            typical_mistakes: self.typical_mistakes.clone(),
        };
        write(&root.join("exercise.toml"), &to_toml(&meta, root)?)?;
        for t in &self.tests {
            let td = root.join("tests").join(&t.id);
            fs::create_dir_all(&td).map_err(io_err(&td))?;
            write(&td.join("stdin"), &t.stdin)?;
            write(&td.join("expected"), &t.expected)?;
            let tm = TestMeta { marks: t.marks, visibility: t.visibility, compare_mode: t.compare_mode };
            write(&td.join("meta.toml"), &to_toml(&tm, &td)?)?;
        }
        let sd = root.join("solution");
        fs::create_dir_all(&sd).map_err(io_err(&sd))?;
        let name = self.solution_file.clone().unwrap_or_else(|| "solution.txt".into());
        write(&sd.join(name), &self.solution)?;

        let staged = staging.keep();
        if dir.exists() {
            let old = parent.join(format!(".old-{}-{}", self.id, uuid::Uuid::new_v4()));
            fs::rename(dir, &old).map_err(io_err(dir))?;
            fs::rename(&staged, dir).map_err(io_err(dir))?;
            let _ = fs::remove_dir_all(&old);
        } else {
            fs::rename(&staged, dir).map_err(io_err(dir))?;
        }
        Ok(())
    }
}

fn read_text(path: &Path) -> Result<String, BundleError> {
    fs::read_to_string(path).map_err(io_err(path))
}

fn write(path: &Path, text: &str) -> Result<(), BundleError> {
    fs::write(path, text).map_err(io_err(path))
}

fn read_toml<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, BundleError> {
    let text = read_text(path)?;
    toml::from_str(&text).map_err(|e| BundleError::Format { path: path.to_path_buf(), message: e.to_string() })
}

fn to_toml<T: Serialize>(value: &T, path: &Path) -> Result<String, BundleError> {
    toml::to_string(value).map_err(|e| BundleError::Format { path: path.to_path_buf(), message: e.to_string() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn sample() -> serde_json::Value {
        json!({
            "id": "sum2",
            "title": "Sum of two",
            "statement": "Read two integers and print their sum.",
            "concept_tags": ["io"],
            "difficulty": 1,
            "tests": [
                {"id": "t1", "stdin": "1 2\n", "expected": "3\n", "marks": 1},
                {"id": "t2", "stdin": "5 5\n", "expected": "10\n", "marks": "1/2", "visibility": "hidden"}
            ],
            "solution": "a, b = map(int, input().split())\nprint(a + b)\n",
            "solution_file": "main.py",
            "typical_mistakes": [{"description": "Concatenating strings instead of adding", "symptom": "12 instead of 3"}]
        })
    }

    #[test]
    fn json_round_trip_to_exercise() {
        let b = ExerciseBundle::from_json(sample()).unwrap();
        let ex = b.to_exercise();
        assert_eq!(ex.total_marks(), Rational::new(3, 2));
        assert!(ex.test_cases[1].is_hidden());
        assert_eq!(b.to_knowledge().typical_mistakes.len(), 1);
    }

    #[test]
    fn invalid_json_reports_paths() {
        let mut v = sample();
        v["tests"][1]["marks"] = json!("lots");
        assert_eq!(ExerciseBundle::from_json(v).unwrap_err().paths(), ["tests[1].marks"]);
        let mut v = sample();
        v["tests"][1]["id"] = json!("t1");
        v["solution"] = json!(" ");
        assert_eq!(ExerciseBundle::from_json(v).unwrap_err().paths(), ["tests[1].id", "solution"]);
        let mut v = sample();
        v.as_object_mut().unwrap().remove("statement");
        assert!(ExerciseBundle::from_json(v).is_err());
        let mut v = sample();
        v["tests"][0]["id"] = json!("../x");
        assert_eq!(ExerciseBundle::from_json(v).unwrap_err().paths(), ["tests[0].id"]);
    }

    #[test]
    fn disk_round_trip() {
        let tmp = tempfile::tempdir().unwrap();
        let b = ExerciseBundle::from_json(sample()).unwrap();
        let dir = tmp.path().join("exercises").join("sum2");
        b.save(&dir).unwrap();
        assert_eq!(ExerciseBundle::load(&dir).unwrap(), b);
        let mut changed = b.clone();
        changed.tests.pop();
        changed.save(&dir).unwrap();
        assert_eq!(ExerciseBundle::load(&dir).unwrap().tests.len(), 1);
        assert!(!dir.join("tests/t2").exists());
    }
}
