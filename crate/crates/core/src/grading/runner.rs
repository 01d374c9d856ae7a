use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::types::{LimitOverrides, Limits};
use super::GradingError;

/// How to run one language: a command template plus default limits.
///
/// `{source}` in the command is replaced with the absolute path of the
/// written source file and `{dir}` with the scratch directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunnerSpec {
    pub command: Vec<String>,
    pub source_file: String,
    #[serde(default)]
    pub env: BTreeMap<String, String>,
    /// stderr substrings that identify an allocation failure.
    #[serde(default)]
    pub memory_error_markers: Vec<String>,
    #[serde(default)]
    pub limits: LimitOverrides,
    /// Line comment prefixes used when normalizing code of this language.
    #[serde(default)]
    pub line_comments: Vec<String>,
    /// Block comment delimiters as `[open, close]` pairs.
    #[serde(default)]
    pub block_comments: Vec<(String, String)>,
    /// Extra directories the program may read, beyond the system roots.
    #[serde(default)]
    pub read_paths: Vec<PathBuf>,
}

impl RunnerSpec {
    pub fn python3() -> Self {
        RunnerSpec {
            command: vec!["python3".into(), "-I".into(), "-B".into(), "{source}".into()],
            source_file: "main.py".into(),
            env: BTreeMap::from([("PYTHONIOENCODING".to_string(), "utf-8".to_string())]),
            memory_error_markers: vec!["MemoryError".into()],
            limits: LimitOverrides::default(),
            line_comments: vec!["#".into()],
            block_comments: Vec::new(),
            read_paths: Vec::new(),
        }
    }

    pub fn limits(&self) -> Limits {
        self.limits.apply(Limits::default())
    }

    pub fn render_command(&self, source: &Path, dir: &Path) -> Vec<String> {
        let source = source.to_string_lossy();
        let dir = dir.to_string_lossy();
        self.command.iter().map(|part| part.replace("{source}", &source).replace("{dir}", &dir)).collect()
    }
}

/// The runner configuration document: language tag → runner.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunnerRegistry {
    pub runners: BTreeMap<String, RunnerSpec>,
}

impl Default for RunnerRegistry {
    fn default() -> Self {
        RunnerRegistry { runners: BTreeMap::from([("python3".to_string(), RunnerSpec::python3())]) }
    }
}

impl RunnerRegistry {
    pub fn get(&self, language_tag: &str) -> Result<&RunnerSpec, GradingError> {
        self.runners.get(language_tag).ok_or_else(|| GradingError::UnknownLanguage(language_tag.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self, GradingError> {
        let reg: RunnerRegistry = toml::from_str(text).map_err(|e| GradingError::Config(e.to_string()))?;
        reg.validate()?;
        Ok(reg)
    }

    pub fn load(path: &Path) -> Result<Self, GradingError> {
        let text = std::fs::read_to_string(path).map_err(|e| GradingError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), GradingError> {
        for (tag, spec) in &self.runners {
            if spec.command.is_empty() {
                return Err(GradingError::Config(format!("runner `{tag}` has an empty command")));
            }
            if spec.source_file.is_empty() || spec.source_file.contains('/') {
                return Err(GradingError::Config(format!("runner `{tag}` needs a plain source file name")));
            }
            let l = spec.limits();
            if l.wall_ms == 0 || l.cpu_ms == 0 || l.memory_bytes == 0 || l.output_cap_bytes == 0 {
                return Err(GradingError::Config(format!("runner `{tag}` limits must be positive")));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_runner_document() {
        let doc = r##"
            [runners.python3]
            command = ["python3", "{source}"]
            source_file = "main.py"
            memory_error_markers = ["MemoryError"]
            line_comments = ["#"]
            [runners.python3.limits]
            wall_ms = 2000

            [runners.sh]
            command = ["/bin/sh", "{source}"]
            source_file = "main.sh"
        "##;
        let reg = RunnerRegistry::from_toml(doc).unwrap();
        assert_eq!(reg.get("python3").unwrap().limits().wall_ms, 2000);
        assert_eq!(reg.get("python3").unwrap().limits().cpu_ms, 3000);
        assert!(matches!(reg.get("cobol"), Err(GradingError::UnknownLanguage(_))));
    }

    #[test]
    fn rejects_bad_runner() {
        let doc = "[runners.x]\ncommand = []\nsource_file = \"a\"\n";
        assert!(RunnerRegistry::from_toml(doc).is_err());
    }

    #[test]
    fn renders_placeholders() {
        let spec = RunnerSpec::python3();
        let cmd = spec.render_command(Path::new("/s/main.py"), Path::new("/s"));
        assert_eq!(cmd, ["python3", "-I", "-B", "/s/main.py"]);
    }
}
