//! Embedded learning record store.
//!
//! Statements live in memory behind a read-write lock and, when opened on a
//! path, in an append-only newline-delimited JSON file. A single appender
//! mutex serializes writers; a statement becomes visible to readers only
//! after its line has been written.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::num::NonZeroUsize;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use serde::{Deserialize, Serialize};
use uuid::Uuid;

use crate::timestamp::Timestamp;
use crate::validation::FieldErrors;

use super::statement::Statement;

#[derive(Debug, thiserror::Error)]
pub enum LrsError {
    #[error("invalid statement: {0}")]
    Validation(FieldErrors),
    #[error("statement {0} already stored with different content")]
    Conflict(Uuid),
    #[error("invalid query: {0}")]
    InvalidQuery(String),
    #[error("log {path} line {line}: {message}")]
    Corrupt { path: PathBuf, line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Filters over stored statements. `since` is exclusive and `until`
/// inclusive, both applied to the statement `timestamp`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LrsQuery {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub actor_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verb_iri: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub activity_iri: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub since: Option<Timestamp>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub until: Option<Timestamp>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limit: Option<NonZeroUsize>,
}

impl LrsQuery {
    pub fn actor(actor_id: impl Into<String>) -> Self {
        LrsQuery { actor_id: Some(actor_id.into()), ..Default::default() }
    }

    pub fn matches(&self, s: &Statement) -> bool {
        self.actor_id.as_ref().is_none_or(|a| *a == s.actor.account_id)
            && self.verb_iri.as_ref().is_none_or(|v| *v == s.verb.iri)
            && self.activity_iri.as_ref().is_none_or(|o| *o == s.object.iri)
            && self.since.is_none_or(|t| s.timestamp > t)
            && self.until.is_none_or(|t| s.timestamp <= t)
    }

    fn check(&self) -> Result<(), LrsError> {
        if let (Some(since), Some(until)) = (self.since, self.until) {
            if since > until {
                return Err(LrsError::InvalidQuery(format!("since {since} is after until {until}")));
            }
        }
        Ok(())
    }
}

#[derive(Default)]
struct Index {
    statements: Vec<Arc<Statement>>,
    by_id: HashMap<Uuid, usize>,
    by_actor: HashMap<String, Vec<usize>>,
    last_stored: Option<Timestamp>,
}

impl Index {
    fn push(&mut self, stmt: Statement) {
        let idx = self.statements.len();
        self.by_id.insert(stmt.id, idx);
        self.by_actor.entry(stmt.actor.account_id.clone()).or_default().push(idx);
        self.last_stored = stmt.stored.max(self.last_stored);
        self.statements.push(Arc::new(stmt));
    }
}

struct Appender {
    file: Option<BufWriter<File>>,
    sync: bool,
}

pub struct Lrs {
    index: RwLock<Index>,
    appender: Mutex<Appender>,
    path: Option<PathBuf>,
}

impl std::fmt::Debug for Lrs {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Lrs").field("path", &self.path).field("len", &self.len()).finish()
    }
}

impl Lrs {
    pub fn in_memory() -> Self {
        Lrs { index: RwLock::default(), appender: Mutex::new(Appender { file: None, sync: false }), path: None }
    }

    /// Opens or creates the log at `path` and replays it. A torn final line
    /// (a crash mid-append) is cut off; damage anywhere else is an error.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, LrsError> {
        let path = path.as_ref().to_path_buf();
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        let mut file = OpenOptions::new().read(true).append(true).create(true).open(&path)?;
        let mut content = Vec::new();
        file.read_to_end(&mut content)?;

        let mut index = Index::default();
        let mut good_len = 0usize;
        let mut line_no = 0usize;
        let mut offset = 0usize;
        while offset < content.len() {
            line_no += 1;
            let end = content[offset..].iter().position(|b| *b == b'\n').map(|p| offset + p);
            let (line, next, terminated) = match end {
                Some(e) => (&content[offset..e], e + 1, true),
                None => (&content[offset..], content.len(), false),
            };
            if line.iter().all(u8::is_ascii_whitespace) {
                offset = next;
                good_len = next;
                continue;
            }
            match serde_json::from_slice::<Statement>(line) {
                Ok(stmt) if terminated => {
                    index.push(stmt);
                    good_len = next;
                }
                _ if !terminated => break,
                Ok(_) => unreachable!(),
                Err(e) => return Err(LrsError::Corrupt { path, line: line_no, message: e.to_string() }),
            }
            offset = next;
        }
        if good_len < content.len() {
            tracing::warn!(path = %path.display(), "truncating torn final record");
            file.set_len(good_len as u64)?;
            file.seek(SeekFrom::End(0))?;
        }
        Ok(Lrs {
            index: RwLock::new(index),
            appender: Mutex::new(Appender { file: Some(BufWriter::new(file)), sync: false }),
            path: Some(path),
        })
    }

    /// fsync after every append.
    pub fn with_sync(self, sync: bool) -> Self {
        self.appender.lock().unwrap_or_else(|p| p.into_inner()).sync = sync;
        self
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    fn read(&self) -> std::sync::RwLockReadGuard<'_, Index> {
        self.index.read().unwrap_or_else(|p| p.into_inner())
    }

    /// Validates and appends a statement, assigning `stored`. Re-recording an
    /// identical statement returns its id without writing anything.
    pub fn record(&self, mut stmt: Statement) -> Result<Uuid, LrsError> {
        stmt.validate().map_err(LrsError::Validation)?;
        let mut appender = self.appender.lock().unwrap_or_else(|p| p.into_inner());
        let last = {
            let index = self.read();
            if let Some(&i) = index.by_id.get(&stmt.id) {
                return if index.statements[i].same_content(&stmt) { Ok(stmt.id) } else { Err(LrsError::Conflict(stmt.id)) };
            }
            index.last_stored
        };
        let now = Timestamp::now();
        stmt.stored = Some(last.map_or(now, |l| l.max(now)));
        let sync = appender.sync;
        if let Some(file) = appender.file.as_mut() {
            let mut line = serde_json::to_vec(&stmt).map_err(std::io::Error::other)?;
            line.push(b'\n');
            file.write_all(&line)?;
            file.flush()?;
            if sync {
                file.get_ref().sync_data()?;
            }
        }
        let id = stmt.id;
        self.index.write().unwrap_or_else(|p| p.into_inner()).push(stmt);
        Ok(id)
    }

    pub fn get(&self, id: &Uuid) -> Option<Statement> {
        let index = self.read();
        index.by_id.get(id).map(|&i| (*index.statements[i]).clone())
    }

    pub fn len(&self) -> usize {
        self.read().statements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Statements matching every filter, ordered by `stored`; ties keep append
    /// order.
    pub fn query(&self, q: &LrsQuery) -> Result<Vec<Statement>, LrsError> {
        q.check()?;
        let index = self.read();
        let mut hits: Vec<&Arc<Statement>> = match &q.actor_id {
            Some(actor) => index
                .by_actor
                .get(actor)
                .map(|ix| ix.iter().map(|&i| &index.statements[i]).filter(|s| q.matches(s)).collect())
                .unwrap_or_default(),
            None => index.statements.iter().filter(|s| q.matches(s)).collect(),
        };
        hits.sort_by_key(|s| s.stored);
        if let Some(limit) = q.limit {
            hits.truncate(limit.get());
        }
        Ok(hits.into_iter().map(|s| (**s).clone()).collect())
    }

    /// Every statement in stored order.
    pub fn all(&self) -> Vec<Statement> {
        self.query(&LrsQuery::default()).unwrap_or_default()
    }

    /// Writes one statement per line, in stored order.
    pub fn export_ndjson<W: Write>(&self, mut out: W) -> Result<usize, LrsError> {
        let all = self.all();
        for s in &all {
            serde_json::to_writer(&mut out, s).map_err(std::io::Error::other)?;
            out.write_all(b"\n")?;
        }
        out.flush()?;
        Ok(all.len())
    }

    /// Records every line of an export. Returns how many lines were read.
    pub fn import_ndjson<R: Read>(&self, input: R) -> Result<usize, LrsError> {
        let mut n = 0;
        for (i, line) in BufReader::new(input).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let value: serde_json::Value = serde_json::from_str(&line).map_err(|e| LrsError::Corrupt {
                path: PathBuf::from("<import>"),
                line: i + 1,
                message: e.to_string(),
            })?;
            let stmt = Statement::from_json(&value).map_err(LrsError::Validation)?;
            self.record(stmt)?;
            n += 1;
        }
        Ok(n)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::xapi::statement::Verb;

    fn stmt(actor: &str, verb: &str, t: i64) -> Statement {
        Statement::new(
            actor,
            Verb { iri: format!("https://example.org/verbs/{verb}"), display: verb.into() },
            "https://example.org/act/1",
            Timestamp::from_millis(t),
        )
    }

    #[test]
    fn empty_store_queries_empty() {
        let lrs = Lrs::in_memory();
        assert!(lrs.query(&LrsQuery::default()).unwrap().is_empty());
        assert!(lrs.query(&LrsQuery::actor("x")).unwrap().is_empty());
    }

    #[test]
    fn record_and_fetch() {
        let lrs = Lrs::in_memory();
        let s = stmt("a", "did", 1000);
        let id = lrs.record(s.clone()).unwrap();
        let got = lrs.get(&id).unwrap();
        assert!(got.stored.is_some());
        assert!(got.same_content(&s));
    }

    #[test]
    fn idempotent_and_conflicting_resubmission() {
        let lrs = Lrs::in_memory();
        let s = stmt("a", "did", 1000);
        lrs.record(s.clone()).unwrap();
        assert_eq!(lrs.record(s.clone()).unwrap(), s.id);
        assert_eq!(lrs.len(), 1);
        let mut changed = s.clone();
        changed.verb.display = "changed".into();
        assert!(matches!(lrs.record(changed), Err(LrsError::Conflict(_))));
        assert_eq!(lrs.len(), 1);
    }

    #[test]
    fn invalid_statement_rejected() {
        let lrs = Lrs::in_memory();
        let mut s = stmt("a", "did", 0);
        s.verb.iri = "did".into();
        match lrs.record(s) {
            Err(LrsError::Validation(e)) => assert_eq!(e.paths(), ["verb.iri"]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn limit_takes_first_in_stored_order() {
        let lrs = Lrs::in_memory();
        let ids: Vec<_> = (0..3).map(|i| lrs.record(stmt("a", "did", 3000 - i)).unwrap()).collect();
        let q = LrsQuery { limit: NonZeroUsize::new(1), ..LrsQuery::actor("a") };
        let got = lrs.query(&q).unwrap();
        assert_eq!(got.len(), 1);
        let all = lrs.query(&LrsQuery::actor("a")).unwrap();
        assert_eq!(got[0].id, all[0].id);
        assert!(ids.contains(&got[0].id));
    }

    #[test]
    fn since_after_until_rejected() {
        let lrs = Lrs::in_memory();
        let q = LrsQuery { since: Some(Timestamp::from_millis(10)), until: Some(Timestamp::from_millis(5)), ..Default::default() };
        assert!(matches!(lrs.query(&q), Err(LrsError::InvalidQuery(_))));
    }

    #[test]
    fn time_window_semantics() {
        let lrs = Lrs::in_memory();
        for t in [10, 20, 30] {
            lrs.record(stmt("a", "did", t)).unwrap();
        }
        let q = LrsQuery { since: Some(Timestamp::from_millis(10)), until: Some(Timestamp::from_millis(30)), ..Default::default() };
        let ts: Vec<_> = lrs.query(&q).unwrap().iter().map(|s| s.timestamp.as_millis()).collect();
        assert_eq!(ts, [20, 30]);
    }

    #[test]
    fn stored_is_monotonic() {
        let lrs = Lrs::in_memory();
        for i in 0..200 {
            lrs.record(stmt("a", "did", i)).unwrap();
        }
        let stored: Vec<_> = lrs.all().iter().map(|s| s.stored.unwrap()).collect();
        assert!(stored.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn file_backed_reopen_and_torn_tail() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("lrs/statements.ndjson");
        let first = {
            let lrs = Lrs::open(&path).unwrap();
            let id = lrs.record(stmt("a", "did", 1)).unwrap();
            lrs.record(stmt("b", "did", 2)).unwrap();
            lrs.get(&id).unwrap()
        };
        // simulate a crash halfway through a third append
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(b"{\"id\":\"abc").unwrap();
        drop(f);

        let lrs = Lrs::open(&path).unwrap();
        assert_eq!(lrs.len(), 2);
        assert_eq!(lrs.get(&first.id).unwrap(), first);
        lrs.record(stmt("c", "did", 3)).unwrap();
        drop(lrs);
        assert_eq!(Lrs::open(&path).unwrap().len(), 3);
    }

    #[test]
    fn corrupt_middle_line_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.ndjson");
        std::fs::write(&path, "garbage\n").unwrap();
        assert!(matches!(Lrs::open(&path), Err(LrsError::Corrupt { line: 1, .. })));
    }

    #[test]
    fn export_import_round_trip() {
        let a = Lrs::in_memory();
        for i in 0..5 {
            a.record(stmt("a", "did", i)).unwrap();
        }
        let mut buf = Vec::new();
        assert_eq!(a.export_ndjson(&mut buf).unwrap(), 5);
        let b = Lrs::in_memory();
        assert_eq!(b.import_ndjson(&buf[..]).unwrap(), 5);
        for s in a.all() {
            assert!(b.get(&s.id).unwrap().same_content(&s));
        }
    }

    #[test]
    fn concurrent_writers_and_readers() {
        let lrs = Arc::new(Lrs::in_memory());
        let handles: Vec<_> = (0..8)
            .map(|w| {
                let lrs = Arc::clone(&lrs);
                std::thread::spawn(move || {
                    for i in 0..100 {
                        lrs.record(stmt(&format!("w{w}"), "did", i)).unwrap();
                        let seen = lrs.query(&LrsQuery::actor(format!("w{w}"))).unwrap().len();
                        assert_eq!(seen, i as usize + 1);
                    }
                })
            })
            .collect();
        for h in handles {
            h.join().unwrap();
        }
        assert_eq!(lrs.len(), 800);
    }
}
