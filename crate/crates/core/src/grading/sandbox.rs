//! Runs one program in a confined child process.
//!
//! Each run gets a private scratch directory (the only writable location),
//! a fresh network namespace, rlimits for CPU, address space and file size,
//! and its own process group so the whole tree is killed on timeout.

use std::io::{Read, Write};
use std::os::unix::process::CommandExt;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::mpsc;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use super::isolation::{self, ChildPlan, Ruleset};
use super::runner::{RunnerRegistry, RunnerSpec};
use super::types::{ExecutionOutcome, ExitStatus, Limits, Termination};
use super::GradingError;

const FILE_SIZE_LIMIT: u64 = 16 * 1024 * 1024;
const DRAIN_GRACE: Duration = Duration::from_millis(500);
const CHILD_PATH: &str = "/usr/local/bin:/usr/bin:/bin";

/// Confinement requirements. `Strict` refuses to run when the kernel cannot
/// provide filesystem or network isolation; `BestEffort` runs with whatever
/// is available.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum IsolationMode {
    #[default]
    BestEffort,
    Strict,
}

#[derive(Debug, Clone)]
pub struct Sandbox {
    runners: RunnerRegistry,
    scratch_root: PathBuf,
    mode: IsolationMode,
}

impl Sandbox {
    pub fn new(runners: RunnerRegistry) -> Self {
        Sandbox { runners, scratch_root: std::env::temp_dir(), mode: IsolationMode::default() }
    }

    pub fn with_scratch_root(mut self, root: impl Into<PathBuf>) -> Self {
        self.scratch_root = root.into();
        self
    }

    pub fn with_isolation(mut self, mode: IsolationMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn runners(&self) -> &RunnerRegistry {
        &self.runners
    }

    pub fn runner(&self, language_tag: &str) -> Result<&RunnerSpec, GradingError> {
        self.runners.get(language_tag)
    }

    /// Executes `source_code` under `limits`. An unknown language tag is a
    /// configuration error; every failure after that point is reported in
    /// the outcome as `runner_error`.
    pub fn execute(
        &self,
        source_code: &str,
        language_tag: &str,
        stdin_data: &[u8],
        limits: &Limits,
    ) -> Result<ExecutionOutcome, GradingError> {
        let spec = self.runners.get(language_tag)?;
        Ok(self.execute_with(spec, source_code, stdin_data, limits))
    }

    fn execute_with(&self, spec: &RunnerSpec, source: &str, stdin_data: &[u8], limits: &Limits) -> ExecutionOutcome {
        let caps = isolation::capabilities();
        if self.mode == IsolationMode::Strict && !(caps.filesystem_confined() && caps.network_confined()) {
            return ExecutionOutcome::runner_error("sandbox: kernel isolation unavailable in strict mode");
        }
        let scratch = match tempfile::Builder::new().prefix("cc-run-").tempdir_in(&self.scratch_root) {
            Ok(d) => d,
            Err(e) => return ExecutionOutcome::runner_error(format!("sandbox: cannot create scratch dir: {e}")),
        };
        let source_path = scratch.path().join(&spec.source_file);
        if let Err(e) = std::fs::write(&source_path, source) {
            return ExecutionOutcome::runner_error(format!("sandbox: cannot write source: {e}"));
        }
        let ruleset = if caps.filesystem_confined() {
            let mut readable: Vec<&Path> = isolation::SYSTEM_READ_ROOTS.iter().map(Path::new).collect();
            readable.extend(spec.read_paths.iter().map(PathBuf::as_path));
            match Ruleset::build(caps.landlock_abi, &[scratch.path()], &readable, Path::new("/dev")) {
                Ok(rs) => Some(rs),
                Err(e) => return ExecutionOutcome::runner_error(format!("sandbox: landlock setup failed: {e}")),
            }
        } else {
            tracing::warn!("landlock unavailable; filesystem access is not confined");
            None
        };
        let plan = ChildPlan {
            cpu_seconds: limits.cpu_ms.div_ceil(1000).max(1),
            memory_bytes: limits.memory_bytes,
            file_size_bytes: FILE_SIZE_LIMIT,
            isolate_network: caps.network_namespace,
            ruleset_fd: ruleset.as_ref().map(Ruleset::raw_fd),
        };

        let argv = spec.render_command(&source_path, scratch.path());
        let mut cmd = Command::new(&argv[0]);
        cmd.args(&argv[1..])
            .current_dir(scratch.path())
            .env_clear()
            .env("PATH", CHILD_PATH)
            .env("HOME", scratch.path())
            .env("TMPDIR", scratch.path())
            .env("LANG", "C.UTF-8")
            .envs(&spec.env)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped());
        // SAFETY: confine_child performs only async-signal-safe syscalls on
        // values copied into the closure.
        unsafe {
            cmd.pre_exec(move || isolation::confine_child(&plan));
        }

        let started = Instant::now();
        let mut child = match cmd.spawn() {
            Ok(c) => c,
            Err(e) => {
                return ExecutionOutcome::runner_error(format!("sandbox: cannot start `{}`: {e}", argv[0]));
            }
        };
        drop(ruleset);
        let pid = child.id() as libc::pid_t;

        let stdin_pipe = child.stdin.take();
        let input = stdin_data.to_vec();
        thread::spawn(move || {
            if let Some(mut pipe) = stdin_pipe {
                // EPIPE is expected when the program ignores its input.
                let _ = pipe.write_all(&input);
            }
        });
        let stdout = spawn_capture(child.stdout.take(), limits.output_cap_bytes);
        let stderr = spawn_capture(child.stderr.take(), limits.output_cap_bytes);

        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            let _ = tx.send(reap(pid));
        });

        let wall = Duration::from_millis(limits.wall_ms);
        let (reaped, wall_timeout, runtime) = match rx.recv_timeout(wall) {
            Ok(r) => (r, false, started.elapsed()),
            Err(_) => {
                let runtime = started.elapsed();
                // SAFETY: the leader is not yet reaped, so the group id is ours.
                unsafe { libc::kill(-pid, libc::SIGKILL) };
                (rx.recv().unwrap_or(Reaped::failed()), true, runtime)
            }
        };
        // The std handle must not try to wait on a pid we reaped ourselves.
        std::mem::forget(child);

        let (stdout_data, stdout_truncated) = stdout.finish(DRAIN_GRACE);
        let (stderr_data, stderr_truncated) = stderr.finish(DRAIN_GRACE);
        let exit_status = reaped.status;
        let cpu_ms = reaped.cpu_ms;

        let termination = if wall_timeout {
            Termination::Timeout
        } else if matches!(exit_status, Some(ExitStatus::Signal(s)) if s == libc::SIGXCPU)
            || (matches!(exit_status, Some(ExitStatus::Signal(s)) if s == libc::SIGKILL) && cpu_ms >= limits.cpu_ms)
        {
            Termination::Timeout
        } else if exit_status.is_none() {
            Termination::RunnerError
        } else if !exit_status.is_some_and(|s| s.success()) && has_marker(&stderr_data, &spec.memory_error_markers) {
            Termination::MemoryExceeded
        } else {
            Termination::Normal
        };

        ExecutionOutcome {
            stdout_data,
            stdout_truncated,
            stderr_data,
            stderr_truncated,
            exit_status,
            termination,
            runtime_ms: u64::try_from(runtime.as_millis()).unwrap_or(u64::MAX),
            cpu_ms,
        }
    }
}

fn has_marker(stderr: &[u8], markers: &[String]) -> bool {
    let text = String::from_utf8_lossy(stderr);
    markers.iter().any(|m| !m.is_empty() && text.contains(m.as_str()))
}

struct Reaped {
    status: Option<ExitStatus>,
    cpu_ms: u64,
}

impl Reaped {
    fn failed() -> Self {
        Reaped { status: None, cpu_ms: 0 }
    }
}

/// Waits for the leader to exit, kills any stragglers in its group, then
/// reaps it with resource usage.
fn reap(pid: libc::pid_t) -> Reaped {
    // SAFETY: zeroed siginfo is a valid out-parameter.
    unsafe {
        let mut info: libc::siginfo_t = std::mem::zeroed();
        loop {
            let r = libc::waitid(libc::P_PID, pid as libc::id_t, &mut info, libc::WEXITED | libc::WNOWAIT);
            if r == 0 || std::io::Error::last_os_error().raw_os_error() != Some(libc::EINTR) {
                break;
            }
        }
        libc::kill(-pid, libc::SIGKILL);
        let mut status: libc::c_int = 0;
        let mut usage: libc::rusage = std::mem::zeroed();
        loop {
            let r = libc::wait4(pid, &mut status, 0, &mut usage);
            if r == pid {
                break;
            }
            if r < 0 && std::io::Error::last_os_error().raw_os_error() == Some(libc::EINTR) {
                continue;
            }
            return Reaped::failed();
        }
        let tv_ms = |tv: libc::timeval| (tv.tv_sec as u64) * 1000 + (tv.tv_usec as u64) / 1000;
        let cpu_ms = tv_ms(usage.ru_utime) + tv_ms(usage.ru_stime);
        let exit = if libc::WIFEXITED(status) {
            ExitStatus::Code(libc::WEXITSTATUS(status))
        } else if libc::WIFSIGNALED(status) {
            ExitStatus::Signal(libc::WTERMSIG(status))
        } else {
            ExitStatus::Code(status)
        };
        Reaped { status: Some(exit), cpu_ms }
    }
}

#[derive(Default)]
struct Captured {
    data: Vec<u8>,
    truncated: bool,
}

struct Capture {
    buf: Arc<Mutex<Captured>>,
    done: mpsc::Receiver<()>,
}

impl Capture {
    /// Waits briefly for EOF; a descendant that escaped the process group
    /// may hold the pipe open, in which case the bytes read so far are used.
    fn finish(self, grace: Duration) -> (Vec<u8>, bool) {
        let _ = self.done.recv_timeout(grace);
        let mut guard = self.buf.lock().unwrap_or_else(|p| p.into_inner());
        let c = std::mem::take(&mut *guard);
        (c.data, c.truncated)
    }
}

fn spawn_capture<R: Read + Send + 'static>(pipe: Option<R>, cap: usize) -> Capture {
    let buf = Arc::new(Mutex::new(Captured::default()));
    let (tx, done) = mpsc::channel();
    let shared = Arc::clone(&buf);
    thread::spawn(move || {
        if let Some(mut pipe) = pipe {
            let mut chunk = [0u8; 8192];
            loop {
                match pipe.read(&mut chunk) {
                    Ok(0) => break,
                    Ok(n) => {
                        let mut c = shared.lock().unwrap_or_else(|p| p.into_inner());
                        let room = cap.saturating_sub(c.data.len());
                        if n > room {
                            c.truncated = true;
                        }
                        let take = n.min(room);
                        c.data.extend_from_slice(&chunk[..take]);
                    }
                    Err(e) if e.kind() == std::io::ErrorKind::Interrupted => continue,
                    Err(_) => break,
                }
            }
        }
        let _ = tx.send(());
    });
    Capture { buf, done }
}
