//! Kernel-level confinement for sandboxed runs.
//!
//! A Landlock ruleset is prepared in the parent (it needs allocation and path
//! lookups) and applied in the child between fork and exec together with a
//! fresh network namespace. Everything done in the child is a bare syscall.

use std::ffi::CString;
use std::io;
use std::os::fd::{AsRawFd, FromRawFd, OwnedFd, RawFd};
use std::os::unix::ffi::OsStrExt;
use std::path::Path;
use std::sync::OnceLock;

const CREATE_RULESET_VERSION: libc::c_uint = 1;
const RULE_PATH_BENEATH: libc::c_int = 1;

const FS_EXECUTE: u64 = 1 << 0;
const FS_WRITE_FILE: u64 = 1 << 1;
const FS_READ_FILE: u64 = 1 << 2;
const FS_READ_DIR: u64 = 1 << 3;
const FS_REMOVE_DIR: u64 = 1 << 4;
const FS_REMOVE_FILE: u64 = 1 << 5;
const FS_MAKE_CHAR: u64 = 1 << 6;
const FS_MAKE_DIR: u64 = 1 << 7;
const FS_MAKE_REG: u64 = 1 << 8;
const FS_MAKE_SOCK: u64 = 1 << 9;
const FS_MAKE_FIFO: u64 = 1 << 10;
const FS_MAKE_BLOCK: u64 = 1 << 11;
const FS_MAKE_SYM: u64 = 1 << 12;
const FS_REFER: u64 = 1 << 13;
const FS_TRUNCATE: u64 = 1 << 14;

const NET_BIND_TCP: u64 = 1 << 0;
const NET_CONNECT_TCP: u64 = 1 << 1;

const SCOPE_ABSTRACT_UNIX_SOCKET: u64 = 1 << 0;
const SCOPE_SIGNAL: u64 = 1 << 1;

#[repr(C)]
struct RulesetAttr {
    handled_access_fs: u64,
    handled_access_net: u64,
    scoped: u64,
}

#[repr(C, packed)]
struct PathBeneathAttr {
    allowed_access: u64,
    parent_fd: i32,
}

/// What the running kernel lets us enforce.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Capabilities {
    /// Landlock ABI version, 0 when unavailable.
    pub landlock_abi: i32,
    /// Whether a private network namespace can be created.
    pub network_namespace: bool,
}

impl Capabilities {
    pub fn filesystem_confined(&self) -> bool {
        self.landlock_abi >= 1
    }

    pub fn network_confined(&self) -> bool {
        self.network_namespace || self.landlock_abi >= 4
    }
}

pub fn capabilities() -> Capabilities {
    static CAPS: OnceLock<Capabilities> = OnceLock::new();
    *CAPS.get_or_init(|| Capabilities { landlock_abi: landlock_abi(), network_namespace: probe_netns() })
}

fn landlock_abi() -> i32 {
    // SAFETY: version query takes no pointers.
    let r = unsafe {
        libc::syscall(libc::SYS_landlock_create_ruleset, std::ptr::null::<RulesetAttr>(), 0usize, CREATE_RULESET_VERSION)
    };
    if r < 0 {
        0
    } else {
        r as i32
    }
}

fn probe_netns() -> bool {
    use std::os::unix::process::CommandExt;
    let mut cmd = std::process::Command::new("/bin/true");
    cmd.stdin(std::process::Stdio::null()).stdout(std::process::Stdio::null()).stderr(std::process::Stdio::null());
    // SAFETY: only async-signal-safe syscalls run in the child.
    unsafe {
        cmd.pre_exec(|| {
            if enter_network_namespace() {
                Ok(())
            } else {
                Err(io::Error::from_raw_os_error(libc::EPERM))
            }
        });
    }
    cmd.status().map(|s| s.success()).unwrap_or(false)
}

/// Called in the child. Returns whether a new network namespace was entered.
fn enter_network_namespace() -> bool {
    // SAFETY: plain syscalls.
    unsafe { libc::unshare(libc::CLONE_NEWNET) == 0 || libc::unshare(libc::CLONE_NEWUSER | libc::CLONE_NEWNET) == 0 }
}

/// System locations a runner may read and execute from. Missing entries are
/// skipped.
pub const SYSTEM_READ_ROOTS: &[&str] =
    &["/usr", "/lib", "/lib32", "/lib64", "/libx32", "/bin", "/sbin", "/etc", "/opt", "/proc", "/sys", "/dev"];

/// A prepared Landlock ruleset: full access beneath `writable`, read and
/// execute beneath `readable`, device writes beneath `device_dir`, nothing
/// elsewhere. TCP bind/connect is denied.
pub struct Ruleset {
    fd: OwnedFd,
}

impl Ruleset {
    pub fn build(abi: i32, writable: &[&Path], readable: &[&Path], device_dir: &Path) -> io::Result<Ruleset> {
        if abi < 1 {
            return Err(io::Error::new(io::ErrorKind::Unsupported, "landlock unavailable"));
        }
        let read = FS_EXECUTE | FS_READ_FILE | FS_READ_DIR;
        let mut fs = read
            | FS_WRITE_FILE
            | FS_REMOVE_DIR
            | FS_REMOVE_FILE
            | FS_MAKE_CHAR
            | FS_MAKE_DIR
            | FS_MAKE_REG
            | FS_MAKE_SOCK
            | FS_MAKE_FIFO
            | FS_MAKE_BLOCK
            | FS_MAKE_SYM;
        if abi >= 2 {
            fs |= FS_REFER;
        }
        if abi >= 3 {
            fs |= FS_TRUNCATE;
        }
        let net = if abi >= 4 { NET_BIND_TCP | NET_CONNECT_TCP } else { 0 };
        let scoped = if abi >= 6 { SCOPE_ABSTRACT_UNIX_SOCKET | SCOPE_SIGNAL } else { 0 };
        let attr = RulesetAttr { handled_access_fs: fs, handled_access_net: net, scoped };
        let size = match abi {
            1..=3 => 8,
            4 | 5 => 16,
            _ => std::mem::size_of::<RulesetAttr>(),
        };
        // SAFETY: attr outlives the call and `size` never exceeds its length.
        let raw = unsafe { libc::syscall(libc::SYS_landlock_create_ruleset, &attr as *const RulesetAttr, size, 0u32) };
        if raw < 0 {
            return Err(io::Error::last_os_error());
        }
        // SAFETY: the kernel returned a fresh descriptor we now own.
        let fd = unsafe { OwnedFd::from_raw_fd(raw as RawFd) };
        let rs = Ruleset { fd };
        for dir in writable {
            rs.allow(dir, fs)?;
        }
        for dir in readable {
            if dir.is_dir() {
                rs.allow(dir, read)?;
            }
        }
        let dev_access = read | FS_WRITE_FILE | if abi >= 3 { FS_TRUNCATE } else { 0 };
        rs.allow(device_dir, dev_access)?;
        Ok(rs)
    }

    fn allow(&self, path: &Path, access: u64) -> io::Result<()> {
        let c = CString::new(path.as_os_str().as_bytes())?;
        // SAFETY: valid NUL-terminated path.
        let pfd = unsafe { libc::open(c.as_ptr(), libc::O_PATH | libc::O_CLOEXEC) };
        if pfd < 0 {
            return Err(io::Error::last_os_error());
        }
        // SAFETY: pfd was just opened.
        let pfd = unsafe { OwnedFd::from_raw_fd(pfd) };
        let attr = PathBeneathAttr { allowed_access: access, parent_fd: pfd.as_raw_fd() };
        // SAFETY: attr is a valid path_beneath_attr for the call duration.
        let r = unsafe {
            libc::syscall(
                libc::SYS_landlock_add_rule,
                self.fd.as_raw_fd(),
                RULE_PATH_BENEATH,
                &attr as *const PathBeneathAttr,
                0u32,
            )
        };
        if r < 0 {
            return Err(io::Error::last_os_error());
        }
        Ok(())
    }

    pub fn raw_fd(&self) -> RawFd {
        self.fd.as_raw_fd()
    }
}

/// Plain values consumed by [`confine_child`]; nothing here allocates.
#[derive(Debug, Clone, Copy)]
pub struct ChildPlan {
    pub cpu_seconds: u64,
    pub memory_bytes: u64,
    pub file_size_bytes: u64,
    pub isolate_network: bool,
    pub ruleset_fd: Option<RawFd>,
}

fn set_limit(resource: libc::__rlimit_resource_t, soft: u64, hard: u64) -> io::Result<()> {
    let lim = libc::rlimit { rlim_cur: soft as libc::rlim_t, rlim_max: hard as libc::rlim_t };
    // SAFETY: valid rlimit struct.
    if unsafe { libc::setrlimit(resource, &lim) } != 0 {
        return Err(io::Error::last_os_error());
    }
    Ok(())
}

/// Runs in the forked child before exec.
///
/// # Safety
/// Must only be called from a `pre_exec` hook.
pub unsafe fn confine_child(plan: &ChildPlan) -> io::Result<()> {
    if libc::setpgid(0, 0) != 0 {
        return Err(io::Error::last_os_error());
    }
    set_limit(libc::RLIMIT_CPU, plan.cpu_seconds, plan.cpu_seconds + 1)?;
    set_limit(libc::RLIMIT_AS, plan.memory_bytes, plan.memory_bytes)?;
    set_limit(libc::RLIMIT_FSIZE, plan.file_size_bytes, plan.file_size_bytes)?;
    set_limit(libc::RLIMIT_CORE, 0, 0)?;
    if plan.isolate_network && !enter_network_namespace() {
        return Err(io::Error::from_raw_os_error(libc::EPERM));
    }
    if let Some(fd) = plan.ruleset_fd {
        if libc::prctl(libc::PR_SET_NO_NEW_PRIVS, 1, 0, 0, 0) != 0 {
            return Err(io::Error::last_os_error());
        }
        if libc::syscall(libc::SYS_landlock_restrict_self, fd, 0u32) != 0 {
            return Err(io::Error::last_os_error());
        }
    }
    Ok(())
}
