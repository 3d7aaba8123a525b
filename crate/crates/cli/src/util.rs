//! Shared plumbing: the exit-status error type, atomic text output, and the
//! small flag parsers used by more than one subcommand.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use satcalc_core::dataset::TaskId;
use satcalc_core::CoreError;

/// A failed command, classed by exit status: user errors (bad flags, bad
/// files) exit 1, internal invariant breaches exit 2.
#[derive(Debug)]
pub enum Fail {
    User(String),
    Internal(String),
}

impl Fail {
    pub fn user(msg: impl Into<String>) -> Fail {
        Fail::User(msg.into())
    }

    pub fn internal(msg: impl Into<String>) -> Fail {
        Fail::Internal(msg.into())
    }
}

/// Core errors surfacing here are bad inputs (malformed files, out-of-range
/// values), not bugs.
impl From<CoreError> for Fail {
    fn from(e: CoreError) -> Fail {
        Fail::User(e.to_string())
    }
}

pub type CmdResult = Result<(), Fail>;

/// Global flags shared by every subcommand.
pub struct Ctx {
    pub seed: u64,
    pub verbose: bool,
}

impl Ctx {
    /// Progress note on stderr, shown only with --verbose.
    pub fn note(&self, msg: impl AsRef<str>) {
        if self.verbose {
            eprintln!("[satcalc] {}", msg.as_ref());
        }
    }
}

/// Write a text file via a temporary sibling and rename.
pub fn write_text_atomic(path: &Path, text: &str) -> CmdResult {
    let name = path
        .file_name()
        .ok_or_else(|| Fail::user(format!("'{}' has no file name", path.display())))?;
    let tmp = path.with_file_name(format!("{}.tmp", name.to_string_lossy()));
    fs::write(&tmp, text).map_err(|e| Fail::user(format!("{}: {}", tmp.display(), e)))?;
    fs::rename(&tmp, path).map_err(|e| Fail::user(format!("{}: {}", path.display(), e)))?;
    Ok(())
}

/// Task-list flag: "all", or a comma list of task names like "NDVI,H,AGB".
pub fn parse_tasks(s: &str) -> Result<BTreeSet<TaskId>, Fail> {
    if s.eq_ignore_ascii_case("all") {
        return Ok(TaskId::ALL.into_iter().collect());
    }
    let mut tasks = BTreeSet::new();
    for part in s.split(',') {
        let part = part.trim();
        if part.is_empty() {
            return Err(Fail::user(format!("empty task name in '{s}'")));
        }
        tasks.insert(TaskId::parse(part)?);
    }
    Ok(tasks)
}

/// Size flag: "HxW", e.g. "128x128".
pub fn parse_size(s: &str) -> Result<(usize, usize), Fail> {
    let bad = || Fail::user(format!("size '{s}' must be HxW, e.g. 128x128"));
    let (h, w) = s.split_once(['x', 'X']).ok_or_else(bad)?;
    let h: usize = h.trim().parse().map_err(|_| bad())?;
    let w: usize = w.trim().parse().map_err(|_| bad())?;
    if h == 0 || w == 0 {
        return Err(bad());
    }
    Ok((h, w))
}

/// Split-fraction flag: "train,val,test", e.g. "0.8,0.1,0.1". Range and sum
/// are checked downstream where the fractions are applied.
pub fn parse_fractions(s: &str) -> Result<(f64, f64, f64), Fail> {
    let bad = || Fail::user(format!("split '{s}' must be three comma-separated fractions"));
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| bad())?;
    match parts[..] {
        [a, b, c] => Ok((a, b, c)),
        _ => Err(bad()),
    }
}

/// One TSV metric cell; infinities print as "inf".
pub fn cell(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:.6}")
    }
}

/// An optional TSV metric cell; absent prints as "-".
pub fn opt_cell(v: Option<f64>) -> String {
    match v {
        Some(v) => cell(v),
        None => "-".into(),
    }
}
