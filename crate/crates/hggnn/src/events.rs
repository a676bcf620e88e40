//! Tab-separated interaction logs.
//!
//! One event per line: `user<TAB>item<TAB>timestamp[<TAB>session_key]`.
//! Blank lines and lines starting with `#` are ignored. Lines that do not
//! parse are skipped and counted.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use hggnn_core::data::Interaction;

use crate::error::{AppError, Result};

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ParsedLog {
    pub events: Vec<Interaction>,
    pub skipped: usize,
    /// 1-based line number of the first skipped line.
    pub first_bad_line: Option<usize>,
}

pub fn parse_log(text: &str) -> ParsedLog {
    let mut out = ParsedLog::default();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        match parse_line(line) {
            Some(ev) => out.events.push(ev),
            None => {
                out.skipped += 1;
                out.first_bad_line.get_or_insert(n + 1);
            }
        }
    }
    out
}

fn parse_line(line: &str) -> Option<Interaction> {
    let f: Vec<&str> = line.split('\t').collect();
    if !(3..=4).contains(&f.len()) || f[..f.len().min(3)].iter().any(|s| s.is_empty()) {
        return None;
    }
    let ts: u64 = f[2].trim().parse().ok()?;
    let ev = Interaction::new(f[0], f[1], ts);
    Some(match f.get(3) {
        Some(k) if !k.is_empty() => ev.with_session(*k),
        _ => ev,
    })
}

/// Reads and parses a log file, warning on stderr about skipped lines.
pub fn read_log(path: &Path) -> Result<Vec<Interaction>> {
    let text = fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
    let parsed = parse_log(&text);
    if parsed.skipped > 0 {
        eprintln!(
            "warning: {}: skipped {} malformed line(s), first at line {}",
            path.display(),
            parsed.skipped,
            parsed.first_bad_line.unwrap_or(0)
        );
    }
    if parsed.events.is_empty() {
        return Err(AppError::data(format!("{}: no events", path.display())));
    }
    Ok(parsed.events)
}

pub fn format_log(events: &[Interaction]) -> String {
    let mut s = String::from("# user\titem\ttimestamp\tsession\n");
    for e in events {
        let _ = write!(s, "{}\t{}\t{}", e.user, e.item, e.timestamp);
        if let Some(k) = &e.session_key {
            let _ = write!(s, "\t{k}");
        }
        s.push('\n');
    }
    s
}
