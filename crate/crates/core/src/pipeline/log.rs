use std::fmt::Write as _;
use std::io;
use std::path::{Path, PathBuf};

use crate::tuner::LogRecord;

/// Companion curve file of a log: `tuning.jsonl` → `tuning.curve.tsv`.
pub fn curve_path(log_path: &Path) -> PathBuf {
    log_path.with_extension("curve.tsv")
}

/// Write `records` as JSON lines to `path` and the `(iter, best_so_far)`
/// curve next to it. Both files are overwritten; the same records give the
/// same bytes.
pub fn write_tuning_log(records: &[LogRecord], path: &Path) -> io::Result<PathBuf> {
    if records.is_empty() {
        return Err(io::Error::new(
            io::ErrorKind::InvalidInput,
            "empty tuning history",
        ));
    }
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    let mut jsonl = String::new();
    let mut curve = String::from("iter\tbest_so_far\n");
    for r in records {
        jsonl.push_str(&serde_json::to_string(r).map_err(io::Error::other)?);
        jsonl.push('\n');
        let _ = writeln!(curve, "{}\t{}", r.iter, r.best_so_far);
    }
    std::fs::write(path, jsonl)?;
    let curve_file = curve_path(path);
    std::fs::write(&curve_file, curve)?;
    Ok(curve_file)
}

/// Parse a log written by [`write_tuning_log`].
pub fn read_tuning_log(path: &Path) -> io::Result<Vec<LogRecord>> {
    std::fs::read_to_string(path)?
        .lines()
        .map(|l| serde_json::from_str(l).map_err(io::Error::other))
        .collect()
}
