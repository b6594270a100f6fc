//! Atomic file output.

use std::io::Write;
use std::path::Path;

use crate::failure::{CliResult, Failure};

/// Write `bytes` to a temporary file next to `path`, then rename it over
/// `path`, so readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let fail = |e: std::io::Error| Failure::data(format!("{}: {e}", path.display()));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(fail)?;
    tmp.write_all(bytes).map_err(fail)?;
    tmp.as_file().sync_all().map_err(fail)?;
    tmp.persist(path).map_err(|e| fail(e.error))?;
    Ok(())
}

/// Serialize `records` as JSON lines.
pub fn jsonl<T: serde::Serialize>(records: &[T]) -> Vec<u8> {
    let mut out = Vec::new();
    npprov_core::eval::write_jsonl(&mut out, records).expect("writing to memory cannot fail");
    out
}
