use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use deltasl::Error;
use serde_json::json;

use crate::config::ConfigError;

/// Writes `name` under `dir` through a temporary file and a rename, so a
/// crash never leaves a half-written output behind.
pub fn write_atomic(
    dir: &Path,
    name: &str,
    fill: impl FnOnce(&mut Vec<u8>) -> deltasl::Result<()>,
) -> Result<PathBuf> {
    let mut buf = Vec::new();
    fill(&mut buf)?;
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let target = dir.join(name);
    let tmp = dir.join(format!(".{name}.tmp"));
    let mut f = fs::File::create(&tmp).with_context(|| format!("creating {}", tmp.display()))?;
    f.write_all(&buf)?;
    f.sync_all()?;
    drop(f);
    fs::rename(&tmp, &target).with_context(|| format!("renaming into {}", target.display()))?;
    Ok(target)
}

pub fn write_text(dir: &Path, name: &str, text: &str) -> Result<PathBuf> {
    write_atomic(dir, name, |buf| {
        buf.extend_from_slice(text.as_bytes());
        if !text.ends_with('\n') {
            buf.push(b'\n');
        }
        Ok(())
    })
}

/// Exit code and one-line JSON description of a failure.
pub fn classify(err: &anyhow::Error) -> (i32, serde_json::Value) {
    if let Some(c) = err.downcast_ref::<ConfigError>() {
        return (2, json!({"error": "config", "key": c.key, "message": c.message}));
    }
    let message = format!("{err:#}");
    match err.downcast_ref::<Error>() {
        Some(Error::MissingBaseline) => (4, json!({"error": "missing-baseline", "message": message})),
        Some(Error::InvalidData(_) | Error::DataIntegrity(_) | Error::Csv(_) | Error::Json(_)) => {
            (3, json!({"error": "data", "message": message}))
        }
        Some(Error::Overflow { .. }) => (3, json!({"error": "non-finite", "message": message})),
        _ => (1, json!({"error": "runtime", "message": message})),
    }
}
