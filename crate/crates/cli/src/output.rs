use std::fs;
use std::path::Path;

use serde::Serialize;
use subflow_core::{Error, Result};

/// Pretty-printed JSON written through a temporary sibling and renamed into place.
pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text =
        serde_json::to_string_pretty(value).map_err(|e| Error::Validation(format!("serializing report: {e}")))?;
    let tmp = path.with_extension("json.tmp");
    fs::write(&tmp, text + "\n")?;
    fs::rename(&tmp, path)?;
    Ok(())
}
