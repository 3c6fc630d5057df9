use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::Result;

/// Writes `contents` to `dir/name` through a temporary file and a rename,
/// so a file either exists completely or not at all.
pub fn write_atomic(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let target = dir.join(name);
    let tmp = dir.join(format!(".{name}.tmp"));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents.as_bytes())?;
        f.sync_all()?;
    }
    fs::rename(&tmp, &target)?;
    Ok(target)
}

/// CSV tables plus the JSON result of one experiment.
#[derive(Debug, Default)]
pub struct Artifacts {
    pub tables: Vec<(String, String)>,
    pub result: serde_json::Value,
}

pub fn json_text(value: &serde_json::Value) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("json values serialize");
    s.push('\n');
    s
}
