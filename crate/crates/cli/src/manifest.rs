//! Run manifests and atomic output files.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::args::Command;
use crate::error::{CliError, CliResult};

pub const MANIFEST_NAME: &str = "manifest.json";

/// Everything needed to re-run a command and check its outputs. No
/// timestamps or host details, so identical runs give identical manifests.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub run: Command,
    pub tool_version: String,
    /// Binary format identifiers read or written by the run.
    pub formats: Vec<String>,
    /// Output file names relative to the output directory.
    pub outputs: Vec<String>,
    pub diagnostics: Value,
}

/// Recursively rebuilds objects with keys in sorted order, whatever map
/// type `serde_json` was built with.
fn sorted(v: Value) -> Value {
    match v {
        Value::Object(map) => {
            let mut entries: Vec<(String, Value)> = map.into_iter().collect();
            entries.sort_by(|a, b| a.0.cmp(&b.0));
            Value::Object(entries.into_iter().map(|(k, v)| (k, sorted(v))).collect::<Map<_, _>>())
        }
        Value::Array(items) => Value::Array(items.into_iter().map(sorted).collect()),
        other => other,
    }
}

impl Manifest {
    pub fn to_json(&self) -> CliResult<String> {
        let value = serde_json::to_value(self).map_err(|e| CliError::Numerical(format!("manifest: {e}")))?;
        let mut text = serde_json::to_string_pretty(&sorted(value)).expect("values always serialize");
        text.push('\n');
        Ok(text)
    }

    pub fn read(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::io(path, format!("not a lamp manifest: {e}")))
    }
}

/// Output directory with atomic writes and a record of what was written.
pub struct OutDir {
    root: PathBuf,
    written: Vec<String>,
}

impl OutDir {
    pub fn create(root: &Path) -> CliResult<Self> {
        fs::create_dir_all(root).map_err(|e| CliError::io(root, e))?;
        Ok(OutDir { root: root.to_path_buf(), written: Vec::new() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> CliResult<PathBuf> {
        let path = self.path(name);
        write_atomic(&path, bytes)?;
        if !self.written.iter().any(|w| w == name) {
            self.written.push(name.to_string());
        }
        Ok(path)
    }

    /// Writes the manifest last, listing every earlier output.
    pub fn finish(mut self, run: Command, formats: &[&str], diagnostics: Value) -> CliResult<Vec<String>> {
        self.written.sort();
        let manifest = Manifest {
            run,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            formats: formats.iter().map(|s| s.to_string()).collect(),
            outputs: self.written.clone(),
            diagnostics,
        };
        let json = manifest.to_json()?;
        self.write(MANIFEST_NAME, json.as_bytes())?;
        Ok(self.written)
    }
}

/// Temp file in the destination directory, flushed, then renamed over the
/// target so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().ok_or_else(|| CliError::io(path, "not a file path"))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    let result = (|| {
        let mut file = fs::File::create(&tmp)?;
        file.write_all(bytes)?;
        file.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(CliError::io(path, e));
    }
    Ok(())
}
