use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{CliError, CliResult};

/// Output directory; every file a command produces goes through here.
pub struct OutputDir {
    root: PathBuf,
}

impl OutputDir {
    pub fn create(root: &Path) -> CliResult<Self> {
        fs::create_dir_all(root).map_err(|source| CliError::Write { path: root.to_path_buf(), source })?;
        Ok(Self { root: root.to_path_buf() })
    }

    pub fn write(&self, name: &str, contents: &str) -> CliResult<PathBuf> {
        let path = self.root.join(name);
        fs::write(&path, contents).map_err(|source| CliError::Write { path: path.clone(), source })?;
        Ok(path)
    }
}

/// `key = value` lines describing a run, ending with a command line that
/// replays it from the copied inputs.
#[derive(Default)]
pub struct ResolvedConfig {
    entries: Vec<(String, String)>,
    replay: Vec<String>,
}

impl ResolvedConfig {
    pub fn new(command: &str) -> Self {
        let mut c = Self::default();
        c.set("command", command);
        c.replay.push("h2sync".into());
        c.replay.push(command.into());
        c
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.entries.push((key.into(), value.to_string()));
    }

    /// Records a value and the flag that reproduces it.
    pub fn flag(&mut self, key: &str, value: impl ToString) {
        let value = value.to_string();
        self.replay.push(format!("--{} {}", key.replace('_', "-"), value));
        self.entries.push((key.into(), value));
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.entries {
            let _ = writeln!(s, "{k} = {v}");
        }
        let _ = writeln!(s, "replay = {}", self.replay.join(" "));
        s
    }
}

pub fn rho_list(rhos: &[f64]) -> String {
    rhos.iter().map(|r| r.to_string()).collect::<Vec<_>>().join(",")
}
