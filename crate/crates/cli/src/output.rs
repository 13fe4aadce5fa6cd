use std::path::PathBuf;

use serde::Serialize;
use tsbench_core::ingest::atomic_write;

use crate::error::CliError;

/// Output files of one command, all named `<name><suffix>.<kind>`.
pub struct Outputs {
    dir: PathBuf,
    name: String,
    written: Vec<PathBuf>,
}

impl Outputs {
    pub fn new(dir: PathBuf, name: &str) -> Self {
        Self {
            dir,
            name: name.to_string(),
            written: Vec::new(),
        }
    }

    pub fn path(&self, suffix: &str, kind: &str) -> PathBuf {
        self.dir.join(format!("{}{suffix}.{kind}", self.name))
    }

    pub fn text(&mut self, suffix: &str, kind: &str, contents: &str) -> Result<(), CliError> {
        std::fs::create_dir_all(&self.dir).map_err(|e| CliError::io(&self.dir, e))?;
        let path = self.path(suffix, kind);
        atomic_write(&path, contents.as_bytes()).map_err(|e| CliError::Data(e.to_string()))?;
        self.written.push(path);
        Ok(())
    }

    pub fn json<S: Serialize>(&mut self, suffix: &str, kind: &str, value: &S) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Data(e.to_string()))?;
        text.push('\n');
        self.text(suffix, kind, &text)
    }

    pub fn dir(&self) -> &std::path::Path {
        &self.dir
    }

    pub fn finish(self) -> Vec<PathBuf> {
        self.written
    }
}

/// `""` for a single run, `-rNN` per replicate otherwise.
pub fn replicate_suffix(replicates: usize, r: usize) -> String {
    if replicates == 1 {
        String::new()
    } else {
        let width = (replicates - 1).to_string().len().max(2);
        format!("-r{r:0width$}")
    }
}
