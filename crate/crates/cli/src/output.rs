use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{CliError, CliResult};

/// Output directory; created on first use.
#[derive(Debug, Clone)]
pub struct OutDir {
    root: PathBuf,
}

impl OutDir {
    pub fn new(root: &Path) -> CliResult<Self> {
        fs::create_dir_all(root).map_err(|e| CliError::Io(format!("cannot create {}: {e}", root.display())))?;
        Ok(Self { root: root.to_path_buf() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn csv<R: IntoIterator<Item = Vec<String>>>(&self, name: &str, header: &[&str], rows: R) -> CliResult<()> {
        let path = self.path(name);
        let mut w = csv::Writer::from_path(&path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        w.write_record(header)?;
        for row in rows {
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn json<T: Serialize>(&self, name: &str, value: &T) -> CliResult<()> {
        let path = self.path(name);
        let text = serde_json::to_string_pretty(value)?;
        fs::write(&path, text + "\n").map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
    }
}

pub fn num(x: f64) -> String {
    format!("{x}")
}

pub fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}
