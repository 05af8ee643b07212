//! All-or-nothing output directories: files are written into a hidden
//! staging directory and moved into place only after every write succeeded.

use std::fs;
use std::path::{Path, PathBuf};

use tempfile::TempDir;

use crate::commands::CliError;

pub struct Staging {
    out_dir: PathBuf,
    created_out_dir: bool,
    stage: Option<TempDir>,
    entries: Vec<PathBuf>,
}

impl Staging {
    pub fn begin(out_dir: &Path) -> Result<Self, CliError> {
        let created_out_dir = !out_dir.exists();
        fs::create_dir_all(out_dir).map_err(|e| write_error(out_dir, e))?;
        let stage = tempfile::Builder::new()
            .prefix(".viewsynth-staging-")
            .tempdir_in(out_dir)
            .map_err(|e| write_error(out_dir, e))?;
        Ok(Staging {
            out_dir: out_dir.to_path_buf(),
            created_out_dir,
            stage: Some(stage),
            entries: Vec::new(),
        })
    }

    /// Path inside the staging directory for `relative`, with parent
    /// directories created.
    pub fn path(&mut self, relative: impl AsRef<Path>) -> Result<PathBuf, CliError> {
        let relative = relative.as_ref();
        let top = relative.components().next().map(|c| PathBuf::from(c.as_os_str()));
        if let Some(top) = top {
            if !self.entries.contains(&top) {
                self.entries.push(top);
            }
        }
        let full = self.stage_dir().join(relative);
        if let Some(parent) = full.parent() {
            fs::create_dir_all(parent).map_err(|e| write_error(parent, e))?;
        }
        Ok(full)
    }

    pub fn write_text(&mut self, relative: &str, text: &str) -> Result<(), CliError> {
        let path = self.path(relative)?;
        fs::write(&path, text).map_err(|e| write_error(&path, e))
    }

    fn stage_dir(&self) -> &Path {
        self.stage
            .as_ref()
            .expect("staging directory is live until commit")
            .path()
    }

    /// Moves every staged entry into the output directory, replacing any
    /// existing entry of the same name.
    pub fn commit(mut self) -> Result<(), CliError> {
        let stage = self.stage.take().expect("commit runs once");
        for entry in &self.entries {
            let dest = self.out_dir.join(entry);
            if dest.is_dir() {
                fs::remove_dir_all(&dest).map_err(|e| write_error(&dest, e))?;
            }
            fs::rename(stage.path().join(entry), &dest).map_err(|e| write_error(&dest, e))?;
        }
        stage.close().map_err(|e| write_error(&self.out_dir, e))?;
        Ok(())
    }
}

impl Drop for Staging {
    fn drop(&mut self) {
        if let Some(stage) = self.stage.take() {
            let _ = stage.close();
            if self.created_out_dir {
                let _ = fs::remove_dir(&self.out_dir);
            }
        }
    }
}

fn write_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::new("write", format!("{}: {e}", path.display()))
}
