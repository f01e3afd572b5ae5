//! All-or-nothing output: files are staged next to their destination and
//! renamed into place only when the whole command succeeds.

use std::fs;
use std::path::{Path, PathBuf};

use crate::CliError;

#[derive(Default)]
pub struct Staged {
    files: Vec<(PathBuf, PathBuf)>,
    committed: bool,
}

fn temp_path(dest: &Path) -> PathBuf {
    let mut name = dest.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(format!(".partial-{}", std::process::id()));
    dest.with_file_name(name)
}

impl Staged {
    pub fn write(&mut self, dest: impl Into<PathBuf>, bytes: impl AsRef<[u8]>) -> Result<(), CliError> {
        let dest = dest.into();
        if let Some(parent) = dest.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(|e| CliError::data(format!("{}: {e}", parent.display())))?;
        }
        let tmp = temp_path(&dest);
        // Registered first so a failed write is still cleaned up.
        self.files.push((tmp.clone(), dest));
        fs::write(&tmp, bytes).map_err(|e| CliError::data(format!("{}: {e}", tmp.display())))
    }

    pub fn commit(mut self) -> Result<Vec<PathBuf>, CliError> {
        let mut done = Vec::with_capacity(self.files.len());
        for (tmp, dest) in &self.files {
            if let Err(e) = fs::rename(tmp, dest) {
                for d in &done {
                    let _ = fs::remove_file(d);
                }
                return Err(CliError::data(format!("{}: {e}", dest.display())));
            }
            done.push(dest.clone());
        }
        self.committed = true;
        Ok(done)
    }
}

impl Drop for Staged {
    fn drop(&mut self) {
        if !self.committed {
            for (tmp, _) in &self.files {
                let _ = fs::remove_file(tmp);
            }
        }
    }
}
