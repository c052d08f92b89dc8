//! Persistent result cache. Readers take a shared lock and writers an
//! exclusive lock on `<dir>/.lock`; entries are replaced atomically.

use std::fs::{self, File, OpenOptions};
use std::path::{Path, PathBuf};

use dpseries::error::{Error, Result};

pub const LOCK_FILE: &str = ".lock";

#[derive(Debug, Clone)]
pub struct Cache {
    dir: PathBuf,
}

/// Keeps only characters that are safe in file names.
pub fn entry_name(parts: &[&str]) -> String {
    let clean = |s: &str| -> String {
        s.chars()
            .map(|c| match c {
                'a'..='z' | 'A'..='Z' | '0'..='9' | '.' | '_' => c,
                '-' => 'm',
                '/' => 'o',
                _ => '_',
            })
            .collect()
    };
    let mut name = parts.iter().map(|p| clean(p)).collect::<Vec<_>>().join("-");
    name.push_str(".json");
    name
}

impl Cache {
    /// Creates the directory if needed and checks that it is writable.
    pub fn open(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| {
            Error::Config(format!(
                "cache directory {} is not usable: {e}",
                dir.display()
            ))
        })?;
        OpenOptions::new()
            .create(true)
            .append(true)
            .open(dir.join(LOCK_FILE))
            .map_err(|e| {
                Error::Config(format!(
                    "cache directory {} is not writable: {e}",
                    dir.display()
                ))
            })?;
        Ok(Cache {
            dir: dir.to_path_buf(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn lock(&self, exclusive: bool) -> Result<File> {
        let f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(self.dir.join(LOCK_FILE))?;
        if exclusive {
            f.lock()?;
        } else {
            f.lock_shared()?;
        }
        Ok(f)
    }

    pub fn get(&self, name: &str) -> Result<Option<String>> {
        let _guard = self.lock(false)?;
        let path = self.dir.join(name);
        match fs::read_to_string(&path) {
            Ok(text) => Ok(Some(text)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e.into()),
        }
    }

    pub fn put(&self, name: &str, contents: &str) -> Result<()> {
        let _guard = self.lock(true)?;
        let tmp = self.dir.join(format!("{name}.tmp"));
        fs::write(&tmp, contents)?;
        fs::rename(&tmp, self.dir.join(name))?;
        Ok(())
    }

    /// Scratch directory for row spills of one kernel run.
    pub fn spill_dir(&self, name: &str) -> PathBuf {
        self.dir.join("spill").join(name.trim_end_matches(".json"))
    }
}
