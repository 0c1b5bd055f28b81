//! Run-directory file naming and writing.

use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

/// Files of one run share `<subcommand>_<param>_<timestamp>` as their stem.
#[derive(Debug, Clone)]
pub struct RunFiles {
    pub dir: PathBuf,
    pub stem: String,
}

impl RunFiles {
    /// Reserves a fresh stem in `dir` by creating its config snapshot
    /// exclusively; a clash within the same millisecond gets a numeric
    /// suffix, so concurrent runs never overwrite each other.
    pub fn create(dir: &Path, subcommand: &str, param: &str, snapshot: &str) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let stamp = chrono::Local::now().format("%Y%m%dT%H%M%S%.3f").to_string();
        let base = format!("{subcommand}_{}_{}", sanitize(param), stamp.replace('.', "-"));
        for n in 0.. {
            let stem = if n == 0 {
                base.clone()
            } else {
                format!("{base}-{n}")
            };
            let path = dir.join(format!("{stem}.ini"));
            match OpenOptions::new().write(true).create_new(true).open(&path) {
                Ok(mut f) => {
                    f.write_all(snapshot.as_bytes())
                        .with_context(|| format!("writing {}", path.display()))?;
                    return Ok(Self {
                        dir: dir.to_path_buf(),
                        stem,
                    });
                }
                Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
                Err(e) => return Err(e).with_context(|| format!("creating {}", path.display())),
            }
        }
        unreachable!()
    }

    /// `<stem><suffix>`, e.g. suffix `.csv` or `.curves.csv`.
    pub fn path(&self, suffix: &str) -> PathBuf {
        self.dir.join(format!("{}{suffix}", self.stem))
    }

    pub fn writer(&self, suffix: &str) -> Result<(PathBuf, BufWriter<File>)> {
        let path = self.path(suffix);
        let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        Ok((path, BufWriter::new(f)))
    }

    pub fn write(&self, suffix: &str, content: &[u8]) -> Result<PathBuf> {
        let path = self.path(suffix);
        fs::write(&path, content).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}

fn sanitize(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '-' })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn concurrent_stems_are_distinct() {
        let dir = tempfile::tempdir().unwrap();
        let a = RunFiles::create(dir.path(), "sweep", "FRICTION_MU", "a").unwrap();
        let b = RunFiles::create(dir.path(), "sweep", "FRICTION_MU", "b").unwrap();
        assert_ne!(a.stem, b.stem);
        assert!(a.stem.starts_with("sweep_FRICTION-MU_"));
        assert_eq!(fs::read_to_string(a.path(".ini")).unwrap(), "a");
        assert_eq!(fs::read_to_string(b.path(".ini")).unwrap(), "b");
    }
}
