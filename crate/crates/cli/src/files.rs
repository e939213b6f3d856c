use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use tempfile::NamedTempFile;

use crate::Failure;

pub fn open(path: &Path) -> Result<BufReader<File>, Failure> {
    File::open(path).map(BufReader::new).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

/// Prefixes a data error with the file it came from.
pub fn in_file<T>(path: &Path, r: starjitter::Result<T>) -> Result<T, Failure> {
    r.map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

/// Output directory; every file is written to a temporary sibling first and
/// renamed into place, so readers never see a partial file.
pub struct OutDir {
    dir: PathBuf,
}

impl OutDir {
    pub fn create(dir: &Path) -> Result<Self, Failure> {
        std::fs::create_dir_all(dir).map_err(|e| Failure::Data(format!("cannot create {}: {e}", dir.display())))?;
        Ok(Self { dir: dir.to_path_buf() })
    }

    pub fn write<F>(&self, name: &str, fill: F) -> Result<PathBuf, Failure>
    where
        F: FnOnce(&mut dyn Write) -> starjitter::Result<()>,
    {
        let target = self.dir.join(name);
        let io = |e: std::io::Error| Failure::Data(format!("{}: {e}", target.display()));
        let tmp = NamedTempFile::new_in(&self.dir).map_err(io)?;
        let mut w = BufWriter::new(tmp);
        in_file(&target, fill(&mut w))?;
        let tmp = w.into_inner().map_err(|e| io(e.into_error()))?;
        tmp.persist(&target).map_err(|e| io(e.error))?;
        Ok(target)
    }

    pub fn write_bytes(&self, name: &str, bytes: &[u8]) -> Result<PathBuf, Failure> {
        self.write(name, |w| Ok(w.write_all(bytes)?))
    }

    pub fn write_json<T: serde::Serialize>(&self, name: &str, value: &T) -> Result<PathBuf, Failure> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| Failure::Data(e.to_string()))?;
        text.push('\n');
        self.write_bytes(name, text.as_bytes())
    }
}
