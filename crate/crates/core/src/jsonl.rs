//! JSON-Lines helpers shared by the pipeline stages.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum JsonlError {
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("{path} line {line}: {source}")]
    Parse {
        path: String,
        line: usize,
        source: serde_json::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> JsonlError + '_ {
    move |source| JsonlError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Reads every non-blank line of `path` as one `T`.
pub fn read<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, JsonlError> {
    let f = File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line).map_err(|source| JsonlError::Parse {
                path: path.display().to_string(),
                line: i + 1,
                source,
            })?,
        );
    }
    Ok(out)
}

/// Like [`read`] but a missing file yields an empty list.
pub fn read_if_exists<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, JsonlError> {
    if path.exists() {
        read(path)
    } else {
        Ok(Vec::new())
    }
}

pub fn write_to<T: Serialize, W: Write>(mut w: W, items: &[T]) -> io::Result<()> {
    for it in items {
        serde_json::to_writer(&mut w, it)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

/// Writes `items` to `path`, replacing any existing file.
pub fn write<T: Serialize>(path: &Path, items: &[T]) -> Result<(), JsonlError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io_err(path))?;
    }
    let f = File::create(path).map_err(io_err(path))?;
    write_to(BufWriter::new(f), items).map_err(io_err(path))
}

/// Appends one record and flushes, for journals that must survive a crash.
pub fn append<T: Serialize>(path: &Path, item: &T) -> Result<(), JsonlError> {
    let mut f = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(io_err(path))?;
    let mut line = serde_json::to_vec(item).map_err(|e| io_err(path)(e.into()))?;
    line.push(b'\n');
    f.write_all(&line).map_err(io_err(path))
}
