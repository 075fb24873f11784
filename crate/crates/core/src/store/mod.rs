//! Persistence: the binary trace format, experiment configuration, CSV
//! reports and model files.
//!
//! Every writer goes through [`write_atomic`]: bytes land in
//! `<path>.partial` and are renamed into place only once complete.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::detect::DetectError;
use crate::trace::TraceError;

mod config;
mod model;
mod report;
mod traces;

pub use config::{load_config, parse_config, AttackSettings, DetectorSettings, ExperimentConfig};
pub use model::{read_model, write_model, MODEL_FORMAT, MODEL_VERSION};
pub use report::{
    read_history, read_rank_curve, read_voltage_series, write_cpa_result, write_history,
    write_rank_curve, write_vdd_sweep, write_voltage_series, VoltageSeries,
};
pub use traces::{
    labels_path, meta_path, read_dataset, read_meta, read_traces, write_dataset, write_meta,
    write_traces, TraceFileHeader, TraceFileReader, TraceFileWriter, TraceMeta, DTYPE_F32, FLAG_CIPHERTEXTS,
    FLAG_LABELS, HEADER_LEN, MAGIC, VERSION,
};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("bad magic {found:?}, expected \"SCAT\"")]
    BadMagic { found: [u8; 4] },
    #[error("format version {found} is not supported (this build reads version {supported})")]
    VersionMismatch { found: u32, supported: u32 },
    #[error("unsupported sample dtype {0}")]
    UnsupportedDtype(u8),
    #[error("truncated file: header declares {expected} bytes, found {actual}")]
    TruncatedFile { expected: u64, actual: u64 },
    #[error("file has {actual} bytes but the header declares {expected}")]
    TrailingData { expected: u64, actual: u64 },
    #[error("dimension overflow: {0}")]
    DimensionOverflow(String),
    #[error("{}:{line}:{column}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid {field}: {reason}")]
    Range { field: String, reason: String },
    #[error("{}: {message}", path.display())]
    Csv { path: PathBuf, message: String },
    #[error("{}: expected {expected} format, found {found}", path.display())]
    Format {
        path: PathBuf,
        expected: String,
        found: String,
    },
    #[error("missing sidecar file {}", .0.display())]
    MissingSidecar(PathBuf),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Detect(#[from] DetectError),
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// `<path>.partial`
pub fn partial_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_os_string();
    s.push(".partial");
    PathBuf::from(s)
}

/// Writes through `<path>.partial` and renames on success. On failure the
/// partial file is left behind for inspection.
pub fn write_atomic<F>(path: &Path, body: F) -> Result<(), StoreError>
where
    F: FnOnce(&mut BufWriter<File>) -> Result<(), StoreError>,
{
    let tmp = partial_path(path);
    let file = File::create(&tmp).map_err(io_err(&tmp))?;
    let mut w = BufWriter::new(file);
    body(&mut w)?;
    w.flush().map_err(io_err(&tmp))?;
    w.into_inner()
        .map_err(|e| e.into_error())
        .and_then(|f| f.sync_all())
        .map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
    write_atomic(path, |w| w.write_all(bytes).map_err(io_err(path)))
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>, StoreError> {
    fs::read(path).map_err(io_err(path))
}

/// Pretty JSON plus a trailing newline.
pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), StoreError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| StoreError::Parse {
        path: path.to_path_buf(),
        line: 0,
        column: 0,
        message: e.to_string(),
    })?;
    text.push('\n');
    write_bytes(path, text.as_bytes())
}

pub(crate) fn json_err(path: &Path, e: serde_json::Error) -> StoreError {
    StoreError::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn failed_write_leaves_only_partial() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.bin");
        let err = write_atomic(&path, |w| {
            w.write_all(b"half").unwrap();
            Err(StoreError::DimensionOverflow("boom".into()))
        });
        assert!(err.is_err());
        assert!(!path.exists());
        assert!(partial_path(&path).exists());
        write_bytes(&path, b"whole").unwrap();
        assert_eq!(read_bytes(&path).unwrap(), b"whole");
        assert!(!partial_path(&path).exists());
    }
}
