//! The SCAT trace format.
//!
//! ```text
//! header   "SCAT" | version u32 | n_traces u32 | n_samples u32 | dtype u8 | flags u8 | 2 reserved
//! record   plaintext [16] | ciphertext [16] if flag bit 0 | n_samples × f32
//! ```
//!
//! All integers and samples are little-endian. Attack metadata (true key,
//! leak positions, sample rate) lives in `<path>.meta.json`; dataset labels
//! in `<path>.labels.csv`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{io_err, json_err, write_atomic, write_json, StoreError};
use crate::attack::{SourceError, TraceSource};
use crate::detect::{Dataset, Scenario};
use crate::leakage::LeakageModel;
use crate::trace::{default_leak_positions, TraceError, TraceSet, STATE_BYTES};

pub const MAGIC: [u8; 4] = *b"SCAT";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 20;
pub const DTYPE_F32: u8 = 0;
pub const FLAG_CIPHERTEXTS: u8 = 1;
pub const FLAG_LABELS: u8 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceFileHeader {
    pub version: u32,
    pub n_traces: u32,
    pub n_samples: u32,
    pub dtype: u8,
    pub flags: u8,
}

impl TraceFileHeader {
    pub fn encode(&self) -> [u8; HEADER_LEN] {
        let mut b = [0u8; HEADER_LEN];
        b[0..4].copy_from_slice(&MAGIC);
        b[4..8].copy_from_slice(&self.version.to_le_bytes());
        b[8..12].copy_from_slice(&self.n_traces.to_le_bytes());
        b[12..16].copy_from_slice(&self.n_samples.to_le_bytes());
        b[16] = self.dtype;
        b[17] = self.flags;
        b
    }

    pub fn decode(b: &[u8; HEADER_LEN]) -> Result<Self, StoreError> {
        let found: [u8; 4] = b[0..4].try_into().expect("4 bytes");
        if found != MAGIC {
            return Err(StoreError::BadMagic { found });
        }
        let u32_at = |i: usize| u32::from_le_bytes(b[i..i + 4].try_into().expect("4 bytes"));
        let h = Self {
            version: u32_at(4),
            n_traces: u32_at(8),
            n_samples: u32_at(12),
            dtype: b[16],
            flags: b[17],
        };
        if h.version != VERSION {
            return Err(StoreError::VersionMismatch {
                found: h.version,
                supported: VERSION,
            });
        }
        if h.dtype != DTYPE_F32 {
            return Err(StoreError::UnsupportedDtype(h.dtype));
        }
        Ok(h)
    }

    pub fn has_ciphertexts(&self) -> bool {
        self.flags & FLAG_CIPHERTEXTS != 0
    }

    pub fn has_labels(&self) -> bool {
        self.flags & FLAG_LABELS != 0
    }

    pub fn record_len(&self) -> u64 {
        let ct = if self.has_ciphertexts() { STATE_BYTES } else { 0 };
        (STATE_BYTES + ct) as u64 + 4 * self.n_samples as u64
    }

    /// Total file length the header promises.
    pub fn file_len(&self) -> Result<u64, StoreError> {
        self.record_len()
            .checked_mul(self.n_traces as u64)
            .and_then(|b| b.checked_add(HEADER_LEN as u64))
            .ok_or_else(|| StoreError::DimensionOverflow("declared file size exceeds u64".into()))
    }
}

fn to_u32(what: &str, v: usize) -> Result<u32, StoreError> {
    u32::try_from(v).map_err(|_| StoreError::DimensionOverflow(format!("{what}={v} exceeds u32")))
}

fn write_records(w: &mut impl Write, path: &Path, ts: &TraceSet) -> Result<(), StoreError> {
    let mut buf = Vec::with_capacity(4 * ts.n_samples());
    for (i, row) in ts.traces().enumerate() {
        buf.clear();
        buf.extend_from_slice(&ts.plaintexts()[i]);
        if let Some(ct) = ts.ciphertexts() {
            buf.extend_from_slice(&ct[i]);
        }
        for x in row {
            buf.extend_from_slice(&x.to_le_bytes());
        }
        w.write_all(&buf).map_err(io_err(path))?;
    }
    Ok(())
}

fn header_for(n_traces: usize, n_samples: usize, flags: u8) -> Result<TraceFileHeader, StoreError> {
    Ok(TraceFileHeader {
        version: VERSION,
        n_traces: to_u32("n_traces", n_traces)?,
        n_samples: to_u32("n_samples", n_samples)?,
        dtype: DTYPE_F32,
        flags,
    })
}

fn write_body(w: &mut impl Write, path: &Path, ts: &TraceSet, flags: u8) -> Result<(), StoreError> {
    let header = header_for(ts.n_traces(), ts.n_samples(), flags)?;
    w.write_all(&header.encode()).map_err(io_err(path))?;
    write_records(w, path, ts)
}

pub fn write_traces(path: &Path, ts: &TraceSet) -> Result<(), StoreError> {
    let flags = if ts.ciphertexts().is_some() { FLAG_CIPHERTEXTS } else { 0 };
    write_atomic(path, |w| write_body(w, path, ts, flags))
}

/// Appends batches to `<path>.partial`; [`TraceFileWriter::finish`] fixes up
/// the trace count and renames the file into place.
pub struct TraceFileWriter {
    path: PathBuf,
    tmp: PathBuf,
    w: BufWriter<File>,
    n_samples: usize,
    flags: u8,
    n_traces: usize,
}

impl TraceFileWriter {
    pub fn create(path: &Path, n_samples: usize, with_ciphertexts: bool) -> Result<Self, StoreError> {
        let tmp = super::partial_path(path);
        let flags = if with_ciphertexts { FLAG_CIPHERTEXTS } else { 0 };
        let file = File::create(&tmp).map_err(io_err(&tmp))?;
        let mut w = BufWriter::new(file);
        w.write_all(&header_for(0, n_samples, flags)?.encode())
            .map_err(io_err(&tmp))?;
        Ok(Self {
            path: path.to_path_buf(),
            tmp,
            w,
            n_samples,
            flags,
            n_traces: 0,
        })
    }

    pub fn append(&mut self, ts: &TraceSet) -> Result<(), StoreError> {
        if ts.n_samples() != self.n_samples {
            return Err(TraceError::ShapeMismatch {
                expected: self.n_samples,
                actual: ts.n_samples(),
            }
            .into());
        }
        if ts.ciphertexts().is_some() != (self.flags & FLAG_CIPHERTEXTS != 0) {
            return Err(TraceError::MetadataLength {
                what: "ciphertexts",
                expected: self.n_traces + ts.n_traces(),
                actual: 0,
            }
            .into());
        }
        to_u32("n_traces", self.n_traces + ts.n_traces())?;
        write_records(&mut self.w, &self.tmp, ts)?;
        self.n_traces += ts.n_traces();
        Ok(())
    }

    /// Number of traces written.
    pub fn finish(mut self) -> Result<usize, StoreError> {
        let header = header_for(self.n_traces, self.n_samples, self.flags)?;
        let io = io_err(&self.tmp);
        self.w.seek(SeekFrom::Start(0)).map_err(io)?;
        self.w.write_all(&header.encode()).map_err(io_err(&self.tmp))?;
        let file = self
            .w
            .into_inner()
            .map_err(|e| io_err(&self.tmp)(e.into_error()))?;
        file.sync_all().map_err(io_err(&self.tmp))?;
        std::fs::rename(&self.tmp, &self.path).map_err(io_err(&self.path))?;
        Ok(self.n_traces)
    }
}

/// Streams records from a SCAT file. The header and the file length are
/// checked up front, so a truncated file fails before any trace is served.
pub struct TraceFileReader {
    path: PathBuf,
    reader: BufReader<File>,
    header: TraceFileHeader,
    leak_positions: [usize; STATE_BYTES],
    next: u32,
}

impl TraceFileReader {
    pub fn open(path: &Path) -> Result<Self, StoreError> {
        let file = File::open(path).map_err(io_err(path))?;
        let actual = file.metadata().map_err(io_err(path))?.len();
        let mut reader = BufReader::new(file);
        let mut hb = [0u8; HEADER_LEN];
        if actual < HEADER_LEN as u64 {
            return Err(StoreError::TruncatedFile {
                expected: HEADER_LEN as u64,
                actual,
            });
        }
        reader.read_exact(&mut hb).map_err(io_err(path))?;
        let header = TraceFileHeader::decode(&hb)?;
        let expected = header.file_len()?;
        if actual < expected {
            return Err(StoreError::TruncatedFile { expected, actual });
        }
        if actual > expected {
            return Err(StoreError::TrailingData { expected, actual });
        }
        let ns = header.n_samples as usize;
        let leak_positions = match read_meta(path)? {
            Some(m) => m.leak_positions,
            None => default_leak_positions(ns)?,
        };
        Ok(Self {
            path: path.to_path_buf(),
            reader,
            header,
            leak_positions,
            next: 0,
        })
    }

    pub fn header(&self) -> &TraceFileHeader {
        &self.header
    }

    pub fn remaining(&self) -> usize {
        (self.header.n_traces - self.next) as usize
    }

    /// Up to `count` further traces; an empty set once exhausted.
    pub fn read_batch(&mut self, count: usize) -> Result<TraceSet, StoreError> {
        let count = count.min(self.remaining());
        let ns = self.header.n_samples as usize;
        let with_ct = self.header.has_ciphertexts();
        let mut samples = Vec::with_capacity(count * ns);
        let mut pts = Vec::with_capacity(count);
        let mut cts = Vec::with_capacity(if with_ct { count } else { 0 });
        let mut raw = vec![0u8; 4 * ns];
        let reader = &mut self.reader;
        let mut fill = || -> std::io::Result<()> {
            for _ in 0..count {
                let mut pt = [0u8; STATE_BYTES];
                reader.read_exact(&mut pt)?;
                pts.push(pt);
                if with_ct {
                    let mut ct = [0u8; STATE_BYTES];
                    reader.read_exact(&mut ct)?;
                    cts.push(ct);
                }
                reader.read_exact(&mut raw)?;
                samples.extend(
                    raw.chunks_exact(4)
                        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))),
                );
            }
            Ok(())
        };
        fill().map_err(io_err(&self.path))?;
        self.next += count as u32;
        Ok(TraceSet::new(
            ns,
            samples,
            pts,
            with_ct.then_some(cts),
            self.leak_positions,
        )?)
    }
}

impl TraceSource for TraceFileReader {
    fn n_samples(&self) -> usize {
        self.header.n_samples as usize
    }

    fn next_batch(&mut self, count: usize) -> Result<TraceSet, SourceError> {
        Ok(self.read_batch(count)?)
    }
}

pub fn read_traces(path: &Path) -> Result<TraceSet, StoreError> {
    let mut r = TraceFileReader::open(path)?;
    let n = r.remaining();
    r.read_batch(n)
}

fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_os_string();
    s.push(suffix);
    PathBuf::from(s)
}

pub fn meta_path(path: &Path) -> PathBuf {
    sidecar(path, ".meta.json")
}

pub fn labels_path(path: &Path) -> PathBuf {
    sidecar(path, ".labels.csv")
}

/// Facts about a trace file that the binary layout does not carry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceMeta {
    /// Round key as hex, when the simulation knows it.
    #[serde(default)]
    pub key: Option<String>,
    pub leak_positions: [usize; STATE_BYTES],
    #[serde(default)]
    pub model: Option<LeakageModel>,
    #[serde(default)]
    pub sample_rate: Option<f64>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub countermeasures: Vec<String>,
}

impl TraceMeta {
    pub fn round_key(&self) -> Result<Option<[u8; STATE_BYTES]>, StoreError> {
        let Some(k) = &self.key else { return Ok(None) };
        let bytes = hex::decode(k).map_err(|e| StoreError::Range {
            field: "key".into(),
            reason: e.to_string(),
        })?;
        if bytes.len() < STATE_BYTES {
            return Err(StoreError::Range {
                field: "key".into(),
                reason: format!("need at least {STATE_BYTES} bytes, got {}", bytes.len()),
            });
        }
        Ok(Some(bytes[..STATE_BYTES].try_into().expect("16 bytes")))
    }
}

pub fn write_meta(path: &Path, meta: &TraceMeta) -> Result<(), StoreError> {
    write_json(&meta_path(path), meta)
}

/// Sidecar metadata for the trace file at `path`, if present.
pub fn read_meta(path: &Path) -> Result<Option<TraceMeta>, StoreError> {
    let mp = meta_path(path);
    let text = match std::fs::read_to_string(&mp) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
        Err(e) => return Err(io_err(&mp)(e)),
    };
    serde_json::from_str(&text).map(Some).map_err(|e| json_err(&mp, e))
}

/// Sensor dataset as a SCAT file (zero plaintexts, label flag set), labels
/// in the CSV sidecar and the sample rate in the JSON sidecar.
pub fn write_dataset(path: &Path, data: &Dataset) -> Result<(), StoreError> {
    let ns = data.n_samples;
    let samples: Vec<f32> = data.samples.iter().map(|&x| x as f32).collect();
    let ts = TraceSet::new(
        ns,
        samples,
        vec![[0u8; STATE_BYTES]; data.len()],
        None,
        default_leak_positions(ns)?,
    )?;
    let lp = labels_path(path);
    write_atomic(&lp, |w| {
        let mut c = csv::Writer::from_writer(w);
        let csv_err = |e: csv::Error| StoreError::Csv {
            path: lp.clone(),
            message: e.to_string(),
        };
        c.write_record(["index", "label"]).map_err(csv_err)?;
        for (i, l) in data.labels.iter().enumerate() {
            c.write_record([i.to_string().as_str(), l.name()]).map_err(csv_err)?;
        }
        c.flush().map_err(io_err(&lp))
    })?;
    write_meta(
        path,
        &TraceMeta {
            key: None,
            leak_positions: *ts.leak_positions(),
            model: None,
            sample_rate: Some(data.sample_rate),
            seed: None,
            countermeasures: Vec::new(),
        },
    )?;
    write_atomic(path, |w| write_body(w, path, &ts, FLAG_LABELS))
}

pub fn read_dataset(path: &Path) -> Result<Dataset, StoreError> {
    let ts = read_traces(path)?;
    let lp = labels_path(path);
    if !lp.exists() {
        return Err(StoreError::MissingSidecar(lp));
    }
    let csv_err = |e: csv::Error| StoreError::Csv {
        path: lp.clone(),
        message: e.to_string(),
    };
    let mut rdr = csv::Reader::from_path(&lp).map_err(csv_err)?;
    let mut labels = Vec::with_capacity(ts.n_traces());
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let bad = |reason: String| StoreError::Csv {
            path: lp.clone(),
            message: format!("row {}: {reason}", i + 1),
        };
        let idx: usize = rec
            .get(0)
            .unwrap_or("")
            .parse()
            .map_err(|_| bad("index is not an integer".into()))?;
        if idx != i {
            return Err(bad(format!("expected index {i}, found {idx}")));
        }
        let label: Scenario = rec
            .get(1)
            .unwrap_or("")
            .parse()
            .map_err(|e: crate::detect::DetectError| bad(e.to_string()))?;
        labels.push(label);
    }
    if labels.len() != ts.n_traces() {
        return Err(StoreError::Csv {
            path: lp,
            message: format!("{} labels for {} traces", labels.len(), ts.n_traces()),
        });
    }
    let sample_rate = read_meta(path)?
        .and_then(|m| m.sample_rate)
        .unwrap_or(crate::detect::SensorParams::default().sample_rate);
    let samples = ts.samples().iter().map(|&x| x as f64).collect();
    Ok(Dataset::new(ts.n_samples(), samples, labels, sample_rate)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detect::{generate_dataset, SensorParams};

    fn sample_set(with_ct: bool) -> TraceSet {
        let ns = 20;
        let n = 5;
        let samples: Vec<f32> = (0..n * ns).map(|i| (i as f32 * 0.37).sin() * 1e3).collect();
        let pts: Vec<[u8; 16]> = (0..n).map(|i| [i as u8; 16]).collect();
        let cts = with_ct.then(|| (0..n).map(|i| [0xA0 | i as u8; 16]).collect());
        TraceSet::new(ns, samples, pts, cts, default_leak_positions(ns).unwrap()).unwrap()
    }

    #[test]
    fn roundtrip_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        for with_ct in [false, true] {
            let p = dir.path().join(format!("t{with_ct}.scat"));
            let ts = sample_set(with_ct);
            write_traces(&p, &ts).unwrap();
            let back = read_traces(&p).unwrap();
            assert_eq!(back, ts);
            let bits = |t: &TraceSet| t.samples().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&back), bits(&ts));
            let len = std::fs::metadata(&p).unwrap().len();
            let rec = 16 + if with_ct { 16 } else { 0 } + 4 * 20;
            assert_eq!(len, 20 + 5 * rec);
        }
    }

    #[test]
    fn header_layout() {
        let h = TraceFileHeader {
            version: 1,
            n_traces: 0x0102_0304,
            n_samples: 7,
            dtype: 0,
            flags: 3,
        };
        let b = h.encode();
        assert_eq!(&b[..4], b"SCAT");
        assert_eq!(b[4..8], [1, 0, 0, 0]);
        assert_eq!(b[8..12], [4, 3, 2, 1]);
        assert_eq!(b[12..16], [7, 0, 0, 0]);
        assert_eq!(b[16..], [0, 3, 0, 0]);
        assert_eq!(TraceFileHeader::decode(&b).unwrap(), h);
    }

    #[test]
    fn truncated_and_bad_headers() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.scat");
        write_traces(&p, &sample_set(false)).unwrap();
        let bytes = std::fs::read(&p).unwrap();

        std::fs::write(&p, &bytes[..bytes.len() - 50]).unwrap();
        assert!(matches!(read_traces(&p), Err(StoreError::TruncatedFile { .. })));
        std::fs::write(&p, &bytes[..10]).unwrap();
        assert!(matches!(read_traces(&p), Err(StoreError::TruncatedFile { .. })));

        let mut bad = bytes.clone();
        bad[..4].copy_from_slice(b"XXXX");
        std::fs::write(&p, &bad).unwrap();
        assert!(matches!(read_traces(&p), Err(StoreError::BadMagic { .. })));

        let mut newer = bytes.clone();
        newer[4] = 2;
        std::fs::write(&p, &newer).unwrap();
        assert!(matches!(
            read_traces(&p),
            Err(StoreError::VersionMismatch { found: 2, .. })
        ));

        let mut longer = bytes.clone();
        longer.push(0);
        std::fs::write(&p, &longer).unwrap();
        assert!(matches!(read_traces(&p), Err(StoreError::TrailingData { .. })));

        let mut huge = bytes;
        huge[8..12].copy_from_slice(&u32::MAX.to_le_bytes());
        huge[12..16].copy_from_slice(&u32::MAX.to_le_bytes());
        std::fs::write(&p, &huge).unwrap();
        assert!(matches!(read_traces(&p), Err(StoreError::DimensionOverflow(_))));
    }

    #[test]
    fn batched_reads_match_whole() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.scat");
        let ts = sample_set(true);
        write_traces(&p, &ts).unwrap();
        let mut r = TraceFileReader::open(&p).unwrap();
        let mut acc = TraceSet::empty(20, *ts.leak_positions()).unwrap();
        for n in [2, 2, 7] {
            acc.append(&r.read_batch(n).unwrap()).unwrap();
        }
        assert_eq!(r.read_batch(3).unwrap().n_traces(), 0);
        assert_eq!(acc.samples(), ts.samples());
        assert_eq!(acc.plaintexts(), ts.plaintexts());
    }

    #[test]
    fn streaming_writer_matches_one_shot() {
        let dir = tempfile::tempdir().unwrap();
        let ts = sample_set(true);
        let a = dir.path().join("a.scat");
        let b = dir.path().join("b.scat");
        write_traces(&a, &ts).unwrap();
        let mut w = TraceFileWriter::create(&b, 20, true).unwrap();
        assert!(crate::store::partial_path(&b).exists());
        w.append(&ts.slice(0, 2)).unwrap();
        w.append(&ts.slice(2, 5)).unwrap();
        assert!(w.append(&sample_set(false)).is_err());
        assert_eq!(w.finish().unwrap(), 5);
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
        assert!(!crate::store::partial_path(&b).exists());
    }

    #[test]
    fn meta_sidecar_supplies_leak_positions_and_key() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.scat");
        let ts = sample_set(false);
        let lp: [usize; 16] = std::array::from_fn(|i| i + 2);
        let ts = TraceSet::new(20, ts.samples().to_vec(), ts.plaintexts().to_vec(), None, lp).unwrap();
        write_traces(&p, &ts).unwrap();
        assert!(read_meta(&p).unwrap().is_none());
        let meta = TraceMeta {
            key: Some("00112233445566778899aabbccddeeff".into()),
            leak_positions: lp,
            model: Some(LeakageModel::HammingWeight),
            sample_rate: None,
            seed: Some(3),
            countermeasures: vec!["dsac".into()],
        };
        write_meta(&p, &meta).unwrap();
        assert_eq!(read_meta(&p).unwrap().unwrap(), meta);
        assert_eq!(read_traces(&p).unwrap(), ts);
        assert_eq!(meta.round_key().unwrap().unwrap()[15], 0xff);
    }

    #[test]
    fn dataset_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.scat");
        let data = generate_dataset(12, 40, &SensorParams::default(), 5).unwrap();
        write_dataset(&p, &data).unwrap();
        let back = read_dataset(&p).unwrap();
        assert_eq!(back.labels, data.labels);
        assert_eq!(back.sample_rate, data.sample_rate);
        for (a, b) in back.samples.iter().zip(&data.samples) {
            assert_eq!(*a, *b as f32 as f64);
        }
        assert!(TraceFileReader::open(&p).unwrap().header().has_labels());
        std::fs::remove_file(labels_path(&p)).unwrap();
        assert!(matches!(read_dataset(&p), Err(StoreError::MissingSidecar(_))));
    }
}
