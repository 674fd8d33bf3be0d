//! Dataset files and report emission.
//!
//! Two embedding formats are supported:
//!
//! * CSV with header `label,f0,f1,...,f{d-1}` and one sample per row; values are
//!   written with 17 significant digits so they parse back to the same `f64`.
//! * `fdg-bin`: the bytes `FDGB`, a version byte `0x01`, little-endian `u32` d,
//!   `u64` N, N little-endian `u32` labels, then `d * N` little-endian `f64`
//!   values, sample by sample.
//!
//! Every writer goes through a temporary file in the destination directory that
//! is renamed into place once complete.

use std::fs::File;
use std::io::{BufReader, Cursor, Read, Write};
use std::path::{Path, PathBuf};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};

use crate::dataset::EmbeddingSet;
use crate::error::{FdgError, Result};
use crate::linalg::SampleMatrix;
use crate::synth::ExperimentReport;
use crate::ClassId;

pub const MAGIC: &[u8; 4] = b"FDGB";
pub const VERSION: u8 = 0x01;
const HEADER_LEN: usize = 4 + 1 + 4 + 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    Csv,
    FdgBin,
}

impl Format {
    /// `.csv` is CSV; `.fdgb` and `.bin` are fdg-bin.
    pub fn from_path(path: &Path) -> Result<Format> {
        match path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase())
            .as_deref()
        {
            Some("csv") => Ok(Format::Csv),
            Some("fdgb") | Some("bin") => Ok(Format::FdgBin),
            _ => Err(FdgError::UnknownFormat(path.to_path_buf())),
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::FdgBin => "fdgb",
        }
    }
}

pub fn read_embeddings(path: &Path) -> Result<EmbeddingSet> {
    let format = Format::from_path(path)?;
    let file = File::open(path)?;
    match format {
        Format::Csv => read_csv(BufReader::new(file)),
        Format::FdgBin => {
            let mut bytes = Vec::new();
            BufReader::new(file).read_to_end(&mut bytes)?;
            decode_bin(&bytes)
        }
    }
}

pub fn write_embeddings(set: &EmbeddingSet, path: &Path, format: Format) -> Result<()> {
    let bytes = match format {
        Format::Csv => {
            let mut buf = Vec::new();
            write_csv(set, &mut buf)?;
            buf
        }
        Format::FdgBin => encode_bin(set),
    };
    write_atomic(path, &bytes)
}

pub fn read_csv<R: Read>(reader: R) -> Result<EmbeddingSet> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| FdgError::MalformedHeader(e.to_string()))?
        .clone();
    let dim = check_header(&headers)?;

    let mut labels = Vec::new();
    let mut data = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            FdgError::MalformedRecord {
                line,
                reason: e.to_string(),
            }
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let bad = |reason: String| FdgError::MalformedRecord { line, reason };
        if record.len() != dim + 1 {
            return Err(bad(format!("expected {} fields, found {}", dim + 1, record.len())));
        }
        let label: ClassId = record[0]
            .parse()
            .map_err(|e| bad(format!("label {:?}: {e}", &record[0])))?;
        labels.push(label);
        for field in record.iter().skip(1) {
            let v: f64 = field
                .parse()
                .map_err(|e| bad(format!("value {field:?}: {e}")))?;
            data.push(v);
        }
    }
    if labels.is_empty() {
        return Err(FdgError::TruncatedFile("no samples".into()));
    }
    let n = labels.len();
    EmbeddingSet::new(labels, SampleMatrix::from_sample_major(dim, n, data)?)
}

fn check_header(headers: &csv::StringRecord) -> Result<usize> {
    if headers.is_empty() || &headers[0] != "label" {
        return Err(FdgError::MalformedHeader(
            "first column must be `label`".into(),
        ));
    }
    let dim = headers.len() - 1;
    if dim == 0 {
        return Err(FdgError::MalformedHeader("no feature columns".into()));
    }
    for (i, h) in headers.iter().skip(1).enumerate() {
        if h != format!("f{i}") {
            return Err(FdgError::MalformedHeader(format!(
                "column {} is {h:?}, expected \"f{i}\"",
                i + 1
            )));
        }
    }
    Ok(dim)
}

pub fn write_csv<W: Write>(set: &EmbeddingSet, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["label".to_string()];
    header.extend((0..set.dim()).map(|i| format!("f{i}")));
    w.write_record(&header).map_err(csv_io)?;
    let mut row = Vec::with_capacity(set.dim() + 1);
    for (x, label) in set.samples().columns().zip(set.labels()) {
        row.clear();
        row.push(label.to_string());
        row.extend(x.iter().map(|v| format!("{v:.16e}")));
        w.write_record(&row).map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_io(e: csv::Error) -> FdgError {
    FdgError::Io(std::io::Error::other(e))
}

pub fn encode_bin(set: &EmbeddingSet) -> Vec<u8> {
    let n = set.len();
    let d = set.dim();
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * n + 8 * d * n);
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.write_u32::<LittleEndian>(d as u32).expect("vec write");
    out.write_u64::<LittleEndian>(n as u64).expect("vec write");
    for &l in set.labels() {
        out.write_u32::<LittleEndian>(l).expect("vec write");
    }
    for &v in set.samples().as_slice() {
        out.write_f64::<LittleEndian>(v).expect("vec write");
    }
    out
}

pub fn decode_bin(bytes: &[u8]) -> Result<EmbeddingSet> {
    if bytes.len() < 5 {
        if bytes.len() < 4 || &bytes[..4] == MAGIC {
            return Err(FdgError::TruncatedFile(format!(
                "{} bytes cannot hold a header",
                bytes.len()
            )));
        }
        return Err(FdgError::BadMagic);
    }
    if &bytes[..4] != MAGIC || bytes[4] != VERSION {
        return Err(FdgError::BadMagic);
    }
    if bytes.len() < HEADER_LEN {
        return Err(FdgError::TruncatedFile("incomplete header".into()));
    }
    let mut cur = Cursor::new(&bytes[5..]);
    let d = cur.read_u32::<LittleEndian>()? as usize;
    let n = cur.read_u64::<LittleEndian>()? as usize;
    if n == 0 {
        return Err(FdgError::TruncatedFile("sample count is zero".into()));
    }
    if d == 0 {
        return Err(FdgError::InvalidShape("dimension is zero".into()));
    }
    let expected = n
        .checked_mul(4)
        .and_then(|l| d.checked_mul(n)?.checked_mul(8)?.checked_add(l))
        .and_then(|p| p.checked_add(HEADER_LEN))
        .ok_or_else(|| FdgError::TruncatedFile(format!("{d}x{n} payload overflows")))?;
    match bytes.len().cmp(&expected) {
        std::cmp::Ordering::Less => {
            let have_labels = (bytes.len() - HEADER_LEN) / 4;
            if have_labels < n {
                return Err(FdgError::TruncatedFile(format!(
                    "{have_labels} of {n} labels present"
                )));
            }
            return Err(FdgError::TruncatedFile(format!(
                "expected {expected} bytes, found {}",
                bytes.len()
            )));
        }
        std::cmp::Ordering::Greater => {
            return Err(FdgError::InvalidShape(format!(
                "{} trailing bytes after payload",
                bytes.len() - expected
            )));
        }
        std::cmp::Ordering::Equal => {}
    }
    let mut labels = vec![0u32; n];
    cur.read_u32_into::<LittleEndian>(&mut labels)?;
    let mut data = vec![0f64; d * n];
    cur.read_f64_into::<LittleEndian>(&mut data)?;
    EmbeddingSet::new(labels, SampleMatrix::from_sample_major(d, n, data)?)
}

/// Writes `bytes` to a temporary sibling of `path`, then renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(&dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| FdgError::Io(e.error))?;
    Ok(())
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

/// `regime,seed,fdg_tail,balanced_accuracy` rows.
pub fn write_experiment_csv(report: &ExperimentReport, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(["regime", "seed", "fdg_tail", "balanced_accuracy"])
            .map_err(csv_io)?;
        for r in report.rows() {
            w.write_record([
                r.regime.as_str().to_string(),
                r.seed.to_string(),
                format!("{:.16e}", r.fdg_tail),
                format!("{:.16e}", r.balanced_accuracy),
            ])
            .map_err(csv_io)?;
        }
        w.flush()?;
    }
    write_atomic(path, &buf)
}
