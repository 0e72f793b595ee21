//! Subject containers and dataset directories.
//!
//! Binary container layout (all integers little-endian):
//!
//! ```text
//! offset  size  field
//! 0       8     magic "MMALSUBJ"
//! 8       4     format version (u32, currently 1)
//! 12      8     header length H (u64)
//! 20      H     UTF-8 JSON header
//! 20+H    ...   feature blocks, f64 little-endian
//! ```
//!
//! The header carries the subject id, step count, modality names and dims,
//! the label map and an index with one entry per window: its index, label
//! and the byte offset of its block relative to the end of the header. A
//! block holds each modality's `seq_len × dim` matrix in row-major order,
//! modalities in schema order.
//!
//! The JSON-lines variant writes the same header (without the index) on the
//! first line and one window object per following line.
//!
//! A dataset directory holds `manifest.json` (schema plus the train and test
//! file lists) and one container per subject.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Dataset, Modality, MultiModalWindow, Schema, SubjectId, SubjectSession};
use crate::error::{Error, Result};
use crate::numerics::Matrix;

const MAGIC: &[u8; 8] = b"MMALSUBJ";
const VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetFormat {
    Binary,
    Jsonl,
}

impl DatasetFormat {
    fn extension(self) -> &'static str {
        match self {
            DatasetFormat::Binary => "mmds",
            DatasetFormat::Jsonl => "jsonl",
        }
    }
}

#[derive(Serialize, Deserialize)]
struct IndexEntry {
    index: usize,
    label: Option<usize>,
    offset: u64,
}

#[derive(Serialize, Deserialize)]
struct Header {
    subject: SubjectId,
    seq_len: usize,
    modalities: Vec<Modality>,
    labels: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    windows: Vec<IndexEntry>,
}

fn bad(what: &'static str, detail: impl Into<String>) -> Error {
    Error::Format {
        what,
        detail: detail.into(),
    }
}

fn block_len(schema: &Schema) -> u64 {
    (schema.seq_len * schema.total_dim() * 8) as u64
}

pub fn write_subject(path: &Path, session: &SubjectSession, schema: &Schema) -> Result<()> {
    session.validate(schema)?;
    let block = block_len(schema);
    let header = Header {
        subject: session.subject,
        seq_len: schema.seq_len,
        modalities: schema.modalities.clone(),
        labels: schema.labels.clone(),
        windows: session
            .windows
            .iter()
            .enumerate()
            .map(|(i, w)| IndexEntry {
                index: w.index,
                label: w.label,
                offset: i as u64 * block,
            })
            .collect(),
    };
    let header = serde_json::to_vec(&header)?;
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&(header.len() as u64).to_le_bytes())?;
    out.write_all(&header)?;
    for w in &session.windows {
        for x in &w.features {
            for v in x.data() {
                out.write_all(&v.to_le_bytes())?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

pub fn read_subject(path: &Path) -> Result<(SubjectSession, Schema)> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 20 || &bytes[..8] != MAGIC {
        return Err(bad("subject container", "missing magic"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(bad("subject container", format!("unsupported version {version}")));
    }
    let header_len = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
    let body_start = 20usize
        .checked_add(header_len)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| bad("subject container", "header runs past end of file"))?;
    let header: Header = serde_json::from_slice(&bytes[20..body_start])?;
    let schema = Schema {
        seq_len: header.seq_len,
        modalities: header.modalities,
        labels: header.labels,
    };
    schema.validate()?;
    let body = &bytes[body_start..];
    let block = block_len(&schema) as usize;

    let mut windows = Vec::with_capacity(header.windows.len());
    for entry in &header.windows {
        let start = entry.offset as usize;
        let Some(chunk) = body.get(start..start + block) else {
            return Err(bad("subject container", format!("window {} out of bounds", entry.index)));
        };
        let mut values = chunk
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")));
        let features = schema
            .modalities
            .iter()
            .map(|m| {
                let data: Vec<f64> = values.by_ref().take(schema.seq_len * m.dim).collect();
                Matrix::from_vec(schema.seq_len, m.dim, data)
            })
            .collect::<Result<Vec<_>>>()?;
        windows.push(MultiModalWindow {
            subject: header.subject,
            index: entry.index,
            label: entry.label,
            features,
        });
    }
    let session = SubjectSession {
        subject: header.subject,
        windows,
    };
    session.validate(&schema)?;
    Ok((session, schema))
}

#[derive(Serialize, Deserialize)]
struct JsonWindow {
    index: usize,
    label: Option<usize>,
    /// `[modality][step][feature]`
    features: Vec<Vec<Vec<f64>>>,
}

pub fn write_subject_jsonl(path: &Path, session: &SubjectSession, schema: &Schema) -> Result<()> {
    session.validate(schema)?;
    let mut out = BufWriter::new(File::create(path)?);
    let header = Header {
        subject: session.subject,
        seq_len: schema.seq_len,
        modalities: schema.modalities.clone(),
        labels: schema.labels.clone(),
        windows: Vec::new(),
    };
    serde_json::to_writer(&mut out, &header)?;
    out.write_all(b"\n")?;
    for w in &session.windows {
        let row = JsonWindow {
            index: w.index,
            label: w.label,
            features: w
                .features
                .iter()
                .map(|x| (0..x.rows()).map(|t| x.row(t).to_vec()).collect())
                .collect(),
        };
        serde_json::to_writer(&mut out, &row)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_subject_jsonl(path: &Path) -> Result<(SubjectSession, Schema)> {
    let mut lines = BufReader::new(File::open(path)?).lines();
    let first = lines
        .next()
        .ok_or_else(|| bad("jsonl subject", "empty file"))??;
    let header: Header = serde_json::from_str(&first)?;
    let schema = Schema {
        seq_len: header.seq_len,
        modalities: header.modalities,
        labels: header.labels,
    };
    schema.validate()?;
    let mut windows = Vec::new();
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row: JsonWindow = serde_json::from_str(&line)?;
        let features = row
            .features
            .into_iter()
            .map(|steps| {
                let cols = steps.first().map_or(0, Vec::len);
                let rows = steps.len();
                Matrix::from_vec(rows, cols, steps.into_iter().flatten().collect())
            })
            .collect::<Result<Vec<_>>>()?;
        windows.push(MultiModalWindow {
            subject: header.subject,
            index: row.index,
            label: row.label,
            features,
        });
    }
    let session = SubjectSession {
        subject: header.subject,
        windows,
    };
    session.validate(&schema)?;
    Ok((session, schema))
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    schema: Schema,
    format: DatasetFormat,
    train: Vec<String>,
    test: Vec<String>,
}

pub fn save_dataset(dir: &Path, dataset: &Dataset, format: DatasetFormat) -> Result<()> {
    dataset.validate()?;
    fs::create_dir_all(dir)?;
    let write_all = |sessions: &[SubjectSession], split: &str| -> Result<Vec<String>> {
        sessions
            .iter()
            .map(|s| {
                let name = format!("{split}_subject_{:04}.{}", s.subject, format.extension());
                let path = dir.join(&name);
                match format {
                    DatasetFormat::Binary => write_subject(&path, s, &dataset.schema)?,
                    DatasetFormat::Jsonl => write_subject_jsonl(&path, s, &dataset.schema)?,
                }
                Ok(name)
            })
            .collect()
    };
    let manifest = Manifest {
        schema: dataset.schema.clone(),
        format,
        train: write_all(&dataset.train, "train")?,
        test: write_all(&dataset.test, "test")?,
    };
    fs::write(dir.join("manifest.json"), serde_json::to_vec_pretty(&manifest)?)?;
    Ok(())
}

pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let manifest: Manifest = serde_json::from_slice(&fs::read(dir.join("manifest.json"))?)?;
    let read = |name: &String| -> Result<SubjectSession> {
        let path = dir.join(name);
        let (session, schema) = match manifest.format {
            DatasetFormat::Binary => read_subject(&path)?,
            DatasetFormat::Jsonl => read_subject_jsonl(&path)?,
        };
        if schema != manifest.schema {
            return Err(bad("dataset", format!("{name} disagrees with the manifest schema")));
        }
        Ok(session)
    };
    let dataset = Dataset {
        schema: manifest.schema.clone(),
        train: manifest.train.iter().map(read).collect::<Result<_>>()?,
        test: manifest.test.iter().map(read).collect::<Result<_>>()?,
    };
    dataset.validate()?;
    Ok(dataset)
}
