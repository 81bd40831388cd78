//! Dataset manifests: UTF-8, one record per line, three tab-separated
//! fields (relative image path, transcript, writer id). Lines starting
//! with `#` and blank lines are skipped.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::charset::Charset;
use crate::error::{Error, Result};
use crate::image::TextImage;

/// Dense writer indices in first-appearance order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct WriterMap {
    ids: Vec<String>,
    index: HashMap<String, usize>,
}

impl WriterMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_ids(ids: impl IntoIterator<Item = String>) -> Result<Self> {
        let mut map = Self::new();
        for id in ids {
            if map.index.contains_key(&id) {
                return Err(Error::InvalidArgument(format!("duplicate writer id {id:?}")));
            }
            map.intern(&id);
        }
        Ok(map)
    }

    /// Returns the index of `id`, assigning the next free one on first sight.
    pub fn intern(&mut self, id: &str) -> usize {
        if let Some(&i) = self.index.get(id) {
            return i;
        }
        let i = self.ids.len();
        self.ids.push(id.to_owned());
        self.index.insert(id.to_owned(), i);
        i
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn id(&self, index: usize) -> Option<&str> {
        self.ids.get(index).map(String::as_str)
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub image: TextImage,
    pub transcript: String,
    pub writer_id: String,
    pub writer_index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestRecord {
    /// Path relative to the manifest's directory.
    pub image_path: PathBuf,
    pub transcript: String,
    pub writer_id: String,
}

impl ManifestRecord {
    pub fn new(image_path: impl Into<PathBuf>, transcript: &str, writer_id: &str) -> Self {
        Self {
            image_path: image_path.into(),
            transcript: transcript.to_owned(),
            writer_id: writer_id.to_owned(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub samples: Vec<LabeledSample>,
    pub writers: WriterMap,
    pub charset: Charset,
}

/// Parses a manifest, returning each record with its 1-based line number.
pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<(usize, ManifestRecord)>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let row = i + 1;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let malformed = |message: String| Error::Manifest {
            path: path.to_owned(),
            row,
            message,
        };
        if fields.len() != 3 {
            return Err(malformed(format!(
                "expected 3 tab-separated fields, found {}",
                fields.len()
            )));
        }
        if fields[0].is_empty() || fields[1].is_empty() || fields[2].is_empty() {
            return Err(malformed("empty field".into()));
        }
        out.push((row, ManifestRecord::new(fields[0], fields[1], fields[2])));
    }
    Ok(out)
}

pub fn write_manifest(path: impl AsRef<Path>, records: &[ManifestRecord]) -> Result<()> {
    let mut text = String::new();
    for r in records {
        for field in [&r.transcript, &r.writer_id] {
            if field.contains(['\t', '\n', '\r']) {
                return Err(Error::InvalidArgument(format!(
                    "manifest field {field:?} contains a tab or newline"
                )));
            }
        }
        let _ = writeln!(
            text,
            "{}\t{}\t{}",
            r.image_path.display(),
            r.transcript,
            r.writer_id
        );
    }
    std::fs::write(path, text)?;
    Ok(())
}

/// Loads a manifest and derives the charset from its transcripts.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let records = read_manifest(path.as_ref())?;
    let charset = Charset::from_transcripts(records.iter().map(|(_, r)| r.transcript.as_str()));
    load_records(path.as_ref(), records, charset)
}

/// Loads a manifest against an existing charset; out-of-charset transcripts
/// are rejected with their row number.
pub fn load_dataset_with_charset(path: impl AsRef<Path>, charset: &Charset) -> Result<Dataset> {
    let records = read_manifest(path.as_ref())?;
    load_records(path.as_ref(), records, charset.clone())
}

fn load_records(
    path: &Path,
    records: Vec<(usize, ManifestRecord)>,
    charset: Charset,
) -> Result<Dataset> {
    let base = path.parent().unwrap_or(Path::new("."));
    let mut writers = WriterMap::new();
    let mut samples = Vec::with_capacity(records.len());
    for (row, rec) in records {
        let fail = |message: String| Error::Manifest {
            path: path.to_owned(),
            row,
            message,
        };
        if let Err(Error::UnknownSymbol(c)) = charset.check(&rec.transcript) {
            return Err(fail(format!("transcript contains {c:?}, not in the charset")));
        }
        let image_path = base.join(&rec.image_path);
        if !image_path.is_file() {
            return Err(fail(format!("image {} not found", image_path.display())));
        }
        let image = TextImage::load(&image_path)
            .map_err(|e| fail(format!("cannot read {}: {e}", image_path.display())))?;
        let writer_index = writers.intern(&rec.writer_id);
        samples.push(LabeledSample {
            image,
            transcript: rec.transcript,
            writer_id: rec.writer_id,
            writer_index,
        });
    }
    Ok(Dataset {
        samples,
        writers,
        charset,
    })
}
