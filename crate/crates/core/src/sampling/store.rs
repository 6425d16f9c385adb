//! Append-only annotation log with last-writer-wins label replay.

use std::collections::{BTreeMap, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use super::SamplingError;

/// Pixel class. Membrane (cell boundary) is the positive class.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum ClassLabel {
    NonMembrane = 0,
    Membrane = 1,
}

impl ClassLabel {
    pub const ALL: [ClassLabel; 2] = [ClassLabel::NonMembrane, ClassLabel::Membrane];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn one_hot(self) -> [f32; 2] {
        match self {
            ClassLabel::NonMembrane => [1.0, 0.0],
            ClassLabel::Membrane => [0.0, 1.0],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ClassLabel::NonMembrane => "non-membrane",
            ClassLabel::Membrane => "membrane",
        }
    }
}

impl TryFrom<u8> for ClassLabel {
    type Error = String;

    fn try_from(v: u8) -> Result<Self, String> {
        match v {
            0 => Ok(ClassLabel::NonMembrane),
            1 => Ok(ClassLabel::Membrane),
            other => Err(format!("class must be 0 or 1, got {other}")),
        }
    }
}

impl From<ClassLabel> for u8 {
    fn from(c: ClassLabel) -> u8 {
        c as u8
    }
}

/// A stroke as submitted by a client, before the store assigns its sequence number.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NewStroke {
    pub image_id: String,
    #[serde(rename = "class")]
    pub class_label: ClassLabel,
    pub pixels: Vec<[i64; 2]>,
    #[serde(default)]
    pub author: String,
}

/// One line of the annotation log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnotationStroke {
    pub image_id: String,
    #[serde(rename = "class")]
    pub class_label: ClassLabel,
    pub pixels: Vec<[i64; 2]>,
    pub author: String,
    pub seq: u64,
    /// Milliseconds since the Unix epoch.
    pub timestamp: u64,
}

/// Effective label of one pixel after replay.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabeledPixel {
    pub image_id: Arc<str>,
    pub x: u32,
    pub y: u32,
    pub class_label: ClassLabel,
    pub seq: u64,
}

/// Immutable view of all effective labels at `max_seq`, ordered by
/// (image id, row, column).
#[derive(Clone, Debug, Default)]
pub struct LabelSnapshot {
    pub pixels: Arc<Vec<LabeledPixel>>,
    pub max_seq: u64,
}

impl LabelSnapshot {
    pub fn count(&self, class: ClassLabel) -> usize {
        self.pixels.iter().filter(|p| p.class_label == class).count()
    }
}

type PixelKey = (Arc<str>, u32, u32);

#[derive(Default)]
struct Inner {
    file: Option<File>,
    next_seq: u64,
    strokes: Vec<AnnotationStroke>,
    labels: BTreeMap<PixelKey, (ClassLabel, u64)>,
    ids: HashMap<String, Arc<str>>,
    image_seq: HashMap<String, u64>,
}

impl Inner {
    fn apply(&mut self, stroke: AnnotationStroke) {
        let id = self
            .ids
            .entry(stroke.image_id.clone())
            .or_insert_with(|| Arc::from(stroke.image_id.as_str()))
            .clone();
        for &[x, y] in &stroke.pixels {
            self.labels.insert((id.clone(), y as u32, x as u32), (stroke.class_label, stroke.seq));
        }
        self.image_seq.insert(stroke.image_id.clone(), stroke.seq);
        self.next_seq = stroke.seq + 1;
        self.strokes.push(stroke);
    }
}

/// Central annotation database. Many writers may call
/// [`record_stroke`](Self::record_stroke) concurrently; appends are serialized.
pub struct AnnotationStore {
    path: Option<PathBuf>,
    dims: HashMap<String, (usize, usize)>,
    inner: Mutex<Inner>,
}

fn now_millis() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0)
}

impl AnnotationStore {
    /// Store without a backing file.
    pub fn in_memory(dims: HashMap<String, (usize, usize)>) -> Self {
        AnnotationStore {
            path: None,
            dims,
            inner: Mutex::new(Inner { next_seq: 1, ..Default::default() }),
        }
    }

    /// Opens (or creates) the log at `path` and replays it. `dims` maps each
    /// known image id to `(width, height)`. An unterminated final line is a
    /// write that was never acknowledged; it is discarded.
    pub fn open(path: &Path, dims: HashMap<String, (usize, usize)>) -> Result<Self, SamplingError> {
        let mut file = OpenOptions::new().read(true).append(true).create(true).open(path)?;
        let mut inner = Inner { next_seq: 1, ..Default::default() };
        let mut reader = BufReader::new(&mut file);
        let mut offset = 0u64;
        let mut valid_len = 0u64;
        let mut line_no = 0usize;
        let mut line = String::new();
        loop {
            line.clear();
            let n = reader.read_line(&mut line)?;
            if n == 0 {
                break;
            }
            line_no += 1;
            offset += n as u64;
            if !line.ends_with('\n') {
                log::warn!("discarding unterminated record at line {line_no} of {}", path.display());
                break;
            }
            if line.trim().is_empty() {
                valid_len = offset;
                continue;
            }
            let stroke: AnnotationStroke = serde_json::from_str(&line)
                .map_err(|source| SamplingError::Log { line: line_no, source })?;
            if stroke.seq < inner.next_seq {
                return Err(SamplingError::Corrupt(format!(
                    "line {line_no}: sequence {} is not increasing",
                    stroke.seq
                )));
            }
            validate(&dims, &stroke.image_id, &stroke.pixels)?;
            inner.apply(stroke);
            valid_len = offset;
        }
        drop(reader);
        if valid_len < file.metadata()?.len() {
            file.set_len(valid_len)?;
            file.seek(SeekFrom::End(0))?;
        }
        inner.file = Some(file);
        Ok(AnnotationStore { path: Some(path.to_path_buf()), dims, inner: Mutex::new(inner) })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn image_dims(&self) -> &HashMap<String, (usize, usize)> {
        &self.dims
    }

    /// Validates, durably appends and applies a stroke; returns its sequence number.
    pub fn record_stroke(&self, stroke: NewStroke) -> Result<u64, SamplingError> {
        validate(&self.dims, &stroke.image_id, &stroke.pixels)?;
        let mut pixels = stroke.pixels;
        let mut seen = std::collections::HashSet::new();
        pixels.retain(|p| seen.insert(*p));
        let mut inner = self.inner.lock();
        let record = AnnotationStroke {
            image_id: stroke.image_id,
            class_label: stroke.class_label,
            pixels,
            author: stroke.author,
            seq: inner.next_seq,
            timestamp: now_millis(),
        };
        if let Some(file) = inner.file.as_mut() {
            let mut line = serde_json::to_vec(&record).expect("stroke serializes");
            line.push(b'\n');
            file.write_all(&line)?;
            file.sync_data()?;
        }
        let seq = record.seq;
        inner.apply(record);
        Ok(seq)
    }

    pub fn snapshot(&self) -> LabelSnapshot {
        let inner = self.inner.lock();
        let pixels = inner
            .labels
            .iter()
            .map(|((id, y, x), &(class_label, seq))| LabeledPixel {
                image_id: id.clone(),
                x: *x,
                y: *y,
                class_label,
                seq,
            })
            .collect();
        LabelSnapshot { pixels: Arc::new(pixels), max_seq: inner.next_seq - 1 }
    }

    /// Sequence number of the newest stroke, 0 when empty.
    pub fn latest_seq(&self) -> u64 {
        self.inner.lock().next_seq - 1
    }

    /// Sequence number of the newest stroke on one image.
    pub fn latest_seq_for(&self, image_id: &str) -> Option<u64> {
        self.inner.lock().image_seq.get(image_id).copied()
    }

    /// Image ids with at least one stroke, most recently annotated first.
    pub fn images_by_recency(&self) -> Vec<(String, u64)> {
        let mut v: Vec<(String, u64)> =
            self.inner.lock().image_seq.iter().map(|(k, &s)| (k.clone(), s)).collect();
        v.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        v
    }

    pub fn strokes(&self, image_id: Option<&str>) -> Vec<AnnotationStroke> {
        self.inner
            .lock()
            .strokes
            .iter()
            .filter(|s| image_id.is_none_or(|id| s.image_id == id))
            .cloned()
            .collect()
    }

    /// Number of pixels with an effective label.
    pub fn labeled_pixel_count(&self) -> usize {
        self.inner.lock().labels.len()
    }

    pub fn effective_label(&self, image_id: &str, x: u32, y: u32) -> Option<ClassLabel> {
        let inner = self.inner.lock();
        let id = inner.ids.get(image_id)?.clone();
        inner.labels.get(&(id, y, x)).map(|&(c, _)| c)
    }
}

fn validate(
    dims: &HashMap<String, (usize, usize)>,
    image_id: &str,
    pixels: &[[i64; 2]],
) -> Result<(), SamplingError> {
    let &(w, h) = dims.get(image_id).ok_or_else(|| SamplingError::UnknownImage(image_id.to_string()))?;
    if pixels.is_empty() {
        return Err(SamplingError::EmptyStroke);
    }
    let bad: Vec<[i64; 2]> = pixels
        .iter()
        .filter(|[x, y]| *x < 0 || *y < 0 || *x >= w as i64 || *y >= h as i64)
        .copied()
        .collect();
    if !bad.is_empty() {
        return Err(SamplingError::OutOfBounds { image_id: image_id.to_string(), pixels: bad });
    }
    Ok(())
}
