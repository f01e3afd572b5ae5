//! JSON-lines archives: snapshots, training text, ground-truth metadata and
//! predictions all use one JSON object per line.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::cot::CotAnnotation;
use crate::error::{Error, Result};
use crate::scene::{Intention, Point, SceneSnapshot, TBucket};

/// One line of a training file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingLine {
    pub sample_id: String,
    pub text: String,
}

/// Ground truth kept alongside a training file for later evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetadataLine {
    pub sample_id: String,
    pub gt_intention: Intention,
    pub t_bucket: TBucket,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub advanced_prediction_time: Option<f64>,
    pub gt_trajectory: Vec<Point>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cot: Option<CotAnnotation>,
}

impl From<&SceneSnapshot> for MetadataLine {
    fn from(s: &SceneSnapshot) -> Self {
        Self {
            sample_id: s.sample_id.clone(),
            gt_intention: s.gt_intention,
            t_bucket: s.t_bucket,
            advanced_prediction_time: s.advanced_prediction_time,
            gt_trajectory: s.gt_trajectory.clone(),
            cot: s.cot.clone(),
        }
    }
}

pub fn write_jsonl<T: Serialize>(writer: impl Write, items: impl IntoIterator<Item = T>) -> std::io::Result<()> {
    let mut w = BufWriter::new(writer);
    for item in items {
        serde_json::to_writer(&mut w, &item)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn write_jsonl_file<T: Serialize>(path: &Path, items: impl IntoIterator<Item = T>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_jsonl(file, items).map_err(|e| Error::io(path, e))
}

/// Reads a JSON-lines stream, skipping blank lines. `name` labels errors.
pub fn read_jsonl<T: DeserializeOwned>(reader: impl BufRead, name: &str) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(name, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line).map_err(|source| Error::Json {
            path: name.to_string(),
            line: i + 1,
            source,
        })?;
        out.push(item);
    }
    Ok(out)
}

pub fn read_jsonl_file<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_jsonl(BufReader::new(file), &path.display().to_string())
}
