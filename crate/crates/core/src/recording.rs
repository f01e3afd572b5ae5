//! highD recording ingestion and target-centric canonicalization.
//!
//! Raw highD coordinates are image-aligned: x grows to the right, y grows
//! downward, and `(x, y)` is the upper-left corner of the bounding box.
//! Vehicles on the upper carriageway travel towards negative x, vehicles on
//! the lower carriageway towards positive x.
//!
//! The canonical frame used everywhere downstream has its origin at the
//! target's bounding-box center, +x along the direction of travel and +y
//! towards the driver's left.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::Read;
use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// m/s to km/h.
pub const MS_TO_KMH: f64 = 3.6;

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("{file}: missing required column `{column}`")]
    MissingColumn { file: &'static str, column: &'static str },
    #[error("{file}: row {row}: column `{column}`: cannot parse {value:?}")]
    ParseCell {
        file: &'static str,
        row: u64,
        column: &'static str,
        value: String,
    },
    #[error("{file}: {source}")]
    Csv {
        file: &'static str,
        #[source]
        source: csv::Error,
    },
    #[error("recording meta: {0}")]
    InvalidMeta(String),
    #[error("track {track_id}: frame indices not contiguous ({prev} followed by {next})")]
    FrameGap { track_id: u32, prev: i64, next: i64 },
    #[error("track {0} is listed in tracks meta but has no rows in the tracks file")]
    MissingTrack(u32),
    #[error("track {0} has rows in the tracks file but is absent from tracks meta")]
    UnknownTrack(u32),
    #[error("track {0} is listed twice in tracks meta")]
    DuplicateTrack(u32),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("lane {lane_id} is not a mainline lane of the {direction} carriageway")]
pub struct InvalidLane {
    pub lane_id: i32,
    pub direction: DrivingDirection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VehicleClass {
    Car,
    Truck,
}

impl VehicleClass {
    pub fn as_str(self) -> &'static str {
        match self {
            VehicleClass::Car => "car",
            VehicleClass::Truck => "truck",
        }
    }
}

impl fmt::Display for VehicleClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// highD `drivingDirection`: 1 is the upper carriageway (travelling towards
/// negative x), 2 the lower one (towards positive x).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DrivingDirection {
    Upper,
    Lower,
}

impl fmt::Display for DrivingDirection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DrivingDirection::Upper => "upper",
            DrivingDirection::Lower => "lower",
        })
    }
}

/// Position of a lane as seen by its driver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LanePosition {
    Leftmost,
    Middle,
    Rightmost,
}

impl LanePosition {
    pub fn as_str(self) -> &'static str {
        match self {
            LanePosition::Leftmost => "leftmost",
            LanePosition::Middle => "middle",
            LanePosition::Rightmost => "rightmost",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordingMeta {
    pub recording_id: u32,
    /// Hz.
    pub frame_rate: f64,
    /// Lateral positions (m, image y) of the upper carriageway's markings,
    /// top to bottom.
    pub upper_lane_markings: Vec<f64>,
    pub lower_lane_markings: Vec<f64>,
}

impl RecordingMeta {
    pub fn new(
        recording_id: u32,
        frame_rate: f64,
        upper_lane_markings: Vec<f64>,
        lower_lane_markings: Vec<f64>,
    ) -> Result<Self, LoadError> {
        if !(frame_rate.is_finite() && frame_rate > 0.0) {
            return Err(LoadError::InvalidMeta(format!(
                "frame rate must be positive, got {frame_rate}"
            )));
        }
        for (name, markings) in [
            ("upperLaneMarkings", &upper_lane_markings),
            ("lowerLaneMarkings", &lower_lane_markings),
        ] {
            if markings.len() < 2 {
                return Err(LoadError::InvalidMeta(format!(
                    "{name} needs at least 2 markings, got {}",
                    markings.len()
                )));
            }
            if markings.iter().any(|m| !m.is_finite()) || markings.windows(2).any(|w| w[1] <= w[0]) {
                return Err(LoadError::InvalidMeta(format!(
                    "{name} must be strictly increasing: {markings:?}"
                )));
            }
        }
        Ok(Self {
            recording_id,
            frame_rate,
            upper_lane_markings,
            lower_lane_markings,
        })
    }

    fn markings(&self, direction: DrivingDirection) -> &[f64] {
        match direction {
            DrivingDirection::Upper => &self.upper_lane_markings,
            DrivingDirection::Lower => &self.lower_lane_markings,
        }
    }

    pub fn lane_count(&self, direction: DrivingDirection) -> usize {
        self.markings(direction).len() - 1
    }

    /// highD lane ids are numbered top to bottom across the whole road,
    /// counting the strip above the first marking and the median as lanes.
    pub fn lane_ids(&self, direction: DrivingDirection) -> RangeInclusive<i32> {
        let upper = self.upper_lane_markings.len() as i32;
        match direction {
            DrivingDirection::Upper => 2..=upper,
            DrivingDirection::Lower => {
                let first = upper + 2;
                first..=first + self.lane_count(DrivingDirection::Lower) as i32 - 1
            }
        }
    }

    /// Zero-based lane index counted from the driver's left.
    pub fn lane_index_from_left(&self, lane_id: i32, direction: DrivingDirection) -> Result<usize, InvalidLane> {
        let ids = self.lane_ids(direction);
        if !ids.contains(&lane_id) {
            return Err(InvalidLane { lane_id, direction });
        }
        // Upper traffic heads towards -x, so its left is image-down (larger id).
        Ok(match direction {
            DrivingDirection::Upper => (ids.end() - lane_id) as usize,
            DrivingDirection::Lower => (lane_id - ids.start()) as usize,
        })
    }

    /// Lateral width (m) of a mainline lane.
    pub fn lane_width(&self, lane_id: i32, direction: DrivingDirection) -> Result<f64, InvalidLane> {
        let ids = self.lane_ids(direction);
        if !ids.contains(&lane_id) {
            return Err(InvalidLane { lane_id, direction });
        }
        let k = (lane_id - ids.start()) as usize;
        let m = self.markings(direction);
        Ok(m[k + 1] - m[k])
    }
}

/// Classifies a lane from its driver's perspective. Returns the position and
/// the number of lanes of that carriageway.
pub fn lane_position(
    lane_id: i32,
    meta: &RecordingMeta,
    direction: DrivingDirection,
) -> Result<(LanePosition, usize), InvalidLane> {
    let index = meta.lane_index_from_left(lane_id, direction)?;
    let count = meta.lane_count(direction);
    let position = if index == 0 {
        LanePosition::Leftmost
    } else if index + 1 == count {
        LanePosition::Rightmost
    } else {
        LanePosition::Middle
    };
    Ok((position, count))
}

/// One row of a highD tracks file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackFrame {
    pub frame: i64,
    /// Bounding-box upper-left corner, image coordinates (m).
    pub x: f64,
    pub y: f64,
    pub x_velocity: f64,
    pub y_velocity: f64,
    pub x_acceleration: f64,
    pub y_acceleration: f64,
    pub lane_id: i32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackSegment {
    pub track_id: u32,
    pub vehicle_class: VehicleClass,
    pub driving_direction: DrivingDirection,
    pub frames: Vec<TrackFrame>,
    /// Lateral extent (highD `height`).
    pub width: f64,
    /// Longitudinal extent (highD `width`).
    pub length: f64,
}

impl TrackSegment {
    pub fn first_frame(&self) -> i64 {
        self.frames[0].frame
    }

    pub fn last_frame(&self) -> i64 {
        self.frames[self.frames.len() - 1].frame
    }

    pub fn frame(&self, frame: i64) -> Option<&TrackFrame> {
        let offset = frame.checked_sub(self.first_frame())?;
        usize::try_from(offset).ok().and_then(|i| self.frames.get(i))
    }

    /// Bounding-box center of a frame, in raw coordinates.
    pub fn center(&self, frame: &TrackFrame) -> (f64, f64) {
        (frame.x + self.length / 2.0, frame.y + self.width / 2.0)
    }

    pub fn anchor_at(&self, frame: i64) -> Option<Anchor> {
        let f = self.frame(frame)?;
        let (x, y) = self.center(f);
        Some(Anchor {
            x,
            y,
            direction: self.driving_direction,
        })
    }
}

/// Origin and orientation of a target-centric frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Anchor {
    pub x: f64,
    pub y: f64,
    pub direction: DrivingDirection,
}

impl Anchor {
    /// Raw displacement (image axes) to canonical (heading, left) axes.
    pub fn rotate(&self, dx: f64, dy: f64) -> (f64, f64) {
        match self.direction {
            DrivingDirection::Upper => (-dx, dy),
            DrivingDirection::Lower => (dx, -dy),
        }
    }

    pub fn to_canonical(&self, x: f64, y: f64) -> (f64, f64) {
        self.rotate(x - self.x, y - self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CanonicalState {
    /// m, positive along the direction of travel.
    pub x: f64,
    /// m, positive towards the driver's left.
    pub y: f64,
    /// km/h.
    pub speed: f64,
    /// km/h, positive towards the left.
    pub lateral_velocity: f64,
    /// m/s².
    pub longitudinal_acceleration: f64,
}

pub fn canonicalize_frame(segment: &TrackSegment, frame: &TrackFrame, anchor: &Anchor) -> CanonicalState {
    let (cx, cy) = segment.center(frame);
    let (x, y) = anchor.to_canonical(cx, cy);
    let (_, vy) = anchor.rotate(frame.x_velocity, frame.y_velocity);
    let (ax, _) = anchor.rotate(frame.x_acceleration, frame.y_acceleration);
    CanonicalState {
        x,
        y,
        speed: MS_TO_KMH * frame.x_velocity.hypot(frame.y_velocity),
        lateral_velocity: MS_TO_KMH * vy,
        longitudinal_acceleration: ax,
    }
}

/// Maps every frame of `segment` into the frame defined by `anchor`.
pub fn canonicalize(segment: &TrackSegment, anchor: &Anchor) -> Vec<CanonicalState> {
    segment
        .frames
        .iter()
        .map(|f| canonicalize_frame(segment, f, anchor))
        .collect()
}

/// A loaded recording. Tracks that ever leave the mainline lanes are listed in
/// `dropped_tracks` rather than `segments`.
#[derive(Debug, Clone)]
pub struct Recording {
    pub meta: RecordingMeta,
    pub segments: Vec<TrackSegment>,
    pub dropped_tracks: Vec<u32>,
}

impl Recording {
    pub fn segment(&self, track_id: u32) -> Option<&TrackSegment> {
        self.segments
            .binary_search_by_key(&track_id, |s| s.track_id)
            .ok()
            .map(|i| &self.segments[i])
    }
}

struct Columns<const N: usize> {
    file: &'static str,
    names: [&'static str; N],
    index: [usize; N],
}

impl<const N: usize> Columns<N> {
    fn resolve(file: &'static str, headers: &csv::StringRecord, names: [&'static str; N]) -> Result<Self, LoadError> {
        let mut index = [0; N];
        for (slot, name) in index.iter_mut().zip(names) {
            *slot = headers
                .iter()
                .position(|h| h == name)
                .ok_or(LoadError::MissingColumn { file, column: name })?;
        }
        Ok(Self { file, names, index })
    }

    fn raw<'r>(&self, record: &'r csv::StringRecord, col: usize) -> &'r str {
        record.get(self.index[col]).unwrap_or("")
    }

    fn parse<T: std::str::FromStr>(&self, record: &csv::StringRecord, col: usize) -> Result<T, LoadError> {
        let raw = self.raw(record, col);
        raw.parse().map_err(|_| self.bad(record, col, raw))
    }

    fn finite(&self, record: &csv::StringRecord, col: usize) -> Result<f64, LoadError> {
        let v: f64 = self.parse(record, col)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(self.bad(record, col, self.raw(record, col)))
        }
    }

    fn bad(&self, record: &csv::StringRecord, col: usize, raw: &str) -> LoadError {
        LoadError::ParseCell {
            file: self.file,
            row: record.position().map_or(0, |p| p.line()),
            column: self.names[col],
            value: raw.to_string(),
        }
    }
}

fn reader<R: Read>(source: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(source)
}

fn read_recording_meta<R: Read>(source: R) -> Result<RecordingMeta, LoadError> {
    const FILE: &str = "recording meta";
    let mut rdr = reader(source);
    let headers = rdr
        .headers()
        .map_err(|source| LoadError::Csv { file: FILE, source })?
        .clone();
    let cols = Columns::resolve(
        FILE,
        &headers,
        ["id", "frameRate", "upperLaneMarkings", "lowerLaneMarkings"],
    )?;
    let record = rdr
        .records()
        .next()
        .ok_or_else(|| LoadError::InvalidMeta("no data row".into()))?
        .map_err(|source| LoadError::Csv { file: FILE, source })?;
    let markings = |col: usize| -> Result<Vec<f64>, LoadError> {
        let raw = cols.raw(&record, col);
        raw.split(';')
            .map(|s| s.trim().parse::<f64>().map_err(|_| cols.bad(&record, col, raw)))
            .collect()
    };
    RecordingMeta::new(
        cols.parse(&record, 0)?,
        cols.finite(&record, 1)?,
        markings(2)?,
        markings(3)?,
    )
}

struct TrackInfo {
    class: VehicleClass,
    direction: DrivingDirection,
}

fn read_tracks_meta<R: Read>(source: R) -> Result<BTreeMap<u32, TrackInfo>, LoadError> {
    const FILE: &str = "tracks meta";
    let mut rdr = reader(source);
    let headers = rdr
        .headers()
        .map_err(|source| LoadError::Csv { file: FILE, source })?
        .clone();
    let cols = Columns::resolve(FILE, &headers, ["id", "class", "drivingDirection"])?;
    let mut out = BTreeMap::new();
    for record in rdr.records() {
        let record = record.map_err(|source| LoadError::Csv { file: FILE, source })?;
        let id: u32 = cols.parse(&record, 0)?;
        let class = match cols.raw(&record, 1).to_ascii_lowercase().as_str() {
            "car" => VehicleClass::Car,
            "truck" => VehicleClass::Truck,
            other => return Err(cols.bad(&record, 1, other)),
        };
        let direction = match cols.parse::<u8>(&record, 2)? {
            1 => DrivingDirection::Upper,
            2 => DrivingDirection::Lower,
            _ => return Err(cols.bad(&record, 2, cols.raw(&record, 2))),
        };
        if out.insert(id, TrackInfo { class, direction }).is_some() {
            return Err(LoadError::DuplicateTrack(id));
        }
    }
    Ok(out)
}

struct RawTrack {
    frames: Vec<TrackFrame>,
    length: f64,
    width: f64,
}

fn read_tracks<R: Read>(source: R) -> Result<HashMap<u32, RawTrack>, LoadError> {
    const FILE: &str = "tracks";
    let mut rdr = reader(source);
    let headers = rdr
        .headers()
        .map_err(|source| LoadError::Csv { file: FILE, source })?
        .clone();
    let cols = Columns::resolve(
        FILE,
        &headers,
        [
            "frame",
            "id",
            "x",
            "y",
            "width",
            "height",
            "xVelocity",
            "yVelocity",
            "xAcceleration",
            "yAcceleration",
            "laneId",
        ],
    )?;
    let mut tracks: HashMap<u32, RawTrack> = HashMap::new();
    for record in rdr.records() {
        let record = record.map_err(|source| LoadError::Csv { file: FILE, source })?;
        let id: u32 = cols.parse(&record, 1)?;
        let frame = TrackFrame {
            frame: cols.parse(&record, 0)?,
            x: cols.finite(&record, 2)?,
            y: cols.finite(&record, 3)?,
            x_velocity: cols.finite(&record, 6)?,
            y_velocity: cols.finite(&record, 7)?,
            x_acceleration: cols.finite(&record, 8)?,
            y_acceleration: cols.finite(&record, 9)?,
            lane_id: cols.parse(&record, 10)?,
        };
        let length = cols.finite(&record, 4)?;
        let width = cols.finite(&record, 5)?;
        tracks
            .entry(id)
            .or_insert_with(|| RawTrack {
                frames: Vec::new(),
                length,
                width,
            })
            .frames
            .push(frame);
    }
    Ok(tracks)
}

/// Loads one highD recording from its three CSV sources.
pub fn load_recording<T: Read, M: Read, R: Read>(
    tracks_source: T,
    tracks_meta_source: M,
    recording_meta_source: R,
) -> Result<Recording, LoadError> {
    let meta = read_recording_meta(recording_meta_source)?;
    let infos = read_tracks_meta(tracks_meta_source)?;
    let mut raw = read_tracks(tracks_source)?;

    if let Some(id) = raw.keys().filter(|id| !infos.contains_key(id)).min() {
        return Err(LoadError::UnknownTrack(*id));
    }

    let mut segments = Vec::with_capacity(infos.len());
    let mut dropped_tracks = Vec::new();
    for (&track_id, info) in &infos {
        let mut track = raw.remove(&track_id).ok_or(LoadError::MissingTrack(track_id))?;
        track.frames.sort_by_key(|f| f.frame);
        if let Some(w) = track.frames.windows(2).find(|w| w[1].frame != w[0].frame + 1) {
            return Err(LoadError::FrameGap {
                track_id,
                prev: w[0].frame,
                next: w[1].frame,
            });
        }
        let lanes = meta.lane_ids(info.direction);
        if track.frames.iter().any(|f| !lanes.contains(&f.lane_id)) {
            dropped_tracks.push(track_id);
            continue;
        }
        segments.push(TrackSegment {
            track_id,
            vehicle_class: info.class,
            driving_direction: info.direction,
            frames: track.frames,
            width: track.width,
            length: track.length,
        });
    }
    Ok(Recording {
        meta,
        segments,
        dropped_tracks,
    })
}

/// Paths of the three files making up recording `id` in a highD data directory
/// (`NN_tracks.csv`, `NN_tracksMeta.csv`, `NN_recordingMeta.csv`).
pub fn recording_paths(dir: &Path, id: u32) -> [PathBuf; 3] {
    [
        dir.join(format!("{id:02}_tracks.csv")),
        dir.join(format!("{id:02}_tracksMeta.csv")),
        dir.join(format!("{id:02}_recordingMeta.csv")),
    ]
}

pub fn load_recording_files(dir: &Path, id: u32) -> Result<Recording, LoadError> {
    let [tracks, tracks_meta, recording_meta] = recording_paths(dir, id);
    let open = |p: &PathBuf| {
        std::fs::File::open(p)
            .map(std::io::BufReader::new)
            .map_err(|source| LoadError::Io {
                path: p.clone(),
                source,
            })
    };
    load_recording(open(&tracks)?, open(&tracks_meta)?, open(&recording_meta)?)
}

/// Recording ids present in a highD data directory, ascending.
pub fn discover_recordings(dir: &Path) -> Result<Vec<u32>, LoadError> {
    let entries = std::fs::read_dir(dir).map_err(|source| LoadError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut ids = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|source| LoadError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        let name = entry.file_name();
        if let Some(id) = name
            .to_str()
            .and_then(|n| n.strip_suffix("_recordingMeta.csv"))
            .and_then(|n| n.parse().ok())
        {
            ids.push(id);
        }
    }
    ids.sort_unstable();
    Ok(ids)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn meta_3_lanes() -> RecordingMeta {
        RecordingMeta::new(1, 25.0, vec![8.0, 11.75, 15.5, 19.25], vec![23.0, 26.75, 30.5, 34.25]).unwrap()
    }

    const REC_META: &str =
        "id,frameRate,upperLaneMarkings,lowerLaneMarkings\n1,25,8.0;11.75;15.5;19.25,23.0;26.75;30.5;34.25\n";
    const TRACKS_META: &str = "id,width,height,class,drivingDirection\n1,4.5,1.8,Car,2\n";
    const TRACKS: &str = "frame,id,x,y,width,height,xVelocity,yVelocity,xAcceleration,yAcceleration,laneId\n\
        1,1,10.0,27.5,4.5,1.8,30.0,0.0,0.0,0.0,7\n\
        2,1,11.2,27.5,4.5,1.8,30.0,0.0,0.0,0.0,7\n\
        3,1,12.4,27.5,4.5,1.8,30.0,0.0,0.0,0.0,7\n";

    #[test]
    fn loads_minimal_track() {
        let rec = load_recording(TRACKS.as_bytes(), TRACKS_META.as_bytes(), REC_META.as_bytes()).unwrap();
        assert_eq!(rec.segments.len(), 1);
        let seg = &rec.segments[0];
        assert_eq!(seg.frames.len(), 3);
        assert_eq!(seg.vehicle_class, VehicleClass::Car);
        assert_eq!(seg.driving_direction, DrivingDirection::Lower);
        assert_eq!(seg.length, 4.5);
        assert_eq!(seg.width, 1.8);
        assert_eq!(rec.meta.lane_ids(DrivingDirection::Lower), 6..=8);
    }

    #[test]
    fn missing_lane_column_is_named() {
        let tracks = TRACKS.replace("laneId", "lane");
        let err = load_recording(tracks.as_bytes(), TRACKS_META.as_bytes(), REC_META.as_bytes()).unwrap_err();
        assert!(
            matches!(err, LoadError::MissingColumn { column: "laneId", .. }),
            "{err}"
        );
        assert!(err.to_string().contains("laneId"));
    }

    #[test]
    fn non_numeric_cell_reports_row() {
        let tracks = TRACKS.replace("11.2", "abc");
        let err = load_recording(tracks.as_bytes(), TRACKS_META.as_bytes(), REC_META.as_bytes()).unwrap_err();
        match err {
            LoadError::ParseCell { row, column, .. } => {
                assert_eq!(row, 3);
                assert_eq!(column, "x");
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn frame_gap_is_integrity_error() {
        let tracks = TRACKS.replace("\n2,1,", "\n5,1,");
        let err = load_recording(tracks.as_bytes(), TRACKS_META.as_bytes(), REC_META.as_bytes()).unwrap_err();
        assert!(matches!(err, LoadError::FrameGap { track_id: 1, .. }), "{err}");
    }

    #[test]
    fn meta_track_without_rows_is_rejected() {
        let meta = format!("{TRACKS_META}2,4.5,1.8,Truck,1\n");
        let err = load_recording(TRACKS.as_bytes(), meta.as_bytes(), REC_META.as_bytes()).unwrap_err();
        assert!(matches!(err, LoadError::MissingTrack(2)));
    }

    #[test]
    fn ramp_lane_track_is_dropped() {
        let tracks = TRACKS.replace(",7\n3,", ",9\n3,");
        let rec = load_recording(tracks.as_bytes(), TRACKS_META.as_bytes(), REC_META.as_bytes()).unwrap();
        assert!(rec.segments.is_empty());
        assert_eq!(rec.dropped_tracks, vec![1]);
    }

    #[test]
    fn extra_columns_are_ignored() {
        let tracks = TRACKS
            .lines()
            .enumerate()
            .map(|(i, l)| {
                if i == 0 {
                    format!("{l},precedingId")
                } else {
                    format!("{l},0")
                }
            })
            .collect::<Vec<_>>()
            .join("\n");
        let rec = load_recording(tracks.as_bytes(), TRACKS_META.as_bytes(), REC_META.as_bytes()).unwrap();
        assert_eq!(rec.segments[0].frames.len(), 3);
    }

    #[test]
    fn invalid_meta_rejected() {
        assert!(RecordingMeta::new(1, 0.0, vec![1.0, 2.0], vec![3.0, 4.0]).is_err());
        assert!(RecordingMeta::new(1, 25.0, vec![1.0], vec![3.0, 4.0]).is_err());
        assert!(RecordingMeta::new(1, 25.0, vec![2.0, 1.0], vec![3.0, 4.0]).is_err());
    }

    #[test]
    fn lane_positions_three_lanes() {
        let meta = meta_3_lanes();
        // Lower carriageway drives towards +x; its left is image-up.
        assert_eq!(
            lane_position(6, &meta, DrivingDirection::Lower).unwrap(),
            (LanePosition::Leftmost, 3)
        );
        assert_eq!(
            lane_position(7, &meta, DrivingDirection::Lower).unwrap(),
            (LanePosition::Middle, 3)
        );
        assert_eq!(
            lane_position(8, &meta, DrivingDirection::Lower).unwrap(),
            (LanePosition::Rightmost, 3)
        );
        // Upper carriageway drives towards -x; its left is image-down.
        assert_eq!(
            lane_position(4, &meta, DrivingDirection::Upper).unwrap(),
            (LanePosition::Leftmost, 3)
        );
        assert_eq!(
            lane_position(2, &meta, DrivingDirection::Upper).unwrap(),
            (LanePosition::Rightmost, 3)
        );
    }

    #[test]
    fn two_lane_direction_has_no_middle() {
        let meta = RecordingMeta::new(1, 25.0, vec![8.0, 11.75, 15.5], vec![21.0, 24.75, 28.5]).unwrap();
        assert_eq!(meta.lane_ids(DrivingDirection::Lower), 5..=6);
        assert_eq!(
            lane_position(6, &meta, DrivingDirection::Lower).unwrap(),
            (LanePosition::Rightmost, 2)
        );
        assert_eq!(
            lane_position(5, &meta, DrivingDirection::Lower).unwrap(),
            (LanePosition::Leftmost, 2)
        );
    }

    #[test]
    fn four_lane_interior_lanes_are_middle() {
        let meta = RecordingMeta::new(1, 25.0, vec![1.0, 2.0, 3.0, 4.0, 5.0], vec![7.0, 8.0, 9.0, 10.0, 11.0]).unwrap();
        for direction in [DrivingDirection::Upper, DrivingDirection::Lower] {
            let positions: Vec<_> = meta
                .lane_ids(direction)
                .map(|id| {
                    (
                        meta.lane_index_from_left(id, direction).unwrap(),
                        lane_position(id, &meta, direction).unwrap(),
                    )
                })
                .collect();
            assert_eq!(positions.len(), 4);
            for (index, (pos, count)) in positions {
                assert_eq!(count, 4);
                let expected = match index {
                    0 => LanePosition::Leftmost,
                    3 => LanePosition::Rightmost,
                    _ => LanePosition::Middle,
                };
                assert_eq!(pos, expected);
            }
        }
    }

    #[test]
    fn lane_outside_direction_is_invalid() {
        let meta = meta_3_lanes();
        assert_eq!(
            lane_position(5, &meta, DrivingDirection::Lower).unwrap_err(),
            InvalidLane {
                lane_id: 5,
                direction: DrivingDirection::Lower
            }
        );
        assert!(lane_position(6, &meta, DrivingDirection::Upper).is_err());
    }

    fn segment(direction: DrivingDirection, frames: Vec<TrackFrame>) -> TrackSegment {
        TrackSegment {
            track_id: 1,
            vehicle_class: VehicleClass::Car,
            driving_direction: direction,
            frames,
            width: 2.0,
            length: 4.0,
        }
    }

    fn frame(frame: i64, x: f64, y: f64, vx: f64, vy: f64) -> TrackFrame {
        TrackFrame {
            frame,
            x,
            y,
            x_velocity: vx,
            y_velocity: vy,
            x_acceleration: 0.0,
            y_acceleration: 0.0,
            lane_id: 3,
        }
    }

    #[test]
    fn anchor_maps_to_origin() {
        let seg = segment(DrivingDirection::Upper, vec![frame(1, 100.0, 12.0, -30.0, 0.5)]);
        let anchor = seg.anchor_at(1).unwrap();
        let s = canonicalize(&seg, &anchor);
        assert_eq!((s[0].x, s[0].y), (0.0, 0.0));
        assert!((s[0].speed - 3.6 * 30.0f64.hypot(0.5)).abs() < 1e-9);
    }

    #[test]
    fn lower_direction_keeps_longitudinal_sign() {
        let anchor = Anchor {
            x: 50.0,
            y: 20.0,
            direction: DrivingDirection::Lower,
        };
        let (x, _) = anchor.to_canonical(60.0, 20.0);
        assert_eq!(x, 10.0);
    }

    #[test]
    fn upper_direction_reflection_on_five_frames() {
        // Hand-computed: heading is -x so canonical x = -(dx); image-down is
        // the driver's left so canonical y = +(dy).
        let frames: Vec<_> = (0..5)
            .map(|i| frame(i, 200.0 - 10.0 * i as f64, 12.0 + 0.5 * i as f64, -25.0, 0.5))
            .collect();
        let seg = segment(DrivingDirection::Upper, frames);
        let anchor = Anchor {
            x: 212.0,
            y: 11.0,
            direction: DrivingDirection::Upper,
        };
        let got = canonicalize(&seg, &anchor);
        let expected = [(10.0, 2.0), (20.0, 2.5), (30.0, 3.0), (40.0, 3.5), (50.0, 4.0)];
        for (s, (ex, ey)) in got.iter().zip(expected) {
            assert!((s.x - ex).abs() < 1e-12 && (s.y - ey).abs() < 1e-12, "{s:?}");
            assert!((s.lateral_velocity - 1.8).abs() < 1e-12);
        }
        // The canonical example: raw dx = -10, dy = +2.
        let a = Anchor {
            x: 0.0,
            y: 0.0,
            direction: DrivingDirection::Upper,
        };
        assert_eq!(a.to_canonical(-10.0, 2.0), (10.0, 2.0));
    }

    #[test]
    fn lower_direction_left_is_image_up() {
        let a = Anchor {
            x: 0.0,
            y: 0.0,
            direction: DrivingDirection::Lower,
        };
        assert_eq!(a.to_canonical(0.0, -3.0), (0.0, 3.0));
    }
}
