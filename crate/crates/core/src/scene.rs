//! Lane-change detection, neighbor slots and [`SceneSnapshot`] construction.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cot::CotAnnotation;
use crate::recording::{
    canonicalize_frame, lane_position, CanonicalState, InvalidLane, LanePosition, Recording, TrackSegment, VehicleClass,
};

/// Spacing of trajectory points (s).
pub const GRID_STEP_S: f64 = 0.5;
/// History points at -2.0, -1.5, -1.0, -0.5 and 0.0 s.
pub const HISTORY_POINTS: usize = 5;
/// Future points at +0.5 .. +4.0 s.
pub const FUTURE_POINTS: usize = 8;
/// Prediction horizon (s).
pub const HORIZON_S: f64 = 4.0;
/// Fallback lane width (m) when markings are unusable.
pub const DEFAULT_LANE_WIDTH_M: f64 = 3.5;

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("lane-change frame {lc_frame} precedes current frame {current_frame}")]
    Ordering { lc_frame: i64, current_frame: i64 },
    #[error("track {track_id} frame {frame}: {reason}")]
    Window {
        track_id: u32,
        frame: i64,
        reason: &'static str,
    },
    #[error("track {0} not found in recording")]
    UnknownTrack(u32),
    #[error(transparent)]
    Lane(#[from] InvalidLane),
    #[error("snapshot {sample_id}: {reason}")]
    Invalid { sample_id: String, reason: String },
}

/// Lane-change intention code: 0 keep lane, 1 left, 2 right.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Intention {
    KeepLane = 0,
    LeftLaneChange = 1,
    RightLaneChange = 2,
}

impl Intention {
    pub const ALL: [Intention; 3] = [
        Intention::KeepLane,
        Intention::LeftLaneChange,
        Intention::RightLaneChange,
    ];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }

    pub fn phrase(self) -> &'static str {
        match self {
            Intention::KeepLane => "keep lane",
            Intention::LeftLaneChange => "left lane change",
            Intention::RightLaneChange => "right lane change",
        }
    }

    /// Short class label used in reports.
    pub fn label(self) -> &'static str {
        match self {
            Intention::KeepLane => "LK",
            Intention::LeftLaneChange => "LLC",
            Intention::RightLaneChange => "RLC",
        }
    }
}

impl From<Intention> for u8 {
    fn from(i: Intention) -> u8 {
        i.code()
    }
}

impl TryFrom<u8> for Intention {
    type Error = String;

    fn try_from(code: u8) -> Result<Self, String> {
        Intention::from_code(code).ok_or_else(|| format!("invalid intention code {code}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LaneChangeDirection {
    Left,
    Right,
}

impl LaneChangeDirection {
    pub fn intention(self) -> Intention {
        match self {
            LaneChangeDirection::Left => Intention::LeftLaneChange,
            LaneChangeDirection::Right => Intention::RightLaneChange,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LaneChangeEvent {
    pub track_id: u32,
    /// First frame carrying the new lane id.
    pub lc_frame: i64,
    pub direction: LaneChangeDirection,
}

/// Advanced-prediction-time bucket. `LK` marks lane-keeping samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TBucket {
    LK,
    T01,
    T12,
    T23,
    T34,
}

impl TBucket {
    pub const LANE_CHANGE: [TBucket; 4] = [TBucket::T01, TBucket::T12, TBucket::T23, TBucket::T34];

    /// Intervals are [0,1], (1,2], (2,3], (3,4]; anything else has no bucket.
    pub fn for_lane_change(t: f64) -> Option<TBucket> {
        if !(0.0..=HORIZON_S).contains(&t) {
            None
        } else if t <= 1.0 {
            Some(TBucket::T01)
        } else if t <= 2.0 {
            Some(TBucket::T12)
        } else if t <= 3.0 {
            Some(TBucket::T23)
        } else {
            Some(TBucket::T34)
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TBucket::LK => "LK",
            TBucket::T01 => "T01",
            TBucket::T12 => "T12",
            TBucket::T23 => "T23",
            TBucket::T34 => "T34",
        }
    }

    /// Interval as printed in report headers.
    pub fn interval(self) -> &'static str {
        match self {
            TBucket::LK => "LK",
            TBucket::T01 => "T in [0,1]",
            TBucket::T12 => "T in (1,2]",
            TBucket::T23 => "T in (2,3]",
            TBucket::T34 => "T in (3,4]",
        }
    }
}

impl fmt::Display for TBucket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Seconds between the current frame and the lane-change frame.
pub fn advanced_prediction_time(lc_frame: i64, current_frame: i64, frame_rate: f64) -> Result<f64, SceneError> {
    if lc_frame < current_frame {
        return Err(SceneError::Ordering {
            lc_frame,
            current_frame,
        });
    }
    Ok((lc_frame - current_frame) as f64 / frame_rate)
}

/// One event per lane-id transition, in frame order. Direction comes from the
/// lane order seen by the driver, which matches the sign of the canonical
/// lateral displacement.
pub fn detect_lane_changes(
    segment: &TrackSegment,
    meta: &crate::recording::RecordingMeta,
) -> Result<Vec<LaneChangeEvent>, InvalidLane> {
    let dir = segment.driving_direction;
    let mut events = Vec::new();
    for w in segment.frames.windows(2) {
        if w[0].lane_id == w[1].lane_id {
            continue;
        }
        let before = meta.lane_index_from_left(w[0].lane_id, dir)?;
        let after = meta.lane_index_from_left(w[1].lane_id, dir)?;
        events.push(LaneChangeEvent {
            track_id: segment.track_id,
            lc_frame: w[1].frame,
            direction: if after < before {
                LaneChangeDirection::Left
            } else {
                LaneChangeDirection::Right
            },
        });
    }
    Ok(events)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlotDirection {
    Ahead,
    LeftFront,
    RightFront,
    LeftSide,
    RightSide,
    Rear,
    LeftRear,
    RightRear,
}

impl SlotDirection {
    pub const ALL: [SlotDirection; 8] = [
        SlotDirection::Ahead,
        SlotDirection::LeftFront,
        SlotDirection::RightFront,
        SlotDirection::LeftSide,
        SlotDirection::RightSide,
        SlotDirection::Rear,
        SlotDirection::LeftRear,
        SlotDirection::RightRear,
    ];

    pub fn phrase(self) -> &'static str {
        match self {
            SlotDirection::Ahead => "Ahead",
            SlotDirection::LeftFront => "Left front",
            SlotDirection::RightFront => "Right front",
            SlotDirection::LeftSide => "Left side",
            SlotDirection::RightSide => "Right side",
            SlotDirection::Rear => "Rear",
            SlotDirection::LeftRear => "Left rear",
            SlotDirection::RightRear => "Right rear",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Occupant {
    pub track_id: u32,
    pub vehicle_class: VehicleClass,
    /// km/h.
    pub speed: f64,
    pub relative_x: f64,
    pub relative_y: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeighborSlot {
    pub direction: SlotDirection,
    pub occupant: Option<Occupant>,
}

/// A co-temporal vehicle already expressed in the target's canonical frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeighborCandidate {
    pub track_id: u32,
    pub vehicle_class: VehicleClass,
    /// Lane index relative to the target's, counted towards the driver's
    /// right: -1 is the lane immediately left, +1 immediately right.
    pub lane_offset: i32,
    pub x: f64,
    pub y: f64,
    /// km/h.
    pub speed: f64,
    pub length: f64,
}

/// Fills the eight slots around a target of length `target_length`.
///
/// Only the target's lane and its two adjacent lanes are considered. A vehicle
/// overlaps the target longitudinally (side slots) when the center gap is at
/// most the mean of both lengths. Within a slot the smallest |Δx| wins, ties
/// going to the lower track id.
pub fn assign_neighbors(target_length: f64, candidates: &[NeighborCandidate]) -> Vec<NeighborSlot> {
    let mut best: [Option<&NeighborCandidate>; 8] = [None; 8];
    for c in candidates {
        let overlap = (target_length + c.length) / 2.0;
        let along = if c.x.abs() <= overlap {
            0
        } else if c.x > 0.0 {
            1
        } else {
            -1
        };
        use SlotDirection::*;
        let slot = match (c.lane_offset, along) {
            (0, 1) => Ahead,
            (0, -1) => Rear,
            (-1, 1) => LeftFront,
            (-1, 0) => LeftSide,
            (-1, -1) => LeftRear,
            (1, 1) => RightFront,
            (1, 0) => RightSide,
            (1, -1) => RightRear,
            _ => continue,
        };
        let entry = &mut best[slot.index()];
        let closer = match entry {
            None => true,
            Some(cur) => (c.x.abs(), c.track_id) < (cur.x.abs(), cur.track_id),
        };
        if closer {
            *entry = Some(c);
        }
    }
    SlotDirection::ALL
        .iter()
        .map(|&direction| NeighborSlot {
            direction,
            occupant: best[direction.index()].map(|c| Occupant {
                track_id: c.track_id,
                vehicle_class: c.vehicle_class,
                speed: c.speed,
                relative_x: c.x,
                relative_y: c.y,
            }),
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapSummary {
    pub lane_count: usize,
    pub lane_position: LanePosition,
    /// Width of the target's current lane (m).
    pub lane_width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSnapshot {
    pub sample_id: String,
    pub history: Vec<CanonicalState>,
    pub target_class: VehicleClass,
    pub map: MapSummary,
    pub neighbors: Vec<NeighborSlot>,
    pub gt_intention: Intention,
    pub gt_trajectory: Vec<Point>,
    pub t_bucket: TBucket,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub advanced_prediction_time: Option<f64>,
    /// Set on generated scenarios; their ground truth is illustrative only.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub synthetic: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cot: Option<CotAnnotation>,
}

impl SceneSnapshot {
    pub fn current(&self) -> &CanonicalState {
        &self.history[HISTORY_POINTS - 1]
    }

    pub fn slot(&self, direction: SlotDirection) -> Option<&Occupant> {
        self.neighbors
            .iter()
            .find(|s| s.direction == direction)
            .and_then(|s| s.occupant.as_ref())
    }

    /// Checks the structural invariants every snapshot must satisfy.
    pub fn validate(&self) -> Result<(), SceneError> {
        let fail = |reason: String| {
            Err(SceneError::Invalid {
                sample_id: self.sample_id.clone(),
                reason,
            })
        };
        if self.history.len() != HISTORY_POINTS {
            return fail(format!("history has {} points", self.history.len()));
        }
        let cur = self.current();
        if cur.x != 0.0 || cur.y != 0.0 {
            return fail(format!("current position is ({}, {})", cur.x, cur.y));
        }
        if self.history.iter().any(|s| s.speed.is_nan() || s.speed < 0.0) {
            return fail("negative or NaN speed in history".into());
        }
        if self.gt_trajectory.len() != FUTURE_POINTS {
            return fail(format!("ground truth has {} points", self.gt_trajectory.len()));
        }
        if self.neighbors.len() != 8
            || self
                .neighbors
                .iter()
                .zip(SlotDirection::ALL)
                .any(|(s, d)| s.direction != d)
        {
            return fail("neighbor slots are not the eight directions in order".into());
        }
        let mut ids: Vec<u32> = self
            .neighbors
            .iter()
            .filter_map(|s| s.occupant.map(|o| o.track_id))
            .collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return fail("a vehicle occupies two slots".into());
        }
        let consistent = match (self.gt_intention, self.t_bucket, self.advanced_prediction_time) {
            (Intention::KeepLane, TBucket::LK, None) => true,
            (Intention::KeepLane, _, _) | (_, TBucket::LK, _) => false,
            (_, bucket, Some(t)) => TBucket::for_lane_change(t) == Some(bucket),
            (_, _, None) => false,
        };
        if !consistent {
            return fail(format!(
                "bucket {} inconsistent with intention {} and T {:?}",
                self.t_bucket,
                self.gt_intention.code(),
                self.advanced_prediction_time
            ));
        }
        if let Some(cot) = &self.cot {
            if cot.behavior.family() != self.gt_intention {
                return fail("CoT behavior family disagrees with intention".into());
            }
        }
        Ok(())
    }
}

/// Frame offset of grid time `t` seconds, snapped to the nearest frame.
pub fn grid_offset(t: f64, frame_rate: f64) -> i64 {
    (t * frame_rate).round() as i64
}

pub fn history_span(frame_rate: f64) -> i64 {
    grid_offset(GRID_STEP_S * (HISTORY_POINTS - 1) as f64, frame_rate)
}

pub fn future_span(frame_rate: f64) -> i64 {
    grid_offset(GRID_STEP_S * FUTURE_POINTS as f64, frame_rate)
}

/// Whether `frame` has full history and future windows inside `segment`.
pub fn has_window(segment: &TrackSegment, frame: i64, frame_rate: f64) -> bool {
    frame - history_span(frame_rate) >= segment.first_frame() && frame + future_span(frame_rate) <= segment.last_frame()
}

pub fn sample_id(recording_id: u32, track_id: u32, frame: i64) -> String {
    format!("r{recording_id:02}_t{track_id:05}_f{frame:06}")
}

/// Next lane change at or after `frame`, with its advanced prediction time if
/// it falls inside the horizon.
pub fn upcoming_lane_change(events: &[LaneChangeEvent], frame: i64, frame_rate: f64) -> Option<(LaneChangeEvent, f64)> {
    let event = events.iter().find(|e| e.lc_frame >= frame)?;
    let t = advanced_prediction_time(event.lc_frame, frame, frame_rate).ok()?;
    (t <= HORIZON_S).then_some((*event, t))
}

/// Materializes the sample for `target` at `current_frame`.
pub fn build_snapshot(
    recording: &Recording,
    target: &TrackSegment,
    current_frame: i64,
) -> Result<SceneSnapshot, SceneError> {
    let meta = &recording.meta;
    let rate = meta.frame_rate;
    let window_err = |reason| SceneError::Window {
        track_id: target.track_id,
        frame: current_frame,
        reason,
    };
    if current_frame - history_span(rate) < target.first_frame() {
        return Err(window_err("less than 2 s of history"));
    }
    if current_frame + future_span(rate) > target.last_frame() {
        return Err(window_err("less than 4 s of future"));
    }
    let current = target.frame(current_frame).ok_or(window_err("frame outside track"))?;
    let anchor = target
        .anchor_at(current_frame)
        .ok_or(window_err("frame outside track"))?;
    let direction = target.driving_direction;

    let history = (0..HISTORY_POINTS)
        .rev()
        .map(|k| {
            let f = current_frame - grid_offset(GRID_STEP_S * k as f64, rate);
            canonicalize_frame(target, target.frame(f).expect("window checked"), &anchor)
        })
        .collect();
    let gt_trajectory = (1..=FUTURE_POINTS)
        .map(|k| {
            let f = current_frame + grid_offset(GRID_STEP_S * k as f64, rate);
            let s = canonicalize_frame(target, target.frame(f).expect("window checked"), &anchor);
            Point::new(s.x, s.y)
        })
        .collect();

    let (lane_position, lane_count) = lane_position(current.lane_id, meta, direction)?;
    let lane_width = meta
        .lane_width(current.lane_id, direction)
        .ok()
        .filter(|w| w.is_finite() && *w > 0.0)
        .unwrap_or(DEFAULT_LANE_WIDTH_M);
    let target_lane = meta.lane_index_from_left(current.lane_id, direction)? as i32;

    let mut candidates = Vec::new();
    for other in &recording.segments {
        if other.track_id == target.track_id || other.driving_direction != direction {
            continue;
        }
        let Some(f) = other.frame(current_frame) else {
            continue;
        };
        let lane = meta.lane_index_from_left(f.lane_id, direction)? as i32;
        let s = canonicalize_frame(other, f, &anchor);
        candidates.push(NeighborCandidate {
            track_id: other.track_id,
            vehicle_class: other.vehicle_class,
            lane_offset: lane - target_lane,
            x: s.x,
            y: s.y,
            speed: s.speed,
            length: other.length,
        });
    }
    let neighbors = assign_neighbors(target.length, &candidates);

    let events = detect_lane_changes(target, meta)?;
    let (gt_intention, t_bucket, advanced_prediction_time) = match upcoming_lane_change(&events, current_frame, rate) {
        Some((event, t)) => (
            event.direction.intention(),
            TBucket::for_lane_change(t).expect("t within horizon"),
            Some(t),
        ),
        None => (Intention::KeepLane, TBucket::LK, None),
    };

    Ok(SceneSnapshot {
        sample_id: sample_id(meta.recording_id, target.track_id, current_frame),
        history,
        target_class: target.vehicle_class,
        map: MapSummary {
            lane_count,
            lane_position,
            lane_width,
        },
        neighbors,
        gt_intention,
        gt_trajectory,
        t_bucket,
        advanced_prediction_time,
        synthetic: false,
        cot: None,
    })
}
