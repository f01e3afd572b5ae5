//! Deterministic highD-format fixture: one 25 Hz recording, three lanes per
//! carriageway, 20 lane-keeping tracks and 12 single lane changes (6 left,
//! 6 right) with full 4 s lead-in windows.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use crate::recording::{load_recording, recording_paths, DrivingDirection, LoadError, Recording, VehicleClass};
use crate::scene::LaneChangeDirection;

pub const FIXTURE_FRAME_RATE: f64 = 25.0;
pub const FIXTURE_LANE_WIDTH: f64 = 3.75;
pub const FIXTURE_LK_TRACKS: usize = 20;
pub const FIXTURE_LC_TRACKS_PER_SIDE: usize = 6;
pub const LK_TRACK_FRAMES: i64 = 500;
pub const LC_TRACK_FRAMES: i64 = 300;
/// Lane-change frame, counted from the track's first frame.
pub const LC_FRAME_OFFSET: i64 = 150;
/// Duration (s) of the lateral maneuver, centered on the lane-change frame.
const MANEUVER_S: f64 = 5.0;

const UPPER_MARKINGS: [f64; 4] = [8.0, 11.75, 15.5, 19.25];
const LOWER_MARKINGS: [f64; 4] = [23.0, 26.75, 30.5, 34.25];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixtureTrack {
    pub id: u32,
    pub class: VehicleClass,
    pub direction: DrivingDirection,
    pub first_frame: i64,
    pub frames: i64,
    /// Starting lane, zero-based from the driver's left.
    pub lane_index: usize,
    /// m/s.
    pub speed: f64,
    /// m/s², along the direction of travel.
    pub acceleration: f64,
    pub lane_change: Option<LaneChangeDirection>,
}

impl FixtureTrack {
    pub fn lc_frame(&self) -> Option<i64> {
        self.lane_change.map(|_| self.first_frame + LC_FRAME_OFFSET)
    }

    fn dims(&self) -> (f64, f64) {
        match self.class {
            VehicleClass::Car => (4.5, 1.9),
            VehicleClass::Truck => (15.0, 2.5),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticRecording {
    pub recording_id: u32,
    pub tracks: Vec<FixtureTrack>,
    pub tracks_csv: String,
    pub tracks_meta_csv: String,
    pub recording_meta_csv: String,
}

impl SyntheticRecording {
    pub fn load(&self) -> Result<Recording, LoadError> {
        load_recording(
            self.tracks_csv.as_bytes(),
            self.tracks_meta_csv.as_bytes(),
            self.recording_meta_csv.as_bytes(),
        )
    }

    /// Writes the three CSV files under their highD names.
    pub fn write_to(&self, dir: &Path) -> io::Result<[PathBuf; 3]> {
        fs::create_dir_all(dir)?;
        let paths = recording_paths(dir, self.recording_id);
        fs::write(&paths[0], &self.tracks_csv)?;
        fs::write(&paths[1], &self.tracks_meta_csv)?;
        fs::write(&paths[2], &self.recording_meta_csv)?;
        Ok(paths)
    }
}

fn markings(direction: DrivingDirection) -> &'static [f64; 4] {
    match direction {
        DrivingDirection::Upper => &UPPER_MARKINGS,
        DrivingDirection::Lower => &LOWER_MARKINGS,
    }
}

/// Image-y sign of a move towards the driver's left.
fn left_sign(direction: DrivingDirection) -> f64 {
    match direction {
        DrivingDirection::Upper => 1.0,
        DrivingDirection::Lower => -1.0,
    }
}

fn lane_center_y(direction: DrivingDirection, lane_index: usize) -> f64 {
    let m = markings(direction);
    let k = match direction {
        DrivingDirection::Upper => m.len() - 2 - lane_index,
        DrivingDirection::Lower => lane_index,
    };
    (m[k] + m[k + 1]) / 2.0
}

fn lane_id_at(direction: DrivingDirection, y: f64) -> i32 {
    let m = markings(direction);
    let first = match direction {
        DrivingDirection::Upper => 2,
        DrivingDirection::Lower => UPPER_MARKINGS.len() as i32 + 2,
    };
    let k = m[1..m.len() - 1].iter().filter(|&&b| y >= b).count();
    first + k as i32
}

/// Quintic smoothstep and its first two derivatives.
fn ease(s: f64) -> (f64, f64, f64) {
    if s <= 0.0 {
        return (0.0, 0.0, 0.0);
    }
    if s >= 1.0 {
        return (1.0, 0.0, 0.0);
    }
    (
        s * s * s * (10.0 - 15.0 * s + 6.0 * s * s),
        30.0 * s * s * (1.0 - s) * (1.0 - s),
        60.0 * s * (1.0 - s) * (1.0 - 2.0 * s),
    )
}

fn layout() -> Vec<FixtureTrack> {
    let mut tracks = Vec::new();
    for i in 0..FIXTURE_LK_TRACKS {
        let direction = if i % 2 == 0 {
            DrivingDirection::Lower
        } else {
            DrivingDirection::Upper
        };
        tracks.push(FixtureTrack {
            id: tracks.len() as u32 + 1,
            class: if i % 5 == 3 {
                VehicleClass::Truck
            } else {
                VehicleClass::Car
            },
            direction,
            first_frame: 40 * i as i64,
            frames: LK_TRACK_FRAMES,
            lane_index: i % 3,
            speed: 24.0 + (i % 7) as f64 * 1.5,
            acceleration: [0.0, 0.5, -0.5, 0.0][i % 4],
            lane_change: None,
        });
    }
    for side in [LaneChangeDirection::Left, LaneChangeDirection::Right] {
        for j in 0..FIXTURE_LC_TRACKS_PER_SIDE {
            let lane_index = match side {
                LaneChangeDirection::Left => 1 + j % 2,
                LaneChangeDirection::Right => j % 2,
            };
            tracks.push(FixtureTrack {
                id: tracks.len() as u32 + 1,
                class: if j == 4 { VehicleClass::Truck } else { VehicleClass::Car },
                direction: if j % 3 == 0 {
                    DrivingDirection::Upper
                } else {
                    DrivingDirection::Lower
                },
                first_frame: 20 + 60 * j as i64 + if side == LaneChangeDirection::Right { 30 } else { 0 },
                frames: LC_TRACK_FRAMES,
                lane_index,
                speed: 27.0 + j as f64 * 1.2,
                acceleration: [0.0, 0.6, -0.6][j % 3],
                lane_change: Some(side),
            });
        }
    }
    tracks
}

fn write_track(out: &mut String, t: &FixtureTrack) {
    let rate = FIXTURE_FRAME_RATE;
    let (length, width) = t.dims();
    let heading = match t.direction {
        DrivingDirection::Upper => -1.0,
        DrivingDirection::Lower => 1.0,
    };
    let x0 = match t.direction {
        DrivingDirection::Upper => 420.0 - (t.id % 5) as f64 * 12.0,
        DrivingDirection::Lower => (t.id % 5) as f64 * 12.0,
    };
    let y0 = lane_center_y(t.direction, t.lane_index);
    let shift = match t.lane_change {
        Some(LaneChangeDirection::Left) => left_sign(t.direction) * FIXTURE_LANE_WIDTH,
        Some(LaneChangeDirection::Right) => -left_sign(t.direction) * FIXTURE_LANE_WIDTH,
        None => 0.0,
    };
    // Half a frame early so the marking is crossed strictly between frames.
    let t_mid = (LC_FRAME_OFFSET as f64 - 0.5) / rate;
    for k in 0..t.frames {
        let time = k as f64 / rate;
        let v = t.speed + t.acceleration * time;
        let along = t.speed * time + 0.5 * t.acceleration * time * time;
        let s = (time - t_mid) / MANEUVER_S + 0.5;
        let (e, de, dde) = ease(s);
        let cy = y0 + shift * e;
        let vy = shift * de / MANEUVER_S;
        let ay = shift * dde / (MANEUVER_S * MANEUVER_S);
        let cx = x0 + heading * along;
        let _ = writeln!(
            out,
            "{},{},{:.4},{:.4},{},{},{:.4},{:.4},{:.4},{:.4},{}",
            t.first_frame + k,
            t.id,
            cx - length / 2.0,
            cy - width / 2.0,
            length,
            width,
            heading * v,
            vy,
            heading * t.acceleration,
            ay,
            lane_id_at(t.direction, cy)
        );
    }
}

fn join(values: &[f64]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(";")
}

/// Builds the fixture recording with the given id.
pub fn fixture(recording_id: u32) -> SyntheticRecording {
    let tracks = layout();
    let mut tracks_csv =
        String::from("frame,id,x,y,width,height,xVelocity,yVelocity,xAcceleration,yAcceleration,laneId\n");
    let mut tracks_meta_csv =
        String::from("id,width,height,initialFrame,finalFrame,numFrames,class,drivingDirection\n");
    for t in &tracks {
        write_track(&mut tracks_csv, t);
        let (length, width) = t.dims();
        let _ = writeln!(
            tracks_meta_csv,
            "{},{},{},{},{},{},{},{}",
            t.id,
            length,
            width,
            t.first_frame,
            t.first_frame + t.frames - 1,
            t.frames,
            match t.class {
                VehicleClass::Car => "Car",
                VehicleClass::Truck => "Truck",
            },
            match t.direction {
                DrivingDirection::Upper => 1,
                DrivingDirection::Lower => 2,
            }
        );
    }
    let recording_meta_csv = format!(
        "id,frameRate,locationId,speedLimit,upperLaneMarkings,lowerLaneMarkings\n{},{},1,-1,{},{}\n",
        recording_id,
        FIXTURE_FRAME_RATE,
        join(&UPPER_MARKINGS),
        join(&LOWER_MARKINGS)
    );
    SyntheticRecording {
        recording_id,
        tracks,
        tracks_csv,
        tracks_meta_csv,
        recording_meta_csv,
    }
}
