//! Out-of-distribution probe scenarios: a mid-lane target changing lanes while
//! one neighbor brakes hard ahead or closes in fast from behind.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cot::annotate;
use crate::predict::kinematic_trajectory;
use crate::recording::{CanonicalState, LanePosition, VehicleClass, MS_TO_KMH};
use crate::scene::{
    LaneChangeDirection, MapSummary, NeighborSlot, Occupant, SceneSnapshot, SlotDirection, TBucket, GRID_STEP_S,
    HISTORY_POINTS,
};

/// Advanced prediction time assigned to every generated scenario (s).
pub const SCENARIO_T_S: f64 = 2.0;
const PROBE_TRACK_ID: u32 = 1;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ScenarioError {
    #[error("scenario family {family}: {grid} grid is empty")]
    EmptyGrid { family: ScenarioName, grid: &'static str },
    #[error("scenario family {family}: {reason}")]
    Invalid { family: ScenarioName, reason: String },
    #[error("unknown scenario family `{0}`")]
    UnknownFamily(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioName {
    LeftFrontBraking,
    RightFrontBraking,
    LeftRearAccelerating,
    RightRearAccelerating,
}

impl ScenarioName {
    pub const ALL: [ScenarioName; 4] = [
        ScenarioName::LeftFrontBraking,
        ScenarioName::RightFrontBraking,
        ScenarioName::LeftRearAccelerating,
        ScenarioName::RightRearAccelerating,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioName::LeftFrontBraking => "left_front_braking",
            ScenarioName::RightFrontBraking => "right_front_braking",
            ScenarioName::LeftRearAccelerating => "left_rear_accelerating",
            ScenarioName::RightRearAccelerating => "right_rear_accelerating",
        }
    }

    pub fn probe_slot(self) -> SlotDirection {
        match self {
            ScenarioName::LeftFrontBraking => SlotDirection::LeftFront,
            ScenarioName::RightFrontBraking => SlotDirection::RightFront,
            ScenarioName::LeftRearAccelerating => SlotDirection::LeftRear,
            ScenarioName::RightRearAccelerating => SlotDirection::RightRear,
        }
    }

    pub fn lc_direction(self) -> LaneChangeDirection {
        match self {
            ScenarioName::LeftFrontBraking | ScenarioName::LeftRearAccelerating => LaneChangeDirection::Left,
            ScenarioName::RightFrontBraking | ScenarioName::RightRearAccelerating => LaneChangeDirection::Right,
        }
    }
}

impl fmt::Display for ScenarioName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScenarioName {
    type Err = ScenarioError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|n| n.as_str() == s)
            .ok_or_else(|| ScenarioError::UnknownFamily(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioFamily {
    pub name: ScenarioName,
    /// Probe speeds (km/h).
    pub speed_grid: Vec<f64>,
    /// Probe distances, center to center along the road (m).
    pub distance_grid: Vec<f64>,
    pub lc_direction: LaneChangeDirection,
}

fn steps(from: u32, to: u32, step: u32) -> Vec<f64> {
    (from..=to).step_by(step as usize).map(f64::from).collect()
}

impl ScenarioFamily {
    /// Braking probes sweep 0..=50 km/h, accelerating probes 100..=150 km/h,
    /// both over 10..=100 m.
    pub fn standard(name: ScenarioName) -> Self {
        let speed_grid = match name {
            ScenarioName::LeftFrontBraking | ScenarioName::RightFrontBraking => steps(0, 50, 10),
            ScenarioName::LeftRearAccelerating | ScenarioName::RightRearAccelerating => steps(100, 150, 10),
        };
        Self {
            name,
            speed_grid,
            distance_grid: steps(10, 100, 10),
            lc_direction: name.lc_direction(),
        }
    }

    pub fn all_standard() -> Vec<Self> {
        ScenarioName::ALL.into_iter().map(Self::standard).collect()
    }

    pub fn cardinality(&self) -> usize {
        self.speed_grid.len() * self.distance_grid.len()
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let invalid = |reason: String| {
            Err(ScenarioError::Invalid {
                family: self.name,
                reason,
            })
        };
        for (grid, values) in [("speed", &self.speed_grid), ("distance", &self.distance_grid)] {
            if values.is_empty() {
                return Err(ScenarioError::EmptyGrid {
                    family: self.name,
                    grid,
                });
            }
            if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
                return invalid(format!("{grid} value {v} is not a finite non-negative number"));
            }
            let mut sorted = values.clone();
            sorted.sort_by(f64::total_cmp);
            if sorted.windows(2).any(|w| w[0] == w[1]) {
                return invalid(format!("{grid} grid has duplicate values"));
            }
        }
        if self.lc_direction != self.name.lc_direction() {
            return invalid("lane-change direction does not match the probe side".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetProfile {
    /// km/h.
    pub speed: f64,
    pub class: VehicleClass,
    pub lane_width: f64,
}

impl Default for TargetProfile {
    fn default() -> Self {
        Self {
            speed: 120.0,
            class: VehicleClass::Car,
            lane_width: 3.75,
        }
    }
}

fn fmt_grid(v: f64) -> String {
    if v.fract() == 0.0 {
        format!("{v:03.0}")
    } else {
        v.to_string().replace('.', "p")
    }
}

/// One snapshot per (speed, distance) pair, speeds outermost. The target sits
/// in the middle of three lanes with a constant-velocity history; the probe
/// occupies the family's slot and every other slot is empty.
pub fn generate_family(family: &ScenarioFamily, target: TargetProfile) -> Result<Vec<SceneSnapshot>, ScenarioError> {
    family.validate()?;
    if !(target.speed.is_finite() && target.speed >= 0.0 && target.lane_width.is_finite() && target.lane_width > 0.0) {
        return Err(ScenarioError::Invalid {
            family: family.name,
            reason: "target speed and lane width must be finite, speed non-negative and width positive".into(),
        });
    }
    let slot = family.name.probe_slot();
    let (ahead, side) = match slot {
        SlotDirection::LeftFront => (1.0, 1.0),
        SlotDirection::RightFront => (1.0, -1.0),
        SlotDirection::LeftRear => (-1.0, 1.0),
        _ => (-1.0, -1.0),
    };
    let intention = family.lc_direction.intention();
    let v = target.speed / MS_TO_KMH;
    let history: Vec<CanonicalState> = (0..HISTORY_POINTS)
        .map(|i| CanonicalState {
            x: -v * GRID_STEP_S * (HISTORY_POINTS - 1 - i) as f64,
            y: 0.0,
            speed: target.speed,
            lateral_velocity: 0.0,
            longitudinal_acceleration: 0.0,
        })
        .collect();
    let map = MapSummary {
        lane_count: 3,
        lane_position: LanePosition::Middle,
        lane_width: target.lane_width,
    };

    let mut out = Vec::with_capacity(family.cardinality());
    for &speed in &family.speed_grid {
        for &distance in &family.distance_grid {
            let neighbors = SlotDirection::ALL
                .into_iter()
                .map(|direction| NeighborSlot {
                    direction,
                    occupant: (direction == slot).then_some(Occupant {
                        track_id: PROBE_TRACK_ID,
                        vehicle_class: VehicleClass::Car,
                        speed,
                        relative_x: ahead * distance,
                        relative_y: side * target.lane_width,
                    }),
                })
                .collect();
            let mut snapshot = SceneSnapshot {
                sample_id: format!("safety_{}_v{}_d{}", family.name, fmt_grid(speed), fmt_grid(distance)),
                history: history.clone(),
                target_class: target.class,
                map,
                neighbors,
                gt_intention: intention,
                gt_trajectory: Vec::new(),
                t_bucket: TBucket::T12,
                advanced_prediction_time: Some(SCENARIO_T_S),
                synthetic: true,
                cot: None,
            };
            snapshot.gt_trajectory = kinematic_trajectory(&snapshot, intention);
            snapshot.cot = Some(annotate(&snapshot));
            out.push(snapshot);
        }
    }
    Ok(out)
}
