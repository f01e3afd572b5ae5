//! Deterministic baseline: a lane-change heuristic over the labeler's features
//! and a kinematic trajectory.

use crate::codec::{PredictionRecord, StructuredPrediction};
use crate::cot::{behavior_for_intention, features_for_intention, NotableFeature};
use crate::recording::{LanePosition, VehicleClass, MS_TO_KMH};
use crate::scene::{Intention, Point, SceneSnapshot, DEFAULT_LANE_WIDTH_M, FUTURE_POINTS, GRID_STEP_S, HORIZON_S};

/// Left when the left-front gap is faster and the lane ahead is blocked;
/// right for trucks or braking vehicles; otherwise keep lane. Changes towards
/// a lane that does not exist are never predicted.
pub fn heuristic_intention(snapshot: &SceneSnapshot) -> Intention {
    let features = features_for_intention(snapshot, Intention::KeepLane);
    let map = &snapshot.map;
    let has_left = map.lane_count > 1 && map.lane_position != LanePosition::Leftmost;
    let has_right = map.lane_count > 1 && map.lane_position != LanePosition::Rightmost;
    if has_left && features.contains(&NotableFeature::LeftFrontFree) && features.contains(&NotableFeature::AheadBlocked)
    {
        Intention::LeftLaneChange
    } else if has_right
        && (snapshot.target_class == VehicleClass::Truck || features.contains(&NotableFeature::SignificantDeceleration))
    {
        Intention::RightLaneChange
    } else {
        Intention::KeepLane
    }
}

/// Quintic smoothstep on [0, 1]: zero slope and curvature at both ends.
fn ease(s: f64) -> f64 {
    let s = s.clamp(0.0, 1.0);
    s * s * s * (10.0 - 15.0 * s + 6.0 * s * s)
}

/// Constant-acceleration longitudinal motion (stopping rather than reversing
/// under braking) and, for lane changes, a quintic lateral shift of one lane
/// width completed at the horizon.
pub fn kinematic_trajectory(snapshot: &SceneSnapshot, intention: Intention) -> Vec<Point> {
    let cur = snapshot.current();
    let v = cur.speed / MS_TO_KMH;
    let a = cur.longitudinal_acceleration;
    let width = Some(snapshot.map.lane_width)
        .filter(|w| w.is_finite() && *w > 0.0)
        .unwrap_or(DEFAULT_LANE_WIDTH_M);
    let side = match intention {
        Intention::KeepLane => 0.0,
        Intention::LeftLaneChange => width,
        Intention::RightLaneChange => -width,
    };
    (1..=FUTURE_POINTS)
        .map(|k| {
            let t = GRID_STEP_S * k as f64;
            let x = if a < 0.0 && t > v / -a {
                v * v / (-2.0 * a)
            } else {
                v * t + 0.5 * a * t * t
            };
            Point::new(x, side * ease(t / HORIZON_S))
        })
        .collect()
}

pub fn rule_based_predict(snapshot: &SceneSnapshot) -> PredictionRecord {
    let intention = heuristic_intention(snapshot);
    let features = features_for_intention(snapshot, intention);
    let behavior = behavior_for_intention(intention, snapshot.map.lane_position, &features);
    PredictionRecord::ok(
        StructuredPrediction {
            intention,
            trajectory: kinematic_trajectory(snapshot, intention),
            features,
            behavior,
        },
        String::new(),
    )
    .with_sample_id(snapshot.sample_id.clone())
}
