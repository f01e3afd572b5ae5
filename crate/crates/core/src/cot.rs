//! Rule-based reasoning annotations: notable features and one potential
//! behavior per snapshot.
//!
//! Thresholds are strict for the kinematic features (a value exactly at the
//! threshold does not trigger) and inclusive for the truck distance.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::recording::{LanePosition, VehicleClass};
use crate::scene::{Intention, SceneSnapshot, SlotDirection};

/// |lateral velocity| above this (km/h) is significant lateral movement.
pub const LATERAL_VELOCITY_KMH: f64 = 1.5;
/// Longitudinal acceleration above this (m/s²) is high acceleration.
pub const LONGITUDINAL_ACCELERATION: f64 = 0.4;
/// Longitudinal acceleration below this (m/s²) is significant deceleration.
pub const LONGITUDINAL_DECELERATION: f64 = -0.4;
/// A truck in the ahead slot at most this far (m, center to center) is notable.
pub const TRUCK_AHEAD_RANGE_M: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NotableFeature {
    SignificantLateralMovement,
    HighLongitudinalAcceleration,
    SignificantDeceleration,
    AheadFree,
    AheadBlocked,
    LeftFrontFree,
    LeftFrontBlocked,
    RightFrontFree,
    RightFrontBlocked,
    TruckAheadWithin100m,
    TargetIsTruck,
}

impl NotableFeature {
    pub const ALL: [NotableFeature; 11] = [
        NotableFeature::SignificantLateralMovement,
        NotableFeature::HighLongitudinalAcceleration,
        NotableFeature::SignificantDeceleration,
        NotableFeature::AheadFree,
        NotableFeature::AheadBlocked,
        NotableFeature::LeftFrontFree,
        NotableFeature::LeftFrontBlocked,
        NotableFeature::RightFrontFree,
        NotableFeature::RightFrontBlocked,
        NotableFeature::TruckAheadWithin100m,
        NotableFeature::TargetIsTruck,
    ];

    /// Wording used in rendered answers.
    pub fn phrase(self) -> &'static str {
        use NotableFeature::*;
        match self {
            SignificantLateralMovement => "significant lateral movement",
            HighLongitudinalAcceleration => "high longitudinal acceleration",
            SignificantDeceleration => "significant deceleration",
            AheadFree => "ahead is free",
            AheadBlocked => "ahead is blocked",
            LeftFrontFree => "left front is free",
            LeftFrontBlocked => "left front is blocked",
            RightFrontFree => "right front is free",
            RightFrontBlocked => "right front is blocked",
            TruckAheadWithin100m => "truck ahead within 100 m",
            TargetIsTruck => "target vehicle is a truck",
        }
    }

    pub fn from_phrase(text: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|f| f.phrase().eq_ignore_ascii_case(text))
    }
}

pub type FeatureSet = BTreeSet<NotableFeature>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PotentialBehavior {
    LeftOvertake,
    LeftToFastLane,
    IrregularLeft,
    RightOvertake,
    RightToSlowLane,
    IrregularRight,
    FollowingKeep,
    NormalKeep,
}

impl PotentialBehavior {
    pub const ALL: [PotentialBehavior; 8] = [
        PotentialBehavior::LeftOvertake,
        PotentialBehavior::LeftToFastLane,
        PotentialBehavior::IrregularLeft,
        PotentialBehavior::RightOvertake,
        PotentialBehavior::RightToSlowLane,
        PotentialBehavior::IrregularRight,
        PotentialBehavior::FollowingKeep,
        PotentialBehavior::NormalKeep,
    ];

    pub fn phrase(self) -> &'static str {
        use PotentialBehavior::*;
        match self {
            LeftOvertake => "Change to the left lane for overtaking",
            LeftToFastLane => "Change left to the fast lane",
            IrregularLeft => "Irregular left lane change",
            RightOvertake => "Change to the right lane for overtaking",
            RightToSlowLane => "Change right to the slow lane",
            IrregularRight => "Irregular right lane change",
            FollowingKeep => "Following and keep lane",
            NormalKeep => "Normal keep lane",
        }
    }

    pub fn from_phrase(text: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|b| b.phrase().eq_ignore_ascii_case(text))
    }

    /// The intention this behavior belongs to.
    pub fn family(self) -> Intention {
        use PotentialBehavior::*;
        match self {
            LeftOvertake | LeftToFastLane | IrregularLeft => Intention::LeftLaneChange,
            RightOvertake | RightToSlowLane | IrregularRight => Intention::RightLaneChange,
            FollowingKeep | NormalKeep => Intention::KeepLane,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CotAnnotation {
    pub features: FeatureSet,
    pub behavior: PotentialBehavior,
}

/// Notable features of `snapshot`, with the target-is-truck rule evaluated
/// against `intention` instead of the snapshot's ground truth.
pub fn features_for_intention(snapshot: &SceneSnapshot, intention: Intention) -> FeatureSet {
    use NotableFeature::*;
    let target = snapshot.current();
    let mut features = FeatureSet::new();
    if target.lateral_velocity.abs() > LATERAL_VELOCITY_KMH {
        features.insert(SignificantLateralMovement);
    }
    if target.longitudinal_acceleration > LONGITUDINAL_ACCELERATION {
        features.insert(HighLongitudinalAcceleration);
    }
    if target.longitudinal_acceleration < LONGITUDINAL_DECELERATION {
        features.insert(SignificantDeceleration);
    }
    for (slot, free, blocked) in [
        (SlotDirection::Ahead, AheadFree, AheadBlocked),
        (SlotDirection::LeftFront, LeftFrontFree, LeftFrontBlocked),
        (SlotDirection::RightFront, RightFrontFree, RightFrontBlocked),
    ] {
        if let Some(occupant) = snapshot.slot(slot) {
            features.insert(if occupant.speed > target.speed { free } else { blocked });
        }
    }
    if let Some(ahead) = snapshot.slot(SlotDirection::Ahead) {
        if ahead.vehicle_class == VehicleClass::Truck && ahead.relative_x <= TRUCK_AHEAD_RANGE_M {
            features.insert(TruckAheadWithin100m);
        }
    }
    if intention == Intention::RightLaneChange && snapshot.target_class == VehicleClass::Truck {
        features.insert(TargetIsTruck);
    }
    features
}

pub fn label_notable_features(snapshot: &SceneSnapshot) -> FeatureSet {
    features_for_intention(snapshot, snapshot.gt_intention)
}

/// First matching category, in listing order, within the intention's family.
pub fn behavior_for_intention(
    intention: Intention,
    lane_position: LanePosition,
    features: &FeatureSet,
) -> PotentialBehavior {
    use NotableFeature::*;
    use PotentialBehavior::*;
    let blocked = features.contains(&AheadBlocked);
    match intention {
        Intention::LeftLaneChange => {
            if blocked && matches!(lane_position, LanePosition::Rightmost | LanePosition::Middle) {
                LeftOvertake
            } else if features.contains(&HighLongitudinalAcceleration) {
                LeftToFastLane
            } else {
                IrregularLeft
            }
        }
        Intention::RightLaneChange => {
            if blocked && matches!(lane_position, LanePosition::Leftmost | LanePosition::Middle) {
                RightOvertake
            } else if features.contains(&SignificantDeceleration) || features.contains(&TargetIsTruck) {
                RightToSlowLane
            } else {
                IrregularRight
            }
        }
        Intention::KeepLane => {
            if blocked {
                FollowingKeep
            } else {
                NormalKeep
            }
        }
    }
}

pub fn classify_potential_behavior(snapshot: &SceneSnapshot, features: &FeatureSet) -> PotentialBehavior {
    behavior_for_intention(snapshot.gt_intention, snapshot.map.lane_position, features)
}

pub fn annotate(snapshot: &SceneSnapshot) -> CotAnnotation {
    let features = label_notable_features(snapshot);
    let behavior = classify_potential_behavior(snapshot, &features);
    CotAnnotation { features, behavior }
}
