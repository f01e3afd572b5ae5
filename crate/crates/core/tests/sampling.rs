use std::collections::BTreeMap;

use lanechange_core::recording::VehicleClass;
use lanechange_core::sampling::{candidate_counts, sample_dataset, StratificationPlan, Stratum, DEFAULT_LK_SPACING_S};
use lanechange_core::scene::{advanced_prediction_time, assign_neighbors, NeighborCandidate, SlotDirection, TBucket};
use lanechange_core::synthetic::fixture;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn bucket_oracle(t: f64) -> Option<TBucket> {
    let edges = [
        (0.0, 1.0, TBucket::T01),
        (1.0, 2.0, TBucket::T12),
        (2.0, 3.0, TBucket::T23),
        (3.0, 4.0, TBucket::T34),
    ];
    if t == 0.0 {
        return Some(TBucket::T01);
    }
    edges.iter().find(|(lo, hi, _)| t > *lo && t <= *hi).map(|e| e.2)
}

#[test]
fn advanced_prediction_time_matches_arithmetic() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..1000 {
        let rate = [10.0, 25.0, 29.97, 30.0, 50.0][rng.random_range(0..5)];
        let cur = rng.random_range(0..100_000i64);
        let lc = cur + rng.random_range(0..(5.0 * rate) as i64);
        let t = advanced_prediction_time(lc, cur, rate).unwrap();
        assert_eq!(t, (lc - cur) as f64 / rate);
        assert_eq!(TBucket::for_lane_change(t), bucket_oracle(t), "T = {t}");
    }
    assert_eq!(TBucket::for_lane_change(0.0), Some(TBucket::T01));
    assert_eq!(TBucket::for_lane_change(1.0), Some(TBucket::T01));
    assert_eq!(TBucket::for_lane_change(1.04), Some(TBucket::T12));
    assert_eq!(
        TBucket::for_lane_change(advanced_prediction_time(26, 0, 25.0).unwrap()),
        Some(TBucket::T12)
    );
    assert_eq!(TBucket::for_lane_change(4.0), Some(TBucket::T34));
    assert_eq!(TBucket::for_lane_change(4.04), None);
    assert!(advanced_prediction_time(9, 10, 25.0).is_err());
}

fn slot_oracle(target_length: f64, c: &NeighborCandidate) -> Option<SlotDirection> {
    use SlotDirection::*;
    let side = c.x.abs() <= (target_length + c.length) / 2.0;
    let front = c.x > 0.0;
    Some(match c.lane_offset {
        0 if side => return None,
        0 => {
            if front {
                Ahead
            } else {
                Rear
            }
        }
        -1 => {
            if side {
                LeftSide
            } else if front {
                LeftFront
            } else {
                LeftRear
            }
        }
        1 => {
            if side {
                RightSide
            } else if front {
                RightFront
            } else {
                RightRear
            }
        }
        _ => return None,
    })
}

#[test]
fn neighbor_slots_match_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..3000 {
        let n = rng.random_range(0..12);
        let cands: Vec<NeighborCandidate> = (0..n)
            .map(|i| NeighborCandidate {
                track_id: 10 + i,
                vehicle_class: if rng.random_bool(0.2) {
                    VehicleClass::Truck
                } else {
                    VehicleClass::Car
                },
                lane_offset: rng.random_range(-2..=2),
                // Coarse grid so ties and overlap edges show up.
                x: rng.random_range(-20..=20) as f64 * 2.5,
                y: rng.random_range(-1.0..1.0),
                speed: rng.random_range(60.0..140.0),
                length: [4.5, 9.0, 16.0][rng.random_range(0..3)],
            })
            .collect();
        let target_len = [4.5, 12.0][rng.random_range(0..2)];
        let slots = assign_neighbors(target_len, &cands);
        assert_eq!(slots.len(), 8);
        for slot in &slots {
            let best = cands
                .iter()
                .filter(|c| slot_oracle(target_len, c) == Some(slot.direction))
                .min_by(|a, b| (a.x.abs(), a.track_id).partial_cmp(&(b.x.abs(), b.track_id)).unwrap());
            assert_eq!(
                slot.occupant.map(|o| o.track_id),
                best.map(|c| c.track_id),
                "{:?}",
                slot.direction
            );
        }
    }
}

#[test]
fn fixture_candidates_cover_every_stratum() {
    let rec = fixture(1).load().unwrap();
    let (counts, skipped) = candidate_counts(&[rec], DEFAULT_LK_SPACING_S).unwrap();
    assert_eq!(skipped, 0);
    let want: BTreeMap<Stratum, usize> = Stratum::all()
        .into_iter()
        .map(|s| {
            let n = match s.to_string().as_str() {
                "LK" => 80,
                "LLC_T01" | "RLC_T01" => 156,
                _ => 150,
            };
            (s, n)
        })
        .collect();
    assert_eq!(counts, want);
}

#[test]
fn scaled_plan_is_met_exactly_and_deterministically() {
    let recs = vec![fixture(1).load().unwrap()];
    let plan = StratificationPlan::highd_train().scaled_down(1000);
    let a = sample_dataset(&recs, &plan, 42).unwrap();
    let b = sample_dataset(&recs, &plan, 42).unwrap();
    assert_eq!(a.snapshots.len(), 144);
    assert!(a.report.warnings.is_empty());
    let mut per: BTreeMap<Stratum, usize> = BTreeMap::new();
    for s in &a.snapshots {
        s.validate().unwrap();
        *per.entry(Stratum::of(s)).or_default() += 1;
    }
    for s in Stratum::all() {
        assert_eq!(per[&s], plan.requested(s), "{s}");
    }
    assert_eq!(a.snapshots, b.snapshots);
    let c = sample_dataset(&recs, &plan, 43).unwrap();
    assert_ne!(
        a.snapshots.iter().map(|s| &s.sample_id).collect::<Vec<_>>(),
        c.snapshots.iter().map(|s| &s.sample_id).collect::<Vec<_>>()
    );
}
