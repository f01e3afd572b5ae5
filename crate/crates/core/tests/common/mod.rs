//! Helpers shared by the integration tests and the acceptance harness:
//! snapshot builders, an independent transcription of the labeling rules, a
//! chat-completions stub server and the report formatting fixture.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;

use lanechange_core::cot::{NotableFeature as F, PotentialBehavior as B};
use lanechange_core::eval::{
    BucketMetrics, ClassMetrics, CotSummary, EvalReport, FailedCases, HorizonRmse, IntentionMetrics, Prf,
};
use lanechange_core::recording::{CanonicalState, LanePosition, VehicleClass};
use lanechange_core::scene::{
    Intention, MapSummary, NeighborSlot, Occupant, Point, SceneSnapshot, SlotDirection, TBucket,
};
use rand::Rng;

pub fn state(x: f64, speed: f64) -> CanonicalState {
    CanonicalState {
        x,
        y: 0.0,
        speed,
        lateral_velocity: 0.0,
        longitudinal_acceleration: 0.0,
    }
}

/// Valid lane-keeping snapshot: car at `speed` km/h in the middle of three
/// lanes, no neighbors, straight constant-speed ground truth.
pub fn base_snapshot(id: &str, speed: f64) -> SceneSnapshot {
    let v = speed / 3.6;
    SceneSnapshot {
        sample_id: id.to_string(),
        history: (0..5).map(|i| state(-v * 0.5 * (4 - i) as f64, speed)).collect(),
        target_class: VehicleClass::Car,
        map: MapSummary {
            lane_count: 3,
            lane_position: LanePosition::Middle,
            lane_width: 3.75,
        },
        neighbors: SlotDirection::ALL
            .into_iter()
            .map(|direction| NeighborSlot {
                direction,
                occupant: None,
            })
            .collect(),
        gt_intention: Intention::KeepLane,
        gt_trajectory: (1..=8).map(|k| Point::new(v * 0.5 * k as f64, 0.0)).collect(),
        t_bucket: TBucket::LK,
        advanced_prediction_time: None,
        synthetic: false,
        cot: None,
    }
}

pub fn set_slot(s: &mut SceneSnapshot, dir: SlotDirection, occupant: Option<Occupant>) {
    s.neighbors.iter_mut().find(|n| n.direction == dir).unwrap().occupant = occupant;
}

pub fn occupant(id: u32, class: VehicleClass, speed: f64, dx: f64, dy: f64) -> Occupant {
    Occupant {
        track_id: id,
        vehicle_class: class,
        speed,
        relative_x: dx,
        relative_y: dy,
    }
}

fn pick<T: Copy>(rng: &mut impl Rng, items: &[T]) -> T {
    items[rng.random_range(0..items.len())]
}

/// A value drawn so that thresholds are hit exactly, one ulp either side,
/// or uniformly in `[-range, range]`.
fn near(rng: &mut impl Rng, threshold: f64, range: f64) -> f64 {
    match rng.random_range(0..6) {
        0 => threshold,
        1 => -threshold,
        2 => threshold.next_up(),
        3 => threshold.next_down(),
        4 => -threshold.next_up(),
        _ => rng.random_range(-range..=range),
    }
}

/// Random scene for exercising the labeler, biased towards rule boundaries.
/// Structural snapshot invariants are not guaranteed.
pub fn random_labeler_snapshot(rng: &mut impl Rng, id: usize) -> SceneSnapshot {
    let speed = pick(rng, &[0.0, 60.0, 100.0, 100.0, 130.5]);
    let mut s = base_snapshot(&format!("rand_{id}"), speed);
    let cur = s.history.last_mut().unwrap();
    cur.speed = speed;
    cur.lateral_velocity = near(rng, 1.5, 6.0);
    cur.longitudinal_acceleration = near(rng, 0.4, 2.0);
    s.target_class = pick(rng, &[VehicleClass::Car, VehicleClass::Truck]);
    s.map.lane_position = pick(
        rng,
        &[LanePosition::Leftmost, LanePosition::Middle, LanePosition::Rightmost],
    );
    s.gt_intention = pick(rng, &Intention::ALL);
    let mut next_id = 10;
    for dir in SlotDirection::ALL {
        if rng.random_bool(0.4) {
            continue;
        }
        let other_speed = match rng.random_range(0..4) {
            0 => speed,
            1 => speed.next_up(),
            2 => (speed - 0.01).max(0.0),
            _ => rng.random_range(0.0..160.0),
        };
        let dx = match dir {
            SlotDirection::Ahead | SlotDirection::LeftFront | SlotDirection::RightFront => {
                let far = rng.random_range(1.0..200.0);
                pick(rng, &[100.0, 100.0f64.next_up(), 99.99, 5.0, far])
            }
            SlotDirection::LeftSide | SlotDirection::RightSide => rng.random_range(-4.0..4.0),
            _ => -rng.random_range(1.0..200.0),
        };
        let class = pick(rng, &[VehicleClass::Car, VehicleClass::Truck]);
        set_slot(&mut s, dir, Some(occupant(next_id, class, other_speed, dx, 0.0)));
        next_id += 1;
    }
    s
}

/// Notable features written straight from the rule text: strict thresholds
/// on lateral speed and acceleration, free/blocked by relative speed in the
/// three forward slots, a truck ahead up to and including 100 m, and the
/// truck target only when the intention is a right lane change.
pub fn oracle_features(s: &SceneSnapshot) -> BTreeSet<F> {
    let now = &s.history[s.history.len() - 1];
    let mut out = BTreeSet::new();
    if now.lateral_velocity.abs() > 1.5 {
        out.insert(F::SignificantLateralMovement);
    }
    if now.longitudinal_acceleration > 0.4 {
        out.insert(F::HighLongitudinalAcceleration);
    }
    if now.longitudinal_acceleration < -0.4 {
        out.insert(F::SignificantDeceleration);
    }
    let forward = [
        (SlotDirection::Ahead, F::AheadFree, F::AheadBlocked),
        (SlotDirection::LeftFront, F::LeftFrontFree, F::LeftFrontBlocked),
        (SlotDirection::RightFront, F::RightFrontFree, F::RightFrontBlocked),
    ];
    for n in &s.neighbors {
        let Some(o) = &n.occupant else { continue };
        for (dir, free, blocked) in forward {
            if n.direction == dir {
                out.insert(if o.speed > now.speed { free } else { blocked });
            }
        }
        if n.direction == SlotDirection::Ahead && o.vehicle_class == VehicleClass::Truck && o.relative_x <= 100.0 {
            out.insert(F::TruckAheadWithin100m);
        }
    }
    if s.gt_intention == Intention::RightLaneChange && s.target_class == VehicleClass::Truck {
        out.insert(F::TargetIsTruck);
    }
    out
}

/// Behavior table, first match per intention.
pub fn oracle_behavior(intention: Intention, lane: LanePosition, f: &BTreeSet<F>) -> B {
    let blocked = f.contains(&F::AheadBlocked);
    match intention {
        Intention::LeftLaneChange => {
            if blocked && (lane == LanePosition::Rightmost || lane == LanePosition::Middle) {
                B::LeftOvertake
            } else if f.contains(&F::HighLongitudinalAcceleration) {
                B::LeftToFastLane
            } else {
                B::IrregularLeft
            }
        }
        Intention::RightLaneChange => {
            if blocked && (lane == LanePosition::Leftmost || lane == LanePosition::Middle) {
                B::RightOvertake
            } else if f.contains(&F::SignificantDeceleration) || f.contains(&F::TargetIsTruck) {
                B::RightToSlowLane
            } else {
                B::IrregularRight
            }
        }
        Intention::KeepLane => {
            if blocked {
                B::FollowingKeep
            } else {
                B::NormalKeep
            }
        }
    }
}

/// Minimal chat-completions server. `respond` gets the request index and
/// body and returns (status, body).
pub struct Stub {
    pub url: String,
    server: Arc<tiny_http::Server>,
    thread: Option<JoinHandle<()>>,
    pub hits: Arc<AtomicUsize>,
    pub peak_in_flight: Arc<AtomicUsize>,
}

impl Stub {
    pub fn start<F>(respond: F) -> Stub
    where
        F: Fn(usize, &str) -> (u16, String) + Send + Sync + 'static,
    {
        let server = Arc::new(tiny_http::Server::http("127.0.0.1:0").expect("bind stub"));
        let port = server.server_addr().to_ip().expect("ip listener").port();
        let hits = Arc::new(AtomicUsize::new(0));
        let in_flight = Arc::new(AtomicUsize::new(0));
        let peak = Arc::new(AtomicUsize::new(0));
        let respond = Arc::new(respond);
        let thread = {
            let (server, hits, in_flight, peak) = (server.clone(), hits.clone(), in_flight.clone(), peak.clone());
            std::thread::spawn(move || {
                let mut workers = Vec::new();
                for mut req in server.incoming_requests() {
                    let (hits, in_flight, peak, respond) =
                        (hits.clone(), in_flight.clone(), peak.clone(), respond.clone());
                    workers.push(std::thread::spawn(move || {
                        let n = hits.fetch_add(1, Ordering::SeqCst);
                        let now = in_flight.fetch_add(1, Ordering::SeqCst) + 1;
                        peak.fetch_max(now, Ordering::SeqCst);
                        let mut body = String::new();
                        let _ = req.as_reader().read_to_string(&mut body);
                        let (status, text) = respond(n, &body);
                        in_flight.fetch_sub(1, Ordering::SeqCst);
                        let header =
                            tiny_http::Header::from_bytes(&b"Content-Type"[..], &b"application/json"[..]).unwrap();
                        let _ = req.respond(
                            tiny_http::Response::from_string(text)
                                .with_status_code(status)
                                .with_header(header),
                        );
                    }));
                }
                for w in workers {
                    let _ = w.join();
                }
            })
        };
        Stub {
            url: format!("http://127.0.0.1:{port}/v1/chat/completions"),
            server,
            thread: Some(thread),
            hits,
            peak_in_flight: peak,
        }
    }
}

impl Drop for Stub {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

/// Chat-completions response body carrying `content`.
pub fn chat_body(content: &str) -> String {
    serde_json::json!({
        "id": "stub",
        "object": "chat.completion",
        "choices": [{"index": 0, "message": {"role": "assistant", "content": content}, "finish_reason": "stop"}]
    })
    .to_string()
}

fn prf(p: f64, r: f64, f1: f64) -> Prf {
    Prf {
        precision: p / 100.0,
        recall: r / 100.0,
        f1: f1 / 100.0,
    }
}

/// (LK, LLC, RLC, macro) rows as published for the fine-tuned model.
fn metrics(rows: [[f64; 3]; 4]) -> IntentionMetrics {
    IntentionMetrics {
        classes: Intention::ALL
            .iter()
            .zip(&rows)
            .map(|(&class, r)| ClassMetrics {
                class,
                prf: prf(r[0], r[1], r[2]),
                support: 0,
            })
            .collect(),
        macro_avg: prf(rows[3][0], rows[3][1], rows[3][2]),
        samples: 0,
    }
}

/// Report carrying the published intention table of the fine-tuned model.
/// Only the rendering is under test; the numbers are not reproduced.
pub fn table_fixture_report() -> EvalReport {
    let buckets = [
        [
            [99.6, 96.4, 97.9],
            [97.9, 99.4, 98.6],
            [98.1, 99.8, 99.0],
            [98.5, 98.5, 98.5],
        ],
        [
            [99.9, 97.1, 98.5],
            [98.6, 99.6, 99.1],
            [98.2, 100.0, 99.1],
            [98.9, 98.9, 98.9],
        ],
        [
            [98.7, 96.7, 97.7],
            [97.7, 98.7, 98.2],
            [98.0, 99.0, 98.5],
            [98.1, 98.1, 98.1],
        ],
        [
            [85.9, 96.6, 90.9],
            [97.1, 89.3, 93.0],
            [97.2, 92.9, 95.0],
            [93.4, 92.9, 93.0],
        ],
    ];
    let avg = [
        [95.6, 96.7, 96.2],
        [97.8, 96.7, 97.3],
        [97.9, 97.9, 97.9],
        [97.1, 97.1, 97.1],
    ];
    EvalReport {
        intention: TBucket::LANE_CHANGE
            .iter()
            .zip(buckets)
            .map(|(&bucket, rows)| BucketMetrics {
                bucket,
                metrics: Some(metrics(rows)),
            })
            .collect(),
        intention_overall: Some(metrics(avg)),
        intention_bucket_mean: None,
        trajectory: vec![HorizonRmse {
            horizon_s: 1.0,
            lateral: 0.125,
            longitudinal: 0.5,
            samples: 2,
        }],
        cot: Some(CotSummary {
            mean: 95.0,
            samples: 2,
            distribution: BTreeMap::from([(90, 1), (100, 1)]),
        }),
        failed_cases: FailedCases::default(),
        sample_counts: BTreeMap::new(),
        total_records: 0,
        notes: Vec::new(),
    }
}
