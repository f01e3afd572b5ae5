//! Candidate enumeration and stratified, seed-deterministic sampling.
//!
//! Randomness: each stratum draws from its own ChaCha8 stream
//! (`ChaCha8Rng::seed_from_u64(seed)` with `set_stream(stratum index)`) and
//! selects indices with `rand::seq::index::sample` over the stratum's
//! candidates sorted by (recording, track, frame). Selected samples are emitted
//! in stratum order, then in that sorted order, so output is independent of
//! platform and hash ordering.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::recording::{InvalidLane, Recording};
use crate::scene::{
    build_snapshot, detect_lane_changes, future_span, grid_offset, has_window, history_span, upcoming_lane_change,
    Intention, SceneError, SceneSnapshot, TBucket, HORIZON_S,
};

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("unknown stratum `{0}` (expected LK or LLC_/RLC_ followed by T01, T12, T23, T34)")]
    UnknownStratum(String),
    #[error("plan: {0}")]
    Invalid(String),
    #[error("plan file: {0}")]
    Parse(#[from] toml::de::Error),
}

/// A sampling stratum: lane keeping, or a lane-change direction within one
/// T bucket.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Stratum {
    pub intention: Intention,
    pub bucket: TBucket,
}

impl Stratum {
    pub const LK: Stratum = Stratum {
        intention: Intention::KeepLane,
        bucket: TBucket::LK,
    };

    /// All nine strata in canonical order.
    pub fn all() -> Vec<Stratum> {
        let mut out = vec![Stratum::LK];
        for intention in [Intention::LeftLaneChange, Intention::RightLaneChange] {
            for bucket in TBucket::LANE_CHANGE {
                out.push(Stratum { intention, bucket });
            }
        }
        out
    }

    fn index(self) -> u64 {
        Stratum::all().iter().position(|s| *s == self).expect("valid stratum") as u64
    }

    pub fn of(snapshot: &SceneSnapshot) -> Stratum {
        Stratum {
            intention: snapshot.gt_intention,
            bucket: snapshot.t_bucket,
        }
    }
}

impl fmt::Display for Stratum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.intention {
            Intention::KeepLane => f.write_str("LK"),
            i => write!(f, "{}_{}", i.label(), self.bucket),
        }
    }
}

impl FromStr for Stratum {
    type Err = PlanError;

    fn from_str(s: &str) -> Result<Self, PlanError> {
        Stratum::all()
            .into_iter()
            .find(|st| st.to_string().eq_ignore_ascii_case(s))
            .ok_or_else(|| PlanError::UnknownStratum(s.to_string()))
    }
}

impl TryFrom<String> for Stratum {
    type Error = PlanError;

    fn try_from(s: String) -> Result<Self, PlanError> {
        s.parse()
    }
}

impl From<Stratum> for String {
    fn from(s: Stratum) -> String {
        s.to_string()
    }
}

/// Default spacing (s) between lane-keeping candidates of one track.
pub const DEFAULT_LK_SPACING_S: f64 = 4.0;

fn default_lk_spacing() -> f64 {
    DEFAULT_LK_SPACING_S
}

/// Requested sample counts per stratum plus candidate-generation settings.
///
/// ```toml
/// seed = 7
/// lk_spacing_s = 4.0
///
/// [counts]
/// LK = 48
/// LLC_T01 = 12
/// RLC_T34 = 12
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StratificationPlan {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Spacing (s) between lane-keeping candidates taken from one track.
    #[serde(default = "default_lk_spacing")]
    pub lk_spacing_s: f64,
    #[serde(default)]
    pub counts: BTreeMap<Stratum, usize>,
}

impl StratificationPlan {
    pub fn new(lk: usize, per_lane_change_bucket: usize) -> Self {
        let counts = Stratum::all()
            .into_iter()
            .map(|s| {
                let n = if s == Stratum::LK { lk } else { per_lane_change_bucket };
                (s, n)
            })
            .collect();
        Self {
            seed: None,
            lk_spacing_s: default_lk_spacing(),
            counts,
        }
    }

    /// 48 000 LK plus 12 000 per direction and bucket (144 000 total).
    pub fn highd_train() -> Self {
        Self::new(48_000, 12_000)
    }

    /// 8 000 LK plus 2 000 per direction and bucket (24 000 total).
    pub fn highd_test() -> Self {
        Self::new(8_000, 2_000)
    }

    /// Divides every count by `divisor` (rounding down).
    pub fn scaled_down(mut self, divisor: usize) -> Self {
        for n in self.counts.values_mut() {
            *n /= divisor.max(1);
        }
        self
    }

    pub fn from_toml(text: &str) -> Result<Self, PlanError> {
        let plan: Self = toml::from_str(text)?;
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<(), PlanError> {
        if !(self.lk_spacing_s.is_finite() && self.lk_spacing_s > 0.0) {
            return Err(PlanError::Invalid(format!(
                "lk_spacing_s must be positive, got {}",
                self.lk_spacing_s
            )));
        }
        Ok(())
    }

    pub fn requested(&self, stratum: Stratum) -> usize {
        self.counts.get(&stratum).copied().unwrap_or(0)
    }

    pub fn total(&self) -> usize {
        self.counts.values().sum()
    }
}

/// A frame eligible to become a sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub recording_id: u32,
    pub track_id: u32,
    pub frame: i64,
    pub stratum: Stratum,
    pub advanced_prediction_time: Option<f64>,
}

/// Candidates of one recording plus frames lost to short windows.
#[derive(Debug, Clone, Default)]
pub struct CandidateSet {
    pub candidates: Vec<Candidate>,
    /// Lane-change frames with T in [0, 4] s lacking 2 s history or 4 s future.
    pub skipped_window: usize,
}

/// Enumerates sample candidates of a recording.
///
/// Tracks whose lane id never changes give lane-keeping candidates, one every
/// `lk_spacing_s` starting at the first frame with a full window. Tracks with
/// lane changes give one candidate per frame whose next lane change is at most
/// 4 s away.
pub fn enumerate_candidates(recording: &Recording, lk_spacing_s: f64) -> Result<CandidateSet, InvalidLane> {
    let meta = &recording.meta;
    let rate = meta.frame_rate;
    let spacing = grid_offset(lk_spacing_s, rate).max(1);
    let mut set = CandidateSet::default();
    for seg in &recording.segments {
        let events = detect_lane_changes(seg, meta)?;
        let first = seg.first_frame() + history_span(rate);
        let last = seg.last_frame() - future_span(rate);
        if events.is_empty() {
            let mut frame = first;
            while frame <= last {
                set.candidates.push(Candidate {
                    recording_id: meta.recording_id,
                    track_id: seg.track_id,
                    frame,
                    stratum: Stratum::LK,
                    advanced_prediction_time: None,
                });
                frame += spacing;
            }
            continue;
        }
        for f in &seg.frames {
            let Some((event, t)) = upcoming_lane_change(&events, f.frame, rate) else {
                continue;
            };
            if !has_window(seg, f.frame, rate) {
                set.skipped_window += 1;
                continue;
            }
            let bucket = TBucket::for_lane_change(t).expect("t within horizon");
            debug_assert!(t <= HORIZON_S);
            set.candidates.push(Candidate {
                recording_id: meta.recording_id,
                track_id: seg.track_id,
                frame: f.frame,
                stratum: Stratum {
                    intention: event.direction.intention(),
                    bucket,
                },
                advanced_prediction_time: Some(t),
            });
        }
    }
    Ok(set)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StratumReport {
    pub stratum: Stratum,
    pub requested: usize,
    pub available: usize,
    pub selected: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplingReport {
    pub seed: u64,
    pub strata: Vec<StratumReport>,
    pub skipped_window: usize,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct SampledDataset {
    pub snapshots: Vec<SceneSnapshot>,
    pub report: SamplingReport,
}

/// Per-stratum candidate counts over all recordings (no sampling).
pub fn candidate_counts(
    recordings: &[Recording],
    lk_spacing_s: f64,
) -> Result<(BTreeMap<Stratum, usize>, usize), InvalidLane> {
    let mut counts: BTreeMap<Stratum, usize> = Stratum::all().into_iter().map(|s| (s, 0)).collect();
    let mut skipped = 0;
    for rec in recordings {
        let set = enumerate_candidates(rec, lk_spacing_s)?;
        skipped += set.skipped_window;
        for c in set.candidates {
            *counts.entry(c.stratum).or_default() += 1;
        }
    }
    Ok((counts, skipped))
}

/// Draws the plan's per-stratum counts uniformly without replacement.
/// Strata with too few candidates contribute everything they have and add a
/// warning to the report.
pub fn sample_dataset(
    recordings: &[Recording],
    plan: &StratificationPlan,
    seed: u64,
) -> Result<SampledDataset, SceneError> {
    let mut by_stratum: BTreeMap<Stratum, Vec<(usize, Candidate)>> = BTreeMap::new();
    let mut skipped_window = 0;
    for (ri, rec) in recordings.iter().enumerate() {
        let set = enumerate_candidates(rec, plan.lk_spacing_s)?;
        skipped_window += set.skipped_window;
        for c in set.candidates {
            by_stratum.entry(c.stratum).or_default().push((ri, c));
        }
    }

    let mut report = SamplingReport {
        seed,
        skipped_window,
        ..Default::default()
    };
    let mut snapshots = Vec::with_capacity(plan.total());
    for stratum in Stratum::all() {
        let requested = plan.requested(stratum);
        let mut pool = by_stratum.remove(&stratum).unwrap_or_default();
        pool.sort_by_key(|(_, c)| (c.recording_id, c.track_id, c.frame));
        let available = pool.len();
        let chosen: Vec<usize> = if requested >= available {
            (0..available).collect()
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(stratum.index());
            let mut idx = rand::seq::index::sample(&mut rng, available, requested).into_vec();
            idx.sort_unstable();
            idx
        };
        if requested > available {
            report.warnings.push(format!(
                "stratum {stratum}: requested {requested}, only {available} candidates"
            ));
        }
        let selected = chosen.len();
        for &i in &chosen {
            let (ri, c) = pool[i];
            let rec = &recordings[ri];
            let seg = rec.segment(c.track_id).ok_or(SceneError::UnknownTrack(c.track_id))?;
            snapshots.push(build_snapshot(rec, seg, c.frame)?);
        }
        report.strata.push(StratumReport {
            stratum,
            requested,
            available,
            selected,
        });
    }
    Ok(SampledDataset { snapshots, report })
}
