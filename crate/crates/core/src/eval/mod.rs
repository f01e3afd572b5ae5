//! Intention precision/recall/F1, per-horizon trajectory RMSE, CoT scoring and
//! the aggregated [`EvalReport`].

mod report;

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use report::{emit_report, ReportFormat};

use crate::codec::PredictionRecord;
use crate::cot::{CotAnnotation, FeatureSet, PotentialBehavior};
use crate::sampling::Stratum;
use crate::scene::{Intention, Point, SceneSnapshot, TBucket, GRID_STEP_S};

/// Horizons (s) at which trajectory RMSE is reported.
pub const RMSE_HORIZONS: [f64; 4] = [1.0, 2.0, 3.0, 4.0];

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("no samples to evaluate")]
    Empty,
    #[error("trajectory shape mismatch: ground truth has {gt} points, prediction {pred}")]
    Shape { gt: usize, pred: usize },
    #[error("no trajectory point at horizon {0} s")]
    Horizon(String),
    #[error("duplicate sample id `{0}`")]
    DuplicateSample(String),
    #[error("sample `{0}` has a prediction but no snapshot")]
    MissingSnapshot(String),
    #[error("sample `{0}` has a snapshot but no prediction")]
    MissingPrediction(String),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    fn mean(items: impl IntoIterator<Item = Prf>) -> Prf {
        let (mut acc, mut n) = (Prf::default(), 0usize);
        for p in items {
            acc.precision += p.precision;
            acc.recall += p.recall;
            acc.f1 += p.f1;
            n += 1;
        }
        if n > 0 {
            let n = n as f64;
            acc.precision /= n;
            acc.recall /= n;
            acc.f1 /= n;
        }
        acc
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: Intention,
    #[serde(flatten)]
    pub prf: Prf,
    /// Ground-truth count of the class.
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntentionMetrics {
    /// LK, LLC, RLC in that order.
    pub classes: Vec<ClassMetrics>,
    /// Unweighted mean of the per-class values.
    pub macro_avg: Prf,
    pub samples: usize,
}

impl IntentionMetrics {
    pub fn class(&self, class: Intention) -> &ClassMetrics {
        &self.classes[class.code() as usize]
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Per-class and macro precision, recall and F1 over (ground truth,
/// prediction) pairs. Zero denominators give 0.
pub fn intention_metrics(pairs: &[(Intention, Intention)]) -> Result<IntentionMetrics, EvalError> {
    if pairs.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut confusion = [[0usize; 3]; 3];
    for &(gt, pred) in pairs {
        confusion[gt.code() as usize][pred.code() as usize] += 1;
    }
    let classes: Vec<ClassMetrics> = Intention::ALL
        .iter()
        .map(|&class| {
            let c = class.code() as usize;
            let tp = confusion[c][c];
            let predicted: usize = (0..3).map(|g| confusion[g][c]).sum();
            let actual: usize = confusion[c].iter().sum();
            let precision = ratio(tp, predicted);
            let recall = ratio(tp, actual);
            let f1 = if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            ClassMetrics {
                class,
                prf: Prf { precision, recall, f1 },
                support: actual,
            }
        })
        .collect();
    let macro_avg = Prf::mean(classes.iter().map(|c| c.prf));
    Ok(IntentionMetrics {
        classes,
        macro_avg,
        samples: pairs.len(),
    })
}

fn horizon_index(horizon_s: f64, len: usize) -> Result<usize, EvalError> {
    let steps = horizon_s / GRID_STEP_S;
    let k = steps.round();
    if !(k >= 1.0 && (steps - k).abs() < 1e-9 && (k as usize) <= len) {
        return Err(EvalError::Horizon(horizon_s.to_string()));
    }
    Ok(k as usize - 1)
}

/// Lateral (y) and longitudinal (x) RMSE at the single grid point at
/// `horizon_s`, across all pairs.
pub fn trajectory_rmse(pairs: &[(&[Point], &[Point])], horizon_s: f64) -> Result<(f64, f64), EvalError> {
    if pairs.is_empty() {
        return Err(EvalError::Empty);
    }
    let (mut lat, mut lon) = (0.0, 0.0);
    for (gt, pred) in pairs {
        if gt.len() != pred.len() {
            return Err(EvalError::Shape {
                gt: gt.len(),
                pred: pred.len(),
            });
        }
        let i = horizon_index(horizon_s, gt.len())?;
        let dy = pred[i].y - gt[i].y;
        let dx = pred[i].x - gt[i].x;
        lat += dy * dy;
        lon += dx * dx;
    }
    let n = pairs.len() as f64;
    Ok(((lat / n).sqrt(), (lon / n).sqrt()))
}

/// 100 minus 10 per feature in the symmetric difference minus 50 for a wrong
/// behavior, floored at 0.
pub fn cot_score(gt: &CotAnnotation, features: &FeatureSet, behavior: PotentialBehavior) -> u32 {
    let feature_errors = gt.features.symmetric_difference(features).count() as i64;
    let behavior_error = i64::from(gt.behavior != behavior);
    (100 - 10 * feature_errors - 50 * behavior_error).max(0) as u32
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketMetrics {
    pub bucket: TBucket,
    /// None when the bucket has no successfully parsed samples.
    pub metrics: Option<IntentionMetrics>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HorizonRmse {
    pub horizon_s: f64,
    pub lateral: f64,
    pub longitudinal: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CotSummary {
    pub mean: f64,
    pub samples: usize,
    /// Score value to count.
    pub distribution: BTreeMap<u32, usize>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailedCases {
    pub intention: usize,
    pub trajectory: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// One entry per lane-change bucket; each includes every LK sample.
    pub intention: Vec<BucketMetrics>,
    /// Pooled over all samples.
    pub intention_overall: Option<IntentionMetrics>,
    /// Per-class mean of the bucket metrics.
    pub intention_bucket_mean: Option<IntentionMetrics>,
    pub trajectory: Vec<HorizonRmse>,
    pub cot: Option<CotSummary>,
    pub failed_cases: FailedCases,
    pub sample_counts: BTreeMap<Stratum, usize>,
    pub total_records: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

fn bucket_mean(buckets: &[BucketMetrics]) -> Option<IntentionMetrics> {
    let present: Vec<&IntentionMetrics> = buckets.iter().filter_map(|b| b.metrics.as_ref()).collect();
    if present.is_empty() {
        return None;
    }
    let classes = Intention::ALL
        .iter()
        .map(|&class| ClassMetrics {
            class,
            prf: Prf::mean(present.iter().map(|m| m.class(class).prf)),
            support: present.iter().map(|m| m.class(class).support).sum(),
        })
        .collect();
    Some(IntentionMetrics {
        classes,
        macro_avg: Prf::mean(present.iter().map(|m| m.macro_avg)),
        samples: present.iter().map(|m| m.samples).sum(),
    })
}

/// Joins predictions to snapshots by sample id and computes every metric.
///
/// Failed records are counted in `failed_cases` and left out of all metric
/// denominators. Each lane-change bucket is evaluated together with the whole
/// lane-keeping set. Synthetic snapshots are excluded from trajectory RMSE.
pub fn build_report(snapshots: &[SceneSnapshot], predictions: &[PredictionRecord]) -> Result<EvalReport, EvalError> {
    if snapshots.is_empty() && predictions.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut by_id: HashMap<&str, &SceneSnapshot> = HashMap::with_capacity(snapshots.len());
    for s in snapshots {
        if by_id.insert(&s.sample_id, s).is_some() {
            return Err(EvalError::DuplicateSample(s.sample_id.clone()));
        }
    }
    let mut joined: Vec<(&SceneSnapshot, &PredictionRecord)> = Vec::with_capacity(predictions.len());
    let mut seen: HashMap<&str, ()> = HashMap::with_capacity(predictions.len());
    for p in predictions {
        if seen.insert(&p.sample_id, ()).is_some() {
            return Err(EvalError::DuplicateSample(p.sample_id.clone()));
        }
        let s = by_id
            .get(p.sample_id.as_str())
            .ok_or_else(|| EvalError::MissingSnapshot(p.sample_id.clone()))?;
        joined.push((s, p));
    }
    if let Some(s) = snapshots.iter().find(|s| !seen.contains_key(s.sample_id.as_str())) {
        return Err(EvalError::MissingPrediction(s.sample_id.clone()));
    }
    // Fixed summation order keeps results independent of input order.
    joined.sort_by(|a, b| a.0.sample_id.cmp(&b.0.sample_id));

    let mut sample_counts: BTreeMap<Stratum, usize> = BTreeMap::new();
    for (s, _) in &joined {
        *sample_counts.entry(Stratum::of(s)).or_default() += 1;
    }

    let ok: Vec<_> = joined
        .iter()
        .filter_map(|(s, p)| p.prediction.as_ref().filter(|_| p.is_ok()).map(|pred| (*s, pred)))
        .collect();
    let failed = joined.len() - ok.len();

    let pairs_where = |keep: &dyn Fn(&SceneSnapshot) -> bool| -> Vec<(Intention, Intention)> {
        ok.iter()
            .filter(|(s, _)| keep(s))
            .map(|(s, p)| (s.gt_intention, p.intention))
            .collect()
    };
    let intention: Vec<BucketMetrics> = TBucket::LANE_CHANGE
        .iter()
        .map(|&bucket| BucketMetrics {
            bucket,
            metrics: intention_metrics(&pairs_where(&|s| s.t_bucket == bucket || s.t_bucket == TBucket::LK)).ok(),
        })
        .collect();
    let intention_overall = intention_metrics(&pairs_where(&|_| true)).ok();
    let intention_bucket_mean = bucket_mean(&intention);

    let traj_pairs: Vec<(&[Point], &[Point])> = ok
        .iter()
        .filter(|(s, _)| !s.synthetic)
        .map(|(s, p)| (s.gt_trajectory.as_slice(), p.trajectory.as_slice()))
        .collect();
    let mut trajectory = Vec::new();
    if !traj_pairs.is_empty() {
        for h in RMSE_HORIZONS {
            let (lateral, longitudinal) = trajectory_rmse(&traj_pairs, h)?;
            trajectory.push(HorizonRmse {
                horizon_s: h,
                lateral,
                longitudinal,
                samples: traj_pairs.len(),
            });
        }
    }

    let scores: Vec<u32> = ok
        .iter()
        .filter_map(|(s, p)| s.cot.as_ref().map(|gt| cot_score(gt, &p.features, p.behavior)))
        .collect();
    let cot = (!scores.is_empty()).then(|| {
        let mut distribution = BTreeMap::new();
        for &s in &scores {
            *distribution.entry(s).or_default() += 1;
        }
        CotSummary {
            mean: scores.iter().map(|&s| f64::from(s)).sum::<f64>() / scores.len() as f64,
            samples: scores.len(),
            distribution,
        }
    });

    let mut notes = Vec::new();
    if joined.iter().any(|(s, _)| s.synthetic) {
        notes.push(
            "synthetic scenarios present: their ground truth is illustrative, they are excluded from trajectory RMSE and have no pass/fail criterion"
                .to_string(),
        );
    }

    Ok(EvalReport {
        intention,
        intention_overall,
        intention_bucket_mean,
        trajectory,
        cot,
        failed_cases: FailedCases {
            intention: failed,
            trajectory: failed,
        },
        sample_counts,
        total_records: joined.len(),
        notes,
    })
}
