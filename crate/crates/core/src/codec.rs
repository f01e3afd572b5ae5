//! Natural-language prompt rendering, Llama-2 sample assembly and the inverse
//! parser for model answers.
//!
//! The answer grammar is fixed:
//!
//! ```text
//! Thought:
//! - Notable features: ahead is blocked, truck ahead within 100 m.
//! - Potential behavior: Change to the left lane for overtaking.
//! Final answer:
//! - Intention: 1 (left lane change)
//! - Trajectory: [(11.20, 0.05), ..., (88.10, 3.70)]
//! ```
//!
//! Every number is printed with two decimals and a '.' separator.

use std::fmt::Write as _;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::cot::{CotAnnotation, FeatureSet, NotableFeature, PotentialBehavior};
use crate::scene::{Intention, Point, SceneSnapshot, FUTURE_POINTS};

pub const SYSTEM_MESSAGE: &str = "\
You are the behavior prediction module of an autonomous driving system. You observe one target vehicle on a highway together with its surroundings and predict its lane-change intention and its future trajectory.
Coordinate system: the origin is the current position of the target vehicle, the x axis points in its driving direction and the y axis points to its left. Distances are in meters, speeds in km/h, accelerations in m/s^2.
Output: first reason about the scene by listing the notable features and the potential behavior of the target vehicle, then give the intention (0: keep lane, 1: left lane change, 2: right lane change) and 8 trajectory points (x, y) at 0.5 s intervals over the next 4 seconds. Use exactly this layout:
Thought:
- Notable features: <comma-separated features, or none>.
- Potential behavior: <behavior>.
Final answer:
- Intention: <code> (<intention>)
- Trajectory: [(x1, y1), (x2, y2), (x3, y3), (x4, y4), (x5, y5), (x6, y6), (x7, y7), (x8, y8)]";

/// Appended to the user message at inference time.
pub const EXPLANATION_REQUEST: &str =
    "After the final answer, add a line starting with \"Explanation:\" that explains the reasons for your prediction.";

const FEATURES_MARKER: &str = "notable features:";
const BEHAVIOR_MARKER: &str = "potential behavior:";
const INTENTION_MARKER: &str = "intention:";
const TRAJECTORY_MARKER: &str = "trajectory:";

/// Two-decimal rendering without a negative zero.
pub fn fmt2(v: f64) -> String {
    let s = format!("{v:.2}");
    if s == "-0.00" {
        "0.00".to_string()
    } else {
        s
    }
}

fn fmt_points<'a>(points: impl IntoIterator<Item = &'a Point>) -> String {
    let body: Vec<String> = points
        .into_iter()
        .map(|p| format!("({}, {})", fmt2(p.x), fmt2(p.y)))
        .collect();
    format!("[{}]", body.join(", "))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PromptMode {
    Training,
    Inference,
}

/// Describes the scene: map, target state, then the eight neighbor slots.
pub fn render_user_message(snapshot: &SceneSnapshot, mode: PromptMode) -> String {
    let map = &snapshot.map;
    let cur = snapshot.current();
    let mut out = String::new();
    let lanes = if map.lane_count == 1 { "lane" } else { "lanes" };
    let _ = writeln!(
        out,
        "Map: the road has {} {lanes} in the target vehicle's driving direction, and the target vehicle is in the {} lane.",
        map.lane_count,
        map.lane_position.as_str()
    );
    let _ = writeln!(
        out,
        "Target vehicle: {}, speed {} km/h, lateral velocity {} km/h, longitudinal acceleration {} m/s^2.",
        snapshot.target_class,
        fmt2(cur.speed),
        fmt2(cur.lateral_velocity),
        fmt2(cur.longitudinal_acceleration)
    );
    let history: Vec<Point> = snapshot.history.iter().map(|s| Point::new(s.x, s.y)).collect();
    let _ = writeln!(
        out,
        "Historical trajectory over the past 2 seconds (t = -2.0, -1.5, -1.0, -0.5, 0.0 s): {}.",
        fmt_points(&history)
    );
    out.push_str("Surrounding vehicles:");
    for slot in &snapshot.neighbors {
        let _ = write!(out, "\n- {}: ", slot.direction.phrase());
        match &slot.occupant {
            None => out.push_str("no vehicle."),
            Some(o) => {
                let _ = write!(
                    out,
                    "{}, speed {} km/h, relative longitudinal distance {} m, relative lateral distance {} m.",
                    o.vehicle_class,
                    fmt2(o.speed),
                    fmt2(o.relative_x),
                    fmt2(o.relative_y)
                );
            }
        }
    }
    if mode == PromptMode::Inference {
        out.push('\n');
        out.push_str(EXPLANATION_REQUEST);
    }
    out
}

/// Reasoning block followed by the prediction, in the fixed answer grammar.
pub fn render_answer(annotation: &CotAnnotation, intention: Intention, trajectory: &[Point]) -> String {
    let features = if annotation.features.is_empty() {
        "none".to_string()
    } else {
        annotation
            .features
            .iter()
            .map(|f| f.phrase())
            .collect::<Vec<_>>()
            .join(", ")
    };
    format!(
        "Thought:\n- Notable features: {features}.\n- Potential behavior: {}.\nFinal answer:\n- Intention: {} ({})\n- Trajectory: {}",
        annotation.behavior.phrase(),
        intention.code(),
        intention.phrase(),
        fmt_points(trajectory)
    )
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub system_message: String,
    pub user_message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<String>,
}

impl PromptBundle {
    /// Training bundle; the answer is built from the snapshot's ground truth
    /// and the given annotation.
    pub fn training(snapshot: &SceneSnapshot, annotation: &CotAnnotation) -> Self {
        Self {
            system_message: SYSTEM_MESSAGE.to_string(),
            user_message: render_user_message(snapshot, PromptMode::Training),
            answer: Some(render_answer(
                annotation,
                snapshot.gt_intention,
                &snapshot.gt_trajectory,
            )),
        }
    }

    pub fn inference(snapshot: &SceneSnapshot) -> Self {
        Self {
            system_message: SYSTEM_MESSAGE.to_string(),
            user_message: render_user_message(snapshot, PromptMode::Inference),
            answer: None,
        }
    }
}

/// Llama-2 chat layout:
/// `<s>[INST] <<SYS>>\n{system}\n<</SYS>>\n\n{user} [/INST] {answer} </s>`,
/// or up to and including `[/INST] ` when there is no answer.
pub fn assemble_llama_sample(bundle: &PromptBundle) -> String {
    let mut out = format!(
        "<s>[INST] <<SYS>>\n{}\n<</SYS>>\n\n{} [/INST] ",
        bundle.system_message, bundle.user_message
    );
    if let Some(answer) = &bundle.answer {
        out.push_str(answer);
        out.push_str(" </s>");
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", content = "reason", rename_all = "snake_case")]
pub enum ParseStatus {
    Ok,
    Failed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructuredPrediction {
    pub intention: Intention,
    pub trajectory: Vec<Point>,
    pub features: FeatureSet,
    pub behavior: PotentialBehavior,
}

/// A predictor's output for one sample. `prediction` is present exactly when
/// `status` is ok; failed records keep the raw text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    #[serde(default)]
    pub sample_id: String,
    pub status: ParseStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prediction: Option<StructuredPrediction>,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub explanation: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_text: Option<String>,
}

impl PredictionRecord {
    pub fn ok(prediction: StructuredPrediction, explanation: String) -> Self {
        Self {
            sample_id: String::new(),
            status: ParseStatus::Ok,
            prediction: Some(prediction),
            explanation,
            raw_text: None,
        }
    }

    pub fn failed(reason: impl Into<String>, raw_text: impl Into<String>) -> Self {
        Self {
            sample_id: String::new(),
            status: ParseStatus::Failed(reason.into()),
            prediction: None,
            explanation: String::new(),
            raw_text: Some(raw_text.into()),
        }
    }

    pub fn with_sample_id(mut self, id: impl Into<String>) -> Self {
        self.sample_id = id.into();
        self
    }

    pub fn is_ok(&self) -> bool {
        self.status == ParseStatus::Ok
    }

    pub fn failure_reason(&self) -> Option<&str> {
        match &self.status {
            ParseStatus::Ok => None,
            ParseStatus::Failed(r) => Some(r),
        }
    }
}

static POINT_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\(\s*(-?\d+(?:\.\d+)?)\s*,\s*(-?\d+(?:\.\d+)?)\s*\)").expect("valid regex"));

/// Byte span of a marker's value: from after the marker to the end of its line.
struct Field<'a> {
    start: usize,
    end: usize,
    value: &'a str,
}

fn find_field<'a>(text: &'a str, lower: &str, marker: &str) -> Option<Field<'a>> {
    let at = lower.find(marker)?;
    let from = at + marker.len();
    let end = text[from..].find('\n').map_or(text.len(), |i| from + i);
    Some(Field {
        start: at,
        end,
        value: text[from..end].trim(),
    })
}

fn strip_period(s: &str) -> &str {
    s.trim().trim_end_matches('.').trim()
}

fn parse_intention(text: &str, lower: &str) -> Option<(Intention, Option<(usize, usize)>)> {
    let phrase_match = |hay: &str| {
        let hay = hay.to_ascii_lowercase();
        let found: Vec<Intention> = Intention::ALL
            .into_iter()
            .filter(|i| hay.contains(i.phrase()))
            .collect();
        (found.len() == 1).then(|| found[0])
    };
    if let Some(field) = find_field(text, lower, INTENTION_MARKER) {
        let span = Some((field.start, field.end));
        if let Some(i) = phrase_match(field.value) {
            return Some((i, span));
        }
        let digits = field.value.trim_start_matches(|c: char| !c.is_ascii_digit());
        let end = digits.find(|c: char| !c.is_ascii_digit()).unwrap_or(digits.len());
        return digits[..end]
            .parse()
            .ok()
            .and_then(Intention::from_code)
            .map(|i| (i, span));
    }
    phrase_match(text).map(|i| (i, None))
}

/// Parses model output into a structured record. Never panics; any missing
/// element yields a failed record naming it (intention, trajectory, features
/// and behavior are checked in that order).
pub fn parse_prediction(output_text: &str) -> PredictionRecord {
    let text = output_text;
    let lower = text.to_ascii_lowercase();
    let fail = |reason: String| PredictionRecord::failed(reason, text);

    let Some((intention, intention_span)) = parse_intention(text, &lower) else {
        return fail("intention not found".into());
    };

    let Some(at) = lower.find(TRAJECTORY_MARKER) else {
        return fail("trajectory not found".into());
    };
    let from = at + TRAJECTORY_MARKER.len();
    let rest = &text[from..];
    let trimmed = rest.trim_start();
    let traj_end = if trimmed.starts_with('[') {
        let offset = rest.len() - trimmed.len();
        trimmed.find(']').map_or(text.len(), |i| from + offset + i + 1)
    } else {
        rest.find('\n').map_or(text.len(), |i| from + i)
    };
    let mut trajectory = Vec::with_capacity(FUTURE_POINTS);
    for cap in POINT_RE.captures_iter(&text[from..traj_end]) {
        let (Ok(x), Ok(y)) = (cap[1].parse::<f64>(), cap[2].parse::<f64>()) else {
            return fail("trajectory: malformed number".into());
        };
        trajectory.push(Point::new(x, y));
    }
    if trajectory.len() != FUTURE_POINTS {
        return fail(format!(
            "trajectory: expected {FUTURE_POINTS} points, found {}",
            trajectory.len()
        ));
    }

    let Some(feat) = find_field(text, &lower, FEATURES_MARKER) else {
        return fail("notable features not found".into());
    };
    let mut features = FeatureSet::new();
    let listed = strip_period(feat.value);
    if !listed.eq_ignore_ascii_case("none") {
        for item in listed.split(',') {
            match NotableFeature::from_phrase(item.trim()) {
                Some(f) => {
                    features.insert(f);
                }
                None => return fail(format!("notable features: unrecognized {:?}", item.trim())),
            }
        }
    }

    let Some(beh) = find_field(text, &lower, BEHAVIOR_MARKER) else {
        return fail("potential behavior not found".into());
    };
    let Some(behavior) = PotentialBehavior::from_phrase(strip_period(beh.value)) else {
        return fail(format!(
            "potential behavior: unrecognized {:?}",
            strip_period(beh.value)
        ));
    };

    let mut starts = vec![at, feat.start, beh.start];
    let mut ends = vec![traj_end, feat.end, beh.end];
    if let Some((s, e)) = intention_span {
        starts.push(s);
        ends.push(e);
    }
    let block_start = starts.into_iter().min().unwrap_or(0);
    let block_end = ends.into_iter().max().unwrap_or(text.len());
    let explanation = explanation_outside(text, block_start, block_end);

    PredictionRecord::ok(
        StructuredPrediction {
            intention,
            trajectory,
            features,
            behavior,
        },
        explanation,
    )
}

/// Prose around the structured block, without the template headings.
fn explanation_outside(text: &str, start: usize, end: usize) -> String {
    let mut before = text[..start].trim_end().trim_end_matches('-').trim_end();
    if before.to_ascii_lowercase().ends_with("thought:") {
        before = before[..before.len() - "thought:".len()].trim_end();
    }
    let mut after = text[end..].trim();
    if after
        .get(.."explanation:".len())
        .is_some_and(|head| head.eq_ignore_ascii_case("explanation:"))
    {
        after = after["explanation:".len()..].trim_start();
    }
    match (before.trim().is_empty(), after.is_empty()) {
        (true, true) => String::new(),
        (true, false) => after.to_string(),
        (false, true) => before.trim().to_string(),
        (false, false) => format!("{}\n{}", before.trim(), after),
    }
}
