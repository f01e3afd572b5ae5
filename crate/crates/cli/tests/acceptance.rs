//! One line per acceptance criterion; exits non-zero if any fails.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use lanechange_core::codec::{
    assemble_llama_sample, parse_prediction, render_answer, render_user_message, PromptBundle, PromptMode,
};
use lanechange_core::cot::{
    annotate, classify_potential_behavior, label_notable_features, CotAnnotation, FeatureSet, NotableFeature,
    PotentialBehavior,
};
use lanechange_core::eval::{cot_score, emit_report, intention_metrics, trajectory_rmse, EvalReport, ReportFormat};
use lanechange_core::recording::VehicleClass;
use lanechange_core::safety::{generate_family, ScenarioFamily, TargetProfile};
use lanechange_core::scene::{advanced_prediction_time, Intention, Point, SlotDirection, TBucket};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Check = fn() -> Outcome;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_lanechange"))
}

fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/highd")
}

fn run(cmd: &mut Command) -> Result<String, String> {
    let out = cmd.output().map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!(
            "{:?} exited {:?}: {}",
            cmd.get_args().collect::<Vec<_>>(),
            out.status.code(),
            String::from_utf8_lossy(&out.stderr).trim()
        ));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn codec_round_trip() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let n = 2000;
    let mut failures = 0;
    for _ in 0..n {
        let features: FeatureSet = NotableFeature::ALL
            .iter()
            .copied()
            .filter(|_| rng.random_bool(0.3))
            .collect();
        let ann = CotAnnotation {
            features,
            behavior: PotentialBehavior::ALL[rng.random_range(0..PotentialBehavior::ALL.len())],
        };
        let intention = Intention::ALL[rng.random_range(0..3)];
        let traj: Vec<Point> = (0..8)
            .map(|_| {
                let c = |rng: &mut ChaCha8Rng| rng.random_range(-99_999i64..=99_999) as f64 / 100.0;
                Point::new(c(&mut rng), c(&mut rng))
            })
            .collect();
        let rec = parse_prediction(&render_answer(&ann, intention, &traj));
        let same = rec.prediction.as_ref().is_some_and(|p| {
            p.intention == intention && p.trajectory == traj && p.features == ann.features && p.behavior == ann.behavior
        });
        failures += usize::from(!same);
    }
    let secs = started.elapsed().as_secs_f64();
    ensure(failures == 0, || {
        format!("{failures} of {n} triples did not round-trip")
    })?;
    ensure(secs < 10.0, || format!("took {secs:.2} s"))?;
    Ok(format!("{n} triples, 0 failures, {secs:.2} s"))
}

fn labeler_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let n = 20_000;
    for i in 0..n {
        let s = common::random_labeler_snapshot(&mut rng, i);
        let want = common::oracle_features(&s);
        let got = label_notable_features(&s);
        ensure(got == want, || format!("scene {i}: labeler {got:?}, oracle {want:?}"))?;
        let b = classify_potential_behavior(&s, &got);
        let ob = common::oracle_behavior(s.gt_intention, s.map.lane_position, &want);
        ensure(b == ob, || format!("scene {i}: behavior {b:?}, oracle {ob:?}"))?;
    }
    // Exact thresholds sit on the quiet side.
    let mut boundary = 0;
    for (lat, acc) in [(1.5, 0.4), (-1.5, -0.4), (1.5f64.next_up(), 0.4f64.next_up())] {
        let mut s = common::base_snapshot("b", 100.0);
        let cur = s.history.last_mut().unwrap();
        cur.lateral_velocity = lat;
        cur.longitudinal_acceleration = acc;
        ensure(label_notable_features(&s) == common::oracle_features(&s), || {
            format!("boundary {lat} {acc}")
        })?;
        boundary += 1;
    }
    for d in [100.0, 100.0f64.next_up()] {
        let mut s = common::base_snapshot("t", 100.0);
        common::set_slot(
            &mut s,
            SlotDirection::Ahead,
            Some(common::occupant(2, VehicleClass::Truck, 90.0, d, 0.0)),
        );
        let got = label_notable_features(&s);
        ensure(got == common::oracle_features(&s), || format!("truck at {d}"))?;
        ensure(
            got.contains(&NotableFeature::TruckAheadWithin100m) == (d <= 100.0),
            || format!("truck at {d}"),
        )?;
        boundary += 1;
    }
    Ok(format!("{n} random scenes + {boundary} boundary cases, 100% agreement"))
}

fn metric_exactness() -> Outcome {
    use Intention::*;
    let mut pairs = Vec::new();
    for (gt, pred, n) in [
        (KeepLane, KeepLane, 8),
        (KeepLane, LeftLaneChange, 2),
        (LeftLaneChange, LeftLaneChange, 9),
        (LeftLaneChange, KeepLane, 1),
        (RightLaneChange, RightLaneChange, 10),
    ] {
        pairs.extend(std::iter::repeat_n((gt, pred), n));
    }
    let llc = intention_metrics(&pairs)
        .map_err(|e| e.to_string())?
        .class(LeftLaneChange)
        .prf;
    ensure((llc.precision - 9.0 / 11.0).abs() <= 1e-12, || {
        format!("LLC precision {}", llc.precision)
    })?;
    ensure((llc.recall - 0.9).abs() <= 1e-12, || {
        format!("LLC recall {}", llc.recall)
    })?;

    let gt: Vec<Point> = (1..=8).map(|k| Point::new(10.0 * k as f64, 0.0)).collect();
    let mut a = gt.clone();
    a[7].x += 3.0;
    let mut b = gt.clone();
    b[7].x -= 4.0;
    let (_, lon) = trajectory_rmse(&[(&gt, &a), (&gt, &b)], 4.0).map_err(|e| e.to_string())?;
    let want = (25.0f64 / 2.0).sqrt();
    ensure((lon - want).abs() <= 1e-12, || format!("RMSE {lon}, want {want}"))?;
    Ok(format!("LLC P {:.6} R {:.6}, RMSE {lon:.4}", llc.precision, llc.recall))
}

fn cot_rubric() -> Outcome {
    use NotableFeature::*;
    let gt = CotAnnotation {
        features: FeatureSet::from([AheadBlocked, LeftFrontFree]),
        behavior: PotentialBehavior::LeftOvertake,
    };
    let exact = cot_score(&gt, &gt.features, gt.behavior);
    let omitted = cot_score(&gt, &FeatureSet::from([AheadBlocked]), gt.behavior);
    let mut spurious = gt.features.clone();
    spurious.extend([TruckAheadWithin100m, SignificantLateralMovement]);
    let worst = cot_score(&gt, &spurious, PotentialBehavior::LeftToFastLane);
    ensure((exact, omitted, worst) == (100, 90, 30), || {
        format!("scores {exact}/{omitted}/{worst}")
    })?;
    Ok("exact 100, one omission 90, behavior + two spurious 30".into())
}

fn safety_grids() -> Outcome {
    let mut sizes = Vec::new();
    for family in ScenarioFamily::all_standard() {
        let snaps = generate_family(&family, TargetProfile::default()).map_err(|e| e.to_string())?;
        for s in &snaps {
            s.validate().map_err(|e| e.to_string())?;
            let ann = s.cot.clone().unwrap_or_else(|| annotate(s));
            let text = assemble_llama_sample(&PromptBundle::training(s, &ann));
            ensure(
                !text.is_empty() && !render_user_message(s, PromptMode::Inference).is_empty(),
                || format!("{} rendered empty", s.sample_id),
            )?;
        }
        sizes.push(snaps.len());
    }
    ensure(sizes == [60, 60, 60, 60], || format!("family sizes {sizes:?}"))?;
    Ok(format!(
        "{} scenarios (60 x 4), all valid and rendered",
        sizes.iter().sum::<usize>()
    ))
}

fn build_dataset(out: &Path, seed: u64) -> Result<(), String> {
    run(bin()
        .args(["build-dataset", "--preset", "train-small", "--seed", &seed.to_string()])
        .arg("--input")
        .arg(fixture_dir())
        .arg("--out")
        .arg(out))
    .map(drop)
}

fn dir_bytes(dir: &Path) -> Result<BTreeMap<String, Vec<u8>>, String> {
    let mut files = BTreeMap::new();
    for e in std::fs::read_dir(dir).map_err(|e| e.to_string())? {
        let e = e.map_err(|e| e.to_string())?;
        files.insert(
            e.file_name().to_string_lossy().into_owned(),
            std::fs::read(e.path()).map_err(|e| e.to_string())?,
        );
    }
    Ok(files)
}

fn dataset_construction() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let started = Instant::now();
    build_dataset(&a, 2024)?;
    let secs = started.elapsed().as_secs_f64();
    build_dataset(&b, 2024)?;
    let (fa, fb) = (dir_bytes(&a)?, dir_bytes(&b)?);
    ensure(fa == fb, || "two runs with the same seed differ".into())?;
    ensure(
        fa.contains_key("snapshots.jsonl") && fa.contains_key("train.jsonl"),
        || format!("files {:?}", fa.keys()),
    )?;

    let text = String::from_utf8_lossy(&fa["snapshots.jsonl"]).into_owned();
    let mut per: BTreeMap<String, usize> = BTreeMap::new();
    for line in text.lines() {
        let v: serde_json::Value = serde_json::from_str(line).map_err(|e| e.to_string())?;
        let key = match (v["gt_intention"].as_u64(), v["t_bucket"].as_str()) {
            (Some(0), Some("LK")) => "LK".to_string(),
            (Some(1), Some(b)) => format!("LLC_{b}"),
            (Some(2), Some(b)) => format!("RLC_{b}"),
            other => return Err(format!("unexpected stratum {other:?}")),
        };
        *per.entry(key).or_default() += 1;
    }
    let total: usize = per.values().sum();
    ensure(total == 144, || format!("{total} samples"))?;
    ensure(
        per.len() == 9 && per.iter().all(|(k, &n)| n == if k == "LK" { 48 } else { 12 }),
        || format!("strata {per:?}"),
    )?;
    let lines = String::from_utf8_lossy(&fa["train.jsonl"]).lines().count();
    ensure(lines == 144, || format!("train.jsonl has {lines} lines"))?;
    ensure(secs < 30.0, || format!("took {secs:.2} s"))?;
    Ok(format!(
        "144 samples (48 LK, 12 x 8 LC), byte-identical reruns, {secs:.2} s"
    ))
}

fn bucket_oracle(t: f64) -> Option<TBucket> {
    match t {
        t if !(0.0..=4.0).contains(&t) => None,
        t if t <= 1.0 => Some(TBucket::T01),
        t if t <= 2.0 => Some(TBucket::T12),
        t if t <= 3.0 => Some(TBucket::T23),
        _ => Some(TBucket::T34),
    }
}

fn advanced_time() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..1000 {
        let rate = rng.random_range(5.0..60.0);
        let cur = rng.random_range(0..1_000_000i64);
        let lc = cur + rng.random_range(0..(5.0 * rate) as i64);
        let t = advanced_prediction_time(lc, cur, rate).map_err(|e| e.to_string())?;
        let direct = (lc - cur) as f64 / rate;
        ensure(t == direct, || format!("T {t} vs {direct}"))?;
        ensure(TBucket::for_lane_change(t) == bucket_oracle(direct), || {
            format!("bucket of {t}")
        })?;
    }
    ensure(TBucket::for_lane_change(1.0) == Some(TBucket::T01), || "T = 1.0".into())?;
    ensure(TBucket::for_lane_change(1.04) == Some(TBucket::T12), || {
        "T = 1.04".into()
    })?;
    Ok("1000 triples agree; 1.0 -> T01, 1.04 -> T12".into())
}

fn read_report(dir: &Path) -> Result<EvalReport, String> {
    let text = std::fs::read_to_string(dir.join("report.json")).map_err(|e| e.to_string())?;
    serde_json::from_str(&text).map_err(|e| e.to_string())
}

fn end_to_end() -> Outcome {
    let started = Instant::now();
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let data = tmp.path().join("data");
    let preds = tmp.path().join("predictions.jsonl");
    let reports = tmp.path().join("reports");
    run(bin()
        .args(["build-dataset", "--preset", "test-small", "--seed", "11"])
        .arg("--input")
        .arg(fixture_dir())
        .arg("--out")
        .arg(&data))?;
    run(bin()
        .args(["predict", "--backend", "rule-based"])
        .arg("--snapshots")
        .arg(data.join("snapshots.jsonl"))
        .arg("--out")
        .arg(&preds))?;
    run(bin()
        .arg("evaluate")
        .arg("--predictions")
        .arg(&preds)
        .arg("--snapshots")
        .arg(data.join("snapshots.jsonl"))
        .arg("--out")
        .arg(&reports))?;
    for f in ReportFormat::ALL {
        ensure(reports.join(f.file_name()).is_file(), || {
            format!("missing {}", f.file_name())
        })?;
    }
    let r = read_report(&reports)?;
    ensure(r.failed_cases.intention == 0 && r.failed_cases.trajectory == 0, || {
        format!("{:?}", r.failed_cases)
    })?;
    ensure(
        r.intention.len() == 4 && r.intention.iter().all(|b| b.metrics.is_some()),
        || "bucket rows missing".into(),
    )?;
    let horizons: Vec<f64> = r
        .trajectory
        .iter()
        .filter(|h| h.samples > 0)
        .map(|h| h.horizon_s)
        .collect();
    ensure(horizons == [1.0, 2.0, 3.0, 4.0], || {
        format!("RMSE horizons {horizons:?}")
    })?;
    ensure(
        r.trajectory
            .iter()
            .all(|h| h.lateral.is_finite() && h.longitudinal.is_finite()),
        || "non-finite RMSE".into(),
    )?;
    let secs = started.elapsed().as_secs_f64();
    ensure(secs < 60.0, || format!("took {secs:.2} s"))?;
    Ok(format!(
        "{} samples, 0 failed, 3 formats, 4 buckets, RMSE 1-4 s, {secs:.2} s",
        r.total_records
    ))
}

fn failed_accounting() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let data = tmp.path().join("data");
    run(bin()
        .args(["build-dataset", "--preset", "test-small", "--seed", "3"])
        .arg("--input")
        .arg(fixture_dir())
        .arg("--out")
        .arg(&data))?;
    let snaps = data.join("snapshots.jsonl");
    let keep = render_answer(
        &CotAnnotation {
            features: FeatureSet::new(),
            behavior: PotentialBehavior::NormalKeep,
        },
        Intention::KeepLane,
        &(1..=8).map(|k| Point::new(14.0 * k as f64, 0.0)).collect::<Vec<_>>(),
    );
    let stub = common::Stub::start(move |n, _| {
        let text = if n < 4 {
            "Sorry, I am unable to help with that request."
        } else {
            keep.as_str()
        };
        (200, common::chat_body(text))
    });
    let preds = tmp.path().join("predictions.jsonl");
    let reports = tmp.path().join("reports");
    run(bin()
        .args([
            "predict",
            "--backend",
            "remote",
            "--model",
            "stub",
            "--parallel",
            "1",
            "--retries",
            "0",
        ])
        .arg("--endpoint")
        .arg(&stub.url)
        .arg("--snapshots")
        .arg(&snaps)
        .arg("--out")
        .arg(&preds))?;
    run(bin()
        .arg("evaluate")
        .arg("--predictions")
        .arg(&preds)
        .arg("--snapshots")
        .arg(&snaps)
        .arg("--out")
        .arg(&reports)
        .args(["--format", "json"]))?;
    let r = read_report(&reports)?;
    let overall = r.intention_overall.as_ref().ok_or("no overall metrics")?;
    ensure(r.failed_cases.intention == 4 && r.failed_cases.trajectory == 4, || {
        format!("{:?}", r.failed_cases)
    })?;
    ensure(overall.samples == r.total_records - 4, || {
        format!("{} scored of {}", overall.samples, r.total_records)
    })?;
    let cot = r.cot.as_ref().map_or(0, |c| c.samples);
    ensure(cot == r.total_records - 4, || format!("CoT over {cot}"))?;
    Ok(format!(
        "failed_cases = 4, {} of {} records scored",
        overall.samples, r.total_records
    ))
}

fn report_golden() -> Outcome {
    let golden = include_str!(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/../core/tests/golden/report_table.txt"
    ));
    let text = emit_report(&common::table_fixture_report(), ReportFormat::TextTable);
    ensure(text == golden, || "rendered table differs from golden file".into())?;
    let row = text
        .lines()
        .find(|l| l.starts_with("Macro avg."))
        .ok_or("no macro row")?;
    let f1: Vec<&str> = row
        .split('|')
        .skip(1)
        .filter_map(|c| c.split_whitespace().nth(2))
        .collect();
    ensure(f1 == ["98.5", "98.9", "98.1", "93.0", "97.1"], || {
        format!("macro F1 cells {f1:?}")
    })?;
    Ok("byte-identical; macro F1 98.5 98.9 98.1 93.0 avg 97.1".into())
}

fn main() {
    let criteria: [(&str, Check); 10] = [
        ("codec round-trip", codec_round_trip),
        ("labeler oracle equivalence", labeler_oracle),
        ("metric exactness", metric_exactness),
        ("CoT rubric", cot_rubric),
        ("safety grids", safety_grids),
        ("dataset construction", dataset_construction),
        ("advanced prediction time", advanced_time),
        ("end-to-end rule-based run", end_to_end),
        ("failed-case accounting", failed_accounting),
        ("report formatting fixture", report_golden),
    ];
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let started = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let took = started.elapsed();
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name}: {detail} [{}]", i + 1, ms(took)),
            Err(why) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {why} [{}]", i + 1, ms(took));
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

fn ms(d: Duration) -> String {
    format!("{} ms", d.as_millis())
}
