use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::Args;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use segopt::activity::{
    canonical_training_set, detect_activity_change, extract_mv_features, regions, ActivityClassifier, ActivityLabel,
    ActivityPolicy, Sample, DEFAULT_ALPHA, DEFAULT_CHANGE_THRESHOLD, DEFAULT_K, DEFAULT_WINDOW,
};
use segopt::records::{read_records, write_records, MotionVectorRecord, PuCountRecord, ScheduleEntry, MOTION_VECTORS, PU_COUNTS, SCHEDULE};
use segopt::Error;

use crate::failure::Failure;
use crate::inputs::load_config;

#[derive(Args, Debug)]
pub struct ClassifyArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Per-block motion vectors.
    #[arg(long)]
    pub motion_vectors: PathBuf,
    /// Prediction-unit count per frame.
    #[arg(long)]
    pub pu_counts: PathBuf,
    /// shields, parkrun, a policy named in the config, or a JSON file.
    #[arg(long)]
    pub policy: String,
    /// Labelled motion fields; synthetic canonical fields when omitted.
    #[arg(long)]
    pub training: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_K)]
    pub k: usize,
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    pub alpha: f64,
    /// Relative PU-count change that marks an activity boundary.
    #[arg(long, default_value_t = DEFAULT_CHANGE_THRESHOLD)]
    pub threshold: f64,
    /// Frames averaged on each side of a candidate boundary.
    #[arg(long, default_value_t = DEFAULT_WINDOW)]
    pub window: usize,
    /// Seed for the canonical training fields.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Constraint schedule for `optimize --constraint-schedule`.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

/// One labelled motion field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingRecord {
    pub label: ActivityLabel,
    pub vectors: Vec<(f64, f64)>,
}

const CANONICAL_PER_LABEL: usize = 12;
const CANONICAL_SIGMA: f64 = 0.5;

fn training(args: &ClassifyArgs) -> Result<Vec<Sample>, Failure> {
    match &args.training {
        Some(path) => {
            let rows: Vec<TrainingRecord> = read_records(path, "training")?;
            Ok(rows
                .into_iter()
                .map(|r| (r.label, extract_mv_features(&r.vectors, 0.0).vector()))
                .collect())
        }
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
            Ok(canonical_training_set(CANONICAL_PER_LABEL, CANONICAL_SIGMA, &mut rng))
        }
    }
}

pub fn load_policy(spec: &str, config_path: Option<&Path>) -> Result<ActivityPolicy, Failure> {
    match spec.to_ascii_lowercase().as_str() {
        "shields" => return Ok(ActivityPolicy::shields()),
        "parkrun" | "park-run" => return Ok(ActivityPolicy::parkrun()),
        _ => {}
    }
    let config = load_config(config_path)?;
    let path = config.policies.get(spec).cloned().unwrap_or_else(|| PathBuf::from(spec));
    let text = std::fs::read_to_string(&path).map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::data(format!("{}: {e}", path.display())))
}

fn pu_series(path: &Path) -> Result<Vec<f64>, Failure> {
    let mut rows: Vec<PuCountRecord> = read_records(path, PU_COUNTS)?;
    if rows.is_empty() {
        return Err(Error::EmptyInput("PU counts").into());
    }
    rows.sort_by_key(|r| r.frame);
    for (i, r) in rows.iter().enumerate() {
        if r.frame != i {
            return Err(Failure::data(format!(
                "{}: PU counts must cover frames 0.. without gaps; frame {i} is {}",
                path.display(),
                if r.frame < i { "repeated" } else { "missing" }
            )));
        }
    }
    Ok(rows.into_iter().map(|r| r.pu_count).collect())
}

pub fn classify(args: &ClassifyArgs) -> Result<Vec<ScheduleEntry>, Failure> {
    let mvs: Vec<MotionVectorRecord> = read_records(&args.motion_vectors, MOTION_VECTORS)?;
    if mvs.is_empty() {
        return Err(Error::EmptyInput("motion vectors").into());
    }
    let pu = pu_series(&args.pu_counts)?;
    let frames = pu.len();
    if let Some(mv) = mvs.iter().find(|m| m.frame >= frames) {
        return Err(Failure::data(format!(
            "motion vector for frame {} but PU counts cover {frames} frames",
            mv.frame
        )));
    }
    let policy = load_policy(&args.policy, args.config.as_deref())?;
    let classifier = ActivityClassifier::train(training(args)?, args.k, args.alpha)?;

    let cuts = detect_activity_change(&pu, args.threshold, args.window);
    regions(&cuts, frames)
        .into_iter()
        .map(|r| {
            let field: Vec<(f64, f64)> = mvs
                .iter()
                .filter(|m| r.contains(&m.frame))
                .map(|m| (m.dx, m.dy))
                .collect();
            let pu_mean = pu[r.clone()].iter().sum::<f64>() / r.len() as f64;
            let label = classifier.classify(&extract_mv_features(&field, pu_mean)).label;
            let constraints = match policy.for_region(label, r.len()) {
                Ok(cs) => Some(cs),
                Err(Error::UnmappedLabel(_)) => None,
                Err(e) => return Err(e.into()),
            };
            Ok(ScheduleEntry {
                start_frame: r.start,
                end_frame: r.end,
                label,
                constraints,
            })
        })
        .collect()
}

pub fn schedule_table(entries: &[ScheduleEntry]) -> String {
    let mut out = String::from("Frames\tLabel\tMode\tMetric\tQuality floor\tMax bitrate (kbps)\tMax time (s)\n");
    for e in entries {
        let _ = write!(out, "{}..{}\t{}", e.start_frame, e.end_frame, e.label);
        match &e.constraints {
            Some(cs) => {
                let f = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x}"));
                let _ = writeln!(
                    out,
                    "\t{}\t{:?}\t{}\t{}\t{}",
                    cs.mode.as_str(),
                    cs.quality_metric,
                    f(cs.bounds.min_quality),
                    f(cs.bounds.max_bitrate),
                    f(cs.bounds.max_time.map(|t| (t * 1e6).round() / 1e6)),
                );
            }
            None => out.push_str("\tunmapped\t-\t-\t-\t-\n"),
        }
    }
    out
}

pub fn run(args: &ClassifyArgs) -> Result<(), Failure> {
    let entries = classify(args)?;
    print!("{}", schedule_table(&entries));
    if let Some(out) = &args.out {
        write_records(out, SCHEDULE, &entries)?;
    }
    Ok(())
}
