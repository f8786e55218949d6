use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};

use segopt::constraints::{Bounds, ConstraintSet, Mode, QualityMetric, Tolerances};
use segopt::controller::{
    baseline_for_bitrate, baseline_run, run_from_sweep, run_scheduled, summarize, ControllerSettings, ControllerState,
    RefitPolicy, Summary,
};
use segopt::encoder::{EncodingConfig, SegmentMeasurement};
use segopt::media::Segment;
use segopt::models::{ModelRecord, OrderPolicy};
use segopt::pareto::ObjectivePoint;
use segopt::records::{read_records, write_records, ScheduleEntry, SweepRecord, DECISIONS, FRONT, MODELS, SCHEDULE, SWEEP};

use crate::config::ProjectConfig;
use crate::failure::Failure;
use crate::inputs::InputArgs;
use crate::report;

/// VMAF points treated as one just-noticeable difference.
pub const DEFAULT_JND: f64 = 6.0;

#[derive(Args, Debug)]
pub struct OptimizeArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// max-quality, min-bitrate, max-enc-rate or min-enc-time.
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long)]
    pub max_bitrate_kbps: Option<f64>,
    /// PSNR611 floor.
    #[arg(long)]
    pub min_quality_db: Option<f64>,
    #[arg(long)]
    pub min_vmaf: Option<f64>,
    #[arg(long)]
    pub min_ssim: Option<f64>,
    #[arg(long)]
    pub min_fps: Option<f64>,
    /// Encoding time budget per segment, seconds.
    #[arg(long)]
    pub max_time_s: Option<f64>,
    /// Lowers the VMAF floor by this many points.
    #[arg(long)]
    pub jnd_offset: Option<f64>,
    /// Sets the VMAF floor to this score minus the JND offset (6 by default).
    #[arg(long, conflicts_with = "min_vmaf")]
    pub reference_vmaf: Option<f64>,
    #[arg(long)]
    pub tolerance_bitrate: Option<f64>,
    #[arg(long)]
    pub tolerance_quality: Option<f64>,
    #[arg(long)]
    pub tolerance_fps: Option<f64>,
    /// Per-region constraints written by `classify`.
    #[arg(long)]
    pub constraint_schedule: Option<PathBuf>,
    /// Reuse a first-segment sweep table instead of encoding it again.
    #[arg(long)]
    pub sweep: Option<PathBuf>,
    /// Constant-QP baseline.
    #[arg(long, conflicts_with = "baseline_bitrate_kbps")]
    pub baseline_qp: Option<i32>,
    /// Target bitrate for the constant-QP baseline; defaults to the bitrate bound.
    #[arg(long, alias = "target-bitrate-kbps")]
    pub baseline_bitrate_kbps: Option<f64>,
    /// Model order 1-3, or `auto` for the lowest order reaching adjusted R² 0.9.
    #[arg(long, default_value = "2")]
    pub order: String,
    /// always or on-violation.
    #[arg(long, default_value = "always")]
    pub refit: String,
    #[arg(long)]
    pub start_qp: Option<f64>,
    #[arg(long)]
    pub neighbor_window: Option<i32>,
    /// Directory for decisions, models, front and summary files.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrontEntry {
    pub config: EncodingConfig,
    pub point: ObjectivePoint,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizeReport {
    pub codec: String,
    /// Constraints of the first segment.
    pub constraints: ConstraintSet,
    pub jnd_offset: Option<f64>,
    pub scheduled: bool,
    pub summary: Summary,
}

fn tolerances(args: &OptimizeArgs, config: &ProjectConfig) -> Tolerances {
    let mut t = Tolerances::default();
    config.tolerances.apply(&mut t);
    flag_tolerances(args, &mut t);
    t
}

fn flag_tolerances(args: &OptimizeArgs, t: &mut Tolerances) {
    if let Some(v) = args.tolerance_bitrate {
        t.bitrate_rel = v;
    }
    if let Some(v) = args.tolerance_quality {
        t.quality_rel = v;
    }
    if let Some(v) = args.tolerance_fps {
        t.fps_rel = v;
    }
}

/// Constraint set from the mode flags; `None` when no mode is given.
pub fn flag_constraints(args: &OptimizeArgs, config: &ProjectConfig) -> Result<Option<ConstraintSet>, Failure> {
    let vmaf = match (args.min_vmaf, args.reference_vmaf) {
        (Some(v), _) => Some(v - args.jnd_offset.unwrap_or(0.0)),
        (None, Some(r)) => Some(r - args.jnd_offset.unwrap_or(DEFAULT_JND)),
        (None, None) => None,
    };
    if args.jnd_offset.is_some() && vmaf.is_none() {
        return Err(Failure::usage("--jnd-offset needs --min-vmaf or --reference-vmaf"));
    }
    let quality: Vec<(QualityMetric, f64)> = [
        (QualityMetric::Psnr, args.min_quality_db),
        (QualityMetric::Vmaf, vmaf),
        (QualityMetric::Ssim, args.min_ssim),
    ]
    .into_iter()
    .filter_map(|(m, v)| v.map(|v| (m, v)))
    .collect();
    if quality.len() > 1 {
        return Err(Failure::usage("give only one quality floor"));
    }
    let Some(mode) = &args.mode else {
        if !quality.is_empty() || args.max_bitrate_kbps.is_some() || args.min_fps.is_some() || args.max_time_s.is_some() {
            return Err(Failure::usage("bounds given without --mode"));
        }
        return Ok(None);
    };
    let mode: Mode = mode.parse()?;
    let (metric, min_quality) = quality.first().map_or((QualityMetric::default(), None), |&(m, v)| (m, Some(v)));
    let bounds = Bounds {
        max_bitrate: args.max_bitrate_kbps,
        min_quality,
        min_fps: args.min_fps,
        max_time: args.max_time_s,
    };
    Ok(Some(ConstraintSet::new(mode, bounds, metric, tolerances(args, config))?))
}

/// Constraints per segment from a schedule: the entry overlapping the segment
/// most, its time budget scaled to the segment length.
pub fn scheduled_constraints(
    entries: &[ScheduleEntry],
    segments: &[Segment],
    fallback: Option<ConstraintSet>,
    args: &OptimizeArgs,
) -> Result<Vec<ConstraintSet>, Failure> {
    if entries.is_empty() {
        return Err(Failure::data("constraint schedule has no entries"));
    }
    segments
        .iter()
        .map(|seg| {
            let (start, end) = (seg.start, seg.end);
            let entry = entries
                .iter()
                .filter(|e| e.overlap(start, end) > 0)
                .max_by_key(|e| (e.overlap(start, end), std::cmp::Reverse(e.start_frame)))
                .ok_or_else(|| Failure::data(format!("schedule does not cover frames {start}..{end}")))?;
            let mut cs = match (entry.constraints, fallback) {
                (Some(cs), _) => {
                    let mut cs = cs;
                    if let Some(t) = cs.bounds.max_time {
                        cs.bounds.max_time = Some(t * seg.frame_count() as f64 / entry.frames().max(1) as f64);
                    }
                    cs
                }
                (None, Some(cs)) => cs,
                (None, None) => {
                    return Err(Failure::usage(format!(
                        "schedule leaves {} frames {}..{} unconstrained; pass --mode and bounds as a fallback",
                        entry.label, entry.start_frame, entry.end_frame
                    )))
                }
            };
            flag_tolerances(args, &mut cs.tolerances);
            Ok(cs.with_tolerances(cs.tolerances)?)
        })
        .collect()
}

fn settings(args: &OptimizeArgs, workers: Option<usize>) -> Result<ControllerSettings, Failure> {
    let order = match args.order.as_str() {
        "auto" | "parsimonious" => OrderPolicy::Parsimonious,
        s => match s.parse::<usize>() {
            Ok(k @ 1..=3) => OrderPolicy::Fixed(k),
            _ => return Err(Failure::usage(format!("--order must be 1, 2, 3 or auto, got {s}"))),
        },
    };
    let refit = match args.refit.as_str() {
        "always" => RefitPolicy::Always,
        "on-violation" | "on_violation" => RefitPolicy::OnViolation,
        s => return Err(Failure::usage(format!("--refit must be always or on-violation, got {s}"))),
    };
    let mut s = ControllerSettings {
        order,
        refit,
        start_qp: args.start_qp,
        workers,
        ..Default::default()
    };
    if let Some(w) = args.neighbor_window {
        if w < 0 {
            return Err(Failure::usage("--neighbor-window must be non-negative"));
        }
        s.neighbor_window = w;
    }
    Ok(s)
}

fn load_sweep(path: &Path, first_segment: usize) -> Result<Vec<SegmentMeasurement>, Failure> {
    let rows: Vec<SweepRecord> = read_records(path, SWEEP)?;
    let sweep: Vec<SegmentMeasurement> = rows
        .iter()
        .filter(|r| r.segment_id == first_segment)
        .filter_map(SweepRecord::measurement)
        .collect();
    if sweep.is_empty() {
        return Err(Failure::data(format!(
            "{} has no successful rows for segment {first_segment}",
            path.display()
        )));
    }
    Ok(sweep)
}

fn write_outputs(dir: &Path, state: &ControllerState, report: &OptimizeReport) -> Result<(), Failure> {
    std::fs::create_dir_all(dir).map_err(|e| Failure::data(format!("{}: {e}", dir.display())))?;
    write_records(&dir.join("decisions.jsonl"), DECISIONS, &state.history)?;
    let models: Vec<ModelRecord> = state.groups.iter().flat_map(|g| g.models.values().map(|m| m.export())).collect();
    write_records(&dir.join("models.jsonl"), MODELS, &models)?;
    let front: Vec<FrontEntry> = state
        .front
        .entries
        .iter()
        .map(|(c, p)| FrontEntry {
            config: c.clone(),
            point: *p,
        })
        .collect();
    write_records(&dir.join("front.jsonl"), FRONT, &front)?;
    let json = serde_json::to_string_pretty(report).map_err(|e| Failure::data(e.to_string()))?;
    let path = dir.join("summary.json");
    std::fs::write(&path, json + "\n").map_err(|e| Failure::data(format!("{}: {e}", path.display())))
}

pub fn run(args: &OptimizeArgs) -> Result<(), Failure> {
    let ws = args.input.resolve()?;
    let fixed = flag_constraints(args, &ws.config)?;
    let per_segment = match &args.constraint_schedule {
        Some(path) => {
            let entries: Vec<ScheduleEntry> = read_records(path, SCHEDULE)?;
            scheduled_constraints(&entries, &ws.segments, fixed, args)?
        }
        None => {
            let cs = fixed.ok_or_else(|| Failure::usage("--mode (or --constraint-schedule) is required"))?;
            vec![cs; ws.segments.len()]
        }
    };
    let settings = settings(args, ws.workers)?;
    let schedule = |s: &Segment| per_segment[s.index];
    let state = match &args.sweep {
        Some(path) => {
            let sweep = load_sweep(path, ws.segments[0].index)?;
            run_from_sweep(&ws.encoder, &ws.grid, &ws.segments, sweep, &schedule, &settings)?
        }
        None => run_scheduled(&ws.encoder, &ws.grid, &ws.segments, &schedule, &settings)?,
    };

    let target = args.baseline_bitrate_kbps.or(per_segment[0].bounds.max_bitrate);
    let (baseline_qp, baseline) = match (args.baseline_qp, target) {
        (Some(qp), _) => (Some(qp), baseline_run(&ws.encoder, &ws.grid, &ws.segments, ws.grid.clamp_qp(qp))?),
        (None, Some(t)) => {
            let (qp, run) = baseline_for_bitrate(&ws.encoder, &ws.grid, &ws.segments, t)?;
            (Some(qp), run)
        }
        (None, None) => (None, Vec::new()),
    };
    let summary = summarize(&state.history, &baseline, baseline_qp);
    let out = OptimizeReport {
        codec: ws.codec.to_string(),
        constraints: per_segment[0],
        jnd_offset: match (args.reference_vmaf, args.jnd_offset) {
            (Some(_), None) => Some(DEFAULT_JND),
            (_, j) => j,
        },
        scheduled: args.constraint_schedule.is_some(),
        summary,
    };
    print!("{}", report::decision_table(&state.history));
    print!("{}", report::summary_text(&out));
    if let Some(dir) = &args.out_dir {
        write_outputs(dir, &state, &out)?;
    }
    if out.summary.failed_segments > 0 {
        return Err(Failure::encoder(format!(
            "{} of {} segments failed to encode",
            out.summary.failed_segments, out.summary.segments
        )));
    }
    Ok(())
}
