use std::fmt::Write as _;
use std::path::PathBuf;

use clap::Args;

use segopt::controller::DecisionRecord;
use segopt::models::ModelRecord;
use segopt::records::{read_records, DECISIONS, MODELS};

use crate::failure::Failure;
use crate::optimize::OptimizeReport;

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// Output directory of an `optimize` run.
    pub dir: PathBuf,
    /// Also list the fitted models.
    #[arg(long)]
    pub models: bool,
}

fn opt(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.digits$}"))
}

pub fn decision_table(records: &[DecisionRecord]) -> String {
    let mut out = String::from("Segment\tGOP\tFilters\tQP\tBitrate (kbps)\tPSNR (dB)\tVMAF\tSSIM\tFPS\tStatus\n");
    for r in records {
        let (gop, fil, qp) = r.config.as_ref().map_or(("-".into(), "-".into(), "-".into()), |c| {
            (c.gop.clone(), c.filters.to_string(), c.qp.to_string())
        });
        let m = r.measured.as_ref();
        let status = match (&r.failed, r.satisfied) {
            (Some(_), _) => "failed",
            (None, true) => "ok",
            (None, false) => "violated",
        };
        let _ = writeln!(
            out,
            "{}\t{gop}\t{fil}\t{qp}\t{}\t{}\t{}\t{}\t{}\t{status}",
            r.segment_index,
            opt(m.map(|m| m.bitrate_kbps), 2),
            opt(m.map(|m| m.psnr_db), 3),
            opt(m.and_then(|m| m.vmaf), 2),
            opt(m.and_then(|m| m.ssim), 4),
            opt(m.map(|m| m.fps), 2),
        );
    }
    out
}

pub fn summary_text(report: &OptimizeReport) -> String {
    let s = &report.summary;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "Segments: {} ({} within tolerance, {} failed), encodes: {}",
        s.segments, s.satisfied_segments, s.failed_segments, s.encodes
    );
    if let Some(j) = report.jnd_offset {
        let _ = writeln!(out, "VMAF floor lowered by {j} points");
    }
    if let Some(a) = &s.adaptive {
        let _ = writeln!(
            out,
            "Adaptive average: {:.2} kbps, {:.3} dB, VMAF {}, {:.2} fps",
            a.bitrate_kbps,
            a.psnr_db,
            opt(a.vmaf, 2),
            a.fps
        );
    }
    if let (Some(b), Some(qp)) = (&s.baseline, s.baseline_qp) {
        let _ = writeln!(
            out,
            "Baseline (QP {qp}): {:.2} kbps, {:.3} dB, VMAF {}, {:.2} fps",
            b.bitrate_kbps,
            b.psnr_db,
            opt(b.vmaf, 2),
            b.fps
        );
    }
    match s.bitrate_gain_pct {
        Some(g) => {
            let _ = writeln!(
                out,
                "Overall Bitrate Gain: {g:.2}% (dPSNR {} dB, dVMAF {})",
                opt(s.delta_psnr_db, 3),
                opt(s.delta_vmaf, 2)
            );
        }
        None => out.push_str("Overall Bitrate Gain: - (no baseline)\n"),
    }
    out
}

pub fn model_table(models: &[ModelRecord]) -> String {
    let mut out = String::from("Objective\tGOP\tFilters\tOrder\tCoefficients\tAdj. R2\n");
    for m in models {
        let coeffs: Vec<String> = m.coefficients.iter().map(|c| format!("{c:.6e}")).collect();
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{:.4}{}",
            m.objective.map_or("-".into(), |o| o.to_string()),
            m.gop.as_deref().unwrap_or("-"),
            m.filters.map_or("-".into(), |f| f.to_string()),
            m.order,
            coeffs.join(" "),
            m.adjusted_r2,
            if m.low_confidence { " (low confidence)" } else { "" }
        );
    }
    out
}

pub fn run(args: &ReportArgs) -> Result<(), Failure> {
    let decisions: Vec<DecisionRecord> = read_records(&args.dir.join("decisions.jsonl"), DECISIONS)?;
    print!("{}", decision_table(&decisions));
    let path = args.dir.join("summary.json");
    if path.exists() {
        let text = std::fs::read_to_string(&path).map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
        let report: OptimizeReport =
            serde_json::from_str(&text).map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
        print!("{}", summary_text(&report));
    }
    if args.models {
        let models: Vec<ModelRecord> = read_records(&args.dir.join("models.jsonl"), MODELS)?;
        print!("{}", model_table(&models));
    }
    Ok(())
}
