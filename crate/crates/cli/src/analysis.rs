use std::path::{Path, PathBuf};

use clap::Args;

use segopt::bd::{bd_rate, format_savings_table, RdCurve};
use segopt::media::{parse_vmaf_log, psnr_global, ssim_mean, RawVideo};
use segopt::records::{read_records, RdPointRecord, RD_POINTS};

use crate::failure::Failure;

#[derive(Args, Debug)]
pub struct BdrateArgs {
    /// One rate-distortion file per codec.
    #[arg(required = true, num_args = 2..)]
    pub files: Vec<PathBuf>,
    /// psnr611 or vmaf.
    #[arg(long, default_value = "psnr611")]
    pub metric: String,
}

fn curve(path: &Path, vmaf: bool) -> Result<RdCurve, Failure> {
    let rows: Vec<RdPointRecord> = read_records(path, RD_POINTS)?;
    let label = match rows.first() {
        Some(r) if rows.iter().all(|x| x.codec == r.codec) => r.codec.clone(),
        _ => path.file_stem().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned()),
    };
    let points = rows
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let q = if vmaf { r.vmaf } else { r.psnr611 };
            q.map(|q| (r.bitrate_kbps, q))
                .ok_or_else(|| Failure::data(format!("{}: row {} has no {} value", path.display(), i + 1, if vmaf { "vmaf" } else { "psnr611" })))
        })
        .collect::<Result<Vec<_>, _>>()?;
    RdCurve::new(label, points).map_err(|e| Failure::data(format!("{}: {e}", path.display())))
}

pub fn run_bdrate(args: &BdrateArgs) -> Result<(), Failure> {
    let (vmaf, title) = match args.metric.to_ascii_lowercase().as_str() {
        "psnr611" | "psnr" => (false, "PSNR611"),
        "vmaf" => (true, "VMAF"),
        m => return Err(Failure::usage(format!("--metric must be psnr611 or vmaf, got {m}"))),
    };
    let curves = args.files.iter().map(|p| curve(p, vmaf)).collect::<Result<Vec<_>, _>>()?;
    for c in curves.iter().filter(|c| !c.is_monotone()) {
        eprintln!("warning: {} is not monotone in bitrate", c.label);
    }
    for (i, a) in curves.iter().enumerate() {
        for b in &curves[i + 1..] {
            if let Err(e) = bd_rate(a, b) {
                eprintln!("{} vs {}: {e}; pair skipped", a.label, b.label);
            }
        }
    }
    print!("{}", format_savings_table(&curves, title));
    Ok(())
}

#[derive(Args, Debug)]
pub struct MetricsArgs {
    #[arg(long)]
    pub reference: PathBuf,
    #[arg(long)]
    pub distorted: PathBuf,
    #[arg(long)]
    pub width: usize,
    #[arg(long)]
    pub height: usize,
    #[arg(long, default_value_t = 30)]
    pub fps: u32,
    /// VMAF score log for the same pair.
    #[arg(long)]
    pub vmaf_log: Option<PathBuf>,
}

pub fn run_metrics(args: &MetricsArgs) -> Result<(), Failure> {
    let reference = RawVideo::open_yuv420(&args.reference, args.width, args.height, args.fps)?;
    let distorted = RawVideo::open_yuv420(&args.distorted, args.width, args.height, args.fps)?;
    let mut scores = psnr_global(&reference, &distorted)?;
    scores.ssim = Some(ssim_mean(&reference, &distorted)?);
    if let Some(path) = &args.vmaf_log {
        let text = std::fs::read_to_string(path).map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
        scores.vmaf = Some(parse_vmaf_log(&text)?.mean);
    }
    let json = serde_json::to_string_pretty(&scores).map_err(|e| Failure::data(e.to_string()))?;
    println!("{json}");
    Ok(())
}
