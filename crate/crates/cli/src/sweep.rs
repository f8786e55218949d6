use std::collections::HashSet;
use std::path::PathBuf;

use clap::Args;
use rayon::prelude::*;

use segopt::encoder::{EncodingConfig, SegmentEncoder};
use segopt::records::{read_records, write_records, RecordWriter, SweepRecord, SWEEP};
use segopt::Error;

use crate::failure::Failure;
use crate::inputs::InputArgs;

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Segment to sweep (repeatable); the first segment when omitted.
    #[arg(long = "segment")]
    pub segments: Vec<usize>,
    #[arg(long, conflicts_with = "segments")]
    pub all_segments: bool,
    /// Sweep table; existing rows are kept and skipped.
    #[arg(long, short)]
    pub out: PathBuf,
    /// Drop failed rows from the table before resuming so they are encoded again.
    #[arg(long)]
    pub retry_failed: bool,
}

pub fn run(args: &SweepArgs) -> Result<(), Failure> {
    let ws = args.input.resolve()?;
    let count = ws.segments.len();
    let wanted: Vec<usize> = if args.all_segments {
        (0..count).collect()
    } else if args.segments.is_empty() {
        vec![0]
    } else {
        args.segments.clone()
    };
    for &index in &wanted {
        if index >= count {
            return Err(Error::SegmentOutOfRange { index, count }.into());
        }
    }

    let mut existing: Vec<SweepRecord> = if args.out.exists() {
        read_records(&args.out, SWEEP)?
    } else {
        Vec::new()
    };
    if args.retry_failed && existing.iter().any(|r| r.error.is_some()) {
        existing.retain(|r| r.error.is_none());
        write_records(&args.out, SWEEP, &existing)?;
    }
    let mut present: HashSet<(usize, EncodingConfig)> =
        existing.iter().map(|r| (r.segment_id, r.config())).collect();
    let mut failed = existing
        .iter()
        .filter(|r| r.error.is_some() && wanted.contains(&r.segment_id))
        .count();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(ws.workers.unwrap_or(0))
        .build()
        .map_err(|e| Failure::usage(e.to_string()))?;
    let chunk = pool.current_num_threads() * 4;
    let mut writer = RecordWriter::append(&args.out, SWEEP)?;
    let configs = ws.grid.enumerate();
    let (mut encoded, mut skipped) = (0usize, 0usize);
    for &index in &wanted {
        let seg = &ws.segments[index];
        let pending: Vec<&EncodingConfig> = configs.iter().filter(|c| !present.contains(&(index, (*c).clone()))).collect();
        skipped += configs.len() - pending.len();
        for batch in pending.chunks(chunk) {
            let rows: Vec<SweepRecord> = pool.install(|| {
                batch
                    .par_iter()
                    .map(|c| match ws.encoder.encode(c, seg) {
                        Ok(m) => SweepRecord::from_measurement(&m),
                        Err(e) => SweepRecord::failed(c, index, seg.frame_count(), &e),
                    })
                    .collect()
            });
            for row in rows {
                if let Some(e) = &row.error {
                    eprintln!("segment {index} {}: {e}", row.config());
                    failed += 1;
                }
                present.insert((index, row.config()));
                writer.push(&row)?;
                encoded += 1;
            }
        }
    }
    println!(
        "{}: {encoded} encoded, {skipped} already present, {} configurations per segment",
        args.out.display(),
        configs.len()
    );
    if failed > 0 {
        return Err(Failure::encoder(format!("{failed} sweep rows failed; see their error field")));
    }
    Ok(())
}
