//! Segment-adaptive encoding loop: sweep the first segment, fit per-group
//! models from its Pareto front, then predict and encode each later segment once.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constraints::{check_constraints, ConstraintSet, Predicted, Violation};
use crate::encoder::{CodecGrid, EncodingConfig, Filters, GopType, SegmentEncoder, SegmentMeasurement};
use crate::error::{Error, Result};
use crate::inverse::{predict_all, solve_qp, ModelSet, QpSolution, SolveContext, SEARCH_RADIUS};
use crate::media::Segment;
use crate::models::{Objective, OrderPolicy};
use crate::pareto::{front_indices, select_mode_optimal, ObjectivePoint, ParetoFront};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RefitPolicy {
    #[default]
    Always,
    OnViolation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControllerSettings {
    pub order: OrderPolicy,
    pub refit: RefitPolicy,
    /// Newton start; the codec default when unset.
    pub start_qp: Option<f64>,
    /// Largest QP change between consecutive segments.
    pub neighbor_window: i32,
    /// Sweep worker threads; the global pool when unset.
    pub workers: Option<usize>,
}

impl Default for ControllerSettings {
    fn default() -> Self {
        ControllerSettings {
            order: OrderPolicy::default(),
            refit: RefitPolicy::default(),
            start_qp: None,
            neighbor_window: SEARCH_RADIUS,
            workers: None,
        }
    }
}

/// Models and training samples of one (GOP, filters) group.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelGroup {
    pub gop: String,
    pub filters: Filters,
    pub gop_type: Option<GopType>,
    pub preset: String,
    pub samples: Vec<SegmentMeasurement>,
    pub models: ModelSet,
}

impl ModelGroup {
    pub fn config(&self, grid: &CodecGrid, qp: i32) -> EncodingConfig {
        EncodingConfig {
            codec: grid.codec,
            gop: self.gop.clone(),
            gop_type: self.gop_type,
            qp,
            filters: self.filters,
            preset: self.preset.clone(),
        }
    }

    /// Refits every objective the samples carry.
    pub fn refit(&mut self, order: OrderPolicy) -> Result<()> {
        let mut models = ModelSet::new();
        for obj in Objective::ALL {
            let pts: Option<Vec<(f64, f64)>> = self
                .samples
                .iter()
                .map(|m| m.objective(obj).map(|v| (m.config.qp as f64, v)))
                .collect();
            let Some(pts) = pts else { continue };
            match order.fit(&pts) {
                Ok(m) => {
                    models.insert(obj, m.labeled(obj, &self.gop, self.filters));
                }
                Err(e) if matches!(obj, Objective::Bits | Objective::EncRate) => return Err(e),
                Err(_) => {}
            }
        }
        self.models = models;
        Ok(())
    }

    fn has_models_for(&self, cs: &ConstraintSet) -> bool {
        [Objective::Bits, Objective::EncRate, cs.quality_metric.objective()]
            .iter()
            .all(|o| self.models.contains_key(o))
    }
}

/// One segment's decision and outcome.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub segment_index: usize,
    pub constraints: ConstraintSet,
    pub config: Option<EncodingConfig>,
    pub qp_real: Option<f64>,
    /// Solver output before the neighbour clamp.
    pub solved_qp: Option<i32>,
    pub predicted: Predicted,
    pub measured: Option<SegmentMeasurement>,
    pub satisfied: bool,
    pub violations: Vec<Violation>,
    pub gop_switched: bool,
    pub local_search: bool,
    /// Encodes spent on this segment, sweep included.
    pub encodes: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failed: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ControllerState {
    pub grid: CodecGrid,
    pub settings: ControllerSettings,
    pub constraints: ConstraintSet,
    pub groups: Vec<ModelGroup>,
    pub history: Vec<DecisionRecord>,
    /// Segment-0 sweep in grid order.
    pub sweep: Vec<SegmentMeasurement>,
    pub front: ParetoFront<EncodingConfig>,
    /// Mode-optimal entry of the segment-0 front.
    pub mode_optimal: Option<(EncodingConfig, ObjectivePoint)>,
}

/// Encodes every grid configuration on one segment, results in grid order.
pub fn sweep_segment<E: SegmentEncoder>(
    encoder: &E,
    grid: &CodecGrid,
    segment: &Segment,
    workers: Option<usize>,
) -> Vec<Result<SegmentMeasurement>> {
    let configs = grid.enumerate();
    let run = || configs.par_iter().map(|c| encoder.encode(c, segment)).collect::<Vec<_>>();
    match workers.and_then(|n| rayon::ThreadPoolBuilder::new().num_threads(n).build().ok()) {
        Some(pool) => pool.install(run),
        None => run(),
    }
}

fn min_front_qps(order: OrderPolicy) -> usize {
    match order {
        OrderPolicy::Fixed(k) => k + 2,
        OrderPolicy::Parsimonious => 3,
    }
}

fn distinct_qps(samples: &[&SegmentMeasurement]) -> usize {
    let mut qps: Vec<i32> = samples.iter().map(|m| m.config.qp).collect();
    qps.sort_unstable();
    qps.dedup();
    qps.len()
}

/// Per-(GOP, filters) models from the front samples, falling back to the
/// group's full sweep when its front share is too thin.
pub fn fit_groups(
    grid: &CodecGrid,
    sweep: &[SegmentMeasurement],
    on_front: &[bool],
    order: OrderPolicy,
) -> Result<Vec<ModelGroup>> {
    let mut groups = Vec::new();
    for gop in &grid.gops {
        for &filters in &grid.filters {
            let member = |m: &SegmentMeasurement| m.config.gop == *gop && m.config.filters == filters;
            let all: Vec<&SegmentMeasurement> = sweep.iter().filter(|m| member(m)).collect();
            if all.is_empty() {
                continue;
            }
            let front: Vec<&SegmentMeasurement> = sweep
                .iter()
                .zip(on_front)
                .filter(|(m, &f)| f && member(m))
                .map(|(m, _)| m)
                .collect();
            let chosen = if distinct_qps(&front) >= min_front_qps(order) { &front } else { &all };

            let mut counts: BTreeMap<Option<GopType>, usize> = BTreeMap::new();
            for m in if front.is_empty() { &all } else { &front } {
                *counts.entry(m.config.gop_type).or_default() += 1;
            }
            // most frequent on the front, earlier grid entries winning ties
            let gop_type = grid
                .gop_types
                .iter()
                .enumerate()
                .max_by_key(|(i, t)| (counts.get(t).copied().unwrap_or(0), std::cmp::Reverse(*i)))
                .and_then(|(_, t)| *t);
            let mut group = ModelGroup {
                gop: gop.clone(),
                filters,
                gop_type,
                preset: chosen[0].config.preset.clone(),
                samples: chosen.iter().map(|m| (*m).clone()).collect(),
                models: ModelSet::new(),
            };
            if group.refit(order).is_ok() {
                groups.push(group);
            }
        }
    }
    if groups.is_empty() {
        return Err(Error::InsufficientData(
            "no GOP/filter group has enough distinct QPs to fit".into(),
        ));
    }
    Ok(groups)
}

fn objective_points(sweep: &[SegmentMeasurement], cs: &ConstraintSet) -> Result<Vec<ObjectivePoint>> {
    sweep
        .iter()
        .map(|m| {
            ObjectivePoint::from_measurement(m, cs.quality_metric, true).ok_or_else(|| {
                Error::InsufficientData(format!("measurements carry no {:?} score", cs.quality_metric))
            })
        })
        .collect()
}

/// Exhaustive sweep of the first segment, its Pareto front and the fitted groups.
pub fn bootstrap<E: SegmentEncoder>(
    encoder: &E,
    grid: &CodecGrid,
    segment: &Segment,
    constraints: &ConstraintSet,
    settings: &ControllerSettings,
) -> Result<ControllerState> {
    let sweep = sweep_segment(encoder, grid, segment, settings.workers)
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    bootstrap_from_sweep(grid, sweep, constraints, settings)
}

/// As [`bootstrap`] over an already measured sweep.
pub fn bootstrap_from_sweep(
    grid: &CodecGrid,
    sweep: Vec<SegmentMeasurement>,
    constraints: &ConstraintSet,
    settings: &ControllerSettings,
) -> Result<ControllerState> {
    let points = objective_points(&sweep, constraints)?;
    let idx = front_indices(&points)?;
    let mut on_front = vec![false; sweep.len()];
    for &i in &idx {
        on_front[i] = true;
    }
    let front = ParetoFront {
        entries: idx.iter().map(|&i| (sweep[i].config.clone(), points[i])).collect(),
    };
    let mode_optimal = select_mode_optimal(&front, constraints).ok();
    let groups = fit_groups(grid, &sweep, &on_front, settings.order)?;
    Ok(ControllerState {
        grid: grid.clone(),
        settings: settings.clone(),
        constraints: *constraints,
        groups,
        history: Vec::new(),
        sweep,
        front,
        mode_optimal,
    })
}

fn solve_context(state: &ControllerState, frames: usize) -> SolveContext {
    SolveContext {
        qp_min: state.grid.qp_min,
        qp_max: state.grid.qp_max,
        start_qp: state.settings.start_qp.unwrap_or(state.grid.codec.default_start_qp()),
        frames: Some(frames as f64),
    }
}

/// Group with the best achievable mode objective among feasible groups
/// (ties: lower predicted bitrate, simpler GOP, grid filter order), or the
/// least-violating group.
pub fn choose_gop_model(
    state: &ControllerState,
    constraints: &ConstraintSet,
    frames: usize,
) -> Option<(usize, QpSolution)> {
    let ctx = solve_context(state, frames);
    let codec = state.grid.codec;
    let filter_rank = |f: &Filters| state.grid.filters.iter().position(|x| x == f).unwrap_or(usize::MAX);
    let cands: Vec<(usize, QpSolution)> = state
        .groups
        .iter()
        .enumerate()
        .filter(|(_, g)| g.has_models_for(constraints))
        .map(|(i, g)| (i, solve_qp(&g.models, constraints, &ctx)))
        .collect();
    let tie = |a: &(usize, QpSolution), b: &(usize, QpSolution)| {
        let (ga, gb) = (&state.groups[a.0], &state.groups[b.0]);
        a.1.predicted
            .bitrate
            .unwrap_or(f64::INFINITY)
            .total_cmp(&b.1.predicted.bitrate.unwrap_or(f64::INFINITY))
            .then(codec.gop_complexity(&ga.gop).cmp(&codec.gop_complexity(&gb.gop)))
            .then(filter_rank(&ga.filters).cmp(&filter_rank(&gb.filters)))
    };
    let feasible = cands.iter().filter(|c| c.1.satisfied).min_by(|a, b| {
        b.1.predicted
            .mode_score(constraints.mode)
            .total_cmp(&a.1.predicted.mode_score(constraints.mode))
            .then_with(|| tie(a, b))
    });
    feasible
        .or_else(|| {
            let total = |s: &QpSolution| s.violations.iter().map(|v| v.overshoot).sum::<f64>();
            cands
                .iter()
                .min_by(|a, b| total(&a.1).total_cmp(&total(&b.1)).then_with(|| tie(a, b)))
        })
        .cloned()
}

fn measured_point(m: &SegmentMeasurement, cs: &ConstraintSet) -> Predicted {
    Predicted {
        quality: m.objective(cs.quality_metric.objective()),
        bitrate: Some(m.bitrate_kbps),
        fps: Some(m.fps),
        time: Some(m.enc_time_s),
    }
}

fn decide_and_encode<E: SegmentEncoder>(
    state: &mut ControllerState,
    encoder: &E,
    segment: &Segment,
    cs: &ConstraintSet,
    reuse_sweep: bool,
) {
    let frames = segment.frame_count();
    let prev = state.history.iter().rev().find(|r| r.failed.is_none() && r.config.is_some());
    let prev_qp = prev.and_then(|r| r.config.as_ref()).map(|c| c.qp);
    let prev_group = prev.and_then(|r| r.config.as_ref()).map(|c| (c.gop.clone(), c.filters));

    let mut record = DecisionRecord {
        segment_index: segment.index,
        constraints: *cs,
        config: None,
        qp_real: None,
        solved_qp: None,
        predicted: Predicted::default(),
        measured: None,
        satisfied: false,
        violations: Vec::new(),
        gop_switched: false,
        local_search: false,
        encodes: 0,
        failed: None,
    };
    let Some((gi, sol)) = choose_gop_model(state, cs, frames) else {
        record.failed = Some(format!("no model group covers {:?}", cs.quality_metric));
        state.history.push(record);
        return;
    };
    let mut qp = sol.qp_int;
    if let Some(p) = prev_qp {
        let w = state.settings.neighbor_window;
        qp = qp.clamp(p - w, p + w);
    }
    qp = state.grid.clamp_qp(qp);
    let group = &state.groups[gi];
    let config = group.config(&state.grid, qp);
    record.qp_real = sol.qp_real;
    record.solved_qp = Some(sol.qp_int);
    record.local_search = sol.local_search;
    record.predicted = predict_all(&group.models, cs, qp as f64, Some(frames as f64));
    record.gop_switched = prev_group.is_some_and(|g| g != (config.gop.clone(), config.filters));
    record.config = Some(config.clone());

    let reused = if reuse_sweep {
        state.sweep.iter().find(|m| m.config == config).cloned()
    } else {
        None
    };
    let measured = match reused {
        Some(m) => Ok(m),
        None => {
            record.encodes += 1;
            encoder.encode(&config, segment)
        }
    };
    match measured {
        Ok(m) => {
            let out = check_constraints(&measured_point(&m, cs), cs);
            record.satisfied = out.satisfied;
            record.violations = out.violations;
            let refit = match state.settings.refit {
                RefitPolicy::Always => true,
                RefitPolicy::OnViolation => !out.satisfied,
            };
            if refit && segment.index > 0 {
                let group = &mut state.groups[gi];
                let before = group.clone();
                group.samples.push(m.clone());
                if group.refit(state.settings.order).is_err() {
                    *group = before;
                }
            }
            record.measured = Some(m);
        }
        Err(e) => record.failed = Some(e.to_string()),
    }
    state.history.push(record);
}

/// Runs the loop with fixed constraints.
pub fn run_segment_loop<E: SegmentEncoder>(
    encoder: &E,
    grid: &CodecGrid,
    segments: &[Segment],
    constraints: &ConstraintSet,
    settings: &ControllerSettings,
) -> Result<ControllerState> {
    run_scheduled(encoder, grid, segments, &|_| *constraints, settings)
}

/// Runs the loop with per-segment constraints.
pub fn run_scheduled<E: SegmentEncoder>(
    encoder: &E,
    grid: &CodecGrid,
    segments: &[Segment],
    schedule: &dyn Fn(&Segment) -> ConstraintSet,
    settings: &ControllerSettings,
) -> Result<ControllerState> {
    let first = segments.first().ok_or(Error::EmptyInput("segments"))?;
    let cs0 = schedule(first);
    let state = bootstrap(encoder, grid, first, &cs0, settings)?;
    Ok(continue_loop(state, encoder, segments, schedule))
}

/// As [`run_scheduled`], bootstrapping from a previously measured
/// first-segment sweep instead of encoding it again.
pub fn run_from_sweep<E: SegmentEncoder>(
    encoder: &E,
    grid: &CodecGrid,
    segments: &[Segment],
    sweep: Vec<SegmentMeasurement>,
    schedule: &dyn Fn(&Segment) -> ConstraintSet,
    settings: &ControllerSettings,
) -> Result<ControllerState> {
    let first = segments.first().ok_or(Error::EmptyInput("segments"))?;
    if let Some(m) = sweep.iter().find(|m| m.segment_index != first.index) {
        return Err(Error::Mismatch(format!(
            "sweep row for segment {} but the loop starts at segment {}",
            m.segment_index, first.index
        )));
    }
    let cs0 = schedule(first);
    let state = bootstrap_from_sweep(grid, sweep, &cs0, settings)?;
    Ok(continue_loop(state, encoder, segments, schedule))
}

fn continue_loop<E: SegmentEncoder>(
    mut state: ControllerState,
    encoder: &E,
    segments: &[Segment],
    schedule: &dyn Fn(&Segment) -> ConstraintSet,
) -> ControllerState {
    let first = &segments[0];
    let cs0 = schedule(first);
    decide_and_encode(&mut state, encoder, first, &cs0, true);
    state.history[0].encodes += state.sweep.len();
    for seg in &segments[1..] {
        let cs = schedule(seg);
        state.constraints = cs;
        decide_and_encode(&mut state, encoder, seg, &cs, false);
    }
    state
}

/// Fixed-QP encode of every segment on the grid's baseline GOP.
pub fn baseline_run<E: SegmentEncoder>(
    encoder: &E,
    grid: &CodecGrid,
    segments: &[Segment],
    qp: i32,
) -> Result<Vec<SegmentMeasurement>> {
    let config = EncodingConfig {
        codec: grid.codec,
        gop: grid.baseline_gop.clone(),
        gop_type: grid.gop_types.first().copied().flatten(),
        qp,
        filters: grid.filters.first().copied().unwrap_or_default(),
        preset: grid.presets.first().cloned().unwrap_or_default(),
    };
    segments.iter().map(|s| encoder.encode(&config, s)).collect()
}

fn weighted<F: Fn(&SegmentMeasurement) -> Option<f64>>(ms: &[&SegmentMeasurement], f: F) -> Option<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    for m in ms {
        num += f(m)? * m.frames as f64;
        den += m.frames as f64;
    }
    (den > 0.0).then(|| num / den)
}

/// Smallest QP whose frame-weighted average bitrate is at most `target_kbps`.
pub fn baseline_for_bitrate<E: SegmentEncoder>(
    encoder: &E,
    grid: &CodecGrid,
    segments: &[Segment],
    target_kbps: f64,
) -> Result<(i32, Vec<SegmentMeasurement>)> {
    let (mut lo, mut hi) = (grid.qp_min, grid.qp_max);
    let mut best = None;
    while lo <= hi {
        let mid = lo + (hi - lo) / 2;
        let run = baseline_run(encoder, grid, segments, mid)?;
        let refs: Vec<&SegmentMeasurement> = run.iter().collect();
        let avg = weighted(&refs, |m| Some(m.bitrate_kbps)).unwrap_or(f64::INFINITY);
        if avg <= target_kbps {
            best = Some((mid, run));
            hi = mid - 1;
        } else {
            lo = mid + 1;
        }
    }
    match best {
        Some(b) => Ok(b),
        None => Ok((grid.qp_max, baseline_run(encoder, grid, segments, grid.qp_max)?)),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Averages {
    pub bitrate_kbps: f64,
    pub psnr_db: f64,
    pub vmaf: Option<f64>,
    pub fps: f64,
}

fn averages(ms: &[&SegmentMeasurement]) -> Option<Averages> {
    Some(Averages {
        bitrate_kbps: weighted(ms, |m| Some(m.bitrate_kbps))?,
        psnr_db: weighted(ms, |m| Some(m.psnr_db))?,
        vmaf: weighted(ms, |m| m.vmaf),
        fps: weighted(ms, |m| Some(m.fps))?,
    })
}

/// Overall comparison against a constant-QP baseline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub segments: usize,
    pub satisfied_segments: usize,
    pub failed_segments: usize,
    pub encodes: usize,
    pub adaptive: Option<Averages>,
    pub baseline: Option<Averages>,
    pub baseline_qp: Option<i32>,
    /// Positive when the adaptive run used less bitrate.
    pub bitrate_gain_pct: Option<f64>,
    pub delta_psnr_db: Option<f64>,
    pub delta_vmaf: Option<f64>,
}

pub fn summarize(records: &[DecisionRecord], baseline: &[SegmentMeasurement], baseline_qp: Option<i32>) -> Summary {
    let measured: Vec<&SegmentMeasurement> = records.iter().filter_map(|r| r.measured.as_ref()).collect();
    let adaptive = averages(&measured);
    let base_refs: Vec<&SegmentMeasurement> = baseline.iter().collect();
    let base = averages(&base_refs);
    let (gain, dp, dv) = match (&adaptive, &base) {
        (Some(a), Some(b)) => (
            Some((b.bitrate_kbps - a.bitrate_kbps) / b.bitrate_kbps * 100.0),
            Some(a.psnr_db - b.psnr_db),
            a.vmaf.zip(b.vmaf).map(|(x, y)| x - y),
        ),
        _ => (None, None, None),
    };
    Summary {
        segments: records.len(),
        satisfied_segments: records.iter().filter(|r| r.satisfied).count(),
        failed_segments: records.iter().filter(|r| r.failed.is_some()).count(),
        encodes: records.iter().map(|r| r.encodes).sum(),
        adaptive,
        baseline: base,
        baseline_qp,
        bitrate_gain_pct: gain,
        delta_psnr_db: dp,
        delta_vmaf: dv,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraints::{make_mode, Bounds};
    use crate::encoder::{Codec, LawCoefficients, SyntheticEncoder, SyntheticLaw};
    use crate::media::split_frames;
    use std::sync::atomic::{AtomicUsize, Ordering};

    struct Counting<E> {
        inner: E,
        calls: AtomicUsize,
    }

    impl<E: SegmentEncoder> SegmentEncoder for Counting<E> {
        fn encode(&self, c: &EncodingConfig, s: &Segment) -> Result<SegmentMeasurement> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            self.inner.encode(c, s)
        }
    }

    struct FailOn(usize, SyntheticEncoder);

    impl SegmentEncoder for FailOn {
        fn encode(&self, c: &EncodingConfig, s: &Segment) -> Result<SegmentMeasurement> {
            if s.index == self.0 {
                return Err(Error::EncoderFailed {
                    status: "exit status: 1".into(),
                    diagnostics: "boom".into(),
                });
            }
            self.1.encode(c, s)
        }
    }

    fn segments() -> Vec<Segment> {
        split_frames(500, 50.0, 3.0).unwrap()
    }

    fn max_quality() -> ConstraintSet {
        make_mode(
            "max_quality",
            Bounds {
                max_bitrate: Some(11205.77),
                min_fps: Some(25.0),
                ..Default::default()
            },
        )
        .unwrap()
    }

    #[test]
    fn bootstrap_recovers_law() {
        let law = SyntheticLaw::default();
        let grid = CodecGrid::synthetic(&law);
        let enc = SyntheticEncoder::new(law.clone());
        let st = bootstrap(&enc, &grid, &segments()[0], &max_quality(), &ControllerSettings::default()).unwrap();
        assert_eq!(st.sweep.len(), 20);
        let g = st.groups.iter().find(|g| g.filters == Filters::options_for(Codec::Synthetic)[1]).unwrap();
        let truth = &law.coefficients("B6").unwrap().bits;
        for (a, b) in g.models[&Objective::Bits].coefficients.iter().zip(truth) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn max_quality_trajectory() {
        let law = SyntheticLaw::default();
        let grid = CodecGrid::synthetic(&law);
        let enc = Counting {
            inner: SyntheticEncoder::new(law),
            calls: AtomicUsize::new(0),
        };
        let st = run_segment_loop(&enc, &grid, &segments(), &max_quality(), &ControllerSettings::default()).unwrap();
        assert_eq!(st.history.len(), 4);
        for r in &st.history {
            let c = r.config.as_ref().unwrap();
            assert_eq!((c.gop.as_str(), c.qp), ("B6", 28));
            assert!(r.satisfied);
        }
        assert_eq!(enc.calls.load(Ordering::SeqCst), 20 + 3);
        assert!(st.history[1..].iter().all(|r| r.encodes == 1));
    }

    #[test]
    fn two_groups_pick_better_quality() {
        let mut law = SyntheticLaw::default();
        let (_, b6) = law.gops[0].clone();
        let mut worse = b6.clone();
        worse.psnr[0] -= 0.05;
        law.gops = vec![("B2".into(), worse), ("B6".into(), b6 as LawCoefficients)];
        let grid = CodecGrid::synthetic(&law);
        let enc = SyntheticEncoder::new(law);
        let st = run_segment_loop(&enc, &grid, &segments(), &max_quality(), &ControllerSettings::default()).unwrap();
        assert!(st.history.iter().all(|r| r.config.as_ref().unwrap().gop == "B6"));
    }

    #[test]
    fn prior_sweep_matches_fresh_run() {
        let law = SyntheticLaw::default();
        let grid = CodecGrid::synthetic(&law);
        let enc = SyntheticEncoder::new(law);
        let segs = segments();
        let fresh = run_segment_loop(&enc, &grid, &segs, &max_quality(), &ControllerSettings::default()).unwrap();
        let sweep: Vec<_> = sweep_segment(&enc, &grid, &segs[0], None).into_iter().map(|r| r.unwrap()).collect();
        let cs = max_quality();
        let reused = run_from_sweep(&enc, &grid, &segs, sweep, &|_| cs, &ControllerSettings::default()).unwrap();
        assert_eq!(fresh.history, reused.history);
        let wrong: Vec<_> = sweep_segment(&enc, &grid, &segs[1], None).into_iter().map(|r| r.unwrap()).collect();
        assert!(matches!(
            run_from_sweep(&enc, &grid, &segs, wrong, &|_| cs, &ControllerSettings::default()),
            Err(Error::Mismatch(_))
        ));
    }

    #[test]
    fn encoder_failure_is_recorded() {
        let law = SyntheticLaw::default();
        let grid = CodecGrid::synthetic(&law);
        let enc = FailOn(2, SyntheticEncoder::new(law));
        let st = run_segment_loop(&enc, &grid, &segments(), &max_quality(), &ControllerSettings::default()).unwrap();
        assert!(st.history[2].failed.as_deref().unwrap().contains("boom"));
        assert!(st.history[3].measured.is_some());
    }

    #[test]
    fn neighbor_clamp_limits_jumps() {
        let law = SyntheticLaw::default();
        let grid = CodecGrid::synthetic(&law);
        let enc = SyntheticEncoder::new(law);
        let segs = segments();
        let schedule = |s: &Segment| {
            let cap = if s.index == 0 { 11205.77 } else { 2000.0 };
            make_mode(
                "max_quality",
                Bounds {
                    max_bitrate: Some(cap),
                    min_fps: Some(25.0),
                    ..Default::default()
                },
            )
            .unwrap()
        };
        let st = run_scheduled(&enc, &grid, &segs, &schedule, &ControllerSettings::default()).unwrap();
        let qps: Vec<i32> = st.history.iter().map(|r| r.config.as_ref().unwrap().qp).collect();
        assert_eq!(qps[0], 28);
        for w in qps.windows(2) {
            assert!((w[1] - w[0]).abs() <= 4, "{qps:?}");
        }
        assert!(qps[3] > qps[1]);
    }

    #[test]
    fn baseline_and_summary() {
        let law = SyntheticLaw::default();
        let grid = CodecGrid::synthetic(&law);
        let enc = SyntheticEncoder::new(law);
        let segs = segments();
        let (qp, base) = baseline_for_bitrate(&enc, &grid, &segs, 11205.77).unwrap();
        assert_eq!(qp, 28);
        let st = run_segment_loop(&enc, &grid, &segs, &max_quality(), &ControllerSettings::default()).unwrap();
        let s = summarize(&st.history, &base, Some(qp));
        assert_eq!(s.segments, 4);
        assert!(s.bitrate_gain_pct.unwrap() >= 0.0);
    }
}
