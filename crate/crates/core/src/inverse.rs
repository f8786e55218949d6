//! Model inversion: Newton's method for the QP hitting a target, integer
//! rounding toward the safe side, tolerance checks and local search.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::constraints::{check_constraints, check_hard, ConstraintSet, Mode, Predicted, Violation};
use crate::error::{Error, Result};
use crate::models::{Objective, RdModel};

pub const MAX_ITERATIONS: usize = 50;
pub const SEARCH_RADIUS: i32 = 4;

const STEP_TOL: f64 = 1e-10;
const SCAN_STEP: f64 = 0.25;

/// Newton root of `ln(model(q)) = ln(target)` inside the model's QP range.
pub fn newton_solve(model: &RdModel, target: f64, start: f64) -> Result<f64> {
    newton_solve_in(model, target, start, model.qp_range)
}

/// As [`newton_solve`] over an explicit QP interval.
pub fn newton_solve_in(model: &RdModel, target: f64, start: f64, range: (f64, f64)) -> Result<f64> {
    if !(target > 0.0) || !target.is_finite() {
        return Err(Error::LogUndefined(target));
    }
    if model.order() == 0 {
        return Err(Error::DegenerateData);
    }
    let ln_t = target.ln();
    let f = |q: f64| model.log_predict(q) - ln_t;
    let (lo, hi) = range;
    let inside = |q: f64| q >= lo - 1e-9 && q <= hi + 1e-9;

    let newton = newton_iterate(model, ln_t, start).filter(|&q| inside(q));
    let roots = bracket_roots(&f, lo, hi);
    if roots.len() > 1 {
        let nearest = roots
            .iter()
            .copied()
            .min_by(|a, b| (a - start).abs().total_cmp(&(b - start).abs()))
            .unwrap();
        if let Some(q) = newton {
            if (q - nearest).abs() < 1e-6 {
                return Ok(q.clamp(lo, hi));
            }
        }
        let polished = newton_iterate(model, ln_t, nearest).filter(|q| (q - nearest).abs() < 1e-6);
        return Ok(polished.unwrap_or(nearest).clamp(lo, hi));
    }
    if let Some(q) = newton {
        return Ok(q.clamp(lo, hi));
    }
    if let Some(&r) = roots.first() {
        let polished = newton_iterate(model, ln_t, r).filter(|q| (q - r).abs() < 1e-6);
        return Ok(polished.unwrap_or(r).clamp(lo, hi));
    }
    let boundary = if f(lo).abs() <= f(hi).abs() { lo } else { hi };
    Err(Error::TargetUnreachable { boundary })
}

fn newton_iterate(model: &RdModel, ln_t: f64, start: f64) -> Option<f64> {
    let mut q = start;
    let mut last_round = q.round();
    for _ in 0..MAX_ITERATIONS {
        let d = model.log_slope(q);
        if d == 0.0 {
            q += 0.5;
            continue;
        }
        let step = (model.log_predict(q) - ln_t) / d;
        q -= step;
        if !q.is_finite() {
            return None;
        }
        if q.round() == last_round && step.abs() < STEP_TOL {
            return Some(q);
        }
        last_round = q.round();
    }
    // accept a converged-but-jittering iterate
    let resid = model.log_predict(q) - ln_t;
    (resid.abs() < 1e-12 * ln_t.abs().max(1.0)).then_some(q)
}

/// All sign-change roots of `f` on `[lo, hi]`, refined by bisection.
fn bracket_roots(f: &impl Fn(f64) -> f64, lo: f64, hi: f64) -> Vec<f64> {
    let mut roots = Vec::new();
    let steps = ((hi - lo) / SCAN_STEP).ceil().max(1.0) as usize;
    let mut a = lo;
    let mut fa = f(a);
    if fa == 0.0 {
        roots.push(a);
    }
    for i in 1..=steps {
        let b = if i == steps { hi } else { lo + i as f64 * SCAN_STEP };
        let fb = f(b);
        if fb == 0.0 {
            roots.push(b);
        } else if fa != 0.0 && fa.signum() != fb.signum() {
            roots.push(bisect(f, a, b));
        }
        a = b;
        fa = fb;
    }
    roots
}

/// Bisection root of `f` on a sign-changing bracket.
pub fn bisect(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let mut fa = f(a);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        let fm = f(m);
        if fm == 0.0 {
            return m;
        }
        if fm.signum() == fa.signum() {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

/// Which side of a real-valued QP is safe.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RoundingContext {
    /// No bound: the mode alone decides.
    Unbounded,
    /// The QP meets an upper bound on an objective; `increasing` is its direction in QP.
    UpperBound { increasing: bool },
    LowerBound { increasing: bool },
}

pub fn round_qp(qp_real: f64, mode: Mode, ctx: RoundingContext) -> i32 {
    if (qp_real - qp_real.round()).abs() < 1e-9 {
        return qp_real.round() as i32;
    }
    let up = match ctx {
        RoundingContext::UpperBound { increasing } => !increasing,
        RoundingContext::LowerBound { increasing } => increasing,
        RoundingContext::Unbounded => !matches!(mode, Mode::MaxQuality),
    };
    if up {
        qp_real.ceil() as i32
    } else {
        qp_real.floor() as i32
    }
}

/// Fitted models of one (GOP, filters) group, by objective.
pub type ModelSet = BTreeMap<Objective, RdModel>;

/// Where and how to solve.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolveContext {
    pub qp_min: i32,
    pub qp_max: i32,
    pub start_qp: f64,
    /// Frames per segment, turning a time bound into a frame-rate bound.
    pub frames: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QpSolution {
    /// Real-valued root that produced the pick, when one existed.
    pub qp_real: Option<f64>,
    pub qp_int: i32,
    pub predicted: Predicted,
    pub satisfied: bool,
    pub violations: Vec<Violation>,
    pub local_search: bool,
}

/// Model predictions of every constrained objective at `qp`.
pub fn predict_all(models: &ModelSet, cs: &ConstraintSet, qp: f64, frames: Option<f64>) -> Predicted {
    let fps = models.get(&Objective::EncRate).map(|m| m.predict(qp));
    Predicted {
        quality: models.get(&cs.quality_metric.objective()).map(|m| m.predict(qp)),
        bitrate: models.get(&Objective::Bits).map(|m| m.predict(qp)),
        fps,
        time: fps.zip(frames).map(|(f, n)| n / f),
    }
}

fn prefer(a: &(i32, Predicted), b: &(i32, Predicted), mode: Mode) -> std::cmp::Ordering {
    b.1.mode_score(mode)
        .total_cmp(&a.1.mode_score(mode))
        .then(a.1.bitrate.unwrap_or(0.0).total_cmp(&b.1.bitrate.unwrap_or(0.0)))
        .then(a.0.cmp(&b.0))
}

/// Best mode objective among tolerance-satisfying QPs in `center ± 4`, or the
/// least-violating one flagged unsatisfied.
pub fn local_search(center: i32, models: &ModelSet, cs: &ConstraintSet, ctx: &SolveContext) -> QpSolution {
    let lo = (center - SEARCH_RADIUS).max(ctx.qp_min);
    let hi = (center + SEARCH_RADIUS).min(ctx.qp_max);
    let cands: Vec<(i32, Predicted)> = (lo..=hi.max(lo))
        .map(|q| (q, predict_all(models, cs, q as f64, ctx.frames)))
        .collect();
    let feasible = cands
        .iter()
        .filter(|c| check_constraints(&c.1, cs).satisfied)
        .min_by(|a, b| prefer(a, b, cs.mode));
    let pick = feasible.unwrap_or_else(|| {
        cands
            .iter()
            .min_by(|a, b| {
                check_constraints(&a.1, cs)
                    .total_violation()
                    .total_cmp(&check_constraints(&b.1, cs).total_violation())
                    .then_with(|| prefer(a, b, cs.mode))
            })
            .expect("window is never empty")
    });
    let out = check_constraints(&pick.1, cs);
    QpSolution {
        qp_real: None,
        qp_int: pick.0,
        predicted: pick.1,
        satisfied: out.satisfied,
        violations: out.violations,
        local_search: true,
    }
}

/// Solve, round, check and, on failure, search locally.
pub fn solve_qp(models: &ModelSet, cs: &ConstraintSet, ctx: &SolveContext) -> QpSolution {
    let range = (ctx.qp_min as f64, ctx.qp_max as f64);
    let mut bound_targets: Vec<(Objective, f64, bool)> = Vec::new();
    if let Some(b) = cs.bounds.max_bitrate {
        bound_targets.push((Objective::Bits, b, true));
    }
    if let Some(q) = cs.bounds.min_quality {
        bound_targets.push((cs.quality_metric.objective(), q, false));
    }
    let mut min_fps = cs.bounds.min_fps;
    if let (Some(t), Some(n)) = (cs.bounds.max_time, ctx.frames) {
        min_fps = Some(min_fps.unwrap_or(0.0).max(n / t));
    }
    if let Some(f) = min_fps {
        bound_targets.push((Objective::EncRate, f, false));
    }

    let mut cands: Vec<(i32, Option<f64>)> = vec![(ctx.qp_min, None), (ctx.qp_max, None)];
    for (obj, target, upper) in bound_targets {
        let Some(model) = models.get(&obj) else { continue };
        match newton_solve_in(model, target, ctx.start_qp, range) {
            Ok(q) => {
                let increasing = model.log_slope(q) > 0.0;
                let rc = if upper {
                    RoundingContext::UpperBound { increasing }
                } else {
                    RoundingContext::LowerBound { increasing }
                };
                cands.push((round_qp(q, cs.mode, rc).clamp(ctx.qp_min, ctx.qp_max), Some(q)));
            }
            Err(Error::TargetUnreachable { boundary }) => cands.push((boundary.round() as i32, None)),
            Err(_) => {}
        }
    }
    if cs.bounds.max_bitrate.is_none() && cs.bounds.min_quality.is_none() && min_fps.is_none() {
        let q = ctx.start_qp;
        cands.push((round_qp(q, cs.mode, RoundingContext::Unbounded), Some(q)));
    }

    let scored: Vec<(i32, Option<f64>, Predicted)> = cands
        .into_iter()
        .map(|(q, r)| (q, r, predict_all(models, cs, q as f64, ctx.frames)))
        .collect();
    let key = |c: &(i32, Option<f64>, Predicted)| (c.0, c.2);
    let hard = scored
        .iter()
        .filter(|c| check_hard(&c.2, cs).satisfied)
        .min_by(|a, b| prefer(&key(a), &key(b), cs.mode));
    let pick = hard.unwrap_or_else(|| {
        scored
            .iter()
            .min_by(|a, b| {
                check_constraints(&a.2, cs)
                    .total_violation()
                    .total_cmp(&check_constraints(&b.2, cs).total_violation())
                    .then_with(|| prefer(&key(a), &key(b), cs.mode))
            })
            .expect("boundary candidates always present")
    });
    let out = check_constraints(&pick.2, cs);
    if out.satisfied {
        return QpSolution {
            qp_real: pick.1,
            qp_int: pick.0,
            predicted: pick.2,
            satisfied: true,
            violations: out.violations,
            local_search: false,
        };
    }
    let mut sol = local_search(pick.0, models, cs, ctx);
    sol.qp_real = pick.1;
    sol
}
