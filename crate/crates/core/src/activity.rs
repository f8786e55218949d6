//! Camera-activity classification from motion-vector statistics, activity
//! boundaries from prediction-unit counts, and activity-driven constraints.

use std::collections::{BTreeMap, HashMap};
use std::f64::consts::PI;
use std::fmt::{self, Write as _};
use std::str::FromStr;
use std::sync::{Arc, Mutex, OnceLock};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal as StdNormal};

use crate::constraints::{Bounds, ConstraintSet, Mode, QualityMetric, Tolerances};
use crate::error::{Error, Result};

pub const BINS: usize = 25;
pub const DEFAULT_MAX_MAGNITUDE: f64 = 32.0;
pub const DEFAULT_K: usize = 3;
pub const DEFAULT_ALPHA: f64 = 0.05;
pub const DEFAULT_CHANGE_THRESHOLD: f64 = 0.30;
pub const DEFAULT_WINDOW: usize = 25;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActivityLabel {
    Tracking,
    Stationary,
    Zoom,
}

impl ActivityLabel {
    pub const ALL: [ActivityLabel; 3] = [ActivityLabel::Tracking, ActivityLabel::Stationary, ActivityLabel::Zoom];

    pub fn as_str(self) -> &'static str {
        match self {
            ActivityLabel::Tracking => "tracking",
            ActivityLabel::Stationary => "stationary",
            ActivityLabel::Zoom => "zoom",
        }
    }

    fn title(self) -> &'static str {
        match self {
            ActivityLabel::Tracking => "Tracking",
            ActivityLabel::Stationary => "Stationary",
            ActivityLabel::Zoom => "Zoom",
        }
    }
}

impl fmt::Display for ActivityLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ActivityLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tracking" | "track" => Ok(ActivityLabel::Tracking),
            "stationary" | "static" => Ok(ActivityLabel::Stationary),
            "zoom" | "zooming" => Ok(ActivityLabel::Zoom),
            _ => Err(Error::UnmappedLabel(s.to_string())),
        }
    }
}

/// Histogram layout.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub bins: usize,
    /// Upper edge of the magnitude histogram in pixels per frame; larger magnitudes land in the last bin.
    pub max_magnitude: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            bins: BINS,
            max_magnitude: DEFAULT_MAX_MAGNITUDE,
        }
    }
}

/// Normalized magnitude and orientation histograms with their CDFs. A
/// histogram with no contributing vectors is all zero, and so is its CDF.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MotionFeatures {
    pub mag_hist: Vec<f64>,
    pub ori_hist: Vec<f64>,
    pub mag_cdf: Vec<f64>,
    pub ori_cdf: Vec<f64>,
    pub pu_count: f64,
}

impl MotionFeatures {
    /// Classifier input: magnitude CDF followed by orientation CDF.
    pub fn vector(&self) -> Vec<f64> {
        self.mag_cdf.iter().chain(&self.ori_cdf).copied().collect()
    }
}

fn normalize(counts: Vec<f64>) -> Vec<f64> {
    let total: f64 = counts.iter().sum();
    if total > 0.0 {
        counts.into_iter().map(|c| c / total).collect()
    } else {
        counts
    }
}

fn cumulative(hist: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    let mut out: Vec<f64> = hist
        .iter()
        .map(|h| {
            acc += h;
            acc
        })
        .collect();
    if acc > 0.0 {
        // pin the last bin to exactly one
        if let Some(last) = out.last_mut() {
            *last = 1.0;
        }
    }
    out
}

pub fn extract_mv_features(mvs: &[(f64, f64)], pu_count: f64) -> MotionFeatures {
    extract_with(mvs, pu_count, &FeatureConfig::default())
}

pub fn extract_with(mvs: &[(f64, f64)], pu_count: f64, cfg: &FeatureConfig) -> MotionFeatures {
    let n = cfg.bins.max(1);
    let mut mag = vec![0.0; n];
    let mut ori = vec![0.0; n];
    let width = cfg.max_magnitude / n as f64;
    for &(dx, dy) in mvs {
        let m = dx.hypot(dy);
        if !m.is_finite() {
            continue;
        }
        mag[((m / width) as usize).min(n - 1)] += 1.0;
        if m > 0.0 {
            let a = dy.atan2(dx);
            let b = (((a + PI) / (2.0 * PI)) * n as f64).floor() as usize % n;
            ori[b] += 1.0;
        }
    }
    let mag_hist = normalize(mag);
    let ori_hist = normalize(ori);
    MotionFeatures {
        mag_cdf: cumulative(&mag_hist),
        ori_cdf: cumulative(&ori_hist),
        mag_hist,
        ori_hist,
        pu_count,
    }
}

// exact null distributions of U, cached by sample sizes
type UDist = Arc<Vec<f64>>;

fn exact_u_distribution(n1: usize, n2: usize) -> UDist {
    static CACHE: OnceLock<Mutex<HashMap<(usize, usize), UDist>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    if let Some(d) = cache.lock().unwrap().get(&(n1, n2)) {
        return d.clone();
    }
    // counts[i][j][u]: arrangements of i and j items with statistic u
    let max_u = n1 * n2;
    let mut prev: Vec<Vec<f64>> = vec![vec![0.0; max_u + 1]; n2 + 1];
    for row in prev.iter_mut() {
        row[0] = 1.0;
    }
    for i in 1..=n1 {
        let mut cur: Vec<Vec<f64>> = vec![vec![0.0; max_u + 1]; n2 + 1];
        cur[0][0] = 1.0;
        for j in 1..=n2 {
            for u in 0..=i * j {
                let a = if u >= j { prev[j][u - j] } else { 0.0 };
                cur[j][u] = a + cur[j - 1][u];
            }
        }
        prev = cur;
    }
    let counts = &prev[n2];
    let total: f64 = counts.iter().sum();
    let dist: UDist = Arc::new(counts.iter().map(|c| c / total).collect());
    cache.lock().unwrap().insert((n1, n2), dist.clone());
    dist
}

/// Two-sided Mann–Whitney U test, returning `(U of a, p-value)`. Exact for
/// tie-free samples of at most 20 each, otherwise the normal approximation
/// with tie and continuity corrections.
pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> (f64, f64) {
    let (n1, n2) = (a.len(), b.len());
    if n1 == 0 || n2 == 0 {
        return (0.0, 1.0);
    }
    let mut all: Vec<(f64, bool)> = a.iter().map(|&x| (x, true)).chain(b.iter().map(|&x| (x, false))).collect();
    all.sort_by(|x, y| x.0.total_cmp(&y.0));
    let n = all.len();
    let mut ranks = vec![0.0; n];
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && all[j + 1].0 == all[i].0 {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for rank in ranks.iter_mut().take(j + 1).skip(i) {
            *rank = r;
        }
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        i = j + 1;
    }
    let r1: f64 = all.iter().zip(&ranks).filter(|(x, _)| x.1).map(|(_, r)| r).sum();
    let u1 = r1 - (n1 * (n1 + 1)) as f64 / 2.0;
    let (f1, f2) = (n1 as f64, n2 as f64);
    let mean = f1 * f2 / 2.0;

    if tie_term == 0.0 && n1 <= 20 && n2 <= 20 {
        let dist = exact_u_distribution(n1, n2);
        let u = u1.round() as usize;
        let lower: f64 = dist[..=u].iter().sum();
        let upper: f64 = dist[u..].iter().sum();
        return (u1, (2.0 * lower.min(upper)).min(1.0));
    }
    let nf = f1 + f2;
    let var = f1 * f2 / 12.0 * ((nf + 1.0) - tie_term / (nf * (nf - 1.0)));
    if var <= 0.0 {
        return (u1, 1.0);
    }
    let z = ((u1 - mean).abs() - 0.5).max(0.0) / var.sqrt();
    let norm = StdNormal::new(0.0, 1.0).expect("unit normal");
    (u1, (2.0 * (1.0 - norm.cdf(z))).min(1.0))
}

/// Feature indices chosen for one label pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinSelection {
    pub bins: Vec<usize>,
    /// No bin was significant, so all bins are used.
    pub fallback: bool,
}

pub type Sample = (ActivityLabel, Vec<f64>);

/// Indices whose values separate the two labels at significance `alpha`.
pub fn select_bins(training: &[Sample], pair: (ActivityLabel, ActivityLabel), alpha: f64) -> Result<BinSelection> {
    let of = |l: ActivityLabel| training.iter().filter(|s| s.0 == l).map(|s| &s.1).collect::<Vec<_>>();
    let (a, b) = (of(pair.0), of(pair.1));
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "need two samples each of {} and {}",
            pair.0, pair.1
        )));
    }
    let dims = a[0].len();
    let bins: Vec<usize> = (0..dims)
        .filter(|&d| {
            let xa: Vec<f64> = a.iter().map(|v| v[d]).collect();
            let xb: Vec<f64> = b.iter().map(|v| v[d]).collect();
            mann_whitney_u(&xa, &xb).1 < alpha
        })
        .collect();
    Ok(if bins.is_empty() {
        BinSelection {
            bins: (0..dims).collect(),
            fallback: true,
        }
    } else {
        BinSelection { bins, fallback: false }
    })
}

pub const PAIRS: [(ActivityLabel, ActivityLabel); 3] = [
    (ActivityLabel::Tracking, ActivityLabel::Stationary),
    (ActivityLabel::Stationary, ActivityLabel::Zoom),
    (ActivityLabel::Tracking, ActivityLabel::Zoom),
];

/// Three pairwise kNN classifiers voting on a label.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActivityClassifier {
    pub k: usize,
    pub training: Vec<Sample>,
    pub selections: Vec<((ActivityLabel, ActivityLabel), BinSelection)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub label: ActivityLabel,
    /// Winner of each pairwise classifier, in [`PAIRS`] order.
    pub pairwise: Vec<ActivityLabel>,
}

impl ActivityClassifier {
    pub fn train(training: Vec<Sample>, k: usize, alpha: f64) -> Result<Self> {
        for l in ActivityLabel::ALL {
            if !training.iter().any(|s| s.0 == l) {
                return Err(Error::InsufficientData(format!("no {l} samples in training set")));
            }
        }
        let selections = PAIRS
            .iter()
            .map(|&p| select_bins(&training, p, alpha).map(|s| (p, s)))
            .collect::<Result<Vec<_>>>()?;
        Ok(ActivityClassifier {
            k: k.max(1),
            training,
            selections,
        })
    }

    pub fn from_features(training: &[(ActivityLabel, MotionFeatures)], k: usize) -> Result<Self> {
        Self::train(
            training.iter().map(|(l, f)| (*l, f.vector())).collect(),
            k,
            DEFAULT_ALPHA,
        )
    }

    /// Pairwise kNN vote; the sorted neighbour order depends on distance,
    /// then label, then feature values, never on training order.
    pub fn binary(&self, pair: (ActivityLabel, ActivityLabel), x: &[f64]) -> ActivityLabel {
        let sel = &self
            .selections
            .iter()
            .find(|(p, _)| *p == pair)
            .expect("pair trained")
            .1;
        let mut nn: Vec<(f64, ActivityLabel, &Vec<f64>)> = self
            .training
            .iter()
            .filter(|s| s.0 == pair.0 || s.0 == pair.1)
            .map(|s| {
                let d: f64 = sel.bins.iter().map(|&i| (s.1[i] - x[i]).powi(2)).sum();
                (d, s.0, &s.1)
            })
            .collect();
        nn.sort_by(|a, b| {
            a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then_with(|| {
                a.2.iter()
                    .zip(b.2.iter())
                    .map(|(x, y)| x.total_cmp(y))
                    .find(|o| o.is_ne())
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
        });
        let top = &nn[..self.k.min(nn.len())];
        let votes_a = top.iter().filter(|n| n.1 == pair.0).count();
        let votes_b = top.len() - votes_a;
        match votes_a.cmp(&votes_b) {
            std::cmp::Ordering::Greater => pair.0,
            std::cmp::Ordering::Less => pair.1,
            std::cmp::Ordering::Equal => top[0].1,
        }
    }

    pub fn classify_vector(&self, x: &[f64]) -> Classification {
        let pairwise: Vec<ActivityLabel> = PAIRS.iter().map(|&p| self.binary(p, x)).collect();
        let wins = |l: ActivityLabel| pairwise.iter().filter(|&&w| w == l).count();
        let best = ActivityLabel::ALL.iter().map(|&l| wins(l)).max().unwrap_or(0);
        let leaders: Vec<ActivityLabel> = ActivityLabel::ALL.into_iter().filter(|&l| wins(l) == best).collect();
        let label = if leaders.len() == 1 {
            leaders[0]
        } else {
            ActivityLabel::Stationary
        };
        Classification { label, pairwise }
    }

    pub fn classify(&self, features: &MotionFeatures) -> Classification {
        self.classify_vector(&features.vector())
    }
}

/// Counts for confusion reporting: overall confusion and per-pair binary outcomes.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    /// `(truth, predicted)` per held-out sample.
    pub predictions: Vec<(ActivityLabel, ActivityLabel)>,
    /// `(truth, pair, binary winner)` for pairs containing the truth.
    pub binary: Vec<(ActivityLabel, (ActivityLabel, ActivityLabel), ActivityLabel)>,
}

impl EvaluationReport {
    pub fn accuracy(&self) -> f64 {
        if self.predictions.is_empty() {
            return 0.0;
        }
        self.predictions.iter().filter(|(t, p)| t == p).count() as f64 / self.predictions.len() as f64
    }

    pub fn confusion(&self) -> [[usize; 3]; 3] {
        let idx = |l: ActivityLabel| ActivityLabel::ALL.iter().position(|&x| x == l).unwrap();
        let mut m = [[0; 3]; 3];
        for &(t, p) in &self.predictions {
            m[idx(t)][idx(p)] += 1;
        }
        m
    }

    pub fn merge(&mut self, other: EvaluationReport) {
        self.predictions.extend(other.predictions);
        self.binary.extend(other.binary);
    }

    /// Binary-classifier table: row "X vs Y" counts true-X samples by the label
    /// the X/Y classifier gave them.
    pub fn binary_table(&self) -> String {
        let mut out = String::from("Classifier\tTracking\tStationary\tZoom\n");
        let rows = [
            (ActivityLabel::Tracking, ActivityLabel::Stationary),
            (ActivityLabel::Stationary, ActivityLabel::Tracking),
            (ActivityLabel::Zoom, ActivityLabel::Stationary),
            (ActivityLabel::Stationary, ActivityLabel::Zoom),
            (ActivityLabel::Tracking, ActivityLabel::Zoom),
            (ActivityLabel::Zoom, ActivityLabel::Tracking),
        ];
        for (truth, other) in rows {
            let _ = write!(out, "{} vs {}", truth.title(), other.title());
            for col in ActivityLabel::ALL {
                if col != truth && col != other {
                    out.push_str("\t-");
                    continue;
                }
                let n = self
                    .binary
                    .iter()
                    .filter(|(t, p, w)| *t == truth && (p.0 == other || p.1 == other) && *w == col)
                    .count();
                let _ = write!(out, "\t{n}");
            }
            out.push('\n');
        }
        out
    }

    pub fn confusion_table(&self) -> String {
        let m = self.confusion();
        let mut out = String::from("Classification\tTracking\tStationary\tZoom\n");
        for (i, l) in ActivityLabel::ALL.iter().enumerate() {
            let _ = writeln!(out, "{}\t{}\t{}\t{}", l.title(), m[i][0], m[i][1], m[i][2]);
        }
        out
    }
}

/// Leave-one-out evaluation: bins are re-selected without the held-out sample.
pub fn leave_one_out(samples: &[Sample], k: usize, alpha: f64) -> Result<EvaluationReport> {
    let mut report = EvaluationReport::default();
    for i in 0..samples.len() {
        let train: Vec<Sample> = samples
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, s)| s.clone())
            .collect();
        let clf = ActivityClassifier::train(train, k, alpha)?;
        let (truth, x) = &samples[i];
        let c = clf.classify_vector(x);
        for (pair, w) in PAIRS.iter().zip(&c.pairwise) {
            if pair.0 == *truth || pair.1 == *truth {
                report.binary.push((*truth, *pair, *w));
            }
        }
        report.predictions.push((*truth, c.label));
    }
    Ok(report)
}

/// Block-grid size of generated fields.
pub const FIELD_COLS: usize = 16;
pub const FIELD_ROWS: usize = 9;

/// A synthetic block motion field for one activity: zeros, a near-horizontal
/// pan of 4–12 px, or a radial zoom; plus Gaussian noise of `sigma` px.
pub fn canonical_field<R: Rng>(label: ActivityLabel, sigma: f64, rng: &mut R) -> Vec<(f64, f64)> {
    let (cx, cy) = ((FIELD_COLS as f64 - 1.0) / 2.0, (FIELD_ROWS as f64 - 1.0) / 2.0);
    let pan = (rng.random_range(4.0..12.0), rng.random_range(-PI / 8.0..PI / 8.0));
    let zoom = rng.random_range(0.5..1.5) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    let noise = Normal::new(0.0, sigma.max(0.0)).expect("finite sigma");
    let mut out = Vec::with_capacity(FIELD_COLS * FIELD_ROWS);
    for by in 0..FIELD_ROWS {
        for bx in 0..FIELD_COLS {
            let (dx, dy) = match label {
                ActivityLabel::Stationary => (0.0, 0.0),
                ActivityLabel::Tracking => (pan.0 * pan.1.cos(), pan.0 * pan.1.sin()),
                ActivityLabel::Zoom => (zoom * (bx as f64 - cx), zoom * (by as f64 - cy)),
            };
            if sigma > 0.0 {
                out.push((dx + noise.sample(rng), dy + noise.sample(rng)));
            } else {
                out.push((dx, dy));
            }
        }
    }
    out
}

/// `per_label` generated samples of each activity.
pub fn canonical_training_set<R: Rng>(per_label: usize, sigma: f64, rng: &mut R) -> Vec<Sample> {
    let mut out = Vec::new();
    for l in ActivityLabel::ALL {
        for _ in 0..per_label {
            let f = extract_mv_features(&canonical_field(l, sigma, rng), (FIELD_COLS * FIELD_ROWS) as f64);
            out.push((l, f.vector()));
        }
    }
    out
}

/// Frame indices where the windowed mean PU count changes by more than
/// `threshold_rel` between the windows before and after. Windows shrink for
/// short series; adjacent detections collapse to their strongest change.
pub fn detect_activity_change(pu_counts: &[f64], threshold_rel: f64, window: usize) -> Vec<usize> {
    let n = pu_counts.len();
    if n < 2 {
        return Vec::new();
    }
    let w = window.max(1).min(n / 2).max(1);
    let mut prefix = vec![0.0; n + 1];
    for (i, v) in pu_counts.iter().enumerate() {
        prefix[i + 1] = prefix[i] + v;
    }
    let mean = |a: usize, b: usize| (prefix[b] - prefix[a]) / (b - a) as f64;
    let change = |t: usize| {
        let (before, after) = (mean(t - w, t), mean(t, t + w));
        if before > 0.0 {
            (after - before).abs() / before
        } else if after > 0.0 {
            f64::INFINITY
        } else {
            0.0
        }
    };
    let mut out = Vec::new();
    let mut run: Option<(usize, f64)> = None;
    for t in w..=n - w {
        let c = change(t);
        if c > threshold_rel {
            match run {
                Some((_, best)) if best >= c => {}
                _ => run = Some((t, c)),
            }
        } else if let Some((t0, _)) = run.take() {
            out.push(t0);
        }
    }
    if let Some((t0, _)) = run {
        out.push(t0);
    }
    out
}

/// Consecutive frame ranges cut at `boundaries`.
pub fn regions(boundaries: &[usize], frame_count: usize) -> Vec<std::ops::Range<usize>> {
    let mut cuts: Vec<usize> = boundaries.iter().copied().filter(|&b| b > 0 && b < frame_count).collect();
    cuts.sort_unstable();
    cuts.dedup();
    let mut out = Vec::new();
    let mut start = 0;
    for c in cuts.into_iter().chain(std::iter::once(frame_count)) {
        if c > start {
            out.push(start..c);
            start = c;
        }
    }
    out
}

/// Constraint set per activity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActivityPolicy {
    pub map: BTreeMap<ActivityLabel, ConstraintSet>,
    /// Frames the `max_time` budget covers; per-region budgets are pro-rated when set.
    #[serde(default)]
    pub time_budget_frames: Option<usize>,
}

fn ssim_min_bitrate(min_ssim: f64, max_time: f64) -> ConstraintSet {
    ConstraintSet {
        mode: Mode::MinBitrate,
        bounds: Bounds {
            min_quality: Some(min_ssim),
            max_time: Some(max_time),
            ..Default::default()
        },
        tolerances: Tolerances::default(),
        quality_metric: QualityMetric::Ssim,
    }
}

impl ActivityPolicy {
    pub fn uniform(cs: ConstraintSet) -> Self {
        ActivityPolicy {
            map: ActivityLabel::ALL.into_iter().map(|l| (l, cs)).collect(),
            time_budget_frames: None,
        }
    }

    /// Shields: tracking 0.88, stationary and zoom 0.94, 10 s per 500 frames.
    pub fn shields() -> Self {
        ActivityPolicy {
            map: [
                (ActivityLabel::Tracking, ssim_min_bitrate(0.88, 10.0)),
                (ActivityLabel::Stationary, ssim_min_bitrate(0.94, 10.0)),
                (ActivityLabel::Zoom, ssim_min_bitrate(0.94, 10.0)),
            ]
            .into_iter()
            .collect(),
            time_budget_frames: Some(500),
        }
    }

    /// Park run: tracking 0.85, stationary 0.95; zoom is not mapped.
    pub fn parkrun() -> Self {
        ActivityPolicy {
            map: [
                (ActivityLabel::Tracking, ssim_min_bitrate(0.85, 10.0)),
                (ActivityLabel::Stationary, ssim_min_bitrate(0.95, 10.0)),
            ]
            .into_iter()
            .collect(),
            time_budget_frames: Some(500),
        }
    }

    /// Constraints for a region of `frames` frames.
    pub fn for_region(&self, label: ActivityLabel, frames: usize) -> Result<ConstraintSet> {
        let mut cs = apply_policy(label, self)?;
        if let (Some(budget), Some(t)) = (self.time_budget_frames, cs.bounds.max_time) {
            cs.bounds.max_time = Some(t * frames as f64 / budget as f64);
        }
        Ok(cs)
    }
}

pub fn apply_policy(label: ActivityLabel, policy: &ActivityPolicy) -> Result<ConstraintSet> {
    policy
        .map
        .get(&label)
        .copied()
        .ok_or_else(|| Error::UnmappedLabel(label.to_string()))
}
