//! Bjøntegaard delta rate and correlation coefficients.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::poly::{self, Polynomial};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RdCurve {
    pub label: String,
    /// `(bitrate_kbps, quality)` sorted by bitrate.
    pub points: Vec<(f64, f64)>,
}

impl RdCurve {
    pub fn new(label: impl Into<String>, mut points: Vec<(f64, f64)>) -> Result<Self> {
        if points.len() < 4 {
            return Err(Error::TooFewPoints(points.len()));
        }
        if let Some(&(b, _)) = points.iter().find(|p| !(p.0 > 0.0 && p.0.is_finite()) || !p.1.is_finite()) {
            return Err(Error::LogUndefined(b));
        }
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        Ok(RdCurve {
            label: label.into(),
            points,
        })
    }

    /// Quality never drops as bitrate rises.
    pub fn is_monotone(&self) -> bool {
        self.points.windows(2).all(|w| w[1].1 >= w[0].1)
    }

    fn quality_range(&self) -> (f64, f64) {
        let qs = self.points.iter().map(|p| p.1);
        (
            qs.clone().fold(f64::INFINITY, f64::min),
            qs.fold(f64::NEG_INFINITY, f64::max),
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BdResult {
    /// Fractional bitrate change of B relative to A; negative means B saves.
    pub bd_rate: f64,
    pub overlap: (f64, f64),
    /// At least one input curve was not monotone.
    pub non_monotone: bool,
}

fn cubic(xs: &[f64], ys: &[f64]) -> Result<Polynomial> {
    let (c, s) = poly::centering(xs);
    Ok(poly::fit(xs, ys, 3.min(xs.len() - 1), c, s)?.poly)
}

// integrates in the centered variable to keep cancellation small
fn mean_over(p: &Polynomial, lo: f64, hi: f64) -> f64 {
    let (c, s) = ((lo + hi) / 2.0, (hi - lo) / 2.0);
    // p(c + s t) expanded in t
    let n = p.coeffs.len();
    let mut shifted = vec![0.0; n];
    for (k, &a) in p.coeffs.iter().enumerate() {
        let mut binom = 1.0;
        for j in 0..=k {
            shifted[j] += a * binom * c.powi((k - j) as i32) * s.powi(j as i32);
            binom = binom * (k - j) as f64 / (j + 1) as f64;
        }
    }
    Polynomial::new(shifted).integrate(-1.0, 1.0) / 2.0
}

/// Average log-bitrate difference of B over A at equal quality, exponentiated.
pub fn bd_rate(a: &RdCurve, b: &RdCurve) -> Result<BdResult> {
    for c in [a, b] {
        if c.points.len() < 4 {
            return Err(Error::TooFewPoints(c.points.len()));
        }
    }
    let (alo, ahi) = a.quality_range();
    let (blo, bhi) = b.quality_range();
    let (lo, hi) = (alo.max(blo), ahi.min(bhi));
    if !(hi > lo) {
        return Err(Error::NoQualityOverlap);
    }
    let fit = |c: &RdCurve| {
        let q: Vec<f64> = c.points.iter().map(|p| p.1).collect();
        let r: Vec<f64> = c.points.iter().map(|p| p.0.ln()).collect();
        cubic(&q, &r)
    };
    let (pa, pb) = (fit(a)?, fit(b)?);
    let diff = mean_over(&pb, lo, hi) - mean_over(&pa, lo, hi);
    Ok(BdResult {
        bd_rate: diff.exp() - 1.0,
        overlap: (lo, hi),
        non_monotone: !(a.is_monotone() && b.is_monotone()),
    })
}

/// Average quality difference of B over A at equal log-bitrate.
pub fn bd_quality(a: &RdCurve, b: &RdCurve) -> Result<f64> {
    let range = |c: &RdCurve| (c.points[0].0.ln(), c.points[c.points.len() - 1].0.ln());
    let ((alo, ahi), (blo, bhi)) = (range(a), range(b));
    let (lo, hi) = (alo.max(blo), ahi.min(bhi));
    if !(hi > lo) {
        return Err(Error::NoQualityOverlap);
    }
    let fit = |c: &RdCurve| {
        let r: Vec<f64> = c.points.iter().map(|p| p.0.ln()).collect();
        let q: Vec<f64> = c.points.iter().map(|p| p.1).collect();
        cubic(&r, &q)
    };
    Ok(mean_over(&fit(b)?, lo, hi) - mean_over(&fit(a)?, lo, hi))
}

fn check_pair(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::Mismatch(format!("{} vs {} values", x.len(), y.len())));
    }
    if x.len() < 3 {
        return Err(Error::TooFewPoints(x.len()));
    }
    Ok(())
}

pub fn pcc(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y)?;
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation("constant input"));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Ranks starting at 1 with ties averaged.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

pub fn srocc(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y)?;
    pcc(&average_ranks(x), &average_ranks(y))
}

/// Pairwise savings table: cell (row, col) is the bitrate saving of the
/// column codec relative to the row codec in percent, upper triangle only.
pub fn savings_table(curves: &[RdCurve]) -> Vec<Vec<Option<Result<f64>>>> {
    let n = curves.len();
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| (j > i).then(|| bd_rate(&curves[i], &curves[j]).map(|r| 0.0 - r.bd_rate * 100.0)))
                .collect()
        })
        .collect()
}

pub fn format_savings_table(curves: &[RdCurve], metric: &str) -> String {
    let table = savings_table(curves);
    let mut out = format!("Bitrate savings Relative to ({metric})");
    for c in curves {
        out.push('\t');
        out.push_str(&c.label);
    }
    out.push('\n');
    for (i, row) in table.iter().enumerate() {
        out.push_str(&curves[i].label);
        for cell in row {
            out.push('\t');
            match cell {
                None => out.push('-'),
                Some(Ok(v)) => out.push_str(&format!("{v:.2}%")),
                Some(Err(_)) => out.push_str("n/a"),
            }
        }
        out.push('\n');
    }
    out
}
