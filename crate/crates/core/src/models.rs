//! Forward rate/quality/speed models: `ln(objective)` as a polynomial in QP.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::encoder::Filters;
use crate::error::{Error, Result};
use crate::poly::{self, Polynomial};

/// Adjusted R² a fit must reach before a lower order is accepted.
pub const ORDER_THRESHOLD: f64 = 0.9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    Psnr,
    Vmaf,
    Ssim,
    Bits,
    EncRate,
}

impl Objective {
    pub const ALL: [Objective; 5] = [
        Objective::Psnr,
        Objective::Vmaf,
        Objective::Ssim,
        Objective::Bits,
        Objective::EncRate,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Objective::Psnr => "psnr",
            Objective::Vmaf => "vmaf",
            Objective::Ssim => "ssim",
            Objective::Bits => "bits",
            Objective::EncRate => "enc_rate",
        }
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Objective::ALL
            .into_iter()
            .find(|o| o.as_str() == s.to_ascii_lowercase().replace('-', "_"))
            .ok_or_else(|| Error::parse("objective", format!("unknown objective `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub r2: f64,
    pub adjusted_r2: f64,
    /// Largest absolute residual in log units.
    pub residual_max: f64,
    /// Two-sided t-test p-value per coefficient, `None` without residual degrees of freedom.
    pub p_values: Vec<Option<f64>>,
    /// Set when no order reached [`ORDER_THRESHOLD`].
    pub low_confidence: bool,
}

impl FitDiagnostics {
    fn exact(p: usize) -> Self {
        FitDiagnostics {
            r2: 1.0,
            adjusted_r2: 1.0,
            residual_max: 0.0,
            p_values: vec![None; p],
            low_confidence: false,
        }
    }
}

/// `ln(y) = α + β1·QP + ... + βk·QP^k`, optionally labelled with the group it describes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RdModel {
    pub objective: Option<Objective>,
    pub gop: Option<String>,
    pub filters: Option<Filters>,
    /// `(α, β1, ..., βk)`.
    pub coefficients: Vec<f64>,
    pub diagnostics: FitDiagnostics,
    pub qp_range: (f64, f64),
}

/// A prediction and whether it left the training range.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Prediction {
    pub value: f64,
    pub extrapolated: bool,
}

impl RdModel {
    /// A model with known coefficients, e.g. loaded from a table.
    pub fn from_coefficients(coefficients: Vec<f64>, qp_range: (f64, f64)) -> Self {
        let p = coefficients.len();
        RdModel {
            objective: None,
            gop: None,
            filters: None,
            coefficients,
            diagnostics: FitDiagnostics::exact(p),
            qp_range,
        }
    }

    pub fn labeled(mut self, objective: Objective, gop: &str, filters: Filters) -> Self {
        self.objective = Some(objective);
        self.gop = Some(gop.to_string());
        self.filters = Some(filters);
        self
    }

    pub fn order(&self) -> usize {
        self.coefficients.len().saturating_sub(1)
    }

    pub fn polynomial(&self) -> Polynomial {
        Polynomial::new(self.coefficients.clone())
    }

    pub fn log_predict(&self, qp: f64) -> f64 {
        self.coefficients.iter().rev().fold(0.0, |acc, &c| acc * qp + c)
    }

    /// d ln(y) / dQP.
    pub fn log_slope(&self, qp: f64) -> f64 {
        self.coefficients
            .iter()
            .enumerate()
            .skip(1)
            .rev()
            .fold(0.0, |acc, (i, &c)| acc * qp + c * i as f64)
    }

    pub fn predict(&self, qp: f64) -> f64 {
        self.log_predict(qp).exp()
    }

    pub fn predict_checked(&self, qp: f64) -> Prediction {
        Prediction {
            value: self.predict(qp),
            extrapolated: qp < self.qp_range.0 || qp > self.qp_range.1,
        }
    }

    pub fn export(&self) -> ModelRecord {
        ModelRecord {
            objective: self.objective,
            gop: self.gop.clone(),
            filters: self.filters,
            order: self.order(),
            coefficients: self.coefficients.clone(),
            adjusted_r2: self.diagnostics.adjusted_r2,
            low_confidence: self.diagnostics.low_confidence,
            qp_min: self.qp_range.0,
            qp_max: self.qp_range.1,
        }
    }
}

/// Flat export form of a fitted model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelRecord {
    pub objective: Option<Objective>,
    pub gop: Option<String>,
    pub filters: Option<Filters>,
    pub order: usize,
    pub coefficients: Vec<f64>,
    pub adjusted_r2: f64,
    #[serde(default)]
    pub low_confidence: bool,
    pub qp_min: f64,
    pub qp_max: f64,
}

fn p_value(t: f64, dof: f64) -> Option<f64> {
    if t.is_nan() {
        return None;
    }
    if t.is_infinite() {
        return Some(0.0);
    }
    let dist = StudentsT::new(0.0, 1.0, dof).ok()?;
    Some((2.0 * (1.0 - dist.cdf(t.abs()))).clamp(0.0, 1.0))
}

/// Least-squares fit of `ln(value)` on `{1, QP, ..., QP^order}`.
pub fn fit_log_poly(samples: &[(f64, f64)], order: usize) -> Result<RdModel> {
    if samples.is_empty() {
        return Err(Error::EmptyInput("model samples"));
    }
    if let Some(&(_, bad)) = samples.iter().find(|(_, v)| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::LogUndefined(bad));
    }
    let xs: Vec<f64> = samples.iter().map(|s| s.0).collect();
    let ys: Vec<f64> = samples.iter().map(|s| s.1.ln()).collect();
    let n = xs.len();
    let mean = ys.iter().sum::<f64>() / n as f64;
    let spread = ys.iter().map(|y| (y - mean).abs()).fold(0.0, f64::max);
    if spread <= 1e-14 * mean.abs().max(1.0) {
        return Err(Error::DegenerateData);
    }
    let (center, scale) = poly::centering(&xs);
    let fit = poly::fit(&xs, &ys, order, center, scale)?;

    let p = order + 1;
    let r2 = if fit.sst > 0.0 { 1.0 - fit.sse / fit.sst } else { 1.0 };
    let dof = n as f64 - order as f64 - 1.0;
    let adjusted_r2 = if dof > 0.0 {
        1.0 - (1.0 - r2) * (n as f64 - 1.0) / dof
    } else {
        r2
    };
    let sigma2 = if dof > 0.0 { fit.sse / dof } else { f64::NAN };
    let p_values = (0..p)
        .map(|i| {
            if dof <= 0.0 {
                return None;
            }
            let se = (sigma2 * fit.unscaled_cov[i][i]).sqrt();
            let c = fit.poly.coeffs[i];
            let t = if se > 0.0 {
                c / se
            } else if c == 0.0 {
                f64::NAN
            } else {
                f64::INFINITY
            };
            p_value(t, dof)
        })
        .collect();
    let residual_max = xs
        .iter()
        .zip(&ys)
        .map(|(&x, &y)| (y - fit.poly.eval(x)).abs())
        .fold(0.0, f64::max);
    let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);

    Ok(RdModel {
        objective: None,
        gop: None,
        filters: None,
        coefficients: fit.poly.coeffs,
        diagnostics: FitDiagnostics {
            r2,
            adjusted_r2,
            residual_max,
            p_values,
            low_confidence: false,
        },
        qp_range: (lo, hi),
    })
}

/// Lowest order in 1..=3 whose adjusted R² reaches the threshold; otherwise the
/// highest order that could be fitted, flagged low-confidence.
pub fn select_order(samples: &[(f64, f64)]) -> Result<RdModel> {
    let mut last = None;
    for order in 1..=3 {
        match fit_log_poly(samples, order) {
            Ok(m) if m.diagnostics.adjusted_r2 >= ORDER_THRESHOLD => return Ok(m),
            Ok(m) => last = Some(m),
            Err(Error::RankDeficient { .. }) if last.is_some() => break,
            Err(e) => return Err(e),
        }
    }
    let mut m = last.expect("order 1 either fits or errors");
    m.diagnostics.low_confidence = true;
    Ok(m)
}

/// How a caller picks the polynomial order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrderPolicy {
    Fixed(usize),
    Parsimonious,
}

impl Default for OrderPolicy {
    fn default() -> Self {
        OrderPolicy::Fixed(2)
    }
}

impl OrderPolicy {
    /// Fixed orders step down when there are too few distinct QPs.
    pub fn fit(self, samples: &[(f64, f64)]) -> Result<RdModel> {
        match self {
            OrderPolicy::Parsimonious => select_order(samples),
            OrderPolicy::Fixed(order) => {
                let mut order = order;
                loop {
                    match fit_log_poly(samples, order) {
                        Err(Error::RankDeficient { .. }) if order > 1 => order -= 1,
                        other => return other,
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const B6_PSNR: [f64; 3] = [3.866, -0.005, -6.521e-05];
    const B6_BITS: [f64; 3] = [15.946, -0.304, 0.0024092];

    fn x265_qps() -> Vec<f64> {
        (0..10).map(|i| 16.0 + 3.0 * i as f64).collect()
    }

    fn sample(coeffs: &[f64], qps: &[f64]) -> Vec<(f64, f64)> {
        let m = RdModel::from_coefficients(coeffs.to_vec(), (0.0, 100.0));
        qps.iter().map(|&q| (q, m.predict(q))).collect()
    }

    #[test]
    fn recovers_reference_psnr_law() {
        let m = fit_log_poly(&sample(&B6_PSNR, &x265_qps()), 2).unwrap();
        for (a, b) in m.coefficients.iter().zip(B6_PSNR) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
        assert!((m.diagnostics.adjusted_r2 - 1.0).abs() < 1e-9);
        assert_eq!(m.qp_range, (16.0, 43.0));
    }

    #[test]
    fn bits_at_qp28() {
        // exp(15.946 - 8.512 + 1.8888128)
        let m = RdModel::from_coefficients(B6_BITS.to_vec(), (16.0, 43.0));
        let v = m.predict(28.0);
        assert!((v - 11188.0).abs() / 11188.0 < 0.005, "{v}");
        assert!(!m.predict_checked(28.0).extrapolated);
        let below = m.predict_checked(10.0);
        assert!(below.extrapolated && below.value > v);
    }

    #[test]
    fn constant_only_model() {
        let m = RdModel::from_coefficients(vec![2.0], (16.0, 43.0));
        assert_eq!(m.order(), 0);
        assert_eq!(m.predict(30.0), 2f64.exp());
    }

    #[test]
    fn two_points_interpolate() {
        let m = fit_log_poly(&[(20.0, 100.0), (30.0, 50.0)], 1).unwrap();
        assert!(m.diagnostics.residual_max < 1e-12);
        assert!((m.predict(20.0) - 100.0).abs() < 1e-9);
        assert!((m.predict(30.0) - 50.0).abs() < 1e-9);
    }

    #[test]
    fn error_cases() {
        assert!(matches!(
            fit_log_poly(&[(16.0, 1.0), (20.0, 0.0), (24.0, 2.0)], 1),
            Err(Error::LogUndefined(_))
        ));
        let flat: Vec<_> = x265_qps().into_iter().map(|q| (q, 40.0)).collect();
        assert!(matches!(fit_log_poly(&flat, 2), Err(Error::DegenerateData)));
        assert!(matches!(
            fit_log_poly(&[(16.0, 1.0), (16.0, 2.0), (20.0, 3.0)], 2),
            Err(Error::RankDeficient { .. })
        ));
    }

    #[test]
    fn parsimony_prefers_linear() {
        let m = select_order(&sample(&[5.0, -0.1], &x265_qps())).unwrap();
        assert_eq!(m.order(), 1);
        assert!(!m.diagnostics.low_confidence);
    }

    #[test]
    fn curved_data_needs_quadratic() {
        // symmetric parabola in log space: the best line is flat, adjusted R² ≈ 0
        let qps = x265_qps();
        let mid = 29.5;
        let data = sample(&[1.0 + 0.01 * mid * mid, -0.02 * mid, 0.01], &qps);
        let linear = fit_log_poly(&data, 1).unwrap();
        assert!(linear.diagnostics.adjusted_r2 < 0.9);
        assert_eq!(select_order(&data).unwrap().order(), 2);
    }

    #[test]
    fn noise_is_low_confidence_cubic() {
        let jitter = [0.3, -0.2, 0.5, -0.4, 0.1, 0.45, -0.35, 0.05, -0.5, 0.25];
        let data: Vec<_> = x265_qps()
            .into_iter()
            .zip(jitter)
            .map(|(q, j)| (q, (3.0f64 + j * 0.01).exp()))
            .collect();
        for order in 1..=3 {
            assert!(fit_log_poly(&data, order).unwrap().diagnostics.adjusted_r2 < 0.9);
        }
        let m = select_order(&data).unwrap();
        assert_eq!(m.order(), 3);
        assert!(m.diagnostics.low_confidence);
    }

    #[test]
    fn p_values_flag_significance() {
        let mut data = sample(&B6_BITS, &x265_qps());
        for (i, d) in data.iter_mut().enumerate() {
            d.1 *= 1.0 + 0.001 * if i % 2 == 0 { 1.0 } else { -1.0 };
        }
        let m = fit_log_poly(&data, 2).unwrap();
        assert!(m.diagnostics.p_values.iter().all(|p| p.unwrap() < 0.05));
    }

    #[test]
    fn fixed_policy_steps_down() {
        let m = OrderPolicy::Fixed(3).fit(&[(16.0, 10.0), (20.0, 5.0), (24.0, 3.0)]).unwrap();
        assert_eq!(m.order(), 2);
    }
}
