//! Dense polynomial least squares on a centered and scaled abscissa.
//!
//! Fits are solved with Householder QR on the transformed variable
//! `t = (x - center) / scale` and re-expanded into the plain monomial basis
//! `c0 + c1 x + c2 x^2 + ...`, so callers never see the internal shift.

use crate::error::{Error, Result};

/// Coefficients in ascending powers of `x`.
#[derive(Clone, Debug, PartialEq)]
pub struct Polynomial {
    pub coeffs: Vec<f64>,
}

impl Polynomial {
    pub fn new(coeffs: Vec<f64>) -> Self {
        Polynomial { coeffs }
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    pub fn derivative(&self) -> Polynomial {
        Polynomial::new(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(i, &c)| c * i as f64)
                .collect(),
        )
    }

    /// Antiderivative with zero constant term.
    pub fn antiderivative(&self) -> Polynomial {
        let mut out = Vec::with_capacity(self.coeffs.len() + 1);
        out.push(0.0);
        out.extend(self.coeffs.iter().enumerate().map(|(i, &c)| c / (i + 1) as f64));
        Polynomial::new(out)
    }

    pub fn integrate(&self, lo: f64, hi: f64) -> f64 {
        let a = self.antiderivative();
        a.eval(hi) - a.eval(lo)
    }
}

/// Result of a polynomial least-squares fit.
#[derive(Clone, Debug)]
pub struct PolyFit {
    pub poly: Polynomial,
    /// Residual sum of squares.
    pub sse: f64,
    /// Total sum of squares about the mean of `y`.
    pub sst: f64,
    /// Unscaled covariance `(X'X)^-1` of the monomial coefficients.
    pub unscaled_cov: Vec<Vec<f64>>,
    pub n: usize,
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Least-squares polynomial of the given order. `center`/`scale` set the
/// internal change of variable and do not affect the returned coefficients
/// beyond rounding.
pub fn fit(xs: &[f64], ys: &[f64], order: usize, center: f64, scale: f64) -> Result<PolyFit> {
    let n = xs.len();
    let p = order + 1;
    debug_assert_eq!(n, ys.len());
    let mut distinct: Vec<f64> = xs.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < p {
        return Err(Error::RankDeficient {
            distinct: distinct.len(),
            order,
        });
    }
    let scale = if scale > 0.0 { scale } else { 1.0 };

    // column-major design in the scaled variable
    let mut a: Vec<Vec<f64>> = (0..p)
        .map(|k| xs.iter().map(|&x| ((x - center) / scale).powi(k as i32)).collect())
        .collect();
    let mut b = ys.to_vec();

    // Householder QR, applying reflections to b as we go
    for k in 0..p {
        let norm = a[k][k..].iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::RankDeficient {
                distinct: distinct.len(),
                order,
            });
        }
        let alpha = if a[k][k] > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = a[k][k..].to_vec();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        if vnorm2 > 0.0 {
            for col in a.iter_mut().skip(k) {
                let dot: f64 = v.iter().zip(&col[k..]).map(|(x, y)| x * y).sum();
                let f = 2.0 * dot / vnorm2;
                for (c, vi) in col[k..].iter_mut().zip(&v) {
                    *c -= f * vi;
                }
            }
            let dot: f64 = v.iter().zip(&b[k..]).map(|(x, y)| x * y).sum();
            let f = 2.0 * dot / vnorm2;
            for (c, vi) in b[k..].iter_mut().zip(&v) {
                *c -= f * vi;
            }
        }
    }

    // R is upper triangular: r[i][j] = a[j][i] for i <= j
    let r = |i: usize, j: usize| a[j][i];
    let rel_tol = 1e-13 * (0..p).map(|i| r(i, i).abs()).fold(0.0, f64::max);
    if (0..p).any(|i| r(i, i).abs() <= rel_tol) {
        return Err(Error::RankDeficient {
            distinct: distinct.len(),
            order,
        });
    }

    let mut scaled = vec![0.0; p];
    for i in (0..p).rev() {
        let s: f64 = (i + 1..p).map(|j| r(i, j) * scaled[j]).sum();
        scaled[i] = (b[i] - s) / r(i, i);
    }

    // R^-1 (upper triangular) for the coefficient covariance
    let mut rinv = vec![vec![0.0; p]; p];
    for j in 0..p {
        rinv[j][j] = 1.0 / r(j, j);
        for i in (0..j).rev() {
            let s: f64 = (i + 1..=j).map(|k| r(i, k) * rinv[k][j]).sum();
            rinv[i][j] = -s / r(i, i);
        }
    }
    let mut cov_scaled = vec![vec![0.0; p]; p];
    for i in 0..p {
        for j in 0..p {
            cov_scaled[i][j] = (0..p).map(|k| rinv[i][k] * rinv[j][k]).sum();
        }
    }

    // map scaled coefficients to monomials in x: coeff_j = sum_k T[j][k] * scaled_k
    let mut t = vec![vec![0.0; p]; p];
    for k in 0..p {
        let sk = scale.powi(-(k as i32));
        for (j, row) in t.iter_mut().enumerate().take(k + 1) {
            row[k] = sk * binomial(k, j) * (-center).powi((k - j) as i32);
        }
    }
    let coeffs: Vec<f64> = (0..p)
        .map(|j| (0..p).map(|k| t[j][k] * scaled[k]).sum())
        .collect();
    let mut unscaled_cov = vec![vec![0.0; p]; p];
    for i in 0..p {
        for j in 0..p {
            let mut s = 0.0;
            for k in 0..p {
                for l in 0..p {
                    s += t[i][k] * cov_scaled[k][l] * t[j][l];
                }
            }
            unscaled_cov[i][j] = s;
        }
    }

    // residuals evaluated in the scaled basis to avoid cancellation
    let scaled_poly = Polynomial::new(scaled);
    let sse: f64 = xs
        .iter()
        .zip(ys)
        .map(|(&x, &y)| {
            let e = y - scaled_poly.eval((x - center) / scale);
            e * e
        })
        .sum();
    let mean = ys.iter().sum::<f64>() / n as f64;
    let sst: f64 = ys.iter().map(|y| (y - mean) * (y - mean)).sum();

    Ok(PolyFit {
        poly: Polynomial::new(coeffs),
        sse,
        sst,
        unscaled_cov,
        n,
    })
}

/// Midpoint and half-width of the sample abscissae, suitable for [`fit`].
pub fn centering(xs: &[f64]) -> (f64, f64) {
    let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let half = (hi - lo) / 2.0;
    ((lo + hi) / 2.0, if half > 0.0 { half } else { 1.0 })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eval_derivative_integral() {
        let p = Polynomial::new(vec![1.0, -2.0, 3.0]);
        assert_eq!(p.eval(2.0), 1.0 - 4.0 + 12.0);
        assert_eq!(p.derivative().coeffs, vec![-2.0, 6.0]);
        // ∫0^1 1 - 2x + 3x² = 1 - 1 + 1
        assert!((p.integrate(0.0, 1.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn recovers_cubic_exactly() {
        let truth = Polynomial::new(vec![2.0, -0.3, 0.01, -1e-4]);
        let xs: Vec<f64> = (0..10).map(|i| 16.0 + 4.0 * i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|&x| truth.eval(x)).collect();
        let (c, s) = centering(&xs);
        let f = fit(&xs, &ys, 3, c, s).unwrap();
        for (a, b) in f.poly.coeffs.iter().zip(&truth.coeffs) {
            assert!((a - b).abs() < 1e-10 * (1.0 + b.abs()), "{a} vs {b}");
        }
        assert!(f.sse < 1e-20);
    }

    #[test]
    fn too_few_distinct_points() {
        let xs = [1.0, 1.0, 2.0];
        let ys = [1.0, 2.0, 3.0];
        assert!(matches!(fit(&xs, &ys, 2, 1.5, 0.5), Err(Error::RankDeficient { .. })));
    }

    #[test]
    fn covariance_matches_normal_equations_for_line() {
        // for y = a + b x, Var(b) ∝ 1 / Σ(x - x̄)²
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys = [1.0, 3.0, 2.0, 5.0];
        let f = fit(&xs, &ys, 1, 1.5, 1.5).unwrap();
        assert!((f.unscaled_cov[1][1] - 1.0 / 5.0).abs() < 1e-12);
        // Var(a) ∝ Σx² / (n Σ(x - x̄)²) = 14 / 20
        assert!((f.unscaled_cov[0][0] - 0.7).abs() < 1e-12);
    }
}
