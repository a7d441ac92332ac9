//! Average rate difference between two rate-accuracy curves.
//!
//! Both curves are fitted as log-rate versus accuracy, the fits are averaged
//! over the accuracy interval the curves share, and the difference of
//! averages comes back out of log domain as a percentage: negative means the
//! test curve spends fewer bits than the anchor for the same accuracy.
//!
//! The primary fit is a least-squares cubic in normalized accuracy,
//! integrated in closed form. When that fit is unreliable — fewer than four
//! points, or a normal matrix with 1-norm condition above `1e8` — the curve
//! falls back to a monotone piecewise-cubic interpolant (Fritsch-Carlson
//! slopes), integrated segment by segment.

use crate::error::{Error, Result};
use crate::eval::RdCurve;
use crate::linalg;

/// How a curve's log-rate trend was fitted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitKind {
    /// Least-squares cubic in normalized accuracy.
    CubicLs,
    /// Monotone piecewise-cubic interpolation through the points.
    MonotoneCubic,
}

/// Result of a curve comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BdRateReport {
    /// Average rate difference, percent of the anchor rate.
    pub percent: f64,
    /// Accuracy interval the average was taken over.
    pub interval: (f64, f64),
    pub test_fit: FitKind,
    pub anchor_fit: FitKind,
}

/// Condition threshold beyond which the cubic's normal equations are not
/// trusted.
const CONDITION_LIMIT: f64 = 1e8;

/// Average rate difference of `test` against `anchor`, in percent.
pub fn bd_rate(test: &RdCurve, anchor: &RdCurve) -> Result<f64> {
    Ok(bd_rate_detailed(test, anchor)?.percent)
}

pub fn bd_rate_detailed(test: &RdCurve, anchor: &RdCurve) -> Result<BdRateReport> {
    let (test_lo, test_hi) = test.accuracy_range();
    let (anchor_lo, anchor_hi) = anchor.accuracy_range();
    let lo = test_lo.max(anchor_lo);
    let hi = test_hi.min(anchor_hi);
    // partial_cmp keeps NaN on the error path.
    if hi.partial_cmp(&lo) != Some(std::cmp::Ordering::Greater) {
        return Err(Error::NoOverlap {
            test_lo,
            test_hi,
            anchor_lo,
            anchor_hi,
        });
    }
    if identical(test, anchor) {
        return Ok(BdRateReport {
            percent: 0.0,
            interval: (lo, hi),
            test_fit: FitKind::CubicLs,
            anchor_fit: FitKind::CubicLs,
        });
    }
    let (mean_test, test_fit) = mean_log_rate(test, lo, hi)?;
    let (mean_anchor, anchor_fit) = mean_log_rate(anchor, lo, hi)?;
    Ok(BdRateReport {
        percent: ((mean_test - mean_anchor).exp() - 1.0) * 100.0,
        interval: (lo, hi),
        test_fit,
        anchor_fit,
    })
}

fn identical(a: &RdCurve, b: &RdCurve) -> bool {
    a.points().len() == b.points().len()
        && a.points().iter().zip(b.points()).all(|(p, q)| {
            p.bpp.to_bits() == q.bpp.to_bits() && p.accuracy.to_bits() == q.accuracy.to_bits()
        })
}

/// Mean of the fitted log-rate over accuracies `[lo, hi]`.
fn mean_log_rate(curve: &RdCurve, lo: f64, hi: f64) -> Result<(f64, FitKind)> {
    // Fit in t = (accuracy - lo) / (hi - lo) so the integration interval is
    // [0, 1] regardless of where the curves overlap.
    let span = hi - lo;
    let pts: Vec<(f64, f64)> = curve
        .points()
        .iter()
        .map(|p| ((p.accuracy - lo) / span, p.bpp.ln()))
        .collect();
    if let Some(c) = cubic_ls(&pts) {
        return Ok((
            c[0] + c[1] / 2.0 + c[2] / 3.0 + c[3] / 4.0,
            FitKind::CubicLs,
        ));
    }
    let integral = monotone_cubic_integral(curve, lo, hi)?;
    Ok((integral / span, FitKind::MonotoneCubic))
}

/// Least-squares cubic through `(t, y)` points; `None` when the normal
/// equations are underdetermined or too ill-conditioned to trust.
fn cubic_ls(pts: &[(f64, f64)]) -> Option<[f64; 4]> {
    if pts.len() < 4 {
        return None;
    }
    let mut m = [[0.0f64; 4]; 4];
    let mut r = [0.0f64; 4];
    for &(t, y) in pts {
        let powers = [1.0, t, t * t, t * t * t];
        for j in 0..4 {
            r[j] += y * powers[j];
            for k in 0..4 {
                m[j][k] += powers[j] * powers[k];
            }
        }
    }
    match linalg::condition_1(&m) {
        Some(cond) if cond <= CONDITION_LIMIT => linalg::solve(m, r),
        _ => None,
    }
}

/// Integral of the monotone piecewise-cubic interpolant of log-rate over
/// accuracies `[lo, hi]`, computed segment by segment in closed form.
fn monotone_cubic_integral(curve: &RdCurve, lo: f64, hi: f64) -> Result<f64> {
    let mut knots: Vec<(f64, f64)> = curve
        .points()
        .iter()
        .map(|p| (p.accuracy, p.bpp.ln()))
        .collect();
    knots.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    for w in knots.windows(2) {
        if w[1].0 <= w[0].0 {
            return Err(Error::InvalidCurve(
                "duplicate accuracy values; interpolation fallback needs distinct ones".into(),
            ));
        }
    }
    let slopes = fritsch_carlson_slopes(&knots);

    let mut total = 0.0;
    for (i, w) in knots.windows(2).enumerate() {
        let (x0, y0) = w[0];
        let (x1, y1) = w[1];
        let a = lo.max(x0);
        let b = hi.min(x1);
        if b <= a {
            continue;
        }
        let h = x1 - x0;
        let delta = (y1 - y0) / h;
        let (m0, m1) = (slopes[i], slopes[i + 1]);
        // Hermite segment as y0 + m0 s + c2 s^2 + c3 s^3 over s in [0, h].
        let c2 = (3.0 * delta - 2.0 * m0 - m1) / h;
        let c3 = (m0 + m1 - 2.0 * delta) / (h * h);
        let antiderivative =
            |s: f64| y0 * s + m0 * s * s / 2.0 + c2 * s * s * s / 3.0 + c3 * s * s * s * s / 4.0;
        total += antiderivative(b - x0) - antiderivative(a - x0);
    }
    Ok(total)
}

/// Tangent slopes that keep the piecewise-cubic interpolant monotone on
/// every segment where the data is monotone.
fn fritsch_carlson_slopes(knots: &[(f64, f64)]) -> Vec<f64> {
    let n = knots.len();
    if n == 2 {
        let d = (knots[1].1 - knots[0].1) / (knots[1].0 - knots[0].0);
        return vec![d, d];
    }
    let h: Vec<f64> = knots.windows(2).map(|w| w[1].0 - w[0].0).collect();
    let delta: Vec<f64> = knots
        .windows(2)
        .map(|w| (w[1].1 - w[0].1) / (w[1].0 - w[0].0))
        .collect();
    let mut m = vec![0.0f64; n];
    for i in 1..n - 1 {
        if delta[i - 1] * delta[i] <= 0.0 {
            m[i] = 0.0;
        } else {
            let w1 = 2.0 * h[i] + h[i - 1];
            let w2 = h[i] + 2.0 * h[i - 1];
            m[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
        }
    }
    m[0] = endpoint_slope(h[0], h[1], delta[0], delta[1]);
    m[n - 1] = endpoint_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
    m
}

/// One-sided three-point slope with the standard monotonicity clamp.
fn endpoint_slope(h0: f64, h1: f64, d0: f64, d1: f64) -> f64 {
    let mut m = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if m * d0 <= 0.0 {
        m = 0.0;
    } else if d0 * d1 <= 0.0 && m.abs() > 3.0 * d0.abs() {
        m = 3.0 * d0;
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::RdPoint;
    use approx::assert_abs_diff_eq;

    fn curve(points: &[(f64, f64)]) -> RdCurve {
        RdCurve::new(
            points
                .iter()
                .map(|&(bpp, accuracy)| RdPoint { bpp, accuracy })
                .collect(),
        )
        .unwrap()
    }

    fn base_curve() -> RdCurve {
        curve(&[
            (0.25, 0.70),
            (0.50, 0.80),
            (1.00, 0.88),
            (2.00, 0.93),
            (4.00, 0.96),
        ])
    }

    fn scaled(c: &RdCurve, factor: f64) -> RdCurve {
        RdCurve::new(
            c.points()
                .iter()
                .map(|p| RdPoint {
                    bpp: p.bpp * factor,
                    accuracy: p.accuracy,
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn identical_curves_score_exactly_zero() {
        let c = base_curve();
        assert_eq!(bd_rate(&c, &c).unwrap(), 0.0);
    }

    #[test]
    fn constant_rate_scaling_is_recovered_exactly() {
        let anchor = base_curve();
        let test = scaled(&anchor, 1.1);
        let report = bd_rate_detailed(&test, &anchor).unwrap();
        assert_eq!(report.test_fit, FitKind::CubicLs);
        assert_eq!(report.anchor_fit, FitKind::CubicLs);
        assert_abs_diff_eq!(report.percent, 10.0, epsilon = 1e-6);
        let reverse = bd_rate(&anchor, &test).unwrap();
        assert_abs_diff_eq!(reverse, (1.0 / 1.1 - 1.0) * 100.0, epsilon = 1e-6);
    }

    #[test]
    fn small_shifts_are_nearly_antisymmetric() {
        let anchor = base_curve();
        let test = scaled(&anchor, 1.03);
        let forward = bd_rate(&test, &anchor).unwrap();
        let backward = bd_rate(&anchor, &test).unwrap();
        // exp(d) + exp(-d) - 2 with d = ln(1.03).
        assert!((forward + backward).abs() < 0.1, "{forward} + {backward}");
    }

    #[test]
    fn lower_rate_curve_scores_negative() {
        let anchor = base_curve();
        let test = scaled(&anchor, 0.8);
        assert!(bd_rate(&test, &anchor).unwrap() < 0.0);
    }

    #[test]
    fn three_point_curves_use_the_interpolation_fallback() {
        let anchor = curve(&[(0.5, 0.7), (1.0, 0.85), (2.0, 0.95)]);
        let test = scaled(&anchor, 1.1);
        let report = bd_rate_detailed(&test, &anchor).unwrap();
        assert_eq!(report.test_fit, FitKind::MonotoneCubic);
        assert_eq!(report.anchor_fit, FitKind::MonotoneCubic);
        assert_abs_diff_eq!(report.percent, 10.0, epsilon = 1e-6);
    }

    #[test]
    fn interpolation_matches_exact_integral_of_linear_data() {
        // Log-rate exactly linear in accuracy: y = 2a, so the mean over the
        // shared interval is analytic. Anchor shares the accuracies.
        let test = curve(&[
            (f64::exp(2.0 * 0.5), 0.5),
            (f64::exp(2.0 * 0.7), 0.7),
            (f64::exp(2.0 * 0.9), 0.9),
        ]);
        let anchor = curve(&[(1.0, 0.5), (1.0001, 0.7), (1.0002, 0.9)]);
        let report = bd_rate_detailed(&test, &anchor).unwrap();
        // Mean of 2a over [0.5, 0.9] is 1.4; anchor mean is ~ln(1.0001).
        let anchor_mean = anchor.points().iter().map(|p| p.bpp.ln()).sum::<f64>() / 3.0;
        let expected = ((1.4 - anchor_mean).exp() - 1.0) * 100.0;
        assert_abs_diff_eq!(report.percent, expected, epsilon = 0.05);
    }

    #[test]
    fn disjoint_accuracy_ranges_are_rejected() {
        let a = curve(&[(0.5, 0.1), (1.0, 0.2)]);
        let b = curve(&[(0.5, 0.8), (1.0, 0.9)]);
        match bd_rate(&a, &b) {
            Err(Error::NoOverlap { .. }) => {}
            other => panic!("expected NoOverlap, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_accuracies_fail_only_when_interpolation_is_needed() {
        let flat = curve(&[(0.5, 0.8), (1.0, 0.8), (2.0, 0.9)]);
        let anchor = curve(&[(0.5, 0.7), (1.0, 0.85), (2.0, 0.95)]);
        match bd_rate(&flat, &anchor) {
            Err(Error::InvalidCurve(_)) => {}
            other => panic!("expected InvalidCurve, got {other:?}"),
        }
    }

    #[test]
    fn fallback_slopes_preserve_monotone_data() {
        let knots = vec![(0.0, 0.0), (1.0, 1.0), (2.0, 1.5), (3.0, 1.6)];
        let slopes = fritsch_carlson_slopes(&knots);
        assert!(slopes.iter().all(|&m| m >= 0.0), "{slopes:?}");
    }
}
