use chrono::{DateTime, Duration, Utc};
use serde::Serialize;

use super::ProcessError;

/// Least-squares line over `(seconds since first sample, score)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Trend {
    pub forecast_score: f64,
    pub forecast_at: DateTime<Utc>,
    /// Score change per second.
    pub slope: f64,
    /// Fitted score at the first sample.
    pub intercept: f64,
    pub n: usize,
}

fn seconds_between(from: DateTime<Utc>, to: DateTime<Utc>) -> f64 {
    let d = to - from;
    match d.num_microseconds() {
        Some(us) => us as f64 / 1e6,
        None => d.num_milliseconds() as f64 / 1e3,
    }
}

/// Fits an ordinary least-squares line and extrapolates it `horizon` past the
/// last sample; the forecast is clamped to `[0, 1]`.
pub fn predict_trend(series: &[(DateTime<Utc>, f64)], horizon: Duration) -> Result<Trend, ProcessError> {
    let mut points = series.to_vec();
    points.sort_by_key(|p| p.0);
    let distinct = points.windows(2).filter(|w| w[0].0 != w[1].0).count() + usize::from(!points.is_empty());
    if distinct < 2 {
        return Err(ProcessError::InsufficientHistory);
    }
    let t0 = points[0].0;
    let xs: Vec<f64> = points.iter().map(|(t, _)| seconds_between(t0, *t)).collect();
    let n = points.len() as f64;
    let x_mean = xs.iter().sum::<f64>() / n;
    let y_mean = points.iter().map(|(_, y)| y).sum::<f64>() / n;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for (x, (_, y)) in xs.iter().zip(&points) {
        sxx += (x - x_mean) * (x - x_mean);
        sxy += (x - x_mean) * (y - y_mean);
    }
    let slope = sxy / sxx;
    let intercept = y_mean - slope * x_mean;
    let last = points[points.len() - 1].0;
    let forecast_at = last + horizon;
    let forecast_score = (intercept + slope * seconds_between(t0, forecast_at)).clamp(0.0, 1.0);
    Ok(Trend {
        forecast_score,
        forecast_at,
        slope,
        intercept,
        n: points.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(secs: i64) -> DateTime<Utc> {
        DateTime::from_timestamp(1_767_225_600 + secs, 0).unwrap()
    }

    #[test]
    fn recovers_exact_line() {
        let series: Vec<_> = (0..5).map(|i| (t(i), 0.5 + 0.01 * i as f64)).collect();
        let trend = predict_trend(&series, Duration::seconds(3)).unwrap();
        assert!((trend.slope - 0.01).abs() < 1e-12);
        assert!((trend.intercept - 0.5).abs() < 1e-12);
        assert!((trend.forecast_score - 0.57).abs() < 1e-9);
        assert_eq!(trend.forecast_at, t(7));
        assert_eq!(trend.n, 5);
    }

    #[test]
    fn constant_series() {
        let series: Vec<_> = (0..4).map(|i| (t(i * 3600), 0.7)).collect();
        let trend = predict_trend(&series, Duration::hours(24)).unwrap();
        assert_eq!(trend.slope, 0.0);
        assert!((trend.forecast_score - 0.7).abs() < 1e-12);
    }

    #[test]
    fn insufficient_history() {
        assert!(matches!(
            predict_trend(&[(t(0), 0.4)], Duration::hours(1)),
            Err(ProcessError::InsufficientHistory)
        ));
        assert!(matches!(
            predict_trend(&[(t(0), 0.4), (t(0), 0.6)], Duration::hours(1)),
            Err(ProcessError::InsufficientHistory)
        ));
        assert!(matches!(
            predict_trend(&[], Duration::hours(1)),
            Err(ProcessError::InsufficientHistory)
        ));
    }

    #[test]
    fn forecast_is_clamped() {
        let series = [(t(0), 0.5), (t(10), 0.9)];
        let trend = predict_trend(&series, Duration::seconds(100)).unwrap();
        assert_eq!(trend.forecast_score, 1.0);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        /// Solves the 2x2 normal equations directly.
        fn normal_equations(xs: &[f64], ys: &[f64]) -> (f64, f64) {
            let n = xs.len() as f64;
            let sx: f64 = xs.iter().sum();
            let sy: f64 = ys.iter().sum();
            let sxx: f64 = xs.iter().map(|x| x * x).sum();
            let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| x * y).sum();
            let det = n * sxx - sx * sx;
            let slope = (n * sxy - sx * sy) / det;
            let intercept = (sy * sxx - sx * sxy) / det;
            (slope, intercept)
        }

        proptest! {
            #[test]
            fn matches_normal_equations(
                pts in prop::collection::btree_map(0i64..500, 0.0f64..=1.0, 2..12),
            ) {
                let series: Vec<_> = pts.iter().map(|(s, y)| (t(*s), *y)).collect();
                let x0 = *pts.keys().next().unwrap();
                let xs: Vec<f64> = pts.keys().map(|s| (s - x0) as f64).collect();
                let ys: Vec<f64> = pts.values().copied().collect();
                let (slope, intercept) = normal_equations(&xs, &ys);
                let trend = predict_trend(&series, Duration::seconds(0)).unwrap();
                prop_assert!((trend.slope - slope).abs() <= 1e-9);
                prop_assert!((trend.intercept - intercept).abs() <= 1e-9);
            }
        }
    }
}
