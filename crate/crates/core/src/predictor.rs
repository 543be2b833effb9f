//! EWMA forecasting, blacklist generation, and evaluation metrics.

use std::collections::{HashMap, HashSet};

use thiserror::Error;

use crate::corpus::{OrgId, Subnet24};
use crate::sharing::AugmentedTrainingSet;

#[derive(Debug, Error, PartialEq)]
pub enum PredictError {
    #[error("cannot forecast from an empty series")]
    EmptySeries,
    #[error("smoothing coefficient {0} outside (0, 1)")]
    BadAlpha(f64),
    #[error("blacklist threshold {0} must be non-negative")]
    BadTau(f64),
}

/// Smoothing coefficient and blacklist inclusion threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForecastParams {
    pub alpha: f64,
    pub tau: f64,
}

impl ForecastParams {
    pub fn new(alpha: f64, tau: f64) -> Result<Self, PredictError> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(PredictError::BadAlpha(alpha));
        }
        // The negated form also rejects NaN.
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !(tau >= 0.0) {
            return Err(PredictError::BadTau(tau));
        }
        Ok(ForecastParams { alpha, tau })
    }
}

impl Default for ForecastParams {
    /// alpha = 0.9 favours the recent past; tau = 0.5 admits a source that
    /// attacked on the final training day (score 0.9) but not one whose only
    /// hit is four days old (score 9e-5).
    fn default() -> Self {
        ForecastParams { alpha: 0.9, tau: 0.5 }
    }
}

/// How a source's daily series is built from events.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SeriesMode {
    /// 1 if the source attacked that day, else 0.
    #[default]
    Binary,
    /// Occurrence counts per day, shared events merged additively.
    Counts,
}

/// Next-day forecast: the recency-weighted sum
/// `sum over t' of alpha * (1 - alpha)^(t - t') * r(t')`, unnormalized.
pub fn ewma_forecast(series: &[f64], alpha: f64) -> Result<f64, PredictError> {
    if series.is_empty() {
        return Err(PredictError::EmptySeries);
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(PredictError::BadAlpha(alpha));
    }
    let mut weight = alpha;
    let mut acc = 0.0;
    for value in series.iter().rev() {
        acc += weight * value;
        weight *= 1.0 - alpha;
    }
    Ok(acc)
}

/// The predicted attack sources for one organization's next day.
#[derive(Debug, Clone)]
pub struct Blacklist {
    pub org: OrgId,
    pub predicted: HashSet<Subnet24>,
}

/// Per-source daily series over the training window, from the org's own
/// events plus whatever sharing delivered.
pub fn daily_series(
    aug: &AugmentedTrainingSet<'_>,
    train_days: &[u32],
    mode: SeriesMode,
) -> HashMap<Subnet24, Vec<f64>> {
    let day_index: HashMap<u32, usize> =
        train_days.iter().enumerate().map(|(i, d)| (*d, i)).collect();
    let mut series: HashMap<Subnet24, Vec<f64>> = HashMap::new();
    let mut add = |source: Subnet24, day: u32| {
        if let Some(&i) = day_index.get(&day) {
            let s = series.entry(source).or_insert_with(|| vec![0.0; train_days.len()]);
            match mode {
                SeriesMode::Binary => s[i] = 1.0,
                SeriesMode::Counts => s[i] += 1.0,
            }
        }
    };
    for ev in &aug.base.events {
        add(ev.source, ev.day);
    }
    for ev in &aug.extra {
        add(ev.source, ev.day);
    }
    series
}

/// Forecast every source in the augmented training set and keep those whose
/// score strictly exceeds `tau`.
pub fn predict_blacklist(
    aug: &AugmentedTrainingSet<'_>,
    train_days: &[u32],
    params: &ForecastParams,
    mode: SeriesMode,
) -> Blacklist {
    let predicted = daily_series(aug, train_days, mode)
        .into_iter()
        .filter_map(|(source, series)| {
            let score = ewma_forecast(&series, params.alpha).expect("non-empty series");
            (score > params.tau).then_some(source)
        })
        .collect();
    Blacklist { org: aug.base.org.clone(), predicted }
}

/// Confusion counts for one org on one test day. True negatives are not
/// counted: over the /24 space they are meaningless and FP is already an
/// upper bound.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Counts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
}

pub fn score(predicted: &HashSet<Subnet24>, truth: &HashSet<Subnet24>) -> Counts {
    let tp = predicted.intersection(truth).count() as u64;
    Counts {
        tp,
        fp: predicted.len() as u64 - tp,
        fn_: truth.len() as u64 - tp,
    }
}

/// Change relative to a no-collaboration baseline; `None` marks an undefined
/// ratio (zero baseline), which aggregation skips rather than poisoning
/// averages.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RelativeMetrics {
    pub tp_impr: Option<f64>,
    pub fp_incr: Option<f64>,
    pub fn_incr: Option<f64>,
}

pub fn relative_metrics(baseline: Counts, collaborative: Counts) -> RelativeMetrics {
    let ratio = |base: u64, collab: u64| {
        (base > 0).then(|| (collab as f64 - base as f64) / base as f64)
    };
    RelativeMetrics {
        tp_impr: ratio(baseline.tp, collaborative.tp),
        fp_incr: ratio(baseline.fp, collaborative.fp),
        fn_incr: ratio(baseline.fn_, collaborative.fn_),
    }
}

/// Full per-row metrics: counts, derived rates, and baseline-relative change.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PredictionMetrics {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tpr: f64,
    pub ppv: f64,
    pub f1: f64,
    pub relative: RelativeMetrics,
}

impl PredictionMetrics {
    pub fn from_counts(c: Counts) -> Self {
        let tpr = if c.tp + c.fn_ > 0 { c.tp as f64 / (c.tp + c.fn_) as f64 } else { 0.0 };
        let ppv = if c.tp + c.fp > 0 { c.tp as f64 / (c.tp + c.fp) as f64 } else { 0.0 };
        let f1 = if ppv + tpr > 0.0 { 2.0 * ppv * tpr / (ppv + tpr) } else { 0.0 };
        PredictionMetrics {
            tp: c.tp,
            fp: c.fp,
            fn_: c.fn_,
            tpr,
            ppv,
            f1,
            relative: RelativeMetrics::default(),
        }
    }

    pub fn with_baseline(c: Counts, baseline: Counts) -> Self {
        let mut m = Self::from_counts(c);
        m.relative = relative_metrics(baseline, c);
        m
    }

    pub fn counts(&self) -> Counts {
        Counts { tp: self.tp, fp: self.fp, fn_: self.fn_ }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{LogEvent, OrgLog};
    use proptest::prelude::*;

    fn subnet(v: u32) -> Subnet24 {
        Subnet24::new(v).unwrap()
    }

    fn log_with(days: &[(u32, u32)]) -> OrgLog {
        OrgLog {
            org: "orgA".into(),
            events: days.iter().map(|&(day, s)| LogEvent { day, source: subnet(s) }).collect(),
        }
    }

    #[test]
    fn ewma_last_day_only() {
        let score = ewma_forecast(&[0.0, 0.0, 0.0, 0.0, 1.0], 0.9).unwrap();
        assert!((score - 0.9).abs() < 1e-12);
    }

    #[test]
    fn ewma_zero_signal() {
        for alpha in [0.1, 0.5, 0.9] {
            assert_eq!(ewma_forecast(&[0.0; 5], alpha).unwrap(), 0.0);
        }
    }

    #[test]
    fn ewma_hand_sum() {
        // [1,0,1] at alpha=0.5: 0.5*0.25*1 + 0 + 0.5*1*1 = 0.625.
        let score = ewma_forecast(&[1.0, 0.0, 1.0], 0.5).unwrap();
        assert!((score - 0.625).abs() < 1e-12);
    }

    #[test]
    fn ewma_rejects_empty_and_bad_alpha() {
        assert_eq!(ewma_forecast(&[], 0.5), Err(PredictError::EmptySeries));
        assert!(ewma_forecast(&[1.0], 0.0).is_err());
        assert!(ewma_forecast(&[1.0], 1.0).is_err());
    }

    #[test]
    fn ewma_constant_series_closed_form() {
        for alpha in [0.1f64, 0.37, 0.9] {
            for t in 1..=12usize {
                let series = vec![1.0; t];
                let expect = 1.0 - (1.0 - alpha).powi(t as i32);
                let got = ewma_forecast(&series, alpha).unwrap();
                assert!((got - expect).abs() < 1e-12, "alpha={alpha} t={t}");
            }
        }
    }

    proptest! {
        #[test]
        fn ewma_is_linear(
            xs in proptest::collection::vec(0.0f64..10.0, 1..8),
            ys_seed in proptest::collection::vec(0.0f64..10.0, 1..8),
            a in 0.0f64..5.0,
            b in 0.0f64..5.0,
            alpha in 0.05f64..0.95,
        ) {
            let n = xs.len().min(ys_seed.len());
            let xs = &xs[..n];
            let ys = &ys_seed[..n];
            let combo: Vec<f64> = xs.iter().zip(ys).map(|(x, y)| a * x + b * y).collect();
            let lhs = ewma_forecast(&combo, alpha).unwrap();
            let rhs = a * ewma_forecast(xs, alpha).unwrap() + b * ewma_forecast(ys, alpha).unwrap();
            prop_assert!((lhs - rhs).abs() < 1e-9 * (1.0 + lhs.abs().max(rhs.abs())));
        }

        #[test]
        fn ewma_monotone_in_occurrences(
            base in proptest::collection::vec(0.0f64..5.0, 1..8),
            day in 0usize..8,
            alpha in 0.05f64..0.95,
        ) {
            let day = day % base.len();
            let mut more = base.clone();
            more[day] += 1.0;
            prop_assert!(ewma_forecast(&more, alpha).unwrap() >= ewma_forecast(&base, alpha).unwrap());
        }
    }

    #[test]
    fn blacklist_threshold_behaviour() {
        let train_days = [0, 1, 2, 3, 4];
        let params = ForecastParams::default();
        // Seen only on the last train day: score 0.9 > 0.5.
        let last = log_with(&[(4, 1)]);
        let aug = AugmentedTrainingSet::local(&last);
        let bl = predict_blacklist(&aug, &train_days, &params, SeriesMode::Binary);
        assert!(bl.predicted.contains(&subnet(1)));
        // Seen only on the first train day: score 0.9 * 0.1^4.
        let first = log_with(&[(0, 2)]);
        let aug = AugmentedTrainingSet::local(&first);
        let bl = predict_blacklist(&aug, &train_days, &params, SeriesMode::Binary);
        assert!(!bl.predicted.contains(&subnet(2)));
    }

    #[test]
    fn counts_mode_accumulates_occurrences() {
        let train_days = [0, 1, 2];
        let log = log_with(&[(0, 7), (0, 7), (2, 7)]);
        let aug = AugmentedTrainingSet::local(&log);
        let series = daily_series(&aug, &train_days, SeriesMode::Counts);
        assert_eq!(series[&subnet(7)], vec![2.0, 0.0, 1.0]);
        let binary = daily_series(&aug, &train_days, SeriesMode::Binary);
        assert_eq!(binary[&subnet(7)], vec![1.0, 0.0, 1.0]);
        // Shared extras merge additively in counts mode.
        let extra = vec![LogEvent { day: 0, source: subnet(7) }];
        let aug = AugmentedTrainingSet { base: &log, extra };
        let merged = daily_series(&aug, &train_days, SeriesMode::Counts);
        assert_eq!(merged[&subnet(7)], vec![3.0, 0.0, 1.0]);
    }

    #[test]
    fn tau_zero_predicts_every_seen_source() {
        let train_days = [0, 1, 2, 3, 4];
        let params = ForecastParams::new(0.9, 0.0).unwrap();
        let log = log_with(&[(0, 1), (2, 2), (4, 3)]);
        let aug = AugmentedTrainingSet::local(&log);
        let bl = predict_blacklist(&aug, &train_days, &params, SeriesMode::Binary);
        assert_eq!(bl.predicted, [subnet(1), subnet(2), subnet(3)].into_iter().collect());
    }

    #[test]
    fn score_set_arithmetic() {
        let pred: HashSet<_> = [subnet(1), subnet(2), subnet(3)].into();
        let truth: HashSet<_> = [subnet(2), subnet(3), subnet(4)].into();
        assert_eq!(score(&pred, &truth), Counts { tp: 2, fp: 1, fn_: 1 });
        assert_eq!(score(&HashSet::new(), &[subnet(9)].into()), Counts { tp: 0, fp: 0, fn_: 1 });
        assert_eq!(score(&truth, &truth), Counts { tp: 3, fp: 0, fn_: 0 });
    }

    #[test]
    fn relative_metric_formulas() {
        let r = relative_metrics(
            Counts { tp: 10, fp: 5, fn_: 10 },
            Counts { tp: 19, fp: 5, fn_: 5 },
        );
        assert!((r.tp_impr.unwrap() - 0.9).abs() < 1e-12);
        assert_eq!(r.fp_incr, Some(0.0));
        assert!((r.fn_incr.unwrap() + 0.5).abs() < 1e-12);
    }

    #[test]
    fn zero_baselines_are_undefined_not_nan() {
        let r = relative_metrics(Counts::default(), Counts { tp: 3, fp: 1, fn_: 2 });
        assert_eq!(r, RelativeMetrics { tp_impr: None, fp_incr: None, fn_incr: None });
    }

    #[test]
    fn f1_is_harmonic_mean() {
        let m = PredictionMetrics::from_counts(Counts { tp: 6, fp: 2, fn_: 4 });
        let expect = 2.0 * m.ppv * m.tpr / (m.ppv + m.tpr);
        assert!((m.f1 - expect).abs() < 1e-12);
        let zero = PredictionMetrics::from_counts(Counts::default());
        assert_eq!(zero.f1, 0.0);
    }
}
