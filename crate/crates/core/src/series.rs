//! Uniformly sampled real series and the small smoothing kernels shared by
//! the event and parameter extractors.

use serde::{Deserialize, Serialize};

/// Uniformly sampled series. Missing samples are stored as `NaN`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    /// Time of sample 0, seconds.
    pub start_time: f64,
    /// Samples per second.
    pub rate: f64,
    pub values: Vec<f64>,
}

impl TimeSeries {
    pub fn new(start_time: f64, rate: f64, values: Vec<f64>) -> Self {
        Self {
            start_time,
            rate,
            values,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn time_at(&self, index: usize) -> f64 {
        self.start_time + index as f64 / self.rate
    }

    pub fn end_time(&self) -> f64 {
        self.time_at(self.len().saturating_sub(1))
    }

    /// Nearest sample index for time `t`, clamped to the series.
    pub fn index_at(&self, t: f64) -> usize {
        let i = ((t - self.start_time) * self.rate).round();
        if i <= 0.0 || self.values.is_empty() {
            0
        } else {
            (i as usize).min(self.values.len() - 1)
        }
    }

    /// Sample-index range covering `[t0, t1]`, or `None` when the window
    /// falls outside the series.
    pub fn window(&self, t0: f64, t1: f64) -> Option<std::ops::Range<usize>> {
        if self.values.is_empty() || t1 < t0 {
            return None;
        }
        let lo = ((t0 - self.start_time) * self.rate).ceil();
        let hi = ((t1 - self.start_time) * self.rate).floor();
        if hi < 0.0 || lo > (self.values.len() - 1) as f64 {
            return None;
        }
        let lo = lo.max(0.0) as usize;
        let hi = (hi as usize).min(self.values.len() - 1);
        (lo <= hi).then_some(lo..hi + 1)
    }

    /// Value at time `t` by linear interpolation, `None` outside the series
    /// or next to a missing sample.
    pub fn sample(&self, t: f64) -> Option<f64> {
        if self.values.is_empty() {
            return None;
        }
        let x = (t - self.start_time) * self.rate;
        let last = (self.values.len() - 1) as f64;
        if x < -1e-9 || x > last + 1e-9 {
            return None;
        }
        let x = x.clamp(0.0, last);
        let i = x.floor() as usize;
        let frac = x - i as f64;
        let a = self.values[i];
        if frac < 1e-12 || i + 1 >= self.values.len() {
            return a.is_finite().then_some(a);
        }
        let b = self.values[i + 1];
        let v = a + (b - a) * frac;
        v.is_finite().then_some(v)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::new(self.start_time, self.rate, self.values.iter().map(|&v| f(v)).collect())
    }
}

/// Centered moving average of odd length `width`. Missing samples are
/// skipped; an output sample is missing when its whole window is.
pub fn moving_average(values: &[f64], width: usize) -> Vec<f64> {
    let half = width.max(1) / 2;
    let n = values.len();
    let mut prefix = Vec::with_capacity(n + 1);
    let mut count = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    count.push(0usize);
    for &v in values {
        let (s, c) = (prefix[prefix.len() - 1], count[count.len() - 1]);
        if v.is_finite() {
            prefix.push(s + v);
            count.push(c + 1);
        } else {
            prefix.push(s);
            count.push(c);
        }
    }
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(n);
            let c = count[hi] - count[lo];
            if c == 0 {
                f64::NAN
            } else {
                (prefix[hi] - prefix[lo]) / c as f64
            }
        })
        .collect()
}

/// Centered running median of odd length `width`, ignoring missing samples.
pub fn median_filter(values: &[f64], width: usize) -> Vec<f64> {
    let half = width.max(1) / 2;
    let n = values.len();
    let mut buf = Vec::with_capacity(2 * half + 1);
    (0..n)
        .map(|i| {
            buf.clear();
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(n);
            buf.extend(values[lo..hi].iter().copied().filter(|v| v.is_finite()));
            median_in_place(&mut buf).unwrap_or(f64::NAN)
        })
        .collect()
}

/// Median of the slice; reorders it.
pub fn median_in_place(values: &mut [f64]) -> Option<f64> {
    let n = values.len();
    if n == 0 {
        return None;
    }
    let mid = n / 2;
    let (_, upper, _) = values.select_nth_unstable_by(mid, f64::total_cmp);
    let upper = *upper;
    if n % 2 == 1 {
        Some(upper)
    } else {
        let lower = values[..mid]
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        Some(0.5 * (lower + upper))
    }
}

pub fn median(values: &[f64]) -> Option<f64> {
    let mut v: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    median_in_place(&mut v)
}

/// Odd sample count closest to `seconds * rate`, at least 1.
pub fn odd_width(seconds: f64, rate: f64) -> usize {
    let w = (seconds * rate).round().max(1.0) as usize;
    if w % 2 == 0 {
        w + 1
    } else {
        w
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_and_index_round_trip() {
        let s = TimeSeries::new(1.0, 10.0, vec![0.0; 21]);
        assert_eq!(s.index_at(1.5), 5);
        assert_eq!(s.window(1.25, 1.55), Some(3..6));
        assert_eq!(s.window(5.0, 6.0), None);
        assert_eq!(s.end_time(), 3.0);
    }

    #[test]
    fn interpolation_skips_gaps() {
        let s = TimeSeries::new(0.0, 1.0, vec![0.0, 2.0, f64::NAN]);
        assert_eq!(s.sample(0.5), Some(1.0));
        assert_eq!(s.sample(1.5), None);
        assert_eq!(s.sample(3.5), None);
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 3.0, 2.0]), Some(2.5));
        assert_eq!(median(&[]), None);
    }

    #[test]
    fn moving_average_handles_nan() {
        let out = moving_average(&[1.0, f64::NAN, 3.0], 3);
        assert_eq!(out, vec![1.0, 2.0, 3.0]);
        let med = median_filter(&[1.0, 100.0, 2.0, 3.0], 3);
        assert_eq!(med, vec![50.5, 2.0, 3.0, 2.5]);
    }
}
