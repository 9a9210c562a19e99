//! Walking-bout segmentation, heel-strike / toe-off detection from Doppler
//! spectrograms, foot labelling and matching against reference events.
//!
//! All Doppler matrices handed to the detectors use the node-1 sign
//! convention: positive Doppler means motion towards node 1.

use std::f64::consts::{PI, SQRT_2};

use serde::{Deserialize, Serialize};

use crate::dsp::{doppler_to_velocity, DopplerTimeMatrix};
use crate::series::{median, moving_average, odd_width, TimeSeries};

/// Smoothing applied to the torso speed before segmentation, seconds.
pub const SEGMENT_SMOOTHING: f64 = 0.25;
/// Speed above which the subject counts as walking, m/s.
pub const WALKING_SPEED: f64 = 0.3;
/// Shortest walking bout kept, seconds.
pub const MIN_SEGMENT: f64 = 1.0;
/// Feet envelope threshold over the per-frame median power, dB.
pub const FEET_THRESHOLD_DB: f64 = 10.0;
/// Feet envelope ignores bins this far below the frame peak, so the Doppler
/// window's first sidelobe (about 31.5 dB down) never reads as a faster foot.
pub const FEET_DYNAMIC_RANGE_DB: f64 = 30.0;
/// Torso spectrum threshold over the per-frame median power, dB.
pub const TORSO_THRESHOLD_DB: f64 = 10.0;
/// Low-pass cutoff applied to the torso speed, Hz.
pub const TORSO_LOWPASS_HZ: f64 = 5.0;
/// Fraction of undefined frames above which a segment is flagged low-SNR.
pub const MAX_UNDEFINED_FRACTION: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EventKind {
    #[serde(rename = "HS")]
    HeelStrike,
    #[serde(rename = "TO")]
    ToeOff,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Foot {
    #[serde(rename = "L")]
    Left,
    #[serde(rename = "R")]
    Right,
    #[serde(rename = "unknown")]
    Unknown,
}

impl Foot {
    pub fn opposite(self) -> Foot {
        match self {
            Foot::Left => Foot::Right,
            Foot::Right => Foot::Left,
            Foot::Unknown => Foot::Unknown,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventSource {
    FeetAlg,
    TorsoAlg,
    Truth,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaitEvent {
    pub kind: EventKind,
    pub foot: Foot,
    /// Seconds from the start of the trial.
    pub time: f64,
    pub source: EventSource,
}

impl GaitEvent {
    pub fn new(kind: EventKind, foot: Foot, time: f64, source: EventSource) -> Self {
        Self {
            kind,
            foot,
            time,
            source,
        }
    }

    pub fn truth(kind: EventKind, foot: Foot, time: f64) -> Self {
        Self::new(kind, foot, time, EventSource::Truth)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    TowardNode1,
    TowardNode2,
}

impl Direction {
    /// Sign of the node-1 radial velocity while walking this way.
    pub fn sign(self) -> f64 {
        match self {
            Direction::TowardNode1 => 1.0,
            Direction::TowardNode2 => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaitSegment {
    pub start: f64,
    pub end: f64,
    pub direction: Direction,
}

impl GaitSegment {
    pub fn contains(&self, t: f64) -> bool {
        t >= self.start && t <= self.end
    }

    pub fn duration(&self) -> f64 {
        self.end - self.start
    }
}

// ---------------------------------------------------------------------------
// Segmentation
// ---------------------------------------------------------------------------

/// Splits a radial torso velocity trace (positive towards node 1) into
/// straight walking bouts: stretches where the smoothed speed stays above
/// [`WALKING_SPEED`] for at least [`MIN_SEGMENT`] seconds with one sign.
pub fn segment_gait(velocity: &TimeSeries) -> Vec<GaitSegment> {
    if velocity.is_empty() {
        return Vec::new();
    }
    let smooth = moving_average(&velocity.values, odd_width(SEGMENT_SMOOTHING, velocity.rate));
    let state = |v: f64| {
        if v > WALKING_SPEED {
            1
        } else if v < -WALKING_SPEED {
            -1
        } else {
            0
        }
    };
    let mut segments = Vec::new();
    let mut run: Option<(usize, i32)> = None;
    for i in 0..=smooth.len() {
        let s = if i < smooth.len() { state(smooth[i]) } else { 0 };
        match run {
            Some((start, sign)) if s != sign => {
                let (t0, t1) = (velocity.time_at(start), velocity.time_at(i - 1));
                if t1 - t0 >= MIN_SEGMENT {
                    segments.push(GaitSegment {
                        start: t0,
                        end: t1,
                        direction: if sign > 0 {
                            Direction::TowardNode1
                        } else {
                            Direction::TowardNode2
                        },
                    });
                }
                run = (s != 0).then_some((i, s));
            }
            None if s != 0 => run = Some((i, s)),
            _ => {}
        }
    }
    segments
}

// ---------------------------------------------------------------------------
// Shared helpers
// ---------------------------------------------------------------------------

/// `q`-quantile of the finite values (linear interpolation).
fn quantile(values: &[f64], q: f64) -> Option<f64> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Some(v[lo] + (v[hi] - v[lo]) * (pos - lo as f64))
}

fn undefined_fraction(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 1.0;
    }
    values.iter().filter(|v| !v.is_finite()).count() as f64 / values.len() as f64
}

/// Signed radial velocity (node-1 convention) of every Doppler bin.
fn velocity_axis(dtm: &DopplerTimeMatrix, f0: f64) -> Vec<f64> {
    dtm.doppler_axis
        .iter()
        .map(|&fd| doppler_to_velocity(fd, f0))
        .collect()
}

fn frame_median(frame: &[f32], scratch: &mut Vec<f64>) -> f64 {
    scratch.clear();
    scratch.extend(frame.iter().map(|&p| p as f64));
    crate::series::median_in_place(scratch).unwrap_or(0.0)
}

/// Indices of local maxima with at least `min_prominence` and no taller
/// peak closer than `min_distance` samples. Plateaus report their centre.
pub fn find_peaks(values: &[f64], min_distance: usize, min_prominence: f64) -> Vec<usize> {
    let n = values.len();
    let mut candidates = Vec::new();
    let mut i = 1;
    while i + 1 < n {
        if values[i] > values[i - 1] {
            let mut j = i;
            while j + 1 < n && values[j + 1] == values[i] {
                j += 1;
            }
            if j + 1 < n && values[j + 1] < values[i] {
                candidates.push((i + j) / 2);
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    let prominence = |p: usize| {
        let h = values[p];
        let mut left_min = h;
        for k in (0..p).rev() {
            if values[k] > h {
                break;
            }
            left_min = left_min.min(values[k]);
        }
        let mut right_min = h;
        for &v in &values[p + 1..] {
            if v > h {
                break;
            }
            right_min = right_min.min(v);
        }
        h - left_min.max(right_min)
    };
    let mut peaks: Vec<usize> = candidates
        .into_iter()
        .filter(|&p| values[p].is_finite() && prominence(p) >= min_prominence)
        .collect();
    if min_distance > 1 && peaks.len() > 1 {
        let mut order = peaks.clone();
        order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
        let mut kept: Vec<usize> = Vec::new();
        for p in order {
            if kept.iter().all(|&k| k.abs_diff(p) >= min_distance) {
                kept.push(p);
            }
        }
        kept.sort_unstable();
        peaks = kept;
    }
    peaks
}

/// Zero-phase second-order Butterworth low-pass (forward-backward), with
/// NaN gaps bridged by linear interpolation beforehand.
pub fn lowpass_zero_phase(values: &[f64], rate: f64, cutoff: f64) -> Vec<f64> {
    let filled = fill_gaps(values);
    if filled.len() < 3 {
        return filled;
    }
    let k = (PI * cutoff / rate).tan();
    let norm = 1.0 / (1.0 + SQRT_2 * k + k * k);
    let b0 = k * k * norm;
    let b = [b0, 2.0 * b0, b0];
    let a1 = 2.0 * (k * k - 1.0) * norm;
    let a2 = (1.0 - SQRT_2 * k + k * k) * norm;
    let run = |x: &[f64]| {
        let mut y = Vec::with_capacity(x.len());
        // Start in the steady state of the first sample.
        let (mut x1, mut x2, mut y1, mut y2) = (x[0], x[0], x[0], x[0]);
        for &xi in x {
            let yi = b[0] * xi + b[1] * x1 + b[2] * x2 - a1 * y1 - a2 * y2;
            x2 = x1;
            x1 = xi;
            y2 = y1;
            y1 = yi;
            y.push(yi);
        }
        y
    };
    let mut y = run(&filled);
    y.reverse();
    let mut y = run(&y);
    y.reverse();
    y
}

/// Linear interpolation across NaN runs; leading/trailing NaNs take the
/// nearest finite value. All-NaN input is returned unchanged.
fn fill_gaps(values: &[f64]) -> Vec<f64> {
    let finite: Vec<usize> = (0..values.len()).filter(|&i| values[i].is_finite()).collect();
    let (Some(&first), Some(&last)) = (finite.first(), finite.last()) else {
        return values.to_vec();
    };
    let mut out = values.to_vec();
    out[..first].fill(values[first]);
    out[last + 1..].fill(values[last]);
    for w in finite.windows(2) {
        let (a, b) = (w[0], w[1]);
        for i in a + 1..b {
            let f = (i - a) as f64 / (b - a) as f64;
            out[i] = values[a] + f * (values[b] - values[a]);
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Feet detector
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct FeetDetection {
    pub events: Vec<GaitEvent>,
    /// Segments skipped because the envelope was mostly undefined.
    pub low_snr: Vec<GaitSegment>,
    /// Highest walking-direction speed with power above threshold, m/s.
    /// NaN outside segments and where nothing exceeds the threshold.
    pub envelope: TimeSeries,
    /// Speed of the strongest bin in the outermost above-threshold run.
    pub ridge: TimeSeries,
}

/// Feet envelope and ridge speed of one frame. `order` lists the bins
/// moving in the walking direction, fastest first.
fn feet_frame(frame: &[f32], order: &[usize], speed: &[f64], level: f64) -> Option<(f64, f64)> {
    let start = order.iter().position(|&b| frame[b] as f64 > level)?;
    let outer = order[start];
    let mut best = outer;
    for &b in &order[start..] {
        if (frame[b] as f64) <= level {
            break;
        }
        if frame[b] > frame[best] {
            best = b;
        }
    }
    Some((speed[outer], speed[best]))
}

/// Heel strikes and toe offs from the feet spectrogram.
///
/// For each frame the envelope is the fastest bin moving in the walking
/// direction whose power exceeds the frame median by [`FEET_THRESHOLD_DB`]
/// and lies within [`FEET_DYNAMIC_RANGE_DB`] of the frame peak. While both
/// feet are planted the envelope rests on the torso; every swing
/// lifts it into a hump. Toe-off is the rising flank of a hump extrapolated
/// back to zero speed and heel strike the falling flank extrapolated forward,
/// because the torso keeps the envelope itself from ever reaching zero.
pub fn detect_events_feet(dtm: &DopplerTimeMatrix, f0: f64, segments: &[GaitSegment]) -> FeetDetection {
    let velocity = velocity_axis(dtm, f0);
    let gain = 10f64.powf(FEET_THRESHOLD_DB / 10.0);
    let range = 10f64.powf(-FEET_DYNAMIC_RANGE_DB / 10.0);
    let mut envelope = vec![f64::NAN; dtm.frames];
    let mut ridge = vec![f64::NAN; dtm.frames];
    let mut events = Vec::new();
    let mut low_snr = Vec::new();
    let mut scratch = Vec::new();
    let smooth_width = odd_width(0.015, dtm.frame_rate);

    for seg in segments {
        let frames = dtm.frame_range(seg.start, seg.end);
        if frames.is_empty() {
            continue;
        }
        let sign = seg.direction.sign();
        let speed: Vec<f64> = velocity.iter().map(|v| sign * v).collect();
        let mut order: Vec<usize> = (0..speed.len()).filter(|&b| speed[b] > 0.0).collect();
        order.sort_by(|&a, &b| speed[b].total_cmp(&speed[a]));
        let mut env = Vec::with_capacity(frames.len());
        for f in frames.clone() {
            let frame = dtm.frame(f);
            let peak = frame.iter().fold(0f32, |m, &v| m.max(v)) as f64;
            let level = (frame_median(frame, &mut scratch) * gain).max(peak * range);
            match feet_frame(frame, &order, &speed, level) {
                Some((e, r)) => {
                    env.push(e);
                    ridge[f] = r;
                }
                None => env.push(f64::NAN),
            }
        }
        if undefined_fraction(&env) > MAX_UNDEFINED_FRACTION {
            low_snr.push(*seg);
            continue;
        }
        let env = moving_average(&env, smooth_width);
        envelope[frames.clone()].copy_from_slice(&env);
        let t0 = dtm.time_at(frames.start);
        for (to, hs) in swing_humps(&env, dtm.frame_rate) {
            events.push(GaitEvent::new(EventKind::ToeOff, Foot::Unknown, t0 + to, EventSource::FeetAlg));
            events.push(GaitEvent::new(EventKind::HeelStrike, Foot::Unknown, t0 + hs, EventSource::FeetAlg));
        }
    }
    events.sort_by(|a, b| a.time.total_cmp(&b.time));
    FeetDetection {
        events,
        low_snr,
        envelope: TimeSeries::new(dtm.start_time, dtm.frame_rate, envelope),
        ridge: TimeSeries::new(dtm.start_time, dtm.frame_rate, ridge),
    }
}

/// Time (s, relative to the first sample) where `values` crosses `level`,
/// searching from `from` in steps of `dir` (+1 or -1).
fn crossing(values: &[f64], from: usize, dir: isize, level: f64) -> Option<f64> {
    let mut i = from as isize;
    loop {
        let j = i + dir;
        if j < 0 || j as usize >= values.len() {
            return None;
        }
        let (a, b) = (values[i as usize], values[j as usize]);
        if !b.is_finite() {
            return None;
        }
        if b <= level {
            let frac = if a == b { 0.0 } else { (a - level) / (a - b) };
            return Some(i as f64 + dir as f64 * frac);
        }
        i = j;
    }
}

/// Swing humps of a feet envelope, as (toe-off, heel-strike) times in
/// seconds from the first sample.
fn swing_humps(env: &[f64], rate: f64) -> Vec<(f64, f64)> {
    const MIN_CONTRAST: f64 = 0.5;
    let (Some(base), Some(top)) = (quantile(env, 0.1), quantile(env, 0.9)) else {
        return Vec::new();
    };
    if top - base < MIN_CONTRAST {
        return Vec::new();
    }
    let mid = base + 0.5 * (top - base);
    let merge_gap = (0.04 * rate) as usize;
    let min_len = (0.06 * rate) as usize;

    let mut runs: Vec<(usize, usize)> = Vec::new();
    let mut start = None;
    for i in 0..=env.len() {
        let above = i < env.len() && env[i] > mid;
        match (above, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                match runs.last_mut() {
                    Some(last) if s - last.1 <= merge_gap => last.1 = i,
                    _ => runs.push((s, i)),
                }
                start = None;
            }
            _ => {}
        }
    }
    runs.retain(|(a, b)| b - a >= min_len);

    let mut humps = Vec::new();
    for (a, b) in runs {
        // Plateau level rather than the maximum, so short spectral splatter
        // does not move the flank levels.
        let Some(peak) = median(&env[a..b]) else {
            continue;
        };
        let lo = base + 0.25 * (peak - base);
        let hi = base + 0.75 * (peak - base);
        let (Some(first), Some(last)) = (
            (a..b).find(|&i| env[i] >= hi),
            (a..b).rev().find(|&i| env[i] >= hi),
        ) else {
            continue;
        };
        let flank = |dir: isize| -> Option<f64> {
            let start = if dir < 0 { first } else { last };
            let t_hi = crossing(env, start, dir, hi)?;
            let t_lo = crossing(env, t_hi.round() as usize, dir, lo)?;
            if (t_lo - t_hi).abs() < 1e-9 {
                return None;
            }
            // Straight line through both crossings, continued to zero speed.
            Some(t_lo - lo * (t_hi - t_lo) / (hi - lo))
        };
        if let (Some(to), Some(hs)) = (flank(-1), flank(1)) {
            humps.push((to / rate, hs / rate, peak));
        }
    }
    enforce_spacing(humps)
}

/// Drops the weaker of two swings whose heel strikes are closer than
/// 0.4 median strides.
fn enforce_spacing(mut humps: Vec<(f64, f64, f64)>) -> Vec<(f64, f64)> {
    if humps.len() > 2 {
        let gaps: Vec<f64> = humps.windows(2).map(|w| w[1].1 - w[0].1).collect();
        let min_gap = 0.4 * 2.0 * median(&gaps).unwrap_or(0.0);
        let mut i = 1;
        while i < humps.len() {
            if humps[i].1 - humps[i - 1].1 < min_gap {
                let drop = if humps[i].2 > humps[i - 1].2 { i - 1 } else { i };
                humps.remove(drop);
            } else {
                i += 1;
            }
        }
    }
    humps.into_iter().map(|(to, hs, _)| (to, hs)).collect()
}

// ---------------------------------------------------------------------------
// Torso detector
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct TorsoDetection {
    pub events: Vec<GaitEvent>,
    pub low_snr: Vec<GaitSegment>,
    /// Low-passed torso speed in the walking direction, m/s; NaN outside
    /// segments.
    pub velocity: TimeSeries,
}

/// Interpolated velocity and power of the strongest bin in the slow-moving
/// torso band.
fn torso_frame(frame: &[f32], speed: &[f64], level: f64) -> Option<(f64, f64)> {
    const BAND: (f64, f64) = (-0.3, 2.5);
    let in_band = |b: usize| speed[b] >= BAND.0 && speed[b] <= BAND.1;
    let peak = (0..frame.len())
        .filter(|&b| in_band(b))
        .max_by(|&a, &b| frame[a].total_cmp(&frame[b]))?;
    let p = frame[peak] as f64;
    if !(p > level) {
        return None;
    }
    // Log-parabolic interpolation of the peak, exact for a Gaussian lobe.
    let (Some(&a), Some(&c)) = (frame.get(peak.wrapping_sub(1)), frame.get(peak + 1)) else {
        return Some((speed[peak], p));
    };
    let (la, lb, lc) = ((a as f64).max(1e-30).ln(), p.ln(), (c as f64).max(1e-30).ln());
    let curvature = la - 2.0 * lb + lc;
    let offset = if curvature < 0.0 {
        (0.5 * (la - lc) / curvature).clamp(-0.5, 0.5)
    } else {
        0.0
    };
    let step = speed[peak + 1] - speed[peak];
    Some((speed[peak] + offset * step, p))
}

/// Torso speed trace restricted to `segments` (walking-direction speed).
pub fn torso_velocity(dtm: &DopplerTimeMatrix, f0: f64, segments: &[GaitSegment]) -> (TimeSeries, Vec<GaitSegment>) {
    let velocity = velocity_axis(dtm, f0);
    let gain = 10f64.powf(TORSO_THRESHOLD_DB / 10.0);
    let mut out = vec![f64::NAN; dtm.frames];
    let mut low_snr = Vec::new();
    let mut scratch = Vec::new();
    for seg in segments {
        let frames = dtm.frame_range(seg.start, seg.end);
        if frames.is_empty() {
            continue;
        }
        let sign = seg.direction.sign();
        let speed: Vec<f64> = velocity.iter().map(|v| sign * v).collect();
        let raw: Vec<f64> = frames
            .clone()
            .map(|f| {
                let frame = dtm.frame(f);
                let level = frame_median(frame, &mut scratch) * gain;
                torso_frame(frame, &speed, level).map_or(f64::NAN, |(v, _)| v)
            })
            .collect();
        if undefined_fraction(&raw) > MAX_UNDEFINED_FRACTION {
            low_snr.push(*seg);
            continue;
        }
        let smooth = lowpass_zero_phase(&raw, dtm.frame_rate, TORSO_LOWPASS_HZ);
        out[frames].copy_from_slice(&smooth);
    }
    (TimeSeries::new(dtm.start_time, dtm.frame_rate, out), low_snr)
}

/// Signed torso radial velocity over the whole record (positive towards
/// node 1), low-passed; used to find walking bouts from the radar alone.
pub fn radial_torso_velocity(dtm: &DopplerTimeMatrix, f0: f64) -> TimeSeries {
    let velocity = velocity_axis(dtm, f0);
    let receding: Vec<f64> = velocity.iter().map(|v| -v).collect();
    let gain = 10f64.powf(TORSO_THRESHOLD_DB / 10.0);
    let mut scratch = Vec::new();
    let raw: Vec<f64> = (0..dtm.frames)
        .map(|f| {
            let frame = dtm.frame(f);
            let level = frame_median(frame, &mut scratch) * gain;
            let toward = torso_frame(frame, &velocity, level);
            let away = torso_frame(frame, &receding, level);
            // The two bands overlap near zero; the stronger peak wins.
            match (toward, away) {
                (Some((a, pa)), Some((b, pb))) => {
                    if pa >= pb {
                        a
                    } else {
                        -b
                    }
                }
                (Some((a, _)), None) => a,
                (None, Some((b, _))) => -b,
                (None, None) => 0.0,
            }
        })
        .collect();
    TimeSeries::new(
        dtm.start_time,
        dtm.frame_rate,
        lowpass_zero_phase(&raw, dtm.frame_rate, TORSO_LOWPASS_HZ),
    )
}

/// Heel strikes at the torso speed maxima and toe offs at the strongest
/// deceleration that follows each of them.
pub fn detect_events_torso(dtm: &DopplerTimeMatrix, f0: f64, segments: &[GaitSegment]) -> TorsoDetection {
    let (velocity, low_snr) = torso_velocity(dtm, f0, segments);
    let rate = velocity.rate;
    let mut events = Vec::new();
    for seg in segments {
        if low_snr.contains(seg) {
            continue;
        }
        let frames = dtm.frame_range(seg.start, seg.end);
        let v = &velocity.values[frames.clone()];
        if v.len() < 3 {
            continue;
        }
        let t0 = velocity.time_at(frames.start);
        let spread = quantile(v, 0.95).unwrap_or(0.0) - quantile(v, 0.05).unwrap_or(0.0);
        let prominence = (0.25 * spread).max(0.03);
        // A first pass with a loose spacing estimates the step period.
        let rough = find_peaks(v, (0.2 * rate) as usize, prominence);
        let gaps: Vec<usize> = rough.windows(2).map(|w| w[1] - w[0]).collect();
        let step = gaps_median(&gaps).unwrap_or(0.5 * rate);
        let peaks = find_peaks(v, (0.4 * 2.0 * step) as usize, prominence);
        for (k, &p) in peaks.iter().enumerate() {
            events.push(GaitEvent::new(
                EventKind::HeelStrike,
                Foot::Unknown,
                t0 + p as f64 / rate,
                EventSource::TorsoAlg,
            ));
            let limit = peaks
                .get(k + 1)
                .copied()
                .unwrap_or(v.len() - 1)
                .min(p + (0.6 * step) as usize);
            if let Some(d) = steepest_descent(v, p, limit) {
                events.push(GaitEvent::new(
                    EventKind::ToeOff,
                    Foot::Unknown,
                    t0 + d / rate,
                    EventSource::TorsoAlg,
                ));
            }
        }
    }
    events.sort_by(|a, b| a.time.total_cmp(&b.time));
    TorsoDetection {
        events,
        low_snr,
        velocity,
    }
}

fn gaps_median(gaps: &[usize]) -> Option<f64> {
    let g: Vec<f64> = gaps.iter().map(|&x| x as f64).collect();
    median(&g)
}

/// Sub-sample position of the most negative slope strictly inside
/// `(from, to)`, refined by a parabola through the neighbouring slopes.
fn steepest_descent(v: &[f64], from: usize, to: usize) -> Option<f64> {
    if to <= from + 2 {
        return None;
    }
    let slope = |i: usize| 0.5 * (v[i + 1] - v[i - 1]);
    let best = (from + 1..to).min_by(|&a, &b| slope(a).total_cmp(&slope(b)))?;
    if best == from + 1 || best + 1 >= to || !(slope(best) < 0.0) {
        return Some(best as f64);
    }
    let (a, b, c) = (slope(best - 1), slope(best), slope(best + 1));
    let denom = a - 2.0 * b + c;
    let offset = if denom.abs() > 1e-15 {
        (0.5 * (a - c) / denom).clamp(-0.5, 0.5)
    } else {
        0.0
    };
    Some(best as f64 + offset)
}

// ---------------------------------------------------------------------------
// Foot labelling
// ---------------------------------------------------------------------------

/// Labels heel strikes alternately left/right within each segment and gives
/// each toe-off the foot of the next heel strike. Heel strikes closer than a
/// quarter of the median step to their predecessor are dropped, and a gap of
/// about `n` steps advances the alternation `n` times so that one missed
/// detection does not swap every later label. Events outside all segments
/// are kept unlabelled; segments with a single event label it unknown.
pub fn assign_feet(events: &[GaitEvent], segments: &[GaitSegment]) -> Vec<GaitEvent> {
    let mut out: Vec<GaitEvent> = Vec::with_capacity(events.len());
    let mut used = vec![false; events.len()];
    for seg in segments {
        let idx: Vec<usize> = (0..events.len())
            .filter(|&i| seg.contains(events[i].time))
            .collect();
        idx.iter().for_each(|&i| used[i] = true);
        let mut mine: Vec<GaitEvent> = idx.iter().map(|&i| events[i]).collect();
        if mine.len() == 1 {
            mine[0].foot = Foot::Unknown;
            out.extend(mine);
            continue;
        }
        let hs_times: Vec<f64> = mine
            .iter()
            .filter(|e| e.kind == EventKind::HeelStrike)
            .map(|e| e.time)
            .collect();
        let steps: Vec<f64> = hs_times.windows(2).map(|w| w[1] - w[0]).collect();
        let step = median(&steps);
        let mut foot = Foot::Left;
        let mut last_hs: Option<f64> = None;
        let mut labelled = Vec::with_capacity(mine.len());
        for e in mine.iter().filter(|e| e.kind == EventKind::HeelStrike) {
            if let (Some(prev), Some(step)) = (last_hs, step) {
                let dt = e.time - prev;
                if dt < 0.25 * step {
                    continue;
                }
                let skipped = ((dt / step).round() as i64 - 1).max(0);
                for _ in 0..=skipped {
                    foot = foot.opposite();
                }
            }
            last_hs = Some(e.time);
            labelled.push(GaitEvent { foot, ..*e });
        }
        for e in mine.iter().filter(|e| e.kind == EventKind::ToeOff) {
            let next = labelled.iter().find(|h| h.time > e.time);
            let foot = match next {
                Some(h) => h.foot,
                None => labelled.last().map_or(Foot::Unknown, |h| h.foot.opposite()),
            };
            labelled.push(GaitEvent { foot, ..*e });
        }
        out.extend(labelled);
    }
    out.extend(
        events
            .iter()
            .zip(&used)
            .filter(|(_, &u)| !u)
            .map(|(e, _)| GaitEvent {
                foot: Foot::Unknown,
                ..*e
            }),
    );
    out.sort_by(|a, b| a.time.total_cmp(&b.time));
    out
}

// ---------------------------------------------------------------------------
// Matching
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchedPair {
    pub truth: GaitEvent,
    pub detected: GaitEvent,
    /// detected - truth, seconds.
    pub dt: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchReport {
    pub pairs: Vec<MatchedPair>,
    /// Eligible reference events without a detection.
    pub misses: Vec<GaitEvent>,
    /// Detections matching no reference event.
    pub false_detections: Vec<GaitEvent>,
    pub truth_hs: usize,
    pub matched_hs: usize,
    pub hs_detection_ratio: f64,
    /// Matching window, seconds.
    pub tolerance: f64,
}

impl MatchReport {
    pub fn mean_dt(&self, kind: EventKind) -> Option<f64> {
        let dts: Vec<f64> = self
            .pairs
            .iter()
            .filter(|p| p.truth.kind == kind)
            .map(|p| p.dt)
            .collect();
        (!dts.is_empty()).then(|| dts.iter().sum::<f64>() / dts.len() as f64)
    }
}

/// Heel strikes of `truth` grouped by segment.
fn truth_heel_strikes<'a>(truth: &'a [GaitEvent], seg: &GaitSegment) -> Vec<&'a GaitEvent> {
    truth
        .iter()
        .filter(|e| e.kind == EventKind::HeelStrike && seg.contains(e.time))
        .collect()
}

/// Greedy nearest-in-time matching of same-kind events within half the
/// median reference step. Reference events before the second and after the
/// second-to-last heel strike of each segment are not scored, and detections
/// that fall on them are neither matches nor false detections.
pub fn match_events(detected: &[GaitEvent], truth: &[GaitEvent], segments: &[GaitSegment]) -> MatchReport {
    let mut steps = Vec::new();
    let mut windows = Vec::new();
    for seg in segments {
        let hs = truth_heel_strikes(truth, seg);
        steps.extend(hs.windows(2).map(|w| w[1].time - w[0].time));
        if hs.len() >= 3 {
            windows.push((hs[1].time, hs[hs.len() - 2].time));
        }
    }
    let tolerance = 0.5 * median(&steps).unwrap_or(0.0);
    let eligible = |e: &GaitEvent| windows.iter().any(|&(a, b)| e.time >= a - 1e-12 && e.time <= b + 1e-12);
    let scored: Vec<&GaitEvent> = truth.iter().filter(|e| eligible(e)).collect();

    let mut candidates = Vec::new();
    for (ti, t) in scored.iter().enumerate() {
        for (di, d) in detected.iter().enumerate() {
            let dt = d.time - t.time;
            if d.kind == t.kind && dt.abs() < tolerance {
                candidates.push((dt.abs(), ti, di));
            }
        }
    }
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut truth_used = vec![false; scored.len()];
    let mut det_used = vec![false; detected.len()];
    let mut pairs = Vec::new();
    for (_, ti, di) in candidates {
        if truth_used[ti] || det_used[di] {
            continue;
        }
        truth_used[ti] = true;
        det_used[di] = true;
        pairs.push(MatchedPair {
            truth: *scored[ti],
            detected: detected[di],
            dt: detected[di].time - scored[ti].time,
        });
    }
    pairs.sort_by(|a, b| a.truth.time.total_cmp(&b.truth.time));
    let misses = scored
        .iter()
        .zip(&truth_used)
        .filter(|(_, &u)| !u)
        .map(|(e, _)| **e)
        .collect();
    let near_unscored = |d: &GaitEvent| {
        truth
            .iter()
            .any(|t| t.kind == d.kind && !eligible(t) && (d.time - t.time).abs() < tolerance)
    };
    let false_detections = detected
        .iter()
        .zip(&det_used)
        .filter(|(d, &u)| !u && !near_unscored(d))
        .map(|(d, _)| *d)
        .collect();
    let truth_hs = scored.iter().filter(|e| e.kind == EventKind::HeelStrike).count();
    let matched_hs = pairs
        .iter()
        .filter(|p| p.truth.kind == EventKind::HeelStrike)
        .count();
    MatchReport {
        pairs,
        misses,
        false_detections,
        truth_hs,
        matched_hs,
        hs_detection_ratio: if truth_hs == 0 {
            0.0
        } else {
            matched_hs as f64 / truth_hs as f64
        },
        tolerance,
    }
}
