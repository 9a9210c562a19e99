//! Range-time and Doppler-time processing of one node's chirps.

use std::f64::consts::{LN_2, PI};

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::series::{moving_average, odd_width, TimeSeries};
use crate::sim::{IqCube, RadarWaveform};
use crate::{Error, Result, SPEED_OF_LIGHT};

/// High-pass cutoff of the clutter filter, Hz.
pub const CLUTTER_CUTOFF_HZ: f64 = 10.0;
/// Target detection threshold over the per-frame noise floor, dB.
pub const TARGET_THRESHOLD_DB: f64 = 12.0;
/// Longest below-threshold stretch bridged inside a target run, metres. A
/// walker's feet sit up to about half a step from the torso in range, which
/// leaves a dip between their range responses.
pub const TARGET_GAP_BRIDGE: f64 = 0.45;
/// Level over the noise floor a bin needs to join an existing target run, dB.
pub const TARGET_EXTENSION_DB: f64 = 3.0;
/// Slow-time span over which bin power is averaged before detection, seconds.
pub const TARGET_AVERAGING: f64 = 0.025;
/// Doppler analysis window, seconds.
pub const DOPPLER_WINDOW: f64 = 0.05;
/// Minimum Doppler FFT length.
pub const DOPPLER_BINS: usize = 256;
/// Number of strongest Doppler bins averaged by the SNR estimator.
pub const SNR_TOP_BINS: usize = 3;
/// Moving-average length applied to the per-frame SNR, seconds.
pub const SNR_SMOOTHING: f64 = 0.25;

/// Periodic Hann window.
pub fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 * (1.0 - (2.0 * PI * i as f64 / n as f64).cos()))
        .collect()
}

/// Radial velocity (positive = approaching) of a Doppler shift.
pub fn doppler_to_velocity(doppler: f64, f0: f64) -> f64 {
    doppler * SPEED_OF_LIGHT / (2.0 * f0)
}

/// Range profiles over slow time. Frame-major: `values[frame * bins + bin]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeTimeMatrix {
    pub frames: usize,
    pub bins: usize,
    pub values: Vec<Complex64>,
    /// Metres per range bin.
    pub range_resolution: f64,
    /// Frames per second.
    pub frame_rate: f64,
    /// Time of frame 0, seconds.
    pub start_time: f64,
    pub clutter_filtered: bool,
}

impl RangeTimeMatrix {
    pub fn frame(&self, index: usize) -> &[Complex64] {
        &self.values[index * self.bins..(index + 1) * self.bins]
    }

    pub fn frame_time(&self, index: usize) -> f64 {
        self.start_time + index as f64 / self.frame_rate
    }

    pub fn range_axis(&self) -> Vec<f64> {
        (0..self.bins)
            .map(|b| b as f64 * self.range_resolution)
            .collect()
    }

    /// Slow-time series of one range bin.
    pub fn bin_series(&self, bin: usize) -> Vec<Complex64> {
        (0..self.frames).map(|f| self.frame(f)[bin]).collect()
    }

    pub fn energy(&self) -> f64 {
        self.values.iter().map(|z| z.norm_sqr()).sum()
    }

    /// Keeps only the bins closer than `max_range`.
    pub fn cropped(&self, max_range: f64) -> RangeTimeMatrix {
        let keep = ((max_range / self.range_resolution).floor() as usize + 1).min(self.bins);
        let mut values = Vec::with_capacity(self.frames * keep);
        for f in 0..self.frames {
            values.extend_from_slice(&self.frame(f)[..keep]);
        }
        RangeTimeMatrix {
            bins: keep,
            values,
            ..*self
        }
    }
}

/// Hann-windowed FFT of every chirp, scaled by `1/sqrt(N)` so that the output
/// energy equals the windowed input energy. Bin phases are referenced to the
/// middle of the chirp (bin `k` multiplied by `(-1)^k`), so the bins of one
/// scatterer add in phase when summed coherently.
pub fn range_transform(iq: &IqCube, wf: &RadarWaveform) -> Result<RangeTimeMatrix> {
    let n = iq.samples_per_chirp;
    if n < 8 {
        return Err(Error::invalid(
            "samples_per_chirp",
            format!("need at least 8 samples per chirp, got {n}"),
        ));
    }
    let window = hann(n);
    let scale = 1.0 / (n as f64).sqrt();
    let fft = FftPlanner::new().plan_fft_forward(n);
    let mut values = Vec::with_capacity(iq.chirps * n);
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    for c in 0..iq.chirps {
        for (s, (dst, z)) in buf.iter_mut().zip(iq.chirp(c)).enumerate() {
            if !(z.re.is_finite() && z.im.is_finite()) {
                return Err(Error::NonFiniteSample {
                    chirp: c,
                    sample: s,
                });
            }
            *dst = Complex64::new(z.re as f64, z.im as f64) * window[s];
        }
        fft.process(&mut buf);
        values.extend(
            buf.iter()
                .enumerate()
                .map(|(k, z)| if k % 2 == 0 { z * scale } else { -z * scale }),
        );
    }
    Ok(RangeTimeMatrix {
        frames: iq.chirps,
        bins: n,
        values,
        range_resolution: wf.range_of_beat(wf.sample_rate / n as f64),
        frame_rate: wf.chirp_rate(),
        start_time: 0.0,
        clutter_filtered: false,
    })
}

/// Length of each boxcar in the clutter filter. Three cascaded boxcars of this
/// length pass one half of a DC-normalised tone at roughly `0.7 * fc`, which
/// puts the -3 dB point of `1 - boxcar^3` at `fc`.
pub fn clutter_box_length(frame_rate: f64, cutoff: f64) -> usize {
    let n = (1.502 * frame_rate / (PI * cutoff)).round() as usize;
    if n % 2 == 0 {
        n + 1
    } else {
        n.max(3)
    }
}

/// Frames removed at each end of the record by the clutter filter.
pub fn clutter_settling_frames(frame_rate: f64) -> usize {
    3 * (clutter_box_length(frame_rate, CLUTTER_CUTOFF_HZ) - 1) / 2
}

/// Linear-phase high-pass along slow time: the input minus its triple
/// centred moving average. The frames where the moving average would reach
/// past the record are dropped at both ends.
pub fn clutter_filter(rtm: &RangeTimeMatrix) -> Result<RangeTimeMatrix> {
    if !(rtm.frame_rate > 2.0 * CLUTTER_CUTOFF_HZ) {
        return Err(Error::invalid(
            "frame_rate",
            format!("{} Hz is too low for a {CLUTTER_CUTOFF_HZ} Hz high-pass", rtm.frame_rate),
        ));
    }
    let len = clutter_box_length(rtm.frame_rate, CLUTTER_CUTOFF_HZ);
    let settle = 3 * (len - 1) / 2;
    if rtm.frames <= 2 * settle {
        return Err(Error::RecordTooShort {
            frames: rtm.frames,
            required: 2 * settle + 1,
        });
    }
    let bins = rtm.bins;
    let mut smooth = rtm.values.clone();
    let mut frames = rtm.frames;
    for _ in 0..3 {
        smooth = centred_box(&smooth, frames, bins, len);
        frames -= len - 1;
    }
    let mut values = Vec::with_capacity(frames * bins);
    for f in 0..frames {
        let orig = rtm.frame(f + settle);
        let avg = &smooth[f * bins..(f + 1) * bins];
        values.extend(orig.iter().zip(avg).map(|(x, m)| x - m));
    }
    Ok(RangeTimeMatrix {
        frames,
        values,
        start_time: rtm.frame_time(settle),
        clutter_filtered: true,
        ..*rtm
    })
}

/// Moving average of `len` frames, keeping only fully covered outputs.
fn centred_box(values: &[Complex64], frames: usize, bins: usize, len: usize) -> Vec<Complex64> {
    let out_frames = frames + 1 - len;
    let mut out = Vec::with_capacity(out_frames * bins);
    let mut sum = vec![Complex64::new(0.0, 0.0); bins];
    for f in 0..len {
        for (s, v) in sum.iter_mut().zip(&values[f * bins..(f + 1) * bins]) {
            *s += v;
        }
    }
    let inv = 1.0 / len as f64;
    for f in 0..out_frames {
        out.extend(sum.iter().map(|s| s * inv));
        if f + 1 < out_frames {
            let old = &values[f * bins..(f + 1) * bins];
            let new = &values[(f + len) * bins..(f + len + 1) * bins];
            for ((s, o), n) in sum.iter_mut().zip(old).zip(new) {
                *s += n - o;
            }
        }
    }
    out
}

/// Per frame, the contiguous range-bin run `[start, end)` flagged as target.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetMask {
    pub runs: Vec<Option<(usize, usize)>>,
}

impl TargetMask {
    pub fn detected_frames(&self) -> usize {
        self.runs.iter().filter(|r| r.is_some()).count()
    }
}

/// Target bins with the default threshold.
pub fn select_target_bins(rtm: &RangeTimeMatrix) -> TargetMask {
    select_target_bins_with(rtm, TARGET_THRESHOLD_DB)
}

/// Flags the run of bins around each frame's strongest bin. Power is first
/// averaged over [`TARGET_AVERAGING`] seconds of frames. A frame has a target
/// when its peak exceeds the median bin power by `threshold_db`; the run then
/// grows through bins that clear [`TARGET_EXTENSION_DB`] and may step over up
/// to [`TARGET_GAP_BRIDGE`] metres of weaker bins, so that one body stays one
/// target.
pub fn select_target_bins_with(rtm: &RangeTimeMatrix, threshold_db: f64) -> TargetMask {
    let gain = 10f64.powf(threshold_db / 10.0);
    let extension = 10f64.powf(TARGET_EXTENSION_DB.min(threshold_db) / 10.0);
    let bridge = (TARGET_GAP_BRIDGE / rtm.range_resolution).floor() as usize;
    let averaged = averaged_power(rtm);
    let mut scratch = vec![0.0; rtm.bins];
    let runs = (0..rtm.frames)
        .map(|f| {
            let power = &averaged[f * rtm.bins..(f + 1) * rtm.bins];
            scratch.copy_from_slice(power);
            let floor = crate::series::median_in_place(&mut scratch).unwrap_or(0.0);
            let (peak, &max) = power
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))?;
            if !(max > floor * gain) {
                return None;
            }
            let level = floor * extension;
            let mut start = peak;
            while let Some(next) = (1..=bridge + 1)
                .take_while(|&k| k <= start)
                .map(|k| start - k)
                .find(|&b| power[b] > level)
            {
                start = next;
            }
            let mut end = peak;
            while let Some(next) = (1..=bridge + 1)
                .map(|k| end + k)
                .take_while(|&b| b < power.len())
                .find(|&b| power[b] > level)
            {
                end = next;
            }
            Some((start, end + 1))
        })
        .collect();
    TargetMask { runs }
}

/// Bin power averaged over a centred window of frames, frame-major.
fn averaged_power(rtm: &RangeTimeMatrix) -> Vec<f64> {
    let half = ((TARGET_AVERAGING * rtm.frame_rate) / 2.0).round() as usize;
    let (frames, bins) = (rtm.frames, rtm.bins);
    let power: Vec<f64> = rtm.values.iter().map(|z| z.norm_sqr()).collect();
    let mut out = vec![0.0; power.len()];
    for b in 0..bins {
        // running sum over frames [lo, hi)
        let mut sum = 0.0;
        let (mut lo, mut hi) = (0, 0);
        for f in 0..frames {
            let want_hi = (f + half + 1).min(frames);
            let want_lo = f.saturating_sub(half);
            while hi < want_hi {
                sum += power[hi * bins + b];
                hi += 1;
            }
            while lo < want_lo {
                sum -= power[lo * bins + b];
                lo += 1;
            }
            out[f * bins + b] = sum.max(0.0) / (hi - lo) as f64;
        }
    }
    out
}

/// Complex slow-time samples at a fixed rate.
#[derive(Debug, Clone, PartialEq)]
pub struct SlowTimeSeries {
    pub start_time: f64,
    pub rate: f64,
    pub values: Vec<Complex64>,
}

/// Coherent sum over the masked bins of every frame; empty masks give zero.
pub fn integrate_bins(rtm: &RangeTimeMatrix, mask: &TargetMask) -> Result<SlowTimeSeries> {
    if mask.runs.len() != rtm.frames {
        return Err(Error::Misaligned(format!(
            "mask has {} frames, matrix has {}",
            mask.runs.len(),
            rtm.frames
        )));
    }
    let values = mask
        .runs
        .iter()
        .enumerate()
        .map(|(f, run)| match run {
            Some((a, b)) => rtm.frame(f)[*a..*b].iter().sum(),
            None => Complex64::new(0.0, 0.0),
        })
        .collect();
    Ok(SlowTimeSeries {
        start_time: rtm.start_time,
        rate: rtm.frame_rate,
        values,
    })
}

/// Short-time power spectra. Frame-major: `power[frame * bins + bin]`, with
/// Doppler bins ordered from most negative to most positive.
#[derive(Debug, Clone, PartialEq)]
pub struct DopplerTimeMatrix {
    pub frames: usize,
    pub bins: usize,
    pub power: Vec<f32>,
    /// Doppler frequency of each bin, Hz, symmetric about zero.
    pub doppler_axis: Vec<f64>,
    /// Centre time of frame 0, seconds.
    pub start_time: f64,
    /// Frames per second.
    pub frame_rate: f64,
    /// Analysis window length, seconds.
    pub window_length: f64,
}

impl DopplerTimeMatrix {
    pub fn frame(&self, index: usize) -> &[f32] {
        &self.power[index * self.bins..(index + 1) * self.bins]
    }

    pub fn time_at(&self, index: usize) -> f64 {
        self.start_time + index as f64 / self.frame_rate
    }

    pub fn time_axis(&self) -> Vec<f64> {
        (0..self.frames).map(|i| self.time_at(i)).collect()
    }

    pub fn bin_width(&self) -> f64 {
        if self.bins > 1 {
            self.doppler_axis[1] - self.doppler_axis[0]
        } else {
            0.0
        }
    }

    /// Same axes with different power values.
    pub fn with_power(&self, power: Vec<f32>) -> DopplerTimeMatrix {
        assert_eq!(power.len(), self.frames * self.bins);
        DopplerTimeMatrix {
            frames: self.frames,
            bins: self.bins,
            power,
            doppler_axis: self.doppler_axis.clone(),
            start_time: self.start_time,
            frame_rate: self.frame_rate,
            window_length: self.window_length,
        }
    }

    /// Whether the Doppler axis is symmetric about 0 Hz.
    pub fn is_symmetric(&self) -> bool {
        let n = self.doppler_axis.len();
        let tol = 1e-9 * self.doppler_axis.iter().fold(1.0, |m: f64, f| m.max(f.abs()));
        n % 2 == 1
            && (0..n).all(|i| (self.doppler_axis[i] + self.doppler_axis[n - 1 - i]).abs() <= tol)
    }

    /// Bin holding the strongest power in a frame.
    pub fn peak_bin(&self, index: usize) -> usize {
        self.frame(index)
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map_or(0, |(i, _)| i)
    }

    /// Frames whose centre time lies in `[t0, t1]`.
    pub fn frame_range(&self, t0: f64, t1: f64) -> std::ops::Range<usize> {
        let first = ((t0 - self.start_time) * self.frame_rate).ceil().max(0.0) as usize;
        let last = ((t1 - self.start_time) * self.frame_rate).floor();
        let end = if last < 0.0 {
            0
        } else {
            (last as usize + 1).min(self.frames)
        };
        first.min(end)..end
    }
}

/// Sliding Hann-window power spectrum with a hop of one sample.
pub fn doppler_transform(series: &SlowTimeSeries) -> Result<DopplerTimeMatrix> {
    doppler_transform_with(series, DOPPLER_WINDOW)
}

pub fn doppler_transform_with(series: &SlowTimeSeries, window_length: f64) -> Result<DopplerTimeMatrix> {
    let w = (window_length * series.rate).round() as usize;
    if w < 2 {
        return Err(Error::invalid("window_length", "shorter than two samples"));
    }
    if series.values.len() < w {
        return Err(Error::RecordTooShort {
            frames: series.values.len(),
            required: w,
        });
    }
    let nfft = DOPPLER_BINS.max(w.next_power_of_two());
    let half = nfft / 2;
    let window = hann(w);
    let norm = 1.0 / window.iter().map(|x| x * x).sum::<f64>();
    let fft = FftPlanner::new().plan_fft_forward(nfft);
    let frames = series.values.len() - w + 1;
    let bins = nfft - 1;
    let mut power = Vec::with_capacity(frames * bins);
    let mut buf = vec![Complex64::new(0.0, 0.0); nfft];
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    for f in 0..frames {
        for (i, slot) in buf.iter_mut().enumerate() {
            *slot = if i < w {
                series.values[f + i] * window[i]
            } else {
                Complex64::new(0.0, 0.0)
            };
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        // Bins half+1..nfft are the negative frequencies; bin `half` (-fs/2)
        // is dropped to keep the axis symmetric.
        power.extend(
            buf[half + 1..]
                .iter()
                .chain(&buf[..half])
                .map(|z| (z.norm_sqr() * norm) as f32),
        );
    }
    let df = series.rate / nfft as f64;
    let doppler_axis = (0..bins).map(|k| (k as f64 - (half - 1) as f64) * df).collect();
    Ok(DopplerTimeMatrix {
        frames,
        bins,
        power,
        doppler_axis,
        start_time: series.start_time + 0.5 * (w - 1) as f64 / series.rate,
        frame_rate: series.rate,
        window_length: w as f64 / series.rate,
    })
}

/// Expected mean of the `k` largest of `n` unit-mean exponential variables,
/// divided by their mean: `(1/k) sum_{i=1..k} (H_n - H_{i-1})`.
pub fn top_k_noise_bias(n: usize, k: usize) -> f64 {
    let harmonic = |m: usize| (1..=m).map(|j| 1.0 / j as f64).sum::<f64>();
    let hn = harmonic(n);
    (1..=k).map(|i| hn - harmonic(i - 1)).sum::<f64>() / k as f64
}

/// SNR of one Doppler spectrum in dB: the excess of the strongest bins over
/// the median-estimated noise floor, corrected for what noise alone yields.
pub fn frame_snr(frame: &[f32]) -> f64 {
    let k = SNR_TOP_BINS.min(frame.len());
    if k == 0 {
        return 0.0;
    }
    snr_of(frame, &mut Vec::new(), top_k_noise_bias(frame.len(), k))
}

fn snr_of(frame: &[f32], buf: &mut Vec<f64>, bias: f64) -> f64 {
    let k = SNR_TOP_BINS.min(frame.len());
    buf.clear();
    buf.extend(frame.iter().map(|&p| p as f64));
    buf.select_nth_unstable_by(k - 1, |a, b| b.total_cmp(a));
    let top = buf[..k].iter().sum::<f64>() / k as f64;
    let floor = crate::series::median_in_place(buf).unwrap_or(0.0) / LN_2;
    if !(floor > 0.0) {
        return if top > 0.0 { f64::INFINITY } else { 0.0 };
    }
    let excess = (top / floor - bias).max(0.0);
    10.0 * (1.0 + excess).log10()
}

/// Per-frame SNR (dB) smoothed over [`SNR_SMOOTHING`] seconds.
pub fn estimate_frame_snr(dtm: &DopplerTimeMatrix) -> TimeSeries {
    let k = SNR_TOP_BINS.min(dtm.bins);
    let bias = if k == 0 { 0.0 } else { top_k_noise_bias(dtm.bins, k) };
    let mut buf = Vec::with_capacity(dtm.bins);
    let raw: Vec<f64> = (0..dtm.frames)
        .map(|f| if k == 0 { 0.0 } else { snr_of(dtm.frame(f), &mut buf, bias) })
        .collect();
    let width = odd_width(SNR_SMOOTHING, dtm.frame_rate);
    TimeSeries::new(dtm.start_time, dtm.frame_rate, moving_average(&raw, width))
}
