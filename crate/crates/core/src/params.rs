//! Per-cycle spatiotemporal gait parameters.

use serde::{Deserialize, Serialize};

use crate::events::{EventKind, EventSource, Foot, GaitEvent, GaitSegment};
use crate::series::{median_filter, odd_width, TimeSeries};
use crate::sim::GroundTruth;

/// The ten parameters compared against the reference system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parameter {
    StrideTime,
    StepTime,
    StanceTime,
    SwingTime,
    DoubleSupportTime,
    StrideVelocity,
    StepVelocity,
    StrideDistance,
    StepDistance,
    FootMaxVelocity,
}

impl Parameter {
    pub const ALL: [Parameter; 10] = [
        Parameter::StrideTime,
        Parameter::StepTime,
        Parameter::StanceTime,
        Parameter::SwingTime,
        Parameter::DoubleSupportTime,
        Parameter::StrideVelocity,
        Parameter::StepVelocity,
        Parameter::StrideDistance,
        Parameter::StepDistance,
        Parameter::FootMaxVelocity,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Parameter::StrideTime => "stride_time",
            Parameter::StepTime => "step_time",
            Parameter::StanceTime => "stance_time",
            Parameter::SwingTime => "swing_time",
            Parameter::DoubleSupportTime => "double_support_time",
            Parameter::StrideVelocity => "stride_velocity",
            Parameter::StepVelocity => "step_velocity",
            Parameter::StrideDistance => "stride_distance",
            Parameter::StepDistance => "step_distance",
            Parameter::FootMaxVelocity => "foot_max_velocity",
        }
    }

    pub fn unit(self) -> &'static str {
        match self {
            Parameter::StrideVelocity | Parameter::StepVelocity | Parameter::FootMaxVelocity => "m/s",
            Parameter::StrideDistance | Parameter::StepDistance => "m",
            _ => "s",
        }
    }

    pub fn is_temporal(self) -> bool {
        matches!(
            self,
            Parameter::StrideTime
                | Parameter::StepTime
                | Parameter::StanceTime
                | Parameter::SwingTime
                | Parameter::DoubleSupportTime
        )
    }
}

impl std::fmt::Display for Parameter {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Parameter {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Parameter::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| format!("unknown parameter {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpatialMethod {
    TorsoVelocity,
    Range,
    Truth,
}

/// One gait cycle of one foot, from a heel strike to the next heel strike of
/// the same foot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrideRecord {
    pub foot: Foot,
    /// Heel strike opening the cycle, seconds.
    pub start: f64,
    /// Heel strike closing the cycle, seconds.
    pub end: f64,
    /// Heel strike of the other foot inside the cycle.
    pub opposite_strike: f64,
    /// Toe off of this foot inside the cycle.
    pub toe_off: f64,
    pub stride_time: f64,
    pub step_time: f64,
    pub stance_time: f64,
    pub swing_time: f64,
    pub double_support_time: f64,
    /// Steps per minute.
    pub cadence: f64,
    pub stride_velocity: Option<f64>,
    pub step_velocity: Option<f64>,
    pub stride_distance: Option<f64>,
    pub step_distance: Option<f64>,
    pub foot_max_velocity: Option<f64>,
    pub event_source: EventSource,
    pub spatial_method: Option<SpatialMethod>,
}

impl StrideRecord {
    pub fn get(&self, p: Parameter) -> Option<f64> {
        match p {
            Parameter::StrideTime => Some(self.stride_time),
            Parameter::StepTime => Some(self.step_time),
            Parameter::StanceTime => Some(self.stance_time),
            Parameter::SwingTime => Some(self.swing_time),
            Parameter::DoubleSupportTime => Some(self.double_support_time),
            Parameter::StrideVelocity => self.stride_velocity,
            Parameter::StepVelocity => self.step_velocity,
            Parameter::StrideDistance => self.stride_distance,
            Parameter::StepDistance => self.step_distance,
            Parameter::FootMaxVelocity => self.foot_max_velocity,
        }
    }

    /// Sets distances from velocities (or the reverse) so that
    /// `velocity * time == distance` holds by construction.
    fn set_spatial_from_velocity(&mut self, stride_v: f64, step_v: f64, method: SpatialMethod) {
        self.stride_velocity = Some(stride_v);
        self.step_velocity = Some(step_v);
        self.stride_distance = Some(stride_v * self.stride_time);
        self.step_distance = Some(step_v * self.step_time);
        self.spatial_method = Some(method);
    }

    fn set_spatial_from_distance(&mut self, stride_d: f64, step_d: f64, method: SpatialMethod) {
        self.stride_distance = Some(stride_d);
        self.step_distance = Some(step_d);
        self.stride_velocity = Some(stride_d / self.stride_time);
        self.step_velocity = Some(step_d / self.step_time);
        self.spatial_method = Some(method);
    }
}

/// Temporal parameters of every complete cycle in a labelled event list.
///
/// A cycle needs a heel strike of the same foot at each end with exactly one
/// heel strike of the other foot and exactly one toe off of the same foot in
/// between, ordered so that every duration is positive; other cycles are
/// omitted.
pub fn temporal_params(events: &[GaitEvent]) -> Vec<StrideRecord> {
    let mut sorted: Vec<GaitEvent> = events.to_vec();
    sorted.sort_by(|a, b| a.time.total_cmp(&b.time));
    let mut records = Vec::new();
    for foot in [Foot::Left, Foot::Right] {
        let strikes: Vec<&GaitEvent> = sorted
            .iter()
            .filter(|e| e.kind == EventKind::HeelStrike && e.foot == foot)
            .collect();
        for w in strikes.windows(2) {
            let (a, b) = (w[0].time, w[1].time);
            let inside = |kind, f: Foot| -> Vec<f64> {
                sorted
                    .iter()
                    .filter(|e| e.kind == kind && e.foot == f && e.time > a && e.time < b)
                    .map(|e| e.time)
                    .collect()
            };
            let other = inside(EventKind::HeelStrike, foot.opposite());
            let toe_offs = inside(EventKind::ToeOff, foot);
            let ([hs_other], [to]) = (other.as_slice(), toe_offs.as_slice()) else {
                continue;
            };
            let (hs_other, to) = (*hs_other, *to);
            let record = StrideRecord {
                foot,
                start: a,
                end: b,
                opposite_strike: hs_other,
                toe_off: to,
                stride_time: b - a,
                step_time: hs_other - a,
                stance_time: to - a,
                swing_time: b - to,
                double_support_time: to - hs_other,
                cadence: 60.0 / (hs_other - a),
                stride_velocity: None,
                step_velocity: None,
                stride_distance: None,
                step_distance: None,
                foot_max_velocity: None,
                event_source: w[0].source,
                spatial_method: None,
            };
            if record.double_support_time > 0.0 {
                records.push(record);
            }
        }
    }
    records.sort_by(|a, b| a.start.total_cmp(&b.start));
    records
}

/// Cycles fully inside one segment, computed segment by segment.
pub fn strides_in_segments(events: &[GaitEvent], segments: &[GaitSegment]) -> Vec<StrideRecord> {
    let mut records = Vec::new();
    for seg in segments {
        let inside: Vec<GaitEvent> = events
            .iter()
            .filter(|e| seg.contains(e.time))
            .copied()
            .collect();
        records.extend(temporal_params(&inside));
    }
    records
}

fn window_values(series: &TimeSeries, t0: f64, t1: f64) -> Option<&[f64]> {
    let range = series.window(t0, t1)?;
    let values = &series.values[range];
    (!values.is_empty() && values.iter().all(|v| v.is_finite())).then_some(values)
}

fn mean_abs(values: &[f64]) -> f64 {
    values.iter().map(|v| v.abs()).sum::<f64>() / values.len() as f64
}

/// Stride and step velocity as the mean torso speed over each window;
/// distances follow as velocity times duration. Windows touching undefined
/// speed samples leave the fields absent.
pub fn spatial_from_torso_velocity(records: &mut [StrideRecord], torso_speed: &TimeSeries) {
    for r in records {
        let stride = window_values(torso_speed, r.start, r.end).map(mean_abs);
        let step = window_values(torso_speed, r.start, r.opposite_strike).map(mean_abs);
        if let (Some(sv), Some(pv)) = (stride, step) {
            r.set_spatial_from_velocity(sv, pv, SpatialMethod::TorsoVelocity);
        }
    }
}

/// Stride and step distance as the change of the target range track over
/// each window; velocity follows as distance over duration. Gaps in the
/// track leave the fields absent.
pub fn spatial_from_range(records: &mut [StrideRecord], range_track: &TimeSeries) {
    for r in records {
        spatial_from_range_one(r, range_track);
    }
}

pub(crate) fn spatial_from_range_one(r: &mut StrideRecord, range_track: &TimeSeries) {
    let covered = window_values(range_track, r.start, r.end).is_some();
    let at = |t| range_track.sample(t);
    if let (true, Some(a), Some(m), Some(b)) = (covered, at(r.start), at(r.opposite_strike), at(r.end)) {
        r.set_spatial_from_distance((b - a).abs(), (m - a).abs(), SpatialMethod::Range);
    }
}

/// Median filter applied to the foot speed before taking its peak, seconds.
/// Removes single-frame spectral splatter without flattening the swing.
pub const FOOT_SPEED_DESPIKE: f64 = 0.025;

/// Peak walking-direction foot speed during each swing (toe off to heel
/// strike). Swings that are mostly undefined leave the field absent.
pub fn foot_max_velocity(records: &mut [StrideRecord], foot_speed: &TimeSeries) {
    let width = odd_width(FOOT_SPEED_DESPIKE, foot_speed.rate);
    let despiked = TimeSeries::new(
        foot_speed.start_time,
        foot_speed.rate,
        median_filter(&foot_speed.values, width),
    );
    for r in records {
        let Some(range) = despiked.window(r.toe_off, r.end) else {
            continue;
        };
        let values = &despiked.values[range];
        let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
        if finite.len() * 2 > values.len() {
            r.foot_max_velocity = finite.into_iter().reduce(f64::max);
        }
    }
}

/// Reference stride records from the simulator: temporal parameters from
/// the true events, distances from the true foot positions and the true peak
/// swing speed. The first and last cycle of every bout are dropped.
pub fn truth_records(truth: &GroundTruth) -> Vec<StrideRecord> {
    let kin = &truth.kinematics;
    let mut out = Vec::new();
    for seg in &truth.segments {
        let mut records = strides_in_segments(&truth.events, std::slice::from_ref(seg));
        let first = records.iter().map(|r| r.start).fold(f64::INFINITY, f64::min);
        let last = records.iter().map(|r| r.end).fold(f64::NEG_INFINITY, f64::max);
        records.retain(|r| r.start > first + 1e-9 && r.end < last - 1e-9);
        for r in &mut records {
            let x = |foot, t| kin.foot_state(foot, t).0;
            let stride_d = (x(r.foot, r.end) - x(r.foot, r.start)).abs();
            let step_d = (x(r.foot.opposite(), r.opposite_strike) - x(r.foot, r.start)).abs();
            r.set_spatial_from_distance(stride_d, step_d, SpatialMethod::Truth);
            r.foot_max_velocity = kin
                .swings(r.foot)
                .iter()
                .find(|s| (s.end - r.end).abs() < 1e-9)
                .map(|s| s.peak);
        }
        out.extend(records);
    }
    out
}

/// Pairs each estimated record with the reference record whose opening heel
/// strike is nearest, within `tolerance` seconds; each reference record is
/// used at most once (greedy by time difference).
pub fn pair_records<'a>(
    estimated: &'a [StrideRecord],
    truth: &'a [StrideRecord],
    tolerance: f64,
) -> Vec<(&'a StrideRecord, &'a StrideRecord)> {
    let mut candidates = Vec::new();
    for (ti, t) in truth.iter().enumerate() {
        let lo = estimated.partition_point(|e| e.start < t.start - tolerance);
        for (ei, e) in estimated.iter().enumerate().skip(lo) {
            let dt = (e.start - t.start).abs();
            if e.start > t.start + tolerance {
                break;
            }
            if dt < tolerance {
                candidates.push((dt, ti, ei));
            }
        }
    }
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut t_used = vec![false; truth.len()];
    let mut e_used = vec![false; estimated.len()];
    let mut pairs = Vec::new();
    for (_, ti, ei) in candidates {
        if !t_used[ti] && !e_used[ei] {
            t_used[ti] = true;
            e_used[ei] = true;
            pairs.push((&truth[ti], &estimated[ei]));
        }
    }
    pairs.sort_by(|a, b| a.0.start.total_cmp(&b.0.start));
    pairs
}
