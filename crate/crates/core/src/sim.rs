//! Kinematic walker and LFMCW chirp rendering.
//!
//! The walker is three point scatterers (torso and two feet, plus optional
//! limb clutter) moving along the world x axis. A foot is at rest for its whole
//! stance and follows a raised-cosine tapered speed bulge during swing; the
//! torso speed oscillates twice per stride with its maxima on the heel strikes.
//! Turns and the sit/stand phases of the timed up-and-go are modelled as torso
//! speed ramps with the feet planted; the foot that has to change sides makes a
//! single slow pivot step while the torso is still.

use std::f64::consts::PI;

use num_complex::{Complex32, Complex64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::events::{Direction, EventKind, Foot, GaitEvent, GaitSegment};
use crate::{Error, Result, SPEED_OF_LIGHT};

const FOOT_HEIGHT: f64 = 0.05;
const FOOT_LATERAL: f64 = 0.1;
const LIMB_HEIGHT: f64 = 0.5;
const RAMP_TIME: f64 = 0.6;
const PIVOT_TIME: f64 = 0.5;
const TURN_DWELL: f64 = 0.5;
const TUG_SEATED: f64 = 2.5;
const START_REST: f64 = 1.0;
const END_REST: f64 = 1.0;
/// Fullness range of the swing speed bulge (distance / (peak speed x duration)).
const MIN_FULLNESS: f64 = 0.5;
const MAX_FULLNESS: f64 = 0.98;

// ---------------------------------------------------------------------------
// Walker and trial description
// ---------------------------------------------------------------------------

/// Gait characteristics of one simulated subject.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WalkerProfile {
    /// Seconds per gait cycle.
    pub stride_time: f64,
    /// Metres travelled by one foot per gait cycle.
    pub stride_length: f64,
    /// Fraction of the cycle a foot spends on the ground.
    pub duty_factor: f64,
    pub torso_height: f64,
    /// Peak swing speed of the left foot (and of the right one unless
    /// `right_foot_peak_velocity` is set), m/s.
    pub foot_peak_velocity: f64,
    #[serde(default)]
    pub right_foot_peak_velocity: Option<f64>,
    /// Fractional amplitude of the twice-per-stride torso speed oscillation.
    pub torso_velocity_modulation: f64,
    /// Per-step irregularity of the torso oscillation in [0, 1]. Zero gives the
    /// clean healthy pattern; large values blur and displace the torso peaks.
    #[serde(default)]
    pub torso_jitter: f64,
    /// Ratio of the step ending in a left heel strike to the one ending in a
    /// right heel strike.
    pub asymmetry: f64,
    /// Coefficient of variation of step time and step length.
    #[serde(default)]
    pub stride_variability: f64,
    /// Relative scattering amplitude of each foot (torso = 1).
    #[serde(default = "default_foot_reflectivity")]
    pub foot_reflectivity: f64,
    /// Amplitude of an optional knee-height scatterer; 0 disables it.
    #[serde(default)]
    pub limb_reflectivity: f64,
}

fn default_foot_reflectivity() -> f64 {
    0.25
}

impl WalkerProfile {
    /// Young adult without motor impairment.
    pub fn healthy_young() -> Self {
        Self {
            stride_time: 1.05,
            stride_length: 1.35,
            duty_factor: 0.6,
            torso_height: 1.0,
            foot_peak_velocity: 4.0,
            right_foot_peak_velocity: None,
            torso_velocity_modulation: 0.15,
            torso_jitter: 0.0,
            asymmetry: 1.0,
            stride_variability: 0.02,
            foot_reflectivity: default_foot_reflectivity(),
            limb_reflectivity: 0.0,
        }
    }

    /// Older adult without motor impairment.
    pub fn healthy_aged() -> Self {
        Self {
            stride_time: 1.12,
            stride_length: 1.22,
            duty_factor: 0.62,
            foot_peak_velocity: 3.6,
            torso_velocity_modulation: 0.12,
            torso_jitter: 0.15,
            stride_variability: 0.03,
            ..Self::healthy_young()
        }
    }

    /// Parkinsonian gait: short, slower steps and an irregular torso pattern.
    pub fn parkinsonian() -> Self {
        Self {
            stride_time: 1.2,
            stride_length: 0.95,
            duty_factor: 0.66,
            foot_peak_velocity: 2.8,
            torso_velocity_modulation: 0.10,
            torso_jitter: 0.85,
            asymmetry: 1.04,
            stride_variability: 0.04,
            ..Self::healthy_young()
        }
    }

    pub fn mean_speed(&self) -> f64 {
        self.stride_length / self.stride_time
    }

    pub fn peak_velocity(&self, foot: Foot) -> f64 {
        match foot {
            Foot::Right => self.right_foot_peak_velocity.unwrap_or(self.foot_peak_velocity),
            _ => self.foot_peak_velocity,
        }
    }

    pub fn stance_time(&self) -> f64 {
        self.duty_factor * self.stride_time
    }

    pub fn swing_time(&self) -> f64 {
        self.stride_time - self.stance_time()
    }

    /// Profile adjusted for the requested pace.
    pub fn at_pace(&self, pace: Pace) -> Self {
        let (time, length, peak) = match pace {
            Pace::Slow => (1.15, 0.92, 0.9),
            Pace::Normal => (1.0, 1.0, 1.0),
            Pace::Quick => (0.88, 1.08, 1.1),
        };
        Self {
            stride_time: self.stride_time * time,
            stride_length: self.stride_length * length,
            foot_peak_velocity: self.foot_peak_velocity * peak,
            right_foot_peak_velocity: self.right_foot_peak_velocity.map(|v| v * peak),
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |field, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::invalid(field, format!("must be positive, got {v}")))
            }
        };
        positive("stride_time", self.stride_time)?;
        positive("stride_length", self.stride_length)?;
        positive("torso_height", self.torso_height)?;
        positive("asymmetry", self.asymmetry)?;
        positive("foot_reflectivity", self.foot_reflectivity)?;
        if !(0.4..1.0).contains(&self.duty_factor) {
            return Err(Error::invalid(
                "duty_factor",
                format!("must lie in [0.4, 1), got {}", self.duty_factor),
            ));
        }
        if !(0.0..1.0).contains(&self.torso_velocity_modulation) {
            return Err(Error::invalid("torso_velocity_modulation", "must lie in [0, 1)"));
        }
        if !(0.0..=1.0).contains(&self.torso_jitter) {
            return Err(Error::invalid("torso_jitter", "must lie in [0, 1]"));
        }
        if !(0.0..=0.2).contains(&self.stride_variability) {
            return Err(Error::invalid("stride_variability", "must lie in [0, 0.2]"));
        }
        if self.limb_reflectivity < 0.0 {
            return Err(Error::invalid("limb_reflectivity", "must be non-negative"));
        }
        for foot in [Foot::Left, Foot::Right] {
            let peak = self.peak_velocity(foot);
            if !(peak > self.mean_speed()) {
                return Err(Error::invalid(
                    "foot_peak_velocity",
                    format!(
                        "{peak} m/s does not exceed the mean walking speed {:.3} m/s",
                        self.mean_speed()
                    ),
                ));
            }
            let fullness = self.stride_length / (peak * self.swing_time());
            if !(MIN_FULLNESS..MAX_FULLNESS).contains(&fullness) {
                return Err(Error::invalid(
                    "foot_peak_velocity",
                    format!(
                        "{peak} m/s cannot carry a {} m stride through a {:.3} s swing",
                        self.stride_length,
                        self.swing_time()
                    ),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    /// Timed up-and-go: stand up, walk out, turn, walk back, sit down.
    Tug,
    /// Straight walking with a turn at each end of the path.
    ContinuousWalk,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pace {
    Slow,
    Normal,
    Quick,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialScript {
    pub protocol: Protocol,
    /// Length of each straight walk, metres.
    pub path_length: f64,
    /// TUG repetitions, or straight walks for the continuous protocol.
    pub repetitions: u32,
    pub pace: Pace,
    /// Stop starting new walks after this many seconds.
    #[serde(default)]
    pub duration_cap: Option<f64>,
}

impl TrialScript {
    pub fn tug(repetitions: u32) -> Self {
        Self {
            protocol: Protocol::Tug,
            path_length: 3.0,
            repetitions,
            pace: Pace::Quick,
            duration_cap: None,
        }
    }

    pub fn continuous(repetitions: u32, pace: Pace) -> Self {
        Self {
            protocol: Protocol::ContinuousWalk,
            path_length: 3.0,
            repetitions,
            pace,
            duration_cap: None,
        }
    }

    /// The five clinical tests: TUG x10 at quick pace, twenty walks at normal,
    /// slow and quick pace, and two minutes of walking at normal pace.
    pub fn clinical_tests() -> [TrialScript; 5] {
        [
            Self::tug(10),
            Self::continuous(20, Pace::Normal),
            Self::continuous(20, Pace::Slow),
            Self::continuous(20, Pace::Quick),
            Self {
                duration_cap: Some(120.0),
                ..Self::continuous(1000, Pace::Normal)
            },
        ]
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.path_length.is_finite() && self.path_length > 0.0) {
            return Err(Error::invalid("path_length", "must be positive"));
        }
        if self.repetitions < 1 {
            return Err(Error::invalid("repetitions", "must be at least 1"));
        }
        if let Some(cap) = self.duration_cap {
            if !(cap > 0.0) {
                return Err(Error::invalid("duration_cap", "must be positive"));
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Radar description
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Focus {
    Torso,
    Feet,
}

/// Which end of the walkway a node sits at. Node 1 faces +x, node 2 faces -x.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    #[serde(rename = "1")]
    One,
    #[serde(rename = "2")]
    Two,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeGeometry {
    pub id: u32,
    pub side: Side,
    pub focus: Focus,
    pub position: [f64; 3],
    /// Unit vector.
    pub boresight: [f64; 3],
    /// Full -3 dB beamwidth, degrees.
    pub beamwidth: f64,
}

impl NodeGeometry {
    pub fn new(
        id: u32,
        side: Side,
        focus: Focus,
        position: [f64; 3],
        boresight: [f64; 3],
        beamwidth: f64,
    ) -> Result<Self> {
        let norm = dot(boresight, boresight).sqrt();
        if !(norm.is_finite() && norm > 1e-12) {
            return Err(Error::invalid("boresight", "must be a non-zero vector"));
        }
        if !(beamwidth > 0.0 && beamwidth < 180.0) {
            return Err(Error::invalid("beamwidth", format!("{beamwidth} not in (0, 180)")));
        }
        Ok(Self {
            id,
            side,
            focus,
            position,
            boresight: boresight.map(|c| c / norm),
            beamwidth,
        })
    }

    /// Two-way amplitude weight of the Gaussian beam; one-way power is 3 dB
    /// down at half the beamwidth.
    pub fn beam_weight(&self, target: [f64; 3]) -> f64 {
        let d = sub(target, self.position);
        let r = dot(d, d).sqrt();
        if r == 0.0 {
            return 1.0;
        }
        let cos = (dot(d, self.boresight) / r).clamp(-1.0, 1.0);
        let ratio = cos.acos().to_degrees() / (0.5 * self.beamwidth);
        10f64.powf(-0.3 * ratio * ratio)
    }
}

/// Torso and feet nodes at both ends of a straight walkway running from x = 0
/// to x = `path_length`. Nodes stand one metre beyond each end of the path and
/// `lateral_offset` metres to the side of the walking line.
pub fn standard_layout(path_length: f64, lateral_offset: f64) -> Vec<NodeGeometry> {
    const TORSO_NODE_HEIGHT: f64 = 1.3;
    const FEET_NODE_HEIGHT: f64 = 0.3;
    const STANDOFF: f64 = 1.0;
    const BEAMWIDTH: f64 = 40.0;
    let x1 = -STANDOFF;
    let x2 = path_length + STANDOFF;
    let aim = STANDOFF + 0.5 * path_length;
    let tilt = (FEET_NODE_HEIGHT - FOOT_HEIGHT) / aim;
    let node = |id, side, focus, x: f64, z: f64, dir: f64, dz: f64| {
        NodeGeometry::new(id, side, focus, [x, -lateral_offset, z], [dir, 0.0, dz], BEAMWIDTH)
            .expect("static layout is valid")
    };
    vec![
        node(1, Side::One, Focus::Torso, x1, TORSO_NODE_HEIGHT, 1.0, 0.0),
        node(2, Side::One, Focus::Feet, x1, FEET_NODE_HEIGHT, 1.0, -tilt),
        node(3, Side::Two, Focus::Torso, x2, TORSO_NODE_HEIGHT, -1.0, 0.0),
        node(4, Side::Two, Focus::Feet, x2, FEET_NODE_HEIGHT, -1.0, -tilt),
    ]
}

/// LFMCW chirp parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadarWaveform {
    /// Start frequency, Hz.
    pub f0: f64,
    /// Swept bandwidth, Hz.
    pub bandwidth: f64,
    /// Chirp duration, seconds.
    pub chirp_time: f64,
    /// IQ sampling rate, samples/s.
    pub sample_rate: f64,
    pub samples_per_chirp: usize,
}

impl Default for RadarWaveform {
    fn default() -> Self {
        Self::new(23e9, 1.4e9, 625e-6, 256e3).expect("default waveform is valid")
    }
}

impl RadarWaveform {
    pub fn new(f0: f64, bandwidth: f64, chirp_time: f64, sample_rate: f64) -> Result<Self> {
        if !(f0.is_finite() && f0 > 0.0) {
            return Err(Error::invalid("f0", "must be positive"));
        }
        if !(bandwidth.is_finite() && bandwidth >= 0.0) {
            return Err(Error::invalid("bandwidth", "must be non-negative"));
        }
        if !(chirp_time.is_finite() && chirp_time > 0.0) {
            return Err(Error::invalid("chirp_time", "must be positive"));
        }
        if !(sample_rate.is_finite() && sample_rate > 0.0) {
            return Err(Error::invalid("sample_rate", "must be positive"));
        }
        let samples_per_chirp = (sample_rate * chirp_time).round() as usize;
        if samples_per_chirp == 0 {
            return Err(Error::invalid("sample_rate", "less than one sample per chirp"));
        }
        Ok(Self {
            f0,
            bandwidth,
            chirp_time,
            sample_rate,
            samples_per_chirp,
        })
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.f0
    }

    pub fn chirp_rate(&self) -> f64 {
        1.0 / self.chirp_time
    }

    /// Range spanned by one beat-frequency bin, c / (2B).
    pub fn range_resolution(&self) -> f64 {
        SPEED_OF_LIGHT / (2.0 * self.bandwidth)
    }

    /// Beat frequency of a scatterer at `range`: 2 R B / (c Tc).
    pub fn beat_frequency(&self, range: f64) -> f64 {
        2.0 * range * self.bandwidth / (SPEED_OF_LIGHT * self.chirp_time)
    }

    /// Range of a beat frequency, the inverse of [`Self::beat_frequency`].
    pub fn range_of_beat(&self, beat: f64) -> f64 {
        beat * SPEED_OF_LIGHT * self.chirp_time / (2.0 * self.bandwidth)
    }

    /// Largest range whose beat tone stays below the complex sampling rate.
    pub fn max_range(&self) -> f64 {
        self.range_of_beat(self.sample_rate)
    }
}

// ---------------------------------------------------------------------------
// Kinematics
// ---------------------------------------------------------------------------

/// One swing of one foot along the walking axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Swing {
    pub foot: Foot,
    /// Toe-off time.
    pub start: f64,
    /// Heel-strike time.
    pub end: f64,
    pub from_x: f64,
    pub to_x: f64,
    /// Peak speed, m/s.
    pub peak: f64,
    /// Part of the walk (`false` for the pivot step of a turn).
    pub gait: bool,
}

impl Swing {
    /// Length of each raised-cosine flank: the bulge carries the displacement
    /// `d = peak * (duration - taper)`.
    fn taper(&self) -> f64 {
        let duration = self.end - self.start;
        duration - (self.to_x - self.from_x).abs() / self.peak
    }

    fn direction(&self) -> f64 {
        (self.to_x - self.from_x).signum()
    }

    /// Unsigned speed `s` seconds after toe-off.
    fn speed(&self, s: f64) -> f64 {
        let duration = self.end - self.start;
        let tau = self.taper();
        if s <= 0.0 || s >= duration {
            0.0
        } else if s < tau {
            0.5 * self.peak * (1.0 - (PI * s / tau).cos())
        } else if s > duration - tau {
            0.5 * self.peak * (1.0 - (PI * (duration - s) / tau).cos())
        } else {
            self.peak
        }
    }

    /// Distance covered `s` seconds after toe-off.
    fn distance(&self, s: f64) -> f64 {
        let duration = self.end - self.start;
        let tau = self.taper();
        let flank = |u: f64| 0.5 * self.peak * (u - tau / PI * (PI * u / tau).sin());
        let total = (self.to_x - self.from_x).abs();
        if s <= 0.0 {
            0.0
        } else if s >= duration {
            total
        } else if s < tau {
            flank(s)
        } else if s > duration - tau {
            total - flank(duration - s)
        } else {
            0.5 * self.peak * tau + self.peak * (s - tau)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
enum TorsoMotion {
    /// Half-cosine speed ramp between two signed velocities.
    Ramp { from: f64, to: f64 },
    /// One gait oscillation: `mean * (1 + depth cos(2 pi s) + ripple sin(4 pi s))`.
    Gait { mean: f64, depth: f64, ripple: f64 },
    /// Start and stop at rest, covering `distance` with a raised-cosine speed.
    Shift { distance: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TorsoPiece {
    start: f64,
    end: f64,
    start_x: f64,
    motion: TorsoMotion,
}

impl TorsoPiece {
    fn velocity(&self, t: f64) -> f64 {
        let span = self.end - self.start;
        let s = ((t - self.start) / span).clamp(0.0, 1.0);
        match self.motion {
            TorsoMotion::Ramp { from, to } => from + (to - from) * 0.5 * (1.0 - (PI * s).cos()),
            TorsoMotion::Gait {
                mean,
                depth,
                ripple,
            } => mean * (1.0 + depth * (2.0 * PI * s).cos() + ripple * (4.0 * PI * s).sin()),
            TorsoMotion::Shift { distance } => distance / span * (1.0 - (2.0 * PI * s).cos()),
        }
    }

    fn displacement(&self, t: f64) -> f64 {
        let span = self.end - self.start;
        let s = ((t - self.start) / span).clamp(0.0, 1.0);
        span * match self.motion {
            TorsoMotion::Ramp { from, to } => {
                from * s + 0.5 * (to - from) * (s - (PI * s).sin() / PI)
            }
            TorsoMotion::Gait {
                mean,
                depth,
                ripple,
            } => {
                mean * (s
                    + depth * (2.0 * PI * s).sin() / (2.0 * PI)
                    + ripple * (1.0 - (4.0 * PI * s).cos()) / (4.0 * PI))
            }
            TorsoMotion::Shift { distance } => {
                distance / span * (s - (2.0 * PI * s).sin() / (2.0 * PI))
            }
        }
    }

    fn end_velocity(&self) -> f64 {
        self.velocity(self.end)
    }
}

/// Closed-form motion of the walker along the walking axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Kinematics {
    pub duration: f64,
    pub torso_height: f64,
    initial_feet: [f64; 2],
    swings: [Vec<Swing>; 2],
    torso: Vec<TorsoPiece>,
}

fn foot_index(foot: Foot) -> usize {
    match foot {
        Foot::Right => 1,
        _ => 0,
    }
}

impl Kinematics {
    pub fn swings(&self, foot: Foot) -> &[Swing] {
        &self.swings[foot_index(foot)]
    }

    /// Foot position and signed velocity along x at time `t`.
    pub fn foot_state(&self, foot: Foot, t: f64) -> (f64, f64) {
        let swings = self.swings(foot);
        let idx = swings.partition_point(|s| s.start <= t);
        if idx == 0 {
            return (self.initial_feet[foot_index(foot)], 0.0);
        }
        let sw = &swings[idx - 1];
        if t >= sw.end {
            (sw.to_x, 0.0)
        } else {
            let s = t - sw.start;
            let dir = sw.direction();
            (sw.from_x + dir * sw.distance(s), dir * sw.speed(s))
        }
    }

    /// Torso position and signed velocity along x at time `t`.
    pub fn torso_state(&self, t: f64) -> (f64, f64) {
        let idx = self.torso.partition_point(|p| p.start <= t);
        let piece = &self.torso[idx.saturating_sub(1)];
        (piece.start_x + piece.displacement(t), piece.velocity(t))
    }
}

// ---------------------------------------------------------------------------
// Ground truth and tracks
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    /// Heel strikes and toe offs of every straight walk, in time order.
    pub events: Vec<GaitEvent>,
    /// Straight walking bouts from their first to their last heel strike.
    pub segments: Vec<GaitSegment>,
    /// Turning, standing and sitting intervals.
    pub non_walking: Vec<(f64, f64)>,
    pub kinematics: Kinematics,
}

impl GroundTruth {
    pub fn duration(&self) -> f64 {
        self.kinematics.duration
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BodyPart {
    Torso,
    LeftFoot,
    RightFoot,
    Limb,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartTrack {
    pub part: BodyPart,
    pub reflectivity: f64,
    pub position: Vec<[f64; 3]>,
    pub velocity: Vec<[f64; 3]>,
}

/// Scatterer trajectories sampled once per chirp.
#[derive(Debug, Clone, PartialEq)]
pub struct ScattererTracks {
    /// Samples per second.
    pub rate: f64,
    pub parts: Vec<PartTrack>,
}

impl ScattererTracks {
    pub fn len(&self) -> usize {
        self.parts.first().map_or(0, |p| p.position.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn part(&self, part: BodyPart) -> Option<&PartTrack> {
        self.parts.iter().find(|p| p.part == part)
    }

    /// Union of two track sets sampled on the same grid.
    pub fn merged(&self, other: &ScattererTracks) -> Result<ScattererTracks> {
        if self.len() != other.len() || self.rate != other.rate {
            return Err(Error::Misaligned("track sets differ in length or rate".into()));
        }
        let mut parts = self.parts.clone();
        parts.extend(other.parts.iter().cloned());
        Ok(ScattererTracks {
            rate: self.rate,
            parts,
        })
    }

    /// Torso velocity component towards node 1 (i.e. along -x), the walking
    /// speed signal used to segment bouts.
    pub fn torso_approach_velocity(&self) -> crate::series::TimeSeries {
        let values = self
            .part(BodyPart::Torso)
            .map(|p| p.velocity.iter().map(|v| -v[0]).collect())
            .unwrap_or_default();
        crate::series::TimeSeries::new(0.0, self.rate, values)
    }
}

// ---------------------------------------------------------------------------
// Walker synthesis
// ---------------------------------------------------------------------------

struct Builder<'a> {
    profile: &'a WalkerProfile,
    rng: ChaCha8Rng,
    t: f64,
    torso_x: f64,
    torso_v: f64,
    feet: [f64; 2],
    swings: [Vec<Swing>; 2],
    torso: Vec<TorsoPiece>,
    events: Vec<GaitEvent>,
    segments: Vec<GaitSegment>,
    non_walking: Vec<(f64, f64)>,
    /// Foot that landed last.
    lead: Foot,
}

impl<'a> Builder<'a> {
    fn push_torso(&mut self, duration: f64, motion: TorsoMotion) {
        let piece = TorsoPiece {
            start: self.t,
            end: self.t + duration,
            start_x: self.torso_x,
            motion,
        };
        self.torso_x += piece.displacement(piece.end);
        self.torso_v = piece.end_velocity();
        self.t = piece.end;
        self.torso.push(piece);
    }

    fn ramp(&mut self, duration: f64, to: f64) {
        let from = self.torso_v;
        self.push_torso(duration, TorsoMotion::Ramp { from, to });
    }

    fn rest(&mut self, duration: f64) {
        self.push_torso(duration, TorsoMotion::Ramp { from: 0.0, to: 0.0 });
    }

    fn gaussian(&mut self) -> f64 {
        self.rng.sample::<f64, _>(StandardNormal).clamp(-3.0, 3.0)
    }

    /// Moves the trailing foot past the lead foot so that it trails in the
    /// opposite walking direction, and brings the torso to where the next
    /// launch ramp must start.
    fn pivot(&mut self, new_direction: f64, dwell: f64) {
        let trailing = self.lead.opposite();
        let from = self.feet[foot_index(trailing)];
        let to = self.feet[foot_index(self.lead)] - new_direction * 0.5 * self.profile.stride_length;
        let start = self.t + 0.5 * (dwell - PIVOT_TIME).max(0.0);
        let distance = (to - from).abs();
        if distance > 1e-9 {
            self.swings[foot_index(trailing)].push(Swing {
                foot: trailing,
                start,
                end: start + PIVOT_TIME,
                from_x: from,
                to_x: to,
                peak: distance / (0.75 * PIVOT_TIME),
                gait: false,
            });
            self.feet[foot_index(trailing)] = to;
        }
        let lead_x = self.feet[foot_index(self.lead)];
        let target = lead_x
            - new_direction * 0.25 * self.profile.stride_length
            - 0.5 * RAMP_TIME * self.launch_velocity(new_direction);
        let distance = target - self.torso_x;
        self.push_torso(dwell.max(PIVOT_TIME), TorsoMotion::Shift { distance });
    }

    /// Nominal step preceding a heel strike of `foot`.
    fn nominal_step(&self, foot: Foot) -> f64 {
        let a = self.profile.asymmetry;
        let t = self.profile.stride_time;
        match foot {
            Foot::Left => t * a / (1.0 + a),
            _ => t / (1.0 + a),
        }
    }

    /// Plans one straight walk of `steps` steps in `direction` (+1 or -1)
    /// starting with a heel strike of the current lead foot. Returns the
    /// planned heel-strike times, feet and landing positions.
    fn plan_walk(&mut self, direction: f64, steps: usize, start: f64) -> Vec<(f64, Foot, f64)> {
        let cv = self.profile.stride_variability;
        let lead = self.lead;
        let mut plan = vec![(start, lead, self.feet[foot_index(lead)])];
        for k in 1..=steps {
            let foot = if k % 2 == 1 { lead.opposite() } else { lead };
            let (prev_t, _, prev_x) = plan[k - 1];
            let dt = self.nominal_step(foot) * (1.0 + cv * self.gaussian());
            let len = 0.5 * self.profile.stride_length * (1.0 + cv * self.gaussian());
            plan.push((prev_t + dt, foot, prev_x + direction * len));
        }
        plan
    }

    fn walk(&mut self, direction: f64, steps: usize) {
        let p = self.profile;
        let h0 = self.t;
        let plan = self.plan_walk(direction, steps, h0);
        let duty = p.duty_factor;

        // Feet: the foot landing at plan[k] swings from its previous position.
        for k in 1..plan.len() {
            let (hs, foot, to_x) = plan[k];
            let prev_hs = if k >= 2 {
                plan[k - 2].0
            } else {
                plan[0].0 - self.nominal_step(foot.opposite())
            };
            let stride = hs - prev_hs;
            let to = hs - (1.0 - duty) * stride;
            let from_x = self.feet[foot_index(foot)];
            let duration = hs - to;
            let distance = (to_x - from_x).abs();
            let nominal = p.peak_velocity(foot) * (1.0 + 0.5 * p.stride_variability * self.gaussian());
            let peak = nominal.clamp(
                distance / (MAX_FULLNESS * duration),
                distance / (MIN_FULLNESS * duration),
            );
            self.swings[foot_index(foot)].push(Swing {
                foot,
                start: to,
                end: hs,
                from_x,
                to_x,
                peak,
                gait: true,
            });
            self.feet[foot_index(foot)] = to_x;
            self.events.push(GaitEvent::truth(EventKind::ToeOff, foot, to));
        }
        for &(hs, foot, _) in &plan {
            self.events.push(GaitEvent::truth(EventKind::HeelStrike, foot, hs));
        }

        // Torso: one speed oscillation per step, anchored near heel strikes.
        let n = plan.len() - 1;
        let jitter = p.torso_jitter;
        let mut anchors = Vec::with_capacity(plan.len());
        for k in 0..plan.len() {
            let shift = if k == 0 || k == n {
                0.0
            } else {
                let step = plan[k + 1].0 - plan[k - 1].0;
                jitter * 0.2 * step * self.rng.random_range(-1.0..1.0)
            };
            anchors.push(plan[k].0 + shift);
        }
        for k in 0..n {
            let mean = (plan[k + 1].2 - plan[k].2) / (anchors[k + 1] - anchors[k]);
            let depth = p.torso_velocity_modulation * (1.0 - jitter * self.rng.random::<f64>());
            let ripple =
                p.torso_velocity_modulation * jitter * self.rng.random_range(-1.0..1.0);
            debug_assert!((self.t - anchors[k]).abs() < 1e-9);
            self.push_torso(
                anchors[k + 1] - anchors[k],
                TorsoMotion::Gait {
                    mean,
                    depth,
                    ripple,
                },
            );
        }
        self.lead = plan[n].1;
        self.segments.push(GaitSegment {
            start: h0,
            end: plan[n].0,
            direction: if direction > 0.0 {
                Direction::TowardNode2
            } else {
                Direction::TowardNode1
            },
        });
    }

    /// Signed torso speed at the first heel strike of the next walk.
    fn launch_velocity(&self, direction: f64) -> f64 {
        direction * self.profile.mean_speed() * (1.0 + self.profile.torso_velocity_modulation)
    }

    fn non_walking(&mut self, from: f64) {
        if self.t > from {
            self.non_walking.push((from, self.t));
        }
    }
}

/// Builds the walker motion and its ground truth for one trial. `chirp_rate`
/// sets the sampling of the returned tracks.
pub fn synthesize_walker(
    profile: &WalkerProfile,
    script: &TrialScript,
    chirp_rate: f64,
    seed: u64,
) -> Result<(ScattererTracks, GroundTruth)> {
    script.validate()?;
    let profile = profile.at_pace(script.pace);
    profile.validate()?;
    if !(chirp_rate.is_finite() && chirp_rate > 0.0) {
        return Err(Error::invalid("chirp_rate", "must be positive"));
    }
    if script.path_length < profile.stride_length {
        return Err(Error::PathTooShort {
            path_length: script.path_length,
            stride_length: profile.stride_length,
        });
    }
    let steps = (script.path_length / (0.5 * profile.stride_length)).floor() as usize;

    let step = 0.5 * profile.stride_length;
    let mut b = Builder {
        profile: &profile,
        rng: ChaCha8Rng::seed_from_u64(seed),
        t: 0.0,
        // Half a step behind the lead foot when the first heel strike lands.
        torso_x: -0.5 * step - 0.5 * RAMP_TIME * profile.mean_speed() * (1.0 + profile.torso_velocity_modulation),
        torso_v: 0.0,
        feet: [0.0, -step],
        swings: [Vec::new(), Vec::new()],
        torso: Vec::new(),
        events: Vec::new(),
        segments: Vec::new(),
        non_walking: Vec::new(),
        lead: Foot::Left,
    };

    let cap = script.duration_cap.unwrap_or(f64::INFINITY);
    let mut direction = 1.0;
    b.rest(START_REST);
    b.ramp(RAMP_TIME, b.launch_velocity(direction));
    b.non_walking.push((0.0, b.t));
    match script.protocol {
        Protocol::ContinuousWalk => {
            for rep in 0..script.repetitions {
                b.walk(direction, steps);
                if rep + 1 == script.repetitions || b.t >= cap {
                    break;
                }
                let turn_start = b.t;
                b.ramp(RAMP_TIME, 0.0);
                direction = -direction;
                b.pivot(direction, TURN_DWELL);
                b.ramp(RAMP_TIME, b.launch_velocity(direction));
                b.non_walking(turn_start);
            }
        }
        Protocol::Tug => {
            for rep in 0..script.repetitions {
                b.walk(direction, steps);
                let turn_start = b.t;
                b.ramp(RAMP_TIME, 0.0);
                direction = -direction;
                b.pivot(direction, TURN_DWELL);
                b.ramp(RAMP_TIME, b.launch_velocity(direction));
                b.non_walking(turn_start);
                b.walk(direction, steps);
                if rep + 1 == script.repetitions || b.t >= cap {
                    break;
                }
                let sit_start = b.t;
                b.ramp(RAMP_TIME, 0.0);
                direction = -direction;
                b.pivot(direction, TUG_SEATED);
                b.ramp(RAMP_TIME, b.launch_velocity(direction));
                b.non_walking(sit_start);
            }
        }
    }
    let stop_start = b.t;
    b.ramp(RAMP_TIME, 0.0);
    b.rest(END_REST);
    b.non_walking(stop_start);

    b.events.sort_by(|a, c| a.time.total_cmp(&c.time));
    let kinematics = Kinematics {
        duration: b.t,
        torso_height: profile.torso_height,
        initial_feet: [0.0, -step],
        swings: b.swings,
        torso: b.torso,
    };
    let tracks = sample_tracks(&kinematics, &profile, chirp_rate);
    let truth = GroundTruth {
        events: b.events,
        segments: b.segments,
        non_walking: b.non_walking,
        kinematics,
    };
    Ok((tracks, truth))
}

fn sample_tracks(kin: &Kinematics, profile: &WalkerProfile, rate: f64) -> ScattererTracks {
    let n = (kin.duration * rate).floor() as usize + 1;
    let mut torso = PartTrack {
        part: BodyPart::Torso,
        reflectivity: 1.0,
        position: Vec::with_capacity(n),
        velocity: Vec::with_capacity(n),
    };
    let mut feet = [Foot::Left, Foot::Right].map(|foot| PartTrack {
        part: if foot == Foot::Left {
            BodyPart::LeftFoot
        } else {
            BodyPart::RightFoot
        },
        reflectivity: profile.foot_reflectivity,
        position: Vec::with_capacity(n),
        velocity: Vec::with_capacity(n),
    });
    let with_limb = profile.limb_reflectivity > 0.0;
    let mut limb = PartTrack {
        part: BodyPart::Limb,
        reflectivity: profile.limb_reflectivity,
        position: Vec::new(),
        velocity: Vec::new(),
    };
    for i in 0..n {
        let t = i as f64 / rate;
        let (tx, tv) = kin.torso_state(t);
        torso.position.push([tx, 0.0, kin.torso_height]);
        torso.velocity.push([tv, 0.0, 0.0]);
        let mut foot_x = [0.0; 2];
        let mut foot_v = [0.0; 2];
        for (j, (foot, track)) in [Foot::Left, Foot::Right].iter().zip(feet.iter_mut()).enumerate() {
            let (x, v) = kin.foot_state(*foot, t);
            let y = if j == 0 { FOOT_LATERAL } else { -FOOT_LATERAL };
            track.position.push([x, y, FOOT_HEIGHT]);
            track.velocity.push([v, 0.0, 0.0]);
            foot_x[j] = x;
            foot_v[j] = v;
        }
        if with_limb {
            // Knee-height point halfway between torso and the feet.
            let x = 0.5 * tx + 0.25 * (foot_x[0] + foot_x[1]);
            let v = 0.5 * tv + 0.25 * (foot_v[0] + foot_v[1]);
            limb.position.push([x, 0.0, LIMB_HEIGHT]);
            limb.velocity.push([v, 0.0, 0.0]);
        }
    }
    let [left, right] = feet;
    let mut parts = vec![torso, left, right];
    if with_limb {
        parts.push(limb);
    }
    ScattererTracks { rate, parts }
}

// ---------------------------------------------------------------------------
// IQ rendering
// ---------------------------------------------------------------------------

/// Complex baseband chirps, one row of `samples_per_chirp` samples per chirp.
#[derive(Debug, Clone, PartialEq)]
pub struct IqCube {
    pub chirps: usize,
    pub samples_per_chirp: usize,
    pub data: Vec<Complex32>,
}

impl IqCube {
    pub fn zeros(chirps: usize, samples_per_chirp: usize) -> Self {
        Self {
            chirps,
            samples_per_chirp,
            data: vec![Complex32::new(0.0, 0.0); chirps * samples_per_chirp],
        }
    }

    pub fn chirp(&self, index: usize) -> &[Complex32] {
        let n = self.samples_per_chirp;
        &self.data[index * n..(index + 1) * n]
    }

    pub fn mean_power(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        self.data.iter().map(|z| z.norm_sqr() as f64).sum::<f64>() / self.data.len() as f64
    }
}

/// Renders the beat signal seen by `node`.
///
/// Each scatterer adds a tone at its beat frequency whose phase at the middle
/// sample of the chirp is `-4 pi R / lambda` (range held constant within a
/// chirp), scaled by its reflectivity, the beam weight and `1/R^2` (unity at
/// 1 m). `snr_db` is the
/// per-sample SNR of a unit scatterer 1 m away on boresight; `f64::INFINITY`
/// disables noise.
pub fn render_iq(
    tracks: &ScattererTracks,
    node: &NodeGeometry,
    wf: &RadarWaveform,
    snr_db: f64,
    seed: u64,
) -> Result<IqCube> {
    if !tracks.is_empty() && (tracks.rate * wf.chirp_time - 1.0).abs() > 1e-9 {
        return Err(Error::ChirpRateMismatch {
            tracks: tracks.rate,
            chirp_rate: wf.chirp_rate(),
        });
    }
    let chirps = tracks.len();
    let n = wf.samples_per_chirp;
    let max_range = wf.max_range();
    let k = 4.0 * PI / wf.wavelength();
    let mut acc = vec![Complex64::new(0.0, 0.0); n];
    let mut cube = IqCube::zeros(chirps, n);
    for i in 0..chirps {
        acc.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
        for part in &tracks.parts {
            let p = part.position[i];
            let d = sub(p, node.position);
            let r = dot(d, d).sqrt();
            if !(r < max_range) {
                return Err(Error::RangeExceedsSamplingLimit {
                    range: r,
                    max_range,
                });
            }
            let amp = part.reflectivity * node.beam_weight(p) / (r * r).max(1e-6);
            let turn = 2.0 * PI * wf.beat_frequency(r) / wf.sample_rate;
            let step = Complex64::from_polar(1.0, turn);
            let mut z = Complex64::from_polar(amp, -k * r - turn * (n / 2) as f64);
            for a in acc.iter_mut() {
                *a += z;
                z *= step;
            }
        }
        for (dst, src) in cube.data[i * n..(i + 1) * n].iter_mut().zip(&acc) {
            *dst = Complex32::new(src.re as f32, src.im as f32);
        }
    }
    if snr_db.is_finite() {
        let noise_power = 10f64.powf(-snr_db / 10.0);
        add_noise(&mut cube, noise_power, seed);
    }
    Ok(cube)
}

/// Adds complex white Gaussian noise so that the cube's measured mean power
/// over the added noise power equals `snr_db`.
pub fn apply_trial_noise(mut iq: IqCube, snr_db: f64, seed: u64) -> IqCube {
    if iq.data.is_empty() {
        return iq;
    }
    let signal = iq.mean_power();
    add_noise(&mut iq, signal * 10f64.powf(-snr_db / 10.0), seed);
    iq
}

fn add_noise(cube: &mut IqCube, power: f64, seed: u64) {
    if !(power > 0.0) {
        return;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sigma = (0.5 * power).sqrt();
    for z in cube.data.iter_mut() {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        *z += Complex32::new((sigma * re) as f32, (sigma * im) as f32);
    }
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn steady(stride_time: f64, stride_length: f64, duty: f64, peak: f64) -> WalkerProfile {
        WalkerProfile {
            stride_time,
            stride_length,
            duty_factor: duty,
            foot_peak_velocity: peak,
            torso_jitter: 0.0,
            stride_variability: 0.0,
            ..WalkerProfile::healthy_young()
        }
    }

    fn one_walk(profile: &WalkerProfile, path: f64) -> (ScattererTracks, GroundTruth) {
        let script = TrialScript {
            path_length: path,
            ..TrialScript::continuous(1, Pace::Normal)
        };
        synthesize_walker(profile, &script, 1600.0, 3).unwrap()
    }

    fn point(position: [f64; 3], velocity: [f64; 3], n: usize, rate: f64) -> ScattererTracks {
        let dt = 1.0 / rate;
        let position = (0..n)
            .map(|i| [0, 1, 2].map(|k| position[k] + velocity[k] * i as f64 * dt))
            .collect();
        ScattererTracks {
            rate,
            parts: vec![PartTrack {
                part: BodyPart::Torso,
                reflectivity: 1.0,
                position,
                velocity: vec![velocity; n],
            }],
        }
    }

    fn boresight_node(z: f64) -> NodeGeometry {
        NodeGeometry::new(1, Side::One, Focus::Torso, [0.0, 0.0, z], [1.0, 0.0, 0.0], 40.0).unwrap()
    }

    /// (HS, TO) times of one foot's truth events.
    fn foot_events(truth: &GroundTruth, foot: Foot) -> (Vec<f64>, Vec<f64>) {
        let pick = |kind| {
            truth
                .events
                .iter()
                .filter(|e| e.foot == foot && e.kind == kind)
                .map(|e| e.time)
                .collect()
        };
        (pick(EventKind::HeelStrike), pick(EventKind::ToeOff))
    }

    #[test]
    fn cycle_splits_into_stance_and_swing() {
        let p = steady(1.1, 1.2, 0.6, 3.0);
        assert!((p.stance_time() - 0.66).abs() < 1e-12);
        assert!((p.swing_time() - 0.44).abs() < 1e-12);
        let (_, truth) = one_walk(&p, 6.0);
        for foot in [Foot::Left, Foot::Right] {
            let (hs, to) = foot_events(&truth, foot);
            for &h in &hs {
                let Some(&t) = to.iter().find(|&&t| t > h) else { continue };
                let Some(&next) = hs.iter().find(|&&x| x > h) else { continue };
                if t < next {
                    assert!((t - h - 0.66).abs() < 1e-9, "stance {}", t - h);
                    assert!((next - t - 0.44).abs() < 1e-9, "swing {}", next - t);
                }
            }
        }
    }

    #[test]
    fn torso_covers_stride_length_per_stride_time() {
        let p = steady(1.2, 1.2, 0.6, 3.0);
        let (_, truth) = one_walk(&p, 6.0);
        let (hs, _) = foot_events(&truth, Foot::Left);
        let (a, b) = (hs[1], hs[hs.len() - 2]);
        let kin = &truth.kinematics;
        let speed = (kin.torso_state(b).0 - kin.torso_state(a).0) / (b - a);
        assert!((speed - 1.0).abs() < 1e-9, "mean speed {speed}");
    }

    #[test]
    fn foot_peak_radial_speed_matches_profile() {
        let p = steady(1.1, 1.2, 0.6, 3.0);
        let (tracks, _) = one_walk(&p, 4.0);
        let node = NodeGeometry::new(1, Side::One, Focus::Feet, [-1.0, 0.0, FOOT_HEIGHT], [1.0, 0.0, 0.0], 40.0)
            .unwrap();
        let mut fastest: f64 = 0.0;
        for part in [BodyPart::LeftFoot, BodyPart::RightFoot] {
            let track = tracks.part(part).unwrap();
            for (pos, vel) in track.position.iter().zip(&track.velocity) {
                let d = sub(*pos, node.position);
                let radial = dot(*vel, d) / dot(d, d).sqrt();
                fastest = fastest.max(radial.abs());
            }
        }
        assert!((fastest / 3.0 - 1.0).abs() < 0.02, "peak radial {fastest}");
    }

    #[test]
    fn feet_are_still_between_swings() {
        let p = WalkerProfile::healthy_young();
        let (tracks, truth) = one_walk(&p, 3.0);
        let kin = &truth.kinematics;
        for (foot, part) in [(Foot::Left, BodyPart::LeftFoot), (Foot::Right, BodyPart::RightFoot)] {
            let track = tracks.part(part).unwrap();
            for (i, v) in track.velocity.iter().enumerate() {
                let t = i as f64 / tracks.rate;
                let swinging = kin.swings(foot).iter().any(|s| t > s.start && t < s.end);
                if !swinging {
                    assert_eq!(v[0], 0.0, "foot moving at {t}");
                }
            }
        }
        assert!(tracks.parts.iter().all(|p| p.position.len() == tracks.len()));
    }

    #[test]
    fn short_path_is_rejected() {
        let err = one_walk_result(0.5).unwrap_err();
        assert!(err.to_string().contains("path too short"), "{err}");
    }

    fn one_walk_result(path: f64) -> Result<(ScattererTracks, GroundTruth)> {
        let script = TrialScript {
            path_length: path,
            ..TrialScript::continuous(1, Pace::Normal)
        };
        synthesize_walker(&WalkerProfile::healthy_young(), &script, 1600.0, 0)
    }

    #[test]
    fn beat_frequency_of_three_metres() {
        let wf = RadarWaveform::default();
        assert_eq!(wf.samples_per_chirp, 160);
        // 44.8 kHz with c rounded to 3e8 m/s; exactly 2 R B / (c Tc).
        let expected = 2.0 * 3.0 * 1.4e9 / (SPEED_OF_LIGHT * 625e-6);
        assert!((wf.beat_frequency(3.0) - expected).abs() < 1e-6);
        assert!((wf.beat_frequency(3.0) - 44.8e3).abs() < 50.0);
        assert!((wf.range_of_beat(wf.beat_frequency(2.7)) - 2.7).abs() < 1e-12);
    }

    #[test]
    fn rendered_tone_has_beat_frequency_and_doppler_rotation() {
        let wf = RadarWaveform::default();
        let node = boresight_node(0.0);
        let tracks = point([3.0, 0.0, 0.0], [-1.0, 0.0, 0.0], 4, wf.chirp_rate());
        let cube = render_iq(&tracks, &node, &wf, f64::INFINITY, 0).unwrap();
        // Sample-to-sample rotation inside a chirp is the beat frequency.
        let c = cube.chirp(0);
        let beat = (c[1] * c[0].conj()).arg() as f64 * wf.sample_rate / (2.0 * PI);
        assert!((beat - wf.beat_frequency(3.0)).abs() < 5.0, "beat {beat}");
        // Chirp-to-chirp rotation of the middle sample is the Doppler shift.
        let m = wf.samples_per_chirp / 2;
        let wide = |z: Complex32| Complex64::new(z.re as f64, z.im as f64);
        let rot = (wide(cube.chirp(2)[m]) * wide(cube.chirp(1)[m]).conj()).arg();
        let doppler = rot * wf.chirp_rate() / (2.0 * PI);
        let expected = 2.0 * 1.0 * wf.f0 / SPEED_OF_LIGHT;
        assert!((doppler - expected).abs() < 0.05, "doppler {doppler} vs {expected}");
        // Quoted as 153.3 Hz with c rounded to 3e8 m/s.
        assert!((doppler - 153.3).abs() < 0.2);
    }

    #[test]
    fn noiseless_empty_scene_is_silent() {
        let wf = RadarWaveform::default();
        let tracks = ScattererTracks {
            rate: wf.chirp_rate(),
            parts: Vec::new(),
        };
        let cube = render_iq(&tracks, &boresight_node(0.0), &wf, f64::INFINITY, 0).unwrap();
        assert!(cube.data.iter().all(|z| z.re == 0.0 && z.im == 0.0));
        let tracks = point([2.0, 0.0, 0.0], [0.0; 3], 8, wf.chirp_rate());
        let cube = render_iq(&ScattererTracks { parts: Vec::new(), ..tracks }, &boresight_node(0.0), &wf, f64::INFINITY, 0)
            .unwrap();
        assert!(cube.data.is_empty());
    }

    #[test]
    fn far_scatterer_is_rejected() {
        let wf = RadarWaveform::default();
        let tracks = point([wf.max_range() + 1.0, 0.0, 0.0], [0.0; 3], 2, wf.chirp_rate());
        let err = render_iq(&tracks, &boresight_node(0.0), &wf, f64::INFINITY, 0).unwrap_err();
        assert!(err.to_string().contains("range exceeds sampling limit"), "{err}");
    }

    fn unit_power_cube(len: usize) -> IqCube {
        let mut cube = IqCube::zeros(len / 64, 64);
        for (i, z) in cube.data.iter_mut().enumerate() {
            *z = Complex32::from_polar(1.0, 0.37 * i as f32);
        }
        cube
    }

    fn added_noise_power(snr_db: f64) -> f64 {
        let clean = unit_power_cube(1 << 16);
        let noisy = apply_trial_noise(clean.clone(), snr_db, 11);
        let diff: f64 = noisy
            .data
            .iter()
            .zip(&clean.data)
            .map(|(a, b)| (a - b).norm_sqr() as f64)
            .sum();
        diff / clean.data.len() as f64
    }

    #[test]
    fn trial_noise_power_follows_requested_snr() {
        let p20 = added_noise_power(20.0);
        assert!((p20 / 0.01 - 1.0).abs() < 0.12, "noise power {p20}");
        let p0 = added_noise_power(0.0);
        assert!((p0 - 1.0).abs() < 0.12, "noise power {p0}");
        let empty = apply_trial_noise(IqCube::zeros(0, 160), 10.0, 1);
        assert!(empty.data.is_empty());
    }

    #[test]
    fn trial_noise_snr_within_half_a_db() {
        let clean = unit_power_cube(1 << 16);
        for snr in [-5.0, 10.0, 30.0] {
            let noisy = apply_trial_noise(clean.clone(), snr, 5);
            let noise: f64 = noisy
                .data
                .iter()
                .zip(&clean.data)
                .map(|(a, b)| (a - b).norm_sqr() as f64)
                .sum::<f64>()
                / clean.data.len() as f64;
            let measured = 10.0 * (clean.mean_power() / noise).log10();
            assert!((measured - snr).abs() < 0.5, "{measured} vs {snr}");
        }
    }

    #[test]
    fn each_bout_has_one_more_heel_strike_than_strides() {
        let (_, truth) = synthesize_walker(
            &WalkerProfile::healthy_aged(),
            &TrialScript::continuous(3, Pace::Normal),
            1600.0,
            9,
        )
        .unwrap();
        assert_eq!(truth.segments.len(), 3);
        for seg in &truth.segments {
            for foot in [Foot::Left, Foot::Right] {
                let hs: Vec<f64> = truth
                    .events
                    .iter()
                    .filter(|e| e.kind == EventKind::HeelStrike && e.foot == foot && seg.contains(e.time))
                    .map(|e| e.time)
                    .collect();
                let strides = hs.windows(2).count();
                assert_eq!(hs.len(), strides + 1);
                assert!(hs.len() >= 2);
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn stance_plus_swing_is_stride(seed in 0u64..1000, variability in 0.0f64..0.05) {
            let p = WalkerProfile { stride_variability: variability, ..WalkerProfile::healthy_young() };
            let (_, truth) = synthesize_walker(&p, &TrialScript::continuous(2, Pace::Normal), 1600.0, seed).unwrap();
            for foot in [Foot::Left, Foot::Right] {
                let (hs, to) = foot_events(&truth, foot);
                for w in hs.windows(2) {
                    let inside: Vec<f64> = to.iter().copied().filter(|&t| t > w[0] && t < w[1]).collect();
                    if let [t] = inside.as_slice() {
                        let (stance, swing) = (t - w[0], w[1] - t);
                        prop_assert!((stance + swing - (w[1] - w[0])).abs() < 1e-12);
                        prop_assert!(stance > 0.0 && swing > 0.0);
                    }
                }
            }
        }

        #[test]
        fn rendering_is_linear(
            r1 in 1.0f64..6.0, r2 in 1.0f64..6.0, v1 in -3.0f64..3.0, v2 in -3.0f64..3.0,
        ) {
            let wf = RadarWaveform::default();
            let node = boresight_node(0.2);
            let a = point([r1, 0.1, 0.5], [v1, 0.0, 0.0], 16, wf.chirp_rate());
            let b = point([r2, -0.2, 1.0], [v2, 0.0, 0.0], 16, wf.chirp_rate());
            let ab = a.merged(&b).unwrap();
            let ra = render_iq(&a, &node, &wf, f64::INFINITY, 0).unwrap();
            let rb = render_iq(&b, &node, &wf, f64::INFINITY, 0).unwrap();
            let rab = render_iq(&ab, &node, &wf, f64::INFINITY, 0).unwrap();
            for ((x, y), z) in ra.data.iter().zip(&rb.data).zip(&rab.data) {
                prop_assert!((x + y - z).norm() < 1e-5);
            }
        }
    }
}
