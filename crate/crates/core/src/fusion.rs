//! Frame-wise selection between two nodes at the same height.

use serde::{Deserialize, Serialize};

use crate::dsp::DopplerTimeMatrix;
use crate::series::TimeSeries;
use crate::{Error, Result};

/// Required SNR advantage (dB) before switching away from the current node.
pub const SWITCH_HYSTERESIS_DB: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Near,
    Far,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusedDopplerMatrix {
    pub matrix: DopplerTimeMatrix,
    /// Node each frame was copied from.
    pub provenance: Vec<Source>,
    /// Smoothed SNR of the selected node per frame, dB.
    pub snr_trace: Vec<f64>,
}

impl FusedDopplerMatrix {
    pub fn switch_count(&self) -> usize {
        self.provenance.windows(2).filter(|w| w[0] != w[1]).count()
    }
}

/// Mirrors every spectrum about 0 Hz.
pub fn doppler_flip(dtm: &DopplerTimeMatrix) -> Result<DopplerTimeMatrix> {
    if !dtm.is_symmetric() {
        return Err(Error::AsymmetricDopplerAxis);
    }
    let mut power = Vec::with_capacity(dtm.power.len());
    for f in 0..dtm.frames {
        power.extend(dtm.frame(f).iter().rev());
    }
    Ok(dtm.with_power(power))
}

fn check_aligned(a: &DopplerTimeMatrix, b: &DopplerTimeMatrix) -> Result<()> {
    let tol = 1e-9 * (1.0 + a.start_time.abs());
    if a.frames != b.frames || a.bins != b.bins {
        return Err(Error::Misaligned(format!(
            "shapes {}x{} and {}x{}",
            a.frames, a.bins, b.frames, b.bins
        )));
    }
    if (a.start_time - b.start_time).abs() > tol || a.frame_rate != b.frame_rate {
        return Err(Error::Misaligned("time axes differ".into()));
    }
    if a.doppler_axis != b.doppler_axis {
        return Err(Error::Misaligned("Doppler axes differ".into()));
    }
    Ok(())
}

/// Copies each frame from whichever node has the higher smoothed SNR. The
/// selection only changes when the other node leads by more than
/// [`SWITCH_HYSTERESIS_DB`]; the first frame goes to the higher node, or to
/// the near node on a tie. `far` must already be flipped.
pub fn combine(
    near: &DopplerTimeMatrix,
    far: &DopplerTimeMatrix,
    snr_near: &TimeSeries,
    snr_far: &TimeSeries,
) -> Result<FusedDopplerMatrix> {
    check_aligned(near, far)?;
    if snr_near.len() != near.frames || snr_far.len() != far.frames {
        return Err(Error::Misaligned(format!(
            "SNR traces have {} and {} frames, matrices have {}",
            snr_near.len(),
            snr_far.len(),
            near.frames
        )));
    }
    let mut provenance = Vec::with_capacity(near.frames);
    let mut snr_trace = Vec::with_capacity(near.frames);
    let mut power = Vec::with_capacity(near.power.len());
    let mut current = None;
    for f in 0..near.frames {
        let (a, b) = (snr_near.values[f], snr_far.values[f]);
        let choice = match current {
            None if b > a => Source::Far,
            None => Source::Near,
            Some(Source::Near) if b > a + SWITCH_HYSTERESIS_DB => Source::Far,
            Some(Source::Far) if a > b + SWITCH_HYSTERESIS_DB => Source::Near,
            Some(s) => s,
        };
        current = Some(choice);
        let (src, snr) = match choice {
            Source::Near => (near, a),
            Source::Far => (far, b),
        };
        power.extend_from_slice(src.frame(f));
        provenance.push(choice);
        snr_trace.push(snr);
    }
    Ok(FusedDopplerMatrix {
        matrix: near.with_power(power),
        provenance,
        snr_trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn axis(bins: usize, df: f64) -> Vec<f64> {
        let half = (bins / 2) as f64;
        (0..bins).map(|k| (k as f64 - half) * df).collect()
    }

    fn matrix(frames: usize, power: Vec<f32>) -> DopplerTimeMatrix {
        let bins = power.len() / frames;
        DopplerTimeMatrix {
            frames,
            bins,
            power,
            doppler_axis: axis(bins, 6.25),
            start_time: 0.0,
            frame_rate: 100.0,
            window_length: 0.05,
        }
    }

    /// One-bin ridge at `doppler` Hz in every frame.
    fn ridge(frames: usize, bins: usize, doppler: f64, level: f32) -> DopplerTimeMatrix {
        let ax = axis(bins, 6.25);
        let k = ax.iter().position(|&f| (f - doppler).abs() < 1e-9).unwrap();
        let mut power = vec![0.01; frames * bins];
        for f in 0..frames {
            power[f * bins + k] = level;
        }
        matrix(frames, power)
    }

    fn series(values: Vec<f64>) -> TimeSeries {
        TimeSeries::new(0.0, 100.0, values)
    }

    #[test]
    fn flip_mirrors_a_ridge() {
        let m = ridge(5, 65, 100.0, 1.0);
        let flipped = doppler_flip(&m).unwrap();
        for f in 0..5 {
            assert_eq!(flipped.doppler_axis[flipped.peak_bin(f)], -100.0);
        }
        assert_eq!(flipped.doppler_axis, m.doppler_axis);
    }

    #[test]
    fn symmetric_matrix_is_a_fixed_point() {
        let mut m = ridge(3, 65, 100.0, 1.0);
        for f in 0..3 {
            m.power[f * 65 + 32 - 16] = 1.0;
        }
        assert_eq!(doppler_flip(&m).unwrap(), m);
    }

    #[test]
    fn asymmetric_axis_is_rejected() {
        let mut m = ridge(2, 65, 0.0, 1.0);
        m.doppler_axis[0] -= 1.0;
        assert_eq!(doppler_flip(&m), Err(Error::AsymmetricDopplerAxis));
    }

    #[test]
    fn crossover_switches_once_and_copies_frames() {
        // Node 1 is better for the first 5.5 s, node 2 afterwards.
        let frames = 1000;
        let near = ridge(frames, 65, 100.0, 5.0);
        let far = ridge(frames, 65, 50.0, 7.0);
        let t = |f: usize| f as f64 / 100.0;
        let snr_near = series((0..frames).map(|f| 30.0 - 2.0 * t(f)).collect());
        let snr_far = series((0..frames).map(|f| 8.0 + 2.0 * t(f)).collect());
        let fused = combine(&near, &far, &snr_near, &snr_far).unwrap();
        assert_eq!(fused.switch_count(), 1);
        let switch = fused.provenance.iter().position(|&s| s == Source::Far).unwrap();
        // The far node must lead by the hysteresis margin: 4 t - 22 > 1.
        assert!((t(switch) - 5.75).abs() <= 0.011, "switch at {}", t(switch));
        for f in 0..frames {
            let src = match fused.provenance[f] {
                Source::Near => &near,
                Source::Far => &far,
            };
            assert_eq!(fused.matrix.frame(f), src.frame(f));
        }
    }

    #[test]
    fn abrupt_crossover_switches_at_the_crossing() {
        let frames = 1000;
        let near = ridge(frames, 65, 100.0, 5.0);
        let far = ridge(frames, 65, 50.0, 7.0);
        let before = |f: usize| (f as f64) < 550.0;
        let snr_near = series((0..frames).map(|f| if before(f) { 25.0 } else { 12.0 }).collect());
        let snr_far = series((0..frames).map(|f| if before(f) { 12.0 } else { 25.0 }).collect());
        let fused = combine(&near, &far, &snr_near, &snr_far).unwrap();
        assert_eq!(fused.switch_count(), 1);
        assert!(fused.provenance[..550].iter().all(|&s| s == Source::Near));
        assert!(fused.provenance[550..].iter().all(|&s| s == Source::Far));
        assert_eq!(fused.matrix.time_at(550), 5.5);
    }

    #[test]
    fn identical_inputs_pass_through() {
        let m = ridge(50, 33, 25.0, 3.0);
        let a = series((0..50).map(|f| (f as f64).sin() * 10.0).collect());
        let b = series((0..50).map(|f| (f as f64).cos() * 10.0).collect());
        assert_eq!(combine(&m, &m, &a, &b).unwrap().matrix, m);
    }

    #[test]
    fn exact_tie_keeps_one_source() {
        let near = ridge(80, 33, 25.0, 3.0);
        let far = ridge(80, 33, -25.0, 3.0);
        let snr = series((0..80).map(|f| (f as f64 * 0.3).sin() * 20.0).collect());
        let fused = combine(&near, &far, &snr, &snr).unwrap();
        assert!(fused.provenance.iter().all(|&s| s == Source::Near));
    }

    #[test]
    fn misaligned_inputs_are_rejected() {
        let a = ridge(10, 33, 25.0, 3.0);
        let b = ridge(11, 33, 25.0, 3.0);
        let s = series(vec![0.0; 10]);
        assert!(matches!(combine(&a, &b, &s, &series(vec![0.0; 11])), Err(Error::Misaligned(_))));
        let shifted = DopplerTimeMatrix { start_time: 0.5, ..a.clone() };
        assert!(matches!(combine(&a, &shifted, &s, &s), Err(Error::Misaligned(_))));
        assert!(matches!(combine(&a, &a, &s, &series(vec![0.0; 9])), Err(Error::Misaligned(_))));
    }

    fn crossings(a: &[f64], b: &[f64]) -> usize {
        let sign: Vec<i8> = a
            .iter()
            .zip(b)
            .map(|(x, y)| (x - y).partial_cmp(&0.0).map_or(0, |o| o as i8))
            .filter(|&s| s != 0)
            .collect();
        sign.windows(2).filter(|w| w[0] != w[1]).count()
    }

    proptest! {
        #[test]
        fn flip_is_an_involution(power in prop::collection::vec(0.0f32..1e6, 4 * 31)) {
            let m = matrix(4, power);
            prop_assert_eq!(doppler_flip(&doppler_flip(&m).unwrap()).unwrap(), m);
        }

        #[test]
        fn fused_frames_come_verbatim_from_a_source(
            near_p in prop::collection::vec(0.0f32..10.0, 40 * 9),
            far_p in prop::collection::vec(0.0f32..10.0, 40 * 9),
            snr_a in prop::collection::vec(-5.0f64..40.0, 40),
            snr_b in prop::collection::vec(-5.0f64..40.0, 40),
        ) {
            let near = matrix(40, near_p);
            let far = matrix(40, far_p);
            let fused = combine(&near, &far, &series(snr_a.clone()), &series(snr_b.clone())).unwrap();
            for f in 0..40 {
                let src = match fused.provenance[f] { Source::Near => &near, Source::Far => &far };
                let same = fused.matrix.frame(f).iter().zip(src.frame(f)).all(|(x, y)| x.to_bits() == y.to_bits());
                prop_assert!(same);
            }
            prop_assert!(fused.switch_count() <= crossings(&snr_a, &snr_b));
        }
    }
}
