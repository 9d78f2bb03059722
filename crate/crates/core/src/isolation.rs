//! Reference subtraction: strips the device's own output from the microphone
//! signal so that only ambient noise reaches the meter.
//!
//! The phase correlator picks the integer lag that maximizes the cross
//! correlation of mic against reference. The amplitude correlator then picks
//! the gain that minimizes the energy of `mic - gain * shifted_ref`, which is
//! the least-squares ratio `<mic, ref> / <ref, ref>`. Phase always runs first.

use crate::block::SampleBlock;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum CalibrationMode {
    /// Correlate once on the first usable block, then reuse.
    #[default]
    StartupOnly,
    /// Re-correlate every block.
    Continuous,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IsolationSettings {
    pub max_lag: usize,
    pub gain_lo: f64,
    pub gain_hi: f64,
    /// Weight of each new gain estimate in continuous mode.
    pub smoothing: f64,
    pub mode: CalibrationMode,
}

impl Default for IsolationSettings {
    fn default() -> Self {
        Self {
            max_lag: 8,
            gain_lo: 0.25,
            gain_hi: 4.0,
            smoothing: 0.2,
            mode: CalibrationMode::StartupOnly,
        }
    }
}

impl IsolationSettings {
    pub fn validate(&self, block_len: usize) -> Result<()> {
        if self.max_lag >= (block_len / 4).max(1) {
            return Err(Error::key(
                "isolation.max_lag",
                format!("must be below N/4 = {}", block_len / 4),
            ));
        }
        if !(self.gain_lo > 0.0 && self.gain_lo <= 1.0) {
            return Err(Error::key("isolation.gain_lo", "must lie in (0, 1]"));
        }
        if !(self.gain_hi >= 1.0 && self.gain_hi.is_finite()) {
            return Err(Error::key("isolation.gain_hi", "must be finite and >= 1"));
        }
        if !(self.smoothing > 0.0 && self.smoothing <= 1.0) {
            return Err(Error::key("isolation.smoothing", "must lie in (0, 1]"));
        }
        Ok(())
    }
}

/// Lag and gain that line the reference up with the microphone.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Calibration {
    pub lag: i32,
    pub gain: f64,
    pub mode: CalibrationMode,
    /// False until the correlators have produced a usable estimate.
    pub calibrated: bool,
}

impl Calibration {
    /// Factory setting: zero lag, unit gain.
    pub fn factory(mode: CalibrationMode) -> Self {
        Self {
            lag: 0,
            gain: 1.0,
            mode,
            calibrated: false,
        }
    }

    pub fn fixed(lag: i32, gain: f64, mode: CalibrationMode) -> Self {
        Self {
            lag,
            gain,
            mode,
            calibrated: true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GainEstimate {
    pub gain: f64,
    /// The reference carried no energy; `gain` is the factory value.
    pub degenerate: bool,
}

/// Reference samples addressed relative to the current block start. Indices
/// before the retained history or past the block end read as zero.
#[derive(Clone, Copy)]
struct RefView<'a> {
    ext: &'a [f64],
    offset: usize,
}

impl<'a> RefView<'a> {
    fn block(samples: &'a [f64]) -> Self {
        Self {
            ext: samples,
            offset: 0,
        }
    }

    #[inline]
    fn at(&self, k: isize) -> f64 {
        let idx = self.offset as isize + k;
        if idx < 0 {
            0.0
        } else {
            self.ext.get(idx as usize).copied().unwrap_or(0.0)
        }
    }
}

/// Candidate lags in tie-break order: 0, -1, +1, -2, +2, ...
fn lag_order(max_lag: usize) -> impl Iterator<Item = i32> {
    std::iter::once(0).chain((1..=max_lag as i32).flat_map(|k| [-k, k]))
}

fn best_lag(mic: &[f64], reference: RefView<'_>, max_lag: usize) -> i32 {
    let mut best = (0, f64::NEG_INFINITY);
    for lag in lag_order(max_lag) {
        let corr: f64 = mic
            .iter()
            .enumerate()
            .map(|(i, m)| m * reference.at(i as isize - lag as isize))
            .sum();
        if corr > best.1 {
            best = (lag, corr);
        }
    }
    best.0
}

fn least_squares_gain(
    mic: &[f64],
    reference: RefView<'_>,
    lag: i32,
    gain_lo: f64,
    gain_hi: f64,
) -> GainEstimate {
    let (mut cross, mut energy) = (0.0, 0.0);
    for (i, m) in mic.iter().enumerate() {
        let r = reference.at(i as isize - lag as isize);
        cross += m * r;
        energy += r * r;
    }
    if energy == 0.0 {
        return GainEstimate {
            gain: 1.0,
            degenerate: true,
        };
    }
    GainEstimate {
        gain: (cross / energy).clamp(gain_lo, gain_hi),
        degenerate: false,
    }
}

fn subtract(mic: &[f64], reference: RefView<'_>, cal: &Calibration) -> Vec<f64> {
    mic.iter()
        .enumerate()
        .map(|(i, m)| m - cal.gain * reference.at(i as isize - cal.lag as isize))
        .collect()
}

/// Lag in `[-max_lag, max_lag]` maximizing `sum mic[i] * ref[i - lag]`.
///
/// Ties go to the smallest `|lag|`, then to the negative side, so a flat
/// correlation returns the factory lag of zero.
pub fn phase_correlate(mic: &SampleBlock, reference: &SampleBlock, max_lag: usize) -> Result<i32> {
    mic.check_compatible(reference)?;
    if max_lag >= (mic.len() / 4).max(1) {
        return Err(Error::Config(format!(
            "max_lag {max_lag} must be below N/4 = {}",
            mic.len() / 4
        )));
    }
    Ok(best_lag(
        mic.samples(),
        RefView::block(reference.samples()),
        max_lag,
    ))
}

/// Least-squares gain of `aligned_ref` against `mic`, clamped to the range.
pub fn amplitude_correlate(
    mic: &SampleBlock,
    aligned_ref: &SampleBlock,
    gain_lo: f64,
    gain_hi: f64,
) -> Result<GainEstimate> {
    mic.check_compatible(aligned_ref)?;
    if !(gain_lo > 0.0 && gain_lo <= 1.0 && gain_hi >= 1.0) {
        return Err(Error::Config(format!(
            "gain range [{gain_lo}, {gain_hi}] must bracket 1"
        )));
    }
    Ok(least_squares_gain(
        mic.samples(),
        RefView::block(aligned_ref.samples()),
        0,
        gain_lo,
        gain_hi,
    ))
}

/// `ref` delayed by `lag` samples, zero-filled.
pub fn shift_block(reference: &SampleBlock, lag: i32) -> SampleBlock {
    let view = RefView::block(reference.samples());
    let samples = (0..reference.len())
        .map(|i| view.at(i as isize - lag as isize))
        .collect();
    SampleBlock::new(samples, reference.rate()).expect("shift preserves block validity")
}

/// `mic[i] - gain * ref[i - lag]`, with reference samples outside the block
/// taken as zero.
pub fn subtract_reference(
    mic: &SampleBlock,
    reference: &SampleBlock,
    cal: &Calibration,
) -> Result<SampleBlock> {
    mic.check_compatible(reference)?;
    let out = subtract(mic.samples(), RefView::block(reference.samples()), cal);
    SampleBlock::new(out, mic.rate())
}

fn update_calibration(
    mic: &[f64],
    reference: RefView<'_>,
    cal: &Calibration,
    settings: &IsolationSettings,
) -> Calibration {
    let needs_update = match cal.mode {
        CalibrationMode::Continuous => true,
        CalibrationMode::StartupOnly => !cal.calibrated,
    };
    if !needs_update {
        return *cal;
    }
    let lag = best_lag(mic, reference, settings.max_lag);
    let est = least_squares_gain(mic, reference, lag, settings.gain_lo, settings.gain_hi);
    if est.degenerate {
        return *cal;
    }
    let gain = if cal.calibrated && cal.mode == CalibrationMode::Continuous {
        cal.gain + settings.smoothing * (est.gain - cal.gain)
    } else {
        est.gain
    };
    Calibration {
        lag,
        gain,
        mode: cal.mode,
        calibrated: true,
    }
}

/// Correlates (when the mode calls for it) and subtracts.
///
/// With no reference the microphone block passes through untouched, which is
/// how a dedicated noise microphone is handled.
pub fn isolate_noise(
    mic: &SampleBlock,
    reference: Option<&SampleBlock>,
    cal: &Calibration,
    settings: &IsolationSettings,
) -> Result<(SampleBlock, Calibration)> {
    let Some(reference) = reference else {
        return Ok((mic.clone(), *cal));
    };
    mic.check_compatible(reference)?;
    settings.validate(mic.len())?;
    let view = RefView::block(reference.samples());
    let cal = update_calibration(mic.samples(), view, cal, settings);
    let out = subtract(mic.samples(), view, &cal);
    Ok((SampleBlock::new(out, mic.rate())?, cal))
}

/// Streaming isolator for one mic/reference pair.
///
/// Keeps the tail of the previous reference block so that a lagged reference
/// reaches back into real samples instead of zeros at block starts.
#[derive(Clone, Debug)]
pub struct NoiseIsolator {
    settings: IsolationSettings,
    calibration: Calibration,
    history: Vec<f64>,
    scratch: Vec<f64>,
}

impl NoiseIsolator {
    pub fn new(settings: IsolationSettings) -> Self {
        Self {
            settings,
            calibration: Calibration::factory(settings.mode),
            history: Vec::new(),
            scratch: Vec::new(),
        }
    }

    pub fn calibration(&self) -> &Calibration {
        &self.calibration
    }

    pub fn process(&mut self, mic: &SampleBlock, reference: Option<&SampleBlock>) -> Result<SampleBlock> {
        let Some(reference) = reference else {
            return Ok(mic.clone());
        };
        mic.check_compatible(reference)?;
        self.settings.validate(mic.len())?;

        self.scratch.clear();
        self.scratch.extend_from_slice(&self.history);
        self.scratch.extend_from_slice(reference.samples());
        let view = RefView {
            ext: &self.scratch,
            offset: self.history.len(),
        };
        self.calibration = update_calibration(mic.samples(), view, &self.calibration, &self.settings);
        let out = subtract(mic.samples(), view, &self.calibration);

        let keep = self.settings.max_lag.min(reference.len());
        self.history.clear();
        self.history
            .extend_from_slice(&reference.samples()[reference.len() - keep..]);
        SampleBlock::new(out, mic.rate())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const RATE: f64 = 5600.0;

    fn white(rng: &mut ChaCha8Rng, n: usize, amp: f64) -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(-amp..amp)).collect()
    }

    fn block(v: Vec<f64>) -> SampleBlock {
        SampleBlock::new(v, RATE).unwrap()
    }

    /// Exhaustive scan: correlation at every lag, argmax with the same
    /// tie-break written out longhand.
    fn scan_lag(mic: &[f64], r: &[f64], max_lag: i32) -> i32 {
        let n = mic.len() as i32;
        let mut scores = Vec::new();
        for lag in -max_lag..=max_lag {
            let mut c = 0.0;
            for i in 0..n {
                let j = i - lag;
                if (0..n).contains(&j) {
                    c += mic[i as usize] * r[j as usize];
                }
            }
            scores.push((lag, c));
        }
        let max = scores.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
        scores
            .into_iter()
            .filter(|s| s.1 == max)
            .map(|s| s.0)
            .min_by_key(|&l| (l.abs(), l > 0))
            .unwrap()
    }

    fn grid_best_gain(mic: &[f64], r: &[f64], lo: f64, hi: f64) -> (f64, f64) {
        let mut best = (lo, f64::INFINITY);
        let steps = ((hi - lo) / 0.001).round() as usize;
        for k in 0..=steps {
            let g = lo + k as f64 * 0.001;
            let e: f64 = mic.iter().zip(r).map(|(m, x)| (m - g * x).powi(2)).sum();
            if e < best.1 {
                best = (g, e);
            }
        }
        best
    }

    #[test]
    fn finds_shifted_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r = block(white(&mut rng, 128, 1.0));
        let mic = shift_block(&r, 3);
        assert_eq!(phase_correlate(&mic, &r, 8).unwrap(), 3);
        assert_eq!(scan_lag(mic.samples(), r.samples(), 8), 3);
    }

    #[test]
    fn identity_and_flat_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let r = block(white(&mut rng, 128, 1.0));
        assert_eq!(phase_correlate(&r, &r, 8).unwrap(), 0);
        let zero = SampleBlock::zeros(128, RATE).unwrap();
        assert_eq!(phase_correlate(&r, &zero, 8).unwrap(), 0);
    }

    #[test]
    fn phase_errors() {
        let a = SampleBlock::zeros(128, RATE).unwrap();
        let b = SampleBlock::zeros(64, RATE).unwrap();
        assert!(matches!(phase_correlate(&a, &b, 8), Err(Error::Config(_))));
        assert!(phase_correlate(&a, &a, 32).is_err());
    }

    #[test]
    fn gain_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let r = block(white(&mut rng, 128, 1.0));
        let half = block(r.samples().iter().map(|x| 0.5 * x).collect());
        assert_eq!(amplitude_correlate(&half, &r, 0.25, 4.0).unwrap().gain, 0.5);
        assert_eq!(amplitude_correlate(&r, &r, 0.25, 4.0).unwrap().gain, 1.0);

        let zero = SampleBlock::zeros(128, RATE).unwrap();
        let est = amplitude_correlate(&r, &zero, 0.25, 4.0).unwrap();
        assert!(est.degenerate);
        assert_eq!(est.gain, 1.0);
    }

    #[test]
    fn noisy_gain_close_to_truth() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let r = white(&mut rng, 128, 1.0);
        let noise = white(&mut rng, 128, 0.02);
        let mic: Vec<f64> = r.iter().zip(&noise).map(|(x, n)| 0.7 * x + n).collect();
        let est = amplitude_correlate(&block(mic.clone()), &block(r.clone()), 0.25, 4.0).unwrap();
        let (grid, _) = grid_best_gain(&mic, &r, 0.25, 4.0);
        assert!((est.gain - 0.7).abs() <= 0.02);
        assert!((est.gain - grid).abs() <= 0.0005 + 1e-12);
    }

    #[test]
    fn gain_is_clamped() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let r = block(white(&mut rng, 128, 1.0));
        let big = block(r.samples().iter().map(|x| 10.0 * x).collect());
        assert_eq!(amplitude_correlate(&big, &r, 0.25, 4.0).unwrap().gain, 4.0);
    }

    #[test]
    fn subtraction_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let r = block(white(&mut rng, 128, 1.0));
        let out = subtract_reference(&r, &r, &Calibration::fixed(0, 1.0, CalibrationMode::StartupOnly)).unwrap();
        assert!(out.samples().iter().all(|&x| x == 0.0));

        let zero = SampleBlock::zeros(128, RATE).unwrap();
        let out = subtract_reference(&r, &zero, &Calibration::factory(CalibrationMode::StartupOnly)).unwrap();
        assert_eq!(out, r);
    }

    #[test]
    fn recovers_injected_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let r = block(white(&mut rng, 128, 1.0));
        let n = white(&mut rng, 128, 0.05);
        let shifted = shift_block(&r, 3);
        let mic: Vec<f64> = shifted.samples().iter().zip(&n).map(|(x, e)| 0.5 * x + e).collect();
        let mic = block(mic);
        let cal = Calibration::fixed(3, 0.5, CalibrationMode::StartupOnly);
        let out = subtract_reference(&mic, &r, &cal).unwrap();
        let resid: f64 = out.samples().iter().zip(&n).map(|(a, b)| (a - b).powi(2)).sum();
        assert!(resid < 1e-9 * mic.energy());

        let (out2, cal2) = isolate_noise(&mic, Some(&r), &cal, &IsolationSettings::default()).unwrap();
        assert_eq!(cal2, cal);
        assert_eq!(out2, out);
    }

    #[test]
    fn continuous_mode_tracks_drift() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let settings = IsolationSettings {
            mode: CalibrationMode::Continuous,
            ..Default::default()
        };
        let mut cal = Calibration::factory(CalibrationMode::Continuous);
        for (k, true_lag) in [0, 0, 1, 2, 2].into_iter().enumerate() {
            let r = block(white(&mut rng, 128, 1.0));
            let mic = shift_block(&r, true_lag);
            let (_, next) = isolate_noise(&mic, Some(&r), &cal, &settings).unwrap();
            assert_eq!(next.lag, scan_lag(mic.samples(), r.samples(), 8), "block {k}");
            assert_eq!(next.lag, true_lag);
            cal = next;
        }
    }

    #[test]
    fn continuous_gain_is_smoothed() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let settings = IsolationSettings {
            mode: CalibrationMode::Continuous,
            ..Default::default()
        };
        let mut cal = Calibration::fixed(0, 1.0, CalibrationMode::Continuous);
        let r = block(white(&mut rng, 128, 1.0));
        let mic = block(r.samples().iter().map(|x| 0.5 * x).collect());
        let (_, next) = isolate_noise(&mic, Some(&r), &cal, &settings).unwrap();
        assert!((next.gain - 0.9).abs() < 1e-12);
        for _ in 0..100 {
            cal = isolate_noise(&mic, Some(&r), &cal, &settings).unwrap().1;
        }
        assert!((cal.gain - 0.5).abs() < 1e-6);
    }

    #[test]
    fn startup_only_calibrates_once() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let settings = IsolationSettings::default();
        let r = block(white(&mut rng, 128, 1.0));
        let mic = block(shift_block(&r, 2).samples().iter().map(|x| 1.5 * x).collect());
        let (_, cal) = isolate_noise(&mic, Some(&r), &Calibration::factory(CalibrationMode::StartupOnly), &settings).unwrap();
        assert_eq!(cal.lag, 2);
        assert!((cal.gain - 1.5).abs() < 1e-12);

        let r2 = block(white(&mut rng, 128, 1.0));
        let mic2 = shift_block(&r2, -4);
        let (_, cal2) = isolate_noise(&mic2, Some(&r2), &cal, &settings).unwrap();
        assert_eq!(cal2, cal);
    }

    #[test]
    fn bypass_passes_mic_through() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mic = block(white(&mut rng, 128, 1.0));
        let cal = Calibration::fixed(3, 0.5, CalibrationMode::Continuous);
        let (out, cal2) = isolate_noise(&mic, None, &cal, &IsolationSettings::default()).unwrap();
        assert_eq!(out, mic);
        assert_eq!(cal2, cal);
    }

    #[test]
    fn streaming_isolator_uses_history() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let stream = white(&mut rng, 128 * 6, 1.0);
        let mut delayed = vec![0.0; 3];
        delayed.extend(stream.iter().map(|x| 0.5 * x));
        let mut iso = NoiseIsolator::new(IsolationSettings::default());
        for b in 0..6 {
            let r = block(stream[b * 128..(b + 1) * 128].to_vec());
            let m = block(delayed[b * 128..(b + 1) * 128].to_vec());
            let out = iso.process(&m, Some(&r)).unwrap();
            assert_eq!(iso.calibration().lag, 3);
            assert!(out.energy() <= 1e-20 * m.energy(), "block {b}");
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn gain_beats_grid(seed in any::<u64>(), lag in -8i32..=8, g in 0.25f64..4.0) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let r = block(white(&mut rng, 128, 1.0));
                let noise = white(&mut rng, 128, 0.1);
                let shifted = shift_block(&r, lag);
                let mic: Vec<f64> = shifted.samples().iter().zip(&noise).map(|(x, n)| g * x + n).collect();
                let est = amplitude_correlate(&block(mic.clone()), &shifted, 0.25, 4.0).unwrap();
                let e = |gain: f64| -> f64 {
                    mic.iter().zip(shifted.samples()).map(|(m, x)| (m - gain * x).powi(2)).sum()
                };
                let (_, grid_e) = grid_best_gain(&mic, shifted.samples(), 0.25, 4.0);
                prop_assert!(e(est.gain) <= grid_e * (1.0 + 1e-12));
            }

            #[test]
            fn phase_matches_exhaustive_scan(seed in any::<u64>(), lag in -8i32..=8, noise_amp in 0.0f64..2.0) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let r = block(white(&mut rng, 128, 1.0));
                let noise = white(&mut rng, 128, noise_amp.max(1e-9));
                let mic: Vec<f64> = shift_block(&r, lag).samples().iter().zip(&noise).map(|(x, n)| x + n).collect();
                prop_assert_eq!(
                    phase_correlate(&block(mic.clone()), &r, 8).unwrap(),
                    scan_lag(&mic, r.samples(), 8)
                );
            }

            #[test]
            fn noiseless_cancellation(seed in any::<u64>(), lag in -8i32..=8, g in 0.25f64..4.0) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let r = block(white(&mut rng, 128, 1.0));
                let mic = block(shift_block(&r, lag).samples().iter().map(|x| g * x).collect());
                let (out, cal) = isolate_noise(&mic, Some(&r), &Calibration::factory(CalibrationMode::Continuous), &IsolationSettings { mode: CalibrationMode::Continuous, ..Default::default() }).unwrap();
                prop_assert_eq!(cal.lag, lag);
                prop_assert!(out.energy() <= 1e-6 * mic.energy());
            }
        }
    }
}
