//! FFT design checks and one-sided power spectra.
//!
//! The timing relations used throughout:
//!
//! * span of one block, first sample to last: `T = (N - 1) / s`
//! * frequency resolution: `df = 1 / T = s / (N - 1)`
//! * highest component: `f_max = N * df / 2`
//!
//! Blocks are contiguous and non-overlapping, so the solver cadence is `N / s`,
//! slightly longer than `T`.

use std::f64::consts::PI;
use std::fmt;

use crate::block::SampleBlock;
use crate::error::{Error, Result};

/// Resolution should be finer than about this many Hz.
pub const MAX_RESOLUTION_HZ: f64 = 40.0;
/// A block should span no more than about this many seconds.
pub const MAX_PERIOD_S: f64 = 0.025;
/// The top component should reach at least about this many Hz.
pub const MIN_MAX_FREQ_HZ: f64 = 2800.0;
/// Soft-limit multiplier applied to the guidelines' "about".
pub const DEFAULT_TOLERANCE: f64 = 1.15;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FftDesign {
    pub n_samples: usize,
    pub sample_rate: f64,
    /// `(N - 1) / s`, seconds.
    pub period_span: f64,
    /// `s / (N - 1)`, Hz.
    pub resolution: f64,
    /// `N / (N - 1) * s / 2`, Hz.
    pub max_freq: f64,
    /// `N / s`, seconds between consecutive blocks.
    pub cycle_period: f64,
}

impl FftDesign {
    /// Number of one-sided spectrum bins, `N/2 + 1`.
    pub fn bins(&self) -> usize {
        self.n_samples / 2 + 1
    }

    pub fn bin_freq(&self, j: usize) -> f64 {
        j as f64 * self.resolution
    }
}

pub fn design_fft(n_samples: usize, sample_rate: f64) -> Result<FftDesign> {
    if n_samples < 2 || !n_samples.is_power_of_two() {
        return Err(Error::Design(format!(
            "N = {n_samples} is not a power of two >= 2"
        )));
    }
    if !(sample_rate > 0.0 && sample_rate.is_finite()) {
        return Err(Error::Design(format!(
            "sample rate {sample_rate} must be positive"
        )));
    }
    let n = n_samples as f64;
    let resolution = sample_rate / (n - 1.0);
    Ok(FftDesign {
        n_samples,
        sample_rate,
        period_span: (n - 1.0) / sample_rate,
        resolution,
        max_freq: n / (n - 1.0) * sample_rate / 2.0,
        cycle_period: n / sample_rate,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Marginal,
    Fail,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "pass",
            Verdict::Marginal => "marginal",
            Verdict::Fail => "fail",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Bound {
    AtMost,
    AtLeast,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GuidelineCheck {
    pub name: &'static str,
    pub value: f64,
    pub limit: f64,
    pub bound: Bound,
    pub unit: &'static str,
    pub verdict: Verdict,
}

impl GuidelineCheck {
    fn evaluate(
        name: &'static str,
        value: f64,
        limit: f64,
        bound: Bound,
        unit: &'static str,
        tolerance: f64,
    ) -> Self {
        let verdict = match bound {
            Bound::AtMost if value <= limit => Verdict::Pass,
            Bound::AtMost if value <= limit * tolerance => Verdict::Marginal,
            Bound::AtLeast if value >= limit => Verdict::Pass,
            Bound::AtLeast if value >= limit / tolerance => Verdict::Marginal,
            _ => Verdict::Fail,
        };
        Self {
            name,
            value,
            limit,
            bound,
            unit,
            verdict,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GuidelineReport {
    pub resolution: GuidelineCheck,
    pub period: GuidelineCheck,
    pub max_freq: GuidelineCheck,
}

impl GuidelineReport {
    pub fn checks(&self) -> [&GuidelineCheck; 3] {
        [&self.resolution, &self.period, &self.max_freq]
    }

    pub fn has_failure(&self) -> bool {
        self.checks().iter().any(|c| c.verdict == Verdict::Fail)
    }
}

/// Grades a design against the three guidelines.
///
/// A guideline passes when met outright and is marginal when met only after
/// relaxing its limit by `tolerance` (which must be at least 1).
pub fn validate_design(design: &FftDesign, tolerance: f64) -> GuidelineReport {
    let tolerance = tolerance.max(1.0);
    GuidelineReport {
        resolution: GuidelineCheck::evaluate(
            "resolution",
            design.resolution,
            MAX_RESOLUTION_HZ,
            Bound::AtMost,
            "Hz",
            tolerance,
        ),
        period: GuidelineCheck::evaluate(
            "period",
            design.period_span * 1e3,
            MAX_PERIOD_S * 1e3,
            Bound::AtMost,
            "ms",
            tolerance,
        ),
        max_freq: GuidelineCheck::evaluate(
            "max_freq",
            design.max_freq,
            MIN_MAX_FREQ_HZ,
            Bound::AtLeast,
            "Hz",
            tolerance,
        ),
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Window {
    #[default]
    Rectangular,
    Hann,
}

/// One-sided power spectrum of a single block.
///
/// `powers[j]` is the power at `j * resolution`. A unit-amplitude sine sitting
/// exactly on bin `j` puts 0.5 into `powers[j]`, and the bins sum to the mean
/// square of the (unwindowed) block.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum {
    pub powers: Vec<f64>,
    pub resolution: f64,
}

impl Spectrum {
    pub fn len(&self) -> usize {
        self.powers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.powers.is_empty()
    }

    pub fn bin_freq(&self, j: usize) -> f64 {
        j as f64 * self.resolution
    }

    pub fn total_power(&self) -> f64 {
        self.powers.iter().sum()
    }
}

pub fn compute_spectrum(block: &SampleBlock, design: &FftDesign) -> Result<Spectrum> {
    compute_spectrum_windowed(block, design, Window::Rectangular)
}

pub fn compute_spectrum_windowed(
    block: &SampleBlock,
    design: &FftDesign,
    window: Window,
) -> Result<Spectrum> {
    let n = design.n_samples;
    if block.len() != n {
        return Err(Error::Processing(format!(
            "block has {} samples, design expects {n}",
            block.len()
        )));
    }

    let mut re: Vec<f64> = block.samples().to_vec();
    let mut im = vec![0.0; n];
    let mut gain = 1.0;
    if window == Window::Hann {
        let mut sum_sq = 0.0;
        for (i, x) in re.iter_mut().enumerate() {
            let w = 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos();
            *x *= w;
            sum_sq += w * w;
        }
        gain = sum_sq / n as f64;
    }

    fft_in_place(&mut re, &mut im);

    let scale = 1.0 / ((n * n) as f64 * gain);
    let half = n / 2;
    let powers = (0..=half)
        .map(|j| {
            let p = (re[j] * re[j] + im[j] * im[j]) * scale;
            if j == 0 || j == half {
                p
            } else {
                2.0 * p
            }
        })
        .collect();

    Ok(Spectrum {
        powers,
        resolution: design.resolution,
    })
}

/// Iterative radix-2 decimation-in-time FFT. `re.len()` must be a power of two.
pub fn fft_in_place(re: &mut [f64], im: &mut [f64]) {
    let n = re.len();
    debug_assert_eq!(n, im.len());
    debug_assert!(n.is_power_of_two());
    if n < 2 {
        return;
    }

    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = i.reverse_bits() >> (usize::BITS - bits);
        if j > i {
            re.swap(i, j);
            im.swap(i, j);
        }
    }

    let mut len = 2;
    while len <= n {
        let half = len / 2;
        let step = -2.0 * PI / len as f64;
        for k in 0..half {
            let (sin, cos) = (step * k as f64).sin_cos();
            for start in (0..n).step_by(len) {
                let a = start + k;
                let b = a + half;
                let tr = re[b] * cos - im[b] * sin;
                let ti = re[b] * sin + im[b] * cos;
                re[b] = re[a] - tr;
                im[b] = im[a] - ti;
                re[a] += tr;
                im[a] += ti;
            }
        }
        len <<= 1;
    }
}
