//! Preferred speech interference level (PSIL) metering.
//!
//! PSIL is the plain arithmetic mean, in dB, of the noise levels in the three
//! octave bands centred on 500, 1000 and 2000 Hz. Anything outside 354..2828 Hz
//! is ignored.

use std::ops::RangeInclusive;

use crate::error::{Error, Result};
use crate::spectrum::{FftDesign, Spectrum, DEFAULT_TOLERANCE};

/// Octave band edges in Hz: `[354, 707]`, `(707, 1414]`, `(1414, 2828]`.
pub const BAND_EDGES_HZ: [f64; 4] = [354.0, 707.0, 1414.0, 2828.0];

pub const DEFAULT_FLOOR_DB: f64 = -120.0;

/// Spectrum bin ranges for the three PSIL octave bands.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BandPartition {
    pub bands: [RangeInclusive<usize>; 3],
}

impl BandPartition {
    pub fn sizes(&self) -> [usize; 3] {
        self.bands.clone().map(|r| r.count())
    }

    /// Whether bin `j` feeds any band.
    pub fn contains(&self, j: usize) -> bool {
        self.bands.iter().any(|r| r.contains(&j))
    }
}

fn in_band(band: usize, f: f64) -> bool {
    let (lo, hi) = (BAND_EDGES_HZ[band], BAND_EDGES_HZ[band + 1]);
    if band == 0 {
        lo <= f && f <= hi
    } else {
        lo < f && f <= hi
    }
}

pub fn band_partition(design: &FftDesign) -> Result<BandPartition> {
    let top = BAND_EDGES_HZ[3];
    if design.max_freq < top / DEFAULT_TOLERANCE {
        return Err(Error::Metering(format!(
            "highest component {:.1} Hz leaves the {top} Hz band edge unrepresented",
            design.max_freq
        )));
    }

    let mut bands = Vec::with_capacity(3);
    for band in 0..3 {
        let idx: Vec<usize> = (0..design.bins())
            .filter(|&j| in_band(band, design.bin_freq(j)))
            .collect();
        match (idx.first(), idx.last()) {
            (Some(&a), Some(&b)) => bands.push(a..=b),
            _ => {
                return Err(Error::Metering(format!(
                    "band {}..{} Hz holds no bins at resolution {:.2} Hz",
                    BAND_EDGES_HZ[band],
                    BAND_EDGES_HZ[band + 1],
                    design.resolution
                )))
            }
        }
    }
    let [a, b, c]: [RangeInclusive<usize>; 3] = bands.try_into().expect("three bands");
    Ok(BandPartition { bands: [a, b, c] })
}

/// Level in dB of the summed power over `range`, never below `floor_db`.
pub fn band_level(spec: &Spectrum, range: RangeInclusive<usize>, floor_db: f64) -> f64 {
    let power: f64 = spec.powers[range].iter().sum();
    let level = 10.0 * power.log10();
    // log10(0) is -inf, which max() handles
    level.max(floor_db)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PsilSample {
    pub band_levels: [f64; 3],
    pub psil: f64,
    pub period_index: u64,
    pub time: f64,
}

impl PsilSample {
    pub fn from_levels(band_levels: [f64; 3], period_index: u64, time: f64) -> Self {
        let psil = (band_levels[0] + band_levels[1] + band_levels[2]) / 3.0;
        Self {
            band_levels,
            psil,
            period_index,
            time,
        }
    }
}

pub fn psil(spec: &Spectrum, part: &BandPartition, floor_db: f64) -> Result<PsilSample> {
    Meter::new(part.clone(), floor_db, 0.0).measure(spec, 0, 0.0)
}

/// Stateless PSIL meter bound to one partition.
///
/// `calibration_db` is added to every band level before the floor is applied;
/// it maps digital full scale onto whatever absolute reference the caller uses.
#[derive(Clone, Debug)]
pub struct Meter {
    pub partition: BandPartition,
    pub floor_db: f64,
    pub calibration_db: f64,
}

impl Meter {
    pub fn new(partition: BandPartition, floor_db: f64, calibration_db: f64) -> Self {
        Self {
            partition,
            floor_db,
            calibration_db,
        }
    }

    pub fn measure(&self, spec: &Spectrum, period_index: u64, time: f64) -> Result<PsilSample> {
        let last = *self.partition.bands[2].end();
        if last >= spec.len() {
            return Err(Error::Metering(format!(
                "partition reaches bin {last} but spectrum has {} bins",
                spec.len()
            )));
        }
        let levels = self.partition.bands.clone().map(|r| {
            let raw = band_level(spec, r, f64::NEG_INFINITY);
            (raw + self.calibration_db).max(self.floor_db)
        });
        Ok(PsilSample::from_levels(levels, period_index, time))
    }
}
