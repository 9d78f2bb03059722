//! Synthetic interference-level scenarios: a staircase of background levels
//! with uniform jitter and triangular spikes, plus band-limited noise audio
//! whose measured PSIL follows the scenario.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::meter::BandPartition;
use crate::spectrum::FftDesign;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Segment {
    pub level_db: f64,
    pub duration: f64,
}

/// Triangular burst: linear rise to `peak_delta_db` at the midpoint, linear fall.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Spike {
    pub start: f64,
    pub duration: f64,
    pub peak_delta_db: f64,
}

impl Spike {
    pub fn end(&self) -> f64 {
        self.start + self.duration
    }

    pub fn contribution(&self, t: f64) -> f64 {
        if t < self.start || t > self.end() {
            return 0.0;
        }
        let half = self.duration / 2.0;
        let mid = self.start + half;
        self.peak_delta_db * (1.0 - (t - mid).abs() / half)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub segments: Vec<Segment>,
    /// Uniform jitter amplitude, +- dB.
    pub fluctuation_db: f64,
    pub spikes: Vec<Spike>,
    pub seed: u64,
}

/// Stepped background with two +20 dB spikes: 0.5 s at 8 s and 0.25 s at 14 s.
///
/// The staircase levels are arbitrary stand-ins; only the spikes and the
/// +-1 dB jitter are fixed.
pub fn staircase_scenario() -> Scenario {
    Scenario {
        segments: vec![
            Segment { level_db: 35.0, duration: 4.0 },
            Segment { level_db: 45.0, duration: 6.0 },
            Segment { level_db: 38.0, duration: 6.0 },
            Segment { level_db: 42.0, duration: 4.0 },
        ],
        fluctuation_db: 1.0,
        spikes: vec![
            Spike { start: 8.0, duration: 0.5, peak_delta_db: 20.0 },
            Spike { start: 14.0, duration: 0.25, peak_delta_db: 20.0 },
        ],
        seed: 42,
    }
}

impl Scenario {
    pub fn total_duration(&self) -> f64 {
        self.segments.iter().map(|s| s.duration).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.segments.is_empty() {
            return Err(Error::Config("scenario has no segments".into()));
        }
        if let Some(s) = self
            .segments
            .iter()
            .find(|s| !(s.duration > 0.0 && s.duration.is_finite() && s.level_db.is_finite()))
        {
            return Err(Error::Config(format!("bad segment {s:?}")));
        }
        if !(self.fluctuation_db >= 0.0 && self.fluctuation_db.is_finite()) {
            return Err(Error::Config("fluctuation_db must be >= 0".into()));
        }
        let total = self.total_duration();
        for s in &self.spikes {
            if !(s.duration > 0.0 && s.start >= 0.0 && s.end() <= total && s.peak_delta_db.is_finite()) {
                return Err(Error::Config(format!(
                    "spike at {} s does not fit inside {total} s",
                    s.start
                )));
            }
        }
        Ok(())
    }

    /// Index of the segment active at `t`; segments are `[start, end)` and the
    /// last one extends forever.
    pub fn segment_index(&self, t: f64) -> usize {
        let mut start = 0.0;
        for (i, s) in self.segments.iter().enumerate() {
            start += s.duration;
            if t < start {
                return i;
            }
        }
        self.segments.len() - 1
    }

    pub fn background_at(&self, t: f64) -> f64 {
        self.segments[self.segment_index(t)].level_db
    }

    /// Background plus spikes, without jitter.
    pub fn level_at(&self, t: f64) -> f64 {
        self.background_at(t) + self.spikes.iter().map(|s| s.contribution(t)).sum::<f64>()
    }

    pub fn periods(&self, dt: f64) -> usize {
        (self.total_duration() / dt).floor() as usize
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "seed={}", self.seed);
        let _ = writeln!(out, "fluctuation_db={}", self.fluctuation_db);
        for s in &self.segments {
            let _ = writeln!(out, "segment={},{}", s.level_db, s.duration);
        }
        for s in &self.spikes {
            let _ = writeln!(out, "spike={},{},{},triangular", s.start, s.duration, s.peak_delta_db);
        }
        out
    }

    /// Parses the `key=value` scenario format:
    ///
    /// ```text
    /// seed=42
    /// fluctuation_db=1.0
    /// segment=<level dB>,<duration s>
    /// spike=<start s>,<duration s>,<peak dB>[,triangular]
    /// ```
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let err = |line: usize, msg: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            msg,
        };
        let mut sc = Scenario {
            segments: Vec::new(),
            fluctuation_db: 0.0,
            spikes: Vec::new(),
            seed: 0,
        };
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(line_no, format!("expected key=value, got `{line}`")))?;
            let (key, value) = (key.trim(), value.trim());
            let nums = |want: usize, allow_shape: bool| -> Result<Vec<f64>> {
                let mut parts: Vec<&str> = value.split(',').map(str::trim).collect();
                if allow_shape && parts.len() == want + 1 {
                    let shape = parts.pop().unwrap_or_default();
                    if shape != "triangular" {
                        return Err(err(line_no, format!("unsupported spike shape `{shape}`")));
                    }
                }
                if parts.len() != want {
                    return Err(err(line_no, format!("`{key}` takes {want} comma-separated numbers")));
                }
                parts
                    .iter()
                    .map(|p| {
                        p.parse::<f64>()
                            .ok()
                            .filter(|v| v.is_finite())
                            .ok_or_else(|| err(line_no, format!("`{p}` is not a number")))
                    })
                    .collect()
            };
            match key {
                "seed" => {
                    sc.seed = value
                        .parse()
                        .map_err(|_| err(line_no, format!("`{value}` is not an unsigned integer")))?
                }
                "fluctuation_db" => sc.fluctuation_db = nums(1, false)?[0],
                "segment" => {
                    let v = nums(2, false)?;
                    if v[1] <= 0.0 {
                        return Err(err(line_no, "segment duration must be positive".into()));
                    }
                    sc.segments.push(Segment { level_db: v[0], duration: v[1] });
                }
                "spike" => {
                    let v = nums(3, true)?;
                    if v[1] <= 0.0 || v[0] < 0.0 {
                        return Err(err(line_no, "spike needs start >= 0 and duration > 0".into()));
                    }
                    sc.spikes.push(Spike { start: v[0], duration: v[1], peak_delta_db: v[2] });
                }
                other => return Err(err(line_no, format!("unknown key `{other}`"))),
            }
        }
        sc.validate().map_err(|e| err(0, e.to_string()))?;
        Ok(sc)
    }
}

/// One level per processing period, sampled at `t = i * dt`.
pub fn generate_sil_trace(sc: &Scenario, dt: f64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(sc.seed);
    (0..sc.periods(dt))
        .map(|i| {
            let t = i as f64 * dt;
            let jitter = (2.0 * rng.gen::<f64>() - 1.0) * sc.fluctuation_db;
            sc.level_at(t) + jitter
        })
        .collect()
}

/// Independent RNG per block so any block can be regenerated alone.
fn block_rng(seed: u64, block: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1 + block as u64);
    rng
}

/// Flat-spectrum noise confined to the PSIL bins, one block per level.
///
/// Every partition bin gets the same power with a random phase, sized so that
/// a meter using the same `calibration_db` reads exactly `level`. Levels at or
/// below `floor_db` give silent blocks.
pub fn synthesize_blocks(
    levels: &[f64],
    design: &FftDesign,
    partition: &BandPartition,
    seed: u64,
    calibration_db: f64,
    floor_db: f64,
) -> Vec<f64> {
    let n = design.n_samples;
    let half = n / 2;
    let band_offset = partition
        .sizes()
        .iter()
        .map(|&k| 10.0 * (k as f64).log10())
        .sum::<f64>()
        / 3.0;
    let bins: Vec<usize> = partition.bands.iter().flat_map(|r| r.clone()).collect();

    let mut out = vec![0.0; levels.len() * n];
    for (b, &level) in levels.iter().enumerate() {
        if !(level > floor_db) {
            continue;
        }
        let p = 10f64.powf((level - calibration_db - band_offset) / 10.0);
        let mut rng = block_rng(seed, b);
        let block = &mut out[b * n..(b + 1) * n];
        for &j in &bins {
            if j == half {
                let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
                let amp = sign * p.sqrt();
                for (i, x) in block.iter_mut().enumerate() {
                    *x += if i % 2 == 0 { amp } else { -amp };
                }
            } else {
                let amp = (2.0 * p).sqrt();
                let phase = rng.gen::<f64>() * 2.0 * PI;
                for (i, x) in block.iter_mut().enumerate() {
                    let ang = 2.0 * PI * ((j * i) % n) as f64 / n as f64 + phase;
                    *x += amp * ang.cos();
                }
            }
        }
    }
    out
}

/// Noise audio for a scenario: the SIL trace rendered block by block.
pub fn synthesize_noise_audio(
    sc: &Scenario,
    design: &FftDesign,
    partition: &BandPartition,
    calibration_db: f64,
    floor_db: f64,
) -> Vec<f64> {
    let levels = generate_sil_trace(sc, design.cycle_period);
    synthesize_blocks(&levels, design, partition, sc.seed, calibration_db, floor_db)
}
