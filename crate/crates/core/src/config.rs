//! Run configuration: every tunable in one place, loadable from a plain
//! `key=value` file and overridable key by key.

use std::path::Path;

use crate::error::{Error, Result};
use crate::isolation::{CalibrationMode, IsolationSettings};
use crate::meter::DEFAULT_FLOOR_DB;
use crate::prefs::{ListenerPrefs, DEFAULT_LATENCY_S, DEFAULT_WINDOW};
use crate::solver::{AdaptiveDeadband, SolverParams};
use crate::spectrum::{design_fft, FftDesign, Window, DEFAULT_TOLERANCE};

#[derive(Clone, Debug, PartialEq)]
pub struct FftConfig {
    pub n: usize,
    pub sample_rate: f64,
    pub window: Window,
    pub tolerance: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    pub omega0: f64,
    pub damping: f64,
    pub deadband_db: f64,
    /// Factory `A_min`.
    pub floor_db: f64,
    pub ceiling_db: Option<f64>,
    pub adaptive_deadband: bool,
    pub adaptive_k: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PrefsConfig {
    pub window: usize,
    pub latency: f64,
    pub sil_threshold: f64,
    /// Factory `R0`.
    pub r0_db: f64,
    /// Gain command at start-up; `None` means "factory `R0` above the first level".
    pub startup_volume_db: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MeterConfig {
    pub floor_db: f64,
    pub calibration_db: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Config {
    pub fft: FftConfig,
    pub solver: SolverConfig,
    pub prefs: PrefsConfig,
    pub meter: MeterConfig,
    pub isolation: IsolationSettings,
    pub seed: u64,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            fft: FftConfig {
                n: 128,
                sample_rate: 5600.0,
                window: Window::Rectangular,
                tolerance: DEFAULT_TOLERANCE,
            },
            solver: SolverConfig {
                omega0: SolverParams::DEFAULT_OMEGA0,
                damping: SolverParams::DEFAULT_DAMPING,
                deadband_db: SolverParams::DEFAULT_DEADBAND_DB,
                floor_db: SolverParams::DEFAULT_FLOOR_DB,
                ceiling_db: None,
                adaptive_deadband: false,
                adaptive_k: AdaptiveDeadband::DEFAULT_K,
            },
            prefs: PrefsConfig {
                window: DEFAULT_WINDOW,
                latency: DEFAULT_LATENCY_S,
                sil_threshold: f64::INFINITY,
                r0_db: 15.0,
                startup_volume_db: None,
            },
            meter: MeterConfig {
                floor_db: DEFAULT_FLOOR_DB,
                calibration_db: 0.0,
            },
            isolation: IsolationSettings::default(),
            seed: 42,
        }
    }
}

fn parse_f64(key: &str, value: &str) -> Result<f64> {
    match value {
        "inf" | "+inf" | "infinity" => Ok(f64::INFINITY),
        _ => value
            .parse::<f64>()
            .ok()
            .filter(|v| !v.is_nan())
            .ok_or_else(|| Error::key(key, format!("`{value}` is not a number"))),
    }
}

fn parse_usize(key: &str, value: &str) -> Result<usize> {
    value
        .parse()
        .map_err(|_| Error::key(key, format!("`{value}` is not a non-negative integer")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "on" | "yes" | "1" => Ok(true),
        "false" | "off" | "no" | "0" => Ok(false),
        _ => Err(Error::key(key, format!("`{value}` is not a boolean"))),
    }
}

fn parse_optional(key: &str, value: &str) -> Result<Option<f64>> {
    match value {
        "none" | "off" | "" => Ok(None),
        _ => parse_f64(key, value).map(Some),
    }
}

impl Config {
    /// Sets one dotted key, e.g. `solver.omega0=8`.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key.trim() {
            "fft.n" => self.fft.n = parse_usize(key, value)?,
            "fft.s" | "fft.sample_rate" => self.fft.sample_rate = parse_f64(key, value)?,
            "fft.window" => {
                self.fft.window = match value {
                    "rectangular" | "rect" | "none" => Window::Rectangular,
                    "hann" => Window::Hann,
                    _ => return Err(Error::key(key, format!("unknown window `{value}`"))),
                }
            }
            "fft.tolerance" => self.fft.tolerance = parse_f64(key, value)?,
            "solver.omega0" => self.solver.omega0 = parse_f64(key, value)?,
            "solver.damping" => self.solver.damping = parse_f64(key, value)?,
            "solver.deadband_db" => self.solver.deadband_db = parse_f64(key, value)?,
            "solver.floor_db" => self.solver.floor_db = parse_f64(key, value)?,
            "solver.ceiling_db" => self.solver.ceiling_db = parse_optional(key, value)?,
            "solver.adaptive" => self.solver.adaptive_deadband = parse_bool(key, value)?,
            "solver.adaptive_k" => self.solver.adaptive_k = parse_f64(key, value)?,
            "prefs.window" => self.prefs.window = parse_usize(key, value)?,
            "prefs.latency" => self.prefs.latency = parse_f64(key, value)?,
            "prefs.sil_threshold" => self.prefs.sil_threshold = parse_f64(key, value)?,
            "prefs.r0_db" => self.prefs.r0_db = parse_f64(key, value)?,
            "prefs.startup_volume_db" => self.prefs.startup_volume_db = parse_optional(key, value)?,
            "meter.floor_db" => self.meter.floor_db = parse_f64(key, value)?,
            "meter.calibration_db" => self.meter.calibration_db = parse_f64(key, value)?,
            "isolation.max_lag" => self.isolation.max_lag = parse_usize(key, value)?,
            "isolation.gain_lo" => self.isolation.gain_lo = parse_f64(key, value)?,
            "isolation.gain_hi" => self.isolation.gain_hi = parse_f64(key, value)?,
            "isolation.smoothing" => self.isolation.smoothing = parse_f64(key, value)?,
            "isolation.mode" => {
                self.isolation.mode = match value {
                    "startup_only" => CalibrationMode::StartupOnly,
                    "continuous" => CalibrationMode::Continuous,
                    _ => return Err(Error::key(key, format!("unknown mode `{value}`"))),
                }
            }
            "seed" => {
                self.seed = value
                    .parse()
                    .map_err(|_| Error::key(key, format!("`{value}` is not an unsigned integer")))?
            }
            other => return Err(Error::key(other, "unknown configuration key")),
        }
        Ok(())
    }

    /// Applies a `key=value` override string.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override `{assignment}` is not key=value")))?;
        self.set(k, v)
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut cfg = Config::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let wrap = |msg: String| Error::Parse {
                path: path.to_path_buf(),
                line: idx + 1,
                msg,
            };
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| wrap(format!("expected key=value, got `{line}`")))?;
            cfg.set(k, v).map_err(|e| wrap(e.to_string()))?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, path)
    }

    pub fn design(&self) -> Result<FftDesign> {
        design_fft(self.fft.n, self.fft.sample_rate).map_err(|e| Error::key("fft.n", e.to_string()))
    }

    pub fn solver_params(&self) -> Result<SolverParams> {
        let design = self.design()?;
        let p = SolverParams {
            omega0: self.solver.omega0,
            damping: self.solver.damping,
            deadband_db: self.solver.deadband_db,
            floor_db: self.solver.floor_db,
            dt: design.cycle_period,
            ceiling_db: self.solver.ceiling_db,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn listener_prefs(&self) -> ListenerPrefs {
        ListenerPrefs {
            r0_pref: self.prefs.r0_db,
            floor_db: self.solver.floor_db,
            sil_threshold: self.prefs.sil_threshold,
            latency: self.prefs.latency,
            window: self.prefs.window,
        }
    }

    /// Checks every module precondition, naming the offending key.
    pub fn validate(&self) -> Result<()> {
        let design = self.design()?;
        if !(self.fft.tolerance >= 1.0) {
            return Err(Error::key("fft.tolerance", "must be >= 1"));
        }
        self.solver_params()?;
        if self.solver.adaptive_deadband && !(self.solver.adaptive_k > 0.0) {
            return Err(Error::key("solver.adaptive_k", "must be positive"));
        }
        self.listener_prefs().validate()?;
        if self.prefs.sil_threshold.is_nan() || self.prefs.sil_threshold == f64::NEG_INFINITY {
            return Err(Error::key("prefs.sil_threshold", "must be finite or +inf"));
        }
        if !self.prefs.r0_db.is_finite() {
            return Err(Error::key("prefs.r0_db", "must be finite"));
        }
        if self.prefs.startup_volume_db.is_some_and(|v| !v.is_finite()) {
            return Err(Error::key("prefs.startup_volume_db", "must be finite"));
        }
        if !self.meter.floor_db.is_finite() {
            return Err(Error::key("meter.floor_db", "must be finite"));
        }
        if !self.meter.calibration_db.is_finite() {
            return Err(Error::key("meter.calibration_db", "must be finite"));
        }
        crate::meter::band_partition(&design).map_err(|e| Error::key("fft.n", e.to_string()))?;
        self.isolation.validate(design.n_samples)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let cfg = Config::default();
        cfg.validate().unwrap();
        let p = cfg.solver_params().unwrap();
        assert_eq!((p.omega0, p.damping, p.deadband_db, p.floor_db), (8.0, 4.0, 1.0, 2.5));
        assert_eq!(p.dt, 128.0 / 5600.0);
    }

    #[test]
    fn parse_file_and_overrides() {
        let text = "# tuned\nfft.n = 256\nsolver.omega0=6\nisolation.mode=continuous\nsolver.ceiling_db=60\nprefs.sil_threshold=inf\n";
        let mut cfg = Config::parse(text, Path::new("c.conf")).unwrap();
        assert_eq!(cfg.fft.n, 256);
        assert_eq!(cfg.solver.omega0, 6.0);
        assert_eq!(cfg.isolation.mode, CalibrationMode::Continuous);
        assert_eq!(cfg.solver.ceiling_db, Some(60.0));
        cfg.apply_override("seed=7").unwrap();
        assert_eq!(cfg.seed, 7);
    }

    #[test]
    fn errors_name_the_key() {
        let mut cfg = Config::default();
        let e = cfg.set("solver.bogus", "1").unwrap_err();
        assert!(e.to_string().contains("solver.bogus"));

        let mut cfg = Config::default();
        cfg.set("fft.n", "100").unwrap();
        assert!(cfg.validate().unwrap_err().to_string().contains("fft.n"));

        let mut cfg = Config::default();
        cfg.set("isolation.max_lag", "40").unwrap();
        assert!(cfg.validate().unwrap_err().to_string().contains("isolation.max_lag"));

        let mut cfg = Config::default();
        cfg.set("solver.damping", "-1").unwrap();
        assert!(cfg.validate().unwrap_err().to_string().contains("solver.damping"));

        let e = Config::parse("fft.n=128\nsolver.omega0=abc\n", Path::new("c.conf")).unwrap_err();
        assert!(matches!(e, Error::Parse { line: 2, .. }));
    }
}
