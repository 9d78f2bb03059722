//! Per-period processing loop tying isolation, metering, solver and listener
//! preferences together.

use std::collections::VecDeque;
use std::fmt::Write as _;

use crate::block::SampleBlock;
use crate::config::Config;
use crate::error::{Error, Result};
use crate::isolation::NoiseIsolator;
use crate::meter::{band_partition, Meter, PsilSample};
use crate::prefs::{
    self, group_adjustments, on_manual_adjust, update_sil_threshold, AdjustEvent, Adjustment,
    Direction, ListenerPrefs, SilHistory, VolumeEvent,
};
use crate::scenario::{generate_sil_trace, synthesize_noise_audio, Scenario};
use crate::solver::{self, AdaptiveDeadband, SolverParams, SolverState};
use crate::spectrum::{compute_spectrum_windowed, FftDesign};

/// One row of output per processing period.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceRecord {
    pub period: u64,
    pub time: f64,
    /// Measured interference level `S`, dB.
    pub sil_db: f64,
    /// Normalized gain `A`, dB.
    pub a_db: f64,
    /// Gain command `a = A + R0`, dB.
    pub gain_db: f64,
    /// Octave-band levels; absent when the level was fed in directly.
    pub bands: Option<[f64; 3]>,
}

impl TraceRecord {
    pub const CSV_HEADER: &'static str = "period,time_s,sil_db,A_db,gain_db,band1_db,band2_db,band3_db";

    pub fn csv_row(&self) -> String {
        let mut row = format!(
            "{},{:.6},{:.6},{:.6},{:.6}",
            self.period, self.time, self.sil_db, self.a_db, self.gain_db
        );
        match self.bands {
            Some(b) => {
                let _ = write!(row, ",{:.6},{:.6},{:.6}", b[0], b[1], b[2]);
            }
            None => row.push_str(",,,"),
        }
        row
    }
}

pub fn trace_csv(records: &[TraceRecord]) -> String {
    let mut out = String::with_capacity(64 * (records.len() + 1));
    out.push_str(TraceRecord::CSV_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}

pub const PSIL_CSV_HEADER: &str = "period,time_s,band1_db,band2_db,band3_db,psil_db";

pub fn psil_csv(samples: &[PsilSample]) -> String {
    let mut out = String::from(PSIL_CSV_HEADER);
    out.push('\n');
    for s in samples {
        let _ = writeln!(
            out,
            "{},{:.6},{:.6},{:.6},{:.6},{:.6}",
            s.period_index, s.time, s.band_levels[0], s.band_levels[1], s.band_levels[2], s.psil
        );
    }
    out
}

/// Streaming engine for one audio stream.
#[derive(Clone, Debug)]
pub struct Engine {
    design: FftDesign,
    window: crate::spectrum::Window,
    meter: Meter,
    params: SolverParams,
    adaptive: Option<AdaptiveDeadband>,
    prefs: ListenerPrefs,
    history: SilHistory,
    isolator: NoiseIsolator,
    state: Option<SolverState>,
    last_level: f64,
    period: u64,
    startup_volume: Option<f64>,
    adjustments: VecDeque<Adjustment>,
    adjust_start_gain: Option<f64>,
}

impl Engine {
    pub fn new(config: &Config, events: &[VolumeEvent]) -> Result<Self> {
        config.validate()?;
        let design = config.design()?;
        let partition = band_partition(&design)?;
        let params = config.solver_params()?;
        let prefs = config.listener_prefs();
        let (startup_from_events, adjustments) = group_adjustments(events);
        Ok(Self {
            design,
            window: config.fft.window,
            meter: Meter::new(partition, config.meter.floor_db, config.meter.calibration_db),
            params,
            adaptive: config.solver.adaptive_deadband.then(|| {
                AdaptiveDeadband::new(
                    config.solver.deadband_db,
                    config.solver.adaptive_k,
                    AdaptiveDeadband::DEFAULT_WINDOW,
                )
            }),
            prefs,
            history: SilHistory::new(prefs.window),
            isolator: NoiseIsolator::new(config.isolation),
            state: None,
            last_level: f64::NAN,
            period: 0,
            startup_volume: startup_from_events.or(config.prefs.startup_volume_db),
            adjustments: adjustments.into(),
            adjust_start_gain: None,
        })
    }

    pub fn design(&self) -> &FftDesign {
        &self.design
    }

    pub fn meter(&self) -> &Meter {
        &self.meter
    }

    pub fn prefs(&self) -> &ListenerPrefs {
        &self.prefs
    }

    pub fn state(&self) -> Option<&SolverState> {
        self.state.as_ref()
    }

    fn now(&self) -> f64 {
        self.period as f64 * self.design.cycle_period
    }

    /// Feeds a level measured elsewhere.
    pub fn push_level(&mut self, level: f64) -> Result<TraceRecord> {
        let sample = PsilSample::from_levels([level; 3], self.period, self.now());
        let sample = PsilSample { psil: level, ..sample };
        self.advance(sample, None)
    }

    /// Meters one noise block, then advances.
    pub fn push_noise_block(&mut self, noise: &SampleBlock) -> Result<TraceRecord> {
        let spec = compute_spectrum_windowed(noise, &self.design, self.window)?;
        let sample = self.meter.measure(&spec, self.period, self.now())?;
        self.advance(sample, Some(sample.band_levels))
    }

    /// Full chain for one mic block with an optional reference block.
    pub fn push_audio(&mut self, mic: &SampleBlock, reference: Option<&SampleBlock>) -> Result<TraceRecord> {
        let noise = self.isolator.process(mic, reference)?;
        self.push_noise_block(&noise)
    }

    fn advance(&mut self, sample: PsilSample, bands: Option<[f64; 3]>) -> Result<TraceRecord> {
        let t = sample.time;
        let level = sample.psil;

        match self.state {
            None => {
                if !level.is_finite() {
                    return Err(Error::Processing(format!("first level {level} is not finite")));
                }
                self.params.floor_db = self.prefs.floor_db;
                let state = solver::init_solver(level, &self.params)?;
                self.state = Some(state);
                self.last_level = level;
                self.history.push(sample);
                if let Some(a) = self.adaptive.as_mut() {
                    a.push(level);
                }
                let volume = self.startup_volume.unwrap_or(state.a_val + self.prefs.r0_pref);
                let ev = AdjustEvent {
                    end_time: t,
                    final_gain_db: volume,
                    direction: Direction::Up,
                    is_startup: true,
                };
                self.prefs = on_manual_adjust(&ev, &self.history, &self.prefs, state.a_val);
                self.history.record_adjustment(t);
            }
            Some(state) => {
                if let Some(a) = self.adaptive.as_mut() {
                    a.push(level);
                    self.params.deadband_db = a.current();
                }
                match solver::step(&state, level, self.last_level, &self.params) {
                    Ok(next) => {
                        self.state = Some(next);
                        self.last_level = level;
                        self.history.push(sample);
                    }
                    Err(e) => log::warn!("period {}: dropped ({e})", self.period),
                }
            }
        }

        self.prefs = update_sil_threshold(&mut self.history, &self.prefs, t);
        self.apply_adjustments(t)?;

        let state = self.state.expect("initialized above");
        let record = TraceRecord {
            period: self.period,
            time: t,
            sil_db: level,
            a_db: state.a_val,
            gain_db: solver::gain_signal(&state, self.prefs.r0_pref),
            bands,
        };
        self.period += 1;
        Ok(record)
    }

    fn apply_adjustments(&mut self, t: f64) -> Result<()> {
        while let Some(adj) = self.adjustments.front().copied() {
            if adj.start_time > t {
                break;
            }
            let state = self.state.expect("initialized");
            let start_gain = *self
                .adjust_start_gain
                .get_or_insert_with(|| solver::gain_signal(&state, self.prefs.r0_pref));
            if adj.end_time > t {
                break;
            }
            self.adjustments.pop_front();
            self.adjust_start_gain = None;

            let ev = AdjustEvent {
                end_time: adj.end_time,
                final_gain_db: adj.final_volume_db,
                direction: if adj.final_volume_db > start_gain {
                    Direction::Up
                } else {
                    Direction::Down
                },
                is_startup: false,
            };
            let established_a = adj.final_volume_db - self.prefs.r0_pref;
            self.prefs = on_manual_adjust(&ev, &self.history, &self.prefs, established_a);
            self.history.record_adjustment(adj.end_time);
            self.params.floor_db = self.prefs.floor_db;
            // new constraints restart the solver from rest
            let mut fresh = solver::init_solver(self.last_level, &self.params)?;
            fresh.period_index = state.period_index;
            self.state = Some(fresh);
        }
        Ok(())
    }
}

/// Where the per-period levels come from.
#[derive(Clone, Debug)]
pub enum PipelineInput {
    /// Scenario levels fed straight to the solver.
    Sil(Scenario),
    /// Scenario rendered as noise audio and metered.
    ScenarioAudio(Scenario),
    /// Recorded microphone samples with an optional device-output reference.
    Audio {
        mic: Vec<f64>,
        reference: Option<Vec<f64>>,
    },
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub records: Vec<TraceRecord>,
    pub prefs: ListenerPrefs,
}

pub fn run_pipeline(input: &PipelineInput, config: &Config, events: &[VolumeEvent]) -> Result<RunOutput> {
    let mut engine = Engine::new(config, events)?;
    let design = *engine.design();
    let mut records = Vec::new();
    match input {
        PipelineInput::Sil(sc) => {
            sc.validate()?;
            for level in generate_sil_trace(sc, design.cycle_period) {
                records.push(engine.push_level(level)?);
            }
        }
        PipelineInput::ScenarioAudio(sc) => {
            sc.validate()?;
            let audio = synthesize_noise_audio(
                sc,
                &design,
                &engine.meter().partition,
                config.meter.calibration_db,
                config.meter.floor_db,
            );
            records = run_blocks(&mut engine, &audio, None)?;
        }
        PipelineInput::Audio { mic, reference } => {
            records = run_blocks(&mut engine, mic, reference.as_deref())?;
        }
    }
    Ok(RunOutput {
        records,
        prefs: *engine.prefs(),
    })
}

fn run_blocks(engine: &mut Engine, mic: &[f64], reference: Option<&[f64]>) -> Result<Vec<TraceRecord>> {
    let design = *engine.design();
    let n = design.n_samples;
    let len = reference.map_or(mic.len(), |r| r.len().min(mic.len()));
    if len < n {
        log::warn!("audio holds {len} samples, fewer than one {n}-sample block");
        return Ok(Vec::new());
    }
    let mut out = Vec::with_capacity(len / n);
    for b in 0..len / n {
        let range = b * n..(b + 1) * n;
        let mic_block = SampleBlock::new(mic[range.clone()].to_vec(), design.sample_rate)?;
        let ref_block = reference
            .map(|r| SampleBlock::new(r[range].to_vec(), design.sample_rate))
            .transpose()?;
        out.push(engine.push_audio(&mic_block, ref_block.as_ref())?);
    }
    Ok(out)
}

/// Per-block PSIL of a sample stream with no reference subtraction.
pub fn analyze_stream(samples: &[f64], config: &Config) -> Result<Vec<PsilSample>> {
    config.validate()?;
    let design = config.design()?;
    let meter = Meter::new(band_partition(&design)?, config.meter.floor_db, config.meter.calibration_db);
    samples
        .chunks_exact(design.n_samples)
        .enumerate()
        .map(|(i, chunk)| {
            let block = SampleBlock::new(chunk.to_vec(), design.sample_rate)?;
            let spec = compute_spectrum_windowed(&block, &design, config.fft.window)?;
            meter.measure(&spec, i as u64, i as f64 * design.cycle_period)
        })
        .collect()
}

pub use prefs::parse_events;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{staircase_scenario, Segment};

    fn flat(level: f64, secs: f64) -> Scenario {
        Scenario {
            segments: vec![Segment { level_db: level, duration: secs }],
            fluctuation_db: 0.0,
            spikes: vec![],
            seed: 1,
        }
    }

    #[test]
    fn sil_mode_matches_run_trace() {
        let cfg = Config::default();
        let sc = staircase_scenario();
        let out = run_pipeline(&PipelineInput::Sil(sc.clone()), &cfg, &[]).unwrap();
        let trace = generate_sil_trace(&sc, cfg.design().unwrap().cycle_period);
        let states = solver::run_trace(&trace, &cfg.solver_params().unwrap()).unwrap();
        assert_eq!(out.records.len(), trace.len());
        for (r, s) in out.records.iter().zip(&states) {
            assert_eq!(r.a_db, s.a_val);
        }
        // default startup keeps the factory ratio
        assert!((out.prefs.r0_pref - 15.0).abs() < 1e-9);
        assert!(out.records.iter().all(|r| (r.gain_db - r.a_db - out.prefs.r0_pref).abs() < 1e-12));
    }

    #[test]
    fn cadence_is_one_period() {
        let cfg = Config::default();
        let dt = cfg.design().unwrap().cycle_period;
        let out = run_pipeline(&PipelineInput::Sil(flat(40.0, 2.0)), &cfg, &[]).unwrap();
        for w in out.records.windows(2) {
            assert!((w[1].time - w[0].time - dt).abs() < 1e-12);
            assert_eq!(w[1].period, w[0].period + 1);
        }
    }

    #[test]
    fn silent_audio_sits_on_floor() {
        let cfg = Config::default();
        let mic = vec![0.0; 128 * 50];
        let out = run_pipeline(&PipelineInput::Audio { mic: mic.clone(), reference: Some(mic) }, &cfg, &[]).unwrap();
        assert_eq!(out.records.len(), 50);
        for r in &out.records {
            assert_eq!(r.sil_db, -120.0);
            assert_eq!(r.a_db, 2.5);
        }
    }

    #[test]
    fn short_audio_gives_empty_trace() {
        let cfg = Config::default();
        let out = run_pipeline(&PipelineInput::Audio { mic: vec![0.1; 100], reference: None }, &cfg, &[]).unwrap();
        assert!(out.records.is_empty());
    }

    #[test]
    fn non_finite_level_is_dropped() {
        let cfg = Config::default();
        let mut e = Engine::new(&cfg, &[]).unwrap();
        e.push_level(40.0).unwrap();
        let before = *e.state().unwrap();
        let r = e.push_level(f64::NAN).unwrap();
        assert_eq!(*e.state().unwrap(), before);
        assert_eq!(r.a_db, 40.0);
        assert!(e.push_level(41.5).is_ok());
    }

    #[test]
    fn startup_volume_sets_ratio() {
        let mut cfg = Config::default();
        cfg.prefs.startup_volume_db = Some(55.0);
        let out = run_pipeline(&PipelineInput::Sil(flat(48.0, 1.0)), &cfg, &[]).unwrap();
        assert!((out.prefs.r0_pref - 7.0).abs() < 1e-12);
        assert!((out.records[0].gain_db - 55.0).abs() < 1e-12);
    }

    #[test]
    fn noisy_adjustment_resets_ratio() {
        let cfg = Config::default();
        let events = [VolumeEvent { time: 2.0, volume_db: 60.0 }];
        let out = run_pipeline(&PipelineInput::Sil(flat(50.0, 4.0)), &cfg, &events).unwrap();
        assert!((out.prefs.r0_pref - 10.0).abs() < 1e-9);
        assert_eq!(out.prefs.floor_db, 2.5);
        let after = out.records.iter().find(|r| r.time >= 2.0).unwrap();
        assert!((after.gain_db - 60.0).abs() < 1e-9);
    }

    #[test]
    fn quiet_upward_adjustment_moves_floor() {
        let mut cfg = Config::default();
        cfg.prefs.latency = 2.0;
        // learn a threshold at 30 dB, then go quiet and turn it up
        let sc = Scenario {
            segments: vec![
                Segment { level_db: 30.0, duration: 5.0 },
                Segment { level_db: 10.0, duration: 5.0 },
            ],
            fluctuation_db: 0.0,
            spikes: vec![],
            seed: 1,
        };
        let events = [VolumeEvent { time: 6.5, volume_db: 40.0 }];
        let out = run_pipeline(&PipelineInput::Sil(sc), &cfg, &events).unwrap();
        assert!((out.prefs.r0_pref - 15.0).abs() < 1e-9);
        assert!((out.prefs.floor_db - 25.0).abs() < 1e-9);
        let last = out.records.last().unwrap();
        assert_eq!(last.a_db, 25.0);
        assert!((last.gain_db - 40.0).abs() < 1e-9);
    }

    #[test]
    fn csv_shapes() {
        let r = TraceRecord { period: 3, time: 0.5, sil_db: 40.0, a_db: 41.0, gain_db: 56.0, bands: None };
        assert_eq!(r.csv_row(), "3,0.500000,40.000000,41.000000,56.000000,,,");
        let r = TraceRecord { bands: Some([1.0, 2.0, 3.0]), ..r };
        assert!(r.csv_row().ends_with(",1.000000,2.000000,3.000000"));
        assert!(trace_csv(&[r]).starts_with(TraceRecord::CSV_HEADER));
    }
}
