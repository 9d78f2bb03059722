//! Command-line front end: `design`, `analyze`, `simulate` and `process`.
//!
//! Exit status is 0 on success, 1 on any input or configuration error, and 2
//! when `design` reports a failed guideline.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use crate::config::Config;
use crate::error::{Error, Result};
use crate::pipeline::{analyze_stream, psil_csv, run_pipeline, trace_csv, PipelineInput, RunOutput};
use crate::prefs::{parse_events, VolumeEvent};
use crate::scenario::Scenario;
use crate::spectrum::{design_fft, validate_design, Bound, DEFAULT_TOLERANCE};
use crate::svg::render_chart;
use crate::wav::read_mono_i16;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_GUIDELINE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "avc", version, about = "Speech-interference-level automatic volume control")]
pub struct Cli {
    /// key=value configuration file
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Override one configuration key (repeatable), e.g. --set solver.omega0=6
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,

    /// Random seed for anything synthesized
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Csv,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Derive FFT timing from (N, s) and grade it against the design guidelines
    Design {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        s: f64,
        #[arg(long, default_value_t = DEFAULT_TOLERANCE)]
        tolerance: f64,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Per-period octave-band levels and PSIL of a mono 16-bit WAV
    Analyze {
        wav: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a scenario through the solver and write the gain trace
    Simulate {
        scenario: PathBuf,
        #[arg(long)]
        events: Option<PathBuf>,
        /// Render the scenario as noise audio and meter it instead of feeding levels directly
        #[arg(long)]
        audio: bool,
        /// Also write an SVG chart of S and A
        #[arg(long)]
        plot: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Full chain on a microphone recording and the device-output reference
    Process {
        mic: PathBuf,
        reference: PathBuf,
        #[arg(long)]
        events: Option<PathBuf>,
        #[arg(long)]
        plot: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Parses `args` and runs the command. Never panics on bad input.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(stderr, "{e}");
                return EXIT_INPUT;
            }
            let _ = write!(stdout, "{e}");
            return EXIT_OK;
        }
    };
    match execute(&cli, stdout, stderr) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            EXIT_INPUT
        }
    }
}

fn load_config(cli: &Cli) -> Result<Config> {
    let mut cfg = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    for o in &cli.overrides {
        cfg.apply_override(o)?;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn load_events(path: Option<&Path>) -> Result<Vec<VolumeEvent>> {
    match path {
        Some(p) => parse_events(&std::fs::read_to_string(p)?, p),
        None => Ok(Vec::new()),
    }
}

fn emit(text: &str, out: Option<&Path>, stdout: &mut dyn Write) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text)?,
        None => stdout.write_all(text.as_bytes())?,
    }
    Ok(())
}

fn read_wav_at_rate(path: &Path, cfg: &Config) -> Result<Vec<f64>> {
    let (samples, rate) = read_mono_i16(path)?;
    if rate as f64 != cfg.fft.sample_rate {
        return Err(Error::Wav {
            path: path.to_path_buf(),
            msg: format!(
                "sample rate {rate} Hz does not match configured fft.s = {} Hz (resample offline)",
                cfg.fft.sample_rate
            ),
        });
    }
    Ok(samples)
}

fn summarize(run: &RunOutput, stderr: &mut dyn Write) {
    let p = &run.prefs;
    let _ = writeln!(
        stderr,
        "periods={} final_r0_db={:.4} final_floor_db={:.4} sil_threshold_db={}",
        run.records.len(),
        p.r0_pref,
        p.floor_db,
        if p.sil_threshold.is_finite() {
            format!("{:.4}", p.sil_threshold)
        } else {
            "unset".into()
        }
    );
}

fn execute(cli: &Cli, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<i32> {
    match &cli.command {
        Command::Design { n, s, tolerance, format } => {
            let design = design_fft(*n, *s)?;
            if !(*tolerance >= 1.0) {
                return Err(Error::key("tolerance", "must be >= 1"));
            }
            let report = validate_design(&design, *tolerance);
            let text = match format {
                Format::Text => design_text(&design, &report),
                Format::Csv => design_csv(&design, &report),
            };
            stdout.write_all(text.as_bytes())?;
            Ok(if report.has_failure() { EXIT_GUIDELINE } else { EXIT_OK })
        }
        Command::Analyze { wav, out } => {
            let cfg = load_config(cli)?;
            let samples = read_wav_at_rate(wav, &cfg)?;
            if samples.len() < cfg.fft.n {
                let _ = writeln!(stderr, "warning: {} holds less than one block", wav.display());
            }
            let rows = analyze_stream(&samples, &cfg)?;
            emit(&psil_csv(&rows), out.as_deref(), stdout)?;
            Ok(EXIT_OK)
        }
        Command::Simulate { scenario, events, audio, plot, out } => {
            let cfg = load_config(cli)?;
            let mut sc = Scenario::parse(&std::fs::read_to_string(scenario)?, scenario)?;
            if let Some(seed) = cli.seed {
                sc.seed = seed;
            }
            let events = load_events(events.as_deref())?;
            let input = if *audio {
                PipelineInput::ScenarioAudio(sc)
            } else {
                PipelineInput::Sil(sc)
            };
            let run = run_pipeline(&input, &cfg, &events)?;
            emit(&trace_csv(&run.records), out.as_deref(), stdout)?;
            if let Some(p) = plot {
                std::fs::write(p, render_chart(&run.records))?;
            }
            summarize(&run, stderr);
            Ok(EXIT_OK)
        }
        Command::Process { mic, reference, events, plot, out } => {
            let cfg = load_config(cli)?;
            let mic_samples = read_wav_at_rate(mic, &cfg)?;
            let ref_samples = read_wav_at_rate(reference, &cfg)?;
            if mic_samples.len() != ref_samples.len() {
                let _ = writeln!(
                    stderr,
                    "warning: length mismatch ({} vs {} samples); processing the common prefix",
                    mic_samples.len(),
                    ref_samples.len()
                );
            }
            if mic_samples.len().min(ref_samples.len()) < cfg.fft.n {
                let _ = writeln!(stderr, "warning: input shorter than one block");
            }
            let events = load_events(events.as_deref())?;
            let input = PipelineInput::Audio {
                mic: mic_samples,
                reference: Some(ref_samples),
            };
            let run = run_pipeline(&input, &cfg, &events)?;
            emit(&trace_csv(&run.records), out.as_deref(), stdout)?;
            if let Some(p) = plot {
                std::fs::write(p, render_chart(&run.records))?;
            }
            summarize(&run, stderr);
            Ok(EXIT_OK)
        }
    }
}

fn bound_text(b: Bound) -> &'static str {
    match b {
        Bound::AtMost => "<=",
        Bound::AtLeast => ">=",
    }
}

pub fn design_text(d: &crate::spectrum::FftDesign, r: &crate::spectrum::GuidelineReport) -> String {
    let mut s = String::new();
    let rows = [
        ("N", format!("{}", d.n_samples), "samples"),
        ("s", format!("{}", d.sample_rate), "Hz"),
        ("T", format!("{:.3}", d.period_span * 1e3), "ms"),
        ("df", format!("{:.3}", d.resolution), "Hz"),
        ("f_max", format!("{:.2}", d.max_freq), "Hz"),
        ("N/s", format!("{:.3}", d.cycle_period * 1e3), "ms"),
    ];
    for (name, value, unit) in rows {
        s.push_str(&format!("{name:<8}{value:>12} {unit}\n"));
    }
    s.push('\n');
    s.push_str(&format!("{:<12}{:>12}{:>14}  {}\n", "guideline", "value", "limit", "verdict"));
    for c in r.checks() {
        s.push_str(&format!(
            "{:<12}{:>9.3} {:<2}{:>4} {:>6} {:<3} {}\n",
            c.name,
            c.value,
            c.unit,
            bound_text(c.bound),
            c.limit,
            c.unit,
            c.verdict
        ));
    }
    s
}

pub fn design_csv(d: &crate::spectrum::FftDesign, r: &crate::spectrum::GuidelineReport) -> String {
    let mut s = String::from("field,value,unit\n");
    s.push_str(&format!("n_samples,{},samples\n", d.n_samples));
    s.push_str(&format!("sample_rate,{},Hz\n", d.sample_rate));
    s.push_str(&format!("period_span,{:.6},ms\n", d.period_span * 1e3));
    s.push_str(&format!("resolution,{:.6},Hz\n", d.resolution));
    s.push_str(&format!("max_freq,{:.6},Hz\n", d.max_freq));
    s.push_str(&format!("cycle_period,{:.6},ms\n", d.cycle_period * 1e3));
    for c in r.checks() {
        s.push_str(&format!("{}_verdict,{},\n", c.name, c.verdict));
    }
    s
}
