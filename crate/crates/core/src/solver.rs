//! Damped-oscillator gain solver.
//!
//! The normalized gain `A` (dB) is driven toward the measured interference
//! level `S` by
//!
//! ```text
//! A'' + b w0 A' + w0^2 (A - S) = 0
//! ```
//!
//! integrated once per processing period with the explicit update below. A
//! deadband `r0` freezes `A` while it sits within `r0` of `S`, and `A` is never
//! allowed under the listener floor `A_min`.

use std::collections::VecDeque;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverParams {
    /// Stiffness, 1/s.
    pub omega0: f64,
    /// Damping, dimensionless.
    pub damping: f64,
    /// Deadband `r0`, dB.
    pub deadband_db: f64,
    /// Floor `A_min`, dB.
    pub floor_db: f64,
    /// Step size, seconds (one processing period).
    pub dt: f64,
    /// Optional upper clamp on `A`. Not part of the reference algorithm.
    pub ceiling_db: Option<f64>,
}

impl SolverParams {
    pub const DEFAULT_OMEGA0: f64 = 8.0;
    pub const DEFAULT_DAMPING: f64 = 4.0;
    pub const DEFAULT_DEADBAND_DB: f64 = 1.0;
    pub const DEFAULT_FLOOR_DB: f64 = 2.5;

    /// Reference constants with the given step.
    pub fn with_dt(dt: f64) -> Self {
        Self {
            omega0: Self::DEFAULT_OMEGA0,
            damping: Self::DEFAULT_DAMPING,
            deadband_db: Self::DEFAULT_DEADBAND_DB,
            floor_db: Self::DEFAULT_FLOOR_DB,
            dt,
            ceiling_db: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega0 > 0.0 && self.omega0.is_finite()) {
            return Err(Error::key("solver.omega0", "must be positive"));
        }
        if !(self.damping > 0.0 && self.damping.is_finite()) {
            return Err(Error::key("solver.damping", "must be positive"));
        }
        if !(self.deadband_db >= 0.0 && self.deadband_db.is_finite()) {
            return Err(Error::key("solver.deadband_db", "must be non-negative"));
        }
        if !self.floor_db.is_finite() {
            return Err(Error::key("solver.floor_db", "must be finite"));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::key("solver.dt", "must be positive"));
        }
        if let Some(c) = self.ceiling_db {
            if !(c.is_finite() && c > self.floor_db) {
                return Err(Error::key("solver.ceiling_db", "must exceed the floor"));
            }
        }
        let b = self.damping;
        if b >= 2.0 {
            let fast = self.omega0 * (b + (b * b - 4.0).sqrt()) / 2.0;
            if self.dt * fast >= 2.0 {
                return Err(Error::Config(format!(
                    "explicit update unstable: dt * fast root = {:.3} >= 2",
                    self.dt * fast
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverState {
    /// `A`, dB.
    pub a_val: f64,
    /// `A'`, dB/s.
    pub a_dot: f64,
    /// `A''`, dB/s^2.
    pub a_ddot: f64,
    pub period_index: u64,
}

/// Start-up (or restart) conditions: `A = S0` held above the floor, at rest.
pub fn init_solver(s0: f64, params: &SolverParams) -> Result<SolverState> {
    params.validate()?;
    if !s0.is_finite() {
        return Err(Error::Processing(format!("initial level {s0} is not finite")));
    }
    Ok(SolverState {
        a_val: s0.max(params.floor_db),
        a_dot: 0.0,
        a_ddot: 0.0,
        period_index: 0,
    })
}

/// Advances one processing period.
///
/// `s_current` is the level that belonged to `state`'s period and gates the
/// deadband; `s_next` is the freshly measured level that drives the new
/// acceleration. On a non-finite level the caller should keep `state`.
pub fn step(
    state: &SolverState,
    s_next: f64,
    s_current: f64,
    params: &SolverParams,
) -> Result<SolverState> {
    if !s_next.is_finite() || !s_current.is_finite() {
        return Err(Error::Processing(format!(
            "non-finite level (current {s_current}, next {s_next})"
        )));
    }
    let dt = params.dt;
    let w0 = params.omega0;

    let a_dot = state.a_dot + dt * state.a_ddot;
    let mut a_val = if (state.a_val - s_current).abs() >= params.deadband_db {
        state.a_val + dt * state.a_dot
    } else {
        state.a_val
    };
    let a_ddot = w0 * w0 * s_next - params.damping * w0 * a_dot - w0 * w0 * a_val;
    if a_val <= params.floor_db {
        a_val = params.floor_db;
    }
    if let Some(ceiling) = params.ceiling_db {
        a_val = a_val.min(ceiling);
    }

    Ok(SolverState {
        a_val,
        a_dot,
        a_ddot,
        period_index: state.period_index + 1,
    })
}

/// Amplifier gain command `a = A + R0`.
pub fn gain_signal(state: &SolverState, r0_pref: f64) -> f64 {
    state.a_val + r0_pref
}

/// Runs the solver over a whole level trace, one state per input sample.
pub fn run_trace(sil_trace: &[f64], params: &SolverParams) -> Result<Vec<SolverState>> {
    let (&first, _) = sil_trace
        .split_first()
        .ok_or_else(|| Error::Processing("empty level trace".into()))?;
    let mut out = Vec::with_capacity(sil_trace.len());
    let mut state = init_solver(first, params)?;
    out.push(state);
    for pair in sil_trace.windows(2) {
        state = step(&state, pair[1], pair[0], params)?;
        out.push(state);
    }
    Ok(out)
}

/// Deadband that widens with the recent RMS fluctuation of the level:
/// `r0 = max(base, k * rms)` over the last `window` samples.
#[derive(Clone, Debug)]
pub struct AdaptiveDeadband {
    base: f64,
    k: f64,
    window: usize,
    recent: VecDeque<f64>,
}

impl AdaptiveDeadband {
    pub const DEFAULT_WINDOW: usize = 22;
    pub const DEFAULT_K: f64 = 1.5;

    pub fn new(base: f64, k: f64, window: usize) -> Self {
        Self {
            base,
            k,
            window: window.max(1),
            recent: VecDeque::with_capacity(window.max(1)),
        }
    }

    pub fn push(&mut self, level: f64) {
        if !level.is_finite() {
            return;
        }
        if self.recent.len() == self.window {
            self.recent.pop_front();
        }
        self.recent.push_back(level);
    }

    pub fn current(&self) -> f64 {
        let n = self.recent.len();
        if n < 2 {
            return self.base;
        }
        let mean = self.recent.iter().sum::<f64>() / n as f64;
        let var = self.recent.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        self.base.max(self.k * var.sqrt())
    }
}
