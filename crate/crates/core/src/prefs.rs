//! Learning listener preferences from manual volume adjustments.
//!
//! Two constraints feed the solver: the preferred gain-to-interference ratio
//! `R0` and the gain floor `A_min`. Every adjustment normally re-derives `R0`
//! as the final gain minus a recency-weighted average of recent levels. In a
//! quiet room (weighted level under the learned threshold `SIL_t`) an upward
//! adjustment instead moves the floor and leaves `R0` alone.

use std::collections::VecDeque;
use std::path::Path;

use crate::error::{Error, Result};
use crate::meter::PsilSample;

pub const DEFAULT_WINDOW: usize = 11;
pub const DEFAULT_LATENCY_S: f64 = 10.0;
/// Quiet time after the last volume change that closes an adjustment.
pub const ADJUST_SETTLE_S: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ListenerPrefs {
    /// `R0`, dB.
    pub r0_pref: f64,
    /// `A_min`, dB.
    pub floor_db: f64,
    /// `SIL_t`, dB. Infinite until a quiet baseline has been observed.
    pub sil_threshold: f64,
    /// Seconds a window must go without an adjustment to count toward `SIL_t`.
    pub latency: f64,
    /// Weighted-average length `m`, in periods.
    pub window: usize,
}

impl ListenerPrefs {
    pub fn factory(r0_pref: f64, floor_db: f64) -> Self {
        Self {
            r0_pref,
            floor_db,
            sil_threshold: f64::INFINITY,
            latency: DEFAULT_LATENCY_S,
            window: DEFAULT_WINDOW,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.floor_db.is_finite() {
            return Err(Error::key("prefs.floor_db", "must be finite"));
        }
        if !(self.latency > 0.0 && self.latency.is_finite()) {
            return Err(Error::key("prefs.latency", "must be positive"));
        }
        if self.window == 0 {
            return Err(Error::key("prefs.window", "must be at least 1"));
        }
        Ok(())
    }

    fn threshold_learned(&self) -> bool {
        self.sil_threshold.is_finite()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Up,
    Down,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdjustEvent {
    pub end_time: f64,
    /// Gain command `a` the listener left the volume at.
    pub final_gain_db: f64,
    pub direction: Direction,
    pub is_startup: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WeightedAverage {
    pub value: f64,
    /// Fewer than `m` samples were available.
    pub partial: bool,
}

/// Recent levels plus the bookkeeping needed to learn `SIL_t`.
#[derive(Clone, Debug)]
pub struct SilHistory {
    window: usize,
    recent: VecDeque<PsilSample>,
    capacity: usize,
    /// (window end time, weighted average) awaiting the latency check.
    pending: VecDeque<(f64, f64)>,
    adjustments: VecDeque<f64>,
}

impl SilHistory {
    pub fn new(window: usize) -> Self {
        let window = window.max(1);
        Self {
            window,
            recent: VecDeque::with_capacity(window),
            capacity: window,
            pending: VecDeque::new(),
            adjustments: VecDeque::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.recent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.recent.is_empty()
    }

    pub fn latest(&self) -> Option<&PsilSample> {
        self.recent.back()
    }

    pub fn push(&mut self, sample: PsilSample) {
        if !sample.psil.is_finite() {
            return;
        }
        if let Some(last) = self.recent.back() {
            debug_assert!(sample.period_index > last.period_index);
        }
        if self.recent.len() == self.capacity {
            self.recent.pop_front();
        }
        self.recent.push_back(sample);
        if self.recent.len() >= self.window {
            if let Some(avg) = weighted_sil_average(self, self.window) {
                self.pending.push_back((sample.time, avg.value));
            }
        }
    }

    pub fn record_adjustment(&mut self, time: f64) {
        self.adjustments.push_back(time);
    }
}

/// Recency-weighted mean `(1/m) sum w_i S_i` with `w_i = 2i/(m+1)`; `i = m` is
/// the newest sample. Uses whatever is available when the history is short.
pub fn weighted_sil_average(history: &SilHistory, m: usize) -> Option<WeightedAverage> {
    let k = m.min(history.recent.len());
    if k == 0 {
        return None;
    }
    let start = history.recent.len() - k;
    let kf = k as f64;
    let sum: f64 = history
        .recent
        .iter()
        .skip(start)
        .enumerate()
        .map(|(idx, s)| 2.0 * (idx + 1) as f64 / (kf + 1.0) * s.psil)
        .sum();
    Some(WeightedAverage {
        value: sum / kf,
        partial: k < m,
    })
}

/// Applies one finished manual adjustment.
///
/// `current_a` is the normalized gain the listener established, i.e. the
/// final gain command minus the current `R0`.
pub fn on_manual_adjust(
    ev: &AdjustEvent,
    history: &SilHistory,
    prefs: &ListenerPrefs,
    current_a: f64,
) -> ListenerPrefs {
    let Some(avg) = weighted_sil_average(history, prefs.window) else {
        return *prefs;
    };
    let mut next = *prefs;
    let quiet = prefs.threshold_learned() && avg.value < prefs.sil_threshold;
    if !ev.is_startup && ev.direction == Direction::Up && quiet {
        next.floor_db = current_a;
    } else {
        next.r0_pref = ev.final_gain_db - avg.value;
    }
    next
}

/// Folds every window old enough to have cleared the latency period into
/// `SIL_t`, skipping windows followed by an adjustment within the latency.
pub fn update_sil_threshold(
    history: &mut SilHistory,
    prefs: &ListenerPrefs,
    now: f64,
) -> ListenerPrefs {
    let mut next = *prefs;
    while let Some(&(end, avg)) = history.pending.front() {
        if end > now - prefs.latency {
            break;
        }
        history.pending.pop_front();
        let prompted = history
            .adjustments
            .iter()
            .any(|&t| t >= end && t <= end + prefs.latency);
        if !prompted {
            next.sil_threshold = next.sil_threshold.min(avg);
        }
    }
    // adjustments older than every pending window can no longer matter
    let oldest = history.pending.front().map_or(now, |p| p.0);
    while history.adjustments.front().is_some_and(|&t| t < oldest) {
        history.adjustments.pop_front();
    }
    next
}

/// One line of an events file: the listener set the volume to `volume_db` at
/// `time`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VolumeEvent {
    pub time: f64,
    pub volume_db: f64,
}

/// Parses `t=<seconds> volume=<dB>` lines. Blank lines and `#` comments are
/// skipped.
pub fn parse_events(text: &str, path: &Path) -> Result<Vec<VolumeEvent>> {
    let err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut out: Vec<VolumeEvent> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (mut time, mut volume) = (None, None);
        for field in line.split_whitespace() {
            let (k, v) = field
                .split_once('=')
                .ok_or_else(|| err(line_no, format!("expected key=value, got `{field}`")))?;
            let value: f64 = v
                .parse()
                .map_err(|_| err(line_no, format!("`{v}` is not a number")))?;
            if !value.is_finite() {
                return Err(err(line_no, format!("`{v}` is not finite")));
            }
            match k {
                "t" => time = Some(value),
                "volume" => volume = Some(value),
                other => return Err(err(line_no, format!("unknown key `{other}`"))),
            }
        }
        let (Some(time), Some(volume_db)) = (time, volume) else {
            return Err(err(line_no, "need both t= and volume=".into()));
        };
        if time < 0.0 {
            return Err(err(line_no, "time must be non-negative".into()));
        }
        if out.last().is_some_and(|p| time < p.time) {
            return Err(err(line_no, "events must be in time order".into()));
        }
        out.push(VolumeEvent { time, volume_db });
    }
    Ok(out)
}

/// A run of volume changes closed by `ADJUST_SETTLE_S` of inactivity.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Adjustment {
    pub start_time: f64,
    pub end_time: f64,
    pub final_volume_db: f64,
}

/// Groups raw volume events into adjustments. Events at `t = 0` describe the
/// start-up volume and are returned separately.
pub fn group_adjustments(events: &[VolumeEvent]) -> (Option<f64>, Vec<Adjustment>) {
    let startup = events.iter().rev().find(|e| e.time == 0.0).map(|e| e.volume_db);
    let mut out: Vec<Adjustment> = Vec::new();
    for e in events.iter().filter(|e| e.time > 0.0) {
        match out.last_mut() {
            Some(adj) if e.time - adj.end_time < ADJUST_SETTLE_S => {
                adj.end_time = e.time;
                adj.final_volume_db = e.volume_db;
            }
            _ => out.push(Adjustment {
                start_time: e.time,
                end_time: e.time,
                final_volume_db: e.volume_db,
            }),
        }
    }
    (startup, out)
}
