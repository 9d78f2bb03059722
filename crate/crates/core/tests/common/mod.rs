//! Independent oracles shared by the integration suites. Nothing here calls
//! into the code it checks.

#![allow(dead_code)]

use std::f64::consts::PI;

/// Direct O(N^2) DFT folded to a one-sided power spectrum (sine of unit
/// amplitude on a bin gives 0.5).
pub fn dft_powers(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    (0..=n / 2)
        .map(|k| {
            let (mut re, mut im) = (0.0, 0.0);
            for (i, v) in x.iter().enumerate() {
                let ang = -2.0 * PI * ((k * i) % n) as f64 / n as f64;
                re += v * ang.cos();
                im += v * ang.sin();
            }
            let p = (re * re + im * im) / (n * n) as f64;
            if k == 0 || k == n / 2 {
                p
            } else {
                2.0 * p
            }
        })
        .collect()
}

#[derive(Clone, Copy, Debug)]
pub struct OracleParams {
    pub omega0: f64,
    pub damping: f64,
    pub deadband: f64,
    pub floor: f64,
    pub dt: f64,
}

pub const DEFAULTS: OracleParams = OracleParams {
    omega0: 8.0,
    damping: 4.0,
    deadband: 1.0,
    floor: 2.5,
    dt: 128.0 / 5600.0,
};

/// Straight transcription of the five-line update, written separately from
/// the library solver. Returns A per period.
pub fn reference_update(levels: &[f64], p: &OracleParams) -> Vec<(f64, f64, f64)> {
    let mut a = if levels[0] > p.floor { levels[0] } else { p.floor };
    let mut a1 = 0.0f64;
    let mut a2 = 0.0f64;
    let mut out = vec![(a, a1, a2)];
    let w2 = p.omega0 * p.omega0;
    let bw = p.damping * p.omega0;
    for i in 0..levels.len() - 1 {
        let a1_next = a1 + p.dt * a2;
        let a_next = if (a - levels[i]).abs() >= p.deadband { a + p.dt * a1 } else { a };
        let a2_next = w2 * levels[i + 1] - bw * a1_next - w2 * a_next;
        let a_next = if a_next <= p.floor { p.floor } else { a_next };
        a = a_next;
        a1 = a1_next;
        a2 = a2_next;
        out.push((a, a1, a2));
    }
    out
}

/// Same update run with `sub` substeps per period and the level held
/// piecewise constant over each period; sampled once per period.
pub fn fine_integrator(levels: &[f64], p: &OracleParams, sub: usize) -> Vec<f64> {
    let h = p.dt / sub as f64;
    let w2 = p.omega0 * p.omega0;
    let bw = p.damping * p.omega0;
    let mut a = levels[0].max(p.floor);
    let (mut a1, mut a2) = (0.0f64, 0.0f64);
    let mut out = vec![a];
    for i in 0..levels.len() - 1 {
        for k in 0..sub {
            // S is held at levels[i] until the period boundary
            let s_now = levels[i];
            let s_next = if k + 1 < sub { levels[i] } else { levels[i + 1] };
            let a1n = a1 + h * a2;
            let an = if (a - s_now).abs() >= p.deadband { a + h * a1 } else { a };
            a2 = w2 * s_next - bw * a1n - w2 * an;
            a = an.max(p.floor);
            a1 = a1n;
        }
        out.push(a);
    }
    out
}

/// Splitmix64, for test data that must not depend on the crate's RNG choice.
pub struct TestRng(u64);

impl TestRng {
    pub fn new(seed: u64) -> Self {
        Self(seed)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        let u = (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
        lo + (hi - lo) * u
    }

    pub fn white(&mut self, n: usize, amp: f64) -> Vec<f64> {
        (0..n).map(|_| self.uniform(-amp, amp)).collect()
    }
}

/// `x` delayed by `lag` samples inside the block, zero-filled.
pub fn delay(x: &[f64], lag: i32) -> Vec<f64> {
    let n = x.len() as i64;
    (0..n)
        .map(|i| {
            let j = i - lag as i64;
            if (0..n).contains(&j) {
                x[j as usize]
            } else {
                0.0
            }
        })
        .collect()
}

pub fn rms_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    (a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64).sqrt()
}
