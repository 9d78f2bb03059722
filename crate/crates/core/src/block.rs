//! Fixed-length sample frames.

use crate::error::{Error, Result};

/// One processing period worth of samples.
///
/// The length is always a power of two so the block can go straight into the
/// radix-2 FFT, and every sample is finite.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleBlock {
    samples: Vec<f64>,
    rate: f64,
}

impl SampleBlock {
    pub fn new(samples: Vec<f64>, rate: f64) -> Result<Self> {
        let n = samples.len();
        if n == 0 || !n.is_power_of_two() {
            return Err(Error::Processing(format!(
                "block length {n} is not a power of two"
            )));
        }
        if !(rate > 0.0 && rate.is_finite()) {
            return Err(Error::Processing(format!("invalid sample rate {rate}")));
        }
        if let Some(i) = samples.iter().position(|x| !x.is_finite()) {
            return Err(Error::Processing(format!("sample {i} is not finite")));
        }
        Ok(Self { samples, rate })
    }

    pub fn zeros(len: usize, rate: f64) -> Result<Self> {
        Self::new(vec![0.0; len], rate)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|x| x * x).sum()
    }

    /// Errors unless `other` has the same length and rate.
    pub fn check_compatible(&self, other: &SampleBlock) -> Result<()> {
        if self.len() != other.len() {
            return Err(Error::Config(format!(
                "block lengths differ ({} vs {})",
                self.len(),
                other.len()
            )));
        }
        if self.rate != other.rate {
            return Err(Error::Config(format!(
                "block rates differ ({} vs {})",
                self.rate, other.rate
            )));
        }
        Ok(())
    }
}
