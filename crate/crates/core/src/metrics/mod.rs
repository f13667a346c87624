//! Quality metrics and training objectives.

mod estoi;
mod psa;
mod resample;
mod sisdr;

use alloc::vec::Vec;
use core::ops::Range;

pub use estoi::{estoi, ESTOI_RATE};
pub use psa::{ideal_ratio_mask, psa_loss, PsaLoss};
pub use resample::{KaiserResampler, STOPBAND_DB};
pub use sisdr::{sisdr, SISDR_CAP_DB};

use crate::BLOCK_LEN;

/// One named metric value.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricResult {
    pub name: &'static str,
    pub value: f64,
    /// Samples the value was computed over.
    pub samples: usize,
}

/// Blocks quieter than this, relative to the loudest reference block, count as silence.
pub const ACTIVE_RANGE_DB: f64 = 40.0;

/// Span from the first to the last 40 ms block of `reference` within
/// [`ACTIVE_RANGE_DB`] of its loudest block. Empty for an all-zero reference.
pub fn active_region(reference: &[f32]) -> Range<usize> {
    let energies: Vec<f64> = reference
        .chunks(BLOCK_LEN)
        .map(|c| c.iter().map(|&s| (s as f64) * (s as f64)).sum::<f64>() / c.len() as f64)
        .collect();
    let peak = energies.iter().copied().fold(0.0, f64::max);
    if peak == 0.0 {
        return 0..0;
    }
    let floor = peak * libm::pow(10.0, -ACTIVE_RANGE_DB / 10.0);
    let first = energies.iter().position(|&e| e >= floor).unwrap_or(0);
    let last = energies.iter().rposition(|&e| e >= floor).unwrap_or(0);
    first * BLOCK_LEN..((last + 1) * BLOCK_LEN).min(reference.len())
}
