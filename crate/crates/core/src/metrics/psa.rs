use alloc::vec::Vec;

use crate::dsp::{ComplexSpectrogram, MagnitudeMask};
use crate::{Error, Result, COMPRESSION};

/// Both terms of the phase-sensitive loss, each a mean over all bins.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsaLoss {
    /// Mean of `|Ŝ - S|²`.
    pub complex: f64,
    /// Mean of `(|Ŝ| - |S|)²`.
    pub magnitude: f64,
}

impl PsaLoss {
    pub fn total(&self) -> f64 {
        self.complex + self.magnitude
    }
}

fn check_pair(a: &ComplexSpectrogram, b: &ComplexSpectrogram) -> Result<()> {
    if a.frames() != b.frames() {
        return Err(Error::ShapeMismatch { what: "spectrogram frames", expected: b.frames(), actual: a.frames() });
    }
    for spec in [a, b] {
        if spec.exponent() != COMPRESSION {
            return Err(Error::CompressionMismatch(spec.exponent(), COMPRESSION));
        }
    }
    Ok(())
}

/// Phase-sensitive loss between compressed spectrograms.
pub fn psa_loss(estimate: &ComplexSpectrogram, target: &ComplexSpectrogram) -> Result<PsaLoss> {
    check_pair(estimate, target)?;
    let n = estimate.bins().len();
    if n == 0 {
        return Ok(PsaLoss { complex: 0.0, magnitude: 0.0 });
    }
    let (mut complex, mut magnitude) = (0.0f64, 0.0f64);
    for (e, s) in estimate.bins().iter().zip(target.bins()) {
        let (er, ei, sr, si) = (e.re as f64, e.im as f64, s.re as f64, s.im as f64);
        complex += (er - sr) * (er - sr) + (ei - si) * (ei - si);
        let d = libm::hypot(er, ei) - libm::hypot(sr, si);
        magnitude += d * d;
    }
    Ok(PsaLoss { complex: complex / n as f64, magnitude: magnitude / n as f64 })
}

/// Oracle mask `|S| / (|S| + |N|)` from compressed target and interference spectrograms.
/// Bins where both are silent get 0.
pub fn ideal_ratio_mask(target: &ComplexSpectrogram, interference: &ComplexSpectrogram) -> Result<MagnitudeMask> {
    check_pair(target, interference)?;
    let values: Vec<f32> = target
        .bins()
        .iter()
        .zip(interference.bins())
        .map(|(s, n)| {
            let (s, n) = (s.norm() as f64, n.norm() as f64);
            if s + n > 0.0 { (s / (s + n)) as f32 } else { 0.0 }
        })
        .collect();
    MagnitudeMask::new(values)
}
