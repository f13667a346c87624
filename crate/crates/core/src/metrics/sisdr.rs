use crate::{Error, Result};

/// Magnitude limit on SI-SDR, reached for zero residual or zero projection.
pub const SISDR_CAP_DB: f64 = 100.0;

/// Scale-invariant SDR in dB, plain projection form (no mean removal).
pub fn sisdr(estimate: &[f32], reference: &[f32]) -> Result<f64> {
    if estimate.len() != reference.len() {
        return Err(Error::LengthMismatch(estimate.len(), reference.len()));
    }
    let rr: f64 = reference.iter().map(|&r| (r as f64) * (r as f64)).sum();
    if rr == 0.0 {
        return Err(Error::ZeroReference);
    }
    let er: f64 = estimate.iter().zip(reference).map(|(&e, &r)| e as f64 * r as f64).sum();
    let alpha = er / rr;
    let (mut target, mut residual) = (0.0f64, 0.0f64);
    for (&e, &r) in estimate.iter().zip(reference) {
        let s = alpha * r as f64;
        let d = e as f64 - s;
        target += s * s;
        residual += d * d;
    }
    if residual == 0.0 {
        return Ok(if target == 0.0 { -SISDR_CAP_DB } else { SISDR_CAP_DB });
    }
    if target == 0.0 {
        return Ok(-SISDR_CAP_DB);
    }
    Ok((10.0 * libm::log10(target / residual)).clamp(-SISDR_CAP_DB, SISDR_CAP_DB))
}
