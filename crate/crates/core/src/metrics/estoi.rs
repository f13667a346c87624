use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use num_complex::Complex64;

use super::KaiserResampler;
use crate::fft::Fft;
use crate::{Error, Result, SAMPLE_RATE};

/// Internal sample rate of the intelligibility measure.
pub const ESTOI_RATE: usize = 10_000;
const FRAME: usize = 256;
const HOP: usize = FRAME / 2;
const NFFT: usize = 512;
const BANDS: usize = 15;
const MIN_FREQ: f64 = 150.0;
/// 30 frames of 12.8 ms: 384 ms.
const SEGMENT: usize = 30;
const DYN_RANGE_DB: f64 = 40.0;
const EPS: f64 = f64::EPSILON;

/// Extended short-time objective intelligibility of `estimate` against the
/// clean `reference`, both at 16 kHz.
pub fn estoi(estimate: &[f32], reference: &[f32]) -> Result<f64> {
    if estimate.len() != reference.len() {
        return Err(Error::LengthMismatch(estimate.len(), reference.len()));
    }
    let resampler = KaiserResampler::new(SAMPLE_RATE as usize, ESTOI_RATE);
    let x = resampler.process(reference);
    let y = resampler.process(estimate);
    let (x, y) = remove_silent_frames(&x, &y);

    let bands = third_octave_bands();
    let x_tob = band_envelopes(&x, &bands);
    let y_tob = band_envelopes(&y, &bands);
    let frames = x_tob.len();
    if frames < SEGMENT {
        return Err(Error::TooFewFrames { frames, required: SEGMENT });
    }

    let segments = frames - SEGMENT + 1;
    let mut total = 0.0f64;
    let mut xs = [[0.0f64; SEGMENT]; BANDS];
    let mut ys = [[0.0f64; SEGMENT]; BANDS];
    for m in 0..segments {
        for t in 0..SEGMENT {
            for b in 0..BANDS {
                xs[b][t] = x_tob[m + t][b];
                ys[b][t] = y_tob[m + t][b];
            }
        }
        normalize(&mut xs);
        normalize(&mut ys);
        for t in 0..SEGMENT {
            for b in 0..BANDS {
                total += xs[b][t] * ys[b][t];
            }
        }
    }
    Ok(total / (SEGMENT * segments) as f64)
}

/// Zero-mean, unit-norm rows (bands over time), then the same for columns.
fn normalize(seg: &mut [[f64; SEGMENT]; BANDS]) {
    for row in seg.iter_mut() {
        let mean = row.iter().sum::<f64>() / SEGMENT as f64;
        row.iter_mut().for_each(|v| *v -= mean);
        let norm = libm::sqrt(row.iter().map(|v| v * v).sum::<f64>()) + EPS;
        row.iter_mut().for_each(|v| *v /= norm);
    }
    for t in 0..SEGMENT {
        let mean = seg.iter().map(|r| r[t]).sum::<f64>() / BANDS as f64;
        seg.iter_mut().for_each(|r| r[t] -= mean);
        let norm = libm::sqrt(seg.iter().map(|r| r[t] * r[t]).sum::<f64>()) + EPS;
        seg.iter_mut().for_each(|r| r[t] /= norm);
    }
}

/// Hann window of `FRAME + 2` points without its zero end points.
fn window() -> Vec<f64> {
    (1..=FRAME).map(|n| 0.5 - 0.5 * libm::cos(2.0 * PI * n as f64 / (FRAME + 1) as f64)).collect()
}

fn frame_starts(len: usize) -> impl Iterator<Item = usize> {
    (0..len.saturating_sub(FRAME)).step_by(HOP)
}

/// Drops frames more than 40 dB below the loudest reference frame from both
/// signals and overlap-adds what is left.
fn remove_silent_frames(x: &[f64], y: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let w = window();
    let energy = |start: usize| {
        let e: f64 = x[start..start + FRAME].iter().zip(&w).map(|(v, w)| (v * w) * (v * w)).sum();
        20.0 * libm::log10(libm::sqrt(e) + EPS)
    };
    let starts: Vec<usize> = frame_starts(x.len()).collect();
    let energies: Vec<f64> = starts.iter().map(|&s| energy(s)).collect();
    let max = energies.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let kept: Vec<usize> = starts.iter().zip(&energies).filter(|(_, &e)| e > max - DYN_RANGE_DB).map(|(&s, _)| s).collect();
    let len = if kept.is_empty() { 0 } else { (kept.len() - 1) * HOP + FRAME };
    let mut xo = vec![0.0f64; len];
    let mut yo = vec![0.0f64; len];
    for (k, &s) in kept.iter().enumerate() {
        for i in 0..FRAME {
            xo[k * HOP + i] += w[i] * x[s + i];
            yo[k * HOP + i] += w[i] * y[s + i];
        }
    }
    (xo, yo)
}

/// Bin ranges of the one-third-octave bands, edges snapped to the nearest bin.
fn third_octave_bands() -> [(usize, usize); BANDS] {
    let bin_hz = ESTOI_RATE as f64 / NFFT as f64;
    let nearest = |hz: f64| {
        (0..=NFFT / 2)
            .min_by(|&a, &b| {
                let da = (a as f64 * bin_hz - hz).abs();
                let db = (b as f64 * bin_hz - hz).abs();
                da.partial_cmp(&db).unwrap()
            })
            .unwrap()
    };
    let mut bands = [(0, 0); BANDS];
    for (k, band) in bands.iter_mut().enumerate() {
        let k = k as f64;
        let low = MIN_FREQ * libm::pow(2.0, (2.0 * k - 1.0) / 6.0);
        let high = MIN_FREQ * libm::pow(2.0, (2.0 * k + 1.0) / 6.0);
        *band = (nearest(low), nearest(high));
    }
    bands
}

/// Per-frame band envelopes `sqrt(sum |X|^2)` of a 512-point STFT.
fn band_envelopes(x: &[f64], bands: &[(usize, usize); BANDS]) -> Vec<[f64; BANDS]> {
    let w = window();
    let fft = Fft::<f64>::new(NFFT);
    let mut buf = vec![Complex64::new(0.0, 0.0); NFFT];
    frame_starts(x.len())
        .map(|s| {
            buf.fill(Complex64::new(0.0, 0.0));
            for i in 0..FRAME {
                buf[i].re = w[i] * x[s + i];
            }
            fft.forward(&mut buf);
            let mut env = [0.0f64; BANDS];
            for (e, &(lo, hi)) in env.iter_mut().zip(bands) {
                *e = libm::sqrt(buf[lo..hi].iter().map(|z| z.norm_sqr()).sum::<f64>());
            }
            env
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Noise with a 4 Hz syllable-rate envelope and a few silent gaps.
    fn speech_like(seed: u64, len: usize) -> Vec<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut lp = 0.0f32;
        (0..len)
            .map(|n| {
                let t = n as f32 / 16_000.0;
                let env = (0.5 + 0.5 * (2.0 * core::f32::consts::PI * 4.0 * t).sin()).powi(2);
                let gate = if (n / 8000) % 4 == 3 { 0.0 } else { 1.0 };
                lp = 0.7 * lp + 0.3 * rng.gen_range(-1.0f32..1.0);
                0.5 * env * gate * lp
            })
            .collect()
    }

    fn white(seed: u64, len: usize, amp: f32) -> Vec<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..len).map(|_| amp * rng.gen_range(-1.0f32..1.0)).collect()
    }

    fn add_at_snr(clean: &[f32], noise: &[f32], snr_db: f64) -> Vec<f32> {
        let p = |v: &[f32]| v.iter().map(|&s| (s as f64).powi(2)).sum::<f64>();
        let g = (p(clean) / (p(noise) * 10f64.powf(snr_db / 10.0))).sqrt() as f32;
        clean.iter().zip(noise).map(|(c, n)| c + g * n).collect()
    }

    #[test]
    fn band_edges_match_bins() {
        let bands = third_octave_bands();
        // 150 Hz * 2^(-1/6) = 133.6 Hz -> bin 7 (136.7 Hz); 150 * 2^(1/6) = 168.4 Hz -> bin 9 (175.8 Hz)
        assert_eq!(bands[0], (7, 9));
        assert!(bands.windows(2).all(|w| w[0].1 == w[1].0));
        assert!(bands[BANDS - 1].1 <= NFFT / 2);
    }

    #[test]
    fn identical_signals_score_one() {
        let x = speech_like(1, 48_000);
        let v = estoi(&x, &x).unwrap();
        assert!(v >= 0.999, "{v}");
    }

    #[test]
    fn gain_invariance() {
        let x = speech_like(2, 48_000);
        let y = add_at_snr(&x, &white(3, 48_000, 1.0), 5.0);
        let base = estoi(&y, &x).unwrap();
        for g in [0.01f32, 0.5, 3.0] {
            let ys: Vec<f32> = y.iter().map(|v| v * g).collect();
            let xs: Vec<f32> = x.iter().map(|v| v * g).collect();
            assert!((estoi(&ys, &x).unwrap() - base).abs() < 1e-6);
            assert!((estoi(&y, &xs).unwrap() - base).abs() < 1e-6);
        }
    }

    #[test]
    fn independent_noise_scores_near_zero() {
        let x = speech_like(4, 48_000);
        for seed in 0..10 {
            let v = estoi(&white(100 + seed, 48_000, 0.3), &x).unwrap();
            assert!(v.abs() <= 0.1, "seed {seed}: {v}");
        }
    }

    #[test]
    fn increases_with_snr() {
        let x = speech_like(5, 48_000);
        let n = white(6, 48_000, 1.0);
        let low = estoi(&add_at_snr(&x, &n, 0.0), &x).unwrap();
        let high = estoi(&add_at_snr(&x, &n, 10.0), &x).unwrap();
        assert!(high > low, "{low} -> {high}");
    }

    #[test]
    fn too_short() {
        let x = speech_like(7, 4_000);
        assert!(matches!(estoi(&x, &x), Err(Error::TooFewFrames { .. })));
        assert_eq!(estoi(&x[..10], &x), Err(Error::LengthMismatch(10, 4_000)));
    }
}
