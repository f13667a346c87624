//! Time-frequency transforms shared by the offline and streaming paths.
//!
//! The STFT is centered: the signal is reflect-padded by half a window on both
//! sides and frame `t` is centered on sample `t * HOP`, giving exactly
//! `ceil(N / HOP)` frames (100 frames per second). Each 400-sample Hann frame
//! sits in the middle of a 512-point transform.
//!
//! The ISTFT is a weighted overlap-add with the same Hann window for
//! synthesis, normalized per sample by the accumulated squared window. A 400
//! sample Hann window at hop 160 is not constant-overlap-add, the squared
//! normalization makes reconstruction exact anyway.
//!
//! Per-frame helpers ([`FrameAnalyzer`], [`FrameSynthesizer`], [`compress_bin`],
//! [`mask_frame`]) are used by both the batch functions here and the
//! streaming engine, so both paths perform identical floating-point work.

use alloc::vec;
use alloc::vec::Vec;
use num_complex::Complex32;

use crate::fft::Fft;
use crate::{Error, Result, BINS, HOP, N_FFT, SAMPLE_RATE, WINDOW_LEN};

/// Reflect padding applied before the first and after the last sample.
pub const EDGE_PAD: usize = WINDOW_LEN / 2;
/// Offset of the analysis window inside the zero-padded FFT buffer.
const FRAME_OFFSET: usize = (N_FFT - WINDOW_LEN) / 2;

/// Mono audio at 16 kHz with finite samples.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioSignal {
    samples: Vec<f32>,
}

impl AudioSignal {
    pub fn new(samples: Vec<f32>) -> Result<Self> {
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::NonFinite("audio samples"));
        }
        Ok(Self { samples })
    }

    /// Checks the declared rate before accepting the samples.
    pub fn with_rate(samples: Vec<f32>, sample_rate: u32) -> Result<Self> {
        if sample_rate != SAMPLE_RATE {
            return Err(Error::SampleRate(sample_rate));
        }
        Self::new(samples)
    }

    pub fn zeros(len: usize) -> Self {
        Self { samples: vec![0.0; len] }
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f32> {
        self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn sample_rate(&self) -> u32 {
        SAMPLE_RATE
    }
}

/// `frames x 257` complex bins, row-major, tagged with its compression exponent.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrogram {
    bins: Vec<Complex32>,
    frames: usize,
    exponent: f32,
}

impl ComplexSpectrogram {
    pub fn new(bins: Vec<Complex32>, exponent: f32) -> Result<Self> {
        if !bins.len().is_multiple_of(BINS) {
            return Err(Error::ShapeMismatch {
                what: "spectrogram bins",
                expected: (bins.len() / BINS + 1) * BINS,
                actual: bins.len(),
            });
        }
        check_exponent(exponent)?;
        Ok(Self { frames: bins.len() / BINS, bins, exponent })
    }

    pub fn zeros(frames: usize) -> Self {
        Self { bins: vec![Complex32::new(0.0, 0.0); frames * BINS], frames, exponent: 1.0 }
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    /// 1.0 for a raw spectrogram, `p` after [`compress`].
    pub fn exponent(&self) -> f32 {
        self.exponent
    }

    pub fn is_compressed(&self) -> bool {
        self.exponent != 1.0
    }

    pub fn frame(&self, t: usize) -> &[Complex32] {
        &self.bins[t * BINS..(t + 1) * BINS]
    }

    pub fn frame_mut(&mut self, t: usize) -> &mut [Complex32] {
        &mut self.bins[t * BINS..(t + 1) * BINS]
    }

    pub fn bins(&self) -> &[Complex32] {
        &self.bins
    }

    pub fn bins_mut(&mut self) -> &mut [Complex32] {
        &mut self.bins
    }
}

/// `frames x 257` gains in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MagnitudeMask {
    values: Vec<f32>,
    frames: usize,
}

impl MagnitudeMask {
    pub fn new(values: Vec<f32>) -> Result<Self> {
        if !values.len().is_multiple_of(BINS) {
            return Err(Error::ShapeMismatch {
                what: "mask bins",
                expected: (values.len() / BINS + 1) * BINS,
                actual: values.len(),
            });
        }
        if let Some((index, &value)) =
            values.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(Error::MaskRange { index, value });
        }
        Ok(Self { frames: values.len() / BINS, values })
    }

    pub fn filled(frames: usize, value: f32) -> Result<Self> {
        Self::new(vec![value; frames * BINS])
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn frame(&self, t: usize) -> &[f32] {
        &self.values[t * BINS..(t + 1) * BINS]
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }
}

/// Periodic Hann window of length 400.
pub fn hann_window() -> Vec<f32> {
    (0..WINDOW_LEN)
        .map(|n| {
            let phase = 2.0 * core::f64::consts::PI * n as f64 / WINDOW_LEN as f64;
            (0.5 - 0.5 * libm::cos(phase)) as f32
        })
        .collect()
}

/// Number of centered frames for `len` samples.
pub fn frame_count(len: usize) -> usize {
    len.div_ceil(HOP)
}

/// Reflect (mirror without repeating the edge sample) half a window on each side.
pub fn reflect_pad(samples: &[f32]) -> Result<Vec<f32>> {
    if samples.len() <= EDGE_PAD {
        return Err(Error::InputTooShort { len: samples.len(), min: EDGE_PAD + 1 });
    }
    let n = samples.len();
    let mut padded = Vec::with_capacity(n + 2 * EDGE_PAD);
    padded.extend(reflect_head(samples));
    padded.extend_from_slice(samples);
    padded.extend(reflect_tail(samples));
    Ok(padded)
}

/// The `EDGE_PAD` samples that precede sample 0 in the padded signal.
pub(crate) fn reflect_head(samples: &[f32]) -> impl Iterator<Item = f32> + '_ {
    (0..EDGE_PAD).map(move |i| samples[EDGE_PAD - i])
}

/// The `EDGE_PAD` samples that follow the last sample in the padded signal.
pub(crate) fn reflect_tail(samples: &[f32]) -> impl Iterator<Item = f32> + '_ {
    let n = samples.len();
    (0..EDGE_PAD).map(move |j| samples[n - 2 - j])
}

/// Windowed 512-point analysis of one 400-sample frame.
#[derive(Debug, Clone)]
pub struct FrameAnalyzer {
    fft: Fft<f32>,
    window: Vec<f32>,
    buffer: Vec<Complex32>,
}

impl Default for FrameAnalyzer {
    fn default() -> Self {
        Self::new()
    }
}

impl FrameAnalyzer {
    pub fn new() -> Self {
        Self {
            fft: Fft::new(N_FFT),
            window: hann_window(),
            buffer: vec![Complex32::new(0.0, 0.0); N_FFT],
        }
    }

    /// `frame` is exactly `WINDOW_LEN` padded-signal samples; `out` gets 257 bins.
    pub fn analyze(&mut self, frame: &[f32], out: &mut [Complex32]) {
        debug_assert_eq!(frame.len(), WINDOW_LEN);
        debug_assert_eq!(out.len(), BINS);
        self.buffer.fill(Complex32::new(0.0, 0.0));
        for ((slot, &x), &w) in self.buffer[FRAME_OFFSET..FRAME_OFFSET + WINDOW_LEN]
            .iter_mut()
            .zip(frame)
            .zip(&self.window)
        {
            slot.re = x * w;
        }
        self.fft.forward(&mut self.buffer);
        out.copy_from_slice(&self.buffer[..BINS]);
    }
}

/// Inverse transform of one frame followed by the synthesis window.
#[derive(Debug, Clone)]
pub struct FrameSynthesizer {
    fft: Fft<f32>,
    window: Vec<f32>,
    window_sq: Vec<f32>,
    buffer: Vec<Complex32>,
}

impl Default for FrameSynthesizer {
    fn default() -> Self {
        Self::new()
    }
}

impl FrameSynthesizer {
    pub fn new() -> Self {
        let window = hann_window();
        let window_sq = window.iter().map(|w| w * w).collect();
        Self {
            fft: Fft::new(N_FFT),
            window,
            window_sq,
            buffer: vec![Complex32::new(0.0, 0.0); N_FFT],
        }
    }

    /// Squared synthesis-times-analysis window, accumulated for normalization.
    pub fn window_sq(&self) -> &[f32] {
        &self.window_sq
    }

    /// Writes the windowed 400-sample time frame for a 257-bin spectrum.
    pub fn synthesize(&mut self, spectrum: &[Complex32], out: &mut [f32]) {
        debug_assert_eq!(spectrum.len(), BINS);
        debug_assert_eq!(out.len(), WINDOW_LEN);
        self.buffer[..BINS].copy_from_slice(spectrum);
        self.buffer[0].im = 0.0;
        self.buffer[BINS - 1].im = 0.0;
        for k in 1..BINS - 1 {
            self.buffer[N_FFT - k] = spectrum[k].conj();
        }
        self.fft.inverse(&mut self.buffer);
        for ((o, z), &w) in out
            .iter_mut()
            .zip(&self.buffer[FRAME_OFFSET..FRAME_OFFSET + WINDOW_LEN])
            .zip(&self.window)
        {
            *o = z.re * w;
        }
    }
}

/// Overlap-add accumulator shared by the batch and streaming ISTFT.
///
/// Samples are indexed on the padded timeline. Frame `t` adds into
/// `[t * HOP, t * HOP + WINDOW_LEN)`; frames must be added in increasing order.
#[derive(Debug, Clone, Default)]
pub(crate) struct OverlapAdd {
    sum: Vec<f32>,
    weight: Vec<f32>,
}

impl OverlapAdd {
    pub(crate) fn with_len(len: usize) -> Self {
        Self { sum: vec![0.0; len], weight: vec![0.0; len] }
    }

    /// Adds one windowed frame at `start` (relative to the buffer origin).
    pub(crate) fn add(&mut self, start: usize, frame: &[f32], window_sq: &[f32]) {
        let end = start + frame.len();
        if self.sum.len() < end {
            self.sum.resize(end, 0.0);
            self.weight.resize(end, 0.0);
        }
        for ((s, w), (&x, &w2)) in self.sum[start..end]
            .iter_mut()
            .zip(&mut self.weight[start..end])
            .zip(frame.iter().zip(window_sq))
        {
            *s += x;
            *w += w2;
        }
    }

    pub(crate) fn len(&self) -> usize {
        self.sum.len()
    }

    pub(crate) fn normalized(&self, index: usize) -> f32 {
        normalize(self.sum[index], self.weight[index])
    }

    /// Drops the first `count` samples, shifting the origin forward.
    pub(crate) fn drain_front(&mut self, count: usize) {
        self.sum.drain(..count);
        self.weight.drain(..count);
    }
}

#[inline]
fn normalize(sum: f32, weight: f32) -> f32 {
    if weight > 1e-10 {
        sum / weight
    } else {
        0.0
    }
}

/// Centered STFT, uncompressed. Needs at least one window of samples.
pub fn stft(signal: &AudioSignal) -> Result<ComplexSpectrogram> {
    let n = signal.len();
    if n < WINDOW_LEN {
        return Err(Error::InputTooShort { len: n, min: WINDOW_LEN });
    }
    let padded = reflect_pad(signal.samples())?;
    let frames = frame_count(n);
    let mut spec = ComplexSpectrogram::zeros(frames);
    let mut analyzer = FrameAnalyzer::new();
    for t in 0..frames {
        let start = t * HOP;
        analyzer.analyze(&padded[start..start + WINDOW_LEN], spec.frame_mut(t));
    }
    Ok(spec)
}

/// Weighted overlap-add inverse of [`stft`], trimmed or zero-extended to `out_len`.
pub fn istft(spec: &ComplexSpectrogram, out_len: usize) -> Result<AudioSignal> {
    if spec.is_compressed() {
        return Err(Error::DecompressFirst);
    }
    let mut synth = FrameSynthesizer::new();
    let mut ola = OverlapAdd::with_len(spec.frames().saturating_sub(1) * HOP + WINDOW_LEN);
    let mut frame = vec![0.0f32; WINDOW_LEN];
    for t in 0..spec.frames() {
        synth.synthesize(spec.frame(t), &mut frame);
        ola.add(t * HOP, &frame, synth.window_sq());
    }
    let available = ola.sum.len().saturating_sub(EDGE_PAD);
    let samples = (0..out_len)
        .map(|n| if n < available { ola.normalized(n + EDGE_PAD) } else { 0.0 })
        .collect();
    Ok(AudioSignal { samples })
}

fn check_exponent(p: f32) -> Result<()> {
    if p > 0.0 && p <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidExponent(p))
    }
}

/// `z -> |z|^p e^{i arg z}` with `arg(0) = 0`, so zero maps to zero.
#[inline]
pub fn compress_bin(z: Complex32, exponent: f64) -> Complex32 {
    let re = z.re as f64;
    let im = z.im as f64;
    let magnitude = libm::sqrt(re * re + im * im);
    if magnitude == 0.0 {
        return Complex32::new(0.0, 0.0);
    }
    let scale = libm::pow(magnitude, exponent - 1.0);
    Complex32::new((re * scale) as f32, (im * scale) as f32)
}

/// Power-law compression of a raw spectrogram.
pub fn compress(spec: &ComplexSpectrogram, p: f32) -> Result<ComplexSpectrogram> {
    check_exponent(p)?;
    if spec.is_compressed() {
        return Err(Error::AlreadyCompressed);
    }
    let mut out = spec.clone();
    compress_frame(out.bins_mut(), p);
    out.exponent = p;
    Ok(out)
}

/// Inverse of [`compress`], applying exponent `1/p`.
pub fn decompress(spec: &ComplexSpectrogram) -> Result<ComplexSpectrogram> {
    if !spec.is_compressed() {
        return Err(Error::NotCompressed);
    }
    let mut out = spec.clone();
    decompress_frame(out.bins_mut(), spec.exponent);
    out.exponent = 1.0;
    Ok(out)
}

pub fn compress_frame(bins: &mut [Complex32], p: f32) {
    let exponent = p as f64;
    for z in bins {
        *z = compress_bin(*z, exponent);
    }
}

pub fn decompress_frame(bins: &mut [Complex32], p: f32) {
    let exponent = 1.0 / p as f64;
    for z in bins {
        *z = compress_bin(*z, exponent);
    }
}

/// Magnitude of every bin.
pub fn magnitudes(bins: &[Complex32], out: &mut [f32]) {
    for (o, z) in out.iter_mut().zip(bins) {
        *o = z.norm();
    }
}

/// Scales each bin by its gain. The bin keeps the mixture phase.
#[inline]
pub fn mask_frame(mask: &[f32], bins: &mut [Complex32]) {
    for (z, &m) in bins.iter_mut().zip(mask) {
        *z *= m;
    }
}

/// `mask[t,f] * |X_c[t,f]| * e^{i arg X[t,f]}` over a compressed mixture.
pub fn apply_mask(mask: &MagnitudeMask, mixture: &ComplexSpectrogram) -> Result<ComplexSpectrogram> {
    if !mixture.is_compressed() {
        return Err(Error::NotCompressed);
    }
    if mask.frames() != mixture.frames() {
        return Err(Error::ShapeMismatch {
            what: "mask frames",
            expected: mixture.frames(),
            actual: mask.frames(),
        });
    }
    let mut out = mixture.clone();
    mask_frame(mask.values(), out.bins_mut());
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f32::consts::PI;

    fn sine(freq: f32, len: usize) -> AudioSignal {
        AudioSignal::new(
            (0..len).map(|n| (2.0 * PI * freq * n as f32 / SAMPLE_RATE as f32).sin()).collect(),
        )
        .unwrap()
    }

    fn noise(len: usize, mut state: u64) -> Vec<f32> {
        (0..len)
            .map(|_| {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((state >> 40) as f32 / (1u64 << 24) as f32) * 2.0 - 1.0
            })
            .collect()
    }

    fn interior_rel_error(x: &[f32], y: &[f32]) -> f64 {
        let range = WINDOW_LEN..x.len() - WINDOW_LEN;
        let err: f64 = range.clone().map(|n| ((x[n] - y[n]) as f64).powi(2)).sum();
        let energy: f64 = range.map(|n| (x[n] as f64).powi(2)).sum();
        (err / energy).sqrt()
    }

    #[test]
    fn zero_signal_gives_zero_spectrogram_with_100_frames() {
        let spec = stft(&AudioSignal::zeros(16_000)).unwrap();
        assert_eq!(spec.frames(), 100);
        assert!(spec.bins().iter().all(|z| z.norm() == 0.0));
        assert_eq!(spec.exponent(), 1.0);
    }

    #[test]
    fn frame_count_is_ceil_of_hops() {
        assert_eq!(frame_count(16_000), 100);
        assert_eq!(frame_count(16_001), 101);
        assert_eq!(frame_count(400), 3);
    }

    #[test]
    fn short_input_is_rejected() {
        assert_eq!(
            stft(&AudioSignal::zeros(399)),
            Err(Error::InputTooShort { len: 399, min: 400 })
        );
    }

    #[test]
    fn sine_energy_concentrates_at_bin_32() {
        // Oracle: direct DFT of one interior Hann-windowed frame.
        let x = sine(1000.0, 16_000);
        let w = hann_window();
        let t = 50usize;
        let start = t * HOP - EDGE_PAD;
        let frame = &x.samples()[start..start + WINDOW_LEN];
        let direct = |k: usize| -> f64 {
            let (mut re, mut im) = (0.0f64, 0.0f64);
            for (i, (&s, &wi)) in frame.iter().zip(&w).enumerate() {
                let n = i + FRAME_OFFSET;
                let ang = -2.0 * core::f64::consts::PI * (k * n) as f64 / N_FFT as f64;
                re += (s * wi) as f64 * ang.cos();
                im += (s * wi) as f64 * ang.sin();
            }
            (re * re + im * im).sqrt()
        };
        let spec = stft(&x).unwrap();
        for k in [0usize, 10, 29, 31, 32, 33, 35, 100, 256] {
            let got = spec.frame(t)[k].norm() as f64;
            assert!((got - direct(k)).abs() < 1e-3 * direct(32), "bin {k}");
        }
        for t in 5..95 {
            let frame = spec.frame(t);
            let peak = frame[32].norm();
            for (k, z) in frame.iter().enumerate() {
                if k.abs_diff(32) >= 3 {
                    assert!(20.0 * (peak / z.norm().max(1e-30)).log10() >= 20.0, "t={t} k={k}");
                }
            }
        }
    }

    #[test]
    fn round_trip_white_noise() {
        let x = noise(16_000, 7);
        let spec = stft(&AudioSignal::new(x.clone()).unwrap()).unwrap();
        let y = istft(&spec, x.len()).unwrap();
        assert!(interior_rel_error(&x, y.samples()) <= 1e-5);
        let full: f32 = x.iter().zip(y.samples()).map(|(a, b)| (a - b).abs()).fold(0.0, f32::max);
        assert!(full < 1e-4, "edges reconstruct too: {full}");
    }

    #[test]
    fn round_trip_sine() {
        let x = sine(1000.0, 16_000);
        let y = istft(&stft(&x).unwrap(), x.len()).unwrap();
        let max = (WINDOW_LEN..x.len() - WINDOW_LEN)
            .map(|n| (x.samples()[n] - y.samples()[n]).abs())
            .fold(0.0, f32::max);
        assert!(max <= 1e-4);
    }

    #[test]
    fn zero_spectrogram_inverts_to_silence() {
        let y = istft(&ComplexSpectrogram::zeros(100), 16_000).unwrap();
        assert!(y.samples().iter().all(|&s| s == 0.0));
    }

    #[test]
    fn istft_rejects_compressed() {
        let spec = compress(&ComplexSpectrogram::zeros(3), 0.3).unwrap();
        assert_eq!(istft(&spec, 480), Err(Error::DecompressFirst));
    }

    #[test]
    fn compress_scalar_cases() {
        assert_eq!(compress_bin(Complex32::new(0.0, 0.0), 0.3), Complex32::new(0.0, 0.0));
        let c = compress_bin(Complex32::new(8.0, 0.0), 0.3);
        // 8^0.3 = 2^0.9
        assert!((c.re - 1.866_066).abs() < 1e-5 && c.im == 0.0);
        for i in 0..16 {
            let theta = i as f32 * 0.4;
            let z = Complex32::from_polar(1.0, theta);
            let c = compress_bin(z, 0.3);
            assert!((c - z).norm() < 1e-6);
        }
    }

    #[test]
    fn compress_state_errors() {
        let raw = ComplexSpectrogram::zeros(2);
        assert_eq!(compress(&raw, 0.0), Err(Error::InvalidExponent(0.0)));
        assert_eq!(compress(&raw, 1.5), Err(Error::InvalidExponent(1.5)));
        assert_eq!(decompress(&raw), Err(Error::NotCompressed));
        let c = compress(&raw, 0.3).unwrap();
        assert_eq!(compress(&c, 0.3), Err(Error::AlreadyCompressed));
    }

    #[test]
    fn apply_mask_cases() {
        let x = AudioSignal::new(noise(4_000, 3)).unwrap();
        let mix = compress(&stft(&x).unwrap(), 0.3).unwrap();
        let ones = MagnitudeMask::filled(mix.frames(), 1.0).unwrap();
        assert_eq!(apply_mask(&ones, &mix).unwrap(), mix);
        let zeros = MagnitudeMask::filled(mix.frames(), 0.0).unwrap();
        assert!(apply_mask(&zeros, &mix).unwrap().bins().iter().all(|z| z.norm() == 0.0));
        let half = MagnitudeMask::filled(mix.frames(), 0.5).unwrap();
        let out = apply_mask(&half, &mix).unwrap();
        for (a, b) in out.bins().iter().zip(mix.bins()) {
            assert!((a.norm() - 0.5 * b.norm()).abs() <= 1e-6 * b.norm().max(1e-30));
            if b.norm() > 0.0 {
                assert!((a.arg() - b.arg()).abs() < 1e-6);
            }
        }
        let short = MagnitudeMask::filled(mix.frames() - 1, 1.0).unwrap();
        assert!(matches!(apply_mask(&short, &mix), Err(Error::ShapeMismatch { .. })));
        assert_eq!(apply_mask(&ones, &decompress(&mix).unwrap()), Err(Error::NotCompressed));
    }

    #[test]
    fn mask_values_are_range_checked() {
        assert!(matches!(MagnitudeMask::filled(1, 1.01), Err(Error::MaskRange { .. })));
        assert!(matches!(MagnitudeMask::filled(1, -0.1), Err(Error::MaskRange { .. })));
        assert!(matches!(MagnitudeMask::new(vec![0.5; 10]), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn signal_validation() {
        assert_eq!(AudioSignal::new(vec![0.0, f32::NAN]), Err(Error::NonFinite("audio samples")));
        assert_eq!(AudioSignal::with_rate(vec![0.0], 44_100), Err(Error::SampleRate(44_100)));
    }
}
