use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

/// Stopband attenuation the anti-aliasing filter is designed for.
pub const STOPBAND_DB: f64 = 60.0;

/// Rational-ratio polyphase resampler with a Kaiser-windowed sinc filter.
///
/// Cutoff sits at the lower of the two Nyquist rates with a transition band
/// of a tenth of it, and the filter is applied zero-phase.
#[derive(Debug, Clone)]
pub struct KaiserResampler {
    up: usize,
    down: usize,
    taps: Vec<f64>,
    half: usize,
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 { a } else { gcd(b, a % b) }
}

/// Zeroth-order modified Bessel function of the first kind.
fn bessel_i0(x: f64) -> f64 {
    let (mut sum, mut term, mut k) = (1.0f64, 1.0f64, 1.0f64);
    let q = x * x / 4.0;
    while term > sum * 1e-17 {
        term *= q / (k * k);
        sum += term;
        k += 1.0;
    }
    sum
}

impl KaiserResampler {
    pub fn new(from_hz: usize, to_hz: usize) -> Self {
        assert!(from_hz > 0 && to_hz > 0, "sample rates must be positive");
        let g = gcd(from_hz, to_hz);
        let (up, down) = (to_hz / g, from_hz / g);
        let cutoff = 1.0 / (2.0 * up.max(down) as f64);
        let transition = cutoff / 10.0;
        let half = libm::ceil((STOPBAND_DB - 8.0) / (28.714 * transition)) as usize;
        let beta = 0.1102 * (STOPBAND_DB - 8.7);
        let norm = bessel_i0(beta);
        let taps = (0..=2 * half)
            .map(|i| {
                let t = i as f64 - half as f64;
                let x = 2.0 * cutoff * t;
                let sinc = if x == 0.0 { 1.0 } else { libm::sin(PI * x) / (PI * x) };
                let r = t / half as f64;
                let window = bessel_i0(beta * libm::sqrt((1.0 - r * r).max(0.0))) / norm;
                2.0 * up as f64 * cutoff * sinc * window
            })
            .collect();
        Self { up, down, taps, half }
    }

    pub fn ratio(&self) -> (usize, usize) {
        (self.up, self.down)
    }

    pub fn output_len(&self, input_len: usize) -> usize {
        (input_len * self.up).div_ceil(self.down)
    }

    pub fn process(&self, input: &[f32]) -> Vec<f64> {
        let mut out = vec![0.0f64; self.output_len(input.len())];
        let (up, half) = (self.up as isize, self.half as isize);
        for (m, y) in out.iter_mut().enumerate() {
            // Position on the upsampled grid, shifted by the filter delay.
            let centre = (m * self.down) as isize + half;
            // Input samples n with 0 <= centre - n*up <= 2*half.
            let lo = ((centre - 2 * half).max(0) + up - 1) / up;
            let hi = (centre / up).min(input.len() as isize - 1);
            let mut acc = 0.0f64;
            let mut n = lo;
            while n <= hi {
                acc += self.taps[(centre - n * up) as usize] * input[n as usize] as f64;
                n += 1;
            }
            *y = acc;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone(hz: f64, rate: f64, len: usize) -> Vec<f32> {
        (0..len).map(|n| libm::sin(2.0 * PI * hz * n as f64 / rate) as f32).collect()
    }

    fn rms(x: &[f64]) -> f64 {
        libm::sqrt(x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64)
    }

    #[test]
    fn ratio_and_length() {
        let r = KaiserResampler::new(16_000, 10_000);
        assert_eq!(r.ratio(), (5, 8));
        assert_eq!(r.output_len(16_000), 10_000);
        assert_eq!(r.output_len(17), 11);
    }

    #[test]
    fn passband_is_preserved() {
        let r = KaiserResampler::new(16_000, 10_000);
        let y = r.process(&tone(1000.0, 16_000.0, 16_000));
        let expected = tone(1000.0, 10_000.0, 10_000);
        for (a, b) in y[500..9500].iter().zip(&expected[500..9500]) {
            assert!((a - *b as f64).abs() < 2e-3, "{a} vs {b}");
        }
    }

    #[test]
    fn stopband_attenuation() {
        let r = KaiserResampler::new(16_000, 10_000);
        for hz in [5_400.0, 6_000.0, 7_500.0] {
            let y = r.process(&tone(hz, 16_000.0, 16_000));
            let level = 20.0 * libm::log10(rms(&y[1000..9000]) * libm::sqrt(2.0));
            assert!(level < -STOPBAND_DB, "{hz} Hz leaks at {level:.1} dB");
        }
    }
}
