//! Iterative radix-2 complex FFT for power-of-two sizes.

use alloc::vec::Vec;
use num_complex::Complex;
use num_traits::{Float, FloatConst};

/// Precomputed twiddles and bit-reversal permutation for one transform size.
#[derive(Debug, Clone)]
pub struct Fft<T> {
    len: usize,
    twiddles: Vec<Complex<T>>,
    reversed: Vec<usize>,
}

impl<T: Float + FloatConst> Fft<T> {
    /// Panics if `len` is not a power of two.
    pub fn new(len: usize) -> Self {
        assert!(len.is_power_of_two(), "FFT length must be a power of two");
        let bits = len.trailing_zeros();
        let reversed = (0..len)
            .map(|i| if bits == 0 { 0 } else { i.reverse_bits() >> (usize::BITS - bits) })
            .collect();
        let step = -T::TAU() / T::from(len).unwrap();
        let twiddles = (0..len / 2)
            .map(|k| {
                let angle = step * T::from(k).unwrap();
                Complex::new(angle.cos(), angle.sin())
            })
            .collect();
        Self { len, twiddles, reversed }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// In-place forward transform, `X[k] = sum x[n] e^{-2 pi i k n / N}`.
    pub fn forward(&self, data: &mut [Complex<T>]) {
        self.transform(data, false);
    }

    /// In-place inverse transform including the `1/N` scale.
    pub fn inverse(&self, data: &mut [Complex<T>]) {
        self.transform(data, true);
        let scale = T::one() / T::from(self.len).unwrap();
        for z in data.iter_mut() {
            *z = *z * scale;
        }
    }

    fn transform(&self, data: &mut [Complex<T>], inverse: bool) {
        assert_eq!(data.len(), self.len);
        for (i, &j) in self.reversed.iter().enumerate() {
            if i < j {
                data.swap(i, j);
            }
        }
        let mut size = 2;
        while size <= self.len {
            let half = size / 2;
            let stride = self.len / size;
            for start in (0..self.len).step_by(size) {
                for k in 0..half {
                    let w = self.twiddles[k * stride];
                    let w = if inverse { w.conj() } else { w };
                    let a = data[start + k];
                    let b = data[start + k + half] * w;
                    data[start + k] = a + b;
                    data[start + k + half] = a - b;
                }
            }
            size *= 2;
        }
    }
}
