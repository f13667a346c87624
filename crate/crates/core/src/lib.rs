//! Core of a real-time audio-visual speech enhancement engine.
//!
//! The crate is `no_std` and only needs an allocator. It contains everything
//! that is pure computation:
//!
//! - [`dsp`]: centered STFT / weighted overlap-add ISTFT, power-law
//!   compression and phase-preserving mask application.
//! - [`model`]: inference of the mask-estimation network (audio CNN,
//!   visual-embedding upsampling, unidirectional LSTM, three dense layers,
//!   sigmoid mask) and the offline enhancement pipeline.
//! - [`stream`]: the frame-synchronous streaming engine with its 5-frame
//!   video lookahead, 120 ms algorithmic latency and deadline accounting.
//! - [`mixture`]: SNR-controlled mixture generation, clip conditioning and
//!   visual-embedding augmentation.
//! - [`metrics`]: SI-SDR, ESTOI and the phase-sensitive spectrogram loss.
//!
//! File formats, WAV I/O, threads and the command line live in the `avse`
//! companion crate.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod dsp;
pub mod error;
pub mod fft;
pub mod metrics;
pub mod mixture;
pub mod model;
pub mod stream;

pub use error::{Error, Result};

/// Sample rate of every engine path, in Hz.
pub const SAMPLE_RATE: u32 = 16_000;
/// Analysis window length in samples (25 ms).
pub const WINDOW_LEN: usize = 400;
/// STFT hop in samples (10 ms, 100 frames/s).
pub const HOP: usize = 160;
/// FFT size; the window is zero-padded to this length.
pub const N_FFT: usize = 512;
/// Number of one-sided frequency bins.
pub const BINS: usize = N_FFT / 2 + 1;
/// Power-law compression exponent used by the network and the loss.
pub const COMPRESSION: f32 = 0.3;
/// Video frame rate of the embedding streams.
pub const VIDEO_FPS: u32 = 25;
/// Audio samples per video frame (40 ms). This is the streaming quantum.
pub const BLOCK_LEN: usize = (SAMPLE_RATE / VIDEO_FPS) as usize;
/// Spectrogram frames per video frame.
pub const FRAMES_PER_BLOCK: usize = BLOCK_LEN / HOP;
/// Temporal receptive field of the audio CNN, in spectrogram frames.
pub const CONTEXT_FRAMES: usize = 5;
/// Future video frames the visual front-end needs before the current one is usable.
pub const VIDEO_LOOKAHEAD: usize = 2;
/// End-to-end algorithmic latency: the current frame plus the lookahead.
pub const ALGORITHMIC_LATENCY_MS: u32 = (1 + VIDEO_LOOKAHEAD as u32) * 1000 / VIDEO_FPS;
/// Processing deadline for one streaming tick.
pub const FRAME_DEADLINE_MS: f64 = 1000.0 / VIDEO_FPS as f64;
