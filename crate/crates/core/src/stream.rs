//! Frame-synchronous streaming engine.
//!
//! One tick consumes one 40 ms quantum: a 640-sample audio block and one
//! 25 fps embedding frame. Output block `k` is emitted once audio blocks and
//! video frames up to `k + 2` are buffered, so the first block appears after
//! three input blocks and the output trails the input by exactly 120 ms.
//!
//! Emitting block `k` finalizes its 640 output samples, which needs mask
//! frames up to `4k + 5` (the last STFT frame overlapping the block). Those
//! frames need spectrogram context up to `4k + 7` and embeddings up to
//! `k + 1`, all inside the lookahead that was waited for.
//!
//! The engine repeats the offline pipeline's floating-point work frame by
//! frame in the same order, so concatenated output equals
//! [`enhance_offline`](crate::model::enhance_offline) bit for bit.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;
use num_complex::Complex32;

use crate::dsp::{self, FrameAnalyzer, FrameSynthesizer, OverlapAdd, EDGE_PAD};
use crate::model::{FrameMasker, VisualEmbeddingFrame};
use crate::{
    Error, Result, BINS, BLOCK_LEN, COMPRESSION, CONTEXT_FRAMES, FRAMES_PER_BLOCK, FRAME_DEADLINE_MS, HOP,
    SAMPLE_RATE, VIDEO_LOOKAHEAD, WINDOW_LEN,
};

/// Video frames the engine keeps around the frame being emitted.
pub const VIDEO_RING: usize = 2 * VIDEO_LOOKAHEAD + 1;
/// Input blocks buffered before the first output block.
pub const PRIMING_BLOCKS: usize = 1 + VIDEO_LOOKAHEAD;

/// Monotonic time source for deadline accounting.
pub trait Clock {
    fn now_ns(&self) -> u64;
}

/// Clock that never advances; every tick measures 0 ms.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoClock;

impl Clock for NoClock {
    fn now_ns(&self) -> u64 {
        0
    }
}

impl<C: Clock + ?Sized> Clock for &C {
    fn now_ns(&self) -> u64 {
        (**self).now_ns()
    }
}

/// What replaces video frames that never arrived.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GapFallback {
    /// The encoder's output for an all-zero input.
    #[default]
    ZeroEmbedding,
    /// The most recent received embedding.
    DuplicateLast,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StreamConfig {
    pub fallback: GapFallback,
    pub deadline_ms: f64,
}

impl Default for StreamConfig {
    fn default() -> Self {
        Self { fallback: GapFallback::default(), deadline_ms: FRAME_DEADLINE_MS }
    }
}

/// One audio quantum as delivered by a source.
#[derive(Debug, Clone, Copy)]
pub struct AudioBlock<'a> {
    pub samples: &'a [f32],
    pub sample_rate: u32,
    /// Marks the final block. It may be shorter than 640 samples, or empty.
    pub end: bool,
}

impl<'a> AudioBlock<'a> {
    pub fn new(samples: &'a [f32]) -> Self {
        Self { samples, sample_rate: SAMPLE_RATE, end: false }
    }

    pub fn last(samples: &'a [f32]) -> Self {
        Self { samples, sample_rate: SAMPLE_RATE, end: true }
    }
}

/// Outcome of [`StreamEngine::push_video_frame`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VideoPush {
    /// Frame buffered; `filled` missing indices before it received the fallback.
    Accepted { filled: usize },
    /// Same index as the previous frame; ignored.
    Duplicate,
    /// Index older than the previous frame; ignored.
    OutOfOrder,
}

/// Processing time of one emitted block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameTiming {
    pub tick: usize,
    pub processing_ms: f64,
    pub missed: bool,
}

/// Per-frame processing times against the frame deadline.
#[derive(Debug, Clone, PartialEq)]
pub struct LatencyReport {
    pub deadline_ms: f64,
    processing_ms: Vec<f64>,
    misses: usize,
}

impl LatencyReport {
    pub fn new(deadline_ms: f64) -> Self {
        Self { deadline_ms, processing_ms: Vec::new(), misses: 0 }
    }

    pub fn record(&mut self, tick: usize, processing_ms: f64) -> FrameTiming {
        let missed = processing_ms > self.deadline_ms;
        self.misses += usize::from(missed);
        self.processing_ms.push(processing_ms);
        FrameTiming { tick, processing_ms, missed }
    }

    pub fn ticks(&self) -> usize {
        self.processing_ms.len()
    }

    pub fn misses(&self) -> usize {
        self.misses
    }

    pub fn samples(&self) -> &[f64] {
        &self.processing_ms
    }

    /// Nearest-rank percentile, `q` in `[0, 1]`. Zero when nothing was recorded.
    pub fn percentile(&self, q: f64) -> f64 {
        if self.processing_ms.is_empty() {
            return 0.0;
        }
        let mut sorted = self.processing_ms.clone();
        sorted.sort_by(f64::total_cmp);
        let rank = libm::ceil(q.clamp(0.0, 1.0) * sorted.len() as f64) as usize;
        sorted[rank.clamp(1, sorted.len()) - 1]
    }

    pub fn p50(&self) -> f64 {
        self.percentile(0.5)
    }

    pub fn p95(&self) -> f64 {
        self.percentile(0.95)
    }

    pub fn max(&self) -> f64 {
        self.processing_ms.iter().copied().fold(0.0, f64::max)
    }
}

/// Result of one [`StreamEngine::process_tick`].
#[derive(Debug, Clone, PartialEq)]
pub struct Tick {
    pub block: Option<Vec<f32>>,
    pub timing: Option<FrameTiming>,
}

/// Per-stream engine state. One owner; feed it from any thread by value.
pub struct StreamEngine<M, C = NoClock> {
    masker: M,
    clock: C,
    config: StreamConfig,
    analyzer: FrameAnalyzer,
    synth: FrameSynthesizer,

    // Padded audio timeline: original sample n lives at padded index n + EDGE_PAD.
    padded: Vec<f32>,
    padded_origin: usize,
    blocks_in: usize,
    last_block_len: usize,
    audio_ended: bool,

    // Compressed spectra and their magnitudes, frame `spectra_origin` first.
    next_frame: usize,
    spectra: VecDeque<Vec<Complex32>>,
    magnitudes: VecDeque<Vec<f32>>,
    spectra_origin: usize,
    next_mask: usize,

    // Embeddings, frame `video_origin` first.
    video: VecDeque<Vec<f32>>,
    video_origin: usize,
    video_in: usize,
    video_ended: bool,
    gap_fills: usize,

    ola: OverlapAdd,
    ola_origin: usize,
    next_block: usize,
    report: LatencyReport,

    context: Vec<f32>,
    mask: Vec<f32>,
    frame: Vec<f32>,
    spectrum: Vec<Complex32>,
}

impl<M: FrameMasker> StreamEngine<M, NoClock> {
    pub fn new(masker: M) -> Self {
        Self::with_clock(masker, NoClock, StreamConfig::default())
    }
}

impl<M: FrameMasker, C: Clock> StreamEngine<M, C> {
    pub fn with_clock(mut masker: M, clock: C, config: StreamConfig) -> Self {
        masker.reset();
        let report = LatencyReport::new(config.deadline_ms);
        Self {
            masker,
            clock,
            config,
            analyzer: FrameAnalyzer::new(),
            synth: FrameSynthesizer::new(),
            padded: Vec::new(),
            padded_origin: 0,
            blocks_in: 0,
            last_block_len: 0,
            audio_ended: false,
            next_frame: 0,
            spectra: VecDeque::new(),
            magnitudes: VecDeque::new(),
            spectra_origin: 0,
            next_mask: 0,
            video: VecDeque::new(),
            video_origin: 0,
            video_in: 0,
            video_ended: false,
            gap_fills: 0,
            ola: OverlapAdd::default(),
            ola_origin: 0,
            next_block: 0,
            report,
            context: vec![0.0; CONTEXT_FRAMES * BINS],
            mask: vec![0.0; BINS],
            frame: vec![0.0; WINDOW_LEN],
            spectrum: vec![Complex32::new(0.0, 0.0); BINS],
        }
    }

    pub fn masker(&self) -> &M {
        &self.masker
    }

    pub fn report(&self) -> &LatencyReport {
        &self.report
    }

    /// Video slots filled with the fallback embedding so far.
    pub fn gap_fills(&self) -> usize {
        self.gap_fills
    }

    pub fn emitted_blocks(&self) -> usize {
        self.next_block
    }

    pub fn audio_blocks(&self) -> usize {
        self.blocks_in
    }

    pub fn video_frames(&self) -> usize {
        self.video_in
    }

    /// True once the end of audio was pushed and every block was emitted.
    pub fn is_finished(&self) -> bool {
        self.audio_ended && self.next_block >= self.blocks_in
    }

    /// Whether the next block to emit still waits on audio.
    pub fn wants_audio(&self) -> bool {
        !self.audio_ended && self.blocks_in < self.next_block + PRIMING_BLOCKS
    }

    /// Whether the next block to emit still waits on video.
    pub fn wants_video(&self) -> bool {
        !self.video_ended && self.video_in < self.video_needed()
    }

    fn video_needed(&self) -> usize {
        let want = self.next_block + PRIMING_BLOCKS;
        if self.audio_ended { want.min(self.blocks_in) } else { want }
    }

    pub fn push_audio_block(&mut self, block: AudioBlock<'_>) -> Result<()> {
        if self.audio_ended {
            return Err(Error::StreamEnded);
        }
        if block.sample_rate != SAMPLE_RATE {
            return Err(Error::SampleRate(block.sample_rate));
        }
        let len = block.samples.len();
        if len > BLOCK_LEN || (len < BLOCK_LEN && !block.end) {
            return Err(Error::BlockSize { len });
        }
        if block.samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::NonFinite("audio samples"));
        }
        if len > 0 {
            let mut quantum = block.samples.to_vec();
            quantum.resize(BLOCK_LEN, 0.0);
            if self.blocks_in == 0 {
                self.padded.extend(dsp::reflect_head(&quantum));
            }
            self.padded.extend_from_slice(&quantum);
            self.blocks_in += 1;
            self.last_block_len = len;
        }
        if block.end {
            self.audio_ended = true;
            if self.blocks_in > 0 {
                // Retained samples always end at the last original sample.
                let n = self.padded.len();
                let tail: Vec<f32> = (0..EDGE_PAD).map(|j| self.padded[n - 2 - j]).collect();
                self.padded.extend(tail);
            }
        }
        Ok(())
    }

    pub fn push_video_frame(&mut self, frame: VisualEmbeddingFrame) -> Result<VideoPush> {
        if self.video_ended {
            return Err(Error::StreamEnded);
        }
        let dim = self.masker.embedding_dim();
        if frame.vector.len() != dim {
            return Err(Error::EmbeddingDim { expected: dim, actual: frame.vector.len() });
        }
        if frame.vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("visual embedding"));
        }
        let index = frame.index as usize;
        if index < self.video_in {
            return Ok(if index + 1 == self.video_in { VideoPush::Duplicate } else { VideoPush::OutOfOrder });
        }
        let filled = index - self.video_in;
        for _ in 0..filled {
            let fallback = match (self.config.fallback, self.video.back()) {
                (GapFallback::DuplicateLast, Some(last)) => last.clone(),
                _ => self.masker.zero_embedding().to_vec(),
            };
            self.video.push_back(fallback);
        }
        self.gap_fills += filled;
        let vector = if frame.valid { frame.vector } else { self.masker.zero_embedding().to_vec() };
        self.video.push_back(vector);
        self.video_in = index + 1;
        Ok(VideoPush::Accepted { filled })
    }

    /// No more video will arrive; missing lookahead duplicates the last frame.
    pub fn end_video(&mut self) {
        self.video_ended = true;
    }

    /// Ends both inputs.
    pub fn finish(&mut self) -> Result<()> {
        if !self.audio_ended {
            self.push_audio_block(AudioBlock::last(&[]))?;
        }
        self.end_video();
        Ok(())
    }

    /// Emits the next enhanced block if its full context is buffered.
    pub fn process_tick(&mut self) -> Result<Tick> {
        let k = self.next_block;
        let idle = Tick { block: None, timing: None };
        if self.is_finished() {
            return Ok(idle);
        }
        let audio_ready = self.audio_ended || self.blocks_in >= k + PRIMING_BLOCKS;
        let video_ready = self.video_ended || self.video_in >= self.video_needed();
        if !audio_ready || !video_ready {
            return Ok(idle);
        }
        let started = self.clock.now_ns();
        let block = self.emit_block(k)?;
        let elapsed_ms = self.clock.now_ns().saturating_sub(started) as f64 / 1e6;
        let timing = self.report.record(k, elapsed_ms);
        Ok(Tick { block: Some(block), timing: Some(timing) })
    }

    /// Runs ticks until one yields nothing; returns the concatenated output.
    pub fn drain(&mut self) -> Result<Vec<f32>> {
        let mut out = Vec::new();
        while let Some(block) = self.process_tick()?.block {
            out.extend_from_slice(&block);
        }
        Ok(out)
    }

    fn total_frames(&self) -> Option<usize> {
        self.audio_ended.then_some(self.blocks_in * FRAMES_PER_BLOCK)
    }

    fn analyze_available(&mut self) {
        let padded_end = self.padded_origin + self.padded.len();
        let limit = self.total_frames().unwrap_or(usize::MAX);
        while self.next_frame < limit && self.next_frame * HOP + WINDOW_LEN <= padded_end {
            let start = self.next_frame * HOP - self.padded_origin;
            let mut spectrum = vec![Complex32::new(0.0, 0.0); BINS];
            self.analyzer.analyze(&self.padded[start..start + WINDOW_LEN], &mut spectrum);
            dsp::compress_frame(&mut spectrum, COMPRESSION);
            let mut mags = vec![0.0f32; BINS];
            dsp::magnitudes(&spectrum, &mut mags);
            self.spectra.push_back(spectrum);
            self.magnitudes.push_back(mags);
            self.next_frame += 1;
        }
    }

    fn embedding_for(&self, video_index: usize) -> &[f32] {
        if video_index < self.video_in {
            &self.video[video_index - self.video_origin]
        } else {
            // Past the end of the video stream: hold the last frame.
            self.video.back().map_or(self.masker.zero_embedding(), |v| v.as_slice())
        }
    }

    fn emit_block(&mut self, k: usize) -> Result<Vec<f32>> {
        self.analyze_available();
        let half = CONTEXT_FRAMES / 2;
        let mut last_mask = FRAMES_PER_BLOCK * k + FRAMES_PER_BLOCK + 1;
        if let Some(total) = self.total_frames() {
            last_mask = last_mask.min(total - 1);
        }
        let newest = self.next_frame - 1;
        while self.next_mask <= last_mask {
            let t = self.next_mask;
            for j in 0..CONTEXT_FRAMES {
                let src = (t + j).saturating_sub(half).min(newest);
                self.context[j * BINS..(j + 1) * BINS]
                    .copy_from_slice(&self.magnitudes[src - self.spectra_origin]);
            }
            let embedding = self.embedding_for(t / FRAMES_PER_BLOCK).to_vec();
            self.masker.mask_frame(&self.context, &embedding, &mut self.mask)?;
            self.spectrum.copy_from_slice(&self.spectra[t - self.spectra_origin]);
            dsp::mask_frame(&self.mask, &mut self.spectrum);
            dsp::decompress_frame(&mut self.spectrum, COMPRESSION);
            self.synth.synthesize(&self.spectrum, &mut self.frame);
            self.ola.add(t * HOP - self.ola_origin, &self.frame, self.synth.window_sq());
            self.next_mask += 1;
        }

        let len = if self.audio_ended && k + 1 == self.blocks_in { self.last_block_len } else { BLOCK_LEN };
        let first = k * BLOCK_LEN + EDGE_PAD;
        let block = (first..first + len).map(|p| self.ola.normalized(p - self.ola_origin)).collect();
        self.next_block += 1;
        self.release(first + BLOCK_LEN);
        Ok(block)
    }

    /// Drops state no future block can reference.
    fn release(&mut self, ola_keep_from: usize) {
        let ola_drop = ola_keep_from.saturating_sub(self.ola_origin);
        if ola_drop > 0 {
            self.ola.drain_front(ola_drop.min(self.ola.len()));
            self.ola_origin += ola_drop;
        }
        let keep_frame = self.next_mask.saturating_sub(CONTEXT_FRAMES / 2);
        while self.spectra_origin < keep_frame && !self.spectra.is_empty() {
            self.spectra.pop_front();
            self.magnitudes.pop_front();
            self.spectra_origin += 1;
        }
        let keep_video = self.next_mask / FRAMES_PER_BLOCK;
        while self.video_origin < keep_video && self.video.len() > 1 {
            self.video.pop_front();
            self.video_origin += 1;
        }
        let keep_sample = self.next_frame * HOP;
        let drop = keep_sample.saturating_sub(self.padded_origin).min(self.padded.len());
        // Keep enough original samples for the end-of-stream reflection.
        let drop = if self.audio_ended { drop } else { drop.min(self.padded.len().saturating_sub(WINDOW_LEN)) };
        if drop > 0 {
            self.padded.drain(..drop);
            self.padded_origin += drop;
        }
    }
}
