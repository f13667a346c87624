//! Threaded driver for the streaming engine.
//!
//! Each source runs on its own producer thread and hands data over bounded
//! channels, so a fast producer blocks instead of buffering without limit.
//! The calling thread is the single consumer: it only pulls from a channel
//! when the engine says it needs that input to make progress.

use std::io::{self, Read, Write};
use std::sync::mpsc::{sync_channel, Receiver};
use std::thread;

use avse_core::model::{FrameMasker, VisualEmbeddingFrame};
use avse_core::stream::{AudioBlock, Clock, LatencyReport, StreamEngine, VideoPush};
use avse_core::BLOCK_LEN;

use crate::telemetry::{Telemetry, TickRecord};

/// Blocks in flight per channel.
pub const CHANNEL_CAPACITY: usize = 4;

pub trait AudioSource: Send + 'static {
    /// Fills `out` (one 640-sample block) and returns the number of samples
    /// written. Fewer than 640 means the stream ended.
    fn read_block(&mut self, out: &mut [f32]) -> io::Result<usize>;
}

/// In-memory samples, e.g. decoded from a WAV file.
pub struct SamplesSource {
    samples: Vec<f32>,
    pos: usize,
}

impl SamplesSource {
    pub fn new(samples: Vec<f32>) -> Self {
        Self { samples, pos: 0 }
    }
}

impl AudioSource for SamplesSource {
    fn read_block(&mut self, out: &mut [f32]) -> io::Result<usize> {
        let n = out.len().min(self.samples.len() - self.pos);
        out[..n].copy_from_slice(&self.samples[self.pos..self.pos + n]);
        self.pos += n;
        Ok(n)
    }
}

/// Raw little-endian f32 samples from a pipe, socket or file.
pub struct RawF32Source<R> {
    inner: R,
}

impl<R: Read + Send + 'static> RawF32Source<R> {
    pub fn new(inner: R) -> Self {
        Self { inner }
    }
}

impl<R: Read + Send + 'static> AudioSource for RawF32Source<R> {
    fn read_block(&mut self, out: &mut [f32]) -> io::Result<usize> {
        let mut bytes = vec![0u8; out.len() * 4];
        let mut filled = 0;
        while filled < bytes.len() {
            match self.inner.read(&mut bytes[filled..]) {
                Ok(0) => break,
                Ok(n) => filled += n,
                Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
                Err(e) => return Err(e),
            }
        }
        if filled % 4 != 0 {
            return Err(io::Error::new(io::ErrorKind::UnexpectedEof, "audio stream ended mid-sample"));
        }
        for (o, c) in out.iter_mut().zip(bytes[..filled].chunks_exact(4)) {
            *o = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
        }
        Ok(filled / 4)
    }
}

pub type EmbeddingSource = Box<dyn Iterator<Item = crate::Result<VisualEmbeddingFrame>> + Send>;

pub trait BlockSink {
    fn write_block(&mut self, samples: &[f32]) -> io::Result<()>;

    fn finish(&mut self) -> io::Result<()> {
        Ok(())
    }
}

impl BlockSink for Vec<f32> {
    fn write_block(&mut self, samples: &[f32]) -> io::Result<()> {
        self.extend_from_slice(samples);
        Ok(())
    }
}

/// Raw little-endian f32 output, flushed after every block.
pub struct RawF32Sink<W>(pub W);

impl<W: Write> BlockSink for RawF32Sink<W> {
    fn write_block(&mut self, samples: &[f32]) -> io::Result<()> {
        let bytes: Vec<u8> = samples.iter().flat_map(|s| s.to_le_bytes()).collect();
        self.0.write_all(&bytes)?;
        self.0.flush()
    }

    fn finish(&mut self) -> io::Result<()> {
        self.0.flush()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StreamSummary {
    pub report: LatencyReport,
    pub audio_blocks: usize,
    pub video_frames: usize,
    pub emitted_samples: usize,
    pub gap_fills: usize,
    pub duplicates: usize,
    pub out_of_order: usize,
}

impl StreamSummary {
    /// Video frames received minus audio blocks received.
    pub fn drift_frames(&self) -> i64 {
        self.video_frames as i64 - self.audio_blocks as i64
    }
}

#[derive(Debug, thiserror::Error)]
pub enum StreamFailure {
    #[error("audio source failed: {0}")]
    Audio(String),
    #[error("embedding source failed: {0}")]
    Video(String),
    #[error("output failed: {0}")]
    Sink(io::Error),
    #[error(transparent)]
    Engine(#[from] avse_core::Error),
}

/// A failed run with whatever was measured before the failure.
#[derive(Debug, thiserror::Error)]
#[error("{failure}")]
pub struct RunError {
    pub failure: StreamFailure,
    pub summary: StreamSummary,
}

enum AudioMsg {
    Block(Vec<f32>),
    Failed(String),
}

fn spawn_audio<A: AudioSource>(mut source: A) -> Receiver<AudioMsg> {
    let (tx, rx) = sync_channel(CHANNEL_CAPACITY);
    thread::spawn(move || loop {
        let mut block = vec![0.0f32; BLOCK_LEN];
        let msg = match source.read_block(&mut block) {
            Ok(n) => {
                block.truncate(n);
                AudioMsg::Block(block)
            }
            Err(e) => AudioMsg::Failed(e.to_string()),
        };
        let last = !matches!(&msg, AudioMsg::Block(b) if b.len() == BLOCK_LEN);
        if tx.send(msg).is_err() || last {
            return;
        }
    });
    rx
}

fn spawn_video(source: EmbeddingSource) -> Receiver<Option<Result<VisualEmbeddingFrame, String>>> {
    let (tx, rx) = sync_channel(CHANNEL_CAPACITY);
    thread::spawn(move || {
        for item in source {
            let failed = item.is_err();
            if tx.send(Some(item.map_err(|e| e.to_string()))).is_err() || failed {
                return;
            }
        }
        let _ = tx.send(None);
    });
    rx
}

/// Drives `engine` to the end of the audio stream, writing enhanced blocks
/// to `sink` and one telemetry record per emitted block.
///
/// Producer threads are not joined: after a failure they may still be
/// blocked on their source and are left to exit with the process.
pub fn run_stream<M, C, A, S>(
    engine: &mut StreamEngine<M, C>,
    audio: A,
    video: EmbeddingSource,
    sink: &mut S,
    telemetry: &mut Telemetry,
) -> Result<StreamSummary, RunError>
where
    M: FrameMasker,
    C: Clock,
    A: AudioSource,
    S: BlockSink + ?Sized,
{
    let audio_rx = spawn_audio(audio);
    let video_rx = spawn_video(video);
    let mut counters = Counters::default();
    let result = consume(engine, &audio_rx, &video_rx, sink, telemetry, &mut counters);
    let summary = StreamSummary {
        report: engine.report().clone(),
        audio_blocks: engine.audio_blocks(),
        video_frames: engine.video_frames(),
        emitted_samples: counters.emitted_samples,
        gap_fills: engine.gap_fills(),
        duplicates: counters.duplicates,
        out_of_order: counters.out_of_order,
    };
    let _ = telemetry.flush();
    match result {
        Ok(()) => Ok(summary),
        Err(failure) => Err(RunError { failure, summary }),
    }
}

#[derive(Default)]
struct Counters {
    emitted_samples: usize,
    duplicates: usize,
    out_of_order: usize,
    reported_fills: usize,
}

fn consume<M: FrameMasker, C: Clock, S: BlockSink + ?Sized>(
    engine: &mut StreamEngine<M, C>,
    audio_rx: &Receiver<AudioMsg>,
    video_rx: &Receiver<Option<Result<VisualEmbeddingFrame, String>>>,
    sink: &mut S,
    telemetry: &mut Telemetry,
    counters: &mut Counters,
) -> Result<(), StreamFailure> {
    loop {
        loop {
            let tick = engine.process_tick()?;
            let Some(block) = tick.block else { break };
            sink.write_block(&block).map_err(StreamFailure::Sink)?;
            counters.emitted_samples += block.len();
            if let Some(timing) = tick.timing {
                let fills = engine.gap_fills() - counters.reported_fills;
                counters.reported_fills = engine.gap_fills();
                telemetry.record(&TickRecord::new(&timing, fills)).map_err(StreamFailure::Sink)?;
            }
        }
        if engine.is_finished() {
            sink.finish().map_err(StreamFailure::Sink)?;
            return Ok(());
        }
        if engine.wants_audio() {
            match audio_rx.recv() {
                Ok(AudioMsg::Block(samples)) => {
                    let block =
                        if samples.len() == BLOCK_LEN { AudioBlock::new(&samples) } else { AudioBlock::last(&samples) };
                    engine.push_audio_block(block)?;
                }
                Ok(AudioMsg::Failed(e)) => return Err(StreamFailure::Audio(e)),
                Err(_) => return Err(StreamFailure::Audio("source disconnected".into())),
            }
        } else if engine.wants_video() {
            match video_rx.recv() {
                Ok(Some(Ok(frame))) => match engine.push_video_frame(frame)? {
                    VideoPush::Accepted { .. } => {}
                    VideoPush::Duplicate => counters.duplicates += 1,
                    VideoPush::OutOfOrder => counters.out_of_order += 1,
                },
                Ok(None) => engine.end_video(),
                Ok(Some(Err(e))) => return Err(StreamFailure::Video(e)),
                Err(_) => return Err(StreamFailure::Video("source disconnected".into())),
            }
        } else {
            // Both inputs are satisfied yet no block came out: cannot happen
            // with a consistent engine, so surface it rather than spin.
            return Err(StreamFailure::Audio("engine stalled".into()));
        }
    }
}
