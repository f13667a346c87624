use alloc::vec;
use alloc::vec::Vec;

use super::{upsample_embeddings, FrameMasker, VisualEmbeddingFrame};
use crate::dsp::{self, AudioSignal, MagnitudeMask};
use crate::{Error, Result, BINS, BLOCK_LEN, COMPRESSION, CONTEXT_FRAMES};

/// Whole-clip enhancement: STFT, compression, per-frame masks, phase-preserving
/// mask application, decompression and ISTFT.
///
/// The signal is zero-padded to a whole number of 40 ms blocks, which is what
/// the streaming engine sees, so the result matches it bit for bit. Context
/// frames before the start or past the end duplicate the first or last
/// frame. The output has the input length.
pub fn enhance_offline<M: FrameMasker>(
    signal: &AudioSignal,
    embeddings: &[VisualEmbeddingFrame],
    masker: &mut M,
) -> Result<AudioSignal> {
    let len = signal.len();
    if len == 0 {
        return Ok(AudioSignal::zeros(0));
    }
    let blocks = len.div_ceil(BLOCK_LEN);
    if embeddings.len() < blocks {
        return Err(Error::EmbeddingStreamTooShort { required: blocks, available: embeddings.len() });
    }
    let embeddings = &embeddings[..blocks];
    check_embeddings(embeddings, masker.embedding_dim())?;

    let mut padded = signal.samples().to_vec();
    padded.resize(blocks * BLOCK_LEN, 0.0);
    let padded = AudioSignal::new(padded)?;
    let mixture = dsp::compress(&dsp::stft(&padded)?, COMPRESSION)?;
    let frames = mixture.frames();

    let mut magnitudes = vec![0.0f32; frames * BINS];
    for t in 0..frames {
        dsp::magnitudes(mixture.frame(t), &mut magnitudes[t * BINS..(t + 1) * BINS]);
    }
    let zero = masker.zero_embedding().to_vec();
    let visual = upsample_embeddings(embeddings, &zero);

    masker.reset();
    let mut context = vec![0.0f32; CONTEXT_FRAMES * BINS];
    let mut mask: Vec<f32> = vec![0.0; frames * BINS];
    for t in 0..frames {
        fill_context(&magnitudes, frames, t, &mut context);
        masker.mask_frame(&context, visual[t], &mut mask[t * BINS..(t + 1) * BINS])?;
    }
    let mask = MagnitudeMask::new(mask)?;
    let estimate = dsp::decompress(&dsp::apply_mask(&mask, &mixture)?)?;
    dsp::istft(&estimate, len)
}

/// Copies frames `t-2..=t+2`, clamped to `[0, frames)`, into `context`.
pub(crate) fn fill_context(magnitudes: &[f32], frames: usize, t: usize, context: &mut [f32]) {
    let half = CONTEXT_FRAMES / 2;
    for k in 0..CONTEXT_FRAMES {
        let src = (t + k).saturating_sub(half).min(frames - 1);
        context[k * BINS..(k + 1) * BINS].copy_from_slice(&magnitudes[src * BINS..(src + 1) * BINS]);
    }
}

fn check_embeddings(frames: &[VisualEmbeddingFrame], dim: usize) -> Result<()> {
    let first = frames.first().map_or(0, |f| f.index);
    for (position, frame) in frames.iter().enumerate() {
        if frame.index != first + position as u64 {
            return Err(Error::EmbeddingOrder { position, index: frame.index });
        }
        if frame.vector.len() != dim {
            return Err(Error::EmbeddingDim { expected: dim, actual: frame.vector.len() });
        }
        if frame.vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("visual embedding"));
        }
    }
    Ok(())
}
