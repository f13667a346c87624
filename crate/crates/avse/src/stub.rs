use std::time::Duration;

use avse_core::model::FrameMasker;
use avse_core::{Result, FRAMES_PER_BLOCK};

/// Wraps a masker and sleeps once per streaming tick.
///
/// The engine masks frame `4k + 2` during tick `k` for every tick,
/// including the first and the last, so the sleep lands on that call.
pub struct SlowMasker<M> {
    inner: M,
    delay: Duration,
    calls: usize,
}

impl<M: FrameMasker> SlowMasker<M> {
    pub fn new(inner: M, delay: Duration) -> Self {
        Self { inner, delay, calls: 0 }
    }
}

impl<M: FrameMasker> FrameMasker for SlowMasker<M> {
    fn embedding_dim(&self) -> usize {
        self.inner.embedding_dim()
    }

    fn zero_embedding(&self) -> &[f32] {
        self.inner.zero_embedding()
    }

    fn reset(&mut self) {
        self.calls = 0;
        self.inner.reset();
    }

    fn mask_frame(&mut self, context: &[f32], embedding: &[f32], mask: &mut [f32]) -> Result<()> {
        if self.calls % FRAMES_PER_BLOCK == 2 {
            std::thread::sleep(self.delay);
        }
        self.calls += 1;
        self.inner.mask_frame(context, embedding, mask)
    }
}
