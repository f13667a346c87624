//! `RVNE` visual-embedding stream.
//!
//! ```text
//! magic          "RVNE"
//! version        u32 = 1
//! embedding_dim  u32
//! fps            u32 = 25
//! frames until EOF: { index u64, valid u8, embedding_dim x f32 }
//! ```
//!
//! The reader is incremental so the same code serves files and pipes.

use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use avse_core::model::VisualEmbeddingFrame;
use avse_core::VIDEO_FPS;

use crate::atomic::write_atomic;
use crate::binio::{bounded, expect_magic, f32_bytes, read_exact, read_f32s, read_u32, write_u32};
use crate::error::{FormatError, Result};

pub const MAGIC: &str = "RVNE";
pub const VERSION: u32 = 1;
const MAX_DIM: usize = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EmbeddingHeader {
    pub version: u32,
    pub embedding_dim: usize,
    pub fps: u32,
}

pub struct RvneReader<R> {
    inner: R,
    header: EmbeddingHeader,
    frames_read: usize,
}

impl<R: Read> RvneReader<R> {
    pub fn new(mut inner: R) -> Result<Self> {
        expect_magic(&mut inner, MAGIC)?;
        let version = read_u32(&mut inner, "header")?;
        if version != VERSION {
            return Err(FormatError::Version { format: MAGIC, version });
        }
        let embedding_dim = bounded(read_u32(&mut inner, "header")?, MAX_DIM, "embedding_dim")?;
        if embedding_dim == 0 {
            return Err(FormatError::invalid("embedding_dim must be positive"));
        }
        let fps = read_u32(&mut inner, "header")?;
        if fps != VIDEO_FPS {
            return Err(FormatError::invalid(format!("embedding stream at {fps} fps, expected {VIDEO_FPS}")));
        }
        Ok(Self { inner, header: EmbeddingHeader { version, embedding_dim, fps }, frames_read: 0 })
    }

    pub fn header(&self) -> EmbeddingHeader {
        self.header
    }

    /// Next frame, or `None` at a clean end of stream.
    pub fn next_frame(&mut self) -> Result<Option<VisualEmbeddingFrame>> {
        let context = format!("embedding frame {}", self.frames_read);
        let mut first = [0u8; 1];
        loop {
            match self.inner.read(&mut first) {
                Ok(0) => return Ok(None),
                Ok(_) => break,
                Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
                Err(e) => return Err(e.into()),
            }
        }
        let mut rest = [0u8; 8];
        rest[0] = first[0];
        read_exact(&mut self.inner, &mut rest[1..], &context)?;
        let index = u64::from_le_bytes(rest);
        let mut valid = [0u8; 1];
        read_exact(&mut self.inner, &mut valid, &context)?;
        let valid = match valid[0] {
            0 => false,
            1 => true,
            v => return Err(FormatError::invalid(format!("{context}: valid flag {v}"))),
        };
        let vector = read_f32s(&mut self.inner, self.header.embedding_dim, &context)?;
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(FormatError::invalid(format!("{context}: non-finite value")));
        }
        self.frames_read += 1;
        Ok(Some(VisualEmbeddingFrame { index, vector, valid }))
    }

    pub fn into_inner(self) -> R {
        self.inner
    }
}

impl<R: Read> Iterator for RvneReader<R> {
    type Item = Result<VisualEmbeddingFrame>;

    fn next(&mut self) -> Option<Self::Item> {
        self.next_frame().transpose()
    }
}

pub struct RvneWriter<W> {
    inner: W,
    embedding_dim: usize,
}

impl<W: Write> RvneWriter<W> {
    pub fn new(mut inner: W, embedding_dim: usize) -> Result<Self> {
        inner.write_all(MAGIC.as_bytes())?;
        write_u32(&mut inner, VERSION)?;
        write_u32(&mut inner, embedding_dim as u32)?;
        write_u32(&mut inner, VIDEO_FPS)?;
        Ok(Self { inner, embedding_dim })
    }

    pub fn write_frame(&mut self, frame: &VisualEmbeddingFrame) -> Result<()> {
        if frame.vector.len() != self.embedding_dim {
            return Err(avse_core::Error::EmbeddingDim { expected: self.embedding_dim, actual: frame.vector.len() }.into());
        }
        let mut record = Vec::with_capacity(9 + 4 * self.embedding_dim);
        record.extend_from_slice(&frame.index.to_le_bytes());
        record.push(frame.valid as u8);
        record.extend(f32_bytes(&frame.vector));
        self.inner.write_all(&record)?;
        Ok(())
    }

    pub fn into_inner(self) -> W {
        self.inner
    }
}

pub fn read_embeddings_from<R: Read>(r: R) -> Result<(EmbeddingHeader, Vec<VisualEmbeddingFrame>)> {
    let reader = RvneReader::new(r)?;
    let header = reader.header();
    let frames = reader.collect::<Result<Vec<_>>>()?;
    Ok((header, frames))
}

pub fn read_embeddings(path: &Path) -> Result<(EmbeddingHeader, Vec<VisualEmbeddingFrame>)> {
    read_embeddings_from(BufReader::new(std::fs::File::open(path)?))
}

pub fn write_embeddings(path: &Path, embedding_dim: usize, frames: &[VisualEmbeddingFrame]) -> Result<()> {
    write_atomic(path, |file| {
        let mut w = RvneWriter::new(BufWriter::new(file), embedding_dim)?;
        for f in frames {
            w.write_frame(f)?;
        }
        w.into_inner().flush()?;
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn encode(dim: usize, frames: &[VisualEmbeddingFrame]) -> Vec<u8> {
        let mut w = RvneWriter::new(Vec::new(), dim).unwrap();
        for f in frames {
            w.write_frame(f).unwrap();
        }
        w.into_inner()
    }

    #[test]
    fn layout() {
        let bytes = encode(2, &[VisualEmbeddingFrame { index: 7, vector: vec![1.0, -2.0], valid: false }]);
        assert_eq!(&bytes[..4], b"RVNE");
        assert_eq!(bytes[4..16], [1, 0, 0, 0, 2, 0, 0, 0, 25, 0, 0, 0]);
        assert_eq!(bytes[16..24], 7u64.to_le_bytes());
        assert_eq!(bytes[24], 0);
        assert_eq!(bytes[25..29], 1.0f32.to_le_bytes());
        assert_eq!(bytes.len(), 16 + 9 + 8);
    }

    #[test]
    fn truncated_frame_is_reported() {
        let frames: Vec<_> = (0..3).map(|i| VisualEmbeddingFrame::new(i, vec![0.5; 4])).collect();
        let bytes = encode(4, &frames);
        let err = read_embeddings_from(&bytes[..bytes.len() - 2]).unwrap_err();
        assert_eq!(err.to_string(), "unexpected end of file in embedding frame 2");
        let mut bad = bytes.clone();
        bad[12] = 30;
        assert!(matches!(read_embeddings_from(&bad[..]), Err(FormatError::Invalid(_))));
        let mut bad = bytes;
        bad[16 + 8] = 2;
        assert!(read_embeddings_from(&bad[..]).is_err());
    }

    #[test]
    fn wrong_dimension_is_rejected_on_write() {
        let mut w = RvneWriter::new(Vec::new(), 3).unwrap();
        assert!(w.write_frame(&VisualEmbeddingFrame::new(0, vec![0.0; 2])).is_err());
    }

    proptest! {
        #[test]
        fn round_trip(dim in 1usize..16, frames in proptest::collection::vec((any::<u64>(), any::<bool>(), -1e3f32..1e3), 0..20)) {
            let frames: Vec<_> = frames
                .into_iter()
                .map(|(index, valid, v)| VisualEmbeddingFrame { index, valid, vector: (0..dim).map(|d| v + d as f32).collect() })
                .collect();
            let (header, back) = read_embeddings_from(&encode(dim, &frames)[..]).unwrap();
            prop_assert_eq!(header, EmbeddingHeader { version: 1, embedding_dim: dim, fps: 25 });
            prop_assert_eq!(back, frames);
        }
    }
}
