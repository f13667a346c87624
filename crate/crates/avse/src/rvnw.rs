//! `RVNW` weight container.
//!
//! All integers are little-endian.
//!
//! ```text
//! magic            "RVNW"
//! version          u32 = 1
//! embedding_dim    u32
//! bins             u32 = 257
//! conv_channels    5 x u32
//! lstm_hidden      u32
//! fc_widths        2 x u32
//! concat_order     u8  (0 = audio then visual)
//! zero_embedding   embedding_dim x f32
//! tensor_count     u32
//! tensor_count x { name_len u32, name utf-8, rank u32, dims rank x u32, data f32 row-major }
//! ```

use std::collections::BTreeMap;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use avse_core::model::{ConcatOrder, ModelConfig, ModelWeights, Tensor, CONV_LAYERS};
use avse_core::BINS;

use crate::atomic::write_atomic;
use crate::binio::{bounded, expect_magic, read_exact, read_f32s, read_u32, read_u8, write_f32s, write_u32};
use crate::error::{FormatError, Result};

pub const MAGIC: &str = "RVNW";
pub const VERSION: u32 = 1;

const MAX_WIDTH: usize = 1 << 16;
const MAX_TENSORS: usize = 1 << 10;
const MAX_NAME: usize = 256;
const MAX_RANK: usize = 8;
const MAX_ELEMENTS: usize = 1 << 28;

/// Fields preceding the tensor table.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightsHeader {
    pub version: u32,
    pub config: ModelConfig,
    pub zero_embedding: Vec<f32>,
    pub tensor_count: usize,
}

fn read_header<R: Read>(r: &mut R) -> Result<WeightsHeader> {
    expect_magic(r, MAGIC)?;
    let version = read_u32(r, "header")?;
    if version != VERSION {
        return Err(FormatError::Version { format: MAGIC, version });
    }
    let width = |r: &mut R, what: &str| -> Result<usize> { bounded(read_u32(r, "header")?, MAX_WIDTH, what) };
    let embedding_dim = width(r, "embedding_dim")?;
    let bins = width(r, "bins")?;
    if bins != BINS {
        return Err(FormatError::invalid(format!("bins {bins} in header, engine requires {BINS}")));
    }
    let mut conv_channels = [0usize; CONV_LAYERS];
    for c in &mut conv_channels {
        *c = width(r, "conv channels")?;
    }
    let lstm_hidden = width(r, "lstm_hidden")?;
    let fc_widths = [width(r, "fc width")?, width(r, "fc width")?];
    let concat_order = match read_u8(r, "header")? {
        0 => ConcatOrder::AudioVisual,
        other => return Err(FormatError::invalid(format!("unknown concat order {other}"))),
    };
    let config = ModelConfig { embedding_dim, conv_channels, lstm_hidden, fc_widths, concat_order };
    config.validate()?;
    let zero_embedding = read_f32s(r, embedding_dim, "zero_embedding")?;
    let tensor_count = bounded(read_u32(r, "header")?, MAX_TENSORS, "tensor count")?;
    Ok(WeightsHeader { version, config, zero_embedding, tensor_count })
}

fn read_tensor<R: Read>(r: &mut R, position: usize) -> Result<(String, Tensor)> {
    let entry = format!("tensor #{position}");
    let name_len = bounded(read_u32(r, &entry)?, MAX_NAME, "tensor name length")?;
    let mut name = vec![0u8; name_len];
    read_exact(r, &mut name, &entry)?;
    let name = String::from_utf8(name).map_err(|_| FormatError::invalid(format!("{entry} name is not UTF-8")))?;
    let rank = bounded(read_u32(r, &name)?, MAX_RANK, "tensor rank")?;
    let mut shape = Vec::with_capacity(rank);
    for _ in 0..rank {
        shape.push(read_u32(r, &name)? as usize);
    }
    let elements = shape.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d)).filter(|&n| n <= MAX_ELEMENTS);
    let elements = elements.ok_or_else(|| FormatError::invalid(format!("tensor {name} is too large")))?;
    let data = read_f32s(r, elements, &name)?;
    Ok((name, Tensor::new(shape, data)?))
}

pub fn read_weights_from<R: Read>(mut r: R) -> Result<ModelWeights> {
    let header = read_header(&mut r)?;
    let mut tensors = BTreeMap::new();
    for i in 0..header.tensor_count {
        let (name, tensor) = read_tensor(&mut r, i)?;
        if tensors.insert(name.clone(), tensor).is_some() {
            return Err(FormatError::invalid(format!("duplicate tensor {name}")));
        }
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(FormatError::invalid("trailing bytes after tensor table"));
    }
    Ok(ModelWeights::new(header.config, header.zero_embedding, tensors)?)
}

pub fn read_weights(path: &Path) -> Result<ModelWeights> {
    read_weights_from(BufReader::new(std::fs::File::open(path)?))
}

/// Header only; does not read the tensor data.
pub fn read_weights_header(path: &Path) -> Result<WeightsHeader> {
    read_header(&mut BufReader::new(std::fs::File::open(path)?))
}

pub fn write_weights_to<W: Write>(w: &mut W, weights: &ModelWeights) -> Result<()> {
    let cfg = weights.config();
    w.write_all(MAGIC.as_bytes())?;
    write_u32(w, VERSION)?;
    write_u32(w, cfg.embedding_dim as u32)?;
    write_u32(w, BINS as u32)?;
    for &c in &cfg.conv_channels {
        write_u32(w, c as u32)?;
    }
    write_u32(w, cfg.lstm_hidden as u32)?;
    for &f in &cfg.fc_widths {
        write_u32(w, f as u32)?;
    }
    w.write_all(&[match cfg.concat_order {
        ConcatOrder::AudioVisual => 0u8,
    }])?;
    write_f32s(w, weights.zero_embedding())?;
    let tensors: Vec<_> = weights.tensors().collect();
    write_u32(w, tensors.len() as u32)?;
    for (spec, tensor) in tensors {
        write_u32(w, spec.name.len() as u32)?;
        w.write_all(spec.name.as_bytes())?;
        write_u32(w, tensor.shape.len() as u32)?;
        for &d in &tensor.shape {
            write_u32(w, d as u32)?;
        }
        write_f32s(w, &tensor.data)?;
    }
    Ok(())
}

pub fn write_weights(path: &Path, weights: &ModelWeights) -> Result<()> {
    write_atomic(path, |file| {
        let mut w = BufWriter::new(file);
        write_weights_to(&mut w, weights)?;
        w.flush()?;
        Ok(())
    })
}
