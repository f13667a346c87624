//! Little-endian primitives shared by the binary formats.

use std::io::{self, Read, Write};

use crate::error::{FormatError, Result};

/// Reads exactly `buf.len()` bytes, naming `context` on truncation.
pub(crate) fn read_exact<R: Read>(r: &mut R, buf: &mut [u8], context: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => FormatError::UnexpectedEof(context.to_string()),
        _ => FormatError::Io(e),
    })
}

pub(crate) fn read_u8<R: Read>(r: &mut R, context: &str) -> Result<u8> {
    let mut b = [0u8; 1];
    read_exact(r, &mut b, context)?;
    Ok(b[0])
}

pub(crate) fn read_u32<R: Read>(r: &mut R, context: &str) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b, context)?;
    Ok(u32::from_le_bytes(b))
}

pub(crate) fn read_f32s<R: Read>(r: &mut R, n: usize, context: &str) -> Result<Vec<f32>> {
    let mut bytes = vec![0u8; n * 4];
    read_exact(r, &mut bytes, context)?;
    Ok(bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect())
}

pub(crate) fn write_u32<W: Write>(w: &mut W, v: u32) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

pub(crate) fn write_f32s<W: Write>(w: &mut W, values: &[f32]) -> io::Result<()> {
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    w.write_all(&bytes)
}

pub(crate) fn f32_bytes(values: &[f32]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

/// Converts a header count to `usize`, rejecting values above `max`.
pub(crate) fn bounded(value: u32, max: usize, what: &str) -> Result<usize> {
    let v = value as usize;
    if v > max {
        return Err(FormatError::invalid(format!("{what} {v} exceeds {max}")));
    }
    Ok(v)
}

/// Reads and checks a 4-byte magic.
pub(crate) fn expect_magic<R: Read>(r: &mut R, magic: &'static str) -> Result<()> {
    let mut found = [0u8; 4];
    read_exact(r, &mut found, "header")?;
    if found != magic.as_bytes() {
        return Err(FormatError::BadMagic { expected: magic, found });
    }
    Ok(())
}
