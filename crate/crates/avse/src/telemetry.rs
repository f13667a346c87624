//! Newline-delimited JSON tick records.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use avse_core::stream::FrameTiming;
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct TickRecord {
    pub tick: usize,
    pub processing_ms: f64,
    pub missed: bool,
    /// Video slots filled with the fallback embedding since the previous record.
    pub fallback_frames: usize,
}

impl TickRecord {
    pub fn new(timing: &FrameTiming, fallback_frames: usize) -> Self {
        Self { tick: timing.tick, processing_ms: timing.processing_ms, missed: timing.missed, fallback_frames }
    }
}

/// Where telemetry goes: a file path, `stderr`, `stdout` or `fd:N`.
pub fn open_destination(spec: &str) -> io::Result<Box<dyn Write + Send>> {
    Ok(match spec {
        "stderr" | "-" => Box::new(io::stderr()),
        "stdout" => Box::new(io::stdout()),
        _ => match spec.strip_prefix("fd:") {
            Some(fd) => {
                let fd: i32 = fd
                    .parse()
                    .map_err(|_| io::Error::new(io::ErrorKind::InvalidInput, format!("bad descriptor `{spec}`")))?;
                Box::new(BufWriter::new(file_from_fd(fd)?))
            }
            None => Box::new(BufWriter::new(File::create(Path::new(spec))?)),
        },
    })
}

#[cfg(unix)]
fn file_from_fd(fd: i32) -> io::Result<File> {
    use std::os::fd::{BorrowedFd, FromRawFd, IntoRawFd};
    if fd < 0 {
        return Err(io::Error::new(io::ErrorKind::InvalidInput, "negative descriptor"));
    }
    // Duplicate so the caller's descriptor stays open and owned by them.
    // SAFETY: the descriptor is only borrowed for the duplication.
    let borrowed = unsafe { BorrowedFd::borrow_raw(fd) };
    let owned = borrowed.try_clone_to_owned()?;
    // SAFETY: `owned` is a fresh descriptor whose ownership moves into the File.
    Ok(unsafe { File::from_raw_fd(owned.into_raw_fd()) })
}

#[cfg(not(unix))]
fn file_from_fd(_fd: i32) -> io::Result<File> {
    Err(io::Error::new(io::ErrorKind::Unsupported, "fd destinations need a unix target"))
}

pub struct Telemetry {
    out: Option<Box<dyn Write + Send>>,
}

impl Telemetry {
    pub fn disabled() -> Self {
        Self { out: None }
    }

    pub fn new(out: Box<dyn Write + Send>) -> Self {
        Self { out: Some(out) }
    }

    pub fn record(&mut self, record: &TickRecord) -> io::Result<()> {
        if let Some(out) = &mut self.out {
            serde_json::to_writer(&mut *out, record)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn flush(&mut self) -> io::Result<()> {
        match &mut self.out {
            Some(out) => out.flush(),
            None => Ok(()),
        }
    }
}
