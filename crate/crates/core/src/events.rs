//! Event-camera recordings: AEDAT 2.0 parsing and fixed-window binning into
//! spike tensors.
//!
//! The on-disk format is '#'-prefixed ASCII header lines followed by
//! big-endian 8-byte records (32-bit address word, 32-bit timestamp in
//! microseconds). The address word uses the 128x128 sensor layout: bit 0 is
//! polarity (1 = ON), bits 1-7 the pixel column, bits 8-14 the pixel row,
//! and bit 15 marks external trigger events, which are skipped.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{Example, Target};
use crate::spikes::SpikeTensor;

/// Sensor resolution of the supported camera (pixels per side).
pub const SENSOR_SIDE: u16 = 128;

const HEADER_VERSION_LINE: &str = "#!AER-DAT2.0";
const EXTERNAL_EVENT_BIT: u32 = 1 << 15;

/// One camera event.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DvsEvent {
    pub timestamp_us: u32,
    /// Pixel column, 0..SENSOR_SIDE.
    pub x: u16,
    /// Pixel row, 0..SENSOR_SIDE.
    pub y: u16,
    /// true = brightness increase (ON), false = decrease (OFF).
    pub on: bool,
}

/// Parse an AEDAT 2.0 byte stream. Files may start with '#'-prefixed header
/// lines (the first must identify version 2.0) or directly with raw
/// records. Events are returned sorted by timestamp (stable).
pub fn parse_aedat(bytes: &[u8]) -> Result<Vec<DvsEvent>> {
    let mut pos = 0usize;
    let mut first_header = true;
    while bytes.get(pos) == Some(&b'#') {
        let line_end = bytes[pos..]
            .iter()
            .position(|&b| b == b'\n')
            .map(|i| pos + i + 1)
            .unwrap_or(bytes.len());
        if first_header {
            let line = String::from_utf8_lossy(&bytes[pos..line_end]);
            let line = line.trim_end_matches(['\r', '\n']);
            if !line.starts_with(HEADER_VERSION_LINE) {
                return Err(Error::UnsupportedHeader(format!(
                    "expected a {HEADER_VERSION_LINE} header, found {line:?}"
                )));
            }
            first_header = false;
        }
        pos = line_end;
    }
    let body = &bytes[pos..];
    if !body.len().is_multiple_of(8) {
        return Err(Error::Parse {
            offset: pos + body.len() - body.len() % 8,
            message: format!("truncated record: {} trailing bytes (need 8)", body.len() % 8),
        });
    }
    let mut events = Vec::with_capacity(body.len() / 8);
    for rec in body.chunks_exact(8) {
        let address = u32::from_be_bytes(rec[0..4].try_into().unwrap());
        let timestamp_us = u32::from_be_bytes(rec[4..8].try_into().unwrap());
        if address & EXTERNAL_EVENT_BIT != 0 {
            continue;
        }
        events.push(DvsEvent {
            timestamp_us,
            x: ((address >> 1) & 0x7F) as u16,
            y: ((address >> 8) & 0x7F) as u16,
            on: address & 1 == 1,
        });
    }
    events.sort_by_key(|e| e.timestamp_us);
    Ok(events)
}

/// Serialize events into the byte format accepted by [`parse_aedat`],
/// including the version header line.
pub fn encode_aedat(events: &[DvsEvent]) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(32 + 8 * events.len());
    out.extend_from_slice(HEADER_VERSION_LINE.as_bytes());
    out.push(b'\n');
    for e in events {
        if e.x >= SENSOR_SIDE || e.y >= SENSOR_SIDE {
            return Err(Error::InvalidParam(format!(
                "event at ({}, {}) exceeds the {SENSOR_SIDE}x{SENSOR_SIDE} sensor",
                e.x, e.y
            )));
        }
        let address =
            (e.on as u32) | ((e.x as u32 & 0x7F) << 1) | ((e.y as u32 & 0x7F) << 8);
        out.extend_from_slice(&address.to_be_bytes());
        out.extend_from_slice(&e.timestamp_us.to_be_bytes());
    }
    Ok(out)
}

/// How to bin an event stream into a (t_steps, units) spike tensor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinningSpec {
    /// Bin duration in microseconds.
    pub window_us: u32,
    /// Number of time bins; events past the last bin are dropped.
    pub t_steps: usize,
    /// Retained region (x0, y0, width, height) in sensor pixels.
    pub crop: (u16, u16, u16, u16),
    /// Spatial downsampling stride within the crop.
    pub stride: u16,
    /// Keep ON/OFF events in separate channels (else merge them).
    pub polarity_channels: bool,
    /// Bin origin; None starts at the first event's timestamp.
    pub start_us: Option<u32>,
}

impl BinningSpec {
    /// Defaults for the 128x128 handwritten-digit event recordings:
    /// 2 ms bins, 100 steps, center 64x64 crop, stride 2, ON/OFF channels
    /// (2 x 32 x 32 = 2048 units).
    pub fn mnist_dvs_default() -> Self {
        Self {
            window_us: 2000,
            t_steps: 100,
            crop: (32, 32, 64, 64),
            stride: 2,
            polarity_channels: true,
            start_us: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.window_us == 0 || self.t_steps == 0 || self.stride == 0 {
            return Err(Error::InvalidParam(
                "binning needs positive window, step count, and stride".into(),
            ));
        }
        let (x0, y0, w, h) = self.crop;
        if w == 0 || h == 0 {
            return Err(Error::InvalidParam("empty crop".into()));
        }
        if x0 as u32 + w as u32 > SENSOR_SIDE as u32 || y0 as u32 + h as u32 > SENSOR_SIDE as u32 {
            return Err(Error::InvalidParam(format!(
                "crop ({x0}, {y0}, {w}, {h}) exceeds the {SENSOR_SIDE}x{SENSOR_SIDE} sensor"
            )));
        }
        Ok(())
    }

    /// Output width in cells after cropping and striding.
    pub fn out_width(&self) -> usize {
        (self.crop.2 as usize).div_ceil(self.stride as usize)
    }

    /// Output height in cells after cropping and striding.
    pub fn out_height(&self) -> usize {
        (self.crop.3 as usize).div_ceil(self.stride as usize)
    }

    pub fn channels(&self) -> usize {
        if self.polarity_channels {
            2
        } else {
            1
        }
    }

    /// Total units per time step after flattening (channels, H, W).
    pub fn units(&self) -> usize {
        self.channels() * self.out_height() * self.out_width()
    }
}

/// OR-bin sorted events into a binary tensor of shape (t_steps, units); a
/// cell is 1 if at least one event fell into that bin/pixel/polarity.
/// Events outside the crop or the covered time span are dropped.
pub fn bin_events(events: &[DvsEvent], spec: &BinningSpec) -> Result<SpikeTensor> {
    spec.validate()?;
    let mut tensor = SpikeTensor::zeros(spec.t_steps, spec.units());
    let t0 = match spec.start_us {
        Some(t) => t,
        None => match events.first() {
            Some(e) => e.timestamp_us,
            None => return Ok(tensor),
        },
    };
    let (x0, y0, w, h) = spec.crop;
    let (wout, hout) = (spec.out_width(), spec.out_height());
    for e in events {
        if e.timestamp_us < t0 {
            continue;
        }
        let bin = ((e.timestamp_us - t0) / spec.window_us) as usize;
        if bin >= spec.t_steps {
            continue;
        }
        if e.x < x0 || e.x >= x0 + w || e.y < y0 || e.y >= y0 + h {
            continue;
        }
        let col = ((e.x - x0) / spec.stride) as usize;
        let row = ((e.y - y0) / spec.stride) as usize;
        let channel = if spec.polarity_channels && !e.on { 1 } else { 0 };
        tensor.set(bin, channel * hout * wout + row * wout + col, true);
    }
    Ok(tensor)
}

/// Ingest a directory tree of recordings laid out as one subdirectory per
/// label (`root/<label>/<file>`). Labels are indexed by the sorted
/// subdirectory names; files within a label are visited in sorted order and
/// `limit`, when given, caps the recordings taken per label. Returns the
/// binned examples and the label names in index order.
pub fn ingest_label_directories(
    root: &Path,
    spec: &BinningSpec,
    limit: Option<usize>,
) -> Result<(Vec<Example>, Vec<String>)> {
    spec.validate()?;
    let mut label_dirs: Vec<(String, PathBuf)> = std::fs::read_dir(root)?
        .filter_map(|entry| {
            let entry = entry.ok()?;
            let path = entry.path();
            if path.is_dir() {
                Some((entry.file_name().to_string_lossy().into_owned(), path))
            } else {
                None
            }
        })
        .collect();
    label_dirs.sort_by(|a, b| a.0.cmp(&b.0));
    if label_dirs.is_empty() {
        return Err(Error::InvalidParam(format!(
            "no label subdirectories under {}",
            root.display()
        )));
    }
    let mut jobs: Vec<(PathBuf, usize)> = Vec::new();
    for (label_idx, (_, dir)) in label_dirs.iter().enumerate() {
        let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
            .filter_map(|entry| {
                let path = entry.ok()?.path();
                path.is_file().then_some(path)
            })
            .collect();
        files.sort();
        if let Some(cap) = limit {
            files.truncate(cap);
        }
        jobs.extend(files.into_iter().map(|f| (f, label_idx)));
    }
    let examples = jobs
        .par_iter()
        .map(|(path, label)| {
            let bytes = std::fs::read(path)?;
            let events = parse_aedat(&bytes).map_err(|e| match e {
                Error::Parse { offset, message } => Error::Parse {
                    offset,
                    message: format!("{}: {message}", path.display()),
                },
                other => other,
            })?;
            Ok(Example {
                spikes: bin_events(&events, spec)?,
                target: Target::Label(*label),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((examples, label_dirs.into_iter().map(|(name, _)| name).collect()))
}
