use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

use super::{GazeSample, NormState, SaliencyGrid};

pub const SGRD_MAGIC: &[u8; 4] = b"SGRD";
pub const SGRD_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct SampleRow {
    t_ms: f64,
    x_px: Option<f64>,
    y_px: Option<f64>,
    valid: String,
}

fn parse_bool(s: &str) -> Option<bool> {
    match s.trim().to_ascii_lowercase().as_str() {
        "1" | "true" => Some(true),
        "0" | "false" => Some(false),
        _ => None,
    }
}

/// Reads a `t_ms,x_px,y_px,valid` sample CSV. Coordinates of invalid rows
/// may be empty.
pub fn read_samples_csv(path: &Path) -> Result<Vec<GazeSample>> {
    read_samples(fs::File::open(path)?, path)
}

fn read_samples(r: impl Read, path: &Path) -> Result<Vec<GazeSample>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != ["t_ms", "x_px", "y_px", "valid"] {
        return Err(Error::Format {
            path: path.to_path_buf(),
            reason: format!("expected header t_ms,x_px,y_px,valid, got {}", header.join(",")),
        });
    }
    let mut out = Vec::new();
    for (i, row) in rdr.deserialize::<SampleRow>().enumerate() {
        let row = row?;
        let bad = |reason: &str| Error::Format {
            path: path.to_path_buf(),
            reason: format!("row {}: {reason}", i + 2),
        };
        let valid = parse_bool(&row.valid).ok_or_else(|| bad("valid must be 0/1/true/false"))?;
        let sample = match (valid, row.x_px, row.y_px) {
            (false, _, _) => GazeSample::invalid(row.t_ms),
            (true, Some(x), Some(y)) if x.is_finite() && y.is_finite() => GazeSample::new(row.t_ms, x, y),
            (true, _, _) => return Err(bad("valid sample without coordinates")),
        };
        if out.last().is_some_and(|p: &GazeSample| p.t_ms > sample.t_ms) {
            return Err(bad("timestamps decrease"));
        }
        out.push(sample);
    }
    Ok(out)
}

pub fn write_samples_csv(path: &Path, samples: &[GazeSample]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for s in samples {
        w.serialize(SampleRow {
            t_ms: s.t_ms,
            x_px: s.valid.then_some(s.x),
            y_px: s.valid.then_some(s.y),
            valid: if s.valid { "1" } else { "0" }.to_string(),
        })?;
    }
    w.flush()?;
    Ok(())
}

/// `SGRD` | version | width | height | f32 values, all little-endian.
pub fn write_sgrd(path: &Path, grid: &SaliencyGrid) -> Result<()> {
    let mut buf = Vec::with_capacity(16 + 4 * grid.values.len());
    buf.write_all(SGRD_MAGIC)?;
    buf.write_all(&SGRD_VERSION.to_le_bytes())?;
    buf.write_all(&(grid.width as u32).to_le_bytes())?;
    buf.write_all(&(grid.height as u32).to_le_bytes())?;
    for v in &grid.values {
        buf.write_all(&(*v as f32).to_le_bytes())?;
    }
    fs::write(path, buf)?;
    Ok(())
}

pub fn read_sgrd(path: &Path) -> Result<SaliencyGrid> {
    let bytes = fs::read(path)?;
    let bad = |reason: String| Error::Format {
        path: path.to_path_buf(),
        reason,
    };
    if bytes.len() < 16 || &bytes[..4] != SGRD_MAGIC {
        return Err(bad("missing SGRD header".into()));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4 bytes"));
    if word(4) != SGRD_VERSION {
        return Err(bad(format!("unsupported version {}", word(4))));
    }
    let (w, h) = (word(8) as usize, word(12) as usize);
    if bytes.len() != 16 + 4 * w * h {
        return Err(bad(format!("expected {} values for {w}×{h}", w * h)));
    }
    let values = bytes[16..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
        .collect();
    SaliencyGrid::new(w, h, values, NormState::RawMass)
}

/// 8-bit grayscale rendering scaled so the maximum maps to 255.
pub fn write_png(path: &Path, grid: &SaliencyGrid) -> Result<()> {
    if grid.is_empty() {
        return Err(invalid("cannot render an empty grid"));
    }
    let max = grid.values.iter().cloned().fold(0.0, f64::max);
    let scale = if max > 0.0 { 255.0 / max } else { 0.0 };
    let pixels = grid.values.iter().map(|v| (v * scale).round().clamp(0.0, 255.0) as u8).collect();
    let img = image::GrayImage::from_raw(grid.width as u32, grid.height as u32, pixels).expect("buffer matches dimensions");
    img.save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}
