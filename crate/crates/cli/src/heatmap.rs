//! 16-bit binary PGM heatmaps.

use std::fs;
use std::path::Path;

use crate::error::CliError;

/// Encodes a row-major frame as a P5 image with maxval 65535. Values are
/// min-max scaled over the frame; a constant frame maps to zero.
pub fn pgm_bytes(frame: &[f64], rows: usize, cols: usize) -> Result<Vec<u8>, CliError> {
    if frame.is_empty() || rows * cols != frame.len() {
        return Err(CliError::Data(format!(
            "heatmap needs a non-empty {rows}x{cols} frame, got {} values",
            frame.len()
        )));
    }
    let min = frame.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = frame.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !min.is_finite() || !max.is_finite() {
        return Err(CliError::Numeric("heatmap frame has non-finite values".into()));
    }
    let mut out = format!("P5 {cols} {rows} 65535\n").into_bytes();
    let span = max - min;
    for &v in frame {
        let level = if span > 0.0 { ((v - min) / span * 65535.0).round() as u16 } else { 0 };
        out.extend_from_slice(&level.to_be_bytes());
    }
    Ok(out)
}

pub fn emit_heatmap(frame: &[f64], rows: usize, cols: usize, path: &Path) -> Result<(), CliError> {
    fs::write(path, pgm_bytes(frame, rows, cols)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_and_scaling() {
        let frame: Vec<f64> = (0..31 * 31).map(|i| i as f64).collect();
        let bytes = pgm_bytes(&frame, 31, 31).unwrap();
        let header = b"P5 31 31 65535\n";
        assert_eq!(&bytes[..header.len()], header);
        let px = &bytes[header.len()..];
        assert_eq!(px.len(), 2 * 31 * 31);
        assert_eq!(&px[..2], &[0, 0]);
        assert_eq!(&px[px.len() - 2..], &[0xff, 0xff]);
        assert_eq!(pgm_bytes(&frame, 31, 31).unwrap(), bytes);
    }

    #[test]
    fn constant_frame_is_uniform() {
        let bytes = pgm_bytes(&[2.5; 6], 2, 3).unwrap();
        let px = &bytes[b"P5 3 2 65535\n".len()..];
        assert!(px.chunks(2).all(|p| p == [0, 0]));
    }

    #[test]
    fn empty_frame_is_rejected() {
        assert!(pgm_bytes(&[], 0, 0).is_err());
        assert!(pgm_bytes(&[1.0, 2.0], 1, 3).is_err());
    }
}
