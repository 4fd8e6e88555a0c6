//! Grayscale portable float map. Rows are stored bottom to top; the sign of
//! the scale field selects the byte order (negative means little-endian).

use std::path::Path;

use crate::error::{Error, Result};
use crate::model::DepthMap;

fn header_token(bytes: &[u8], pos: &mut usize) -> Result<String> {
    while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos {
        return Err(Error::TruncatedPayload {
            expected: start + 1,
            found: bytes.len(),
        });
    }
    Ok(String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
}

pub fn parse_pfm(bytes: &[u8]) -> Result<DepthMap> {
    let mut pos = 0;
    let magic = header_token(bytes, &mut pos)?;
    if magic != "Pf" {
        return Err(Error::BadMagic(magic));
    }
    let dim = |tok: String| -> Result<usize> {
        tok.parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| Error::DimensionMismatch(format!("bad dimension {tok:?}")))
    };
    let width = dim(header_token(bytes, &mut pos)?)?;
    let height = dim(header_token(bytes, &mut pos)?)?;
    let scale_tok = header_token(bytes, &mut pos)?;
    let scale: f64 = scale_tok
        .parse()
        .ok()
        .filter(|s: &f64| s.is_finite() && *s != 0.0)
        .ok_or_else(|| Error::Parse(format!("bad PFM scale {scale_tok:?}")))?;
    // exactly one whitespace byte separates the header from the payload
    pos += 1;
    let expected = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::DimensionMismatch(format!("{width}x{height} overflows")))?;
    let payload = bytes.get(pos..).unwrap_or(&[]);
    if payload.len() < expected {
        return Err(Error::TruncatedPayload {
            expected,
            found: payload.len(),
        });
    }
    if payload.len() > expected {
        return Err(Error::DimensionMismatch(format!(
            "{} trailing bytes after a {width}x{height} payload",
            payload.len() - expected
        )));
    }
    let little = scale < 0.0;
    let mut values = vec![0.0f64; width * height];
    for (k, chunk) in payload.chunks_exact(4).enumerate() {
        let raw = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let x = if little { f32::from_le_bytes(raw) } else { f32::from_be_bytes(raw) };
        let (file_row, col) = (k / width, k % width);
        values[(height - 1 - file_row) * width + col] = f64::from(x);
    }
    DepthMap::new(width, height, values)
}

/// Serializes as little-endian `f32`. Values are narrowed from `f64`.
pub fn write_pfm(d: &DepthMap) -> Vec<u8> {
    let (w, h) = (d.width(), d.height());
    let mut out = format!("Pf\n{w} {h}\n-1.0\n").into_bytes();
    out.reserve(w * h * 4);
    for row in (0..h).rev() {
        for &z in &d.values()[row * w..(row + 1) * w] {
            out.extend_from_slice(&(z as f32).to_le_bytes());
        }
    }
    out
}

pub fn read_pfm(path: &Path) -> Result<DepthMap> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_pfm(&bytes)
}

pub fn write_pfm_file(path: &Path, d: &DepthMap) -> Result<()> {
    std::fs::write(path, write_pfm(d)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn two_by_two_round_trip() {
        let d = DepthMap::new(2, 2, vec![1.5, 2.25, -0.0, 7.0]).unwrap();
        let bytes = write_pfm(&d);
        let back = parse_pfm(&bytes).unwrap();
        assert_eq!(back.values(), d.values());
        assert_eq!(write_pfm(&back), bytes);
    }

    #[test]
    fn color_magic_rejected() {
        let bytes = b"PF\n1 1\n-1.0\n\0\0\0\0\0\0\0\0\0\0\0\0";
        assert!(matches!(parse_pfm(bytes), Err(Error::BadMagic(m)) if m == "PF"));
    }

    #[test]
    fn little_endian_fixture() {
        // 2 wide, 2 high; first stored row is the bottom image row
        let mut bytes = b"Pf\n2 2\n-1.0\n".to_vec();
        for x in [3.0f32, 4.0, 1.0, 2.0] {
            bytes.extend_from_slice(&x.to_le_bytes());
        }
        let d = parse_pfm(&bytes).unwrap();
        assert_eq!(d.values(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn big_endian_fixture() {
        let mut bytes = b"Pf\n3 1\n1.0\n".to_vec();
        for x in [0.5f32, 9.0, 12.125] {
            bytes.extend_from_slice(&x.to_be_bytes());
        }
        assert_eq!(parse_pfm(&bytes).unwrap().values(), &[0.5, 9.0, 12.125]);
    }

    #[test]
    fn truncated() {
        let mut bytes = b"Pf\n2 2\n-1.0\n".to_vec();
        bytes.extend_from_slice(&[0u8; 12]);
        assert!(matches!(
            parse_pfm(&bytes),
            Err(Error::TruncatedPayload { expected: 16, found: 12 })
        ));
        assert!(matches!(parse_pfm(b"Pf\n2"), Err(Error::TruncatedPayload { .. })));
    }

    #[test]
    fn bad_dimensions() {
        assert!(matches!(parse_pfm(b"Pf\n0 2\n-1.0\n"), Err(Error::DimensionMismatch(_))));
        assert!(matches!(parse_pfm(b"Pf\nx 2\n-1.0\n"), Err(Error::DimensionMismatch(_))));
        let mut bytes = b"Pf\n1 1\n-1.0\n".to_vec();
        bytes.extend_from_slice(&[0u8; 8]);
        assert!(matches!(parse_pfm(&bytes), Err(Error::DimensionMismatch(_))));
    }

    proptest! {
        #[test]
        fn written_bytes_are_a_fixed_point(w in 1usize..6, h in 1usize..6, seed in any::<u32>()) {
            let d = DepthMap::from_fn(w, h, |u, v| f64::from(seed.wrapping_mul(31).wrapping_add((u * 7 + v * 13) as u32) % 1000) * 0.013);
            let bytes = write_pfm(&d);
            prop_assert_eq!(write_pfm(&parse_pfm(&bytes).unwrap()), bytes);
        }
    }
}
