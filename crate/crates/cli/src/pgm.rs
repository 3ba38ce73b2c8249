//! Grayscale PGM (P2 ASCII and P5 binary) reading and writing.
//!
//! Reading maps samples to `value / maxval`. Writing quantizes at 8 bits,
//! clamping to `[0, 1]` and rounding half away from zero.

use std::fs;
use std::path::Path;

use normeq::{Instance, Shape};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PgmError {
    #[error("PGM parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn perr(offset: usize, message: impl Into<String>) -> PgmError {
    PgmError::Parse { offset, message: message.into() }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Encoding {
    Ascii,
    Binary,
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    /// Skip whitespace and `#` comments.
    fn skip_space(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' && self.bytes[self.pos] != b'\r' {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<u32, PgmError> {
        self.skip_space();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(if start == self.bytes.len() {
                perr(start, format!("unexpected end of file reading {what}"))
            } else {
                perr(start, format!("expected {what}"))
            });
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .unwrap()
            .parse()
            .map_err(|_| perr(start, format!("{what} out of range")))
    }
}

pub fn decode(bytes: &[u8]) -> Result<Instance, PgmError> {
    let encoding = match bytes.get(..2) {
        Some(b"P2") => Encoding::Ascii,
        Some(b"P5") => Encoding::Binary,
        _ => return Err(perr(0, "not a grayscale PGM (expected P2 or P5)")),
    };
    let mut cur = Cursor { bytes, pos: 2 };
    let width_at = cur.pos;
    let width = cur.number("width")? as usize;
    let height = cur.number("height")? as usize;
    if width == 0 || height == 0 {
        return Err(perr(width_at, "zero image dimension"));
    }
    let maxval_at = cur.pos;
    let maxval = cur.number("maxval")?;
    if maxval == 0 || maxval > 65535 {
        return Err(perr(maxval_at, format!("maxval {maxval} outside 1..=65535")));
    }
    let n = width * height;
    let scale = maxval as f64;
    let mut values = Vec::with_capacity(n);
    match encoding {
        Encoding::Ascii => {
            for _ in 0..n {
                let at = cur.pos;
                let v = cur.number("sample")?;
                if v > maxval {
                    return Err(perr(at, format!("sample {v} exceeds maxval {maxval}")));
                }
                values.push(v as f64 / scale);
            }
        }
        Encoding::Binary => {
            // exactly one whitespace byte separates the header from the raster
            match bytes.get(cur.pos) {
                Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
                _ => return Err(perr(cur.pos, "missing whitespace after maxval")),
            }
            let width_bytes = if maxval > 255 { 2 } else { 1 };
            let body = &bytes[cur.pos..];
            if body.len() < n * width_bytes {
                return Err(perr(bytes.len(), format!("truncated raster: need {} bytes, have {}", n * width_bytes, body.len())));
            }
            for k in 0..n {
                let v = if width_bytes == 2 {
                    u16::from_be_bytes([body[2 * k], body[2 * k + 1]]) as u32
                } else {
                    body[k] as u32
                };
                if v > maxval {
                    return Err(perr(cur.pos + k * width_bytes, format!("sample {v} exceeds maxval {maxval}")));
                }
                values.push(v as f64 / scale);
            }
        }
    }
    Instance::new(Shape::gray(height, width), values).map_err(|e| perr(0, e.to_string()))
}

pub fn read(path: &Path) -> Result<Instance, PgmError> {
    decode(&fs::read(path)?)
}

/// `v` clamped to `[0, 1]` and scaled to `0..=maxval`, half away from zero.
pub fn quantize(v: f64, maxval: u16) -> u16 {
    let v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
    (v * maxval as f64).round() as u16
}

pub fn encode(img: &Instance, encoding: Encoding) -> Result<Vec<u8>, PgmError> {
    let shape = img.shape();
    if shape.channels != 1 {
        return Err(perr(0, format!("PGM holds one channel, image has {}", shape.channels)));
    }
    let magic = match encoding {
        Encoding::Ascii => "P2",
        Encoding::Binary => "P5",
    };
    let mut out = format!("{magic}\n{} {}\n255\n", shape.width, shape.height).into_bytes();
    let q = img.values().iter().map(|&v| quantize(v, 255) as u8);
    match encoding {
        Encoding::Binary => out.extend(q),
        Encoding::Ascii => {
            let samples: Vec<u8> = q.collect();
            for row in samples.chunks(shape.width) {
                let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
                out.extend_from_slice(line.join(" ").as_bytes());
                out.push(b'\n');
            }
        }
    }
    Ok(out)
}

pub fn write(path: &Path, img: &Instance) -> Result<(), PgmError> {
    fs::write(path, encode(img, Encoding::Binary)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_rounds_away_from_zero() {
        assert_eq!(quantize(0.5, 255), 128);
        assert_eq!(quantize(-0.2, 255), 0);
        assert_eq!(quantize(1.7, 255), 255);
    }

    #[test]
    fn ascii_with_comments() {
        let img = decode(b"P2\n# hello\n3 1 # trailing\n4\n0 2 4\n").unwrap();
        assert_eq!(img.values(), &[0.0, 0.5, 1.0]);
        assert_eq!(img.shape(), Shape::gray(1, 3));
    }

    #[test]
    fn sixteen_bit_samples_are_big_endian() {
        let mut bytes = b"P5 2 1 65535\n".to_vec();
        bytes.extend_from_slice(&[0x80, 0x00, 0xff, 0xff]);
        let img = decode(&bytes).unwrap();
        assert_eq!(img.values(), &[32768.0 / 65535.0, 1.0]);
    }

    #[test]
    fn errors_carry_offsets() {
        match decode(b"P5 4 4 255\n\x00\x01") {
            Err(PgmError::Parse { offset, .. }) => assert_eq!(offset, 13),
            other => panic!("{other:?}"),
        }
        match decode(b"P2 2 x") {
            Err(PgmError::Parse { offset, .. }) => assert_eq!(offset, 5),
            other => panic!("{other:?}"),
        }
        assert!(decode(b"P6 1 1 255\n\x00").is_err());
        assert!(decode(b"P2 1 1 70000\n0").is_err());
        assert!(decode(b"P2 2 1 9\n3 10").is_err());
    }

    proptest::proptest! {
        #[test]
        fn eight_bit_rasters_round_trip(h in 1usize..9, w in 1usize..9, raw in proptest::collection::vec(0u8..=255, 64), ascii in proptest::bool::ANY) {
            let enc = if ascii { Encoding::Ascii } else { Encoding::Binary };
            let values: Vec<f64> = raw[..h * w].iter().map(|&v| v as f64 / 255.0).collect();
            let img = Instance::new(Shape::gray(h, w), values).unwrap();
            let bytes = encode(&img, enc).unwrap();
            let back = decode(&bytes).unwrap();
            proptest::prop_assert_eq!(&back, &img);
            proptest::prop_assert_eq!(encode(&back, enc).unwrap(), bytes);
        }
    }

    #[test]
    fn eight_bit_round_trip_is_byte_identical() {
        let mut bytes = b"P5\n4 2\n255\n".to_vec();
        bytes.extend((0u8..8).map(|k| k * 31));
        let img = decode(&bytes).unwrap();
        assert_eq!(encode(&img, Encoding::Binary).unwrap(), bytes);
    }
}
