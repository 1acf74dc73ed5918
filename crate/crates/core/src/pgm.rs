//! Binary (P5) 8-bit PGM images.

use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ImageU8 {
    height: usize,
    width: usize,
    pixels: Vec<u8>,
}

impl ImageU8 {
    pub fn new(height: usize, width: usize, pixels: Vec<u8>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidDimension {
                rows: height,
                cols: width,
            });
        }
        if pixels.len() != height * width {
            return Err(Error::DataLength {
                rows: height,
                cols: width,
                got: pixels.len(),
            });
        }
        Ok(Self { height, width, pixels })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    /// Pixels scaled to `[0, 1]`.
    pub fn to_matrix(&self) -> DenseMatrix {
        DenseMatrix::new(
            self.height,
            self.width,
            self.pixels.iter().map(|&p| p as f64 / 255.0).collect(),
        )
        .expect("image dimensions are positive")
    }

    /// Inverse of [`to_matrix`](Self::to_matrix): scale by 255, round, clamp.
    pub fn from_matrix(m: &DenseMatrix) -> Self {
        let pixels = m
            .as_slice()
            .iter()
            .map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
            .collect();
        Self {
            height: m.rows(),
            width: m.cols(),
            pixels,
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor { bytes, pos: 0 };
        match bytes.get(0..2) {
            Some(b"P5") => {}
            Some([b'P', d]) if d.is_ascii_digit() => {
                return Err(Error::parse(
                    0,
                    format!("unsupported format P{}, only binary P5 is supported", *d as char),
                ))
            }
            _ => return Err(Error::parse(0, "missing P5 magic")),
        }
        cur.pos = 2;
        let (width, _) = cur.header_number()?;
        let (height, _) = cur.header_number()?;
        let (maxval, maxval_at) = cur.header_number()?;
        if maxval != 255 {
            return Err(Error::parse(
                maxval_at,
                format!("unsupported maxval {maxval}, expected 255"),
            ));
        }
        // Exactly one whitespace byte separates the header from the raster.
        match bytes.get(cur.pos) {
            Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
            _ => return Err(Error::parse(cur.pos, "expected whitespace after maxval")),
        }
        if width == 0 || height == 0 {
            return Err(Error::parse(
                2,
                format!("image dimensions must be positive, got {width}x{height}"),
            ));
        }
        let len = width * height;
        let raster = bytes.get(cur.pos..cur.pos + len).ok_or_else(|| {
            Error::parse(
                bytes.len(),
                format!("truncated raster: expected {len} bytes from offset {}", cur.pos),
            )
        })?;
        if cur.pos + len != bytes.len() {
            return Err(Error::parse(cur.pos + len, "trailing bytes after raster"));
        }
        Self::new(height, width, raster.to_vec())
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn skip_space_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while let Some(&c) = self.bytes.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' {
                        break;
                    }
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    /// Returns the number and the offset of its first digit.
    fn header_number(&mut self) -> Result<(usize, usize)> {
        let before = self.pos;
        self.skip_space_and_comments();
        if self.pos == before {
            return Err(Error::parse(self.pos, "expected whitespace in header"));
        }
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::parse(start, "expected a decimal number in header"));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .map(|v| (v, start))
            .ok_or_else(|| Error::parse(start, "header number out of range"))
    }
}

pub fn load_pgm(path: &Path) -> Result<ImageU8> {
    ImageU8::decode(&std::fs::read(path)?)
}

pub fn save_pgm(path: &Path, image: &ImageU8) -> Result<()> {
    std::fs::write(path, image.encode())?;
    Ok(())
}
