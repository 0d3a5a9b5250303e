//! Binary rasters and the Netpbm PBM (P1/P4) codec.
//!
//! Foreground is PBM bit `1` (black).

use std::fmt;

use crate::error::{invalid, Error, Result};

/// A rectangular grid of foreground/background pixels, row-major.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BinaryRaster {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl BinaryRaster {
    /// All-background raster.
    pub fn empty(width: usize, height: usize) -> Result<Self> {
        Self::from_bits(width, height, vec![false; width.saturating_mul(height)])
    }

    pub fn from_bits(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(invalid(format!("raster dimensions must be positive, got {width}x{height}")));
        }
        if bits.len() != width * height {
            return Err(invalid(format!(
                "raster {width}x{height} needs {} bits, got {}",
                width * height,
                bits.len()
            )));
        }
        Ok(Self { width, height, bits })
    }

    /// Builds a raster by evaluating `f(x, y)` for every pixel.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Result<Self> {
        let mut bits = Vec::with_capacity(width.saturating_mul(height));
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        Self::from_bits(width, height, bits)
    }

    /// Parses an ASCII picture where `#` or `1` marks foreground and any
    /// other non-whitespace character background. Rows are lines.
    pub fn from_ascii(art: &str) -> Result<Self> {
        let rows: Vec<&str> = art.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
        let height = rows.len();
        let width = rows.first().map_or(0, |r| r.chars().count());
        if rows.iter().any(|r| r.chars().count() != width) {
            return Err(invalid("ragged ascii raster"));
        }
        let bits = rows
            .iter()
            .flat_map(|r| r.chars().map(|c| c == '#' || c == '1'))
            .collect();
        Self::from_bits(width, height, bits)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    /// Foreground test; panics when out of range.
    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        assert!(x < self.width && y < self.height, "pixel ({x},{y}) outside raster");
        self.bits[y * self.width + x]
    }

    /// Foreground test for signed coordinates; everything outside the
    /// window is background.
    #[inline]
    pub fn is_foreground(&self, x: i64, y: i64) -> bool {
        x >= 0
            && y >= 0
            && (x as usize) < self.width
            && (y as usize) < self.height
            && self.bits[y as usize * self.width + x as usize]
    }

    pub fn foreground_count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }
}

impl fmt::Debug for BinaryRaster {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "BinaryRaster {}x{}", self.width, self.height)?;
        if self.width * self.height <= 64 * 64 {
            for row in self.bits.chunks(self.width) {
                let line: String = row.iter().map(|&b| if b { '#' } else { '.' }).collect();
                writeln!(f, "{line}")?;
            }
        }
        Ok(())
    }
}

/// PBM flavour: `Plain` is P1 (ASCII), `Raw` is P4 (packed bits).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PbmVariant {
    Plain,
    Raw,
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn err(&self, message: impl Into<String>) -> Error {
        Error::Parse { offset: self.pos, message: message.into() }
    }

    fn peek(&self) -> Option<u8> {
        self.data.get(self.pos).copied()
    }

    /// Skips whitespace and `#` comments (which run to end of line).
    fn skip_separators(&mut self) {
        while let Some(c) = self.peek() {
            if c == b'#' {
                while let Some(c) = self.peek() {
                    self.pos += 1;
                    if c == b'\n' || c == b'\r' {
                        break;
                    }
                }
            } else if c.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn dimension(&mut self, what: &str) -> Result<usize> {
        self.skip_separators();
        let start = self.pos;
        while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(match self.peek() {
                None => self.err(format!("truncated header: missing {what}")),
                Some(_) => self.err(format!("expected {what}")),
            });
        }
        let text = std::str::from_utf8(&self.data[start..self.pos]).expect("ascii digits");
        let value: usize = text
            .parse()
            .map_err(|_| Error::Parse { offset: start, message: format!("{what} out of range") })?;
        if value == 0 {
            return Err(Error::Parse { offset: start, message: format!("{what} must be positive") });
        }
        Ok(value)
    }
}

/// Decodes a P1 or P4 PBM image.
pub fn parse_pbm(bytes: &[u8]) -> Result<BinaryRaster> {
    let mut cur = Cursor { data: bytes, pos: 0 };
    let variant = match bytes.get(..2) {
        Some(b"P1") => PbmVariant::Plain,
        Some(b"P4") => PbmVariant::Raw,
        _ => return Err(cur.err("bad magic, expected P1 or P4")),
    };
    cur.pos = 2;
    if !matches!(cur.peek(), Some(c) if c.is_ascii_whitespace() || c == b'#') {
        return Err(cur.err("expected whitespace after magic"));
    }
    let width = cur.dimension("width")?;
    let height = cur.dimension("height")?;
    let total = width
        .checked_mul(height)
        .ok_or_else(|| cur.err("image dimensions overflow"))?;

    let mut bits = Vec::with_capacity(total);
    match variant {
        PbmVariant::Plain => {
            while bits.len() < total {
                cur.skip_separators();
                match cur.peek() {
                    Some(b'0') => bits.push(false),
                    Some(b'1') => bits.push(true),
                    Some(c) => return Err(cur.err(format!("unexpected byte 0x{c:02x} in plain raster"))),
                    None => {
                        return Err(cur.err(format!("truncated payload: {} of {total} pixels", bits.len())))
                    }
                }
                cur.pos += 1;
            }
        }
        PbmVariant::Raw => {
            match cur.peek() {
                Some(c) if c.is_ascii_whitespace() => cur.pos += 1,
                Some(_) => return Err(cur.err("expected single whitespace before raster")),
                None => return Err(cur.err("truncated payload: no raster data")),
            }
            let stride = width.div_ceil(8);
            let need = stride * height;
            let payload = &bytes[cur.pos..];
            if payload.len() < need {
                cur.pos = bytes.len();
                return Err(cur.err(format!("truncated payload: {} of {need} bytes", payload.len())));
            }
            for row in payload[..need].chunks_exact(stride) {
                for x in 0..width {
                    bits.push(row[x / 8] & (0x80 >> (x % 8)) != 0);
                }
            }
        }
    }
    BinaryRaster::from_bits(width, height, bits)
}

/// Encodes a raster as PBM. Plain output keeps lines at most 70 characters.
pub fn write_pbm(raster: &BinaryRaster, variant: PbmVariant) -> Vec<u8> {
    let (w, h) = (raster.width(), raster.height());
    match variant {
        PbmVariant::Plain => {
            let mut out = format!("P1\n{w} {h}\n").into_bytes();
            for row in raster.bits().chunks(w) {
                let mut line_len = 0;
                for (i, &b) in row.iter().enumerate() {
                    if i > 0 {
                        if line_len + 2 > 70 {
                            out.push(b'\n');
                            line_len = 0;
                        } else {
                            out.push(b' ');
                            line_len += 1;
                        }
                    }
                    out.push(if b { b'1' } else { b'0' });
                    line_len += 1;
                }
                out.push(b'\n');
            }
            out
        }
        PbmVariant::Raw => {
            let stride = w.div_ceil(8);
            let mut out = format!("P4\n{w} {h}\n").into_bytes();
            out.reserve(stride * h);
            for row in raster.bits().chunks(w) {
                let start = out.len();
                out.resize(start + stride, 0);
                for (x, &b) in row.iter().enumerate() {
                    if b {
                        out[start + x / 8] |= 0x80 >> (x % 8);
                    }
                }
            }
            out
        }
    }
}
