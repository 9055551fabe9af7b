//! Raster value types, PGM (P5/P2) file I/O and line overlays.
//!
//! Coordinates follow the usual image convention: `x` is the column index
//! growing to the right, `y` the row index growing downward, origin at the
//! top-left pixel.

use std::fmt::Write as _;

use thiserror::Error;

use crate::hough::PolarLine;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RasterError {
    #[error("image dimensions must be non-zero (got {width}x{height})")]
    ZeroDimension { width: usize, height: usize },
    #[error("pixel buffer has {actual} entries, expected {expected}")]
    BufferSize { expected: usize, actual: usize },
    #[error("dimension mismatch: {left:?} vs {right:?}")]
    DimensionMismatch {
        left: (usize, usize),
        right: (usize, usize),
    },
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PgmError {
    #[error("byte {offset}: bad magic number, expected P5 or P2")]
    BadMagic { offset: usize },
    #[error("byte {offset}: truncated {what}")]
    Truncated { offset: usize, what: &'static str },
    #[error("byte {offset}: malformed header number")]
    BadNumber { offset: usize },
    #[error("byte {offset}: maxval {maxval} is outside 1..=255")]
    BadMaxval { offset: usize, maxval: u64 },
    #[error("byte {offset}: zero image dimension")]
    ZeroDimension { offset: usize },
    #[error("byte {offset}: sample {value} exceeds maxval {maxval}")]
    SampleExceedsMaxval {
        offset: usize,
        value: u64,
        maxval: u64,
    },
}

/// 8-bit grayscale raster, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self, RasterError> {
        if width == 0 || height == 0 {
            return Err(RasterError::ZeroDimension { width, height });
        }
        if pixels.len() != width * height {
            return Err(RasterError::BufferSize {
                expected: width * height,
                actual: pixels.len(),
            });
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Result<Self, RasterError> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> u8,
    ) -> Result<Self, RasterError> {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Self::new(width, height, pixels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dimensions(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, value: u8) {
        self.pixels[y * self.width + x] = value;
    }
}

/// One bit per pixel edge map with a maintained edge counter. Rows are
/// padded to whole 64-bit words.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryImage {
    width: usize,
    height: usize,
    stride: usize,
    words: Vec<u64>,
    count: usize,
}

impl BinaryImage {
    pub fn empty(width: usize, height: usize) -> Result<Self, RasterError> {
        if width == 0 || height == 0 {
            return Err(RasterError::ZeroDimension { width, height });
        }
        let stride = width.div_ceil(64);
        Ok(Self {
            width,
            height,
            stride,
            words: vec![0; stride * height],
            count: 0,
        })
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> bool,
    ) -> Result<Self, RasterError> {
        let mut img = Self::empty(width, height)?;
        for y in 0..height {
            for x in 0..width {
                if f(x, y) {
                    img.words[y * img.stride + x / 64] |= 1 << (x % 64);
                    img.count += 1;
                }
            }
        }
        Ok(img)
    }

    /// Marks every non-zero pixel of `img`.
    pub fn from_gray(img: &GrayImage) -> Self {
        Self::from_fn(img.width, img.height, |x, y| img.get(x, y) != 0)
            .expect("GrayImage dimensions are non-zero")
    }

    /// Marks the listed points, ignoring any outside the raster.
    pub fn from_points(
        width: usize,
        height: usize,
        points: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self, RasterError> {
        let mut img = Self::empty(width, height)?;
        for (x, y) in points {
            if x < width && y < height {
                img.set(x, y, true);
            }
        }
        Ok(img)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dimensions(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        assert!(x < self.width && y < self.height, "pixel ({x}, {y}) outside the raster");
        self.words[y * self.stride + x / 64] >> (x % 64) & 1 == 1
    }

    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        assert!(x < self.width && y < self.height, "pixel ({x}, {y}) outside the raster");
        let word = &mut self.words[y * self.stride + x / 64];
        let mask = 1u64 << (x % 64);
        match (*word & mask != 0, value) {
            (false, true) => self.count += 1,
            (true, false) => self.count -= 1,
            _ => {}
        }
        if value {
            *word |= mask;
        } else {
            *word &= !mask;
        }
    }

    /// Number of marked pixels, O(1).
    pub fn edge_count(&self) -> usize {
        self.count
    }

    /// Marked columns of row `y` within `x_start..x_end`, ascending.
    pub fn row_points(&self, y: usize, x_start: usize, x_end: usize) -> impl Iterator<Item = usize> + '_ {
        let x_end = x_end.min(self.width);
        let row = &self.words[y * self.stride..(y + 1) * self.stride];
        let first = x_start / 64;
        let last = if x_end > x_start { x_end.div_ceil(64) } else { first };
        (first..last).flat_map(move |w| {
            let lo = (w * 64).max(x_start) - w * 64;
            let hi = ((w + 1) * 64).min(x_end) - w * 64;
            let mut bits = row[w] & range_mask(lo, hi);
            std::iter::from_fn(move || {
                (bits != 0).then(|| {
                    let b = bits.trailing_zeros() as usize;
                    bits &= bits - 1;
                    w * 64 + b
                })
            })
        })
    }

    /// Longest run of marked pixels in row `y` within `x_start..x_end`, as
    /// `(start column, length)`; `(x_start, 0)` for an empty range.
    pub fn longest_run(&self, y: usize, x_start: usize, x_end: usize) -> (usize, usize) {
        let mut best = (x_start, 0);
        let mut current = (x_start, 0);
        for x in self.row_points(y, x_start, x_end) {
            if current.1 > 0 && x == current.0 + current.1 {
                current.1 += 1;
            } else {
                current = (x, 1);
            }
            if current.1 > best.1 {
                best = current;
            }
        }
        best
    }

    /// Marked pixels in row-major order.
    pub fn edge_points(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.height).flat_map(move |y| self.row_points(y, 0, self.width).map(move |x| (x, y)))
    }

    /// Full recount of marked pixels, for checking the maintained counter.
    pub fn recount(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// 0/255 grayscale rendering.
    pub fn to_gray(&self) -> GrayImage {
        GrayImage::from_fn(self.width, self.height, |x, y| if self.get(x, y) { 255 } else { 0 })
            .expect("BinaryImage dimensions are non-zero")
    }
}

/// Bits `lo..hi` of a word.
fn range_mask(lo: usize, hi: usize) -> u64 {
    if hi <= lo {
        return 0;
    }
    let upper = if hi == 64 { u64::MAX } else { (1u64 << hi) - 1 };
    upper & !((1u64 << lo) - 1)
}

struct HeaderReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> HeaderReader<'a> {
    fn skip_whitespace_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while let Some(&c) = self.bytes.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' || c == b'\r' {
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

    fn number(&mut self, what: &'static str) -> Result<(u64, usize), PgmError> {
        self.skip_whitespace_and_comments();
        let start = self.pos;
        if start >= self.bytes.len() {
            return Err(PgmError::Truncated {
                offset: start,
                what,
            });
        }
        let mut value: u64 = 0;
        while let Some(&b) = self.bytes.get(self.pos) {
            if !b.is_ascii_digit() {
                break;
            }
            value = value
                .checked_mul(10)
                .and_then(|v| v.checked_add(u64::from(b - b'0')))
                .ok_or(PgmError::BadNumber { offset: start })?;
            self.pos += 1;
        }
        if self.pos == start {
            return Err(PgmError::BadNumber { offset: start });
        }
        Ok((value, start))
    }
}

/// Parses a binary (P5) or ASCII (P2) graymap with maxval at most 255.
///
/// Sample values are kept as stored; they are not rescaled by maxval.
pub fn read_pgm(bytes: &[u8]) -> Result<GrayImage, PgmError> {
    let binary = match bytes.get(..2) {
        Some(b"P5") => true,
        Some(b"P2") => false,
        _ => return Err(PgmError::BadMagic { offset: 0 }),
    };
    let mut reader = HeaderReader { bytes, pos: 2 };
    if !matches!(bytes.get(2), Some(b) if b.is_ascii_whitespace() || *b == b'#') {
        return Err(PgmError::BadMagic { offset: 2 });
    }
    let (width, width_at) = reader.number("width")?;
    let (height, height_at) = reader.number("height")?;
    let (maxval, maxval_at) = reader.number("maxval")?;
    if width == 0 {
        return Err(PgmError::ZeroDimension { offset: width_at });
    }
    if height == 0 {
        return Err(PgmError::ZeroDimension { offset: height_at });
    }
    if maxval == 0 || maxval > 255 {
        return Err(PgmError::BadMaxval {
            offset: maxval_at,
            maxval,
        });
    }
    let total = usize::try_from(width)
        .ok()
        .zip(usize::try_from(height).ok())
        .and_then(|(w, h)| w.checked_mul(h))
        .ok_or(PgmError::BadNumber { offset: width_at })?;

    let pixels = if binary {
        // Exactly one whitespace byte separates maxval from the payload.
        match bytes.get(reader.pos) {
            Some(b) if b.is_ascii_whitespace() => reader.pos += 1,
            _ => {
                return Err(PgmError::Truncated {
                    offset: reader.pos,
                    what: "header terminator",
                })
            }
        }
        let start = reader.pos;
        let payload = bytes
            .get(start..start.saturating_add(total))
            .filter(|p| p.len() == total)
            .ok_or(PgmError::Truncated {
                offset: bytes.len(),
                what: "pixel payload",
            })?;
        if let Some(i) = payload.iter().position(|&v| u64::from(v) > maxval) {
            return Err(PgmError::SampleExceedsMaxval {
                offset: start + i,
                value: u64::from(payload[i]),
                maxval,
            });
        }
        payload.to_vec()
    } else {
        let mut pixels = Vec::with_capacity(total);
        for _ in 0..total {
            let (value, at) = reader.number("pixel payload")?;
            if value > maxval {
                return Err(PgmError::SampleExceedsMaxval {
                    offset: at,
                    value,
                    maxval,
                });
            }
            pixels.push(value as u8);
        }
        pixels
    };
    Ok(GrayImage {
        width: width as usize,
        height: height as usize,
        pixels,
    })
}

/// Encodes as P5 with maxval 255 and no comments.
pub fn write_pgm(img: &GrayImage) -> Vec<u8> {
    let mut header = String::new();
    write!(header, "P5\n{} {}\n255\n", img.width, img.height).expect("writing to a String");
    let mut out = Vec::with_capacity(header.len() + img.pixels.len());
    out.extend_from_slice(header.as_bytes());
    out.extend_from_slice(&img.pixels);
    out
}

/// Pixels covered by `line` inside a `width` x `height` rectangle, one pixel
/// per step along the line's major axis.
pub fn rasterize_line(line: &PolarLine, width: usize, height: usize) -> Vec<(usize, usize)> {
    let (sin, cos) = line.theta.sin_cos();
    let mut out = Vec::new();
    if sin.abs() >= cos.abs() {
        for x in 0..width {
            let y = ((line.rho - x as f64 * cos) / sin).round();
            if y >= 0.0 && y < height as f64 {
                out.push((x, y as usize));
            }
        }
    } else {
        for y in 0..height {
            let x = ((line.rho - y as f64 * sin) / cos).round();
            if x >= 0.0 && x < width as f64 {
                out.push((x as usize, y));
            }
        }
    }
    out
}

/// Copy of `img` with every line drawn at intensity 255, 1 px wide.
pub fn render_overlay(img: &GrayImage, lines: &[PolarLine]) -> GrayImage {
    let mut out = img.clone();
    for line in lines {
        for (x, y) in rasterize_line(line, img.width, img.height) {
            out.set(x, y, 255);
        }
    }
    out
}
