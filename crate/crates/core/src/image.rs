//! Row-major 2D arrays and plain PGM (P2/P5) I/O.

use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Grid2<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

impl<T: Clone> Grid2<T> {
    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }
}

impl<T> Grid2<T> {
    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::InvalidInput(format!(
                "{}x{} grid needs {} values, got {}",
                width,
                height,
                width * height,
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> &T {
        &self.data[row * self.width + col]
    }

    #[inline]
    pub fn get_mut(&mut self, row: usize, col: usize) -> &mut T {
        &mut self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, v: T) {
        self.data[row * self.width + col] = v;
    }

    /// Bounds-checked access with signed coordinates.
    pub fn try_get(&self, row: isize, col: isize) -> Option<&T> {
        if row < 0 || col < 0 || row as usize >= self.height || col as usize >= self.width {
            None
        } else {
            Some(self.get(row as usize, col as usize))
        }
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Grid2<U> {
        Grid2 {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(f).collect(),
        }
    }

    pub fn row(&self, row: usize) -> &[T] {
        &self.data[row * self.width..(row + 1) * self.width]
    }
}

/// Grayscale image with 8-bit samples.
pub type GrayImage = Grid2<u8>;

fn next_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Option<&'a [u8]> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    (start < *pos).then(|| &bytes[start..*pos])
}

/// Decodes a P2 or P5 PGM. Samples are rescaled to 0..=255 unless maxval is 255.
pub fn decode_pgm(bytes: &[u8], source: &Path) -> Result<GrayImage> {
    let (raw, maxval) = decode_pgm_raw(bytes, source)?;
    Ok(raw.map(|&v| {
        let v = (v as usize).min(maxval);
        if maxval == 255 {
            v as u8
        } else {
            ((v * 255 + maxval / 2) / maxval) as u8
        }
    }))
}

/// Decodes a PGM without rescaling, returning raw samples and maxval.
pub fn decode_pgm_raw(bytes: &[u8], source: &Path) -> Result<(Grid2<u16>, usize)> {
    let magic = match &bytes.get(..2) {
        Some(b"P2") => 2,
        Some(b"P5") => 5,
        _ => return Err(Error::parse(source, "not a P2/P5 PGM file")),
    };
    let mut pos = 2;
    let header = |pos: &mut usize, what: &str| -> Result<usize> {
        let tok = next_token(bytes, pos)
            .ok_or_else(|| Error::parse(source, format!("truncated PGM header ({what})")))?;
        std::str::from_utf8(tok)
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::parse(source, format!("bad PGM {what}")))
    };
    let width = header(&mut pos, "width")?;
    let height = header(&mut pos, "height")?;
    let maxval = header(&mut pos, "maxval")?;
    if maxval == 0 || maxval > 65535 {
        return Err(Error::parse(source, format!("bad PGM maxval {maxval}")));
    }
    let n = width * height;
    let data = if magic == 5 {
        // exactly one whitespace byte separates the header from the raster
        let start = pos + 1;
        let bps = if maxval < 256 { 1 } else { 2 };
        let raster = bytes
            .get(start..start + n * bps)
            .ok_or_else(|| Error::parse(source, "truncated PGM raster"))?;
        if bps == 1 {
            raster.iter().map(|&v| v as u16).collect()
        } else {
            raster
                .chunks_exact(2)
                .map(|c| u16::from_be_bytes([c[0], c[1]]))
                .collect()
        }
    } else {
        let mut v = Vec::with_capacity(n);
        for _ in 0..n {
            let tok = next_token(bytes, &mut pos)
                .ok_or_else(|| Error::parse(source, "truncated PGM raster"))?;
            let val: u16 = std::str::from_utf8(tok)
                .ok()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::parse(source, "bad PGM sample"))?;
            v.push(val);
        }
        v
    };
    Ok((Grid2::from_vec(width, height, data)?, maxval))
}

/// Encodes a binary (P5) 8-bit PGM.
pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend_from_slice(img.as_slice());
    out
}

/// Encodes an ASCII (P2) 8-bit PGM.
pub fn encode_pgm_ascii(img: &GrayImage) -> Vec<u8> {
    let mut s = format!("P2\n{} {}\n255\n", img.width(), img.height());
    for r in 0..img.height() {
        let line: Vec<String> = img.row(r).iter().map(|v| v.to_string()).collect();
        s.push_str(&line.join(" "));
        s.push('\n');
    }
    s.into_bytes()
}

pub fn load_pgm(path: &Path) -> Result<GrayImage> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pgm(&bytes, path)
}

pub fn save_pgm(path: &Path, img: &GrayImage) -> Result<()> {
    std::fs::write(path, encode_pgm(img)).map_err(|e| Error::io(path, e))
}
