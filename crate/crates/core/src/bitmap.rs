//! Binary raster images with portable-graymap (PGM, maxval 1) I/O.
//!
//! Pixels are stored row-major with row 0 at the bottom (y pointing up), which
//! matches the unit-cell coordinates used by the lattice catalog. PGM files are
//! written top row first, as the format expects.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Bitmap {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl Bitmap {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0; width * height],
        }
    }

    pub fn filled(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![1; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y) as u8);
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

    pub fn as_slice(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x] != 0
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, solid: bool) {
        self.data[y * self.width + x] = solid as u8;
    }

    pub fn solid_count(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }

    pub fn solid_fraction(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        self.solid_count() as f64 / self.data.len() as f64
    }

    /// Mirror about the vertical axis (x -> width-1-x).
    pub fn mirror_x(&self) -> Self {
        Self::from_fn(self.width, self.height, |x, y| {
            self.get(self.width - 1 - x, y)
        })
    }

    /// Mirror about the horizontal axis (y -> height-1-y).
    pub fn mirror_y(&self) -> Self {
        Self::from_fn(self.width, self.height, |x, y| {
            self.get(x, self.height - 1 - y)
        })
    }

    /// Block-majority downsampling by an integer factor; a block is solid when
    /// at least half of its pixels are.
    pub fn downsample(&self, factor: usize) -> Result<Self> {
        if factor == 0 || !self.width.is_multiple_of(factor) || !self.height.is_multiple_of(factor) {
            return Err(Error::Invalid(format!(
                "cannot downsample {}x{} by {factor}",
                self.width, self.height
            )));
        }
        let (w, h) = (self.width / factor, self.height / factor);
        let half = factor * factor;
        Ok(Self::from_fn(w, h, |x, y| {
            let mut count = 0;
            for dy in 0..factor {
                for dx in 0..factor {
                    count += self.get(x * factor + dx, y * factor + dy) as usize;
                }
            }
            2 * count >= half
        }))
    }

    /// Copy `tile` into this image with its lower-left corner at (x0, y0).
    pub fn blit(&mut self, tile: &Bitmap, x0: usize, y0: usize) {
        for y in 0..tile.height {
            let dst = (y0 + y) * self.width + x0;
            let src = y * tile.width;
            self.data[dst..dst + tile.width].copy_from_slice(&tile.data[src..src + tile.width]);
        }
    }

    /// Write as a binary PGM (`P5`) with maxval 1.
    pub fn write_pgm(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        self.write_pgm_to(&mut out).map_err(|e| Error::io(path, e))?;
        out.flush().map_err(|e| Error::io(path, e))
    }

    pub fn write_pgm_to(&self, out: &mut impl Write) -> std::io::Result<()> {
        write!(out, "P5\n{} {}\n1\n", self.width, self.height)?;
        for y in (0..self.height).rev() {
            out.write_all(&self.data[y * self.width..(y + 1) * self.width])?;
        }
        Ok(())
    }

    /// Read a PGM with maxval 1, binary (`P5`) or plain (`P2`).
    pub fn read_pgm(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut reader = BufReader::new(file);
        Self::read_pgm_from(&mut reader).map_err(|e| match e {
            Error::Invalid(msg) => Error::Invalid(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn read_pgm_from(reader: &mut impl BufRead) -> Result<Self> {
        let bad = |m: &str| Error::Invalid(format!("malformed PGM: {m}"));
        let mut header = Vec::new();
        let mut token = String::new();
        // magic, width, height, maxval
        while header.len() < 4 {
            let mut byte = [0u8; 1];
            if reader.read(&mut byte).map_err(|e| Error::io("<pgm>", e))? == 0 {
                return Err(bad("truncated header"));
            }
            let c = byte[0] as char;
            if c == '#' {
                let mut skip = String::new();
                reader
                    .read_line(&mut skip)
                    .map_err(|e| Error::io("<pgm>", e))?;
            } else if c.is_ascii_whitespace() {
                if !token.is_empty() {
                    header.push(std::mem::take(&mut token));
                }
            } else {
                token.push(c);
            }
        }
        let width: usize = header[1].parse().map_err(|_| bad("width"))?;
        let height: usize = header[2].parse().map_err(|_| bad("height"))?;
        if header[3] != "1" {
            return Err(bad("maxval must be 1"));
        }
        let mut rows = vec![0u8; width * height];
        match header[0].as_str() {
            "P5" => reader
                .read_exact(&mut rows)
                .map_err(|_| bad("truncated raster"))?,
            "P2" => {
                let mut rest = String::new();
                reader
                    .read_to_string(&mut rest)
                    .map_err(|e| Error::io("<pgm>", e))?;
                let mut values = rest.split_ascii_whitespace();
                for v in rows.iter_mut() {
                    *v = values
                        .next()
                        .ok_or_else(|| bad("truncated raster"))?
                        .parse()
                        .map_err(|_| bad("pixel value"))?;
                }
            }
            other => return Err(bad(&format!("unsupported magic {other}"))),
        }
        let mut data = vec![0u8; width * height];
        for y in 0..height {
            let src = (height - 1 - y) * width;
            for x in 0..width {
                data[y * width + x] = (rows[src + x] != 0) as u8;
            }
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }
}
