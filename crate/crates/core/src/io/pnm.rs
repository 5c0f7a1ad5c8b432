//! Binary Netpbm: P5 (grayscale) and P6 (RGB), maxval 255 only.

use std::path::Path;

use super::{read_bytes, write_atomic};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Raster {
    pub width: usize,
    pub height: usize,
    /// 1 (gray) or 3 (RGB), interleaved.
    pub channels: usize,
    pub data: Vec<u8>,
}

impl Raster {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<u8>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::Input(format!(
                "raster needs 1 or 3 channels, got {channels}"
            )));
        }
        if data.len() != width * height * channels {
            return Err(Error::Input(format!(
                "raster {width}x{height}x{channels} needs {} bytes, got {}",
                width * height * channels,
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: u8) -> Self {
        Self {
            width,
            height,
            channels,
            data: vec![value; width * height * channels],
        }
    }

    pub fn get(&self, x: usize, y: usize, c: usize) -> u8 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    pub fn to_rgb(&self) -> Raster {
        if self.channels == 3 {
            return self.clone();
        }
        Raster {
            width: self.width,
            height: self.height,
            channels: 3,
            data: self.data.iter().flat_map(|&v| [v, v, v]).collect(),
        }
    }

    pub fn to_gray(&self) -> Raster {
        if self.channels == 1 {
            return self.clone();
        }
        let data = self
            .data
            .chunks(3)
            .map(|p| ((p[0] as u32 + p[1] as u32 + p[2] as u32 + 1) / 3) as u8)
            .collect();
        Raster {
            width: self.width,
            height: self.height,
            channels: 1,
            data,
        }
    }

    /// Bilinear resize to `out_w x out_h` (pixel-centre aligned), returned as
    /// planar `[channels, out_h, out_w]` floats in `[0, 1]`. A 3-channel
    /// request on a gray raster replicates the plane.
    pub fn to_input(&self, channels: usize, out_h: usize, out_w: usize) -> Result<Vec<f64>> {
        let src = match (channels, self.channels) {
            (1, _) => self.to_gray(),
            (3, _) => self.to_rgb(),
            _ => {
                return Err(Error::Input(format!(
                    "model input needs 1 or 3 channels, got {channels}"
                )))
            }
        };
        let sx = src.width as f64 / out_w as f64;
        let sy = src.height as f64 / out_h as f64;
        let mut out = vec![0.0; channels * out_h * out_w];
        for oy in 0..out_h {
            let fy = ((oy as f64 + 0.5) * sy - 0.5).clamp(0.0, (src.height - 1) as f64);
            let y0 = fy.floor() as usize;
            let y1 = (y0 + 1).min(src.height - 1);
            let ty = fy - y0 as f64;
            for ox in 0..out_w {
                let fx = ((ox as f64 + 0.5) * sx - 0.5).clamp(0.0, (src.width - 1) as f64);
                let x0 = fx.floor() as usize;
                let x1 = (x0 + 1).min(src.width - 1);
                let tx = fx - x0 as f64;
                for c in 0..channels {
                    let p = |x: usize, y: usize| src.get(x, y, c) as f64;
                    let top = p(x0, y0) * (1.0 - tx) + p(x1, y0) * tx;
                    let bot = p(x0, y1) * (1.0 - tx) + p(x1, y1) * tx;
                    out[(c * out_h + oy) * out_w + ox] = (top * (1.0 - ty) + bot * ty) / 255.0;
                }
            }
        }
        Ok(out)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    name: &'a str,
}

impl Cursor<'_> {
    fn err(&self, msg: impl Into<String>) -> Error {
        Error::format(format!("{} (byte {})", self.name, self.pos), msg)
    }

    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b' ' | b'\t' | b'\r' | b'\n' => self.pos += 1,
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                _ => break,
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.err(format!("expected {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| self.err(format!("{what} out of range")))
    }
}

pub fn decode_pnm(bytes: &[u8], name: &str) -> Result<Raster> {
    let mut cur = Cursor {
        bytes,
        pos: 0,
        name,
    };
    let channels = match bytes.get(..2) {
        Some(b"P5") => 1,
        Some(b"P6") => 3,
        _ => return Err(cur.err("bad magic, expected P5 or P6")),
    };
    cur.pos = 2;
    let width = cur.number("width")?;
    let height = cur.number("height")?;
    let maxval = cur.number("maxval")?;
    if maxval != 255 {
        return Err(cur.err(format!("maxval {maxval} unsupported, only 255")));
    }
    match bytes.get(cur.pos) {
        Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
        _ => return Err(cur.err("missing whitespace after maxval")),
    }
    if width == 0 || height == 0 {
        return Err(cur.err("zero image dimension"));
    }
    let need = width * height * channels;
    let data = bytes
        .get(cur.pos..cur.pos + need)
        .ok_or_else(|| cur.err(format!("truncated pixel data, need {need} bytes")))?;
    Ok(Raster {
        width,
        height,
        channels,
        data: data.to_vec(),
    })
}

/// Canonical header `P5\n<w> <h>\n255\n` (or `P6`).
pub fn encode_pnm(r: &Raster) -> Vec<u8> {
    let magic = if r.channels == 1 { "P5" } else { "P6" };
    let mut out = format!("{magic}\n{} {}\n255\n", r.width, r.height).into_bytes();
    out.extend_from_slice(&r.data);
    out
}

pub fn read_pnm(path: &Path) -> Result<Raster> {
    decode_pnm(&read_bytes(path)?, &path.display().to_string())
}

pub fn write_pnm(path: &Path, r: &Raster) -> Result<()> {
    write_atomic(path, &encode_pnm(r))
}
