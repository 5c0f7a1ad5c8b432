use crate::codec::Polyline;
use crate::error::{Error, Result};

/// Binary mask stored as the sorted flat indices of its set pixels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    pub width: usize,
    pub height: usize,
    pixels: Vec<u32>,
}

impl Mask {
    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            pixels: Vec::new(),
        }
    }

    pub fn from_pixels(width: usize, height: usize, mut pixels: Vec<u32>) -> Self {
        pixels.sort_unstable();
        pixels.dedup();
        pixels.retain(|&p| (p as usize) < width * height);
        Self {
            width,
            height,
            pixels,
        }
    }

    pub fn count(&self) -> usize {
        self.pixels.len()
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        x < self.width
            && y < self.height
            && self
                .pixels
                .binary_search(&((y * self.width + x) as u32))
                .is_ok()
    }

    pub fn pixels(&self) -> &[u32] {
        &self.pixels
    }

    fn intersection(&self, other: &Mask) -> usize {
        let (mut i, mut j, mut n) = (0, 0, 0);
        while i < self.pixels.len() && j < other.pixels.len() {
            match self.pixels[i].cmp(&other.pixels[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    n += 1;
                    i += 1;
                    j += 1;
                }
            }
        }
        n
    }
}

/// Sets every pixel whose centre `(x, y)` lies within `line_width / 2` of a
/// segment of the polyline.
pub fn rasterize(p: &Polyline, line_width: f64, width: usize, height: usize) -> Mask {
    let r = line_width / 2.0;
    let r2 = r * r;
    let mut pixels = Vec::new();
    for seg in p.vertices.windows(2) {
        let (a, b) = (seg[0], seg[1]);
        let (dx, dy) = (b.x - a.x, b.y - a.y);
        let len2 = dx * dx + dy * dy;
        let x0 = (a.x.min(b.x) - r).floor().max(0.0) as usize;
        let x1 = ((a.x.max(b.x) + r).ceil().max(0.0) as usize).min(width.saturating_sub(1));
        let y0 = (a.y.min(b.y) - r).floor().max(0.0) as usize;
        let y1 = ((a.y.max(b.y) + r).ceil().max(0.0) as usize).min(height.saturating_sub(1));
        if width == 0 || height == 0 || x0 > x1 || y0 > y1 {
            continue;
        }
        for py in y0..=y1 {
            for px in x0..=x1 {
                let (qx, qy) = (px as f64 - a.x, py as f64 - a.y);
                let t = if len2 > 0.0 {
                    ((qx * dx + qy * dy) / len2).clamp(0.0, 1.0)
                } else {
                    0.0
                };
                let (ex, ey) = (qx - t * dx, qy - t * dy);
                if ex * ex + ey * ey <= r2 {
                    pixels.push((py * width + px) as u32);
                }
            }
        }
    }
    Mask::from_pixels(width, height, pixels)
}

/// `|a ∩ b| / |a ∪ b|`, zero when both masks are empty.
pub fn iou(a: &Mask, b: &Mask) -> Result<f64> {
    if a.width != b.width || a.height != b.height {
        return Err(Error::Input(format!(
            "mask dims differ: {}x{} vs {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    let inter = a.intersection(b);
    let union = a.count() + b.count() - inter;
    Ok(if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    })
}
