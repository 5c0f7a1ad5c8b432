//! Synthetic rail scenes.
//!
//! Each scene is a flat sky over flat ground with two rails converging on a
//! vanishing point at the horizon row. The horizon height is drawn from a
//! band that depends on the perspective class, so a higher class shows more
//! ground. Rendering is grayscale.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::codec::{Point, Polyline};
use crate::error::{Error, Result};
use crate::io::{write_labels, write_pnm, DatasetIndex, IndexEntry, Raster};

const SKY: f64 = 175.0;
const GROUND: f64 = 85.0;
const RAIL: f64 = 225.0;

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    pub n_classes: usize,
    /// Rail separation at the bottom row, px.
    pub gauge_bottom: f64,
    /// Each rail's bottom position is shifted by up to this many px.
    pub jitter: f64,
    /// Maximum lateral bend at the horizon, px.
    pub curvature_range: f64,
    pub noise_sigma: f64,
    /// Rail stroke width at the bottom row, px. Tapers to 1 px at the horizon.
    pub line_width: f64,
    pub seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            width: 320,
            height: 160,
            n_classes: 3,
            gauge_bottom: 176.0,
            jitter: 3.0,
            curvature_range: 12.0,
            noise_sigma: 8.0,
            line_width: 9.0,
            seed: 0,
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.width < 8 || self.height < 8 {
            return Err(Error::Config(format!(
                "scene must be at least 8x8, got {}x{}",
                self.width, self.height
            )));
        }
        if self.n_classes == 0 {
            return Err(Error::Config("n_classes must be >= 1".into()));
        }
        if !(self.gauge_bottom > 2.0 * self.jitter && self.gauge_bottom < self.width as f64) {
            return Err(Error::Config(format!(
                "gauge_bottom {} must exceed 2*jitter and stay below the width {}",
                self.gauge_bottom, self.width
            )));
        }
        let nonneg = [self.jitter, self.curvature_range, self.noise_sigma];
        if nonneg.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Config(
                "jitter, curvature and noise must be finite and >= 0".into(),
            ));
        }
        if !(self.line_width >= 1.0 && self.line_width.is_finite()) {
            return Err(Error::Config(format!(
                "line_width {} below 1 px",
                self.line_width
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub image: Raster,
    /// Left rail is track 0, right rail track 1.
    pub tracks: Vec<Polyline>,
    pub class: usize,
    pub horizon: f64,
}

/// Horizon band `[lo, hi)` for class `c`.
pub fn horizon_band(c: usize, n_classes: usize, height: usize) -> Result<(f64, f64)> {
    if c >= n_classes {
        return Err(Error::Index {
            index: c,
            len: n_classes,
        });
    }
    let h = height as f64;
    let delta = 0.5 * h / n_classes as f64;
    Ok((0.1 * h + c as f64 * delta, 0.1 * h + (c + 1) as f64 * delta))
}

pub fn horizon_for_class<R: Rng>(
    c: usize,
    n_classes: usize,
    height: usize,
    rng: &mut R,
) -> Result<f64> {
    let (lo, hi) = horizon_band(c, n_classes, height)?;
    Ok(rng.random_range(lo..hi))
}

/// Analytic scene geometry; `x_at` gives each rail's centre line.
#[derive(Debug, Clone, Copy)]
struct Geometry {
    x_v: f64,
    y_h: f64,
    bottom: [f64; 2],
    bend: f64,
    y_bottom: f64,
}

impl Geometry {
    fn x_at(&self, rail: usize, y: f64) -> f64 {
        let t = (y - self.y_h) / (self.y_bottom - self.y_h);
        let s = (self.y_bottom - y) / (self.y_bottom - self.y_h);
        self.x_v + t * (self.bottom[rail] - self.x_v) + self.bend * s * s
    }

    /// 0 at the horizon, 1 at the bottom row.
    fn depth(&self, y: f64) -> f64 {
        ((y - self.y_h) / (self.y_bottom - self.y_h)).clamp(0.0, 1.0)
    }
}

fn label_rows(y_h: f64, height: usize) -> Vec<f64> {
    let mut y = (height - 1) as f64;
    let mut rows = Vec::new();
    while y >= y_h + 2.0 {
        rows.push(y);
        y -= 2.0;
    }
    rows.reverse();
    rows
}

fn round3(v: f64) -> f64 {
    (v * 1000.0).round() / 1000.0
}

/// Renders one scene of class `class`. Geometry that would put a label
/// vertex outside the image is redrawn.
pub fn render<R: Rng>(spec: &SceneSpec, class: usize, rng: &mut R) -> Result<Sample> {
    spec.validate()?;
    let (w, h) = (spec.width as f64, spec.height as f64);
    let y_h = horizon_for_class(class, spec.n_classes, spec.height, rng)?;
    let rows = label_rows(y_h, spec.height);
    if rows.len() < 2 {
        return Err(Error::Config(format!(
            "image height {} leaves no room below the horizon",
            spec.height
        )));
    }
    let geom = loop {
        let x_v = rng.random_range(0.3 * w..0.7 * w);
        let half = spec.gauge_bottom / 2.0;
        let jl = if spec.jitter > 0.0 {
            rng.random_range(-spec.jitter..spec.jitter)
        } else {
            0.0
        };
        let jr = if spec.jitter > 0.0 {
            rng.random_range(-spec.jitter..spec.jitter)
        } else {
            0.0
        };
        let c = spec.curvature_range;
        let bend = if c > 0.0 {
            rng.random_range(-c..c)
        } else {
            0.0
        };
        let g = Geometry {
            x_v,
            y_h,
            bottom: [x_v - half - jl, x_v + half + jr],
            bend,
            y_bottom: h - 1.0,
        };
        let inside = rows
            .iter()
            .all(|&y| (0..2).all(|r| (0.0..=w - 1.0).contains(&round3(g.x_at(r, y)))));
        if g.bottom[1] > g.bottom[0] && inside {
            break g;
        }
    };

    let noise = Normal::new(0.0, spec.noise_sigma).map_err(|e| Error::Config(e.to_string()))?;
    let mut data = Vec::with_capacity(spec.width * spec.height);
    for py in 0..spec.height {
        let yc = py as f64 + 0.5;
        // the row straddling the horizon is blended by sky coverage
        let sky = (y_h - py as f64).clamp(0.0, 1.0);
        let base = sky * SKY + (1.0 - sky) * GROUND;
        let rails: Option<[(f64, f64); 2]> = (yc >= y_h).then(|| {
            let half_w = 0.5 * (1.0 + (spec.line_width - 1.0) * geom.depth(yc));
            [(geom.x_at(0, yc), half_w), (geom.x_at(1, yc), half_w)]
        });
        for px in 0..spec.width {
            let xc = px as f64 + 0.5;
            let on_rail = rails.is_some_and(|r| r.iter().any(|&(x, hw)| (xc - x).abs() <= hw));
            let v = if on_rail { RAIL } else { base };
            let n = if spec.noise_sigma > 0.0 {
                noise.sample(rng)
            } else {
                0.0
            };
            data.push((v + n).round().clamp(0.0, 255.0) as u8);
        }
    }

    let tracks = (0..2)
        .map(|r| {
            let vertices = rows
                .iter()
                .map(|&y| Point::new(round3(geom.x_at(r, y)), y))
                .collect();
            Polyline::new(r, vertices)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Sample {
        image: Raster::new(spec.width, spec.height, 1, data)?,
        tracks,
        class,
        horizon: y_h,
    })
}

/// Per-sample generator: the dataset seed selects the key, the global
/// sample number selects the ChaCha stream.
pub fn sample_rng(seed: u64, sample: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(sample);
    rng
}

/// Splits `total` by `fractions`. All but the last part are rounded; the
/// last takes the remainder.
pub fn split_counts(total: usize, fractions: &[f64]) -> Result<Vec<usize>> {
    let sum: f64 = fractions.iter().sum();
    if fractions.is_empty()
        || fractions.iter().any(|f| !(0.0..).contains(f))
        || (sum - 1.0).abs() > 1e-9
    {
        return Err(Error::Config(format!(
            "split fractions {fractions:?} must be >= 0 and sum to 1"
        )));
    }
    let mut out: Vec<usize> = fractions[..fractions.len() - 1]
        .iter()
        .map(|f| (f * total as f64).round() as usize)
        .collect();
    let used: usize = out.iter().sum();
    if used > total {
        return Err(Error::Config(format!(
            "split fractions {fractions:?} overflow {total}"
        )));
    }
    out.push(total - used);
    Ok(out)
}

/// Writes `images/`, `labels/` and one `<split>.tsv` index per split under
/// `out`. Samples are numbered globally in split order and classes are
/// assigned round-robin on that number.
pub fn generate_dataset(
    spec: &SceneSpec,
    out: &Path,
    splits: &[(&str, usize)],
) -> Result<Vec<(String, DatasetIndex)>> {
    spec.validate()?;
    let count: usize = splits.iter().map(|s| s.1).sum();
    if count < spec.n_classes {
        return Err(Error::Config(format!(
            "{count} samples cannot cover {} classes",
            spec.n_classes
        )));
    }
    let mut result = Vec::with_capacity(splits.len());
    let mut global = 0usize;
    for &(name, n) in splits {
        let mut index = DatasetIndex {
            entries: Vec::with_capacity(n),
            root: out.to_path_buf(),
        };
        for i in 0..n {
            let class = global % spec.n_classes;
            let sample = render(spec, class, &mut sample_rng(spec.seed, global as u64))?;
            let image = format!("images/{name}_{i:05}.pgm");
            let label = format!("labels/{name}_{i:05}.txt");
            write_pnm(&out.join(&image), &sample.image)?;
            write_labels(&out.join(&label), &sample.tracks)?;
            index.entries.push(IndexEntry {
                image: image.into(),
                label: label.into(),
                class,
            });
            global += 1;
        }
        index.write(&out.join(format!("{name}.tsv")))?;
        result.push((name.to_string(), index));
    }
    Ok(result)
}
