//! Row-anchor groups.
//!
//! A group is `h` pixel rows running from a start row `s_k` down to a common
//! bottom row `H_anchor`. Groups start at evenly spaced rows between `y_min`
//! and `y_max`, so an image whose tracks begin low in the frame can pick a
//! group that spends all of its rows on the visible track.
//!
//! Progressive groups grow their row spacing with a circular easing curve
//! (see [`scaling_factor`]), which packs rows tighter near the top of the
//! image where perspective compresses the track.

use crate::codec::Polyline;
use crate::error::{Error, Result};

/// Parameters shared by every group of an [`AnchorSet`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnchorGenSpec {
    /// Rows per group.
    pub h: usize,
    /// Number of groups.
    pub n: usize,
    pub y_min: f64,
    pub y_max: f64,
    /// Bottom row shared by all groups.
    pub h_anchor: f64,
}

impl AnchorGenSpec {
    pub fn new(h: usize, n: usize, y_min: f64, y_max: f64, h_anchor: f64) -> Result<Self> {
        let spec = Self {
            h,
            n,
            y_min,
            y_max,
            h_anchor,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.h < 2 {
            return Err(Error::Domain(format!("h must be >= 2, got {}", self.h)));
        }
        if self.n < 1 {
            return Err(Error::Domain("n must be >= 1".into()));
        }
        let finite = [self.y_min, self.y_max, self.h_anchor]
            .iter()
            .all(|v| v.is_finite());
        if !finite || !(0.0 <= self.y_min && self.y_min <= self.y_max && self.y_max < self.h_anchor)
        {
            return Err(Error::Domain(format!(
                "need 0 <= y_min <= y_max < H_anchor, got y_min={} y_max={} H_anchor={}",
                self.y_min, self.y_max, self.h_anchor
            )));
        }
        Ok(())
    }
}

/// Row spacing rule used to fill a group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Spacing {
    /// Spacing grows from top to bottom following [`scaling_factor`].
    #[default]
    Progressive,
    /// Constant spacing; the single-group ablation baseline.
    Equidistant,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnchorGroup {
    pub k: usize,
    pub start: f64,
    pub rows: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnchorSet {
    pub spec: AnchorGenSpec,
    pub groups: Vec<AnchorGroup>,
}

impl AnchorSet {
    pub fn generate(spec: AnchorGenSpec, spacing: Spacing) -> Result<Self> {
        match spacing {
            Spacing::Progressive => generate_set(&spec),
            Spacing::Equidistant => generate_equidistant_set(&spec),
        }
    }

    pub fn h(&self) -> usize {
        self.spec.h
    }

    pub fn n(&self) -> usize {
        self.spec.n
    }

    pub fn starts(&self) -> Vec<f64> {
        self.groups.iter().map(|g| g.start).collect()
    }

    pub fn group(&self, k: usize) -> Result<&AnchorGroup> {
        self.groups.get(k).ok_or(Error::Index {
            index: k,
            len: self.groups.len(),
        })
    }
}

/// Circular easing curve on `[0, 2]`: a quarter circle rising to 1 at the
/// midpoint, mirrored about `(1, 1)` on the second half.
pub fn scaling_factor(x: f64) -> Result<f64> {
    if !(0.0..=2.0).contains(&x) {
        return Err(Error::Domain(format!(
            "scaling factor argument {x} outside [0, 2]"
        )));
    }
    let arc = (1.0 - (1.0 - x).powi(2)).max(0.0).sqrt();
    Ok(if x <= 1.0 { arc } else { 2.0 - arc })
}

pub fn group_start(k: usize, spec: &AnchorGenSpec) -> Result<f64> {
    if k >= spec.n {
        return Err(Error::Index {
            index: k,
            len: spec.n,
        });
    }
    if spec.n == 1 {
        return Ok(spec.y_min);
    }
    Ok(spec.y_min + (k as f64 / (spec.n - 1) as f64) * (spec.y_max - spec.y_min))
}

/// Builds group `k` by accumulating `d_k * f(2j/h)` from the start row.
///
/// The increments sum to `d_k * (h - 1)` because `f(1 - t) + f(1 + t) = 2`,
/// so the last row lands on `H_anchor`; it is pinned there to drop the
/// rounding residue.
pub fn generate_group(k: usize, spec: &AnchorGenSpec) -> Result<AnchorGroup> {
    spec.validate()?;
    let start = group_start(k, spec)?;
    let base = (spec.h_anchor - start) / (spec.h - 1) as f64;
    let mut rows = Vec::with_capacity(spec.h);
    let mut y = start;
    for j in 0..spec.h {
        y += base * scaling_factor(2.0 * j as f64 / spec.h as f64)?;
        rows.push(y);
    }
    rows[spec.h - 1] = spec.h_anchor;
    Ok(AnchorGroup { k, start, rows })
}

pub fn generate_set(spec: &AnchorGenSpec) -> Result<AnchorSet> {
    let groups = (0..spec.n)
        .map(|k| generate_group(k, spec))
        .collect::<Result<Vec<_>>>()?;
    Ok(AnchorSet {
        spec: *spec,
        groups,
    })
}

pub fn generate_equidistant_set(spec: &AnchorGenSpec) -> Result<AnchorSet> {
    spec.validate()?;
    let groups = (0..spec.n)
        .map(|k| {
            let start = group_start(k, spec)?;
            let step = (spec.h_anchor - start) / (spec.h - 1) as f64;
            let mut rows: Vec<f64> = (0..spec.h).map(|j| start + j as f64 * step).collect();
            rows[spec.h - 1] = spec.h_anchor;
            Ok(AnchorGroup { k, start, rows })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AnchorSet {
        spec: *spec,
        groups,
    })
}

/// Computation reduction of row classification over dense segmentation,
/// `H*W / (h*(w+1)*n)`.
pub fn reduction_ratio(height: usize, width: usize, h: usize, w: usize, n: usize) -> Result<f64> {
    if height == 0 || width == 0 || h == 0 || w == 0 || n == 0 {
        return Err(Error::Domain(
            "reduction ratio needs strictly positive arguments".into(),
        ));
    }
    Ok((height as f64 * width as f64) / (h as f64 * (w + 1) as f64 * n as f64))
}

/// Ground-truth group for an image: the lowest-starting group that still
/// starts at or above the highest visible track point, so every track row is
/// covered. Falls back to group 0 when every group starts below it.
pub fn assign_group(tracks: &[Polyline], set: &AnchorSet) -> Result<usize> {
    let top = tracks
        .iter()
        .filter_map(|t| t.vertices.first().map(|p| p.y))
        .fold(None, |acc: Option<f64>, y| {
            Some(acc.map_or(y, |a| a.min(y)))
        })
        .ok_or_else(|| Error::Input("assign_group needs at least one non-empty track".into()))?;
    Ok(set.groups.iter().rposition(|g| g.start <= top).unwrap_or(0))
}
