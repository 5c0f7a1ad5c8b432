//! Conversion between track polylines and per-row cell classifications.
//!
//! The image width `W` is split into `w` cells; cell `c` is centred at
//! `(c + 0.5) * W / w`. Index `w` is the background class ("no track on this
//! row"). Targets are built for every anchor group; decoding reads only the
//! group picked by the perspective logits.

use crate::anchors::{self, AnchorSet};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }
}

/// One track as a function `x = g(y)`: at least two vertices with strictly
/// increasing `y`.
#[derive(Debug, Clone, PartialEq)]
pub struct Polyline {
    pub track_index: usize,
    pub vertices: Vec<Point>,
}

impl Polyline {
    pub fn new(track_index: usize, vertices: Vec<Point>) -> Result<Self> {
        if vertices.len() < 2 {
            return Err(Error::Input(format!(
                "track {track_index} has {} vertices, need at least 2",
                vertices.len()
            )));
        }
        if vertices
            .iter()
            .any(|p| !p.x.is_finite() || !p.y.is_finite())
        {
            return Err(Error::Input(format!(
                "track {track_index} has a non-finite vertex"
            )));
        }
        if let Some(pos) = vertices.windows(2).position(|w| w[1].y <= w[0].y) {
            return Err(Error::Input(format!(
                "track {track_index}: y not strictly increasing at vertex {}",
                pos + 1
            )));
        }
        Ok(Self {
            track_index,
            vertices,
        })
    }

    pub fn top(&self) -> f64 {
        self.vertices[0].y
    }

    pub fn bottom(&self) -> f64 {
        self.vertices[self.vertices.len() - 1].y
    }

    /// Checks that every vertex lies in `[0, width)`.
    pub fn check_within(&self, width: f64) -> Result<()> {
        match self.vertices.iter().find(|p| !(0.0..width).contains(&p.x)) {
            Some(p) => Err(Error::Domain(format!(
                "track {} has x={} outside [0, {width})",
                self.track_index, p.x
            ))),
            None => Ok(()),
        }
    }
}

/// Linear interpolation of the track's `x` at row `y`, or `None` when `y` is
/// outside the track's vertical extent.
pub fn sample_at_row(p: &Polyline, y: f64) -> Option<f64> {
    if y < p.top() || y > p.bottom() {
        return None;
    }
    let seg = p.vertices.partition_point(|v| v.y < y);
    if seg == 0 {
        return Some(p.vertices[0].x);
    }
    let (a, b) = (p.vertices[seg - 1], p.vertices[seg]);
    let t = (y - a.y) / (b.y - a.y);
    Some(a.x + t * (b.x - a.x))
}

pub fn x_to_cell(x: f64, width: usize, cells: usize) -> Result<usize> {
    if !(0.0..width as f64).contains(&x) {
        return Err(Error::Domain(format!("x={x} outside [0, {width})")));
    }
    let c = (x * cells as f64 / width as f64).floor() as usize;
    Ok(c.min(cells - 1))
}

pub fn cell_to_x(c: usize, width: usize, cells: usize) -> Result<f64> {
    if c >= cells {
        return Err(Error::Domain(format!(
            "cell {c} is background or out of range (cells = {cells})"
        )));
    }
    Ok((c as f64 + 0.5) * width as f64 / cells as f64)
}

/// Dimensions of the location head: `cells` grid columns plus one background
/// class, `rows` anchors per group, `tracks` track slots and `groups` groups.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HeadShape {
    pub cells: usize,
    pub rows: usize,
    pub tracks: usize,
    pub groups: usize,
}

impl HeadShape {
    pub fn classes(&self) -> usize {
        self.cells + 1
    }

    /// Number of (track, row, group) classification problems.
    pub fn problems(&self) -> usize {
        self.rows * self.tracks * self.groups
    }

    pub fn loc_len(&self) -> usize {
        self.classes() * self.problems()
    }

    /// Offset of `(cell, row, track, group)` in a `((w+1), h, C, n)` slab.
    #[inline]
    pub fn loc_index(&self, cell: usize, row: usize, track: usize, group: usize) -> usize {
        ((cell * self.rows + row) * self.tracks + track) * self.groups + group
    }
}

/// Per-group, per-row, per-track cell indices in `0..=w`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridTarget {
    pub shape: HeadShape,
    /// Row-major `[n][h][C]`.
    pub cells: Vec<u16>,
    pub gt_group: usize,
}

impl GridTarget {
    #[inline]
    pub fn get(&self, group: usize, row: usize, track: usize) -> usize {
        let s = &self.shape;
        self.cells[(group * s.rows + row) * s.tracks + track] as usize
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.shape;
        if self.cells.len() != s.problems() {
            return Err(Error::Input(format!(
                "target has {} cells, expected {}",
                self.cells.len(),
                s.problems()
            )));
        }
        if let Some(bad) = self.cells.iter().find(|&&c| c as usize > s.cells) {
            return Err(Error::Input(format!(
                "target cell index {bad} exceeds background index {}",
                s.cells
            )));
        }
        if self.gt_group >= s.groups {
            return Err(Error::Index {
                index: self.gt_group,
                len: s.groups,
            });
        }
        Ok(())
    }
}

/// Logits for one image.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub shape: HeadShape,
    /// `((w+1), h, C, n)` row-major, see [`HeadShape::loc_index`].
    pub loc_logits: Vec<f64>,
    pub group_logits: Vec<f64>,
}

impl Prediction {
    pub fn new(shape: HeadShape, loc_logits: Vec<f64>, group_logits: Vec<f64>) -> Result<Self> {
        if loc_logits.len() != shape.loc_len() || group_logits.len() != shape.groups {
            return Err(Error::Input(format!(
                "prediction shape mismatch: {} loc / {} group logits for {shape:?}",
                loc_logits.len(),
                group_logits.len()
            )));
        }
        Ok(Self {
            shape,
            loc_logits,
            group_logits,
        })
    }

    /// A prediction whose argmax reproduces `target` exactly, with `margin`
    /// on the correct classes and zero elsewhere.
    pub fn one_hot(target: &GridTarget, margin: f64) -> Self {
        let s = target.shape;
        let mut loc = vec![0.0; s.loc_len()];
        for k in 0..s.groups {
            for j in 0..s.rows {
                for i in 0..s.tracks {
                    loc[s.loc_index(target.get(k, j, i), j, i, k)] = margin;
                }
            }
        }
        let mut group = vec![0.0; s.groups];
        group[target.gt_group] = margin;
        Self {
            shape: s,
            loc_logits: loc,
            group_logits: group,
        }
    }

    pub fn selected_group(&self) -> usize {
        argmax(&self.group_logits)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodedTracks {
    pub group: usize,
    pub tracks: Vec<Polyline>,
}

/// Index of the first maximum.
pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate().skip(1) {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// Builds the classification target of one image against every group.
pub fn encode(
    tracks: &[Polyline],
    set: &AnchorSet,
    width: usize,
    cells: usize,
    num_tracks: usize,
) -> Result<GridTarget> {
    let mut slots: Vec<Option<&Polyline>> = vec![None; num_tracks];
    for t in tracks {
        let slot = slots.get_mut(t.track_index).ok_or(Error::Index {
            index: t.track_index,
            len: num_tracks,
        })?;
        if slot.is_some() {
            return Err(Error::Input(format!(
                "duplicate track_index {}",
                t.track_index
            )));
        }
        *slot = Some(t);
    }
    let shape = HeadShape {
        cells,
        rows: set.h(),
        tracks: num_tracks,
        groups: set.n(),
    };
    let background = u16::try_from(cells)
        .map_err(|_| Error::Domain(format!("w={cells} does not fit a cell index")))?;
    let mut out = vec![background; shape.problems()];
    for (k, group) in set.groups.iter().enumerate() {
        for (j, &y) in group.rows.iter().enumerate() {
            for (i, slot) in slots.iter().enumerate() {
                let Some(track) = slot else { continue };
                if let Some(x) = sample_at_row(track, y) {
                    out[(k * shape.rows + j) * num_tracks + i] = x_to_cell(x, width, cells)? as u16;
                }
            }
        }
    }
    let gt_group = if tracks.is_empty() {
        0
    } else {
        anchors::assign_group(tracks, set)?
    };
    Ok(GridTarget {
        shape,
        cells: out,
        gt_group,
    })
}

/// Reads back polylines from the group chosen by the perspective logits.
/// Tracks with fewer than two non-background rows are dropped.
pub fn decode(
    pred: &Prediction,
    set: &AnchorSet,
    width: usize,
    cells: usize,
) -> Result<DecodedTracks> {
    let s = pred.shape;
    if s.rows != set.h() || s.groups != set.n() || s.cells != cells {
        return Err(Error::Input(format!(
            "prediction {s:?} inconsistent with anchors (h={}, n={}) and w={cells}",
            set.h(),
            set.n()
        )));
    }
    if pred
        .loc_logits
        .iter()
        .chain(&pred.group_logits)
        .any(|v| !v.is_finite())
    {
        return Err(Error::Input("non-finite logits".into()));
    }
    let group = pred.selected_group();
    let rows = &set.groups[group].rows;
    let mut tracks = Vec::new();
    for i in 0..s.tracks {
        let mut vertices = Vec::new();
        for (j, &y) in rows.iter().enumerate() {
            let mut best = 0;
            let mut best_v = f64::NEG_INFINITY;
            for c in 0..s.classes() {
                let v = pred.loc_logits[s.loc_index(c, j, i, group)];
                if v > best_v {
                    best_v = v;
                    best = c;
                }
            }
            if best < cells {
                vertices.push(Point::new(cell_to_x(best, width, cells)?, y));
            }
        }
        if vertices.len() >= 2 {
            tracks.push(Polyline::new(i, vertices)?);
        }
    }
    Ok(DecodedTracks { group, tracks })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::anchors::{AnchorGenSpec, Spacing};
    use proptest::prelude::*;

    fn line(idx: usize, pts: &[(f64, f64)]) -> Polyline {
        Polyline::new(idx, pts.iter().map(|&(x, y)| Point::new(x, y)).collect()).unwrap()
    }

    fn set(h: usize, n: usize) -> AnchorSet {
        AnchorSet::generate(
            AnchorGenSpec::new(h, n, 20.0, 90.0, 156.8).unwrap(),
            Spacing::Progressive,
        )
        .unwrap()
    }

    #[test]
    fn polyline_validation() {
        assert!(Polyline::new(0, vec![Point::new(1.0, 1.0)]).is_err());
        assert!(Polyline::new(0, vec![Point::new(1.0, 5.0), Point::new(1.0, 5.0)]).is_err());
        assert!(Polyline::new(0, vec![Point::new(1.0, 5.0), Point::new(f64::NAN, 6.0)]).is_err());
        let p = line(0, &[(1.0, 5.0), (400.0, 6.0)]);
        assert!(p.check_within(320.0).is_err());
    }

    #[test]
    fn row_sampling() {
        let p = line(0, &[(100.0, 50.0), (200.0, 150.0)]);
        assert_eq!(sample_at_row(&p, 100.0), Some(150.0));
        assert_eq!(sample_at_row(&p, 50.0), Some(100.0));
        assert_eq!(sample_at_row(&p, 150.0), Some(200.0));
        assert_eq!(sample_at_row(&p, 49.9), None);
        assert_eq!(sample_at_row(&p, 150.1), None);
        let kinked = line(0, &[(0.0, 0.0), (10.0, 10.0), (10.0, 20.0)]);
        assert_eq!(sample_at_row(&kinked, 10.0), Some(10.0));
        assert_eq!(sample_at_row(&kinked, 15.0), Some(10.0));
    }

    #[test]
    fn gridding() {
        assert_eq!(x_to_cell(0.0, 800, 200).unwrap(), 0);
        assert_eq!(x_to_cell(800.0 - 1e-9, 800, 200).unwrap(), 199);
        assert!(x_to_cell(800.0, 800, 200).is_err());
        assert!(x_to_cell(-0.1, 800, 200).is_err());
        // nearest-centre oracle
        let centres: Vec<f64> = (0..200).map(|c| (c as f64 + 0.5) * 4.0).collect();
        let nearest = |x: f64| {
            // ties go to the right-hand cell
            (0..200)
                .rev()
                .min_by(|&a, &b| (x - centres[a]).abs().total_cmp(&(x - centres[b]).abs()))
                .unwrap()
        };
        assert_eq!(nearest(400.0), 100);
        assert_eq!(x_to_cell(400.0, 800, 200).unwrap(), 100);
        for x in [0.3, 17.9, 123.456, 799.5] {
            assert_eq!(x_to_cell(x, 800, 200).unwrap(), nearest(x));
        }

        assert_eq!(cell_to_x(0, 800, 200).unwrap(), 2.0);
        assert_eq!(cell_to_x(100, 800, 200).unwrap(), 402.0);
        assert!(cell_to_x(200, 800, 200).is_err());
        for c in 0..40 {
            assert_eq!(
                x_to_cell(cell_to_x(c, 320, 40).unwrap(), 320, 40).unwrap(),
                c
            );
        }
    }

    #[test]
    fn encode_vertical_track() {
        let set = set(12, 3);
        let t = line(1, &[(402.0, 0.0), (402.0, 159.0)]);
        let target = encode(&[t], &set, 800, 200, 2).unwrap();
        for k in 0..3 {
            for j in 0..12 {
                assert_eq!(target.get(k, j, 1), 100);
                assert_eq!(target.get(k, j, 0), 200, "empty slot is background");
            }
        }
        target.validate().unwrap();
    }

    #[test]
    fn encode_partial_track() {
        let set = set(12, 1);
        let rows = set.groups[0].rows.clone();
        let mid = rows[6];
        let t = line(0, &[(100.0, mid), (120.0, 159.0)]);
        let target = encode(&[t], &set, 320, 40, 1).unwrap();
        for (j, &y) in rows.iter().enumerate() {
            let bg = target.get(0, j, 0) == 40;
            assert_eq!(bg, y < mid, "row {j} at y={y}");
        }
    }

    #[test]
    fn encode_errors() {
        let set = set(4, 1);
        let a = line(0, &[(10.0, 30.0), (10.0, 150.0)]);
        let b = line(0, &[(20.0, 30.0), (20.0, 150.0)]);
        assert!(matches!(
            encode(&[a.clone(), b], &set, 320, 40, 2),
            Err(Error::Input(_))
        ));
        let c = line(2, &[(20.0, 30.0), (20.0, 150.0)]);
        assert!(matches!(
            encode(&[a, c], &set, 320, 40, 2),
            Err(Error::Index { .. })
        ));
    }

    #[test]
    fn encode_is_keyed_by_track_index() {
        let set = set(12, 3);
        let a = line(0, &[(50.0, 30.0), (90.0, 159.0)]);
        let b = line(1, &[(250.0, 40.0), (200.0, 159.0)]);
        let ab = encode(&[a.clone(), b.clone()], &set, 320, 40, 2).unwrap();
        let ba = encode(&[b, a], &set, 320, 40, 2).unwrap();
        assert_eq!(ab, ba);
    }

    #[test]
    fn decode_one_hot_hits_cell_centres() {
        let set = set(12, 3);
        let t = line(0, &[(100.0, 25.0), (60.0, 159.0)]);
        let target = encode(std::slice::from_ref(&t), &set, 320, 40, 2).unwrap();
        let decoded = decode(&Prediction::one_hot(&target, 5.0), &set, 320, 40).unwrap();
        assert_eq!(decoded.group, target.gt_group);
        assert_eq!(decoded.tracks.len(), 1);
        let rows = &set.groups[decoded.group].rows;
        for v in &decoded.tracks[0].vertices {
            assert!(rows.contains(&v.y));
            let x = sample_at_row(&t, v.y).unwrap();
            let c = x_to_cell(x, 320, 40).unwrap();
            assert_eq!(v.x, cell_to_x(c, 320, 40).unwrap());
        }
    }

    #[test]
    fn decode_all_background_is_empty() {
        let set = set(6, 2);
        let shape = HeadShape {
            cells: 8,
            rows: 6,
            tracks: 2,
            groups: 2,
        };
        let mut loc = vec![0.0; shape.loc_len()];
        for j in 0..6 {
            for i in 0..2 {
                for k in 0..2 {
                    loc[shape.loc_index(8, j, i, k)] = 1.0;
                }
            }
        }
        let pred = Prediction::new(shape, loc, vec![0.0, 1.0]).unwrap();
        let d = decode(&pred, &set, 320, 8).unwrap();
        assert_eq!(d.group, 1);
        assert!(d.tracks.is_empty());
    }

    #[test]
    fn decode_rejects_non_finite() {
        let set = set(4, 1);
        let shape = HeadShape {
            cells: 4,
            rows: 4,
            tracks: 1,
            groups: 1,
        };
        let mut loc = vec![0.0; shape.loc_len()];
        loc[3] = f64::NAN;
        let pred = Prediction::new(shape, loc, vec![0.0]).unwrap();
        assert!(matches!(decode(&pred, &set, 320, 4), Err(Error::Input(_))));
    }

    #[test]
    fn group_choice_scale_invariance() {
        let logits = [0.1, 2.3, -1.0];
        assert_eq!(argmax(&logits), 1);
        for scale in [0.01, 1.0, 7.5, 1e6] {
            let scaled: Vec<f64> = logits.iter().map(|v| v * scale).collect();
            assert_eq!(argmax(&scaled), 1);
        }
    }

    proptest! {
        #[test]
        fn group_choice_shift_and_scale(logits in prop::collection::vec(-5.0f64..5.0, 1..6),
                                        shift in -100.0f64..100.0, scale in 0.01f64..100.0) {
            let base = argmax(&logits);
            let moved: Vec<f64> = logits.iter().map(|v| (v + shift) * scale).collect();
            // ties can flip only through rounding; require a strict winner
            let best = logits[base];
            prop_assume!(logits.iter().enumerate().all(|(i, v)| i == base || best - v > 1e-9));
            prop_assert_eq!(argmax(&moved), base);
        }

        #[test]
        fn round_trip_within_half_cell(x0 in 5.0f64..315.0, x1 in 5.0f64..315.0, top in 20.0f64..120.0) {
            let set = set(12, 3);
            let t = line(0, &[(x0, top), (x1, 159.0)]);
            let target = encode(std::slice::from_ref(&t), &set, 320, 40, 2).unwrap();
            prop_assert!(target.cells.iter().all(|&c| c <= 40));
            let d = decode(&Prediction::one_hot(&target, 1.0), &set, 320, 40).unwrap();
            for track in &d.tracks {
                for v in &track.vertices {
                    let x = sample_at_row(&t, v.y).unwrap();
                    prop_assert!((v.x - x).abs() <= 0.5 * 320.0 / 40.0 + 1e-12);
                }
            }
        }
    }
}
