//! CULane-style evaluation: tracks are rasterized as thick lines, matched
//! one-to-one by mask IoU, and scored with corpus-level precision, recall
//! and F1 at one or more IoU thresholds.

mod acc;
pub mod bench;
mod matching;
mod raster;

pub use acc::{acc, AccResult};
pub use bench::{bench, BenchReport};
pub use matching::{f1_at, match_lines, mf1, CorpusEntry, IouTable, MatchResult};
pub use raster::{iou, rasterize, Mask};

use crate::error::{Error, Result};

/// The ten canonical thresholds 0.50, 0.55, ..., 0.95.
pub fn canonical_thresholds() -> Vec<f64> {
    (0..10).map(|i| (50 + 5 * i) as f64 / 100.0).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MatchMode {
    /// Accept candidate pairs in descending IoU order.
    #[default]
    Greedy,
    /// Maximum-cardinality matching over pairs above the threshold.
    Optimal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub width: usize,
    pub height: usize,
    pub line_width: f64,
    pub thresholds: Vec<f64>,
    pub mode: MatchMode,
}

impl EvalConfig {
    /// Line width the CULane convention gives at this image width
    /// (30 px at 1640 px).
    pub fn culane_line_width(width: usize) -> f64 {
        (30.0 * width as f64 / 1640.0).round().max(1.0)
    }

    /// Default line width for a `cells`-column grid: the CULane width, but
    /// never narrower than one and a half grid cells. Hard-argmax decoding
    /// quantizes x to cell centres, and a line thinner than a cell would make
    /// IoU measure the quantization rather than the classification.
    pub fn default_line_width(width: usize, cells: usize) -> f64 {
        let grid = (1.5 * width as f64 / cells.max(1) as f64).round();
        Self::culane_line_width(width).max(grid)
    }

    pub fn new(width: usize, height: usize, cells: usize) -> Self {
        Self {
            width,
            height,
            line_width: Self::default_line_width(width, cells),
            thresholds: canonical_thresholds(),
            mode: MatchMode::Greedy,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::Config("eval image dims must be positive".into()));
        }
        if !(self.line_width > 0.0 && self.line_width.is_finite()) {
            return Err(Error::Config(format!(
                "line width {} must be positive",
                self.line_width
            )));
        }
        if self.thresholds.iter().any(|t| !(*t > 0.0 && *t <= 1.0)) {
            return Err(Error::Config("IoU thresholds must lie in (0, 1]".into()));
        }
        if self.thresholds.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::Config("IoU thresholds must be sorted".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_widths() {
        assert_eq!(EvalConfig::culane_line_width(1640), 30.0);
        assert_eq!(EvalConfig::culane_line_width(320), 6.0);
        assert_eq!(EvalConfig::default_line_width(800, 200), 15.0);
        assert_eq!(EvalConfig::default_line_width(320, 40), 12.0);
    }

    #[test]
    fn thresholds() {
        let t = canonical_thresholds();
        assert_eq!(t.len(), 10);
        assert_eq!(t[0], 0.5);
        assert_eq!(t[5], 0.75);
        assert_eq!(t[9], 0.95);
        let mut cfg = EvalConfig::new(320, 160, 40);
        cfg.validate().unwrap();
        cfg.thresholds = vec![0.75, 0.5];
        assert!(cfg.validate().is_err());
        cfg.thresholds = vec![0.0];
        assert!(cfg.validate().is_err());
    }
}
