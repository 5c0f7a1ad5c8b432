//! Single-image latency harness for forward pass plus decoding.

use std::time::Instant;

use crate::anchors::{reduction_ratio, AnchorSet};
use crate::codec::decode;
use crate::error::{Error, Result};
use crate::nnet::{infer, ModelParams, Tensor};

pub const WARMUP: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    /// Per-iteration forward + decode latency.
    pub latencies_ms: Vec<f64>,
    pub forward_ms: Vec<f64>,
    pub decode_ms: Vec<f64>,
    pub mean_ms: f64,
    pub median_ms: f64,
    pub std_ms: f64,
    pub mean_fps: f64,
    pub median_fps: f64,
    pub reduction_ratio: f64,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let m = s.len() / 2;
    if s.len().is_multiple_of(2) {
        (s[m - 1] + s[m]) / 2.0
    } else {
        s[m]
    }
}

/// Times `iterations` single-image inferences (after [`WARMUP`] untimed
/// ones), cycling through `images`, each shaped `[1, C, H, W]`.
pub fn bench(
    params: &ModelParams,
    anchors: &AnchorSet,
    images: &[Tensor],
    width: usize,
    iterations: usize,
) -> Result<BenchReport> {
    if iterations < 10 {
        return Err(Error::Input(format!(
            "bench needs at least 10 iterations, got {iterations}"
        )));
    }
    if images.is_empty() {
        return Err(Error::Input("bench needs at least one image".into()));
    }
    let head = params.config.head;
    if head.rows != anchors.h() || head.groups != anchors.n() {
        return Err(Error::Input(format!(
            "checkpoint head (h={}, n={}) does not match anchors (h={}, n={})",
            head.rows,
            head.groups,
            anchors.h(),
            anchors.n()
        )));
    }
    let mut forward_ms = Vec::with_capacity(iterations);
    let mut decode_ms = Vec::with_capacity(iterations);
    for it in 0..WARMUP + iterations {
        let img = &images[it % images.len()];
        let t0 = Instant::now();
        let pred = infer(params, img)?;
        let t1 = Instant::now();
        let decoded = decode(&pred.sample(0), anchors, width, head.cells)?;
        let t2 = Instant::now();
        std::hint::black_box(decoded);
        if it >= WARMUP {
            forward_ms.push((t1 - t0).as_secs_f64() * 1e3);
            decode_ms.push((t2 - t1).as_secs_f64() * 1e3);
        }
    }
    let latencies_ms: Vec<f64> = forward_ms
        .iter()
        .zip(&decode_ms)
        .map(|(a, b)| a + b)
        .collect();
    let mean_ms = mean(&latencies_ms);
    let median_ms = median(&latencies_ms);
    let std_ms = (latencies_ms
        .iter()
        .map(|l| (l - mean_ms).powi(2))
        .sum::<f64>()
        / latencies_ms.len() as f64)
        .sqrt();
    let cfg = &params.config;
    Ok(BenchReport {
        mean_fps: 1e3 / mean_ms,
        median_fps: 1e3 / median_ms,
        reduction_ratio: reduction_ratio(cfg.in_h, cfg.in_w, head.rows, head.cells, head.groups)?,
        latencies_ms,
        forward_ms,
        decode_ms,
        mean_ms,
        median_ms,
        std_ms,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stats() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert_eq!(mean(&[1.0, 2.0, 3.0]), 2.0);
    }
}
