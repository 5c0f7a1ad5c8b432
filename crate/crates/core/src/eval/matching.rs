use super::raster::{iou, rasterize, Mask};
use super::{canonical_thresholds, EvalConfig, MatchMode};
use crate::codec::Polyline;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchResult {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl MatchResult {
    /// Ratios from counts; every zero denominator yields 0.
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let ratio = |num: usize, den: usize| {
            if den == 0 {
                0.0
            } else {
                num as f64 / den as f64
            }
        };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Self {
            tp,
            fp,
            fn_,
            precision,
            recall,
            f1,
        }
    }
}

/// Predicted and ground-truth tracks of one image.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CorpusEntry {
    pub preds: Vec<Polyline>,
    pub gts: Vec<Polyline>,
}

/// Pairwise IoU matrices of a corpus, computed once and reused across
/// thresholds.
#[derive(Debug, Clone, PartialEq)]
pub struct IouTable {
    /// Per image: `(num_preds, num_gts, row-major pred x gt IoUs)`.
    pub images: Vec<(usize, usize, Vec<f64>)>,
}

impl IouTable {
    pub fn build(corpus: &[CorpusEntry], cfg: &EvalConfig) -> Result<Self> {
        cfg.validate()?;
        let raster = |ps: &[Polyline]| -> Vec<Mask> {
            ps.iter()
                .map(|p| rasterize(p, cfg.line_width, cfg.width, cfg.height))
                .collect()
        };
        let images = corpus
            .iter()
            .map(|e| {
                let pm = raster(&e.preds);
                let gm = raster(&e.gts);
                let mut m = Vec::with_capacity(pm.len() * gm.len());
                for p in &pm {
                    for g in &gm {
                        m.push(iou(p, g)?);
                    }
                }
                Ok((pm.len(), gm.len(), m))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { images })
    }

    pub fn result_at(&self, tau: f64, mode: MatchMode) -> MatchResult {
        let (mut tp, mut fp, mut fn_) = (0, 0, 0);
        for (np, ng, m) in &self.images {
            let matched = count_matches(*np, *ng, m, tau, mode);
            tp += matched;
            fp += np - matched;
            fn_ += ng - matched;
        }
        MatchResult::from_counts(tp, fp, fn_)
    }
}

fn count_matches(np: usize, ng: usize, ious: &[f64], tau: f64, mode: MatchMode) -> usize {
    match mode {
        MatchMode::Greedy => {
            let mut cand: Vec<(usize, usize)> = (0..np)
                .flat_map(|p| (0..ng).map(move |g| (p, g)))
                .filter(|&(p, g)| ious[p * ng + g] >= tau)
                .collect();
            cand.sort_by(|&(pa, ga), &(pb, gb)| {
                ious[pb * ng + gb]
                    .total_cmp(&ious[pa * ng + ga])
                    .then(pa.cmp(&pb))
                    .then(ga.cmp(&gb))
            });
            let mut used_p = vec![false; np];
            let mut used_g = vec![false; ng];
            let mut n = 0;
            for (p, g) in cand {
                if !used_p[p] && !used_g[g] {
                    used_p[p] = true;
                    used_g[g] = true;
                    n += 1;
                }
            }
            n
        }
        MatchMode::Optimal => {
            // Kuhn's augmenting paths; fine for a handful of lines per image.
            let adj: Vec<Vec<usize>> = (0..np)
                .map(|p| (0..ng).filter(|&g| ious[p * ng + g] >= tau).collect())
                .collect();
            let mut owner: Vec<Option<usize>> = vec![None; ng];
            fn augment(
                p: usize,
                adj: &[Vec<usize>],
                seen: &mut [bool],
                owner: &mut [Option<usize>],
            ) -> bool {
                for &g in &adj[p] {
                    if seen[g] {
                        continue;
                    }
                    seen[g] = true;
                    if owner[g].is_none_or(|q| augment(q, adj, seen, owner)) {
                        owner[g] = Some(p);
                        return true;
                    }
                }
                false
            }
            (0..np)
                .filter(|&p| augment(p, &adj, &mut vec![false; ng], &mut owner))
                .count()
        }
    }
}

/// One-to-one matching of a single image's lines at threshold `tau`.
pub fn match_lines(
    preds: &[Polyline],
    gts: &[Polyline],
    tau: f64,
    cfg: &EvalConfig,
) -> Result<MatchResult> {
    check_tau(tau)?;
    let entry = CorpusEntry {
        preds: preds.to_vec(),
        gts: gts.to_vec(),
    };
    Ok(IouTable::build(std::slice::from_ref(&entry), cfg)?.result_at(tau, cfg.mode))
}

fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau <= 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("IoU threshold {tau} outside (0, 1]")))
    }
}

/// Corpus-level F1: counts are summed over images before the ratios.
pub fn f1_at(corpus: &[CorpusEntry], tau: f64, cfg: &EvalConfig) -> Result<MatchResult> {
    check_tau(tau)?;
    Ok(IouTable::build(corpus, cfg)?.result_at(tau, cfg.mode))
}

/// Mean F1 over the ten canonical thresholds. Returns the mean and the
/// per-threshold results.
pub fn mf1(corpus: &[CorpusEntry], cfg: &EvalConfig) -> Result<(f64, Vec<MatchResult>)> {
    let canon = canonical_thresholds();
    if cfg.thresholds.len() != canon.len()
        || cfg
            .thresholds
            .iter()
            .zip(&canon)
            .any(|(a, b)| (a - b).abs() > 1e-9)
    {
        return Err(Error::Config(format!(
            "mF1 needs thresholds 0.50..0.95 in steps of 0.05, got {:?}",
            cfg.thresholds
        )));
    }
    let table = IouTable::build(corpus, cfg)?;
    let results: Vec<MatchResult> = canon
        .iter()
        .map(|&t| table.result_at(t, cfg.mode))
        .collect();
    let mean = results.iter().map(|r| r.f1).sum::<f64>() / results.len() as f64;
    Ok((mean, results))
}
