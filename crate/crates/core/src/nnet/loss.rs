use crate::codec::{GridTarget, HeadShape};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub l_hcl: f64,
    pub l_pi: f64,
    pub lambda: f64,
    pub l_total: f64,
}

pub fn total_loss(l_hcl: f64, l_pi: f64, lambda: f64) -> LossBreakdown {
    LossBreakdown {
        l_hcl,
        l_pi,
        lambda,
        l_total: l_hcl + lambda * l_pi,
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Location loss: cross-entropy summed over every (track, row, group) cell
/// vector and averaged over the batch. `loc` is `[B, w+1, h, C, n]`.
pub fn hcl_loss(loc: &[f64], shape: HeadShape, targets: &[GridTarget]) -> Result<f64> {
    hcl_loss_grad(loc, shape, targets).map(|(l, _)| l)
}

/// Perspective loss: softmax cross-entropy over `n` group logits averaged
/// over the batch. `group_logits` is `[B, n]`.
pub fn pi_loss(group_logits: &[f64], groups: usize, gt: &[usize]) -> Result<f64> {
    pi_loss_grad(group_logits, groups, gt).map(|(l, _)| l)
}

pub(crate) fn hcl_loss_grad(
    loc: &[f64],
    shape: HeadShape,
    targets: &[GridTarget],
) -> Result<(f64, Vec<f64>)> {
    let per = shape.loc_len();
    let batch = targets.len();
    if batch == 0 || loc.len() != batch * per {
        return Err(Error::Input(format!(
            "location logits of length {} do not match {batch} targets of {per}",
            loc.len()
        )));
    }
    for t in targets {
        if t.shape != shape {
            return Err(Error::Input(format!(
                "target shape {:?} does not match head {shape:?}",
                t.shape
            )));
        }
        t.validate()?;
    }
    let classes = shape.classes();
    let stride = shape.problems();
    let scale = 1.0 / batch as f64;
    let mut grad = vec![0.0; loc.len()];
    let mut total = 0.0;
    let mut probs = vec![0.0; classes];
    for (b, target) in targets.iter().enumerate() {
        let base = b * per;
        for j in 0..shape.rows {
            for i in 0..shape.tracks {
                for k in 0..shape.groups {
                    let off = base + shape.loc_index(0, j, i, k);
                    let mut max = f64::NEG_INFINITY;
                    for c in 0..classes {
                        max = max.max(loc[off + c * stride]);
                    }
                    let mut sum = 0.0;
                    for (c, p) in probs.iter_mut().enumerate() {
                        *p = (loc[off + c * stride] - max).exp();
                        sum += *p;
                    }
                    let cell = target.get(k, j, i);
                    total += sum.ln() - (loc[off + cell * stride] - max);
                    for (c, p) in probs.iter().enumerate() {
                        grad[off + c * stride] = p / sum * scale;
                    }
                    grad[off + cell * stride] -= scale;
                }
            }
        }
    }
    Ok((total * scale, grad))
}

pub(crate) fn pi_loss_grad(logits: &[f64], groups: usize, gt: &[usize]) -> Result<(f64, Vec<f64>)> {
    let batch = gt.len();
    if batch == 0 || logits.len() != batch * groups {
        return Err(Error::Input(format!(
            "group logits of length {} do not match {batch} labels of {groups}",
            logits.len()
        )));
    }
    let scale = 1.0 / batch as f64;
    let mut grad = vec![0.0; logits.len()];
    let mut total = 0.0;
    for (b, &g) in gt.iter().enumerate() {
        if g >= groups {
            return Err(Error::Index {
                index: g,
                len: groups,
            });
        }
        let row = &logits[b * groups..(b + 1) * groups];
        let p = softmax(row);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        total += lse - row[g];
        for (c, pc) in p.iter().enumerate() {
            grad[b * groups + c] = (pc - if c == g { 1.0 } else { 0.0 }) * scale;
        }
    }
    Ok((total * scale, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shape(cells: usize, rows: usize, tracks: usize, groups: usize) -> HeadShape {
        HeadShape {
            cells,
            rows,
            tracks,
            groups,
        }
    }

    fn target(shape: HeadShape, cells: Vec<u16>, gt_group: usize) -> GridTarget {
        GridTarget {
            shape,
            cells,
            gt_group,
        }
    }

    #[test]
    fn uniform_logits() {
        let s = shape(40, 12, 2, 3);
        let t = target(s, vec![7; s.problems()], 0);
        let l = hcl_loss(&vec![0.25; s.loc_len()], s, &[t]).unwrap();
        let expect = (2 * 12 * 3) as f64 * 41f64.ln();
        assert!((l - expect).abs() <= 1e-12 * expect);
        let per_term = l / (2 * 12 * 3) as f64;
        assert!((per_term - 3.713572066704308).abs() < 1e-12);

        let lp = pi_loss(&[0.0, 0.0, 0.0], 3, &[1]).unwrap();
        assert!((lp - 1.0986122886681098).abs() < 1e-15);
    }

    #[test]
    fn hand_computed_small_case() {
        // C=1, h=2, n=1, w=3: two independent 4-way problems
        let s = shape(3, 2, 1, 1);
        // layout (cell, row): index = cell * 2 + row
        let loc = [0.3, -1.2, 1.1, 0.4, -0.7, 2.0, 0.05, 0.9];
        let t = target(s, vec![2, 3], 0);
        let row0 = [loc[0], loc[2], loc[4], loc[6]];
        let row1 = [loc[1], loc[3], loc[5], loc[7]];
        let nll = |v: &[f64], c: usize| -(v[c].exp() / v.iter().map(|x| x.exp()).sum::<f64>()).ln();
        let expect = nll(&row0, 2) + nll(&row1, 3);
        let got = hcl_loss(&loc, s, &[t]).unwrap();
        assert!((got - expect).abs() < 1e-14, "{got} vs {expect}");
    }

    #[test]
    fn batch_average() {
        let s = shape(3, 2, 1, 1);
        let loc: Vec<f64> = (0..16).map(|i| (i as f64 * 0.37).sin()).collect();
        let t0 = target(s, vec![2, 3], 0);
        let t1 = target(s, vec![0, 1], 0);
        let a = hcl_loss(&loc[..8], s, std::slice::from_ref(&t0)).unwrap();
        let b = hcl_loss(&loc[8..], s, std::slice::from_ref(&t1)).unwrap();
        let both = hcl_loss(&loc, s, &[t0, t1]).unwrap();
        assert!((both - (a + b) / 2.0).abs() < 1e-14);
    }

    #[test]
    fn large_margin_goes_to_zero() {
        let s = shape(4, 1, 1, 1);
        let mut loc = vec![0.0; s.loc_len()];
        loc[2] = 60.0;
        let l = hcl_loss(&loc, s, &[target(s, vec![2], 0)]).unwrap();
        assert!(l < 1e-20);
        assert!(pi_loss(&[-30.0, 30.0], 2, &[1]).unwrap() < 1e-20);
    }

    #[test]
    fn pi_reference_value() {
        let l = pi_loss(&[1.0, 2.0, 3.0], 3, &[2]).unwrap();
        assert!((l - 0.4076059644443803).abs() < 1e-15);
    }

    #[test]
    fn errors() {
        let s = shape(3, 1, 1, 1);
        let bad = target(s, vec![4], 0);
        assert!(matches!(
            hcl_loss(&[0.0; 4], s, &[bad]),
            Err(Error::Input(_))
        ));
        assert!(matches!(
            pi_loss(&[0.0, 0.0], 2, &[2]),
            Err(Error::Index { .. })
        ));
    }

    #[test]
    fn breakdown() {
        assert_eq!(total_loss(2.0, 1.0, 0.05).l_total, 2.05);
        assert_eq!(total_loss(2.5, 7.0, 0.0).l_total, 2.5);
        assert_eq!(total_loss(2.5, 0.0, 0.05).l_total, 2.5);
    }

    #[test]
    fn softmax_sums_to_one() {
        let p = softmax(&[1000.0, -3.0, 2.5, 999.0]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
