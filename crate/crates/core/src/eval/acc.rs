use super::matching::CorpusEntry;
use crate::codec::sample_at_row;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AccResult {
    pub correct: usize,
    pub total: usize,
    pub acc: f64,
}

/// Fraction of ground-truth points, sampled at each image's anchor rows,
/// whose same-index predicted track lies within `tol` pixels horizontally.
pub fn acc(corpus: &[CorpusEntry], rows: &[Vec<f64>], tol: f64) -> AccResult {
    let (mut correct, mut total) = (0, 0);
    for (entry, rows) in corpus.iter().zip(rows) {
        for gt in &entry.gts {
            let pred = entry.preds.iter().find(|p| p.track_index == gt.track_index);
            for &y in rows {
                let Some(x_gt) = sample_at_row(gt, y) else {
                    continue;
                };
                total += 1;
                if let Some(x) = pred.and_then(|p| sample_at_row(p, y)) {
                    if (x - x_gt).abs() <= tol {
                        correct += 1;
                    }
                }
            }
        }
    }
    AccResult {
        correct,
        total,
        acc: if total == 0 {
            0.0
        } else {
            correct as f64 / total as f64
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{Point, Polyline};

    fn line(idx: usize, pts: &[(f64, f64)]) -> Polyline {
        Polyline::new(idx, pts.iter().map(|&(x, y)| Point::new(x, y)).collect()).unwrap()
    }

    #[test]
    fn exact_none_and_half() {
        let rows = vec![vec![10.0, 20.0, 30.0, 40.0]];
        let gt = line(0, &[(50.0, 10.0), (50.0, 40.0)]);
        let exact = [CorpusEntry {
            preds: vec![gt.clone()],
            gts: vec![gt.clone()],
        }];
        assert_eq!(acc(&exact, &rows, 4.0).acc, 1.0);

        let none = [CorpusEntry {
            preds: vec![],
            gts: vec![gt.clone()],
        }];
        let r = acc(&none, &rows, 4.0);
        assert_eq!((r.correct, r.total, r.acc), (0, 4, 0.0));

        // off by 10 px on the upper half of the rows
        let half = line(0, &[(60.0, 10.0), (60.0, 20.0), (50.0, 30.0), (50.0, 40.0)]);
        let r = acc(
            &[CorpusEntry {
                preds: vec![half],
                gts: vec![gt],
            }],
            &rows,
            4.0,
        );
        assert_eq!(r.acc, 0.5);
    }

    #[test]
    fn order_invariant() {
        let a = CorpusEntry {
            preds: vec![line(0, &[(10.0, 0.0), (12.0, 50.0)])],
            gts: vec![line(0, &[(10.0, 0.0), (20.0, 50.0)])],
        };
        let b = CorpusEntry {
            preds: vec![],
            gts: vec![line(1, &[(70.0, 5.0), (60.0, 50.0)])],
        };
        let rows = vec![vec![5.0, 25.0, 45.0], vec![10.0, 30.0]];
        let fwd = acc(&[a.clone(), b.clone()], &rows, 3.0);
        let rev_rows = vec![rows[1].clone(), rows[0].clone()];
        let rev = acc(&[b, a], &rev_rows, 3.0);
        assert_eq!(fwd, rev);
    }
}
