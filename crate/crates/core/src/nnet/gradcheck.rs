use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::loss;
use super::model::{infer, loss_and_gradients, ModelParams};
use super::tensor::Tensor;
use crate::codec::GridTarget;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_error: f64,
    /// Parameter name and flat index of the worst entry.
    pub worst: Option<(String, usize)>,
}

fn objective(
    params: &ModelParams,
    images: &Tensor,
    targets: &[GridTarget],
    lambda: f64,
) -> Result<f64> {
    let pred = infer(params, images)?;
    let l_hcl = loss::hcl_loss(pred.loc.data(), pred.shape, targets)?;
    let gt: Vec<usize> = targets.iter().map(|t| t.gt_group).collect();
    let l_pi = loss::pi_loss(pred.group.data(), pred.shape.groups, &gt)?;
    Ok(loss::total_loss(l_hcl, l_pi, lambda).l_total)
}

/// Compares analytic gradients with central differences on up to `samples`
/// randomly chosen entries of the unfrozen parameters.
///
/// The error measure is `|analytic - numeric| / max(1, |analytic|)`. Returns
/// a numeric error naming the worst parameter when it exceeds `tol`.
#[allow(clippy::too_many_arguments)]
pub fn finite_diff_check(
    params: &ModelParams,
    images: &Tensor,
    targets: &[GridTarget],
    lambda: f64,
    step: f64,
    samples: usize,
    tol: f64,
    seed: u64,
) -> Result<GradCheckReport> {
    let (_, grads) = loss_and_gradients(params, images, targets, lambda)?;
    let candidates: Vec<(usize, usize)> = params
        .params
        .iter()
        .enumerate()
        .filter(|(_, p)| !params.is_frozen(p.group))
        .flat_map(|(pi, p)| (0..p.value.len()).map(move |e| (pi, e)))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks: Vec<usize> = if candidates.len() <= samples {
        (0..candidates.len()).collect()
    } else {
        let mut v = sample(&mut rng, candidates.len(), samples).into_vec();
        v.sort_unstable();
        v
    };

    let mut probe = params.clone();
    let mut report = GradCheckReport {
        checked: picks.len(),
        max_rel_error: 0.0,
        worst: None,
    };
    for pick in picks {
        let (pi, e) = candidates[pick];
        let orig = probe.params[pi].value.data()[e];
        probe.params[pi].value.data_mut()[e] = orig + step;
        let up = objective(&probe, images, targets, lambda)?;
        probe.params[pi].value.data_mut()[e] = orig - step;
        let down = objective(&probe, images, targets, lambda)?;
        probe.params[pi].value.data_mut()[e] = orig;
        let numeric = (up - down) / (2.0 * step);
        let analytic = grads.0[pi].data()[e];
        let err = (analytic - numeric).abs() / analytic.abs().max(1.0);
        if err > report.max_rel_error || report.worst.is_none() {
            report.max_rel_error = err;
            report.worst = Some((params.params[pi].name.clone(), e));
        }
    }
    if report.max_rel_error > tol {
        let (name, idx) = report.worst.clone().unwrap_or_default();
        return Err(Error::Numeric(format!(
            "gradient check failed: max relative error {:.3e} > {tol:.1e} at {name}[{idx}]",
            report.max_rel_error
        )));
    }
    Ok(report)
}
