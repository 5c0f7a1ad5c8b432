use rand::Rng;

use super::layers::{self, ConvGeom};
use super::loss;
use super::tensor::Tensor;
use crate::codec::{GridTarget, HeadShape, Prediction};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StageConfig {
    pub kernel: usize,
    pub stride: usize,
    pub out_channels: usize,
    pub activation: Activation,
    /// Follow the stage with a 2x2 max pool.
    pub pool: bool,
}

impl StageConfig {
    pub const fn conv(kernel: usize, stride: usize, out_channels: usize) -> Self {
        Self {
            kernel,
            stride,
            out_channels,
            activation: Activation::Relu,
            pool: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelConfig {
    pub channels: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub stages: Vec<StageConfig>,
    /// Width of the shared feature vector feeding both heads.
    pub feature_dim: usize,
    pub head: HeadShape,
}

impl ModelConfig {
    /// Desk-scale default: three stride-2 3x3 stages (8, 16, 32 channels)
    /// on an 80x160 grayscale input and a 256-wide feature vector.
    pub fn desk(head: HeadShape) -> Self {
        Self {
            channels: 1,
            in_h: 80,
            in_w: 160,
            stages: vec![
                StageConfig::conv(3, 2, 8),
                StageConfig::conv(3, 2, 16),
                StageConfig::conv(3, 2, 32),
            ],
            feature_dim: 256,
            head,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let h = &self.head;
        if self.channels == 0 || self.in_h == 0 || self.in_w == 0 || self.feature_dim == 0 {
            return Err(Error::Config(
                "model input and feature dims must be positive".into(),
            ));
        }
        if h.cells == 0 || h.rows == 0 || h.tracks == 0 || h.groups == 0 {
            return Err(Error::Config(format!("head dims must be positive: {h:?}")));
        }
        if self.feature_dim < h.groups {
            return Err(Error::Config(format!(
                "feature_dim {} smaller than group count {}",
                self.feature_dim, h.groups
            )));
        }
        let (mut c, mut hh, mut ww) = (self.channels, self.in_h, self.in_w);
        for (i, s) in self.stages.iter().enumerate() {
            if s.kernel == 0 || s.stride == 0 || s.out_channels == 0 {
                return Err(Error::Config(format!("stage {i} has a zero dimension")));
            }
            let g = ConvGeom {
                in_c: c,
                in_h: hh,
                in_w: ww,
                out_c: s.out_channels,
                kernel: s.kernel,
                stride: s.stride,
            };
            if hh + 2 * g.pad() < s.kernel || ww + 2 * g.pad() < s.kernel {
                return Err(Error::Config(format!(
                    "stage {i} kernel larger than its input"
                )));
            }
            (c, hh, ww) = (s.out_channels, g.out_h(), g.out_w());
            if s.pool {
                (hh, ww) = (hh / 2, ww / 2);
            }
            if hh == 0 || ww == 0 {
                return Err(Error::Config(format!(
                    "stage {i} collapses the feature map"
                )));
            }
        }
        Ok(())
    }

    pub fn input_len(&self) -> usize {
        self.channels * self.in_h * self.in_w
    }

    /// Convolution geometry of every stage, in order.
    pub fn stage_geoms(&self) -> Vec<ConvGeom> {
        let (mut c, mut h, mut w) = (self.channels, self.in_h, self.in_w);
        self.stages
            .iter()
            .map(|s| {
                let g = ConvGeom {
                    in_c: c,
                    in_h: h,
                    in_w: w,
                    out_c: s.out_channels,
                    kernel: s.kernel,
                    stride: s.stride,
                };
                (c, h, w) = (s.out_channels, g.out_h(), g.out_w());
                if s.pool {
                    (h, w) = (h / 2, w / 2);
                }
                g
            })
            .collect()
    }

    /// Length of the flattened backbone map fed to the feature layer.
    pub fn flat_len(&self) -> usize {
        match (self.stages.last(), self.stage_geoms().last()) {
            (Some(s), Some(g)) => {
                let (h, w) = if s.pool {
                    (g.out_h() / 2, g.out_w() / 2)
                } else {
                    (g.out_h(), g.out_w())
                };
                g.out_c * h * w
            }
            _ => self.input_len(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamGroup {
    Backbone,
    HclHead,
    PiHead,
}

impl ParamGroup {
    pub const ALL: [ParamGroup; 3] = [
        ParamGroup::Backbone,
        ParamGroup::HclHead,
        ParamGroup::PiHead,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            ParamGroup::Backbone => "backbone",
            ParamGroup::HclHead => "hcl_head",
            ParamGroup::PiHead => "pi_head",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub group: ParamGroup,
    pub value: Tensor,
}

/// Named parameters plus per-group freeze flags and base learning rates.
///
/// Layout: for every stage `backbone.conv{i}.weight` `[out, in, k, k]` and
/// `.bias`, then `backbone.fc.weight` `[D, flat]`, `backbone.fc.bias`,
/// `hcl_head.weight` `[(w+1)hCn, D]`, `hcl_head.bias`, `pi_head.weight`
/// `[n, D]`, `pi_head.bias`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub params: Vec<Param>,
    pub frozen: [bool; 3],
    pub base_lr: [f64; 3],
}

impl ModelParams {
    pub fn param_shapes(config: &ModelConfig) -> Vec<(String, ParamGroup, Vec<usize>)> {
        let mut out = Vec::new();
        for (i, g) in config.stage_geoms().iter().enumerate() {
            out.push((
                format!("backbone.conv{i}.weight"),
                ParamGroup::Backbone,
                vec![g.out_c, g.in_c, g.kernel, g.kernel],
            ));
            out.push((
                format!("backbone.conv{i}.bias"),
                ParamGroup::Backbone,
                vec![g.out_c],
            ));
        }
        let d = config.feature_dim;
        out.push((
            "backbone.fc.weight".into(),
            ParamGroup::Backbone,
            vec![d, config.flat_len()],
        ));
        out.push(("backbone.fc.bias".into(), ParamGroup::Backbone, vec![d]));
        let loc = config.head.loc_len();
        out.push(("hcl_head.weight".into(), ParamGroup::HclHead, vec![loc, d]));
        out.push(("hcl_head.bias".into(), ParamGroup::HclHead, vec![loc]));
        let n = config.head.groups;
        out.push(("pi_head.weight".into(), ParamGroup::PiHead, vec![n, d]));
        out.push(("pi_head.bias".into(), ParamGroup::PiHead, vec![n]));
        out
    }

    /// All-zero parameters, nothing frozen.
    pub fn zeros(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let params = Self::param_shapes(config)
            .into_iter()
            .map(|(name, group, shape)| Param {
                name,
                group,
                value: Tensor::zeros(&shape),
            })
            .collect();
        Ok(Self {
            config: config.clone(),
            params,
            frozen: [false; 3],
            base_lr: [4e-4, 1e-3, 5e-5],
        })
    }

    /// Weights uniform in `±sqrt(6 / (fan_in + fan_out))`, biases zero.
    pub fn init<R: Rng>(config: &ModelConfig, rng: &mut R) -> Result<Self> {
        let mut p = Self::zeros(config)?;
        for param in &mut p.params {
            if !param.name.ends_with(".weight") {
                continue;
            }
            let shape = param.value.shape().to_vec();
            let receptive: usize = shape[2..].iter().product();
            let fan_in = shape[1] * receptive;
            let fan_out = shape[0] * receptive;
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for v in param.value.data_mut() {
                *v = rng.random_range(-limit..limit);
            }
        }
        Ok(p)
    }

    pub fn is_frozen(&self, group: ParamGroup) -> bool {
        self.frozen[group.index()]
    }

    pub fn set_frozen(&mut self, group: ParamGroup, frozen: bool) {
        self.frozen[group.index()] = frozen;
    }

    pub fn get(&self, name: &str) -> Option<&Param> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Param> {
        self.params.iter_mut().find(|p| p.name == name)
    }

    pub fn num_values(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    fn value(&self, idx: usize) -> &[f64] {
        self.params[idx].value.data()
    }
}

/// Gradients aligned index-for-index with [`ModelParams::params`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients(pub Vec<Tensor>);

impl Gradients {
    pub fn zeros_like(params: &ModelParams) -> Self {
        Gradients(
            params
                .params
                .iter()
                .map(|p| Tensor::zeros(p.value.shape()))
                .collect(),
        )
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(Tensor::is_finite)
    }
}

/// Batched network output.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchPrediction {
    pub shape: HeadShape,
    /// `[B, w+1, h, C, n]`
    pub loc: Tensor,
    /// `[B, n]`
    pub group: Tensor,
}

impl BatchPrediction {
    pub fn batch(&self) -> usize {
        self.loc.shape()[0]
    }

    pub fn sample(&self, b: usize) -> Prediction {
        let l = self.shape.loc_len();
        let n = self.shape.groups;
        Prediction {
            shape: self.shape,
            loc_logits: self.loc.data()[b * l..(b + 1) * l].to_vec(),
            group_logits: self.group.data()[b * n..(b + 1) * n].to_vec(),
        }
    }
}

struct StageCache {
    cols: Vec<f64>,
    /// Post-activation conv output (before pooling).
    act: Vec<f64>,
    pool_arg: Option<Vec<u32>>,
}

/// Intermediate values kept by [`forward`] for the backward pass.
pub struct ForwardCache {
    batch: usize,
    stages: Vec<StageCache>,
    flat: Vec<f64>,
    features: Vec<f64>,
}

fn run(
    params: &ModelParams,
    images: &Tensor,
    keep: bool,
) -> Result<(BatchPrediction, Option<ForwardCache>)> {
    let cfg = &params.config;
    let s = images.shape();
    if s.len() != 4 || s[1..] != [cfg.channels, cfg.in_h, cfg.in_w] {
        return Err(Error::Input(format!(
            "image batch shape {s:?} does not match model input [B, {}, {}, {}]",
            cfg.channels, cfg.in_h, cfg.in_w
        )));
    }
    let batch = s[0];
    let mut x = images.data().to_vec();
    let mut stage_caches = Vec::with_capacity(cfg.stages.len());
    for (i, (stage, g)) in cfg.stages.iter().zip(cfg.stage_geoms()).enumerate() {
        let (mut y, cols) = g.forward(
            &x,
            params.value(2 * i),
            params.value(2 * i + 1),
            batch,
            keep,
        );
        if stage.activation == Activation::Relu {
            layers::relu_inplace(&mut y);
        }
        let (next, pool_arg) = if stage.pool {
            let (p, arg) = layers::maxpool2_forward(&y, batch * g.out_c, g.out_h(), g.out_w());
            (p, Some(arg))
        } else {
            (Vec::new(), None)
        };
        let out = if stage.pool { next } else { y.clone() };
        if keep {
            stage_caches.push(StageCache {
                cols: cols.unwrap_or_default(),
                act: y,
                pool_arg,
            });
        }
        x = out;
    }
    let nst = cfg.stages.len();
    let flat_len = cfg.flat_len();
    let d = cfg.feature_dim;
    let mut features = layers::linear_forward(
        &x,
        params.value(2 * nst),
        params.value(2 * nst + 1),
        batch,
        flat_len,
        d,
    );
    layers::relu_inplace(&mut features);
    let head = cfg.head;
    let loc = layers::linear_forward(
        &features,
        params.value(2 * nst + 2),
        params.value(2 * nst + 3),
        batch,
        d,
        head.loc_len(),
    );
    let group = layers::linear_forward(
        &features,
        params.value(2 * nst + 4),
        params.value(2 * nst + 5),
        batch,
        d,
        head.groups,
    );
    let pred = BatchPrediction {
        shape: head,
        loc: Tensor::new(
            vec![batch, head.classes(), head.rows, head.tracks, head.groups],
            loc,
        )?,
        group: Tensor::new(vec![batch, head.groups], group)?,
    };
    let cache = keep.then_some(ForwardCache {
        batch,
        stages: stage_caches,
        flat: x,
        features,
    });
    Ok((pred, cache))
}

/// Forward pass keeping what [`backward`] needs.
pub fn forward(params: &ModelParams, images: &Tensor) -> Result<(BatchPrediction, ForwardCache)> {
    let (pred, cache) = run(params, images, true)?;
    Ok((pred, cache.expect("cache requested")))
}

/// Forward pass without bookkeeping, for inference.
pub fn infer(params: &ModelParams, images: &Tensor) -> Result<BatchPrediction> {
    Ok(run(params, images, false)?.0)
}

/// Backpropagates logit gradients. Frozen groups get zero gradients; when
/// the backbone is frozen the pass stops at the heads.
pub(crate) fn backward(
    params: &ModelParams,
    cache: &ForwardCache,
    d_loc: &[f64],
    d_group: &[f64],
) -> Gradients {
    let cfg = &params.config;
    let mut grads = Gradients::zeros_like(params);
    let batch = cache.batch;
    let nst = cfg.stages.len();
    let d = cfg.feature_dim;
    let head = cfg.head;
    let backbone_live = !params.is_frozen(ParamGroup::Backbone);

    let (gh, rest) = grads.0.split_at_mut(2 * nst + 2);
    let [hw, hb, pw, pb] = rest else {
        unreachable!()
    };
    let mut d_feat = vec![0.0; batch * d];
    {
        let mut tw = Tensor::zeros(hw.shape());
        let mut tb = Tensor::zeros(hb.shape());
        if let Some(dx) = layers::linear_backward(
            d_loc,
            &cache.features,
            params.value(2 * nst + 2),
            batch,
            d,
            head.loc_len(),
            tw.data_mut(),
            tb.data_mut(),
            backbone_live,
        ) {
            d_feat = dx;
        }
        if !params.is_frozen(ParamGroup::HclHead) {
            *hw = tw;
            *hb = tb;
        }
    }
    {
        let mut tw = Tensor::zeros(pw.shape());
        let mut tb = Tensor::zeros(pb.shape());
        if let Some(dx) = layers::linear_backward(
            d_group,
            &cache.features,
            params.value(2 * nst + 4),
            batch,
            d,
            head.groups,
            tw.data_mut(),
            tb.data_mut(),
            backbone_live,
        ) {
            d_feat.iter_mut().zip(&dx).for_each(|(a, b)| *a += b);
        }
        if !params.is_frozen(ParamGroup::PiHead) {
            *pw = tw;
            *pb = tb;
        }
    }
    if !backbone_live {
        return grads;
    }

    layers::relu_backward_inplace(&mut d_feat, &cache.features);
    let (fw, fb) = gh[2 * nst..].split_at_mut(1);
    let mut dx = layers::linear_backward(
        &d_feat,
        &cache.flat,
        params.value(2 * nst),
        batch,
        cfg.flat_len(),
        d,
        fw[0].data_mut(),
        fb[0].data_mut(),
        nst > 0,
    );
    let geoms = cfg.stage_geoms();
    for i in (0..nst).rev() {
        let stage = &cfg.stages[i];
        let g = &geoms[i];
        let sc = &cache.stages[i];
        let mut dy = dx.take().expect("stage gradient");
        if let Some(arg) = &sc.pool_arg {
            dy = layers::maxpool2_backward(&dy, arg, batch * g.out_c, g.out_h(), g.out_w());
        }
        if stage.activation == Activation::Relu {
            layers::relu_backward_inplace(&mut dy, &sc.act);
        }
        let (cw, cb) = gh[2 * i..2 * i + 2].split_at_mut(1);
        dx = g.backward(
            &dy,
            &sc.cols,
            params.value(2 * i),
            batch,
            cw[0].data_mut(),
            cb[0].data_mut(),
            i > 0,
        );
    }
    grads
}

/// Loss breakdown and exact gradients of `l_hcl + lambda * l_pi` for one
/// batch, with per-sample perspective targets taken from `targets[b].gt_group`.
pub fn loss_and_gradients(
    params: &ModelParams,
    images: &Tensor,
    targets: &[GridTarget],
    lambda: f64,
) -> Result<(loss::LossBreakdown, Gradients)> {
    let (pred, cache) = forward(params, images)?;
    if targets.len() != pred.batch() {
        return Err(Error::Input(format!(
            "{} targets for a batch of {}",
            targets.len(),
            pred.batch()
        )));
    }
    let (l_hcl, d_loc) = loss::hcl_loss_grad(pred.loc.data(), pred.shape, targets)?;
    let gt: Vec<usize> = targets.iter().map(|t| t.gt_group).collect();
    let (l_pi, mut d_group) = loss::pi_loss_grad(pred.group.data(), pred.shape.groups, &gt)?;
    d_group.iter_mut().for_each(|g| *g *= lambda);
    let breakdown = loss::total_loss(l_hcl, l_pi, lambda);
    if !breakdown.l_total.is_finite() {
        return Err(Error::Numeric(format!(
            "non-finite loss: l_hcl={l_hcl} l_pi={l_pi} lambda={lambda}"
        )));
    }
    Ok((breakdown, backward(params, &cache, &d_loc, &d_group)))
}
