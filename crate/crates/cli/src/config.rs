//! Run configuration: a TOML file with one table per concern, overridable
//! with `--set section.key=value`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use ufatd_core::codec::HeadShape;
use ufatd_core::eval::MatchMode;
use ufatd_core::nnet::{Activation, AdamConfig, StageConfig};
use ufatd_core::synth::SceneSpec;
use ufatd_core::{Error, EvalConfig, ModelConfig, Result, Spacing, TrainSchedule};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub paths: PathsSection,
    pub data: DataSection,
    pub model: ModelSection,
    pub train: TrainSection,
    pub eval: EvalSection,
    pub synth: SynthSection,
    pub anchors: AnchorsSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsSection {
    /// Dataset root holding `<split>.tsv`, `images/` and `labels/`.
    pub data: PathBuf,
    pub anchors: PathBuf,
    pub checkpoint: PathBuf,
    /// Directory for metrics, predictions, reports and figures.
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    pub width: usize,
    pub height: usize,
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActivationName {
    Relu,
    Identity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub channels: usize,
    pub in_h: usize,
    pub in_w: usize,
    /// Per-stage lists; all must have the same length.
    pub kernel: Vec<usize>,
    pub stride: Vec<usize>,
    pub stage_channels: Vec<usize>,
    pub activation: Vec<ActivationName>,
    pub pool: Vec<bool>,
    pub feature_dim: usize,
    /// C
    pub tracks: usize,
    /// h
    pub rows: usize,
    /// w
    pub cells: usize,
    /// n
    pub groups: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_backbone: f64,
    pub lr_hcl: f64,
    pub lr_pi: f64,
    pub unfreeze_backbone_fraction: f64,
    pub unfreeze_pi_fraction: f64,
    pub lambda: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchName {
    Greedy,
    Optimal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    /// Split used by infer, eval, bench and viz.
    pub split: String,
    /// 0 picks the grid-aware default.
    pub line_width: f64,
    pub mode: MatchName,
    /// 0 picks half a grid cell.
    pub acc_tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSection {
    pub classes: usize,
    pub gauge_bottom: f64,
    pub jitter: f64,
    pub curvature_range: f64,
    pub noise_sigma: f64,
    pub line_width: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpacingName {
    Progressive,
    Equidistant,
}

impl SpacingName {
    pub fn spacing(self) -> Spacing {
        match self {
            SpacingName::Progressive => Spacing::Progressive,
            SpacingName::Equidistant => Spacing::Equidistant,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SpacingName::Progressive => "progressive",
            SpacingName::Equidistant => "equidistant",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnchorsSection {
    pub spacing: SpacingName,
    /// Bottom anchor row as a fraction of the image height.
    pub h_anchor_fraction: f64,
}

impl Default for PathsSection {
    fn default() -> Self {
        Self {
            data: "data".into(),
            anchors: "data/anchors.txt".into(),
            checkpoint: "runs/model.ckpt".into(),
            out: "runs".into(),
        }
    }
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            width: 320,
            height: 160,
            train: 600,
            val: 100,
            test: 200,
        }
    }
}

impl Default for ModelSection {
    fn default() -> Self {
        let head = HeadShape {
            cells: 40,
            rows: 12,
            tracks: 2,
            groups: 3,
        };
        let m = ModelConfig::desk(head);
        Self {
            channels: m.channels,
            in_h: m.in_h,
            in_w: m.in_w,
            kernel: m.stages.iter().map(|s| s.kernel).collect(),
            stride: m.stages.iter().map(|s| s.stride).collect(),
            stage_channels: m.stages.iter().map(|s| s.out_channels).collect(),
            activation: vec![ActivationName::Relu; m.stages.len()],
            pool: m.stages.iter().map(|s| s.pool).collect(),
            feature_dim: m.feature_dim,
            tracks: head.tracks,
            rows: head.rows,
            cells: head.cells,
            groups: head.groups,
        }
    }
}

impl Default for TrainSection {
    fn default() -> Self {
        let s = TrainSchedule::default();
        Self {
            epochs: s.epochs,
            batch_size: s.batch_size,
            lr_backbone: s.lr[0],
            lr_hcl: s.lr[1],
            lr_pi: s.lr[2],
            unfreeze_backbone_fraction: s.unfreeze_backbone_fraction,
            unfreeze_pi_fraction: s.unfreeze_pi_fraction,
            lambda: s.lambda,
            beta1: s.adam.beta1,
            beta2: s.adam.beta2,
            eps: s.adam.eps,
        }
    }
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            split: "test".into(),
            line_width: 0.0,
            mode: MatchName::Greedy,
            acc_tolerance: 0.0,
        }
    }
}

impl Default for SynthSection {
    fn default() -> Self {
        let s = SceneSpec::default();
        Self {
            classes: s.n_classes,
            gauge_bottom: s.gauge_bottom,
            jitter: s.jitter,
            curvature_range: s.curvature_range,
            noise_sigma: s.noise_sigma,
            line_width: s.line_width,
        }
    }
}

impl Default for AnchorsSection {
    fn default() -> Self {
        Self {
            spacing: SpacingName::Progressive,
            h_anchor_fraction: 0.98,
        }
    }
}

fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

/// Applies `key.path=value` to `table`. The value is read as a TOML literal
/// and falls back to a bare string.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {assignment:?} is not key=value")))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("bad override key {key:?}")));
    }
    let mut cur = table;
    for part in &parts[..parts.len() - 1] {
        let entry = cur
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("{key}: {part} is not a table")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), parse_value(raw.trim()));
    Ok(())
}

impl RunConfig {
    /// Reads `path` (if any), applies `overrides` in order, fills auto
    /// values and validates.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                toml::from_str::<toml::Table>(&text)
                    .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let mut cfg: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string().trim().replace('\n', " ")))?;
        cfg.resolve();
        cfg.validate()?;
        Ok(cfg)
    }

    fn resolve(&mut self) {
        if self.eval.line_width == 0.0 {
            self.eval.line_width =
                EvalConfig::default_line_width(self.data.width, self.model.cells);
        }
        if self.eval.acc_tolerance == 0.0 {
            self.eval.acc_tolerance = 0.5 * self.data.width as f64 / self.model.cells as f64;
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model_config()?.validate()?;
        self.schedule().validate()?;
        self.eval_config().validate()?;
        self.scene().validate()?;
        if self.data.width == 0 || self.data.height == 0 {
            return Err(Error::Config(
                "data.width and data.height must be positive".into(),
            ));
        }
        let f = self.anchors.h_anchor_fraction;
        if !(f > 0.0 && f <= 1.0) {
            return Err(Error::Config(format!(
                "anchors.h_anchor_fraction {f} outside (0, 1]"
            )));
        }
        if !["train", "val", "test"].contains(&self.eval.split.as_str()) {
            return Err(Error::Config(format!(
                "eval.split must be train, val or test, got {:?}",
                self.eval.split
            )));
        }
        Ok(())
    }

    pub fn head(&self) -> HeadShape {
        HeadShape {
            cells: self.model.cells,
            rows: self.model.rows,
            tracks: self.model.tracks,
            groups: self.model.groups,
        }
    }

    pub fn model_config(&self) -> Result<ModelConfig> {
        let m = &self.model;
        let n = m.kernel.len();
        if [
            m.stride.len(),
            m.stage_channels.len(),
            m.activation.len(),
            m.pool.len(),
        ]
        .iter()
        .any(|&l| l != n)
        {
            return Err(Error::Config(
                "model.kernel, stride, stage_channels, activation and pool need equal lengths"
                    .into(),
            ));
        }
        let stages = (0..n)
            .map(|i| StageConfig {
                kernel: m.kernel[i],
                stride: m.stride[i],
                out_channels: m.stage_channels[i],
                activation: match m.activation[i] {
                    ActivationName::Relu => Activation::Relu,
                    ActivationName::Identity => Activation::Identity,
                },
                pool: m.pool[i],
            })
            .collect();
        Ok(ModelConfig {
            channels: m.channels,
            in_h: m.in_h,
            in_w: m.in_w,
            stages,
            feature_dim: m.feature_dim,
            head: self.head(),
        })
    }

    pub fn schedule(&self) -> TrainSchedule {
        let t = &self.train;
        TrainSchedule {
            epochs: t.epochs,
            batch_size: t.batch_size,
            lr: [t.lr_backbone, t.lr_hcl, t.lr_pi],
            unfreeze_backbone_fraction: t.unfreeze_backbone_fraction,
            unfreeze_pi_fraction: t.unfreeze_pi_fraction,
            lambda: t.lambda,
            adam: AdamConfig {
                beta1: t.beta1,
                beta2: t.beta2,
                eps: t.eps,
            },
            seed: self.seed,
        }
    }

    pub fn eval_config(&self) -> EvalConfig {
        let mut e = EvalConfig::new(self.data.width, self.data.height, self.model.cells);
        e.line_width = self.eval.line_width;
        e.mode = match self.eval.mode {
            MatchName::Greedy => MatchMode::Greedy,
            MatchName::Optimal => MatchMode::Optimal,
        };
        e
    }

    pub fn scene(&self) -> SceneSpec {
        let s = &self.synth;
        SceneSpec {
            width: self.data.width,
            height: self.data.height,
            n_classes: s.classes,
            gauge_bottom: s.gauge_bottom,
            jitter: s.jitter,
            curvature_range: s.curvature_range,
            noise_sigma: s.noise_sigma,
            line_width: s.line_width,
            seed: self.seed,
        }
    }

    /// The effective configuration as TOML.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Where `gen-anchors` writes the set with the other spacing.
    pub fn alternate_anchors_path(&self) -> PathBuf {
        let other = match self.anchors.spacing {
            SpacingName::Progressive => SpacingName::Equidistant,
            SpacingName::Equidistant => SpacingName::Progressive,
        };
        let mut name = self.paths.anchors.as_os_str().to_owned();
        name.push(".");
        name.push(other.name());
        PathBuf::from(name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        let cfg = RunConfig::load(None, &[]).unwrap();
        assert_eq!(cfg.eval.line_width, 12.0);
        assert_eq!(cfg.eval.acc_tolerance, 4.0);
        let back: RunConfig = toml::from_str(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn overrides() {
        let cfg = RunConfig::load(
            None,
            &[
                "model.rows=9".into(),
                "train.lr_pi = 1e-4".into(),
                "paths.out=elsewhere".into(),
                "eval.mode=optimal".into(),
                "model.pool=[false, true, false]".into(),
                "seed=7".into(),
            ],
        )
        .unwrap();
        assert_eq!(cfg.model.rows, 9);
        assert_eq!(cfg.train.lr_pi, 1e-4);
        assert_eq!(cfg.paths.out, PathBuf::from("elsewhere"));
        assert_eq!(cfg.eval.mode, MatchName::Optimal);
        assert!(cfg.model.pool[1]);
        assert_eq!(cfg.schedule().seed, 7);
    }

    #[test]
    fn unknown_keys_are_config_errors() {
        for bad in [
            "model.layers=3",
            "nope=1",
            "train.lr=1",
            "seed.x=1",
            "model.rows",
        ] {
            let err = RunConfig::load(None, &[bad.to_string()]).unwrap_err();
            assert!(matches!(err, Error::Config(_)), "{bad}: {err}");
            assert_eq!(err.exit_code(), 2);
        }
    }

    #[test]
    fn inconsistent_values_are_rejected() {
        assert!(RunConfig::load(None, &["model.kernel=[3, 3]".into()]).is_err());
        assert!(RunConfig::load(None, &["train.unfreeze_pi_fraction=0.01".into()]).is_err());
        assert!(RunConfig::load(None, &["eval.split=\"dev\"".into()]).is_err());
    }

    #[test]
    fn file_then_overrides() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.toml");
        std::fs::write(
            &p,
            "seed = 3\n[model]\ngroups = 1\n[anchors]\nspacing = \"equidistant\"\n",
        )
        .unwrap();
        let cfg = RunConfig::load(Some(&p), &["seed=4".into()]).unwrap();
        assert_eq!((cfg.seed, cfg.model.groups), (4, 1));
        assert_eq!(cfg.anchors.spacing, SpacingName::Equidistant);
        assert_eq!(
            RunConfig {
                paths: PathsSection {
                    anchors: "a/anchors.txt".into(),
                    ..PathsSection::default()
                },
                ..cfg
            }
            .alternate_anchors_path(),
            PathBuf::from("a/anchors.txt.progressive")
        );
    }
}
