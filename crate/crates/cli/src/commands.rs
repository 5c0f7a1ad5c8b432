//! The subcommands. Each takes the resolved configuration, writes its
//! artifacts atomically and returns what it computed.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ufatd_core::anchors::{assign_group, reduction_ratio};
use ufatd_core::codec::encode as encode_target;
use ufatd_core::eval::{acc, bench as run_bench, mf1, AccResult, BenchReport, CorpusEntry};
use ufatd_core::io::{check_anchor_consistency, load_checkpoint_expecting, save_checkpoint};
use ufatd_core::io::{
    read_anchors, read_labels, read_pnm, read_text, write_anchors, write_atomic, write_labels,
    DatasetIndex, Raster,
};
use ufatd_core::nnet::{
    self, preprocess, EpochMetrics, EvalContext, ModelParams, Tensor, TrainObserver, TrainOutcome,
    TrainSample,
};
use ufatd_core::synth::generate_dataset;
use ufatd_core::{
    AnchorGenSpec, AnchorSet, Error, GridTarget, MatchResult, ModelConfig, Polyline, Result,
};

use crate::config::RunConfig;

pub const SPLITS: [&str; 3] = ["train", "val", "test"];

/// A dataset split with its images and ground-truth tracks loaded.
pub struct Split {
    pub name: String,
    pub index: DatasetIndex,
    pub images: Vec<Raster>,
    pub labels: Vec<Vec<Polyline>>,
}

fn require(path: &Path, hint: &str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::Input(format!(
            "{} does not exist ({hint})",
            path.display()
        )))
    }
}

pub fn index_path(cfg: &RunConfig, split: &str) -> PathBuf {
    cfg.paths.data.join(format!("{split}.tsv"))
}

fn read_index(cfg: &RunConfig, split: &str) -> Result<DatasetIndex> {
    let path = index_path(cfg, split);
    require(&path, "run `ufatd synth` or point paths.data at a dataset")?;
    DatasetIndex::read(&path, cfg.synth.classes)
}

fn read_split_labels(cfg: &RunConfig, index: &DatasetIndex) -> Result<Vec<Vec<Polyline>>> {
    index
        .entries
        .iter()
        .map(|e| {
            let tracks = read_labels(&index.label_path(e))?;
            for t in &tracks {
                t.check_within(cfg.data.width as f64)?;
            }
            Ok(tracks)
        })
        .collect()
}

pub fn load_split(cfg: &RunConfig, split: &str) -> Result<Split> {
    let index = read_index(cfg, split)?;
    let labels = read_split_labels(cfg, &index)?;
    let mut images = Vec::with_capacity(index.len());
    for e in &index.entries {
        let path = index.image_path(e);
        let img = read_pnm(&path)?;
        if (img.width, img.height) != (cfg.data.width, cfg.data.height) {
            return Err(Error::Input(format!(
                "{} is {}x{}, config says {}x{}",
                path.display(),
                img.width,
                img.height,
                cfg.data.width,
                cfg.data.height
            )));
        }
        images.push(img);
    }
    Ok(Split {
        name: split.to_string(),
        index,
        images,
        labels,
    })
}

/// Reads the anchors file and checks it against the model head.
pub fn load_anchors(cfg: &RunConfig, model: &ModelConfig) -> Result<AnchorSet> {
    require(&cfg.paths.anchors, "run `ufatd gen-anchors` first")?;
    let anchors = read_anchors(&cfg.paths.anchors)?;
    check_anchor_consistency(model, &anchors)?;
    Ok(anchors)
}

fn load_model(cfg: &RunConfig) -> Result<(ModelParams, AnchorSet)> {
    let model = cfg.model_config()?;
    let anchors = load_anchors(cfg, &model)?;
    require(&cfg.paths.checkpoint, "run `ufatd train` first")?;
    let params = load_checkpoint_expecting(&cfg.paths.checkpoint, &model)?;
    Ok((params, anchors))
}

fn prepare(split: &Split, anchors: &AnchorSet, model: &ModelConfig) -> Result<Vec<TrainSample>> {
    split
        .images
        .iter()
        .zip(&split.labels)
        .map(|(img, tracks)| TrainSample::prepare(img, tracks.clone(), anchors, model))
        .collect()
}

/// Builds the anchor sets from the training labels: the configured spacing
/// goes to `paths.anchors`, the other next to it.
pub fn gen_anchors(cfg: &RunConfig) -> Result<(AnchorSet, AnchorSet)> {
    let index = read_index(cfg, "train")?;
    let labels = read_split_labels(cfg, &index)?;
    let tops: Vec<f64> = labels
        .iter()
        .filter(|t| !t.is_empty())
        .map(|t| t.iter().map(Polyline::top).fold(f64::INFINITY, f64::min))
        .collect();
    if tops.is_empty() {
        return Err(Error::Input("training labels contain no tracks".into()));
    }
    let y_min = tops.iter().copied().fold(f64::INFINITY, f64::min);
    let y_max = tops.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let h_anchor = cfg.anchors.h_anchor_fraction * cfg.data.height as f64;
    let spec = AnchorGenSpec::new(cfg.model.rows, cfg.model.groups, y_min, y_max, h_anchor)?;
    let main = AnchorSet::generate(spec, cfg.anchors.spacing.spacing())?;
    let other_spacing = match cfg.anchors.spacing {
        crate::config::SpacingName::Progressive => ufatd_core::Spacing::Equidistant,
        crate::config::SpacingName::Equidistant => ufatd_core::Spacing::Progressive,
    };
    let other = AnchorSet::generate(spec, other_spacing)?;
    write_anchors(&cfg.paths.anchors, &main)?;
    write_anchors(&cfg.alternate_anchors_path(), &other)?;
    println!(
        "anchors: y_min={y_min} y_max={y_max} starts={:?} -> {}",
        main.starts(),
        cfg.paths.anchors.display()
    );
    Ok((main, other))
}

pub fn synth(cfg: &RunConfig) -> Result<Vec<(String, DatasetIndex)>> {
    let d = &cfg.data;
    let splits = [("train", d.train), ("val", d.val), ("test", d.test)];
    let out = generate_dataset(&cfg.scene(), &cfg.paths.data, &splits)?;
    for (name, idx) in &out {
        println!("synth: {name} {} samples", idx.len());
    }
    Ok(out)
}

/// One line per sample: label path, ground-truth group, then every cell
/// index in (group, row, track) order.
pub fn format_targets(index: &DatasetIndex, targets: &[GridTarget]) -> String {
    let mut out = String::new();
    if let Some(t) = targets.first() {
        let s = t.shape;
        writeln!(
            out,
            "# groups={} rows={} tracks={} cells={}",
            s.groups, s.rows, s.tracks, s.cells
        )
        .unwrap();
    }
    for (e, t) in index.entries.iter().zip(targets) {
        write!(out, "{}\t{}\t", e.label.display(), t.gt_group).unwrap();
        let cells: Vec<String> = t.cells.iter().map(u16::to_string).collect();
        out.push_str(&cells.join(" "));
        out.push('\n');
    }
    out
}

pub fn encode(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let model = cfg.model_config()?;
    let anchors = load_anchors(cfg, &model)?;
    let mut written = Vec::new();
    for split in SPLITS {
        let index = read_index(cfg, split)?;
        let labels = read_split_labels(cfg, &index)?;
        let targets = labels
            .iter()
            .map(|t| {
                encode_target(
                    t,
                    &anchors,
                    cfg.data.width,
                    model.head.cells,
                    model.head.tracks,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let path = cfg.paths.out.join("encode").join(format!("{split}.tsv"));
        write_atomic(&path, format_targets(&index, &targets).as_bytes())?;
        println!("encode: {split} -> {}", path.display());
        written.push(path);
    }
    Ok(written)
}

pub fn metrics_csv(log: &[EpochMetrics]) -> String {
    let mut out = String::from("epoch,l_hcl,l_pi,lambda,lr_backbone,val_f1_50,val_pi_acc\n");
    for m in log {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            m.epoch, m.l_hcl, m.l_pi, m.lambda, m.lr_backbone, m.val_f1_50, m.val_pi_acc
        )
        .unwrap();
    }
    out
}

struct Progress;

impl TrainObserver for Progress {
    fn on_epoch(&mut self, m: &EpochMetrics) {
        println!(
            "epoch {:3}  l_hcl {:.4}  l_pi {:.4}  val F1@50 {:.4}  val PI {:.3}",
            m.epoch, m.l_hcl, m.l_pi, m.val_f1_50, m.val_pi_acc
        );
    }
}

/// Trains, saves the best checkpoint and the metrics log. A diverged run
/// still saves both before returning a numeric error.
pub fn train(cfg: &RunConfig) -> Result<TrainOutcome> {
    let model = cfg.model_config()?;
    let anchors = load_anchors(cfg, &model)?;
    let train_set = prepare(&load_split(cfg, "train")?, &anchors, &model)?;
    let val_set = prepare(&load_split(cfg, "val")?, &anchors, &model)?;
    let eval = cfg.eval_config();
    let ctx = EvalContext {
        anchors: &anchors,
        width: cfg.data.width,
        eval: &eval,
    };
    let outcome = nnet::train(
        &model,
        &cfg.schedule(),
        ctx,
        &train_set,
        &val_set,
        &mut Progress,
    )?;
    save_checkpoint(&cfg.paths.checkpoint, &outcome.best)?;
    write_atomic(
        &cfg.paths.out.join("metrics.csv"),
        metrics_csv(&outcome.log).as_bytes(),
    )?;
    if let Some(why) = &outcome.diverged {
        return Err(Error::Numeric(format!(
            "{why}; best checkpoint so far saved to {}",
            cfg.paths.checkpoint.display()
        )));
    }
    println!(
        "train: best epoch {:?} -> {}",
        outcome.best_epoch,
        cfg.paths.checkpoint.display()
    );
    Ok(outcome)
}

pub fn pred_dir(cfg: &RunConfig, split: &str) -> PathBuf {
    cfg.paths.out.join("pred").join(split)
}

fn groups_path(cfg: &RunConfig, split: &str) -> PathBuf {
    cfg.paths
        .out
        .join("pred")
        .join(format!("{split}_groups.tsv"))
}

fn pred_label_path(cfg: &RunConfig, split: &str, label: &Path) -> Result<PathBuf> {
    let name = label
        .file_name()
        .ok_or_else(|| Error::Input(format!("label path {} has no file name", label.display())))?;
    Ok(pred_dir(cfg, split).join(name))
}

fn run_predict(
    cfg: &RunConfig,
    params: &ModelParams,
    anchors: &AnchorSet,
    split: &Split,
) -> Result<Vec<(usize, Vec<Polyline>)>> {
    let samples = prepare(split, anchors, &params.config)?;
    let eval = cfg.eval_config();
    let ctx = EvalContext {
        anchors,
        width: cfg.data.width,
        eval: &eval,
    };
    nnet::predict(params, &samples, ctx)
}

/// Writes one predicted label file per image of `eval.split`, plus the
/// predicted anchor group of every image.
pub fn infer(cfg: &RunConfig) -> Result<Vec<(usize, Vec<Polyline>)>> {
    let (params, anchors) = load_model(cfg)?;
    let split = load_split(cfg, &cfg.eval.split)?;
    let preds = run_predict(cfg, &params, &anchors, &split)?;
    let mut groups = String::new();
    for (e, (g, tracks)) in split.index.entries.iter().zip(&preds) {
        let path = pred_label_path(cfg, &split.name, &e.label)?;
        write_labels(&path, tracks)?;
        writeln!(
            groups,
            "{}\t{g}",
            e.label.file_name().unwrap().to_string_lossy()
        )
        .unwrap();
    }
    write_atomic(&groups_path(cfg, &split.name), groups.as_bytes())?;
    println!(
        "infer: {} predictions -> {}",
        preds.len(),
        pred_dir(cfg, &split.name).display()
    );
    Ok(preds)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub mf1: f64,
    pub per_tau: Vec<(f64, MatchResult)>,
    pub f1_50: f64,
    pub f1_75: f64,
    /// Present when the predicted groups file exists.
    pub pi_acc: Option<f64>,
    pub acc: AccResult,
}

/// `1.0`, `0.9875`: four decimals with trailing zeros dropped.
pub fn fmt_metric(v: f64) -> String {
    let s = format!("{v:.4}");
    let s = s.trim_end_matches('0');
    if s.ends_with('.') {
        format!("{s}0")
    } else {
        s.to_string()
    }
}

impl EvalReport {
    pub fn summary_line(&self) -> String {
        format!(
            "mF1={},F1@50={},F1@75={}",
            fmt_metric(self.mf1),
            fmt_metric(self.f1_50),
            fmt_metric(self.f1_75)
        )
    }

    pub fn csv(&self) -> String {
        let mut out = String::from("tau,precision,recall,f1\n");
        for (tau, r) in &self.per_tau {
            writeln!(out, "{tau:.2},{},{},{}", r.precision, r.recall, r.f1).unwrap();
        }
        out
    }
}

fn parse_groups(text: &str, name: &str) -> Result<HashMap<String, usize>> {
    let mut out = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad = || {
            Error::Input(format!(
                "{name}:{}: expected `<label file>\\t<group>`",
                i + 1
            ))
        };
        let (file, g) = line.split_once('\t').ok_or_else(bad)?;
        out.insert(file.to_string(), g.trim().parse().map_err(|_| bad())?);
    }
    Ok(out)
}

/// Scores the prediction files of `eval.split` against its labels.
pub fn eval(cfg: &RunConfig) -> Result<EvalReport> {
    let model = cfg.model_config()?;
    let anchors = load_anchors(cfg, &model)?;
    let split = cfg.eval.split.as_str();
    let index = read_index(cfg, split)?;
    let gts = read_split_labels(cfg, &index)?;
    let mut corpus = Vec::with_capacity(index.len());
    for (e, gt) in index.entries.iter().zip(gts) {
        let path = pred_label_path(cfg, split, &e.label)?;
        if !path.exists() {
            return Err(Error::Input(format!(
                "missing prediction file {}",
                path.display()
            )));
        }
        corpus.push(CorpusEntry {
            preds: read_labels(&path)?,
            gts: gt,
        });
    }
    let gt_groups = corpus
        .iter()
        .map(|c| {
            if c.gts.is_empty() {
                Ok(0)
            } else {
                assign_group(&c.gts, &anchors)
            }
        })
        .collect::<Result<Vec<_>>>()?;

    let eval = cfg.eval_config();
    let (m, results) = mf1(&corpus, &eval)?;
    let per_tau: Vec<(f64, MatchResult)> = eval.thresholds.iter().copied().zip(results).collect();
    let at = |tau: f64| {
        per_tau
            .iter()
            .find(|(t, _)| (t - tau).abs() < 1e-9)
            .map_or(0.0, |(_, r)| r.f1)
    };

    let gpath = groups_path(cfg, split);
    let pi_acc = if gpath.exists() {
        let groups = parse_groups(&read_text(&gpath)?, &gpath.display().to_string())?;
        let mut hits = 0;
        for (e, gt) in index.entries.iter().zip(&gt_groups) {
            let key = e.label.file_name().unwrap().to_string_lossy();
            let g = groups
                .get(key.as_ref())
                .ok_or_else(|| Error::Input(format!("{}: no group for {key}", gpath.display())))?;
            hits += usize::from(g == gt);
        }
        Some(hits as f64 / index.len().max(1) as f64)
    } else {
        None
    };
    let rows: Vec<Vec<f64>> = gt_groups
        .iter()
        .map(|&k| anchors.groups[k].rows.clone())
        .collect();
    let acc = acc(&corpus, &rows, cfg.eval.acc_tolerance);

    let report = EvalReport {
        mf1: m,
        f1_50: at(0.5),
        f1_75: at(0.75),
        per_tau,
        pi_acc,
        acc,
    };
    let mut summary = report.summary_line();
    summary.push('\n');
    match report.pi_acc {
        Some(p) => writeln!(summary, "PI={},ACC={}", fmt_metric(p), fmt_metric(acc.acc)).unwrap(),
        None => writeln!(summary, "ACC={}", fmt_metric(acc.acc)).unwrap(),
    }
    write_atomic(
        &cfg.paths.out.join(format!("eval_{split}.csv")),
        report.csv().as_bytes(),
    )?;
    write_atomic(
        &cfg.paths.out.join(format!("eval_{split}.txt")),
        summary.as_bytes(),
    )?;
    print!("{summary}");
    Ok(report)
}

pub fn bench_csv(r: &BenchReport) -> String {
    let mut out = String::from("iteration,forward_ms,decode_ms,total_ms\n");
    for (i, ((f, d), t)) in r
        .forward_ms
        .iter()
        .zip(&r.decode_ms)
        .zip(&r.latencies_ms)
        .enumerate()
    {
        writeln!(out, "{i},{f:.6},{d:.6},{t:.6}").unwrap();
    }
    out
}

pub fn bench_summary(r: &BenchReport) -> String {
    format!(
        "iterations={},mean_ms={:.4},median_ms={:.4},std_ms={:.4},mean_fps={:.1},median_fps={:.1},reduction_ratio={:.4}\n",
        r.latencies_ms.len(),
        r.mean_ms,
        r.median_ms,
        r.std_ms,
        r.mean_fps,
        r.median_fps,
        r.reduction_ratio
    )
}

/// Times single-image inference on up to 16 images of `eval.split`.
pub fn bench(cfg: &RunConfig, iterations: usize) -> Result<BenchReport> {
    let (params, anchors) = load_model(cfg)?;
    let index = read_index(cfg, &cfg.eval.split)?;
    let m = &params.config;
    let mut images = Vec::new();
    for e in index.entries.iter().take(16) {
        let img = read_pnm(&index.image_path(e))?;
        images.push(Tensor::new(
            vec![1, m.channels, m.in_h, m.in_w],
            preprocess(&img, m)?,
        )?);
    }
    let report = run_bench(&params, &anchors, &images, cfg.data.width, iterations)?;
    debug_assert_eq!(
        report.reduction_ratio,
        reduction_ratio(m.in_h, m.in_w, m.head.rows, m.head.cells, m.head.groups)?
    );
    write_atomic(
        &cfg.paths.out.join("bench_latency.csv"),
        bench_csv(&report).as_bytes(),
    )?;
    let summary = bench_summary(&report);
    write_atomic(&cfg.paths.out.join("bench_summary.txt"), summary.as_bytes())?;
    print!("{summary}");
    Ok(report)
}

/// Overlays for the first `limit` images of `eval.split` and the F1 curve
/// over the whole split.
pub fn viz(cfg: &RunConfig, limit: usize) -> Result<Vec<PathBuf>> {
    let (params, anchors) = load_model(cfg)?;
    let split = load_split(cfg, &cfg.eval.split)?;
    let preds = run_predict(cfg, &params, &anchors, &split)?;
    let dir = cfg.paths.out.join("viz");
    let mut written = Vec::new();
    for (i, (img, (g, tracks))) in split.images.iter().zip(&preds).enumerate().take(limit) {
        let overlay = crate::viz::overlay(img, &split.labels[i], tracks, &anchors, *g);
        let path = dir.join(format!("{}_{i:05}.ppm", split.name));
        ufatd_core::io::write_pnm(&path, &overlay)?;
        written.push(path);
    }
    let corpus: Vec<CorpusEntry> = preds
        .into_iter()
        .zip(split.labels)
        .map(|((_, p), g)| CorpusEntry { preds: p, gts: g })
        .collect();
    let eval = cfg.eval_config();
    let (_, results) = mf1(&corpus, &eval)?;
    let points: Vec<(f64, f64)> = eval
        .thresholds
        .iter()
        .copied()
        .zip(results.iter().map(|r| r.f1))
        .collect();
    let svg = dir.join(format!("f1_{}.svg", split.name));
    write_atomic(&svg, crate::viz::f1_curve_svg(&points).as_bytes())?;
    written.push(svg);
    println!("viz: {} files -> {}", written.len(), dir.display());
    Ok(written)
}
