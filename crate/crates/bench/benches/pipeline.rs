use criterion::{criterion_group, criterion_main, Criterion};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::hint::black_box;
use ufatd_core::anchors::{generate_equidistant_set, generate_set};
use ufatd_core::codec::{decode, encode, HeadShape};
use ufatd_core::eval::{f1_at, iou, rasterize, CorpusEntry};
use ufatd_core::nnet::{infer, loss_and_gradients, preprocess, ModelConfig, ModelParams, Tensor};
use ufatd_core::synth::{render, sample_rng, SceneSpec};
use ufatd_core::{AnchorGenSpec, AnchorSet, EvalConfig, Prediction, Spacing};

const HEAD: HeadShape = HeadShape {
    cells: 40,
    rows: 12,
    tracks: 2,
    groups: 3,
};

fn anchors() -> AnchorSet {
    AnchorSet::generate(
        AnchorGenSpec::new(12, 3, 19.0, 99.0, 156.8).unwrap(),
        Spacing::Progressive,
    )
    .unwrap()
}

fn bench_anchors(c: &mut Criterion) {
    let spec = AnchorGenSpec::new(72, 5, 100.0, 300.0, 1060.0).unwrap();
    c.bench_function("anchors/progressive_h72_n5", |b| {
        b.iter(|| generate_set(black_box(&spec)).unwrap())
    });
    c.bench_function("anchors/equidistant_h72_n5", |b| {
        b.iter(|| generate_equidistant_set(black_box(&spec)).unwrap())
    });
}

fn bench_codec(c: &mut Criterion) {
    let set = anchors();
    let scene = render(&SceneSpec::default(), 1, &mut sample_rng(0, 1)).unwrap();
    let target = encode(&scene.tracks, &set, 320, 40, 2).unwrap();
    let pred = Prediction::one_hot(&target, 10.0);
    c.bench_function("codec/encode", |b| {
        b.iter(|| encode(black_box(&scene.tracks), &set, 320, 40, 2).unwrap())
    });
    c.bench_function("codec/decode", |b| {
        b.iter(|| decode(black_box(&pred), &set, 320, 40).unwrap())
    });
}

fn bench_eval(c: &mut Criterion) {
    let spec = SceneSpec::default();
    let scenes: Vec<_> = (0..20u64)
        .map(|i| render(&spec, i as usize % 3, &mut sample_rng(0, i)).unwrap())
        .collect();
    let track = &scenes[0].tracks[0];
    c.bench_function("eval/rasterize_12px", |b| {
        b.iter(|| rasterize(black_box(track), 12.0, 320, 160))
    });
    let a = rasterize(&scenes[0].tracks[0], 12.0, 320, 160);
    let m = rasterize(&scenes[1].tracks[0], 12.0, 320, 160);
    c.bench_function("eval/iou", |b| b.iter(|| iou(black_box(&a), &m).unwrap()));
    let corpus: Vec<CorpusEntry> = scenes
        .windows(2)
        .map(|w| CorpusEntry {
            preds: w[0].tracks.clone(),
            gts: w[1].tracks.clone(),
        })
        .collect();
    let cfg = EvalConfig::new(320, 160, 40);
    c.bench_function("eval/f1_at_19_images", |b| {
        b.iter(|| f1_at(black_box(&corpus), 0.5, &cfg).unwrap())
    });
}

fn bench_model(c: &mut Criterion) {
    let cfg = ModelConfig::desk(HEAD);
    let params = ModelParams::init(&cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let set = anchors();
    let spec = SceneSpec::default();
    let scenes: Vec<_> = (0..8u64)
        .map(|i| render(&spec, i as usize % 3, &mut sample_rng(0, i)).unwrap())
        .collect();
    let one = Tensor::new(
        vec![1, 1, cfg.in_h, cfg.in_w],
        preprocess(&scenes[0].image, &cfg).unwrap(),
    )
    .unwrap();
    c.bench_function("model/forward_1", |b| {
        b.iter(|| infer(&params, black_box(&one)).unwrap())
    });
    c.bench_function("model/forward_decode_1", |b| {
        b.iter(|| {
            let p = infer(&params, black_box(&one)).unwrap();
            decode(&p.sample(0), &set, 320, 40).unwrap()
        })
    });
    let mut data = Vec::new();
    for s in &scenes {
        data.extend(preprocess(&s.image, &cfg).unwrap());
    }
    let batch = Tensor::new(vec![8, 1, cfg.in_h, cfg.in_w], data).unwrap();
    let targets: Vec<_> = scenes
        .iter()
        .map(|s| encode(&s.tracks, &set, 320, 40, 2).unwrap())
        .collect();
    c.bench_function("model/loss_and_gradients_8", |b| {
        b.iter(|| loss_and_gradients(&params, black_box(&batch), &targets, 0.05).unwrap())
    });
}

criterion_group!(benches, bench_anchors, bench_codec, bench_eval, bench_model);
criterion_main!(benches);
