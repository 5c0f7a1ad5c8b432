//! Golden files for every on-disk format. Writers must reproduce the pinned
//! bytes and readers must recover the pinned values.
//!
//! `UFATD_BLESS=1 cargo test -p ufatd-core --test formats` rewrites the
//! binary checkpoint fixture after an intentional format change.

use std::path::{Path, PathBuf};

use ufatd_core::codec::HeadShape;
use ufatd_core::io::{
    decode_checkpoint, decode_pnm, encode_checkpoint, encode_pnm, format_anchors, format_labels,
    parse_anchors, parse_labels, DatasetIndex, CHECKPOINT_VERSION,
};
use ufatd_core::nnet::{Activation, ModelConfig, ModelParams, StageConfig};
use ufatd_core::{AnchorGenSpec, AnchorSet, Error, Spacing};

fn golden(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/golden")
        .join(name)
}

fn read(name: &str) -> Vec<u8> {
    std::fs::read(golden(name)).unwrap()
}

#[test]
fn anchors_file() {
    let spec = AnchorGenSpec::new(4, 2, 10.0, 20.0, 70.0).unwrap();
    let set = AnchorSet::generate(spec, Spacing::Progressive).unwrap();
    let bytes = read("anchors.txt");
    assert_eq!(format_anchors(&set).as_bytes(), &bytes[..]);

    let back = parse_anchors(std::str::from_utf8(&bytes).unwrap(), "anchors.txt").unwrap();
    assert_eq!((back.h(), back.n()), (4, 2));
    assert_eq!(back.starts(), vec![10.0, 20.0]);
    // 20 + (50/3)·√0.75
    assert!((back.groups[1].rows[1] - 34.433757).abs() < 1e-9);
    for (a, b) in back.groups.iter().zip(&set.groups) {
        for (x, y) in a.rows.iter().zip(&b.rows) {
            assert!((x - y).abs() <= 5e-7);
        }
    }
}

#[test]
fn labels_file() {
    let bytes = read("labels.txt");
    let tracks = parse_labels(std::str::from_utf8(&bytes).unwrap(), "labels.txt").unwrap();
    assert_eq!(tracks.len(), 2);
    assert_eq!(tracks[0].vertices.len(), 3);
    assert_eq!(tracks[1].track_index, 1);
    assert_eq!(tracks[1].vertices[1].x, 200.125);
    assert_eq!(tracks[0].top(), 40.0);
    assert_eq!(format_labels(&tracks).as_bytes(), &bytes[..]);
}

#[test]
fn index_file() {
    let bytes = read("index.tsv");
    let text = std::str::from_utf8(&bytes).unwrap();
    let idx = DatasetIndex::parse(text, "index.tsv", Path::new("root"), 3).unwrap();
    assert_eq!(idx.len(), 2);
    assert_eq!(idx.entries[1].class, 2);
    assert_eq!(
        idx.label_path(&idx.entries[0]),
        Path::new("root").join("labels/a.txt")
    );
    assert_eq!(idx.format(), text);
    // class 2 is out of range for a 2-class corpus
    assert!(DatasetIndex::parse(text, "index.tsv", Path::new(""), 2).is_err());
}

#[test]
fn pgm_file() {
    let bytes = read("tiny.pgm");
    let r = decode_pnm(&bytes, "tiny.pgm").unwrap();
    assert_eq!((r.width, r.height, r.channels), (3, 2, 1));
    assert_eq!(r.data, vec![0, 64, 128, 192, 255, 16]);
    assert_eq!(encode_pnm(&r), bytes);
}

fn fixture_model() -> ModelParams {
    let config = ModelConfig {
        channels: 1,
        in_h: 4,
        in_w: 6,
        stages: vec![StageConfig {
            activation: Activation::Identity,
            pool: true,
            ..StageConfig::conv(3, 1, 2)
        }],
        feature_dim: 3,
        head: HeadShape {
            cells: 2,
            rows: 2,
            tracks: 1,
            groups: 2,
        },
    };
    let mut p = ModelParams::zeros(&config).unwrap();
    let mut i = 0.0;
    for param in &mut p.params {
        for v in param.value.data_mut() {
            *v = i * 0.25 - 1.0;
            i += 1.0;
        }
    }
    p
}

#[test]
fn checkpoint_file() {
    let params = fixture_model();
    let encoded = encode_checkpoint(&params);
    let path = golden("tiny.ckpt");
    if std::env::var_os("UFATD_BLESS").is_some() {
        std::fs::write(&path, &encoded).unwrap();
    }
    let bytes = std::fs::read(&path).unwrap();
    assert_eq!(&bytes[..6], b"UFATD1");
    assert_eq!(u16::from_le_bytes([bytes[6], bytes[7]]), CHECKPOINT_VERSION);
    // channels, in_h, in_w, stage count
    let words: Vec<u32> = bytes[8..24]
        .chunks(4)
        .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    assert_eq!(words, vec![1, 4, 6, 1]);
    assert_eq!(encoded, bytes);

    let back = decode_checkpoint(&bytes, "tiny.ckpt").unwrap();
    assert_eq!(back.config, params.config);
    for (a, b) in back.params.iter().zip(&params.params) {
        assert_eq!(a.name, b.name);
        let bits = |t: &[f64]| t.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(a.value.data()), bits(b.value.data()));
    }

    let mut newer = bytes.clone();
    newer[6] = 2;
    assert!(matches!(
        decode_checkpoint(&newer, "t"),
        Err(Error::Version { found: 2, .. })
    ));
    let err = decode_checkpoint(&bytes[..bytes.len() - 3], "t").unwrap_err();
    assert_eq!(err.exit_code(), 3);
}
