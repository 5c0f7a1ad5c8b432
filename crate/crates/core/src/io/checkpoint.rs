//! Binary model checkpoint.
//!
//! Layout (little endian): magic `UFATD1`, u16 version, the model config as
//! u32 words (`channels in_h in_w stages`, then `kernel stride out act pool`
//! per stage, then `D C h w n`), then every parameter as u16 name length,
//! UTF-8 name, u8 rank, u32 dims and f64 values until end of file.

use std::path::Path;

use super::{read_bytes, write_atomic};
use crate::anchors::AnchorSet;
use crate::codec::HeadShape;
use crate::error::{Error, Result};
use crate::nnet::{Activation, ModelConfig, ModelParams, StageConfig, Tensor};

pub const CHECKPOINT_MAGIC: &[u8; 6] = b"UFATD1";
pub const CHECKPOINT_VERSION: u16 = 1;

pub fn encode_checkpoint(params: &ModelParams) -> Vec<u8> {
    let c = &params.config;
    let mut out = Vec::with_capacity(64 + params.num_values() * 8);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    let mut word = |v: usize| out.extend_from_slice(&(v as u32).to_le_bytes());
    word(c.channels);
    word(c.in_h);
    word(c.in_w);
    word(c.stages.len());
    for s in &c.stages {
        word(s.kernel);
        word(s.stride);
        word(s.out_channels);
        word(match s.activation {
            Activation::Relu => 0,
            Activation::Identity => 1,
        });
        word(s.pool as usize);
    }
    word(c.feature_dim);
    word(c.head.tracks);
    word(c.head.rows);
    word(c.head.cells);
    word(c.head.groups);
    for p in &params.params {
        out.extend_from_slice(&(p.name.len() as u16).to_le_bytes());
        out.extend_from_slice(p.name.as_bytes());
        out.push(p.value.shape().len() as u8);
        for &d in p.value.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in p.value.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    name: &'a str,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let s = self.bytes.get(self.pos..self.pos + n).ok_or_else(|| {
            Error::format(
                format!("{} (byte {})", self.name, self.pos),
                format!("truncated while reading {what}"),
            )
        })?;
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()) as usize)
    }

    fn bad(&self, msg: impl Into<String>) -> Error {
        Error::format(format!("{} (byte {})", self.name, self.pos), msg)
    }
}

pub fn decode_checkpoint(bytes: &[u8], name: &str) -> Result<ModelParams> {
    let mut r = Reader {
        bytes,
        pos: 0,
        name,
    };
    if r.take(6, "magic")? != CHECKPOINT_MAGIC {
        return Err(Error::format(
            format!("{name} (byte 0)"),
            "bad magic, not a checkpoint",
        ));
    }
    let version = u16::from_le_bytes(r.take(2, "version")?.try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(Error::Version {
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let channels = r.u32("channels")?;
    let in_h = r.u32("in_h")?;
    let in_w = r.u32("in_w")?;
    let n_stages = r.u32("stage count")?;
    if n_stages > 64 {
        return Err(r.bad(format!("implausible stage count {n_stages}")));
    }
    let mut stages = Vec::with_capacity(n_stages);
    for _ in 0..n_stages {
        let kernel = r.u32("kernel")?;
        let stride = r.u32("stride")?;
        let out_channels = r.u32("out channels")?;
        let activation = match r.u32("activation")? {
            0 => Activation::Relu,
            1 => Activation::Identity,
            a => return Err(r.bad(format!("unknown activation code {a}"))),
        };
        let pool = match r.u32("pool flag")? {
            0 => false,
            1 => true,
            p => return Err(r.bad(format!("bad pool flag {p}"))),
        };
        stages.push(StageConfig {
            kernel,
            stride,
            out_channels,
            activation,
            pool,
        });
    }
    let feature_dim = r.u32("feature dim")?;
    let tracks = r.u32("tracks")?;
    let rows = r.u32("rows")?;
    let cells = r.u32("cells")?;
    let groups = r.u32("groups")?;
    let config = ModelConfig {
        channels,
        in_h,
        in_w,
        stages,
        feature_dim,
        head: HeadShape {
            cells,
            rows,
            tracks,
            groups,
        },
    };
    config.validate().map_err(|e| r.bad(e.to_string()))?;
    let mut params = ModelParams::zeros(&config)?;
    for p in &mut params.params {
        let len = u16::from_le_bytes(r.take(2, "name length")?.try_into().unwrap()) as usize;
        let got = std::str::from_utf8(r.take(len, "name")?)
            .map_err(|_| r.bad("parameter name not UTF-8"))?;
        if got != p.name {
            return Err(r.bad(format!("expected parameter {}, found {got}", p.name)));
        }
        let rank = r.take(1, "rank")?[0] as usize;
        let dims = (0..rank)
            .map(|_| r.u32("dim"))
            .collect::<Result<Vec<_>>>()?;
        if dims != p.value.shape() {
            return Err(r.bad(format!(
                "{}: shape {dims:?}, expected {:?}",
                p.name,
                p.value.shape()
            )));
        }
        let raw = r.take(p.value.len() * 8, &p.name)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        p.value = Tensor::new(dims, data)?;
    }
    if r.pos != bytes.len() {
        return Err(r.bad(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(params)
}

pub fn save_checkpoint(path: &Path, params: &ModelParams) -> Result<()> {
    write_atomic(path, &encode_checkpoint(params))
}

pub fn load_checkpoint(path: &Path) -> Result<ModelParams> {
    decode_checkpoint(&read_bytes(path)?, &path.display().to_string())
}

fn config_diff(expected: &ModelConfig, found: &ModelConfig) -> Vec<String> {
    let mut diffs = Vec::new();
    let mut check = |name: &str, a: String, b: String| {
        if a != b {
            diffs.push(format!("{name}: expected {a}, found {b}"));
        }
    };
    check(
        "channels",
        expected.channels.to_string(),
        found.channels.to_string(),
    );
    check("in_h", expected.in_h.to_string(), found.in_h.to_string());
    check("in_w", expected.in_w.to_string(), found.in_w.to_string());
    check(
        "stages",
        format!("{:?}", expected.stages),
        format!("{:?}", found.stages),
    );
    check(
        "feature_dim",
        expected.feature_dim.to_string(),
        found.feature_dim.to_string(),
    );
    let (e, f) = (expected.head, found.head);
    check("C", e.tracks.to_string(), f.tracks.to_string());
    check("h", e.rows.to_string(), f.rows.to_string());
    check("w", e.cells.to_string(), f.cells.to_string());
    check("n", e.groups.to_string(), f.groups.to_string());
    diffs
}

/// Loads a checkpoint and fails with every differing config field when it
/// was trained under a different configuration.
pub fn load_checkpoint_expecting(path: &Path, expected: &ModelConfig) -> Result<ModelParams> {
    let params = load_checkpoint(path)?;
    let diffs = config_diff(expected, &params.config);
    if !diffs.is_empty() {
        return Err(Error::Input(format!(
            "checkpoint {} does not match the configured model: {}",
            path.display(),
            diffs.join("; ")
        )));
    }
    Ok(params)
}

/// The model's row and group counts must agree with the anchor file.
pub fn check_anchor_consistency(config: &ModelConfig, anchors: &AnchorSet) -> Result<()> {
    let mut diffs = Vec::new();
    if config.head.rows != anchors.h() {
        diffs.push(format!(
            "h: model {}, anchors {}",
            config.head.rows,
            anchors.h()
        ));
    }
    if config.head.groups != anchors.n() {
        diffs.push(format!(
            "n: model {}, anchors {}",
            config.head.groups,
            anchors.n()
        ));
    }
    if diffs.is_empty() {
        Ok(())
    } else {
        Err(Error::Input(format!(
            "model/anchor mismatch: {}",
            diffs.join("; ")
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::anchors::{AnchorGenSpec, Spacing};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small(rows: usize) -> ModelParams {
        let cfg = ModelConfig {
            channels: 1,
            in_h: 8,
            in_w: 8,
            stages: vec![
                StageConfig {
                    pool: true,
                    ..StageConfig::conv(3, 1, 2)
                },
                StageConfig {
                    activation: Activation::Identity,
                    ..StageConfig::conv(3, 2, 3)
                },
            ],
            feature_dim: 5,
            head: HeadShape {
                cells: 4,
                rows,
                tracks: 2,
                groups: 2,
            },
        };
        ModelParams::init(&cfg, &mut ChaCha8Rng::seed_from_u64(3)).unwrap()
    }

    #[test]
    fn bitwise_round_trip() {
        let p = small(3);
        let bytes = encode_checkpoint(&p);
        let back = decode_checkpoint(&bytes, "c").unwrap();
        assert_eq!(back.config, p.config);
        for (a, b) in back.params.iter().zip(&p.params) {
            assert_eq!(a.name, b.name);
            let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&a.value), bits(&b.value));
        }
        assert_eq!(encode_checkpoint(&back), bytes);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let bytes = encode_checkpoint(&small(3));
        let mut flipped = bytes.clone();
        flipped[0] ^= 0x20;
        assert!(matches!(
            decode_checkpoint(&flipped, "c"),
            Err(Error::Format { .. })
        ));

        let mut newer = bytes.clone();
        newer[6] = 2;
        assert!(matches!(
            decode_checkpoint(&newer, "c"),
            Err(Error::Version {
                found: 2,
                expected: 1
            })
        ));

        for cut in [3, 7, 20, bytes.len() / 2, bytes.len() - 1] {
            let err = decode_checkpoint(&bytes[..cut], "c").unwrap_err();
            assert!(matches!(err, Error::Format { .. }), "cut {cut}: {err}");
        }
        let mut long = bytes.clone();
        long.push(0);
        assert!(decode_checkpoint(&long, "c").is_err());
    }

    #[test]
    fn config_mismatch_lists_fields() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save_checkpoint(&path, &small(12)).unwrap();
        let mut other = small(9).config;
        other.feature_dim = 6;
        let msg = load_checkpoint_expecting(&path, &other)
            .unwrap_err()
            .to_string();
        assert!(msg.contains("h: expected 9, found 12"), "{msg}");
        assert!(msg.contains("feature_dim"), "{msg}");
        assert!(load_checkpoint_expecting(&path, &small(12).config).is_ok());
    }

    #[test]
    fn anchors_must_agree_with_head() {
        let p = small(12);
        let a9 = AnchorSet::generate(
            AnchorGenSpec::new(9, 2, 10.0, 40.0, 80.0).unwrap(),
            Spacing::Progressive,
        )
        .unwrap();
        let a12 = AnchorSet::generate(
            AnchorGenSpec::new(12, 2, 10.0, 40.0, 80.0).unwrap(),
            Spacing::Progressive,
        )
        .unwrap();
        assert!(check_anchor_consistency(&p.config, &a9).is_err());
        check_anchor_consistency(&p.config, &a12).unwrap();
    }
}
