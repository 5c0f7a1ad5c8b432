//! Anchor file: a header line `h n H_anchor y_min y_max` followed by one
//! line of `h` row coordinates per group.

use std::fmt::Write as _;
use std::path::Path;

use super::{read_text, write_atomic};
use crate::anchors::{AnchorGenSpec, AnchorGroup, AnchorSet};
use crate::error::{Error, Result};

pub fn format_anchors(set: &AnchorSet) -> String {
    let s = &set.spec;
    let mut out = format!(
        "{} {} {:.6} {:.6} {:.6}\n",
        s.h, s.n, s.h_anchor, s.y_min, s.y_max
    );
    for g in &set.groups {
        let rows: Vec<String> = g.rows.iter().map(|r| format!("{r:.6}")).collect();
        writeln!(out, "{}", rows.join(" ")).unwrap();
    }
    out
}

/// Parses an anchor file. Rows are taken as written, so both progressive and
/// equidistant sets load the same way.
pub fn parse_anchors(text: &str, name: &str) -> Result<AnchorSet> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::format(name, "empty anchor file"))?;
    let hf: Vec<&str> = header.split_whitespace().collect();
    let loc1 = format!("{name}:1");
    if hf.len() != 5 {
        return Err(Error::format(
            loc1,
            "header needs `h n H_anchor y_min y_max`",
        ));
    }
    let int = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| Error::format(&loc1, format!("bad integer {s:?}")))
    };
    let real = |s: &str| {
        s.parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| Error::format(&loc1, format!("bad number {s:?}")))
    };
    let spec = AnchorGenSpec {
        h: int(hf[0])?,
        n: int(hf[1])?,
        h_anchor: real(hf[2])?,
        y_min: real(hf[3])?,
        y_max: real(hf[4])?,
    };
    spec.validate()
        .map_err(|e| Error::format(&loc1, e.to_string()))?;
    let mut groups = Vec::with_capacity(spec.n);
    for (i, line) in lines {
        let loc = format!("{name}:{}", i + 1);
        if groups.len() == spec.n {
            return Err(Error::format(
                loc,
                format!("more than {} group lines", spec.n),
            ));
        }
        let rows = line
            .split_whitespace()
            .map(|s| {
                s.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::format(&loc, format!("bad row {s:?}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        if rows.len() != spec.h {
            return Err(Error::format(
                loc,
                format!("expected {} rows, found {}", spec.h, rows.len()),
            ));
        }
        if rows.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::format(loc, "rows must be strictly increasing"));
        }
        groups.push(AnchorGroup {
            k: groups.len(),
            start: rows[0],
            rows,
        });
    }
    if groups.len() != spec.n {
        return Err(Error::format(
            name,
            format!("expected {} group lines, found {}", spec.n, groups.len()),
        ));
    }
    Ok(AnchorSet { spec, groups })
}

pub fn read_anchors(path: &Path) -> Result<AnchorSet> {
    parse_anchors(&read_text(path)?, &path.display().to_string())
}

pub fn write_anchors(path: &Path, set: &AnchorSet) -> Result<()> {
    write_atomic(path, format_anchors(set).as_bytes())
}
