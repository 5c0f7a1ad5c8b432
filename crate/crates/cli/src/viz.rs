//! Overlay images and the F1-vs-threshold figure.

use std::fmt::Write as _;

use ufatd_core::io::Raster;
use ufatd_core::{AnchorSet, Polyline};

const GT: [u8; 3] = [40, 200, 60];
const PRED: [u8; 3] = [240, 40, 40];
const TICK_ACTIVE: [u8; 3] = [255, 220, 0];
const TICK: [u8; 3] = [90, 140, 255];

fn put(img: &mut Raster, x: i64, y: i64, rgb: [u8; 3]) {
    if x < 0 || y < 0 || x >= img.width as i64 || y >= img.height as i64 {
        return;
    }
    let i = (y as usize * img.width + x as usize) * 3;
    img.data[i..i + 3].copy_from_slice(&rgb);
}

fn draw_polyline(img: &mut Raster, p: &Polyline, rgb: [u8; 3], half: i64) {
    for seg in p.vertices.windows(2) {
        let (a, b) = (seg[0], seg[1]);
        let steps = (b.x - a.x).abs().max(b.y - a.y).ceil().max(1.0) as usize;
        for s in 0..=steps {
            let t = s as f64 / steps as f64;
            let x = (a.x + t * (b.x - a.x)).round() as i64;
            let y = (a.y + t * (b.y - a.y)).round() as i64;
            for dx in -half..=half {
                put(img, x + dx, y, rgb);
            }
        }
    }
}

/// The input in colour with ground truth (green, wide), predictions (red,
/// thin) and one column of row ticks per anchor group along the left edge.
/// Ticks of the selected group are yellow.
pub fn overlay(
    image: &Raster,
    gts: &[Polyline],
    preds: &[Polyline],
    anchors: &AnchorSet,
    selected: usize,
) -> Raster {
    let mut out = image.to_rgb();
    for g in gts {
        draw_polyline(&mut out, g, GT, 1);
    }
    for p in preds {
        draw_polyline(&mut out, p, PRED, 0);
    }
    for (k, group) in anchors.groups.iter().enumerate() {
        let colour = if k == selected { TICK_ACTIVE } else { TICK };
        let x0 = 2 + 6 * k as i64;
        for &y in &group.rows {
            for x in x0..x0 + 4 {
                put(&mut out, x, y.round() as i64, colour);
            }
        }
    }
    out
}

/// Line chart of `(tau, f1)` with both axes on `[0, 1]` (tau axis spans the
/// given thresholds).
pub fn f1_curve_svg(points: &[(f64, f64)]) -> String {
    let (w, h, m) = (480.0, 320.0, 48.0);
    let lo = points.first().map_or(0.5, |p| p.0);
    let hi = points.last().map_or(1.0, |p| p.0).max(lo + 1e-9);
    let px = |t: f64| m + (t - lo) / (hi - lo) * (w - 2.0 * m);
    let py = |f: f64| h - m - f * (h - 2.0 * m);

    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    )
    .unwrap();
    writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#).unwrap();
    writeln!(
        s,
        r#"<path d="M{m} {m} V{} H{}" fill="none" stroke="black"/>"#,
        h - m,
        w - m
    )
    .unwrap();
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        writeln!(
            s,
            r#"<text x="{}" y="{:.1}" font-size="11" text-anchor="end">{f:.2}</text>"#,
            m - 6.0,
            py(f) + 4.0
        )
        .unwrap();
    }
    for &(t, _) in points {
        writeln!(
            s,
            r#"<text x="{:.1}" y="{}" font-size="11" text-anchor="middle">{t:.2}</text>"#,
            px(t),
            h - m + 16.0
        )
        .unwrap();
    }
    writeln!(
        s,
        r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">IoU threshold</text>"#,
        w / 2.0,
        h - 10.0
    )
    .unwrap();
    writeln!(s, r#"<text x="14" y="{}" font-size="12" transform="rotate(-90 14 {})" text-anchor="middle">F1</text>"#, h / 2.0, h / 2.0).unwrap();
    let path: Vec<String> = points
        .iter()
        .map(|&(t, f)| format!("{:.1},{:.1}", px(t), py(f)))
        .collect();
    writeln!(
        s,
        r##"<polyline points="{}" fill="none" stroke="#c0392b" stroke-width="2"/>"##,
        path.join(" ")
    )
    .unwrap();
    for &(t, f) in points {
        writeln!(
            s,
            r##"<circle cx="{:.1}" cy="{:.1}" r="3" fill="#c0392b"/>"##,
            px(t),
            py(f)
        )
        .unwrap();
    }
    s.push_str("</svg>\n");
    s
}
