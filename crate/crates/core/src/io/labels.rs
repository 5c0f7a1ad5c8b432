//! Per-image track labels: one line per track, `track_index x0 y0 x1 y1 ...`
//! with y ascending. Values are written with three decimals.

use std::fmt::Write as _;
use std::path::Path;

use super::{read_text, write_atomic};
use crate::codec::{Point, Polyline};
use crate::error::{Error, Result};

pub fn parse_labels(text: &str, name: &str) -> Result<Vec<Polyline>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let loc = || format!("{name}:{lineno}");
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        let track_index: usize = fields[0]
            .parse()
            .map_err(|_| Error::format(loc(), format!("bad track index {:?}", fields[0])))?;
        let coords = &fields[1..];
        if !coords.len().is_multiple_of(2) {
            return Err(Error::format(loc(), "odd number of coordinates"));
        }
        if coords.len() < 4 {
            return Err(Error::format(loc(), "a track needs at least two vertices"));
        }
        let mut vertices = Vec::with_capacity(coords.len() / 2);
        for pair in coords.chunks(2) {
            let num = |s: &str| -> Result<f64> {
                s.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::format(loc(), format!("bad coordinate {s:?}")))
            };
            let p = Point::new(num(pair[0])?, num(pair[1])?);
            if let Some(prev) = vertices.last().map(|q: &Point| q.y) {
                if p.y <= prev {
                    return Err(Error::format(
                        loc(),
                        format!("y not strictly increasing ({} after {prev})", p.y),
                    ));
                }
            }
            vertices.push(p);
        }
        if out.iter().any(|t: &Polyline| t.track_index == track_index) {
            return Err(Error::format(
                loc(),
                format!("duplicate track index {track_index}"),
            ));
        }
        out.push(
            Polyline::new(track_index, vertices)
                .map_err(|e| Error::format(loc(), e.to_string()))?,
        );
    }
    Ok(out)
}

pub fn format_labels(tracks: &[Polyline]) -> String {
    let mut s = String::new();
    for t in tracks {
        write!(s, "{}", t.track_index).unwrap();
        for v in &t.vertices {
            write!(s, " {:.3} {:.3}", v.x, v.y).unwrap();
        }
        s.push('\n');
    }
    s
}

pub fn read_labels(path: &Path) -> Result<Vec<Polyline>> {
    parse_labels(&read_text(path)?, &path.display().to_string())
}

pub fn write_labels(path: &Path, tracks: &[Polyline]) -> Result<()> {
    write_atomic(path, format_labels(tracks).as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn one_track_three_vertices() {
        let t = Polyline::new(
            1,
            vec![
                Point::new(10.0, 5.0),
                Point::new(12.5, 6.25),
                Point::new(15.0, 9.0),
            ],
        )
        .unwrap();
        let text = format_labels(std::slice::from_ref(&t));
        assert_eq!(text.lines().count(), 1);
        assert_eq!(text.split_whitespace().count(), 7);
        assert_eq!(parse_labels(&text, "t").unwrap(), vec![t]);
    }

    #[test]
    fn empty_file_has_no_tracks() {
        assert!(parse_labels("", "t").unwrap().is_empty());
        assert!(parse_labels("\n\n", "t").unwrap().is_empty());
    }

    #[test]
    fn decreasing_y_names_the_line() {
        let err = parse_labels("0 1 1 2 2\n1 5 10 6 8\n", "lab.txt").unwrap_err();
        assert!(matches!(err, Error::Format { .. }));
        assert!(err.to_string().contains("lab.txt:2"), "{err}");
    }

    #[test]
    fn malformed_lines() {
        for bad in [
            "x 1 2 3 4",
            "0 1 2 3",
            "0 1 2",
            "0 1 nan 2 3",
            "0 1 1 2 2\n0 1 3 2 4",
        ] {
            assert!(parse_labels(bad, "t").is_err(), "{bad}");
        }
    }

    proptest! {
        #[test]
        fn round_trip_at_three_decimals(
            xs in proptest::collection::vec(0u32..320_000, 2..12),
            start in 0u32..10_000,
            steps in proptest::collection::vec(1u32..5_000, 11),
        ) {
            let mut y = start;
            let vertices: Vec<Point> = xs.iter().zip(&steps).map(|(&x, &dy)| {
                y += dy;
                Point::new(x as f64 / 1000.0, y as f64 / 1000.0)
            }).collect();
            let t = vec![Polyline::new(0, vertices).unwrap()];
            let text = format_labels(&t);
            let back = parse_labels(&text, "t").unwrap();
            prop_assert_eq!(&back, &t);
            prop_assert_eq!(format_labels(&back), text);
        }
    }
}
