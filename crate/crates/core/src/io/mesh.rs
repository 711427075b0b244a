//! Mesh correspondence files.
//!
//! Native format: whitespace-separated rows, `#` comments, an optional `# count N` header.
//! A combined file has six columns `x y z x' y' z'`; a single-state file has three. Legacy VTK
//! files (the `POINTS` block) are accepted as single-state input.

use crate::error::{Error, Result};
use crate::reconstruct::MeshPair;
use crate::Point;

/// Read an index-aligned pair, either from one combined file or from two single-state files.
pub fn read_mesh_pair(first: &str, deformed: Option<&str>) -> Result<MeshPair> {
    match deformed {
        None => {
            let rows = read_rows(first, 6)?;
            let (a, b) = rows
                .iter()
                .map(|r| (Point::new(r[0], r[1], r[2]), Point::new(r[3], r[4], r[5])))
                .unzip();
            MeshPair::new(a, b)
        }
        Some(second) => {
            let a = read_points(first)?;
            let b = read_points(second)?;
            if a.len() != b.len() {
                return Err(Error::Mesh {
                    line: 0,
                    message: format!(
                        "initial mesh has {} points, deformed mesh {}",
                        a.len(),
                        b.len()
                    ),
                });
            }
            MeshPair::new(a, b)
        }
    }
}

/// Points of a single-state file (native three-column table or legacy VTK).
pub fn read_points(text: &str) -> Result<Vec<Point>> {
    if text.trim_start().starts_with("# vtk DataFile") {
        return read_vtk_points(text);
    }
    Ok(read_rows(text, 3)?
        .iter()
        .map(|r| Point::new(r[0], r[1], r[2]))
        .collect())
}

fn read_rows(text: &str, cols: usize) -> Result<Vec<Vec<f64>>> {
    let mut rows = Vec::new();
    let mut declared = None;
    for (n, line) in text.lines().enumerate() {
        let lineno = n + 1;
        let line = line.trim();
        if let Some(comment) = line.strip_prefix('#') {
            let mut words = comment.split_whitespace();
            if words.next() == Some("count") {
                let c = words
                    .next()
                    .and_then(|w| w.parse::<usize>().ok())
                    .ok_or(Error::Mesh {
                        line: lineno,
                        message: "malformed count header".into(),
                    })?;
                declared = Some(c);
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let vals = line
            .split_whitespace()
            .map(|w| w.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Mesh {
                line: lineno,
                message: e.to_string(),
            })?;
        if vals.len() != cols {
            return Err(Error::Mesh {
                line: lineno,
                message: format!("expected {cols} values, found {}", vals.len()),
            });
        }
        if !vals.iter().all(|v| v.is_finite()) {
            return Err(Error::Mesh {
                line: lineno,
                message: "non-finite coordinate".into(),
            });
        }
        rows.push(vals);
    }
    if let Some(c) = declared {
        if c != rows.len() {
            return Err(Error::Mesh {
                line: 0,
                message: format!("header declares {c} rows, file has {}", rows.len()),
            });
        }
    }
    Ok(rows)
}

fn read_vtk_points(text: &str) -> Result<Vec<Point>> {
    let mut lines = text.lines().enumerate();
    let (n, start) = loop {
        let Some((k, line)) = lines.next() else {
            return Err(Error::Mesh {
                line: 0,
                message: "VTK file has no POINTS block".into(),
            });
        };
        let mut w = line.split_whitespace();
        if w.next() == Some("POINTS") {
            let n = w
                .next()
                .and_then(|s| s.parse::<usize>().ok())
                .ok_or(Error::Mesh {
                    line: k + 1,
                    message: "malformed POINTS header".into(),
                })?;
            break (n, k + 1);
        }
    };
    let mut vals = Vec::with_capacity(3 * n);
    for (k, line) in lines {
        for w in line.split_whitespace() {
            if vals.len() == 3 * n {
                break;
            }
            vals.push(w.parse::<f64>().map_err(|e| Error::Mesh {
                line: k + 1,
                message: e.to_string(),
            })?);
        }
        if vals.len() == 3 * n {
            break;
        }
    }
    if vals.len() < 3 * n {
        return Err(Error::Mesh {
            line: start,
            message: format!("POINTS declares {n} points, found {} values", vals.len()),
        });
    }
    Ok(vals
        .chunks(3)
        .map(|c| Point::new(c[0], c[1], c[2]))
        .collect())
}

fn real(x: f64) -> String {
    format!("{x:.16e}")
}

/// Combined six-column file with a count header; 17 significant digits make it lossless.
pub fn write_mesh_pair(mesh: &MeshPair, units: &str) -> String {
    let mut s = format!(
        "# cadrecon mesh pair: x y z x' y' z'\n# units {units}\n# count {}\n",
        mesh.len()
    );
    for (a, b) in mesh.initial().iter().zip(mesh.deformed()) {
        s += &format!(
            "{} {} {} {} {} {}\n",
            real(a.x),
            real(a.y),
            real(a.z),
            real(b.x),
            real(b.y),
            real(b.z)
        );
    }
    s
}

pub fn write_points(points: &[Point], units: &str) -> String {
    let mut s = format!("# units {units}\n# count {}\n", points.len());
    for p in points {
        s += &format!("{} {} {}\n", real(p.x), real(p.y), real(p.z));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_point_pair() {
        let text = "# count 3\n0 0 0 1 0 0\n1 0 0 2 0 0\n# note\n0 1 0 1 1 0\n";
        let m = read_mesh_pair(text, None).unwrap();
        assert_eq!(m.len(), 3);
        assert_eq!(m.deformed()[2], Point::new(1.0, 1.0, 0.0));
    }

    #[test]
    fn mismatches_are_errors() {
        assert!(read_mesh_pair("0 0 0\n1 1 1\n", Some("0 0 0\n")).is_err());
        assert!(read_mesh_pair("# count 2\n0 0 0 1 1 1\n", None).is_err());
        assert!(read_mesh_pair("0 0 0 1 1\n", None).is_err());
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let a = vec![
            Point::new(0.1, -1.0 / 3.0, 1e-17),
            Point::new(200.0, 5e300, -0.0),
        ];
        let b = vec![
            Point::new(std::f64::consts::PI, 2.0, 3.0),
            Point::new(1.0, 1.0 / 7.0, 0.0),
        ];
        let m = MeshPair::new(a, b).unwrap();
        let back = read_mesh_pair(&write_mesh_pair(&m, "mm"), None).unwrap();
        for (p, q) in m
            .initial()
            .iter()
            .chain(m.deformed())
            .zip(back.initial().iter().chain(back.deformed()))
        {
            for k in 0..3 {
                assert_eq!(p[k].to_bits(), q[k].to_bits());
            }
        }
        let sep = read_mesh_pair(
            &write_points(m.initial(), "mm"),
            Some(&write_points(m.deformed(), "mm")),
        )
        .unwrap();
        assert_eq!(sep, m);
    }

    #[test]
    fn vtk_points() {
        let text = "# vtk DataFile Version 3.0\nmesh\nASCII\nDATASET POLYDATA\nPOINTS 2 double\n0 0 0 1 2\n3\nPOLYGONS 0 0\n";
        let p = read_points(text).unwrap();
        assert_eq!(
            p,
            vec![Point::new(0.0, 0.0, 0.0), Point::new(1.0, 2.0, 3.0)]
        );
    }
}
