//! Synthetic test cases: a plate with a cylindrical hole modelled by untrimmed bicubic
//! splines, a structured mesh on it, and deformation presets.

use std::f64::consts::PI;

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::iges::{directory_lines, parameter_lines};
use crate::reconstruct::{prescribed_deformation, Entity, GeometryModel, TopologyRecord};
use crate::spline::{elevate_degree_by, KnotVector, Spline};
use crate::{Point, Vector};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlateParams {
    pub length: f64,
    pub width: f64,
    pub thickness: f64,
    pub hole_diameter: f64,
    /// Mesh samples per loop piece along the hole (ten pieces per loop).
    pub samples_per_piece: usize,
    /// Mesh samples from the hole to the outer boundary.
    pub radial_samples: usize,
}

impl Default for PlateParams {
    fn default() -> Self {
        PlateParams {
            length: 200.0,
            width: 100.0,
            thickness: 1.5,
            hole_diameter: 50.0,
            samples_per_piece: 12,
            radial_samples: 14,
        }
    }
}

pub struct PlateCase {
    pub model: GeometryModel,
    pub mesh: Vec<Point>,
}

/// One piece of the loop around the hole: an arc of the hole and the matching straight piece
/// of the outer boundary, both over `[u0, u1]` with `u = θ / 2π`.
struct Piece {
    t0: f64,
    t1: f64,
}

fn loop_pieces(p: &PlateParams) -> Vec<Piece> {
    let corner = (p.width / 2.0).atan2(p.length / 2.0);
    let bounds = [
        0.0,
        corner,
        PI - corner,
        PI,
        PI + corner,
        2.0 * PI - corner,
        2.0 * PI,
    ];
    let mut out = Vec::new();
    for w in bounds.windows(2) {
        let n = ((w[1] - w[0]) / (PI / 4.0)).ceil().max(1.0) as usize;
        for k in 0..n {
            out.push(Piece {
                t0: w[0] + (w[1] - w[0]) * k as f64 / n as f64,
                t1: w[0] + (w[1] - w[0]) * (k + 1) as f64 / n as f64,
            });
        }
    }
    out
}

fn center(p: &PlateParams) -> (f64, f64) {
    (p.length / 2.0, p.width / 2.0)
}

/// Cubic Bézier arc of the hole between angles `a` and `b` at height `z`.
fn arc(p: &PlateParams, a: f64, b: f64, z: f64) -> [Point; 4] {
    let (cx, cy) = center(p);
    let r = p.hole_diameter / 2.0;
    let h = 4.0 / 3.0 * ((b - a) / 4.0).tan() * r;
    let at = |t: f64| Point::new(cx + r * t.cos(), cy + r * t.sin(), z);
    let tan = |t: f64| Vector::new(-t.sin(), t.cos(), 0.0);
    [at(a), at(a) + tan(a) * h, at(b) - tan(b) * h, at(b)]
}

/// Where the ray from the hole center at angle `t` leaves the plate.
fn outer(p: &PlateParams, t: f64, z: f64) -> Point {
    let (cx, cy) = center(p);
    let (c, s) = (t.cos(), t.sin());
    let sx = if c.abs() > 1e-15 {
        (p.length / 2.0) / c.abs()
    } else {
        f64::INFINITY
    };
    let sy = if s.abs() > 1e-15 {
        (p.width / 2.0) / s.abs()
    } else {
        f64::INFINITY
    };
    let d = sx.min(sy);
    let snap = |v: f64, lo: f64, hi: f64| {
        if (v - lo).abs() < 1e-12 * hi {
            lo
        } else if (v - hi).abs() < 1e-12 * hi {
            hi
        } else {
            v
        }
    };
    Point::new(
        snap(cx + d * c, 0.0, p.length),
        snap(cy + d * s, 0.0, p.width),
        z,
    )
}

fn straight(a: Point, b: Point) -> [Point; 4] {
    [a, a + (b - a) / 3.0, a + (b - a) * (2.0 / 3.0), b]
}

/// Piecewise cubic knot vector with triple interior knots at the piece boundaries.
fn piece_knots(pieces: &[Piece]) -> Result<KnotVector> {
    let u = |t: f64| t / (2.0 * PI);
    let mut breaks = vec![(u(pieces[0].t0), 4)];
    for pc in &pieces[..pieces.len() - 1] {
        breaks.push((u(pc.t1), 3));
    }
    breaks.push((u(pieces[pieces.len() - 1].t1), 4));
    KnotVector::from_breakpoints(3, &breaks)
}

fn chain(pieces: &[Piece], f: impl Fn(&Piece) -> [Point; 4]) -> Vec<Point> {
    let mut pts = Vec::with_capacity(3 * pieces.len() + 1);
    for (k, pc) in pieces.iter().enumerate() {
        let b = f(pc);
        pts.extend_from_slice(if k == 0 { &b[..] } else { &b[1..] });
    }
    pts
}

/// Ruled surface between two rows over the same knot vector, elevated to cubic across.
fn ruled(kv: KnotVector, lower: Vec<Point>, upper: Vec<Point>) -> Result<Spline> {
    let mut cps = lower;
    cps.extend(upper);
    let s = Spline::surface(kv, KnotVector::bezier(1, 0.0, 1.0)?, cps, None)?;
    elevate_degree_by(&s, 1, 2)
}

fn line(a: Point, b: Point) -> Result<Spline> {
    Spline::curve(KnotVector::bezier(1, 0.0, 1.0)?, vec![a, b], None)
}

fn quad(a: Point, b: Point, c: Point, d: Point) -> Result<Spline> {
    let kv = KnotVector::bezier(1, 0.0, 1.0)?;
    let s = Spline::surface(kv.clone(), kv, vec![a, b, c, d], None)?;
    elevate_degree_by(&elevate_degree_by(&s, 0, 2)?, 1, 2)
}

fn link(id: usize, surface: usize, curve: usize) -> TopologyRecord {
    TopologyRecord {
        id,
        entity_type: 142,
        directory: directory_lines(142, 0, "00000000"),
        parameters: parameter_lines(&format!("142,1,{surface},0,{curve},2;"), ',', ';'),
    }
}

/// Plate with a through hole: top and bottom faces (each one untrimmed bicubic patch around
/// the hole, seam at angle zero), four side faces, two half-cylinders for the hole wall, and
/// the 18 edge curves. Curve ownership is recorded as curve-on-surface links. The mesh
/// samples the top and bottom faces on a structured grid (points on the side faces and the
/// hole wall are the face boundary samples).
pub fn plate(p: &PlateParams) -> Result<PlateCase> {
    let positive = [p.length, p.width, p.thickness, p.hole_diameter]
        .iter()
        .all(|v| *v > 0.0 && v.is_finite());
    if !positive
        || p.hole_diameter >= p.length.min(p.width)
        || p.samples_per_piece < 1
        || p.radial_samples < 2
    {
        return Err(Error::Model(format!(
            "invalid plate dimensions: {}×{}×{} with hole {} (the hole must fit inside the plate)",
            p.length, p.width, p.thickness, p.hole_diameter
        )));
    }
    let (l, w, t) = (p.length, p.width, p.thickness);
    let pieces = loop_pieces(p);
    let half = pieces
        .iter()
        .position(|pc| (pc.t0 - PI).abs() < 1e-12)
        .expect("piece boundary at π");
    let kv = piece_knots(&pieces)?;

    let face = |z: f64| {
        ruled(
            kv.clone(),
            chain(&pieces, |pc| arc(p, pc.t0, pc.t1, z)),
            chain(&pieces, |pc| {
                straight(outer(p, pc.t0, z), outer(p, pc.t1, z))
            }),
        )
    };
    let wall = |part: &[Piece]| {
        ruled(
            piece_knots(part)?,
            chain(part, |pc| arc(p, pc.t0, pc.t1, 0.0)),
            chain(part, |pc| arc(p, pc.t0, pc.t1, t)),
        )
    };
    let c = |x: f64, y: f64, z: f64| Point::new(x, y, z);
    let surfaces = vec![
        face(t)?,
        face(0.0)?,
        quad(c(0., 0., 0.), c(l, 0., 0.), c(0., 0., t), c(l, 0., t))?,
        quad(c(l, 0., 0.), c(l, w, 0.), c(l, 0., t), c(l, w, t))?,
        quad(c(l, w, 0.), c(0., w, 0.), c(l, w, t), c(0., w, t))?,
        quad(c(0., w, 0.), c(0., 0., 0.), c(0., w, t), c(0., 0., t))?,
        wall(&pieces[..half])?,
        wall(&pieces[half..])?,
    ];
    let (top, bottom, sides, cyl) = (1usize, 3usize, [5usize, 7, 9, 11], [13usize, 15]);

    let corners = [c(0., 0., 0.), c(l, 0., 0.), c(l, w, 0.), c(0., w, 0.)];
    let lift = |q: Point| c(q.x, q.y, t);
    let mut curves: Vec<(Spline, Vec<usize>)> = Vec::new();
    for k in 0..4 {
        let (a, b) = (corners[k], corners[(k + 1) % 4]);
        curves.push((line(lift(a), lift(b))?, vec![top, sides[k]]));
        curves.push((line(a, b)?, vec![bottom, sides[k]]));
        curves.push((line(a, lift(a))?, vec![sides[(k + 3) % 4], sides[k]]));
    }
    for (k, part) in [&pieces[..half], &pieces[half..]].into_iter().enumerate() {
        let pk = piece_knots(part)?;
        curves.push((
            Spline::curve(pk.clone(), chain(part, |pc| arc(p, pc.t0, pc.t1, t)), None)?,
            vec![top, cyl[k]],
        ));
        curves.push((
            Spline::curve(pk, chain(part, |pc| arc(p, pc.t0, pc.t1, 0.0)), None)?,
            vec![bottom, cyl[k]],
        ));
    }
    let r = p.hole_diameter / 2.0;
    let (cx, cy) = center(p);
    for x in [cx + r, cx - r] {
        curves.push((line(c(x, cy, 0.0), c(x, cy, t))?, vec![cyl[0], cyl[1]]));
    }

    let mut entities = Vec::new();
    let mut next = 1;
    for s in surfaces {
        entities.push(Entity::new(next, s)?);
        next += 2;
    }
    let mut topology = Vec::new();
    let mut links = Vec::new();
    for (s, owners) in curves {
        for &o in &owners {
            links.push((o, next));
        }
        entities.push(Entity::new(next, s)?.with_owners(owners));
        next += 2;
    }
    for (surface, curve) in links {
        topology.push(link(next, surface, curve));
        next += 2;
    }
    let model = GeometryModel::new(entities, topology)?;

    let mut us = Vec::new();
    for pc in &pieces {
        for k in 0..p.samples_per_piece {
            us.push((pc.t0 + (pc.t1 - pc.t0) * k as f64 / p.samples_per_piece as f64) / (2.0 * PI));
        }
    }
    let mut mesh = Vec::with_capacity(2 * us.len() * p.radial_samples);
    for id in [top, bottom] {
        let s = &model.entity(id).expect("face").spline;
        for j in 0..p.radial_samples {
            let v = j as f64 / (p.radial_samples - 1) as f64;
            for &u in &us {
                mesh.push(s.evaluate(&[u, v])?);
            }
        }
    }
    Ok(PlateCase { model, mesh })
}

/// Regular `n[0] × n[1] × n[2]` grid filling the box `[0, size]`.
pub fn grid_points(n: [usize; 3], size: [f64; 3]) -> Result<Vec<Point>> {
    if n.iter().any(|&k| k < 2) || size.iter().any(|s| !(*s > 0.0)) {
        return Err(Error::Model(format!("invalid grid {n:?} over {size:?}")));
    }
    let mut pts = Vec::with_capacity(n[0] * n[1] * n[2]);
    for k in 0..n[2] {
        for j in 0..n[1] {
            for i in 0..n[0] {
                pts.push(Point::new(
                    size[0] * i as f64 / (n[0] - 1) as f64,
                    size[1] * j as f64 / (n[1] - 1) as f64,
                    size[2] * k as f64 / (n[2] - 1) as f64,
                ));
            }
        }
    }
    Ok(pts)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Deformation {
    Identity,
    /// Radial push away from the centroid with strength `c`.
    Prescribed {
        c: f64,
    },
    Affine {
        matrix: Matrix3<f64>,
        translation: Vector,
    },
    /// Smooth mock bending: cosine bend along x with a linear twist and a small ripple, scaled
    /// so the largest vertical deflection is `deflection`; thickness fibres rotate with the
    /// mid-surface.
    Bending {
        deflection: f64,
    },
}

impl Deformation {
    pub fn apply(&self, points: &[Point]) -> Vec<Point> {
        match self {
            Deformation::Identity => points.to_vec(),
            Deformation::Prescribed { c } => prescribed_deformation(points, *c),
            Deformation::Affine {
                matrix,
                translation,
            } => points
                .iter()
                .map(|p| Point::from(matrix * p.coords + translation))
                .collect(),
            Deformation::Bending { deflection } => bend(points, *deflection),
        }
    }
}

const TWIST: f64 = 0.2;
const RIPPLE: f64 = 0.05;

/// Raw deflection shape on the unit square: a cosine bend along x, a linear twist along y and
/// a small full-period ripple. Returns the value and its derivatives in ξ and η.
fn bend_shape(xi: f64, eta: f64) -> (f64, f64, f64) {
    let b = 1.0 - (PI * xi / 2.0).cos();
    let bx = PI / 2.0 * (PI * xi / 2.0).sin();
    let g = 1.0 + TWIST * (eta - 0.5);
    let r = (2.0 * PI * xi).sin() * (PI * eta).sin();
    let rx = 2.0 * PI * (2.0 * PI * xi).cos() * (PI * eta).sin();
    let ry = PI * (2.0 * PI * xi).sin() * (PI * eta).cos();
    (
        b * g + RIPPLE * r,
        bx * g + RIPPLE * rx,
        b * TWIST + RIPPLE * ry,
    )
}

fn bend(points: &[Point], d: f64) -> Vec<Point> {
    if points.is_empty() {
        return Vec::new();
    }
    let mut lo = points[0];
    let mut hi = points[0];
    for p in points {
        for k in 0..3 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    let lx = (hi.x - lo.x).max(f64::MIN_POSITIVE);
    let ly = (hi.y - lo.y).max(f64::MIN_POSITIVE);
    let mid = 0.5 * (lo.z + hi.z);
    let unit = |p: &Point| ((p.x - lo.x) / lx, (p.y - lo.y) / ly);
    // Scale so the largest deflection over the given points is exactly `d`.
    let peak = points
        .iter()
        .map(|p| {
            let (xi, eta) = unit(p);
            bend_shape(xi, eta).0.abs()
        })
        .fold(0.0, f64::max);
    if peak == 0.0 {
        return points.to_vec();
    }
    let scale = d / peak;
    points
        .iter()
        .map(|p| {
            let (xi, eta) = unit(p);
            let (w, wx, wy) = bend_shape(xi, eta);
            let zeta = p.z - mid;
            Point::new(
                p.x - zeta * scale * wx / lx,
                p.y - zeta * scale * wy / ly,
                p.z + scale * w,
            )
        })
        .collect()
}
