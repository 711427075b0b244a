#![allow(dead_code)]

use cadrecon::spline::{KnotVector, ParametricPoint, Spline};
use cadrecon::Point;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub use rand::SeedableRng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Clamped knot vector on `[lo, hi]` with up to `max_interior` distinct interior knots of
/// random multiplicity (at most the degree).
pub fn random_knots(
    rng: &mut ChaCha8Rng,
    degree: usize,
    max_interior: usize,
    lo: f64,
    hi: f64,
) -> KnotVector {
    let n = rng.gen_range(0..=max_interior);
    let mut interior: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..0.95)).collect();
    interior.sort_by(|a, b| a.partial_cmp(b).unwrap());
    interior.dedup_by(|a, b| (*a - *b).abs() < 0.02);
    let mut knots = vec![lo; degree + 1];
    for t in interior {
        let m = rng.gen_range(1..=degree);
        knots.extend(std::iter::repeat_n(lo + (hi - lo) * t, m));
    }
    knots.extend(std::iter::repeat_n(hi, degree + 1));
    KnotVector::new(degree, knots).unwrap()
}

/// Random spline with `dim` parametric directions, degrees in `1..=max_degree`, control
/// points in the unit cube and (optionally) weights in `[0.5, 2]`.
pub fn random_spline(
    rng: &mut ChaCha8Rng,
    dim: usize,
    max_degree: usize,
    rational: bool,
) -> Spline {
    let bases: Vec<KnotVector> = (0..dim)
        .map(|_| {
            let p = rng.gen_range(1..=max_degree);
            let lo = rng.gen_range(-2.0..1.0);
            let hi = lo + rng.gen_range(0.5..3.0);
            random_knots(rng, p, 3, lo, hi)
        })
        .collect();
    let n: usize = bases.iter().map(|b| b.num_basis()).product();
    let cps = (0..n).map(|_| random_point(rng)).collect();
    let weights = rational.then(|| (0..n).map(|_| rng.gen_range(0.5..2.0)).collect());
    Spline::new(bases, cps, weights).unwrap()
}

pub fn random_point(rng: &mut ChaCha8Rng) -> Point {
    Point::new(
        rng.gen_range(-1.0..1.0),
        rng.gen_range(-1.0..1.0),
        rng.gen_range(-1.0..1.0),
    )
}

pub fn random_param(rng: &mut ChaCha8Rng, s: &Spline) -> ParametricPoint {
    let coords: Vec<f64> = (0..s.param_dim())
        .map(|d| {
            let (lo, hi) = s.domain(d);
            // Hit the ends and knots now and then.
            match rng.gen_range(0..10) {
                0 => lo,
                1 => hi,
                2 => {
                    let k = s.knot_vector(d).knots();
                    k[rng.gen_range(0..k.len())]
                }
                _ => rng.gen_range(lo..=hi),
            }
        })
        .collect();
    ParametricPoint::new(&coords)
}

/// Textbook Cox–de Boor recursion, with the last non-empty span closed on the right.
pub fn cox_de_boor(knots: &[f64], i: usize, p: usize, u: f64) -> f64 {
    if p == 0 {
        let (a, b) = (knots[i], knots[i + 1]);
        let last = *knots.last().unwrap();
        return if a < b && (a <= u && u < b || u == last && b == last) {
            1.0
        } else {
            0.0
        };
    }
    let mut v = 0.0;
    let d1 = knots[i + p] - knots[i];
    if d1 > 0.0 {
        v += (u - knots[i]) / d1 * cox_de_boor(knots, i, p - 1, u);
    }
    let d2 = knots[i + p + 1] - knots[i + 1];
    if d2 > 0.0 {
        v += (knots[i + p + 1] - u) / d2 * cox_de_boor(knots, i + 1, p - 1, u);
    }
    v
}

/// Brute-force evaluation: every tensor-product basis function, weights applied explicitly.
pub fn oracle_evaluate(s: &Spline, u: &[f64]) -> Point {
    let per_dir: Vec<Vec<f64>> = (0..s.param_dim())
        .map(|d| {
            let kv = s.knot_vector(d);
            (0..kv.num_basis())
                .map(|i| cox_de_boor(kv.knots(), i, kv.degree(), u[d]))
                .collect()
        })
        .collect();
    let mut num = nalgebra::Vector3::zeros();
    let mut den = 0.0;
    for (flat, p) in s.control_points().iter().enumerate() {
        let idx = s.multi_index(flat);
        let b: f64 = idx
            .iter()
            .enumerate()
            .map(|(d, &i)| per_dir[d][i])
            .product();
        let w = s.weight(flat);
        num += p.coords * (b * w);
        den += b * w;
    }
    Point::from(num / den)
}

/// Largest distance between two splines over a regular grid of their (shared) domain.
pub fn grid_deviation(a: &Spline, b: &Spline, per_dir: usize) -> f64 {
    a.sample_grid(per_dir)
        .iter()
        .map(|u| (a.evaluate(u).unwrap() - b.evaluate(u).unwrap()).norm())
        .fold(0.0, f64::max)
}

/// Trivariate Bézier volume that is the identity on `[lo, hi]^3`, with a smooth perturbation
/// of relative size `amp` added to the control points.
pub fn perturbed_volume(
    rng: &mut ChaCha8Rng,
    deg: [usize; 3],
    lo: f64,
    hi: f64,
    amp: f64,
) -> Spline {
    let t = cadrecon::reconstruct::identity_trivariate([lo; 3], [hi; 3], deg).unwrap();
    let cps = t
        .control_points()
        .iter()
        .map(|p| {
            p + nalgebra::Vector3::new(
                rng.gen_range(-amp..amp),
                rng.gen_range(-amp..amp),
                rng.gen_range(-amp..amp),
            )
        })
        .collect();
    t.with_control_points(cps).unwrap()
}

/// Unit sphere as a rational biquadratic surface (nine-point circle swept along a meridian).
pub fn sphere() -> Spline {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let meridian = [
        (0.0, -1.0, 1.0),
        (1.0, -1.0, h),
        (1.0, 0.0, 1.0),
        (1.0, 1.0, h),
        (0.0, 1.0, 1.0),
    ];
    let circle = [
        (1.0, 0.0, 1.0),
        (1.0, 1.0, h),
        (0.0, 1.0, 1.0),
        (-1.0, 1.0, h),
        (-1.0, 0.0, 1.0),
        (-1.0, -1.0, h),
        (0.0, -1.0, 1.0),
        (1.0, -1.0, h),
        (1.0, 0.0, 1.0),
    ];
    let mut cps = Vec::new();
    let mut w = Vec::new();
    for &(r, z, wm) in &meridian {
        for &(cx, cy, wc) in &circle {
            cps.push(Point::new(r * cx, r * cy, z));
            w.push(wm * wc);
        }
    }
    let u = KnotVector::new(
        2,
        vec![0., 0., 0., 0.25, 0.25, 0.5, 0.5, 0.75, 0.75, 1., 1., 1.],
    )
    .unwrap();
    let v = KnotVector::new(2, vec![0., 0., 0., 0.5, 0.5, 1., 1., 1.]).unwrap();
    Spline::surface(u, v, cps, Some(w)).unwrap()
}

/// Random IGES file: curves and surfaces (some rational, some with large coordinates so the
/// parameter data spans many continuation lines), a few parameter-space curves, curve-on-surface
/// links and a Latin-1 name property, written with the given delimiters.
pub fn iges_corpus_file(seed: u64, pd: char, rd: char) -> Vec<u8> {
    use cadrecon::io::iges::{directory_lines, parameter_lines};
    use cadrecon::io::{write_iges, IgesDocument};
    use cadrecon::reconstruct::{Entity, GeometryModel, TopologyRecord};

    let mut r = rng(seed);
    let mut entities = Vec::new();
    let mut topology = Vec::new();
    let mut id = 1;
    let surfaces = r.gen_range(1..=3);
    for _ in 0..surfaces {
        let scale = 10f64.powi(r.gen_range(-3..=4));
        let rational = r.gen_bool(0.5);
        let s = random_spline(&mut r, 2, 4, rational).map_control_points(|p| p * scale);
        entities.push(Entity::new(id, s).unwrap());
        id += 2;
    }
    for _ in 0..r.gen_range(1..=4) {
        let rational = r.gen_bool(0.5);
        let s = random_spline(&mut r, 1, 5, rational);
        let surface = 2 * r.gen_range(0..surfaces) + 1;
        let planar = r.gen_bool(0.3);
        let s = if planar {
            s.map_control_points(|p| Point::new(p.x, p.y, 0.0))
        } else {
            s
        };
        let mut e = Entity::new(id, s).unwrap();
        e.parametric_space = planar;
        entities.push(e);
        let text = if planar {
            format!("142{pd}1{pd}{surface}{pd}{id}{pd}0{pd}2{rd}")
        } else {
            format!("142{pd}1{pd}{surface}{pd}0{pd}{id}{pd}2{rd}")
        };
        topology.push(TopologyRecord {
            id: id + 2,
            entity_type: 142,
            directory: directory_lines(142, 0, "00000000"),
            parameters: parameter_lines(&text, pd, rd),
        });
        id += 4;
    }
    topology.push(TopologyRecord {
        id,
        entity_type: 406,
        directory: directory_lines(406, 15, "00000100"),
        parameters: parameter_lines(&format!("406{pd}1{pd}9HPièce n°{}{rd}", seed % 10), pd, rd),
    });
    let model = GeometryModel::new(entities, topology).unwrap();
    let doc = IgesDocument::for_model(&model)
        .unwrap()
        .with_delimiters(pd, rd)
        .unwrap();
    write_iges(&doc, &model).unwrap()
}

/// Largest control point, weight or knot difference between two models with the same layout.
pub fn model_gap(
    a: &cadrecon::reconstruct::GeometryModel,
    b: &cadrecon::reconstruct::GeometryModel,
) -> f64 {
    assert_eq!(a.entities.len(), b.entities.len());
    let mut gap = 0.0f64;
    for (x, y) in a.entities.iter().zip(&b.entities) {
        assert_eq!(x.id, y.id);
        assert_eq!(x.spline.degrees(), y.spline.degrees());
        assert_eq!(x.spline.counts(), y.spline.counts());
        assert_eq!(x.parametric_space, y.parametric_space);
        assert_eq!(x.owner_ids, y.owner_ids);
        for d in 0..x.spline.param_dim() {
            for (k, l) in x
                .spline
                .knot_vector(d)
                .knots()
                .iter()
                .zip(y.spline.knot_vector(d).knots())
            {
                gap = gap.max((k - l).abs());
            }
        }
        for (k, (p, q)) in x
            .spline
            .control_points()
            .iter()
            .zip(y.spline.control_points())
            .enumerate()
        {
            gap = gap.max((p - q).norm() / p.coords.norm().max(1.0));
            gap = gap.max((x.spline.weight(k) - y.spline.weight(k)).abs());
        }
    }
    gap
}

/// One IGES entity as raw bytes: directory lines with the parameter pointer and line count
/// blanked, and the parameter data columns of its lines.
#[derive(Debug, PartialEq, Eq)]
pub struct RawRecord {
    pub id: usize,
    pub entity_type: u32,
    pub directory: Vec<u8>,
    pub parameters: Vec<u8>,
}

/// Byte-level split of an IGES file (independent of the library reader). Returns the start
/// and global data columns and every directory record in order.
pub fn raw_iges(bytes: &[u8]) -> (Vec<u8>, Vec<RawRecord>) {
    let lines: Vec<&[u8]> = bytes
        .split(|&b| b == b'\n')
        .filter(|l| l.len() >= 80)
        .collect();
    let section = |c: u8| lines.iter().filter(move |l| l[72] == c).map(|l| &l[..80]);
    let header: Vec<u8> = section(b'S')
        .chain(section(b'G'))
        .flat_map(|l| l[..72].to_vec())
        .collect();
    let dir: Vec<&[u8]> = section(b'D').collect();
    let par: Vec<&[u8]> = section(b'P').collect();
    let records = dir
        .chunks(2)
        .enumerate()
        .map(|(k, pair)| {
            let id = 2 * k + 1;
            let field = |l: &[u8], f: usize| {
                String::from_utf8_lossy(&l[8 * f..8 * f + 8])
                    .trim()
                    .to_string()
            };
            let mut directory = Vec::new();
            directory.extend_from_slice(&pair[0][..8]);
            directory.extend_from_slice(&pair[0][16..72]);
            directory.extend_from_slice(&pair[1][..24]);
            directory.extend_from_slice(&pair[1][32..72]);
            let parameters = par
                .iter()
                .filter(|l| String::from_utf8_lossy(&l[65..72]).trim() == id.to_string())
                .flat_map(|l| l[..64].to_vec())
                .collect();
            RawRecord {
                id,
                entity_type: field(pair[0], 0).parse().unwrap(),
                directory,
                parameters,
            }
        })
        .collect();
    (header, records)
}

/// Random problem: a random spline, parameters drawn uniformly and noisy targets.
pub fn random_problem(
    r: &mut ChaCha8Rng,
    dim: usize,
    factor: usize,
) -> cadrecon::fitting::FitProblem {
    let s = random_spline(r, dim, 3, false);
    let n = factor * s.control_points().len();
    let params: Vec<ParametricPoint> = (0..n).map(|_| random_param(r, &s)).collect();
    let targets = params
        .iter()
        .map(|u| s.evaluate(u).unwrap() + random_point(r).coords * 0.1)
        .collect();
    cadrecon::fitting::FitProblem::new(s, params, targets).unwrap()
}

/// Largest distance between `compose(t, s)` and `t(s(u))` evaluated pointwise.
pub fn pointwise_gap(t: &Spline, s: &Spline, c: &Spline, per: usize) -> f64 {
    s.sample_grid(per)
        .iter()
        .map(|u| {
            let x = s.evaluate(u).unwrap();
            (c.evaluate(u).unwrap() - t.evaluate(x.coords.as_slice()).unwrap()).norm()
        })
        .fold(0.0, f64::max)
}
