use std::ops::{Add, Mul};

use nalgebra::DMatrix;
use num_traits::Zero;

use super::knots::KnotVector;
use super::spline::Spline;
use crate::error::{Error, Result};

/// Coefficient type a one-dimensional refinement operator can act on: scalars for operator
/// matrices, homogeneous points for control nets.
pub(crate) trait LineCoord:
    Copy + Add<Output = Self> + Mul<f64, Output = Self> + Zero
{
}
impl<T: Copy + Add<Output = T> + Mul<f64, Output = T> + Zero> LineCoord for T {}

/// Insert `u` into a single line of coefficients `times` times (Boehm's algorithm).
pub(crate) fn insert_knot_line<T: LineCoord>(
    kv: &KnotVector,
    line: &[T],
    u: f64,
    times: usize,
) -> (Vec<f64>, Vec<T>) {
    let p = kv.degree();
    let up = kv.knots();
    let np = line.len() - 1;
    let mp = np + p + 1;
    let k = kv.find_span(u);
    let s = kv.multiplicity(u);
    let r = times;
    debug_assert!(r + s <= p);

    let mut uq = Vec::with_capacity(up.len() + r);
    uq.extend_from_slice(&up[..=k]);
    uq.extend(std::iter::repeat_n(u, r));
    uq.extend_from_slice(&up[k + 1..=mp]);

    let mut qw = vec![T::zero(); np + r + 1];
    qw[..=k - p].copy_from_slice(&line[..=k - p]);
    for i in k - s..=np {
        qw[i + r] = line[i];
    }
    let mut rw: Vec<T> = (0..=p - s).map(|i| line[k - p + i]).collect();
    let mut l = k - p;
    for j in 1..=r {
        l = k - p + j;
        for i in 0..=p - j - s {
            let alpha = (u - up[l + i]) / (up[i + k + 1] - up[l + i]);
            rw[i] = rw[i + 1] * alpha + rw[i] * (1.0 - alpha);
        }
        qw[l] = rw[0];
        qw[k + r - j - s] = rw[p - j - s];
    }
    for i in l + 1..k.saturating_sub(s) {
        qw[i] = rw[i - l];
    }
    (uq, qw)
}

/// Insert a knot `times` times along `direction`. The geometry is unchanged.
pub fn insert_knot(spline: &Spline, direction: usize, value: f64, times: usize) -> Result<Spline> {
    if direction >= spline.param_dim() {
        return Err(Error::Refinement(format!("no direction {direction}")));
    }
    if times == 0 {
        return Ok(spline.clone());
    }
    let kv = spline.knot_vector(direction);
    let (lo, hi) = kv.domain();
    if !(value > lo && value < hi) {
        return Err(Error::Refinement(format!(
            "knot {value} is not strictly inside the domain [{lo}, {hi}]"
        )));
    }
    let s = kv.multiplicity(value);
    if s + times > kv.degree() {
        return Err(Error::Refinement(format!(
            "inserting {value} {times} times gives multiplicity {} > degree {}",
            s + times,
            kv.degree()
        )));
    }
    let probe = vec![0.0f64; kv.num_basis()];
    let (knots, _) = insert_knot_line(kv, &probe, value, times);
    let new_kv = KnotVector::new(kv.degree(), knots)?;
    spline.map_lines(direction, new_kv, |line| {
        insert_knot_line(kv, line, value, times).1
    })
}

fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut b = 1.0;
    for i in 0..k {
        b = b * (n - i) as f64 / (i + 1) as f64;
    }
    b
}

/// Raise the degree of one line by `t` (Piegl & Tiller's curve degree elevation).
pub(crate) fn elevate_line<T: LineCoord>(
    kv: &KnotVector,
    pw: &[T],
    t: usize,
) -> (Vec<f64>, Vec<T>) {
    let p = kv.degree();
    let u = kv.knots();
    let n = pw.len() - 1;
    let m = n + p + 1;
    let ph = p + t;
    let ph2 = ph / 2;

    let mut bezalfs = vec![vec![0.0; p + 1]; ph + 1];
    bezalfs[0][0] = 1.0;
    bezalfs[ph][p] = 1.0;
    for i in 1..=ph2 {
        let inv = 1.0 / binomial(ph, i);
        let mpi = p.min(i);
        for j in i.saturating_sub(t)..=mpi {
            bezalfs[i][j] = inv * binomial(p, j) * binomial(t, i - j);
        }
    }
    for i in ph2 + 1..ph {
        let mpi = p.min(i);
        for j in i.saturating_sub(t)..=mpi {
            bezalfs[i][j] = bezalfs[ph - i][p - j];
        }
    }

    let distinct = kv.breakpoints().len();
    let cap_pts = n + 1 + t * distinct + 1;
    let mut qw = vec![T::zero(); cap_pts];
    let mut uh = vec![0.0; cap_pts + ph + 2];
    let mut bpts = vec![T::zero(); p + 1];
    let mut ebpts = vec![T::zero(); ph + 1];
    let mut next_bpts = vec![T::zero(); p + 1];
    let mut alfs = vec![0.0; p + 1];

    let mut mh = ph;
    let mut kind = ph + 1;
    let mut r: isize = -1;
    let mut a = p;
    let mut b = p + 1;
    let mut cind = 1usize;
    let mut ua = u[0];
    qw[0] = pw[0];
    for k in uh.iter_mut().take(ph + 1) {
        *k = ua;
    }
    bpts[..=p].copy_from_slice(&pw[..=p]);

    while b < m {
        let i0 = b;
        while b < m && u[b] == u[b + 1] {
            b += 1;
        }
        let mul = b - i0 + 1;
        mh += mul + t;
        let ub = u[b];
        let oldr = r;
        r = p as isize - mul as isize;
        let lbz = if oldr > 0 {
            ((oldr + 2) / 2) as usize
        } else {
            1
        };
        let rbz = if r > 0 {
            ph - ((r + 1) / 2) as usize
        } else {
            ph
        };
        if r > 0 {
            let numer = ub - ua;
            for k in (mul + 1..=p).rev() {
                alfs[k - mul - 1] = numer / (u[a + k] - ua);
            }
            for j in 1..=r as usize {
                let save = r as usize - j;
                let s = mul + j;
                for k in (s..=p).rev() {
                    bpts[k] = bpts[k] * alfs[k - s] + bpts[k - 1] * (1.0 - alfs[k - s]);
                }
                next_bpts[save] = bpts[p];
            }
        }
        for i in lbz..=ph {
            let mut acc = T::zero();
            let mpi = p.min(i);
            for j in i.saturating_sub(t)..=mpi {
                acc = acc + bpts[j] * bezalfs[i][j];
            }
            ebpts[i] = acc;
        }
        if oldr > 1 {
            let mut first = kind - 2;
            let mut last = kind;
            let den = ub - ua;
            let bet = (ub - uh[kind - 1]) / den;
            for tr in 1..oldr as usize {
                let mut i = first;
                let mut j = last;
                let mut kj = j as isize - kind as isize + 1;
                while j - i > tr {
                    if i < cind {
                        let alf = (ub - uh[i]) / (ua - uh[i]);
                        qw[i] = qw[i] * alf + qw[i - 1] * (1.0 - alf);
                    }
                    if j >= lbz {
                        let kju = kj as usize;
                        if (j - tr) as isize <= kind as isize - ph as isize + oldr {
                            let gam = (ub - uh[j - tr]) / den;
                            ebpts[kju] = ebpts[kju] * gam + ebpts[kju + 1] * (1.0 - gam);
                        } else {
                            ebpts[kju] = ebpts[kju] * bet + ebpts[kju + 1] * (1.0 - bet);
                        }
                    }
                    i += 1;
                    j -= 1;
                    kj -= 1;
                }
                first -= 1;
                last += 1;
            }
        }
        if a != p {
            for _ in 0..(ph as isize - oldr) {
                uh[kind] = ua;
                kind += 1;
            }
        }
        for j in lbz..=rbz {
            qw[cind] = ebpts[j];
            cind += 1;
        }
        if b < m {
            let rr = r.max(0) as usize;
            bpts[..rr].copy_from_slice(&next_bpts[..rr]);
            for j in rr..=p {
                bpts[j] = pw[b - p + j];
            }
            a = b;
            b += 1;
            ua = ub;
        } else {
            for i in 0..=ph {
                uh[kind + i] = ub;
            }
        }
    }
    let nh = mh - ph - 1;
    qw.truncate(nh + 1);
    uh.truncate(mh + 1);
    (uh, qw)
}

/// Raise the degree along `direction` by one. The geometry is unchanged.
pub fn elevate_degree(spline: &Spline, direction: usize) -> Result<Spline> {
    elevate_degree_by(spline, direction, 1)
}

/// Raise the degree along `direction` by `t`.
pub fn elevate_degree_by(spline: &Spline, direction: usize, t: usize) -> Result<Spline> {
    if direction >= spline.param_dim() {
        return Err(Error::Refinement(format!("no direction {direction}")));
    }
    if t == 0 {
        return Ok(spline.clone());
    }
    let kv = spline.knot_vector(direction);
    let probe = vec![0.0f64; kv.num_basis()];
    let (knots, _) = elevate_line(kv, &probe, t);
    let new_kv = KnotVector::new(kv.degree() + t, knots)?;
    spline.map_lines(direction, new_kv, |line| elevate_line(kv, line, t).1)
}

/// Insert every interior breakpoint along `direction` up to multiplicity `degree`, so each
/// knot span becomes an independent Bézier segment.
pub fn refine_to_bezier(spline: &Spline, direction: usize) -> Result<Spline> {
    let kv = spline.knot_vector(direction).clone();
    let p = kv.degree();
    let breaks = kv.breakpoints();
    let mut out = spline.clone();
    for &(u, m) in &breaks[1..breaks.len() - 1] {
        if m < p {
            out = insert_knot(&out, direction, u, p - m)?;
        }
    }
    Ok(out)
}

/// Restrict the spline along `direction` to the sub-range `[lo, hi]` of its domain.
pub fn extract_range(spline: &Spline, direction: usize, lo: f64, hi: f64) -> Result<Spline> {
    let (a, b) = spline.domain(direction);
    if !(lo < hi) || lo < a || hi > b {
        return Err(Error::Refinement(format!(
            "range [{lo}, {hi}] is not inside the domain [{a}, {b}]"
        )));
    }
    let p = spline.knot_vector(direction).degree();
    let mut s = spline.clone();
    for cut in [lo, hi] {
        if cut > a && cut < b {
            let m = s.knot_vector(direction).multiplicity(cut);
            if m < p {
                s = insert_knot(&s, direction, cut, p - m)?;
            }
        }
    }
    let kv = s.knot_vector(direction);
    let knots = kv.knots();
    // Control points influencing [lo, hi] after the cuts have full multiplicity p.
    let first = if lo > a {
        knots.iter().position(|&k| k == lo).unwrap() - 1
    } else {
        0
    };
    let last = if hi < b {
        knots.iter().position(|&k| k == hi).unwrap() - 1
    } else {
        kv.num_basis() - 1
    };
    let mut new_knots = vec![lo; p + 1];
    new_knots.extend(knots.iter().copied().filter(|&k| k > lo && k < hi));
    new_knots.extend(std::iter::repeat_n(hi, p + 1));
    let new_kv = KnotVector::new(p, new_knots)?;
    s.map_lines(direction, new_kv, |line| line[first..=last].to_vec())
}

/// Matrix mapping coefficients on `coarse` to coefficients on `fine` (knot insertion operator).
/// `fine` must contain every knot of `coarse` with at least the same multiplicity.
pub(crate) fn insertion_matrix(coarse: &KnotVector, fine: &KnotVector) -> Result<DMatrix<f64>> {
    if coarse.degree() != fine.degree() || coarse.domain() != fine.domain() {
        return Err(Error::Refinement("incompatible knot vectors".into()));
    }
    let mut inserts = Vec::new();
    for (u, mf) in fine.breakpoints() {
        let mc = coarse.multiplicity(u);
        if mc > mf {
            return Err(Error::Refinement(format!(
                "knot {u} has multiplicity {mc} on the coarse vector but {mf} on the fine one"
            )));
        }
        if mf > mc {
            inserts.push((u, mf - mc));
        }
    }
    let nc = coarse.num_basis();
    let nf = fine.num_basis();
    let mut m = DMatrix::zeros(nf, nc);
    for j in 0..nc {
        let mut kv = coarse.clone();
        let mut line = vec![0.0f64; nc];
        line[j] = 1.0;
        for &(u, r) in &inserts {
            let (knots, l) = insert_knot_line(&kv, &line, u, r);
            kv = KnotVector::from_parts_unchecked(kv.degree(), knots);
            line = l;
        }
        debug_assert_eq!(kv.knots(), fine.knots());
        for (i, v) in line.into_iter().enumerate() {
            m[(i, j)] = v;
        }
    }
    Ok(m)
}
