use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Clamped (open) knot vector together with the degree of the basis it defines.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawKnotVector", into = "RawKnotVector")]
pub struct KnotVector {
    degree: usize,
    knots: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawKnotVector {
    degree: usize,
    knots: Vec<f64>,
}

impl TryFrom<RawKnotVector> for KnotVector {
    type Error = Error;
    fn try_from(raw: RawKnotVector) -> Result<Self> {
        KnotVector::new(raw.degree, raw.knots)
    }
}

impl From<KnotVector> for RawKnotVector {
    fn from(kv: KnotVector) -> Self {
        RawKnotVector {
            degree: kv.degree,
            knots: kv.knots,
        }
    }
}

/// A knot span of non-zero width.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KnotSpan {
    /// Index `i` such that `knots[i] < knots[i + 1]`.
    pub index: usize,
    pub lo: f64,
    pub hi: f64,
}

impl KnotSpan {
    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn contains(&self, u: f64) -> bool {
        u >= self.lo && u <= self.hi
    }
}

impl KnotVector {
    pub fn new(degree: usize, knots: Vec<f64>) -> Result<Self> {
        let p = degree;
        if knots.len() < 2 * (p + 1) {
            return Err(Error::InvalidKnots(format!(
                "degree {p} needs at least {} knots, got {}",
                2 * (p + 1),
                knots.len()
            )));
        }
        if knots.iter().any(|k| !k.is_finite()) {
            return Err(Error::InvalidKnots("non-finite knot".into()));
        }
        if knots.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidKnots("knots must be non-decreasing".into()));
        }
        let m = knots.len() - 1;
        let (a, b) = (knots[0], knots[m]);
        if !(a < b) {
            return Err(Error::InvalidKnots("empty parametric domain".into()));
        }
        if knots[..=p].iter().any(|&k| k != a) || knots[m - p..].iter().any(|&k| k != b) {
            return Err(Error::InvalidKnots(format!(
                "knot vector is not clamped: end knots must have multiplicity {}",
                p + 1
            )));
        }
        if knots[p + 1] == a || knots[m - p - 1] == b {
            return Err(Error::InvalidKnots(format!(
                "end knot multiplicity exceeds {}",
                p + 1
            )));
        }
        let kv = KnotVector { degree, knots };
        if let Some((u, mult)) = kv.breakpoints().into_iter().find(|&(_, m)| m > p + 1) {
            return Err(Error::InvalidKnots(format!(
                "knot {u} has multiplicity {mult} > {}",
                p + 1
            )));
        }
        Ok(kv)
    }

    /// Clamped knot vector with `count` basis functions and uniformly spaced interior knots.
    pub fn uniform(degree: usize, count: usize, lo: f64, hi: f64) -> Result<Self> {
        if count <= degree {
            return Err(Error::InvalidKnots(format!(
                "{count} control points cannot carry degree {degree}"
            )));
        }
        let interior = count - degree - 1;
        let mut knots = vec![lo; degree + 1];
        for i in 1..=interior {
            knots.push(lo + (hi - lo) * i as f64 / (interior + 1) as f64);
        }
        knots.extend(std::iter::repeat_n(hi, degree + 1));
        KnotVector::new(degree, knots)
    }

    /// Single-span knot vector of a Bézier basis on `[lo, hi]`.
    pub fn bezier(degree: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::uniform(degree, degree + 1, lo, hi)
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    /// Number of basis functions (control points along this direction).
    pub fn num_basis(&self) -> usize {
        self.knots.len() - self.degree - 1
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.knots[0], self.knots[self.knots.len() - 1])
    }

    pub fn is_bezier(&self) -> bool {
        self.num_basis() == self.degree + 1
    }

    /// Distinct knot values with their multiplicities.
    pub fn breakpoints(&self) -> Vec<(f64, usize)> {
        let mut out: Vec<(f64, usize)> = Vec::new();
        for &k in &self.knots {
            match out.last_mut() {
                Some((u, m)) if *u == k => *m += 1,
                _ => out.push((k, 1)),
            }
        }
        out
    }

    pub fn multiplicity(&self, u: f64) -> usize {
        self.knots.iter().filter(|&&k| k == u).count()
    }

    pub fn spans(&self) -> Vec<KnotSpan> {
        self.knots
            .windows(2)
            .enumerate()
            .filter(|(_, w)| w[0] < w[1])
            .map(|(index, w)| KnotSpan {
                index,
                lo: w[0],
                hi: w[1],
            })
            .collect()
    }

    /// Position of the non-zero span containing `u` within [`Self::spans`].
    pub fn span_ordinal(&self, u: f64) -> usize {
        let idx = self.find_span(u);
        self.spans()
            .iter()
            .position(|s| s.index == idx)
            .expect("find_span returns a non-empty span")
    }

    /// Index `i` with `knots[i] <= u < knots[i+1]`; the right domain end maps to the last
    /// non-empty span. Values outside the domain are clamped.
    pub fn find_span(&self, u: f64) -> usize {
        let p = self.degree;
        let n = self.num_basis() - 1;
        let u_knots = &self.knots;
        if u >= u_knots[n + 1] {
            return n;
        }
        if u <= u_knots[p] {
            return p;
        }
        let (mut low, mut high) = (p, n + 1);
        let mut mid = (low + high) / 2;
        while u < u_knots[mid] || u >= u_knots[mid + 1] {
            if u < u_knots[mid] {
                high = mid;
            } else {
                low = mid;
            }
            mid = (low + high) / 2;
        }
        mid
    }

    /// Non-vanishing basis functions `N_{span-p..=span, p}(u)`.
    pub fn basis_funs(&self, span: usize, u: f64) -> Vec<f64> {
        let p = self.degree;
        let k = &self.knots;
        let mut n = vec![0.0; p + 1];
        let mut left = vec![0.0; p + 1];
        let mut right = vec![0.0; p + 1];
        n[0] = 1.0;
        for j in 1..=p {
            left[j] = u - k[span + 1 - j];
            right[j] = k[span + j] - u;
            let mut saved = 0.0;
            for r in 0..j {
                let temp = n[r] / (right[r + 1] + left[j - r]);
                n[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            n[j] = saved;
        }
        n
    }

    /// Basis functions and their derivatives up to `order`; `out[k][j]` is the k-th derivative
    /// of `N_{span-p+j, p}` at `u`. Derivatives above the degree are zero.
    pub fn ders_basis_funs(&self, span: usize, u: f64, order: usize) -> Vec<Vec<f64>> {
        let p = self.degree;
        let k = &self.knots;
        let mut ndu = vec![vec![0.0; p + 1]; p + 1];
        let mut left = vec![0.0; p + 1];
        let mut right = vec![0.0; p + 1];
        ndu[0][0] = 1.0;
        for j in 1..=p {
            left[j] = u - k[span + 1 - j];
            right[j] = k[span + j] - u;
            let mut saved = 0.0;
            for r in 0..j {
                ndu[j][r] = right[r + 1] + left[j - r];
                let temp = ndu[r][j - 1] / ndu[j][r];
                ndu[r][j] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            ndu[j][j] = saved;
        }
        let mut ders = vec![vec![0.0; p + 1]; order + 1];
        for j in 0..=p {
            ders[0][j] = ndu[j][p];
        }
        let top = order.min(p);
        let mut a = vec![vec![0.0; p + 1]; 2];
        for r in 0..=p {
            let (mut s1, mut s2) = (0usize, 1usize);
            a[0][0] = 1.0;
            for kk in 1..=top {
                let mut d = 0.0;
                let rk = r as isize - kk as isize;
                let pk = p - kk;
                if r >= kk {
                    a[s2][0] = a[s1][0] / ndu[pk + 1][rk as usize];
                    d = a[s2][0] * ndu[rk as usize][pk];
                }
                let j1 = if rk >= -1 { 1 } else { (-rk) as usize };
                let j2 = if (r as isize - 1) <= pk as isize {
                    kk - 1
                } else {
                    p - r
                };
                for j in j1..=j2 {
                    let idx = (rk + j as isize) as usize;
                    a[s2][j] = (a[s1][j] - a[s1][j - 1]) / ndu[pk + 1][idx];
                    d += a[s2][j] * ndu[idx][pk];
                }
                if r <= pk {
                    a[s2][kk] = -a[s1][kk - 1] / ndu[pk + 1][r];
                    d += a[s2][kk] * ndu[r][pk];
                }
                ders[kk][r] = d;
                std::mem::swap(&mut s1, &mut s2);
            }
        }
        let mut factor = p as f64;
        for kk in 1..=top {
            for v in ders[kk].iter_mut() {
                *v *= factor;
            }
            factor *= (p - kk) as f64;
        }
        ders
    }

    /// Greville abscissae, one per basis function.
    pub fn greville(&self) -> Result<Vec<f64>> {
        let p = self.degree;
        if p == 0 {
            return Err(Error::InvalidKnots(
                "Greville abscissae are undefined for degree 0".into(),
            ));
        }
        Ok((0..self.num_basis())
            .map(|a| self.knots[a + 1..=a + p].iter().sum::<f64>() / p as f64)
            .collect())
    }

    /// Copy with the knot values affinely remapped onto `[lo, hi]`.
    pub fn remapped(&self, lo: f64, hi: f64) -> Self {
        let (a, b) = self.domain();
        let scale = (hi - lo) / (b - a);
        let knots = self
            .knots
            .iter()
            .map(|&k| {
                if k == a {
                    lo
                } else if k == b {
                    hi
                } else {
                    lo + (k - a) * scale
                }
            })
            .collect();
        KnotVector {
            degree: self.degree,
            knots,
        }
    }

    pub(crate) fn from_parts_unchecked(degree: usize, knots: Vec<f64>) -> Self {
        KnotVector { degree, knots }
    }

    /// Build a clamped knot vector from breakpoints and multiplicities; the end multiplicities
    /// are forced to `degree + 1`.
    pub fn from_breakpoints(degree: usize, breaks: &[(f64, usize)]) -> Result<Self> {
        let mut knots = Vec::new();
        let last = breaks.len().saturating_sub(1);
        for (i, &(u, m)) in breaks.iter().enumerate() {
            let mult = if i == 0 || i == last { degree + 1 } else { m };
            knots.extend(std::iter::repeat_n(u, mult));
        }
        KnotVector::new(degree, knots)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_unclamped() {
        assert!(KnotVector::new(2, vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0]).is_err());
        assert!(KnotVector::new(1, vec![0.0, 0.0, 0.0, 1.0, 1.0]).is_err());
        assert!(KnotVector::new(1, vec![0.0, 0.0, 1.0, 0.5]).is_err());
    }

    #[test]
    fn greville_examples() {
        let kv = KnotVector::new(2, vec![0.0, 0.0, 0.0, 1.0, 1.0, 1.0]).unwrap();
        assert_eq!(kv.greville().unwrap(), vec![0.0, 0.5, 1.0]);
        let kv = KnotVector::new(2, vec![0.0, 0.0, 0.0, 1.0, 2.0, 2.0, 2.0]).unwrap();
        assert_eq!(kv.greville().unwrap(), vec![0.0, 0.5, 1.5, 2.0]);
        let kv = KnotVector::new(1, vec![0.0, 0.0, 0.3, 0.7, 1.0, 1.0]).unwrap();
        assert_eq!(kv.greville().unwrap(), vec![0.0, 0.3, 0.7, 1.0]);
        let kv = KnotVector::new(0, vec![0.0, 1.0]).unwrap();
        assert!(kv.greville().is_err());
    }

    #[test]
    fn greville_count_matches_basis() {
        let kv = KnotVector::uniform(3, 9, -1.0, 4.0).unwrap();
        assert_eq!(kv.greville().unwrap().len(), kv.num_basis());
    }

    #[test]
    fn spans_skip_repeated_knots() {
        let kv = KnotVector::new(2, vec![0.0, 0.0, 0.0, 0.5, 0.5, 1.0, 1.0, 1.0]).unwrap();
        let spans = kv.spans();
        assert_eq!(spans.len(), 2);
        assert_eq!(spans[0].index, 2);
        assert_eq!(spans[1].index, 4);
        assert_eq!(kv.find_span(1.0), 4);
        assert_eq!(kv.find_span(0.5), 4);
        assert_eq!(kv.span_ordinal(0.25), 0);
    }

    #[test]
    fn derivative_basis_sums_to_zero() {
        let kv =
            KnotVector::new(3, vec![0.0, 0.0, 0.0, 0.0, 0.3, 0.6, 1.0, 1.0, 1.0, 1.0]).unwrap();
        for &u in &[0.0, 0.1, 0.45, 0.99, 1.0] {
            let span = kv.find_span(u);
            let d = kv.ders_basis_funs(span, u, 4);
            assert!((d[0].iter().sum::<f64>() - 1.0).abs() < 1e-14);
            for k in 1..=4 {
                assert!(d[k].iter().sum::<f64>().abs() < 1e-9);
            }
            assert!(d[4].iter().all(|&v| v == 0.0));
        }
    }
}
