//! Multivariate polynomials in tensor-product Bernstein form, with exact products.

use std::ops::{Add, AddAssign, Mul};

use num_traits::Zero;

/// Coefficients of a polynomial in the Bernstein basis of the given degrees on the unit box.
/// Storage: first variable fastest.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Bernstein<T> {
    pub degrees: Vec<usize>,
    pub coefs: Vec<T>,
}

pub(crate) trait Coef:
    Copy + Add<Output = Self> + AddAssign + Mul<f64, Output = Self> + Zero + Send + Sync
{
}
impl<T: Copy + Add<Output = T> + AddAssign + Mul<f64, Output = T> + Zero + Send + Sync> Coef for T {}

/// Binomial coefficient table `row[n][k]`, exact for the sizes used here in f64 range.
pub(crate) fn binomials(n: usize) -> Vec<Vec<f64>> {
    let mut rows = vec![vec![1.0]];
    for i in 1..=n {
        let prev = &rows[i - 1];
        let mut row = vec![1.0; i + 1];
        for k in 1..i {
            row[k] = prev[k - 1] + prev[k];
        }
        rows.push(row);
    }
    rows
}

fn strides(degrees: &[usize]) -> Vec<usize> {
    let mut s = Vec::with_capacity(degrees.len());
    let mut acc = 1;
    for &d in degrees {
        s.push(acc);
        acc *= d + 1;
    }
    s
}

fn multi_indices(degrees: &[usize]) -> Vec<Vec<usize>> {
    let total: usize = degrees.iter().map(|d| d + 1).product();
    (0..total)
        .map(|mut flat| {
            degrees
                .iter()
                .map(|&d| {
                    let i = flat % (d + 1);
                    flat /= d + 1;
                    i
                })
                .collect()
        })
        .collect()
}

impl<T: Coef> Bernstein<T> {
    pub fn new(degrees: Vec<usize>, coefs: Vec<T>) -> Self {
        debug_assert_eq!(
            coefs.len(),
            degrees.iter().map(|d| d + 1).product::<usize>()
        );
        Bernstein { degrees, coefs }
    }

    pub fn zero(degrees: Vec<usize>) -> Self {
        let n = degrees.iter().map(|d| d + 1).product();
        Bernstein {
            degrees,
            coefs: vec![T::zero(); n],
        }
    }

    pub fn add_assign(&mut self, other: &Bernstein<T>) {
        debug_assert_eq!(self.degrees, other.degrees);
        for (a, b) in self.coefs.iter_mut().zip(&other.coefs) {
            *a += *b;
        }
    }

    pub fn scaled_add(&mut self, other: &Bernstein<f64>, value: T) {
        debug_assert_eq!(self.degrees, other.degrees);
        for (a, &b) in self.coefs.iter_mut().zip(&other.coefs) {
            *a += value * b;
        }
    }
}

/// Product of a scalar and a (possibly vector-valued) polynomial; the degrees add.
///
/// With `a_i` and `b_j` scaled by their binomial weights the product is a plain convolution,
/// divided afterwards by the binomials of the result degree.
pub(crate) fn mul<T: Coef>(
    a: &Bernstein<f64>,
    b: &Bernstein<T>,
    binom: &[Vec<f64>],
) -> Bernstein<T> {
    let dims = a.degrees.len();
    debug_assert_eq!(dims, b.degrees.len());
    let out_deg: Vec<usize> = a
        .degrees
        .iter()
        .zip(&b.degrees)
        .map(|(x, y)| x + y)
        .collect();
    let out_stride = strides(&out_deg);
    let ia = multi_indices(&a.degrees);
    let ib = multi_indices(&b.degrees);

    let sa: Vec<(usize, f64)> = ia
        .iter()
        .zip(&a.coefs)
        .map(|(idx, &c)| {
            let w: f64 = (0..dims).map(|d| binom[a.degrees[d]][idx[d]]).product();
            let off: usize = (0..dims).map(|d| idx[d] * out_stride[d]).sum();
            (off, c * w)
        })
        .collect();
    let sb: Vec<(usize, T)> = ib
        .iter()
        .zip(&b.coefs)
        .map(|(idx, &c)| {
            let w: f64 = (0..dims).map(|d| binom[b.degrees[d]][idx[d]]).product();
            let off: usize = (0..dims).map(|d| idx[d] * out_stride[d]).sum();
            (off, c * w)
        })
        .collect();

    let mut out = Bernstein::<T>::zero(out_deg.clone());
    for &(oa, ca) in &sa {
        if ca == 0.0 {
            continue;
        }
        for &(ob, cb) in &sb {
            out.coefs[oa + ob] += cb * ca;
        }
    }
    for (idx, c) in multi_indices(&out_deg).iter().zip(out.coefs.iter_mut()) {
        let w: f64 = (0..dims).map(|d| binom[out_deg[d]][idx[d]]).product();
        *c = *c * (1.0 / w);
    }
    out
}

/// Value at `x` in the unit box (de Casteljau along each variable).
#[cfg(test)]
pub(crate) fn eval(p: &Bernstein<f64>, x: &[f64]) -> f64 {
    let mut coefs = p.coefs.clone();
    let mut degrees = p.degrees.clone();
    for &t in x {
        let n = degrees[0];
        let rest: usize = coefs.len() / (n + 1);
        let mut next = Vec::with_capacity(rest);
        for r in 0..rest {
            let mut line: Vec<f64> = (0..=n).map(|i| coefs[i + (n + 1) * r]).collect();
            for k in 1..=n {
                for i in 0..=n - k {
                    line[i] = line[i] * (1.0 - t) + line[i + 1] * t;
                }
            }
            next.push(line[0]);
        }
        coefs = next;
        degrees.remove(0);
    }
    coefs[0]
}
