//! Small dense linear-algebra helpers shared by the fitting and reduction code.

use nalgebra::{DMatrix, DVector};

use crate::spline::KnotVector;

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Collocation matrix `B[i][j] = N_j(params[i])` of a one-dimensional basis.
pub fn collocation_matrix(kv: &KnotVector, params: &[f64]) -> DMatrix<f64> {
    let p = kv.degree();
    let mut m = DMatrix::zeros(params.len(), kv.num_basis());
    for (i, &u) in params.iter().enumerate() {
        let span = kv.find_span(u);
        for (j, b) in kv.basis_funs(span, u).into_iter().enumerate() {
            m[(i, span - p + j)] = b;
        }
    }
    m
}

/// Least-squares solve via SVD; singular values below `rel_tol * sigma_max` are truncated,
/// giving the minimum-norm solution. Returns the solution and the numerical rank.
pub fn lstsq(a: &DMatrix<f64>, b: &DMatrix<f64>, rel_tol: f64) -> (DMatrix<f64>, usize) {
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let eps = (rel_tol * smax).max(f64::MIN_POSITIVE);
    let rank = svd.singular_values.iter().filter(|&&s| s > eps).count();
    let x = svd.solve(b, eps).expect("SVD computed with U and V");
    (x, rank)
}

/// Moore–Penrose pseudo-inverse with relative singular-value cutoff.
pub fn pseudo_inverse(a: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let eps = (rel_tol * smax).max(f64::MIN_POSITIVE);
    svd.pseudo_inverse(eps).expect("SVD computed with U and V")
}

/// Columns of `a` that are numerically unconstrained: those with a significant component in
/// the null space of `a`.
pub fn unconstrained_columns(a: &DMatrix<f64>, rel_tol: f64) -> Vec<usize> {
    let n = a.ncols();
    let ata = a.transpose() * a;
    let eig = ata.symmetric_eigen();
    let lmax = eig.eigenvalues.max().max(0.0);
    let cutoff = rel_tol * rel_tol * lmax;
    let mut weight = DVector::<f64>::zeros(n);
    for (k, &l) in eig.eigenvalues.iter().enumerate() {
        if l <= cutoff {
            let v = eig.eigenvectors.column(k);
            for j in 0..n {
                weight[j] += v[j] * v[j];
            }
        }
    }
    (0..n).filter(|&j| weight[j] > 1e-6).collect()
}
