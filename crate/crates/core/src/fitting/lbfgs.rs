//! Limited-memory BFGS (two-loop recursion) with a strong-Wolfe bracketing and zoom line search.
//!
//! The minimizer always returns the best iterate it has seen, together with the reason it
//! stopped, so callers can report non-convergence instead of losing the work done so far.

use std::collections::VecDeque;

#[derive(Clone, Copy, Debug)]
pub struct LbfgsOptions {
    pub memory: usize,
    pub max_iterations: usize,
    /// Stop when the Euclidean gradient norm falls below this.
    pub grad_tol: f64,
    /// Stop when `|f_prev - f| <= rel_f_tol * max(|f_prev|, |f|)`.
    pub rel_f_tol: f64,
    pub c1: f64,
    pub c2: f64,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        LbfgsOptions {
            memory: 10,
            max_iterations: 10_000,
            grad_tol: 1e-10,
            rel_f_tol: 1e-12,
            c1: 1e-4,
            c2: 0.9,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Termination {
    GradientNorm,
    ObjectiveStalled,
    /// No step along the quasi-Newton or steepest-descent direction decreased the objective.
    LineSearchFailed,
    MaxIterations,
}

impl Termination {
    pub fn converged(self) -> bool {
        !matches!(self, Termination::MaxIterations)
    }
}

#[derive(Clone, Debug)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub termination: Termination,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(x: &[f64], alpha: f64, d: &[f64]) -> Vec<f64> {
    x.iter().zip(d).map(|(x, d)| x + alpha * d).collect()
}

struct Evaluator<F> {
    f: F,
    count: usize,
}

impl<F: FnMut(&[f64], &mut [f64]) -> f64> Evaluator<F> {
    fn eval(&mut self, x: &[f64]) -> (f64, Vec<f64>) {
        let mut g = vec![0.0; x.len()];
        let v = (self.f)(x, &mut g);
        self.count += 1;
        (v, g)
    }
}

struct Point {
    x: Vec<f64>,
    f: f64,
    g: Vec<f64>,
}

/// Minimize `f`, which returns the objective and writes the gradient into its second argument.
pub fn minimize<F>(f: F, x0: Vec<f64>, opts: &LbfgsOptions) -> Minimum
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let mut ev = Evaluator { f, count: 0 };
    let (f0, g0) = ev.eval(&x0);
    let mut cur = Point {
        x: x0,
        f: f0,
        g: g0,
    };
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(opts.memory);
    let mut termination = Termination::MaxIterations;
    let mut iterations = 0;

    while iterations < opts.max_iterations {
        if !cur.f.is_finite() || norm(&cur.g) < opts.grad_tol {
            termination = Termination::GradientNorm;
            break;
        }
        iterations += 1;
        let mut d = two_loop(&cur.g, &history);
        if dot(&d, &cur.g) >= 0.0 {
            history.clear();
            d = cur.g.iter().map(|g| -g).collect();
        }
        let alpha0 = if history.is_empty() {
            (1.0 / norm(&cur.g)).min(1.0)
        } else {
            1.0
        };
        let next = match line_search(&mut ev, &cur, &d, alpha0, opts) {
            Some(p) => p,
            None if !history.is_empty() => {
                // Stale curvature pairs; retry once along steepest descent.
                history.clear();
                let d: Vec<f64> = cur.g.iter().map(|g| -g).collect();
                match line_search(&mut ev, &cur, &d, (1.0 / norm(&cur.g)).min(1.0), opts) {
                    Some(p) => p,
                    None => {
                        termination = Termination::LineSearchFailed;
                        break;
                    }
                }
            }
            None => {
                termination = Termination::LineSearchFailed;
                break;
            }
        };

        let s: Vec<f64> = next.x.iter().zip(&cur.x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = next.g.iter().zip(&cur.g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-300 {
            if history.len() == opts.memory {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }
        let stalled = (cur.f - next.f).abs() <= opts.rel_f_tol * cur.f.abs().max(next.f.abs());
        cur = next;
        if stalled {
            termination = Termination::ObjectiveStalled;
            break;
        }
    }
    if iterations >= opts.max_iterations && norm(&cur.g) < opts.grad_tol {
        termination = Termination::GradientNorm;
    }
    Minimum {
        x: cur.x,
        value: cur.f,
        iterations,
        evaluations: ev.count,
        termination,
    }
}

/// `-H g` with the implicit inverse-Hessian approximation.
fn two_loop(g: &[f64], history: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let mut q = g.to_vec();
    let mut alphas = Vec::with_capacity(history.len());
    for (s, y, rho) in history.iter().rev() {
        let a = rho * dot(s, &q);
        for (qi, yi) in q.iter_mut().zip(y) {
            *qi -= a * yi;
        }
        alphas.push(a);
    }
    if let Some((s, y, _)) = history.back() {
        let gamma = dot(s, y) / dot(y, y);
        q.iter_mut().for_each(|v| *v *= gamma);
    }
    for ((s, y, rho), a) in history.iter().zip(alphas.iter().rev()) {
        let b = rho * dot(y, &q);
        for (qi, si) in q.iter_mut().zip(s) {
            *qi += (a - b) * si;
        }
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}

/// Strong-Wolfe line search. Falls back to the best Armijo point seen when the curvature
/// condition cannot be met within the evaluation budget; `None` if nothing decreased `f`.
fn line_search<F>(
    ev: &mut Evaluator<F>,
    start: &Point,
    d: &[f64],
    alpha0: f64,
    opts: &LbfgsOptions,
) -> Option<Point>
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let f0 = start.f;
    let dg0 = dot(&start.g, d);
    let mut best: Option<Point> = None;
    let keep = |p: Point, best: &mut Option<Point>| {
        if p.f < f0 && best.as_ref().is_none_or(|b| p.f < b.f) {
            *best = Some(p);
        }
    };

    let (mut a_prev, mut f_prev, mut dg_prev) = (0.0, f0, dg0);
    let mut alpha = alpha0;
    for i in 0..25 {
        let x = axpy(&start.x, alpha, d);
        let (f, g) = ev.eval(&x);
        let dg = dot(&g, d);
        if !f.is_finite() {
            alpha = 0.5 * (a_prev + alpha);
            continue;
        }
        if f > f0 + opts.c1 * alpha * dg0 || (i > 0 && f >= f_prev) {
            keep(Point { x, f, g }, &mut best);
            return zoom(
                ev,
                start,
                d,
                (a_prev, f_prev, dg_prev),
                (alpha, f, dg),
                opts,
            )
            .or(best);
        }
        if dg.abs() <= -opts.c2 * dg0 {
            return Some(Point { x, f, g });
        }
        if dg >= 0.0 {
            keep(
                Point {
                    x: x.clone(),
                    f,
                    g: g.clone(),
                },
                &mut best,
            );
            return zoom(
                ev,
                start,
                d,
                (alpha, f, dg),
                (a_prev, f_prev, dg_prev),
                opts,
            )
            .or(best);
        }
        keep(Point { x, f, g }, &mut best);
        a_prev = alpha;
        f_prev = f;
        dg_prev = dg;
        alpha *= 2.0;
    }
    best
}

fn zoom<F>(
    ev: &mut Evaluator<F>,
    start: &Point,
    d: &[f64],
    mut lo: (f64, f64, f64),
    mut hi: (f64, f64, f64),
    opts: &LbfgsOptions,
) -> Option<Point>
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let f0 = start.f;
    let dg0 = dot(&start.g, d);
    let mut best: Option<Point> = None;
    for _ in 0..30 {
        let alpha = interpolate(lo, hi);
        if (hi.0 - lo.0).abs() < 1e-16 * lo.0.abs().max(hi.0.abs()).max(1e-300) {
            break;
        }
        let x = axpy(&start.x, alpha, d);
        let (f, g) = ev.eval(&x);
        let dg = dot(&g, d);
        if f > f0 + opts.c1 * alpha * dg0 || f >= lo.1 {
            hi = (alpha, f, dg);
        } else {
            if dg.abs() <= -opts.c2 * dg0 {
                return Some(Point { x, f, g });
            }
            if dg * (hi.0 - lo.0) >= 0.0 {
                hi = lo;
            }
            lo = (alpha, f, dg);
            if f < f0 && best.as_ref().is_none_or(|b| f < b.f) {
                best = Some(Point { x, f, g });
            }
        }
    }
    best
}

/// Minimizer of the cubic through both bracket ends, safeguarded into the bracket interior.
fn interpolate(lo: (f64, f64, f64), hi: (f64, f64, f64)) -> f64 {
    let (a0, f0, d0) = lo;
    let (a1, f1, d1) = hi;
    let d1c = d0 + d1 - 3.0 * (f0 - f1) / (a0 - a1);
    let disc = d1c * d1c - d0 * d1;
    let (left, right) = (a0.min(a1), a0.max(a1));
    let mid = 0.5 * (a0 + a1);
    if disc < 0.0 {
        return mid;
    }
    let d2 = (a1 - a0).signum() * disc.sqrt();
    let a = a1 - (a1 - a0) * (d1 + d2 - d1c) / (d1 - d0 + 2.0 * d2);
    let margin = 0.1 * (right - left);
    if a.is_finite() && a > left + margin && a < right - margin {
        a
    } else {
        mid
    }
}
