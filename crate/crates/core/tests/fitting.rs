mod common;

use cadrecon::fitting::{
    fit_lsq, fit_opt, fit_warm, residual, residual_gradient, spline_fit, FitProblem, OptOptions,
    SplineFitOptions,
};
use cadrecon::spline::{KnotVector, ParametricPoint, Spline};
use cadrecon::{Error, Point};
use common::*;
use rand::Rng;

#[test]
fn gradient_matches_central_differences() {
    let mut r = rng(21);
    for case in 0..40 {
        let p = random_problem(&mut r, 1 + case % 2, 2);
        let g = residual_gradient(&p.spline, &p.param_coords, &p.targets);
        let h = 1e-6;
        let mut num = 0.0f64;
        let mut den = 0.0f64;
        for k in 0..p.spline.control_points().len() {
            for d in 0..3 {
                let shifted = |delta: f64| {
                    let mut cps = p.spline.control_points().to_vec();
                    cps[k][d] += delta;
                    residual(
                        &p.spline.with_control_points(cps).unwrap(),
                        &p.param_coords,
                        &p.targets,
                    )
                };
                let fd = (shifted(h) - shifted(-h)) / (2.0 * h);
                num += (fd - g[k][d]).powi(2);
                den += g[k][d].powi(2);
            }
        }
        assert!(num.sqrt() <= 1e-5 * den.sqrt(), "case {case}");
    }
}

#[test]
fn lsq_and_lbfgs_agree() {
    let mut r = rng(22);
    let mut checked = 0;
    while checked < 15 {
        let p = random_problem(&mut r, 1 + checked % 2, 4);
        let Ok((a, ra)) = fit_lsq(&p) else { continue };
        let (_, rb) = fit_opt(&p, &OptOptions::default()).unwrap();
        let (oa, ob) = (
            ra.objective_history.last().unwrap(),
            rb.objective_history.last().unwrap(),
        );
        assert!((oa - ob).abs() <= 1e-6 * oa, "{oa} vs {ob}");
        assert!(*oa <= ob * (1.0 + 1e-12));
        assert_eq!(a.degrees(), p.spline.degrees());
        checked += 1;
    }
}

#[test]
fn exact_data_is_reproduced() {
    let mut r = rng(23);
    let target = random_spline(&mut r, 2, 3, false);
    let start = target.map_control_points(|_| Point::origin());
    let params = target.sample_grid(30);
    let pts = params.iter().map(|u| target.evaluate(u).unwrap()).collect();
    let (fit, rep) = fit_lsq(&FitProblem::new(start, params, pts).unwrap()).unwrap();
    assert!(rep.final_max_error < 1e-10);
    assert!(grid_deviation(&fit, &target, 9) < 1e-9);
}

#[test]
fn underdetermined_problem_is_rejected_or_kept_in_place() {
    let kv = KnotVector::uniform(3, 8, 0.0, 1.0).unwrap();
    let cps: Vec<Point> = (0..kv.num_basis())
        .map(|i| Point::new(i as f64, 0.0, 0.0))
        .collect();
    let s = Spline::curve(kv, cps.clone(), None).unwrap();
    // Data only on the first half of the domain.
    let params: Vec<ParametricPoint> = (0..20)
        .map(|i| ParametricPoint::curve(0.4 * i as f64 / 19.0))
        .collect();
    let targets: Vec<Point> = params
        .iter()
        .map(|u| s.evaluate(u).unwrap() + nalgebra::Vector3::new(0.0, 1.0, 0.0))
        .collect();
    let p = FitProblem::new(s, params, targets).unwrap();
    match fit_lsq(&p) {
        Err(Error::RankDeficient { unconstrained }) => {
            assert!(unconstrained.contains(&(cps.len() - 1)))
        }
        other => panic!("expected rank deficiency, got {other:?}"),
    }
    let (warm, rep) = fit_warm(&p).unwrap();
    assert!(rep.final_max_error < 1e-9);
    assert_eq!(warm.control_points().last(), cps.last());
}

#[test]
fn adaptive_fit_reaches_epsilon_on_a_wavy_curve() {
    let kv = KnotVector::bezier(1, 0.0, 1.0).unwrap();
    let s = Spline::curve(
        kv,
        vec![Point::new(0.0, 0.0, 0.0), Point::new(1.0, 0.0, 0.0)],
        None,
    )
    .unwrap();
    let params: Vec<ParametricPoint> = (0..200)
        .map(|i| ParametricPoint::curve(i as f64 / 199.0))
        .collect();
    let targets = params
        .iter()
        .map(|u| Point::new(u[0], 0.1 * (6.0 * u[0]).sin(), 0.05 * u[0] * u[0]))
        .collect();
    let opts = SplineFitOptions {
        epsilon: Some(1e-4),
        budget: 60,
        ..Default::default()
    };
    let (fit, rep) = spline_fit(&FitProblem::new(s, params, targets).unwrap(), &opts).unwrap();
    assert!(rep.converged, "{rep:?}");
    assert!(rep.final_max_error < 1e-4);
    assert!(fit.degrees()[0] <= 4);
    // Objective history never increases.
    for w in rep.objective_history.windows(2) {
        assert!(w[1] <= w[0] * (1.0 + 1e-9));
    }
}

#[test]
fn noisy_surface_fit_improves_monotonically() {
    let mut r = rng(24);
    let kv = KnotVector::bezier(1, 0.0, 1.0).unwrap();
    let flat = Spline::surface(
        kv.clone(),
        kv,
        vec![
            Point::new(0., 0., 0.),
            Point::new(1., 0., 0.),
            Point::new(0., 1., 0.),
            Point::new(1., 1., 0.),
        ],
        None,
    )
    .unwrap();
    let params = flat.sample_grid(15);
    let targets: Vec<Point> = params
        .iter()
        .map(|u| {
            Point::new(
                u[0],
                u[1],
                0.2 * u[0] * u[1] + 1e-3 * r.gen_range(-1.0..1.0),
            )
        })
        .collect();
    let opts = SplineFitOptions {
        epsilon: Some(1e-5),
        budget: 6,
        ..Default::default()
    };
    let (_, rep) = spline_fit(&FitProblem::new(flat, params, targets).unwrap(), &opts).unwrap();
    assert!(!rep.converged);
    assert!(!rep.warnings.is_empty());
    for w in rep.objective_history.windows(2) {
        assert!(w[1] <= w[0] * (1.0 + 1e-9));
    }
}
