//! Independent oracles. On a ball every discrete solution is `(A1 φ1, A2 φ1)`
//! with `μ1 A1 = λ f1(A2)` and `μ1 A2 = λ f2(A1)`, so the fold, the limit
//! solution and the small-amplitude slope all follow from a 2D algebraic
//! system solved here by bisection.

use approx::assert_relative_eq;
use radbif_core::analysis::{slope_prediction, theta_exponents};
use radbif_core::continuation::{continue_branch_from, detect_fold};
use radbif_core::monotone::{build_subsolution, monotone_iterate, second_solution};
use radbif_core::solver::{newton_solve, solve_limit_problem_swept};
use radbif_core::steklov::steklov_eigenpair;
use radbif_core::{
    pair_norm, ContinuationConfig, NewtonConfig, NonlinearityModel, RadialGrid, SystemState,
};

fn bisect(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    let flo = f(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if (f(mid) > 0.0) == (flo > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Reduced branch parametrized by `A2 = t`: returns `(λ, A1)`.
fn reduced(model: &NonlinearityModel, mu: f64, t: f64) -> (f64, f64) {
    let target = t * model.f(1, t);
    let a1 = bisect(0.0, 1e8, |a| a * model.f(2, a) - target);
    (mu * t / model.f(2, a1), a1)
}

/// Maximum of λ(t) by golden-section search on `[lo, hi]`.
fn reduced_fold(model: &NonlinearityModel, mu: f64) -> (f64, f64) {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = (0.05, 2.0);
    for _ in 0..200 {
        let c = b - g * (b - a);
        let d = a + g * (b - a);
        if reduced(model, mu, c).0 > reduced(model, mu, d).0 {
            b = d;
        } else {
            a = c;
        }
    }
    let t = 0.5 * (a + b);
    (reduced(model, mu, t).0, t)
}

fn setup(m: usize) -> (RadialGrid, NonlinearityModel, radbif_core::SteklovPair) {
    let g = RadialGrid::new(3, 1.0, m).unwrap();
    let pair = steklov_eigenpair(&g, 1e-12).unwrap();
    (g, NonlinearityModel::reference(), pair)
}

#[test]
fn fold_matches_reduction_on_the_same_grid() {
    let (g, model, pair) = setup(512);
    let (lbar, t) = reduced_fold(&model, pair.mu1);
    assert!((t - 0.3816).abs() < 1e-3);
    let branch = continue_branch_from(&g, &model, &pair, &ContinuationConfig::default()).unwrap();
    let fold = branch.fold().expect("reference branch folds");
    let rough = detect_fold(&branch).unwrap();
    assert_eq!(rough.index, fold.index);
    assert!((rough.lambda - lbar).abs() < 1e-4);
    assert_relative_eq!(fold.lambda, lbar, max_relative = 1e-9);
    assert_eq!(branch.folds.len(), 1);
}

#[test]
fn continuous_fold_value() {
    let exact_mu = 2.0 / (std::f64::consts::E.powi(2) - 1.0);
    let (lbar, _) = reduced_fold(&NonlinearityModel::reference(), exact_mu);
    assert!((lbar - 0.333210).abs() < 1e-6);
}

#[test]
fn branch_points_satisfy_reduction() {
    let (g, model, pair) = setup(256);
    let branch = continue_branch_from(&g, &model, &pair, &ContinuationConfig::default()).unwrap();
    for p in &branch.points {
        let (a1, a2) = p.state.boundary();
        let scale = a1.max(a2).max(1.0);
        assert!((pair.mu1 * a1 - p.lambda * model.f(1, a2)).abs() <= 1e-8 * scale.powi(3));
        assert!((pair.mu1 * a2 - p.lambda * model.f(2, a1)).abs() <= 1e-8 * scale.powi(2));
        // radial profile is the eigenfunction
        let w = SystemState::from_profile(&pair.phi1, a1, a2);
        assert!(p.state.max_diff(&w) <= 1e-7 * scale);
    }
}

#[test]
fn fold_is_grid_independent() {
    let mut folds = Vec::new();
    for m in [512, 1024] {
        let (g, model, pair) = setup(m);
        let b = continue_branch_from(&g, &model, &pair, &ContinuationConfig::default()).unwrap();
        folds.push(b.fold().unwrap().lambda);
    }
    assert!(((folds[0] - folds[1]) / folds[1]).abs() < 5e-3);
}

#[test]
fn limit_solution_closed_form() {
    let (g, model, pair) = setup(512);
    let (_, out) =
        solve_limit_problem_swept(&g, &model, &pair.phi1, &NewtonConfig::default()).unwrap();
    let mu = pair.mu1;
    let w2 = (2.0 * mu.powi(3)).powf(0.2);
    let w1 = w2.powi(3) / mu;
    let (b1, b2) = out.state.boundary();
    assert_relative_eq!(b1, w1, max_relative = 1e-9);
    assert_relative_eq!(b2, w2, max_relative = 1e-9);
    let exact_mu = 2.0 / (std::f64::consts::E.powi(2) - 1.0);
    assert!(((2.0 * exact_mu.powi(3)).powf(0.2) - 0.57222).abs() < 1e-5);
}

#[test]
fn rescaled_tail_matches_reduction() {
    let (_, model, pair) = setup(512);
    let (t1, t2) = theta_exponents(&model).unwrap();
    let mu = pair.mu1;
    let w2 = (2.0 * mu.powi(3)).powf(0.2);
    let w1 = w2.powi(3) / mu;
    // solve the reduced system at λ = 1e-3 on the large-amplitude side
    let lambda = 1e-3;
    let t = bisect(1.0, 1e3, |t| reduced(&model, mu, t).0 - lambda);
    let (_, a1) = reduced(&model, mu, t);
    assert!((lambda.powf(t1) * a1 / w1 - 0.99747).abs() < 1e-4);
    assert!((lambda.powf(t2) * t / w2 - 1.00822).abs() < 1e-4);
}

#[test]
fn slope_formula_matches_reduction() {
    let (g, model, pair) = setup(1024);
    let mu = pair.mu1;
    // quotient (μ0 - λ)/(A1 + A2) extrapolated to zero amplitude
    let q = |t: f64| {
        let (l, a1) = reduced(&model, mu, t);
        (mu - l) / (a1 + t)
    };
    let (h1, h2) = (1e-4, 2e-4);
    let extrapolated = 2.0 * q(h1) - q(h2);
    let pred = slope_prediction(&model, &pair, &g).unwrap();
    assert_relative_eq!(extrapolated, pred.lower, max_relative = 1e-5);
    assert_relative_eq!(pred.lower, -mu / 8.0, max_relative = 1e-12);

    let left = NonlinearityModel::left();
    let ql = |t: f64| {
        let (l, a1) = reduced(&left, mu, t);
        (mu - l) / (a1 + t)
    };
    let pred = slope_prediction(&left, &pair, &g).unwrap();
    assert_relative_eq!(2.0 * ql(h1) - ql(h2), pred.upper, max_relative = 1e-5);
    assert_relative_eq!(pred.upper, mu / 2.0, max_relative = 1e-12);
}

#[test]
fn pair_norm_converges_at_second_order() {
    let lambda = 0.32;
    let mut norms = Vec::new();
    for m in [128, 256, 512] {
        let (g, model, pair) = setup(m);
        let t = bisect(1e-3, 0.3816, |t| reduced(&model, pair.mu1, t).0 - lambda);
        let init = SystemState::from_profile(&pair.phi1, 0.9 * t, 0.9 * t);
        let out = newton_solve(&g, &model, lambda, &init, &NewtonConfig::default()).unwrap();
        norms.push(pair_norm(&out.state));
    }
    let order = ((norms[0] - norms[1]) / (norms[1] - norms[2])).log2();
    assert!((order - 2.0).abs() <= 0.2, "observed order {order}");
}

#[test]
fn minimal_solution_is_independent_of_subsolution() {
    let (g, model, pair) = setup(256);
    let lambda = 0.32;
    let (_, sub) = build_subsolution(&g, &model, &pair, lambda, 1e-2).unwrap();
    let a = monotone_iterate(&g, &model, lambda, &sub, None, 1e-13, 100_000).unwrap();
    let b = monotone_iterate(&g, &model, lambda, &sub.scaled(1e-3), None, 1e-13, 100_000).unwrap();
    assert!(a.state.max_diff(&b.state) < 1e-10);
    let t = bisect(1e-3, 0.3816, |t| reduced(&model, pair.mu1, t).0 - lambda);
    assert_relative_eq!(a.state.boundary().1, t, max_relative = 1e-9);
}

#[test]
fn second_solution_is_the_upper_branch() {
    let (g, model, pair) = setup(256);
    let branch = continue_branch_from(&g, &model, &pair, &ContinuationConfig::default()).unwrap();
    let lambda = 0.32;
    let sec =
        second_solution(&g, &model, &pair, lambda, &branch, &NewtonConfig::default()).unwrap();
    let t_hi = bisect(0.3816, 10.0, |t| reduced(&model, pair.mu1, t).0 - lambda);
    assert_relative_eq!(sec.other.boundary().1, t_hi, max_relative = 1e-8);
    assert!(sec.minimal.le_nodewise(&sec.other, 0.0));
    let below = second_solution(&g, &model, &pair, 0.3, &branch, &NewtonConfig::default());
    assert!(below.is_err());
}
