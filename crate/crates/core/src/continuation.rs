//! Pseudo-arclength continuation of the positive branch from the trivial
//! solution at `μ0`, through the fold, down to `λ_stop_low`.

use serde::{Deserialize, Serialize};

use crate::analysis::bifurcation_point;
use crate::error::{Error, Result};
use crate::grid::{pair_norm, RadialGrid, SystemState};
use crate::model::NonlinearityModel;
use crate::solver::{
    classify, jacobian, lambda_derivative, max_abs, newton_solve, residual, NewtonConfig,
    StateClass,
};
use crate::steklov::{steklov_eigenpair, SteklovPair};

/// Relative pair_norm gap below which two states at equal λ are the same.
pub const DEDUP_GAP: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContinuationConfig {
    pub ds0: f64,
    pub ds_min: f64,
    pub ds_max: f64,
    pub eps_step_off: f64,
    pub lambda_stop_low: f64,
    pub max_points: usize,
    /// Corrector iteration cap per step.
    pub corrector_max_iter: usize,
    pub newton: NewtonConfig,
}

impl Default for ContinuationConfig {
    fn default() -> Self {
        Self {
            ds0: 1e-2,
            ds_min: 1e-8,
            ds_max: 0.5,
            eps_step_off: 1e-3,
            lambda_stop_low: 1e-3,
            max_points: 5000,
            corrector_max_iter: 12,
            newton: NewtonConfig::default(),
        }
    }
}

impl ContinuationConfig {
    pub fn validate(&self) -> Result<()> {
        self.newton.validate()?;
        let ok = self.ds_min > 0.0
            && self.ds_min <= self.ds0
            && self.ds0 <= self.ds_max
            && self.eps_step_off > 0.0
            && self.eps_step_off <= 0.1
            && self.lambda_stop_low > 0.0
            && self.max_points >= 2
            && self.corrector_max_iter >= 1;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "invalid continuation configuration {self:?}"
            )))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchPoint {
    pub lambda: f64,
    pub state: SystemState,
    pub norm: f64,
    /// Sign of `dλ/ds` over the step that produced this point.
    pub tangent_lambda_sign: i8,
    /// Arclength step used to reach this point.
    pub ds: f64,
    pub corrector_iterations: usize,
}

impl BranchPoint {
    pub fn new(
        lambda: f64,
        state: SystemState,
        tangent_lambda_sign: i8,
        ds: f64,
        corrector_iterations: usize,
    ) -> Self {
        let norm = pair_norm(&state);
        Self {
            lambda,
            state,
            norm,
            tangent_lambda_sign,
            ds,
            corrector_iterations,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fold {
    pub lambda: f64,
    /// Index of the branch point closest to the fold.
    pub index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    LambdaStop,
    MaxPoints,
    CorrectorFailure,
    NonPositive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    /// Bifurcation point from the trivial solution.
    pub mu0: f64,
    pub points: Vec<BranchPoint>,
    pub folds: Vec<Fold>,
    pub termination: Termination,
}

impl Branch {
    /// The fold with the largest λ, if any.
    pub fn fold(&self) -> Option<Fold> {
        self.folds
            .iter()
            .copied()
            .max_by(|a, b| a.lambda.total_cmp(&b.lambda))
    }

    pub fn max_lambda(&self) -> f64 {
        self.points
            .iter()
            .map(|p| p.lambda)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

fn weighted_dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / a.len() as f64
}

fn sign(v: f64) -> i8 {
    if v > 0.0 {
        1
    } else if v < 0.0 {
        -1
    } else {
        0
    }
}

/// `(φ1/(1+ζ), ζ φ1/(1+ζ))`, the kernel direction at `μ0`.
pub fn initial_tangent(model: &NonlinearityModel, pair: &SteklovPair) -> SystemState {
    let zeta = model.zeta();
    SystemState::from_profile(&pair.phi1, 1.0 / (1.0 + zeta), zeta / (1.0 + zeta))
}

/// Result of one pseudo-arclength correction.
struct Corrected {
    u: Vec<f64>,
    lambda: f64,
    iterations: usize,
}

/// Newton on `{F(U, λ) = 0, <U - U0, tU>/dim + (λ - λ0) tλ = ds}`, solved by
/// bordering around the banded Jacobian.
#[allow(clippy::too_many_arguments)]
fn correct(
    grid: &RadialGrid,
    model: &NonlinearityModel,
    anchor: (&[f64], f64),
    tangent: (&[f64], f64),
    ds: f64,
    guess: (Vec<f64>, f64),
    cfg: &ContinuationConfig,
) -> Option<Corrected> {
    let (u0, l0) = anchor;
    let (tu, tl) = tangent;
    let dim = u0.len() as f64;
    let (mut u, mut lambda) = guess;
    for it in 0..=cfg.corrector_max_iter {
        if !(lambda >= 0.0) || !u.iter().all(|v| v.is_finite()) {
            return None;
        }
        let state = SystemState::from_interleaved(&u);
        let f = residual(grid, model, lambda, &state).ok()?;
        let du: Vec<f64> = u.iter().zip(u0).map(|(a, b)| a - b).collect();
        let g = weighted_dot(&du, tu) + (lambda - l0) * tl - ds;
        let fnorm = max_abs(&f);
        // always take one step: near the trivial branch the guess alone can pass the test
        if it > 0 && fnorm <= cfg.newton.threshold(&u) && g.abs() <= 1e-12 * ds.max(1.0) {
            return Some(Corrected {
                u,
                lambda,
                iterations: it,
            });
        }
        if it == cfg.corrector_max_iter {
            break;
        }
        let lu = jacobian(grid, model, lambda, &state).ok()?.factor().ok()?;
        let a = lu.solve(&f);
        let b = lu.solve(&lambda_derivative(grid, model, &state));
        let denom = tl - tu.iter().zip(&b).map(|(x, y)| x * y).sum::<f64>() / dim;
        if denom == 0.0 || !denom.is_finite() {
            return None;
        }
        let dl = (tu.iter().zip(&a).map(|(x, y)| x * y).sum::<f64>() / dim - g) / denom;
        for k in 0..u.len() {
            u[k] += -a[k] - b[k] * dl;
        }
        lambda += dl;
    }
    None
}

/// First nontrivial branch point: corrects `ε · tangent` at `λ = μ0` under the
/// arclength constraint along the tangent direction.
pub fn step_off(
    grid: &RadialGrid,
    model: &NonlinearityModel,
    mu0: f64,
    tangent: &SystemState,
    eps: f64,
    cfg: &ContinuationConfig,
) -> Result<BranchPoint> {
    if !(eps > 0.0 && eps <= 0.1) {
        return Err(Error::Domain(format!(
            "step-off amplitude must lie in (0, 0.1], got {eps}"
        )));
    }
    let t = tangent.to_interleaved();
    let zero = vec![0.0; t.len()];
    let ds = eps * weighted_dot(&t, &t);
    let guess: Vec<f64> = t.iter().map(|v| eps * v).collect();
    let c =
        correct(grid, model, (&zero, mu0), (&t, 0.0), ds, (guess, mu0), cfg).ok_or_else(|| {
            Error::Continuation {
                reason: "step-off corrector failed".into(),
                last_lambda: Some(mu0),
            }
        })?;
    let state = SystemState::from_interleaved(&c.u);
    if classify(&state) != StateClass::Positive {
        return Err(Error::CollapsedToZero(format!(
            "step-off at eps = {eps} did not leave the trivial branch; use a larger eps"
        )));
    }
    let dist = weighted_dot(&c.u, &c.u).sqrt();
    Ok(BranchPoint::new(
        c.lambda,
        state,
        sign(c.lambda - mu0),
        dist,
        c.iterations,
    ))
}

/// Traces the positive branch from `μ0` until `λ <= λ_stop_low`, `max_points`,
/// or a corrector failure below `ds_min`.
pub fn continue_branch(
    grid: &RadialGrid,
    model: &NonlinearityModel,
    cfg: &ContinuationConfig,
) -> Result<Branch> {
    let pair = steklov_eigenpair(grid, 1e-12)?;
    continue_branch_from(grid, model, &pair, cfg)
}

pub fn continue_branch_from(
    grid: &RadialGrid,
    model: &NonlinearityModel,
    pair: &SteklovPair,
    cfg: &ContinuationConfig,
) -> Result<Branch> {
    cfg.validate()?;
    let mu0 = bifurcation_point(model, pair.mu1)?;
    let tangent = initial_tangent(model, pair);
    let first = step_off(grid, model, mu0, &tangent, cfg.eps_step_off, cfg)?;

    let mut points = vec![first];
    let mut prev_u = vec![0.0; 2 * grid.len()];
    let mut prev_l = mu0;
    let mut ds = cfg.ds0;
    let termination = loop {
        if points.len() >= cfg.max_points {
            break Termination::MaxPoints;
        }
        let cur = points.last().expect("nonempty");
        let cur_u = cur.state.to_interleaved();
        let cur_l = cur.lambda;
        let mut tu: Vec<f64> = cur_u.iter().zip(&prev_u).map(|(a, b)| a - b).collect();
        let mut tl = cur_l - prev_l;
        let len = (weighted_dot(&tu, &tu) + tl * tl).sqrt();
        tu.iter_mut().for_each(|v| *v /= len);
        tl /= len;

        let corrected = loop {
            let guess_u: Vec<f64> = cur_u.iter().zip(&tu).map(|(a, t)| a + ds * t).collect();
            let guess_l = cur_l + ds * tl;
            match correct(
                grid,
                model,
                (&cur_u, cur_l),
                (&tu, tl),
                ds,
                (guess_u, guess_l),
                cfg,
            ) {
                Some(c) => break Some(c),
                None => {
                    ds *= 0.5;
                    if ds < cfg.ds_min {
                        break None;
                    }
                }
            }
        };
        let Some(c) = corrected else {
            if points.len() == 1 {
                return Err(Error::Continuation {
                    reason: "corrector failed on the first continuation step".into(),
                    last_lambda: Some(cur_l),
                });
            }
            break Termination::CorrectorFailure;
        };

        let state = SystemState::from_interleaved(&c.u);
        let check = residual(grid, model, c.lambda, &state)?;
        if max_abs(&check) > cfg.newton.threshold(&c.u) {
            break Termination::CorrectorFailure;
        }
        if classify(&state) != StateClass::Positive {
            break Termination::NonPositive;
        }
        let point = BranchPoint::new(c.lambda, state, sign(c.lambda - cur_l), ds, c.iterations);
        prev_u = cur_u;
        prev_l = cur_l;

        if point.lambda <= cfg.lambda_stop_low {
            let last = points.last().expect("nonempty").clone();
            points.push(clip_to_lambda(grid, model, &last, point, cfg));
            break Termination::LambdaStop;
        }
        points.push(point);

        if c.iterations <= 3 {
            ds = (2.0 * ds).min(cfg.ds_max);
        } else if c.iterations >= 8 {
            ds = (0.5 * ds).max(cfg.ds_min);
        }
    };

    let mut branch = Branch {
        mu0,
        points,
        folds: Vec::new(),
        termination,
    };
    branch.folds = detect_folds(&branch)
        .into_iter()
        .map(|f| refine_fold(grid, model, &branch, f, cfg))
        .collect();
    Ok(branch)
}

/// Sharpens a fold estimate by golden-section search for the λ extremum
/// over branch points corrected on hyperplanes across the bracketing chord.
/// Keeps the quadratic estimate if any correction fails.
fn refine_fold(
    grid: &RadialGrid,
    model: &NonlinearityModel,
    branch: &Branch,
    fold: Fold,
    cfg: &ContinuationConfig,
) -> Fold {
    let k = fold.index;
    let (a, b) = (&branch.points[k - 1], &branch.points[k + 1]);
    let ua = a.state.to_interleaved();
    let ub = b.state.to_interleaved();
    let mut tu: Vec<f64> = ub.iter().zip(&ua).map(|(x, y)| x - y).collect();
    let mut tl = b.lambda - a.lambda;
    let len = (weighted_dot(&tu, &tu) + tl * tl).sqrt();
    if !(len > 0.0) {
        return fold;
    }
    tu.iter_mut().for_each(|v| *v /= len);
    tl /= len;
    let is_max = branch.points[k].lambda >= a.lambda;
    let eval = |ds: f64| -> Option<f64> {
        let w = ds / len;
        let guess_u: Vec<f64> = ua.iter().zip(&ub).map(|(x, y)| x + w * (y - x)).collect();
        let guess_l = a.lambda + w * (b.lambda - a.lambda);
        let c = correct(
            grid,
            model,
            (&ua, a.lambda),
            (&tu, tl),
            ds,
            (guess_u, guess_l),
            cfg,
        )?;
        Some(if is_max { c.lambda } else { -c.lambda })
    };
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let (mut lo, mut hi) = (0.0, len);
    let mut c = hi - g * (hi - lo);
    let mut d = lo + g * (hi - lo);
    let (Some(mut fc), Some(mut fd)) = (eval(c), eval(d)) else {
        return fold;
    };
    for _ in 0..60 {
        if fc > fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - g * (hi - lo);
            let Some(v) = eval(c) else { return fold };
            fc = v;
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + g * (hi - lo);
            let Some(v) = eval(d) else { return fold };
            fd = v;
        }
        if hi - lo <= 1e-10 * len {
            break;
        }
    }
    let best = fc.max(fd);
    Fold {
        lambda: if is_max { best } else { -best },
        index: k,
    }
}

/// Replaces an overshooting final point with a fixed-λ solve at exactly
/// `λ_stop_low`, falling back to the overshooting point if Newton fails.
fn clip_to_lambda(
    grid: &RadialGrid,
    model: &NonlinearityModel,
    before: &BranchPoint,
    after: BranchPoint,
    cfg: &ContinuationConfig,
) -> BranchPoint {
    let target = cfg.lambda_stop_low;
    if after.lambda == target {
        return after;
    }
    let w = (before.lambda - target) / (before.lambda - after.lambda);
    let init = SystemState {
        u1: before
            .state
            .u1
            .iter()
            .zip(&after.state.u1)
            .map(|(a, b)| a + w * (b - a))
            .collect(),
        u2: before
            .state
            .u2
            .iter()
            .zip(&after.state.u2)
            .map(|(a, b)| a + w * (b - a))
            .collect(),
    };
    match newton_solve(grid, model, target, &init, &cfg.newton) {
        Ok(out) if out.class == StateClass::Positive => {
            let d = out.state.to_interleaved();
            let b = before.state.to_interleaved();
            let diff: Vec<f64> = d.iter().zip(&b).map(|(x, y)| x - y).collect();
            let dl = target - before.lambda;
            let dist = (weighted_dot(&diff, &diff) + dl * dl).sqrt();
            BranchPoint::new(target, out.state, sign(dl), dist, out.iterations)
        }
        _ => after,
    }
}

/// Cumulative weighted arclength along the branch.
fn arclength(branch: &Branch) -> Vec<f64> {
    let mut s = vec![0.0; branch.points.len()];
    for k in 1..branch.points.len() {
        let a = branch.points[k - 1].state.to_interleaved();
        let b = branch.points[k].state.to_interleaved();
        let d: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
        let dl = branch.points[k].lambda - branch.points[k - 1].lambda;
        s[k] = s[k - 1] + (weighted_dot(&d, &d) + dl * dl).sqrt();
    }
    s
}

/// Every sign change of `dλ/ds`, each refined by a quadratic through the
/// three points around the local extremum.
pub fn detect_folds(branch: &Branch) -> Vec<Fold> {
    let pts = &branch.points;
    if pts.len() < 3 {
        return Vec::new();
    }
    let s = arclength(branch);
    let mut folds = Vec::new();
    for k in 1..pts.len() - 1 {
        let a = sign(pts[k].lambda - pts[k - 1].lambda);
        let b = sign(pts[k + 1].lambda - pts[k].lambda);
        if a == 0 || b == 0 || a == b {
            continue;
        }
        let (s0, s1, s2) = (s[k - 1], s[k], s[k + 1]);
        let (l0, l1, l2) = (pts[k - 1].lambda, pts[k].lambda, pts[k + 1].lambda);
        let d01 = (l1 - l0) / (s1 - s0);
        let d12 = (l2 - l1) / (s2 - s1);
        let curv = (d12 - d01) / (s2 - s0);
        let mut lam = l1;
        if curv != 0.0 && curv.is_finite() {
            // l(s) = l1 + slope (s - s1) + curv (s - s1)^2 with slope at s1
            let slope = d01 + curv * (s1 - s0);
            let s_star = s1 - slope / (2.0 * curv);
            if s_star >= s0 && s_star <= s2 {
                lam = l1 + slope * (s_star - s1) + curv * (s_star - s1).powi(2);
            }
        }
        folds.push(Fold {
            lambda: lam,
            index: k,
        });
    }
    folds
}

/// The fold with the largest λ, or `None` for a monotone branch. Uses the
/// quadratic estimate only; [`Branch::fold`] holds the refined value.
pub fn detect_fold(branch: &Branch) -> Option<Fold> {
    detect_folds(branch)
        .into_iter()
        .max_by(|a, b| a.lambda.total_cmp(&b.lambda))
}

/// All distinct positive solutions at `lambda` reachable from branch
/// segments crossing it, sorted by pair_norm.
pub fn solutions_at(
    branch: &Branch,
    lambda: f64,
    grid: &RadialGrid,
    model: &NonlinearityModel,
    cfg: &NewtonConfig,
) -> Result<Vec<SystemState>> {
    if !(lambda > 0.0) {
        return Err(Error::Domain(format!(
            "lambda must be positive, got {lambda}"
        )));
    }
    let mut found: Vec<(f64, SystemState)> = Vec::new();
    for w in branch.points.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        let (da, db) = (a.lambda - lambda, b.lambda - lambda);
        if da * db > 0.0 || a.lambda == b.lambda {
            continue;
        }
        let t = da / (da - db);
        let init = SystemState {
            u1: a
                .state
                .u1
                .iter()
                .zip(&b.state.u1)
                .map(|(x, y)| x + t * (y - x))
                .collect(),
            u2: a
                .state
                .u2
                .iter()
                .zip(&b.state.u2)
                .map(|(x, y)| x + t * (y - x))
                .collect(),
        };
        let Ok(out) = newton_solve(grid, model, lambda, &init, cfg) else {
            continue;
        };
        if out.class != StateClass::Positive {
            continue;
        }
        let n = pair_norm(&out.state);
        if found
            .iter()
            .all(|(m, _)| (n - m).abs() > DEDUP_GAP * n.max(*m))
        {
            found.push((n, out.state));
        }
    }
    found.sort_by(|x, y| x.0.total_cmp(&y.0));
    Ok(found.into_iter().map(|(_, s)| s).collect())
}
