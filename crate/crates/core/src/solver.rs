//! Newton solver for the discretized coupled system.
//!
//! Unknowns are interleaved, `(u1_0, u2_0, u1_1, u2_1, ...)`. Rows `2j`,
//! `2j + 1` for `j < M` are the radial operator scaled by `h^2`; the two
//! rows at `j = M` are the flux conditions `u_i'(R) - g_i(u_j(R)) = 0`.

use serde::{Deserialize, Serialize};

use crate::banded::{BandLu, BandMatrix};
use crate::error::{Error, Result};
use crate::grid::{pair_norm, RadialGrid, SystemState};
use crate::model::NonlinearityModel;

/// Lower and upper bandwidth of the coupled Jacobian.
pub const JAC_KL: usize = 4;
pub const JAC_KU: usize = 2;

/// States with `pair_norm` at or below this are treated as the trivial solution.
pub const TRIVIAL_NORM: f64 = 1e-9;
/// A state is positive when every node exceeds this multiple of its pair_norm.
pub const POSITIVITY_FACTOR: f64 = 1e-12;

/// Boundary flux law `du_i/dη = g_i(u_j(R))`, `i != j`.
pub trait BoundaryLaw {
    fn flux(&self, i: usize, s: f64) -> f64;
    fn dflux(&self, i: usize, s: f64) -> f64;
}

/// `g_i = λ f_i`.
#[derive(Debug, Clone, Copy)]
pub struct Scaled<'a> {
    pub model: &'a NonlinearityModel,
    pub lambda: f64,
}

impl BoundaryLaw for Scaled<'_> {
    fn flux(&self, i: usize, s: f64) -> f64 {
        self.lambda * self.model.f(i, s)
    }
    fn dflux(&self, i: usize, s: f64) -> f64 {
        self.lambda * self.model.df(i, s)
    }
}

/// Limiting law `g1 = b2 s^p2`, `g2 = b1 s^p1`, odd-extended to `s < 0`.
#[derive(Debug, Clone, Copy)]
pub struct PurePower {
    pub b1: f64,
    pub b2: f64,
    pub p1: f64,
    pub p2: f64,
}

impl PurePower {
    pub fn of(model: &NonlinearityModel) -> Self {
        Self {
            b1: model.b1(),
            b2: model.b2(),
            p1: model.p1(),
            p2: model.p2(),
        }
    }

    fn coeffs(&self, i: usize) -> (f64, f64) {
        if i == 1 {
            (self.b2, self.p2)
        } else {
            (self.b1, self.p1)
        }
    }
}

impl BoundaryLaw for PurePower {
    fn flux(&self, i: usize, s: f64) -> f64 {
        let (b, p) = self.coeffs(i);
        b * s.signum() * s.abs().powf(p)
    }
    fn dflux(&self, i: usize, s: f64) -> f64 {
        let (b, p) = self.coeffs(i);
        b * p * s.abs().powf(p - 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NewtonConfig {
    /// Convergence when `max|F| <= tol_residual * max(1, max|U|)`.
    pub tol_residual: f64,
    pub max_iter: usize,
    /// Smallest backtracking factor.
    pub min_damping: f64,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        Self {
            tol_residual: 1e-10,
            max_iter: 50,
            min_damping: 2f64.powi(-20),
        }
    }
}

impl NewtonConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol_residual > 0.0)
            || self.max_iter < 1
            || !(self.min_damping > 0.0 && self.min_damping <= 1.0)
        {
            return Err(Error::Config(format!(
                "invalid Newton configuration {self:?}"
            )));
        }
        Ok(())
    }

    pub(crate) fn threshold(&self, u: &[f64]) -> f64 {
        self.tol_residual * max_abs(u).max(1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StateClass {
    Positive,
    Trivial,
    NonPositive,
}

pub fn classify(state: &SystemState) -> StateClass {
    let norm = pair_norm(state);
    if norm <= TRIVIAL_NORM {
        StateClass::Trivial
    } else if state.min_node() > POSITIVITY_FACTOR * norm {
        StateClass::Positive
    } else {
        StateClass::NonPositive
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewtonOutcome {
    pub state: SystemState,
    pub iterations: usize,
    /// Max-norm of the final residual.
    pub residual: f64,
    /// Backtracking factor of the last accepted step.
    pub damping: f64,
    /// Residual max-norm before each iteration, then the final value.
    pub history: Vec<f64>,
    pub class: StateClass,
}

pub(crate) fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |a, x| a.max(x.abs()))
}

fn check_state(grid: &RadialGrid, state: &SystemState) -> Result<()> {
    grid.check_len(&state.u1)?;
    grid.check_len(&state.u2)
}

pub fn residual_with<L: BoundaryLaw>(
    grid: &RadialGrid,
    law: &L,
    state: &SystemState,
) -> Result<Vec<f64>> {
    check_state(grid, state)?;
    let m = grid.intervals();
    let h2 = grid.h() * grid.h();
    let l1 = grid.apply_operator(&state.u1)?;
    let l2 = grid.apply_operator(&state.u2)?;
    let mut out = vec![0.0; 2 * (m + 1)];
    for j in 0..m {
        out[2 * j] = h2 * l1[j];
        out[2 * j + 1] = h2 * l2[j];
    }
    let (b1, b2) = state.boundary();
    out[2 * m] = grid.flux_unchecked(&state.u1) - law.flux(1, b2);
    out[2 * m + 1] = grid.flux_unchecked(&state.u2) - law.flux(2, b1);
    Ok(out)
}

pub fn jacobian_with<L: BoundaryLaw>(
    grid: &RadialGrid,
    law: &L,
    state: &SystemState,
) -> Result<BandMatrix> {
    check_state(grid, state)?;
    let m = grid.intervals();
    let h2 = grid.h() * grid.h();
    let n = 2 * (m + 1);
    let mut jac = BandMatrix::zeros(n, JAC_KL, JAC_KU);
    for c in 0..2 {
        for j in 0..m {
            let (l, d, r) = grid.stencil(j);
            let row = 2 * j + c;
            if j > 0 {
                jac.set(row, row - 2, h2 * l);
            }
            jac.set(row, row, h2 * d);
            jac.set(row, row + 2, h2 * r);
        }
        let row = 2 * m + c;
        let w = grid.flux_weights();
        jac.set(row, row, w[0]);
        jac.set(row, row - 2, w[1]);
        jac.set(row, row - 4, w[2]);
    }
    let (b1, b2) = state.boundary();
    jac.set(2 * m, 2 * m + 1, -law.dflux(1, b2));
    jac.set(2 * m + 1, 2 * m, -law.dflux(2, b1));
    Ok(jac)
}

/// Residual of the coupled system at parameter `lambda`.
pub fn residual(
    grid: &RadialGrid,
    model: &NonlinearityModel,
    lambda: f64,
    state: &SystemState,
) -> Result<Vec<f64>> {
    check_lambda(lambda)?;
    residual_with(grid, &Scaled { model, lambda }, state)
}

/// Analytic Jacobian of [`residual`] with respect to the interleaved unknowns.
pub fn jacobian(
    grid: &RadialGrid,
    model: &NonlinearityModel,
    lambda: f64,
    state: &SystemState,
) -> Result<BandMatrix> {
    check_lambda(lambda)?;
    jacobian_with(grid, &Scaled { model, lambda }, state)
}

/// `∂F/∂λ`: nonzero only in the two flux rows.
pub fn lambda_derivative(
    grid: &RadialGrid,
    model: &NonlinearityModel,
    state: &SystemState,
) -> Vec<f64> {
    let m = grid.intervals();
    let mut out = vec![0.0; 2 * (m + 1)];
    let (b1, b2) = state.boundary();
    out[2 * m] = -model.f(1, b2);
    out[2 * m + 1] = -model.f(2, b1);
    out
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda >= 0.0 && lambda.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "lambda must be nonnegative, got {lambda}"
        )))
    }
}

/// Damped Newton with backtracking on the residual max-norm.
pub fn newton_with<L: BoundaryLaw>(
    grid: &RadialGrid,
    law: &L,
    init: &SystemState,
    cfg: &NewtonConfig,
) -> Result<NewtonOutcome> {
    cfg.validate()?;
    let mut u = init.to_interleaved();
    let mut state = init.clone();
    let mut f = residual_with(grid, law, &state)?;
    let mut fnorm = max_abs(&f);
    let mut history = vec![fnorm];
    let mut damping = 1.0;
    for it in 0..=cfg.max_iter {
        if fnorm <= cfg.threshold(&u) {
            let class = classify(&state);
            return Ok(NewtonOutcome {
                state,
                iterations: it,
                residual: fnorm,
                damping,
                history,
                class,
            });
        }
        if it == cfg.max_iter || !fnorm.is_finite() {
            break;
        }
        let lu = jacobian_with(grid, law, &state)?.factor()?;
        let mut step = f.clone();
        lu.solve_in_place(&mut step);
        let mut t = 1.0;
        loop {
            let trial: Vec<f64> = u.iter().zip(&step).map(|(a, d)| a - t * d).collect();
            let trial_state = SystemState::from_interleaved(&trial);
            let trial_f = residual_with(grid, law, &trial_state)?;
            let trial_norm = max_abs(&trial_f);
            if trial_norm < fnorm || t <= cfg.min_damping {
                u = trial;
                state = trial_state;
                f = trial_f;
                fnorm = trial_norm;
                damping = t;
                break;
            }
            t *= 0.5;
        }
        history.push(fnorm);
    }
    Err(Error::NonConvergence {
        iterations: cfg.max_iter,
        residual: fnorm,
        trace: history,
        last: Some(Box::new(state)),
    })
}

pub fn newton_solve(
    grid: &RadialGrid,
    model: &NonlinearityModel,
    lambda: f64,
    init: &SystemState,
    cfg: &NewtonConfig,
) -> Result<NewtonOutcome> {
    check_lambda(lambda)?;
    newton_with(grid, &Scaled { model, lambda }, init, cfg)
}

/// Nontrivial positive solution of the pure-power limiting problem
/// `∂w1/∂η = b2 w2^p2`, `∂w2/∂η = b1 w1^p1`.
pub fn solve_limit_problem(
    grid: &RadialGrid,
    model: &NonlinearityModel,
    init: &SystemState,
    cfg: &NewtonConfig,
) -> Result<NewtonOutcome> {
    let out = newton_with(grid, &PurePower::of(model), init, cfg)?;
    match out.class {
        StateClass::Positive => Ok(out),
        StateClass::Trivial => Err(Error::CollapsedToZero(
            "Newton reached the trivial limit solution; retry with a larger initial amplitude"
                .into(),
        )),
        StateClass::NonPositive => Err(Error::Domain(format!(
            "limit problem converged to a non-positive state (min node {:.3e})",
            out.state.min_node()
        ))),
    }
}

/// Amplitudes tried, in order, by [`solve_limit_problem_swept`].
pub const LIMIT_AMPLITUDES: [f64; 4] = [0.5, 1.0, 2.0, 4.0];

/// Runs [`solve_limit_problem`] from `c (φ1, φ1)` for each amplitude in
/// [`LIMIT_AMPLITUDES`] and returns the first nontrivial positive solution.
pub fn solve_limit_problem_swept(
    grid: &RadialGrid,
    model: &NonlinearityModel,
    phi1: &[f64],
    cfg: &NewtonConfig,
) -> Result<(f64, NewtonOutcome)> {
    let mut last_err = None;
    for &c in &LIMIT_AMPLITUDES {
        let init = SystemState::from_profile(phi1, c, c);
        match solve_limit_problem(grid, model, &init, cfg) {
            Ok(out) => return Ok((c, out)),
            Err(e) => last_err = Some(e),
        }
    }
    Err(last_err.expect("amplitude list is nonempty"))
}

/// Factored solution operator of `-Δv + v = 0`, `v'(R) = flux`.
#[derive(Debug, Clone)]
pub struct LinearBvp {
    grid: RadialGrid,
    lu: BandLu,
}

impl LinearBvp {
    pub fn new(grid: &RadialGrid) -> Result<Self> {
        let lu = grid.flux_system(0.0).factor()?;
        Ok(Self { grid: *grid, lu })
    }

    pub fn solve_one(&self, flux: f64) -> Vec<f64> {
        let m = self.grid.intervals();
        let mut rhs = vec![0.0; m + 1];
        rhs[m] = flux;
        self.lu.solve_in_place(&mut rhs);
        rhs
    }

    pub fn solve(&self, flux1: f64, flux2: f64) -> SystemState {
        SystemState {
            u1: self.solve_one(flux1),
            u2: self.solve_one(flux2),
        }
    }
}

pub fn linear_bvp_solve(grid: &RadialGrid, flux1: f64, flux2: f64) -> Result<SystemState> {
    Ok(LinearBvp::new(grid)?.solve(flux1, flux2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::steklov::steklov_eigenpair;
    use approx::assert_relative_eq;

    fn grid(m: usize) -> RadialGrid {
        RadialGrid::new(3, 1.0, m).unwrap()
    }

    #[test]
    fn trivial_state_is_a_root() {
        let g = grid(64);
        let model = NonlinearityModel::reference();
        let zero = SystemState::zeros(g.len());
        let r = residual(&g, &model, 0.7, &zero).unwrap();
        assert!(r.iter().all(|&v| v == 0.0));
        let out = newton_solve(&g, &model, 0.7, &zero, &NewtonConfig::default()).unwrap();
        assert_eq!(out.iterations, 0);
        assert_eq!(out.class, StateClass::Trivial);
        assert!(residual(&g, &model, -1.0, &zero).is_err());
    }

    #[test]
    fn kernel_has_zero_interior_rows_at_lambda_zero() {
        let g = grid(256);
        let model = NonlinearityModel::reference();
        let kernel = g.sample(|r| if r == 0.0 { 1.0 } else { r.sinh() / r });
        let c = 0.4;
        let st = SystemState::from_profile(&kernel, c, c);
        let r = residual(&g, &model, 0.0, &st).unwrap();
        let m = g.intervals();
        // interior rows are h^2-scaled: O(h^4)
        assert!(max_abs(&r[..2 * m]) < 1e-8);
        let gp = 1f64.cosh() - 1f64.sinh();
        assert_relative_eq!(r[2 * m], c * gp, epsilon = 1e-5);
        assert_relative_eq!(r[2 * m + 1], c * gp, epsilon = 1e-5);
    }

    #[test]
    fn jacobian_structure() {
        let g = grid(32);
        let model = NonlinearityModel::reference();
        let st = SystemState::from_profile(&vec![0.5; 33], 0.3, 0.2);
        let m = g.intervals();
        let j0 = jacobian(&g, &model, 0.0, &st).unwrap();
        assert_eq!(j0.get(2 * m, 2 * m + 1), 0.0);
        assert_eq!(j0.get(2 * m + 1, 2 * m), 0.0);
        let zero = SystemState::zeros(33);
        let jz = jacobian(&g, &model, 0.3, &zero).unwrap();
        assert_relative_eq!(jz.get(2 * m, 2 * m + 1), -0.3 * model.fp0(1));
        assert_relative_eq!(jz.get(2 * m + 1, 2 * m), -0.3 * model.fp0(2));
    }

    #[test]
    fn linear_bvp_examples() {
        let g = grid(1024);
        let zero = linear_bvp_solve(&g, 0.0, 0.0).unwrap();
        assert_eq!(pair_norm(&zero), 0.0);
        let pair = steklov_eigenpair(&g, 1e-10).unwrap();
        let v = linear_bvp_solve(&g, pair.mu1, 2.0 * pair.mu1).unwrap();
        for (a, b) in v.u1.iter().zip(&pair.phi1) {
            assert!((a - b).abs() < 1e-10);
        }
        for (a, b) in v.u2.iter().zip(&pair.phi1) {
            assert!((a - 2.0 * b).abs() < 1e-10);
        }
        let one = linear_bvp_solve(&g, 1.0, 1.0).unwrap();
        let exact = 1.0 / (2.0 / (1f64.exp().powi(2) - 1.0));
        assert!((one.boundary().0 - exact).abs() < 1e-5);
        assert_relative_eq!(exact, 3.19452, epsilon = 1e-5);
        assert!(one.min_node() > 0.0);
    }

    #[test]
    fn limit_problem_collapse_from_zero() {
        let g = grid(64);
        let model = NonlinearityModel::reference();
        let res = solve_limit_problem(
            &g,
            &model,
            &SystemState::zeros(g.len()),
            &NewtonConfig::default(),
        );
        assert!(matches!(res, Err(Error::CollapsedToZero(_))));
    }

    #[test]
    fn limit_problem_matches_algebraic_reduction() {
        let g = grid(256);
        let model = NonlinearityModel::reference();
        let pair = steklov_eigenpair(&g, 1e-12).unwrap();
        let (_, out) =
            solve_limit_problem_swept(&g, &model, &pair.phi1, &NewtonConfig::default()).unwrap();
        // mu W1 = W2^3, mu W2 = W1^2 / 2  =>  W2^5 = 2 mu^3
        let mu = pair.mu1;
        let w2 = (2.0 * mu.powi(3)).powf(0.2);
        let w1 = w2.powi(3) / mu;
        let (a, b) = out.state.boundary();
        assert_relative_eq!(a, w1, max_relative = 1e-9);
        assert_relative_eq!(b, w2, max_relative = 1e-9);
    }

    #[test]
    fn pure_power_is_odd() {
        let law = PurePower {
            b1: 0.5,
            b2: 1.0,
            p1: 2.0,
            p2: 3.0,
        };
        assert_eq!(law.flux(2, -2.0), -2.0);
        assert_eq!(law.flux(1, 2.0), 8.0);
        assert_eq!(law.dflux(2, -2.0), 2.0);
    }
}
