//! Sub/supersolution machinery: the canonical subsolution `ε (a φ1, b φ1)`,
//! the monotone iteration `u^{k+1} = T(λ f(u^k))` and the second solution.

use crate::continuation::{solutions_at, Branch, DEDUP_GAP};
use crate::error::{Error, Result};
use crate::grid::{pair_norm, RadialGrid, SystemState};
use crate::model::NonlinearityModel;
use crate::solver::{max_abs, residual, LinearBvp, NewtonConfig};
use crate::steklov::SteklovPair;

pub const MAX_HALVINGS: usize = 40;

/// `ε0 = 1e-2 / max(a, b)` with `a = sqrt(f1'(0))`, `b = sqrt(f2'(0))`.
pub fn default_epsilon(model: &NonlinearityModel) -> f64 {
    1e-2 / model.fp0(1).sqrt().max(model.fp0(2).sqrt())
}

/// `(ε a φ1, ε b φ1)`, with ε halved until the discrete subsolution
/// inequalities `u_i'(R) <= λ f_i(u_j(R))` hold.
pub fn build_subsolution(
    grid: &RadialGrid,
    model: &NonlinearityModel,
    pair: &SteklovPair,
    lambda: f64,
    eps: f64,
) -> Result<(f64, SystemState)> {
    grid.check_len(&pair.phi1)?;
    if !(eps > 0.0) {
        return Err(Error::Domain(format!(
            "epsilon must be positive, got {eps}"
        )));
    }
    let (a, b) = (model.fp0(1).sqrt(), model.fp0(2).sqrt());
    let mut eps = eps;
    for _ in 0..=MAX_HALVINGS {
        let sub = SystemState::from_profile(&pair.phi1, eps * a, eps * b);
        let (r1, r2) = sub.boundary();
        let ok1 = grid.flux_unchecked(&sub.u1) <= lambda * model.f(1, r2);
        let ok2 = grid.flux_unchecked(&sub.u2) <= lambda * model.f(2, r1);
        if ok1 && ok2 {
            return Ok((eps, sub));
        }
        eps *= 0.5;
    }
    Err(Error::SubsolutionFailure {
        halvings: MAX_HALVINGS,
    })
}

#[derive(Debug, Clone)]
pub struct MonotoneOutcome {
    pub state: SystemState,
    pub iterations: usize,
    /// Max nodewise change of the final iteration.
    pub last_change: f64,
}

/// Iterates `u^{k+1} = T(λ f1(u2^k(R)), λ f2(u1^k(R)))` from `sub` until the
/// nodewise change drops to `tol`; returns the minimal solution above `sub`.
pub fn monotone_iterate(
    grid: &RadialGrid,
    model: &NonlinearityModel,
    lambda: f64,
    sub: &SystemState,
    sup: Option<&SystemState>,
    tol: f64,
    max_iter: usize,
) -> Result<MonotoneOutcome> {
    monotone_iterate_observed(grid, model, lambda, sub, sup, tol, max_iter, |_, _| {})
}

/// As [`monotone_iterate`], calling `observe(k, &u^k)` on every iterate.
#[allow(clippy::too_many_arguments)]
pub fn monotone_iterate_observed(
    grid: &RadialGrid,
    model: &NonlinearityModel,
    lambda: f64,
    sub: &SystemState,
    sup: Option<&SystemState>,
    tol: f64,
    max_iter: usize,
    mut observe: impl FnMut(usize, &SystemState),
) -> Result<MonotoneOutcome> {
    grid.check_len(&sub.u1)?;
    grid.check_len(&sub.u2)?;
    let monotone = model.validate_hypotheses(grid.n_dim());
    if monotone.passed("f1_monotone") != Some(true) || monotone.passed("f2_monotone") != Some(true)
    {
        return Err(Error::Domain(
            "monotone iteration needs nondecreasing f1, f2".into(),
        ));
    }
    let t = LinearBvp::new(grid)?;
    let mut u = sub.clone();
    observe(0, &u);
    let mut change = f64::INFINITY;
    for k in 1..=max_iter {
        let (r1, r2) = u.boundary();
        let next = t.solve(lambda * model.f(1, r2), lambda * model.f(2, r1));
        let slack = 1e-12 * pair_norm(&u);
        for (node, (new, old)) in next
            .u1
            .iter()
            .zip(&u.u1)
            .chain(next.u2.iter().zip(&u.u2))
            .enumerate()
        {
            if *new < *old - slack {
                return Err(Error::MonotonicityViolation {
                    iteration: k,
                    node: node % grid.len(),
                    drop: old - new,
                });
            }
        }
        if let Some(sup) = sup {
            let slack = 1e-12 * pair_norm(sup).max(1.0);
            for (node, (x, y)) in next
                .u1
                .iter()
                .zip(&sup.u1)
                .chain(next.u2.iter().zip(&sup.u2))
                .enumerate()
            {
                if *x > *y + slack {
                    return Err(Error::SupersolutionViolation {
                        iteration: k,
                        node: node % grid.len(),
                        excess: x - y,
                    });
                }
            }
        }
        change = next.max_diff(&u);
        u = next;
        observe(k, &u);
        if change <= tol {
            return Ok(MonotoneOutcome {
                state: u,
                iterations: k,
                last_change: change,
            });
        }
    }
    let res = residual(grid, model, lambda, &u)
        .map(|r| max_abs(&r))
        .unwrap_or(f64::NAN);
    Err(Error::NonConvergence {
        iterations: max_iter,
        residual: res.max(change),
        trace: Vec::new(),
        last: Some(Box::new(u)),
    })
}

/// Nodewise minimum of two states.
pub fn nodewise_min(a: &SystemState, b: &SystemState) -> SystemState {
    SystemState {
        u1: a.u1.iter().zip(&b.u1).map(|(x, y)| x.min(*y)).collect(),
        u2: a.u2.iter().zip(&b.u2).map(|(x, y)| x.min(*y)).collect(),
    }
}

#[derive(Debug, Clone)]
pub struct SecondSolution {
    /// Minimal solution from the monotone iteration.
    pub minimal: SystemState,
    /// Distinct branch solution at the same λ.
    pub other: SystemState,
    /// Every distinct positive branch solution at λ, sorted by pair_norm.
    pub branch_states: Vec<SystemState>,
    pub gap: f64,
    pub residuals: (f64, f64),
    pub iterations: usize,
}

/// Monotone tolerance and iteration cap used by [`second_solution`].
pub const SECOND_SOLUTION_TOL: f64 = 1e-13;
pub const SECOND_SOLUTION_MAX_ITER: usize = 100_000;

/// Minimal solution by monotone iteration plus the distinct branch
/// solution at `λ ∈ (μ0, λ̄)`.
pub fn second_solution(
    grid: &RadialGrid,
    model: &NonlinearityModel,
    pair: &SteklovPair,
    lambda: f64,
    branch: &Branch,
    cfg: &NewtonConfig,
) -> Result<SecondSolution> {
    if !(lambda > branch.mu0) {
        return Err(Error::Domain(format!(
            "second solution needs lambda > mu0 = {}, got {lambda}",
            branch.mu0
        )));
    }
    let states = solutions_at(branch, lambda, grid, model, cfg)?;
    let (_, sub) = build_subsolution(grid, model, pair, lambda, default_epsilon(model))?;
    let mono = monotone_iterate(
        grid,
        model,
        lambda,
        &sub,
        None,
        SECOND_SOLUTION_TOL,
        SECOND_SOLUTION_MAX_ITER,
    )?;
    let minimal = mono.state;
    let n_min = pair_norm(&minimal);
    // every branch solution is a supersolution, so the minimal one sits below all of them
    let ceiling = states
        .iter()
        .skip(1)
        .fold(states.first().cloned(), |acc, s| {
            acc.map(|a| nodewise_min(&a, s))
        });
    let other = states
        .iter()
        .filter(|s| {
            let n = pair_norm(s);
            (n - n_min).abs() > DEDUP_GAP * n.max(n_min)
        })
        .max_by(|a, b| pair_norm(a).total_cmp(&pair_norm(b)))
        .cloned();
    let Some(other) = other else {
        return Err(Error::NotDistinct { gap: 0.0 });
    };
    let gap = pair_norm(&other) - n_min;
    let ceiling = ceiling.expect("at least one branch state");
    if !minimal.le_nodewise(&ceiling, 1e-8 * pair_norm(&ceiling).max(1.0)) {
        return Err(Error::SupersolutionViolation {
            iteration: mono.iterations,
            node: 0,
            excess: minimal.max_diff(&ceiling),
        });
    }
    let r_min = max_abs(&residual(grid, model, lambda, &minimal)?);
    let r_other = max_abs(&residual(grid, model, lambda, &other)?);
    Ok(SecondSolution {
        minimal,
        other,
        branch_states: states,
        gap,
        residuals: (r_min, r_other),
        iterations: mono.iterations,
    })
}
