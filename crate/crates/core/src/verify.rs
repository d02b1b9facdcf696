//! Acceptance checks shared by the `verify` command and the test suite.
//!
//! Each check returns a [`CheckResult`] instead of panicking so a caller can
//! print the whole table. Branch runs are cached on [`Suite`] and reused by
//! the checks that need them.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analysis::{
    bifurcation_point, jordan_from_slopes, nonexistence_bound, rescale_check, slope_fit,
    slope_fit_config, slope_prediction, theta_exponents, RescaleTable,
};
use crate::continuation::{continue_branch_from, Branch, ContinuationConfig};
use crate::error::Result;
use crate::grid::{pair_norm, RadialGrid, SystemState};
use crate::model::NonlinearityModel;
use crate::monotone::{
    build_subsolution, default_epsilon, monotone_iterate_observed, second_solution,
};
use crate::solver::{jacobian, newton_solve, residual, solve_limit_problem_swept, StateClass};
use crate::steklov::{steklov_eigenpair, SteklovPair};

/// Seed for every random sample drawn by the checks.
pub const SEED: u64 = 0x5eed_2d0c;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl CheckResult {
    fn from(name: &str, started: Instant, out: Result<(bool, String)>) -> Self {
        let (passed, detail) = out.unwrap_or_else(|e| (false, format!("error: {e}")));
        Self {
            name: name.to_string(),
            passed,
            detail,
            seconds: started.elapsed().as_secs_f64(),
        }
    }

    pub fn line(&self) -> String {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        format!(
            "{verdict} {:<18} {:>8.2}s  {}",
            self.name, self.seconds, self.detail
        )
    }
}

/// `|μ1(M) - exact|` for `N = 3`, `R = 1`.
pub fn steklov_exact_ball3() -> f64 {
    let e2 = std::f64::consts::E.powi(2);
    2.0 / (e2 - 1.0)
}

pub struct Suite {
    pub grid: RadialGrid,
    pub cont: ContinuationConfig,
    pair: Option<SteklovPair>,
    reference_branch: Option<Branch>,
}

impl Suite {
    /// Reference ball `N = 3`, `R = 1` with `M` intervals.
    pub fn new(intervals: usize, cont: ContinuationConfig) -> Result<Self> {
        cont.validate()?;
        Ok(Self {
            grid: RadialGrid::new(3, 1.0, intervals)?,
            cont,
            pair: None,
            reference_branch: None,
        })
    }

    fn pair(&mut self) -> Result<SteklovPair> {
        if self.pair.is_none() {
            self.pair = Some(steklov_eigenpair(&self.grid, 1e-12)?);
        }
        Ok(self.pair.clone().expect("set above"))
    }

    /// Full reference branch down to `λ_stop_low`.
    pub fn reference_branch(&mut self) -> Result<Branch> {
        if self.reference_branch.is_none() {
            let pair = self.pair()?;
            let b = continue_branch_from(
                &self.grid,
                &NonlinearityModel::reference(),
                &pair,
                &self.cont,
            )?;
            self.reference_branch = Some(b);
        }
        Ok(self.reference_branch.clone().expect("set above"))
    }

    pub fn run_all(&mut self) -> Vec<CheckResult> {
        vec![
            check_steklov(),
            self.check_bifurcation_point(),
            self.check_slopes(),
            check_theta(),
            self.check_rescaling(),
            self.check_nonexistence(),
            self.check_multiplicity(),
            check_jacobian(),
            check_jordan(),
        ]
    }

    pub fn check_bifurcation_point(&mut self) -> CheckResult {
        let t = Instant::now();
        let out = (|| {
            let pair = self.pair()?;
            let model = NonlinearityModel::reference();
            let mu0 = bifurcation_point(&model, pair.mu1)?;
            let mut devs = Vec::new();
            let mut tangent_err = f64::NAN;
            for eps in [1e-3, 1e-4, 1e-5] {
                let cfg = ContinuationConfig {
                    ds0: eps,
                    ds_max: eps,
                    ds_min: eps * 1e-4,
                    eps_step_off: eps,
                    max_points: 10,
                    ..self.cont
                };
                let b = continue_branch_from(&self.grid, &model, &pair, &cfg)?;
                let dev = b
                    .points
                    .iter()
                    .map(|p| (p.lambda - mu0).abs())
                    .fold(0.0, f64::max);
                devs.push(dev);
                let first = &b.points[0];
                let tangent = crate::continuation::initial_tangent(&model, &pair);
                let tn = tangent.scaled(1.0 / pair_norm(&tangent));
                tangent_err = first.state.scaled(1.0 / first.norm).max_diff(&tn);
            }
            let shrinking = devs.windows(2).all(|w| w[1] <= w[0]);
            let passed = shrinking && devs[2] <= 1e-3 && devs[0] <= 1e-3 && tangent_err <= 1e-2;
            Ok((
                passed,
                format!(
                    "max|lambda-mu0| over 10 points: {:.2e}, {:.2e}, {:.2e}; tangent error {:.2e}",
                    devs[0], devs[1], devs[2], tangent_err
                ),
            ))
        })();
        CheckResult::from("bifurcation_point", t, out)
    }

    pub fn slope_branch(&mut self, model: &NonlinearityModel) -> Result<Branch> {
        let pair = self.pair()?;
        continue_branch_from(&self.grid, model, &pair, &slope_fit_config(&self.cont))
    }

    pub fn check_slopes(&mut self) -> CheckResult {
        let t = Instant::now();
        let out = (|| {
            let pair = self.pair()?;
            let target = -0.03913;
            let reference = NonlinearityModel::reference();
            let b = self.slope_branch(&reference)?;
            let fit_ref = slope_fit(&b, b.mu0, reference.nu())?;
            let ok_ref = ((fit_ref - target) / target).abs() <= 0.05;

            let left = NonlinearityModel::left();
            let b = self.slope_branch(&left)?;
            let fit_left = slope_fit(&b, b.mu0, left.nu())?;
            let pred = slope_prediction(&left, &pair, &self.grid)?;
            let p = 0.5 * (pred.lower + pred.upper);
            let ok_left = fit_left > 0.0 && ((fit_left - p) / p).abs() <= 0.05;
            Ok((
                ok_ref && ok_left,
                format!("reference fit {fit_ref:.6} (target {target}); left fit {fit_left:.6} (prediction {p:.6})"),
            ))
        })();
        CheckResult::from("direction_slope", t, out)
    }

    /// Branch tail rescaled against the limiting problem.
    pub fn rescale_table(&mut self) -> Result<RescaleTable> {
        let pair = self.pair()?;
        let model = NonlinearityModel::reference();
        let b = self.reference_branch()?;
        let (_, limit) =
            solve_limit_problem_swept(&self.grid, &model, &pair.phi1, &self.cont.newton)?;
        rescale_check(&b, theta_exponents(&model)?, &limit.state)
    }

    pub fn check_rescaling(&mut self) -> CheckResult {
        let t = Instant::now();
        let out = self.rescale_table().map(|table| {
            let last = table.rows.last().expect("nonempty");
            (
                table.passes(0.02),
                format!(
                    "{} tail points, ratios at lambda={:.2e}: ({:.5}, {:.5}), monotone={}",
                    table.rows.len(),
                    last.lambda,
                    last.ratio1,
                    last.ratio2,
                    table.monotone
                ),
            )
        });
        CheckResult::from("rescaling", t, out)
    }

    pub fn check_nonexistence(&mut self) -> CheckResult {
        let t = Instant::now();
        let out = (|| {
            let pair = self.pair()?;
            let model = NonlinearityModel::reference();
            let bound = nonexistence_bound(&model, pair.mu1)?;
            let mut positives = 0;
            for factor in [1.01, 1.5, 3.0] {
                let lambda = factor * bound;
                for k in 0..20 {
                    let amp = 10f64.powf(-2.0 + 4.0 * k as f64 / 19.0);
                    let init = SystemState::from_profile(&pair.phi1, amp, amp);
                    if let Ok(o) =
                        newton_solve(&self.grid, &model, lambda, &init, &self.cont.newton)
                    {
                        if o.class == StateClass::Positive {
                            positives += 1;
                        }
                    }
                }
            }
            let b = self.reference_branch()?;
            let lmax = b.max_lambda();
            Ok((
                positives == 0 && lmax <= bound + 1e-8,
                format!("{positives} positive Newton solutions above mu1/K = {bound:.6}; branch max lambda {lmax:.6}"),
            ))
        })();
        CheckResult::from("nonexistence", t, out)
    }

    pub fn check_multiplicity(&mut self) -> CheckResult {
        let t = Instant::now();
        let out = (|| {
            let pair = self.pair()?;
            let model = NonlinearityModel::reference();
            let b = self.reference_branch()?;
            let Some(fold) = b.fold() else {
                return Ok((false, "branch has no fold".to_string()));
            };
            let lambda = 0.5 * (b.mu0 + fold.lambda);
            let sec = second_solution(&self.grid, &model, &pair, lambda, &b, &self.cont.newton)?;
            let gap_ok = sec.branch_states.len() >= 2
                && pair_norm(&sec.branch_states[sec.branch_states.len() - 1])
                    - pair_norm(&sec.branch_states[0])
                    > 1e-3;
            let below = sec
                .branch_states
                .iter()
                .all(|s| sec.minimal.le_nodewise(s, 1e-8 * pair_norm(s).max(1.0)));
            let threshold = |s: &SystemState| self.cont.newton.threshold(&s.to_interleaved());
            let res_ok = sec.residuals.0 <= threshold(&sec.minimal)
                && sec.residuals.1 <= threshold(&sec.other);
            // replay the iteration and watch every step
            let (_, sub) =
                build_subsolution(&self.grid, &model, &pair, lambda, default_epsilon(&model))?;
            let mut prev: Option<SystemState> = None;
            let mut nondecreasing = true;
            monotone_iterate_observed(
                &self.grid,
                &model,
                lambda,
                &sub,
                None,
                1e-13,
                100_000,
                |_, u| {
                    if let Some(p) = &prev {
                        nondecreasing &= p.le_nodewise(u, 1e-12 * pair_norm(u));
                    }
                    prev = Some(u.clone());
                },
            )?;
            Ok((
                gap_ok && below && res_ok && nondecreasing,
                format!(
                    "lambda {lambda:.6}: {} branch states, gap {:.4}, residuals ({:.1e}, {:.1e}), {} monotone steps",
                    sec.branch_states.len(),
                    sec.gap,
                    sec.residuals.0,
                    sec.residuals.1,
                    sec.iterations
                ),
            ))
        })();
        CheckResult::from("multiplicity", t, out)
    }
}

pub fn check_steklov() -> CheckResult {
    let t = Instant::now();
    let out = (|| {
        let exact = steklov_exact_ball3();
        let err = |m: usize| -> Result<f64> {
            let g = RadialGrid::new(3, 1.0, m)?;
            Ok((steklov_eigenpair(&g, 1e-12)?.mu1 - exact).abs())
        };
        let (e256, e512, e1024, e2048) = (err(256)?, err(512)?, err(1024)?, err(2048)?);
        let (r1, r2) = (e256 / e512, e512 / e1024);
        let ok_ratio = (r1 - 4.0).abs() <= 0.6 && (r2 - 4.0).abs() <= 0.6;
        let elapsed = t.elapsed().as_secs_f64();
        Ok((
            e2048 <= 1e-6 && ok_ratio && elapsed < 5.0,
            format!("error at M=2048 {e2048:.2e}; ratios {r1:.3}, {r2:.3}"),
        ))
    })();
    CheckResult::from("steklov", t, out)
}

pub fn check_theta() -> CheckResult {
    let t = Instant::now();
    let out = theta_exponents(&NonlinearityModel::reference()).map(|(t1, t2)| {
        let model = NonlinearityModel::reference();
        let r1 = (1.0 + t2 - t1 * model.p1()).abs();
        let r2 = (1.0 + t1 - t2 * model.p2()).abs();
        (
            (t1 - 0.8).abs() <= 1e-15 && (t2 - 0.6).abs() <= 1e-15 && r1 <= 1e-12 && r2 <= 1e-12,
            format!("theta = ({t1}, {t2}); residuals {r1:.1e}, {r2:.1e}"),
        )
    });
    CheckResult::from("theta", t, out)
}

/// Largest entrywise `|J - J_fd| / max(1, max|J|)` over 20 random positive
/// states at `M = 128`.
pub fn jacobian_fd_error() -> Result<f64> {
    let grid = RadialGrid::new(3, 1.0, 128)?;
    let model = NonlinearityModel::reference();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let n = 2 * grid.len();
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let lambda = rng.gen_range(0.05..1.0);
        let (c1, c2) = (rng.gen_range(0.01..3.0), rng.gen_range(0.01..3.0));
        let base = grid.sample(|r| 0.2 + r * r);
        let mut u = SystemState::from_profile(&base, c1, c2).to_interleaved();
        for v in u.iter_mut() {
            *v *= rng.gen_range(0.9..1.1);
        }
        let state = SystemState::from_interleaved(&u);
        let jac = jacobian(&grid, &model, lambda, &state)?.to_dense();
        let scale = jac.iter().flatten().fold(1.0f64, |m, v| m.max(v.abs()));
        for k in 0..n {
            let h = 1e-6 * u[k].abs().max(1.0);
            let mut up = u.clone();
            let mut dn = u.clone();
            up[k] += h;
            dn[k] -= h;
            let fp = residual(&grid, &model, lambda, &SystemState::from_interleaved(&up))?;
            let fm = residual(&grid, &model, lambda, &SystemState::from_interleaved(&dn))?;
            for row in 0..n {
                let fd = (fp[row] - fm[row]) / (2.0 * h);
                worst = worst.max((fd - jac[row][k]).abs() / scale);
            }
        }
    }
    Ok(worst)
}

pub fn check_jacobian() -> CheckResult {
    let t = Instant::now();
    let out = jacobian_fd_error().map(|e| (e <= 1e-6, format!("max relative FD error {e:.2e}")));
    CheckResult::from("jacobian", t, out)
}

/// Largest `|P J P^{-1} - A|` over 100 random slope pairs in `(0, 10]^2`.
pub fn jordan_identity_error() -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let d1 = 10.0 - rng.gen_range(0.0..10.0);
        let d2 = 10.0 - rng.gen_range(0.0..10.0);
        worst = worst.max(jordan_from_slopes(d1, d2)?.identity_error);
    }
    Ok(worst)
}

pub fn check_jordan() -> CheckResult {
    let t = Instant::now();
    let out = jordan_identity_error().map(|e| (e <= 1e-12, format!("max entry error {e:.2e}")));
    CheckResult::from("jordan", t, out)
}

/// Default grid and continuation settings of the acceptance suite.
pub fn default_suite() -> Result<Suite> {
    Suite::new(512, ContinuationConfig::default())
}
