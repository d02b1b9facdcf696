//! Boundary nonlinearities `f1`, `f2` and the scalar data attached to them.
//!
//! The coupled system reads `du1/dn = lambda f1(u2)`, `du2/dn = lambda f2(u1)`
//! on the boundary sphere. Growth at infinity is indexed crosswise: `f1`
//! behaves like `b2 s^p2` and `f2` like `b1 s^p1`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Polynomial `a0 + a1 s + a2 s^2 + ...`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polynomial {
    coeffs: Vec<f64>,
}

impl Polynomial {
    pub fn new(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::Config(
                "polynomial needs at least one coefficient".into(),
            ));
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::Config(
                "polynomial coefficients must be finite".into(),
            ));
        }
        let mut coeffs = coeffs;
        while coeffs.len() > 1 && coeffs[coeffs.len() - 1] == 0.0 {
            coeffs.pop();
        }
        Ok(Self { coeffs })
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn leading(&self) -> f64 {
        self.coeffs[self.coeffs.len() - 1]
    }

    pub fn value(&self, s: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * s + c)
    }

    pub fn derivative(&self, s: f64) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .skip(1)
            .rev()
            .fold(0.0, |acc, (k, &c)| acc * s + k as f64 * c)
    }

    /// Sum of the terms of degree >= 2 (and the constant term), evaluated
    /// without cancellation against the linear part.
    fn nonlinear_part(&self, s: f64) -> f64 {
        let higher = self
            .coeffs
            .iter()
            .skip(2)
            .rev()
            .fold(0.0, |acc, &c| acc * s + c);
        self.coeffs[0] + higher * s * s
    }
}

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// One boundary nonlinearity with an evaluable first derivative.
#[derive(Clone)]
pub enum Nonlinearity {
    Polynomial(Polynomial),
    Custom {
        name: String,
        f: ScalarFn,
        df: ScalarFn,
    },
}

impl fmt::Debug for Nonlinearity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Nonlinearity::Polynomial(p) => f.debug_tuple("Polynomial").field(&p.coeffs).finish(),
            Nonlinearity::Custom { name, .. } => {
                f.debug_struct("Custom").field("name", name).finish()
            }
        }
    }
}

impl Nonlinearity {
    pub fn polynomial(coeffs: Vec<f64>) -> Result<Self> {
        Ok(Nonlinearity::Polynomial(Polynomial::new(coeffs)?))
    }

    pub fn custom(
        name: impl Into<String>,
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
        df: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Nonlinearity::Custom {
            name: name.into(),
            f: Arc::new(f),
            df: Arc::new(df),
        }
    }

    /// Value at `s`, with no domain check (polynomials extend naturally to `s < 0`).
    pub fn value(&self, s: f64) -> f64 {
        match self {
            Nonlinearity::Polynomial(p) => p.value(s),
            Nonlinearity::Custom { f, .. } => f(s),
        }
    }

    pub fn derivative(&self, s: f64) -> f64 {
        match self {
            Nonlinearity::Polynomial(p) => p.derivative(s),
            Nonlinearity::Custom { df, .. } => df(s),
        }
    }

    fn remainder(&self, s: f64) -> f64 {
        match self {
            Nonlinearity::Polynomial(p) => p.nonlinear_part(s),
            Nonlinearity::Custom { f, df, .. } => f(s) - df(0.0) * s,
        }
    }
}

/// Remainder limits `(liminf, limsup)` of `R_i(s)/s^nu` as `s -> 0+`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RemainderLimits {
    pub lower1: f64,
    pub upper1: f64,
    pub lower2: f64,
    pub upper2: f64,
    /// Half-spread of the last sampled decade per component; zero for analytic values.
    pub uncertainty: [f64; 2],
    pub analytic: bool,
}

impl RemainderLimits {
    pub fn analytic(lower1: f64, upper1: f64, lower2: f64, upper2: f64) -> Self {
        Self {
            lower1,
            upper1,
            lower2,
            upper2,
            uncertainty: [0.0; 2],
            analytic: true,
        }
    }
}

/// Scalar hypotheses data supplied alongside `f1`, `f2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub p1: f64,
    pub p2: f64,
    pub b1: f64,
    pub b2: f64,
    pub nu1: f64,
    pub nu2: f64,
    pub k: f64,
    pub r_lims: Option<RemainderLimits>,
}

#[derive(Debug, Clone)]
pub struct NonlinearityModel {
    name: String,
    f1: Nonlinearity,
    f2: Nonlinearity,
    fp0: [f64; 2],
    params: ModelParams,
}

/// Samples per decade used for remainder-limit estimation.
pub const REMAINDER_SAMPLES_PER_DECADE: usize = 25;
/// Default spread tolerance for remainder-limit estimation.
pub const REMAINDER_SPREAD_TOL: f64 = 1e-2;

impl NonlinearityModel {
    pub fn new(
        name: impl Into<String>,
        f1: Nonlinearity,
        f2: Nonlinearity,
        params: ModelParams,
    ) -> Result<Self> {
        let scalars = [
            params.p1, params.p2, params.b1, params.b2, params.nu1, params.nu2, params.k,
        ];
        if scalars.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("model parameters must be finite".into()));
        }
        if params.nu1 <= 1.0 || params.nu2 <= 1.0 {
            return Err(Error::Config(
                "remainder exponents nu1, nu2 must exceed 1".into(),
            ));
        }
        if let Some(r) = params.r_lims {
            if !(r.lower1 <= r.upper1 && r.lower2 <= r.upper2)
                || ![r.lower1, r.upper1, r.lower2, r.upper2]
                    .iter()
                    .all(|v| v.is_finite())
            {
                return Err(Error::Config(
                    "remainder limits must be finite with lower <= upper".into(),
                ));
            }
        }
        let fp0 = [f1.derivative(0.0), f2.derivative(0.0)];
        Ok(Self {
            name: name.into(),
            f1,
            f2,
            fp0,
            params,
        })
    }

    /// `f1 = s - s^2 + s^3`, `f2 = s + s^2/2`, `K = 3/4`; bifurcates to the right.
    pub fn reference() -> Self {
        let f1 = Nonlinearity::polynomial(vec![0.0, 1.0, -1.0, 1.0]).expect("static coefficients");
        let f2 = Nonlinearity::polynomial(vec![0.0, 1.0, 0.5]).expect("static coefficients");
        let params = ModelParams {
            p1: 2.0,
            p2: 3.0,
            b1: 0.5,
            b2: 1.0,
            nu1: 2.0,
            nu2: 2.0,
            k: 0.75,
            r_lims: Some(RemainderLimits::analytic(-1.0, -1.0, 0.5, 0.5)),
        };
        Self::new("reference", f1, f2, params).expect("reference model is valid")
    }

    /// `f1 = f2 = s + s^2`, `K = 1`; bifurcates to the left.
    pub fn left() -> Self {
        let f = Nonlinearity::polynomial(vec![0.0, 1.0, 1.0]).expect("static coefficients");
        let params = ModelParams {
            p1: 2.0,
            p2: 2.0,
            b1: 1.0,
            b2: 1.0,
            nu1: 2.0,
            nu2: 2.0,
            k: 1.0,
            r_lims: Some(RemainderLimits::analytic(1.0, 1.0, 1.0, 1.0)),
        };
        Self::new("left", f.clone(), f, params).expect("left model is valid")
    }

    /// `f1 = f2 = s`. Not superlinear, so it fails the growth hypotheses.
    pub fn linear() -> Self {
        let f = Nonlinearity::polynomial(vec![0.0, 1.0]).expect("static coefficients");
        let params = ModelParams {
            p1: 1.0,
            p2: 1.0,
            b1: 1.0,
            b2: 1.0,
            nu1: 2.0,
            nu2: 2.0,
            k: 1.0,
            r_lims: Some(RemainderLimits::analytic(0.0, 0.0, 0.0, 0.0)),
        };
        Self::new("linear", f.clone(), f, params).expect("linear model is valid")
    }

    pub fn builtin(name: &str) -> Option<Self> {
        match name {
            "reference" => Some(Self::reference()),
            "left" => Some(Self::left()),
            "linear" => Some(Self::linear()),
            _ => None,
        }
    }

    /// Polynomial family; `p`/`b` default to the degree and leading coefficient
    /// of the opposite-index polynomial (`f1 ~ b2 s^p2`, `f2 ~ b1 s^p1`).
    pub fn from_polynomials(
        coeffs1: Vec<f64>,
        coeffs2: Vec<f64>,
        nu1: f64,
        nu2: f64,
        k: f64,
    ) -> Result<Self> {
        let poly1 = Polynomial::new(coeffs1)?;
        let poly2 = Polynomial::new(coeffs2)?;
        let params = ModelParams {
            p1: poly2.degree() as f64,
            p2: poly1.degree() as f64,
            b1: poly2.leading(),
            b2: poly1.leading(),
            nu1,
            nu2,
            k,
            r_lims: None,
        };
        Self::new(
            "polynomial",
            Nonlinearity::Polynomial(poly1),
            Nonlinearity::Polynomial(poly2),
            params,
        )
    }

    pub fn with_params(self, params: ModelParams) -> Result<Self> {
        Self::new(self.name, self.f1, self.f2, params)
    }

    pub fn name(&self) -> &str {
        &self.name
    }
    pub fn params(&self) -> &ModelParams {
        &self.params
    }
    pub fn p1(&self) -> f64 {
        self.params.p1
    }
    pub fn p2(&self) -> f64 {
        self.params.p2
    }
    pub fn b1(&self) -> f64 {
        self.params.b1
    }
    pub fn b2(&self) -> f64 {
        self.params.b2
    }
    pub fn k(&self) -> f64 {
        self.params.k
    }
    /// `nu = min(nu1, nu2)`.
    pub fn nu(&self) -> f64 {
        self.params.nu1.min(self.params.nu2)
    }
    /// `f_i'(0)`.
    pub fn fp0(&self, i: usize) -> f64 {
        self.fp0[i - 1]
    }
    /// `zeta = sqrt(f2'(0) / f1'(0))`.
    pub fn zeta(&self) -> f64 {
        (self.fp0[1] / self.fp0[0]).sqrt()
    }

    pub fn nonlinearity(&self, i: usize) -> &Nonlinearity {
        if i == 1 {
            &self.f1
        } else {
            &self.f2
        }
    }

    /// Unchecked `f_i(s)`, used inside Newton where iterates may leave `s >= 0`.
    #[inline]
    pub fn f(&self, i: usize, s: f64) -> f64 {
        self.nonlinearity(i).value(s)
    }

    /// Unchecked `f_i'(s)`.
    #[inline]
    pub fn df(&self, i: usize, s: f64) -> f64 {
        self.nonlinearity(i).derivative(s)
    }

    pub fn eval_f(&self, i: usize, s: f64) -> Result<f64> {
        check_index(i)?;
        if !(s >= 0.0) {
            return Err(Error::Domain(format!(
                "f{i} evaluated at negative argument {s}"
            )));
        }
        Ok(self.f(i, s))
    }

    pub fn eval_df(&self, i: usize, s: f64) -> Result<f64> {
        check_index(i)?;
        if !(s >= 0.0) {
            return Err(Error::Domain(format!(
                "f{i}' evaluated at negative argument {s}"
            )));
        }
        Ok(self.df(i, s))
    }

    /// `R_i(s) = f_i(s) - f_i'(0) s`.
    pub fn remainder(&self, i: usize, s: f64) -> Result<f64> {
        check_index(i)?;
        if !(s > 0.0) {
            return Err(Error::Domain(format!(
                "remainder of f{i} needs s > 0, got {s}"
            )));
        }
        Ok(self.nonlinearity(i).remainder(s))
    }

    pub fn remainder_limits(&self) -> Result<RemainderLimits> {
        self.remainder_limits_with_tol(REMAINDER_SPREAD_TOL)
    }

    /// Analytic limits when supplied; otherwise min/max of `R_i(s)/s^nu` over the
    /// last decade of a geometric sample `s = 1e-2 .. 1e-6`.
    pub fn remainder_limits_with_tol(&self, tol: f64) -> Result<RemainderLimits> {
        if let Some(r) = self.params.r_lims {
            return Ok(r);
        }
        self.estimate_remainder_limits(tol)
    }

    /// Always samples, ignoring any analytic override.
    pub fn estimate_remainder_limits(&self, tol: f64) -> Result<RemainderLimits> {
        let nu = self.nu();
        let per = REMAINDER_SAMPLES_PER_DECADE;
        let decades = 4;
        let n = per * decades + 1;
        let mut out = [(0.0, 0.0, 0.0); 2];
        for i in 1..=2 {
            let samples: Vec<(f64, f64)> = (0..n)
                .map(|k| {
                    let s = 1e-2 * 10f64.powf(-(k as f64) / per as f64);
                    (s, self.nonlinearity(i).remainder(s) / s.powf(nu))
                })
                .collect();
            let last = &samples[n - 1 - per..];
            let (lo, hi) = last
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(_, q)| {
                    (lo.min(q), hi.max(q))
                });
            if !lo.is_finite() || !hi.is_finite() {
                return Err(Error::EstimationFailed {
                    index: i,
                    spread: f64::INFINITY,
                    tol,
                    samples: last.to_vec(),
                });
            }
            let spread = hi - lo;
            let scale = 1f64.max(0.5 * (lo + hi).abs());
            let monotone = last.windows(2).all(|w| w[1].1 <= w[0].1)
                || last.windows(2).all(|w| w[1].1 >= w[0].1);
            if spread > tol * scale && !monotone {
                return Err(Error::EstimationFailed {
                    index: i,
                    spread,
                    tol: tol * scale,
                    samples: last.to_vec(),
                });
            }
            out[i - 1] = (lo, hi, 0.5 * spread);
        }
        Ok(RemainderLimits {
            lower1: out[0].0,
            upper1: out[0].1,
            lower2: out[1].0,
            upper2: out[1].1,
            uncertainty: [out[0].2, out[1].2],
            analytic: false,
        })
    }

    /// `(lower R0, upper R0)`.
    pub fn r0_bounds(&self) -> Result<(f64, f64)> {
        let lims = self.remainder_limits()?;
        Ok(r0_combination(self.zeta(), self.nu(), &lims))
    }

    pub fn validate_hypotheses(&self, n_dim: usize) -> HypothesisReport {
        let mut checks = Vec::new();
        let samples = sample_grid();
        let crit = if n_dim > 2 {
            n_dim as f64 / (n_dim as f64 - 2.0)
        } else {
            f64::INFINITY
        };
        let ps = [self.params.p1, self.params.p2];
        let bs = [self.params.b1, self.params.b2];
        for i in 1..=2 {
            let f = self.nonlinearity(i);
            let neg = samples.iter().find(|&&s| !(f.value(s) >= 0.0));
            checks.push(HypothesisCheck::new(
                format!("f{i}_nonnegative"),
                neg.is_none(),
                neg.map_or_else(
                    || "f >= 0 on sample grid".into(),
                    |s| format!("f{i}({s:e}) < 0"),
                ),
            ));
            let f0 = f.value(0.0);
            checks.push(HypothesisCheck::new(
                format!("f{i}_zero_at_origin"),
                f0 == 0.0,
                format!("f{i}(0) = {f0}"),
            ));
            let d0 = self.fp0(i);
            checks.push(HypothesisCheck::new(
                format!("f{i}_slope_positive"),
                d0 > 0.0,
                format!("f{i}'(0) = {d0}"),
            ));
            let k = self.params.k;
            let viol = samples
                .iter()
                .find(|&&s| f.value(s) < k * s - 1e-12 * (k * s).max(1e-300));
            checks.push(HypothesisCheck::new(
                format!("f{i}_linear_minorant"),
                k > 0.0 && viol.is_none(),
                viol.map_or_else(
                    || format!("f{i}(s) >= {k} s on sample grid"),
                    |s| format!("violated at s = {s:e}"),
                ),
            ));
            let dec = std::iter::once(&0.0)
                .chain(samples.iter())
                .find(|&&s| f.derivative(s) < 0.0);
            checks.push(HypothesisCheck::new(
                format!("f{i}_monotone"),
                dec.is_none(),
                dec.map_or_else(
                    || "f' >= 0 on sample grid".into(),
                    |s| format!("f{i}'({s:e}) < 0"),
                ),
            ));
            // f1 ~ b2 s^p2, f2 ~ b1 s^p1
            let (p, b) = if i == 1 {
                (ps[1], bs[1])
            } else {
                (ps[0], bs[0])
            };
            let err = |s: f64| (f.value(s) / s.powf(p) / b - 1.0).abs();
            let (e_lo, e_hi) = (err(1e2), err(1e6));
            checks.push(HypothesisCheck::new(
                format!("f{i}_growth"),
                b > 0.0 && e_hi <= 1e-2 && e_hi <= e_lo + 1e-12,
                format!("|f{i}(s)/(b s^p) - 1| = {e_lo:.3e} at 1e2, {e_hi:.3e} at 1e6"),
            ));
        }
        for (j, &p) in ps.iter().enumerate() {
            let ok = p > 1.0 && p <= crit + 1e-12;
            checks.push(HypothesisCheck::new(
                format!("p{}_range", j + 1),
                ok,
                format!("p{} = {p}, admissible (1, {crit}]", j + 1),
            ));
        }
        let both = (ps[0] - crit).abs() <= 1e-12 && (ps[1] - crit).abs() <= 1e-12;
        checks.push(HypothesisCheck::new(
            "not_both_critical",
            !both,
            format!("critical exponent N/(N-2) = {crit}"),
        ));
        checks.push(HypothesisCheck::new(
            "dimension",
            n_dim > 2,
            format!("N = {n_dim}"),
        ));
        HypothesisReport { checks }
    }
}

pub(crate) fn r0_combination(zeta: f64, nu: f64, lims: &RemainderLimits) -> (f64, f64) {
    let w1 = 0.5 * (zeta / (1.0 + zeta)).powf(nu - 1.0);
    let w2 = 0.5 * (1.0 / (1.0 + zeta)).powf(nu - 1.0);
    (
        w1 * lims.lower1 + w2 * lims.lower2,
        w1 * lims.upper1 + w2 * lims.upper2,
    )
}

fn check_index(i: usize) -> Result<()> {
    if i == 1 || i == 2 {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "component index must be 1 or 2, got {i}"
        )))
    }
}

/// Geometric sample `1e-8 ..= 1e3`, ten points per decade.
pub fn sample_grid() -> Vec<f64> {
    (0..=110)
        .map(|k| 1e-8 * 10f64.powf(k as f64 / 10.0))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl HypothesisCheck {
    fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisReport {
    pub checks: Vec<HypothesisCheck>,
}

impl HypothesisReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn passed(&self, name: &str) -> Option<bool> {
        self.checks
            .iter()
            .find(|c| c.name == name)
            .map(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &HypothesisCheck> {
        self.checks.iter().filter(|c| !c.passed)
    }
}
