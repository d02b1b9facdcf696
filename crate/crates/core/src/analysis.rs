//! Scalar bifurcation analytics: `μ0`, the Jordan data of the linearization,
//! rescaling exponents, direction of bifurcation and the small-amplitude slope.

use serde::{Deserialize, Serialize};

use crate::continuation::{Branch, ContinuationConfig};
use crate::error::{Error, Result};
use crate::grid::{RadialGrid, SystemState};
use crate::model::NonlinearityModel;
use crate::steklov::SteklovPair;

pub type Mat2 = [[f64; 2]; 2];

fn mat_mul(a: &Mat2, b: &Mat2) -> Mat2 {
    let mut c = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            c[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    c
}

/// `μ0 = μ1 / sqrt(f1'(0) f2'(0))`.
pub fn bifurcation_point(model: &NonlinearityModel, mu1: f64) -> Result<f64> {
    let (a, b) = (model.fp0(1), model.fp0(2));
    if !(a > 0.0 && b > 0.0) {
        return Err(Error::Domain(format!(
            "bifurcation point needs f1'(0), f2'(0) > 0, got {a}, {b}"
        )));
    }
    Ok(mu1 / (a * b).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JordanData {
    pub sigma: f64,
    pub zeta: f64,
    pub a: Mat2,
    pub p: Mat2,
    pub p_inv: Mat2,
    pub j: Mat2,
    /// `max |P J P^{-1} - A|`.
    pub identity_error: f64,
}

/// Diagonalization `P^{-1} A P = diag(σ, -σ)` of `A = [[0, f1'(0)], [f2'(0), 0]]`.
pub fn jordan_data(model: &NonlinearityModel) -> Result<JordanData> {
    jordan_from_slopes(model.fp0(1), model.fp0(2))
}

pub fn jordan_from_slopes(d1: f64, d2: f64) -> Result<JordanData> {
    if !(d1 > 0.0 && d2 > 0.0) {
        return Err(Error::Domain(format!(
            "slopes at zero must be positive, got {d1}, {d2}"
        )));
    }
    let sigma = (d1 * d2).sqrt();
    let zeta = (d2 / d1).sqrt();
    let a = [[0.0, d1], [d2, 0.0]];
    let q = 1.0 / (1.0 + zeta);
    let p = [[q, q], [zeta * q, -zeta * q]];
    let h = 0.5 * (1.0 + zeta);
    let p_inv = [[h, h / zeta], [h, -h / zeta]];
    let j = [[sigma, 0.0], [0.0, -sigma]];
    let back = mat_mul(&mat_mul(&p, &j), &p_inv);
    let mut identity_error = 0.0f64;
    for r in 0..2 {
        for c in 0..2 {
            identity_error = identity_error.max((back[r][c] - a[r][c]).abs());
        }
    }
    let scale = d1.max(d2).max(1.0);
    if identity_error > 1e-12 * scale {
        return Err(Error::Domain(format!(
            "P J P^-1 differs from A by {identity_error:e}"
        )));
    }
    Ok(JordanData {
        sigma,
        zeta,
        a,
        p,
        p_inv,
        j,
        identity_error,
    })
}

/// Solution of `1 + θ2 - θ1 p1 = 0`, `1 + θ1 - θ2 p2 = 0`.
pub fn theta_exponents(model: &NonlinearityModel) -> Result<(f64, f64)> {
    theta_from_powers(model.p1(), model.p2())
}

pub fn theta_from_powers(p1: f64, p2: f64) -> Result<(f64, f64)> {
    let det = p1 * p2 - 1.0;
    if !(det > 0.0) {
        return Err(Error::Domain(format!(
            "rescaling needs p1 p2 > 1, got {}",
            p1 * p2
        )));
    }
    Ok(((p2 + 1.0) / det, (p1 + 1.0) / det))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    Left,
    Right,
    Indeterminate,
}

pub fn direction_of_bifurcation(model: &NonlinearityModel) -> Result<Direction> {
    let (lo, hi) = model.r0_bounds()?;
    Ok(if lo > 0.0 {
        Direction::Left
    } else if hi < 0.0 {
        Direction::Right
    } else {
        Direction::Indeterminate
    })
}

/// Bounds `(μ0/σ) R0 φ1(R)^{ν-1}` on the limit of `(μ0 - λ)/‖u‖^{ν-1}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeBounds {
    pub lower: f64,
    pub upper: f64,
}

impl SlopeBounds {
    /// The common value when the bounds coincide within `tol`.
    pub fn value(&self, tol: f64) -> Option<f64> {
        ((self.upper - self.lower).abs() <= tol).then_some(0.5 * (self.lower + self.upper))
    }
}

pub fn slope_prediction(
    model: &NonlinearityModel,
    pair: &SteklovPair,
    grid: &RadialGrid,
) -> Result<SlopeBounds> {
    grid.check_len(&pair.phi1)?;
    let mu0 = bifurcation_point(model, pair.mu1)?;
    let sigma = (model.fp0(1) * model.fp0(2)).sqrt();
    let (lo, hi) = model.r0_bounds()?;
    // surface integrals collapse to boundary values on the sphere
    let ratio = pair.boundary_value().powf(model.nu() - 1.0);
    let c = mu0 / sigma * ratio;
    Ok(SlopeBounds {
        lower: c * lo,
        upper: c * hi,
    })
}

/// Points with pair_norm below this enter [`slope_fit`].
pub const SLOPE_FIT_MAX_NORM: f64 = 0.1;

/// Continuation settings fine enough near `μ0` to give [`slope_fit`] a
/// dozen or more points below `SLOPE_FIT_MAX_NORM`.
pub fn slope_fit_config(base: &ContinuationConfig) -> ContinuationConfig {
    ContinuationConfig {
        ds0: 2e-3,
        ds_max: 4e-3,
        ds_min: base.ds_min.min(2e-3),
        eps_step_off: 1e-3,
        max_points: 40,
        ..*base
    }
}

/// Intercept of the least-squares line through `(‖u‖, (μ0 - λ)/‖u‖^{ν-1})`
/// over branch points with `‖u‖ < 0.1`.
pub fn slope_fit(branch: &Branch, mu0: f64, nu: f64) -> Result<f64> {
    let data: Vec<(f64, f64)> = branch
        .points
        .iter()
        .filter(|p| p.norm > 0.0 && p.norm < SLOPE_FIT_MAX_NORM)
        .map(|p| (p.norm, (mu0 - p.lambda) / p.norm.powf(nu - 1.0)))
        .collect();
    if data.len() < 5 {
        return Err(Error::InsufficientData(format!(
            "slope fit needs 5 points with norm < {SLOPE_FIT_MAX_NORM}, found {}",
            data.len()
        )));
    }
    let n = data.len() as f64;
    let mx = data.iter().map(|d| d.0).sum::<f64>() / n;
    let my = data.iter().map(|d| d.1).sum::<f64>() / n;
    let sxx: f64 = data.iter().map(|d| (d.0 - mx).powi(2)).sum();
    let sxy: f64 = data.iter().map(|d| (d.0 - mx) * (d.1 - my)).sum();
    if sxx == 0.0 {
        return Ok(my);
    }
    Ok(my - sxy / sxx * mx)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RescaleRow {
    pub lambda: f64,
    pub ratio1: f64,
    pub ratio2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RescaleTable {
    /// Sorted by decreasing λ.
    pub rows: Vec<RescaleRow>,
    /// `max_i |ratio_i - 1|` at the smallest λ.
    pub final_error: f64,
    /// `|ratio_i - 1|` never increases as λ decreases.
    pub monotone: bool,
}

impl RescaleTable {
    pub fn passes(&self, tol: f64) -> bool {
        self.monotone && self.final_error <= tol
    }

    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "lambda,ratio1,ratio2")?;
        for r in &self.rows {
            writeln!(w, "{:.17e},{:.17e},{:.17e}", r.lambda, r.ratio1, r.ratio2)?;
        }
        Ok(())
    }
}

/// Upper end of the λ window examined by [`rescale_check`].
pub const RESCALE_WINDOW: f64 = 1e-2;

/// Compares `λ^{θ_i} sup|u_i|` on the branch tail with `sup|w_i*|`.
pub fn rescale_check(
    branch: &Branch,
    theta: (f64, f64),
    limit: &SystemState,
) -> Result<RescaleTable> {
    let (w1, w2) = (limit.sup(1), limit.sup(2));
    if !(w1 > 0.0 && w2 > 0.0) {
        return Err(Error::Domain("limit solution must be nontrivial".into()));
    }
    let mut rows: Vec<RescaleRow> = branch
        .points
        .iter()
        .filter(|p| p.lambda <= RESCALE_WINDOW && p.lambda > 0.0)
        .map(|p| RescaleRow {
            lambda: p.lambda,
            ratio1: p.lambda.powf(theta.0) * p.state.sup(1) / w1,
            ratio2: p.lambda.powf(theta.1) * p.state.sup(2) / w2,
        })
        .collect();
    if rows.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "branch tail has {} points with lambda <= {RESCALE_WINDOW}",
            rows.len()
        )));
    }
    rows.sort_by(|a, b| b.lambda.total_cmp(&a.lambda));
    let err = |r: &RescaleRow| ((r.ratio1 - 1.0).abs(), (r.ratio2 - 1.0).abs());
    let monotone = rows.windows(2).all(|w| {
        let (a1, a2) = err(&w[0]);
        let (b1, b2) = err(&w[1]);
        b1 <= a1 + 1e-9 && b2 <= a2 + 1e-9
    });
    let (f1, f2) = err(rows.last().expect("nonempty"));
    Ok(RescaleTable {
        rows,
        final_error: f1.max(f2),
        monotone,
    })
}

/// `μ1 / K`: no positive solution exists above it.
pub fn nonexistence_bound(model: &NonlinearityModel, mu1: f64) -> Result<f64> {
    let k = model.k();
    if !(k > 0.0) {
        return Err(Error::Domain(format!(
            "linear minorant K must be positive, got {k}"
        )));
    }
    Ok(mu1 / k)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BifurcationReport {
    pub model: String,
    pub mu1: f64,
    pub sigma: f64,
    pub zeta: f64,
    pub mu0: f64,
    pub theta1: Option<f64>,
    pub theta2: Option<f64>,
    pub k_bound: f64,
    pub direction: Direction,
    pub slope_predicted: SlopeBounds,
    pub slope_fitted: Option<f64>,
    pub r0_under: f64,
    pub r0_over: f64,
    pub jordan: JordanData,
}

impl BifurcationReport {
    pub fn build(
        model: &NonlinearityModel,
        pair: &SteklovPair,
        grid: &RadialGrid,
        slope_fitted: Option<f64>,
    ) -> Result<Self> {
        let jordan = jordan_data(model)?;
        let theta = theta_exponents(model).ok();
        let (r0_under, r0_over) = model.r0_bounds()?;
        Ok(Self {
            model: model.name().to_string(),
            mu1: pair.mu1,
            sigma: jordan.sigma,
            zeta: jordan.zeta,
            mu0: bifurcation_point(model, pair.mu1)?,
            theta1: theta.map(|t| t.0),
            theta2: theta.map(|t| t.1),
            k_bound: nonexistence_bound(model, pair.mu1)?,
            direction: direction_of_bifurcation(model)?,
            slope_predicted: slope_prediction(model, pair, grid)?,
            slope_fitted,
            r0_under,
            r0_over,
            jordan,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::continuation::{BranchPoint, Termination};
    use crate::model::{ModelParams, Nonlinearity, RemainderLimits};
    use crate::steklov::steklov_eigenpair;
    use approx::assert_relative_eq;

    const MU1: f64 = 0.313_035_285_499_331_3;

    fn model_with_slopes(d1: f64, d2: f64) -> NonlinearityModel {
        NonlinearityModel::from_polynomials(
            vec![0.0, d1, 1.0],
            vec![0.0, d2, 1.0],
            2.0,
            2.0,
            d1.min(d2),
        )
        .unwrap()
    }

    #[test]
    fn bifurcation_point_examples() {
        assert_relative_eq!(
            bifurcation_point(&NonlinearityModel::reference(), MU1).unwrap(),
            MU1
        );
        assert_relative_eq!(
            bifurcation_point(&model_with_slopes(4.0, 1.0), MU1).unwrap(),
            MU1 / 2.0
        );
        let m = model_with_slopes(0.75, 0.75);
        assert_relative_eq!(
            bifurcation_point(&m, MU1).unwrap(),
            nonexistence_bound(&m, MU1).unwrap(),
            max_relative = 1e-15
        );
        let flat =
            NonlinearityModel::from_polynomials(vec![0.0, 0.0, 1.0], vec![0.0, 1.0], 2.0, 2.0, 0.0)
                .unwrap();
        assert!(matches!(
            bifurcation_point(&flat, MU1),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn jordan_examples() {
        let jd = jordan_data(&NonlinearityModel::reference()).unwrap();
        assert_eq!((jd.sigma, jd.zeta), (1.0, 1.0));
        assert_eq!(jd.p, [[0.5, 0.5], [0.5, -0.5]]);
        assert!(jd.identity_error <= 1e-14);
        let jd = jordan_from_slopes(1.0, 4.0).unwrap();
        assert_eq!(jd.zeta, 2.0);
        assert_eq!((jd.j[0][0], jd.j[1][1]), (2.0, -2.0));
        assert_relative_eq!(
            jd.sigma * bifurcation_point(&model_with_slopes(1.0, 4.0), MU1).unwrap(),
            MU1
        );
    }

    #[test]
    fn theta_examples() {
        let (t1, t2) = theta_exponents(&NonlinearityModel::reference()).unwrap();
        assert_eq!((t1, t2), (0.8, 0.6));
        assert!((1.0 + t2 - t1 * 2.0).abs() <= 1e-12);
        assert!((1.0 + t1 - t2 * 3.0).abs() <= 1e-12);
        let (a, b) = theta_from_powers(2.5, 2.5).unwrap();
        assert_relative_eq!(a, 1.0 / 1.5, max_relative = 1e-15);
        assert_eq!(a, b);
        assert_eq!(theta_from_powers(2.0, 2.0).unwrap(), (1.0, 1.0));
        assert!(theta_from_powers(1.0, 1.0).is_err());
    }

    #[test]
    fn direction_examples() {
        assert_eq!(
            direction_of_bifurcation(&NonlinearityModel::reference()).unwrap(),
            Direction::Right
        );
        assert_eq!(
            direction_of_bifurcation(&NonlinearityModel::left()).unwrap(),
            Direction::Left
        );
        assert_eq!(
            direction_of_bifurcation(&NonlinearityModel::linear()).unwrap(),
            Direction::Indeterminate
        );
        // straddling bounds
        let f = Nonlinearity::polynomial(vec![0.0, 1.0, 1.0]).unwrap();
        let params = ModelParams {
            r_lims: Some(RemainderLimits::analytic(-1.0, 1.0, -1.0, 1.0)),
            ..*NonlinearityModel::left().params()
        };
        let m = NonlinearityModel::new("straddle", f.clone(), f, params).unwrap();
        assert_eq!(
            direction_of_bifurcation(&m).unwrap(),
            Direction::Indeterminate
        );
    }

    #[test]
    fn slope_prediction_examples() {
        let g = RadialGrid::new(3, 1.0, 2048).unwrap();
        let pair = steklov_eigenpair(&g, 1e-12).unwrap();
        let s = slope_prediction(&NonlinearityModel::reference(), &pair, &g).unwrap();
        assert!((s.value(1e-12).unwrap() - (-0.0391294)).abs() < 1e-6);
        let lin = slope_prediction(&NonlinearityModel::linear(), &pair, &g).unwrap();
        assert_eq!(lin.value(0.0), Some(0.0));
        let left = slope_prediction(&NonlinearityModel::left(), &pair, &g).unwrap();
        assert_relative_eq!(
            left.value(1e-12).unwrap(),
            pair.mu1 / 2.0,
            max_relative = 1e-14
        );
    }

    fn branch_from(points: Vec<(f64, f64)>) -> Branch {
        Branch {
            mu0: 0.3,
            points: points
                .into_iter()
                .map(|(l, n)| {
                    BranchPoint::new(
                        l,
                        SystemState::from_profile(&[1.0; 17], n / 2.0, n / 2.0),
                        1,
                        0.1,
                        2,
                    )
                })
                .collect(),
            folds: Vec::new(),
            termination: Termination::LambdaStop,
        }
    }

    #[test]
    fn slope_fit_synthetic() {
        let flat = branch_from((1..=6).map(|k| (0.3, 0.01 * k as f64)).collect());
        assert_eq!(slope_fit(&flat, 0.3, 2.0).unwrap(), 0.0);
        // (μ0 - λ)/n = -0.05 + 0.2 n exactly
        let lin = branch_from(
            (1..=6)
                .map(|k| {
                    let n = 0.015 * k as f64;
                    (0.3 - n * (-0.05 + 0.2 * n), n)
                })
                .collect(),
        );
        assert_relative_eq!(slope_fit(&lin, 0.3, 2.0).unwrap(), -0.05, epsilon = 1e-12);
        let few = branch_from(vec![(0.3, 0.01), (0.3, 0.5)]);
        assert!(matches!(
            slope_fit(&few, 0.3, 2.0),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn rescale_requires_tail() {
        let b = branch_from(vec![(0.3, 1.0), (0.2, 2.0)]);
        let w = SystemState::from_profile(&[1.0; 17], 1.0, 1.0);
        assert!(matches!(
            rescale_check(&b, (0.8, 0.6), &w),
            Err(Error::InsufficientData(_))
        ));
    }
}
