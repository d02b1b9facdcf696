//! First Steklov eigenpair of `-Δψ + ψ = 0`, `∂ψ/∂η = μ ψ` on the ball,
//! restricted to radial functions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::RadialGrid;

pub const DEFAULT_EIGEN_MAX_ITER: usize = 50;

/// `(μ1, φ1)` with `φ1 > 0` and `max φ1 = φ1(R) = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteklovPair {
    pub mu1: f64,
    pub phi1: Vec<f64>,
    pub iterations: usize,
}

impl SteklovPair {
    /// `φ1(R)`; one by normalization.
    pub fn boundary_value(&self) -> f64 {
        self.phi1[self.phi1.len() - 1]
    }

    /// Max-norm of the interior operator residual and the boundary
    /// eigen-residual `|φ1'(R) - μ1 φ1(R)|`.
    pub fn residuals(&self, grid: &RadialGrid) -> Result<(f64, f64)> {
        let inner = grid.apply_operator(&self.phi1)?;
        let h2 = grid.h() * grid.h();
        let interior = inner[..grid.intervals()]
            .iter()
            .fold(0.0f64, |a, v| a.max((v * h2).abs()));
        let flux = grid.boundary_flux(&self.phi1)?;
        Ok((interior, (flux - self.mu1 * self.boundary_value()).abs()))
    }
}

pub fn steklov_eigenpair(grid: &RadialGrid, tol: f64) -> Result<SteklovPair> {
    steklov_eigenpair_with(grid, tol, 0.0, DEFAULT_EIGEN_MAX_ITER)
}

/// Inverse iteration on the shifted flux system: each step solves the radial
/// BVP with `u'(R) - shift u(R)` equal to the previous iterate's boundary value.
pub fn steklov_eigenpair_with(
    grid: &RadialGrid,
    tol: f64,
    shift: f64,
    max_iter: usize,
) -> Result<SteklovPair> {
    if !(tol > 0.0 && tol <= 1e-4) {
        return Err(Error::Domain(format!(
            "eigen tolerance must lie in (0, 1e-4], got {tol}"
        )));
    }
    let lu = grid.flux_system(shift).factor()?;
    let m = grid.intervals();
    let mut phi = vec![1.0; m + 1];
    let mut mu = f64::NAN;
    for it in 1..=max_iter {
        let mut rhs = vec![0.0; m + 1];
        rhs[m] = phi[m];
        lu.solve_in_place(&mut rhs);
        let scale = rhs[m];
        if scale == 0.0 || !scale.is_finite() {
            return Err(Error::EigenNonConvergence {
                iterations: it,
                last_mu: mu,
            });
        }
        phi = rhs.iter().map(|v| v / scale).collect();
        let next = grid.flux_unchecked(&phi) / phi[m];
        let done = (next - mu).abs() <= tol * next.abs().max(1.0);
        mu = next;
        if done {
            return Ok(SteklovPair {
                mu1: mu,
                phi1: phi,
                iterations: it,
            });
        }
    }
    Err(Error::EigenNonConvergence {
        iterations: max_iter,
        last_mu: mu,
    })
}

/// `g'(R)/g(R)` for the regular radial solution `g'' + ((N-1)/r) g' = g`,
/// `g(0) = 1`, integrated by step-doubling RK4 from a series start.
pub fn steklov_shooting_oracle(n_dim: usize, radius: f64, tol: f64) -> Result<f64> {
    if n_dim < 3 {
        return Err(Error::Domain(format!(
            "dimension must be at least 3, got {n_dim}"
        )));
    }
    if !(radius > 0.0 && tol > 0.0) {
        return Err(Error::Domain(
            "radius and tolerance must be positive".into(),
        ));
    }
    let n = n_dim as f64;
    // g = 1 + c1 r^2 + c2 r^4 + c3 r^6 + O(r^8), c_k = c_{k-1} / (2k (2k + N - 2))
    let c1 = 1.0 / (2.0 * n);
    let c2 = c1 / (4.0 * (n + 2.0));
    let c3 = c2 / (6.0 * (n + 4.0));
    let r0 = 1e-2 * radius.min(1.0);
    let mut y = [
        1.0 + r0.powi(2) * (c1 + r0.powi(2) * (c2 + c3 * r0.powi(2))),
        r0 * (2.0 * c1 + r0.powi(2) * (4.0 * c2 + 6.0 * c3 * r0.powi(2))),
    ];
    let rhs = |r: f64, y: [f64; 2]| [y[1], y[0] - (n - 1.0) / r * y[1]];
    let rk4 = |r: f64, y: [f64; 2], h: f64| {
        let k1 = rhs(r, y);
        let k2 = rhs(
            r + 0.5 * h,
            [y[0] + 0.5 * h * k1[0], y[1] + 0.5 * h * k1[1]],
        );
        let k3 = rhs(
            r + 0.5 * h,
            [y[0] + 0.5 * h * k2[0], y[1] + 0.5 * h * k2[1]],
        );
        let k4 = rhs(r + h, [y[0] + h * k3[0], y[1] + h * k3[1]]);
        [
            y[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
            y[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
        ]
    };
    let local_tol = 1e-3 * tol;
    let mut r = r0;
    let mut h = r0;
    while r < radius {
        if r + h > radius {
            h = radius - r;
        }
        if h <= 1e-14 * radius {
            return Err(Error::StepControl { r });
        }
        let full = rk4(r, y, h);
        let half = rk4(r, y, 0.5 * h);
        let two = rk4(r + 0.5 * h, half, 0.5 * h);
        let err = ((two[0] - full[0]).abs() / two[0].abs().max(1e-300))
            .max((two[1] - full[1]).abs() / two[1].abs().max(1e-300))
            / 15.0;
        if err <= local_tol {
            r += h;
            y = [
                two[0] + (two[0] - full[0]) / 15.0,
                two[1] + (two[1] - full[1]) / 15.0,
            ];
        }
        let factor = if err == 0.0 {
            4.0
        } else {
            (0.9 * (local_tol / err).powf(0.2)).clamp(0.1, 4.0)
        };
        h *= factor;
    }
    Ok(y[1] / y[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn exact_n3(radius: f64) -> f64 {
        // g = sinh(r)/r => g'/g = coth(R) - 1/R
        1.0 / radius.tanh() - 1.0 / radius
    }

    #[test]
    fn oracle_matches_closed_form() {
        let exact = 2.0 / (1f64.exp().powi(2) - 1.0);
        assert_relative_eq!(exact_n3(1.0), exact, epsilon = 1e-15);
        assert!((steklov_shooting_oracle(3, 1.0, 1e-10).unwrap() - exact).abs() <= 1e-8);
        let ten = steklov_shooting_oracle(3, 10.0, 1e-10).unwrap();
        assert!((ten - exact_n3(10.0)).abs() <= 1e-8);
        assert!(ten < 1.0);
        assert!(steklov_shooting_oracle(2, 1.0, 1e-8).is_err());
    }

    #[test]
    fn eigenpair_n3_unit_ball() {
        let g = RadialGrid::new(3, 1.0, 2048).unwrap();
        let pair = steklov_eigenpair(&g, 1e-10).unwrap();
        assert!((pair.mu1 - 0.3130353).abs() <= 1e-6);
        assert_eq!(pair.boundary_value(), 1.0);
        assert!(pair.phi1.iter().all(|&v| v > 0.0 && v <= 1.0));
        assert!(pair.phi1.windows(2).all(|w| w[1] >= w[0]));
        let (interior, boundary) = pair.residuals(&g).unwrap();
        assert!(
            interior <= 1e-10 && boundary <= 1e-10,
            "{interior} {boundary}"
        );
    }

    #[test]
    fn eigenpair_n3_radius5() {
        let g = RadialGrid::new(3, 5.0, 2048).unwrap();
        let pair = steklov_eigenpair(&g, 1e-10).unwrap();
        assert!((pair.mu1 - exact_n3(5.0)).abs() <= 1e-5);
        assert_relative_eq!(exact_n3(5.0), 0.8000909, epsilon = 1e-7);
    }

    #[test]
    fn second_order_convergence() {
        let exact = exact_n3(1.0);
        let err = |m| {
            (steklov_eigenpair(&RadialGrid::new(3, 1.0, m).unwrap(), 1e-12)
                .unwrap()
                .mu1
                - exact)
                .abs()
        };
        let (e1, e2, e3) = (err(256), err(512), err(1024));
        assert!((e1 / e2 - 4.0).abs() <= 0.6);
        assert!((e2 / e3 - 4.0).abs() <= 0.6);
    }

    #[test]
    fn n5_oracle_agrees_with_dense_grid() {
        let oracle = steklov_shooting_oracle(5, 1.0, 1e-10).unwrap();
        assert!(oracle > 0.0 && oracle < 1.0);
        assert!(oracle < steklov_shooting_oracle(3, 1.0, 1e-10).unwrap());
        let pair = steklov_eigenpair(&RadialGrid::new(5, 1.0, 4096).unwrap(), 1e-12).unwrap();
        assert!(
            (pair.mu1 - oracle).abs() <= 1e-6,
            "{} vs {oracle}",
            pair.mu1
        );
    }

    #[test]
    fn tolerance_precondition() {
        let g = RadialGrid::new(3, 1.0, 64).unwrap();
        assert!(matches!(steklov_eigenpair(&g, 1e-3), Err(Error::Domain(_))));
        assert!(matches!(steklov_eigenpair(&g, 0.0), Err(Error::Domain(_))));
    }
}
