//! Uniform radial mesh on the ball `B_R` in `R^N` and the operator
//! `-u'' - ((N-1)/r) u' + u`.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::banded::BandMatrix;
use crate::error::{Error, Result};

pub const MIN_INTERVALS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadialGrid {
    n_dim: usize,
    radius: f64,
    intervals: usize,
}

impl RadialGrid {
    pub fn new(n_dim: usize, radius: f64, intervals: usize) -> Result<Self> {
        if n_dim < 3 {
            return Err(Error::Config(format!(
                "dimension must be at least 3, got {n_dim}"
            )));
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::Config(format!(
                "ball radius must be positive, got {radius}"
            )));
        }
        if intervals < MIN_INTERVALS {
            return Err(Error::Config(format!(
                "need at least {MIN_INTERVALS} intervals, got {intervals}"
            )));
        }
        Ok(Self {
            n_dim,
            radius,
            intervals,
        })
    }

    pub fn n_dim(&self) -> usize {
        self.n_dim
    }
    pub fn radius(&self) -> f64 {
        self.radius
    }
    /// Number of intervals `M`.
    pub fn intervals(&self) -> usize {
        self.intervals
    }
    /// Number of nodes `M + 1`.
    pub fn len(&self) -> usize {
        self.intervals + 1
    }
    pub fn is_empty(&self) -> bool {
        false
    }
    pub fn h(&self) -> f64 {
        self.radius / self.intervals as f64
    }
    pub fn node(&self, j: usize) -> f64 {
        if j == self.intervals {
            self.radius
        } else {
            j as f64 * self.h()
        }
    }
    pub fn nodes(&self) -> Vec<f64> {
        (0..self.len()).map(|j| self.node(j)).collect()
    }

    pub fn sample(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        (0..self.len()).map(|j| f(self.node(j))).collect()
    }

    pub(crate) fn check_len(&self, u: &[f64]) -> Result<()> {
        if u.len() != self.len() {
            return Err(Error::LengthMismatch {
                expected: self.len(),
                got: u.len(),
            });
        }
        Ok(())
    }

    /// Stencil `(left, centre, right)` of the operator at interior node `j`
    /// (`1 <= j < M`). At `j = 0` the ghost value `u_{-1} = u_1` is folded in,
    /// so the left coefficient is zero.
    pub(crate) fn stencil(&self, j: usize) -> (f64, f64, f64) {
        let h = self.h();
        let h2 = h * h;
        if j == 0 {
            let n = self.n_dim as f64;
            // -N u''(0) + u(0), u''(0) ~ 2 (u_1 - u_0) / h^2
            (0.0, 2.0 * n / h2 + 1.0, -2.0 * n / h2)
        } else {
            let c = (self.n_dim as f64 - 1.0) / (j as f64 * h) / (2.0 * h);
            (-1.0 / h2 + c, 2.0 / h2 + 1.0, -1.0 / h2 - c)
        }
    }

    /// Interior residual of the radial operator at nodes `0..M`.
    /// The entry at `j = M` is left at zero; it belongs to the flux row.
    pub fn apply_operator(&self, u: &[f64]) -> Result<Vec<f64>> {
        self.check_len(u)?;
        let m = self.intervals;
        let mut out = vec![0.0; m + 1];
        let (_, c0, r0) = self.stencil(0);
        out[0] = c0 * u[0] + r0 * u[1];
        for j in 1..m {
            let (l, c, r) = self.stencil(j);
            out[j] = l * u[j - 1] + c * u[j] + r * u[j + 1];
        }
        Ok(out)
    }

    /// Coefficients of `u_M, u_{M-1}, u_{M-2}` in the one-sided flux.
    pub(crate) fn flux_weights(&self) -> [f64; 3] {
        let h = self.h();
        [1.5 / h, -2.0 / h, 0.5 / h]
    }

    /// `u'(R) ~ (3 u_M - 4 u_{M-1} + u_{M-2}) / (2h)`.
    pub fn boundary_flux(&self, u: &[f64]) -> Result<f64> {
        self.check_len(u)?;
        Ok(self.flux_unchecked(u))
    }

    /// Single-component matrix: interior stencil rows plus the row
    /// `u'(R) - shift * u(R)`. Bandwidths `(2, 1)`.
    pub(crate) fn flux_system(&self, shift: f64) -> BandMatrix {
        let m = self.intervals;
        let mut a = BandMatrix::zeros(m + 1, 2, 1);
        let (_, c0, r0) = self.stencil(0);
        a.set(0, 0, c0);
        a.set(0, 1, r0);
        for j in 1..m {
            let (l, c, r) = self.stencil(j);
            a.set(j, j - 1, l);
            a.set(j, j, c);
            a.set(j, j + 1, r);
        }
        let w = self.flux_weights();
        a.set(m, m, w[0] - shift);
        a.set(m, m - 1, w[1]);
        a.set(m, m - 2, w[2]);
        a
    }

    pub(crate) fn flux_unchecked(&self, u: &[f64]) -> f64 {
        let m = self.intervals;
        let w = self.flux_weights();
        w[0] * u[m] + w[1] * u[m - 1] + w[2] * u[m - 2]
    }
}

/// The pair `(u1, u2)` sampled on a radial grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemState {
    pub u1: Vec<f64>,
    pub u2: Vec<f64>,
}

impl SystemState {
    pub fn new(u1: Vec<f64>, u2: Vec<f64>) -> Result<Self> {
        if u1.len() != u2.len() {
            return Err(Error::LengthMismatch {
                expected: u1.len(),
                got: u2.len(),
            });
        }
        Ok(Self { u1, u2 })
    }

    pub fn zeros(len: usize) -> Self {
        Self {
            u1: vec![0.0; len],
            u2: vec![0.0; len],
        }
    }

    /// `(c1 v, c2 v)`.
    pub fn from_profile(profile: &[f64], c1: f64, c2: f64) -> Self {
        Self {
            u1: profile.iter().map(|v| c1 * v).collect(),
            u2: profile.iter().map(|v| c2 * v).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.u1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u1.is_empty()
    }

    pub fn component(&self, i: usize) -> &[f64] {
        if i == 1 {
            &self.u1
        } else {
            &self.u2
        }
    }

    /// Boundary values `(u1(R), u2(R))`.
    pub fn boundary(&self) -> (f64, f64) {
        let m = self.len() - 1;
        (self.u1[m], self.u2[m])
    }

    pub fn sup(&self, i: usize) -> f64 {
        self.component(i)
            .iter()
            .fold(0.0, |a: f64, v| a.max(v.abs()))
    }

    pub fn min_node(&self) -> f64 {
        self.u1
            .iter()
            .chain(&self.u2)
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    pub fn is_finite(&self) -> bool {
        self.u1.iter().chain(&self.u2).all(|v| v.is_finite())
    }

    /// Interleaved vector `(u1_0, u2_0, u1_1, u2_1, ...)`.
    pub fn to_interleaved(&self) -> Vec<f64> {
        self.u1
            .iter()
            .zip(&self.u2)
            .flat_map(|(a, b)| [*a, *b])
            .collect()
    }

    pub fn from_interleaved(v: &[f64]) -> Self {
        let u1 = v.iter().step_by(2).copied().collect();
        let u2 = v.iter().skip(1).step_by(2).copied().collect();
        Self { u1, u2 }
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            u1: self.u1.iter().map(|v| c * v).collect(),
            u2: self.u2.iter().map(|v| c * v).collect(),
        }
    }

    /// Nodewise `max |self - other|` over both components.
    pub fn max_diff(&self, other: &SystemState) -> f64 {
        self.u1
            .iter()
            .zip(&other.u1)
            .chain(self.u2.iter().zip(&other.u2))
            .fold(0.0, |a: f64, (x, y)| a.max((x - y).abs()))
    }

    /// True when `self <= other + slack` at every node of both components.
    pub fn le_nodewise(&self, other: &SystemState, slack: f64) -> bool {
        self.u1
            .iter()
            .zip(&other.u1)
            .chain(self.u2.iter().zip(&other.u2))
            .all(|(x, y)| *x <= *y + slack)
    }

    pub fn write_csv<W: Write>(&self, grid: &RadialGrid, mut w: W) -> Result<()> {
        grid.check_len(&self.u1)?;
        writeln!(w, "r,u1,u2")?;
        for j in 0..self.len() {
            writeln!(
                w,
                "{:.17e},{:.17e},{:.17e}",
                grid.node(j),
                self.u1[j],
                self.u2[j]
            )?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<(Vec<f64>, Self)> {
        let mut rs = Vec::new();
        let mut state = SystemState::zeros(0);
        for (k, line) in r.lines().enumerate() {
            let line = line?;
            if k == 0 || line.trim().is_empty() {
                continue;
            }
            let vals: Vec<f64> = line
                .split(',')
                .map(|t| t.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Config(format!("bad CSV line {}: {e}", k + 1)))?;
            if vals.len() != 3 {
                return Err(Error::Config(format!("CSV line {} needs 3 columns", k + 1)));
            }
            rs.push(vals[0]);
            state.u1.push(vals[1]);
            state.u2.push(vals[2]);
        }
        Ok((rs, state))
    }
}

/// `sup|u1| + sup|u2|`.
pub fn pair_norm(state: &SystemState) -> f64 {
    state.sup(1) + state.sup(2)
}


#[cfg(test)]
mod proptests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn operator_is_linear(
            a in -5.0f64..5.0, b in -5.0f64..5.0,
            seed_u in prop::collection::vec(-1.0f64..1.0, 33),
            seed_v in prop::collection::vec(-1.0f64..1.0, 33),
        ) {
            let g = RadialGrid::new(3, 1.0, 32).unwrap();
            let w: Vec<f64> = seed_u.iter().zip(&seed_v).map(|(x, y)| a * x + b * y).collect();
            let lw = g.apply_operator(&w).unwrap();
            let lu = g.apply_operator(&seed_u).unwrap();
            let lv = g.apply_operator(&seed_v).unwrap();
            for j in 0..33 {
                let expect = a * lu[j] + b * lv[j];
                prop_assert!((lw[j] - expect).abs() <= 1e-9 * (1.0 + expect.abs()) * 1e3);
            }
        }
    }
}
