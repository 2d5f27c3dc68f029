//! Zero-coupon bond under the regime-switching CIR short rate.
//!
//! `P(t, T, r, e_i) = A_i(t, T) exp(-B(t, T) r)`, where `B` has the CIR
//! closed form and the per-state factors `A_i` solve the coupled linear
//! system `dA/dt = (diag(alpha beta_i B(t, T)) - Q_row) A`, `A(T) = 1`.
//! The same factors drive the chain's rates under the T-forward measure.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{effective_generator, ModelParams};
use crate::numerics::{solve_backward, GridFn, OdeConfig};

/// `B(t, T)` for mean reversion `alpha` and rate volatility `eta`.
pub fn b_closed(t: f64, maturity: f64, alpha: f64, eta: f64) -> f64 {
    let tau = maturity - t;
    if tau <= 0.0 {
        return 0.0;
    }
    let h = (alpha * alpha + 2.0 * eta * eta).sqrt();
    let e = (h * tau).exp_m1();
    2.0 * e / (2.0 * h + (alpha + h) * e)
}

#[derive(Debug, Clone)]
pub struct BondCurve {
    maturity: f64,
    alpha: f64,
    eta: f64,
    b: GridFn<f64>,
    a_tilde: GridFn<DVector<f64>>,
    // rate a -> b sits at (a, b)
    q_row: DMatrix<f64>,
}

impl BondCurve {
    /// Builds the curve on `[0, maturity]`.
    pub fn build(maturity: f64, params: &ModelParams, config: &OdeConfig) -> Result<Self> {
        let q_row = effective_generator(&params.generator)?.transpose();
        let a_tilde = solve_a_tilde(maturity, params, &q_row, config)?;
        let (alpha, eta) = (params.alpha, params.eta);
        let b = a_tilde.map(|t, _| b_closed(t, maturity, alpha, eta));
        Ok(Self { maturity, alpha, eta, b, a_tilde, q_row })
    }

    pub fn maturity(&self) -> f64 {
        self.maturity
    }

    pub fn regimes(&self) -> usize {
        self.q_row.nrows()
    }

    /// `B(t, T)`, closed form.
    pub fn b(&self, t: f64) -> f64 {
        b_closed(t, self.maturity, self.alpha, self.eta)
    }

    pub fn b_grid(&self) -> &GridFn<f64> {
        &self.b
    }

    pub fn a_tilde_grid(&self) -> &GridFn<DVector<f64>> {
        &self.a_tilde
    }

    pub fn a_tilde(&self, t: f64) -> Result<DVector<f64>> {
        self.a_tilde.eval(t)
    }

    /// `P(t, T, r, e_regime)`.
    pub fn bond_price(&self, t: f64, r: f64, regime: usize) -> Result<f64> {
        if regime >= self.regimes() {
            return Err(Error::RegimeOutOfRange { index: regime, regimes: self.regimes() });
        }
        if t >= self.maturity {
            return Ok(1.0);
        }
        Ok(self.a_tilde(t)?[regime] * (-self.b(t) * r).exp())
    }

    /// Chain generator under the T-forward measure at time `t`, in column
    /// (semimartingale) form.
    ///
    /// In row form the rate from state `a` to `b` is scaled by
    /// `A_b(t) / A_a(t)` and the diagonal restores zero row sums.
    pub fn forward_generator(&self, t: f64) -> Result<DMatrix<f64>> {
        let a = self.a_tilde(t)?;
        forward_generator_from(&self.q_row, &a, t)
    }
}

pub(crate) fn forward_generator_from(q_row: &DMatrix<f64>, a: &DVector<f64>, t: f64) -> Result<DMatrix<f64>> {
    let n = q_row.nrows();
    if let Some(i) = (0..n).find(|&i| !(a[i] > 0.0)) {
        return Err(Error::NonPositiveBondFactor { time: t, regime: i, value: a[i] });
    }
    let mut fwd = DMatrix::zeros(n, n);
    for from in 0..n {
        let mut out = 0.0;
        for to in 0..n {
            if from != to {
                let q = q_row[(from, to)] * a[to] / a[from];
                fwd[(to, from)] = q;
                out += q;
            }
        }
        fwd[(from, from)] = -out;
    }
    Ok(fwd)
}

fn solve_a_tilde(
    maturity: f64,
    params: &ModelParams,
    q_row: &DMatrix<f64>,
    config: &OdeConfig,
) -> Result<GridFn<DVector<f64>>> {
    let n = params.regimes();
    let level = DVector::from_iterator(n, params.beta_star.as_slice().iter().map(|b| params.alpha * b));
    let (alpha, eta) = (params.alpha, params.eta);
    let rhs = |t: f64, a: &DVector<f64>| {
        let b = b_closed(t, maturity, alpha, eta);
        level.component_mul(a) * b - q_row * a
    };
    let grid = solve_backward(rhs, maturity, DVector::from_element(n, 1.0), 0.0, config)?;
    for (k, a) in grid.values().iter().enumerate() {
        if let Some(i) = (0..n).find(|&i| !(a[i] > 0.0)) {
            return Err(Error::NonPositiveBondFactor { time: grid.time(k), regime: i, value: a[i] });
        }
    }
    Ok(grid)
}
