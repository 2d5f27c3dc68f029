//! Forward characteristic function of the log-return
//! `y = ln S(T + delta) - ln S(T)` under the forward measure attached to a
//! [`BondCurve`].
//!
//! Conditional on the chain path the log-return is affine in `(v, r)`:
//! on `[T, T + delta]` the coefficients `D` (variance, closed form) and `E`
//! (rate, Riccati ODE) apply; before `T` the variance coefficient evolves by
//! the CIR transform `G` and the rate coefficient by the Riccati `M`. The
//! regime-dependent pieces are collected in the per-state vector `J`, and
//! averaging over the chain under the forward generator becomes the linear
//! matrix ODE `dPhi/ds = (Q_fwd(s) + diag J(s)) Phi`.
//!
//! All arithmetic is complex: `b = sqrt(a^2 + sigma^2 (phi - phi^2))` is
//! imaginary for some real `phi`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::bond::BondCurve;
use crate::error::{Error, Result};
use crate::model::{MarketState, ModelParams};
use crate::numerics::{propagate_sampled, solve_backward_steps, GridFn, OdeConfig};

const TIME_SLACK: f64 = 1e-12;
const IMAG_TOL: f64 = 1e-9;

type C = Complex64;

fn c(x: f64) -> C {
    C::new(x, 0.0)
}

/// Timing of one characteristic-function evaluation: valuation time `t`,
/// return window `[start, start + delta]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Window {
    pub t: f64,
    pub start: f64,
    pub delta: f64,
}

impl Window {
    pub fn new(t: f64, start: f64, delta: f64) -> Self {
        Self { t, start, delta }
    }

    pub fn end(&self) -> f64 {
        self.start + self.delta
    }
}

/// Variance coefficient on the return window:
/// `D = (phi^2 - phi)(e^{-b tau} - 1) / ((a - b) e^{-b tau} - (a + b))`
/// with `tau = start + delta - t`. The factored numerator keeps it finite
/// (and exactly zero) at `phi = 0` and `phi = 1`.
pub fn riccati_d(phi: C, t: f64, start: f64, delta: f64, params: &ModelParams) -> C {
    let tau = start + delta - t;
    if tau <= 0.0 {
        return C::new(0.0, 0.0);
    }
    let sigma = params.sigma;
    let a = c(params.kappa) - phi * (params.rho * sigma);
    let b = (a * a + (phi - phi * phi) * (sigma * sigma)).sqrt();
    let decay = (-b * tau).exp();
    let num = (phi * phi - phi) * (decay - 1.0);
    if num == C::new(0.0, 0.0) {
        return num;
    }
    num / ((a - b) * decay - (a + b))
}

/// CIR transform of `e^{psi v(start)}` back to time `t`:
/// `G = 2 kappa psi / (sigma^2 psi + (2 kappa - sigma^2 psi) e^{kappa (start - t)})`.
pub fn g_closed(psi: C, t: f64, start: f64, params: &ModelParams) -> Result<C> {
    if psi == C::new(0.0, 0.0) {
        return Ok(psi);
    }
    let k = params.kappa;
    let s2 = params.sigma * params.sigma;
    let den = psi * s2 + (c(2.0 * k) - psi * s2) * (k * (start - t)).exp();
    let scale = (2.0 * k).max(psi.norm() * s2).max(f64::MIN_POSITIVE);
    if !(den.norm() > 1e-14 * scale) {
        return Err(Error::SingularDenominator { time: t, magnitude: den.norm() });
    }
    Ok(psi * (2.0 * k) / den)
}

fn rate_riccati<'a>(params: &'a ModelParams, curve: &'a BondCurve, forcing: C) -> impl Fn(f64, &C) -> C + 'a {
    let half_eta2 = 0.5 * params.eta * params.eta;
    let eta2 = params.eta * params.eta;
    let alpha = params.alpha;
    move |t, y: &C| -(y * y * half_eta2) + y * (alpha + curve.b(t) * eta2) - forcing
}

fn solve_e_steps(phi: C, start: f64, delta: f64, params: &ModelParams, curve: &BondCurve, n: usize) -> Result<GridFn<C>> {
    solve_backward_steps(rate_riccati(params, curve, phi), start + delta, c(0.0), start, n)
}

fn solve_m_steps(e_terminal: C, t: f64, start: f64, params: &ModelParams, curve: &BondCurve, n: usize) -> Result<GridFn<C>> {
    solve_backward_steps(rate_riccati(params, curve, c(0.0)), start, e_terminal, t, n)
}

/// Rate coefficient on the return window:
/// `-dE/dt = eta^2 E^2 / 2 - (alpha + B(t) eta^2) E + phi`, `E(start + delta) = 0`,
/// where `B` is taken from `curve`.
pub fn solve_e(
    phi: C,
    start: f64,
    delta: f64,
    params: &ModelParams,
    curve: &BondCurve,
    config: &OdeConfig,
) -> Result<GridFn<C>> {
    solve_e_steps(phi, start, delta, params, curve, 2 * config.steps_for(delta))
}

/// Rate coefficient before the window: the homogeneous version of the `E`
/// equation on `[t, start]` with `M(start) = e_terminal`.
pub fn solve_m(
    e_terminal: C,
    t: f64,
    start: f64,
    params: &ModelParams,
    curve: &BondCurve,
    config: &OdeConfig,
) -> Result<GridFn<C>> {
    solve_m_steps(e_terminal, t, start, params, curve, 2 * config.steps_for(start - t))
}

/// Cached ingredients for one `(phi, window)` pair.
///
/// The `E` and `M` grids carry two intervals per regime-ODE step so that
/// every stage of the matrix propagation reads a node value.
#[derive(Debug, Clone)]
pub struct CharFnContext {
    pub phi: C,
    pub window: Window,
    pub horizon: f64,
    pub d_terminal: C,
    pub e_grid: GridFn<C>,
    /// `None` when the window starts at the valuation time.
    pub m_grid: Option<GridFn<C>>,
}

impl CharFnContext {
    pub fn build(phi: C, window: Window, params: &ModelParams, curve: &BondCurve, config: &OdeConfig) -> Result<Self> {
        check_window(&window, curve)?;
        let e_grid = solve_e(phi, window.start, window.delta, params, curve, config)?;
        let e_terminal = *e_grid.first();
        let m_grid = if window.start - window.t > TIME_SLACK {
            Some(solve_m(e_terminal, window.t, window.start, params, curve, config)?)
        } else {
            None
        };
        Ok(Self {
            phi,
            window,
            horizon: curve.maturity(),
            d_terminal: riccati_d(phi, window.start, window.start, window.delta, params),
            e_grid,
            m_grid,
        })
    }

    /// `E(phi, start)`.
    pub fn e_terminal(&self) -> C {
        *self.e_grid.first()
    }

    /// `M(E(phi, start), t)`.
    pub fn m_at_valuation(&self) -> C {
        self.m_grid.as_ref().map_or(self.e_terminal(), |m| *m.first())
    }
}

fn check_window(w: &Window, curve: &BondCurve) -> Result<()> {
    if !(w.delta > 0.0) || !(w.t >= 0.0) || w.t > w.start + TIME_SLACK {
        return Err(Error::InvalidGrid(format!(
            "need 0 <= t <= start and delta > 0, got t = {}, start = {}, delta = {}",
            w.t, w.start, w.delta
        )));
    }
    if w.end() > curve.maturity() + TIME_SLACK {
        return Err(Error::OutOfRange { t: w.end(), start: 0.0, end: curve.maturity() });
    }
    Ok(())
}

/// Per-state exponent rates `J(s)`, piecewise in time with the switch at
/// the window start (`H_T(s) = 1` for `s >= start`).
#[derive(Debug, Clone)]
pub struct JPath {
    before: Option<GridFn<DVector<C>>>,
    after: GridFn<DVector<C>>,
}

impl JPath {
    pub fn new(before: Option<GridFn<DVector<C>>>, after: GridFn<DVector<C>>) -> Result<Self> {
        if let Some(b) = &before {
            if (b.t_end() - after.t_start()).abs() > TIME_SLACK {
                return Err(Error::InvalidGrid(format!(
                    "J pieces do not meet: {} vs {}",
                    b.t_end(),
                    after.t_start()
                )));
            }
        }
        Ok(Self { before, after })
    }

    pub fn switch_time(&self) -> f64 {
        self.after.t_start()
    }

    pub fn before(&self) -> Option<&GridFn<DVector<C>>> {
        self.before.as_ref()
    }

    pub fn after(&self) -> &GridFn<DVector<C>> {
        &self.after
    }

    /// Right-continuous evaluation.
    pub fn eval(&self, s: f64) -> Result<DVector<C>> {
        match &self.before {
            Some(b) if s < self.switch_time() => b.eval(s),
            _ => self.after.eval(s),
        }
    }

    /// Limit from the left at the switch, if there is a piece before it.
    pub fn left_limit(&self) -> Option<DVector<C>> {
        self.before.as_ref().map(|b| b.last().clone())
    }
}

/// Assembles `J` from the cached grids:
/// before the window `kappa theta_i G(D(start), s) + alpha beta_i M(s)`,
/// on the window `alpha beta_i E(s) + kappa theta_i D(s)`.
pub fn assemble_j(ctx: &CharFnContext, params: &ModelParams) -> Result<JPath> {
    let kt: Vec<f64> = params.theta_star.as_slice().iter().map(|x| params.kappa * x).collect();
    let ab: Vec<f64> = params.beta_star.as_slice().iter().map(|x| params.alpha * x).collect();
    let n = kt.len();
    let w = ctx.window;
    let phi = ctx.phi;

    let after = ctx.e_grid.map(|s, e| {
        let d = riccati_d(phi, s, w.start, w.delta, params);
        DVector::from_fn(n, |i, _| e * ab[i] + d * kt[i])
    });

    let before = match &ctx.m_grid {
        None => None,
        Some(m_grid) => {
            let mut values = Vec::with_capacity(m_grid.values().len());
            for (k, m) in m_grid.values().iter().enumerate() {
                let g = g_closed(ctx.d_terminal, m_grid.time(k), w.start, params)?;
                values.push(DVector::from_fn(n, |i, _| g * kt[i] + m * ab[i]));
            }
            Some(GridFn::new(m_grid.t_start(), m_grid.t_end(), values)?)
        }
    };
    JPath::new(before, after)
}

/// Time-ordered solution `Phi(t, start + delta; J)` of
/// `dPhi/ds = (Q_fwd(s) + diag J(s)) Phi`, `Phi(t) = I`.
///
/// Each piece of `J` is integrated on its own grid so the jump at the
/// window start is resolved exactly; `forward_gen` must return the chain
/// generator in column form.
pub fn phi_j(j: &JPath, forward_gen: impl Fn(f64) -> Result<DMatrix<f64>>) -> Result<DMatrix<C>> {
    let n = j.after().first().len();
    let coeffs = |piece: &GridFn<DVector<C>>| -> Result<GridFn<DMatrix<C>>> {
        let mut values = Vec::with_capacity(piece.values().len());
        for (k, jv) in piece.values().iter().enumerate() {
            let q = forward_gen(piece.time(k))?;
            let mut a = q.map(c);
            for i in 0..n {
                a[(i, i)] += jv[i];
            }
            values.push(a);
        }
        GridFn::new(piece.t_start(), piece.t_end(), values)
    };
    let mut phi = DMatrix::<C>::identity(n, n);
    if let Some(b) = j.before() {
        phi = propagate_sampled(&coeffs(b)?, phi)?;
    }
    propagate_sampled(&coeffs(j.after())?, phi)
}

/// `f(phi) = exp(v G(D(start), t)) exp(r M(t)) <Phi(t, start + delta; J) e_x, 1>`
/// where `(v, r, x)` is the state at the valuation time. Only the variance,
/// rate and regime fields of `state` are used.
pub fn char_fn(
    phi: C,
    window: Window,
    state: &MarketState,
    params: &ModelParams,
    curve: &BondCurve,
    config: &OdeConfig,
) -> Result<C> {
    let regimes = params.regimes();
    if state.x0 >= regimes {
        return Err(Error::RegimeOutOfRange { index: state.x0, regimes });
    }
    let ctx = CharFnContext::build(phi, window, params, curve, config)?;
    let j = assemble_j(&ctx, params)?;
    let phi_mat = phi_j(&j, |s| curve.forward_generator(s))?;
    let g = g_closed(ctx.d_terminal, window.t, window.start, params)?;
    let regime_factor: C = phi_mat.column(state.x0).iter().sum();
    let f = (g * state.v0 + ctx.m_at_valuation() * state.r0).exp() * regime_factor;
    if !(f.re.is_finite() && f.im.is_finite()) {
        return Err(Error::NonFinite { time: window.t });
    }
    Ok(f)
}

/// [`char_fn`] at a real argument; the imaginary part must vanish.
pub fn char_fn_real(
    phi: f64,
    window: Window,
    state: &MarketState,
    params: &ModelParams,
    curve: &BondCurve,
    config: &OdeConfig,
) -> Result<f64> {
    let f = char_fn(c(phi), window, state, params, curve, config)?;
    if f.im.abs() > IMAG_TOL {
        return Err(Error::ImaginaryPart { phi, imag: f.im });
    }
    Ok(f.re)
}
