//! Fixed-step RK4 integration on uniform grids, generic over real and
//! complex scalars, vectors and matrices, plus linear interpolation of the
//! sampled solutions.

use nalgebra::{ComplexField, DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const EVAL_SLACK: f64 = 1e-12;

/// Values an ODE can carry: closed under addition and real scaling.
pub trait OdeValue: Clone {
    /// `self + h * other`
    fn add_scaled(&self, h: f64, other: &Self) -> Self;
    fn scale(&self, h: f64) -> Self;
    fn all_finite(&self) -> bool;
}

impl OdeValue for f64 {
    fn add_scaled(&self, h: f64, other: &Self) -> Self {
        self + h * other
    }
    fn scale(&self, h: f64) -> Self {
        self * h
    }
    fn all_finite(&self) -> bool {
        self.is_finite()
    }
}

impl OdeValue for Complex64 {
    fn add_scaled(&self, h: f64, other: &Self) -> Self {
        self + other * h
    }
    fn scale(&self, h: f64) -> Self {
        self * h
    }
    fn all_finite(&self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }
}

impl<T: ComplexField<RealField = f64>> OdeValue for DVector<T> {
    fn add_scaled(&self, h: f64, other: &Self) -> Self {
        self.zip_map(other, |a, b| a + b * T::from_real(h))
    }
    fn scale(&self, h: f64) -> Self {
        self.map(|a| a * T::from_real(h))
    }
    fn all_finite(&self) -> bool {
        self.iter().all(|x| x.is_finite())
    }
}

impl<T: ComplexField<RealField = f64>> OdeValue for DMatrix<T> {
    fn add_scaled(&self, h: f64, other: &Self) -> Self {
        self.zip_map(other, |a, b| a + b * T::from_real(h))
    }
    fn scale(&self, h: f64) -> Self {
        self.map(|a| a * T::from_real(h))
    }
    fn all_finite(&self) -> bool {
        self.iter().all(|x| x.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OdeConfig {
    pub steps_per_year: usize,
}

impl Default for OdeConfig {
    fn default() -> Self {
        Self { steps_per_year: 2000 }
    }
}

impl OdeConfig {
    pub const MIN_STEPS_PER_YEAR: usize = 16;

    pub fn new(steps_per_year: usize) -> Result<Self> {
        if steps_per_year < Self::MIN_STEPS_PER_YEAR {
            return Err(Error::Config(format!(
                "steps_per_year = {steps_per_year} is below the minimum of {}",
                Self::MIN_STEPS_PER_YEAR
            )));
        }
        Ok(Self { steps_per_year })
    }

    /// Number of steps covering a span, at least one.
    pub fn steps_for(&self, span: f64) -> usize {
        ((span * self.steps_per_year as f64).ceil() as usize).max(1)
    }
}

/// Samples on `n + 1` equally spaced nodes of `[t_start, t_end]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFn<V> {
    t_start: f64,
    t_end: f64,
    values: Vec<V>,
}

impl<V: OdeValue> GridFn<V> {
    pub fn new(t_start: f64, t_end: f64, values: Vec<V>) -> Result<Self> {
        if !(t_start < t_end) {
            return Err(Error::InvalidGrid(format!("t_start = {t_start} must be < t_end = {t_end}")));
        }
        if values.len() < 2 {
            return Err(Error::InvalidGrid(format!("need at least 2 nodes, got {}", values.len())));
        }
        Ok(Self { t_start, t_end, values })
    }

    /// Samples `f` on a uniform grid.
    pub fn sample(t_start: f64, t_end: f64, n: usize, f: impl Fn(f64) -> V) -> Result<Self> {
        let h = (t_end - t_start) / n as f64;
        let values = (0..=n).map(|i| f(node(t_start, t_end, h, n, i))).collect();
        Self::new(t_start, t_end, values)
    }

    pub fn t_start(&self) -> f64 {
        self.t_start
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn steps(&self) -> usize {
        self.values.len() - 1
    }

    pub fn step(&self) -> f64 {
        (self.t_end - self.t_start) / self.steps() as f64
    }

    pub fn time(&self, i: usize) -> f64 {
        node(self.t_start, self.t_end, self.step(), self.steps(), i)
    }

    pub fn values(&self) -> &[V] {
        &self.values
    }

    pub fn first(&self) -> &V {
        &self.values[0]
    }

    pub fn last(&self) -> &V {
        &self.values[self.values.len() - 1]
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.t_start - EVAL_SLACK && t <= self.t_end + EVAL_SLACK
    }

    /// Linear interpolation; exact at nodes.
    pub fn eval(&self, t: f64) -> Result<V> {
        if !self.contains(t) {
            return Err(Error::OutOfRange { t, start: self.t_start, end: self.t_end });
        }
        let n = self.steps();
        let x = ((t - self.t_start) / self.step()).clamp(0.0, n as f64);
        // (t_start + k h - t_start) / h need not round-trip to k
        let k = x.round() as usize;
        if self.time(k) == t {
            return Ok(self.values[k].clone());
        }
        let i = (x.floor() as usize).min(n - 1);
        let w = x - i as f64;
        if w == 0.0 {
            return Ok(self.values[i].clone());
        }
        if w == 1.0 {
            return Ok(self.values[i + 1].clone());
        }
        Ok(self.values[i].scale(1.0 - w).add_scaled(w, &self.values[i + 1]))
    }

    pub fn map<W: OdeValue>(&self, f: impl Fn(f64, &V) -> W) -> GridFn<W> {
        let values = self.values.iter().enumerate().map(|(i, v)| f(self.time(i), v)).collect();
        GridFn { t_start: self.t_start, t_end: self.t_end, values }
    }
}

// End nodes are pinned so that grids meet exactly at shared endpoints.
fn node(t_start: f64, t_end: f64, h: f64, n: usize, i: usize) -> f64 {
    if i == n {
        t_end
    } else {
        t_start + i as f64 * h
    }
}

fn rk4_step<V: OdeValue>(rhs: &impl Fn(f64, &V) -> V, t: f64, y: &V, h: f64) -> V {
    let k1 = rhs(t, y);
    let k2 = rhs(t + 0.5 * h, &y.add_scaled(0.5 * h, &k1));
    let k3 = rhs(t + 0.5 * h, &y.add_scaled(0.5 * h, &k2));
    let k4 = rhs(t + h, &y.add_scaled(h, &k3));
    let incr = k1.add_scaled(2.0, &k2).add_scaled(2.0, &k3).add_scaled(1.0, &k4);
    y.add_scaled(h / 6.0, &incr)
}

/// Integrates `dy/dt = rhs(t, y)` from `terminal_time` down to `start_time`
/// with `n` RK4 steps. Samples are stored ascending in `t`; the last node is
/// `terminal_value` exactly.
pub fn solve_backward_steps<V: OdeValue>(
    rhs: impl Fn(f64, &V) -> V,
    terminal_time: f64,
    terminal_value: V,
    start_time: f64,
    n: usize,
) -> Result<GridFn<V>> {
    if !(start_time < terminal_time) || n == 0 {
        return Err(Error::InvalidGrid(format!(
            "backward solve needs start {start_time} < terminal {terminal_time} and n >= 1"
        )));
    }
    let h = (terminal_time - start_time) / n as f64;
    let mut values = Vec::with_capacity(n + 1);
    let mut y = terminal_value;
    values.push(y.clone());
    for i in (0..n).rev() {
        let t = node(start_time, terminal_time, h, n, i + 1);
        y = rk4_step(&rhs, t, &y, -h);
        if !y.all_finite() {
            return Err(Error::NonFinite { time: node(start_time, terminal_time, h, n, i) });
        }
        values.push(y.clone());
    }
    values.reverse();
    GridFn::new(start_time, terminal_time, values)
}

/// Backward RK4 with the step count taken from `config`.
pub fn solve_backward<V: OdeValue>(
    rhs: impl Fn(f64, &V) -> V,
    terminal_time: f64,
    terminal_value: V,
    start_time: f64,
    config: &OdeConfig,
) -> Result<GridFn<V>> {
    let n = config.steps_for(terminal_time - start_time);
    solve_backward_steps(rhs, terminal_time, terminal_value, start_time, n)
}

/// Forward RK4 from `(t0, y0)` to `t1` in `n` steps.
pub fn solve_forward_steps<V: OdeValue>(
    rhs: impl Fn(f64, &V) -> V,
    t0: f64,
    y0: V,
    t1: f64,
    n: usize,
) -> Result<GridFn<V>> {
    if !(t0 < t1) || n == 0 {
        return Err(Error::InvalidGrid(format!("forward solve needs t0 {t0} < t1 {t1} and n >= 1")));
    }
    let h = (t1 - t0) / n as f64;
    let mut values = Vec::with_capacity(n + 1);
    let mut y = y0;
    values.push(y.clone());
    for i in 0..n {
        y = rk4_step(&rhs, node(t0, t1, h, n, i), &y, h);
        if !y.all_finite() {
            return Err(Error::NonFinite { time: node(t0, t1, h, n, i + 1) });
        }
        values.push(y.clone());
    }
    GridFn::new(t0, t1, values)
}

/// Fundamental matrix of `dPhi/dt = A(t) Phi`, `Phi(t0) = I`, sampled on
/// `[t0, t1]`.
pub fn solve_matrix_ode_forward<T: ComplexField<RealField = f64>>(
    a: impl Fn(f64) -> DMatrix<T>,
    dim: usize,
    t0: f64,
    t1: f64,
    config: &OdeConfig,
) -> Result<GridFn<DMatrix<T>>> {
    let n = config.steps_for(t1 - t0);
    solve_forward_steps(|t, phi: &DMatrix<T>| a(t) * phi, t0, DMatrix::identity(dim, dim), t1, n)
}

/// `Phi(t1)` of the fundamental matrix with `n` steps; identity when
/// `t0 == t1`.
pub fn fundamental_matrix_steps<T: ComplexField<RealField = f64>>(
    a: impl Fn(f64) -> DMatrix<T>,
    dim: usize,
    t0: f64,
    t1: f64,
    n: usize,
) -> Result<DMatrix<T>> {
    if t0 == t1 {
        return Ok(DMatrix::identity(dim, dim));
    }
    let g = solve_forward_steps(|t, phi: &DMatrix<T>| a(t) * phi, t0, DMatrix::identity(dim, dim), t1, n)?;
    Ok(g.last().clone())
}

pub fn fundamental_matrix<T: ComplexField<RealField = f64>>(
    a: impl Fn(f64) -> DMatrix<T>,
    dim: usize,
    t0: f64,
    t1: f64,
    config: &OdeConfig,
) -> Result<DMatrix<T>> {
    if t0 > t1 {
        return Err(Error::InvalidGrid(format!("t0 = {t0} must not exceed t1 = {t1}")));
    }
    fundamental_matrix_steps(a, dim, t0, t1, config.steps_for(t1 - t0))
}

/// Propagates `dY/dt = A(t) Y` across a coefficient grid with RK4, taking
/// one step per pair of grid intervals so that the stage evaluations land on
/// nodes. The grid must have an even number of intervals.
pub fn propagate_sampled<T: ComplexField<RealField = f64>>(
    coeffs: &GridFn<DMatrix<T>>,
    y0: DMatrix<T>,
) -> Result<DMatrix<T>> {
    let fine = coeffs.steps();
    if !fine.is_multiple_of(2) {
        return Err(Error::InvalidGrid(format!("coefficient grid needs an even step count, got {fine}")));
    }
    let a = coeffs.values();
    let h = 2.0 * coeffs.step();
    let mut y = y0;
    for i in 0..fine / 2 {
        let (a0, am, a1) = (&a[2 * i], &a[2 * i + 1], &a[2 * i + 2]);
        let k1 = a0 * &y;
        let k2 = am * y.add_scaled(0.5 * h, &k1);
        let k3 = am * y.add_scaled(0.5 * h, &k2);
        let k4 = a1 * y.add_scaled(h, &k3);
        let incr = k1.add_scaled(2.0, &k2).add_scaled(2.0, &k3).add_scaled(1.0, &k4);
        y = y.add_scaled(h / 6.0, &incr);
        if !y.all_finite() {
            return Err(Error::NonFinite { time: coeffs.time(2 * i + 2) });
        }
    }
    Ok(y)
}
