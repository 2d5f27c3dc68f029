//! Model inputs: risk-neutral Heston-CIR parameters with regime-dependent
//! long-run levels, the Markov chain generator, the market state and the
//! swap contract terms.
//!
//! Inputs are plain values. [`validate`] reports every broken invariant as
//! data; the pricing entry points turn the report into an error.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SUM_TOL: f64 = 1e-12;

/// Per-regime levels, indexed by regime.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RegimeVector(pub Vec<f64>);

impl RegimeVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn constant(value: f64, regimes: usize) -> Self {
        Self(vec![value; regimes])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn get(&self, regime: usize) -> f64 {
        self.0[regime]
    }
}

/// How the rate matrix is laid out.
///
/// `RowSumsZero`: entry (i, j) is the rate of jumping from state i to j.
/// `ColumnSumsZero`: entry (i, j) is the rate of jumping from state j to i,
/// which is the layout that acts on unit-vector states as `dX = Q X dt`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GeneratorConvention {
    #[default]
    RowSumsZero,
    ColumnSumsZero,
}

impl GeneratorConvention {
    pub fn as_str(self) -> &'static str {
        match self {
            GeneratorConvention::RowSumsZero => "row-sums-zero",
            GeneratorConvention::ColumnSumsZero => "column-sums-zero",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    pub rates: DMatrix<f64>,
    pub convention: GeneratorConvention,
}

impl Generator {
    pub fn new(rates: DMatrix<f64>, convention: GeneratorConvention) -> Self {
        Self { rates, convention }
    }

    /// Builds a generator from a row-major list of `n * n` entries.
    pub fn from_row_major(n: usize, entries: &[f64], convention: GeneratorConvention) -> Self {
        Self::new(DMatrix::from_row_slice(n, n, entries), convention)
    }

    /// The chain that never leaves its initial state.
    pub fn zero(n: usize) -> Self {
        Self::new(DMatrix::zeros(n, n), GeneratorConvention::RowSumsZero)
    }

    pub fn dim(&self) -> usize {
        self.rates.nrows()
    }

    fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let (r, c) = self.rates.shape();
        if r != c || r == 0 {
            out.push(Violation::new(
                ViolationCode::GeneratorShape,
                None,
                format!("generator must be square and non-empty, got {r}x{c}"),
            ));
            return out;
        }
        if self.rates.iter().any(|x| !x.is_finite()) {
            out.push(Violation::new(
                ViolationCode::GeneratorNonFinite,
                None,
                "generator has non-finite entries".into(),
            ));
            return out;
        }
        for i in 0..r {
            for j in 0..r {
                if i != j && self.rates[(i, j)] < 0.0 {
                    out.push(Violation::new(
                        ViolationCode::GeneratorOffDiagonal,
                        Some(i),
                        format!("off-diagonal rate ({i}, {j}) = {} is negative", self.rates[(i, j)]),
                    ));
                }
            }
        }
        for k in 0..r {
            let (sum, what) = match self.convention {
                GeneratorConvention::RowSumsZero => (self.rates.row(k).sum(), "row"),
                GeneratorConvention::ColumnSumsZero => (self.rates.column(k).sum(), "column"),
            };
            if sum.abs() > SUM_TOL {
                out.push(Violation::new(
                    ViolationCode::GeneratorSum,
                    Some(k),
                    format!("{what} {k} sums to {sum:e}"),
                ));
            }
        }
        out
    }
}

/// The generator in semimartingale form: column `j` holds the rates out of
/// state `j`, and columns sum to zero.
pub fn effective_generator(g: &Generator) -> Result<DMatrix<f64>> {
    let v = g.violations();
    if !v.is_empty() {
        return Err(Error::Invalid(v));
    }
    Ok(match g.convention {
        GeneratorConvention::ColumnSumsZero => g.rates.clone(),
        GeneratorConvention::RowSumsZero => g.rates.transpose(),
    })
}

/// Risk-neutral parameters. `theta_star` and `beta_star` are the long-run
/// variance and short-rate levels in each regime.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub kappa: f64,
    pub sigma: f64,
    pub rho: f64,
    pub alpha: f64,
    pub eta: f64,
    pub theta_star: RegimeVector,
    pub beta_star: RegimeVector,
    pub generator: Generator,
}

impl ModelParams {
    pub fn regimes(&self) -> usize {
        self.theta_star.len()
    }

    /// Three-state business-cycle example (contraction, trough, expansion).
    pub fn business_cycle_example() -> Self {
        Self {
            kappa: 2.0,
            sigma: 0.1,
            rho: -0.4,
            alpha: 1.2,
            eta: 0.01,
            theta_star: RegimeVector::new(vec![0.05, 0.075, 0.04]),
            beta_star: RegimeVector::new(vec![0.05, 0.04, 0.075]),
            generator: Generator::from_row_major(
                3,
                &[-1.0, 0.1, 0.9, 0.9, -1.0, 0.1, 0.5, 0.5, -1.0],
                GeneratorConvention::RowSumsZero,
            ),
        }
    }

    /// Single-regime model with the given long-run levels.
    pub fn single_regime(&self, theta: f64, beta: f64) -> Self {
        Self {
            theta_star: RegimeVector::new(vec![theta]),
            beta_star: RegimeVector::new(vec![beta]),
            generator: Generator::zero(1),
            ..self.clone()
        }
    }

    /// Same levels, chain frozen in its initial state.
    pub fn without_switching(&self) -> Self {
        Self {
            generator: Generator::zero(self.regimes()),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarketState {
    pub s0: f64,
    pub v0: f64,
    pub r0: f64,
    pub x0: usize,
}

impl MarketState {
    pub fn new(s0: f64, v0: f64, r0: f64, x0: usize) -> Self {
        Self { s0, v0, r0, x0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwapSpec {
    pub maturity: f64,
    pub observations: usize,
    pub notional: f64,
}

impl SwapSpec {
    pub fn new(maturity: f64, observations: usize, notional: f64) -> Self {
        Self { maturity, observations, notional }
    }

    /// Sampling interval.
    pub fn dt(&self) -> f64 {
        self.maturity / self.observations as f64
    }

    /// Annualization factor.
    pub fn annualization(&self) -> f64 {
        self.observations as f64 / self.maturity
    }

    /// Start of observation interval `j` (1-based).
    pub fn interval_start(&self, j: usize) -> f64 {
        (j - 1) as f64 * self.dt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationCode {
    DimensionMismatch,
    EmptyRegimes,
    NegativeLevel,
    NonPositiveKappa,
    NegativeSigma,
    RhoOutOfRange,
    NonPositiveAlpha,
    NegativeEta,
    FellerVariance,
    FellerRate,
    GeneratorShape,
    GeneratorNonFinite,
    GeneratorOffDiagonal,
    GeneratorSum,
    NonPositiveSpot,
    NegativeVariance,
    NegativeRate,
    RegimeOutOfRange,
    NonPositiveMaturity,
    NoObservations,
    NonPositiveNotional,
}

impl ViolationCode {
    pub fn as_str(self) -> &'static str {
        use ViolationCode::*;
        match self {
            DimensionMismatch => "dimension_mismatch",
            EmptyRegimes => "empty_regimes",
            NegativeLevel => "negative_level",
            NonPositiveKappa => "non_positive_kappa",
            NegativeSigma => "negative_sigma",
            RhoOutOfRange => "rho_out_of_range",
            NonPositiveAlpha => "non_positive_alpha",
            NegativeEta => "negative_eta",
            FellerVariance => "feller_variance",
            FellerRate => "feller_rate",
            GeneratorShape => "generator_shape",
            GeneratorNonFinite => "generator_non_finite",
            GeneratorOffDiagonal => "generator_off_diagonal",
            GeneratorSum => "generator_sum",
            NonPositiveSpot => "non_positive_spot",
            NegativeVariance => "negative_variance",
            NegativeRate => "negative_rate",
            RegimeOutOfRange => "regime_out_of_range",
            NonPositiveMaturity => "non_positive_maturity",
            NoObservations => "no_observations",
            NonPositiveNotional => "non_positive_notional",
        }
    }

    /// Feller violations only block the analytic pricer; the simulator's
    /// full truncation copes with them.
    pub fn is_feller(self) -> bool {
        matches!(self, ViolationCode::FellerVariance | ViolationCode::FellerRate)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub code: ViolationCode,
    pub regime: Option<usize>,
    pub message: String,
}

impl Violation {
    fn new(code: ViolationCode, regime: Option<usize>, message: String) -> Self {
        Self { code, regime, message }
    }
}

fn finite_and(x: f64, pred: impl Fn(f64) -> bool) -> bool {
    x.is_finite() && pred(x)
}

/// Checks every input invariant. An empty list means the inputs are valid.
/// The result is sorted by (code, regime) so it does not depend on the
/// order in which checks run.
pub fn validate(params: &ModelParams, market: &MarketState, swap: &SwapSpec) -> Vec<Violation> {
    use ViolationCode::*;
    let mut out = Vec::new();
    let mut push = |code, regime, message: String| out.push(Violation::new(code, regime, message));

    if !finite_and(params.kappa, |x| x > 0.0) {
        push(NonPositiveKappa, None, format!("kappa = {} must be > 0", params.kappa));
    }
    if !finite_and(params.sigma, |x| x >= 0.0) {
        push(NegativeSigma, None, format!("sigma = {} must be >= 0", params.sigma));
    }
    if !finite_and(params.rho, |x| x.abs() <= 1.0) {
        push(RhoOutOfRange, None, format!("rho = {} must lie in [-1, 1]", params.rho));
    }
    if !finite_and(params.alpha, |x| x > 0.0) {
        push(NonPositiveAlpha, None, format!("alpha = {} must be > 0", params.alpha));
    }
    if !finite_and(params.eta, |x| x >= 0.0) {
        push(NegativeEta, None, format!("eta = {} must be >= 0", params.eta));
    }

    let n = params.theta_star.len();
    if n == 0 {
        push(EmptyRegimes, None, "theta_star is empty".into());
    }
    if params.beta_star.len() != n || params.generator.dim() != n {
        push(
            DimensionMismatch,
            None,
            format!(
                "theta_star has {n} entries, beta_star {}, generator {}x{}",
                params.beta_star.len(),
                params.generator.rates.nrows(),
                params.generator.rates.ncols()
            ),
        );
    }
    for (name, vec) in [("theta_star", &params.theta_star), ("beta_star", &params.beta_star)] {
        for (i, &x) in vec.as_slice().iter().enumerate() {
            if !finite_and(x, |x| x >= 0.0) {
                push(NegativeLevel, Some(i), format!("{name}[{i}] = {x} must be >= 0"));
            }
        }
    }
    let feller_slack = |lhs: f64, rhs: f64| lhs >= rhs * (1.0 - 1e-12);
    for (i, &th) in params.theta_star.as_slice().iter().enumerate() {
        let lhs = 2.0 * params.kappa * th;
        let rhs = params.sigma * params.sigma;
        if !feller_slack(lhs, rhs) {
            push(FellerVariance, Some(i), format!("2*kappa*theta_star[{i}] = {lhs} < sigma^2 = {rhs}"));
        }
    }
    for (i, &b) in params.beta_star.as_slice().iter().enumerate() {
        let lhs = 2.0 * params.alpha * b;
        let rhs = params.eta * params.eta;
        if !feller_slack(lhs, rhs) {
            push(FellerRate, Some(i), format!("2*alpha*beta_star[{i}] = {lhs} < eta^2 = {rhs}"));
        }
    }
    for v in params.generator.violations() {
        push(v.code, v.regime, v.message);
    }

    if !finite_and(market.s0, |x| x > 0.0) {
        push(NonPositiveSpot, None, format!("s0 = {} must be > 0", market.s0));
    }
    if !finite_and(market.v0, |x| x >= 0.0) {
        push(NegativeVariance, None, format!("v0 = {} must be >= 0", market.v0));
    }
    if !finite_and(market.r0, |x| x >= 0.0) {
        push(NegativeRate, None, format!("r0 = {} must be >= 0", market.r0));
    }
    if market.x0 >= n.max(1) {
        push(RegimeOutOfRange, Some(market.x0), format!("initial regime {} not in [0, {n})", market.x0));
    }

    if !finite_and(swap.maturity, |x| x > 0.0) {
        push(NonPositiveMaturity, None, format!("maturity = {} must be > 0", swap.maturity));
    }
    if swap.observations == 0 {
        push(NoObservations, None, "observation count must be >= 1".into());
    }
    if !finite_and(swap.notional, |x| x > 0.0) {
        push(NonPositiveNotional, None, format!("notional = {} must be > 0", swap.notional));
    }

    out.sort_by_key(|v| (v.code, v.regime));
    out
}

/// Hard check for the analytic route: any violation, Feller included.
pub fn ensure_priceable(params: &ModelParams, market: &MarketState, swap: &SwapSpec) -> Result<()> {
    let v = validate(params, market, swap);
    if v.is_empty() {
        Ok(())
    } else {
        Err(Error::Invalid(v))
    }
}

/// Check for simulation: Feller violations are tolerated and returned as
/// warnings.
pub fn ensure_simulable(
    params: &ModelParams,
    market: &MarketState,
    swap: &SwapSpec,
) -> Result<Vec<Violation>> {
    let (warnings, errors): (Vec<_>, Vec<_>) =
        validate(params, market, swap).into_iter().partition(|v| v.code.is_feller());
    if errors.is_empty() {
        Ok(warnings)
    } else {
        Err(Error::Invalid(errors))
    }
}
