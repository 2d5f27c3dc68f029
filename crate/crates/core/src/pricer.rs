//! Fair strike of a discretely sampled variance swap.
//!
//! Each squared simple return has forward expectation
//! `E[(S_j / S_{j-1} - 1)^2] = f(2) - 2 f(1) + 1`, with `f` the forward
//! characteristic function of the log-return over the `j`-th interval,
//! valued at time zero. The strike annualizes their sum.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bond::BondCurve;
use crate::charfn::{char_fn_real, Window};
use crate::error::{Error, Result};
use crate::model::{ensure_priceable, GeneratorConvention, MarketState, ModelParams, SwapSpec};
use crate::numerics::OdeConfig;

/// Variance points per unit of annualized variance.
pub const VARIANCE_POINTS: f64 = 100.0 * 100.0;

const NEGATIVE_SLACK: f64 = -1e-12;

/// Maturity of the bond used as numeraire inside the characteristic
/// function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ForwardMeasureHorizon {
    /// One forward measure for the whole swap.
    #[default]
    SwapMaturity,
    /// A separate forward measure per interval, maturing at its end.
    IntervalEnd,
}

impl ForwardMeasureHorizon {
    pub fn as_str(self) -> &'static str {
        match self {
            ForwardMeasureHorizon::SwapMaturity => "swap-maturity",
            ForwardMeasureHorizon::IntervalEnd => "interval-end",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PricingConfig {
    pub ode: OdeConfig,
    pub horizon: ForwardMeasureHorizon,
    /// Scale by `100^2`; otherwise the strike is unitless annualized variance.
    pub variance_points: bool,
}

impl Default for PricingConfig {
    fn default() -> Self {
        Self { ode: OdeConfig::default(), horizon: ForwardMeasureHorizon::default(), variance_points: true }
    }
}

impl PricingConfig {
    pub fn scale(&self) -> f64 {
        if self.variance_points {
            VARIANCE_POINTS
        } else {
            1.0
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuoteSettings {
    pub steps_per_year: usize,
    pub generator_convention: GeneratorConvention,
    pub forward_measure_horizon: ForwardMeasureHorizon,
    pub variance_points: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrikeQuote {
    pub strike: f64,
    pub maturity: f64,
    pub observations: usize,
    pub initial_regime: usize,
    /// `E[(S_j / S_{j-1} - 1)^2]` for `j = 1..=observations`.
    pub per_interval: Vec<f64>,
    pub settings: QuoteSettings,
}

/// Builds the numeraire curves an interval needs. For the swap-maturity
/// horizon one curve serves every interval.
#[derive(Debug, Clone)]
pub struct Curves {
    horizon: ForwardMeasureHorizon,
    curves: Vec<BondCurve>,
}

impl Curves {
    pub fn build(params: &ModelParams, swap: &SwapSpec, config: &PricingConfig) -> Result<Self> {
        let curves = match config.horizon {
            ForwardMeasureHorizon::SwapMaturity => vec![BondCurve::build(swap.maturity, params, &config.ode)?],
            ForwardMeasureHorizon::IntervalEnd => (1..=swap.observations)
                .into_par_iter()
                .map(|j| BondCurve::build(swap.interval_start(j) + swap.dt(), params, &config.ode))
                .collect::<Result<Vec<_>>>()?,
        };
        Ok(Self { horizon: config.horizon, curves })
    }

    pub fn for_interval(&self, j: usize) -> &BondCurve {
        match self.horizon {
            ForwardMeasureHorizon::SwapMaturity => &self.curves[0],
            ForwardMeasureHorizon::IntervalEnd => &self.curves[j - 1],
        }
    }
}

/// Forward expectation of the squared simple return over interval `j`
/// (1-based).
pub fn interval_term(
    j: usize,
    params: &ModelParams,
    market: &MarketState,
    swap: &SwapSpec,
    curve: &BondCurve,
    config: &PricingConfig,
) -> Result<f64> {
    if j == 0 || j > swap.observations {
        return Err(Error::InvalidGrid(format!("interval {j} not in 1..={}", swap.observations)));
    }
    let window = Window::new(0.0, swap.interval_start(j), swap.dt());
    let f2 = char_fn_real(2.0, window, market, params, curve, &config.ode)?;
    let f1 = char_fn_real(1.0, window, market, params, curve, &config.ode)?;
    let term = f2 - 2.0 * f1 + 1.0;
    if term < NEGATIVE_SLACK {
        return Err(Error::NegativeExpectation { interval: j, value: term });
    }
    Ok(term)
}

/// Fair strike `K = (scale / T) * sum_j interval_term(j)`.
///
/// Intervals are priced in parallel and summed in index order.
pub fn fair_strike(
    params: &ModelParams,
    market: &MarketState,
    swap: &SwapSpec,
    config: &PricingConfig,
) -> Result<StrikeQuote> {
    ensure_priceable(params, market, swap)?;
    let curves = Curves::build(params, swap, config)?;
    let per_interval = (1..=swap.observations)
        .into_par_iter()
        .map(|j| interval_term(j, params, market, swap, curves.for_interval(j), config))
        .collect::<Result<Vec<f64>>>()?;
    let strike = config.scale() / swap.maturity * per_interval.iter().sum::<f64>();
    Ok(StrikeQuote {
        strike,
        maturity: swap.maturity,
        observations: swap.observations,
        initial_regime: market.x0,
        per_interval,
        settings: QuoteSettings {
            steps_per_year: config.ode.steps_per_year,
            generator_convention: params.generator.convention,
            forward_measure_horizon: config.horizon,
            variance_points: config.variance_points,
        },
    })
}

/// Value at maturity of the long side: `(RV - K) * L`.
pub fn payoff_value(realized_variance: f64, quote: &StrikeQuote, swap: &SwapSpec) -> Result<f64> {
    if !(realized_variance >= 0.0) {
        return Err(Error::NegativeVariance(realized_variance));
    }
    Ok((realized_variance - quote.strike) * swap.notional)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub observations: usize,
    pub strike: f64,
}

/// Fair strikes for several sampling frequencies at a fixed maturity.
pub fn sweep(
    params: &ModelParams,
    market: &MarketState,
    maturity: f64,
    frequencies: &[usize],
    config: &PricingConfig,
) -> Result<Vec<SweepRow>> {
    if frequencies.is_empty() {
        return Err(Error::Config("frequency list is empty".into()));
    }
    if frequencies.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config("frequencies must be strictly ascending".into()));
    }
    frequencies
        .par_iter()
        .map(|&n| {
            let swap = SwapSpec::new(maturity, n, 1.0);
            fair_strike(params, market, &swap, config).map(|q| SweepRow { observations: n, strike: q.strike })
        })
        .collect()
}
