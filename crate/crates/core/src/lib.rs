//! Variance swap pricing under a regime-switching Heston-CIR model.
//!
//! The analytic route builds the forward characteristic function of each
//! log return from Riccati solutions and a time-ordered regime matrix
//! exponential; [`montecarlo`] simulates the same dynamics as an
//! independent check.

pub mod bond;
pub mod charfn;
pub mod error;
pub mod model;
pub mod montecarlo;
pub mod numerics;
pub mod pricer;

pub use bond::BondCurve;
pub use error::{Error, Result};
pub use model::{Generator, GeneratorConvention, MarketState, ModelParams, RegimeVector, SwapSpec};
pub use montecarlo::{run_mc, McConfig, McEstimate};
pub use numerics::OdeConfig;
pub use pricer::{fair_strike, sweep, PricingConfig, StrikeQuote};
