//! Run configuration: a flat TOML document, one key per model quantity.
//!
//! Model, market and contract keys are required. Numerical and output keys
//! have defaults. Unknown keys are rejected.

use std::fs;
use std::path::Path;

use serde::Deserialize;

use vswap_core::model::{validate, Generator, GeneratorConvention, MarketState, ModelParams, RegimeVector, SwapSpec};
use vswap_core::montecarlo::McConfig;
use vswap_core::numerics::OdeConfig;
use vswap_core::pricer::{ForwardMeasureHorizon, PricingConfig};
use vswap_core::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

fn default_steps_per_year() -> usize {
    OdeConfig::default().steps_per_year
}

fn default_paths() -> usize {
    McConfig::default().paths
}

fn default_steps_per_interval() -> usize {
    McConfig::default().steps_per_interval
}

fn default_seed() -> u64 {
    McConfig::default().seed
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    // market
    pub s0: f64,
    pub v0: f64,
    pub r0: f64,
    pub initial_regime: usize,
    // contract
    pub maturity: f64,
    pub observations: usize,
    pub notional: f64,
    // model
    pub kappa: f64,
    pub sigma: f64,
    pub rho: f64,
    pub alpha: f64,
    pub eta: f64,
    pub theta_star: Vec<f64>,
    pub beta_star: Vec<f64>,
    /// Row-major, `n * n` entries.
    pub generator: Vec<f64>,
    pub generator_convention: GeneratorConvention,
    #[serde(default)]
    pub regime_names: Vec<String>,
    // numerics
    #[serde(default = "default_steps_per_year")]
    pub steps_per_year: usize,
    #[serde(default)]
    pub forward_measure_horizon: ForwardMeasureHorizon,
    #[serde(default = "yes")]
    pub variance_points: bool,
    #[serde(default = "default_paths")]
    pub mc_paths: usize,
    #[serde(default = "default_steps_per_interval")]
    pub mc_steps_per_interval: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    // output
    #[serde(default)]
    pub format: Format,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub params: ModelParams,
    pub market: MarketState,
    pub swap: SwapSpec,
    pub pricing: PricingConfig,
    pub mc: McConfig,
    pub regime_names: Vec<String>,
    pub format: Format,
}

impl RunConfig {
    pub fn regime_name(&self, i: usize) -> String {
        self.regime_names.get(i).cloned().unwrap_or_else(|| format!("regime{i}"))
    }
}

pub fn parse_config(text: &str) -> Result<RunConfig> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string().trim_end().to_string()))?;
    build(raw)
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    parse_config(&text)
}

fn build(raw: RawConfig) -> Result<RunConfig> {
    let n = raw.theta_star.len();
    if raw.generator.len() != n * n {
        return Err(Error::Config(format!(
            "dimension mismatch: generator has {} entries, {n} regimes need {}",
            raw.generator.len(),
            n * n
        )));
    }
    if !raw.regime_names.is_empty() && raw.regime_names.len() != n {
        return Err(Error::Config(format!(
            "dimension mismatch: {} regime_names for {n} regimes",
            raw.regime_names.len()
        )));
    }
    let params = ModelParams {
        kappa: raw.kappa,
        sigma: raw.sigma,
        rho: raw.rho,
        alpha: raw.alpha,
        eta: raw.eta,
        theta_star: RegimeVector::new(raw.theta_star),
        beta_star: RegimeVector::new(raw.beta_star),
        generator: Generator::from_row_major(n, &raw.generator, raw.generator_convention),
    };
    let market = MarketState::new(raw.s0, raw.v0, raw.r0, raw.initial_regime);
    let swap = SwapSpec::new(raw.maturity, raw.observations, raw.notional);
    // Feller violations are left to the commands: only the analytic
    // pricer refuses them.
    let hard: Vec<_> = validate(&params, &market, &swap).into_iter().filter(|v| !v.code.is_feller()).collect();
    if !hard.is_empty() {
        return Err(Error::Invalid(hard));
    }
    let pricing = PricingConfig {
        ode: OdeConfig::new(raw.steps_per_year)?,
        horizon: raw.forward_measure_horizon,
        variance_points: raw.variance_points,
    };
    let mc = McConfig {
        paths: raw.mc_paths,
        steps_per_interval: raw.mc_steps_per_interval,
        seed: raw.seed,
        variance_points: raw.variance_points,
    };
    Ok(RunConfig { params, market, swap, pricing, mc, regime_names: raw.regime_names, format: raw.format })
}
