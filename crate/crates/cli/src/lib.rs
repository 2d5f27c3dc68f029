//! Command implementations behind the `vswap` binary.
//!
//! Every command returns the rendered artifact as a string so callers can
//! write it to a file or stdout. Rendering is deterministic: identical
//! config and seed give byte-identical output.

pub mod config;

use serde::Serialize;

use vswap_core::model::{MarketState, SwapSpec};
use vswap_core::montecarlo::{run_mc, McConfig, McEstimate};
use vswap_core::pricer::{fair_strike, sweep, StrikeQuote};
use vswap_core::{Error, Result};

pub use config::{load_config, parse_config, Format, RunConfig};

/// Bumped whenever a CSV column is added, removed or reordered.
pub const CSV_SCHEMA: u32 = 1;

/// Published per-state strikes for the bundled three-regime config,
/// rows by initial regime, columns by `TABLE2_FREQUENCIES`.
pub const TABLE2_FREQUENCIES: [usize; 4] = [4, 12, 26, 52];
pub const TABLE2_PUBLISHED: [[f64; 4]; 3] = [
    [517.89, 505.74, 502.61, 501.28],
    [661.93, 648.32, 644.83, 643.37],
    [464.79, 450.21, 446.42, 444.82],
];

#[derive(Debug, Serialize)]
struct PriceRow {
    schema: u32,
    maturity: f64,
    observations: usize,
    initial_regime: usize,
    strike: f64,
    steps_per_year: usize,
    generator_convention: &'static str,
    forward_measure_horizon: &'static str,
    variance_points: bool,
}

#[derive(Debug, Serialize)]
struct McRow {
    schema: u32,
    maturity: f64,
    observations: usize,
    initial_regime: usize,
    strike: f64,
    std_error: f64,
    paths: usize,
    steps_per_interval: usize,
    seed: u64,
    discount_mean: f64,
    discount_std_error: f64,
    bond_normalized: Option<f64>,
}

#[derive(Debug, Serialize)]
struct SweepCsvRow {
    schema: u32,
    observations: usize,
    analytic: f64,
    mc: Option<f64>,
    mc_std_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct SweepPoint {
    pub observations: usize,
    pub analytic: f64,
    pub mc: Option<McEstimate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct Table2Row {
    pub state: String,
    pub observations: usize,
    pub computed: f64,
    pub published: Option<f64>,
    pub deviation_pct: Option<f64>,
    pub no_switching: f64,
    pub no_switching_deviation_pct: Option<f64>,
}

#[derive(Debug, Serialize)]
struct Table2CsvRow<'a> {
    schema: u32,
    state: &'a str,
    observations: usize,
    computed: f64,
    published: Option<f64>,
    deviation_pct: Option<f64>,
    no_switching: f64,
    no_switching_deviation_pct: Option<f64>,
}

fn csv_string<T: Serialize>(rows: impl IntoIterator<Item = T>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row).map_err(|e| Error::Config(format!("csv: {e}")))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Config(format!("csv: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::Config(format!("csv: {e}")))
}

fn json_string<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::Config(format!("json: {e}")))?;
    s.push('\n');
    Ok(s)
}

pub fn price(cfg: &RunConfig, format: Format) -> Result<(StrikeQuote, String)> {
    let q = fair_strike(&cfg.params, &cfg.market, &cfg.swap, &cfg.pricing)?;
    let out = match format {
        Format::Json => json_string(&q)?,
        Format::Csv => csv_string([PriceRow {
            schema: CSV_SCHEMA,
            maturity: q.maturity,
            observations: q.observations,
            initial_regime: q.initial_regime,
            strike: q.strike,
            steps_per_year: q.settings.steps_per_year,
            generator_convention: q.settings.generator_convention.as_str(),
            forward_measure_horizon: q.settings.forward_measure_horizon.as_str(),
            variance_points: q.settings.variance_points,
        }])?,
    };
    Ok((q, out))
}

fn mc_at(cfg: &RunConfig, swap: &SwapSpec, mc: &McConfig) -> Result<McEstimate> {
    run_mc(&cfg.params, &cfg.market, swap, mc)
}

pub fn mc(cfg: &RunConfig, format: Format) -> Result<(McEstimate, String)> {
    let e = mc_at(cfg, &cfg.swap, &cfg.mc)?;
    let out = match format {
        Format::Json => json_string(&e)?,
        Format::Csv => csv_string([McRow {
            schema: CSV_SCHEMA,
            maturity: cfg.swap.maturity,
            observations: cfg.swap.observations,
            initial_regime: cfg.market.x0,
            strike: e.strike,
            std_error: e.std_error,
            paths: e.paths,
            steps_per_interval: cfg.mc.steps_per_interval,
            seed: e.seed,
            discount_mean: e.discount_mean,
            discount_std_error: e.discount_std_error,
            bond_normalized: e.bond_normalized,
        }])?,
    };
    Ok((e, out))
}

/// Analytic strikes over `frequencies`, with Monte Carlo alongside when
/// `with_mc` is set.
pub fn sweep_cmd(cfg: &RunConfig, frequencies: &[usize], with_mc: bool, format: Format) -> Result<(Vec<SweepPoint>, String)> {
    let rows = sweep(&cfg.params, &cfg.market, cfg.swap.maturity, frequencies, &cfg.pricing)?;
    let mut points = Vec::with_capacity(rows.len());
    for row in rows {
        let mc = if with_mc {
            let swap = SwapSpec::new(cfg.swap.maturity, row.observations, cfg.swap.notional);
            Some(mc_at(cfg, &swap, &cfg.mc)?)
        } else {
            None
        };
        points.push(SweepPoint { observations: row.observations, analytic: row.strike, mc });
    }
    let out = match format {
        Format::Json => json_string(&points)?,
        Format::Csv => csv_string(points.iter().map(|p| SweepCsvRow {
            schema: CSV_SCHEMA,
            observations: p.observations,
            analytic: p.analytic,
            mc: p.mc.as_ref().map(|e| e.strike),
            mc_std_error: p.mc.as_ref().map(|e| e.std_error),
        }))?,
    };
    Ok((points, out))
}

fn pct(computed: f64, reference: Option<f64>) -> Option<f64> {
    reference.map(|r| 100.0 * (computed - r) / r)
}

/// Every initial regime at the four reference frequencies, with the
/// published values and the same model with switching turned off.
/// Published values are attached only for a three-regime config.
pub fn report_table2(cfg: &RunConfig, format: Format) -> Result<(Vec<Table2Row>, String)> {
    let frozen = cfg.params.without_switching();
    let regimes = cfg.params.regimes();
    let mut rows = Vec::with_capacity(regimes * TABLE2_FREQUENCIES.len());
    for x0 in 0..regimes {
        let market = MarketState { x0, ..cfg.market };
        for (k, &n) in TABLE2_FREQUENCIES.iter().enumerate() {
            let swap = SwapSpec::new(cfg.swap.maturity, n, cfg.swap.notional);
            let computed = fair_strike(&cfg.params, &market, &swap, &cfg.pricing)?.strike;
            let no_switching = fair_strike(&frozen, &market, &swap, &cfg.pricing)?.strike;
            let published = (regimes == 3).then(|| TABLE2_PUBLISHED[x0][k]);
            rows.push(Table2Row {
                state: cfg.regime_name(x0),
                observations: n,
                computed,
                published,
                deviation_pct: pct(computed, published),
                no_switching,
                no_switching_deviation_pct: pct(no_switching, published),
            });
        }
    }
    let out = match format {
        Format::Json => json_string(&rows)?,
        Format::Csv => csv_string(rows.iter().map(|r| Table2CsvRow {
            schema: CSV_SCHEMA,
            state: &r.state,
            observations: r.observations,
            computed: r.computed,
            published: r.published,
            deviation_pct: r.deviation_pct,
            no_switching: r.no_switching,
            no_switching_deviation_pct: r.no_switching_deviation_pct,
        }))?,
    };
    Ok((rows, out))
}

/// Parses `4,12,26,52` or ranges such as `1-52`, or a mix of both.
pub fn parse_frequencies(text: &str) -> std::result::Result<Vec<usize>, String> {
    let mut out = Vec::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let bad = |_| format!("bad frequency '{part}'");
        match part.split_once('-') {
            Some((a, b)) => {
                let (a, b): (usize, usize) = (a.trim().parse().map_err(bad)?, b.trim().parse().map_err(bad)?);
                if a > b {
                    return Err(format!("empty range '{part}'"));
                }
                out.extend(a..=b);
            }
            None => out.push(part.parse().map_err(bad)?),
        }
    }
    if out.is_empty() {
        return Err("no frequencies given".into());
    }
    Ok(out)
}

/// Process exit status for an error: 3 for bad input, 4 for numerical
/// failures.
pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Invalid(_) | Error::Config(_) | Error::RegimeOutOfRange { .. } | Error::InvalidGrid(_) => 3,
        _ => 4,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frequency_lists() {
        assert_eq!(parse_frequencies("4,12,26,52").unwrap(), vec![4, 12, 26, 52]);
        assert_eq!(parse_frequencies("1-3, 7").unwrap(), vec![1, 2, 3, 7]);
        assert!(parse_frequencies("").is_err());
        assert!(parse_frequencies("5-2").is_err());
        assert!(parse_frequencies("x").is_err());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::Config("x".into())), 3);
        assert_eq!(exit_code(&Error::DegenerateDiscount), 4);
    }
}
