//! Monte Carlo oracle: the regime-switching Heston-CIR system simulated
//! under the risk-neutral measure.
//!
//! Each path draws a full chain trajectory first, then runs a
//! full-truncation Euler scheme on `(ln S, v, r)` with the long-run levels
//! frozen at the chain state at the start of each sub-step. The fair strike
//! is recovered as the discounted ratio `E[D_T RV] / E[D_T]`, which is the
//! forward-measure expectation of `RV` without any reference to the
//! forward-measure chain.
//!
//! Every path has its own ChaCha stream keyed by `(seed, path index)`, and
//! the reduction runs in index order, so results do not depend on the
//! thread count.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bond::BondCurve;
use crate::error::{Error, Result};
use crate::model::{effective_generator, ensure_simulable, Generator, MarketState, ModelParams, SwapSpec, Violation};
use crate::numerics::OdeConfig;
use crate::pricer::VARIANCE_POINTS;

/// Piecewise-constant chain trajectory on `[0, horizon]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainPath {
    pub horizon: f64,
    pub jump_times: Vec<f64>,
    /// `states[k]` holds on `[jump_times[k-1], jump_times[k])`.
    pub states: Vec<usize>,
}

impl ChainPath {
    pub fn state_at(&self, t: f64) -> usize {
        let k = self.jump_times.partition_point(|&s| s <= t);
        self.states[k]
    }

    /// Time spent in each of `n` states.
    pub fn occupation(&self, n: usize) -> Vec<f64> {
        let mut out = vec![0.0; n];
        let mut prev = 0.0;
        for (k, &state) in self.states.iter().enumerate() {
            let end = self.jump_times.get(k).copied().unwrap_or(self.horizon);
            out[state] += end - prev;
            prev = end;
        }
        out
    }
}

/// Jump-chain sampler with exit rates and jump distributions precomputed
/// from the column-form generator.
#[derive(Debug, Clone)]
pub struct ChainSampler {
    exit_rate: Vec<f64>,
    // cumulative jump probabilities out of each state
    jump_cdf: Vec<Vec<(usize, f64)>>,
}

impl ChainSampler {
    pub fn new(generator: &Generator) -> Result<Self> {
        Ok(Self::from_effective(&effective_generator(generator)?))
    }

    fn from_effective(q: &DMatrix<f64>) -> Self {
        let n = q.nrows();
        let mut exit_rate = Vec::with_capacity(n);
        let mut jump_cdf = Vec::with_capacity(n);
        for from in 0..n {
            let total: f64 = (0..n).filter(|&to| to != from).map(|to| q[(to, from)]).sum();
            let mut acc = 0.0;
            let cdf = (0..n)
                .filter(|&to| to != from && q[(to, from)] > 0.0)
                .map(|to| {
                    acc += q[(to, from)] / total;
                    (to, acc)
                })
                .collect();
            exit_rate.push(total);
            jump_cdf.push(cdf);
        }
        Self { exit_rate, jump_cdf }
    }

    pub fn sample<R: Rng + ?Sized>(&self, x0: usize, horizon: f64, rng: &mut R) -> ChainPath {
        let mut jump_times = Vec::new();
        let mut states = vec![x0];
        let mut t = 0.0;
        let mut state = x0;
        loop {
            let rate = self.exit_rate[state];
            if rate <= 0.0 {
                break;
            }
            let hold: f64 = rng.sample::<f64, _>(Exp1) / rate;
            t += hold;
            if t >= horizon {
                break;
            }
            let u: f64 = rng.random();
            let cdf = &self.jump_cdf[state];
            state = cdf.iter().find(|(_, c)| u < *c).unwrap_or(&cdf[cdf.len() - 1]).0;
            jump_times.push(t);
            states.push(state);
        }
        ChainPath { horizon, jump_times, states }
    }
}

pub fn simulate_chain<R: Rng + ?Sized>(generator: &Generator, x0: usize, horizon: f64, rng: &mut R) -> Result<ChainPath> {
    Ok(ChainSampler::new(generator)?.sample(x0, horizon, rng))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub paths: usize,
    pub steps_per_interval: usize,
    pub seed: u64,
    pub variance_points: bool,
}

impl Default for McConfig {
    fn default() -> Self {
        Self { paths: 200_000, steps_per_interval: 64, seed: 20_240_101, variance_points: true }
    }
}

/// One simulated path: realized variance and `exp(-int_0^T r dt)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathSample {
    pub realized_variance: f64,
    pub discount: f64,
}

pub fn path_rng(seed: u64, path: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path);
    rng
}

struct Stepper<'a> {
    params: &'a ModelParams,
    market: &'a MarketState,
    swap: &'a SwapSpec,
    sampler: &'a ChainSampler,
    steps_per_interval: usize,
    scale: f64,
}

impl Stepper<'_> {
    fn run<R: Rng + ?Sized>(&self, rng: &mut R) -> PathSample {
        let p = self.params;
        let chain = self.sampler.sample(self.market.x0, self.swap.maturity, rng);
        let h = self.swap.dt() / self.steps_per_interval as f64;
        let sqrt_h = h.sqrt();
        let rho_bar = (1.0 - p.rho * p.rho).max(0.0).sqrt();
        let theta = p.theta_star.as_slice();
        let beta = p.beta_star.as_slice();

        let mut log_s = self.market.s0.ln();
        let mut v = self.market.v0;
        let mut r = self.market.r0;
        let mut rate_integral = 0.0;
        let mut sum_sq = 0.0;
        let mut next_jump = 0;
        let mut state = self.market.x0;

        for j in 0..self.swap.observations {
            let log_s_prev = log_s;
            for k in 0..self.steps_per_interval {
                let t = (j * self.steps_per_interval + k) as f64 * h;
                while next_jump < chain.jump_times.len() && chain.jump_times[next_jump] <= t {
                    next_jump += 1;
                    state = chain.states[next_jump];
                }
                let z_v: f64 = rng.sample(StandardNormal);
                let z_perp: f64 = rng.sample(StandardNormal);
                let z_r: f64 = rng.sample(StandardNormal);
                let vp = v.max(0.0);
                let rp = r.max(0.0);
                let sv = vp.sqrt();
                // variance leads the factorization: its driver does not
                // depend on rho
                let z_s = p.rho * z_v + rho_bar * z_perp;
                log_s += (rp - 0.5 * vp) * h + sv * sqrt_h * z_s;
                v += p.kappa * (theta[state] - vp) * h + p.sigma * sv * sqrt_h * z_v;
                let r_next = r + p.alpha * (beta[state] - rp) * h + p.eta * rp.sqrt() * sqrt_h * z_r;
                rate_integral += 0.5 * h * (rp + r_next.max(0.0));
                r = r_next;
            }
            let ret = (log_s - log_s_prev).exp_m1();
            sum_sq += ret * ret;
        }
        PathSample { realized_variance: self.scale / self.swap.maturity * sum_sq, discount: (-rate_integral).exp() }
    }
}

/// Simulates `config.paths` independent paths. Feller violations are
/// tolerated; they are returned alongside the samples.
pub fn simulate_paths(
    params: &ModelParams,
    market: &MarketState,
    swap: &SwapSpec,
    config: &McConfig,
) -> Result<(Vec<PathSample>, Vec<Violation>)> {
    if config.steps_per_interval == 0 || config.paths == 0 {
        return Err(Error::Config("paths and steps_per_interval must be >= 1".into()));
    }
    let warnings = ensure_simulable(params, market, swap)?;
    let sampler = ChainSampler::new(&params.generator)?;
    let stepper = Stepper {
        params,
        market,
        swap,
        sampler: &sampler,
        steps_per_interval: config.steps_per_interval,
        scale: if config.variance_points { VARIANCE_POINTS } else { 1.0 },
    };
    let samples = (0..config.paths)
        .into_par_iter()
        .with_min_len(256)
        .map(|i| stepper.run(&mut path_rng(config.seed, i as u64)))
        .collect();
    Ok((samples, warnings))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    /// `E[D RV] / E[D]`.
    pub strike: f64,
    /// Delta-method standard error of the ratio.
    pub std_error: f64,
    pub paths: usize,
    pub seed: u64,
    pub discount_mean: f64,
    pub discount_std_error: f64,
    /// `E[D RV] / P(0, T)` with the analytic bond price, when supplied.
    pub bond_normalized: Option<f64>,
}

/// Ratio estimator of the fair strike. Sums run in slice order.
pub fn mc_fair_strike(samples: &[PathSample], seed: u64, bond_price: Option<f64>) -> Result<McEstimate> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::Config(format!("need at least 2 paths, got {n}")));
    }
    let nf = n as f64;
    let d_mean = samples.iter().map(|s| s.discount).sum::<f64>() / nf;
    if !(d_mean > 0.0) {
        return Err(Error::DegenerateDiscount);
    }
    let y_mean = samples.iter().map(|s| s.discount * s.realized_variance).sum::<f64>() / nf;
    let ratio = y_mean / d_mean;
    let resid_var = samples
        .iter()
        .map(|s| {
            let e = s.discount * (s.realized_variance - ratio);
            e * e
        })
        .sum::<f64>()
        / (nf - 1.0);
    let d_var = samples.iter().map(|s| (s.discount - d_mean).powi(2)).sum::<f64>() / (nf - 1.0);
    Ok(McEstimate {
        strike: ratio,
        std_error: (resid_var / nf).sqrt() / d_mean,
        paths: n,
        seed,
        discount_mean: d_mean,
        discount_std_error: (d_var / nf).sqrt(),
        bond_normalized: bond_price.map(|p| y_mean / p),
    })
}

/// Simulates and estimates in one call, with the analytic bond price as a
/// cross-check when it can be built.
pub fn run_mc(params: &ModelParams, market: &MarketState, swap: &SwapSpec, config: &McConfig) -> Result<McEstimate> {
    let (samples, _) = simulate_paths(params, market, swap, config)?;
    let bond = BondCurve::build(swap.maturity, params, &OdeConfig::default())
        .and_then(|c| c.bond_price(0.0, market.r0, market.x0))
        .ok();
    mc_fair_strike(&samples, config.seed, bond)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{GeneratorConvention, RegimeVector};

    #[test]
    fn absorbing_chain_never_jumps() {
        let mut rng = path_rng(1, 0);
        let path = simulate_chain(&Generator::zero(1), 0, 5.0, &mut rng).unwrap();
        assert!(path.jump_times.is_empty());
        assert_eq!(path.states, vec![0]);
        assert_eq!(path.state_at(4.9), 0);
    }

    #[test]
    fn holding_time_in_contraction() {
        let sampler = ChainSampler::new(&ModelParams::business_cycle_example().generator).unwrap();
        let mut rng = path_rng(7, 0);
        let draws = 100_000;
        let mut total = 0.0;
        for _ in 0..draws {
            let path = sampler.sample(0, 60.0, &mut rng);
            total += path.jump_times[0];
        }
        let mean = total / draws as f64;
        assert!((mean - 1.0).abs() < 0.01, "mean holding time {mean}");
    }

    #[test]
    fn jump_destinations_follow_rates() {
        let sampler = ChainSampler::new(&ModelParams::business_cycle_example().generator).unwrap();
        let mut rng = path_rng(8, 0);
        let draws = 50_000;
        let to_expansion = (0..draws).filter(|_| sampler.sample(0, 60.0, &mut rng).states[1] == 2).count();
        let frac = to_expansion as f64 / draws as f64;
        // 0.9 of the exit rate goes to state 2; binomial sd ~ 0.0013
        assert!((frac - 0.9).abs() < 0.006, "{frac}");
    }

    #[test]
    fn two_state_occupancy() {
        let (lambda, mu) = (2.0, 0.5);
        let g = Generator::from_row_major(2, &[-lambda, lambda, mu, -mu], GeneratorConvention::RowSumsZero);
        let mut rng = path_rng(3, 0);
        let horizon = 20_000.0;
        let path = simulate_chain(&g, 0, horizon, &mut rng).unwrap();
        let occ = path.occupation(2);
        let frac0 = occ[0] / horizon;
        // state 0 is left at rate lambda and entered at rate mu
        assert!((frac0 - mu / (lambda + mu)).abs() < 0.01, "{frac0}");
        assert!(path.states.windows(2).all(|w| w[0] != w[1]));
        assert!((occ.iter().sum::<f64>() - horizon).abs() < 1e-6);
    }

    fn lognormal_inputs() -> (ModelParams, MarketState) {
        let mut p = ModelParams::business_cycle_example().single_regime(0.05, 0.05);
        p.sigma = 0.0;
        p.eta = 0.0;
        (p, MarketState::new(1.0, 0.05, 0.05, 0))
    }

    fn lognormal_term(dt: f64) -> f64 {
        let mu = (0.05 - 0.025) * dt;
        let s2 = 0.05 * dt;
        (2.0 * mu + 2.0 * s2).exp() - 2.0 * (mu + 0.5 * s2).exp() + 1.0
    }

    #[test]
    fn lognormal_single_interval() {
        let (p, m) = lognormal_inputs();
        let swap = SwapSpec::new(1.0, 1, 1.0);
        let cfg = McConfig { paths: 40_000, steps_per_interval: 1, seed: 11, variance_points: false };
        let (samples, _) = simulate_paths(&p, &m, &swap, &cfg).unwrap();
        // one exact step: RV = (e^y - 1)^2 with y ~ N(r - v/2, v)
        let n = samples.len() as f64;
        let mean = samples.iter().map(|s| s.realized_variance).sum::<f64>() / n;
        let var = samples.iter().map(|s| (s.realized_variance - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let want = lognormal_term(1.0);
        assert!((mean - want).abs() < 4.0 * (var / n).sqrt(), "{mean} vs {want}");
        assert!(samples.iter().all(|s| (s.discount - (-0.05f64).exp()).abs() < 1e-15));
    }

    #[test]
    fn lognormal_sub_stepped() {
        let (p, m) = lognormal_inputs();
        let swap = SwapSpec::new(1.0, 4, 1.0);
        let cfg = McConfig { paths: 40_000, steps_per_interval: 8, seed: 5, variance_points: false };
        let (samples, _) = simulate_paths(&p, &m, &swap, &cfg).unwrap();
        let n = samples.len() as f64;
        let mean = samples.iter().map(|s| s.realized_variance).sum::<f64>() / n;
        let var = samples.iter().map(|s| (s.realized_variance - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let want = 4.0 * lognormal_term(0.25);
        assert!((mean - want).abs() < 4.0 * (var / n).sqrt(), "{mean} vs {want}");
    }

    #[test]
    fn rho_only_moves_the_asset() {
        let p = ModelParams::business_cycle_example();
        let mut q = p.clone();
        q.rho = 0.0;
        let m = MarketState::new(1.0, 0.05, 0.05, 0);
        let swap = SwapSpec::new(1.0, 12, 1.0);
        let sampler = ChainSampler::new(&p.generator).unwrap();
        let run = |params: &ModelParams| {
            let st = Stepper { params, market: &m, swap: &swap, sampler: &sampler, steps_per_interval: 4, scale: 1.0 };
            st.run(&mut path_rng(9, 3))
        };
        let a = run(&p);
        let b = run(&q);
        // the rate path (hence the discount factor) is untouched; the
        // realized variance changes through the asset driver
        assert_eq!(a.discount, b.discount);
        assert_ne!(a.realized_variance, b.realized_variance);
    }

    #[test]
    fn zero_variance_collapses() {
        let mut p = ModelParams::business_cycle_example().single_regime(0.0, 0.05);
        p.eta = 0.0;
        p.theta_star = RegimeVector::new(vec![0.0]);
        let m = MarketState::new(1.0, 0.0, 0.05, 0);
        let swap = SwapSpec::new(1.0, 4, 1.0);
        let cfg = McConfig { paths: 16, steps_per_interval: 64, seed: 1, variance_points: true };
        let (samples, _) = simulate_paths(&p, &m, &swap, &cfg).unwrap();
        let first = samples[0];
        assert!(samples.iter().all(|s| *s == first));
        let deterministic = VARIANCE_POINTS * 4.0 * (0.05f64 * 0.25).exp_m1().powi(2);
        assert!((first.realized_variance - deterministic).abs() / deterministic < 1e-9);
    }

    #[test]
    fn constant_discount_cancels() {
        let mut p = ModelParams::business_cycle_example().single_regime(0.05, 0.05);
        p.eta = 0.0;
        let m = MarketState::new(1.0, 0.05, 0.05, 0);
        let swap = SwapSpec::new(1.0, 12, 1.0);
        let cfg = McConfig { paths: 2_000, steps_per_interval: 8, seed: 4, variance_points: true };
        let (samples, _) = simulate_paths(&p, &m, &swap, &cfg).unwrap();
        let est = mc_fair_strike(&samples, 4, None).unwrap();
        let plain = samples.iter().map(|s| s.realized_variance).sum::<f64>() / samples.len() as f64;
        assert!((est.strike - plain).abs() < 1e-9 * plain);
    }

    #[test]
    fn estimator_edge_cases() {
        let one = [PathSample { realized_variance: 1.0, discount: 1.0 }];
        assert!(mc_fair_strike(&one, 0, None).is_err());
        let zero = [PathSample { realized_variance: 1.0, discount: 0.0 }; 3];
        assert!(matches!(mc_fair_strike(&zero, 0, None), Err(Error::DegenerateDiscount)));
        let flat = [PathSample { realized_variance: 2.0, discount: 0.5 }; 4];
        let e = mc_fair_strike(&flat, 0, Some(0.5)).unwrap();
        assert_eq!(e.strike, 2.0);
        assert_eq!(e.std_error, 0.0);
        assert_eq!(e.bond_normalized, Some(2.0));
    }

    #[test]
    fn feller_violation_is_only_a_warning() {
        let mut p = ModelParams::business_cycle_example();
        p.sigma = 1.0;
        let m = MarketState::new(1.0, 0.05, 0.05, 0);
        let swap = SwapSpec::new(1.0, 4, 1.0);
        let cfg = McConfig { paths: 64, steps_per_interval: 16, seed: 2, variance_points: true };
        let (samples, warnings) = simulate_paths(&p, &m, &swap, &cfg).unwrap();
        assert_eq!(warnings.len(), 3);
        assert!(samples.iter().all(|s| s.realized_variance.is_finite() && s.discount.is_finite()));
    }

    #[test]
    fn reproducible_for_fixed_seed() {
        let p = ModelParams::business_cycle_example();
        let m = MarketState::new(1.0, 0.05, 0.05, 0);
        let swap = SwapSpec::new(1.0, 4, 1.0);
        let cfg = McConfig { paths: 1_000, steps_per_interval: 8, seed: 99, variance_points: true };
        let a = run_mc(&p, &m, &swap, &cfg).unwrap();
        let b = run_mc(&p, &m, &swap, &cfg).unwrap();
        assert_eq!(a, b);
        let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let c = single.install(|| run_mc(&p, &m, &swap, &cfg).unwrap());
        assert_eq!(a, c);
    }
}
