//! Euler simulation of SABR with the absorbing boundary at `F = 0`.
//!
//! Between steps the forward is treated as a Brownian bridge with frozen
//! local volatility; a path that survives the step can still be absorbed with
//! probability `exp(-2 F F' / (alpha^2 F^(2 beta) dt))`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Result, SabrError};
use crate::model::SabrParams;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McConfig {
    pub n_paths: usize,
    pub steps_per_year: usize,
    pub seed: u64,
    pub antithetic: bool,
    /// Apply the in-step hit probability; off reproduces the naive scheme.
    pub hit_adjustment: bool,
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig { n_paths: 1 << 20, steps_per_year: 100, seed: 20_071_009, antithetic: false, hit_adjustment: true }
    }
}

impl McConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_paths < 1000 {
            return Err(SabrError::domain(format!("n_paths must be at least 1000, got {}", self.n_paths)));
        }
        if self.steps_per_year < 1 {
            return Err(SabrError::domain("steps_per_year must be at least 1"));
        }
        if self.antithetic && !self.n_paths.is_multiple_of(2) {
            return Err(SabrError::domain("antithetic sampling needs an even path count"));
        }
        Ok(())
    }

    fn n_steps(&self, expiry: f64) -> usize {
        ((self.steps_per_year as f64 * expiry).ceil() as usize).max(1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub absorbed_fraction: f64,
}

/// One Euler step. `u_unif` decides in-step absorption.
pub fn step(f: f64, alpha: f64, dt: f64, z1: f64, z2: f64, u_unif: f64, params: &SabrParams) -> (f64, f64) {
    step_with(f, alpha, dt, z1, z2, u_unif, params, true)
}

#[allow(clippy::too_many_arguments)]
fn step_with(f: f64, alpha: f64, dt: f64, z1: f64, z2: f64, u_unif: f64, p: &SabrParams, adjust: bool) -> (f64, f64) {
    let sq = dt.sqrt();
    let alpha_next = alpha * (p.nu * sq * z1 - 0.5 * p.nu * p.nu * dt).exp();
    if f <= 0.0 {
        return (0.0, alpha_next);
    }
    let local = alpha * f.powf(p.beta);
    let f_next = f + local * sq * (p.rho * z1 + (1.0 - p.rho * p.rho).sqrt() * z2);
    if f_next <= 0.0 {
        return (0.0, alpha_next);
    }
    if adjust && u_unif <= hit_probability(f, f_next, local, dt) {
        return (0.0, alpha_next);
    }
    (f_next, alpha_next)
}

/// Probability that a bridge from `f` to `f_next` with volatility `local`
/// touches zero within `dt`.
pub fn hit_probability(f: f64, f_next: f64, local: f64, dt: f64) -> f64 {
    (-2.0 * f * f_next / (local * local * dt)).exp()
}

/// Per-path value of `F_T` from a dedicated stream, with its antithetic twin.
fn simulate_pair(p: &SabrParams, cfg: &McConfig, n_steps: usize, stream: u64) -> [f64; 2] {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(stream);
    let dt = p.expiry / n_steps as f64;
    let mut state = [(p.forward, p.alpha0); 2];
    let twins = if cfg.antithetic { 2 } else { 1 };
    for _ in 0..n_steps {
        let z1: f64 = rng.sample(StandardNormal);
        let z2: f64 = rng.sample(StandardNormal);
        let u: f64 = rng.random();
        for (t, s) in state.iter_mut().enumerate().take(twins) {
            let sign = if t == 0 { 1.0 } else { -1.0 };
            *s = step_with(s.0, s.1, dt, sign * z1, sign * z2, u, p, cfg.hit_adjustment);
        }
    }
    [state[0].0, state[1].0]
}

const BLOCK: usize = 4096;

/// Terminal forwards for every path, in path order.
fn terminal_forwards(params: &SabrParams, cfg: &McConfig) -> Result<Vec<f64>> {
    crate::model::validate(*params)?;
    cfg.validate()?;
    let n_steps = cfg.n_steps(params.expiry);
    let n_streams = if cfg.antithetic { cfg.n_paths / 2 } else { cfg.n_paths };
    let blocks: Vec<Vec<f64>> = (0..n_streams.div_ceil(BLOCK))
        .into_par_iter()
        .map(|b| {
            let lo = b * BLOCK;
            let hi = ((b + 1) * BLOCK).min(n_streams);
            let mut out = Vec::with_capacity((hi - lo) * 2);
            for s in lo..hi {
                let pair = simulate_pair(params, cfg, n_steps, s as u64);
                out.push(pair[0]);
                if cfg.antithetic {
                    out.push(pair[1]);
                }
            }
            out
        })
        .collect();
    Ok(blocks.concat())
}

/// Statistics of a payoff over already simulated terminal forwards.
/// Antithetic twins are averaged before the variance is taken.
fn estimate(terminals: &[f64], antithetic: bool, payoff: impl Fn(f64) -> f64) -> McEstimate {
    let group = if antithetic { 2 } else { 1 };
    let samples: Vec<f64> =
        terminals.chunks(group).map(|c| c.iter().map(|&f| payoff(f)).sum::<f64>() / group as f64).collect();
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    let absorbed = terminals.iter().filter(|&&f| f == 0.0).count() as f64 / terminals.len() as f64;
    McEstimate { mean, std_error: (var / n).sqrt(), absorbed_fraction: absorbed }
}

/// Undiscounted call price `E[(F_T - K)+]`.
pub fn price_mc(params: &SabrParams, k: f64, cfg: &McConfig) -> Result<McEstimate> {
    Ok(price_mc_smile(params, &[k], cfg)?.remove(0))
}

/// Call prices for several strikes from one set of paths.
pub fn price_mc_smile(params: &SabrParams, strikes: &[f64], cfg: &McConfig) -> Result<Vec<McEstimate>> {
    let terminals = terminal_forwards(params, cfg)?;
    Ok(strikes.iter().map(|&k| estimate(&terminals, cfg.antithetic, |f| (f - k).max(0.0))).collect())
}

/// Mean of an arbitrary function of `F_T`.
pub fn expectation_mc(params: &SabrParams, cfg: &McConfig, payoff: impl Fn(f64) -> f64) -> Result<McEstimate> {
    let terminals = terminal_forwards(params, cfg)?;
    Ok(estimate(&terminals, cfg.antithetic, payoff))
}

/// Fraction of paths absorbed by expiry.
pub fn absorbed_fraction(params: &SabrParams, cfg: &McConfig) -> Result<f64> {
    Ok(expectation_mc(params, cfg, |f| f)?.absorbed_fraction)
}
