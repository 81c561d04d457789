//! Swaption smiles from one spectral solve via the strike symmetry.
//!
//! `C(F, alpha, K) = (K/K0) C((K0/K) F, (K0/K)^(1-beta) alpha, K0)` and the
//! scaled state has the same `u` with `v` shifted by `c ln(K0/K)`, so a single
//! solve at strike `K0` prices every strike by recombining at shifted `v`.

use crate::error::{Result, SabrError};
use crate::model::{SabrParams, VariableKind, VariableSet};
use crate::pde_engine::{build_grid, default_v_width, solve_power, Grid, GridSpec};
use crate::spectral::{recombine, solve_spectral, PayoffSpec, SpectralSolution};

/// Payoff actually put through the solver.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PayoffRoute {
    /// Solve the call directly.
    Call,
    /// Solve the put and add the forward via put-call parity. The put is
    /// bounded, which keeps periodic wrap-around error small.
    PutParity,
}

/// Knobs beyond the grid itself.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PricingOptions {
    pub route: PayoffRoute,
    pub clamp_top: bool,
    pub taper: f64,
}

impl Default for PricingOptions {
    fn default() -> Self {
        PricingOptions { route: PayoffRoute::PutParity, clamp_top: false, taper: 0.1 }
    }
}

impl PricingOptions {
    fn payoff(&self, strike: f64) -> PayoffSpec {
        let base = match self.route {
            PayoffRoute::Call => PayoffSpec::call(strike),
            PayoffRoute::PutParity => PayoffSpec::put(strike),
        };
        base.with_clamp_top(self.clamp_top).with_taper(self.taper)
    }

    /// Call value from the solved payoff value, both at strike `k` and forward `f`.
    fn to_call(self, solved: f64, f: f64, k: f64) -> f64 {
        match self.route {
            PayoffRoute::Call => solved,
            PayoffRoute::PutParity => solved + f - k,
        }
    }
}

/// Which pipeline produced a smile.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SmileMethod {
    Symmetry(VariableKind),
    PerStrike(VariableKind),
}

impl std::fmt::Display for SmileMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let vs = |k: &VariableKind| match k {
            VariableKind::Zx => "zx",
            VariableKind::Wy => "wy",
        };
        match self {
            SmileMethod::Symmetry(k) => write!(f, "pde-sym-{}", vs(k)),
            SmileMethod::PerStrike(k) => write!(f, "pde-per-strike-{}", vs(k)),
        }
    }
}

/// Call prices and time values in annuity units.
#[derive(Debug, Clone, PartialEq)]
pub struct SmileResult {
    pub strikes: Vec<f64>,
    pub prices: Vec<f64>,
    pub time_values: Vec<f64>,
    pub method: SmileMethod,
    pub grid: GridSpec,
}

/// Option price minus intrinsic value.
pub fn time_value(price: f64, f0: f64, k: f64) -> f64 {
    price - (f0 - k).max(0.0)
}

fn check_strikes(strikes: &[f64]) -> Result<()> {
    if let Some(k) = strikes.iter().find(|k| !(**k > 0.0) || !k.is_finite()) {
        return Err(SabrError::domain(format!("strikes must be positive, got {k}")));
    }
    Ok(())
}

/// Largest admissible `|v - v_center|` for symmetry pricing.
pub const MAX_SHIFT_FRACTION: f64 = 0.45;

/// Grid for a symmetry solve covering every requested shift.
pub fn symmetry_grid(params: &SabrParams, vs: VariableSet, spec: &GridSpec, k0: f64, strikes: &[f64]) -> Result<Grid> {
    let shifts: Vec<f64> = strikes.iter().map(|k| vs.c * (k0 / k).ln()).collect();
    let (lo, hi) = shifts.iter().fold((0.0f64, 0.0f64), |(a, b), &s| (a.min(s), b.max(s)));
    let mut spec = *spec;
    if spec.v_width.is_none() {
        let mid = 0.5 * (lo + hi);
        let v0 = crate::model::to_uv(params.forward, params.alpha0, vs, params.beta)?.1;
        spec.v_center.get_or_insert(v0 + mid);
        spec.v_width = Some(default_v_width(params, vs, 0.5 * (hi - lo)));
    }
    build_grid(params, vs, &spec)
}

/// Price a smile from one solve at strike `k0`.
pub fn price_smile_symmetry(
    params: &SabrParams,
    vs: VariableSet,
    spec: &GridSpec,
    k0: f64,
    strikes: &[f64],
) -> Result<SmileResult> {
    price_smile_symmetry_with(params, vs, spec, k0, strikes, &PricingOptions::default())
}

pub fn price_smile_symmetry_with(
    params: &SabrParams,
    vs: VariableSet,
    spec: &GridSpec,
    k0: f64,
    strikes: &[f64],
    opts: &PricingOptions,
) -> Result<SmileResult> {
    if !(k0 > 0.0) {
        return Err(SabrError::domain(format!("reference strike must be positive, got {k0}")));
    }
    check_strikes(strikes)?;
    let grid = symmetry_grid(params, vs, spec, k0, strikes)?;
    let sol = solve_spectral(&grid, &opts.payoff(k0))?;
    let prices = smile_from_solution(&sol, k0, strikes, opts)?;
    Ok(finish(params, strikes, prices, SmileMethod::Symmetry(vs.kind), grid.spec))
}

/// Recombine a solved reference-strike payoff at every strike.
pub fn smile_from_solution(
    sol: &SpectralSolution<'_>,
    k0: f64,
    strikes: &[f64],
    opts: &PricingOptions,
) -> Result<Vec<f64>> {
    let grid = sol.grid;
    let c = grid.vs.c;
    let limit = MAX_SHIFT_FRACTION * grid.v_width;
    let f0 = grid.params.forward;
    strikes
        .iter()
        .map(|&k| {
            let v = grid.v0 + c * (k0 / k).ln();
            let off = v - grid.v_center;
            if off.abs() > limit {
                let ratio = |o: f64| (-(grid.v_center + o - grid.v0) / c).exp();
                return Err(SabrError::StrikeOutOfRange {
                    strike: k,
                    min_ratio: ratio(limit),
                    max_ratio: ratio(-limit),
                });
            }
            let scaled_forward = f0 * k0 / k;
            let at_k0 = opts.to_call(recombine(sol, grid.u0, v)?, scaled_forward, k0);
            Ok(k / k0 * at_k0)
        })
        .collect()
}

fn finish(params: &SabrParams, strikes: &[f64], prices: Vec<f64>, method: SmileMethod, grid: GridSpec) -> SmileResult {
    let time_values = strikes.iter().zip(&prices).map(|(&k, &p)| time_value(p, params.forward, k)).collect();
    SmileResult { strikes: strikes.to_vec(), prices, time_values, method, grid }
}

/// One full solve per strike; the reference against which symmetry is checked.
pub fn price_smile_per_strike(
    params: &SabrParams,
    vs: VariableSet,
    spec: &GridSpec,
    strikes: &[f64],
) -> Result<SmileResult> {
    price_smile_per_strike_with(params, vs, spec, strikes, &PricingOptions::default())
}

pub fn price_smile_per_strike_with(
    params: &SabrParams,
    vs: VariableSet,
    spec: &GridSpec,
    strikes: &[f64],
    opts: &PricingOptions,
) -> Result<SmileResult> {
    check_strikes(strikes)?;
    let mut prices = Vec::with_capacity(strikes.len());
    let mut used = *spec;
    for &k in strikes {
        let grid = symmetry_grid(params, vs, spec, k, &[k])?;
        used = grid.spec;
        let sol = solve_spectral(&grid, &opts.payoff(k))?;
        prices.push(opts.to_call(recombine(&sol, grid.u0, grid.v0)?, params.forward, k));
    }
    Ok(finish(params, strikes, prices, SmileMethod::PerStrike(vs.kind), used))
}

/// Price of `f(U_T) exp(k V_T)` through the real-power PDE.
pub fn price_special(
    params: &SabrParams,
    vs: VariableSet,
    spec: &GridSpec,
    f: impl Fn(f64) -> f64,
    k: f64,
) -> Result<f64> {
    let grid = build_grid(params, vs, spec)?;
    let terminal: Vec<f64> = grid.u_nodes.iter().map(|&u| f(u)).collect();
    let sol = solve_power(&grid, k, &terminal)?;
    Ok((k * grid.v0).exp() * sol.values[grid.u0_index].re)
}

/// Refuse WY pricing where it is known to be unreliable.
pub fn check_wy_beta(vs: VariableSet, beta: f64) -> Result<()> {
    if vs.kind == VariableKind::Wy && beta > 0.6 {
        return Err(SabrError::UnsupportedVariableSet(format!(
            "WY variables are unreliable for beta > 0.6 (got {beta}); use ZX"
        )));
    }
    Ok(())
}
