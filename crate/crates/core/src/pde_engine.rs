//! One-dimensional backward solver for the Fourier modes.
//!
//! Each mode solves `p_t + a p_uu + b p_u + c p = 0` backwards from expiry,
//! with `a = s_uu/2`, `b = mu_u + j s_uv`, `c = s_vv j^2/2 + mu_v j`.
//! For a Fourier mode `j = i k`; for a real power payoff `j = k`.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Result, SabrError};
use crate::model::{to_uv, SabrParams, VariableKind, VariableSet};
use crate::pde_coeffs::{coeffs, CoeffBundle};
use crate::tridiag::Factored;

/// Discretization request. `None` fields take defaults derived from the
/// parameters at grid construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub n_t: usize,
    pub n_u: usize,
    pub n_v: usize,
    pub u_max: Option<f64>,
    pub v_center: Option<f64>,
    pub v_width: Option<f64>,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { n_t: 240, n_u: 50, n_v: 256, u_max: None, v_center: None, v_width: None }
    }
}

impl GridSpec {
    pub fn new(n_t: usize, n_u: usize, n_v: usize) -> Self {
        GridSpec { n_t, n_u, n_v, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_t < 1 {
            return Err(SabrError::domain("n_t must be at least 1"));
        }
        if self.n_u < 3 {
            return Err(SabrError::domain("n_u must be at least 3"));
        }
        if self.n_v < 2 || !self.n_v.is_power_of_two() {
            return Err(SabrError::domain(format!("n_v must be a power of two, got {}", self.n_v)));
        }
        if let Some(m) = self.u_max {
            if !(m > 0.0 && m.is_finite()) {
                return Err(SabrError::domain(format!("u_max must be positive, got {m}")));
            }
        }
        if let Some(w) = self.v_width {
            if !(w > 0.0 && w.is_finite()) {
                return Err(SabrError::domain(format!("v_width must be positive, got {w}")));
            }
        }
        if let Some(c) = self.v_center {
            if !c.is_finite() {
                return Err(SabrError::domain("v_center must be finite"));
            }
        }
        Ok(())
    }
}

/// Spread of `v` at expiry used to size the periodic window.
pub fn v_spread(params: &SabrParams, vs: VariableSet) -> f64 {
    let st = params.expiry.sqrt();
    match vs.kind {
        VariableKind::Zx => {
            let lognormal = params.alpha0 * params.forward.powf(params.beta - 1.0);
            lognormal * st * (1.0 + params.nu * st)
        }
        VariableKind::Wy => params.nu * st,
    }
}

/// Fraction of the V window at each end reserved for the payoff taper.
pub const EDGE_FRACTION: f64 = 0.1;

/// Default window width: ten spreads, widened so that symmetry shifts up to
/// `max_shift` keep six spreads clear of the tapered edges.
pub fn default_v_width(params: &SabrParams, vs: VariableSet, max_shift: f64) -> f64 {
    let s = v_spread(params, vs);
    let core = 10.0 * s;
    let pad = 6.0 * s + 0.25 * vs.c;
    let shifted = 2.0 * (max_shift + pad) / (1.0 - 2.0 * EDGE_FRACTION);
    core.max(shifted)
}

/// Default far boundary for `u`: eight times `u0`, or more when vol of vol
/// spreads `u` (which scales like `1/alpha`) over a wider range.
pub fn default_u_max(params: &SabrParams, vs: VariableSet, u0: f64) -> f64 {
    // ZX: u ~ 1/alpha; WY: u ~ alpha^(-1/(1-beta)), and the WY put payoff
    // stays sensitive to large u, so it needs a longer stretch
    let reach = match vs.kind {
        VariableKind::Zx => 2.0,
        VariableKind::Wy => 4.0 / (1.0 - params.beta),
    };
    let spread = (reach * params.nu * params.expiry.sqrt()).exp();
    u0 * spread.max(8.0)
}

/// Immutable discretization shared by every mode.
#[derive(Debug, Clone)]
pub struct Grid {
    pub params: SabrParams,
    pub vs: VariableSet,
    pub spec: GridSpec,
    pub n_t: usize,
    pub u_nodes: Vec<f64>,
    /// Index of `u(F0, alpha0)` in `u_nodes`.
    pub u0_index: usize,
    pub u0: f64,
    pub v0: f64,
    pub v_center: f64,
    pub v_width: f64,
    pub dv: f64,
    /// Mode indices `m` in `[-n_v/2, n_v/2)`, ascending.
    pub modes: Vec<i32>,
    /// Wavenumbers `2 pi m / v_width`, aligned with `modes`.
    pub dual_k: Vec<f64>,
    /// Coefficients per node; entry 0 is unused (Dirichlet node).
    pub coeffs: Vec<CoeffBundle>,
}

impl Grid {
    pub fn n_u(&self) -> usize {
        self.u_nodes.len()
    }

    pub fn n_v(&self) -> usize {
        self.modes.len()
    }

    pub fn u_max(&self) -> f64 {
        *self.u_nodes.last().unwrap()
    }

    /// Offset of V node `j` from the window center.
    pub fn v_offset(&self, j: usize) -> f64 {
        (j as f64 - (self.n_v() / 2) as f64) * self.dv
    }

    pub fn v_node(&self, j: usize) -> f64 {
        self.v_center + self.v_offset(j)
    }

    pub fn wavenumber(&self, m: i32) -> f64 {
        2.0 * PI * m as f64 / self.v_width
    }

    pub fn time_step(&self) -> f64 {
        self.params.expiry / self.n_t as f64
    }
}

/// Nodes `u_j = c sinh(b j/(n-1))`: uniform near the absorbing boundary,
/// logarithmic far out. `c` is tuned so that `u0` lands exactly on a node.
fn stretched_nodes(u0: f64, u_max: f64, n: usize) -> (Vec<f64>, usize) {
    // target sinh scale relative to u0; smaller packs more nodes below u0
    let kappa = 0.3;
    let frac = |c: f64| (u0 / c).asinh() / (u_max / c).asinh();
    let target_j0 = ((n - 1) as f64 * frac(kappa * u0)).round() as usize;
    let j0 = target_j0.clamp(1, n - 2);
    let want = j0 as f64 / (n - 1) as f64;
    // frac decreases from 1 to u0/u_max as c grows; bisect on ln c
    let (mut lo, mut hi) = ((u0 * 1e-8).ln(), (u_max * 1e8).ln());
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if frac(mid.exp()) > want {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let c = (0.5 * (lo + hi)).exp();
    let b = (u_max / c).asinh();
    let mut u: Vec<f64> = (0..n).map(|j| c * (b * j as f64 / (n - 1) as f64).sinh()).collect();
    u[0] = 0.0;
    u[j0] = u0;
    u[n - 1] = u_max;
    (u, j0)
}

/// Build the grid and cache the coefficient bundle at every interior node.
pub fn build_grid(params: &SabrParams, vs: VariableSet, spec: &GridSpec) -> Result<Grid> {
    let params = crate::model::validate(*params)?;
    spec.validate()?;
    let (u0, v0) = to_uv(params.forward, params.alpha0, vs, params.beta)?;
    let u_max = spec.u_max.unwrap_or_else(|| default_u_max(&params, vs, u0));
    if !(u_max > u0) {
        return Err(SabrError::domain(format!("u_max {u_max} must exceed u0 = {u0}")));
    }
    let (u_nodes, u0_index) = stretched_nodes(u0, u_max, spec.n_u);
    if u_nodes.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(SabrError::numerical("u grid is not strictly increasing"));
    }
    let v_width = spec.v_width.unwrap_or_else(|| default_v_width(&params, vs, 0.0));
    let v_center = spec.v_center.unwrap_or(v0);
    let n_v = spec.n_v;
    let half = (n_v / 2) as i32;
    let modes: Vec<i32> = (-half..half).collect();
    let dual_k = modes.iter().map(|&m| 2.0 * PI * m as f64 / v_width).collect();
    let mut cache = vec![CoeffBundle::default(); u_nodes.len()];
    for (i, &u) in u_nodes.iter().enumerate().skip(1) {
        cache[i] = coeffs(vs, u, params.beta, params.nu, params.rho)?;
    }
    Ok(Grid {
        params,
        vs,
        spec: *spec,
        n_t: spec.n_t,
        u_nodes,
        u0_index,
        u0,
        v0,
        v_center,
        v_width,
        dv: v_width / n_v as f64,
        modes,
        dual_k,
        coeffs: cache,
    })
}

/// Solution of one mode at `t = 0` on the `u` nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeSolution {
    pub m: i32,
    pub k: f64,
    pub values: Vec<Complex64>,
}

/// Spatial operator rows `(lower, diag, upper)` for parameter `j`.
fn operator(grid: &Grid, j: Complex64) -> (Vec<Complex64>, Vec<Complex64>, Vec<Complex64>) {
    let n = grid.n_u();
    let u = &grid.u_nodes;
    let zero = Complex64::new(0.0, 0.0);
    let mut lo = vec![zero; n];
    let mut di = vec![zero; n];
    let mut up = vec![zero; n];
    for i in 1..n {
        let cb = &grid.coeffs[i];
        let b = cb.mu_u + j * cb.sig_uv2;
        let c = j * j * (0.5 * cb.sig_vv2) + j * cb.mu_v;
        if i == n - 1 {
            // linear far field: p_uu = 0 and a one-sided slope
            let h = u[i] - u[i - 1];
            lo[i] = -b / h;
            di[i] = b / h + c;
        } else {
            let a = 0.5 * cb.sig_uu2;
            let hm = u[i] - u[i - 1];
            let hp = u[i + 1] - u[i];
            let s = hm + hp;
            lo[i] = a * (2.0 / (hm * s)) - b * (hp / (hm * s));
            up[i] = a * (2.0 / (hp * s)) + b * (hm / (hp * s));
            di[i] = c - lo[i] - up[i];
        }
    }
    (lo, di, up)
}

fn check_terminal(grid: &Grid, terminal: &[Complex64]) -> Result<()> {
    if terminal.len() != grid.n_u() {
        return Err(SabrError::domain(format!(
            "terminal data has {} entries, grid has {} u nodes",
            terminal.len(),
            grid.n_u()
        )));
    }
    if terminal.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(SabrError::domain("terminal data must be finite"));
    }
    Ok(())
}

/// Backward time stepping: two implicit half steps, then Crank-Nicolson.
fn march(grid: &Grid, j: Complex64, terminal: &[Complex64], label: &str) -> Result<Vec<Complex64>> {
    let n = grid.n_u();
    let dt = grid.time_step();
    let (lo, di, up) = operator(grid, j);
    let one = Complex64::new(1.0, 0.0);

    // I - theta * dt * L, with row 0 kept as the identity
    let lhs = |scale: f64| {
        let mut l = vec![Complex64::new(0.0, 0.0); n];
        let mut d = vec![one; n];
        let mut u = vec![Complex64::new(0.0, 0.0); n];
        for i in 1..n {
            l[i] = -lo[i] * scale;
            d[i] = one - di[i] * scale;
            u[i] = -up[i] * scale;
        }
        Factored::new(&l, &d, &u)
    };
    let fail = |step: usize, pivot: usize| {
        SabrError::numerical(format!(
            "{label}: tridiagonal solve failed at time step {step} (pivot {pivot})"
        ))
    };
    // an implicit half step and a Crank-Nicolson step share the same matrix
    let fac = lhs(0.5 * dt).map_err(|p| fail(1, p))?;

    let boundary = terminal[0];
    let mut p = terminal.to_vec();
    let mut rhs = vec![Complex64::new(0.0, 0.0); n];
    for _ in 0..2 {
        p[0] = boundary;
        fac.solve(&mut p);
    }
    check_finite(&p, label, 1)?;
    let half = 0.5 * dt;
    for step in 2..=grid.n_t {
        rhs[0] = boundary;
        for i in 1..n {
            let mut lp = di[i] * p[i] + lo[i] * p[i - 1];
            if i + 1 < n {
                lp += up[i] * p[i + 1];
            }
            rhs[i] = p[i] + lp * half;
        }
        fac.solve(&mut rhs);
        std::mem::swap(&mut p, &mut rhs);
        check_finite(&p, label, step)?;
    }
    Ok(p)
}

fn check_finite(p: &[Complex64], label: &str, step: usize) -> Result<()> {
    if p.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(SabrError::numerical(format!("{label}: non-finite values at time step {step}")));
    }
    Ok(())
}

/// Solve the imaginary-power PDE for mode `m` (wavenumber `2 pi m / v_width`).
///
/// `terminal[0]` is held fixed at `u = 0` for all `t`.
pub fn solve_mode(grid: &Grid, m: i32, terminal: &[Complex64]) -> Result<ModeSolution> {
    check_terminal(grid, terminal)?;
    let k = grid.wavenumber(m);
    let values = march(grid, Complex64::new(0.0, k), terminal, &format!("mode {m} (k = {k:.6})"))?;
    Ok(ModeSolution { m, k, values })
}

/// Solve the real-power PDE for a payoff `f(u_T) exp(k v_T)`.
///
/// The price is `exp(k v0) * values[u0_index]`.
pub fn solve_power(grid: &Grid, k: f64, terminal: &[f64]) -> Result<ModeSolution> {
    if !k.is_finite() {
        return Err(SabrError::domain("power k must be finite"));
    }
    let t: Vec<Complex64> = terminal.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    check_terminal(grid, &t)?;
    let values = march(grid, Complex64::new(k, 0.0), &t, &format!("power k = {k}"))?;
    Ok(ModeSolution { m: 0, k, values })
}

/// Solve many modes, in parallel, returning them in ascending mode order.
pub fn solve_batch(grid: &Grid, terminals: &BTreeMap<i32, Vec<Complex64>>) -> Result<Vec<ModeSolution>> {
    let half = (grid.n_v() / 2) as i32;
    if let Some(&m) = terminals.keys().find(|&&m| m < -half || m >= half) {
        return Err(SabrError::domain(format!("mode {m} is not on the dual grid")));
    }
    let jobs: Vec<(&i32, &Vec<Complex64>)> = terminals.iter().collect();
    let results: Vec<Result<ModeSolution>> =
        jobs.par_iter().map(|(m, t)| solve_mode(grid, **m, t)).collect();
    results.into_iter().collect()
}

/// Sequential reference for [`solve_batch`].
pub fn solve_sequential(grid: &Grid, terminals: &BTreeMap<i32, Vec<Complex64>>) -> Result<Vec<ModeSolution>> {
    terminals.iter().map(|(m, t)| solve_mode(grid, *m, t)).collect()
}
