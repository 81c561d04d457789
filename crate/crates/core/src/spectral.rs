//! Fourier decomposition along the shifting coordinate and recombination.
//!
//! Convention: `a_k(u) = (1/N) sum_j f(u, v_j) exp(-i k o_j)` with offsets
//! `o_j = v_j - v_center`, and `P(u, v) = sum_k exp(i k (v - v_center)) p_k(u)`.

use std::collections::BTreeMap;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::error::{Result, SabrError};
use crate::model::from_uv;
use crate::pde_engine::{solve_batch, Grid, ModeSolution};

type Evaluator = dyn Fn(f64, f64) -> f64 + Send + Sync;

/// A European payoff as a function of `(F_T, alpha_T)`.
#[derive(Clone)]
pub struct PayoffSpec {
    evaluator: Arc<Evaluator>,
    /// Payoff at `F_T = 0`; must not depend on alpha.
    pub value_at_absorption: f64,
    pub description: String,
    /// Replace the top two V nodes of every row by the value at the third from top.
    pub clamp_top: bool,
    /// Fraction of the window at each end over which the payoff is blended
    /// smoothly into `value_at_absorption`, making it periodic. Zero disables.
    pub taper: f64,
}

impl std::fmt::Debug for PayoffSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PayoffSpec")
            .field("description", &self.description)
            .field("value_at_absorption", &self.value_at_absorption)
            .field("clamp_top", &self.clamp_top)
            .field("taper", &self.taper)
            .finish()
    }
}

impl PayoffSpec {
    pub fn new(
        description: impl Into<String>,
        value_at_absorption: f64,
        evaluator: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        PayoffSpec {
            evaluator: Arc::new(evaluator),
            value_at_absorption,
            description: description.into(),
            clamp_top: false,
            taper: 0.0,
        }
    }

    pub fn call(strike: f64) -> Self {
        PayoffSpec::new(format!("call K={strike}"), 0.0, move |f, _| (f - strike).max(0.0))
    }

    pub fn put(strike: f64) -> Self {
        PayoffSpec::new(format!("put K={strike}"), strike, move |f, _| (strike - f).max(0.0))
    }

    pub fn with_clamp_top(mut self, on: bool) -> Self {
        self.clamp_top = on;
        self
    }

    pub fn with_taper(mut self, fraction: f64) -> Self {
        self.taper = fraction;
        self
    }

    pub fn eval(&self, f: f64, alpha: f64) -> f64 {
        (self.evaluator)(f, alpha)
    }
}

/// Smooth step from 0 at `s <= 0` to 1 at `s >= 1`, flat to all orders at both ends.
fn smooth_step(s: f64) -> f64 {
    if s <= 0.0 {
        return 0.0;
    }
    if s >= 1.0 {
        return 1.0;
    }
    let a = (-1.0 / s).exp();
    let b = (-1.0 / (1.0 - s)).exp();
    a / (a + b)
}

/// Weight of the original payoff at V node `j`.
fn taper_weight(j: usize, n: usize, fraction: f64) -> f64 {
    if fraction <= 0.0 {
        return 1.0;
    }
    let x = (j as f64 + 0.5) / n as f64;
    let edge = x.min(1.0 - x);
    smooth_step(edge / fraction)
}

/// Sample the (deformed) payoff on the full `(u, v)` grid, one row per u node.
pub fn sample_payoff(grid: &Grid, payoff: &PayoffSpec) -> Result<Vec<Vec<f64>>> {
    check_payoff(payoff)?;
    let n_v = grid.n_v();
    let beta = grid.params.beta;
    let weights: Vec<f64> = (0..n_v).map(|j| taper_weight(j, n_v, payoff.taper)).collect();
    let rows: Vec<Result<Vec<f64>>> = grid
        .u_nodes
        .par_iter()
        .enumerate()
        .map(|(i, &u)| {
            if i == 0 {
                return Ok(vec![payoff.value_at_absorption; n_v]);
            }
            let mut row = Vec::with_capacity(n_v);
            for (j, &w) in weights.iter().enumerate() {
                let (f, alpha) = from_uv(u, grid.v_node(j), grid.vs, beta)?;
                let alpha = alpha.unwrap_or(f64::INFINITY);
                let x = payoff.eval(f, alpha);
                if !x.is_finite() {
                    return Err(SabrError::domain(format!(
                        "payoff '{}' is not finite at F={f}, alpha={alpha}",
                        payoff.description
                    )));
                }
                row.push(w * x + (1.0 - w) * payoff.value_at_absorption);
            }
            if payoff.clamp_top && n_v >= 3 {
                let keep = row[n_v - 3];
                row[n_v - 2] = keep;
                row[n_v - 1] = keep;
            }
            Ok(row)
        })
        .collect();
    rows.into_iter().collect()
}

fn check_payoff(payoff: &PayoffSpec) -> Result<()> {
    if !payoff.value_at_absorption.is_finite() {
        return Err(SabrError::domain("value_at_absorption must be finite"));
    }
    if !(0.0..0.5).contains(&payoff.taper) {
        return Err(SabrError::domain(format!("taper fraction must lie in [0, 0.5), got {}", payoff.taper)));
    }
    Ok(())
}

fn forward_fft(n: usize) -> Arc<dyn Fft<f64>> {
    FftPlanner::new().plan_fft_forward(n)
}

/// Forward transform of one real row in the centered convention.
fn row_coefficients(fft: &Arc<dyn Fft<f64>>, row: &[f64]) -> Vec<Complex64> {
    let n = row.len();
    let mut buf: Vec<Complex64> = row.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    fft.process(&mut buf);
    let scale = 1.0 / n as f64;
    // exp(-i k_m o_j) = exp(-2 pi i m j / N) * (-1)^m
    buf.iter_mut().enumerate().for_each(|(m, z)| {
        let sign = if m % 2 == 0 { scale } else { -scale };
        *z *= sign;
    });
    buf
}

fn slot(m: i32, n: usize) -> usize {
    m.rem_euclid(n as i32) as usize
}

/// Decompose sampled rows into mode arrays over `u`.
pub fn decompose_samples(grid: &Grid, rows: &[Vec<f64>], value_at_absorption: f64) -> BTreeMap<i32, Vec<Complex64>> {
    let n_v = grid.n_v();
    let fft = forward_fft(n_v);
    let coefs: Vec<Vec<Complex64>> = rows.par_iter().map(|r| row_coefficients(&fft, r)).collect();
    let mut out = BTreeMap::new();
    for &m in &grid.modes {
        let s = slot(m, n_v);
        let mut arr: Vec<Complex64> = coefs.iter().map(|c| c[s]).collect();
        // the absorbed row carries only the constant mode
        arr[0] = if m == 0 { Complex64::new(value_at_absorption, 0.0) } else { Complex64::new(0.0, 0.0) };
        out.insert(m, arr);
    }
    out
}

/// Fourier coefficients `a_k(u)` of a payoff, including the `u = 0` correction.
pub fn decompose(grid: &Grid, payoff: &PayoffSpec) -> Result<BTreeMap<i32, Vec<Complex64>>> {
    let rows = sample_payoff(grid, payoff)?;
    Ok(decompose_samples(grid, &rows, payoff.value_at_absorption))
}

/// All modes of one payoff at `t = 0`, ready for recombination.
#[derive(Debug, Clone)]
pub struct SpectralSolution<'g> {
    pub grid: &'g Grid,
    /// One entry per dual wavenumber, ascending in mode index.
    pub modes: Vec<ModeSolution>,
    pub label: String,
}

/// Real part of a recombination and the discarded imaginary part.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Recombined {
    pub price: f64,
    pub imag_residual: f64,
}

impl<'g> SpectralSolution<'g> {
    /// Wrap raw coefficients (no time evolution), e.g. the payoff itself.
    pub fn from_coefficients(grid: &'g Grid, coefs: BTreeMap<i32, Vec<Complex64>>, label: impl Into<String>) -> Self {
        let modes = coefs
            .into_iter()
            .map(|(m, values)| ModeSolution { m, k: grid.wavenumber(m), values })
            .collect();
        SpectralSolution { grid, modes, label: label.into() }
    }

    /// Complex sum `sum_k w_k exp(i k o) p_k(u)` with per-mode weights.
    fn weighted_sum(&self, u: f64, v: f64, weights: Option<&[Complex64]>) -> Result<Complex64> {
        let grid = self.grid;
        let (lo, t) = locate(grid, u)?;
        let o = v - grid.v_center;
        if !o.is_finite() {
            return Err(SabrError::domain(format!("v must be finite, got {v}")));
        }
        let mut acc = Complex64::new(0.0, 0.0);
        for (idx, mode) in self.modes.iter().enumerate() {
            let p = if t == 0.0 {
                mode.values[lo]
            } else {
                mode.values[lo] * (1.0 - t) + mode.values[lo + 1] * t
            };
            let mut term = Complex64::cis(mode.k * o) * p;
            if let Some(w) = weights {
                term *= w[idx];
            }
            acc += term;
        }
        Ok(acc)
    }

    pub fn evaluate(&self, u: f64, v: f64) -> Result<Recombined> {
        let z = self.weighted_sum(u, v, None)?;
        Ok(Recombined { price: z.re, imag_residual: z.im.abs() })
    }
}

/// Interval index and linear weight for `u`.
fn locate(grid: &Grid, u: f64) -> Result<(usize, f64)> {
    let nodes = &grid.u_nodes;
    let last = nodes.len() - 1;
    if !(u >= 0.0 && u <= nodes[last]) {
        return Err(SabrError::domain(format!(
            "u = {u} lies outside the grid [0, {}]; extrapolation is not supported",
            nodes[last]
        )));
    }
    if u == nodes[grid.u0_index] {
        return Ok((grid.u0_index, 0.0));
    }
    let hi = nodes.partition_point(|&x| x <= u).min(last);
    if hi == 0 {
        return Ok((0, 0.0));
    }
    let lo = hi - 1;
    if nodes[lo] == u || lo == last {
        return Ok((lo, 0.0));
    }
    Ok((lo, (u - nodes[lo]) / (nodes[hi] - nodes[lo])))
}

/// Decompose, solve every mode and assemble the full spectrum.
///
/// Only modes `m >= 0` and the Nyquist mode are solved; negative modes are
/// conjugates because the payoff is real.
pub fn solve_spectral<'g>(grid: &'g Grid, payoff: &PayoffSpec) -> Result<SpectralSolution<'g>> {
    let mut coefs = decompose(grid, payoff)?;
    let half = (grid.n_v() / 2) as i32;
    let needed: BTreeMap<i32, Vec<Complex64>> =
        coefs.iter_mut().filter(|(&m, _)| m >= 0 || m == -half).map(|(&m, v)| (m, std::mem::take(v))).collect();
    let solved = solve_batch(grid, &needed)?;
    let by_m: BTreeMap<i32, ModeSolution> = solved.into_iter().map(|s| (s.m, s)).collect();
    let mut modes = Vec::with_capacity(grid.n_v());
    for &m in &grid.modes {
        if let Some(s) = by_m.get(&m) {
            modes.push(s.clone());
        } else {
            let src = &by_m[&(-m)];
            modes.push(ModeSolution {
                m,
                k: grid.wavenumber(m),
                values: src.values.iter().map(|z| z.conj()).collect(),
            });
        }
    }
    Ok(SpectralSolution { grid, modes, label: payoff.description.clone() })
}

/// Price at `(u, v)`: real part of the mode sum, `p_k` linear in `u`.
pub fn recombine(sol: &SpectralSolution<'_>, u: f64, v: f64) -> Result<f64> {
    Ok(sol.evaluate(u, v)?.price)
}

/// Price of the payoff convolved along V with kernel `g`.
///
/// `g[j]` is the kernel weight at offset `j * dv` (indices wrap periodically).
pub fn price_convolved(sol: &SpectralSolution<'_>, g: &[f64], u: f64, v: f64) -> Result<f64> {
    let n_v = sol.grid.n_v();
    if g.len() != n_v {
        return Err(SabrError::domain(format!("kernel has {} entries, expected {n_v}", g.len())));
    }
    let fft = forward_fft(n_v);
    let mut buf: Vec<Complex64> = g.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    fft.process(&mut buf);
    // N * b_k with b_k = (1/N) sum_j g_j exp(-i k j dv)
    let weights: Vec<Complex64> = sol.modes.iter().map(|m| buf[slot(m.m, n_v)]).collect();
    Ok(sol.weighted_sum(u, v, Some(&weights))?.re)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{SabrParams, VariableSet};
    use crate::pde_engine::{build_grid, GridSpec};

    fn grid(n_v: usize) -> Grid {
        let p = SabrParams::new(0.155, 0.9, 0.3, -0.5, 0.0467, 1.0).unwrap();
        build_grid(&p, VariableSet::zx(), &GridSpec::new(20, 12, n_v)).unwrap()
    }

    #[test]
    fn four_point_dft() {
        let g = grid(4);
        let rows = vec![vec![1.0, 2.0, 3.0, 4.0]; g.n_u()];
        let a = decompose_samples(&g, &rows, 0.0);
        let close = |z: Complex64, re: f64, im: f64| (z - Complex64::new(re, im)).norm() < 1e-15;
        assert!(close(a[&0][1], 2.5, 0.0));
        // offsets are centered, so odd modes pick up a sign flip
        assert!(close(a[&1][1], 0.5, -0.5));
        assert!(close(a[&-2][1], -0.5, 0.0));
        assert!(close(a[&-1][1], 0.5, 0.5));
    }

    #[test]
    fn constant_has_only_dc() {
        let g = grid(16);
        let p = PayoffSpec::new("const", 0.3, |_, _| 0.3);
        let a = decompose(&g, &p).unwrap();
        for (m, arr) in &a {
            for z in arr {
                let want = if *m == 0 { 0.3 } else { 0.0 };
                assert!((z - Complex64::new(want, 0.0)).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn conjugate_coefficients() {
        let g = grid(32);
        let a = decompose(&g, &PayoffSpec::put(0.0467)).unwrap();
        for m in 1..16 {
            for (x, y) in a[&m].iter().zip(&a[&-m]) {
                assert!((x - y.conj()).norm() < 1e-16);
            }
        }
    }

    #[test]
    fn clamp_and_taper() {
        let g = grid(32);
        let rows = sample_payoff(&g, &PayoffSpec::call(0.0467).with_clamp_top(true)).unwrap();
        assert_eq!(rows[3][31], rows[3][29]);
        assert_eq!(rows[3][30], rows[3][29]);
        let raw = sample_payoff(&g, &PayoffSpec::call(0.0467)).unwrap();
        let rows = sample_payoff(&g, &PayoffSpec::call(0.0467).with_taper(0.1)).unwrap();
        assert!(rows[3][31] < 0.01 * raw[3][31]);
        assert_eq!(rows[3][16], raw[3][16]);
        assert!(PayoffSpec::call(0.04).with_taper(0.6).taper > 0.5);
        assert!(sample_payoff(&g, &PayoffSpec::call(0.04).with_taper(0.6)).is_err());
    }

    #[test]
    fn outside_u_range_is_an_error() {
        let g = grid(8);
        let a = decompose(&g, &PayoffSpec::put(0.0467)).unwrap();
        let s = SpectralSolution::from_coefficients(&g, a, "raw");
        assert!(recombine(&s, -0.1, g.v0).is_err());
        assert!(recombine(&s, g.u_max() * 1.01, g.v0).is_err());
        assert!(recombine(&s, g.u_max(), g.v0).is_ok());
        assert!(price_convolved(&s, &[1.0; 3], g.u0, g.v0).is_err());
    }
}
