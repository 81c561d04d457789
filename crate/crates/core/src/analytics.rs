//! Closed-form prices: the absorbed normal model, Black, and the first-order
//! SABR implied-volatility asymptotic.

use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Result, SabrError};
use crate::model::SabrParams;

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

pub fn norm_cdf(x: f64) -> f64 {
    std_normal().cdf(x)
}

pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Call on a driftless normal forward absorbed at zero (method of images).
pub fn analytic_absorbed_call(f: f64, alpha: f64, k: f64, tau: f64) -> f64 {
    let s = alpha * tau.sqrt();
    let dp = (f - k) / s;
    let dm = (-f - k) / s;
    s * (norm_pdf(dp) - norm_pdf(dm)) + f * (norm_cdf(dp) + norm_cdf(dm)) - k * (norm_cdf(dp) - norm_cdf(dm))
}

/// Probability that the absorbed normal forward has hit zero by `tau`.
pub fn normal_absorption_probability(f: f64, alpha: f64, tau: f64) -> f64 {
    2.0 * norm_cdf(-f / (alpha * tau.sqrt()))
}

/// Undiscounted Black call.
pub fn black_call(f: f64, k: f64, sigma: f64, tau: f64) -> f64 {
    let intrinsic = (f - k).max(0.0);
    if k <= 0.0 {
        return f - k;
    }
    let sd = sigma * tau.sqrt();
    if !(sd > 0.0) {
        return intrinsic;
    }
    let d1 = ((f / k).ln() + 0.5 * sd * sd) / sd;
    let d2 = d1 - sd;
    f * norm_cdf(d1) - k * norm_cdf(d2)
}

fn black_vega(f: f64, k: f64, sigma: f64, tau: f64) -> f64 {
    let sd = sigma * tau.sqrt();
    let d1 = ((f / k).ln() + 0.5 * sd * sd) / sd;
    f * norm_pdf(d1) * tau.sqrt()
}

/// Black implied volatility by Newton steps kept inside a bisection bracket.
pub fn implied_vol(price: f64, f: f64, k: f64, tau: f64) -> Result<f64> {
    if !(f > 0.0 && k > 0.0 && tau > 0.0) {
        return Err(SabrError::domain("implied_vol needs F > 0, K > 0, tau > 0"));
    }
    let lower = (f - k).max(0.0);
    if !(price > lower && price < f) {
        return Err(SabrError::domain(format!(
            "price {price} outside the no-arbitrage band ({lower}, {f}) for implied vol"
        )));
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while black_call(f, k, hi, tau) < price {
        hi *= 2.0;
        if hi > 1e4 {
            return Err(SabrError::numerical("implied vol above 1e4"));
        }
    }
    let mut sigma = 0.5 * (lo + hi);
    for _ in 0..200 {
        let diff = black_call(f, k, sigma, tau) - price;
        if diff.abs() <= 1e-14 * f.max(1e-300) {
            return Ok(sigma);
        }
        if diff > 0.0 {
            hi = sigma;
        } else {
            lo = sigma;
        }
        let vega = black_vega(f, k, sigma, tau);
        let newton = sigma - diff / vega;
        sigma = if vega > 0.0 && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if hi - lo < 1e-15 {
            return Ok(sigma);
        }
    }
    Ok(sigma)
}

/// First-order lognormal implied vol in the form with the `x(zeta)` map
/// taken in the CEV distance `zeta = nu (F^(1-b) - K^(1-b)) / (alpha (1-b))`.
pub fn asymptotic_vol(params: &SabrParams, k: f64) -> Result<f64> {
    if !(k > 0.0) {
        return Err(SabrError::domain(format!("asymptotic vol needs K > 0, got {k}")));
    }
    let SabrParams { alpha0: a, beta: b, nu, rho, forward: f, expiry: t } = *params;
    let b1 = 1.0 - b;
    let log_fk = (f / k).ln();
    let fk = f * k;
    // b1 ln(F/K) / (F^b1 - K^b1), with its ATM and lognormal limits
    let cev_ratio = if b1 < 1e-12 {
        1.0
    } else if log_fk.abs() < 1e-8 {
        fk.powf(-b1 / 2.0)
    } else {
        b1 * log_fk / (f.powf(b1) - k.powf(b1))
    };
    let zeta = if b1 < 1e-12 { nu / a * log_fk } else { nu * (f.powf(b1) - k.powf(b1)) / (a * b1) };
    let ratio = zeta_ratio(zeta, rho)?;
    let sigma0 = a * cev_ratio * ratio;
    let geo = fk.powf(b1 / 2.0);
    let s1 = b1 * b1 * a * a / (24.0 * geo * geo) + rho * b * nu * a / (4.0 * geo) + (2.0 - 3.0 * rho * rho) * nu * nu / 24.0;
    Ok(sigma0 * (1.0 + s1 * t))
}

/// `zeta / x(zeta)` with a series near zero.
fn zeta_ratio(zeta: f64, rho: f64) -> Result<f64> {
    if zeta.abs() < 1e-6 {
        return Ok(1.0 - 0.5 * rho * zeta + (2.0 - 3.0 * rho * rho) * zeta * zeta / 12.0);
    }
    let disc = (1.0 - 2.0 * rho * zeta + zeta * zeta).sqrt();
    let arg = (disc + zeta - rho) / (1.0 - rho);
    if !(arg > 0.0) || !arg.is_finite() {
        return Err(SabrError::numerical(format!("asymptotic formula hit its branch point at zeta = {zeta}")));
    }
    let x = arg.ln();
    if x == 0.0 {
        return Err(SabrError::numerical("asymptotic formula degenerate"));
    }
    Ok(zeta / x)
}

pub fn asymptotic_price(params: &SabrParams, k: f64) -> Result<f64> {
    let sigma = asymptotic_vol(params, k)?;
    Ok(black_call(params.forward, k, sigma, params.expiry))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn absorbed_normal_atm() {
        let c = analytic_absorbed_call(0.05, 0.01, 0.05, 5.0);
        assert!((c - 0.0089).abs() < 0.5e-4, "{c}");
        let c = analytic_absorbed_call(0.05, 0.01, 0.025, 5.0) - 0.025;
        assert!((c - 0.0015).abs() < 0.5e-4, "{c}");
        assert!((analytic_absorbed_call(0.05, 0.01, 0.0, 5.0) - 0.05).abs() < 1e-15);
    }

    #[test]
    fn black_atm_value() {
        let c = black_call(0.0467, 0.0467, 0.2106, 1.0);
        assert!((c - 0.0039).abs() < 0.5e-4, "{c}");
        assert!(black_call(0.05, 0.06, 1e-9, 1.0) < 1e-300);
    }

    #[test]
    fn implied_vol_round_trip() {
        for &k in &[0.02, 0.04, 0.05, 0.07, 0.12] {
            for &s in &[0.05, 0.2, 0.6, 1.5] {
                let p = black_call(0.05, k, s, 2.0);
                if p - (0.05 - k).max(0.0) < 1e-12 {
                    continue;
                }
                let iv = implied_vol(p, 0.05, k, 2.0).unwrap();
                assert!((iv - s).abs() < 1e-10, "k={k} s={s} iv={iv}");
            }
        }
        assert!(implied_vol(0.06, 0.05, 0.05, 1.0).is_err());
        assert!(implied_vol(0.0, 0.05, 0.05, 1.0).is_err());
    }

    #[test]
    fn lognormal_limit() {
        let p = SabrParams::new(0.2, 1.0, 1e-9, 0.0, 0.05, 1.0).unwrap();
        for &k in &[0.03, 0.05, 0.08] {
            assert!((asymptotic_vol(&p, k).unwrap() - 0.2).abs() < 1e-8);
        }
    }

    #[test]
    fn atm_branch_is_continuous() {
        let p = SabrParams::new(0.155, 0.9, 0.3, -0.5, 0.0467, 1.0).unwrap();
        let atm = asymptotic_vol(&p, 0.0467).unwrap();
        let near = asymptotic_vol(&p, 0.0467 * (1.0 + 1e-7)).unwrap();
        assert!((atm - near).abs() < 1e-7);
    }
}
