//! Coefficients of the reduced backward PDE in the invariant coordinate `u`.
//!
//! With `U` invariant and `V` shifting, the generator of the SABR process reads
//! `1/2 s_uu p_uu + s_uv p_uv + 1/2 s_vv p_vv + mu_u p_u + mu_v p_v`
//! where every coefficient depends on `u` only.

use crate::error::{Result, SabrError};
use crate::model::{VariableKind, VariableSet};

/// Instantaneous covariances and drifts of `(U, V)` at one value of `u`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CoeffBundle {
    pub sig_uu2: f64,
    pub sig_uv2: f64,
    pub sig_vv2: f64,
    pub mu_u: f64,
    pub mu_v: f64,
}

/// Coefficients for `z = F^(1-beta)/alpha`, `x = ln F`.
pub fn coeffs_zx(z: f64, beta: f64, nu: f64, rho: f64) -> Result<CoeffBundle> {
    if !(z > 0.0) || !z.is_finite() {
        return Err(SabrError::domain(format!("ZX coefficients need z > 0, got {z}")));
    }
    let b1 = 1.0 - beta;
    let sig_vv2 = 1.0 / (z * z);
    Ok(CoeffBundle {
        sig_uu2: b1 * b1 - 2.0 * rho * nu * b1 * z + nu * nu * z * z,
        sig_uv2: b1 / z - rho * nu,
        sig_vv2,
        mu_u: nu * nu * z - rho * nu * b1 - beta * b1 / (2.0 * z),
        mu_v: -0.5 * sig_vv2,
    })
}

/// Coefficients for `w = F alpha^(-1/(1-beta))`, `y = ln alpha`.
///
/// `y` carries the full vol-of-vol: `dy = nu dB2 - nu^2/2 dt`, so the `v`
/// variance is `nu^2` and the cross term is `nu (rho w^beta - g nu w)` with
/// `g = 1/(1-beta)`.
pub fn coeffs_wy(w: f64, beta: f64, nu: f64, rho: f64) -> Result<CoeffBundle> {
    if !(beta < 1.0) {
        return Err(SabrError::UnsupportedVariableSet(format!(
            "WY variables require beta < 1, got beta = {beta}"
        )));
    }
    if !(w > 0.0) || !w.is_finite() {
        return Err(SabrError::domain(format!("WY coefficients need w > 0, got {w}")));
    }
    let g = 1.0 / (1.0 - beta);
    let wb = w.powf(beta);
    let sig_vv2 = nu * nu;
    Ok(CoeffBundle {
        sig_uu2: wb * wb - 2.0 * rho * g * nu * w * wb + g * g * nu * nu * w * w,
        sig_uv2: nu * (rho * wb - g * nu * w),
        sig_vv2,
        mu_u: 0.5 * g * (g + 1.0) * nu * nu * w - g * rho * nu * wb,
        mu_v: -0.5 * sig_vv2,
    })
}

/// Dispatch on the variable set.
pub fn coeffs(vs: VariableSet, u: f64, beta: f64, nu: f64, rho: f64) -> Result<CoeffBundle> {
    match vs.kind {
        VariableKind::Zx => coeffs_zx(u, beta, nu, rho),
        VariableKind::Wy => coeffs_wy(u, beta, nu, rho),
    }
}
