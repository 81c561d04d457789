//! SABR parameters, the scaling transformation and the two symmetry-adapted
//! coordinate systems.
//!
//! Both coordinate systems split the state `(F, alpha)` into an invariant
//! coordinate `u` and a coordinate `v` that shifts by `c * ln(lambda)` under
//! `F -> lambda F`, `alpha -> lambda^(1-beta) alpha`.

use crate::error::{Result, SabrError};

/// Model parameters for a single expiry. All quantities are plain decimals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SabrParams {
    pub alpha0: f64,
    pub beta: f64,
    pub nu: f64,
    pub rho: f64,
    pub forward: f64,
    pub expiry: f64,
}

impl SabrParams {
    /// Build and validate in one step.
    pub fn new(alpha0: f64, beta: f64, nu: f64, rho: f64, forward: f64, expiry: f64) -> Result<Self> {
        validate(SabrParams { alpha0, beta, nu, rho, forward, expiry })
    }

    /// Same parameters with a different initial state.
    pub fn with_state(&self, forward: f64, alpha0: f64) -> Result<Self> {
        validate(SabrParams { forward, alpha0, ..*self })
    }
}

/// Check every parameter bound, returning the parameters untouched.
pub fn validate(params: SabrParams) -> Result<SabrParams> {
    let p = &params;
    let finite = [p.alpha0, p.beta, p.nu, p.rho, p.forward, p.expiry]
        .iter()
        .all(|x| x.is_finite());
    if !finite {
        return Err(SabrError::domain("parameters must be finite"));
    }
    if p.alpha0 <= 0.0 {
        return Err(SabrError::domain(format!("alpha0 must be positive, got {}", p.alpha0)));
    }
    if !(0.0..=1.0).contains(&p.beta) {
        return Err(SabrError::domain(format!("beta out of range [0, 1]: {}", p.beta)));
    }
    if p.nu < 0.0 {
        return Err(SabrError::domain(format!("nu must be non-negative, got {}", p.nu)));
    }
    if !(p.rho > -1.0 && p.rho < 1.0) {
        return Err(SabrError::domain(format!("rho out of range (-1, 1): {}", p.rho)));
    }
    if p.forward <= 0.0 {
        return Err(SabrError::domain(format!("forward must be positive, got {}", p.forward)));
    }
    if p.expiry <= 0.0 {
        return Err(SabrError::domain(format!("expiry must be positive, got {}", p.expiry)));
    }
    Ok(params)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VariableKind {
    /// `u = F^(1-beta)/alpha`, `v = ln F`.
    Zx,
    /// `u = F alpha^(-1/(1-beta))`, `v = ln alpha`.
    Wy,
}

/// Active coordinate system plus the shift constant `c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VariableSet {
    pub kind: VariableKind,
    pub c: f64,
}

impl VariableSet {
    pub fn zx() -> Self {
        VariableSet { kind: VariableKind::Zx, c: 1.0 }
    }

    /// The WY set needs `beta < 1`; its exponent `1/(1-beta)` diverges otherwise.
    pub fn wy(beta: f64) -> Result<Self> {
        if !(beta < 1.0) {
            return Err(SabrError::UnsupportedVariableSet(format!(
                "WY variables require beta < 1, got beta = {beta}"
            )));
        }
        Ok(VariableSet { kind: VariableKind::Wy, c: 1.0 - beta })
    }

    pub fn new(kind: VariableKind, beta: f64) -> Result<Self> {
        match kind {
            VariableKind::Zx => Ok(Self::zx()),
            VariableKind::Wy => Self::wy(beta),
        }
    }

    fn check_beta(&self, beta: f64) -> Result<()> {
        if self.kind == VariableKind::Wy && !(beta < 1.0) {
            return Err(SabrError::UnsupportedVariableSet(format!(
                "WY variables require beta < 1, got beta = {beta}"
            )));
        }
        Ok(())
    }
}

/// A state in both representations.
///
/// At the absorbed locus `F = 0` we have `u = 0`. For ZX the `v` coordinate is
/// then `-inf` (the absorbed sentinel, `ln 0`); for WY it is still `ln alpha`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StatePoint {
    pub f: f64,
    pub alpha: f64,
    pub u: f64,
    pub v: f64,
}

impl StatePoint {
    pub fn new(f: f64, alpha: f64, vs: VariableSet, beta: f64) -> Result<Self> {
        let (u, v) = to_uv(f, alpha, vs, beta)?;
        Ok(StatePoint { f, alpha, u, v })
    }

    pub fn is_absorbed(&self) -> bool {
        self.f == 0.0
    }
}

/// Value of `v` returned for the absorbed state in ZX coordinates.
pub const ABSORBED_V: f64 = f64::NEG_INFINITY;

/// Map `(F, alpha)` to `(u, v)`.
pub fn to_uv(f: f64, alpha: f64, vs: VariableSet, beta: f64) -> Result<(f64, f64)> {
    vs.check_beta(beta)?;
    if !(f >= 0.0) || !f.is_finite() {
        return Err(SabrError::domain(format!("forward must be finite and >= 0, got {f}")));
    }
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(SabrError::domain(format!("alpha must be finite and > 0, got {alpha}")));
    }
    match vs.kind {
        VariableKind::Zx => {
            if f == 0.0 {
                Ok((0.0, ABSORBED_V))
            } else {
                Ok((f.powf(1.0 - beta) / alpha, f.ln()))
            }
        }
        VariableKind::Wy => {
            let y = alpha.ln();
            if f == 0.0 {
                Ok((0.0, y))
            } else {
                Ok((f * (-y / (1.0 - beta)).exp(), y))
            }
        }
    }
}

/// Inverse of [`to_uv`]. Returns `alpha = None` where it is undefined
/// (ZX at `u = 0`).
pub fn from_uv(u: f64, v: f64, vs: VariableSet, beta: f64) -> Result<(f64, Option<f64>)> {
    vs.check_beta(beta)?;
    if !(u >= 0.0) || !u.is_finite() {
        return Err(SabrError::domain(format!("u must be finite and >= 0, got {u}")));
    }
    match vs.kind {
        VariableKind::Zx => {
            if u == 0.0 {
                return Ok((0.0, None));
            }
            let f = v.exp();
            Ok((f, Some(f.powf(1.0 - beta) / u)))
        }
        VariableKind::Wy => {
            let alpha = v.exp();
            Ok((u * (v / (1.0 - beta)).exp(), Some(alpha)))
        }
    }
}

/// Apply the scaling symmetry `F -> lambda F`, `alpha -> lambda^(1-beta) alpha`.
pub fn scale_state(f: f64, alpha: f64, lambda: f64, beta: f64) -> Result<(f64, f64)> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(SabrError::domain(format!("lambda must be positive, got {lambda}")));
    }
    Ok((lambda * f, lambda.powf(1.0 - beta) * alpha))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn validate_accepts_shipped_sets() {
        assert!(SabrParams::new(0.155, 0.9, 0.30, -0.5, 0.0467, 1.0).is_ok());
        assert!(SabrParams::new(0.01, 0.0, 0.0, 0.0, 0.05, 5.0).is_ok());
    }

    #[test]
    fn validate_names_the_bound() {
        let e = SabrParams::new(0.155, 0.9, 0.30, 1.0, 0.0467, 1.0).unwrap_err();
        assert!(e.to_string().contains("rho out of range"), "{e}");
        let e = SabrParams::new(0.155, 1.1, 0.30, 0.0, 0.0467, 1.0).unwrap_err();
        assert!(e.to_string().contains("beta"));
        assert!(SabrParams::new(0.0, 0.5, 0.3, 0.0, 0.05, 1.0).is_err());
        assert!(SabrParams::new(0.1, 0.5, -0.1, 0.0, 0.05, 1.0).is_err());
        assert!(SabrParams::new(0.1, 0.5, 0.1, 0.0, 0.0, 1.0).is_err());
        assert!(SabrParams::new(0.1, 0.5, 0.1, 0.0, 0.05, 0.0).is_err());
    }

    #[test]
    fn beta_zero_coordinates() {
        let (u, v) = to_uv(0.05, 0.01, VariableSet::zx(), 0.0).unwrap();
        assert!(rel(u, 5.0) < 1e-14);
        assert_eq!(v, 0.05f64.ln());
        let wy = VariableSet::wy(0.0).unwrap();
        let (u, v) = to_uv(0.05, 0.01, wy, 0.0).unwrap();
        assert!(rel(u, 5.0) < 1e-14);
        assert_eq!(v, 0.01f64.ln());
        let (f, a) = from_uv(5.0, 0.05f64.ln(), VariableSet::zx(), 0.0).unwrap();
        assert!(rel(f, 0.05) < 1e-14 && rel(a.unwrap(), 0.01) < 1e-14);
    }

    #[test]
    fn absorbed_locus() {
        let (u, v) = to_uv(0.0, 0.2, VariableSet::zx(), 0.5).unwrap();
        assert_eq!(u, 0.0);
        assert_eq!(v, ABSORBED_V);
        let wy = VariableSet::wy(0.5).unwrap();
        let (u, v) = to_uv(0.0, 0.2, wy, 0.5).unwrap();
        assert_eq!((u, v), (0.0, 0.2f64.ln()));
        assert_eq!(from_uv(0.0, 1.3, VariableSet::zx(), 0.5).unwrap(), (0.0, None));
        let (f, a) = from_uv(0.0, 0.2f64.ln(), wy, 0.5).unwrap();
        assert_eq!(f, 0.0);
        assert!(rel(a.unwrap(), 0.2) < 1e-15);
        assert!(from_uv(-1.0, 0.0, wy, 0.5).is_err());
    }

    #[test]
    fn wy_rejects_beta_one() {
        assert!(matches!(VariableSet::wy(1.0), Err(SabrError::UnsupportedVariableSet(_))));
        let wy = VariableSet { kind: VariableKind::Wy, c: 0.0 };
        assert!(to_uv(0.05, 0.2, wy, 1.0).is_err());
        // ZX stays usable at beta = 1
        let (u, _) = to_uv(0.05, 0.2, VariableSet::zx(), 1.0).unwrap();
        assert!(rel(u, 5.0) < 1e-14);
    }

    #[test]
    fn shipped_state_round_trip() {
        let (u, v) = to_uv(0.0467, 0.155, VariableSet::zx(), 0.9).unwrap();
        assert!(rel(u, 0.0467f64.powf(0.1) / 0.155) < 1e-14);
        let (f, a) = from_uv(u, v, VariableSet::zx(), 0.9).unwrap();
        assert!(rel(f, 0.0467) < 1e-12 && rel(a.unwrap(), 0.155) < 1e-12);
    }

    #[test]
    fn scaling() {
        assert_eq!(scale_state(0.05, 0.01, 1.0, 0.7).unwrap(), (0.05, 0.01));
        let (f, a) = scale_state(0.05, 0.01, 2.0, 0.0).unwrap();
        assert!(rel(f, 0.10) < 1e-15 && rel(a, 0.02) < 1e-15);
        assert!(scale_state(0.05, 0.01, 0.0, 0.0).is_err());
        assert!(scale_state(0.05, 0.01, -2.0, 0.0).is_err());
        for vs in [VariableSet::zx(), VariableSet::wy(0.9).unwrap()] {
            let (u0, v0) = to_uv(0.0467, 0.155, vs, 0.9).unwrap();
            let (f, a) = scale_state(0.0467, 0.155, 3.0, 0.9).unwrap();
            let (u1, v1) = to_uv(f, a, vs, 0.9).unwrap();
            assert!(rel(u1, u0) < 1e-12);
            assert!((v1 - v0 - vs.c * 3f64.ln()).abs() < 1e-12);
        }
    }
}
