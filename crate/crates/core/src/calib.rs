//! Market smiles and least-squares fitting of `(alpha0, nu, rho)` at fixed beta.

use std::collections::BTreeMap;
use std::path::Path;

use argmin::core::{CostFunction, Executor, State, TerminationReason, TerminationStatus};
use argmin::solver::neldermead::NelderMead;

use crate::analytics::{asymptotic_price, black_call};
use crate::error::{Result, SabrError};
use crate::model::{SabrParams, VariableSet};
use crate::pde_engine::GridSpec;
use crate::pricer::price_smile_symmetry;

/// Lognormal vol quotes for one expiry/tenor on one date.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketSmile {
    pub as_of: String,
    pub expiry: f64,
    pub tenor: f64,
    pub forward: f64,
    /// `(strike, lognormal vol)`, strictly increasing in strike.
    pub quotes: Vec<(f64, f64)>,
}

impl MarketSmile {
    pub fn strikes(&self) -> Vec<f64> {
        self.quotes.iter().map(|q| q.0).collect()
    }

    /// Undiscounted Black prices of the quotes.
    pub fn prices(&self) -> Vec<f64> {
        self.quotes.iter().map(|&(k, s)| black_call(self.forward, k, s, self.expiry)).collect()
    }

    /// Short id such as `20071009-1y1y`.
    pub fn id(&self) -> String {
        format!("{}-{}y{}y", self.as_of.replace('-', ""), self.expiry, self.tenor)
    }
}

fn parse_field(rec: &csv::StringRecord, idx: usize, name: &str, line: u64) -> Result<f64> {
    let raw = rec.get(idx).unwrap_or("").trim();
    raw.parse::<f64>().map_err(|_| SabrError::Input(format!("line {line}: column '{name}' is not a number: '{raw}'")))
}

/// Parse market quotes. Two headers are accepted:
/// `as_of,expiry_y,tenor_y,forward,strike,lognormal_vol` and
/// `as_of,expiry_y,tenor_y,forward,offset_bp,lognormal_vol` (strike = forward + offset).
/// Rows with a blank vol are skipped.
pub fn parse_market_csv(text: &str) -> Result<Vec<MarketSmile>> {
    if text.trim().is_empty() {
        return Ok(Vec::new());
    }
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let header = rdr.headers().map_err(|e| SabrError::Input(format!("line 1: {e}")))?.clone();
    let cols: Vec<&str> = header.iter().collect();
    let relative = match cols.as_slice() {
        ["as_of", "expiry_y", "tenor_y", "forward", "strike", "lognormal_vol"] => false,
        ["as_of", "expiry_y", "tenor_y", "forward", "offset_bp", "lognormal_vol"] => true,
        _ => return Err(SabrError::Input(format!("line 1: unrecognised header '{}'", cols.join(",")))),
    };
    let mut groups: BTreeMap<(String, u64, u64), MarketSmile> = BTreeMap::new();
    let mut order = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| SabrError::Input(format!("{e}")))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() != 6 {
            return Err(SabrError::Input(format!("line {line}: expected 6 fields, found {}", rec.len())));
        }
        let as_of = rec[0].to_string();
        let expiry = parse_field(&rec, 1, "expiry_y", line)?;
        let tenor = parse_field(&rec, 2, "tenor_y", line)?;
        let forward = parse_field(&rec, 3, "forward", line)?;
        let x = parse_field(&rec, 4, if relative { "offset_bp" } else { "strike" }, line)?;
        if rec[5].trim().is_empty() {
            continue;
        }
        let vol = parse_field(&rec, 5, "lognormal_vol", line)?;
        let strike = if relative { forward + x / 1e4 } else { x };
        if !(forward > 0.0 && strike > 0.0 && vol > 0.0 && expiry > 0.0) {
            return Err(SabrError::Input(format!("line {line}: forward, strike, vol and expiry must be positive")));
        }
        let key = (as_of.clone(), expiry.to_bits(), tenor.to_bits());
        let entry = groups.entry(key.clone()).or_insert_with(|| {
            order.push(key.clone());
            MarketSmile { as_of, expiry, tenor, forward, quotes: Vec::new() }
        });
        if entry.forward != forward {
            return Err(SabrError::Input(format!("line {line}: forward differs within one smile")));
        }
        if let Some(&(last, _)) = entry.quotes.last() {
            if !(strike > last) {
                return Err(SabrError::Input(format!("line {line}: strikes must be strictly increasing")));
            }
        }
        entry.quotes.push((strike, vol));
    }
    Ok(order.into_iter().map(|k| groups.remove(&k).unwrap()).collect())
}

pub fn load_market_csv(path: impl AsRef<Path>) -> Result<Vec<MarketSmile>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| SabrError::Input(format!("cannot read {}: {e}", path.display())))?;
    parse_market_csv(&text)
}

/// Every smile shipped with the crate.
pub fn shipped_smiles() -> Vec<MarketSmile> {
    let mut all = parse_market_csv(crate::fixtures::MARKET_ABSOLUTE_CSV).expect("absolute fixture parses");
    all.extend(parse_market_csv(crate::fixtures::MARKET_RELATIVE_CSV).expect("relative fixture parses"));
    all
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibOptions {
    /// Grid for the PDE stage.
    pub grid: GridSpec,
    /// Grid used to report the final residuals.
    pub report_grid: GridSpec,
    pub max_iter: u64,
    /// Quote indices left out of the objective (still reported).
    pub exclude: Vec<usize>,
}

impl Default for CalibOptions {
    fn default() -> Self {
        CalibOptions { grid: GridSpec::new(120, 50, 128), report_grid: GridSpec::default(), max_iter: 150, exclude: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibResult {
    pub params: SabrParams,
    /// Root mean square of model minus market price over the fitted quotes.
    pub objective: f64,
    pub iterations: u64,
    /// Model minus market price per quote, including excluded ones.
    pub residuals: Vec<f64>,
    pub converged: bool,
}

const NU_FLOOR: f64 = 1e-6;
const RHO_BOUND: f64 = 0.99;

fn to_params(x: &[f64], beta: f64, smile: &MarketSmile) -> Result<SabrParams> {
    let nu = (x[1].exp() - NU_FLOOR).max(0.0);
    let rho = RHO_BOUND * x[2].tanh();
    SabrParams::new(x[0].exp(), beta, nu, rho, smile.forward, smile.expiry)
}

fn to_unconstrained(p: &SabrParams) -> Vec<f64> {
    let rho = (p.rho / RHO_BOUND).clamp(-0.999_999, 0.999_999);
    vec![p.alpha0.ln(), (p.nu + NU_FLOOR).ln(), rho.atanh()]
}

#[derive(Clone, Copy)]
enum Pricing {
    Asymptotic,
    Pde(GridSpec),
}

fn model_prices(p: &SabrParams, strikes: &[f64], how: Pricing) -> Result<Vec<f64>> {
    match how {
        Pricing::Asymptotic => strikes.iter().map(|&k| asymptotic_price(p, k)).collect(),
        Pricing::Pde(spec) => Ok(price_smile_symmetry(p, VariableSet::zx(), &spec, p.forward, strikes)?.prices),
    }
}

struct Fit<'a> {
    smile: &'a MarketSmile,
    beta: f64,
    strikes: Vec<f64>,
    targets: Vec<f64>,
    how: Pricing,
}

impl CostFunction for Fit<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, x: &Self::Param) -> std::result::Result<f64, argmin::core::Error> {
        let Ok(p) = to_params(x, self.beta, self.smile) else {
            return Ok(f64::INFINITY);
        };
        match model_prices(&p, &self.strikes, self.how) {
            Ok(m) => Ok(m.iter().zip(&self.targets).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()),
            Err(_) => Ok(f64::INFINITY),
        }
    }
}

fn minimize(fit: Fit<'_>, start: Vec<f64>, step: f64, max_iter: u64) -> Result<(Vec<f64>, u64, bool)> {
    let mut simplex = vec![start.clone()];
    for i in 0..start.len() {
        let mut v = start.clone();
        v[i] += step;
        simplex.push(v);
    }
    let solver = NelderMead::new(simplex)
        .with_sd_tolerance(1e-16)
        .map_err(|e| SabrError::numerical(format!("optimizer setup: {e}")))?;
    let res = Executor::new(fit, solver)
        .configure(|s| s.max_iters(max_iter))
        .run()
        .map_err(|e| SabrError::numerical(format!("optimizer: {e}")))?;
    let state = res.state();
    let best = state.get_best_param().cloned().unwrap_or(start);
    let converged = matches!(
        state.get_termination_status(),
        TerminationStatus::Terminated(TerminationReason::SolverConverged)
    );
    Ok((best, state.get_iter(), converged))
}

/// Default starting point: ATM vol mapped to alpha0, `nu = 0.3`, `rho = 0`.
pub fn default_guess(smile: &MarketSmile, beta: f64) -> Result<SabrParams> {
    let atm = smile
        .quotes
        .iter()
        .min_by(|a, b| (a.0 - smile.forward).abs().total_cmp(&(b.0 - smile.forward).abs()))
        .ok_or_else(|| SabrError::domain("smile has no quotes"))?;
    SabrParams::new(atm.1 * smile.forward.powf(1.0 - beta), beta, 0.3, 0.0, smile.forward, smile.expiry)
}

/// Fit `(alpha0, nu, rho)` with beta fixed. A cheap asymptotic fit seeds the
/// PDE-priced Nelder-Mead search.
pub fn calibrate(smile: &MarketSmile, beta: f64, init: Option<SabrParams>, opts: &CalibOptions) -> Result<CalibResult> {
    if smile.quotes.is_empty() {
        return Err(SabrError::domain("cannot calibrate to an empty smile"));
    }
    let init = match init {
        Some(p) => p.with_state(smile.forward, p.alpha0).map(|p| SabrParams { beta, expiry: smile.expiry, ..p })?,
        None => default_guess(smile, beta)?,
    };
    let keep: Vec<usize> = (0..smile.quotes.len()).filter(|i| !opts.exclude.contains(i)).collect();
    if keep.is_empty() {
        return Err(SabrError::domain("every quote is excluded"));
    }
    let all_targets = smile.prices();
    let strikes: Vec<f64> = keep.iter().map(|&i| smile.quotes[i].0).collect();
    let targets: Vec<f64> = keep.iter().map(|&i| all_targets[i]).collect();
    let fit = |how| Fit { smile, beta, strikes: strikes.clone(), targets: targets.clone(), how };

    let (x1, it1, _) = minimize(fit(Pricing::Asymptotic), to_unconstrained(&init), 0.3, 400)?;
    let (x2, it2, converged) = minimize(fit(Pricing::Pde(opts.grid)), x1, 0.05, opts.max_iter)?;
    let params = to_params(&x2, beta, smile)?;

    let model = model_prices(&params, &smile.strikes(), Pricing::Pde(opts.report_grid))?;
    let residuals: Vec<f64> = model.iter().zip(&all_targets).map(|(m, t)| m - t).collect();
    let sq: f64 = keep.iter().map(|&i| residuals[i] * residuals[i]).sum();
    Ok(CalibResult {
        params,
        objective: (sq / keep.len() as f64).sqrt(),
        iterations: it1 + it2,
        residuals,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn absolute_fixture() {
        let smiles = parse_market_csv(crate::fixtures::MARKET_ABSOLUTE_CSV).unwrap();
        let s = smiles.iter().find(|s| s.expiry == 1.0).unwrap();
        assert_eq!(s.quotes.len(), 9);
        let atm = s.quotes.iter().find(|q| q.0 == 0.0467).unwrap();
        assert_eq!(atm.1, 0.2106);
        assert_eq!(s.id(), "20071009-1y1y");
    }

    #[test]
    fn relative_fixture_skips_blanks() {
        let smiles = parse_market_csv(crate::fixtures::MARKET_RELATIVE_CSV).unwrap();
        let s = smiles.iter().find(|s| s.as_of == "2013-10-29" && s.expiry == 1.0).unwrap();
        assert_eq!(s.quotes.len(), 7);
        assert!((s.quotes[0].0 - (s.forward - 0.0050)).abs() < 1e-12);
        let s = smiles.iter().find(|s| s.as_of == "2009-03-09" && s.expiry == 1.0).unwrap();
        assert_eq!(s.quotes.len(), 8);
        assert_eq!(shipped_smiles().len(), 16);
    }

    #[test]
    fn empty_and_malformed() {
        assert!(parse_market_csv("").unwrap().is_empty());
        let e = parse_market_csv("a,b\n1,2\n").unwrap_err();
        assert!(e.to_string().contains("line 1"));
        let bad = "as_of,expiry_y,tenor_y,forward,strike,lognormal_vol\n2007-10-09,1,1,0.05,0.04,0.2\n2007-10-09,1,1,0.05,abc,0.2\n";
        let e = parse_market_csv(bad).unwrap_err();
        assert!(e.to_string().contains("line 3"), "{e}");
        let unsorted = "as_of,expiry_y,tenor_y,forward,strike,lognormal_vol\nd,1,1,0.05,0.04,0.2\nd,1,1,0.05,0.03,0.2\n";
        assert!(parse_market_csv(unsorted).is_err());
    }

    #[test]
    fn reparameterization_round_trip() {
        let smile = MarketSmile { as_of: "x".into(), expiry: 2.0, tenor: 2.0, forward: 0.04, quotes: vec![(0.04, 0.2)] };
        let p = SabrParams::new(0.03, 0.5, 0.4, -0.3, 0.04, 2.0).unwrap();
        let q = to_params(&to_unconstrained(&p), 0.5, &smile).unwrap();
        assert!((q.alpha0 - p.alpha0).abs() < 1e-14);
        assert!((q.nu - p.nu).abs() < 1e-12);
        assert!((q.rho - p.rho).abs() < 1e-12);
    }
}
