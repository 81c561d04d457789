//! Shipped reference data: parameter sets, printed result tables and market
//! volatility quotes, all embedded at compile time.

use serde::Deserialize;

use crate::model::SabrParams;

pub const PRINTED_TABLES_CSV: &str = include_str!("../fixtures/printed_tables.csv");
pub const SABR_PARAMS_CSV: &str = include_str!("../fixtures/sabr_params.csv");
/// Absolute-strike quotes, `as_of,expiry_y,tenor_y,forward,strike,lognormal_vol`.
pub const MARKET_ABSOLUTE_CSV: &str = include_str!("../fixtures/market_20071009.csv");
/// Quotes relative to the forward, `as_of,expiry_y,tenor_y,forward,offset_bp,lognormal_vol`.
pub const MARKET_RELATIVE_CSV: &str = include_str!("../fixtures/market_relative.csv");

/// A named parameter set from the fixtures.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet {
    pub id: String,
    pub as_of: Option<String>,
    pub tenor: Option<f64>,
    pub params: SabrParams,
}

#[derive(Deserialize)]
struct ParamRow {
    id: String,
    as_of: String,
    expiry_y: f64,
    tenor_y: Option<f64>,
    beta: f64,
    nu: f64,
    rho: f64,
    alpha0: f64,
    forward: f64,
}

pub fn param_sets() -> Vec<ParamSet> {
    let mut rdr = csv::Reader::from_reader(SABR_PARAMS_CSV.as_bytes());
    rdr.deserialize::<ParamRow>()
        .map(|r| {
            let r = r.expect("sabr_params.csv is well formed");
            let params = SabrParams::new(r.alpha0, r.beta, r.nu, r.rho, r.forward, r.expiry_y)
                .expect("fixture parameters are valid");
            ParamSet {
                id: r.id,
                as_of: Some(r.as_of).filter(|s| !s.is_empty()),
                tenor: r.tenor_y,
                params,
            }
        })
        .collect()
}

pub fn param_set(id: &str) -> Option<ParamSet> {
    param_sets().into_iter().find(|p| p.id == id)
}

/// One printed cell: a time value in decimals (not percent).
#[derive(Debug, Clone, PartialEq)]
pub struct PrintedCell {
    pub table: String,
    pub strike: f64,
    pub method: String,
    pub time_value: f64,
}

#[derive(Deserialize)]
struct CellRow {
    table: String,
    strike_pct: f64,
    method: String,
    time_value_pct: f64,
}

pub fn printed_cells() -> Vec<PrintedCell> {
    let mut rdr = csv::Reader::from_reader(PRINTED_TABLES_CSV.as_bytes());
    rdr.deserialize::<CellRow>()
        .map(|r| {
            let r = r.expect("printed_tables.csv is well formed");
            PrintedCell {
                table: r.table,
                strike: r.strike_pct / 100.0,
                method: r.method,
                time_value: r.time_value_pct / 100.0,
            }
        })
        .collect()
}

pub fn printed_table(id: &str) -> Vec<PrintedCell> {
    printed_cells().into_iter().filter(|c| c.table == id).collect()
}

/// Distinct table ids, sorted.
pub fn table_ids() -> Vec<String> {
    let mut ids: Vec<String> = printed_cells().into_iter().map(|c| c.table).collect();
    ids.sort();
    ids.dedup();
    ids
}

/// Strikes of a table in ascending order.
pub fn table_strikes(id: &str) -> Vec<f64> {
    let mut ks: Vec<f64> = printed_table(id).iter().map(|c| c.strike).collect();
    ks.sort_by(f64::total_cmp);
    ks.dedup();
    ks
}

/// Printed `(strike, time value)` column of one method, ascending in strike.
pub fn printed_column(id: &str, method: &str) -> Vec<(f64, f64)> {
    let mut col: Vec<(f64, f64)> =
        printed_table(id).into_iter().filter(|c| c.method == method).map(|c| (c.strike, c.time_value)).collect();
    col.sort_by(|a, b| a.0.total_cmp(&b.0));
    col
}
