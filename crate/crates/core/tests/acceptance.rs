//! Acceptance checks, one line per criterion. Run with `cargo test --test acceptance`.

use std::time::Instant;

use sabr_symmetry::analytics::{analytic_absorbed_call, asymptotic_price, normal_absorption_probability};
use sabr_symmetry::calib::{calibrate, shipped_smiles, CalibOptions};
use sabr_symmetry::cli::bench;
use sabr_symmetry::fixtures::{param_set, printed_column, table_strikes};
use sabr_symmetry::model::{scale_state, SabrParams, VariableSet};
use sabr_symmetry::montecarlo::{absorbed_fraction, price_mc_smile, McConfig};
use sabr_symmetry::pde_engine::GridSpec;
use sabr_symmetry::pricer::{price_smile_per_strike, price_smile_symmetry, price_special, symmetry_grid, time_value};
use sabr_symmetry::spectral::{decompose, price_convolved, recombine, sample_payoff, PayoffSpec, SpectralSolution};

const BP: f64 = 1e-4;

// Tolerances.
const ANALYTIC_TOL: f64 = 1.0 * BP;
const ANALYTIC_RUNTIME_S: f64 = 2.0;
const SYMMETRY_TOL: f64 = 0.5 * BP;
const SYMMETRY_RUNTIME_S: f64 = 2.0;
const PRINTED_TOL: f64 = 1.0 * BP;
const DIVERGENCE_PDE: (f64, f64) = (0.0005, 2.0 * BP);
const DIVERGENCE_ASYM: (f64, f64) = (0.0024, 3.0 * BP);
const DIVERGENCE_GAP: f64 = 15.0 * BP;
const MARTINGALE_REL: f64 = 1e-3;
const ROUND_TRIP_REL: f64 = 1e-12;
const DELTA_KERNEL_TOL: f64 = 1e-14;
const SCALING_TOL: f64 = 0.1 * BP;
const HIT_SHIFT_MIN: f64 = 1.0 * BP;
const BENCH_MEDIAN_MS: f64 = 250.0;
const SPEEDUP_MIN: f64 = 2.0;
const SPEEDUP_CORES: usize = 4;
const CALIB_RMS: f64 = 2.0 * BP;

enum Verdict {
    Pass,
    Fail,
    NotEvaluated,
}

struct Line {
    n: u32,
    verdict: Verdict,
    detail: String,
}

fn line(n: u32, ok: bool, detail: String) -> Line {
    Line { n, verdict: if ok { Verdict::Pass } else { Verdict::Fail }, detail }
}

fn params(id: &str) -> SabrParams {
    param_set(id).unwrap_or_else(|| panic!("parameter set {id}")).params
}

fn max_abs(xs: impl IntoIterator<Item = f64>) -> f64 {
    xs.into_iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn analytic_parity() -> Line {
    let t = Instant::now();
    let p = params("analytic-limit");
    let strikes = table_strikes("analytic-limit");
    let exact: Vec<f64> = strikes.iter().map(|&k| analytic_absorbed_call(p.forward, p.alpha0, k, p.expiry)).collect();
    let spec = GridSpec::default();
    let zx = price_smile_symmetry(&p, VariableSet::zx(), &spec, p.forward, &strikes).unwrap().prices;
    let wy = price_smile_symmetry(&p, VariableSet::wy(p.beta).unwrap(), &spec, p.forward, &strikes).unwrap().prices;
    // With beta = nu = 0 the Euler step and the bridge hit test are exact for any dt,
    // so coarse steps lose nothing and buy paths.
    let cfg = McConfig { n_paths: 1 << 19, steps_per_year: 10, antithetic: true, ..McConfig::default() };
    let mc = price_mc_smile(&p, &strikes, &cfg).unwrap();
    let elapsed = t.elapsed().as_secs_f64();
    let e_zx = max_abs(zx.iter().zip(&exact).map(|(a, b)| a - b));
    let e_wy = max_abs(wy.iter().zip(&exact).map(|(a, b)| a - b));
    let e_mc = max_abs(mc.iter().zip(&exact).map(|(m, b)| m.mean - b));
    let z_mc = max_abs(mc.iter().zip(&exact).map(|(m, b)| (m.mean - b) / m.std_error.max(1e-300)));
    let ok = strikes.len() == 20
        && e_zx <= ANALYTIC_TOL
        && e_wy <= ANALYTIC_TOL
        && e_mc <= ANALYTIC_TOL
        && z_mc <= 3.0
        && elapsed <= ANALYTIC_RUNTIME_S;
    line(
        1,
        ok,
        format!(
            "analytic limit, 20 strikes: max |err| zx {:.3}bp, wy {:.3}bp, mc {:.3}bp ({:.2} s.e.); {:.2}s",
            e_zx / BP,
            e_wy / BP,
            e_mc / BP,
            z_mc,
            elapsed
        ),
    )
}

fn symmetry_equivalence() -> Line {
    let t = Instant::now();
    let p = params("20071009-1y1y");
    let strikes = table_strikes("20071009-1y1y-per-strike");
    let spec = GridSpec::default();
    let sym = price_smile_symmetry(&p, VariableSet::zx(), &spec, p.forward, &strikes).unwrap().prices;
    let per = price_smile_per_strike(&p, VariableSet::zx(), &spec, &strikes).unwrap().prices;
    let elapsed = t.elapsed().as_secs_f64();
    let d = max_abs(sym.iter().zip(&per).map(|(a, b)| a - b));
    let ok = strikes.len() == 13 && d <= SYMMETRY_TOL && elapsed <= SYMMETRY_RUNTIME_S;
    line(2, ok, format!("2007 1Y1Y, 13 strikes: max |symmetry - per-strike| {:.4}bp; {:.2}s", d / BP, elapsed))
}

fn printed_parity() -> Line {
    let id = "20071009-1y1y";
    let p = params(id);
    let strikes = table_strikes(id);
    let tv = |prices: &[f64]| -> Vec<f64> { prices.iter().zip(&strikes).map(|(&c, &k)| time_value(c, p.forward, k)).collect() };
    let zx = tv(&price_smile_symmetry(&p, VariableSet::zx(), &GridSpec::default(), p.forward, &strikes).unwrap().prices);
    let cfg = McConfig { n_paths: 1 << 18, ..McConfig::default() };
    let mc = tv(&price_mc_smile(&p, &strikes, &cfg).unwrap().iter().map(|e| e.mean).collect::<Vec<_>>());
    let asym = tv(&strikes.iter().map(|&k| asymptotic_price(&p, k).unwrap()).collect::<Vec<_>>());
    let worst = |method: &str, ours: &[f64]| -> f64 {
        let col = printed_column(id, method);
        assert_eq!(col.len(), strikes.len());
        max_abs(col.iter().map(|&(k, printed)| ours[strikes.iter().position(|&s| s == k).unwrap()] - printed))
    };
    let (e_mc, e_zx, e_as) = (worst("mc", &mc), worst("pde_sym_zx", &zx), worst("asymptotic", &asym));
    let ok = e_mc <= PRINTED_TOL && e_zx <= PRINTED_TOL && e_as <= PRINTED_TOL;
    line(
        3,
        ok,
        format!(
            "2007 1Y1Y vs printed: max |diff| mc {:.3}bp, pde-zx {:.3}bp, asymptotic {:.3}bp",
            e_mc / BP,
            e_zx / BP,
            e_as / BP
        ),
    )
}

fn asymptotic_divergence() -> Line {
    let p = params("20071009-20y20y");
    let k = 0.0049;
    let pde = price_smile_symmetry(&p, VariableSet::zx(), &GridSpec::default(), p.forward, &[k]).unwrap().time_values[0];
    let asym = time_value(asymptotic_price(&p, k).unwrap(), p.forward, k);
    let gap = asym - pde;
    let ok = (pde - DIVERGENCE_PDE.0).abs() <= DIVERGENCE_PDE.1
        && (asym - DIVERGENCE_ASYM.0).abs() <= DIVERGENCE_ASYM.1
        && gap >= DIVERGENCE_GAP;
    line(
        4,
        ok,
        format!(
            "2007 20Y20Y at K=0.49%: pde-zx {:.3}%, asymptotic {:.3}%, gap {:.2}bp",
            100.0 * pde,
            100.0 * asym,
            gap / BP
        ),
    )
}

fn martingales() -> Line {
    let spec = GridSpec::default();
    let mut worst_f: f64 = 0.0;
    let mut worst_a: f64 = 0.0;
    for id in ["20131029-1y1y", "20131029-5y5y", "20131029-10y10y", "20131029-20y20y"] {
        let p = params(id);
        let wy = VariableSet::wy(p.beta).unwrap();
        let f_zx = price_special(&p, VariableSet::zx(), &spec, |_| 1.0, 1.0).unwrap();
        let f_wy = price_special(&p, wy, &spec, |u| u, 1.0 / (1.0 - p.beta)).unwrap();
        let a_wy = price_special(&p, wy, &spec, |_| 1.0, 1.0).unwrap();
        worst_f = worst_f.max((f_zx / p.forward - 1.0).abs()).max((f_wy / p.forward - 1.0).abs());
        worst_a = worst_a.max((a_wy / p.alpha0 - 1.0).abs());
    }
    let ok = worst_f <= MARTINGALE_REL && worst_a <= MARTINGALE_REL;
    line(5, ok, format!("2013 sets: max rel err E[F_T] {worst_f:.2e}, E[alpha_T] {worst_a:.2e}"))
}

fn spectral_round_trip() -> Line {
    let p = params("20071009-1y1y");
    let grid = symmetry_grid(&p, VariableSet::zx(), &GridSpec::default(), p.forward, &[0.03, 0.07]).unwrap();
    let payoff = PayoffSpec::put(p.forward).with_taper(0.1);
    let rows = sample_payoff(&grid, &payoff).unwrap();
    let coefs = decompose(&grid, &payoff).unwrap();
    let sol = SpectralSolution::from_coefficients(&grid, coefs, "terminal");
    let scale = max_abs(rows.iter().flatten().copied());
    let mut worst: f64 = 0.0;
    for (row, &u) in rows.iter().zip(&grid.u_nodes) {
        for (j, &want) in row.iter().enumerate() {
            let got = recombine(&sol, u, grid.v_node(j)).unwrap();
            worst = worst.max((got - want).abs() / scale);
        }
    }
    let mut delta = vec![0.0; grid.n_v()];
    delta[0] = 1.0;
    let mut worst_conv: f64 = 0.0;
    for &u in &[grid.u_nodes[3], grid.u0, grid.u_nodes[grid.n_u() - 2]] {
        for j in (0..grid.n_v()).step_by(17) {
            let v = grid.v_node(j);
            worst_conv = worst_conv.max((price_convolved(&sol, &delta, u, v).unwrap() - recombine(&sol, u, v).unwrap()).abs());
        }
    }
    let ok = worst <= ROUND_TRIP_REL && worst_conv <= DELTA_KERNEL_TOL;
    line(6, ok, format!("round trip max rel err {worst:.2e}; delta-kernel convolution max diff {worst_conv:.2e}"))
}

fn scaling() -> Line {
    let mut worst: f64 = 0.0;
    for id in ["20071009-1y1y", "20071009-10y10y"] {
        let p = params(id);
        let strikes: Vec<f64> = table_strikes(id);
        let base = price_smile_symmetry(&p, VariableSet::zx(), &GridSpec::default(), p.forward, &strikes).unwrap().prices;
        for lambda in [0.5, 2.0] {
            let (f, a) = scale_state(p.forward, p.alpha0, lambda, p.beta).unwrap();
            let q = p.with_state(f, a).unwrap();
            let ks: Vec<f64> = strikes.iter().map(|k| lambda * k).collect();
            let scaled = price_smile_symmetry(&q, VariableSet::zx(), &GridSpec::default(), q.forward, &ks).unwrap().prices;
            worst = worst.max(max_abs(scaled.iter().zip(&base).map(|(s, b)| s / lambda - b)));
        }
    }
    line(7, worst <= SCALING_TOL, format!("lambda in {{0.5, 2}}: max |C(lambda)/lambda - C| {:.2e}bp", worst / BP))
}

fn absorption() -> Line {
    let p = params("analytic-limit");
    let cfg = McConfig { n_paths: 100_000, ..McConfig::default() };
    let frac = absorbed_fraction(&p, &cfg).unwrap();
    let exact = normal_absorption_probability(p.forward, p.alpha0, p.expiry);
    let se = (exact * (1.0 - exact) / cfg.n_paths as f64).sqrt();
    let z = (frac - exact) / se;

    let q = params("20080915-20y20y");
    let strikes = table_strikes("20080915-20y20y");
    let cfg = McConfig { n_paths: 20_000, ..McConfig::default() };
    let on = price_mc_smile(&q, &strikes, &cfg).unwrap();
    let off = price_mc_smile(&q, &strikes, &McConfig { hit_adjustment: false, ..cfg }).unwrap();
    let shift = max_abs(on.iter().zip(&off).map(|(a, b)| a.mean - b.mean));
    let ok = z.abs() <= 3.0 && shift >= HIT_SHIFT_MIN;
    line(
        8,
        ok,
        format!(
            "absorbed fraction {frac:.5} vs {exact:.5} ({z:+.2} s.e.); hit adjustment shifts 2008 20Y20Y by up to {:.2}bp",
            shift / BP
        ),
    )
}

fn performance() -> Line {
    let p = params("20071009-10y10y");
    let strikes = table_strikes("20071009-10y10y");
    let spec = GridSpec::new(240, 50, 256);
    price_smile_symmetry(&p, VariableSet::zx(), &spec, p.forward, &strikes).unwrap();
    let r = bench(&p, &strikes, &spec, 20).unwrap();
    let speedup = r.sequential_ms / r.parallel_ms;
    let cores = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    let timing_ok = r.median_ms <= BENCH_MEDIAN_MS;
    let detail = format!(
        "10Y smile 240x50x256: median of 20 {:.1}ms; mode batch speedup {:.2}x on {} threads, {} cores",
        r.median_ms, speedup, r.threads, cores
    );
    if cores < SPEEDUP_CORES {
        let verdict = if timing_ok { Verdict::NotEvaluated } else { Verdict::Fail };
        return Line { n: 9, verdict, detail: format!("{detail} (speedup needs {SPEEDUP_CORES} cores)") };
    }
    line(9, timing_ok && speedup >= SPEEDUP_MIN, detail)
}

fn calibration() -> Line {
    let mut worst = (0.0, String::new());
    let mut fitted = 0;
    let mut all_ok = true;
    for smile in shipped_smiles() {
        let id = smile.id();
        let beta = params(&id).beta;
        let mut opts = CalibOptions::default();
        if id == "20080915-20y20y" {
            opts.exclude = vec![0];
        }
        let r = calibrate(&smile, beta, None, &opts).unwrap();
        fitted += 1;
        all_ok &= r.objective <= CALIB_RMS;
        if r.objective > worst.0 {
            worst = (r.objective, id);
        }
    }
    line(
        10,
        all_ok && fitted >= 13,
        format!("{fitted} smiles: worst RMS {:.3}bp ({}); 2008 20Y20Y lowest strike exempt", worst.0 / BP, worst.1),
    )
}

fn main() {
    let checks: [fn() -> Line; 10] = [
        analytic_parity,
        symmetry_equivalence,
        printed_parity,
        asymptotic_divergence,
        martingales,
        spectral_round_trip,
        scaling,
        absorption,
        performance,
        calibration,
    ];
    let mut failed = 0;
    for check in checks {
        let l = check();
        let tag = match l.verdict {
            Verdict::Pass => "PASS",
            Verdict::Fail => {
                failed += 1;
                "FAIL"
            }
            Verdict::NotEvaluated => "PASS (speedup NOT EVALUATED)",
        };
        println!("criterion {:>2}: {tag}: {}", l.n, l.detail);
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
