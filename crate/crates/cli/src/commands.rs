//! Subcommand bodies. Each returns a table plus the conditions that
//! `--strict` turns into failures.

use rayon::prelude::*;

use qrepeater::analytic::{self, CrossTerm, PerturbativeInputs, ThresholdKind, ThresholdParams, S_MAX};
use qrepeater::repeater::{rate, rate_monte_carlo, BellMeasurement, FIXED_ANGLES};
use qrepeater::{run_chain, Error, FockDensityMatrix, RepeaterParams};

use crate::config::RunConfig;
use crate::output::{Cell, Table};

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidParameter(_) | Error::MemoryNormalization(_) => CliError::Config(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Default)]
pub struct Report {
    pub table: Table,
    pub state: Option<FockDensityMatrix>,
    /// Rows whose validity flag is down.
    pub invalid: Vec<String>,
}

fn level_distance(k: usize) -> f64 {
    2f64.powi(k as i32)
}

fn join(q: &[f64]) -> String {
    q.iter().map(|v| format!("{v:.16e}")).collect::<Vec<_>>().join(";")
}

/// Exact doubling-protocol rate, zero if some step can never succeed.
fn exact_rate(q: &[f64], q_ps: f64, tau: f64) -> CliResult<f64> {
    if q_ps <= 0.0 || q.iter().any(|&x| x <= 0.0) {
        return Ok(0.0);
    }
    Ok(rate(q, q_ps, tau)?.exact)
}

pub fn simulate(cfg: &RunConfig) -> CliResult<Report> {
    let p = cfg.params()?;
    let chain = run_chain(&p)?;
    let meas = BellMeasurement::for_params(&p)?;
    let mut columns = vec!["n", "L_over_L0", "S"];
    if cfg.optimize_angles {
        columns.push("S_opt");
    }
    columns.extend(["q_ps", "q_list", "rate", "leak"]);
    let mut table = Table::new(&columns);
    for (k, rho) in chain.states.iter().enumerate() {
        let b = meas.evaluate(rho, &FIXED_ANGLES)?;
        let q = &chain.q[..=k];
        let mut row: Vec<Cell> = vec![Cell::Int(k as i64), level_distance(k).into(), b.s.into()];
        if cfg.optimize_angles {
            row.push(meas.optimal_s(rho)?.into());
        }
        row.extend([b.q_ps.into(), join(q).into(), exact_rate(q, b.q_ps, p.tau)?.into(), chain.leaks[k].into()]);
        table.push(row);
    }
    Ok(Report { table, state: Some(chain.final_state().clone()), invalid: Vec::new() })
}

pub fn sweep(cfg: &RunConfig) -> CliResult<Report> {
    if cfg.sweep_param.is_empty() || cfg.sweep_values.is_empty() {
        return Err(CliError::Config("sweep needs sweep_param and sweep_values".into()));
    }
    let points: Vec<RunConfig> = cfg
        .sweep_values
        .iter()
        .map(|v| {
            let mut c = cfg.clone();
            c.set(&cfg.sweep_param, v)
                .map_err(|e| CliError::Config(format!("sweep value for {}: {e}", cfg.sweep_param)))?;
            Ok(c)
        })
        .collect::<CliResult<_>>()?;
    // Points run in parallel; collect keeps the input order.
    let reports: Vec<CliResult<Report>> = points.par_iter().map(simulate).collect();
    let mut table = Table::default();
    for (value, report) in cfg.sweep_values.iter().zip(reports) {
        let report = report?;
        if table.columns.is_empty() {
            table.columns = std::iter::once(cfg.sweep_param.clone()).chain(report.table.columns).collect();
        }
        for row in report.table.rows {
            table.rows.push(std::iter::once(Cell::Text(value.clone())).chain(row).collect());
        }
    }
    Ok(Report { table, state: None, invalid: Vec::new() })
}

fn inputs(cfg: &RunConfig, l_over_l0: f64) -> PerturbativeInputs {
    PerturbativeInputs {
        l_over_l0,
        p_gen: cfg.p_gen,
        p_con: cfg.p_con,
        c1: cfg.c1,
        c2_mag: cfg.c2,
        c3: cfg.c3,
        n_dc: 0.0,
        r: cfg.r,
        detector: cfg.detector,
    }
}

pub fn compare(cfg: &RunConfig) -> CliResult<Report> {
    let p = cfg.params()?;
    let chain = run_chain(&p)?;
    let meas = BellMeasurement::for_params(&p)?;
    let mut columns = vec![
        "n", "L_over_L0", "S_numeric", "S_analytic", "deficit_numeric", "deficit_analytic", "abs_error", "rel_error",
        "valid",
    ];
    let cross = if cfg.cross_term {
        columns.extend(["cross_term", "cross_ratio"]);
        Some(analytic::cross_term_dominance(cfg.n_dc_gen, cfg.r)?)
    } else {
        None
    };
    let mut table = Table::new(&columns);
    let mut invalid = Vec::new();
    // The analytic side sees the reduced coefficients of whatever memory model is configured.
    let x = PerturbativeInputs {
        c1: p.memory.c1,
        c2_mag: p.memory.c2.norm(),
        c3: p.memory.c3,
        ..inputs(cfg, 1.0)
    };
    for (k, rho) in chain.states.iter().enumerate() {
        let l = level_distance(k);
        let s = meas.evaluate(rho, &FIXED_ANGLES)?.s;
        let a = analytic::s_combined(&PerturbativeInputs { l_over_l0: l, ..x }, cfg.n_dc_gen, cfg.n_dc_con);
        let dn = 1.0 - s / S_MAX;
        let abs = dn - a.deficit;
        // Undefined against a vanishing prediction.
        let rel = if a.deficit == 0.0 { f64::NAN } else { abs / a.deficit };
        if !a.valid {
            invalid.push(format!("n = {k}: perturbative expansion outside its regime"));
        }
        let mut row: Vec<Cell> = vec![
            Cell::Int(k as i64),
            l.into(),
            s.into(),
            a.s.into(),
            dn.into(),
            a.deficit.into(),
            abs.into(),
            rel.into(),
            Cell::Int(a.valid as i64),
        ];
        if let Some((flag, ratio)) = cross {
            row.push(match flag {
                CrossTerm::Negligible => "negligible".into(),
                CrossTerm::Dominant => "dominant".into(),
            });
            row.push(ratio.into());
        }
        table.push(row);
    }
    Ok(Report { table, state: Some(chain.final_state().clone()), invalid })
}

pub const FORMULAS: &[&str] = &[
    "memory-noise",
    "squeezing",
    "gen-darkcount",
    "combined",
    "ideal-exact",
    "ideal-leading",
    "threshold-squeezing",
    "threshold-darkcount",
    "threshold-reflection",
    "threshold-one-pass",
    "rate-closed-form",
    "squeezing-for-deficit",
    "eta",
    "dilog",
    "cross-term",
];

pub fn analytic(cfg: &RunConfig, formula: &str) -> CliResult<Report> {
    let l = cfg.distance();
    let x = inputs(cfg, l);
    let mut values: Vec<(&str, f64)> = Vec::new();
    let mut valid = true;
    let mut perturbative = |s: analytic::PerturbativeS, values: &mut Vec<(&str, f64)>| {
        values.extend([("S", s.s), ("deficit", s.deficit), ("valid", s.valid as i64 as f64)]);
        valid &= s.valid;
    };
    let thresholds = ThresholdParams {
        p_gen: cfg.p_gen,
        p_con: cfg.p_con,
        r: cfg.r,
        n_dc: cfg.n_dc_gen,
        xi: cfg.xi,
        l_over_l0: l,
        detector: cfg.detector,
    };
    let threshold = |kind| analytic::max_distance(kind, &thresholds);
    match formula {
        "memory-noise" => perturbative(analytic::s_memory_darkcount(&PerturbativeInputs { n_dc: cfg.n_dc_con, ..x }), &mut values),
        "squeezing" => perturbative(analytic::s_finite_squeezing(&x), &mut values),
        "gen-darkcount" => perturbative(analytic::s_generation_darkcount(&PerturbativeInputs { n_dc: cfg.n_dc_gen, ..x }), &mut values),
        "combined" => perturbative(analytic::s_combined(&x, cfg.n_dc_gen, cfg.n_dc_con), &mut values),
        "ideal-exact" => {
            let (f, g) = analytic::f_g_solution(cfg.n);
            let s = analytic::s_exact_c1(f, g, cfg.c1)?;
            values.extend([("f", f), ("g", g), ("S", s), ("deficit", 1.0 - s / S_MAX)]);
        }
        "ideal-leading" => {
            let s = analytic::s_ideal_recurrence(l, cfg.c1);
            values.extend([("S", s), ("deficit", 1.0 - s / S_MAX)]);
        }
        "threshold-squeezing" | "threshold-darkcount" | "threshold-reflection" | "threshold-one-pass" => {
            let kind = match formula {
                "threshold-squeezing" => ThresholdKind::Squeezing,
                "threshold-darkcount" => ThresholdKind::GenDarkcount,
                "threshold-reflection" => ThresholdKind::TwoPassXi,
                _ => ThresholdKind::OnePassS,
            };
            let t = threshold(kind);
            if kind == ThresholdKind::OnePassS {
                values.extend([("s", t.value), ("s_db", analytic::to_db(t.value))]);
            } else {
                values.push(("L_over_L0_max", t.value));
            }
            values.push(("degenerate", t.degenerate as i64 as f64));
            valid &= !t.degenerate;
        }
        "rate-closed-form" => {
            let rt = analytic::rate_closed_form(cfg.r, cfg.p_gen, cfg.p_con, l, cfg.detector)?;
            values.extend([("R_tau", rt), ("rate", rt / cfg.tau)]);
        }
        "squeezing-for-deficit" => {
            let r = analytic::squeezing_for_deficit(cfg.fixed_deficit, cfg.p_gen, cfg.p_con, l, cfg.detector);
            valid &= r.is_finite();
            values.push(("r", r));
        }
        "eta" => {
            let eta = analytic::eta_solution(cfg.n, cfg.p_con);
            values.extend([
                ("eta", eta),
                ("connection_success", analytic::connection_success(eta, cfg.p_con)),
                ("eta_product", analytic::eta_product(cfg.n, cfg.p_con)),
                ("eta_product_estimate", analytic::eta_product_estimate(cfg.n, cfg.p_con)?),
            ]);
        }
        "dilog" => values.push(("Li2", analytic::dilog(cfg.x)?)),
        "cross-term" => {
            let (flag, ratio) = analytic::cross_term_dominance(cfg.n_dc_gen, cfg.r)?;
            values.extend([("ratio", ratio), ("dominant", (flag == CrossTerm::Dominant) as i64 as f64)]);
        }
        _ => {
            return Err(CliError::Config(format!("unknown formula '{formula}'; known: {}", FORMULAS.join(", "))));
        }
    }
    let mut table = Table::new(&["formula", "L_over_L0", "quantity", "value"]);
    for (q, v) in values {
        table.push(vec![formula.into(), l.into(), q.into(), v.into()]);
    }
    let invalid = if valid { Vec::new() } else { vec![format!("{formula}: validity flag down")] };
    Ok(Report { table, state: None, invalid })
}

/// One rate-table level: squeezing, q list, q_ps and state, or the reason
/// the level could not be simulated.
struct Level {
    r: f64,
    sim: Result<(Vec<f64>, f64, FockDensityMatrix), String>,
}

/// Every level of the chain. In fixed-S mode each level gets its own
/// squeezing, and a numerical failure only loses that level.
fn rate_levels(cfg: &RunConfig) -> CliResult<Vec<Level>> {
    let p = cfg.params()?;
    let level = |p: &RepeaterParams, k: usize| -> CliResult<(Vec<f64>, f64, FockDensityMatrix)> {
        let chain = run_chain(p)?;
        let meas = BellMeasurement::for_params(p)?;
        let q_ps = meas.evaluate(&chain.states[k], &FIXED_ANGLES)?.q_ps;
        Ok((chain.q[..=k].to_vec(), q_ps, chain.states[k].clone()))
    };
    if cfg.fixed_deficit > 0.0 {
        (0..=cfg.n as usize)
            .into_par_iter()
            .map(|k| {
                let l = level_distance(k);
                let r = analytic::squeezing_for_deficit(cfg.fixed_deficit, cfg.p_gen, cfg.p_con, l, cfg.detector);
                if !r.is_finite() {
                    return Err(CliError::Config("fixed-S mode needs a squeezing-limited deficit (p_con > 0 for counting)".into()));
                }
                let pk = RepeaterParams { r, n: k as u32, ..p.clone() };
                match level(&pk, k) {
                    Ok(sim) => Ok(Level { r, sim: Ok(sim) }),
                    Err(CliError::Numerical(m)) => Ok(Level { r, sim: Err(format!("n = {k}, r = {r:.3e}: {m}")) }),
                    Err(e) => Err(e),
                }
            })
            .collect()
    } else {
        let chain = run_chain(&p)?;
        let meas = BellMeasurement::for_params(&p)?;
        chain
            .states
            .iter()
            .enumerate()
            .map(|(k, rho)| {
                let q_ps = meas.evaluate(rho, &FIXED_ANGLES)?.q_ps;
                Ok(Level { r: p.r, sim: Ok((chain.q[..=k].to_vec(), q_ps, rho.clone())) })
            })
            .collect()
    }
}

fn monte_carlo(q: &[f64], q_ps: f64, cfg: &RunConfig) -> CliResult<(f64, f64)> {
    if q_ps <= 0.0 || q.iter().any(|&x| x <= 0.0) {
        return Ok((f64::INFINITY, 0.0));
    }
    let mc = rate_monte_carlo(q, q_ps, cfg.tau, cfg.trials, cfg.seed)?;
    Ok((mc.mean, mc.stderr))
}

pub fn rate_table(cfg: &RunConfig) -> CliResult<Report> {
    let levels = rate_levels(cfg)?;
    let fixed = cfg.fixed_deficit > 0.0;
    let mut columns = vec!["n", "L_over_L0"];
    if fixed {
        columns.push("r");
    }
    columns.extend(["exact", "simplified", "closed_form", "monte_carlo", "monte_carlo_stderr"]);
    if fixed {
        columns.push("reference_slope");
    }
    let mut table = Table::new(&columns);
    let mut invalid = Vec::new();
    let slope = -2.0 - 3f64.log2();
    let mut first_closed = None;
    for (k, level) in levels.iter().enumerate() {
        let l = level_distance(k);
        let closed = analytic::rate_closed_form(level.r, cfg.p_gen, cfg.p_con, l, cfg.detector)? / cfg.tau;
        let numeric = match &level.sim {
            Ok((q, q_ps, _)) => {
                let (exact, simplified) = if *q_ps > 0.0 && q.iter().all(|&x| x > 0.0) {
                    let e = rate(q, *q_ps, cfg.tau)?;
                    (e.exact, e.simplified)
                } else {
                    (0.0, 0.0)
                };
                let (mean, stderr) = monte_carlo(q, *q_ps, cfg)?;
                [exact, simplified, 1.0 / mean, stderr / (mean * mean)]
            }
            Err(m) => {
                invalid.push(m.clone());
                [f64::NAN; 4]
            }
        };
        let [exact, simplified, mc, mc_err] = numeric;
        let mut row: Vec<Cell> = vec![Cell::Int(k as i64), l.into()];
        if fixed {
            row.push(level.r.into());
        }
        row.extend([exact.into(), simplified.into(), closed.into(), mc.into(), mc_err.into()]);
        if fixed {
            let c0 = *first_closed.get_or_insert(closed);
            row.push((c0 * l.powf(slope)).into());
        }
        table.push(row);
    }
    let state = levels.last().and_then(|l| l.sim.as_ref().ok()).map(|s| s.2.clone());
    Ok(Report { table, state, invalid })
}

pub fn rate_mc(cfg: &RunConfig) -> CliResult<Report> {
    let levels = rate_levels(cfg)?;
    let mut table = Table::new(&["n", "L_over_L0", "mean_time", "mean_time_stderr", "rate", "rate_stderr", "exact"]);
    for (k, level) in levels.iter().enumerate() {
        let (q, q_ps, _) = level.sim.as_ref().map_err(|m| CliError::Numerical(m.clone()))?;
        let (mean, stderr) = monte_carlo(q, *q_ps, cfg)?;
        table.push(vec![
            Cell::Int(k as i64),
            level_distance(k).into(),
            mean.into(),
            stderr.into(),
            (1.0 / mean).into(),
            (stderr / (mean * mean)).into(),
            exact_rate(q, *q_ps, cfg.tau)?.into(),
        ]);
    }
    Ok(Report { table, state: None, invalid: Vec::new() })
}
