//! Runs configured experiments and renders their CSV tables.
//!
//! Every table is computed in memory first; files are written only after all
//! computation has succeeded.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::blocking::{block_models, build_plan, choose_pn, diagnostics, BlockDiagnostics, BlockingPlan};
use crate::conditions::{
    self, condition_report, log_slope, truncated_profile, truncated_variance_ratio, variance_ratio, ConditionGrid,
};
use crate::config::{ExperimentConfig, Mode};
use crate::engine::{ClampedSum, Engine};
use crate::error::{Error, Result};
use crate::functional::Functional;
use crate::gnormal::{gnormal_reference, peng_oracle, solve_gheat, GParams};
use crate::mdep::{rosenthal_battery, rosenthal_check, run_battery, three_part_split, z_reduce, RosenthalReport};
use crate::model::{ModelKind, SequenceModel};

/// `%.12g`-style rendering: 12 significant digits, trailing zeros removed.
pub fn fmt_g(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{:.11e}", x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-5..12).contains(&exp) {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (11 - exp).max(0) as usize;
        trim_zeros(&format!("{:.*}", decimals, x)).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_g).unwrap_or_default()
}

/// A rendered CSV file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsvFile {
    pub name: String,
    pub content: String,
}

fn csv_file(name: &str, header: &[&str], rows: Vec<Vec<String>>) -> Result<CsvFile> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(CsvFile {
        name: name.into(),
        content: String::from_utf8(bytes).expect("csv output is utf-8"),
    })
}

/// Command-line overrides applied on top of a config.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub grid_nx: Option<usize>,
    pub grid_half_width: Option<f64>,
    pub state_cap: Option<usize>,
    pub tol: Option<f64>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut ExperimentConfig) -> Result<()> {
        if let Some(nx) = self.grid_nx {
            cfg.gnormal.nx = Some(nx);
        }
        if let Some(l) = self.grid_half_width {
            cfg.gnormal.half_width = Some(l);
        }
        if let Some(c) = self.state_cap {
            cfg.engine.state_cap = c;
        }
        if let Some(t) = self.tol {
            cfg.blocking.tol = t;
        }
        cfg.validate()
    }
}

pub fn run(cfg: &ExperimentConfig, mode: Mode) -> Result<Vec<CsvFile>> {
    cfg.check_mode(mode)?;
    let engine = Engine::with_cap(cfg.engine.state_cap);
    match mode {
        Mode::Eval => Ok(vec![eval_table(&engine, cfg)?]),
        Mode::CltSweep => Ok(vec![sweep_table(&clt_sweep(&engine, cfg)?)?]),
        Mode::GnormalEval => gnormal_tables(&engine, cfg),
        Mode::Rosenthal => rosenthal_tables(&engine, cfg),
        Mode::BlockingInspect => blocking_tables(&engine, cfg),
        Mode::Conditions => conditions_tables(&engine, cfg),
    }
}

pub fn write_outputs(dir: &Path, files: &[CsvFile]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for f in files {
        std::fs::write(dir.join(&f.name), &f.content)?;
    }
    Ok(())
}

fn eval_table(engine: &Engine, cfg: &ExperimentConfig) -> Result<CsvFile> {
    let fs = cfg.eval_functionals()?;
    let cells: Vec<(usize, usize)> = cfg
        .n_list
        .iter()
        .flat_map(|&n| (0..fs.len()).map(move |i| (n, i)))
        .collect();
    let rows = cells
        .par_iter()
        .map(|&(n, i)| {
            let r = engine.eval_sum(&cfg.model(n)?, &fs[i])?;
            Ok(vec![
                n.to_string(),
                fs[i].name().to_string(),
                fmt_g(r.upper),
                fmt_g(r.lower),
                r.state_count.to_string(),
            ])
        })
        .collect::<Result<Vec<_>>>()?;
    csv_file("eval.csv", &["n", "phi", "upper", "lower", "states"], rows)
}

/// One `(n, phi)` cell of a CLT sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub n: usize,
    pub phi: String,
    pub b_n: f64,
    pub b_n_lower: f64,
    pub r: f64,
    /// `E[phi(S_n / B_n)]`
    pub upper: f64,
    pub lower: f64,
    pub gnormal_ref: f64,
    pub abs_err_upper: f64,
    pub gnormal_ref_lower: f64,
    pub abs_err_lower: f64,
    pub lindeberg: f64,
    pub mean_unc: f64,
    pub mean_unc_flag: bool,
    pub m2_ratio: f64,
    pub var_ratio: Option<f64>,
    pub cap_tail: f64,
    pub tau: Option<f64>,
    pub states: usize,
}

struct SweepSummary {
    b_n: f64,
    b_n_lower: f64,
    lindeberg: f64,
    mean_unc: f64,
    m2_ratio: f64,
    var_ratio: Option<f64>,
    cap_tail: f64,
}

fn sweep_summary(engine: &Engine, cfg: &ExperimentConfig, model: &SequenceModel) -> Result<SweepSummary> {
    let n = model.n();
    let eps = cfg.sweep.eps;
    let cap_tail = conditions::capacity_tail(engine, model, eps)?;
    match cfg.sweep.tau {
        None => {
            let grid = ConditionGrid {
                eps: vec![eps],
                m_grid: Some(vec![n]),
                p: vec![],
                tau: None,
            };
            let rep = condition_report(engine, model, &grid)?;
            let lower = engine.b_n(model)?.lower;
            Ok(SweepSummary {
                b_n: rep.b_n,
                b_n_lower: lower,
                lindeberg: rep.lindeberg[0].1,
                mean_unc: rep.mean_unc,
                m2_ratio: rep.m2_ratio,
                var_ratio: rep.var_ratio[0].1,
                cap_tail,
            })
        }
        Some(tau) => {
            let t = truncated_profile(engine, model, tau, &[eps], &[n])?;
            let all: Vec<usize> = (1..=n).collect();
            let sq = ClampedSum::new(n, &all, tau, |s| s * s)?;
            let lower = engine.eval_stat(model, &sq)?.lower.max(0.0).sqrt();
            Ok(SweepSummary {
                b_n: t.b_n,
                b_n_lower: lower,
                lindeberg: t.lindeberg[0].1,
                mean_unc: t.mean_unc,
                m2_ratio: t.m2_ratio,
                var_ratio: t.var_ratio[0].1,
                cap_tail,
            })
        }
    }
}

/// `r` used for the G-normal reference: the configured `sigma_lo2`, or the
/// variance ratio of the full prefix at the largest `n`.
pub fn sweep_r(engine: &Engine, cfg: &ExperimentConfig) -> Result<f64> {
    if let Some(lo) = cfg.gnormal.sigma_lo2 {
        return Ok(lo);
    }
    let n = *cfg
        .n_list
        .last()
        .ok_or_else(|| Error::Config("n_list is empty".into()))?;
    let model = cfg.model(n)?;
    let r = match cfg.sweep.tau {
        None => variance_ratio(engine, &model, n)?,
        Some(tau) => truncated_variance_ratio(engine, &model, n, tau)?,
    };
    r.ok_or_else(|| Error::NonFinite("variance ratio undefined: zero second moment".into()))
}

pub fn clt_sweep(engine: &Engine, cfg: &ExperimentConfig) -> Result<Vec<SweepRow>> {
    let fs = cfg.sweep_functionals()?;
    let r = sweep_r(engine, cfg)?;
    let params = GParams::new(r, cfg.gnormal.sigma_hi2.unwrap_or(1.0))?;
    let grid = cfg.grid(&params);
    let t = cfg.gnormal.t;
    let refs: Vec<(f64, f64)> = fs
        .par_iter()
        .map(|f| {
            let up = solve_gheat(f, &params, &grid, t)?;
            let lo = -solve_gheat(&f.negated(), &params, &grid, t)?;
            Ok((up, lo))
        })
        .collect::<Result<_>>()?;

    let per_n: Vec<Vec<SweepRow>> = cfg
        .n_list
        .par_iter()
        .map(|&n| {
            let model = cfg.model(n)?;
            let s = sweep_summary(engine, cfg, &model)?;
            if !(s.b_n > 0.0) {
                return Err(Error::NonFinite(format!("B_n = 0 at n = {n}")));
            }
            let normalized = model.rescaled(model.scale() / s.b_n)?;
            fs.par_iter()
                .zip(refs.par_iter())
                .map(|(f, &(gref, gref_lo))| {
                    let e = match cfg.sweep.tau {
                        None => engine.eval_sum(&normalized, f)?,
                        Some(tau) => {
                            let all: Vec<usize> = (1..=n).collect();
                            let b = s.b_n;
                            let stat = ClampedSum::new(n, &all, tau, |x| f.eval(x / b))?;
                            engine.eval_stat(&model, &stat)?
                        }
                    };
                    Ok(SweepRow {
                        n,
                        phi: f.name().to_string(),
                        b_n: s.b_n,
                        b_n_lower: s.b_n_lower,
                        r,
                        upper: e.upper,
                        lower: e.lower,
                        gnormal_ref: gref,
                        abs_err_upper: (e.upper - gref).abs(),
                        gnormal_ref_lower: gref_lo,
                        abs_err_lower: (e.lower - gref_lo).abs(),
                        lindeberg: s.lindeberg,
                        mean_unc: s.mean_unc,
                        mean_unc_flag: s.mean_unc > cfg.conditions.mean_unc_threshold,
                        m2_ratio: s.m2_ratio,
                        var_ratio: s.var_ratio,
                        cap_tail: s.cap_tail,
                        tau: cfg.sweep.tau,
                        states: e.state_count,
                    })
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok(per_n.into_iter().flatten().collect())
}

pub const SWEEP_HEADER: [&str; 19] = [
    "n",
    "phi",
    "B_n",
    "b_n",
    "r",
    "upper",
    "lower",
    "gnormal_ref",
    "abs_err_upper",
    "gnormal_ref_lower",
    "abs_err_lower",
    "lindeberg",
    "mean_unc",
    "mean_unc_flag",
    "m2_ratio",
    "var_ratio",
    "cap_tail",
    "tau",
    "states",
];

pub fn sweep_table(rows: &[SweepRow]) -> Result<CsvFile> {
    let rows = rows
        .iter()
        .map(|r| {
            vec![
                r.n.to_string(),
                r.phi.clone(),
                fmt_g(r.b_n),
                fmt_g(r.b_n_lower),
                fmt_g(r.r),
                fmt_g(r.upper),
                fmt_g(r.lower),
                fmt_g(r.gnormal_ref),
                fmt_g(r.abs_err_upper),
                fmt_g(r.gnormal_ref_lower),
                fmt_g(r.abs_err_lower),
                fmt_g(r.lindeberg),
                fmt_g(r.mean_unc),
                u8::from(r.mean_unc_flag).to_string(),
                fmt_g(r.m2_ratio),
                fmt_opt(r.var_ratio),
                fmt_g(r.cap_tail),
                fmt_opt(r.tau),
                r.states.to_string(),
            ]
        })
        .collect();
    csv_file("clt_sweep.csv", &SWEEP_HEADER, rows)
}

/// One grid level of a G-heat evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct GnormalRow {
    pub phi: String,
    pub level: usize,
    pub nx: usize,
    pub dx: f64,
    pub dt: f64,
    pub gnormal_ref: f64,
    pub gnormal_ref_lower: f64,
    /// Change from the previous level.
    pub increment: Option<f64>,
    /// Gaussian quadrature value when `phi` is convex or concave.
    pub quadrature_ref: Option<f64>,
}

pub fn gnormal_eval(cfg: &ExperimentConfig) -> Result<Vec<GnormalRow>> {
    let params = gnormal_params(cfg)?;
    let fs = cfg.eval_functionals()?;
    let per_f: Vec<Vec<GnormalRow>> = fs
        .par_iter()
        .map(|f| {
            let quad = if cfg.gnormal.t == 1.0 {
                gnormal_reference(f, &params).ok()
            } else {
                None
            };
            let mut grid = cfg.grid(&params);
            let mut rows: Vec<GnormalRow> = Vec::new();
            for level in 0..=cfg.gnormal.refinements {
                let up = solve_gheat(f, &params, &grid, cfg.gnormal.t)?;
                let lo = -solve_gheat(&f.negated(), &params, &grid, cfg.gnormal.t)?;
                rows.push(GnormalRow {
                    phi: f.name().to_string(),
                    level,
                    nx: grid.nx,
                    dx: grid.dx(),
                    dt: grid.dt,
                    gnormal_ref: up,
                    gnormal_ref_lower: lo,
                    increment: rows.last().map(|p| (up - p.gnormal_ref).abs()),
                    quadrature_ref: quad,
                });
                grid = grid.refined();
            }
            Ok(rows)
        })
        .collect::<Result<_>>()?;
    Ok(per_f.into_iter().flatten().collect())
}

fn gnormal_params(cfg: &ExperimentConfig) -> Result<GParams> {
    match (cfg.gnormal.sigma_lo2, cfg.gnormal.sigma_hi2) {
        (Some(lo), Some(hi)) => GParams::new(lo, hi),
        _ => Err(Error::Config("gnormal.sigma_lo2 and gnormal.sigma_hi2 are required".into())),
    }
}

fn gnormal_tables(engine: &Engine, cfg: &ExperimentConfig) -> Result<Vec<CsvFile>> {
    let rows = gnormal_eval(cfg)?;
    let mut files = vec![csv_file(
        "gnormal.csv",
        &[
            "phi",
            "level",
            "nx",
            "dx",
            "dt",
            "gnormal_ref",
            "gnormal_ref_lower",
            "increment",
            "quadrature_ref",
        ],
        rows.iter()
            .map(|r| {
                vec![
                    r.phi.clone(),
                    r.level.to_string(),
                    r.nx.to_string(),
                    fmt_g(r.dx),
                    fmt_g(r.dt),
                    fmt_g(r.gnormal_ref),
                    fmt_g(r.gnormal_ref_lower),
                    fmt_opt(r.increment),
                    fmt_opt(r.quadrature_ref),
                ]
            })
            .collect(),
    )?];
    if !cfg.n_list.is_empty() && cfg.gnormal.t == 1.0 {
        let params = gnormal_params(cfg)?;
        let base: Vec<&GnormalRow> = rows.iter().filter(|r| r.level == 0).collect();
        let fs = cfg.eval_functionals()?;
        let cells: Vec<(usize, usize)> = (0..fs.len())
            .flat_map(|i| cfg.n_list.iter().map(move |&n| (i, n)))
            .collect();
        let peng = cells
            .par_iter()
            .map(|&(i, n)| {
                let v = peng_oracle(engine, &fs[i], &params, n)?;
                let pde = base[i].gnormal_ref;
                Ok(vec![
                    fs[i].name().to_string(),
                    n.to_string(),
                    fmt_g(v),
                    fmt_g(pde),
                    fmt_g((v - pde).abs()),
                ])
            })
            .collect::<Result<Vec<_>>>()?;
        files.push(csv_file("peng.csv", &["phi", "n", "peng", "gnormal_ref", "abs_err"], peng)?);
    }
    Ok(files)
}

/// Whether every index is independent with certain zero mean.
fn zero_mean_independent(engine: &Engine, model: &SequenceModel) -> Result<bool> {
    if *model.kind() != ModelKind::Independent {
        return Ok(false);
    }
    for k in 1..=model.n() {
        let m = engine.marginal(model, k, &Functional::identity())?;
        if m.upper != 0.0 || m.lower != 0.0 {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Rosenthal rows `(id, m, zero-mean flag, report)`.
pub fn rosenthal_rows(engine: &Engine, cfg: &ExperimentConfig) -> Result<Vec<(usize, usize, bool, RosenthalReport)>> {
    if cfg.rosenthal.battery_count > 0 {
        let battery = rosenthal_battery(cfg.rosenthal.seed, cfg.rosenthal.battery_count);
        let reports = run_battery(engine, &battery)?;
        return Ok(battery
            .iter()
            .zip(reports)
            .map(|(b, r)| (b.id, b.m, b.zero_mean_independent, r))
            .collect());
    }
    let cells: Vec<(usize, f64)> = cfg
        .n_list
        .iter()
        .flat_map(|&n| cfg.rosenthal.p.iter().map(move |&p| (n, p)))
        .collect();
    cells
        .par_iter()
        .enumerate()
        .map(|(id, &(n, p))| {
            let model = cfg.model(n)?;
            let m = model.window_m().unwrap_or_else(|| model.dependence_width());
            let zero = zero_mean_independent(engine, &model)?;
            Ok((id, m, zero, rosenthal_check(engine, &model, p)?))
        })
        .collect()
}

fn rosenthal_tables(engine: &Engine, cfg: &ExperimentConfig) -> Result<Vec<CsvFile>> {
    let rows = rosenthal_rows(engine, cfg)?;
    let c_max = rows.iter().map(|r| r.3.fitted_c).fold(0.0, f64::max);
    let doob = rows
        .iter()
        .filter(|r| r.2 && r.3.p == 2.0 && r.3.term_variance > 0.0)
        .map(|r| r.3.lhs / r.3.term_variance)
        .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.max(v))));
    let detail = csv_file(
        "rosenthal.csv",
        &[
            "id",
            "m",
            "p",
            "n",
            "zero_mean_independent",
            "lhs",
            "term_moments",
            "term_variance",
            "term_means",
            "fitted_c",
            "states",
        ],
        rows.iter()
            .map(|(id, m, zero, r)| {
                vec![
                    id.to_string(),
                    m.to_string(),
                    fmt_g(r.p),
                    r.n.to_string(),
                    u8::from(*zero).to_string(),
                    fmt_g(r.lhs),
                    fmt_g(r.term_moments),
                    fmt_g(r.term_variance),
                    fmt_g(r.term_means),
                    fmt_g(r.fitted_c),
                    r.state_count.to_string(),
                ]
            })
            .collect(),
    )?;
    let summary = csv_file(
        "rosenthal_summary.csv",
        &["instances", "c_max", "zero_mean_p2_max_ratio"],
        vec![vec![rows.len().to_string(), fmt_g(c_max), fmt_opt(doob)]],
    )?;
    Ok(vec![detail, summary])
}

/// Plan and diagnostics for one `n`, after reducing to a 1-dependent model.
#[derive(Debug, Clone)]
pub struct BlockingCase {
    pub n: usize,
    pub m: usize,
    pub plan: BlockingPlan,
    pub diag: BlockDiagnostics,
    pub invariant_error: Option<String>,
}

pub fn blocking_cases(engine: &Engine, cfg: &ExperimentConfig) -> Result<Vec<BlockingCase>> {
    cfg.n_list
        .par_iter()
        .map(|&n| {
            let model = cfg.model(n)?;
            let m = model.window_m().unwrap_or_else(|| model.dependence_width());
            let reduced = if m > 1 { z_reduce(&model, m)?.model } else { model };
            let p_n = match cfg.blocking.p_n {
                Some(p) => p,
                None => choose_pn(engine, &reduced, cfg.blocking.tol)?,
            };
            let plan = build_plan(engine, &reduced, p_n)?;
            block_models(&reduced, &plan)?;
            let diag = diagnostics(engine, &reduced, &plan)?;
            let invariant_error = blocking_invariants(&plan, &diag).err();
            Ok(BlockingCase {
                n,
                m,
                plan,
                diag,
                invariant_error,
            })
        })
        .collect()
}

/// Plan invariants plus the cut-sparsity and removed-mass bounds.
pub fn blocking_invariants(plan: &BlockingPlan, d: &BlockDiagnostics) -> std::result::Result<(), String> {
    plan.check()?;
    let bound = 2.0 / plan.p_n as f64 * d.sum_beta;
    if d.sum_beta_cuts > bound * (1.0 + 1e-12) + 1e-15 {
        return Err(format!("sum of cut betas {} exceeds {bound}", d.sum_beta_cuts));
    }
    if d.removed_mass > d.sum_beta_cuts * (1.0 + 1e-9) + 1e-15 {
        return Err(format!("removed mass {} exceeds {}", d.removed_mass, d.sum_beta_cuts));
    }
    let values = [
        d.sum_beta_cuts,
        d.sum_beta,
        d.sum_delta_lo,
        d.sum_delta_hi,
        d.btilde2_over_b2,
        d.removed_mass,
    ];
    if values.iter().any(|v| *v < 0.0) {
        return Err("negative diagnostic".into());
    }
    Ok(())
}

fn blocking_tables(engine: &Engine, cfg: &ExperimentConfig) -> Result<Vec<CsvFile>> {
    let cases = blocking_cases(engine, cfg)?;
    let mut plan_rows = Vec::new();
    for c in &cases {
        let mut role = vec![(String::new(), 0usize); c.plan.k_n + 1];
        for (i, b) in c.plan.blocks.iter().enumerate() {
            for &k in b {
                role[k] = ("block".into(), i + 1);
            }
        }
        for (i, &g) in c.plan.cuts().iter().enumerate() {
            role[g] = ("cut".into(), i + 1);
        }
        for k in 1..=c.plan.k_n {
            plan_rows.push(vec![
                c.n.to_string(),
                c.plan.p_n.to_string(),
                k.to_string(),
                fmt_g(c.plan.beta[k - 1]),
                role[k].0.clone(),
                role[k].1.to_string(),
            ]);
        }
    }
    let plan = csv_file("blocking_plan.csv", &["n", "p_n", "k", "beta", "role", "index"], plan_rows)?;
    let diag = csv_file(
        "blocking_diag.csv",
        &[
            "n",
            "m",
            "k_n",
            "p_n",
            "h",
            "sum_beta",
            "sum_beta_cuts",
            "cut_bound",
            "sum_delta_lo",
            "sum_delta_hi",
            "btilde2_over_b2",
            "btilde2_lower_over_b2",
            "removed_mass",
            "invariants_ok",
        ],
        cases
            .iter()
            .map(|c| {
                let d = &c.diag;
                vec![
                    c.n.to_string(),
                    c.m.to_string(),
                    c.plan.k_n.to_string(),
                    c.plan.p_n.to_string(),
                    c.plan.h.to_string(),
                    fmt_g(d.sum_beta),
                    fmt_g(d.sum_beta_cuts),
                    fmt_g(2.0 / c.plan.p_n as f64 * d.sum_beta),
                    fmt_g(d.sum_delta_lo),
                    fmt_g(d.sum_delta_hi),
                    fmt_g(d.btilde2_over_b2),
                    fmt_g(d.btilde2_lower_over_b2),
                    fmt_g(d.removed_mass),
                    u8::from(c.invariant_error.is_none()).to_string(),
                ]
            })
            .collect(),
    )?;
    Ok(vec![plan, diag])
}

/// One `(n, quantity, parameter)` value of a conditions run.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionRow {
    pub n: usize,
    pub quantity: String,
    pub param: String,
    pub value: Option<f64>,
}

fn m_labels(cfg: &ExperimentConfig, n: usize) -> Vec<(usize, String)> {
    match &cfg.conditions.m_grid {
        Some(g) => g.iter().filter(|&&m| m <= n).map(|&m| (m, m.to_string())).collect(),
        None => [(4, "n/4"), (2, "n/2"), (1, "n")]
            .into_iter()
            .filter(|(d, _)| n / d > 0)
            .map(|(d, l)| (n / d, l.to_string()))
            .collect(),
    }
}

pub fn condition_rows(engine: &Engine, cfg: &ExperimentConfig) -> Result<Vec<ConditionRow>> {
    let c = &cfg.conditions;
    let per_n: Vec<Vec<ConditionRow>> = cfg
        .n_list
        .par_iter()
        .map(|&n| {
            let model = cfg.model(n)?;
            let labels = m_labels(cfg, n);
            let grid = ConditionGrid {
                eps: c.eps.clone(),
                m_grid: Some(labels.iter().map(|l| l.0).collect()),
                p: c.p.clone(),
                tau: c.tau,
            };
            let rep = condition_report(engine, &model, &grid)?;
            let mut rows = Vec::new();
            let mut push = |q: &str, param: String, v: Option<f64>| {
                rows.push(ConditionRow {
                    n,
                    quantity: q.to_string(),
                    param,
                    value: v,
                })
            };
            push("B_n", String::new(), Some(rep.b_n));
            for (e, v) in &rep.lindeberg {
                push("lindeberg", fmt_g(*e), Some(*v));
            }
            push("mean_unc", String::new(), Some(rep.mean_unc));
            push(
                "mean_unc_flag",
                fmt_g(c.mean_unc_threshold),
                Some(f64::from(u8::from(rep.mean_unc > c.mean_unc_threshold))),
            );
            push("m2_ratio", String::new(), Some(rep.m2_ratio));
            for ((_, label), (_, v)) in labels.iter().zip(&rep.var_ratio) {
                push("var_ratio", label.clone(), *v);
            }
            for (p, v) in &rep.pth {
                push("pth", fmt_g(*p), Some(*v));
            }
            for (e, v) in &rep.capacity_tail {
                push("cap_tail", fmt_g(*e), Some(*v));
            }
            if let Some(t) = &rep.truncated {
                push("trunc_B_n", fmt_g(t.tau), Some(t.b_n));
                push("trunc_mean_unc", fmt_g(t.tau), Some(t.mean_unc));
                push("trunc_m2_ratio", fmt_g(t.tau), Some(t.m2_ratio));
                for ((_, label), (_, v)) in labels.iter().zip(&t.var_ratio) {
                    push("trunc_var_ratio", label.clone(), *v);
                }
                for (e, v) in &t.lindeberg {
                    push("trunc_lindeberg", fmt_g(*e), Some(*v));
                }
            }
            if let ModelKind::MovingWindow { weights } = model.kind() {
                let m = weights.len() - 1;
                let p_n = (n as f64).sqrt().floor() as usize;
                if p_n >= 1 && p_n + m <= n {
                    let s = three_part_split(engine, &model, p_n)?;
                    push("split_a1_over_n", "sqrt_n".into(), Some(s.upper_sq_over_n[0]));
                    push("split_a2_over_n", "sqrt_n".into(), Some(s.upper_sq_over_n[1]));
                    push("split_a3_over_n", "sqrt_n".into(), Some(s.upper_sq_over_n[2]));
                    push("b2_over_n", String::new(), Some(s.total_sq_over_n));
                }
            }
            Ok(rows)
        })
        .collect::<Result<_>>()?;
    Ok(per_n.into_iter().flatten().collect())
}

fn conditions_tables(engine: &Engine, cfg: &ExperimentConfig) -> Result<Vec<CsvFile>> {
    let rows = condition_rows(engine, cfg)?;
    let table = csv_file(
        "conditions.csv",
        &["n", "quantity", "param", "value"],
        rows.iter()
            .map(|r| vec![r.n.to_string(), r.quantity.clone(), r.param.clone(), fmt_opt(r.value)])
            .collect(),
    )?;
    let mut keys: Vec<(String, String)> = Vec::new();
    for r in &rows {
        let k = (r.quantity.clone(), r.param.clone());
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    let mut trend = Vec::new();
    for (q, p) in keys {
        let (ns, vs): (Vec<usize>, Vec<f64>) = rows
            .iter()
            .filter(|r| r.quantity == q && r.param == p)
            .filter_map(|r| r.value.map(|v| (r.n, v)))
            .unzip();
        trend.push(vec![q, p, ns.len().to_string(), fmt_opt(log_slope(&ns, &vs))]);
    }
    let trend = csv_file("conditions_trend.csv", &["quantity", "param", "points", "log_slope"], trend)?;
    Ok(vec![table, trend])
}

/// Human-readable summary of a set of files, for terminal output.
pub fn describe(files: &[CsvFile]) -> String {
    let mut s = String::new();
    for f in files {
        let lines = f.content.lines().count().saturating_sub(1);
        let _ = writeln!(s, "{}: {lines} rows", f.name);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::reference_experiment;

    #[test]
    fn number_format() {
        assert_eq!(fmt_g(0.0), "0");
        assert_eq!(fmt_g(1.0), "1");
        assert_eq!(fmt_g(-2.5), "-2.5");
        assert_eq!(fmt_g(1.0 / 3.0), "0.333333333333");
        assert_eq!(fmt_g(123456.789), "123456.789");
        assert_eq!(fmt_g(1e-7), "1e-07");
        assert_eq!(fmt_g(2.0f64.sqrt() * 1e15), "1.41421356237e+15");
        assert_eq!(fmt_g(0.0001234), "0.0001234");
        assert_eq!(fmt_g(99999999999.9), "99999999999.9");
        assert_eq!(fmt_g(999999999999.9), "1e+12");
        assert_eq!(fmt_g(f64::NAN), "nan");
    }

    #[test]
    fn sweep_rows_are_consistent() {
        let mut cfg = reference_experiment("stationary-1dep").unwrap();
        cfg.n_list = vec![4, 8];
        let e = Engine::default();
        let rows = clt_sweep(&e, &cfg).unwrap();
        assert_eq!(rows.len(), 4);
        for r in &rows {
            assert_eq!(r.abs_err_upper, (r.upper - r.gnormal_ref).abs());
            assert!(r.lower <= r.upper);
            assert!(r.b_n_lower <= r.b_n);
            assert!((r.r - 0.49).abs() < 1e-12);
        }
        let a = sweep_table(&rows).unwrap();
        let b = sweep_table(&clt_sweep(&e, &cfg).unwrap()).unwrap();
        assert_eq!(a, b);
        assert!(a.content.starts_with("n,phi,B_n,b_n,r,upper,lower,gnormal_ref,abs_err_upper"));
    }

    #[test]
    fn every_mode_runs() {
        let mut cfg = reference_experiment("stationary-1dep").unwrap();
        cfg.mode = None;
        cfg.n_list = vec![4, 9];
        cfg.gnormal.sigma_lo2 = Some(0.5);
        cfg.gnormal.sigma_hi2 = Some(1.0);
        cfg.gnormal.nx = Some(161);
        cfg.gnormal.refinements = 1;
        for mode in [
            Mode::Eval,
            Mode::CltSweep,
            Mode::GnormalEval,
            Mode::Rosenthal,
            Mode::BlockingInspect,
            Mode::Conditions,
        ] {
            let files = run(&cfg, mode).unwrap();
            assert!(!files.is_empty());
            for f in &files {
                assert!(f.content.lines().count() >= 2, "{} is empty", f.name);
            }
        }
    }

    #[test]
    fn state_cap_is_a_computation_error() {
        let mut cfg = reference_experiment("stationary-1dep").unwrap();
        cfg.engine.state_cap = 10;
        let e = run(&cfg, Mode::CltSweep).unwrap_err();
        assert_eq!(e.exit_code(), 2);
    }
}
