//! Finite-n diagnostics for the CLT hypotheses: Lindeberg sums, mean
//! uncertainty, second-moment and variance ratios, p-th moment sums, capacity
//! tails, and the same quantities for truncated coordinates.

use rayon::prelude::*;

use crate::engine::{ClampedSum, Engine, EvalResult, GroupSums};
use crate::error::{Error, Result};
use crate::functional::Functional;
use crate::model::SequenceModel;

pub const DEFAULT_EPS: [f64; 4] = [0.05, 0.1, 0.25, 0.5];

/// `{floor(n/4), floor(n/2), n}` without zeros or repeats.
pub fn default_m_grid(n: usize) -> Vec<usize> {
    let mut grid: Vec<usize> = [n / 4, n / 2, n].into_iter().filter(|&m| m > 0).collect();
    grid.dedup();
    grid
}

fn per_index<F>(engine: &Engine, model: &SequenceModel, h: F) -> Result<Vec<EvalResult>>
where
    F: Fn(f64) -> f64 + Sync,
{
    (1..=model.n())
        .into_par_iter()
        .map(|k| {
            let stat = GroupSums::new(model.n(), &[vec![k]], |v: &[f64]| h(v[0]))?;
            engine.eval_stat(model, &stat)
        })
        .collect()
}

/// `num / den` with `0 / 0 = 0`; a positive sum over a vanishing norming is
/// `+inf`.
fn normalized(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else if num > 0.0 {
        f64::INFINITY
    } else {
        0.0
    }
}

fn b_sq(engine: &Engine, model: &SequenceModel) -> Result<f64> {
    Ok(engine.b_n(model)?.upper_sq())
}

/// `B_n^{-2} sum_k E[(X_k^2 - eps B_n^2)^+]`
pub fn lindeberg(engine: &Engine, model: &SequenceModel, eps: f64) -> Result<f64> {
    let b2 = b_sq(engine, model)?;
    lindeberg_with(engine, model, eps, b2)
}

fn lindeberg_with(engine: &Engine, model: &SequenceModel, eps: f64, b2: f64) -> Result<f64> {
    let level = eps * b2;
    let terms = per_index(engine, model, |x| (x * x - level).max(0.0))?;
    Ok(normalized(terms.iter().map(|r| r.upper).sum::<f64>(), b2))
}

/// `B_n^{-1} sum_k (|E[X_k]| + |e[X_k]|)`
pub fn mean_uncertainty(engine: &Engine, model: &SequenceModel) -> Result<f64> {
    let b = b_sq(engine, model)?.sqrt();
    mean_uncertainty_with(engine, model, b)
}

fn mean_uncertainty_with(engine: &Engine, model: &SequenceModel, b: f64) -> Result<f64> {
    let means = per_index(engine, model, |x| x)?;
    Ok(normalized(means.iter().map(|r| r.upper.abs() + r.lower.abs()).sum::<f64>(), b))
}

/// `B_n^{-2} sum_k E[X_k^2]`
pub fn m2_ratio(engine: &Engine, model: &SequenceModel) -> Result<f64> {
    let b2 = b_sq(engine, model)?;
    let sq = per_index(engine, model, |x| x * x)?;
    Ok(normalized(sq.iter().map(|r| r.upper).sum::<f64>(), b2))
}

/// `e[(sum_{k<=M} X_k)^2] / E[(sum_{k<=M} X_k)^2]`, undefined when the
/// denominator vanishes.
pub fn variance_ratio(engine: &Engine, model: &SequenceModel, m: usize) -> Result<Option<f64>> {
    prefix_ratio(engine, model, m, None)
}

/// [`variance_ratio`] for the truncated coordinates `(-tau) v X_k ^ tau`.
pub fn truncated_variance_ratio(engine: &Engine, model: &SequenceModel, m: usize, tau: f64) -> Result<Option<f64>> {
    prefix_ratio(engine, model, m, Some(tau))
}

fn prefix_ratio(engine: &Engine, model: &SequenceModel, m: usize, tau: Option<f64>) -> Result<Option<f64>> {
    if m == 0 || m > model.n() {
        return Err(Error::InvalidArgument(format!("prefix length {m} outside 1..={}", model.n())));
    }
    let prefix: Vec<usize> = (1..=m).collect();
    let r = match tau {
        None => engine.eval_subset(model, &prefix, &Functional::square())?,
        Some(tau) => {
            let stat = ClampedSum::new(model.n(), &prefix, tau, |s| s * s)?;
            engine.eval_stat(model, &stat)?
        }
    };
    Ok(if r.upper > 0.0 { Some(r.lower / r.upper) } else { None })
}

fn prefix_ratios(
    engine: &Engine,
    model: &SequenceModel,
    m_grid: &[usize],
    tau: Option<f64>,
) -> Result<Vec<(usize, Option<f64>)>> {
    m_grid
        .par_iter()
        .map(|&m| Ok((m, prefix_ratio(engine, model, m, tau)?)))
        .collect()
}

/// `B_n^{-p} sum_k E[|X_k|^p]`
pub fn pth(engine: &Engine, model: &SequenceModel, p: f64) -> Result<f64> {
    let b = b_sq(engine, model)?.sqrt();
    let terms = per_index(engine, model, |x| x.abs().powf(p))?;
    Ok(normalized(terms.iter().map(|r| r.upper).sum::<f64>(), b.powf(p)))
}

/// `sum_k V(|X_k| > eps)`
pub fn capacity_tail(engine: &Engine, model: &SequenceModel, eps: f64) -> Result<f64> {
    let terms = per_index(engine, model, |x| if x.abs() > eps { 1.0 } else { 0.0 })?;
    Ok(terms.iter().map(|r| r.upper).sum())
}

/// Quantities for `X_k^{(tau)} = (-tau) v X_k ^ tau`, normalized by
/// `B_n^2 = sum_k E[(X_k^{(tau)})^2]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedReport {
    pub tau: f64,
    pub b_n: f64,
    pub mean_unc: f64,
    pub m2_ratio: f64,
    pub var_ratio: Vec<(usize, Option<f64>)>,
    pub lindeberg: Vec<(f64, f64)>,
}

pub fn truncated_profile(
    engine: &Engine,
    model: &SequenceModel,
    tau: f64,
    eps: &[f64],
    m_grid: &[usize],
) -> Result<TruncatedReport> {
    if !(tau > 0.0) {
        return Err(Error::InvalidArgument(format!("truncation level must be positive, got {tau}")));
    }
    let clip = |x: f64| x.clamp(-tau, tau);
    let sq = per_index(engine, model, |x| clip(x) * clip(x))?;
    let means = per_index(engine, model, |x| clip(x))?;
    let b2: f64 = sq.iter().map(|r| r.upper).sum();
    let b = b2.sqrt();
    let mean_unc = normalized(means.iter().map(|r| r.upper.abs() + r.lower.abs()).sum::<f64>(), b);
    let lindeberg = eps
        .iter()
        .map(|&e| {
            let level = e * b2;
            let t = per_index(engine, model, |x| (clip(x) * clip(x) - level).max(0.0))?;
            Ok((e, normalized(t.iter().map(|r| r.upper).sum::<f64>(), b2)))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TruncatedReport {
        tau,
        b_n: b,
        mean_unc,
        m2_ratio: normalized(sq.iter().map(|r| r.upper).sum::<f64>(), b2),
        var_ratio: prefix_ratios(engine, model, m_grid, Some(tau))?,
        lindeberg,
    })
}

#[derive(Debug, Clone)]
pub struct ConditionGrid {
    pub eps: Vec<f64>,
    /// `None` selects [`default_m_grid`].
    pub m_grid: Option<Vec<usize>>,
    pub p: Vec<f64>,
    pub tau: Option<f64>,
}

impl Default for ConditionGrid {
    fn default() -> Self {
        Self {
            eps: DEFAULT_EPS.to_vec(),
            m_grid: None,
            p: vec![3.0],
            tau: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionReport {
    pub n: usize,
    pub b_n: f64,
    pub lindeberg: Vec<(f64, f64)>,
    pub mean_unc: f64,
    pub m2_ratio: f64,
    pub var_ratio: Vec<(usize, Option<f64>)>,
    pub pth: Vec<(f64, f64)>,
    pub capacity_tail: Vec<(f64, f64)>,
    pub truncated: Option<TruncatedReport>,
}

pub fn condition_report(engine: &Engine, model: &SequenceModel, grid: &ConditionGrid) -> Result<ConditionReport> {
    let n = model.n();
    let b2 = b_sq(engine, model)?;
    let b = b2.sqrt();
    let m_grid = grid.m_grid.clone().unwrap_or_else(|| default_m_grid(n));
    let sq = per_index(engine, model, |x| x * x)?;
    let lindeberg = grid
        .eps
        .iter()
        .map(|&e| Ok((e, lindeberg_with(engine, model, e, b2)?)))
        .collect::<Result<Vec<_>>>()?;
    let pth = grid
        .p
        .iter()
        .map(|&p| {
            let t = per_index(engine, model, |x| x.abs().powf(p))?;
            Ok((p, normalized(t.iter().map(|r| r.upper).sum::<f64>(), b.powf(p))))
        })
        .collect::<Result<Vec<_>>>()?;
    let capacity = grid
        .eps
        .iter()
        .map(|&e| Ok((e, capacity_tail(engine, model, e)?)))
        .collect::<Result<Vec<_>>>()?;
    let truncated = match grid.tau {
        Some(tau) => Some(truncated_profile(engine, model, tau, &grid.eps, &m_grid)?),
        None => None,
    };
    Ok(ConditionReport {
        n,
        b_n: b,
        lindeberg,
        mean_unc: mean_uncertainty_with(engine, model, b)?,
        m2_ratio: normalized(sq.iter().map(|r| r.upper).sum::<f64>(), b2),
        var_ratio: prefix_ratios(engine, model, &m_grid, None)?,
        pth,
        capacity_tail: capacity,
        truncated,
    })
}

/// Least-squares slope of `log value` against `log n`, over positive values.
pub fn log_slope(ns: &[usize], values: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = ns
        .iter()
        .zip(values)
        .filter(|(_, v)| **v > 0.0 && v.is_finite())
        .map(|(&n, &v)| ((n as f64).ln(), v.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        None
    } else {
        Some(sxy / sxx)
    }
}
