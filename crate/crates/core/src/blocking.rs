//! Blocking of a 1-dependent array into nearly independent big blocks.
//!
//! Cut indices `g(i)` are chosen where the local second-moment mass `beta`
//! is smallest inside windows of length `p_n / 2`; removing the cuts leaves
//! blocks `H_i` that are at least two apart, hence independent.

use rayon::prelude::*;

use crate::engine::Engine;
use crate::error::{Error, Result};
use crate::functional::Functional;
use crate::model::SequenceModel;

pub const DEFAULT_PN_TOL: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct BlockingPlan {
    pub p_n: usize,
    pub k_n: usize,
    /// `beta[k - 1]` is `beta_{n,k}`.
    pub beta: Vec<f64>,
    /// `g(0) = 0, g(1), .., g(h - 1), g(h) = k_n + 1`.
    pub g: Vec<usize>,
    /// Windows `P_1..P_{h-1}`.
    pub windows: Vec<Vec<usize>>,
    /// Blocks `H_1..H_h` (some may be empty).
    pub blocks: Vec<Vec<usize>>,
    pub h: usize,
}

impl BlockingPlan {
    /// Cut indices `g(1)..g(h-1)`.
    pub fn cuts(&self) -> &[usize] {
        &self.g[1..self.h]
    }

    /// Checks the spacing, window and partition properties.
    pub fn check(&self) -> std::result::Result<(), String> {
        let p = self.p_n;
        if p < 2 || p % 2 != 0 {
            return Err(format!("p_n = {p} is not an even integer >= 2"));
        }
        if self.g.len() != self.h + 1 || self.g[0] != 0 || self.g[self.h] != self.k_n + 1 {
            return Err("sentinels g(0) = 0 and g(h) = k_n + 1 missing".into());
        }
        for i in 1..self.h {
            let (prev, cur) = (self.g[i - 1], self.g[i]);
            if !(prev + p / 2 < cur && cur <= prev + p) {
                return Err(format!("g({i}) = {cur} violates spacing after g({}) = {prev}", i - 1));
            }
            let expect: Vec<usize> = (prev + p / 2 + 1..=prev + p).collect();
            if self.windows[i - 1] != expect {
                return Err(format!("window P_{i} is {:?}", self.windows[i - 1]));
            }
        }
        if self.h >= 1 && self.g[self.h - 1] + p <= self.k_n {
            return Err("recursion stopped early".into());
        }
        let mut seen = vec![0u8; self.k_n + 1];
        for b in &self.blocks {
            for &k in b {
                seen[k] += 1;
            }
        }
        for &c in self.cuts() {
            seen[c] += 1;
        }
        if seen[1..].iter().any(|&c| c != 1) || seen[0] != 0 {
            return Err("blocks and cuts do not partition 1..k_n".into());
        }
        Ok(())
    }
}

/// `beta_k = (E[X_{k-1}^2] + E[X_k^2] + E[X_{k+1}^2]) / B_n^2` with `X_0 = X_{k_n+1} = 0`.
pub fn compute_beta(engine: &Engine, model: &SequenceModel) -> Result<Vec<f64>> {
    let b2 = engine.b_n(model)?.upper_sq();
    let sq = second_moments(engine, model)?;
    beta_from_moments(&sq, b2)
}

fn second_moments(engine: &Engine, model: &SequenceModel) -> Result<Vec<f64>> {
    let f = Functional::square();
    (1..=model.n())
        .into_par_iter()
        .map(|k| Ok(engine.marginal(model, k, &f)?.upper))
        .collect()
}

fn beta_from_moments(sq: &[f64], b2: f64) -> Result<Vec<f64>> {
    if !(b2 > 0.0) {
        return Err(Error::InvalidArgument("B_n = 0, blocking is undefined".into()));
    }
    let n = sq.len();
    Ok((0..n)
        .map(|k| {
            let left = if k > 0 { sq[k - 1] } else { 0.0 };
            let right = if k + 1 < n { sq[k + 1] } else { 0.0 };
            (left + sq[k] + right) / b2
        })
        .collect())
}

/// Largest even `p <= floor(sqrt(k_n))` with
/// `(p^4 / B_n^2) sum_k E[(X_k^2 - B_n^2 / p^4)^+] <= tol`, or 2.
pub fn choose_pn(engine: &Engine, model: &SequenceModel, tol: f64) -> Result<usize> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tol must be positive, got {tol}")));
    }
    let b2 = engine.b_n(model)?.upper_sq();
    let p_max = (model.n() as f64).sqrt().floor() as usize;
    let mut best = 2;
    let mut p = 2;
    while p <= p_max {
        if pn_criterion(engine, model, p, b2)? <= tol {
            best = p;
        }
        p += 2;
    }
    Ok(best)
}

/// `(p^4 / B_n^2) sum_k E[(X_k^2 - B_n^2 / p^4)^+]`
pub fn pn_criterion(engine: &Engine, model: &SequenceModel, p: usize, b2: f64) -> Result<f64> {
    let p4 = (p as f64).powi(4);
    let level = b2 / p4;
    let f = Functional::custom("excess", crate::Growth::Quadratic, move |x: f64| (x * x - level).max(0.0));
    let terms: Vec<f64> = (1..=model.n())
        .into_par_iter()
        .map(|k| Ok(engine.marginal(model, k, &f)?.upper))
        .collect::<Result<_>>()?;
    Ok(p4 / b2 * terms.iter().sum::<f64>())
}

pub fn build_plan(engine: &Engine, model: &SequenceModel, p_n: usize) -> Result<BlockingPlan> {
    check_pn(p_n)?;
    let beta = compute_beta(engine, model)?;
    plan_from_beta(beta, p_n)
}

fn check_pn(p_n: usize) -> Result<()> {
    if p_n < 2 || p_n % 2 != 0 {
        return Err(Error::InvalidArgument(format!("p_n must be an even integer >= 2, got {p_n}")));
    }
    Ok(())
}

/// Runs the cut recursion on a given `beta` profile; ties go to the smallest index.
pub fn plan_from_beta(beta: Vec<f64>, p_n: usize) -> Result<BlockingPlan> {
    check_pn(p_n)?;
    let k_n = beta.len();
    if k_n == 0 {
        return Err(Error::InvalidArgument("empty beta profile".into()));
    }
    let mut g = vec![0usize];
    let mut windows = Vec::new();
    loop {
        let last = *g.last().unwrap();
        if last + p_n > k_n {
            break;
        }
        let window: Vec<usize> = (last + p_n / 2 + 1..=last + p_n).collect();
        let mut pick = window[0];
        for &j in &window[1..] {
            if beta[j - 1] < beta[pick - 1] {
                pick = j;
            }
        }
        windows.push(window);
        g.push(pick);
    }
    g.push(k_n + 1);
    let h = g.len() - 1;
    let blocks = (1..=h).map(|j| (g[j - 1] + 1..g[j]).collect()).collect();
    Ok(BlockingPlan {
        p_n,
        k_n,
        beta,
        g,
        windows,
        blocks,
        h,
    })
}

/// Block sums `Y_i = sum_{j in H_i} X_j` as a model, plus the removed cuts.
#[derive(Debug, Clone)]
pub struct BlockModels {
    pub y_model: SequenceModel,
    pub removed: Vec<usize>,
}

pub fn block_models(model: &SequenceModel, plan: &BlockingPlan) -> Result<BlockModels> {
    let width = model.dependence_width();
    if width > 1 {
        return Err(Error::DependenceWidth { allowed: 1, actual: width });
    }
    if plan.k_n != model.n() {
        return Err(Error::InvalidArgument(format!(
            "plan covers {} indices, model has {}",
            plan.k_n,
            model.n()
        )));
    }
    let rows = plan
        .blocks
        .iter()
        .map(|b| model.combine_rows(b))
        .collect::<Result<Vec<_>>>()?;
    Ok(BlockModels {
        y_model: model.with_rows(rows)?,
        removed: plan.cuts().to_vec(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockDiagnostics {
    pub sum_beta_cuts: f64,
    pub sum_beta: f64,
    pub sum_delta_lo: f64,
    pub sum_delta_hi: f64,
    pub btilde2_over_b2: f64,
    pub btilde2_lower_over_b2: f64,
    pub removed_mass: f64,
}

pub fn diagnostics(engine: &Engine, model: &SequenceModel, plan: &BlockingPlan) -> Result<BlockDiagnostics> {
    let blocks = block_models(model, plan)?;
    let b2 = engine.b_n(model)?.upper_sq();
    let n = model.n();
    let cuts = plan.cuts();

    let deltas: Vec<(f64, f64)> = cuts
        .par_iter()
        .map(|&k| {
            let sq = engine.marginal(model, k, &Functional::square())?;
            let (mut lo, mut hi) = (sq.lower, sq.upper);
            for j in [k.wrapping_sub(1), k + 1] {
                if j >= 1 && j <= n {
                    let c = engine.cross_moment(model, k, j, |a, b| a * b)?;
                    lo += 2.0 * c.lower;
                    hi += 2.0 * c.upper;
                }
            }
            Ok((lo / b2, hi / b2))
        })
        .collect::<Result<_>>()?;

    let sq = Functional::square();
    let ys: Vec<(f64, f64)> = (1..=blocks.y_model.n())
        .into_par_iter()
        .map(|i| {
            let r = engine.marginal(&blocks.y_model, i, &sq)?;
            Ok((r.upper, r.lower))
        })
        .collect::<Result<_>>()?;

    let removed_mass = if cuts.is_empty() {
        0.0
    } else {
        engine.eval_subset(model, cuts, &sq)?.upper / b2
    };

    Ok(BlockDiagnostics {
        sum_beta_cuts: cuts.iter().map(|&k| plan.beta[k - 1]).sum(),
        sum_beta: plan.beta.iter().sum(),
        sum_delta_lo: deltas.iter().map(|d| d.0).sum::<f64>().abs(),
        sum_delta_hi: deltas.iter().map(|d| d.1).sum::<f64>().abs(),
        btilde2_over_b2: ys.iter().map(|y| y.0).sum::<f64>() / b2,
        btilde2_lower_over_b2: ys.iter().map(|y| y.1).sum::<f64>() / b2,
        removed_mass,
    })
}
