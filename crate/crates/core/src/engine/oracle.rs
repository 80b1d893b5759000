//! Brute-force reference for the engine.
//!
//! Walks the full history tree of innovation values with no state merging
//! and no quantization. At each node the law for the next innovation is
//! chosen to maximize (minimize) the value of the subtree, so the root value
//! is the best adaptive policy: a policy may pick a different law at every
//! node, and subtrees do not interact.

use crate::error::{Error, Result};
use crate::functional::Functional;
use crate::model::SequenceModel;

use super::EvalResult;

pub const MAX_ROWS: usize = 6;
pub const MAX_INNOVATIONS: usize = 8;
pub const MAX_LAWS: usize = 3;
pub const MAX_SUPPORT: usize = 4;

/// Upper and lower expectation of `phi(S_n)` over all adaptive policies.
pub fn oracle_policy_enum(model: &SequenceModel, f: &Functional) -> Result<EvalResult> {
    oracle_eval(model, |xs: &[f64]| f.eval(xs.iter().sum()))
}

/// Same as [`oracle_policy_enum`] for an arbitrary function of `(X_1..X_n)`.
pub fn oracle_eval<F: Fn(&[f64]) -> f64>(model: &SequenceModel, f: F) -> Result<EvalResult> {
    guard(model)?;
    let mut values = Vec::with_capacity(model.innovations().len());
    let mut nodes = 0usize;
    let upper = descend(model, &f, &mut values, true, &mut nodes);
    let lower = descend(model, &f, &mut values, false, &mut nodes);
    Ok(EvalResult {
        upper,
        lower,
        state_count: nodes,
    })
}

fn guard(model: &SequenceModel) -> Result<()> {
    if model.n() > MAX_ROWS {
        return Err(Error::OracleGuard(format!("n = {} > {MAX_ROWS}", model.n())));
    }
    if model.innovations().len() > MAX_INNOVATIONS {
        return Err(Error::OracleGuard(format!(
            "{} innovations > {MAX_INNOVATIONS}",
            model.innovations().len()
        )));
    }
    for set in model.innovations() {
        if set.laws().len() > MAX_LAWS {
            return Err(Error::OracleGuard(format!("{} laws > {MAX_LAWS}", set.laws().len())));
        }
        if set.laws().iter().any(|l| l.len() > MAX_SUPPORT) {
            return Err(Error::OracleGuard(format!("support larger than {MAX_SUPPORT}")));
        }
    }
    Ok(())
}

fn descend<F: Fn(&[f64]) -> f64>(
    model: &SequenceModel,
    f: &F,
    values: &mut Vec<f64>,
    maximize: bool,
    nodes: &mut usize,
) -> f64 {
    *nodes += 1;
    let t = values.len();
    if t == model.innovations().len() {
        let xs: Vec<f64> = model
            .rows()
            .iter()
            .map(|row| model.scale() * row.iter().map(|&(u, a)| a * values[u]).sum::<f64>())
            .collect();
        return f(&xs);
    }
    let mut best = if maximize { f64::NEG_INFINITY } else { f64::INFINITY };
    for law in model.innovations()[t].laws() {
        let mut e = 0.0;
        for (v, p) in law.iter() {
            values.push(v);
            e += p * descend(model, f, values, maximize, nodes);
            values.pop();
        }
        if (maximize && e > best) || (!maximize && e < best) {
            best = e;
        }
    }
    best
}
