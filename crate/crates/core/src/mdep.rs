//! Constructions specific to `m`-dependent sequences: residue classes, the
//! Rosenthal-type maximal inequality, the reduction to 1-dependent blocks,
//! the three-part split used for stationary sequences, and empirical
//! stationarity and independence checks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::engine::{Engine, GroupSums, RunningMaxPow};
use crate::error::{Error, Result};
use crate::functional::{default_catalog, Functional};
use crate::laws::{AmbiguitySet, DiscreteLaw};
use crate::model::{ModelKind, SequenceModel};

/// `I_j = {i <= k : i mod (m+1) = j}` for `j = 0..=m`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResidueDecomposition {
    pub m: usize,
    pub classes: Vec<Vec<usize>>,
}

pub fn residue_classes(m: usize, k: usize) -> Result<ResidueDecomposition> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be >= 1".into()));
    }
    let mut classes = vec![Vec::new(); m + 1];
    for i in 1..=k {
        classes[i % (m + 1)].push(i);
    }
    Ok(ResidueDecomposition { m, classes })
}

/// Both sides of the maximal moment inequality for one model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RosenthalReport {
    pub p: f64,
    pub n: usize,
    /// `E[max_{k<=n} |S_k|^p]`
    pub lhs: f64,
    /// `sum_k E[|X_k|^p]`
    pub term_moments: f64,
    /// `(sum_k E[X_k^2])^{p/2}`
    pub term_variance: f64,
    /// `(sum_k |E[X_k]| + |e[X_k]|)^p`
    pub term_means: f64,
    /// `lhs / (sum of the three terms)`
    pub fitted_c: f64,
    pub state_count: usize,
}

impl RosenthalReport {
    pub fn terms(&self) -> f64 {
        self.term_moments + self.term_variance + self.term_means
    }
}

pub fn rosenthal_check(engine: &Engine, model: &SequenceModel, p: f64) -> Result<RosenthalReport> {
    if !(p >= 2.0) {
        return Err(Error::InvalidArgument(format!("p must be >= 2, got {p}")));
    }
    let lhs = engine.eval_stat(model, &RunningMaxPow { p })?;
    let mut moments = 0.0;
    let mut second = 0.0;
    let mut means = 0.0;
    for k in 1..=model.n() {
        moments += engine.marginal(model, k, &Functional::abs_pow(p))?.upper;
        second += engine.marginal(model, k, &Functional::square())?.upper;
        let mean = engine.marginal(model, k, &Functional::identity())?;
        means += mean.upper.abs() + mean.lower.abs();
    }
    let term_variance = second.powf(p / 2.0);
    let term_means = means.powf(p);
    let total = moments + term_variance + term_means;
    let fitted_c = if total > 0.0 { lhs.upper / total } else { 0.0 };
    Ok(RosenthalReport {
        p,
        n: model.n(),
        lhs: lhs.upper,
        term_moments: moments,
        term_variance,
        term_means,
        fitted_c,
        state_count: lhs.state_count,
    })
}

/// One randomly generated model of the Rosenthal battery.
#[derive(Debug, Clone)]
pub struct BatteryInstance {
    pub id: usize,
    pub m: usize,
    pub p: f64,
    /// Independent, every coordinate with certain zero mean.
    pub zero_mean_independent: bool,
    pub model: SequenceModel,
}

const GRID: [f64; 9] = [-2.0, -1.5, -1.0, -0.5, 0.0, 0.5, 1.0, 1.5, 2.0];

fn random_law(rng: &mut ChaCha8Rng) -> DiscreteLaw {
    let size = rng.gen_range(1..=3);
    let mut pts: Vec<f64> = Vec::new();
    while pts.len() < size {
        let v = GRID[rng.gen_range(0..GRID.len())];
        if !pts.contains(&v) {
            pts.push(v);
        }
    }
    let weights: Vec<f64> = (0..size).map(|_| f64::from(rng.gen_range(1u32..=8))).collect();
    let total: f64 = weights.iter().sum();
    DiscreteLaw::from_pairs(pts.into_iter().zip(weights.into_iter().map(|w| w / total)).collect())
        .expect("valid random law")
}

fn random_zero_mean_law(rng: &mut ChaCha8Rng) -> DiscreteLaw {
    let a = GRID[rng.gen_range(5..GRID.len())];
    if rng.gen_bool(0.5) {
        DiscreteLaw::symmetric_two_point(a).expect("valid")
    } else {
        let q = f64::from(rng.gen_range(1u32..=4)) / 8.0;
        DiscreteLaw::new(vec![-a, 0.0, a], vec![q, 1.0 - 2.0 * q, q]).expect("valid")
    }
}

fn random_set(rng: &mut ChaCha8Rng, zero_mean: bool) -> AmbiguitySet {
    let count = rng.gen_range(1..=3);
    let laws = (0..count)
        .map(|_| if zero_mean { random_zero_mean_law(rng) } else { random_law(rng) })
        .collect();
    AmbiguitySet::new(laws).expect("non-empty")
}

/// Deterministic battery: instance `i` has `m = i mod 3`, `p` cycling through
/// 2, 3, 4 every three instances, `n` in `2..=8`; half of the `m = 0`,
/// `p = 2` instances have certain zero means.
pub fn rosenthal_battery(seed: u64, count: usize) -> Vec<BatteryInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|id| {
            let m = id % 3;
            let p = [2.0, 3.0, 4.0][(id / 3) % 3];
            let zero_mean = m == 0 && p == 2.0 && (id / 9) % 2 == 0;
            let n = rng.gen_range(2..=8);
            let model = if m == 0 {
                let sets = (0..n).map(|_| random_set(&mut rng, zero_mean)).collect();
                SequenceModel::independent(sets, 1.0)
            } else {
                let weights = (0..=m).map(|_| [0.5, 1.0, -1.0, 2.0][rng.gen_range(0..4)]).collect();
                SequenceModel::moving_window(random_set(&mut rng, false), weights, n, 1.0)
            }
            .expect("valid battery model");
            BatteryInstance {
                id,
                m,
                p,
                zero_mean_independent: zero_mean,
                model,
            }
        })
        .collect()
}

pub fn run_battery(engine: &Engine, battery: &[BatteryInstance]) -> Result<Vec<RosenthalReport>> {
    battery
        .par_iter()
        .map(|inst| rosenthal_check(engine, &inst.model, inst.p))
        .collect()
}

/// Sums of `m` consecutive terms, which form a 1-dependent sequence.
#[derive(Debug, Clone)]
pub struct ZReduction {
    pub m: usize,
    /// `k_n' = floor(k_n / m) + 1`
    pub k_prime: usize,
    /// 1-based source indices of each block; the last may be empty.
    pub blocks: Vec<Vec<usize>>,
    pub model: SequenceModel,
}

pub fn z_reduce(model: &SequenceModel, m: usize) -> Result<ZReduction> {
    if m == 0 {
        return Err(Error::InvalidArgument("z reduction needs m >= 1".into()));
    }
    match model.kind() {
        ModelKind::MovingWindow { weights } if weights.len() != m + 1 => {
            return Err(Error::InvalidArgument(format!(
                "model window has m = {}, requested m = {m}",
                weights.len() - 1
            )))
        }
        _ => {}
    }
    let width = model.dependence_width();
    if width > m {
        return Err(Error::DependenceWidth { allowed: m, actual: width });
    }
    let kn = model.n();
    let k_prime = kn / m + 1;
    let mut blocks: Vec<Vec<usize>> = (1..k_prime)
        .map(|k| (m * (k - 1) + 1..=m * k).collect())
        .collect();
    blocks.push((m * (k_prime - 1) + 1..=kn).collect());
    let rows = blocks
        .iter()
        .map(|b| model.combine_rows(b))
        .collect::<Result<Vec<_>>>()?;
    Ok(ZReduction {
        m,
        k_prime,
        blocks,
        model: model.with_rows(rows)?,
    })
}

/// `S_n = A_1 + A_2 + A_3`: blocks of length `p_n`, the `m`-gaps between
/// them, and the remaining tail.
#[derive(Debug, Clone)]
pub struct ThreePartSplit {
    pub n: usize,
    pub p_n: usize,
    pub m: usize,
    pub parts: [Vec<usize>; 3],
    /// `E[A_i^2] / n`
    pub upper_sq_over_n: [f64; 3],
    /// `e[A_i^2] / n`
    pub lower_sq_over_n: [f64; 3],
    /// `E[S_n^2] / n`
    pub total_sq_over_n: f64,
}

pub fn three_part_split(engine: &Engine, model: &SequenceModel, p_n: usize) -> Result<ThreePartSplit> {
    let m = match model.kind() {
        ModelKind::MovingWindow { weights } => weights.len() - 1,
        ModelKind::Independent => 0,
        ModelKind::Derived => {
            return Err(Error::InvalidArgument("three-part split needs a stationary window model".into()))
        }
    };
    let n = model.n();
    if p_n == 0 || p_n + m > n {
        return Err(Error::InvalidArgument(format!("need 1 <= p_n and p_n + m <= n, got p_n = {p_n}, m = {m}, n = {n}")));
    }
    let blocks = n / (p_n + m);
    let mut parts: [Vec<usize>; 3] = Default::default();
    for i in 0..blocks {
        let base = i * (p_n + m);
        parts[0].extend(base + 1..=base + p_n);
        parts[1].extend(base + p_n + 1..=base + p_n + m);
    }
    parts[2].extend(blocks * (p_n + m) + 1..=n);
    let sq = Functional::square();
    let mut upper = [0.0; 3];
    let mut lower = [0.0; 3];
    for (i, part) in parts.iter().enumerate() {
        let r = engine.eval_subset(model, part, &sq)?;
        upper[i] = r.upper / n as f64;
        lower[i] = r.lower / n as f64;
    }
    let total = engine.eval_sum(model, &sq)?.upper / n as f64;
    Ok(ThreePartSplit {
        n,
        p_n,
        m,
        parts,
        upper_sq_over_n: upper,
        lower_sq_over_n: lower,
        total_sq_over_n: total,
    })
}

/// Largest gap between `E[psi(X_1..X_j)]` and `E[psi(X_{1+s}..X_{j+s})]` over
/// test functions built from the catalog: `phi` of the window sum, `phi` of
/// the first element, and the product of the first and last elements.
pub fn stationarity_test(engine: &Engine, model: &SequenceModel, shift: usize, j: usize) -> Result<f64> {
    if j == 0 || j + shift > model.n() {
        return Err(Error::InvalidArgument(format!(
            "window {j} shifted by {shift} exceeds n = {}",
            model.n()
        )));
    }
    if shift == 0 {
        return Ok(0.0);
    }
    let window = |s: usize| (1 + s..=j + s).collect::<Vec<usize>>();
    let mut worst = 0.0_f64;
    for f in default_catalog() {
        let a = engine.eval_subset(model, &window(0), &f)?;
        let b = engine.eval_subset(model, &window(shift), &f)?;
        let c = engine.marginal(model, 1, &f)?;
        let d = engine.marginal(model, 1 + shift, &f)?;
        worst = worst
            .max((a.upper - b.upper).abs())
            .max((a.lower - b.lower).abs())
            .max((c.upper - d.upper).abs())
            .max((c.lower - d.lower).abs());
    }
    let product = |s: usize| -> Result<f64> {
        let stat = GroupSums::new(model.n(), &[vec![1 + s], vec![j + s]], |v: &[f64]| v[0] * v[1])?;
        Ok(engine.eval_stat(model, &stat)?.upper)
    };
    worst = worst.max((product(0)? - product(shift)?).abs());
    Ok(worst)
}

/// `|E[psi(A, B)] - E[E[psi(a, B)]|_{a = A}]|` for `A = sum of rows in
/// first`, `B = sum of rows in second`. Zero when `B` is independent of `A`.
pub fn factorization_gap<P>(
    engine: &Engine,
    model: &SequenceModel,
    first: &[usize],
    second: &[usize],
    psi: P,
) -> Result<f64>
where
    P: Fn(f64, f64) -> f64 + Sync,
{
    let joint = GroupSums::new(model.n(), &[first.to_vec(), second.to_vec()], |v: &[f64]| psi(v[0], v[1]))?;
    let lhs = engine.eval_stat(model, &joint)?.upper;
    let inner = |a: f64| -> f64 {
        let stat = GroupSums::new(model.n(), &[second.to_vec()], |v: &[f64]| psi(a, v[0])).expect("valid groups");
        engine.eval_stat(model, &stat).expect("inner evaluation").upper
    };
    let outer = GroupSums::new(model.n(), &[first.to_vec()], |v: &[f64]| inner(v[0]))?;
    let rhs = engine.eval_stat(model, &outer)?.upper;
    Ok((lhs - rhs).abs())
}
