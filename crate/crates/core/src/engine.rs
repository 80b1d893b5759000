//! Exact upper/lower expectations of path functionals by backward induction.
//!
//! Innovations are revealed one at a time. After each reveal the state holds
//! the support indices of the innovations that some unfinished row still
//! needs, plus the integer-quantized statistics the functional is built from
//! (group sums, running maxima). Rows are folded into the statistics as soon
//! as their last innovation is known. The backward pass maximizes (and, for
//! the conjugate, minimizes) over the laws of each innovation's ambiguity set
//! at every reachable state, which is the sequential independence recursion
//! `E[phi(X, Y)] = E[E[phi(x, Y)]|_{x = X}]` with fully adaptive law choices.
//!
//! Sums are carried as `i64` keys on a lattice `1/q`. When every product of a
//! row coefficient and a support point is an integer multiple of `1/q` for a
//! small `q` the arithmetic is exact; otherwise `q` is the largest power of
//! two up to `2^52` that keeps every key in range, and each term is rounded
//! once, which bounds the error by `n / (2q)` in units of the scale.

use std::collections::HashMap;

use rayon::prelude::*;
use smallvec::SmallVec;

use crate::error::{Error, Result};
use crate::functional::Functional;
use crate::model::SequenceModel;

pub mod oracle;

/// Default bound on the total number of DP states.
pub const DEFAULT_STATE_CAP: usize = 50_000_000;

const HASHED_Q_MAX: i32 = 52;
const HASHED_Q_MIN: i32 = 30;
const MAX_LATTICE_Q: u32 = 4096;
const KEY_LIMIT: f64 = 4.0e18;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalResult {
    pub upper: f64,
    pub lower: f64,
    /// Number of DP states (or oracle tree nodes) visited.
    pub state_count: usize,
}

/// `B_n = sqrt(E[S_n^2])` and `b_n = sqrt(e[S_n^2])`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Norming {
    pub upper: f64,
    pub lower: f64,
}

impl Norming {
    pub fn upper_sq(&self) -> f64 {
        self.upper * self.upper
    }

    pub fn lower_sq(&self) -> f64 {
        self.lower * self.lower
    }
}

/// Statistic of the path `X_1..X_n` accumulated row by row.
///
/// Row values arrive as integer keys; `unit` converts a key to a real value
/// (model scale included).
pub trait PathStat: Sync {
    fn slots(&self) -> usize;
    /// Whether row `k` (0-based) affects the statistic.
    fn uses_row(&self, k: usize) -> bool;
    fn on_row(&self, k: usize, x: i64, unit: f64, slots: &mut [i64]);
    fn terminal(&self, slots: &[i64], unit: f64) -> f64;
}

/// Sums over groups of rows, fed to a terminal function of the group sums.
pub struct GroupSums<F> {
    row_groups: Vec<SmallVec<[usize; 2]>>,
    groups: usize,
    terminal: F,
}

impl<F: Fn(&[f64]) -> f64 + Sync> GroupSums<F> {
    /// `groups[g]` lists the 1-based rows of group `g`.
    pub fn new(n: usize, groups: &[Vec<usize>], terminal: F) -> Result<Self> {
        let mut row_groups = vec![SmallVec::new(); n];
        for (g, rows) in groups.iter().enumerate() {
            for &k in rows {
                if k == 0 || k > n {
                    return Err(Error::InvalidArgument(format!("index {k} outside 1..={n}")));
                }
                row_groups[k - 1].push(g);
            }
        }
        Ok(Self {
            row_groups,
            groups: groups.len(),
            terminal,
        })
    }
}

impl<F: Fn(&[f64]) -> f64 + Sync> PathStat for GroupSums<F> {
    fn slots(&self) -> usize {
        self.groups
    }

    fn uses_row(&self, k: usize) -> bool {
        !self.row_groups[k].is_empty()
    }

    fn on_row(&self, k: usize, x: i64, _unit: f64, slots: &mut [i64]) {
        for &g in &self.row_groups[k] {
            slots[g] += x;
        }
    }

    fn terminal(&self, slots: &[i64], unit: f64) -> f64 {
        let reals: SmallVec<[f64; 4]> = slots.iter().map(|&s| s as f64 * unit).collect();
        (self.terminal)(&reals)
    }
}

/// Sum of `(-tau) v X_k ^ tau` over a set of rows, fed to a terminal function.
///
/// Clamped rows are counted separately so the sum stays exact on the key
/// lattice.
pub struct ClampedSum<F> {
    tau: f64,
    rows: Vec<bool>,
    terminal: F,
}

impl<F: Fn(f64) -> f64 + Sync> ClampedSum<F> {
    /// `rows` are 1-based.
    pub fn new(n: usize, rows: &[usize], tau: f64, terminal: F) -> Result<Self> {
        if !(tau > 0.0) {
            return Err(Error::InvalidArgument(format!("truncation level must be positive, got {tau}")));
        }
        let mut used = vec![false; n];
        for &k in rows {
            if k == 0 || k > n {
                return Err(Error::InvalidArgument(format!("index {k} outside 1..={n}")));
            }
            used[k - 1] = true;
        }
        Ok(Self {
            tau,
            rows: used,
            terminal,
        })
    }
}

impl<F: Fn(f64) -> f64 + Sync> PathStat for ClampedSum<F> {
    fn slots(&self) -> usize {
        2
    }

    fn uses_row(&self, k: usize) -> bool {
        self.rows[k]
    }

    fn on_row(&self, _k: usize, x: i64, unit: f64, slots: &mut [i64]) {
        let v = x as f64 * unit;
        if v > self.tau {
            slots[1] += 1;
        } else if v < -self.tau {
            slots[1] -= 1;
        } else {
            slots[0] += x;
        }
    }

    fn terminal(&self, slots: &[i64], unit: f64) -> f64 {
        (self.terminal)(slots[0] as f64 * unit + slots[1] as f64 * self.tau)
    }
}

/// `max_{k <= n} |S_k|^p`.
pub struct RunningMaxPow {
    pub p: f64,
}

impl PathStat for RunningMaxPow {
    fn slots(&self) -> usize {
        2
    }

    fn uses_row(&self, _k: usize) -> bool {
        true
    }

    fn on_row(&self, _k: usize, x: i64, _unit: f64, slots: &mut [i64]) {
        slots[0] += x;
        slots[1] = slots[1].max(slots[0].abs());
    }

    fn terminal(&self, slots: &[i64], unit: f64) -> f64 {
        (slots[1] as f64 * unit).abs().powf(self.p)
    }
}

type Key = SmallVec<[i64; 8]>;

#[derive(Debug, Clone, Copy)]
enum Source {
    Window(usize),
    New,
}

struct RowPlan {
    row: usize,
    /// `(where the innovation's support index lives, delta key per support point)`
    terms: Vec<(Source, Vec<i64>)>,
}

struct Step {
    innovation: usize,
    rows: Vec<RowPlan>,
    /// Positions in `old window + [new]` kept after this step.
    keep: Vec<usize>,
}

/// Backward-induction evaluator with a bound on reachable states.
#[derive(Debug, Clone, Copy)]
pub struct Engine {
    pub state_cap: usize,
}

impl Default for Engine {
    fn default() -> Self {
        Self {
            state_cap: DEFAULT_STATE_CAP,
        }
    }
}

impl Engine {
    pub fn with_cap(state_cap: usize) -> Self {
        Self { state_cap }
    }

    /// `E[phi(S_n)]` and `e[phi(S_n)]` with `S_n = sum_k X_k`.
    pub fn eval_sum(&self, model: &SequenceModel, f: &Functional) -> Result<EvalResult> {
        let all: Vec<usize> = (1..=model.n()).collect();
        self.eval_subset(model, &all, f)
    }

    /// Expectations of `phi(sum_{k in indices} X_k)` (1-based indices).
    pub fn eval_subset(&self, model: &SequenceModel, indices: &[usize], f: &Functional) -> Result<EvalResult> {
        let stat = GroupSums::new(model.n(), &[indices.to_vec()], |s: &[f64]| f.eval(s[0]))?;
        self.eval_stat(model, &stat)
    }

    /// Expectations of `phi(X_k)`.
    pub fn marginal(&self, model: &SequenceModel, k: usize, f: &Functional) -> Result<EvalResult> {
        model.row(k)?;
        self.eval_subset(model, &[k], f)
    }

    /// Expectations of `psi(X_j, X_k)` for `|j - k|` at most one more than the
    /// model's dependence width.
    pub fn cross_moment<P>(&self, model: &SequenceModel, j: usize, k: usize, psi: P) -> Result<EvalResult>
    where
        P: Fn(f64, f64) -> f64 + Sync,
    {
        model.row(j)?;
        model.row(k)?;
        let reach = model.dependence_width() + 1;
        if j.abs_diff(k) > reach {
            return Err(Error::InvalidArgument(format!(
                "indices {j} and {k} are more than {reach} apart"
            )));
        }
        let stat = GroupSums::new(model.n(), &[vec![j], vec![k]], |s: &[f64]| psi(s[0], s[1]))?;
        self.eval_stat(model, &stat)
    }

    pub fn cross_moment_upper<P>(&self, model: &SequenceModel, j: usize, k: usize, psi: P) -> Result<f64>
    where
        P: Fn(f64, f64) -> f64 + Sync,
    {
        Ok(self.cross_moment(model, j, k, psi)?.upper)
    }

    /// `B_n` and `b_n` from the upper and lower second moments of `S_n`.
    pub fn b_n(&self, model: &SequenceModel) -> Result<Norming> {
        let r = self.eval_sum(model, &Functional::square())?;
        assert!(
            r.lower >= -1e-9 * r.upper.abs().max(1.0),
            "lower second moment {} is negative",
            r.lower
        );
        Ok(Norming {
            upper: r.upper.max(0.0).sqrt(),
            lower: r.lower.max(0.0).sqrt(),
        })
    }

    /// General path statistic.
    pub fn eval_stat(&self, model: &SequenceModel, stat: &dyn PathStat) -> Result<EvalResult> {
        let used: Vec<bool> = (0..model.n()).map(|k| stat.uses_row(k)).collect();
        let q = choose_quantum(model, &used)?;
        let unit = model.scale() / q;
        let plan = build_steps(model, &used, q);

        let mut init: Key = SmallVec::from_elem(0, stat.slots());
        for &k in &plan.initial_rows {
            stat.on_row(k, 0, unit, &mut init);
        }

        // Forward: reachable states per layer and child links.
        let mut layers: Vec<Vec<Key>> = vec![vec![init]];
        let mut children: Vec<Vec<u32>> = Vec::with_capacity(plan.steps.len());
        let mut total = 1usize;
        let mut old_window = 0usize;
        for step in &plan.steps {
            let support = model.innovations()[step.innovation].support();
            let prev = layers.last().unwrap();
            let mut index: HashMap<Key, u32> = HashMap::with_capacity(prev.len() * support.len());
            let mut next: Vec<Key> = Vec::new();
            let mut links = Vec::with_capacity(prev.len() * support.len());
            for state in prev {
                let (window, slots) = state.split_at(old_window);
                for j in 0..support.len() {
                    let mut new_slots: Key = SmallVec::from_slice(slots);
                    for rp in &step.rows {
                        let x: i64 = rp
                            .terms
                            .iter()
                            .map(|(src, deltas)| match src {
                                Source::Window(p) => deltas[window[*p] as usize],
                                Source::New => deltas[j],
                            })
                            .sum();
                        stat.on_row(rp.row, x, unit, &mut new_slots);
                    }
                    let mut key: Key = SmallVec::with_capacity(step.keep.len() + new_slots.len());
                    for &p in &step.keep {
                        key.push(if p == old_window { j as i64 } else { window[p] });
                    }
                    key.extend_from_slice(&new_slots);
                    let id = match index.get(&key) {
                        Some(&id) => id,
                        None => {
                            let id = next.len() as u32;
                            index.insert(key.clone(), id);
                            next.push(key);
                            id
                        }
                    };
                    links.push(id);
                }
            }
            total += next.len();
            if total > self.state_cap {
                return Err(Error::StateCap {
                    states: total,
                    cap: self.state_cap,
                });
            }
            old_window = step.keep.len();
            layers.push(next);
            children.push(links);
        }

        // Backward.
        let last = layers.last().unwrap();
        let mut up: Vec<f64> = last
            .par_iter()
            .map(|k| stat.terminal(&k[old_window..], unit))
            .collect();
        let mut lo = up.clone();
        for (s, step) in plan.steps.iter().enumerate().rev() {
            let set = &model.innovations()[step.innovation];
            let support = set.support();
            let stride = support.len();
            let laws: Vec<Vec<(usize, f64)>> = set
                .laws()
                .iter()
                .map(|l| {
                    l.iter()
                        .filter(|(_, p)| *p > 0.0)
                        .map(|(v, p)| (support.iter().position(|u| *u == v).unwrap(), p))
                        .collect()
                })
                .collect();
            let links = &children[s];
            let width = layers[s].len();
            let (new_up, new_lo): (Vec<f64>, Vec<f64>) = (0..width)
                .into_par_iter()
                .map(|i| {
                    let kids = &links[i * stride..(i + 1) * stride];
                    let mut best_up = f64::NEG_INFINITY;
                    let mut best_lo = f64::INFINITY;
                    for law in &laws {
                        let mut eu = 0.0;
                        let mut el = 0.0;
                        for &(j, p) in law {
                            eu += p * up[kids[j] as usize];
                            el += p * lo[kids[j] as usize];
                        }
                        if eu > best_up {
                            best_up = eu;
                        }
                        if el < best_lo {
                            best_lo = el;
                        }
                    }
                    (best_up, best_lo)
                })
                .unzip();
            up = new_up;
            lo = new_lo;
        }
        let (upper, lower) = (up[0], lo[0]);
        if !upper.is_finite() || !lower.is_finite() {
            return Err(Error::NonFinite("expectation".into()));
        }
        Ok(EvalResult {
            upper,
            lower,
            state_count: total,
        })
    }
}

struct StepPlan {
    initial_rows: Vec<usize>,
    steps: Vec<Step>,
}

fn choose_quantum(model: &SequenceModel, used: &[bool]) -> Result<f64> {
    let mut products = Vec::new();
    let mut bound = 0.0;
    for (k, row) in model.rows().iter().enumerate() {
        if !used[k] {
            continue;
        }
        for &(t, a) in row {
            let set = &model.innovations()[t];
            bound += a.abs() * set.max_abs();
            products.extend(set.support().into_iter().map(|x| a * x));
        }
    }
    let fits = |q: f64| {
        products.iter().all(|&v| {
            let s = v * q;
            (s - s.round()).abs() <= 1e-12
        })
    };
    // Off-lattice supports get the finest power of two that keeps keys in range.
    let q = match (1..=MAX_LATTICE_Q).map(f64::from).find(|&q| fits(q)) {
        Some(q) => q,
        None => {
            let room = (KEY_LIMIT / bound.max(1.0)).log2().floor() as i32;
            2f64.powi(room.min(HASHED_Q_MAX).max(HASHED_Q_MIN))
        }
    };
    if bound * q > KEY_LIMIT {
        return Err(Error::InvalidArgument(format!(
            "sum range {bound} too large for the state lattice"
        )));
    }
    Ok(q)
}

fn build_steps(model: &SequenceModel, used: &[bool], q: f64) -> StepPlan {
    // Relevant innovations in reveal order.
    let mut relevant: Vec<usize> = model
        .rows()
        .iter()
        .enumerate()
        .filter(|(k, _)| used[*k])
        .flat_map(|(_, r)| r.iter().map(|(t, _)| *t))
        .collect();
    relevant.sort_unstable();
    relevant.dedup();
    let pos_of = |t: usize| relevant.binary_search(&t).unwrap();

    // Step after which each used row is complete (0 = before any step),
    // non-decreasing in the row index.
    let mut complete = vec![0usize; model.n()];
    let mut running = 0usize;
    for (k, row) in model.rows().iter().enumerate() {
        if !used[k] {
            continue;
        }
        let own = row.last().map(|(t, _)| pos_of(*t) + 1).unwrap_or(0);
        running = running.max(own);
        complete[k] = running;
    }
    let mut last_use = vec![0usize; relevant.len()];
    for (k, row) in model.rows().iter().enumerate() {
        if used[k] {
            for (t, _) in row {
                let p = pos_of(*t);
                last_use[p] = last_use[p].max(complete[k]);
            }
        }
    }

    let initial_rows = (0..model.n()).filter(|&k| used[k] && complete[k] == 0).collect();
    let mut steps = Vec::with_capacity(relevant.len());
    let mut window: Vec<usize> = Vec::new(); // positions in `relevant`
    for (s, &t) in relevant.iter().enumerate() {
        let step_no = s + 1;
        let rows = (0..model.n())
            .filter(|&k| used[k] && complete[k] == step_no)
            .map(|k| RowPlan {
                row: k,
                terms: model.rows()[k]
                    .iter()
                    .map(|&(u, a)| {
                        let p = pos_of(u);
                        let src = if p == s {
                            Source::New
                        } else {
                            Source::Window(window.iter().position(|&w| w == p).expect("innovation retained"))
                        };
                        let deltas = model.innovations()[u]
                            .support()
                            .iter()
                            .map(|x| (a * x * q).round() as i64)
                            .collect();
                        (src, deltas)
                    })
                    .collect(),
            })
            .collect();
        let mut extended = window.clone();
        extended.push(s);
        let keep: Vec<usize> = (0..extended.len())
            .filter(|&i| last_use[extended[i]] > step_no)
            .collect();
        window = keep.iter().map(|&i| extended[i]).collect();
        steps.push(Step {
            innovation: t,
            rows,
            keep,
        });
    }
    StepPlan { initial_rows, steps }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::laws::{AmbiguitySet, DiscreteLaw};
    use approx::assert_abs_diff_eq;

    fn coin(p: f64) -> DiscreteLaw {
        DiscreteLaw::new(vec![-1.0, 1.0], vec![1.0 - p, p]).unwrap()
    }

    fn biased() -> AmbiguitySet {
        AmbiguitySet::new(vec![coin(0.4), coin(0.6)]).unwrap()
    }

    fn fair() -> AmbiguitySet {
        AmbiguitySet::singleton(coin(0.5))
    }

    #[test]
    fn two_step_biased_coin_square() {
        let m = SequenceModel::iid(biased(), 2, 1.0).unwrap();
        let r = Engine::default().eval_sum(&m, &Functional::square()).unwrap();
        assert_abs_diff_eq!(r.upper, 2.4, epsilon = 1e-12);
        let b = Engine::default().b_n(&m).unwrap();
        assert_abs_diff_eq!(b.upper, 2.4f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn singleton_laws_match_convolution() {
        let law = DiscreteLaw::new(vec![-1.0, 0.5, 2.0], vec![0.2, 0.5, 0.3]).unwrap();
        let m = SequenceModel::iid(AmbiguitySet::singleton(law.clone()), 3, 1.0).unwrap();
        let f = Functional::cos();
        let mut classical = 0.0;
        for (a, pa) in law.iter() {
            for (b, pb) in law.iter() {
                for (c, pc) in law.iter() {
                    classical += pa * pb * pc * (a + b + c).cos();
                }
            }
        }
        let r = Engine::default().eval_sum(&m, &f).unwrap();
        assert_abs_diff_eq!(r.upper, classical, epsilon = 1e-12);
        assert_abs_diff_eq!(r.lower, classical, epsilon = 1e-12);
    }

    #[test]
    fn degenerate_window_equals_independent() {
        let a = SequenceModel::moving_window(biased(), vec![1.0], 4, 0.5).unwrap();
        let b = SequenceModel::iid(biased(), 4, 0.5).unwrap();
        for f in crate::functional::default_catalog() {
            let ra = Engine::default().eval_sum(&a, &f).unwrap();
            let rb = Engine::default().eval_sum(&b, &f).unwrap();
            assert_abs_diff_eq!(ra.upper, rb.upper, epsilon = 1e-12);
            assert_abs_diff_eq!(ra.lower, rb.lower, epsilon = 1e-12);
        }
    }

    #[test]
    fn window_square_moment() {
        for n in [1, 2, 5, 9] {
            let m = SequenceModel::moving_window(fair(), vec![1.0, 1.0], n, 1.0).unwrap();
            let b = Engine::default().b_n(&m).unwrap();
            assert_abs_diff_eq!(b.upper_sq(), (4 * n - 2) as f64, epsilon = 1e-9);
        }
    }

    #[test]
    fn cross_moments() {
        let e = Engine::default();
        let iid = SequenceModel::iid(fair(), 3, 1.0).unwrap();
        assert_eq!(e.cross_moment_upper(&iid, 1, 2, |x, y| x * y).unwrap(), 0.0);
        let w = SequenceModel::moving_window(fair(), vec![1.0, 1.0], 4, 1.0).unwrap();
        assert_abs_diff_eq!(e.cross_moment_upper(&w, 2, 3, |x, y| x * y).unwrap(), 1.0, epsilon = 1e-12);
        let m2 = e.marginal(&w, 2, &Functional::square()).unwrap().upper;
        assert_abs_diff_eq!(e.cross_moment_upper(&w, 2, 3, |x, _| x * x).unwrap(), m2, epsilon = 1e-12);
        assert!(e.cross_moment_upper(&w, 1, 4, |x, y| x * y).is_err());
        assert!(e.cross_moment_upper(&w, 0, 1, |x, y| x * y).is_err());
    }

    #[test]
    fn state_cap_is_reported() {
        let m = SequenceModel::iid(biased(), 10, 1.0).unwrap();
        match Engine::with_cap(5).eval_sum(&m, &Functional::square()) {
            Err(Error::StateCap { states, cap }) => {
                assert_eq!(cap, 5);
                assert!(states > 5);
            }
            other => panic!("expected state cap error, got {other:?}"),
        }
    }

    #[test]
    fn irrational_supports_use_hashed_lattice() {
        let set = AmbiguitySet::new(vec![
            DiscreteLaw::symmetric_two_point(0.5f64.sqrt()).unwrap(),
            DiscreteLaw::symmetric_two_point(1.0).unwrap(),
        ])
        .unwrap();
        let m = SequenceModel::iid(set, 6, 1.0).unwrap();
        let r = Engine::default().eval_sum(&m, &Functional::square()).unwrap();
        assert_abs_diff_eq!(r.upper, 6.0, epsilon = 1e-9);
        assert_abs_diff_eq!(r.lower, 3.0, epsilon = 1e-9);
    }

    #[test]
    fn running_max_matches_brute_force() {
        let m = SequenceModel::iid(fair(), 3, 1.0).unwrap();
        let r = Engine::default().eval_stat(&m, &RunningMaxPow { p: 2.0 }).unwrap();
        // max_k |S_k|^2 over the 8 equally likely paths.
        let mut total = 0.0;
        for bits in 0..8u32 {
            let mut s = 0.0f64;
            let mut mx = 0.0f64;
            for i in 0..3 {
                s += if bits >> i & 1 == 1 { 1.0 } else { -1.0 };
                mx = mx.max(s.abs());
            }
            total += mx * mx / 8.0;
        }
        assert_abs_diff_eq!(r.upper, total, epsilon = 1e-12);
    }
}
