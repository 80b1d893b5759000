//! Triangular-array descriptions of `X_1..X_n`.
//!
//! Every model is stored in one form: a sequence of independent innovations
//! `e_1..e_T`, each drawn from its own ambiguity set, and rows
//! `X_k = scale * sum_t a_{k,t} e_t`. Independent arrays have one innovation
//! per row; a moving window of weights `w_0..w_m` gives
//! `X_k = sum_j w_j e_{k+j}` over `T = n + m` innovations and is
//! `m`-dependent by construction. Block sums and reductions built from a
//! model reuse its innovations with new rows.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::laws::AmbiguitySet;

#[derive(Debug, Clone, PartialEq)]
pub enum ModelKind {
    Independent,
    MovingWindow { weights: Vec<f64> },
    /// Rows built from another model (block sums, reductions, sub-arrays).
    Derived,
}

/// One row: `(innovation index, coefficient)` pairs, indices increasing.
pub type Row = Vec<(usize, f64)>;

#[derive(Debug, Clone)]
pub struct SequenceModel {
    kind: ModelKind,
    innovations: Vec<Arc<AmbiguitySet>>,
    rows: Vec<Row>,
    scale: f64,
}

impl SequenceModel {
    /// Independent array with one ambiguity set per index.
    pub fn independent(sets: Vec<AmbiguitySet>, scale: f64) -> Result<Self> {
        let rows = (0..sets.len()).map(|k| vec![(k, 1.0)]).collect();
        Self::build(
            ModelKind::Independent,
            sets.into_iter().map(Arc::new).collect(),
            rows,
            scale,
        )
    }

    /// `n` independent copies of one ambiguity set.
    pub fn iid(set: AmbiguitySet, n: usize, scale: f64) -> Result<Self> {
        let set = Arc::new(set);
        let rows = (0..n).map(|k| vec![(k, 1.0)]).collect();
        Self::build(ModelKind::Independent, vec![set; n], rows, scale)
    }

    /// `X_k = sum_j w_j e_{k+j}` for `k = 1..n` over i.i.d. innovations.
    pub fn moving_window(innovation: AmbiguitySet, weights: Vec<f64>, n: usize, scale: f64) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidArgument("window weights must be non-empty".into()));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::InvalidArgument("window weights must be finite".into()));
        }
        let m = weights.len() - 1;
        let set = Arc::new(innovation);
        let rows = (0..n)
            .map(|k| {
                weights
                    .iter()
                    .enumerate()
                    .filter(|(_, w)| **w != 0.0)
                    .map(|(j, w)| (k + j, *w))
                    .collect()
            })
            .collect();
        Self::build(ModelKind::MovingWindow { weights }, vec![set; n + m], rows, scale)
    }

    fn build(kind: ModelKind, innovations: Vec<Arc<AmbiguitySet>>, rows: Vec<Row>, scale: f64) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InvalidArgument("model needs at least one index".into()));
        }
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(Error::InvalidArgument(format!("scale must be positive, got {scale}")));
        }
        for row in &rows {
            if row.windows(2).any(|w| w[0].0 >= w[1].0) {
                return Err(Error::InvalidArgument("row innovation indices must increase".into()));
            }
            for &(t, a) in row {
                if t >= innovations.len() {
                    return Err(Error::InvalidArgument(format!(
                        "row references innovation {t} of {}",
                        innovations.len()
                    )));
                }
                if !a.is_finite() {
                    return Err(Error::InvalidArgument("non-finite row coefficient".into()));
                }
            }
        }
        Ok(Self {
            kind,
            innovations,
            rows,
            scale,
        })
    }

    /// New model over the same innovations with different rows.
    pub fn with_rows(&self, rows: Vec<Row>) -> Result<Self> {
        Self::build(ModelKind::Derived, self.innovations.clone(), rows, self.scale)
    }

    /// Same model with another positive scale.
    pub fn rescaled(&self, scale: f64) -> Result<Self> {
        Self::build(self.kind.clone(), self.innovations.clone(), self.rows.clone(), scale)
    }

    /// Model whose single row is `sum_{k in indices} X_k` (1-based indices).
    pub fn subset_sum(&self, indices: &[usize]) -> Result<Self> {
        Ok(self.with_rows(vec![self.combine_rows(indices)?])?)
    }

    /// Coefficients of `sum_{k in indices} X_k` over innovations (1-based).
    pub fn combine_rows(&self, indices: &[usize]) -> Result<Row> {
        let mut acc: std::collections::BTreeMap<usize, f64> = Default::default();
        for &k in indices {
            let row = self.row(k)?;
            for &(t, a) in row {
                *acc.entry(t).or_insert(0.0) += a;
            }
        }
        Ok(acc.into_iter().filter(|(_, a)| *a != 0.0).collect())
    }

    pub fn kind(&self) -> &ModelKind {
        &self.kind
    }

    /// Number of rows `n`.
    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn innovations(&self) -> &[Arc<AmbiguitySet>] {
        &self.innovations
    }

    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    /// Row `k`, 1-based.
    pub fn row(&self, k: usize) -> Result<&Row> {
        if k == 0 || k > self.rows.len() {
            return Err(Error::InvalidArgument(format!("index {k} outside 1..={}", self.rows.len())));
        }
        Ok(&self.rows[k - 1])
    }

    /// Window length `m` of a moving-window model.
    pub fn window_m(&self) -> Option<usize> {
        match &self.kind {
            ModelKind::MovingWindow { weights } => Some(weights.len() - 1),
            ModelKind::Independent => Some(0),
            ModelKind::Derived => None,
        }
    }

    /// Largest `j - k` such that rows `k < j` share an innovation; the model is
    /// `m`-dependent for every `m` at least this large.
    pub fn dependence_width(&self) -> usize {
        let spans: Vec<Option<(usize, usize)>> = self
            .rows
            .iter()
            .map(|r| Some((r.first()?.0, r.last()?.0)))
            .collect();
        let mut width = 0;
        for (k, a) in spans.iter().enumerate() {
            let Some(a) = a else { continue };
            for (j, b) in spans.iter().enumerate().skip(k + 1) {
                let Some(b) = b else { continue };
                let shares = self.rows[k]
                    .iter()
                    .any(|(t, _)| *t >= b.0 && *t <= a.1 && self.rows[j].iter().any(|(s, _)| s == t));
                if shares {
                    width = width.max(j - k);
                }
            }
        }
        width
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::laws::DiscreteLaw;

    fn fair() -> AmbiguitySet {
        AmbiguitySet::singleton(DiscreteLaw::symmetric_two_point(1.0).unwrap())
    }

    #[test]
    fn moving_window_rows() {
        let m = SequenceModel::moving_window(fair(), vec![1.0, 2.0, 3.0], 4, 1.0).unwrap();
        assert_eq!(m.n(), 4);
        assert_eq!(m.innovations().len(), 6);
        assert_eq!(m.row(2).unwrap(), &vec![(1, 1.0), (2, 2.0), (3, 3.0)]);
        assert_eq!(m.dependence_width(), 2);
        assert_eq!(m.window_m(), Some(2));
    }

    #[test]
    fn independent_width_zero() {
        let m = SequenceModel::iid(fair(), 5, 0.5).unwrap();
        assert_eq!(m.dependence_width(), 0);
        assert_eq!(m.scale(), 0.5);
    }

    #[test]
    fn validation() {
        assert!(SequenceModel::iid(fair(), 0, 1.0).is_err());
        assert!(SequenceModel::iid(fair(), 2, 0.0).is_err());
        assert!(SequenceModel::moving_window(fair(), vec![], 2, 1.0).is_err());
        let m = SequenceModel::iid(fair(), 2, 1.0).unwrap();
        assert!(m.with_rows(vec![vec![(5, 1.0)]]).is_err());
        assert!(m.row(0).is_err());
        assert!(m.row(3).is_err());
    }

    #[test]
    fn combine_rows_merges_coefficients() {
        let m = SequenceModel::moving_window(fair(), vec![1.0, 1.0], 3, 1.0).unwrap();
        assert_eq!(
            m.combine_rows(&[1, 2, 3]).unwrap(),
            vec![(0, 1.0), (1, 2.0), (2, 2.0), (3, 1.0)]
        );
    }
}
