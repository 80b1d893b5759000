//! Finite laws, ambiguity sets and the single-variable sub-linear calculus.
//!
//! An [`AmbiguitySet`] is a finite family of finitely supported laws. Its
//! upper expectation is the maximum of the linear expectations of its
//! members, its lower expectation is the conjugate `-E[-phi]`, and its upper
//! capacity of a threshold event is the largest probability any member
//! assigns to it.

use crate::error::{Error, Result};

/// Normalization slack accepted on the total mass of a law.
pub const MASS_TOLERANCE: f64 = 1e-12;

/// A probability mass function on finitely many strictly increasing points.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteLaw {
    values: Vec<f64>,
    probs: Vec<f64>,
}

impl DiscreteLaw {
    pub fn new(values: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidLaw("empty support".into()));
        }
        if values.len() != probs.len() {
            return Err(Error::InvalidLaw(format!(
                "{} support points but {} probabilities",
                values.len(),
                probs.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidLaw(format!("non-finite support point {v}")));
        }
        if values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidLaw(
                "support points must be strictly increasing".into(),
            ));
        }
        if let Some(p) = probs.iter().find(|p| !p.is_finite() || **p < 0.0) {
            return Err(Error::InvalidLaw(format!("invalid probability {p}")));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::InvalidLaw(format!(
                "probabilities sum to {total}, expected 1"
            )));
        }
        let probs = probs.into_iter().map(|p| p / total).collect();
        Ok(Self { values, probs })
    }

    /// The point mass at `value`.
    pub fn dirac(value: f64) -> Result<Self> {
        Self::new(vec![value], vec![1.0])
    }

    /// Two-point law on `-a` and `a` with equal mass; collapses to the point
    /// mass at zero when `a == 0`.
    pub fn symmetric_two_point(a: f64) -> Result<Self> {
        let a = a.abs();
        if a == 0.0 {
            Self::dirac(0.0)
        } else {
            Self::new(vec![-a, a], vec![0.5, 0.5])
        }
    }

    /// Builds a law from unordered `(value, mass)` pairs, merging equal values.
    pub fn from_pairs(mut pairs: Vec<(f64, f64)>) -> Result<Self> {
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut values: Vec<f64> = Vec::with_capacity(pairs.len());
        let mut probs: Vec<f64> = Vec::with_capacity(pairs.len());
        for (v, p) in pairs {
            match values.last() {
                Some(&last) if last == v => *probs.last_mut().unwrap() += p,
                _ => {
                    values.push(v);
                    probs.push(p);
                }
            }
        }
        Self::new(values, probs)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.values.iter().copied().zip(self.probs.iter().copied())
    }

    /// Classical expectation of `phi` under this law.
    pub fn expect<F: Fn(f64) -> f64>(&self, phi: F) -> f64 {
        self.iter().map(|(v, p)| p * phi(v)).sum()
    }

    pub fn probability<P: Fn(f64) -> bool>(&self, pred: P) -> f64 {
        self.iter().filter(|(v, _)| pred(*v)).map(|(_, p)| p).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

/// A non-empty finite set of candidate laws for one coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct AmbiguitySet {
    laws: Vec<DiscreteLaw>,
}

impl AmbiguitySet {
    pub fn new(laws: Vec<DiscreteLaw>) -> Result<Self> {
        if laws.is_empty() {
            return Err(Error::InvalidLaw("ambiguity set has no laws".into()));
        }
        Ok(Self { laws })
    }

    pub fn singleton(law: DiscreteLaw) -> Self {
        Self { laws: vec![law] }
    }

    pub fn laws(&self) -> &[DiscreteLaw] {
        &self.laws
    }

    pub fn is_singleton(&self) -> bool {
        self.laws.len() == 1
    }

    /// Sorted union of the supports of all member laws.
    pub fn support(&self) -> Vec<f64> {
        let mut all: Vec<f64> = self.laws.iter().flat_map(|l| l.values().iter().copied()).collect();
        all.sort_by(f64::total_cmp);
        all.dedup();
        all
    }

    pub fn max_abs(&self) -> f64 {
        self.laws.iter().fold(0.0_f64, |m, l| m.max(l.max_abs()))
    }

    /// Upper expectation together with the index of the first maximizing law.
    pub fn upper_expect_argmax<F: Fn(f64) -> f64>(&self, phi: F) -> (f64, usize) {
        let mut best = (f64::NEG_INFINITY, 0);
        for (i, law) in self.laws.iter().enumerate() {
            let e = law.expect(&phi);
            if e > best.0 {
                best = (e, i);
            }
        }
        best
    }

    pub fn upper_expect<F: Fn(f64) -> f64>(&self, phi: F) -> f64 {
        self.upper_expect_argmax(phi).0
    }

    /// Conjugate expectation `-E[-phi]`.
    pub fn lower_expect<F: Fn(f64) -> f64>(&self, phi: F) -> f64 {
        -self.upper_expect(|x| -phi(x))
    }

    /// Clamps every support point to `[-c, c]`, merging coinciding images.
    pub fn truncate(&self, c: f64) -> Result<Self> {
        if !(c > 0.0) || !c.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "truncation level must be positive, got {c}"
            )));
        }
        let laws = self
            .laws
            .iter()
            .map(|l| DiscreteLaw::from_pairs(l.iter().map(|(v, p)| (truncate_value(v, c), p)).collect()))
            .collect::<Result<Vec<_>>>()?;
        Self::new(laws)
    }

    pub fn upper_capacity(&self, event: Event) -> f64 {
        self.laws
            .iter()
            .map(|l| l.probability(|v| event.contains(v)))
            .fold(0.0, f64::max)
    }

    /// `v(A) = 1 - V(A^c)`.
    pub fn lower_capacity(&self, event: Event) -> f64 {
        1.0 - self.upper_capacity(event.complement())
    }

    pub fn moments(&self, p: f64) -> Result<MomentSummary> {
        if !(p >= 2.0) {
            return Err(Error::InvalidArgument(format!("moment order must be >= 2, got {p}")));
        }
        Ok(MomentSummary {
            upper_mean: self.upper_expect(|x| x),
            lower_mean: self.lower_expect(|x| x),
            upper_m2: self.upper_expect(|x| x * x),
            lower_m2: self.lower_expect(|x| x * x),
            upper_abs_p: self.upper_expect(|x| x.abs().powf(p)),
            p,
        })
    }
}

/// `(-c) v x ^ c`.
pub fn truncate_value(x: f64, c: f64) -> f64 {
    x.clamp(-c, c)
}

/// Threshold events on a single real variable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Event {
    /// `X >= x`
    AtLeast(f64),
    /// `X > x`
    Above(f64),
    /// `|X| > x`
    AbsAbove(f64),
    /// `X < x`
    Below(f64),
    /// `X <= x`
    AtMost(f64),
    /// `|X| <= x`
    AbsAtMost(f64),
}

impl Event {
    pub fn contains(&self, v: f64) -> bool {
        match *self {
            Event::AtLeast(x) => v >= x,
            Event::Above(x) => v > x,
            Event::AbsAbove(x) => v.abs() > x,
            Event::Below(x) => v < x,
            Event::AtMost(x) => v <= x,
            Event::AbsAtMost(x) => v.abs() <= x,
        }
    }

    pub fn complement(&self) -> Event {
        match *self {
            Event::AtLeast(x) => Event::Below(x),
            Event::Above(x) => Event::AtMost(x),
            Event::AbsAbove(x) => Event::AbsAtMost(x),
            Event::Below(x) => Event::AtLeast(x),
            Event::AtMost(x) => Event::Above(x),
            Event::AbsAtMost(x) => Event::AbsAbove(x),
        }
    }
}

/// Upper and lower first two moments plus an upper absolute `p`-th moment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentSummary {
    pub upper_mean: f64,
    pub lower_mean: f64,
    pub upper_m2: f64,
    pub lower_m2: f64,
    pub upper_abs_p: f64,
    pub p: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn coin(p: f64) -> DiscreteLaw {
        DiscreteLaw::new(vec![-1.0, 1.0], vec![1.0 - p, p]).unwrap()
    }

    fn biased() -> AmbiguitySet {
        AmbiguitySet::new(vec![coin(0.4), coin(0.6)]).unwrap()
    }

    #[test]
    fn law_validation() {
        assert!(DiscreteLaw::new(vec![], vec![]).is_err());
        assert!(DiscreteLaw::new(vec![1.0, 0.0], vec![0.5, 0.5]).is_err());
        assert!(DiscreteLaw::new(vec![0.0, 0.0], vec![0.5, 0.5]).is_err());
        assert!(DiscreteLaw::new(vec![0.0, 1.0], vec![0.5, 0.4]).is_err());
        assert!(DiscreteLaw::new(vec![0.0, 1.0], vec![1.2, -0.2]).is_err());
        assert!(DiscreteLaw::new(vec![0.0], vec![1.0, 0.0]).is_err());
        assert!(DiscreteLaw::new(vec![f64::NAN], vec![1.0]).is_err());
        assert!(AmbiguitySet::new(vec![]).is_err());
        let l = DiscreteLaw::new(vec![0.0, 1.0], vec![0.5, 0.5 + 5e-13]).unwrap();
        assert!((l.probs().iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn upper_and_lower_expectation_examples() {
        let fair = AmbiguitySet::singleton(coin(0.5));
        assert_eq!(fair.upper_expect(|x| x * x), 1.0);
        assert_abs_diff_eq!(biased().upper_expect(|x| x), 0.2, epsilon = 1e-15);
        assert_abs_diff_eq!(biased().lower_expect(|x| x), -0.2, epsilon = 1e-15);
        assert_eq!(biased().upper_expect(|_| 3.5), 3.5);
        assert_eq!(fair.lower_expect(|x| x.cos()), fair.upper_expect(|x| x.cos()));
        assert!(biased().lower_expect(|x| x * x) <= biased().upper_expect(|x| x * x));
    }

    #[test]
    fn argmax_prefers_first_law_on_ties() {
        let s = AmbiguitySet::new(vec![coin(0.4), coin(0.6)]).unwrap();
        assert_eq!(s.upper_expect_argmax(|x| x * x).1, 0);
        assert_eq!(s.upper_expect_argmax(|x| x).1, 1);
    }

    #[test]
    fn truncation_examples() {
        let s = AmbiguitySet::singleton(DiscreteLaw::new(vec![-3.0, 1.0], vec![0.5, 0.5]).unwrap());
        let t = s.truncate(2.0).unwrap();
        assert_eq!(t.laws()[0].values(), &[-2.0, 1.0]);
        assert_eq!(t.laws()[0].probs(), &[0.5, 0.5]);

        assert_eq!(biased().truncate(1.0).unwrap(), biased());
        assert_eq!(biased().truncate(7.0).unwrap(), biased());

        let s = AmbiguitySet::singleton(DiscreteLaw::new(vec![-3.0, -2.5, 4.0], vec![0.2, 0.3, 0.5]).unwrap());
        let t = s.truncate(2.5).unwrap();
        assert_eq!(t.laws()[0].values(), &[-2.5, 2.5]);
        assert_abs_diff_eq!(t.laws()[0].probs()[0], 0.5, epsilon = 1e-15);

        assert!(s.truncate(0.0).is_err());
        assert!(s.truncate(-1.0).is_err());
    }

    #[test]
    fn capacity_examples() {
        let s = biased();
        assert_abs_diff_eq!(s.upper_capacity(Event::AtLeast(1.0)), 0.6, epsilon = 1e-15);
        assert_abs_diff_eq!(s.lower_capacity(Event::AtLeast(1.0)), 0.4, epsilon = 1e-15);
        assert_eq!(s.upper_capacity(Event::AtLeast(-1.0)), 1.0);
        let heavy = AmbiguitySet::singleton(DiscreteLaw::new(vec![-3.0, 1.0], vec![0.5, 0.5]).unwrap());
        assert_eq!(heavy.upper_capacity(Event::AbsAbove(2.0)), 0.5);
        assert_eq!(heavy.lower_capacity(Event::AbsAbove(2.0)), 0.5);
    }

    #[test]
    fn moment_examples() {
        let fair = AmbiguitySet::singleton(coin(0.5));
        let m = fair.moments(4.0).unwrap();
        assert_eq!((m.upper_m2, m.lower_m2, m.upper_mean, m.lower_mean), (1.0, 1.0, 0.0, 0.0));
        assert_eq!(m.upper_abs_p, 1.0);

        let two = AmbiguitySet::new(vec![
            DiscreteLaw::symmetric_two_point(0.7).unwrap(),
            DiscreteLaw::symmetric_two_point(1.0).unwrap(),
        ])
        .unwrap();
        let m = two.moments(2.0).unwrap();
        assert_abs_diff_eq!(m.upper_m2, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(m.lower_m2, 0.49, epsilon = 1e-15);
        assert_eq!((m.upper_mean, m.lower_mean), (0.0, 0.0));
        assert!(two.moments(1.5).is_err());
    }
}
