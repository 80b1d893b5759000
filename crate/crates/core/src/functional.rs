//! Test functions applied to normalized sums.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Growth class of a test function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Growth {
    BoundedLipschitz,
    Quadratic,
    PGrowth(f64),
}

/// A named real function together with its growth class.
#[derive(Clone)]
pub struct Functional {
    name: String,
    growth: Growth,
    margin: f64,
    phi: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl fmt::Debug for Functional {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Functional")
            .field("name", &self.name)
            .field("growth", &self.growth)
            .finish()
    }
}

impl Functional {
    pub fn custom<F>(name: impl Into<String>, growth: Growth, phi: F) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self {
            name: name.into(),
            growth,
            margin: 0.0,
            phi: Arc::new(phi),
        }
    }

    /// `x^2`
    pub fn square() -> Self {
        Self::custom("x^2", Growth::Quadratic, |x| x * x)
    }

    /// `|x|^p`
    pub fn abs_pow(p: f64) -> Self {
        let growth = if p <= 2.0 { Growth::Quadratic } else { Growth::PGrowth(p) };
        Self::custom(format!("abs^{p}"), growth, move |x: f64| x.abs().powf(p))
    }

    /// `x`
    pub fn identity() -> Self {
        Self::custom("x", Growth::Quadratic, |x| x)
    }

    pub fn cos() -> Self {
        Self::custom("cos", Growth::BoundedLipschitz, f64::cos)
    }

    /// `min(1, (x - a)^+)`
    pub fn capped_ramp(a: f64) -> Self {
        let mut f = Self::custom(format!("ramp:{a}"), Growth::BoundedLipschitz, move |x: f64| {
            (x - a).max(0.0).min(1.0)
        });
        f.margin = a.abs() + 1.0;
        f
    }

    pub fn constant(c: f64) -> Self {
        Self::custom(format!("const:{c}"), Growth::BoundedLipschitz, move |_| c)
    }

    /// Parses a catalog name: `x^2`, `x`, `cos`, `abs^P`, `ramp:A`, `const:C`.
    pub fn from_name(name: &str) -> Result<Self> {
        let name = name.trim();
        let num = |s: &str| {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Config(format!("bad numeric parameter in functional `{name}`")))
        };
        match name {
            "x^2" => Ok(Self::square()),
            "x" => Ok(Self::identity()),
            "cos" => Ok(Self::cos()),
            _ => {
                if let Some(p) = name.strip_prefix("abs^") {
                    let p = num(p)?;
                    if p < 1.0 {
                        return Err(Error::Config(format!("abs^p needs p >= 1, got {p}")));
                    }
                    Ok(Self::abs_pow(p))
                } else if let Some(a) = name.strip_prefix("ramp:") {
                    Ok(Self::capped_ramp(num(a)?))
                } else if let Some(c) = name.strip_prefix("const:") {
                    Ok(Self::constant(num(c)?))
                } else {
                    Err(Error::Config(format!("unknown functional `{name}`")))
                }
            }
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn growth(&self) -> Growth {
        self.growth
    }

    pub fn is_bounded_lipschitz(&self) -> bool {
        self.growth == Growth::BoundedLipschitz
    }

    /// Extra half-width a spatial grid needs beyond the Gaussian spread so the
    /// interesting part of the function stays inside it.
    pub fn support_margin(&self) -> f64 {
        self.margin
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        (self.phi)(x)
    }

    /// `-phi`
    pub fn negated(&self) -> Self {
        let inner = self.phi.clone();
        Self {
            name: format!("-({})", self.name),
            growth: self.growth,
            margin: self.margin,
            phi: Arc::new(move |x| -inner(x)),
        }
    }

    /// `x -> phi(c * x)`
    pub fn rescaled(&self, c: f64) -> Self {
        let inner = self.phi.clone();
        Self {
            name: format!("{}(({c})*x)", self.name),
            growth: self.growth,
            margin: self.margin / c.abs().max(f64::MIN_POSITIVE),
            phi: Arc::new(move |x| inner(c * x)),
        }
    }
}

/// Bounded-Lipschitz entries of the default catalog.
pub fn bounded_lipschitz_catalog() -> Vec<Functional> {
    vec![Functional::cos(), Functional::capped_ramp(0.5)]
}

/// Default catalog used by diagnostics that quantify over test functions.
pub fn default_catalog() -> Vec<Functional> {
    vec![
        Functional::square(),
        Functional::abs_pow(3.0),
        Functional::identity(),
        Functional::cos(),
        Functional::capped_ramp(0.5),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_catalog_names() {
        assert_eq!(Functional::from_name("x^2").unwrap().eval(3.0), 9.0);
        assert_eq!(Functional::from_name("abs^3").unwrap().eval(-2.0), 8.0);
        assert_eq!(Functional::from_name("abs^3").unwrap().growth(), Growth::PGrowth(3.0));
        assert_eq!(Functional::from_name("ramp:0.5").unwrap().eval(1.0), 0.5);
        assert_eq!(Functional::from_name("ramp:0.5").unwrap().eval(9.0), 1.0);
        assert_eq!(Functional::from_name("ramp:0.5").unwrap().eval(-9.0), 0.0);
        assert_eq!(Functional::from_name("const:2").unwrap().eval(-9.0), 2.0);
        assert!(Functional::from_name("sin").is_err());
        assert!(Functional::from_name("ramp:abc").is_err());
        assert!(Functional::from_name("abs^0.5").is_err());
    }

    #[test]
    fn combinators() {
        let f = Functional::square().negated();
        assert_eq!(f.eval(2.0), -4.0);
        assert_eq!(Functional::square().rescaled(2.0).eval(1.5), 9.0);
        assert!(Functional::cos().is_bounded_lipschitz());
        assert!(!Functional::square().is_bounded_lipschitz());
    }
}
