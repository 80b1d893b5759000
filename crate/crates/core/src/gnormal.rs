//! The one-dimensional G-normal law `N(0, [sigma_lo2, sigma_hi2])`.
//!
//! `E~[phi(xi)] = u(1, 0)` where `u` solves `u_t - G(u_xx)/2 = 0`,
//! `u(0, .) = phi`, with `G(a) = sigma_hi2 * a^+ - sigma_lo2 * a^-` and
//! `a^- = max(-a, 0)`. Three independent evaluations are provided: an
//! explicit monotone finite-difference scheme, the sub-linear CLT recursion
//! on two-point laws, and (for convex or concave `phi`) a classical Gaussian
//! integral at the extremal variance.

use std::num::NonZeroUsize;

use gauss_quad::GaussHermite;

use crate::engine::Engine;
use crate::error::{Error, Result};
use crate::functional::Functional;
use crate::laws::{AmbiguitySet, DiscreteLaw};
use crate::model::SequenceModel;

/// Variance interval `[sigma_lo2, sigma_hi2]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GParams {
    sigma_lo2: f64,
    sigma_hi2: f64,
}

impl GParams {
    pub fn new(sigma_lo2: f64, sigma_hi2: f64) -> Result<Self> {
        if !(sigma_lo2 >= 0.0) || !(sigma_lo2 <= sigma_hi2) || !sigma_hi2.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "need 0 <= sigma_lo2 <= sigma_hi2 < inf, got [{sigma_lo2}, {sigma_hi2}]"
            )));
        }
        Ok(Self { sigma_lo2, sigma_hi2 })
    }

    pub fn sigma_lo2(&self) -> f64 {
        self.sigma_lo2
    }

    pub fn sigma_hi2(&self) -> f64 {
        self.sigma_hi2
    }
}

/// `G(alpha) = sigma_hi2 * alpha` for `alpha >= 0`, `sigma_lo2 * alpha` otherwise.
pub fn g(alpha: f64, p: &GParams) -> f64 {
    if alpha >= 0.0 {
        p.sigma_hi2 * alpha
    } else {
        p.sigma_lo2 * alpha
    }
}

pub const DEFAULT_HALF_WIDTH: f64 = 8.0;
pub const DEFAULT_NX: usize = 801;
/// Fraction of the stability limit used by the default time step.
pub const DEFAULT_CFL: f64 = 0.9;
/// Largest admissible `dt * sigma_hi2 / dx^2`.
pub const STABILITY_LIMIT: f64 = 0.5;

/// Uniform grid on `[-half_width, half_width]` with `nx` points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PdeGrid {
    pub half_width: f64,
    pub nx: usize,
    pub dt: f64,
}

impl PdeGrid {
    /// Grid with the default time step `0.9 * dx^2 / (2 sigma_hi2)`.
    pub fn new(half_width: f64, nx: usize, p: &GParams) -> Self {
        let dx = 2.0 * half_width / (nx.max(2) - 1) as f64;
        let dt = if p.sigma_hi2 > 0.0 {
            DEFAULT_CFL * dx * dx / (2.0 * p.sigma_hi2)
        } else {
            1.0
        };
        Self { half_width, nx, dt }
    }

    pub fn default_for(p: &GParams) -> Self {
        Self::new(DEFAULT_HALF_WIDTH, DEFAULT_NX, p)
    }

    pub fn dx(&self) -> f64 {
        2.0 * self.half_width / (self.nx - 1) as f64
    }

    /// Halves `dx` and quarters `dt`.
    pub fn refined(&self) -> Self {
        Self {
            half_width: self.half_width,
            nx: 2 * (self.nx - 1) + 1,
            dt: self.dt / 4.0,
        }
    }

    pub fn points(&self) -> Vec<f64> {
        let dx = self.dx();
        (0..self.nx).map(|i| -self.half_width + i as f64 * dx).collect()
    }

    fn validate(&self, f: &Functional, p: &GParams) -> Result<()> {
        if self.nx < 3 || !(self.half_width > 0.0) || !(self.dt > 0.0) {
            return Err(Error::InvalidArgument(format!("degenerate grid {self:?}")));
        }
        let ratio = self.dt * p.sigma_hi2 / (self.dx() * self.dx());
        if ratio > STABILITY_LIMIT * (1.0 + 1e-12) {
            return Err(Error::Unstable { ratio });
        }
        let needed = 6.0 * p.sigma_hi2.sqrt() + f.support_margin();
        if self.half_width < needed {
            return Err(Error::InvalidArgument(format!(
                "half width {} below required {needed}",
                self.half_width
            )));
        }
        Ok(())
    }
}

/// Solution profile `u(t, x_i)` on the grid.
///
/// Boundary nodes are advanced with a zero second difference, i.e. they keep
/// their initial values; every update is then a convex combination of
/// neighbouring values, so the scheme is monotone and preserves constants.
pub fn solve_gheat_profile(f: &Functional, p: &GParams, grid: &PdeGrid, t: f64) -> Result<Vec<f64>> {
    grid.validate(f, p)?;
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::InvalidArgument(format!("time must be >= 0, got {t}")));
    }
    let mut u: Vec<f64> = grid.points().into_iter().map(|x| f.eval(x)).collect();
    if u.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("initial condition".into()));
    }
    if t == 0.0 {
        return Ok(u);
    }
    let steps = (t / grid.dt).ceil().max(1.0) as usize;
    let dt = t / steps as f64;
    let inv_dx2 = 1.0 / (grid.dx() * grid.dx());
    let mut next = u.clone();
    for _ in 0..steps {
        for i in 1..grid.nx - 1 {
            let d2 = (u[i + 1] - 2.0 * u[i] + u[i - 1]) * inv_dx2;
            next[i] = u[i] + 0.5 * dt * g(d2, p);
        }
        std::mem::swap(&mut u, &mut next);
        if !u[grid.nx / 2].is_finite() {
            return Err(Error::NonFinite("G-heat solution".into()));
        }
    }
    if u.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("G-heat solution".into()));
    }
    Ok(u)
}

/// `u(t, 0)`, i.e. `E~[phi(sqrt(t) xi)]`.
pub fn solve_gheat(f: &Functional, p: &GParams, grid: &PdeGrid, t: f64) -> Result<f64> {
    let u = solve_gheat_profile(f, p, grid, t)?;
    let x = grid.points();
    let i = x.partition_point(|v| *v < 0.0).min(grid.nx - 1);
    if x[i] == 0.0 || i == 0 {
        return Ok(u[i]);
    }
    let w = -x[i - 1] / (x[i] - x[i - 1]);
    Ok(u[i - 1] * (1.0 - w) + u[i] * w)
}

/// Extremal two-point ambiguity set `{+-sqrt(sigma_lo2), +-sqrt(sigma_hi2)}`.
pub fn two_point_set(p: &GParams) -> Result<AmbiguitySet> {
    let lo = DiscreteLaw::symmetric_two_point(p.sigma_lo2.sqrt())?;
    if p.sigma_lo2 == p.sigma_hi2 {
        return Ok(AmbiguitySet::singleton(lo));
    }
    AmbiguitySet::new(vec![lo, DiscreteLaw::symmetric_two_point(p.sigma_hi2.sqrt())?])
}

/// `E[phi(S_n / sqrt(n))]` for `n` i.i.d. copies of [`two_point_set`].
pub fn peng_oracle(engine: &Engine, f: &Functional, p: &GParams, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be >= 1".into()));
    }
    let model = SequenceModel::iid(two_point_set(p)?, n, 1.0 / (n as f64).sqrt())?;
    Ok(engine.eval_sum(&model, f)?.upper)
}

pub const QUADRATURE_NODES: usize = 96;

/// Classical `E[phi(sqrt(var) Z)]` by Gauss-Hermite quadrature.
pub fn gaussian_expect(f: &Functional, var: f64) -> f64 {
    if var <= 0.0 {
        return f.eval(0.0);
    }
    let rule = GaussHermite::new(NonZeroUsize::new(QUADRATURE_NODES).unwrap());
    let s = (2.0 * var).sqrt();
    rule.integrate(|x| f.eval(s * x)) / std::f64::consts::PI.sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    Convex,
    Concave,
}

/// Second-difference test on `[-half_width, half_width]`; affine functions
/// count as convex.
pub fn detect_shape(f: &Functional, half_width: f64) -> Option<Shape> {
    const SAMPLES: usize = 4001;
    let h = 2.0 * half_width / (SAMPLES - 1) as f64;
    let ys: Vec<f64> = (0..SAMPLES).map(|i| f.eval(-half_width + i as f64 * h)).collect();
    let scale = ys.iter().fold(1.0_f64, |m, y| m.max(y.abs()));
    let tol = 1e-10 * scale;
    let d2: Vec<f64> = ys.windows(3).map(|w| w[0] - 2.0 * w[1] + w[2]).collect();
    if d2.iter().all(|d| *d >= -tol) {
        Some(Shape::Convex)
    } else if d2.iter().all(|d| *d <= tol) {
        Some(Shape::Concave)
    } else {
        None
    }
}

/// For convex `phi` the G-normal expectation is the Gaussian one at the
/// upper variance; for concave `phi`, at the lower variance.
pub fn gnormal_reference(f: &Functional, p: &GParams) -> Result<f64> {
    match detect_shape(f, DEFAULT_HALF_WIDTH) {
        Some(Shape::Convex) => Ok(gaussian_expect(f, p.sigma_hi2)),
        Some(Shape::Concave) => Ok(gaussian_expect(f, p.sigma_lo2)),
        None => Err(Error::NotConvexOrConcave {
            lo: -DEFAULT_HALF_WIDTH,
            hi: DEFAULT_HALF_WIDTH,
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn p(lo: f64, hi: f64) -> GParams {
        GParams::new(lo, hi).unwrap()
    }

    #[test]
    fn g_values() {
        let q = p(0.5, 1.0);
        assert_eq!(g(1.0, &q), 1.0);
        assert_eq!(g(-1.0, &q), -0.5);
        assert_eq!(g(0.0, &q), 0.0);
        assert_eq!(g(3.0 * 0.7, &q), 3.0 * g(0.7, &q));
        assert_eq!(g(-3.0 * 0.7, &q), 3.0 * g(-0.7, &q));
    }

    #[test]
    fn params_validation() {
        assert!(GParams::new(-0.1, 1.0).is_err());
        assert!(GParams::new(1.0, 0.5).is_err());
        assert!(GParams::new(0.0, f64::INFINITY).is_err());
        assert!(GParams::new(0.0, 0.0).is_ok());
    }

    #[test]
    fn constants_are_fixed_points() {
        let q = p(0.5, 1.0);
        let grid = PdeGrid::default_for(&q);
        assert_eq!(solve_gheat(&Functional::constant(2.5), &q, &grid, 1.0).unwrap(), 2.5);
    }

    #[test]
    fn quadratic_extremes() {
        let q = p(0.5, 1.0);
        let grid = PdeGrid::default_for(&q);
        assert_abs_diff_eq!(solve_gheat(&Functional::square(), &q, &grid, 1.0).unwrap(), 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(
            solve_gheat(&Functional::square().negated(), &q, &grid, 1.0).unwrap(),
            -0.5,
            epsilon = 1e-9
        );
        assert_abs_diff_eq!(solve_gheat(&Functional::square(), &q, &grid, 0.5).unwrap(), 0.5, epsilon = 1e-9);
    }

    #[test]
    fn unstable_grid_rejected() {
        let q = p(0.5, 1.0);
        let mut grid = PdeGrid::default_for(&q);
        grid.dt *= 1.2;
        assert!(matches!(
            solve_gheat(&Functional::cos(), &q, &grid, 1.0),
            Err(Error::Unstable { .. })
        ));
        let narrow = PdeGrid::new(3.0, 301, &q);
        assert!(solve_gheat(&Functional::cos(), &q, &narrow, 1.0).is_err());
    }

    #[test]
    fn peng_oracle_examples() {
        let e = Engine::default();
        assert_abs_diff_eq!(peng_oracle(&e, &Functional::square(), &p(0.7, 0.7), 5).unwrap(), 0.7, epsilon = 1e-9);
        assert_abs_diff_eq!(peng_oracle(&e, &Functional::identity(), &p(0.5, 1.0), 6).unwrap(), 0.0, epsilon = 1e-12);
        for n in [1, 3, 8] {
            assert_abs_diff_eq!(peng_oracle(&e, &Functional::square(), &p(0.5, 1.0), n).unwrap(), 1.0, epsilon = 1e-9);
        }
        assert!(peng_oracle(&e, &Functional::square(), &p(0.5, 1.0), 0).is_err());
    }

    #[test]
    fn reference_values() {
        let q = p(0.5, 1.0);
        assert_abs_diff_eq!(gnormal_reference(&Functional::square(), &q).unwrap(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(gnormal_reference(&Functional::square().negated(), &q).unwrap(), -0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(gnormal_reference(&Functional::identity(), &q).unwrap(), 0.0, epsilon = 1e-12);
        assert!(gnormal_reference(&Functional::cos(), &q).is_err());
        // E[cos(Z)] = exp(-1/2)
        assert_abs_diff_eq!(gaussian_expect(&Functional::cos(), 1.0), (-0.5f64).exp(), epsilon = 1e-12);
    }
}
