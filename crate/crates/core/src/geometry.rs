//! Points of the open unit ball, the Möbius involution φ_a, the quasi-metric
//! `[x, y]`, and the invariant (hyperbolic) Laplacian.
//!
//! Every [`BallPoint`] is strictly interior; construction rejects `|x| >= 1`.
//! Boundary behaviour enters only as a limit inside quadrature.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use thiserror::Error;

/// Default radial cutoff used when a computation has to stay away from the sphere.
pub const BOUNDARY_EPS: f64 = 1e-12;

/// Default finite-difference step for the invariant Laplacian.
pub const FD_STEP: f64 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("coordinates must be finite")]
    NonFinite,
    #[error("point has no coordinates")]
    Empty,
    #[error("point with |x| = {norm} is not interior to the unit ball")]
    NotInterior { norm: f64 },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("radius {0} outside [0, 1]")]
    RadiusOutOfRange(f64),
    #[error("operation requires the {0} of the function")]
    MissingDerivative(&'static str),
}

/// A point of the open unit ball 𝔹ⁿ with its squared norm cached.
#[derive(Clone, PartialEq)]
pub struct BallPoint {
    coords: Vec<f64>,
    norm_sq: f64,
}

impl BallPoint {
    pub fn new(coords: Vec<f64>) -> Result<Self, GeometryError> {
        if coords.is_empty() {
            return Err(GeometryError::Empty);
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        let norm_sq = dot(&coords, &coords);
        if norm_sq >= 1.0 {
            return Err(GeometryError::NotInterior { norm: norm_sq.sqrt() });
        }
        Ok(Self { coords, norm_sq })
    }

    pub fn origin(dim: usize) -> Self {
        Self {
            coords: vec![0.0; dim],
            norm_sq: 0.0,
        }
    }

    /// Builds a point from coordinates known to be interior, e.g. produced by a
    /// sampler that already enforces the radius bound.
    pub(crate) fn from_interior(coords: Vec<f64>) -> Self {
        let norm_sq = dot(&coords, &coords);
        debug_assert!(norm_sq < 1.0 && norm_sq.is_finite());
        Self { coords, norm_sq }
    }

    /// Returns `None` when the coordinates leave the open ball.
    pub fn try_from_slice(coords: &[f64]) -> Option<Self> {
        let norm_sq = dot(coords, coords);
        (norm_sq < 1.0 && norm_sq.is_finite()).then(|| Self {
            coords: coords.to_vec(),
            norm_sq,
        })
    }

    #[inline]
    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    #[inline]
    pub fn norm_sq(&self) -> f64 {
        self.norm_sq
    }

    #[inline]
    pub fn norm(&self) -> f64 {
        self.norm_sq.sqrt()
    }

    #[inline]
    pub fn dist_sq(&self, other: &BallPoint) -> f64 {
        dist_sq(&self.coords, &other.coords)
    }

    #[inline]
    pub fn dist(&self, other: &BallPoint) -> f64 {
        self.dist_sq(other).sqrt()
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.coords
    }

    pub(crate) fn check_dim(&self, dim: usize) -> Result<(), GeometryError> {
        if self.dim() == dim {
            Ok(())
        } else {
            Err(GeometryError::DimensionMismatch {
                expected: dim,
                found: self.dim(),
            })
        }
    }
}

impl fmt::Debug for BallPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_tuple("BallPoint").field(&self.coords).finish()
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// The Möbius involution φ_a of 𝔹ⁿ that exchanges `a` and the origin.
pub fn mobius(a: &BallPoint, x: &BallPoint) -> Result<BallPoint, GeometryError> {
    x.check_dim(a.dim())?;
    let diff_sq = a.dist_sq(x);
    let one_minus_a = 1.0 - a.norm_sq;
    let denom = diff_sq + one_minus_a * (1.0 - x.norm_sq);
    let coords: Vec<f64> = a
        .coords
        .iter()
        .zip(&x.coords)
        .map(|(&ai, &xi)| (ai * diff_sq + one_minus_a * (ai - xi)) / denom)
        .collect();
    BallPoint::new(coords)
}

/// `[x, y] = (|x - y|² + (1 - |x|²)(1 - |y|²))^{1/2}`.
pub fn quasi_metric(x: &BallPoint, y: &BallPoint) -> f64 {
    quasi_metric_sq(x, y).sqrt()
}

#[inline]
pub fn quasi_metric_sq(x: &BallPoint, y: &BallPoint) -> f64 {
    x.dist_sq(y) + (1.0 - x.norm_sq) * (1.0 - y.norm_sq)
}

/// Normalized volume of `B(0, r)`; ν(𝔹ⁿ) = 1.
pub fn measure_ball_at_origin(dim: usize, r: f64) -> Result<f64, GeometryError> {
    if !(0.0..=1.0).contains(&r) {
        return Err(GeometryError::RadiusOutOfRange(r));
    }
    Ok(r.powi(dim as i32))
}

pub type ScalarField = Arc<dyn Fn(&BallPoint) -> Complex64 + Send + Sync>;
pub type VectorField = Arc<dyn Fn(&BallPoint) -> Vec<Complex64> + Send + Sync>;

/// A complex-valued C² function on the ball with optional analytic derivatives.
#[derive(Clone)]
pub struct SmoothFunction {
    pub value: ScalarField,
    pub gradient: Option<VectorField>,
    pub laplacian: Option<ScalarField>,
}

impl SmoothFunction {
    pub fn new(value: impl Fn(&BallPoint) -> Complex64 + Send + Sync + 'static) -> Self {
        Self {
            value: Arc::new(value),
            gradient: None,
            laplacian: None,
        }
    }

    pub fn with_gradient(mut self, gradient: impl Fn(&BallPoint) -> Vec<Complex64> + Send + Sync + 'static) -> Self {
        self.gradient = Some(Arc::new(gradient));
        self
    }

    pub fn with_laplacian(mut self, laplacian: impl Fn(&BallPoint) -> Complex64 + Send + Sync + 'static) -> Self {
        self.laplacian = Some(Arc::new(laplacian));
        self
    }

    pub fn eval(&self, x: &BallPoint) -> Complex64 {
        (self.value)(x)
    }

    /// Largest deviation of the supplied gradient and Laplacian from central
    /// differences of `value` at `x`, as `(gradient_residual, laplacian_residual)`.
    /// Missing derivatives report a residual of zero.
    pub fn derivative_residuals(&self, x: &BallPoint, h: f64) -> (f64, f64) {
        let n = x.dim();
        let f0 = self.eval(x);
        let mut fd_grad = Vec::with_capacity(n);
        let mut fd_lap = Complex64::new(0.0, 0.0);
        for i in 0..n {
            let (plus, minus) = axis_neighbours(x.coords(), i, h);
            let fp = (self.value)(&BallPoint::from_interior(plus));
            let fm = (self.value)(&BallPoint::from_interior(minus));
            fd_grad.push((fp - fm) / (2.0 * h));
            fd_lap += (fp + fm - 2.0 * f0) / (h * h);
        }
        let grad_res = self.gradient.as_ref().map_or(0.0, |g| {
            g(x).iter()
                .zip(&fd_grad)
                .map(|(a, b)| (a - b).norm())
                .fold(0.0, f64::max)
        });
        let lap_res = self.laplacian.as_ref().map_or(0.0, |l| (l(x) - fd_lap).norm());
        (grad_res, lap_res)
    }
}

fn axis_neighbours(coords: &[f64], axis: usize, h: f64) -> (Vec<f64>, Vec<f64>) {
    let mut plus = coords.to_vec();
    let mut minus = coords.to_vec();
    plus[axis] += h;
    minus[axis] -= h;
    (plus, minus)
}

/// Closed form `(1-|a|²)² Δf(a) + 2(n-2)(1-|a|²) ⟨a, ∇f(a)⟩`.
pub fn hyperbolic_laplacian(f: &SmoothFunction, a: &BallPoint) -> Result<Complex64, GeometryError> {
    let grad = f
        .gradient
        .as_ref()
        .ok_or(GeometryError::MissingDerivative("gradient"))?;
    let lap = f
        .laplacian
        .as_ref()
        .ok_or(GeometryError::MissingDerivative("laplacian"))?;
    let n = a.dim() as f64;
    let w = 1.0 - a.norm_sq();
    let g = grad(a);
    if g.len() != a.dim() {
        return Err(GeometryError::DimensionMismatch {
            expected: a.dim(),
            found: g.len(),
        });
    }
    let drift: Complex64 = a.coords().iter().zip(&g).map(|(&ai, gi)| gi * ai).sum();
    Ok(lap(a) * (w * w) + drift * (2.0 * (n - 2.0) * w))
}

/// Central-difference Euclidean Laplacian of `f ∘ φ_a` at the origin.
///
/// The error is O(h²); the stencil `±h eᵢ` stays interior for any `h < 1`.
pub fn hyperbolic_laplacian_fd(f: &SmoothFunction, a: &BallPoint, h: f64) -> Complex64 {
    let n = a.dim();
    let center = f.eval(a);
    let mut acc = Complex64::new(0.0, 0.0);
    let origin = vec![0.0; n];
    for i in 0..n {
        let (plus, minus) = axis_neighbours(&origin, i, h);
        let fp = f.eval(&mobius_unchecked(a, &plus));
        let fm = f.eval(&mobius_unchecked(a, &minus));
        acc += fp + fm - 2.0 * center;
    }
    acc / (h * h)
}

/// One Richardson level on top of [`hyperbolic_laplacian_fd`]: O(h⁴).
pub fn hyperbolic_laplacian_richardson(f: &SmoothFunction, a: &BallPoint, h: f64) -> Complex64 {
    let coarse = hyperbolic_laplacian_fd(f, a, h);
    let fine = hyperbolic_laplacian_fd(f, a, h / 2.0);
    (fine * 4.0 - coarse) / 3.0
}

fn mobius_unchecked(a: &BallPoint, x: &[f64]) -> BallPoint {
    let diff_sq = dist_sq(a.coords(), x);
    let x_sq = dot(x, x);
    let one_minus_a = 1.0 - a.norm_sq();
    let denom = diff_sq + one_minus_a * (1.0 - x_sq);
    let coords = a
        .coords()
        .iter()
        .zip(x)
        .map(|(&ai, &xi)| (ai * diff_sq + one_minus_a * (ai - xi)) / denom)
        .collect();
    BallPoint::from_interior(coords)
}
