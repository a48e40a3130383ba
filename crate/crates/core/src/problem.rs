//! Oracles for the numerator and denominator of `min (fˢ + fⁿ)(x) / g(x)` over `S`.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::linalg::{sym_eigen, DenseMatrix, LinalgError};
use crate::prox::ProxOracle;
use crate::vector::{dist2, dot, norm2};

/// Smallest admissible denominator value.
pub const DENOMINATOR_GUARD: f64 = 1e-12;
/// Floating-point slack on numerator nonnegativity.
pub const NUMERATOR_SLACK: f64 = -1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("point is outside the feasible set")]
    Infeasible,
    #[error("denominator {0:e} is below the positivity guard")]
    DegenerateDenominator(f64),
    #[error("numerator {0:e} is negative")]
    NegativeNumerator(f64),
    #[error("dimension mismatch: {0}")]
    Dimension(&'static str),
    #[error("invalid bounds m = {m}, M = {big_m}")]
    InvalidBounds { m: f64, big_m: f64 },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// The differentiable part `fˢ` with `ℓ`-Lipschitz gradient.
pub trait SmoothPart: Send + Sync {
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64]) -> Vec<f64>;
    fn lipschitz(&self) -> f64;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroSmooth;

impl SmoothPart for ZeroSmooth {
    fn value(&self, _x: &[f64]) -> f64 {
        0.0
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        vec![0.0; x.len()]
    }

    fn lipschitz(&self) -> f64 {
        0.0
    }
}

/// `xᵀQx + cᵀx + r` with symmetric `Q`.
#[derive(Debug, Clone)]
pub struct QuadraticSmooth {
    q: DenseMatrix,
    c: Vec<f64>,
    r: f64,
    ell: f64,
}

impl QuadraticSmooth {
    pub fn new(q: DenseMatrix, c: Vec<f64>, r: f64) -> Result<Self, ModelError> {
        if q.rows() != c.len() {
            return Err(ModelError::Dimension("quadratic linear term"));
        }
        let eig = sym_eigen(&q)?;
        let spectral = eig.eigenvalues.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        Ok(Self {
            ell: 2.0 * spectral,
            q,
            c,
            r,
        })
    }

    pub fn form(q: DenseMatrix) -> Result<Self, ModelError> {
        let n = q.rows();
        Self::new(q, vec![0.0; n], 0.0)
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.q
    }
}

impl SmoothPart for QuadraticSmooth {
    fn value(&self, x: &[f64]) -> f64 {
        dot(x, &self.q.matvec(x)) + dot(&self.c, x) + self.r
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = self.q.matvec(x);
        for (gi, ci) in g.iter_mut().zip(&self.c) {
            *gi = 2.0 * *gi + ci;
        }
        g
    }

    fn lipschitz(&self) -> f64 {
        self.ell
    }
}

/// Finitely many smooth pieces `gᵢ` with `g = max gᵢ`.
pub trait SmoothComponents {
    fn count(&self) -> usize;
    fn component_value(&self, i: usize, x: &[f64]) -> f64;
    fn component_gradient(&self, i: usize, x: &[f64]) -> Vec<f64>;
}

/// The denominator `g`, positive and `β`-weakly convex on `S`.
pub trait Denominator: Send + Sync {
    fn value(&self, x: &[f64]) -> f64;
    /// An element of the limiting subdifferential at `x`.
    fn subgradient(&self, x: &[f64]) -> Vec<f64>;
    fn weak_convexity(&self) -> f64;
    /// The max-of-smooth structure, when `g` has one.
    fn components(&self) -> Option<&dyn SmoothComponents> {
        None
    }
}

fn max_value(c: &dyn SmoothComponents, x: &[f64]) -> f64 {
    (0..c.count())
        .map(|i| c.component_value(i, x))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Mean of the gradients of the components attaining the maximum exactly.
fn max_subgradient(c: &dyn SmoothComponents, x: &[f64]) -> Vec<f64> {
    let values: Vec<f64> = (0..c.count()).map(|i| c.component_value(i, x)).collect();
    let top = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut g = vec![0.0; x.len()];
    let mut ties = 0usize;
    for (i, v) in values.iter().enumerate() {
        if *v == top {
            for (gj, dj) in g.iter_mut().zip(c.component_gradient(i, x)) {
                *gj += dj;
            }
            ties += 1;
        }
    }
    if ties > 1 {
        g.iter_mut().for_each(|v| *v /= ties as f64);
    }
    g
}

/// `max_i (aᵢᵀx + cᵢ)`
#[derive(Debug, Clone)]
pub struct MaxAffine {
    pub slopes: Vec<Vec<f64>>,
    pub offsets: Vec<f64>,
}

impl MaxAffine {
    pub fn new(slopes: Vec<Vec<f64>>, offsets: Vec<f64>) -> Result<Self, ModelError> {
        let n = slopes
            .first()
            .map(Vec::len)
            .ok_or(ModelError::Dimension("no affine pieces"))?;
        if slopes.len() != offsets.len() || slopes.iter().any(|s| s.len() != n) {
            return Err(ModelError::Dimension("affine pieces"));
        }
        Ok(Self { slopes, offsets })
    }

    /// `|x| + 1 = max{x + 1, 1 − x}` on the real line.
    pub fn abs_plus_one() -> Self {
        Self {
            slopes: vec![vec![1.0], vec![-1.0]],
            offsets: vec![1.0, 1.0],
        }
    }
}

impl SmoothComponents for MaxAffine {
    fn count(&self) -> usize {
        self.slopes.len()
    }

    fn component_value(&self, i: usize, x: &[f64]) -> f64 {
        dot(&self.slopes[i], x) + self.offsets[i]
    }

    fn component_gradient(&self, i: usize, _x: &[f64]) -> Vec<f64> {
        self.slopes[i].clone()
    }
}

impl Denominator for MaxAffine {
    fn value(&self, x: &[f64]) -> f64 {
        max_value(self, x)
    }

    fn subgradient(&self, x: &[f64]) -> Vec<f64> {
        max_subgradient(self, x)
    }

    fn weak_convexity(&self) -> f64 {
        0.0
    }

    fn components(&self) -> Option<&dyn SmoothComponents> {
        Some(self)
    }
}

/// `‖x‖₂`, with subgradient `x/‖x‖` and `0` at the origin.
#[derive(Debug, Clone, Copy, Default)]
pub struct EuclideanNorm;

impl Denominator for EuclideanNorm {
    fn value(&self, x: &[f64]) -> f64 {
        norm2(x)
    }

    fn subgradient(&self, x: &[f64]) -> Vec<f64> {
        let n = norm2(x);
        if n == 0.0 {
            return vec![0.0; x.len()];
        }
        x.iter().map(|v| v / n).collect()
    }

    fn weak_convexity(&self) -> f64 {
        0.0
    }
}

/// `xᵀBx` with symmetric `B`; `β = max(0, −2λ_min(B))`.
#[derive(Debug, Clone)]
pub struct QuadraticForm {
    b: DenseMatrix,
    beta: f64,
}

impl QuadraticForm {
    pub fn new(b: DenseMatrix) -> Result<Self, ModelError> {
        let eig = sym_eigen(&b)?;
        let beta = (-2.0 * eig.eigenvalues[0]).max(0.0);
        Ok(Self { b, beta })
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.b
    }
}

impl SmoothComponents for QuadraticForm {
    fn count(&self) -> usize {
        1
    }

    fn component_value(&self, _i: usize, x: &[f64]) -> f64 {
        dot(x, &self.b.matvec(x))
    }

    fn component_gradient(&self, _i: usize, x: &[f64]) -> Vec<f64> {
        self.b.matvec(x).into_iter().map(|v| 2.0 * v).collect()
    }
}

impl Denominator for QuadraticForm {
    fn value(&self, x: &[f64]) -> f64 {
        self.component_value(0, x)
    }

    fn subgradient(&self, x: &[f64]) -> Vec<f64> {
        self.component_gradient(0, x)
    }

    fn weak_convexity(&self) -> f64 {
        self.beta
    }

    fn components(&self) -> Option<&dyn SmoothComponents> {
        Some(self)
    }
}

/// `max_j √(xᵀA_j x)` with positive definite `A_j`.
#[derive(Debug, Clone)]
pub struct MaxSqrtQuadratic {
    pub mats: Vec<DenseMatrix>,
}

impl MaxSqrtQuadratic {
    pub fn new(mats: Vec<DenseMatrix>) -> Result<Self, ModelError> {
        let n = mats
            .first()
            .map(DenseMatrix::rows)
            .ok_or(ModelError::Dimension("no components"))?;
        if mats.iter().any(|m| m.rows() != n || m.cols() != n) {
            return Err(ModelError::Dimension("component matrices"));
        }
        Ok(Self { mats })
    }
}

impl SmoothComponents for MaxSqrtQuadratic {
    fn count(&self) -> usize {
        self.mats.len()
    }

    fn component_value(&self, i: usize, x: &[f64]) -> f64 {
        libm::sqrt(dot(x, &self.mats[i].matvec(x)).max(0.0))
    }

    fn component_gradient(&self, i: usize, x: &[f64]) -> Vec<f64> {
        let ax = self.mats[i].matvec(x);
        let v = libm::sqrt(dot(x, &ax).max(0.0));
        if v == 0.0 {
            return vec![0.0; x.len()];
        }
        ax.into_iter().map(|a| a / v).collect()
    }
}

impl Denominator for MaxSqrtQuadratic {
    fn value(&self, x: &[f64]) -> f64 {
        max_value(self, x)
    }

    fn subgradient(&self, x: &[f64]) -> Vec<f64> {
        max_subgradient(self, x)
    }

    fn weak_convexity(&self) -> f64 {
        0.0
    }

    fn components(&self) -> Option<&dyn SmoothComponents> {
        Some(self)
    }
}

/// Bounds `m ≤ g(x) ≤ M` on the feasible set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundsCondition {
    pub m: f64,
    pub big_m: f64,
}

impl BoundsCondition {
    pub fn new(m: f64, big_m: f64) -> Result<Self, ModelError> {
        if !(m > 0.0 && m <= big_m && big_m.is_finite()) {
            return Err(ModelError::InvalidBounds { m, big_m });
        }
        Ok(Self { m, big_m })
    }

    pub fn contains(&self, g: f64, slack: f64) -> bool {
        g >= self.m - slack && g <= self.big_m + slack
    }
}

pub struct FractionalProgram {
    pub smooth: Box<dyn SmoothPart>,
    pub nonsmooth: Box<dyn ProxOracle>,
    pub denominator: Box<dyn Denominator>,
    pub bc: Option<BoundsCondition>,
}

impl core::fmt::Debug for FractionalProgram {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("FractionalProgram")
            .field("ell", &self.smooth.lipschitz())
            .field("beta", &self.denominator.weak_convexity())
            .field("bc", &self.bc)
            .finish_non_exhaustive()
    }
}

impl FractionalProgram {
    pub fn new(
        smooth: impl SmoothPart + 'static,
        nonsmooth: impl ProxOracle + 'static,
        denominator: impl Denominator + 'static,
        bc: Option<BoundsCondition>,
    ) -> Self {
        Self {
            smooth: Box::new(smooth),
            nonsmooth: Box::new(nonsmooth),
            denominator: Box::new(denominator),
            bc,
        }
    }

    pub fn ell(&self) -> f64 {
        self.smooth.lipschitz()
    }

    pub fn beta(&self) -> f64 {
        self.denominator.weak_convexity()
    }

    /// `f(x) = fˢ(x) + fⁿ(x)`, `+∞` outside `S`.
    pub fn numerator(&self, x: &[f64]) -> f64 {
        self.smooth.value(x) + self.nonsmooth.value(x)
    }

    pub fn theta(&self, x: &[f64]) -> Result<f64, ModelError> {
        let f = self.numerator(x);
        if !f.is_finite() {
            return Err(ModelError::Infeasible);
        }
        let g = self.denominator.value(x);
        if !(g >= DENOMINATOR_GUARD) {
            return Err(ModelError::DegenerateDenominator(g));
        }
        if f < NUMERATOR_SLACK {
            return Err(ModelError::NegativeNumerator(f));
        }
        Ok(f / g)
    }

    /// `F = θ(x) + c‖x − x_prev‖²`
    pub fn merit(&self, c: f64, x: &[f64], x_prev: &[f64]) -> Result<f64, ModelError> {
        let d = dist2(x, x_prev);
        Ok(self.theta(x)? + c * d * d)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prox::{BoxIndicator, SphereIndicator};

    fn ep1() -> FractionalProgram {
        FractionalProgram::new(
            QuadraticSmooth::new(DenseMatrix::identity(1), vec![0.0], 1.0).unwrap(),
            BoxIndicator {
                lb: vec![-1.0],
                ub: vec![1.0],
            },
            MaxAffine::abs_plus_one(),
            Some(BoundsCondition::new(1.0, 2.0).unwrap()),
        )
    }

    #[test]
    fn ep1_theta_values() {
        let p = ep1();
        assert_eq!(p.theta(&[1.0]).unwrap(), 1.0);
        let xs = core::f64::consts::SQRT_2 - 1.0;
        assert!((p.theta(&[xs]).unwrap() - 2.0 * xs).abs() < 1e-15);
        assert_eq!(p.ell(), 2.0);
        assert_eq!(p.theta(&[1.5]), Err(ModelError::Infeasible));
    }

    #[test]
    fn ep1_subgradient_at_kink_is_zero() {
        let g = MaxAffine::abs_plus_one();
        assert_eq!(g.subgradient(&[0.0]), vec![0.0]);
        assert_eq!(g.subgradient(&[0.2]), vec![1.0]);
        assert_eq!(g.subgradient(&[-0.2]), vec![-1.0]);
    }

    #[test]
    fn rayleigh_equal_forms_give_one() {
        let a = DenseMatrix::from_rows(&[vec![2.0, 0.5], vec![0.5, 1.0]]).unwrap();
        let p = FractionalProgram::new(
            QuadraticSmooth::form(a.clone()).unwrap(),
            SphereIndicator,
            QuadraticForm::new(a).unwrap(),
            None,
        );
        let x = [0.6, 0.8];
        assert!((p.theta(&x).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn merit_examples() {
        let p = ep1();
        assert_eq!(p.merit(0.25, &[1.0], &[0.5]).unwrap(), 1.0625);
        assert_eq!(p.merit(0.25, &[1.0], &[1.0]).unwrap(), 1.0);
        assert_eq!(p.merit(0.0, &[1.0], &[0.5]).unwrap(), 1.0);
    }

    #[test]
    fn guards() {
        let p = FractionalProgram::new(
            ZeroSmooth,
            BoxIndicator {
                lb: vec![-1.0],
                ub: vec![1.0],
            },
            EuclideanNorm,
            None,
        );
        assert!(matches!(
            p.theta(&[0.0]),
            Err(ModelError::DegenerateDenominator(_))
        ));
        let q = FractionalProgram::new(
            QuadraticSmooth::new(DenseMatrix::identity(1), vec![0.0], -1.0).unwrap(),
            BoxIndicator {
                lb: vec![-1.0],
                ub: vec![1.0],
            },
            MaxAffine::abs_plus_one(),
            None,
        );
        assert!(matches!(
            q.theta(&[0.0]),
            Err(ModelError::NegativeNumerator(_))
        ));
        assert!(BoundsCondition::new(2.0, 1.0).is_err());
    }

    #[test]
    fn weak_convexity_of_indefinite_form() {
        let b = DenseMatrix::from_diag(&[1.0, -3.0]);
        assert_eq!(QuadraticForm::new(b).unwrap().weak_convexity(), 6.0);
    }
}
