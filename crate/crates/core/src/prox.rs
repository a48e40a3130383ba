//! Projections and proximal operators of `h = fⁿ + ι_S` for the subproblem
//! families used by the solvers.
//!
//! Closed-form operators (box, sphere, simplex, soft-thresholding) are plain
//! functions. Piecewise-linear numerators over polytopes are reformulated as
//! QPs with an epigraph variable and solved by [`crate::qp`].

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::l1ipm::{prox_l1_box_affine_ipm, IpmSettings};
use crate::linalg::DenseMatrix;
use crate::qp::{QpError, QpProblem, QpSettings, QpSolver};
use crate::vector::{dot, norm1, norm2};

/// Absolute tolerance on each constraint when testing membership of `S`.
pub const FEASIBILITY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProxError {
    #[error("dimension mismatch: {0}")]
    Dimension(&'static str),
    #[error("prox scale must be positive, got {0}")]
    NonPositiveScale(f64),
    #[error(transparent)]
    Qp(#[from] QpError),
    #[error("interior point iteration stalled with residual {0:e}")]
    IpmStalled(f64),
}

pub fn project_box(z: &[f64], lb: &[f64], ub: &[f64]) -> Vec<f64> {
    z.iter()
        .zip(lb.iter().zip(ub))
        .map(|(v, (l, u))| v.clamp(*l, *u))
        .collect()
}

/// `z / ‖z‖`; the origin maps to `e₁`.
pub fn project_sphere(z: &[f64]) -> Vec<f64> {
    let nrm = norm2(z);
    if nrm == 0.0 {
        let mut e = vec![0.0; z.len()];
        if let Some(first) = e.first_mut() {
            *first = 1.0;
        }
        return e;
    }
    z.iter().map(|v| v / nrm).collect()
}

/// Euclidean projection onto `{x ≥ 0, 1ᵀx = 1}` by the sorted-threshold rule.
pub fn project_simplex(z: &[f64]) -> Vec<f64> {
    let n = z.len();
    if n == 0 {
        return Vec::new();
    }
    let sum: f64 = z.iter().sum();
    if z.iter().all(|v| *v >= 0.0) && (sum - 1.0).abs() <= 4.0 * f64::EPSILON * n as f64 {
        return z.to_vec();
    }
    let mut sorted = z.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut threshold = 0.0;
    for (j, v) in sorted.iter().enumerate() {
        cumsum += v;
        let t = (cumsum - 1.0) / (j + 1) as f64;
        if v - t > 0.0 {
            threshold = t;
        }
    }
    z.iter().map(|v| (v - threshold).max(0.0)).collect()
}

/// Componentwise `sign(z_i) max(|z_i| − t, 0)`.
pub fn soft_threshold(z: &[f64], t: f64) -> Vec<f64> {
    z.iter()
        .map(|v| {
            let mag = (v.abs() - t).max(0.0);
            if mag == 0.0 {
                0.0
            } else {
                mag.copysign(*v)
            }
        })
        .collect()
}

/// QP for `argmin ‖x‖₁ + (1/2t)‖x − z‖²  s.t.  Ax = b, lb ≤ x ≤ ub`
/// in the variables `(x, s)` with `|x| ≤ s`.
pub fn l1_box_affine_qp(
    z: &[f64],
    t: f64,
    a: &DenseMatrix,
    b: &[f64],
    lb: &[f64],
    ub: &[f64],
) -> Result<QpProblem, ProxError> {
    let n = z.len();
    if lb.len() != n || ub.len() != n || b.len() != a.rows() || (a.rows() > 0 && a.cols() != n) {
        return Err(ProxError::Dimension("l1 box affine data"));
    }
    if !(t > 0.0) {
        return Err(ProxError::NonPositiveScale(t));
    }
    let k = a.rows();
    let mut p = DenseMatrix::zeros(2 * n, 2 * n);
    for j in 0..n {
        p[(j, j)] = 1.0 / t;
    }
    let mut c = DenseMatrix::zeros(k + 3 * n, 2 * n);
    let mut l = Vec::with_capacity(k + 3 * n);
    let mut u = Vec::with_capacity(k + 3 * n);
    for i in 0..k {
        for j in 0..n {
            c[(i, j)] = a[(i, j)];
        }
        l.push(b[i]);
        u.push(b[i]);
    }
    for j in 0..n {
        c[(k + j, j)] = 1.0;
        l.push(lb[j]);
        u.push(ub[j]);
    }
    for j in 0..n {
        // s − x ≥ 0
        c[(k + n + j, j)] = -1.0;
        c[(k + n + j, n + j)] = 1.0;
        l.push(0.0);
        u.push(f64::INFINITY);
        // s + x ≥ 0
        c[(k + 2 * n + j, j)] = 1.0;
        c[(k + 2 * n + j, n + j)] = 1.0;
        l.push(0.0);
        u.push(f64::INFINITY);
    }
    Ok(QpProblem::new(p, l1_linear_cost(z, t), c, l, u)?)
}

fn l1_linear_cost(z: &[f64], t: f64) -> Vec<f64> {
    let n = z.len();
    let mut q = vec![1.0; 2 * n];
    for j in 0..n {
        q[j] = -z[j] / t;
    }
    q
}

pub fn prox_l1_box_affine(
    z: &[f64],
    t: f64,
    a: &DenseMatrix,
    b: &[f64],
    lb: &[f64],
    ub: &[f64],
    settings: &QpSettings,
) -> Result<Vec<f64>, ProxError> {
    let qp = l1_box_affine_qp(z, t, a, b, lb, ub)?;
    let sol = QpSolver::new(qp, settings.clone())?.solve().into_solved()?;
    Ok(sol.x[..z.len()].to_vec())
}

/// One affine piece `r − aᵀx` of a max-affine numerator.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinePiece {
    pub a: Vec<f64>,
    pub r: f64,
}

impl AffinePiece {
    pub fn value(&self, x: &[f64]) -> f64 {
        self.r - dot(&self.a, x)
    }
}

pub fn max_affine_value(pieces: &[AffinePiece], x: &[f64]) -> f64 {
    pieces
        .iter()
        .map(|p| p.value(x))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// QP for `argmin max_i(r_i − a_iᵀx) + (1/2t)‖x − z‖²`, optionally over the unit
/// simplex, with the epigraph variable `s` as last coordinate.
pub fn max_affine_qp(
    z: &[f64],
    t: f64,
    pieces: &[AffinePiece],
    simplex: bool,
) -> Result<QpProblem, ProxError> {
    let n = z.len();
    if pieces.is_empty() || pieces.iter().any(|p| p.a.len() != n) {
        return Err(ProxError::Dimension("affine pieces"));
    }
    if !(t > 0.0) {
        return Err(ProxError::NonPositiveScale(t));
    }
    let m1 = pieces.len();
    let rows = m1 + if simplex { 1 + n } else { 0 };
    let mut p = DenseMatrix::zeros(n + 1, n + 1);
    for j in 0..n {
        p[(j, j)] = 1.0 / t;
    }
    let mut c = DenseMatrix::zeros(rows, n + 1);
    let mut l = Vec::with_capacity(rows);
    let mut u = Vec::with_capacity(rows);
    // aᵢᵀx + s ≥ rᵢ
    for (i, piece) in pieces.iter().enumerate() {
        for j in 0..n {
            c[(i, j)] = piece.a[j];
        }
        c[(i, n)] = 1.0;
        l.push(piece.r);
        u.push(f64::INFINITY);
    }
    if simplex {
        for j in 0..n {
            c[(m1, j)] = 1.0;
        }
        l.push(1.0);
        u.push(1.0);
        for j in 0..n {
            c[(m1 + 1 + j, j)] = 1.0;
            l.push(0.0);
            u.push(f64::INFINITY);
        }
    }
    Ok(QpProblem::new(p, max_affine_linear_cost(z, t), c, l, u)?)
}

fn max_affine_linear_cost(z: &[f64], t: f64) -> Vec<f64> {
    let mut q: Vec<f64> = z.iter().map(|v| -v / t).collect();
    q.push(1.0);
    q
}

pub fn prox_maxaffine_polytope(
    z: &[f64],
    t: f64,
    pieces: &[AffinePiece],
    simplex: bool,
    settings: &QpSettings,
) -> Result<Vec<f64>, ProxError> {
    let qp = max_affine_qp(z, t, pieces, simplex)?;
    let sol = QpSolver::new(qp, settings.clone())?.solve().into_solved()?;
    Ok(sol.x[..z.len()].to_vec())
}

/// Per-solve state of a QP-backed prox: the solver keeps its factorization
/// and warm-start iterates as long as the prox scale is unchanged.
#[derive(Debug, Default)]
pub struct ProxCache {
    qp: Option<(f64, QpSolver)>,
}

impl ProxCache {
    pub fn new() -> Self {
        Self::default()
    }

    fn solve_with(
        &mut self,
        scale: f64,
        q: &[f64],
        build: impl FnOnce() -> Result<QpProblem, ProxError>,
        settings: &QpSettings,
    ) -> Result<Vec<f64>, ProxError> {
        let reusable = matches!(&self.qp, Some((s, _)) if *s == scale);
        if !reusable {
            self.qp = Some((scale, QpSolver::new(build()?, settings.clone())?));
        }
        let (_, solver) = self.qp.as_mut().expect("cached solver");
        solver.update_linear_cost(q)?;
        Ok(solver.solve().into_solved()?.x)
    }
}

/// The nonsmooth part of the numerator together with the constraint set:
/// `h = fⁿ + ι_S`.
pub trait ProxOracle: Send + Sync {
    /// `h(x)`, `+∞` outside `S` (up to [`FEASIBILITY_TOL`]).
    fn value(&self, x: &[f64]) -> f64;

    /// A minimizer of `h(x) + (1/2t)‖x − z‖²`.
    fn prox(
        &self,
        scale: f64,
        anchor: &[f64],
        cache: &mut ProxCache,
    ) -> Result<Vec<f64>, ProxError>;

    fn is_feasible(&self, x: &[f64]) -> bool {
        self.value(x).is_finite()
    }
}

impl<T: ProxOracle + ?Sized> ProxOracle for Box<T> {
    fn value(&self, x: &[f64]) -> f64 {
        (**self).value(x)
    }

    fn prox(
        &self,
        scale: f64,
        anchor: &[f64],
        cache: &mut ProxCache,
    ) -> Result<Vec<f64>, ProxError> {
        (**self).prox(scale, anchor, cache)
    }
}

fn in_box(x: &[f64], lb: &[f64], ub: &[f64]) -> bool {
    x.len() == lb.len()
        && x.iter()
            .zip(lb.iter().zip(ub))
            .all(|(v, (l, u))| *v >= l - FEASIBILITY_TOL && *v <= u + FEASIBILITY_TOL)
}

/// `ι_[lb, ub]`
#[derive(Debug, Clone)]
pub struct BoxIndicator {
    pub lb: Vec<f64>,
    pub ub: Vec<f64>,
}

impl ProxOracle for BoxIndicator {
    fn value(&self, x: &[f64]) -> f64 {
        if in_box(x, &self.lb, &self.ub) {
            0.0
        } else {
            f64::INFINITY
        }
    }

    fn prox(
        &self,
        _scale: f64,
        anchor: &[f64],
        _cache: &mut ProxCache,
    ) -> Result<Vec<f64>, ProxError> {
        if anchor.len() != self.lb.len() {
            return Err(ProxError::Dimension("box anchor"));
        }
        Ok(project_box(anchor, &self.lb, &self.ub))
    }
}

/// Indicator of the unit sphere.
#[derive(Debug, Clone, Copy, Default)]
pub struct SphereIndicator;

impl ProxOracle for SphereIndicator {
    fn value(&self, x: &[f64]) -> f64 {
        if (norm2(x) - 1.0).abs() <= FEASIBILITY_TOL {
            0.0
        } else {
            f64::INFINITY
        }
    }

    fn prox(
        &self,
        _scale: f64,
        anchor: &[f64],
        _cache: &mut ProxCache,
    ) -> Result<Vec<f64>, ProxError> {
        Ok(project_sphere(anchor))
    }
}

/// Indicator of the unit simplex.
#[derive(Debug, Clone, Copy, Default)]
pub struct SimplexIndicator;

fn on_simplex(x: &[f64]) -> bool {
    x.iter().all(|v| *v >= -FEASIBILITY_TOL)
        && (x.iter().sum::<f64>() - 1.0).abs() <= FEASIBILITY_TOL
}

impl ProxOracle for SimplexIndicator {
    fn value(&self, x: &[f64]) -> f64 {
        if on_simplex(x) {
            0.0
        } else {
            f64::INFINITY
        }
    }

    fn prox(
        &self,
        _scale: f64,
        anchor: &[f64],
        _cache: &mut ProxCache,
    ) -> Result<Vec<f64>, ProxError> {
        Ok(project_simplex(anchor))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum L1ProxMethod {
    /// Interior point with the QP path as fallback.
    #[default]
    InteriorPoint,
    Qp,
}

/// `‖x‖₁ + ι_{Ax = b, lb ≤ x ≤ ub}`
#[derive(Debug, Clone)]
pub struct L1BoxAffine {
    pub a: DenseMatrix,
    pub b: Vec<f64>,
    pub lb: Vec<f64>,
    pub ub: Vec<f64>,
    pub settings: QpSettings,
    pub ipm: IpmSettings,
    pub method: L1ProxMethod,
}

impl L1BoxAffine {
    pub fn new(a: DenseMatrix, b: Vec<f64>, lb: Vec<f64>, ub: Vec<f64>) -> Result<Self, ProxError> {
        let n = lb.len();
        if ub.len() != n || b.len() != a.rows() || (a.rows() > 0 && a.cols() != n) {
            return Err(ProxError::Dimension("l1 box affine data"));
        }
        Ok(Self {
            a,
            b,
            lb,
            ub,
            settings: QpSettings::default(),
            ipm: IpmSettings::default(),
            method: L1ProxMethod::default(),
        })
    }

    pub fn dim(&self) -> usize {
        self.lb.len()
    }

    pub fn is_feasible_point(&self, x: &[f64]) -> bool {
        if !in_box(x, &self.lb, &self.ub) {
            return false;
        }
        if self.a.rows() == 0 {
            return true;
        }
        self.a
            .matvec(x)
            .iter()
            .zip(&self.b)
            .all(|(ax, b)| (ax - b).abs() <= FEASIBILITY_TOL)
    }
}

impl ProxOracle for L1BoxAffine {
    fn value(&self, x: &[f64]) -> f64 {
        if self.is_feasible_point(x) {
            norm1(x)
        } else {
            f64::INFINITY
        }
    }

    fn prox(
        &self,
        scale: f64,
        anchor: &[f64],
        cache: &mut ProxCache,
    ) -> Result<Vec<f64>, ProxError> {
        let n = self.dim();
        if anchor.len() != n {
            return Err(ProxError::Dimension("l1 anchor"));
        }
        if self.method == L1ProxMethod::InteriorPoint {
            let out = prox_l1_box_affine_ipm(
                anchor, scale, &self.a, &self.b, &self.lb, &self.ub, &self.ipm,
            );
            if let Ok(x) = out {
                return Ok(x);
            }
        }
        let q = l1_linear_cost(anchor, scale);
        let mut x = cache.solve_with(
            scale,
            &q,
            || l1_box_affine_qp(anchor, scale, &self.a, &self.b, &self.lb, &self.ub),
            &self.settings,
        )?;
        x.truncate(n);
        Ok(x)
    }
}

/// `max_i(r_i − a_iᵀx)`, optionally restricted to the unit simplex.
#[derive(Debug, Clone)]
pub struct MaxAffinePolytope {
    pub pieces: Vec<AffinePiece>,
    pub simplex: bool,
    pub settings: QpSettings,
}

impl MaxAffinePolytope {
    pub fn new(pieces: Vec<AffinePiece>, simplex: bool) -> Result<Self, ProxError> {
        let n = pieces
            .first()
            .map(|p| p.a.len())
            .ok_or(ProxError::Dimension("no pieces"))?;
        if pieces.iter().any(|p| p.a.len() != n) {
            return Err(ProxError::Dimension("affine pieces"));
        }
        Ok(Self {
            pieces,
            simplex,
            settings: QpSettings::default(),
        })
    }

    pub fn dim(&self) -> usize {
        self.pieces[0].a.len()
    }
}

impl ProxOracle for MaxAffinePolytope {
    fn value(&self, x: &[f64]) -> f64 {
        if x.len() != self.dim() || (self.simplex && !on_simplex(x)) {
            return f64::INFINITY;
        }
        max_affine_value(&self.pieces, x)
    }

    fn prox(
        &self,
        scale: f64,
        anchor: &[f64],
        cache: &mut ProxCache,
    ) -> Result<Vec<f64>, ProxError> {
        let n = self.dim();
        if anchor.len() != n {
            return Err(ProxError::Dimension("max-affine anchor"));
        }
        let q = max_affine_linear_cost(anchor, scale);
        let mut x = cache.solve_with(
            scale,
            &q,
            || max_affine_qp(anchor, scale, &self.pieces, self.simplex),
            &self.settings,
        )?;
        x.truncate(n);
        Ok(x)
    }
}
