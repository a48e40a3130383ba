//! Operator-splitting (ADMM) solver for convex quadratic programs
//!
//! ```text
//! minimize    ½ xᵀPx + qᵀx
//! subject to  l ≤ Ax ≤ u
//! ```
//!
//! The iteration follows the OSQP splitting: one Cholesky factorization of the
//! reduced KKT matrix `P + σI + Aᵀ diag(ρ) A` is computed at setup, the problem
//! is Ruiz-equilibrated, and every solve warm-starts from the previous iterates.
//! Once the residuals are moderately small the solver guesses the active set and
//! solves the equality-constrained KKT system for it ("polishing"); an accepted
//! polish returns a solution accurate to round-off.
//!
//! Dual sign convention: `Px + q + Aᵀy = 0`, `y_i > 0` on an active upper bound,
//! `y_i < 0` on an active lower bound.

use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::linalg::{Cholesky, DenseMatrix, LinalgError};
use crate::vector::{dot, norm_inf};

const MIN_SCALING: f64 = 1e-4;
const MAX_SCALING: f64 = 1e4;
const RHO_EQ_FACTOR: f64 = 1e3;
const RHO_MIN: f64 = 1e-6;
const DIVISION_TOL: f64 = 1e-30;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QpError {
    #[error("dimension mismatch: {0}")]
    Dimension(&'static str),
    #[error("lower bound exceeds upper bound on row {0}")]
    InvertedBounds(usize),
    #[error("P is not symmetric positive semidefinite")]
    NotPsd,
    #[error("non-finite problem data")]
    NonFinite,
    #[error("KKT factorization failed: {0}")]
    Factorization(#[from] LinalgError),
    #[error("solver stopped with status {status:?} (primal {primal_residual:e}, dual {dual_residual:e})")]
    Unsolved {
        status: QpStatus,
        primal_residual: f64,
        dual_residual: f64,
    },
}

/// Convex QP in the standard form `min ½xᵀPx + qᵀx  s.t.  l ≤ Ax ≤ u`.
///
/// Infinite entries of `l`/`u` denote absent bounds.
#[derive(Debug, Clone)]
pub struct QpProblem {
    pub p: DenseMatrix,
    pub q: Vec<f64>,
    pub a: DenseMatrix,
    pub l: Vec<f64>,
    pub u: Vec<f64>,
}

impl QpProblem {
    pub fn new(
        p: DenseMatrix,
        q: Vec<f64>,
        a: DenseMatrix,
        l: Vec<f64>,
        u: Vec<f64>,
    ) -> Result<Self, QpError> {
        let n = q.len();
        if p.rows() != n || p.cols() != n {
            return Err(QpError::Dimension("P must be n x n"));
        }
        if a.cols() != n && a.rows() > 0 {
            return Err(QpError::Dimension("A must have n columns"));
        }
        if l.len() != a.rows() || u.len() != a.rows() {
            return Err(QpError::Dimension(
                "bounds must have one entry per row of A",
            ));
        }
        if !q.iter().all(|v| v.is_finite()) || l.iter().chain(&u).any(|v| v.is_nan()) {
            return Err(QpError::NonFinite);
        }
        if let Some(i) = (0..l.len()).find(|&i| l[i] > u[i]) {
            return Err(QpError::InvertedBounds(i));
        }
        let pmax = p.max_abs().max(1.0);
        if !p.is_symmetric(1e-10 * pmax) {
            return Err(QpError::NotPsd);
        }
        let mut shifted = p.clone();
        shifted.add_diag(1e-10 * pmax);
        Cholesky::factor(&shifted).map_err(|_| QpError::NotPsd)?;
        let a = if a.rows() == 0 {
            DenseMatrix::zeros(0, n)
        } else {
            a
        };
        Ok(Self { p, q, a, l, u })
    }

    pub fn num_vars(&self) -> usize {
        self.q.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.a.rows()
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        0.5 * dot(x, &self.p.matvec(x)) + dot(&self.q, x)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSettings {
    pub rho: f64,
    pub sigma: f64,
    /// Over-relaxation parameter.
    pub alpha: f64,
    pub eps_abs: f64,
    pub eps_rel: f64,
    pub eps_prim_inf: f64,
    pub eps_dual_inf: f64,
    pub max_iter: usize,
    /// Ruiz equilibration passes.
    pub scaling_iters: usize,
    /// Residuals are evaluated every `check_interval` iterations.
    pub check_interval: usize,
    pub polish: bool,
    /// Relative residual level below which polishing is attempted.
    pub polish_trigger: f64,
    pub polish_delta: f64,
    pub polish_refine_iters: usize,
}

impl Default for QpSettings {
    fn default() -> Self {
        Self {
            rho: 0.1,
            sigma: 1e-6,
            alpha: 1.6,
            eps_abs: 1e-9,
            eps_rel: 1e-9,
            eps_prim_inf: 1e-7,
            eps_dual_inf: 1e-7,
            max_iter: 200_000,
            scaling_iters: 10,
            check_interval: 10,
            polish: true,
            polish_trigger: 1e-3,
            polish_delta: 1e-7,
            polish_refine_iters: 25,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpStatus {
    Solved,
    MaxIters,
    InfeasibleSuspect,
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub status: QpStatus,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub iterations: usize,
    pub polished: bool,
}

impl QpSolution {
    pub fn into_solved(self) -> Result<Self, QpError> {
        match self.status {
            QpStatus::Solved => Ok(self),
            status => Err(QpError::Unsolved {
                status,
                primal_residual: self.primal_residual,
                dual_residual: self.dual_residual,
            }),
        }
    }
}

/// KKT residuals of a primal-dual pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktResidual {
    /// `‖Px + q + Aᵀy‖∞`
    pub stationarity: f64,
    /// `‖Ax − Π_[l,u](Ax)‖∞`
    pub primal: f64,
    /// `max_i |y_i| · dist(A_i x, bound selected by sign(y_i))`
    pub complementarity: f64,
}

impl KktResidual {
    pub fn max(&self) -> f64 {
        self.stationarity.max(self.primal).max(self.complementarity)
    }
}

pub fn kkt_residual(p: &QpProblem, x: &[f64], y: &[f64]) -> KktResidual {
    let mut grad = p.p.matvec(x);
    for (g, qi) in grad.iter_mut().zip(&p.q) {
        *g += qi;
    }
    if p.num_constraints() > 0 {
        for (g, v) in grad.iter_mut().zip(p.a.matvec_t(y)) {
            *g += v;
        }
    }
    let ax = p.a.matvec(x);
    let mut primal = 0.0f64;
    let mut complementarity = 0.0f64;
    for i in 0..ax.len() {
        let proj = ax[i].clamp(p.l[i], p.u[i]);
        primal = primal.max((ax[i] - proj).abs());
        let gap = if y[i] > 0.0 {
            (ax[i] - p.u[i]).abs()
        } else if y[i] < 0.0 {
            (ax[i] - p.l[i]).abs()
        } else {
            0.0
        };
        if y[i] != 0.0 {
            complementarity = complementarity.max(y[i].abs() * gap);
        }
    }
    KktResidual {
        stationarity: norm_inf(&grad),
        primal,
        complementarity,
    }
}

/// Compressed sparse rows; the QP constraint matrices are mostly identity blocks.
#[derive(Debug, Clone)]
struct Csr {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl Csr {
    fn from_dense(a: &DenseMatrix, cols: usize) -> Self {
        let mut indptr = Vec::with_capacity(a.rows() + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for i in 0..a.rows() {
            for (j, v) in a.row(i).iter().enumerate() {
                if *v != 0.0 {
                    indices.push(j);
                    values.push(*v);
                }
            }
            indptr.push(indices.len());
        }
        Self {
            rows: a.rows(),
            cols,
            indptr,
            indices,
            values,
        }
    }

    #[inline]
    fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.indptr[i]..self.indptr[i + 1];
        (&self.indices[r.clone()], &self.values[r])
    }

    fn row_dot(&self, i: usize, x: &[f64]) -> f64 {
        let (idx, val) = self.row(i);
        idx.iter().zip(val).map(|(j, v)| v * x[*j]).sum()
    }

    fn matvec(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate().take(self.rows) {
            *o = self.row_dot(i, x);
        }
    }

    /// `out = Aᵀ y`
    fn matvec_t(&self, y: &[f64], out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.cols);
        out.iter_mut().for_each(|o| *o = 0.0);
        for (i, yi) in y.iter().enumerate() {
            if *yi == 0.0 {
                continue;
            }
            let (idx, val) = self.row(i);
            for (j, v) in idx.iter().zip(val) {
                out[*j] += v * yi;
            }
        }
    }

    fn scale(&mut self, row_scale: &[f64], col_scale: &[f64]) {
        for i in 0..self.rows {
            for k in self.indptr[i]..self.indptr[i + 1] {
                self.values[k] *= row_scale[i] * col_scale[self.indices[k]];
            }
        }
    }

    /// Adds `w · a_i a_iᵀ` to `k`.
    fn add_outer(&self, i: usize, w: f64, k: &mut DenseMatrix) {
        let (idx, val) = self.row(i);
        for (a, va) in idx.iter().zip(val) {
            for (b, vb) in idx.iter().zip(val) {
                k[(*a, *b)] += w * va * vb;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum RowKind {
    Free,
    Equality,
    Inequality,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Activity {
    Inactive,
    Lower,
    Upper,
}

struct PolishCache {
    rows: Vec<usize>,
    factor: Cholesky,
}

/// Reusable ADMM workspace: scaling, KKT factorization and warm-start iterates.
///
/// Only the linear cost and bounds may change between solves. A single
/// instance must not be shared between concurrent solves.
pub struct QpSolver {
    problem: QpProblem,
    settings: QpSettings,
    // Ruiz scaling: x = D x̂, ẑ = E z, objective scaled by c
    d: Vec<f64>,
    e: Vec<f64>,
    c: f64,
    p_s: DenseMatrix,
    a_s: Csr,
    q_s: Vec<f64>,
    l_s: Vec<f64>,
    u_s: Vec<f64>,
    kinds: Vec<RowKind>,
    rho: Vec<f64>,
    kkt: Cholesky,
    x: Vec<f64>,
    z: Vec<f64>,
    y: Vec<f64>,
    polish_cache: Option<PolishCache>,
}

impl core::fmt::Debug for QpSolver {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("QpSolver")
            .field("n", &self.problem.num_vars())
            .field("m", &self.problem.num_constraints())
            .finish()
    }
}

fn limit_scaling(v: f64) -> f64 {
    if v < MIN_SCALING {
        1.0
    } else if v > MAX_SCALING {
        MAX_SCALING
    } else {
        v
    }
}

impl QpSolver {
    pub fn new(problem: QpProblem, settings: QpSettings) -> Result<Self, QpError> {
        let n = problem.num_vars();
        let m = problem.num_constraints();
        let mut p_s = problem.p.clone();
        let mut a_s = Csr::from_dense(&problem.a, n);
        let mut q_s = problem.q.clone();
        let mut d = vec![1.0; n];
        let mut e = vec![1.0; m];
        let mut c = 1.0;

        for _ in 0..settings.scaling_iters {
            let mut col_norm = vec![0.0f64; n];
            for j in 0..n {
                for i in 0..n {
                    col_norm[j] = col_norm[j].max(p_s[(i, j)].abs());
                }
            }
            let mut row_norm = vec![0.0f64; m];
            for i in 0..m {
                let (idx, val) = a_s.row(i);
                for (j, v) in idx.iter().zip(val) {
                    col_norm[*j] = col_norm[*j].max(v.abs());
                    row_norm[i] = row_norm[i].max(v.abs());
                }
            }
            let dx: Vec<f64> = col_norm
                .iter()
                .map(|v| 1.0 / libm::sqrt(limit_scaling(*v)))
                .collect();
            let dz: Vec<f64> = row_norm
                .iter()
                .map(|v| 1.0 / libm::sqrt(limit_scaling(*v)))
                .collect();
            for i in 0..n {
                for j in 0..n {
                    p_s[(i, j)] *= dx[i] * dx[j];
                }
                q_s[i] *= dx[i];
                d[i] *= dx[i];
            }
            a_s.scale(&dz, &dx);
            for i in 0..m {
                e[i] *= dz[i];
            }
            // cost scaling
            let mean_col = if n > 0 {
                (0..n)
                    .map(|j| (0..n).fold(0.0f64, |acc, i| acc.max(p_s[(i, j)].abs())))
                    .sum::<f64>()
                    / n as f64
            } else {
                0.0
            };
            let cost = limit_scaling(mean_col.max(norm_inf(&q_s)));
            let gamma = 1.0 / cost;
            p_s = p_s.scaled(gamma);
            q_s.iter_mut().for_each(|v| *v *= gamma);
            c *= gamma;
        }

        let l_s: Vec<f64> = problem.l.iter().zip(&e).map(|(l, ei)| l * ei).collect();
        let u_s: Vec<f64> = problem.u.iter().zip(&e).map(|(u, ei)| u * ei).collect();
        let kinds = row_kinds(&problem.l, &problem.u);
        let rho = rho_vector(&kinds, settings.rho);
        let kkt = factor_kkt(&p_s, &a_s, &rho, settings.sigma)?;

        let mut solver = Self {
            x: vec![0.0; n],
            z: vec![0.0; m],
            y: vec![0.0; m],
            problem,
            settings,
            d,
            e,
            c,
            p_s,
            a_s,
            q_s,
            l_s,
            u_s,
            kinds,
            rho,
            kkt,
            polish_cache: None,
        };
        solver.project_z();
        Ok(solver)
    }

    pub fn problem(&self) -> &QpProblem {
        &self.problem
    }

    pub fn settings(&self) -> &QpSettings {
        &self.settings
    }

    /// Replaces the linear cost; the factorization is reused.
    pub fn update_linear_cost(&mut self, q: &[f64]) -> Result<(), QpError> {
        if q.len() != self.problem.num_vars() {
            return Err(QpError::Dimension("q length"));
        }
        if !q.iter().all(|v| v.is_finite()) {
            return Err(QpError::NonFinite);
        }
        self.problem.q.copy_from_slice(q);
        for i in 0..q.len() {
            self.q_s[i] = self.c * self.d[i] * q[i];
        }
        Ok(())
    }

    /// Replaces the bounds; refactors only if the equality pattern changes.
    pub fn update_bounds(&mut self, l: &[f64], u: &[f64]) -> Result<(), QpError> {
        let m = self.problem.num_constraints();
        if l.len() != m || u.len() != m {
            return Err(QpError::Dimension("bounds length"));
        }
        if let Some(i) = (0..m).find(|&i| l[i] > u[i]) {
            return Err(QpError::InvertedBounds(i));
        }
        self.problem.l.copy_from_slice(l);
        self.problem.u.copy_from_slice(u);
        for i in 0..m {
            self.l_s[i] = l[i] * self.e[i];
            self.u_s[i] = u[i] * self.e[i];
        }
        let kinds = row_kinds(l, u);
        if kinds != self.kinds {
            self.kinds = kinds;
            self.rho = rho_vector(&self.kinds, self.settings.rho);
            self.kkt = factor_kkt(&self.p_s, &self.a_s, &self.rho, self.settings.sigma)?;
        }
        self.project_z();
        Ok(())
    }

    /// Sets the starting primal-dual point (unscaled).
    pub fn warm_start(&mut self, x: &[f64], y: &[f64]) {
        for i in 0..self.x.len() {
            self.x[i] = x[i] / self.d[i];
        }
        self.project_z();
        for i in 0..self.y.len() {
            self.y[i] = self.c * y[i] / self.e[i];
        }
    }

    pub fn reset(&mut self) {
        self.x.iter_mut().for_each(|v| *v = 0.0);
        self.y.iter_mut().for_each(|v| *v = 0.0);
        self.project_z();
    }

    /// `z = Π_[l,u](A x)`; keeps the splitting variable feasible.
    fn project_z(&mut self) {
        self.a_s.matvec(&self.x, &mut self.z);
        for i in 0..self.z.len() {
            self.z[i] = self.z[i].clamp(self.l_s[i], self.u_s[i]);
        }
    }

    fn unscaled_x(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.d).map(|(v, d)| v * d).collect()
    }

    fn unscaled_y(&self, y: &[f64]) -> Vec<f64> {
        y.iter().zip(&self.e).map(|(v, e)| v * e / self.c).collect()
    }

    /// Unscaled primal/dual residuals and their tolerance thresholds.
    fn residuals(&self, x: &[f64], z: &[f64], y: &[f64], ws: &mut Workspace) -> Residuals {
        let m = self.problem.num_constraints();
        let n = self.problem.num_vars();
        self.a_s.matvec(x, &mut ws.ax);
        let mut prim = 0.0f64;
        let mut ax_norm = 0.0f64;
        let mut z_norm = 0.0f64;
        for i in 0..m {
            let inv = 1.0 / self.e[i];
            prim = prim.max(((ws.ax[i] - z[i]) * inv).abs());
            ax_norm = ax_norm.max((ws.ax[i] * inv).abs());
            z_norm = z_norm.max((z[i] * inv).abs());
        }
        let px = self.p_s.matvec(x);
        self.a_s.matvec_t(y, &mut ws.aty);
        let mut dual = 0.0f64;
        let mut px_norm = 0.0f64;
        let mut aty_norm = 0.0f64;
        let mut q_norm = 0.0f64;
        let inv_c = 1.0 / self.c;
        for j in 0..n {
            let inv = inv_c / self.d[j];
            dual = dual.max(((px[j] + self.q_s[j] + ws.aty[j]) * inv).abs());
            px_norm = px_norm.max((px[j] * inv).abs());
            aty_norm = aty_norm.max((ws.aty[j] * inv).abs());
            q_norm = q_norm.max((self.q_s[j] * inv).abs());
        }
        let s = &self.settings;
        Residuals {
            prim,
            dual,
            prim_scale: ax_norm.max(z_norm),
            dual_scale: px_norm.max(aty_norm).max(q_norm),
            eps_prim: s.eps_abs + s.eps_rel * ax_norm.max(z_norm),
            eps_dual: s.eps_abs + s.eps_rel * px_norm.max(aty_norm).max(q_norm),
        }
    }

    fn primal_infeasible(&self, dy: &[f64], ws: &mut Workspace) -> bool {
        let m = dy.len();
        let norm_dy = (0..m).fold(0.0f64, |acc, i| acc.max((self.e[i] * dy[i]).abs()));
        if norm_dy <= DIVISION_TOL {
            return false;
        }
        let eps = self.settings.eps_prim_inf * norm_dy;
        let mut support = 0.0;
        for i in 0..m {
            if dy[i] > 0.0 {
                if self.u_s[i].is_infinite() {
                    return false;
                }
                support += self.u_s[i] * dy[i];
            } else if dy[i] < 0.0 {
                if self.l_s[i].is_infinite() {
                    return false;
                }
                support += self.l_s[i] * dy[i];
            }
        }
        if support >= -eps {
            return false;
        }
        self.a_s.matvec_t(dy, &mut ws.aty);
        let n = self.d.len();
        let aty = (0..n).fold(0.0f64, |acc, j| acc.max((ws.aty[j] / self.d[j]).abs()));
        aty <= eps
    }

    fn dual_infeasible(&self, dx: &[f64], ws: &mut Workspace) -> bool {
        let n = dx.len();
        let norm_dx = (0..n).fold(0.0f64, |acc, j| acc.max((self.d[j] * dx[j]).abs()));
        if norm_dx <= DIVISION_TOL {
            return false;
        }
        let eps = self.settings.eps_dual_inf * norm_dx;
        if dot(&self.q_s, dx) / self.c >= -eps {
            return false;
        }
        let pdx = self.p_s.matvec(dx);
        if (0..n).any(|j| (pdx[j] / (self.d[j] * self.c)).abs() > eps) {
            return false;
        }
        self.a_s.matvec(dx, &mut ws.ax);
        for i in 0..self.e.len() {
            let v = ws.ax[i] / self.e[i];
            if self.u_s[i].is_finite() && v > eps {
                return false;
            }
            if self.l_s[i].is_finite() && v < -eps {
                return false;
            }
        }
        true
    }

    fn guess_active(&self) -> Vec<Activity> {
        (0..self.z.len())
            .map(|i| match self.kinds[i] {
                RowKind::Free => Activity::Inactive,
                RowKind::Equality => Activity::Lower,
                RowKind::Inequality => {
                    if self.z[i] - self.l_s[i] < -self.y[i] {
                        Activity::Lower
                    } else if self.u_s[i] - self.z[i] < self.y[i] {
                        Activity::Upper
                    } else {
                        Activity::Inactive
                    }
                }
            })
            .collect()
    }

    /// Solves the equality-constrained QP on a guessed active set.
    /// Returns scaled `(x, y)`.
    fn polish(&mut self, active: &[Activity]) -> Result<(Vec<f64>, Vec<f64>), QpError> {
        let n = self.problem.num_vars();
        let delta = self.settings.polish_delta;
        let rows: Vec<usize> = (0..active.len())
            .filter(|&i| active[i] != Activity::Inactive)
            .collect();
        let targets: Vec<f64> = rows
            .iter()
            .map(|&i| match active[i] {
                Activity::Upper => self.u_s[i],
                _ => self.l_s[i],
            })
            .collect();
        let reuse = matches!(&self.polish_cache, Some(c) if c.rows == rows);
        if !reuse {
            let mut k = self.p_s.clone();
            k.add_diag(delta);
            for &i in &rows {
                self.a_s.add_outer(i, 1.0 / delta, &mut k);
            }
            let factor = Cholesky::factor(&k)?;
            self.polish_cache = Some(PolishCache {
                rows: rows.clone(),
                factor,
            });
        }
        let factor = &self
            .polish_cache
            .as_ref()
            .expect("polish cache populated")
            .factor;

        // Āᵀ v over the active rows
        let at = |v: &[f64], out: &mut Vec<f64>| {
            out.iter_mut().for_each(|o| *o = 0.0);
            for (k, &i) in rows.iter().enumerate() {
                let (idx, val) = self.a_s.row(i);
                for (j, a) in idx.iter().zip(val) {
                    out[*j] += a * v[k];
                }
            }
        };
        let mut tmp = vec![0.0; n];
        at(&targets, &mut tmp);
        let mut x: Vec<f64> = (0..n).map(|j| -self.q_s[j] + tmp[j] / delta).collect();
        factor.solve_in_place(&mut x);
        let mut yb: Vec<f64> = rows
            .iter()
            .zip(&targets)
            .map(|(&i, t)| (self.a_s.row_dot(i, &x) - t) / delta)
            .collect();

        for _ in 0..self.settings.polish_refine_iters {
            let px = self.p_s.matvec(&x);
            at(&yb, &mut tmp);
            let r1: Vec<f64> = (0..n).map(|j| -self.q_s[j] - px[j] - tmp[j]).collect();
            let r2: Vec<f64> = rows
                .iter()
                .zip(&targets)
                .map(|(&i, t)| t - self.a_s.row_dot(i, &x))
                .collect();
            let rnorm = norm_inf(&r1).max(norm_inf(&r2));
            if rnorm <= 1e-15 * (1.0 + norm_inf(&x)) {
                break;
            }
            at(&r2, &mut tmp);
            let mut dx: Vec<f64> = (0..n).map(|j| r1[j] + tmp[j] / delta).collect();
            factor.solve_in_place(&mut dx);
            for (k, &i) in rows.iter().enumerate() {
                yb[k] += (self.a_s.row_dot(i, &dx) - r2[k]) / delta;
            }
            for j in 0..n {
                x[j] += dx[j];
            }
        }

        let mut y = vec![0.0; active.len()];
        for (k, &i) in rows.iter().enumerate() {
            y[i] = yb[k];
        }
        Ok((x, y))
    }

    /// Accepts a polished point when it is primal feasible, stationary and has
    /// multipliers of the right sign, all within the solve tolerances.
    fn accept_polish(
        &self,
        x: &[f64],
        y: &[f64],
        active: &[Activity],
        ws: &mut Workspace,
    ) -> Option<Residuals> {
        let m = y.len();
        self.a_s.matvec(x, &mut ws.ax);
        let z: Vec<f64> = (0..m)
            .map(|i| ws.ax[i].clamp(self.l_s[i], self.u_s[i]))
            .collect();
        let res = self.residuals(x, &z, y, ws);
        if res.prim > res.eps_prim || res.dual > res.eps_dual {
            return None;
        }
        for i in 0..m {
            let yu = y[i] * self.e[i] / self.c;
            let ok = match (self.kinds[i], active[i]) {
                (RowKind::Equality, _) => true,
                (_, Activity::Lower) => yu <= res.eps_dual,
                (_, Activity::Upper) => yu >= -res.eps_dual,
                (_, Activity::Inactive) => true,
            };
            if !ok {
                return None;
            }
        }
        Some(res)
    }

    /// Polishes on the guessed active set. Rows whose multiplier comes out with
    /// the wrong sign are released and the polish is repeated a few times.
    fn try_polish(
        &mut self,
        last_attempt: &mut Option<Vec<Activity>>,
        ws: &mut Workspace,
    ) -> Option<(Vec<f64>, Vec<f64>, Residuals)> {
        let mut active = self.guess_active();
        if last_attempt.as_ref() == Some(&active) {
            return None;
        }
        *last_attempt = Some(active.clone());
        for _ in 0..4 {
            let (x, y) = self.polish(&active).ok()?;
            if let Some(res) = self.accept_polish(&x, &y, &active, ws) {
                return Some((x, y, res));
            }
            let mut released = false;
            for i in 0..y.len() {
                let yu = y[i] * self.e[i] / self.c;
                let wrong = match (self.kinds[i], active[i]) {
                    (RowKind::Inequality, Activity::Lower) => yu > 0.0,
                    (RowKind::Inequality, Activity::Upper) => yu < 0.0,
                    _ => false,
                };
                if wrong {
                    active[i] = Activity::Inactive;
                    released = true;
                }
            }
            if !released {
                return None;
            }
        }
        None
    }

    /// Runs ADMM from the current iterates.
    pub fn solve(&mut self) -> QpSolution {
        let n = self.problem.num_vars();
        let m = self.problem.num_constraints();
        let s = self.settings.clone();
        let mut ws = Workspace::new(n, m);
        let mut rhs = vec![0.0; n];
        let mut xt = vec![0.0; n];
        let mut zt = vec![0.0; m];
        let mut x_prev = self.x.clone();
        let mut y_prev = self.y.clone();
        let mut last_polish: Option<Vec<Activity>> = None;
        let check_every = s.check_interval.max(1);

        // a warm start may already be optimal
        let mut res = self.residuals(&self.x.clone(), &self.z.clone(), &self.y.clone(), &mut ws);
        if res.prim <= res.eps_prim && res.dual <= res.eps_dual {
            if s.polish {
                if let Some((px, py, pres)) = self.try_polish(&mut last_polish, &mut ws) {
                    self.x = px;
                    self.project_z();
                    self.y = py;
                    return self.finish(QpStatus::Solved, pres, 0, true);
                }
            }
            return self.finish(QpStatus::Solved, res, 0, false);
        }

        for iter in 1..=s.max_iter {
            x_prev.copy_from_slice(&self.x);
            y_prev.copy_from_slice(&self.y);

            // rhs = σx − q + Aᵀ(ρ∘z − y)
            for i in 0..m {
                ws.tmp_m[i] = self.rho[i] * self.z[i] - self.y[i];
            }
            self.a_s.matvec_t(&ws.tmp_m, &mut rhs);
            for j in 0..n {
                rhs[j] += s.sigma * self.x[j] - self.q_s[j];
            }
            xt.copy_from_slice(&rhs);
            self.kkt.solve_in_place(&mut xt);
            self.a_s.matvec(&xt, &mut zt);

            for j in 0..n {
                self.x[j] = s.alpha * xt[j] + (1.0 - s.alpha) * self.x[j];
            }
            for i in 0..m {
                let zr = s.alpha * zt[i] + (1.0 - s.alpha) * self.z[i];
                let znew = (zr + self.y[i] / self.rho[i]).clamp(self.l_s[i], self.u_s[i]);
                self.y[i] += self.rho[i] * (zr - znew);
                self.z[i] = znew;
            }

            if iter % check_every != 0 && iter != s.max_iter {
                continue;
            }
            res = self.residuals(&self.x.clone(), &self.z.clone(), &self.y.clone(), &mut ws);
            let converged = res.prim <= res.eps_prim && res.dual <= res.eps_dual;
            if s.polish {
                let near = res.prim <= s.polish_trigger * (1.0 + res.prim_scale)
                    && res.dual <= s.polish_trigger * (1.0 + res.dual_scale);
                if near || converged {
                    if let Some((px, py, pres)) = self.try_polish(&mut last_polish, &mut ws) {
                        self.x = px;
                        self.project_z();
                        self.y = py;
                        return self.finish(QpStatus::Solved, pres, iter, true);
                    }
                }
            }
            if converged {
                return self.finish(QpStatus::Solved, res, iter, false);
            }
            let dy: Vec<f64> = self.y.iter().zip(&y_prev).map(|(a, b)| a - b).collect();
            if self.primal_infeasible(&dy, &mut ws) {
                return self.finish(QpStatus::InfeasibleSuspect, res, iter, false);
            }
            let dx: Vec<f64> = self.x.iter().zip(&x_prev).map(|(a, b)| a - b).collect();
            if self.dual_infeasible(&dx, &mut ws) {
                return self.finish(QpStatus::InfeasibleSuspect, res, iter, false);
            }
        }
        self.finish(QpStatus::MaxIters, res, s.max_iter, false)
    }

    fn finish(
        &self,
        status: QpStatus,
        res: Residuals,
        iterations: usize,
        polished: bool,
    ) -> QpSolution {
        QpSolution {
            x: self.unscaled_x(&self.x),
            y: self.unscaled_y(&self.y),
            status,
            primal_residual: res.prim,
            dual_residual: res.dual,
            iterations,
            polished,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Residuals {
    prim: f64,
    dual: f64,
    prim_scale: f64,
    dual_scale: f64,
    eps_prim: f64,
    eps_dual: f64,
}

struct Workspace {
    ax: Vec<f64>,
    aty: Vec<f64>,
    tmp_m: Vec<f64>,
}

impl Workspace {
    fn new(n: usize, m: usize) -> Self {
        Self {
            ax: vec![0.0; m],
            aty: vec![0.0; n],
            tmp_m: vec![0.0; m],
        }
    }
}

fn row_kinds(l: &[f64], u: &[f64]) -> Vec<RowKind> {
    l.iter()
        .zip(u)
        .map(|(l, u)| {
            if l.is_infinite() && u.is_infinite() {
                RowKind::Free
            } else if l == u {
                RowKind::Equality
            } else {
                RowKind::Inequality
            }
        })
        .collect()
}

fn rho_vector(kinds: &[RowKind], rho: f64) -> Vec<f64> {
    kinds
        .iter()
        .map(|k| match k {
            RowKind::Free => RHO_MIN,
            RowKind::Equality => RHO_EQ_FACTOR * rho,
            RowKind::Inequality => rho,
        })
        .collect()
}

fn factor_kkt(p: &DenseMatrix, a: &Csr, rho: &[f64], sigma: f64) -> Result<Cholesky, QpError> {
    let mut k = p.clone();
    k.add_diag(sigma);
    for (i, r) in rho.iter().enumerate() {
        a.add_outer(i, *r, &mut k);
    }
    Ok(Cholesky::factor(&k)?)
}

/// One-shot solve from a cold start.
pub fn solve_qp(problem: &QpProblem, settings: &QpSettings) -> Result<QpSolution, QpError> {
    let mut solver = QpSolver::new(problem.clone(), settings.clone())?;
    Ok(solver.solve())
}

/// Builds the LP `min 1ᵀ(p + q)` over `A(p − q) = b`, `lb ≤ p − q ≤ ub`, `p, q ≥ 0`.
pub fn l1_polytope_problem(
    a: &DenseMatrix,
    b: &[f64],
    lb: &[f64],
    ub: &[f64],
) -> Result<QpProblem, QpError> {
    let n = lb.len();
    if ub.len() != n || (a.rows() > 0 && a.cols() != n) || b.len() != a.rows() {
        return Err(QpError::Dimension("l1 polytope data"));
    }
    let k = a.rows();
    let mut c = DenseMatrix::zeros(k + 3 * n, 2 * n);
    let mut l = Vec::with_capacity(k + 3 * n);
    let mut u = Vec::with_capacity(k + 3 * n);
    for i in 0..k {
        for j in 0..n {
            c[(i, j)] = a[(i, j)];
            c[(i, n + j)] = -a[(i, j)];
        }
        l.push(b[i]);
        u.push(b[i]);
    }
    for j in 0..n {
        c[(k + j, j)] = 1.0;
        c[(k + j, n + j)] = -1.0;
        l.push(lb[j]);
        u.push(ub[j]);
    }
    for j in 0..2 * n {
        c[(k + n + j, j)] = 1.0;
        l.push(0.0);
        u.push(f64::INFINITY);
    }
    QpProblem::new(DenseMatrix::zeros(2 * n, 2 * n), vec![1.0; 2 * n], c, l, u)
}

/// Minimizes `‖x‖₁` over `{Ax = b, lb ≤ x ≤ ub}` through the split `x = p − q`.
pub fn solve_l1_polytope(
    a: &DenseMatrix,
    b: &[f64],
    lb: &[f64],
    ub: &[f64],
    settings: &QpSettings,
) -> Result<Vec<f64>, QpError> {
    let problem = l1_polytope_problem(a, b, lb, ub)?;
    let n = lb.len();
    let sol = solve_qp(&problem, settings)?.into_solved()?;
    Ok((0..n).map(|j| sol.x[j] - sol.x[n + j]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn inf() -> f64 {
        f64::INFINITY
    }

    #[test]
    fn projection_onto_halfline() {
        let p = QpProblem::new(
            DenseMatrix::identity(1),
            vec![0.0],
            DenseMatrix::identity(1),
            vec![1.0],
            vec![inf()],
        )
        .unwrap();
        let sol = solve_qp(&p, &QpSettings::default()).unwrap();
        assert_eq!(sol.status, QpStatus::Solved);
        assert!((sol.x[0] - 1.0).abs() < 1e-9);
        let r = kkt_residual(&p, &sol.x, &sol.y);
        assert!(r.max() <= 1e-9, "{r:?}");
        assert!(sol.y[0] < 0.0);
    }

    #[test]
    fn symmetric_split() {
        let p = QpProblem::new(
            DenseMatrix::identity(2),
            vec![0.0, 0.0],
            DenseMatrix::from_rows(&[vec![1.0, 1.0]]).unwrap(),
            vec![1.0],
            vec![1.0],
        )
        .unwrap();
        let sol = solve_qp(&p, &QpSettings::default()).unwrap();
        assert_eq!(sol.status, QpStatus::Solved);
        assert!((sol.x[0] - 0.5).abs() < 1e-9 && (sol.x[1] - 0.5).abs() < 1e-9);
        assert!(kkt_residual(&p, &sol.x, &sol.y).max() <= 1e-9);

        let perturbed = [sol.x[0] + 0.1, sol.x[1]];
        let r = kkt_residual(&p, &perturbed, &sol.y);
        assert!(r.primal >= 0.05);
    }

    #[test]
    fn zero_residual_at_interior_point() {
        let p = QpProblem::new(
            DenseMatrix::zeros(2, 2),
            vec![0.0, 0.0],
            DenseMatrix::identity(2),
            vec![-1.0, -1.0],
            vec![1.0, 1.0],
        )
        .unwrap();
        let r = kkt_residual(&p, &[0.2, -0.3], &[0.0, 0.0]);
        assert_eq!(
            r,
            KktResidual {
                stationarity: 0.0,
                primal: 0.0,
                complementarity: 0.0
            }
        );
    }

    #[test]
    fn rejects_bad_problems() {
        let bad_bounds = QpProblem::new(
            DenseMatrix::identity(1),
            vec![0.0],
            DenseMatrix::identity(1),
            vec![2.0],
            vec![1.0],
        );
        assert!(matches!(bad_bounds, Err(QpError::InvertedBounds(0))));
        let indefinite = QpProblem::new(
            DenseMatrix::from_diag(&[1.0, -1.0]),
            vec![0.0, 0.0],
            DenseMatrix::zeros(0, 2),
            vec![],
            vec![],
        );
        assert!(matches!(indefinite, Err(QpError::NotPsd)));
    }

    #[test]
    fn detects_primal_infeasibility() {
        // x ≥ 1 and x ≤ −1 through two rows
        let p = QpProblem::new(
            DenseMatrix::identity(1),
            vec![0.0],
            DenseMatrix::from_rows(&[vec![1.0], vec![1.0]]).unwrap(),
            vec![1.0, -inf()],
            vec![inf(), -1.0],
        )
        .unwrap();
        let sol = solve_qp(&p, &QpSettings::default()).unwrap();
        assert_eq!(sol.status, QpStatus::InfeasibleSuspect);
    }

    #[test]
    fn detects_unbounded_lp() {
        let p = QpProblem::new(
            DenseMatrix::zeros(1, 1),
            vec![-1.0],
            DenseMatrix::identity(1),
            vec![0.0],
            vec![inf()],
        )
        .unwrap();
        let sol = solve_qp(&p, &QpSettings::default()).unwrap();
        assert_eq!(sol.status, QpStatus::InfeasibleSuspect);
    }

    #[test]
    fn max_iters_status() {
        let p = QpProblem::new(
            DenseMatrix::identity(2),
            vec![1.0, -2.0],
            DenseMatrix::from_rows(&[vec![1.0, 1.0]]).unwrap(),
            vec![0.0],
            vec![0.5],
        )
        .unwrap();
        let settings = QpSettings {
            max_iter: 3,
            polish: false,
            ..QpSettings::default()
        };
        let sol = solve_qp(&p, &settings).unwrap();
        assert_eq!(sol.status, QpStatus::MaxIters);
        assert_eq!(sol.iterations, 3);
    }

    #[test]
    fn l1_pinned_by_identity() {
        let x = solve_l1_polytope(
            &DenseMatrix::identity(2),
            &[0.3, -0.2],
            &[-1.0, -1.0],
            &[1.0, 1.0],
            &QpSettings::default(),
        )
        .unwrap();
        assert!((x[0] - 0.3).abs() < 1e-9 && (x[1] + 0.2).abs() < 1e-9);
    }

    #[test]
    fn l1_single_constraint_objective() {
        let x = solve_l1_polytope(
            &DenseMatrix::from_rows(&[vec![1.0, 1.0]]).unwrap(),
            &[1.0],
            &[-1.0, -1.0],
            &[1.0, 1.0],
            &QpSettings::default(),
        )
        .unwrap();
        assert!((x[0].abs() + x[1].abs() - 1.0).abs() < 1e-8);
        assert!((x[0] + x[1] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn warm_start_is_deterministic_and_cheap() {
        let p = QpProblem::new(
            DenseMatrix::identity(2),
            vec![1.0, -2.0],
            DenseMatrix::from_rows(&[vec![1.0, 1.0]]).unwrap(),
            vec![0.0],
            vec![0.5],
        )
        .unwrap();
        let mut solver = QpSolver::new(p.clone(), QpSettings::default()).unwrap();
        let first = solver.solve();
        let again = solver.solve();
        assert_eq!(again.iterations, 0);
        assert_eq!(first.x, again.x);
        let mut fresh = QpSolver::new(p, QpSettings::default()).unwrap();
        let other = fresh.solve();
        assert_eq!(first.x, other.x);
        assert_eq!(first.iterations, other.iterations);
    }
}
