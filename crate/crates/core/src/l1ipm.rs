//! Primal-dual interior point solver for
//! `min w‖x‖₁ + (ρ/2)‖x − z‖²` over `{Ax = b, lb ≤ x ≤ ub}`.
//!
//! With `ρ > 0` this is the prox of `‖x‖₁ + ι` at scale `w/ρ`; with `ρ = 0` it is
//! the `ℓ₁` linear program. The epigraph variable `s ≥ |x|` and the box give four
//! inequalities per coordinate, so the Newton matrix is block diagonal with
//! `2 × 2` blocks and only a `k × k` Schur complement `A H Aᵀ` is factored. A
//! final solve on the identified active pattern removes the interior bias.

use alloc::vec;
use alloc::vec::Vec;

use crate::linalg::{Cholesky, DenseMatrix};
use crate::prox::ProxError;
use crate::vector::{norm_inf, sub};

#[derive(Debug, Clone, PartialEq)]
pub struct IpmSettings {
    /// Scaled KKT error at which the iteration stops.
    pub tol: f64,
    /// Error accepted when rounding stalls the iteration before `tol`.
    pub accept_tol: f64,
    pub max_iter: usize,
    pub polish: bool,
}

impl Default for IpmSettings {
    fn default() -> Self {
        Self {
            tol: 1e-11,
            accept_tol: 1e-8,
            max_iter: 120,
            polish: true,
        }
    }
}

/// Constraint rows per coordinate: `s − x`, `s + x`, `x − lb`, `ub − x`.
const ROWS: usize = 4;
const GX: [f64; ROWS] = [-1.0, 1.0, 1.0, -1.0];
const GS: [f64; ROWS] = [1.0, 1.0, 0.0, 0.0];

#[derive(Clone)]
struct State {
    x: Vec<f64>,
    s: Vec<f64>,
    nu: Vec<f64>,
    /// Slacks and multipliers, `ROWS` per coordinate; zero on absent bounds.
    c: Vec<f64>,
    y: Vec<f64>,
}

type Residuals = (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>);

struct Direction {
    x: Vec<f64>,
    s: Vec<f64>,
    nu: Vec<f64>,
    c: Vec<f64>,
    y: Vec<f64>,
}

pub struct L1Ipm<'a> {
    a: &'a DenseMatrix,
    b: &'a [f64],
    lb: &'a [f64],
    ub: &'a [f64],
    weight: f64,
    rho: f64,
    z: &'a [f64],
    present: Vec<bool>,
}

impl<'a> L1Ipm<'a> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        a: &'a DenseMatrix,
        b: &'a [f64],
        lb: &'a [f64],
        ub: &'a [f64],
        weight: f64,
        rho: f64,
        z: &'a [f64],
    ) -> Result<Self, ProxError> {
        let n = lb.len();
        if ub.len() != n || z.len() != n || a.rows() != b.len() || (a.rows() > 0 && a.cols() != n) {
            return Err(ProxError::Dimension("l1 interior point data"));
        }
        if lb.iter().zip(ub).any(|(l, u)| !(l < u)) {
            return Err(ProxError::Dimension("l1 interior point needs lb < ub"));
        }
        let mut present = vec![true; ROWS * n];
        for j in 0..n {
            present[ROWS * j + 2] = lb[j].is_finite();
            present[ROWS * j + 3] = ub[j].is_finite();
        }
        Ok(Self {
            a,
            b,
            lb,
            ub,
            weight,
            rho,
            z,
            present,
        })
    }

    fn n(&self) -> usize {
        self.lb.len()
    }

    fn slacks(&self, x: &[f64], s: &[f64], c: &mut [f64]) {
        for j in 0..self.n() {
            let r = ROWS * j;
            c[r] = s[j] - x[j];
            c[r + 1] = s[j] + x[j];
            c[r + 2] = if self.present[r + 2] {
                x[j] - self.lb[j]
            } else {
                0.0
            };
            c[r + 3] = if self.present[r + 3] {
                self.ub[j] - x[j]
            } else {
                0.0
            };
        }
    }

    fn start(&self) -> State {
        let n = self.n();
        let x: Vec<f64> = (0..n)
            .map(|j| {
                let (l, u) = (self.lb[j], self.ub[j]);
                let margin = 0.1
                    * if (u - l).is_finite() {
                        (u - l).min(1.0)
                    } else {
                        1.0
                    };
                let target = if self.rho > 0.0 { self.z[j] } else { 0.0 };
                target.max(l + margin).min(u - margin)
            })
            .collect();
        let s: Vec<f64> = x.iter().map(|v| v.abs() + 1.0).collect();
        let mut c = vec![0.0; ROWS * n];
        self.slacks(&x, &s, &mut c);
        let half = 0.5 * self.weight + 1.0;
        let y = (0..ROWS * n)
            .map(|r| match (r % ROWS, self.present[r]) {
                (_, false) => 0.0,
                (0 | 1, true) => half,
                _ => 1.0,
            })
            .collect();
        State {
            x,
            s,
            nu: vec![0.0; self.b.len()],
            c,
            y,
        }
    }

    fn mu(&self, st: &State) -> f64 {
        let (mut sum, mut count) = (0.0, 0usize);
        for r in 0..st.c.len() {
            if self.present[r] {
                sum += st.c[r] * st.y[r];
                count += 1;
            }
        }
        sum / count.max(1) as f64
    }

    /// Stationarity residuals in `x` and `s`, the equality residual and the
    /// slack residual `G(x, s) − h − c`.
    fn residuals(&self, st: &State) -> Residuals {
        let n = self.n();
        let atnu = if self.b.is_empty() {
            vec![0.0; n]
        } else {
            self.a.matvec_t(&st.nu)
        };
        let mut rx = vec![0.0; n];
        let mut rs = vec![0.0; n];
        for j in 0..n {
            let r = ROWS * j;
            let mut gx = 0.0;
            let mut gs = 0.0;
            for k in 0..ROWS {
                gx += GX[k] * st.y[r + k];
                gs += GS[k] * st.y[r + k];
            }
            rx[j] = self.rho * (st.x[j] - self.z[j]) - atnu[j] - gx;
            rs[j] = self.weight - gs;
        }
        let rp = if self.b.is_empty() {
            Vec::new()
        } else {
            sub(&self.a.matvec(&st.x), self.b)
        };
        let mut rg = vec![0.0; st.c.len()];
        self.slacks(&st.x, &st.s, &mut rg);
        for r in 0..rg.len() {
            rg[r] -= st.c[r];
        }
        (rx, rs, rp, rg)
    }

    /// Newton direction for the complementarity targets `comp[r]` (`c·y` is
    /// driven to `c·y + comp`).
    fn direction(&self, st: &State, res: &Residuals, comp: &[f64]) -> Result<Direction, ProxError> {
        let n = self.n();
        let k = self.b.len();
        let (rx, rs, rp, rg) = res;
        let mut h = vec![0.0; n];
        let mut k12 = vec![0.0; n];
        let mut k22 = vec![0.0; n];
        let mut det = vec![0.0; n];
        let mut ex = vec![0.0; n];
        let mut es = vec![0.0; n];
        for j in 0..n {
            let r = ROWS * j;
            let mut d = [0.0; ROWS];
            let (mut fx, mut fs) = (-rx[j], -rs[j]);
            for q in 0..ROWS {
                if !self.present[r + q] {
                    continue;
                }
                d[q] = st.y[r + q] / st.c[r + q];
                let t = (comp[r + q] - st.y[r + q] * rg[r + q]) / st.c[r + q];
                fx += GX[q] * t;
                fs += GS[q] * t;
            }
            let diag = self.rho + d[2] + d[3];
            k12[j] = d[1] - d[0];
            k22[j] = d[0] + d[1];
            det[j] = diag * k22[j] + 4.0 * d[0] * d[1];
            h[j] = k22[j] / det[j];
            ex[j] = fx;
            es[j] = fs;
        }
        // Δx_j = h_j (ex_j + (AᵀΔν)_j) − (k12_j/det_j) es_j
        let base: Vec<f64> = (0..n)
            .map(|j| h[j] * ex[j] - k12[j] / det[j] * es[j])
            .collect();
        let mut dnu = vec![0.0; k];
        if k > 0 {
            let mut schur = DenseMatrix::zeros(k, k);
            for i in 0..k {
                let ai = self.a.row(i);
                for l in 0..=i {
                    let al = self.a.row(l);
                    let mut acc = 0.0;
                    for j in 0..n {
                        acc += ai[j] * h[j] * al[j];
                    }
                    schur[(i, l)] = acc;
                    schur[(l, i)] = acc;
                }
            }
            let ab = self.a.matvec(&base);
            dnu = (0..k).map(|i| -rp[i] - ab[i]).collect();
            solve_skipping(&mut schur, &mut dnu);
        }
        let atd = if k > 0 {
            self.a.matvec_t(&dnu)
        } else {
            vec![0.0; n]
        };
        let dx: Vec<f64> = (0..n).map(|j| base[j] + h[j] * atd[j]).collect();
        let ds: Vec<f64> = (0..n).map(|j| (es[j] - k12[j] * dx[j]) / k22[j]).collect();
        let mut dc = vec![0.0; ROWS * n];
        let mut dy = vec![0.0; ROWS * n];
        for j in 0..n {
            let r = ROWS * j;
            for q in 0..ROWS {
                if self.present[r + q] {
                    dc[r + q] = GX[q] * dx[j] + GS[q] * ds[j] + rg[r + q];
                    dy[r + q] = (comp[r + q] - st.y[r + q] * dc[r + q]) / st.c[r + q];
                }
            }
        }
        Ok(Direction {
            x: dx,
            s: ds,
            nu: dnu,
            c: dc,
            y: dy,
        })
    }

    fn max_step(&self, v: &[f64], dv: &[f64]) -> f64 {
        let mut alpha: f64 = 1.0;
        for r in 0..v.len() {
            if self.present[r] && dv[r] < 0.0 {
                alpha = alpha.min(-v[r] / dv[r]);
            }
        }
        alpha
    }

    pub fn solve(&self, settings: &IpmSettings) -> Result<Vec<f64>, ProxError> {
        let n = self.n();
        let mut st = self.start();
        let scale_p = 1.0 + norm_inf(self.b);
        let scale_d = 1.0 + self.weight + self.rho * norm_inf(self.z);
        let rows = ROWS * n;
        let count = self.present.iter().filter(|p| **p).count();
        let mut best: Option<(f64, State)> = None;
        let mut worse = 0usize;
        for _ in 0..settings.max_iter {
            let res = self.residuals(&st);
            let mu = self.mu(&st);
            let err = (norm_inf(&res.0).max(norm_inf(&res.1)) / scale_d)
                .max(norm_inf(&res.2) / scale_p)
                .max(norm_inf(&res.3) / scale_p)
                .max(mu * count as f64 / scale_d);
            if !err.is_finite() {
                break;
            }
            if best.as_ref().is_none_or(|(e, _)| err < *e) {
                best = Some((err, st.clone()));
                worse = 0;
            } else {
                worse += 1;
                if worse >= 5 {
                    break;
                }
            }
            if err <= settings.tol {
                break;
            }
            let comp_aff: Vec<f64> = (0..rows).map(|r| -st.c[r] * st.y[r]).collect();
            let aff = self.direction(&st, &res, &comp_aff)?;
            let alpha_aff = self
                .max_step(&st.c, &aff.c)
                .min(self.max_step(&st.y, &aff.y));
            let mut sum = 0.0;
            let mut count = 0usize;
            for r in 0..rows {
                if self.present[r] {
                    sum += (st.c[r] + alpha_aff * aff.c[r]) * (st.y[r] + alpha_aff * aff.y[r]);
                    count += 1;
                }
            }
            let mu_aff = sum / count.max(1) as f64;
            let ratio = mu_aff / mu;
            let sigma = (ratio * ratio * ratio).min(1.0);
            let comp: Vec<f64> = (0..rows)
                .map(|r| sigma * mu - st.c[r] * st.y[r] - aff.c[r] * aff.y[r])
                .collect();
            let dir = self.direction(&st, &res, &comp)?;
            let alpha = (0.995
                * self
                    .max_step(&st.c, &dir.c)
                    .min(self.max_step(&st.y, &dir.y)))
            .min(1.0);
            for j in 0..n {
                st.x[j] += alpha * dir.x[j];
                st.s[j] += alpha * dir.s[j];
            }
            for (v, d) in st.nu.iter_mut().zip(&dir.nu) {
                *v += alpha * d;
            }
            for r in 0..rows {
                if self.present[r] {
                    st.y[r] += alpha * dir.y[r];
                    st.c[r] += alpha * dir.c[r];
                }
            }
        }
        match best {
            Some((err, st)) if err <= settings.accept_tol => {
                let x = st.x.clone();
                let polished = if settings.polish {
                    self.polish(&st)
                } else {
                    None
                };
                Ok(polished.unwrap_or(x))
            }
            Some((err, _)) => Err(ProxError::IpmStalled(err)),
            None => Err(ProxError::IpmStalled(f64::NAN)),
        }
    }

    /// Re-solves on the active pattern read off the interior iterate and keeps
    /// the result only if it is feasible, sign consistent and close to `st.x`.
    fn polish(&self, st: &State) -> Option<Vec<f64>> {
        let n = self.n();
        let k = self.b.len();
        let mut x = vec![0.0; n];
        let mut free = Vec::new();
        let mut sign = Vec::new();
        for j in 0..n {
            let r = ROWS * j;
            let active = |q: usize| self.present[r + q] && st.c[r + q] < st.y[r + q];
            if active(2) {
                x[j] = self.lb[j];
            } else if active(3) {
                x[j] = self.ub[j];
            } else if active(0) && active(1) {
                x[j] = 0.0;
            } else if active(0) {
                free.push(j);
                sign.push(1.0);
            } else if active(1) {
                free.push(j);
                sign.push(-1.0);
            } else {
                free.push(j);
                sign.push(if st.x[j] >= 0.0 { 1.0 } else { -1.0 });
            }
        }
        let mut rhs = self.b.to_vec();
        if k > 0 {
            let ax = self.a.matvec(&x);
            rhs.iter_mut().zip(&ax).for_each(|(r, v)| *r -= v);
        }
        let f = free.len();
        if self.rho > 0.0 {
            let anchor: Vec<f64> = free
                .iter()
                .zip(&sign)
                .map(|(&j, s)| self.z[j] - self.weight * s / self.rho)
                .collect();
            for (q, &j) in free.iter().enumerate() {
                x[j] = anchor[q];
            }
            if k > 0 && f > 0 {
                let af = DenseMatrix::from_fn(k, f, |i, q| self.a[(i, free[q])]);
                let gap: Vec<f64> = (0..k)
                    .map(|i| rhs[i] - (0..f).map(|q| af[(i, q)] * anchor[q]).sum::<f64>())
                    .collect();
                // Closest point to the anchor on {A_F x_F = rhs}.
                let corr = if f >= k {
                    let w = Cholesky::factor(&af.outer_gram()).ok()?.solve(&gap);
                    af.matvec_t(&w)
                } else {
                    Cholesky::factor(&af.gram()).ok()?.solve(&af.matvec_t(&gap))
                };
                for (q, &j) in free.iter().enumerate() {
                    x[j] += corr[q];
                }
            } else if k > 0 && norm_inf(&rhs) > 1e-12 * (1.0 + norm_inf(self.b)) {
                return None;
            }
        } else if k > 0 && f > 0 {
            if f > k {
                return None;
            }
            let af = DenseMatrix::from_fn(k, f, |i, q| self.a[(i, free[q])]);
            let w = Cholesky::factor(&af.gram()).ok()?.solve(&af.matvec_t(&rhs));
            for (q, &j) in free.iter().enumerate() {
                x[j] = w[q];
            }
        }
        for (q, &j) in free.iter().enumerate() {
            if x[j] * sign[q] < 0.0 || x[j] < self.lb[j] || x[j] > self.ub[j] {
                return None;
            }
        }
        if k > 0 {
            let r = sub(&self.a.matvec(&x), self.b);
            if norm_inf(&r) > 1e-11 * (1.0 + norm_inf(self.b)) {
                return None;
            }
        }
        if norm_inf(&sub(&x, &st.x)) > 1e-6 * (1.0 + norm_inf(&st.x)) {
            return None;
        }
        Some(x)
    }
}

/// Cholesky solve of a positive semidefinite system in place. Pivots that
/// vanish relative to the diagonal are replaced by a huge value, which zeroes
/// the corresponding component instead of failing on a rank-deficient matrix.
fn solve_skipping(m: &mut DenseMatrix, rhs: &mut [f64]) {
    let k = rhs.len();
    let floor = 1e-30
        * (0..k)
            .map(|i| m[(i, i)])
            .fold(0.0, f64::max)
            .max(f64::MIN_POSITIVE);
    for j in 0..k {
        let mut pivot = m[(j, j)];
        for p in 0..j {
            pivot -= m[(j, p)] * m[(j, p)];
        }
        let pivot = if pivot > floor {
            libm::sqrt(pivot)
        } else {
            1e64
        };
        m[(j, j)] = pivot;
        for i in j + 1..k {
            let mut v = m[(i, j)];
            for p in 0..j {
                v -= m[(i, p)] * m[(j, p)];
            }
            m[(i, j)] = v / pivot;
        }
    }
    for i in 0..k {
        let mut v = rhs[i];
        for p in 0..i {
            v -= m[(i, p)] * rhs[p];
        }
        rhs[i] = v / m[(i, i)];
    }
    for i in (0..k).rev() {
        let mut v = rhs[i];
        for p in i + 1..k {
            v -= m[(p, i)] * rhs[p];
        }
        rhs[i] = v / m[(i, i)];
    }
}

/// `prox_{t(‖·‖₁ + ι)}(z)` over `{Ax = b, lb ≤ x ≤ ub}`.
pub fn prox_l1_box_affine_ipm(
    z: &[f64],
    t: f64,
    a: &DenseMatrix,
    b: &[f64],
    lb: &[f64],
    ub: &[f64],
    settings: &IpmSettings,
) -> Result<Vec<f64>, ProxError> {
    if !(t > 0.0) {
        return Err(ProxError::NonPositiveScale(t));
    }
    L1Ipm::new(a, b, lb, ub, t, 1.0, z)?.solve(settings)
}

/// `argmin ‖x‖₁` over `{Ax = b, lb ≤ x ≤ ub}`.
pub fn l1_minimizer(
    a: &DenseMatrix,
    b: &[f64],
    lb: &[f64],
    ub: &[f64],
    settings: &IpmSettings,
) -> Result<Vec<f64>, ProxError> {
    let z = vec![0.0; lb.len()];
    L1Ipm::new(a, b, lb, ub, 1.0, 0.0, &z)?.solve(settings)
}
