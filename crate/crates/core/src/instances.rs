//! Seeded problem generators and the fractional programs built from them.
//!
//! Every generator draws from a ChaCha stream selected by `(seed, trial)`, so a
//! trial's data does not depend on which other trials run or in what order.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::l1ipm::{l1_minimizer, IpmSettings};
use crate::linalg::{least_norm_solution, oversampled_dct, sym_eigen, DenseMatrix, LinalgError};
use crate::problem::{
    BoundsCondition, EuclideanNorm, FractionalProgram, MaxAffine, MaxSqrtQuadratic, ModelError,
    QuadraticForm, QuadraticSmooth, ZeroSmooth,
};
use crate::prox::{
    AffinePiece, BoxIndicator, L1BoxAffine, MaxAffinePolytope, ProxError, SphereIndicator,
};
use crate::qp::{solve_qp, QpError, QpProblem, QpSettings};
use crate::vector::{norm2, norm_inf};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InstanceError {
    #[error("invalid size: {0}")]
    Size(&'static str),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Prox(#[from] ProxError),
    #[error(transparent)]
    Qp(#[from] QpError),
}

pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

fn normal_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// `MᵀM + I` for a standard normal `M`.
fn random_pd(rng: &mut ChaCha8Rng, n: usize) -> DenseMatrix {
    let mut a = normal_matrix(rng, n, n).gram();
    a.add_diag(1.0);
    a
}

/// The scalar example `min (x² + 1)/(|x| + 1)` over `[−1, 1]`, with `|x| + 1`
/// written as `max{x + 1, 1 − x}`.
pub fn ep1_program() -> FractionalProgram {
    FractionalProgram::new(
        QuadraticSmooth::new(DenseMatrix::identity(1), vec![0.0], 1.0).expect("1x1 identity"),
        BoxIndicator {
            lb: vec![-1.0],
            ub: vec![1.0],
        },
        MaxAffine::abs_plus_one(),
        Some(BoundsCondition { m: 1.0, big_m: 2.0 }),
    )
}

/// Sparse recovery data: `b = A x_ground` with an oversampled DCT matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Ep2Instance {
    pub a: DenseMatrix,
    pub b: Vec<f64>,
    pub lb: Vec<f64>,
    pub ub: Vec<f64>,
    pub x_ground: Vec<f64>,
    pub seed: u64,
    pub trial: u64,
}

pub fn gen_ep2(
    p: usize,
    n: usize,
    s: usize,
    f: f64,
    seed: u64,
    trial: u64,
) -> Result<Ep2Instance, InstanceError> {
    if p == 0 || n == 0 || s == 0 || s > n {
        return Err(InstanceError::Size("need 0 < s <= N and P > 0"));
    }
    let mut rng = trial_rng(seed, trial);
    let w: Vec<f64> = (0..p).map(|_| rng.random::<f64>()).collect();
    let a = oversampled_dct(p, n, f, &w)?;
    let mut support = index::sample(&mut rng, n, s).into_vec();
    support.sort_unstable();
    let mut x_ground = vec![0.0; n];
    for &j in &support {
        x_ground[j] = rng.sample(StandardNormal);
    }
    let peak = norm_inf(&x_ground);
    x_ground.iter_mut().for_each(|v| *v /= peak);
    let b = a.matvec(&x_ground);
    Ok(Ep2Instance {
        a,
        b,
        lb: vec![-1.0; n],
        ub: vec![1.0; n],
        x_ground,
        seed,
        trial,
    })
}

/// `min ‖x‖₁/‖x‖₂` over `{Ax = b, lb ≤ x ≤ ub}` with `m = ‖least-norm solution‖`
/// and `M = √N`.
pub fn ep2_program(inst: &Ep2Instance) -> Result<FractionalProgram, InstanceError> {
    l1_ratio_program(&inst.a, &inst.b, &inst.lb, &inst.ub)
}

/// `min ‖x‖₁/‖x‖₂` over `{Ax = b, lb ≤ x ≤ ub}` for bounded boxes. `m` is the norm
/// of the least-norm solution of `Ax = b` and `M` the norm of the box corner
/// farthest from the origin, which is `√N` for `[−1, 1]^N`.
pub fn l1_ratio_program(
    a: &DenseMatrix,
    b: &[f64],
    lb: &[f64],
    ub: &[f64],
) -> Result<FractionalProgram, InstanceError> {
    let corner: Vec<f64> = lb
        .iter()
        .zip(ub)
        .map(|(l, u)| l.abs().max(u.abs()))
        .collect();
    if !corner.iter().all(|c| c.is_finite()) {
        return Err(InstanceError::Size("box must be bounded"));
    }
    let m = norm2(&least_norm_solution(a, b)?);
    let bc = BoundsCondition::new(m, norm2(&corner))?;
    let oracle = L1BoxAffine::new(a.clone(), b.to_vec(), lb.to_vec(), ub.to_vec())?;
    Ok(FractionalProgram::new(
        ZeroSmooth,
        oracle,
        EuclideanNorm,
        Some(bc),
    ))
}

/// The `ℓ₁` minimizer over the feasible polytope.
pub fn ep2_initial_point(
    inst: &Ep2Instance,
    settings: &IpmSettings,
) -> Result<Vec<f64>, InstanceError> {
    Ok(l1_minimizer(
        &inst.a, &inst.b, &inst.lb, &inst.ub, settings,
    )?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RayleighInstance {
    pub a: DenseMatrix,
    pub b: DenseMatrix,
    /// Random unit starting point.
    pub x0: Vec<f64>,
}

pub fn gen_rayleigh(n: usize, seed: u64, trial: u64) -> Result<RayleighInstance, InstanceError> {
    if n < 2 {
        return Err(InstanceError::Size("need N >= 2"));
    }
    let mut rng = trial_rng(seed, trial);
    let a = random_pd(&mut rng, n);
    let b = random_pd(&mut rng, n);
    let mut x0: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let nrm = norm2(&x0);
    x0.iter_mut().for_each(|v| *v /= nrm);
    Ok(RayleighInstance { a, b, x0 })
}

/// `min xᵀAx / xᵀBx` over the unit sphere, with `λ_min(B) ≤ g ≤ λ_max(B)`.
pub fn rayleigh_program(
    a: &DenseMatrix,
    b: &DenseMatrix,
) -> Result<FractionalProgram, InstanceError> {
    let eig = sym_eigen(b)?;
    let bc = BoundsCondition::new(
        eig.eigenvalues[0],
        *eig.eigenvalues.last().expect("nonempty spectrum"),
    )?;
    Ok(FractionalProgram::new(
        QuadraticSmooth::form(a.clone())?,
        SphereIndicator,
        QuadraticForm::new(b.clone())?,
        Some(bc),
    ))
}

/// Robust Sharpe ratio data: returns `rᵢ − aᵢᵀx` and risk matrices `A_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct SharpeInstance {
    pub pieces: Vec<AffinePiece>,
    pub risks: Vec<DenseMatrix>,
    pub bc: BoundsCondition,
}

impl SharpeInstance {
    pub fn dim(&self) -> usize {
        self.risks[0].rows()
    }
}

pub fn gen_sharpe(
    n: usize,
    m1: usize,
    m2: usize,
    seed: u64,
    trial: u64,
) -> Result<SharpeInstance, InstanceError> {
    if n == 0 || m1 == 0 || m2 == 0 {
        return Err(InstanceError::Size("need N, m1, m2 >= 1"));
    }
    let mut rng = trial_rng(seed, trial);
    let risks: Vec<DenseMatrix> = (0..m2).map(|_| random_pd(&mut rng, n)).collect();
    let pieces: Vec<AffinePiece> = (0..m1)
        .map(|_| {
            let a: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
            let r = a.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 0.1;
            AffinePiece { a, r }
        })
        .collect();
    sharpe_instance(pieces, risks)
}

/// Bundles Sharpe data with `m = max_j min_{simplex} √(xᵀA_j x)` and
/// `M = max_j √λ_max(A_j)`.
pub fn sharpe_instance(
    pieces: Vec<AffinePiece>,
    risks: Vec<DenseMatrix>,
) -> Result<SharpeInstance, InstanceError> {
    let n = risks
        .first()
        .ok_or(InstanceError::Size("need at least one risk matrix"))?
        .rows();
    if pieces.is_empty()
        || pieces.iter().any(|p| p.a.len() != n)
        || risks.iter().any(|r| r.rows() != n || r.cols() != n)
    {
        return Err(InstanceError::Size("inconsistent Sharpe dimensions"));
    }
    let settings = QpSettings::default();
    let mut m = 0.0_f64;
    let mut big_m = 0.0_f64;
    for risk in &risks {
        m = m.max(libm::sqrt(min_form_on_simplex(risk, &settings)?.max(0.0)));
        big_m = big_m.max(libm::sqrt(
            *sym_eigen(risk)?
                .eigenvalues
                .last()
                .expect("nonempty spectrum"),
        ));
    }
    Ok(SharpeInstance {
        pieces,
        risks,
        bc: BoundsCondition::new(m, big_m)?,
    })
}

/// `min xᵀAx` over the unit simplex.
fn min_form_on_simplex(a: &DenseMatrix, settings: &QpSettings) -> Result<f64, InstanceError> {
    let n = a.rows();
    let mut c = DenseMatrix::zeros(n + 1, n);
    let mut l = vec![1.0];
    let mut u = vec![1.0];
    for j in 0..n {
        c[(0, j)] = 1.0;
        c[(j + 1, j)] = 1.0;
        l.push(0.0);
        u.push(f64::INFINITY);
    }
    let qp = QpProblem::new(a.scaled(2.0), vec![0.0; n], c, l, u)?;
    let sol = solve_qp(&qp, settings)?.into_solved()?;
    Ok(qp.objective(&sol.x))
}

/// `min max_i(rᵢ − aᵢᵀx) / max_j √(xᵀA_j x)` over the unit simplex.
pub fn sharpe_program(inst: &SharpeInstance) -> Result<FractionalProgram, InstanceError> {
    Ok(FractionalProgram::new(
        ZeroSmooth,
        MaxAffinePolytope::new(inst.pieces.clone(), true)?,
        MaxSqrtQuadratic::new(inst.risks.clone())?,
        Some(inst.bc),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ep2_generation_contract() {
        let inst = gen_ep2(8, 40, 3, 10.0, 7, 2).unwrap();
        assert_eq!(inst, gen_ep2(8, 40, 3, 10.0, 7, 2).unwrap());
        assert_ne!(
            inst.x_ground,
            gen_ep2(8, 40, 3, 10.0, 7, 3).unwrap().x_ground
        );
        assert_eq!(inst.x_ground.iter().filter(|v| **v != 0.0).count(), 3);
        assert_eq!(norm_inf(&inst.x_ground), 1.0);
        assert_eq!(inst.b, inst.a.matvec(&inst.x_ground));

        let dense = gen_ep2(4, 6, 6, 10.0, 1, 0).unwrap();
        assert_eq!(norm_inf(&dense.x_ground), 1.0);
        assert!(gen_ep2(4, 6, 7, 10.0, 1, 0).is_err());
    }

    #[test]
    fn rayleigh_generation_contract() {
        let inst = gen_rayleigh(5, 3, 0).unwrap();
        assert_eq!(inst, gen_rayleigh(5, 3, 0).unwrap());
        assert!(crate::linalg::Cholesky::factor(&inst.a).is_ok());
        assert!(crate::linalg::Cholesky::factor(&inst.b).is_ok());
        assert!((norm2(&inst.x0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn sharpe_numerator_positive_on_simplex() {
        let inst = gen_sharpe(6, 3, 3, 11, 0).unwrap();
        let mut rng = trial_rng(99, 0);
        for _ in 0..1000 {
            let mut x: Vec<f64> = (0..6)
                .map(|_| -libm::log(1.0 - rng.random::<f64>()))
                .collect();
            let s: f64 = x.iter().sum();
            x.iter_mut().for_each(|v| *v /= s);
            let f = crate::prox::max_affine_value(&inst.pieces, &x);
            assert!(f >= 0.1 - 1e-12);
            let g = MaxSqrtQuadratic::new(inst.risks.clone()).unwrap();
            use crate::problem::Denominator;
            assert!(inst.bc.contains(g.value(&x), 1e-9));
        }
        assert_eq!(sharpe_program(&inst).unwrap().beta(), 0.0);
    }
}
