//! Fractional programs read from JSON.
//!
//! A document is an object tagged by `"kind"`:
//!
//! - `l1_box_affine`: `min ‖x‖₁/‖x‖₂` over `{Ax = b, lb ≤ x ≤ ub}`. Fields `a`
//!   (rows), `b`, `lb`, `ub`. The default start is the `ℓ₁` minimizer.
//! - `quadratic_sphere`: `min xᵀAx / xᵀBx` over the unit sphere. Fields `a`, `b`
//!   (symmetric positive definite). The default start is `1/√N`.
//! - `maxaffine_simplex`: `min max_i(r_i − a_iᵀx) / max_j √(xᵀA_j x)` over the unit
//!   simplex. Fields `pieces` (`[{"a": [...], "r": ...}]`) and `risks` (list of
//!   matrices). The default start is the barycenter.
//!
//! Every kind accepts an optional `x0`.

use std::path::Path;

use fracprox_core::instances::{
    l1_ratio_program, rayleigh_program, sharpe_instance, sharpe_program, InstanceError,
};
use fracprox_core::l1ipm::{l1_minimizer, IpmSettings};
use fracprox_core::linalg::{DenseMatrix, LinalgError};
use fracprox_core::problem::FractionalProgram;
use fracprox_core::prox::{AffinePiece, ProxError};
use serde::Deserialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ProblemFileError {
    #[error("reading problem file: {0}")]
    Io(#[from] std::io::Error),
    #[error("parsing problem file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("matrix `{name}`: {source}")]
    Matrix {
        name: &'static str,
        source: LinalgError,
    },
    #[error(transparent)]
    Instance(#[from] InstanceError),
    #[error("computing the default start: {0}")]
    Start(#[from] ProxError),
    #[error("x0 has length {got}, expected {expected}")]
    StartLength { got: usize, expected: usize },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PieceDoc {
    pub a: Vec<f64>,
    pub r: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", deny_unknown_fields)]
pub enum ProblemDoc {
    #[serde(rename = "l1_box_affine")]
    L1BoxAffine {
        a: Vec<Vec<f64>>,
        b: Vec<f64>,
        lb: Vec<f64>,
        ub: Vec<f64>,
        #[serde(default)]
        x0: Option<Vec<f64>>,
    },
    #[serde(rename = "quadratic_sphere")]
    QuadraticSphere {
        a: Vec<Vec<f64>>,
        b: Vec<Vec<f64>>,
        #[serde(default)]
        x0: Option<Vec<f64>>,
    },
    #[serde(rename = "maxaffine_simplex")]
    MaxAffineSimplex {
        pieces: Vec<PieceDoc>,
        risks: Vec<Vec<Vec<f64>>>,
        #[serde(default)]
        x0: Option<Vec<f64>>,
    },
}

pub struct LoadedProblem {
    pub kind: &'static str,
    pub program: FractionalProgram,
    pub x0: Vec<f64>,
}

fn matrix(name: &'static str, rows: &[Vec<f64>]) -> Result<DenseMatrix, ProblemFileError> {
    DenseMatrix::from_rows(rows).map_err(|source| ProblemFileError::Matrix { name, source })
}

fn start(
    x0: Option<Vec<f64>>,
    n: usize,
    default: impl FnOnce() -> Result<Vec<f64>, ProblemFileError>,
) -> Result<Vec<f64>, ProblemFileError> {
    let x = match x0 {
        Some(x) => x,
        None => default()?,
    };
    if x.len() != n {
        return Err(ProblemFileError::StartLength {
            got: x.len(),
            expected: n,
        });
    }
    Ok(x)
}

impl ProblemDoc {
    pub fn from_json(text: &str) -> Result<Self, ProblemFileError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn from_path(path: &Path) -> Result<Self, ProblemFileError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn build(self) -> Result<LoadedProblem, ProblemFileError> {
        match self {
            ProblemDoc::L1BoxAffine { a, b, lb, ub, x0 } => {
                let a = matrix("a", &a)?;
                let program = l1_ratio_program(&a, &b, &lb, &ub)?;
                let x0 = start(x0, lb.len(), || {
                    Ok(l1_minimizer(&a, &b, &lb, &ub, &IpmSettings::default())?)
                })?;
                Ok(LoadedProblem {
                    kind: "l1_box_affine",
                    program,
                    x0,
                })
            }
            ProblemDoc::QuadraticSphere { a, b, x0 } => {
                let a = matrix("a", &a)?;
                let b = matrix("b", &b)?;
                let n = a.rows();
                let program = rayleigh_program(&a, &b)?;
                let x0 = start(x0, n, || Ok(vec![1.0 / (n as f64).sqrt(); n]))?;
                Ok(LoadedProblem {
                    kind: "quadratic_sphere",
                    program,
                    x0,
                })
            }
            ProblemDoc::MaxAffineSimplex { pieces, risks, x0 } => {
                let pieces = pieces
                    .into_iter()
                    .map(|p| AffinePiece { a: p.a, r: p.r })
                    .collect();
                let risks = risks
                    .iter()
                    .map(|r| matrix("risks", r))
                    .collect::<Result<Vec<_>, _>>()?;
                let inst = sharpe_instance(pieces, risks)?;
                let n = inst.dim();
                let program = sharpe_program(&inst)?;
                let x0 = start(x0, n, || Ok(vec![1.0 / n as f64; n]))?;
                Ok(LoadedProblem {
                    kind: "maxaffine_simplex",
                    program,
                    x0,
                })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn l1_kind_uses_l1_minimizer() {
        let doc = ProblemDoc::from_json(
            r#"{"kind": "l1_box_affine", "a": [[1.0, 1.0]], "b": [1.0], "lb": [-1.0, -1.0], "ub": [1.0, 1.0]}"#,
        )
        .unwrap();
        let p = doc.build().unwrap();
        assert_eq!(p.kind, "l1_box_affine");
        assert!((p.x0.iter().map(|v| v.abs()).sum::<f64>() - 1.0).abs() < 1e-9);
        let bc = p.program.bc.unwrap();
        assert!((bc.m - 0.5f64.sqrt()).abs() < 1e-12);
        assert!((bc.big_m - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn sphere_kind_with_start() {
        let doc = ProblemDoc::from_json(
            r#"{"kind": "quadratic_sphere", "a": [[1, 0], [0, 2]], "b": [[1, 0], [0, 1]], "x0": [0.6, 0.8]}"#,
        )
        .unwrap();
        let p = doc.build().unwrap();
        assert_eq!(p.x0, vec![0.6, 0.8]);
        assert!((p.program.theta(&p.x0).unwrap() - (0.36 + 2.0 * 0.64)).abs() < 1e-12);
    }

    #[test]
    fn simplex_kind_defaults_to_barycenter() {
        let doc = ProblemDoc::from_json(
            r#"{"kind": "maxaffine_simplex",
                "pieces": [{"a": [1, 0, 0], "r": 1.1}, {"a": [0, 1, 0], "r": 1.1}],
                "risks": [[[2, 0, 0], [0, 2, 0], [0, 0, 2]]]}"#,
        )
        .unwrap();
        let p = doc.build().unwrap();
        assert_eq!(p.x0, vec![1.0 / 3.0; 3]);
        assert!(p.program.denominator.components().is_some());
    }

    #[test]
    fn rejects_unknown_kind_and_bad_start() {
        assert!(ProblemDoc::from_json(r#"{"kind": "trust_region"}"#).is_err());
        let doc = ProblemDoc::from_json(
            r#"{"kind": "quadratic_sphere", "a": [[1, 0], [0, 2]], "b": [[1, 0], [0, 1]], "x0": [1]}"#,
        )
        .unwrap();
        assert!(matches!(
            doc.build(),
            Err(ProblemFileError::StartLength {
                got: 1,
                expected: 2
            })
        ));
    }
}
