//! Post-hoc checks on solver traces.

use alloc::vec::Vec;

use thiserror::Error;

use crate::epsg::{TraceRecord, DECREASE_SLACK};
use crate::linalg::DenseMatrix;
use crate::vector::{dot, norm2};

/// Smallest error kept by [`estimate_rate`].
pub const RATE_FLOOR: f64 = 1e-14;
/// Minimum number of tail entries for a rate fit.
pub const RATE_MIN_TAIL: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum DiagnosticsError {
    #[error("need at least {needed} tail entries above the floor, got {got}")]
    InsufficientData { needed: usize, got: usize },
}

/// Checks `F_{n+1} + α‖x_{n+1} − x_n‖² ≤ F_n + 1e−10` along the trace, with
/// `F_0 = θ(x_0)`. Without `α` the plain objective must not increase. Returns the
/// first violating record index.
pub fn check_sufficient_decrease(trace: &[TraceRecord], alpha: Option<f64>) -> Result<(), usize> {
    let mut prev_merit = match trace.first() {
        Some(r) => r.theta,
        None => return Ok(()),
    };
    let mut prev_objective = prev_merit;
    for (k, r) in trace.iter().enumerate() {
        let ok = match alpha {
            Some(a) => r.merit + a * r.step_norm * r.step_norm <= prev_merit + DECREASE_SLACK,
            None => r.objective <= prev_objective + DECREASE_SLACK,
        };
        if !ok {
            return Err(k);
        }
        prev_merit = r.merit;
        prev_objective = r.objective;
    }
    Ok(())
}

/// `‖2((xᵀBx)Ax − (xᵀAx)Bx)‖ / (xᵀBx)²`, the distance from 0 to the limiting
/// subdifferential of `xᵀAx / xᵀBx` restricted to the unit sphere.
pub fn rayleigh_residual(a: &DenseMatrix, b: &DenseMatrix, x: &[f64]) -> f64 {
    let ax = a.matvec(x);
    let bx = b.matvec(x);
    let xax = dot(x, &ax);
    let xbx = dot(x, &bx);
    let r: Vec<f64> = ax
        .iter()
        .zip(&bx)
        .map(|(p, q)| 2.0 * (xbx * p - xax * q))
        .collect();
    norm2(&r) / (xbx * xbx)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit {
    /// `exp(slope)` of the least-squares line through `log e_n`.
    pub rho: f64,
    pub r_squared: f64,
    /// Number of entries in the fitted tail.
    pub samples: usize,
}

/// Fits `log e_n ≈ a + n log ρ` over the tail half of the sequence, truncated at
/// the first entry not above [`RATE_FLOOR`].
pub fn estimate_rate(errors: &[f64]) -> Result<RateFit, DiagnosticsError> {
    let usable = errors
        .iter()
        .position(|e| !(*e > RATE_FLOOR))
        .unwrap_or(errors.len());
    let start = usable / 2;
    let tail = usable - start;
    if tail < RATE_MIN_TAIL {
        return Err(DiagnosticsError::InsufficientData {
            needed: RATE_MIN_TAIL,
            got: tail,
        });
    }
    let pts: Vec<(f64, f64)> = (start..usable)
        .map(|n| (n as f64, libm::log(errors[n])))
        .collect();
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 {
        1.0
    } else {
        sxy * sxy / (sxx * syy)
    };
    Ok(RateFit {
        rho: libm::exp(slope),
        r_squared,
        samples: pts.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn record(n: usize, theta: f64, merit: f64, step: f64) -> TraceRecord {
        TraceRecord {
            n,
            theta,
            objective: merit,
            merit,
            step_norm: step,
            tau: 1.0,
            kappa: 0.0,
            mu: 0.0,
            residual: step,
            elapsed_ms: 0.0,
            active_count: None,
            chosen_index: None,
        }
    }

    #[test]
    fn decrease_negative_control() {
        let t = vec![record(0, 1.0, 1.5, 0.1), record(1, 1.5, 1.4, 0.1)];
        assert_eq!(check_sufficient_decrease(&t, Some(1.0)), Err(0));
        assert_eq!(check_sufficient_decrease(&t, None), Err(0));
        let ok = vec![record(0, 1.0, 0.9, 0.1), record(1, 0.9, 0.8, 0.1)];
        assert_eq!(check_sufficient_decrease(&ok, Some(1.0)), Ok(()));
        assert_eq!(check_sufficient_decrease(&ok, Some(20.0)), Err(0));
    }

    #[test]
    fn rayleigh_residual_examples() {
        let a = DenseMatrix::from_diag(&[1.0, 2.0]);
        let b = DenseMatrix::identity(2);
        let s = core::f64::consts::FRAC_1_SQRT_2;
        assert!((rayleigh_residual(&a, &b, &[s, s]) - 1.0).abs() < 1e-14);
        assert_eq!(rayleigh_residual(&a, &b, &[1.0, 0.0]), 0.0);
        let a3 = DenseMatrix::from_diag(&[3.0, 6.0]);
        assert!((rayleigh_residual(&a3, &b, &[s, s]) - 3.0).abs() < 1e-13);
    }

    #[test]
    fn rate_examples() {
        let geo: Vec<f64> = (0..60).map(|n| libm::pow(2.0 / 3.0, n as f64)).collect();
        let fit = estimate_rate(&geo).unwrap();
        assert!((fit.rho - 2.0 / 3.0).abs() < 1e-12);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);

        let harmonic: Vec<f64> = (1..200).map(|n| 1.0 / n as f64).collect();
        let fit = estimate_rate(&harmonic).unwrap();
        assert!(fit.rho > 0.99);
        assert!(fit.r_squared < 0.999, "{fit:?}");

        assert!(estimate_rate(&[0.5; 12]).is_err());
    }
}
