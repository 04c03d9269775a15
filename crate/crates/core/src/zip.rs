//! Least-squares ZIP coefficient fitting from per-slot voltage magnitudes
//! and injections, with the conditioning diagnostics that make its
//! ill-posedness visible.

use crate::error::{Error, Result};
use crate::powerflow::ZipModel;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Conditioning of the [u^2, u, 1] regressor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VandermondeDiagnostics {
    /// Closed-form determinant (u1-u2)(u1-u3)(u2-u3); only for exactly
    /// three slots.
    pub determinant: Option<f64>,
    /// 2-norm condition number of the regressor.
    pub condition: f64,
}

/// Fitted coefficients plus fit quality.
#[derive(Debug, Clone, PartialEq)]
pub struct ZipFit {
    pub coefficients: ZipModel,
    pub residual: f64,
    pub diagnostics: VandermondeDiagnostics,
}

const DET_THRESHOLD: f64 = 1e-12;
const CONDITION_THRESHOLD: f64 = 1e12;

fn regressor(u: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(u.len(), 3, |r, c| match c {
        0 => u[r] * u[r],
        1 => u[r],
        _ => 1.0,
    })
}

/// Determinant (three slots) and condition number of the regressor built
/// from voltage magnitudes.
pub fn vandermonde_conditioning(u: &[f64]) -> Result<VandermondeDiagnostics> {
    if u.len() < 3 {
        return Err(Error::InvalidInput(format!(
            "need at least 3 voltage samples, got {}",
            u.len()
        )));
    }
    let determinant =
        (u.len() == 3).then(|| (u[0] - u[1]) * (u[0] - u[2]) * (u[1] - u[2]));
    let sv = regressor(u).singular_values();
    let condition = if sv.min() > 0.0 {
        sv.max() / sv.min()
    } else {
        f64::INFINITY
    };
    Ok(VandermondeDiagnostics {
        determinant,
        condition,
    })
}

/// Least-squares fit of the ZIP polynomial to a series of voltage
/// magnitudes and injections: the drawn load -s is regressed on
/// [u^2, u, 1].
///
/// Fails as ill-posed when the three-slot determinant vanishes or the
/// condition number exceeds 1e12, carrying the diagnostics either way.
pub fn fit_zip(u: &[f64], s: &[f64]) -> Result<ZipFit> {
    if u.len() != s.len() {
        return Err(Error::InvalidInput(format!(
            "{} voltages against {} injections",
            u.len(),
            s.len()
        )));
    }
    if let Some(&bad) = u.iter().find(|&&v| v <= 0.0) {
        return Err(Error::InvalidInput(format!(
            "voltage magnitudes must be positive, got {bad}"
        )));
    }
    let diagnostics = vandermonde_conditioning(u)?;
    let singular = diagnostics
        .determinant
        .is_some_and(|d| d.abs() < DET_THRESHOLD)
        || diagnostics.condition > CONDITION_THRESHOLD;
    if singular {
        return Err(Error::IllPosedZipFit {
            determinant: diagnostics.determinant,
            condition: diagnostics.condition,
        });
    }
    let matrix = regressor(u);
    let target = DVector::from_fn(s.len(), |r, _| -s[r]);
    let svd = matrix.clone().svd(true, true);
    let coeffs = svd
        .solve(&target, 1e-14)
        .map_err(|e| Error::Internal(format!("least-squares solve failed: {e}")))?;
    let residual = (&matrix * &coeffs - &target).norm();
    Ok(ZipFit {
        coefficients: ZipModel {
            alpha: coeffs[0],
            beta: coeffs[1],
            gamma: coeffs[2],
        },
        residual,
        diagnostics,
    })
}
