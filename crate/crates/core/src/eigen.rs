//! Dense eigenvalues of small non-symmetric matrices (real Schur form).

use nalgebra::{Complex, DMatrix};

use crate::error::{Error, Result};

/// Deflation tolerances tried in order. Exact machine epsilon can stall on
/// products with many repeated eigenvalues; the looser rungs stay far below
/// the accuracy the diagnostics need.
const DEFLATION_LADDER: [f64; 4] = [f64::EPSILON, 1e-14, 1e-13, 1e-12];
const ITERATIONS_PER_ROW: usize = 200;

/// All eigenvalues of a square matrix, unordered.
pub fn eigenvalues(m: &DMatrix<f64>) -> Result<Vec<Complex<f64>>> {
    assert!(m.is_square(), "eigenvalues of a non-square matrix");
    let dim = m.nrows();
    if dim == 0 {
        return Ok(Vec::new());
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::EigenNonConvergence { dim });
    }
    let schur = DEFLATION_LADDER
        .iter()
        .find_map(|&eps| nalgebra::linalg::Schur::try_new(m.clone(), eps, ITERATIONS_PER_ROW * dim))
        .ok_or(Error::EigenNonConvergence { dim })?;
    Ok(schur.complex_eigenvalues().iter().copied().collect())
}

/// Eigenvalue moduli sorted non-increasing.
pub fn sorted_moduli(m: &DMatrix<f64>) -> Result<Vec<f64>> {
    let mut moduli: Vec<f64> = eigenvalues(m)?.iter().map(|z| z.norm()).collect();
    moduli.sort_by(|a, b| b.total_cmp(a));
    Ok(moduli)
}

pub fn spectral_radius(m: &DMatrix<f64>) -> Result<f64> {
    Ok(sorted_moduli(m)?.first().copied().unwrap_or(0.0))
}
