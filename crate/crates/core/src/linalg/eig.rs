use super::{lu::LuFactors, max_abs, Mat, C64};
use crate::error::{MorError, Result};

/// Finite generalized eigenvalues plus the count of infinite ones.
#[derive(Clone, Debug, Default)]
pub struct Eigenvalues {
    pub finite: Vec<C64>,
    pub infinite: usize,
}

impl Eigenvalues {
    pub fn max_real(&self) -> f64 {
        self.finite.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_real(&self) -> f64 {
        self.finite.iter().map(|z| z.re).fold(f64::INFINITY, f64::min)
    }
}

// e counts as well conditioned when its LU pivots span less than this ratio
const E_RCOND_MIN: f64 = 1e-10;
// shift-invert eigenvalues below this (relative) are mapped to infinity
const INFINITE_TOL: f64 = 1e-10;

/// Eigenvalues of a, or of the pencil (a, e) when e is given.
pub fn eigenvalues_dense(a: &Mat, e: Option<&Mat>) -> Result<Eigenvalues> {
    if !a.is_square() {
        return Err(MorError::dims(format!("eigenvalues of {:?}", a.shape())));
    }
    let n = a.nrows();
    let Some(e) = e else {
        return Ok(Eigenvalues {
            finite: standard(a)?,
            infinite: 0,
        });
    };
    if e.shape() != a.shape() {
        return Err(MorError::dims(format!("pencil {:?} vs {:?}", a.shape(), e.shape())));
    }
    if n == 0 {
        return Ok(Eigenvalues::default());
    }

    let elu = e.clone().lu();
    let pivots = elu.u().diagonal().map(|x| x.abs());
    if pivots.max() > 0.0 && pivots.min() >= E_RCOND_MIN * pivots.max() {
        if let Some(m) = elu.solve(a) {
            return Ok(Eigenvalues {
                finite: standard(&m)?,
                infinite: 0,
            });
        }
    }

    // Shift-invert: μ = eig((a − σe)⁻¹e), λ = σ + 1/μ; μ ≈ 0 ↔ λ = ∞.
    // generic shifts, unlikely to hit an eigenvalue
    let ref_scale = max_abs(a).max(f64::MIN_POSITIVE) / max_abs(e).max(f64::MIN_POSITIVE);
    for factor in [0.3171, -1.4093, 2.6931, -0.5772, 7.389] {
        let sigma = factor * ref_scale;
        let Ok(lu) = LuFactors::dense(&(a - e * sigma)) else {
            continue;
        };
        let m = lu.solve(e);
        let mu = standard(&m)?;
        let mu_max = mu.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let mut out = Eigenvalues::default();
        for z in mu {
            if z.norm() <= INFINITE_TOL * mu_max || mu_max == 0.0 {
                out.infinite += 1;
            } else {
                out.finite.push(C64::new(sigma, 0.0) + z.inv());
            }
        }
        return Ok(out);
    }
    Err(MorError::SingularPencil)
}

fn standard(a: &Mat) -> Result<Vec<C64>> {
    if a.nrows() == 0 {
        return Ok(Vec::new());
    }
    if !super::is_finite(a) {
        return Err(MorError::InvalidInput("non-finite matrix in eigenvalue solve".into()));
    }
    let schur = nalgebra::Schur::try_new(a.clone(), f64::EPSILON, 0)
        .ok_or_else(|| MorError::InvalidInput("eigenvalue iteration did not converge".into()))?;
    Ok(schur.complex_eigenvalues().iter().copied().collect())
}

/// (min, max) eigenvalue of the symmetric part (m + mᵀ)/2.
pub fn symmetric_extremes(m: &Mat) -> (f64, f64) {
    if m.nrows() == 0 {
        return (0.0, 0.0);
    }
    let sym = (m + m.transpose()) * 0.5;
    let ev = sym.symmetric_eigenvalues();
    (ev.min(), ev.max())
}
