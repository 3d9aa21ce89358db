use serde::{Deserialize, Serialize};

use crate::error::{MorError, Result};
use crate::linalg::{lu_factor, to_complex, CMat, LuFactors, Mat, SparseMatrix, C64};

/// Anything with a transfer matrix G(s) = C(sE − A)⁻¹B + D.
pub trait TransferFunction {
    /// (outputs, inputs)
    fn io_dims(&self) -> (usize, usize);

    fn transfer_eval(&self, s: C64) -> Result<CMat>;
}

/// The ODE obtained by eliminating the algebraic states.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OdeRealization {
    #[serde(with = "crate::linalg::mat_serde")]
    pub e1: Mat,
    #[serde(with = "crate::linalg::mat_serde")]
    pub a1: Mat,
    #[serde(with = "crate::linalg::mat_serde")]
    pub b1: Mat,
    #[serde(with = "crate::linalg::mat_serde")]
    pub c1: Mat,
    #[serde(with = "crate::linalg::mat_serde")]
    pub d1: Mat,
}

impl OdeRealization {
    pub fn order(&self) -> usize {
        self.a1.nrows()
    }

    /// Normalized (E⁻¹A, E⁻¹B).
    pub fn normalized(&self) -> Result<(Mat, Mat)> {
        let lu = LuFactors::dense(&self.e1)?;
        Ok((lu.solve(&self.a1), lu.solve(&self.b1)))
    }
}

/// Assembled sparse descriptor system.
#[derive(Clone, Debug, PartialEq)]
pub struct DescriptorSystem {
    pub e: SparseMatrix,
    pub a: SparseMatrix,
    pub b: Mat,
    pub c: Mat,
    pub d: Mat,
}

impl DescriptorSystem {
    pub fn order(&self) -> usize {
        self.a.nrows()
    }

    /// Factorization of A − σE.
    pub fn shifted_lu(&self, sigma: C64) -> Result<LuFactors<C64>> {
        lu_factor(&self.a.shifted(sigma, &self.e)?).map_err(|e| match e {
            MorError::SingularMatrix { .. } => MorError::ShiftOnSpectrum { shift: sigma },
            other => other,
        })
    }

    pub fn shifted_lu_real(&self, sigma: f64) -> Result<LuFactors<f64>> {
        lu_factor(&self.a.shifted_real(sigma, &self.e)?).map_err(|e| match e {
            MorError::SingularMatrix { .. } => MorError::ShiftOnSpectrum {
                shift: C64::new(sigma, 0.0),
            },
            other => other,
        })
    }
}

impl TransferFunction for DescriptorSystem {
    fn io_dims(&self) -> (usize, usize) {
        (self.c.nrows(), self.b.ncols())
    }

    fn transfer_eval(&self, s: C64) -> Result<CMat> {
        // (sE − A)x = B  ⇔  (A − sE)x = −B
        let lu = lu_factor(&self.a.shifted(s, &self.e)?)?;
        let x = lu.solve(&to_complex(&self.b));
        Ok(to_complex(&self.d) - to_complex(&self.c) * x)
    }
}

/// C(sE − A)⁻¹B + D for small dense matrices.
pub fn dense_transfer(e: &Mat, a: &Mat, b: &Mat, c: &Mat, d: &Mat, s: C64) -> Result<CMat> {
    let pencil = to_complex(e) * s - to_complex(a);
    let lu = LuFactors::dense(&pencil)?;
    Ok(to_complex(c) * lu.solve(&to_complex(b)) + to_complex(d))
}
