use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use super::system::{dense_transfer, DescriptorSystem, OdeRealization, TransferFunction};
use super::Side;
use crate::error::{MorError, Result};
use crate::linalg::{lu_factor, CMat, LuFactors, Mat, SparseMatrix, C64};

/// Raw block data of x = [x1; x2] with E = blkdiag(e11, 0).
#[derive(Clone, Debug, PartialEq)]
pub struct DaeBlocks {
    pub e11: SparseMatrix,
    pub a11: SparseMatrix,
    pub a12: SparseMatrix,
    pub a21: SparseMatrix,
    pub a22: SparseMatrix,
    pub b11: Mat,
    pub b22: Mat,
    pub c11: Mat,
    pub c22: Mat,
    pub d: Mat,
}

impl DaeBlocks {
    pub fn n_dyn(&self) -> usize {
        self.e11.nrows()
    }

    pub fn n_alg(&self) -> usize {
        self.a22.nrows()
    }

    fn check_dims(&self) -> Result<()> {
        let (n1, n2) = (self.n_dyn(), self.n_alg());
        let m = self.b11.ncols();
        let p = self.c11.nrows();
        let checks = [
            ("e11", self.e11.shape(), (n1, n1)),
            ("a11", self.a11.shape(), (n1, n1)),
            ("a12", self.a12.shape(), (n1, n2)),
            ("a21", self.a21.shape(), (n2, n1)),
            ("a22", self.a22.shape(), (n2, n2)),
            ("b11", self.b11.shape(), (n1, m)),
            ("b22", self.b22.shape(), (n2, m)),
            ("c11", self.c11.shape(), (p, n1)),
            ("c22", self.c22.shape(), (p, n2)),
            ("d", self.d.shape(), (p, m)),
        ];
        for (name, got, want) in checks {
            if got != want {
                return Err(MorError::dims(format!("{name} is {got:?}, expected {want:?}")));
            }
        }
        if n1 == 0 {
            return Err(MorError::NotSemiExplicit("no dynamic states (n_dyn = 0)".into()));
        }
        let dense_ok = [&self.b11, &self.b22, &self.c11, &self.c22, &self.d]
            .iter()
            .all(|m| crate::linalg::is_finite(m));
        if !dense_ok {
            return Err(MorError::InvalidInput("non-finite entry in B, C or D".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ValidationReport {
    pub n_dyn: usize,
    pub n_alg: usize,
    pub inputs: usize,
    pub outputs: usize,
    pub dims_consistent: bool,
    pub e11_factorizes: bool,
    pub a22_factorizes: bool,
    pub b22_zero: bool,
    pub c22_zero: bool,
    /// a22 = a22ᵀ, a12 = a21ᵀ and c22 = b22ᵀ.
    pub symmetry_triple: bool,
    pub messages: Vec<String>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.dims_consistent && self.e11_factorizes && self.a22_factorizes
    }
}

const SYMMETRY_TOL: f64 = 0.0;

/// Report-only structural check of the block data.
pub fn validate_semi_explicit(blocks: &DaeBlocks) -> ValidationReport {
    let mut messages = Vec::new();
    let dims_consistent = match blocks.check_dims() {
        Ok(()) => true,
        Err(e) => {
            messages.push(e.to_string());
            false
        }
    };
    let mut factor_ok = |name: &str, m: &SparseMatrix| match lu_factor(m) {
        Ok(_) => true,
        Err(e) => {
            messages.push(format!("{name}: {e}"));
            false
        }
    };
    let e11_factorizes = factor_ok("e11", &blocks.e11);
    let a22_factorizes = factor_ok("a22", &blocks.a22);
    let b22_zero = blocks.b22.iter().all(|&x| x == 0.0);
    let c22_zero = blocks.c22.iter().all(|&x| x == 0.0);
    let symmetry_triple = dims_consistent
        && blocks.a22.is_symmetric(SYMMETRY_TOL)
        && blocks.a12.approx_eq(&blocks.a21.transpose(), SYMMETRY_TOL)
        && blocks.c22.shape() == (blocks.b22.ncols(), blocks.b22.nrows())
        && blocks.c22 == blocks.b22.transpose();
    ValidationReport {
        n_dyn: blocks.n_dyn(),
        n_alg: blocks.n_alg(),
        inputs: blocks.b11.ncols(),
        outputs: blocks.c11.nrows(),
        dims_consistent,
        e11_factorizes,
        a22_factorizes,
        b22_zero,
        c22_zero,
        symmetry_triple,
        messages,
    }
}

#[derive(Debug, Default)]
struct Cache {
    a22_inv_b22: OnceLock<Mat>,
    c22_a22_inv: OnceLock<Mat>,
    a22_inv_a21: OnceLock<Mat>,
    descriptor: OnceLock<DescriptorSystem>,
}

/// A validated semi-explicit index-1 DAE.
///
/// The factorizations of e11 and a22 are computed once and shared between clones
/// and between systems derived with [`SemiExplicitDae::with_io`].
#[derive(Clone, Debug)]
pub struct SemiExplicitDae {
    blocks: DaeBlocks,
    e11_lu: Arc<LuFactors<f64>>,
    a22_lu: Arc<LuFactors<f64>>,
    cache: Arc<Cache>,
}

impl SemiExplicitDae {
    pub fn new(blocks: DaeBlocks) -> Result<Self> {
        blocks.check_dims()?;
        let e11_lu = lu_factor(&blocks.e11).map_err(|e| context(e, "e11"))?;
        let a22_lu = lu_factor(&blocks.a22).map_err(|e| context(e, "a22"))?;
        Ok(SemiExplicitDae {
            blocks,
            e11_lu: Arc::new(e11_lu),
            a22_lu: Arc::new(a22_lu),
            cache: Arc::default(),
        })
    }

    /// Same dynamics, new input/output blocks; factorizations are reused.
    pub fn with_io(&self, b11: Mat, b22: Mat, c11: Mat, c22: Mat, d: Mat) -> Result<Self> {
        let blocks = DaeBlocks {
            b11,
            b22,
            c11,
            c22,
            d,
            ..self.blocks.clone()
        };
        blocks.check_dims()?;
        let cache = Cache::default();
        if blocks.b22 == self.blocks.b22 {
            if let Some(v) = self.cache.a22_inv_b22.get() {
                let _ = cache.a22_inv_b22.set(v.clone());
            }
        }
        if blocks.c22 == self.blocks.c22 {
            if let Some(v) = self.cache.c22_a22_inv.get() {
                let _ = cache.c22_a22_inv.set(v.clone());
            }
        }
        if let Some(v) = self.cache.a22_inv_a21.get() {
            let _ = cache.a22_inv_a21.set(v.clone());
        }
        Ok(SemiExplicitDae {
            blocks,
            e11_lu: self.e11_lu.clone(),
            a22_lu: self.a22_lu.clone(),
            cache: Arc::new(cache),
        })
    }

    pub fn blocks(&self) -> &DaeBlocks {
        &self.blocks
    }

    pub fn into_blocks(self) -> DaeBlocks {
        self.blocks
    }

    pub fn n_dyn(&self) -> usize {
        self.blocks.n_dyn()
    }

    pub fn n_alg(&self) -> usize {
        self.blocks.n_alg()
    }

    pub fn order(&self) -> usize {
        self.n_dyn() + self.n_alg()
    }

    pub fn inputs(&self) -> usize {
        self.blocks.b11.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.blocks.c11.nrows()
    }

    pub fn validate(&self) -> ValidationReport {
        validate_semi_explicit(&self.blocks)
    }

    pub fn e11_lu(&self) -> &LuFactors<f64> {
        &self.e11_lu
    }

    pub fn a22_lu(&self) -> &LuFactors<f64> {
        &self.a22_lu
    }

    /// a22⁻¹·b22, computed once.
    pub fn a22_inv_b22(&self) -> &Mat {
        self.cache
            .a22_inv_b22
            .get_or_init(|| self.a22_lu.solve(&self.blocks.b22))
    }

    /// c22·a22⁻¹, computed once through a transposed solve.
    pub fn c22_a22_inv(&self) -> &Mat {
        self.cache
            .c22_a22_inv
            .get_or_init(|| self.a22_lu.solve_transpose(&self.blocks.c22.transpose()).transpose())
    }

    /// a22⁻¹·a21 (dense n_alg × n_dyn).
    pub fn a22_inv_a21(&self) -> &Mat {
        self.cache
            .a22_inv_a21
            .get_or_init(|| self.a22_lu.solve(&self.blocks.a21.to_dense()))
    }

    /// D_imp = −c22·a22⁻¹·b22.
    pub fn implicit_feedthrough(&self) -> Mat {
        let b = &self.blocks;
        if b.c22.nrows() < b.b22.ncols() {
            -(self.c22_a22_inv() * &b.b22)
        } else {
            -(&b.c22 * self.a22_inv_b22())
        }
    }

    /// Eliminate x2 through the algebraic equation.
    pub fn underlying_ode(&self) -> OdeRealization {
        let b = &self.blocks;
        let a12 = b.a12.to_dense();
        let a1 = b.a11.to_dense() - &a12 * self.a22_inv_a21();
        let b1 = &b.b11 - &a12 * self.a22_inv_b22();
        let c1 = &b.c11 - &b.c22 * self.a22_inv_a21();
        let d1 = &b.d + self.implicit_feedthrough();
        OdeRealization {
            e1: b.e11.to_dense(),
            a1,
            b1,
            c1,
            d1,
        }
    }

    /// Realization of G(s) − d − D_imp with b22 = 0 (input side) or c22 = 0 (output side).
    pub fn strictly_proper(&self, side: Side) -> Result<Self> {
        let b = &self.blocks;
        let (p, m) = (self.outputs(), self.inputs());
        match side {
            Side::Input => {
                let b11 = &b.b11 - b.a12.mul_dense(self.a22_inv_b22());
                let b22 = Mat::zeros(self.n_alg(), m);
                self.with_io(b11, b22, b.c11.clone(), b.c22.clone(), Mat::zeros(p, m))
            }
            Side::Output => {
                let c11 = &b.c11 - b.a21.tr_mul_dense(&self.c22_a22_inv().transpose()).transpose();
                let c22 = Mat::zeros(p, self.n_alg());
                self.with_io(b.b11.clone(), b.b22.clone(), c11, c22, Mat::zeros(p, m))
            }
        }
    }

    /// The assembled descriptor system (E, A, B, C, D).
    pub fn descriptor(&self) -> &DescriptorSystem {
        self.cache.descriptor.get_or_init(|| {
            let b = &self.blocks;
            let (n1, n2) = (self.n_dyn(), self.n_alg());
            let e = SparseMatrix::block2x2(
                &b.e11,
                &SparseMatrix::zeros(n1, n2),
                &SparseMatrix::zeros(n2, n1),
                &SparseMatrix::zeros(n2, n2),
            )
            .expect("validated block shapes");
            let a = SparseMatrix::block2x2(&b.a11, &b.a12, &b.a21, &b.a22).expect("validated block shapes");
            DescriptorSystem {
                e,
                a,
                b: crate::linalg::vstack(&b.b11, &b.b22),
                c: crate::linalg::hstack(&b.c11, &b.c22),
                d: b.d.clone(),
            }
        })
    }

    /// Split an N-row matrix into its dynamic and algebraic row blocks.
    pub fn split_rows(&self, v: &Mat) -> (Mat, Mat) {
        let n1 = self.n_dyn();
        (v.rows(0, n1).clone_owned(), v.rows(n1, v.nrows() - n1).clone_owned())
    }
}

fn context(e: MorError, name: &str) -> MorError {
    match e {
        MorError::SingularMatrix { pivot, threshold, .. } => MorError::SingularMatrix {
            context: name.to_string(),
            pivot,
            threshold,
        },
        other => other,
    }
}

impl TransferFunction for SemiExplicitDae {
    fn io_dims(&self) -> (usize, usize) {
        (self.outputs(), self.inputs())
    }

    fn transfer_eval(&self, s: C64) -> Result<CMat> {
        self.descriptor().transfer_eval(s)
    }
}

impl TransferFunction for OdeRealization {
    fn io_dims(&self) -> (usize, usize) {
        (self.c1.nrows(), self.b1.ncols())
    }

    fn transfer_eval(&self, s: C64) -> Result<CMat> {
        dense_transfer(&self.e1, &self.a1, &self.b1, &self.c1, &self.d1, s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::scalar_blocks;

    fn scalar_dae(b22: f64, c22: f64) -> SemiExplicitDae {
        SemiExplicitDae::new(scalar_blocks(1.0, -1.0, 1.0, 1.0, -1.0, 1.0, b22, 1.0, c22, 0.0)).unwrap()
    }

    #[test]
    fn decoupled_blocks_pass_through() {
        let blocks = scalar_blocks(2.0, -3.0, 0.0, 0.0, 5.0, 1.5, 0.0, 0.5, 0.0, 0.25);
        let ode = SemiExplicitDae::new(blocks).unwrap().underlying_ode();
        assert_eq!(ode.e1[(0, 0)], 2.0);
        assert_eq!(ode.a1[(0, 0)], -3.0);
        assert_eq!(ode.b1[(0, 0)], 1.5);
        assert_eq!(ode.c1[(0, 0)], 0.5);
        assert_eq!(ode.d1[(0, 0)], 0.25);
    }

    #[test]
    fn hand_schur_complement() {
        let ode = scalar_dae(0.0, 0.0).underlying_ode();
        assert_eq!(ode.a1[(0, 0)], 0.0);
        assert_eq!(ode.b1[(0, 0)], 1.0);
        assert_eq!(ode.c1[(0, 0)], 1.0);
    }

    #[test]
    fn implicit_feedthrough_scalar() {
        let blocks = scalar_blocks(1.0, -1.0, 1.0, 1.0, -2.0, 1.0, 4.0, 1.0, 1.0, 0.0);
        let dae = SemiExplicitDae::new(blocks).unwrap();
        assert_eq!(dae.implicit_feedthrough()[(0, 0)], 2.0);
        assert_eq!(scalar_dae(1.0, 0.0).implicit_feedthrough()[(0, 0)], 0.0);
    }

    #[test]
    fn strictly_proper_hand_values() {
        // a12·a22⁻¹·b22 = 1·(−2)⁻¹·4 = −2, so b11 becomes 1 + 2 = 3
        let blocks = scalar_blocks(1.0, -1.0, 1.0, 1.0, -2.0, 1.0, 4.0, 1.0, 1.0, 0.5);
        let dae = SemiExplicitDae::new(blocks).unwrap();
        let sp = dae.strictly_proper(Side::Input).unwrap();
        assert_eq!(sp.blocks().b11[(0, 0)], 3.0);
        assert_eq!(sp.blocks().b22[(0, 0)], 0.0);
        assert_eq!(sp.blocks().d[(0, 0)], 0.0);
        assert_eq!(sp.implicit_feedthrough()[(0, 0)], 0.0);
        // c22·a22⁻¹·a21 = 1·(−1/2)·1, c11 becomes 1.5
        let so = dae.strictly_proper(Side::Output).unwrap();
        assert_eq!(so.blocks().c11[(0, 0)], 1.5);
        assert_eq!(so.underlying_ode().d1[(0, 0)], 0.0);
    }

    #[test]
    fn strictly_proper_is_identity_without_feedthrough() {
        let dae = scalar_dae(0.0, 0.0);
        for side in [Side::Input, Side::Output] {
            let sp = dae.strictly_proper(side).unwrap();
            assert_eq!(sp.blocks(), dae.blocks());
        }
    }

    #[test]
    fn singular_a22_rejected() {
        let blocks = scalar_blocks(1.0, -1.0, 1.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 0.0);
        match SemiExplicitDae::new(blocks.clone()) {
            Err(MorError::SingularMatrix { context, .. }) => assert_eq!(context, "a22"),
            other => panic!("unexpected {other:?}"),
        }
        let report = validate_semi_explicit(&blocks);
        assert!(!report.a22_factorizes && report.e11_factorizes);
    }

    #[test]
    fn flags_reported() {
        let r = scalar_dae(0.0, 0.0).validate();
        assert!(r.b22_zero && r.c22_zero && r.symmetry_triple);
        let r = scalar_dae(2.0, 0.0).validate();
        assert!(!r.b22_zero && r.c22_zero && !r.symmetry_triple);
        let r = scalar_dae(2.0, 2.0).validate();
        assert!(r.symmetry_triple);
    }

    #[test]
    fn cache_fill_is_shared_across_threads() {
        let dae = scalar_dae(3.0, 1.0);
        let vals: Vec<Mat> = std::thread::scope(|s| {
            let hs: Vec<_> = (0..4).map(|_| s.spawn(|| dae.a22_inv_b22().clone())).collect();
            hs.into_iter().map(|h| h.join().unwrap()).collect()
        });
        assert!(vals.windows(2).all(|w| w[0] == w[1]));
        assert_eq!(vals[0][(0, 0)], -3.0);
    }
}
