//! Strict dissipativity: the check E1 = E1ᵀ ≻ 0, A1 + A1ᵀ ≺ 0 on the underlying ODE,
//! and the left transformation that produces such a realization for a stable DAE.

use serde::{Deserialize, Serialize};

use crate::error::{MorError, Result};
use crate::linalg::{
    eigenvalues_dense, max_abs, solve_lyapunov_small, symmetric_extremes, LuFactors, Mat, SparseMatrix,
};
use crate::model::{DaeBlocks, SemiExplicitDae};

/// Margins are relative to the largest entry of the matrix being checked.
pub const DISSIPATIVITY_TOL: f64 = 1e-12;

// the full-A shortcut needs a dense N×N eigenvalue problem
const SHORTCUT_MAX_ORDER: usize = 3000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DissipativityReport {
    pub e1_symmetric: bool,
    pub e1_spd: bool,
    pub e1_min_eig: f64,
    pub a1_symmpart_nd: bool,
    /// Largest eigenvalue of the symmetric part of the matrix actually checked:
    /// the full A when the shortcut was used, A1 otherwise.
    pub a1_max_eig: f64,
    pub shortcut_used: bool,
}

impl DissipativityReport {
    pub fn is_dissipative(&self) -> bool {
        self.e1_spd && self.a1_symmpart_nd
    }
}

fn symmetric(m: &Mat) -> bool {
    max_abs(&(m - m.transpose())) <= DISSIPATIVITY_TOL * max_abs(m)
}

/// (symmetric, spd, min eig of the symmetric part)
fn spd_check(m: &Mat) -> (bool, bool, f64) {
    let sym = symmetric(m);
    let (lo, _) = symmetric_extremes(m);
    (sym, sym && lo > DISSIPATIVITY_TOL * max_abs(m), lo)
}

/// (negative definite symmetric part, its max eig)
fn nd_check(m: &Mat) -> (bool, f64) {
    let (_, hi) = symmetric_extremes(m);
    (hi < -DISSIPATIVITY_TOL * max_abs(m), hi)
}

/// Check of the strictly dissipative form on the underlying ODE.
///
/// If the full A already has A + Aᵀ ≺ 0, every Schur complement inherits it, so A1
/// is never formed.
pub fn is_strictly_dissipative(dae: &SemiExplicitDae) -> DissipativityReport {
    let (e1_symmetric, e1_spd, e1_min_eig) = spd_check(&dae.blocks().e11.to_dense());
    if dae.order() <= SHORTCUT_MAX_ORDER {
        let (nd, hi) = nd_check(&dae.descriptor().a.to_dense());
        if nd {
            return DissipativityReport {
                e1_symmetric,
                e1_spd,
                e1_min_eig,
                a1_symmpart_nd: true,
                a1_max_eig: hi,
                shortcut_used: true,
            };
        }
    }
    let (nd, hi) = nd_check(&dae.underlying_ode().a1);
    DissipativityReport {
        e1_symmetric,
        e1_spd,
        e1_min_eig,
        a1_symmpart_nd: nd,
        a1_max_eig: hi,
        shortcut_used: false,
    }
}

/// What the transformation did, for reproducibility.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransformRecord {
    /// P = Pᵀ ≻ 0 with A1ᵀ·P·E11 + E11ᵀ·P·A1 + Q = 0.
    #[serde(with = "crate::linalg::mat_serde")]
    pub p: Mat,
    /// Right-hand side used for the Lyapunov equation.
    pub q_choice: String,
    /// ‖A1ᵀPE11 + E11ᵀPA1 + I‖_max relative to ‖A1ᵀPE11‖_max.
    pub lyapunov_residual: f64,
    pub p_min_eig: f64,
    pub p_max_eig: f64,
    /// Largest real part of the finite spectrum checked beforehand.
    pub max_real_eig: f64,
    pub report_after: DissipativityReport,
}

/// Left-multiply a stable DAE by T = [[E11ᵀP, −E11ᵀP·A12·A22⁻¹], [0, I]].
///
/// The dynamic rows become (E11ᵀPE11, E11ᵀPA1, 0, E11ᵀPB1); the algebraic rows and
/// C, D are kept as they are, so the transfer function does not change.
pub fn sd_transform(dae: &SemiExplicitDae) -> Result<(SemiExplicitDae, TransformRecord)> {
    let ode = dae.underlying_ode();
    let e11 = &ode.e1;
    let a1 = &ode.a1;
    let max_real = eigenvalues_dense(a1, Some(e11))?.max_real();
    if !(max_real < 0.0) {
        return Err(MorError::UnstableSystem { max_real });
    }

    // with M = A1·E11⁻¹:  Mᵀ·P + P·M + E11⁻ᵀE11⁻¹ = 0
    let n = e11.nrows();
    let elu = dae.e11_lu();
    let e_inv = elu.solve(&Mat::identity(n, n));
    let m = a1 * &e_inv;
    let q = e_inv.transpose() * &e_inv;
    let p = solve_lyapunov_small(&m.transpose(), &q).map_err(|_| MorError::LyapunovSingular)?;
    let p = (&p + p.transpose()) * 0.5;
    let (p_min, p_max) = symmetric_extremes(&p);
    if !(p_min > 0.0) {
        return Err(MorError::NotPositiveDefinite { min_eig: p_min });
    }

    let et_p = e11.transpose() * &p;
    let term = &et_p * a1;
    let lyap = term.transpose() + &term + Mat::identity(n, n);
    let lyapunov_residual = max_abs(&lyap) / max_abs(&term).max(f64::MIN_POSITIVE);

    let e_new = &et_p * e11;
    let e_new = (&e_new + e_new.transpose()) * 0.5;
    let b = dae.blocks();
    let blocks = DaeBlocks {
        e11: SparseMatrix::from_dense(&e_new),
        a11: SparseMatrix::from_dense(&term),
        a12: SparseMatrix::zeros(n, dae.n_alg()),
        a21: b.a21.clone(),
        a22: b.a22.clone(),
        b11: &et_p * &ode.b1,
        b22: b.b22.clone(),
        c11: b.c11.clone(),
        c22: b.c22.clone(),
        d: b.d.clone(),
    };
    let out = SemiExplicitDae::new(blocks)?;
    let report_after = is_strictly_dissipative(&out);
    Ok((
        out,
        TransformRecord {
            p,
            q_choice: "identity".into(),
            lyapunov_residual,
            p_min_eig: p_min,
            p_max_eig: p_max,
            max_real_eig: max_real,
            report_after,
        },
    ))
}

/// Schur complement A11 − A12·A22⁻¹·A21 of a dense matrix split at `n1`.
pub fn schur_complement(a: &Mat, n1: usize) -> Result<Mat> {
    let n = a.nrows();
    let a11 = a.view((0, 0), (n1, n1));
    let a12 = a.view((0, n1), (n1, n - n1));
    let a21 = a.view((n1, 0), (n - n1, n1)).clone_owned();
    let a22 = a.view((n1, n1), (n - n1, n - n1)).clone_owned();
    let x = LuFactors::dense(&a22)?.solve(&a21);
    Ok(a11 - a12 * x)
}
