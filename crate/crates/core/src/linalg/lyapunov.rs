//! Small dense Sylvester and Lyapunov solvers (Bartels–Stewart).
//!
//! Convention: `solve_lyapunov_small(a, q)` returns x with a·x + x·aᵀ + q = 0.

use nalgebra::Schur;

use super::{max_abs, Mat};
use crate::error::{MorError, Result};

/// Relative size below which a diagonal block system is considered singular.
const UNIQUENESS_TOL: f64 = 1e-13;

/// Solve a·x + x·b = c.
pub fn solve_sylvester_small(a: &Mat, b: &Mat, c: &Mat) -> Result<Mat> {
    let (m, n) = (a.nrows(), b.nrows());
    if !a.is_square() || !b.is_square() || c.shape() != (m, n) {
        return Err(MorError::dims(format!(
            "sylvester: a {:?}, b {:?}, c {:?}",
            a.shape(),
            b.shape(),
            c.shape()
        )));
    }
    if m == 0 || n == 0 {
        return Ok(Mat::zeros(m, n));
    }
    let (ua, ta) = real_schur(a)?;
    let (ub, tb) = real_schur(b)?;
    // ta·y + y·tb = f with y = uaᵀ·x·ub
    let f = ua.transpose() * c * &ub;
    let scale = max_abs(&ta).max(max_abs(&tb)).max(f64::MIN_POSITIVE);
    let ra = blocks(&ta);
    let rb = blocks(&tb);

    let mut y = Mat::zeros(m, n);
    for &(j0, nj) in &rb {
        // rhs for column block j: f_j − Σ_{i<j} y_i·tb[i, j]
        let mut g = f.columns(j0, nj).clone_owned();
        if j0 > 0 {
            g -= y.columns(0, j0) * tb.view((0, j0), (j0, nj));
        }
        let tbjj = tb.view((j0, j0), (nj, nj)).clone_owned();
        for &(k0, nk) in ra.iter().rev() {
            let mut h = g.rows(k0, nk).clone_owned();
            let tail = k0 + nk;
            if tail < m {
                h -= ta.view((k0, tail), (nk, m - tail)) * y.view((tail, j0), (m - tail, nj));
            }
            let takk = ta.view((k0, k0), (nk, nk)).clone_owned();
            let blk = solve_small_block(&takk, &tbjj, &h, scale)?;
            y.view_mut((k0, j0), (nk, nj)).copy_from(&blk);
        }
    }
    Ok(&ua * y * ub.transpose())
}

/// Solve a·x + x·aᵀ + q = 0; the result is symmetrized when q is symmetric.
pub fn solve_lyapunov_small(a: &Mat, q: &Mat) -> Result<Mat> {
    if !a.is_square() || q.shape() != a.shape() {
        return Err(MorError::dims(format!(
            "lyapunov: a {:?}, q {:?}",
            a.shape(),
            q.shape()
        )));
    }
    let x = solve_sylvester_small(a, &a.transpose(), &(-q))?;
    if (q - q.transpose()).abs().max() == 0.0 {
        Ok((&x + x.transpose()) * 0.5)
    } else {
        Ok(x)
    }
}

fn real_schur(m: &Mat) -> Result<(Mat, Mat)> {
    let schur = Schur::try_new(m.clone(), f64::EPSILON, 0)
        .ok_or_else(|| MorError::InvalidInput("real Schur decomposition did not converge".into()))?;
    Ok(schur.unpack())
}

/// Diagonal block partition (start, size) of a quasi-upper-triangular matrix.
fn blocks(t: &Mat) -> Vec<(usize, usize)> {
    let n = t.nrows();
    let mut out = Vec::new();
    let mut i = 0;
    while i < n {
        if i + 1 < n && t[(i + 1, i)] != 0.0 {
            out.push((i, 2));
            i += 2;
        } else {
            out.push((i, 1));
            i += 1;
        }
    }
    out
}

/// Solve p·y + y·r = h for blocks of size ≤ 2 via the Kronecker form.
fn solve_small_block(p: &Mat, r: &Mat, h: &Mat, scale: f64) -> Result<Mat> {
    let (np, nr) = (p.nrows(), r.nrows());
    let dim = np * nr;
    // column-major vec: (I ⊗ p + rᵀ ⊗ I) vec(y) = vec(h)
    let mut k = Mat::zeros(dim, dim);
    for j in 0..nr {
        for i in 0..np {
            let row = j * np + i;
            for l in 0..np {
                k[(row, j * np + l)] += p[(i, l)];
            }
            for l in 0..nr {
                k[(row, l * np + i)] += r[(l, j)];
            }
        }
    }
    let lu = k.clone().lu();
    let u = lu.u();
    let gap = (0..dim).map(|i| u[(i, i)].abs()).fold(f64::INFINITY, f64::min);
    if !(gap > UNIQUENESS_TOL * scale) {
        return Err(MorError::NonUniqueSolution { gap });
    }
    let rhs = nalgebra::DVector::from_column_slice(h.as_slice());
    let sol = lu.solve(&rhs).ok_or(MorError::NonUniqueSolution { gap })?;
    Ok(Mat::from_column_slice(np, nr, sol.as_slice()))
}
