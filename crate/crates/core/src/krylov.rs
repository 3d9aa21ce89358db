//! Tangential rational Krylov bases in Sylvester form.
//!
//! Input side:  A·V − E·V·S − B·R = 0, with (S, R) = (S_V, R).
//! Output side: Wᵀ·A − S_W·Wᵀ·E − L·C = 0, handled internally as the input-side
//! equation of the transposed system (Aᵀ, Eᵀ, Cᵀ) with S = S_Wᵀ and R = Lᵀ.

use std::collections::HashMap;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{MorError, Result};
use crate::linalg::{max_abs, orthonormalize, CMat, LuFactors, Mat, SparseMatrix, C64};
pub use crate::model::Side;
use crate::model::{DescriptorSystem, SemiExplicitDae};

/// Relative tolerance for treating two shifts as equal.
const SHIFT_TOL: f64 = 1e-12;
/// Relative tolerance for parallel tangential directions.
const PARALLEL_TOL: f64 = 1e-10;

/// One interpolation point: shift s and tangential direction (length m on the
/// input side, p on the output side).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TangentialPoint {
    pub shift: C64,
    pub direction: Vec<C64>,
}

impl TangentialPoint {
    pub fn new(shift: C64, direction: Vec<C64>) -> Self {
        TangentialPoint { shift, direction }
    }

    pub fn real(shift: f64, direction: &[f64]) -> Self {
        TangentialPoint {
            shift: C64::new(shift, 0.0),
            direction: direction.iter().map(|&x| C64::new(x, 0.0)).collect(),
        }
    }

    /// Single-channel point with unit direction.
    pub fn siso(shift: C64) -> Self {
        TangentialPoint {
            shift,
            direction: vec![C64::new(1.0, 0.0)],
        }
    }

    pub fn conj(&self) -> Self {
        TangentialPoint {
            shift: self.shift.conj(),
            direction: self.direction.iter().map(|z| z.conj()).collect(),
        }
    }
}

/// Conjugate-closed point list for SISO shifts: a complex shift whose partner
/// is not listed gets it appended right after.
pub fn siso_points(shifts: &[C64]) -> Vec<TangentialPoint> {
    let mut out = Vec::new();
    for &s in shifts {
        out.push(TangentialPoint::siso(s));
        if s.im != 0.0 && !shifts.contains(&s.conj()) {
            out.push(TangentialPoint::siso(s.conj()));
        }
    }
    out
}

/// Shifts and directions in real Sylvester form.
///
/// Input side: `s` = S_V (n×n), `dirs` = R (m×n).
/// Output side: `s` = S_W (n×n), `dirs` = L (n×p).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InterpolationData {
    pub side: Side,
    #[serde(with = "crate::linalg::mat_serde")]
    pub s: Mat,
    #[serde(with = "crate::linalg::mat_serde")]
    pub dirs: Mat,
    /// The points this data was built from, when known; invariant under basis changes.
    pub points: Vec<TangentialPoint>,
}

impl InterpolationData {
    pub fn order(&self) -> usize {
        self.s.nrows()
    }

    /// (S, R) of the equivalent input-side equation.
    pub fn input_form(&self) -> (Mat, Mat) {
        match self.side {
            Side::Input => (self.s.clone(), self.dirs.clone()),
            Side::Output => (self.s.transpose(), self.dirs.transpose()),
        }
    }

    pub fn from_input_form(side: Side, s: Mat, r: Mat, points: Vec<TangentialPoint>) -> Self {
        match side {
            Side::Input => InterpolationData {
                side,
                s,
                dirs: r,
                points,
            },
            Side::Output => InterpolationData {
                side,
                s: s.transpose(),
                dirs: r.transpose(),
                points,
            },
        }
    }

    /// R for the input side, L for the output side; `None` when the side differs.
    pub fn r(&self) -> Option<&Mat> {
        (self.side == Side::Input).then_some(&self.dirs)
    }

    pub fn l(&self) -> Option<&Mat> {
        (self.side == Side::Output).then_some(&self.dirs)
    }

    pub fn shifts(&self) -> Result<Vec<C64>> {
        Ok(crate::linalg::eigenvalues_dense(&self.s, None)?.finite)
    }

    /// New data for a basis change V ← V·t.
    pub fn change_basis(&self, t: &Mat) -> Result<Self> {
        let n = self.order();
        if t.shape() != (n, n) {
            return Err(MorError::dims(format!("basis change {:?} for order {n}", t.shape())));
        }
        let lu = LuFactors::dense(t).map_err(|_| MorError::singular("basis change t", 0.0, 0.0))?;
        let (s, r) = self.input_form();
        // S ← t⁻¹·S·t, R ← R·t in input form
        let s_new = lu.solve(&(&s * t));
        let r_new = r * t;
        Ok(Self::from_input_form(self.side, s_new, r_new, self.points.clone()))
    }
}

fn is_real(z: C64) -> bool {
    z.im == 0.0
}

fn same_shift(a: C64, b: C64) -> bool {
    (a - b).norm() <= SHIFT_TOL * a.norm().max(b.norm()).max(1.0)
}

fn parallel(a: &[C64], b: &[C64]) -> bool {
    let dot: C64 = a.iter().zip(b).map(|(x, y)| x.conj() * y).sum();
    let na: f64 = a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    dot.norm() >= (1.0 - PARALLEL_TOL) * na * nb
}

/// Encode shifts and tangential directions as a real Sylvester pair.
///
/// A real shift gives a 1×1 block. A conjugate pair α ± iβ with conjugate directions
/// gives the block [[α, β], [−β, α]] with R columns [Re r, Im r] of the β > 0 member.
/// A shift repeated with a parallel direction extends a Jordan chain (coupling 1 or I₂
/// above the diagonal and a zero R column); a repeat with an independent direction
/// starts a separate block.
pub fn shifts_to_sylvester(points: &[TangentialPoint], side: Side) -> Result<InterpolationData> {
    let dim = points.first().map(|p| p.direction.len()).unwrap_or(0);
    for (k, p) in points.iter().enumerate() {
        if p.direction.len() != dim {
            return Err(MorError::dims(format!(
                "direction {k} has length {}, expected {dim}",
                p.direction.len()
            )));
        }
        if p.direction.iter().all(|z| *z == C64::new(0.0, 0.0)) {
            return Err(MorError::ZeroDirection { index: k });
        }
        if !p.shift.re.is_finite() || !p.shift.im.is_finite() {
            return Err(MorError::InvalidInput(format!("non-finite shift {}", p.shift)));
        }
    }

    // Group into real points and upper-half-plane representatives of conjugate pairs.
    let mut used = vec![false; points.len()];
    let mut units: Vec<TangentialPoint> = Vec::new();
    for k in 0..points.len() {
        if used[k] {
            continue;
        }
        used[k] = true;
        let p = &points[k];
        if is_real(p.shift) {
            if p.direction.iter().any(|z| z.im != 0.0) {
                return Err(MorError::InvalidInput(format!(
                    "real shift {} needs a real direction",
                    p.shift.re
                )));
            }
            units.push(p.clone());
            continue;
        }
        let conj = p.conj();
        let partner = (k + 1..points.len()).find(|&j| {
            !used[j]
                && same_shift(points[j].shift, conj.shift)
                && points[j]
                    .direction
                    .iter()
                    .zip(&conj.direction)
                    .all(|(a, b)| (a - b).norm() <= SHIFT_TOL * b.norm().max(1.0))
        });
        match partner {
            Some(j) => {
                used[j] = true;
                units.push(if p.shift.im > 0.0 { p.clone() } else { conj });
            }
            None => return Err(MorError::UnpairedComplexShift { shift: p.shift }),
        }
    }

    let n: usize = units.iter().map(|u| if is_real(u.shift) { 1 } else { 2 }).sum();
    let mut s = Mat::zeros(n, n);
    let mut r = Mat::zeros(dim, n);
    // (shift, head direction, column of the chain's last block)
    let mut chains: Vec<(C64, Vec<C64>, usize)> = Vec::new();
    let mut col = 0;
    for u in &units {
        let size = if is_real(u.shift) { 1 } else { 2 };
        let link = chains
            .iter_mut()
            .find(|(sh, dir, _)| same_shift(*sh, u.shift) && parallel(dir, &u.direction));
        if size == 1 {
            s[(col, col)] = u.shift.re;
        } else {
            let (a, b) = (u.shift.re, u.shift.im);
            s[(col, col)] = a;
            s[(col, col + 1)] = b;
            s[(col + 1, col)] = -b;
            s[(col + 1, col + 1)] = a;
        }
        match link {
            Some(chain) => {
                for d in 0..size {
                    s[(chain.2 + d, col + d)] = 1.0;
                }
                chain.2 = col;
            }
            None => {
                for i in 0..dim {
                    r[(i, col)] = u.direction[i].re;
                    if size == 2 {
                        r[(i, col + 1)] = u.direction[i].im;
                    }
                }
                chains.push((u.shift, u.direction.clone(), col));
            }
        }
        col += size;
    }
    Ok(InterpolationData::from_input_form(side, s, r, points.to_vec()))
}

/// A basis together with the Sylvester data it satisfies.
#[derive(Clone, Debug)]
pub struct KrylovBasis {
    pub basis: Mat,
    pub data: InterpolationData,
    /// max-abs of the Sylvester residual
    pub residual_norm: f64,
    /// residual relative to the magnitude of the individual terms
    pub relative_residual: f64,
    /// Indices of data columns dropped as linearly dependent.
    pub deflated: Vec<usize>,
}

impl KrylovBasis {
    pub fn side(&self) -> Side {
        self.data.side
    }

    pub fn order(&self) -> usize {
        self.basis.ncols()
    }

    /// V ← V·t with the Sylvester data transformed to match.
    pub fn change_basis(&self, sys: &DescriptorSystem, t: &Mat) -> Result<Self> {
        let data = self.data.change_basis(t)?;
        let basis = &self.basis * t;
        let (res, rel) = sylvester_residual(sys, &basis, &data);
        Ok(KrylovBasis {
            basis,
            data,
            residual_norm: res,
            relative_residual: rel,
            deflated: self.deflated.clone(),
        })
    }

    /// Orthonormal basis of the same space, data tracked through the change of basis.
    pub fn orthonormalized(&self, sys: &DescriptorSystem) -> Result<Self> {
        let o = orthonormalize(&self.basis);
        if !o.deflated.is_empty() {
            return Err(MorError::InvalidInput(format!(
                "basis columns {:?} are linearly dependent",
                o.deflated
            )));
        }
        let t_inv = LuFactors::dense(&o.t)?.solve(&Mat::identity(o.t.nrows(), o.t.ncols()));
        let mut out = self.change_basis(sys, &t_inv)?;
        // q is exactly orthonormal; replace the product V·t⁻¹ by it
        out.basis = o.q;
        let (res, rel) = sylvester_residual(sys, &out.basis, &out.data);
        out.residual_norm = res;
        out.relative_residual = rel;
        Ok(out)
    }
}

/// Residual of A·V − E·V·S − B·R (or its dual) in max-abs, absolute and relative.
pub fn sylvester_residual(sys: &DescriptorSystem, v: &Mat, data: &InterpolationData) -> (f64, f64) {
    let (s, r) = data.input_form();
    let (av, ev, br) = match data.side {
        Side::Input => (sys.a.mul_dense(v), sys.e.mul_dense(v), &sys.b * &r),
        Side::Output => (sys.a.tr_mul_dense(v), sys.e.tr_mul_dense(v), sys.c.transpose() * &r),
    };
    let evs = &ev * &s;
    let res = max_abs(&(&av - &evs - &br));
    let scale = max_abs(&av).max(max_abs(&evs)).max(max_abs(&br));
    (res, if scale > 0.0 { res / scale } else { res })
}

/// Solves with A − λE (or its transpose), one factorization per distinct shift.
struct ShiftedSolver<'a> {
    sys: &'a DescriptorSystem,
    transpose: bool,
    real: HashMap<u64, LuFactors<f64>>,
    complex: HashMap<(u64, u64), LuFactors<C64>>,
}

impl<'a> ShiftedSolver<'a> {
    fn new(sys: &'a DescriptorSystem, side: Side) -> Self {
        ShiftedSolver {
            sys,
            transpose: side == Side::Output,
            real: HashMap::new(),
            complex: HashMap::new(),
        }
    }

    /// E·x (or Eᵀ·x).
    fn e_mul(&self, x: &Mat) -> Mat {
        if self.transpose {
            self.sys.e.tr_mul_dense(x)
        } else {
            self.sys.e.mul_dense(x)
        }
    }

    /// B (or Cᵀ).
    fn input(&self) -> Mat {
        if self.transpose {
            self.sys.c.transpose()
        } else {
            self.sys.b.clone()
        }
    }

    fn solve_real(&mut self, shift: f64, f: &Mat) -> Result<Mat> {
        let key = shift.to_bits();
        if !self.real.contains_key(&key) {
            let lu = self.sys.shifted_lu_real(shift)?;
            self.real.insert(key, lu);
        }
        let lu = &self.real[&key];
        Ok(if self.transpose {
            lu.solve_transpose(f)
        } else {
            lu.solve(f)
        })
    }

    fn solve_complex(&mut self, shift: C64, f: &CMat) -> Result<CMat> {
        let key = (shift.re.to_bits(), shift.im.to_bits());
        if !self.complex.contains_key(&key) {
            let lu = self.sys.shifted_lu(shift)?;
            self.complex.insert(key, lu);
        }
        let lu = &self.complex[&key];
        Ok(if self.transpose {
            lu.solve_transpose(f)
        } else {
            lu.solve(f)
        })
    }

    /// Solve A·Y − E·Y·M = F for a 1×1 or 2×2 block M (2×2 must have complex eigenvalues).
    fn solve_block(&mut self, m: &Mat, f: &Mat) -> Result<Mat> {
        if m.nrows() == 1 {
            return self.solve_real(m[(0, 0)], f);
        }
        let (lambda, x) = complex_eig_2x2(m)?;
        // Y·x = z with (A − λE)z = F·x; Y = Re([z z̄]·[x x̄]⁻¹)
        let fx = crate::linalg::to_complex(f) * &x;
        let z = self.solve_complex(lambda, &fx)?;
        let xx = CMat::from_columns(&[x.column(0).clone_owned(), x.column(0).map(|c| c.conj())]);
        let xinv = xx
            .try_inverse()
            .ok_or_else(|| MorError::InvalidInput("defective 2x2 shift block".into()))?;
        let zz = CMat::from_columns(&[z.column(0).clone_owned(), z.column(0).map(|c| c.conj())]);
        Ok((zz * xinv).map(|c| c.re))
    }
}

/// Eigenvalue with positive imaginary part and its eigenvector, for a 2×2 real block.
fn complex_eig_2x2(m: &Mat) -> Result<(C64, CMat)> {
    let half_tr = 0.5 * (m[(0, 0)] + m[(1, 1)]);
    let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
    let disc = half_tr * half_tr - det;
    if disc >= 0.0 {
        return Err(MorError::InvalidInput(
            "2x2 shift block must have a complex-conjugate eigenvalue pair".into(),
        ));
    }
    let lambda = C64::new(half_tr, (-disc).sqrt());
    let x = if m[(0, 1)].abs() >= m[(1, 0)].abs() {
        CMat::from_column_slice(2, 1, &[C64::new(m[(0, 1)], 0.0), lambda - m[(0, 0)]])
    } else {
        CMat::from_column_slice(2, 1, &[lambda - m[(1, 1)], C64::new(m[(1, 0)], 0.0)])
    };
    Ok((lambda, x))
}

/// Diagonal blocks (start, size) of a quasi-upper-triangular matrix, or None.
fn quasi_triangular_blocks(s: &Mat) -> Option<Vec<(usize, usize)>> {
    let n = s.nrows();
    for j in 0..n {
        for i in j + 2..n {
            if s[(i, j)] != 0.0 {
                return None;
            }
        }
    }
    let mut out = Vec::new();
    let mut i = 0;
    while i < n {
        if i + 1 < n && s[(i + 1, i)] != 0.0 {
            if i + 2 < n && s[(i + 2, i + 1)] != 0.0 {
                return None;
            }
            out.push((i, 2));
            i += 2;
        } else {
            out.push((i, 1));
            i += 1;
        }
    }
    Some(out)
}

fn view_of(dae: &SemiExplicitDae) -> &DescriptorSystem {
    dae.descriptor()
}

fn check_data(sys: &DescriptorSystem, data: &InterpolationData) -> Result<()> {
    let (s, r) = data.input_form();
    let width = match data.side {
        Side::Input => sys.b.ncols(),
        Side::Output => sys.c.nrows(),
    };
    if !s.is_square() || r.shape() != (width, s.nrows()) {
        return Err(MorError::dims(format!(
            "interpolation data S {:?}, directions {:?} for {width} channels",
            s.shape(),
            r.shape()
        )));
    }
    Ok(())
}

/// Exact solution of the Sylvester equation for the given data, by block
/// forward substitution over the quasi-triangular S (real Schur form otherwise).
pub fn krylov_basis_raw(sys: &DescriptorSystem, data: &InterpolationData) -> Result<KrylovBasis> {
    check_data(sys, data)?;
    let (s, r) = data.input_form();
    let n = s.nrows();
    let (s_tri, r_tri, back) = match quasi_triangular_blocks(&s) {
        Some(_) => (s.clone(), r.clone(), None),
        None => {
            let schur = nalgebra::Schur::try_new(s.clone(), f64::EPSILON, 0)
                .ok_or_else(|| MorError::InvalidInput("Schur form of S did not converge".into()))?;
            let (u, t) = schur.unpack();
            (t, &r * &u, Some(u))
        }
    };
    let blocks = quasi_triangular_blocks(&s_tri).expect("Schur form is quasi-triangular");
    let mut solver = ShiftedSolver::new(sys, data.side);
    let input = solver.input();
    let big_n = sys.order();
    let mut v = Mat::zeros(big_n, n);
    for &(j0, nj) in &blocks {
        let mut f = &input * r_tri.columns(j0, nj);
        if j0 > 0 {
            let coupling = s_tri.view((0, j0), (j0, nj));
            if coupling.iter().any(|&x| x != 0.0) {
                f += solver.e_mul(&(v.columns(0, j0) * coupling));
            }
        }
        let m = s_tri.view((j0, j0), (nj, nj)).clone_owned();
        let y = solver.solve_block(&m, &f)?;
        v.columns_mut(j0, nj).copy_from(&y);
    }
    if let Some(u) = back {
        v *= u.transpose();
    }
    let (res, rel) = sylvester_residual(sys, &v, data);
    Ok(KrylovBasis {
        basis: v,
        data: data.clone(),
        residual_norm: res,
        relative_residual: rel,
        deflated: Vec::new(),
    })
}

/// Jordan-chain layout of S: per block, the earlier block it couples to (if any).
/// Returns None unless every coupling is an identity link between equal,
/// standard-form diagonal blocks.
fn chain_links(s: &Mat) -> Option<(Vec<(usize, usize)>, Vec<Option<usize>>)> {
    let blocks = quasi_triangular_blocks(s)?;
    let mut links = Vec::with_capacity(blocks.len());
    for (bj, &(j0, nj)) in blocks.iter().enumerate() {
        let mjj = s.view((j0, j0), (nj, nj));
        if nj == 2 && !(mjj[(0, 0)] == mjj[(1, 1)] && mjj[(0, 1)] == -mjj[(1, 0)] && mjj[(0, 1)] > 0.0) {
            return None;
        }
        let mut link = None;
        for (bi, &(i0, ni)) in blocks[..bj].iter().enumerate() {
            let c = s.view((i0, j0), (ni, nj));
            if c.iter().all(|&x| x == 0.0) {
                continue;
            }
            let identity = ni == nj && (0..ni).all(|a| (0..nj).all(|b| c[(a, b)] == if a == b { 1.0 } else { 0.0 }));
            if link.is_some() || !identity || s.view((i0, i0), (ni, ni)) != mjj {
                return None;
            }
            link = Some(bi);
        }
        links.push(link);
    }
    Some((blocks, links))
}

/// Orthonormal basis of the tangential Krylov space with exactly tracked data.
///
/// Rational Arnoldi: every Jordan chain is continued from a locally orthonormalized
/// chain vector instead of the raw previous moment, so long chains at one shift do
/// not collapse onto a dominant direction. Each new block Y solves
/// A·Y − E·(Q·g + Y·M) − B·R_j = 0, is orthogonalized against Q as Y = Q·h + Q_n·R_n,
/// and the pair is updated by S ← T·S_aug·T⁻¹, R ← R_aug·T⁻¹ with T = [[I, h], [0, R_n]].
pub fn krylov_basis_orthonormal(sys: &DescriptorSystem, data: &InterpolationData) -> Result<KrylovBasis> {
    check_data(sys, data)?;
    let (s, r) = data.input_form();
    let Some((blocks, links)) = chain_links(&s) else {
        return krylov_basis_raw(sys, data)?.orthonormalized(sys);
    };
    let mut solver = ShiftedSolver::new(sys, data.side);
    let input = solver.input();
    let big_n = sys.order();
    let width = r.nrows();

    let mut q = Mat::zeros(big_n, 0);
    let mut s_cur = Mat::zeros(0, 0);
    let mut r_cur = Mat::zeros(width, 0);
    // chain carrier of each block (complex coordinates in Q), and chain membership
    let mut carrier: Vec<Option<DVector<C64>>> = vec![None; blocks.len()];
    let mut chain_of: Vec<usize> = Vec::with_capacity(blocks.len());
    let mut chain_members: Vec<Vec<usize>> = Vec::new();
    // a chain stops growing once one of its members deflates
    let mut chain_dead: Vec<bool> = Vec::new();
    let mut deflated = Vec::new();

    for (bj, &(j0, nj)) in blocks.iter().enumerate() {
        let k = q.ncols();
        let m = s.view((j0, j0), (nj, nj)).clone_owned();
        let rj = r.columns(j0, nj).clone_owned();
        let chain = match links[bj] {
            Some(bi) => chain_of[bi],
            None => {
                chain_members.push(Vec::new());
                chain_dead.push(false);
                chain_members.len() - 1
            }
        };
        chain_of.push(chain);
        if chain_dead[chain] {
            deflated.extend(j0..j0 + nj);
            continue;
        }

        // coupling g: coordinates of the chain's latest carrier
        let last = chain_members[chain].iter().rev().find_map(|&b| carrier[b].as_ref());
        let g = match (links[bj], last) {
            (Some(_), Some(c)) => {
                let c = pad(c, k);
                if nj == 1 {
                    Mat::from_columns(&[c.map(|z| z.re)])
                } else {
                    Mat::from_columns(&[c.map(|z| z.re), c.map(|z| z.im)])
                }
            }
            (Some(_), None) => unreachable!("live chain without a carrier"),
            (None, _) => Mat::zeros(k, nj),
        };
        let mut f = &input * &rj;
        if k > 0 {
            f += solver.e_mul(&(&q * &g));
        }
        let y = solver.solve_block(&m, &f)?;

        // global CGS2 against Q
        let mut h = Mat::zeros(k, nj);
        let mut yr = y.clone();
        for _ in 0..2 {
            let c = q.tr_mul(&yr);
            yr -= &q * &c;
            h += c;
        }
        let o = orthonormalize(&yr);
        let pre = y.norm();
        if !o.deflated.is_empty() || yr.norm() < crate::linalg::DEFLATION_TOL * pre {
            deflated.extend(j0..j0 + nj);
            chain_dead[chain] = true;
            continue;
        }
        let (qn, rn) = (o.q, o.t);
        let rn_inv = LuFactors::dense(&rn)?.solve(&Mat::identity(nj, nj));

        // T = [[I, h], [0, rn]], T⁻¹ = [[I, −h·rn⁻¹], [0, rn⁻¹]]
        let kn = k + nj;
        let mut t = Mat::identity(kn, kn);
        t.view_mut((0, k), (k, nj)).copy_from(&h);
        t.view_mut((k, k), (nj, nj)).copy_from(&rn);
        let mut t_inv = Mat::identity(kn, kn);
        t_inv.view_mut((0, k), (k, nj)).copy_from(&(-&h * &rn_inv));
        t_inv.view_mut((k, k), (nj, nj)).copy_from(&rn_inv);
        let mut s_aug = Mat::zeros(kn, kn);
        s_aug.view_mut((0, 0), (k, k)).copy_from(&s_cur);
        s_aug.view_mut((0, k), (k, nj)).copy_from(&g);
        s_aug.view_mut((k, k), (nj, nj)).copy_from(&m);
        let r_aug = crate::linalg::hstack(&r_cur, &rj);
        s_cur = &t * s_aug * &t_inv;
        r_cur = r_aug * &t_inv;
        q = crate::linalg::hstack(&q, &qn);

        // new carrier: chain-local orthonormalization of Y's coordinates [h; rn]
        let mut coords = Mat::zeros(kn, nj);
        coords.view_mut((0, 0), (k, nj)).copy_from(&h);
        coords.view_mut((k, 0), (nj, nj)).copy_from(&rn);
        let mut z: DVector<C64> = if nj == 1 {
            coords.column(0).map(|x| C64::new(x, 0.0))
        } else {
            DVector::from_fn(kn, |i, _| C64::new(coords[(i, 0)], coords[(i, 1)]))
        };
        for _ in 0..2 {
            for &b in &chain_members[chain] {
                if let Some(c) = &carrier[b] {
                    let c = pad(c, kn);
                    let proj = c.dotc(&z);
                    z -= c * proj;
                }
            }
        }
        let nz = z.norm();
        carrier[bj] = (nz > 0.0).then(|| z.unscale(nz));
        chain_members[chain].push(bj);
    }

    let out_data = InterpolationData::from_input_form(data.side, s_cur, r_cur, data.points.clone());
    let (res, rel) = sylvester_residual(sys, &q, &out_data);
    Ok(KrylovBasis {
        basis: q,
        data: out_data,
        residual_norm: res,
        relative_residual: rel,
        deflated,
    })
}

fn pad(c: &DVector<C64>, k: usize) -> DVector<C64> {
    let mut out = DVector::from_element(k, C64::new(0.0, 0.0));
    out.rows_mut(0, c.len()).copy_from(c);
    out
}

/// Raw input-side basis on the assembled DAE (never through the underlying ODE).
pub fn input_krylov_basis(dae: &SemiExplicitDae, data: &InterpolationData) -> Result<KrylovBasis> {
    require_side(data, Side::Input)?;
    krylov_basis_raw(view_of(dae), data)
}

pub fn output_krylov_basis(dae: &SemiExplicitDae, data: &InterpolationData) -> Result<KrylovBasis> {
    require_side(data, Side::Output)?;
    krylov_basis_raw(view_of(dae), data)
}

pub fn input_krylov_basis_orthonormal(dae: &SemiExplicitDae, data: &InterpolationData) -> Result<KrylovBasis> {
    require_side(data, Side::Input)?;
    krylov_basis_orthonormal(view_of(dae), data)
}

pub fn output_krylov_basis_orthonormal(dae: &SemiExplicitDae, data: &InterpolationData) -> Result<KrylovBasis> {
    require_side(data, Side::Output)?;
    krylov_basis_orthonormal(view_of(dae), data)
}

fn require_side(data: &InterpolationData, side: Side) -> Result<()> {
    if data.side != side {
        return Err(MorError::InvalidInput(format!(
            "expected {side:?}-side interpolation data, got {:?}",
            data.side
        )));
    }
    Ok(())
}

/// Basis change on a DAE basis; see [`KrylovBasis::change_basis`].
pub fn change_basis(dae: &SemiExplicitDae, basis: &KrylovBasis, t: &Mat) -> Result<KrylovBasis> {
    basis.change_basis(view_of(dae), t)
}

/// Sylvester residual of the underlying-ODE equation for the top block of a DAE basis.
pub fn underlying_residual(dae: &SemiExplicitDae, basis: &KrylovBasis) -> (f64, f64) {
    let ode = dae.underlying_ode();
    let v1 = basis.basis.rows(0, dae.n_dyn()).clone_owned();
    let sys = DescriptorSystem {
        e: SparseMatrix::from_dense(&ode.e1),
        a: SparseMatrix::from_dense(&ode.a1),
        b: ode.b1,
        c: ode.c1,
        d: ode.d1,
    };
    sylvester_residual(&sys, &v1, &basis.data)
}

/// max-abs deviation of the algebraic block from a22⁻¹(−a21·v1 + b22·r)
/// (input side) or a22⁻ᵀ(−a12ᵀ·w1 + c22ᵀ·lᵀ) (output side), relative to the
/// larger of the two terms so cancellation does not inflate it.
pub fn algebraic_block_deviation(dae: &SemiExplicitDae, basis: &KrylovBasis) -> f64 {
    let b = dae.blocks();
    let (v1, v2) = dae.split_rows(&basis.basis);
    let (_, r) = basis.data.input_form();
    let (io, coupling) = match basis.side() {
        Side::Input => (
            dae.a22_lu().solve(&(&b.b22 * &r)),
            dae.a22_lu().solve(&b.a21.mul_dense(&v1)),
        ),
        Side::Output => (
            dae.a22_lu().solve_transpose(&(b.c22.transpose() * &r)),
            dae.a22_lu().solve_transpose(&b.a12.tr_mul_dense(&v1)),
        ),
    };
    let expected = &io - &coupling;
    let scale = max_abs(&io).max(max_abs(&coupling)).max(f64::MIN_POSITIVE);
    max_abs(&(&v2 - &expected)) / scale
}
