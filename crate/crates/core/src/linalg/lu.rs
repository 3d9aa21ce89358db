//! LU factorization for the shifted pencils `A − σE`.
//!
//! Small systems go through nalgebra's dense partial-pivoting LU. Larger ones use a
//! left-looking Gilbert–Peierls factorization with threshold partial pivoting and a
//! reverse Cuthill–McKee column preorder.

use std::collections::VecDeque;

use nalgebra::DMatrix;

use super::{CscMatrix, Scalar};
use crate::error::{MorError, Result};

/// Below this dimension the dense path is used.
pub const DENSE_FALLBACK_DIM: usize = 500;
/// A pivot is rejected when its magnitude is below this times the largest entry of the matrix.
pub const PIVOT_THRESHOLD: f64 = 1e-13;
/// Diagonal entries are preferred as pivots when within this factor of the column maximum.
const DIAG_PREFERENCE: f64 = 0.1;

#[derive(Clone, Debug)]
pub enum LuFactors<T: Scalar> {
    Dense(DenseLu<T>),
    Sparse(SparseLu<T>),
}

#[derive(Clone, Debug)]
pub struct DenseLu<T: Scalar> {
    lu: nalgebra::LU<T, nalgebra::Dyn, nalgebra::Dyn>,
    l: DMatrix<T>,
    u: DMatrix<T>,
}

/// P·A·Q = L·U with L unit lower triangular.
#[derive(Clone, Debug)]
pub struct SparseLu<T: Scalar> {
    n: usize,
    // L stored by column, row indices in pivot order, unit diagonal implicit.
    l: CscMatrix<T>,
    // U stored by column, strictly upper part; diagonal kept separately.
    u: CscMatrix<T>,
    u_diag: Vec<T>,
    pinv: Vec<usize>,
    q: Vec<usize>,
}

/// Factorize a square matrix, choosing the dense or sparse path by dimension.
pub fn lu_factor<T: Scalar>(m: &CscMatrix<T>) -> Result<LuFactors<T>> {
    if m.nrows() != m.ncols() {
        return Err(MorError::dims(format!("LU of non-square {:?}", m.shape())));
    }
    if m.nrows() < DENSE_FALLBACK_DIM {
        LuFactors::dense(&m.to_dense())
    } else {
        LuFactors::sparse(m)
    }
}

impl<T: Scalar> LuFactors<T> {
    pub fn dense(m: &DMatrix<T>) -> Result<Self> {
        if !m.is_square() {
            return Err(MorError::dims(format!("LU of non-square {:?}", m.shape())));
        }
        let scale = super::max_abs(m);
        let lu = m.clone().lu();
        let u = lu.u();
        let threshold = PIVOT_THRESHOLD * scale;
        let min_pivot = (0..u.nrows())
            .map(|i| u[(i, i)].modulus())
            .fold(f64::INFINITY, f64::min);
        if m.nrows() > 0 && !(min_pivot > threshold) {
            return Err(MorError::singular("dense LU", min_pivot, threshold));
        }
        let l = lu.l();
        Ok(LuFactors::Dense(DenseLu { lu, l, u }))
    }

    pub fn sparse(m: &CscMatrix<T>) -> Result<Self> {
        SparseLu::factor(m).map(LuFactors::Sparse)
    }

    pub fn dim(&self) -> usize {
        match self {
            LuFactors::Dense(d) => d.u.nrows(),
            LuFactors::Sparse(s) => s.n,
        }
    }

    pub fn is_sparse(&self) -> bool {
        matches!(self, LuFactors::Sparse(_))
    }

    /// Solve m·x = b for every column of b.
    pub fn solve(&self, b: &DMatrix<T>) -> DMatrix<T> {
        assert_eq!(b.nrows(), self.dim(), "rhs row count mismatch");
        match self {
            LuFactors::Dense(d) => d.lu.solve(b).expect("factor checked nonsingular"),
            LuFactors::Sparse(s) => {
                let mut x = b.clone();
                for mut col in x.column_iter_mut() {
                    let mut v: Vec<T> = col.iter().copied().collect();
                    s.solve_in_place(&mut v);
                    col.iter_mut().zip(v).for_each(|(c, vi)| *c = vi);
                }
                x
            }
        }
    }

    /// Solve mᵀ·x = b (plain transpose, no conjugation).
    pub fn solve_transpose(&self, b: &DMatrix<T>) -> DMatrix<T> {
        assert_eq!(b.nrows(), self.dim(), "rhs row count mismatch");
        match self {
            LuFactors::Dense(d) => {
                // P·m = L·U, so mᵀ = Uᵀ·Lᵀ·P.
                let y = d.u.tr_solve_upper_triangular(b).expect("nonsingular U");
                let mut z = d.l.tr_solve_lower_triangular(&y).expect("unit L");
                d.lu.p().inv_permute_rows(&mut z);
                z
            }
            LuFactors::Sparse(s) => {
                let mut x = b.clone();
                for mut col in x.column_iter_mut() {
                    let mut v: Vec<T> = col.iter().copied().collect();
                    s.solve_transpose_in_place(&mut v);
                    col.iter_mut().zip(v).for_each(|(c, vi)| *c = vi);
                }
                x
            }
        }
    }
}

impl<T: Scalar> SparseLu<T> {
    fn factor(a: &CscMatrix<T>) -> Result<Self> {
        let n = a.nrows();
        let threshold = PIVOT_THRESHOLD * a.max_abs();
        let q = rcm_order(a);

        let (ap, ai, ax) = (a.colptr(), a.rowidx(), a.values());
        // L columns with original row indices during factorization.
        let mut l_cols: Vec<Vec<(usize, T)>> = Vec::with_capacity(n);
        let mut u_cols: Vec<Vec<(usize, T)>> = Vec::with_capacity(n);
        let mut u_diag = Vec::with_capacity(n);
        let mut pinv = vec![usize::MAX; n];
        let mut x = vec![T::zero(); n];
        let mut mark = vec![usize::MAX; n];
        let mut stack: Vec<(usize, usize)> = Vec::new();
        let mut post: Vec<usize> = Vec::with_capacity(n);

        for k in 0..n {
            let col = q[k];
            let b_rows = &ai[ap[col]..ap[col + 1]];

            // Symbolic: rows reachable from the pattern of A(:,col) through L.
            post.clear();
            for &i0 in b_rows {
                if mark[i0] == k {
                    continue;
                }
                mark[i0] = k;
                stack.push((i0, 0));
                while let Some(&mut (node, ref mut next)) = stack.last_mut() {
                    let children: &[(usize, T)] = if pinv[node] != usize::MAX {
                        &l_cols[pinv[node]]
                    } else {
                        &[]
                    };
                    let mut pushed = None;
                    while *next < children.len() {
                        let child = children[*next].0;
                        *next += 1;
                        if mark[child] != k {
                            mark[child] = k;
                            pushed = Some(child);
                            break;
                        }
                    }
                    match pushed {
                        Some(c) => stack.push((c, 0)),
                        None => {
                            post.push(node);
                            stack.pop();
                        }
                    }
                }
            }

            // Numeric: sparse triangular solve in topological order.
            for &i in &post {
                x[i] = T::zero();
            }
            for p in ap[col]..ap[col + 1] {
                x[ai[p]] = ax[p];
            }
            for &j in post.iter().rev() {
                let jc = pinv[j];
                if jc == usize::MAX {
                    continue;
                }
                let xj = x[j];
                for &(i, lij) in &l_cols[jc] {
                    x[i] -= lij * xj;
                }
            }

            // Pivot choice among rows not yet pivotal.
            let mut ipiv = usize::MAX;
            let mut best = -1.0;
            let mut ucol = Vec::new();
            for &i in &post {
                if pinv[i] == usize::MAX {
                    let t = x[i].modulus();
                    if t > best {
                        best = t;
                        ipiv = i;
                    }
                } else if x[i] != T::zero() {
                    ucol.push((pinv[i], x[i]));
                }
            }
            if ipiv == usize::MAX || !(best > threshold) {
                return Err(MorError::singular(
                    format!("sparse LU column {k}"),
                    best.max(0.0),
                    threshold,
                ));
            }
            if pinv[col] == usize::MAX && mark[col] == k && x[col].modulus() >= DIAG_PREFERENCE * best {
                ipiv = col;
            }
            let pivot = x[ipiv];
            pinv[ipiv] = k;
            let mut lcol = Vec::new();
            for &i in &post {
                if pinv[i] == usize::MAX && x[i] != T::zero() {
                    lcol.push((i, x[i] / pivot));
                }
                x[i] = T::zero();
            }
            l_cols.push(lcol);
            u_cols.push(ucol);
            u_diag.push(pivot);
        }

        let mut l_trip = Vec::new();
        for (k, c) in l_cols.iter().enumerate() {
            l_trip.extend(c.iter().map(|&(i, v)| (pinv[i], k, v)));
        }
        let mut u_trip = Vec::new();
        for (k, c) in u_cols.iter().enumerate() {
            u_trip.extend(c.iter().map(|&(i, v)| (i, k, v)));
        }
        Ok(SparseLu {
            n,
            l: CscMatrix::from_triplets(n, n, &l_trip)?,
            u: CscMatrix::from_triplets(n, n, &u_trip)?,
            u_diag,
            pinv,
            q,
        })
    }

    fn solve_in_place(&self, b: &mut [T]) {
        let n = self.n;
        let mut y = vec![T::zero(); n];
        for i in 0..n {
            y[self.pinv[i]] = b[i];
        }
        let (lp, li, lx) = (self.l.colptr(), self.l.rowidx(), self.l.values());
        for j in 0..n {
            let yj = y[j];
            if yj == T::zero() {
                continue;
            }
            for p in lp[j]..lp[j + 1] {
                y[li[p]] -= lx[p] * yj;
            }
        }
        let (up, ui, ux) = (self.u.colptr(), self.u.rowidx(), self.u.values());
        for j in (0..n).rev() {
            y[j] /= self.u_diag[j];
            let yj = y[j];
            for p in up[j]..up[j + 1] {
                y[ui[p]] -= ux[p] * yj;
            }
        }
        for k in 0..n {
            b[self.q[k]] = y[k];
        }
    }

    fn solve_transpose_in_place(&self, b: &mut [T]) {
        let n = self.n;
        let mut w: Vec<T> = (0..n).map(|k| b[self.q[k]]).collect();
        let (up, ui, ux) = (self.u.colptr(), self.u.rowidx(), self.u.values());
        for k in 0..n {
            let mut acc = w[k];
            for p in up[k]..up[k + 1] {
                acc -= ux[p] * w[ui[p]];
            }
            w[k] = acc / self.u_diag[k];
        }
        let (lp, li, lx) = (self.l.colptr(), self.l.rowidx(), self.l.values());
        for k in (0..n).rev() {
            let mut acc = w[k];
            for p in lp[k]..lp[k + 1] {
                acc -= lx[p] * w[li[p]];
            }
            w[k] = acc;
        }
        for i in 0..n {
            b[i] = w[self.pinv[i]];
        }
    }
}

/// Reverse Cuthill–McKee ordering on the pattern of A + Aᵀ.
fn rcm_order<T: Scalar>(a: &CscMatrix<T>) -> Vec<usize> {
    let n = a.nrows();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, j, _) in a.triplets() {
        if i != j {
            adj[i].push(j);
            adj[j].push(i);
        }
    }
    for nb in adj.iter_mut() {
        nb.sort_unstable();
        nb.dedup();
    }
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut by_degree: Vec<usize> = (0..n).collect();
    by_degree.sort_by_key(|&v| (adj[v].len(), v));
    for &start in &by_degree {
        if visited[start] {
            continue;
        }
        visited[start] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut nbs: Vec<usize> = adj[v].iter().copied().filter(|&u| !visited[u]).collect();
            nbs.sort_by_key(|&u| (adj[u].len(), u));
            for u in nbs {
                visited[u] = true;
                queue.push_back(u);
            }
        }
    }
    order.reverse();
    order
}
