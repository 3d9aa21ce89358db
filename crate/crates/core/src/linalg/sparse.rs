use nalgebra::DMatrix;

use super::{Mat, Scalar, C64};
use crate::error::{MorError, Result};

/// Compressed-column storage with sorted, duplicate-free row indices.
#[derive(Clone, Debug, PartialEq)]
pub struct CscMatrix<T> {
    nrows: usize,
    ncols: usize,
    colptr: Vec<usize>,
    rowidx: Vec<usize>,
    values: Vec<T>,
}

pub type SparseMatrix = CscMatrix<f64>;

impl<T: Scalar> CscMatrix<T> {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        CscMatrix {
            nrows,
            ncols,
            colptr: vec![0; ncols + 1],
            rowidx: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        let trip: Vec<_> = (0..n).map(|i| (i, i, T::one())).collect();
        Self::from_triplets(n, n, &trip).expect("identity indices are in range")
    }

    /// Assemble from (row, col, value) triplets. Duplicates are summed, exact zeros dropped.
    pub fn from_triplets(nrows: usize, ncols: usize, trip: &[(usize, usize, T)]) -> Result<Self> {
        let mut entries: Vec<(usize, usize, T)> = Vec::with_capacity(trip.len());
        for &(i, j, v) in trip {
            if i >= nrows || j >= ncols {
                return Err(MorError::dims(format!(
                    "triplet ({i},{j}) out of range for {nrows}x{ncols}"
                )));
            }
            if !v.is_finite() {
                return Err(MorError::InvalidInput(format!("non-finite entry at ({i},{j})")));
            }
            entries.push((i, j, v));
        }
        entries.sort_by_key(|&(i, j, _)| (j, i));

        let mut colptr = vec![0usize; ncols + 1];
        let mut rowidx = Vec::with_capacity(entries.len());
        let mut values: Vec<T> = Vec::with_capacity(entries.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in entries {
            if last == Some((i, j)) {
                let k = values.len() - 1;
                values[k] += v;
            } else {
                rowidx.push(i);
                values.push(v);
                colptr[j + 1] += 1;
                last = Some((i, j));
            }
        }
        for j in 0..ncols {
            colptr[j + 1] += colptr[j];
        }
        let mut m = CscMatrix {
            nrows,
            ncols,
            colptr,
            rowidx,
            values,
        };
        m.drop_zeros();
        Ok(m)
    }

    pub fn from_dense(d: &DMatrix<T>) -> Self {
        let mut colptr = Vec::with_capacity(d.ncols() + 1);
        let mut rowidx = Vec::new();
        let mut values = Vec::new();
        colptr.push(0);
        for j in 0..d.ncols() {
            for i in 0..d.nrows() {
                let v = d[(i, j)];
                if v != T::zero() {
                    rowidx.push(i);
                    values.push(v);
                }
            }
            colptr.push(rowidx.len());
        }
        CscMatrix {
            nrows: d.nrows(),
            ncols: d.ncols(),
            colptr,
            rowidx,
            values,
        }
    }

    fn drop_zeros(&mut self) {
        let mut colptr = vec![0usize; self.ncols + 1];
        let mut rowidx = Vec::with_capacity(self.rowidx.len());
        let mut values = Vec::with_capacity(self.values.len());
        for j in 0..self.ncols {
            for p in self.colptr[j]..self.colptr[j + 1] {
                if self.values[p] != T::zero() {
                    rowidx.push(self.rowidx[p]);
                    values.push(self.values[p]);
                }
            }
            colptr[j + 1] = rowidx.len();
        }
        self.colptr = colptr;
        self.rowidx = rowidx;
        self.values = values;
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.nrows, self.ncols)
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn colptr(&self) -> &[usize] {
        &self.colptr
    }

    pub fn rowidx(&self) -> &[usize] {
        &self.rowidx
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    /// Iterate over stored (row, col, value) entries in column-major order.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, T)> + '_ {
        (0..self.ncols)
            .flat_map(move |j| (self.colptr[j]..self.colptr[j + 1]).map(move |p| (self.rowidx[p], j, self.values[p])))
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        let rows = &self.rowidx[self.colptr[j]..self.colptr[j + 1]];
        match rows.binary_search(&i) {
            Ok(k) => self.values[self.colptr[j] + k],
            Err(_) => T::zero(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.values.is_empty()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |acc, v| acc.max(v.modulus()))
    }

    pub fn to_dense(&self) -> DMatrix<T> {
        let mut d = DMatrix::zeros(self.nrows, self.ncols);
        for (i, j, v) in self.triplets() {
            d[(i, j)] = v;
        }
        d
    }

    pub fn transpose(&self) -> Self {
        let trip: Vec<_> = self.triplets().map(|(i, j, v)| (j, i, v)).collect();
        Self::from_triplets(self.ncols, self.nrows, &trip).expect("transpose keeps indices in range")
    }

    pub fn map<U: Scalar>(&self, f: impl Fn(T) -> U) -> CscMatrix<U> {
        let mut out = CscMatrix {
            nrows: self.nrows,
            ncols: self.ncols,
            colptr: self.colptr.clone(),
            rowidx: self.rowidx.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        };
        out.drop_zeros();
        out
    }

    pub fn scale(&self, alpha: T) -> Self {
        self.map(|v| v * alpha)
    }

    /// alpha·self + beta·other.
    pub fn lincomb(&self, alpha: T, other: &Self, beta: T) -> Result<Self> {
        if self.shape() != other.shape() {
            return Err(MorError::dims(format!(
                "lincomb of {:?} and {:?}",
                self.shape(),
                other.shape()
            )));
        }
        let trip: Vec<_> = self
            .triplets()
            .map(|(i, j, v)| (i, j, v * alpha))
            .chain(other.triplets().map(|(i, j, v)| (i, j, v * beta)))
            .collect();
        Self::from_triplets(self.nrows, self.ncols, &trip)
    }

    pub fn mul_dense(&self, x: &DMatrix<T>) -> DMatrix<T> {
        assert_eq!(self.ncols, x.nrows(), "sparse-dense product dimension mismatch");
        let mut y = DMatrix::zeros(self.nrows, x.ncols());
        for c in 0..x.ncols() {
            for j in 0..self.ncols {
                let xj = x[(j, c)];
                if xj == T::zero() {
                    continue;
                }
                for p in self.colptr[j]..self.colptr[j + 1] {
                    y[(self.rowidx[p], c)] += self.values[p] * xj;
                }
            }
        }
        y
    }

    /// selfᵀ·x without forming the transpose.
    pub fn tr_mul_dense(&self, x: &DMatrix<T>) -> DMatrix<T> {
        assert_eq!(self.nrows, x.nrows(), "sparse-transpose product dimension mismatch");
        let mut y = DMatrix::zeros(self.ncols, x.ncols());
        for c in 0..x.ncols() {
            for j in 0..self.ncols {
                let mut acc = T::zero();
                for p in self.colptr[j]..self.colptr[j + 1] {
                    acc += self.values[p] * x[(self.rowidx[p], c)];
                }
                y[(j, c)] = acc;
            }
        }
        y
    }

    /// Submatrix of the given contiguous row and column ranges.
    pub fn slice(&self, rows: std::ops::Range<usize>, cols: std::ops::Range<usize>) -> Self {
        let trip: Vec<_> = self
            .triplets()
            .filter(|(i, j, _)| rows.contains(i) && cols.contains(j))
            .map(|(i, j, v)| (i - rows.start, j - cols.start, v))
            .collect();
        Self::from_triplets(rows.len(), cols.len(), &trip).expect("slice indices in range")
    }

    /// Symmetric permutation: out[i][j] = self[perm[i]][perm[j]].
    pub fn permute_symmetric(&self, perm: &[usize]) -> Self {
        let mut inv = vec![0; perm.len()];
        for (k, &p) in perm.iter().enumerate() {
            inv[p] = k;
        }
        let trip: Vec<_> = self.triplets().map(|(i, j, v)| (inv[i], inv[j], v)).collect();
        Self::from_triplets(self.nrows, self.ncols, &trip).expect("permutation in range")
    }

    /// Assemble a 2×2 block matrix [[a, b], [c, d]].
    pub fn block2x2(a: &Self, b: &Self, c: &Self, d: &Self) -> Result<Self> {
        if a.nrows != b.nrows || c.nrows != d.nrows || a.ncols != c.ncols || b.ncols != d.ncols {
            return Err(MorError::dims("inconsistent 2x2 block structure"));
        }
        let (n1, m1) = a.shape();
        let mut trip: Vec<(usize, usize, T)> = Vec::new();
        trip.extend(a.triplets());
        trip.extend(b.triplets().map(|(i, j, v)| (i, j + m1, v)));
        trip.extend(c.triplets().map(|(i, j, v)| (i + n1, j, v)));
        trip.extend(d.triplets().map(|(i, j, v)| (i + n1, j + m1, v)));
        Self::from_triplets(n1 + c.nrows, m1 + b.ncols, &trip)
    }

    pub fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        if self.shape() != other.shape() {
            return false;
        }
        match self.lincomb(T::one(), other, -T::one()) {
            Ok(diff) => diff.max_abs() <= tol,
            Err(_) => false,
        }
    }
}

impl SparseMatrix {
    /// self − σ·e as a complex matrix, the shifted pencil of a rational Krylov solve.
    pub fn shifted(&self, sigma: C64, e: &SparseMatrix) -> Result<CscMatrix<C64>> {
        let a = self.map(|v| C64::new(v, 0.0));
        let ec = e.map(|v| C64::new(v, 0.0));
        a.lincomb(C64::new(1.0, 0.0), &ec, -sigma)
    }

    /// self − σ·e for a real shift.
    pub fn shifted_real(&self, sigma: f64, e: &SparseMatrix) -> Result<SparseMatrix> {
        self.lincomb(1.0, e, -sigma)
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.nrows == self.ncols && self.approx_eq(&self.transpose(), tol)
    }

    pub fn mul_dense_c(&self, x: &DMatrix<C64>) -> DMatrix<C64> {
        self.map(|v| C64::new(v, 0.0)).mul_dense(x)
    }
}

impl From<&Mat> for SparseMatrix {
    fn from(d: &Mat) -> Self {
        SparseMatrix::from_dense(d)
    }
}
