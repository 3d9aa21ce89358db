use super::Mat;

/// Relative norm drop below which a column counts as linearly dependent.
pub const DEFLATION_TOL: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct Orthonormalized {
    /// Orthonormal basis, one column per surviving input column.
    pub q: Mat,
    /// Coefficients with v = q·t; upper staircase, r×k for r survivors of k columns.
    pub t: Mat,
    /// Indices of input columns that were deflated.
    pub deflated: Vec<usize>,
}

/// Classical Gram–Schmidt with one full reorthogonalization pass (CGS2).
pub fn orthonormalize(v: &Mat) -> Orthonormalized {
    orthonormalize_against(&Mat::zeros(v.nrows(), 0), v)
}

/// Orthonormalize v against an existing orthonormal basis `prev` and itself.
/// Coefficients on `prev` occupy the leading rows of t.
pub fn orthonormalize_against(prev: &Mat, v: &Mat) -> Orthonormalized {
    let n = v.nrows();
    let k = v.ncols();
    let p = prev.ncols();
    let mut q = Mat::zeros(n, p + k);
    q.columns_mut(0, p).copy_from(prev);
    let mut t = Mat::zeros(p + k, k);
    let mut r = p;
    let mut deflated = Vec::new();

    for j in 0..k {
        let mut w = v.column(j).clone_owned();
        let pre = w.norm();
        let mut h = nalgebra::DVector::<f64>::zeros(r);
        for _ in 0..2 {
            let qj = q.columns(0, r);
            let c = qj.tr_mul(&w);
            w -= qj * &c;
            h += c;
        }
        t.view_mut((0, j), (r, 1)).copy_from(&h);
        let post = w.norm();
        if pre == 0.0 || post < DEFLATION_TOL * pre {
            deflated.push(j);
            continue;
        }
        q.set_column(r, &(w / post));
        t[(r, j)] = post;
        r += 1;
    }
    Orthonormalized {
        q: q.columns(p, r - p).clone_owned(),
        t: t.rows(0, r).clone_owned(),
        deflated,
    }
}
