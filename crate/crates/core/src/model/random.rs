//! Seeded random SE-DAEs for tests and benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{DaeBlocks, SemiExplicitDae};
use crate::error::Result;
use crate::linalg::{Mat, SparseMatrix};

#[derive(Clone, Copy, Debug)]
pub struct RandomDaeOptions {
    pub n_dyn: usize,
    pub n_alg: usize,
    pub inputs: usize,
    pub outputs: usize,
    pub b22_zero: bool,
    pub c22_zero: bool,
    pub feedthrough: bool,
    /// Left-multiply by a random block-diagonal matrix: the pencil stays stable
    /// but A + Aᵀ ≺ 0 and E11 = E11ᵀ are lost.
    pub scramble: bool,
    /// Smallest eigenvalue of −(A + Aᵀ)/2 before scrambling.
    pub margin: f64,
}

impl RandomDaeOptions {
    pub fn new(n_dyn: usize, n_alg: usize) -> Self {
        RandomDaeOptions {
            n_dyn,
            n_alg,
            inputs: 1,
            outputs: 1,
            b22_zero: false,
            c22_zero: false,
            feedthrough: false,
            scramble: false,
            margin: 0.1,
        }
    }

    pub fn io(mut self, inputs: usize, outputs: usize) -> Self {
        self.inputs = inputs;
        self.outputs = outputs;
        self
    }

    pub fn strictly_proper(mut self) -> Self {
        self.b22_zero = true;
        self.feedthrough = false;
        self
    }

    pub fn scrambled(mut self) -> Self {
        self.scramble = true;
        self
    }
}

fn gaussian_like(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Mat {
    // sum of uniforms keeps this dependency-free and well scaled
    Mat::from_fn(r, c, |_, _| (0..3).map(|_| rng.gen_range(-1.0..1.0)).sum::<f64>())
}

/// A = −(MᵀM + αI) + (K − Kᵀ) on the full state with E11 SPD, so every
/// Schur complement is strictly dissipative and the pencil is stable.
pub fn dissipative_full_a(n: usize, margin: f64, rng: &mut ChaCha8Rng) -> Mat {
    let m = gaussian_like(rng, n, n) / (n as f64).sqrt();
    let k = gaussian_like(rng, n, n) / (n as f64).sqrt();
    -(m.transpose() * &m) - Mat::identity(n, n) * margin + (&k - k.transpose())
}

pub fn random_stable_dae(opts: &RandomDaeOptions, seed: u64) -> Result<SemiExplicitDae> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n1, n2) = (opts.n_dyn, opts.n_alg);
    let n = n1 + n2;
    let a = dissipative_full_a(n, opts.margin, &mut rng);
    let g = gaussian_like(&mut rng, n1, n1) / (n1 as f64).sqrt();
    let mut e11 = g.transpose() * &g + Mat::identity(n1, n1) * 0.5;
    let mut a1_rows = a.rows(0, n1).clone_owned();
    let mut a2_rows = a.rows(n1, n2).clone_owned();
    let mut b11 = gaussian_like(&mut rng, n1, opts.inputs);
    let mut b22 = if opts.b22_zero {
        Mat::zeros(n2, opts.inputs)
    } else {
        gaussian_like(&mut rng, n2, opts.inputs)
    };
    let c11 = gaussian_like(&mut rng, opts.outputs, n1);
    let c22 = if opts.c22_zero {
        Mat::zeros(opts.outputs, n2)
    } else {
        gaussian_like(&mut rng, opts.outputs, n2)
    };
    let d = if opts.feedthrough {
        gaussian_like(&mut rng, opts.outputs, opts.inputs)
    } else {
        Mat::zeros(opts.outputs, opts.inputs)
    };
    if opts.scramble {
        let t1 = Mat::identity(n1, n1) + gaussian_like(&mut rng, n1, n1) * (0.5 / (n1 as f64).sqrt());
        let t2 = Mat::identity(n2, n2) + gaussian_like(&mut rng, n2, n2) * (0.5 / (n2.max(1) as f64).sqrt());
        e11 = &t1 * e11;
        a1_rows = &t1 * a1_rows;
        b11 = &t1 * b11;
        a2_rows = &t2 * a2_rows;
        b22 = &t2 * b22;
    }
    SemiExplicitDae::new(DaeBlocks {
        e11: SparseMatrix::from_dense(&e11),
        a11: SparseMatrix::from_dense(&a1_rows.columns(0, n1).clone_owned()),
        a12: SparseMatrix::from_dense(&a1_rows.columns(n1, n2).clone_owned()),
        a21: SparseMatrix::from_dense(&a2_rows.columns(0, n1).clone_owned()),
        a22: SparseMatrix::from_dense(&a2_rows.columns(n1, n2).clone_owned()),
        b11,
        b22,
        c11,
        c22,
        d,
    })
}

/// 1×1 blocks, handy for hand-checked examples.
#[allow(clippy::too_many_arguments)]
pub fn scalar_blocks(
    e11: f64,
    a11: f64,
    a12: f64,
    a21: f64,
    a22: f64,
    b11: f64,
    b22: f64,
    c11: f64,
    c22: f64,
    d: f64,
) -> DaeBlocks {
    let s = |v: f64| SparseMatrix::from_triplets(1, 1, &[(0, 0, v)]).expect("1x1");
    let m = |v: f64| Mat::from_element(1, 1, v);
    DaeBlocks {
        e11: s(e11),
        a11: s(a11),
        a12: s(a12),
        a21: s(a21),
        a22: s(a22),
        b11: m(b11),
        b22: m(b22),
        c11: m(c11),
        c22: m(c22),
        d: m(d),
    }
}
