//! Order-2 pseudo-optimal step with the shift pair chosen by maximizing ‖G_r‖².

use std::cell::RefCell;

use argmin::core::{CostFunction, Error as ArgminError, Executor};
use argmin::solver::neldermead::NelderMead;
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{MorError, Result};
use crate::krylov::{sylvester_residual, InterpolationData, KrylovBasis, TangentialPoint};
use crate::linalg::{norm_inf, Mat, C64};
use crate::model::{SemiExplicitDae, Side, TransferFunction};
use crate::reduce::{h2_norm_sq, pork_from_basis, ReducedModel};

/// Parameters are kept at or above this value.
pub const PARAM_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparkOptions {
    pub max_evals: usize,
    /// Stop when the finite-difference gradient (in log parameters) drops below grad_tol·J.
    pub grad_tol: f64,
    /// Initial simplex edge in log parameters.
    pub initial_step: f64,
}

impl Default for SparkOptions {
    fn default() -> Self {
        SparkOptions {
            max_evals: 400,
            grad_tol: 1e-6,
            initial_step: 0.5,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SparkResult {
    /// p1 = (s1 + s2)/2
    pub p1: f64,
    /// p2 = s1·s2
    pub p2: f64,
    pub shifts: [C64; 2],
    pub rom: ReducedModel,
    /// Basis the ROM was built from (needed for the CURE update).
    #[serde(skip)]
    pub basis: Option<KrylovBasis>,
    pub h2_norm: f64,
    /// Best J = ‖G_r‖² after each evaluation; non-decreasing.
    pub trace: Vec<f64>,
    pub evaluations: usize,
    pub grad_norm: f64,
    pub converged: bool,
}

/// The mirrored shift pair of (p1, p2): roots of s² − 2p1·s + p2.
pub fn shift_pair(p1: f64, p2: f64) -> [C64; 2] {
    let disc = p1 * p1 - p2;
    if disc >= 0.0 {
        let s1 = p1 + disc.sqrt();
        [C64::new(s1, 0.0), C64::new(p2 / s1, 0.0)]
    } else {
        let b = (-disc).sqrt();
        [C64::new(p1, b), C64::new(p1, -b)]
    }
}

/// Unit tangential direction: dominant right (input side) or left (output side)
/// singular vector of G at the real point s.
pub fn dominant_direction(sys: &SemiExplicitDae, side: Side, s: f64) -> Result<DVector<f64>> {
    let g = sys.transfer_eval(C64::new(s, 0.0))?.map(|z| z.re);
    let g = match side {
        Side::Input => g,
        Side::Output => g.transpose(),
    };
    if g.ncols() == 1 {
        return Ok(DVector::from_element(1, 1.0));
    }
    let svd = g.svd(false, true);
    let vt = svd.v_t.expect("requested v_t");
    let k = svd.singular_values.imax();
    let mut dir = vt.row(k).transpose();
    // fix the sign so runs are reproducible
    if dir
        .iter()
        .cloned()
        .fold(0.0, |acc: f64, x| if x.abs() > acc.abs() { x } else { acc })
        < 0.0
    {
        dir = -dir;
    }
    Ok(dir)
}

/// Order-2 Krylov basis for the pair defined by (p1, p2), in a parametrization that
/// stays well conditioned when the two shifts merge:
///
/// real pair:    V = [x1, ω·x2], (A − s1E)x1 = B·r, (A − s2E)x2 = E·x1, S = [[s1, ω], [0, s2]];
/// complex pair: (A − λE)x = B·r, V = [Re x, ω·Im x / β], S = [[α, ω], [−β²/ω, α]];
/// with ω = √p2 = |s1·s2|^½ balancing S, and R = [r, 0] in both cases (transposed
/// solves with Cᵀ on the output side).
pub fn pair_basis(sys: &SemiExplicitDae, side: Side, p1: f64, p2: f64, dir: &DVector<f64>) -> Result<KrylovBasis> {
    let d = sys.descriptor();
    let input = match side {
        Side::Input => d.b.clone(),
        Side::Output => d.c.transpose(),
    };
    if dir.len() != input.ncols() {
        return Err(MorError::dims(format!(
            "direction of length {} for {} channels",
            dir.len(),
            input.ncols()
        )));
    }
    let rhs = &input * dir;
    let e_mul = |x: &Mat| match side {
        Side::Input => d.e.mul_dense(x),
        Side::Output => d.e.tr_mul_dense(x),
    };
    let shifts = shift_pair(p1, p2);
    let omega = p2.sqrt();
    let mut v = Mat::zeros(d.order(), 2);
    let s = if shifts[0].im == 0.0 {
        let (s1, s2) = (shifts[0].re, shifts[1].re);
        let lu1 = d.shifted_lu_real(s1)?;
        let solve1 = |b: &Mat| match side {
            Side::Input => lu1.solve(b),
            Side::Output => lu1.solve_transpose(b),
        };
        let x1 = solve1(&Mat::from_column_slice(rhs.len(), 1, rhs.as_slice()));
        let x2 = if s2 == s1 {
            solve1(&e_mul(&x1))
        } else {
            let lu2 = d.shifted_lu_real(s2)?;
            match side {
                Side::Input => lu2.solve(&e_mul(&x1)),
                Side::Output => lu2.solve_transpose(&e_mul(&x1)),
            }
        };
        v.set_column(0, &x1.column(0));
        v.set_column(1, &(x2.column(0) * omega));
        Mat::from_row_slice(2, 2, &[s1, omega, 0.0, s2])
    } else {
        let lam = shifts[0];
        let lu = d.shifted_lu(lam)?;
        let b = crate::linalg::to_complex(&Mat::from_column_slice(rhs.len(), 1, rhs.as_slice()));
        let x = match side {
            Side::Input => lu.solve(&b),
            Side::Output => lu.solve_transpose(&b),
        };
        v.set_column(0, &x.column(0).map(|z| z.re));
        v.set_column(1, &(x.column(0).map(|z| z.im) * (omega / lam.im)));
        Mat::from_row_slice(2, 2, &[lam.re, omega, -lam.im * lam.im / omega, lam.re])
    };
    let mut r = Mat::zeros(dir.len(), 2);
    r.set_column(0, dir);
    let points = shifts
        .iter()
        .map(|&z| TangentialPoint::new(z, dir.iter().map(|&x| C64::new(x, 0.0)).collect()))
        .collect();
    let data = InterpolationData::from_input_form(side, s, r, points);
    let (res, rel) = sylvester_residual(d, &v, &data);
    Ok(KrylovBasis {
        basis: v,
        data,
        residual_norm: res,
        relative_residual: rel,
        deflated: Vec::new(),
    })
}

struct Candidate {
    x: [f64; 2],
    j: f64,
    rom: ReducedModel,
    basis: KrylovBasis,
}

struct Evaluator<'a> {
    sys: &'a SemiExplicitDae,
    side: Side,
    dir: DVector<f64>,
    best: RefCell<Option<Candidate>>,
    trace: RefCell<Vec<f64>>,
}

fn params(x: &[f64]) -> (f64, f64) {
    (x[0].exp().max(PARAM_FLOOR), x[1].exp().max(PARAM_FLOOR))
}

impl Evaluator<'_> {
    /// J at log-parameters x, or None when the point is infeasible.
    fn eval(&self, x: &[f64]) -> Option<f64> {
        let (p1, p2) = params(x);
        let out = pair_basis(self.sys, self.side, p1, p2, &self.dir).and_then(|basis| {
            let rom = pork_from_basis(self.sys, &basis)?;
            let j = h2_norm_sq(&rom.strictly_proper())?;
            Ok((j, rom, basis))
        });
        let j = match out {
            Ok((j, rom, basis)) if j.is_finite() => {
                let mut best = self.best.borrow_mut();
                if best.as_ref().is_none_or(|b| j > b.j) {
                    *best = Some(Candidate {
                        x: [x[0], x[1]],
                        j,
                        rom,
                        basis,
                    });
                }
                Some(j)
            }
            _ => None,
        };
        let best_j = self.best.borrow().as_ref().map_or(0.0, |b| b.j);
        self.trace.borrow_mut().push(best_j);
        j
    }

    fn evals(&self) -> usize {
        self.trace.borrow().len()
    }

    /// Central differences in log parameters.
    fn grad_norm(&self, x: [f64; 2]) -> Option<f64> {
        const H: f64 = 1e-4;
        let mut g = [0.0; 2];
        for i in 0..2 {
            let mut hi = x;
            let mut lo = x;
            hi[i] += H;
            lo[i] -= H;
            g[i] = (self.eval(&hi)? - self.eval(&lo)?) / (2.0 * H);
        }
        Some(g[0].hypot(g[1]))
    }
}

struct Negated<'a, 'b>(&'b Evaluator<'a>);

impl CostFunction for Negated<'_, '_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, x: &Self::Param) -> std::result::Result<f64, ArgminError> {
        // J ≥ 0, so 0 is the worst possible value and marks infeasible points
        Ok(-self.0.eval(x).unwrap_or(0.0))
    }
}

/// Maximize J(p1, p2) = ‖G_r‖²_H2 over order-2 pseudo-optimal ROMs of `g_perp`.
///
/// The direction is fixed from `init` (dominant singular vector at √p2).
pub fn spark(g_perp: &SemiExplicitDae, side: Side, init: (f64, f64), opts: &SparkOptions) -> Result<SparkResult> {
    let (p1, p2) = init;
    if !(p1 > 0.0 && p2 > 0.0) || !p1.is_finite() || !p2.is_finite() {
        return Err(MorError::InvalidInput(format!(
            "SPARK start ({p1}, {p2}) must be positive"
        )));
    }
    let dir = dominant_direction(g_perp, side, p2.sqrt())?;
    let ev = Evaluator {
        sys: g_perp,
        side,
        dir,
        best: RefCell::new(None),
        trace: RefCell::new(Vec::new()),
    };
    let mut center = [p1.max(PARAM_FLOOR).ln(), p2.max(PARAM_FLOOR).ln()];
    ev.eval(&center);
    let mut step = opts.initial_step;
    let mut grad_norm = f64::INFINITY;
    let mut converged = false;
    while ev.evals() < opts.max_evals {
        let simplex = vec![
            center.to_vec(),
            vec![center[0] + step, center[1]],
            vec![center[0], center[1] + step],
        ];
        let remaining = opts.max_evals.saturating_sub(ev.evals());
        let solver = NelderMead::new(simplex)
            .with_sd_tolerance(1e-14)
            .map_err(|e| MorError::OptimizerFailed(e.to_string()))?;
        Executor::new(Negated(&ev), solver)
            .configure(|s| s.max_iters((remaining / 2).max(1) as u64))
            .run()
            .map_err(|e| MorError::OptimizerFailed(e.to_string()))?;
        let Some((x, j)) = ev.best.borrow().as_ref().map(|b| (b.x, b.j)) else {
            return Err(MorError::OptimizerFailed("no feasible parameter pair found".into()));
        };
        if let Some(g) = ev.grad_norm(x) {
            grad_norm = g;
            if g < opts.grad_tol * j {
                converged = true;
                break;
            }
        }
        // restart around the best point with a smaller simplex
        center = ev.best.borrow().as_ref().map(|b| b.x).unwrap_or(x);
        step = (step * 0.5).max(1e-6);
    }
    let trace = ev.trace.into_inner();
    let best = ev
        .best
        .into_inner()
        .ok_or_else(|| MorError::OptimizerFailed("no feasible parameter pair found".into()))?;
    let (p1, p2) = params(&best.x);
    Ok(SparkResult {
        p1,
        p2,
        shifts: shift_pair(p1, p2),
        h2_norm: best.j.sqrt(),
        rom: best.rom,
        basis: Some(best.basis),
        evaluations: trace.len(),
        trace,
        grad_norm,
        converged,
    })
}

/// Start point from a coarse grid: ω = ω_ref·10^(k/2), k = −6..6, damping ζ ∈ {0.2, 1},
/// p1 = ζω, p2 = ω², with ω_ref = ‖A‖∞/‖E‖∞.
pub fn spark_initial_guess(g_perp: &SemiExplicitDae, side: Side) -> Result<(f64, f64)> {
    let d = g_perp.descriptor();
    let omega_ref = norm_inf(&d.a.to_dense()) / norm_inf(&d.e.to_dense()).max(f64::MIN_POSITIVE);
    let mut best: Option<((f64, f64), f64)> = None;
    for k in -6..=6 {
        let w = omega_ref * 10f64.powf(k as f64 / 2.0);
        let Ok(dir) = dominant_direction(g_perp, side, w) else {
            continue;
        };
        for zeta in [0.2, 1.0] {
            let (p1, p2) = (zeta * w, w * w);
            let j = pair_basis(g_perp, side, p1, p2, &dir)
                .and_then(|b| pork_from_basis(g_perp, &b))
                .and_then(|rom| h2_norm_sq(&rom.strictly_proper()));
            if let Ok(j) = j {
                if best.is_none_or(|(_, bj)| j > bj) {
                    best = Some(((p1, p2), j));
                }
            }
        }
    }
    best.map(|(p, _)| p)
        .ok_or_else(|| MorError::OptimizerFailed("no feasible start on the initial grid".into()))
}

/// ‖G^sp − G_r^sp‖ = sqrt(‖G^sp‖² − ‖G_r^sp‖²) for a pseudo-optimal ROM, plus whether
/// a negative difference had to be clamped.
pub fn h2_error_pseudo_optimal_checked(norm_g_sp_sq: f64, rom: &ReducedModel) -> Result<(f64, bool)> {
    let diff = norm_g_sp_sq - h2_norm_sq(&rom.strictly_proper())?;
    if diff < -1e-6 * norm_g_sp_sq {
        return Err(MorError::PseudoOptimalityViolated { difference: diff });
    }
    Ok((diff.max(0.0).sqrt(), diff < -1e-9 * norm_g_sp_sq))
}

pub fn h2_error_pseudo_optimal(norm_g_sp_sq: f64, rom: &ReducedModel) -> Result<f64> {
    Ok(h2_error_pseudo_optimal_checked(norm_g_sp_sq, rom)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::SparseMatrix;
    use crate::linalg::{eigenvalues_dense, solve_lyapunov_small};
    use crate::model::{build_transmission_line, scalar_blocks, TransmissionLineParams};

    /// G(s) = 1/((s+1)(s+2)) with a decoupled algebraic state.
    fn two_pole() -> SemiExplicitDae {
        let mut b = scalar_blocks(1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        b.e11 = SparseMatrix::identity(2);
        b.a11 = SparseMatrix::from_dense(&Mat::from_row_slice(2, 2, &[-1.0, 1.0, 0.0, -2.0]));
        b.a12 = SparseMatrix::zeros(2, 1);
        b.a21 = SparseMatrix::zeros(1, 2);
        b.b11 = Mat::from_column_slice(2, 1, &[0.0, 1.0]);
        b.c11 = Mat::from_row_slice(1, 2, &[1.0, 0.0]);
        SemiExplicitDae::new(b).unwrap()
    }

    fn norm_sq_dense(dae: &SemiExplicitDae) -> f64 {
        let ode = dae.underlying_ode();
        let (a, b) = ode.normalized().unwrap();
        let p = solve_lyapunov_small(&a, &(&b * b.transpose())).unwrap();
        (&ode.c1 * p * ode.c1.transpose()).trace()
    }

    #[test]
    fn pair_parametrization() {
        let s = shift_pair(1.5, 2.0);
        assert!((s[0].re - 2.0).abs() < 1e-15 && (s[1].re - 1.0).abs() < 1e-15);
        let s = shift_pair(1.0, 1.0);
        assert_eq!(s[0], s[1]);
        let s = shift_pair(1.0, 5.0);
        assert!((s[0] - C64::new(1.0, 2.0)).norm() < 1e-15);
    }

    #[test]
    fn pair_basis_satisfies_sylvester_on_all_branches() {
        let dae = two_pole();
        let dir = DVector::from_element(1, 1.0);
        for (p1, p2) in [(1.5, 2.0), (1.0, 1.0), (1.0, 5.0), (1.0, 1.0 + 1e-12)] {
            for side in [Side::Input, Side::Output] {
                let b = pair_basis(&dae, side, p1, p2, &dir).unwrap();
                assert!(b.relative_residual < 1e-12, "{p1} {p2} {side:?}");
            }
        }
    }

    #[test]
    fn order_two_target_is_recovered_exactly() {
        let dae = two_pole();
        let full = norm_sq_dense(&dae);
        let res = spark(&dae, Side::Input, (1.0, 1.0), &SparkOptions::default()).unwrap();
        assert!(
            (res.h2_norm.powi(2) - full).abs() < 1e-6 * full,
            "{} vs {full}",
            res.h2_norm.powi(2)
        );
        assert!(res.trace.windows(2).all(|w| w[1] >= w[0]));
        assert!(res.p1 > 0.0 && res.p2 > 0.0);
        let err = h2_error_pseudo_optimal(full, &res.rom).unwrap();
        assert!(err < 1e-3 * full.sqrt());
    }

    #[test]
    fn pseudo_optimal_error_edge_cases() {
        let dae = two_pole();
        let full = norm_sq_dense(&dae);
        let empty = ReducedModel::empty(1, 1, crate::reduce::Method::Pork);
        assert!((h2_error_pseudo_optimal(full, &empty).unwrap() - full.sqrt()).abs() < 1e-15);
        let rom = spark(&dae, Side::Input, (1.5, 2.0), &SparkOptions::default())
            .unwrap()
            .rom;
        assert!(h2_error_pseudo_optimal(2.0 * full, &rom).is_ok());
        assert!(matches!(
            h2_error_pseudo_optimal(0.5 * full, &rom),
            Err(MorError::PseudoOptimalityViolated { .. })
        ));
    }

    #[test]
    fn transmission_line_step_is_stable() {
        let dae = build_transmission_line(&TransmissionLineParams::telephone_cable(10)).unwrap();
        let g = dae.strictly_proper(Side::Input).unwrap();
        let init = spark_initial_guess(&g, Side::Input).unwrap();
        let res = spark(&g, Side::Input, init, &SparkOptions::default()).unwrap();
        assert!(res.shifts.iter().all(|s| s.re > 0.0));
        let ev = eigenvalues_dense(&res.rom.ar, Some(&res.rom.er)).unwrap();
        assert!(ev.max_real() < 0.0);
    }

    #[test]
    fn pair_basis_is_balanced_at_cable_frequencies() {
        // shifts near 1e7: S entries must stay within a few orders of each other
        let dae = build_transmission_line(&TransmissionLineParams::telephone_cable(4)).unwrap();
        let dir = DVector::from_element(1, 1.0);
        for (p1, p2) in [(1e6, 1e14), (1e7, 5e13)] {
            let b = pair_basis(&dae, Side::Input, p1, p2, &dir).unwrap();
            let nz: Vec<f64> = b.data.s.iter().map(|x| x.abs()).filter(|&x| x > 0.0).collect();
            let ratio = nz.iter().cloned().fold(0.0, f64::max) / nz.iter().cloned().fold(f64::INFINITY, f64::min);
            assert!(ratio < 1e3, "{ratio:e}");
            let rom = pork_from_basis(&dae, &b).unwrap();
            assert!(rom.transfer_eval(C64::new(0.0, 1e7)).is_ok());
        }
    }
}
