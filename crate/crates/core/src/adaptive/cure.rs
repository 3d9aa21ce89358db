//! Cumulative reduction: each step reduces only the remaining error factor G⊥.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::spark::{spark, spark_initial_guess, SparkOptions};
use crate::error::{MorError, Result};
use crate::krylov::{krylov_basis_orthonormal, shifts_to_sylvester, KrylovBasis, TangentialPoint};
use crate::linalg::{block_diag, eigenvalues_dense, hstack, max_abs, to_complex, vstack, CMat, LuFactors, Mat, C64};
use crate::model::{SemiExplicitDae, Side, TransferFunction};
use crate::reduce::{h2_norm_sq, pork_from_basis, Method, ReducedModel};

/// How each step's ROM is produced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepReducer {
    /// Order-2 steps with SPARK-optimized shifts.
    Spark(SparkOptions),
    /// One PORK step per entry, at the given points.
    Pork(Vec<Vec<TangentialPoint>>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StopCriterion {
    pub target_order: Option<usize>,
    /// Stop once ‖G_r,k‖² / ‖G^Σ_r,k‖² falls below this.
    pub rel_contribution: Option<f64>,
    pub max_steps: usize,
}

impl Default for StopCriterion {
    fn default() -> Self {
        StopCriterion {
            target_order: None,
            rel_contribution: Some(1e-4),
            max_steps: 50,
        }
    }
}

impl StopCriterion {
    pub fn order(n: usize) -> Self {
        StopCriterion {
            target_order: Some(n),
            rel_contribution: None,
            max_steps: n.max(1) * 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CureStepRecord {
    pub k: usize,
    pub shifts: Vec<C64>,
    pub step_order: usize,
    /// ‖G_r,k‖²_H2 of the step ROM.
    pub step_norm_sq: f64,
    pub cumulative_order: usize,
    pub cumulative_norm_sq: f64,
    pub stable: bool,
    pub max_real_eig: f64,
}

#[derive(Clone, Debug)]
pub struct CureState {
    pub side: Side,
    pub k: usize,
    /// Strictly proper system being reduced.
    pub system: SemiExplicitDae,
    /// Feedthrough d + D_imp stripped from the original system, reattached at the end.
    pub feedthrough: Mat,
    /// Accumulated basis columns [V_1, …, V_k] (or W's).
    pub basis: Mat,
    /// Cumulated strictly proper ROM G^Σ (dr = 0).
    pub rom: ReducedModel,
    /// R^Σ (m×n) on the input side, L^Σ (n×p) on the output side.
    pub dirs: Mat,
    /// B⊥ (N×m) on the input side, C⊥ (p×N) on the output side.
    pub perp: Mat,
    pub history: Vec<CureStepRecord>,
}

impl CureState {
    /// Start from `dae`; its feedthrough is stripped once with the side-matching
    /// strictly proper realization.
    pub fn new(dae: &SemiExplicitDae, side: Side) -> Result<Self> {
        let feedthrough = &dae.blocks().d + dae.implicit_feedthrough();
        let system = dae.strictly_proper(side)?;
        let (p, m) = (system.outputs(), system.inputs());
        let d = system.descriptor();
        let (dirs, perp) = match side {
            Side::Input => (Mat::zeros(m, 0), d.b.clone()),
            Side::Output => (Mat::zeros(0, p), d.c.clone()),
        };
        Ok(CureState {
            side,
            k: 0,
            basis: Mat::zeros(system.order(), 0),
            rom: ReducedModel::empty(p, m, Method::Cure),
            system,
            feedthrough,
            dirs,
            perp,
            history: Vec::new(),
        })
    }

    pub fn order(&self) -> usize {
        self.rom.order()
    }

    /// G⊥ as a DAE: only the dynamic rows of B (or columns of C) ever change.
    pub fn g_perp(&self) -> Result<SemiExplicitDae> {
        let b = self.system.blocks();
        let n1 = self.system.n_dyn();
        match self.side {
            Side::Input => {
                let b11 = self.perp.rows(0, n1).clone_owned();
                self.system
                    .with_io(b11, b.b22.clone(), b.c11.clone(), b.c22.clone(), b.d.clone())
            }
            Side::Output => {
                let c11 = self.perp.columns(0, n1).clone_owned();
                self.system
                    .with_io(b.b11.clone(), b.b22.clone(), c11, b.c22.clone(), b.d.clone())
            }
        }
    }

    /// B⊥ (or C⊥) recomputed from the accumulated quantities.
    pub fn perp_from_scratch(&self) -> Result<Mat> {
        let d = self.system.descriptor();
        if self.order() == 0 {
            return Ok(match self.side {
                Side::Input => d.b.clone(),
                Side::Output => d.c.clone(),
            });
        }
        // replay the per-step updates from the stored blocks
        let mut perp = match self.side {
            Side::Input => d.b.clone(),
            Side::Output => d.c.clone(),
        };
        let mut col = 0;
        for rec in &self.history {
            let n = rec.step_order;
            let vk = self.basis.columns(col, n).clone_owned();
            let (er, br_or_cr) = self.step_blocks(col, n);
            let lu = LuFactors::dense(&er).map_err(|_| MorError::SingularProjection)?;
            match self.side {
                Side::Input => perp -= d.e.mul_dense(&vk) * lu.solve(&br_or_cr),
                Side::Output => {
                    perp -= lu.solve_transpose(&br_or_cr.transpose()).transpose() * d.e.tr_mul_dense(&vk).transpose()
                }
            }
            col += n;
        }
        Ok(perp)
    }

    /// (Er_k, Br_k) or (Er_k, Cr_k) of the step occupying columns col..col+n.
    fn step_blocks(&self, col: usize, n: usize) -> (Mat, Mat) {
        let er = self.rom.er.view((col, col), (n, n)).clone_owned();
        match self.side {
            Side::Input => (er, self.rom.br.rows(col, n).clone_owned()),
            Side::Output => (er, self.rom.cr.columns(col, n).clone_owned()),
        }
    }

    /// G̃^Σ(s) = R^Σ(sE^Σ − A^Σ)⁻¹B^Σ + I (input) or C^Σ(sE^Σ − A^Σ)⁻¹L^Σ + I (output).
    fn tilde_eval(&self, s: C64) -> Result<CMat> {
        let r = &self.rom;
        let n = r.order();
        let (rows, io) = match self.side {
            Side::Input => (self.dirs.clone(), r.inputs()),
            Side::Output => (r.cr.clone(), r.outputs()),
        };
        let cols = match self.side {
            Side::Input => r.br.clone(),
            Side::Output => self.dirs.clone(),
        };
        let eye = CMat::identity(io, io);
        if n == 0 {
            return Ok(eye);
        }
        let pencil = to_complex(&r.er) * s - to_complex(&r.ar);
        let lu = LuFactors::dense(&pencil)?;
        Ok(to_complex(&rows) * lu.solve(&to_complex(&cols)) + eye)
    }

    /// |G(s) − G^Σ(s) − G⊥(s)·G̃^Σ(s)| / |G(s)| (input side; G̃^Σ·G⊥ on the output side).
    pub fn factorization_residual(&self, s: C64) -> Result<f64> {
        let g = self.system.transfer_eval(s)?;
        let gs = self.rom.transfer_eval(s)?;
        let gp = self.g_perp()?.transfer_eval(s)?;
        let gt = self.tilde_eval(s)?;
        let prod = match self.side {
            Side::Input => gp * gt,
            Side::Output => gt * gp,
        };
        Ok((&g - gs - prod).norm() / g.norm().max(f64::MIN_POSITIVE))
    }

    /// Final ROM: G^Σ with the stripped feedthrough copied back.
    pub fn final_rom(&self) -> ReducedModel {
        let mut rom = self.rom.clone();
        rom.dr = self.feedthrough.clone();
        rom.provenance.d_imp = self.feedthrough.clone();
        rom
    }

    /// The cumulated ROM after the first `steps` steps, with the feedthrough
    /// attached. Dropping trailing blocks is exact because later steps never
    /// feed the input or output of earlier ones.
    pub fn prefix_rom(&self, steps: usize) -> ReducedModel {
        let n: usize = self.history.iter().take(steps).map(|r| r.step_order).sum();
        let r = &self.rom;
        let mut out = r.clone();
        out.er = r.er.view((0, 0), (n, n)).clone_owned();
        out.ar = r.ar.view((0, 0), (n, n)).clone_owned();
        out.br = r.br.rows(0, n).clone_owned();
        out.cr = r.cr.columns(0, n).clone_owned();
        out.dr = self.feedthrough.clone();
        out.provenance.interpolation.truncate(steps);
        out.provenance.d_imp = self.feedthrough.clone();
        out
    }

    pub fn write_log(&self, out: &mut impl Write) -> Result<()> {
        for rec in &self.history {
            serde_json::to_writer(&mut *out, rec)?;
            writeln!(out)?;
        }
        Ok(())
    }
}

/// Add one step ROM (built from G⊥ with `basis`) to the state.
pub fn cure_step(mut state: CureState, step_rom: &ReducedModel, basis: &KrylovBasis) -> Result<CureState> {
    let n = step_rom.order();
    let (p, m) = (state.rom.outputs(), state.rom.inputs());
    if basis.side() != state.side
        || basis.order() != n
        || basis.basis.nrows() != state.system.order()
        || step_rom.inputs() != m
        || step_rom.outputs() != p
    {
        return Err(MorError::dims(format!(
            "step of order {n} ({p}×{m}) with a {:?} basis of {} columns on {} rows",
            basis.side(),
            basis.order(),
            basis.basis.nrows()
        )));
    }
    let lu = LuFactors::dense(&step_rom.er).map_err(|_| MorError::SingularProjection)?;
    let d = state.system.descriptor();
    let old = &state.rom;
    let k = old.order();
    let mut ar = block_diag(&old.ar, &step_rom.ar);
    match state.side {
        Side::Input => {
            let r_k = basis.data.dirs.clone();
            // A^Σ = [[A^Σ, 0], [Br_k·R^Σ, Ar_k]]
            ar.view_mut((k, 0), (n, k)).copy_from(&(&step_rom.br * &state.dirs));
            state.perp -= d.e.mul_dense(&basis.basis) * lu.solve(&step_rom.br);
            state.dirs = hstack(&state.dirs, &r_k);
        }
        Side::Output => {
            let l_k = basis.data.dirs.clone();
            // A^Σ = [[A^Σ, L^Σ·Cr_k], [0, Ar_k]]
            ar.view_mut((0, k), (k, n)).copy_from(&(&state.dirs * &step_rom.cr));
            let cr_er_inv = lu.solve_transpose(&step_rom.cr.transpose()).transpose();
            state.perp -= cr_er_inv * d.e.tr_mul_dense(&basis.basis).transpose();
            state.dirs = vstack(&state.dirs, &l_k);
        }
    }
    let mut prov = old.provenance.clone();
    prov.interpolation.push(basis.data.clone());
    state.rom = ReducedModel::new(
        block_diag(&old.er, &step_rom.er),
        ar,
        vstack(&old.br, &step_rom.br),
        hstack(&old.cr, &step_rom.cr),
        Mat::zeros(p, m),
        prov,
    )?;
    state.basis = hstack(&state.basis, &basis.basis);
    state.k += 1;

    let step_norm_sq = h2_norm_sq(&step_rom.strictly_proper()).unwrap_or(f64::NAN);
    let max_real = eigenvalues_dense(&state.rom.ar, Some(&state.rom.er))?.max_real();
    let cumulative_norm_sq = if max_real < 0.0 {
        h2_norm_sq(&state.rom).unwrap_or(f64::NAN)
    } else {
        f64::NAN
    };
    let shifts = basis.data.shifts().unwrap_or_default();
    state.history.push(CureStepRecord {
        k: state.k,
        shifts,
        step_order: n,
        step_norm_sq,
        cumulative_order: state.rom.order(),
        cumulative_norm_sq,
        stable: max_real < 0.0,
        max_real_eig: max_real,
    });
    Ok(state)
}

/// Run CURE until the stop criterion is met.
pub fn cure_run(
    dae: &SemiExplicitDae,
    side: Side,
    reducer: &StepReducer,
    stop: &StopCriterion,
) -> Result<(CureState, ReducedModel)> {
    let mut state = CureState::new(dae, side)?;
    loop {
        if stop.target_order.is_some_and(|t| state.order() >= t) {
            break;
        }
        let exhausted = match reducer {
            StepReducer::Pork(steps) => state.k >= steps.len(),
            StepReducer::Spark(_) => false,
        };
        if state.k >= stop.max_steps || exhausted {
            if stop.target_order.is_some() {
                let last = state.history.last().map_or(f64::NAN, |r| r.step_norm_sq);
                return Err(MorError::StagnationDetected { steps: state.k, last });
            }
            break;
        }
        let g_perp = state.g_perp()?;
        let (rom, basis) = match reducer {
            StepReducer::Spark(opts) => {
                let init = spark_initial_guess(&g_perp, side)?;
                let res = spark(&g_perp, side, init, opts)?;
                let basis = res.basis.expect("spark returns its basis");
                (res.rom, basis)
            }
            StepReducer::Pork(steps) => {
                let data = shifts_to_sylvester(&steps[state.k], side)?;
                let basis = krylov_basis_orthonormal(g_perp.descriptor(), &data)?;
                if !basis.deflated.is_empty() {
                    return Err(MorError::InvalidInput(format!(
                        "step {} deflated columns {:?}",
                        state.k + 1,
                        basis.deflated
                    )));
                }
                (pork_from_basis(&g_perp, &basis)?, basis)
            }
        };
        state = cure_step(state, &rom, &basis)?;
        let rec = state.history.last().expect("step recorded");
        if let Some(tol) = stop.rel_contribution {
            if rec.step_norm_sq <= tol * rec.cumulative_norm_sq {
                break;
            }
        }
    }
    let rom = state.final_rom();
    Ok((state, rom))
}

/// Largest stored-vs-recomputed deviation of B⊥ (or C⊥), relative to its size.
pub fn perp_consistency(state: &CureState) -> Result<f64> {
    let again = state.perp_from_scratch()?;
    Ok(max_abs(&(&again - &state.perp)) / max_abs(&again).max(f64::MIN_POSITIVE))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::krylov::siso_points;
    use crate::model::{
        build_transmission_line, random_stable_dae, OutputTap, RandomDaeOptions, TransmissionLineParams,
    };
    use crate::reduce::pork;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn samples() -> [C64; 5] {
        [c(0.0, 0.1), c(0.2, 1.0), c(1.0, -3.0), c(0.0, 10.0), c(3.0, 0.5)]
    }

    #[test]
    fn single_step_equals_pork() {
        let dae = random_stable_dae(&RandomDaeOptions::new(10, 4).strictly_proper(), 2).unwrap();
        let pts = siso_points(&[c(0.5, 1.0), c(2.0, 0.0)]);
        let (state, rom) = cure_run(
            &dae,
            Side::Input,
            &StepReducer::Pork(vec![pts.clone()]),
            &StopCriterion::default(),
        )
        .unwrap();
        let direct = pork(&dae, &shifts_to_sylvester(&pts, Side::Input).unwrap()).unwrap();
        for s in samples() {
            let a = rom.transfer_eval(s).unwrap();
            let b = direct.transfer_eval(s).unwrap();
            assert!((&a - &b).norm() < 1e-10 * a.norm());
            assert!(state.factorization_residual(s).unwrap() < 1e-8);
        }
    }

    #[test]
    fn mimo_factorization_holds_both_sides() {
        let dae = random_stable_dae(&RandomDaeOptions::new(12, 5).io(2, 2).strictly_proper(), 6).unwrap();
        let steps = vec![
            vec![TangentialPoint::real(0.7, &[1.0, 0.5])],
            vec![
                TangentialPoint::new(c(1.0, 2.0), vec![c(1.0, 0.0), c(0.0, 1.0)]),
                TangentialPoint::new(c(1.0, -2.0), vec![c(1.0, 0.0), c(0.0, -1.0)]),
            ],
        ];
        for side in [Side::Input, Side::Output] {
            let (state, rom) =
                cure_run(&dae, side, &StepReducer::Pork(steps.clone()), &StopCriterion::default()).unwrap();
            assert_eq!(rom.order(), 3);
            assert!(perp_consistency(&state).unwrap() < 1e-10);
            for s in samples() {
                assert!(state.factorization_residual(s).unwrap() < 1e-8, "{side:?}");
            }
            // the first step's tangential data survives later steps unchanged
            let p = &steps[0][0];
            let g = dae.transfer_eval(p.shift).unwrap();
            let gr = rom.transfer_eval(p.shift).unwrap();
            let d = CMat::from_column_slice(2, 1, &p.direction);
            let gap = match side {
                Side::Input => ((&g - &gr) * &d).norm() / (&g * &d).norm(),
                Side::Output => ((&g - &gr).transpose() * &d).norm() / (g.transpose() * &d).norm(),
            };
            assert!(gap < 1e-8, "{side:?} {gap}");
        }
    }

    #[test]
    fn two_steps_interpolate_all_shifts_siso() {
        let dae = random_stable_dae(&RandomDaeOptions::new(12, 5).strictly_proper(), 6).unwrap();
        let steps = vec![siso_points(&[c(0.7, 0.0)]), siso_points(&[c(1.0, 2.0)])];
        for side in [Side::Input, Side::Output] {
            let (_, rom) = cure_run(&dae, side, &StepReducer::Pork(steps.clone()), &StopCriterion::default()).unwrap();
            for p in steps.iter().flatten() {
                let g = dae.transfer_eval(p.shift).unwrap()[(0, 0)];
                let gr = rom.transfer_eval(p.shift).unwrap()[(0, 0)];
                assert!((g - gr).norm() < 1e-8 * g.norm(), "{side:?}");
            }
        }
    }

    #[test]
    fn prefix_rom_is_the_earlier_cumulation() {
        let dae = random_stable_dae(&RandomDaeOptions::new(12, 5).strictly_proper(), 6).unwrap();
        let steps = vec![siso_points(&[c(0.7, 0.0)]), siso_points(&[c(1.0, 2.0)])];
        for side in [Side::Input, Side::Output] {
            let (state, rom) =
                cure_run(&dae, side, &StepReducer::Pork(steps.clone()), &StopCriterion::default()).unwrap();
            assert_eq!(state.prefix_rom(2).ar, rom.ar);
            let first = pork(&dae, &shifts_to_sylvester(&steps[0], side).unwrap()).unwrap();
            let one = state.prefix_rom(1);
            for s in samples() {
                let a = one.transfer_eval(s).unwrap();
                let b = first.transfer_eval(s).unwrap();
                assert!((&a - &b).norm() < 1e-10 * b.norm(), "{side:?}");
            }
        }
    }

    #[test]
    fn zero_step_input_keeps_b_perp() {
        let dae = random_stable_dae(&RandomDaeOptions::new(6, 2).strictly_proper(), 9).unwrap();
        let state = CureState::new(&dae, Side::Input).unwrap();
        let data = shifts_to_sylvester(&[TangentialPoint::real(1.0, &[1.0])], Side::Input).unwrap();
        let basis = krylov_basis_orthonormal(state.system.descriptor(), &data).unwrap();
        let mut rom = pork_from_basis(&state.system, &basis).unwrap();
        rom.br.fill(0.0);
        let before = state.perp.clone();
        let after = cure_step(state, &rom, &basis).unwrap();
        assert_eq!(after.perp, before);
        let g0 = ReducedModel::empty(1, 1, Method::Cure);
        for s in samples() {
            let a = after.rom.transfer_eval(s).unwrap();
            assert!((a - g0.transfer_eval(s).unwrap()).norm() < 1e-14);
        }
    }

    #[test]
    fn feedthrough_is_copied_exactly() {
        let params = TransmissionLineParams::telephone_cable(4).with_tap(OutputTap::FirstInductorVoltage);
        let dae = build_transmission_line(&params).unwrap();
        let d_total = &dae.blocks().d + dae.implicit_feedthrough();
        let steps = vec![siso_points(&[c(1e7, 5e7)]), siso_points(&[c(1e8, 0.0)])];
        let (state, rom) = cure_run(&dae, Side::Input, &StepReducer::Pork(steps), &StopCriterion::default()).unwrap();
        assert_eq!(rom.dr, d_total);
        for s in [c(0.0, 1e6), c(1e7, 3e7), c(0.0, 2e8)] {
            assert!(state.factorization_residual(s).unwrap() < 1e-8);
        }
    }

    #[test]
    fn stagnation_when_steps_run_out() {
        let dae = random_stable_dae(&RandomDaeOptions::new(6, 2).strictly_proper(), 1).unwrap();
        let steps = vec![vec![TangentialPoint::real(1.0, &[1.0])]];
        let err = cure_run(&dae, Side::Input, &StepReducer::Pork(steps), &StopCriterion::order(4));
        assert!(matches!(err, Err(MorError::StagnationDetected { .. })));
    }
}
