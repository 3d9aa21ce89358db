//! Diagnostics for reduced models: spectra, dissipativity, error norms,
//! interpolation residuals and comparison tables.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{MorError, Result};
use crate::krylov::InterpolationData;
use crate::linalg::{
    block_diag, eigenvalues_dense, hstack, max_abs, solve_lyapunov_small, symmetric_extremes, vstack, CMat, LuFactors,
    C64,
};
use crate::model::{frequency_response, SemiExplicitDae, Side, TransferFunction};
use crate::reduce::ReducedModel;
use crate::sdtransform::{is_strictly_dissipative, DISSIPATIVITY_TOL};

/// Allowed feedthrough mismatch before an error system is rejected.
pub const FEEDTHROUGH_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub stable: bool,
    pub max_real: f64,
    pub spectrum: Vec<C64>,
}

/// Stable iff every eigenvalue of (ar, er) has negative real part.
pub fn stability_check(rom: &ReducedModel) -> Result<StabilityReport> {
    let eig = eigenvalues_dense(&rom.ar, Some(&rom.er))?;
    let max_real = eig.max_real();
    Ok(StabilityReport {
        stable: eig.finite.is_empty() || max_real < 0.0,
        max_real: if eig.finite.is_empty() {
            f64::NEG_INFINITY
        } else {
            max_real
        },
        spectrum: eig.finite,
    })
}

/// Smallest and largest modulus of the finite poles (dense, desk scale).
pub fn spectral_band(full: &SemiExplicitDae) -> Result<(f64, f64)> {
    let ode = full.underlying_ode();
    let eig = eigenvalues_dense(&ode.a1, Some(&ode.e1))?;
    let lo = eig.finite.iter().map(|z| z.norm()).fold(f64::INFINITY, f64::min);
    let hi = eig.finite.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if !(lo > 0.0 && hi.is_finite()) {
        return Err(MorError::InvalidInput("spectrum has a zero or non-finite pole".into()));
    }
    Ok((lo, hi))
}

/// `k` indices spread evenly over 0..n.
fn spread(n: usize, k: usize) -> Vec<usize> {
    match k {
        0 => vec![],
        1 => vec![n / 2],
        _ => (0..k).map(|j| (j * (n - 1) + (k - 1) / 2) / (k - 1)).collect(),
    }
}

/// `count` shifts at mirror images −λ of poles spread over the spectrum, as a
/// conjugate-closed list. Complex pairs are preferred; real poles fill the rest.
pub fn mirrored_pole_shifts(full: &SemiExplicitDae, count: usize) -> Result<Vec<C64>> {
    if count > full.n_dyn() {
        return Err(MorError::InvalidInput(format!(
            "{count} shifts requested but the system has {} poles",
            full.n_dyn()
        )));
    }
    let ode = full.underlying_ode();
    let eig = eigenvalues_dense(&ode.a1, Some(&ode.e1))?;
    let is_real = |z: &C64| z.im.abs() <= 1e-12 * z.norm();
    let by_modulus = |a: &C64, b: &C64| a.norm().total_cmp(&b.norm());
    let mut pairs: Vec<C64> = eig
        .finite
        .iter()
        .filter(|z| !is_real(z) && z.im > 0.0)
        .map(|z| -z.conj())
        .collect();
    let mut reals: Vec<C64> = eig
        .finite
        .iter()
        .filter(|z| is_real(z))
        .map(|z| C64::new(-z.re, 0.0))
        .collect();
    pairs.sort_by(by_modulus);
    reals.sort_by(by_modulus);
    if let Some(bad) = pairs.iter().chain(&reals).find(|z| !(z.re > 0.0)) {
        return Err(MorError::UnstableSystem { max_real: -bad.re });
    }
    let n_pairs = (count / 2).min(pairs.len());
    let n_reals = count - 2 * n_pairs;
    let mut out = Vec::with_capacity(count);
    for k in spread(pairs.len(), n_pairs) {
        out.push(pairs[k]);
        out.push(pairs[k].conj());
    }
    if n_reals <= reals.len() {
        out.extend(spread(reals.len(), n_reals).into_iter().map(|k| reals[k]));
    } else {
        // odd count without a real pole: one real shift at the median modulus
        let mid = pairs[pairs.len() / 2].norm();
        out.push(C64::new(mid, 0.0));
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RomDissipativity {
    pub er_symmetric: bool,
    pub er_min_eig: f64,
    pub ar_sym_max_eig: f64,
    pub dissipative: bool,
}

/// er = erᵀ ≻ 0 and ar + arᵀ ≺ 0, with margins relative to the largest entry.
pub fn rom_dissipativity(rom: &ReducedModel) -> RomDissipativity {
    let er_symmetric = max_abs(&(&rom.er - rom.er.transpose())) <= DISSIPATIVITY_TOL * max_abs(&rom.er);
    let (er_min_eig, _) = symmetric_extremes(&rom.er);
    let (_, ar_sym_max_eig) = symmetric_extremes(&rom.ar);
    let dissipative = er_symmetric
        && er_min_eig > DISSIPATIVITY_TOL * max_abs(&rom.er)
        && ar_sym_max_eig < -DISSIPATIVITY_TOL * max_abs(&rom.ar);
    RomDissipativity {
        er_symmetric,
        er_min_eig,
        ar_sym_max_eig,
        dissipative,
    }
}

/// ‖G − G_r‖_H2 through the underlying ODE of `full` (dense).
pub fn h2_error_direct(full: &SemiExplicitDae, rom: &ReducedModel) -> Result<f64> {
    let ode = full.underlying_ode();
    if rom.io_dims() != (ode.c1.nrows(), ode.b1.ncols()) {
        return Err(MorError::dims(format!(
            "ROM is {:?}, system is {:?}",
            rom.io_dims(),
            (ode.c1.nrows(), ode.b1.ncols())
        )));
    }
    let difference = max_abs(&(&ode.d1 - &rom.dr));
    if difference > FEEDTHROUGH_TOL * max_abs(&ode.d1).max(1.0) {
        return Err(MorError::FeedthroughMismatch { difference });
    }
    let e = block_diag(&ode.e1, &rom.er);
    let a = block_diag(&ode.a1, &rom.ar);
    let b = vstack(&ode.b1, &rom.br);
    let c = hstack(&ode.c1, &(-&rom.cr));
    let lu = LuFactors::dense(&e).map_err(|_| MorError::SingularProjection)?;
    let (a, b) = (lu.solve(&a), lu.solve(&b));
    let max_real = eigenvalues_dense(&a, None)?.max_real();
    if !(max_real < 0.0) {
        return Err(MorError::UnstableModel { max_real });
    }
    let p = solve_lyapunov_small(&a, &(&b * b.transpose()))?;
    Ok((&c * p * c.transpose()).trace().max(0.0).sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InterpolationResidual {
    pub shift: C64,
    pub side: Side,
    pub residual: f64,
}

/// Per point: ‖(G − G_r)(sᵢ)·rᵢ‖ / ‖G(sᵢ)·rᵢ‖ (input data) or
/// ‖lᵢᵀ(G − G_r)(sᵢ)‖ / ‖lᵢᵀG(sᵢ)‖ (output data).
pub fn interpolation_residuals<F: TransferFunction + ?Sized>(
    full: &F,
    rom: &ReducedModel,
    data: &[InterpolationData],
) -> Result<Vec<InterpolationResidual>> {
    let mut out = Vec::new();
    for d in data {
        for p in &d.points {
            let g = full.transfer_eval(p.shift)?;
            let gr = rom.transfer_eval(p.shift)?;
            let dir = CMat::from_column_slice(p.direction.len(), 1, &p.direction);
            let (num, den) = match d.side {
                Side::Input => (((&g - &gr) * &dir).norm(), (&g * &dir).norm()),
                Side::Output => (((&g - &gr).transpose() * &dir).norm(), (g.transpose() * &dir).norm()),
            };
            out.push(InterpolationResidual {
                shift: p.shift,
                side: d.side,
                residual: num / den.max(f64::MIN_POSITIVE),
            });
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelRecord {
    pub name: String,
    pub order: usize,
    pub stable: bool,
    pub max_real_eig: f64,
    pub dissipative: bool,
    /// Smallest eigenvalue of sym(E) (E1 for the full model).
    pub e_min_eig: f64,
    /// Largest eigenvalue of sym(A) (A or A1 for the full model).
    pub a_sym_max_eig: f64,
    pub h2_error: Option<f64>,
    pub max_rel_freq_error: Option<f64>,
    pub interpolation: Vec<InterpolationResidual>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub models: Vec<ModelRecord>,
    pub omegas: Vec<f64>,
    /// Per ROM (same order as `models[1..]`): ‖G(iω) − G_r(iω)‖_F at each ω.
    pub freq_errors: Vec<Vec<f64>>,
}

impl ComparisonReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// One row per model: stability and dissipativity with their margins.
    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "name",
            "order",
            "stable",
            "max_real_eig",
            "dissipative",
            "e_min_eig",
            "a_sym_max_eig",
            "h2_error",
            "max_rel_freq_error",
        ])?;
        let opt = |x: Option<f64>| x.map_or_else(String::new, |v| format!("{v:e}"));
        for m in &self.models {
            w.write_record([
                m.name.clone(),
                m.order.to_string(),
                m.stable.to_string(),
                format!("{:e}", m.max_real_eig),
                m.dissipative.to_string(),
                format!("{:e}", m.e_min_eig),
                format!("{:e}", m.a_sym_max_eig),
                opt(m.h2_error),
                opt(m.max_rel_freq_error),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Compare ROMs against the full model on a frequency grid. H2 errors are
/// attempted only when `with_h2` is set (dense underlying ODE).
pub fn compare(
    full: &SemiExplicitDae,
    roms: &[(&str, &ReducedModel)],
    omegas: &[f64],
    with_h2: bool,
) -> Result<ComparisonReport> {
    let ode = full.underlying_ode();
    let full_eig = eigenvalues_dense(&ode.a1, Some(&ode.e1))?;
    let diss = is_strictly_dissipative(full);
    let fom_resp = frequency_response(full, omegas)?;
    let mut models = vec![ModelRecord {
        name: "FOM".into(),
        order: full.order(),
        stable: full_eig.max_real() < 0.0,
        max_real_eig: full_eig.max_real(),
        dissipative: diss.is_dissipative(),
        e_min_eig: diss.e1_min_eig,
        a_sym_max_eig: diss.a1_max_eig,
        h2_error: None,
        max_rel_freq_error: None,
        interpolation: Vec::new(),
    }];
    let mut freq_errors = Vec::new();
    for (name, rom) in roms {
        let st = stability_check(rom)?;
        let rd = rom_dissipativity(rom);
        let resp = frequency_response(*rom, omegas)?;
        let errs = fom_resp
            .values
            .iter()
            .zip(&resp.values)
            .map(|(g, h)| match (g, h) {
                (Some(g), Some(h)) => (g - h).norm(),
                _ => f64::NAN,
            })
            .collect();
        freq_errors.push(errs);
        let h2_error = if with_h2 && st.stable {
            h2_error_direct(full, rom).ok()
        } else {
            None
        };
        models.push(ModelRecord {
            name: name.to_string(),
            order: rom.order(),
            stable: st.stable,
            max_real_eig: st.max_real,
            dissipative: rd.dissipative,
            e_min_eig: rd.er_min_eig,
            a_sym_max_eig: rd.ar_sym_max_eig,
            h2_error,
            max_rel_freq_error: resp.max_relative_error(&fom_resp).ok(),
            interpolation: interpolation_residuals(full, rom, &rom.provenance.interpolation)?,
        });
    }
    Ok(ComparisonReport {
        models,
        omegas: omegas.to_vec(),
        freq_errors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adaptive::{h2_error_pseudo_optimal, spark, SparkOptions};
    use crate::krylov::{input_krylov_basis, output_krylov_basis, shifts_to_sylvester, siso_points, TangentialPoint};
    use crate::linalg::Mat;
    use crate::model::{random_stable_dae, RandomDaeOptions};
    use crate::reduce::{h2_norm_sq, pork, project_corrected, Method, Provenance};

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn ode_rom(dae: &SemiExplicitDae) -> ReducedModel {
        let ode = dae.underlying_ode();
        let p = Provenance {
            method: Method::Pork,
            interpolation: vec![],
            d_imp: Mat::zeros(ode.d1.nrows(), ode.d1.ncols()),
            l_correction: false,
            r_correction: false,
            unsafe_override: false,
        };
        ReducedModel::new(ode.e1, ode.a1, ode.b1, ode.c1, ode.d1, p).unwrap()
    }

    #[test]
    fn spread_picks_distinct_ends() {
        assert_eq!(spread(10, 1), vec![5]);
        assert_eq!(spread(10, 2), vec![0, 9]);
        let k = spread(140, 50);
        assert!(k.windows(2).all(|w| w[0] < w[1]) && k[0] == 0 && k[49] == 139);
    }

    #[test]
    fn mirrored_shifts_are_closed_and_sized() {
        let dae = random_stable_dae(&RandomDaeOptions::new(9, 3), 5).unwrap();
        for count in 1..=9 {
            let s = mirrored_pole_shifts(&dae, count).unwrap();
            assert_eq!(s.len(), count);
            assert!(s.iter().all(|z| z.re > 0.0));
            for z in &s {
                assert!(z.im == 0.0 || s.contains(&z.conj()));
            }
        }
        assert!(mirrored_pole_shifts(&dae, 10).is_err());
    }

    #[test]
    fn negative_identity_is_stable() {
        let mut rom = ReducedModel::empty(1, 1, Method::Pork);
        rom.er = Mat::identity(3, 3);
        rom.ar = -Mat::identity(3, 3);
        rom.br = Mat::zeros(3, 1);
        rom.cr = Mat::zeros(1, 3);
        assert!(stability_check(&rom).unwrap().stable);
        assert!(rom_dissipativity(&rom).dissipative);
    }

    #[test]
    fn exact_and_zero_roms() {
        let dae = random_stable_dae(&RandomDaeOptions::new(8, 3).io(2, 2), 4).unwrap();
        let exact = ode_rom(&dae);
        let norm = h2_norm_sq(&exact).unwrap().sqrt();
        // cancellation in the trace limits the exact case to about √eps·‖G‖
        assert!(h2_error_direct(&dae, &exact).unwrap() < 1e-6 * norm);
        let mut zero = ReducedModel::empty(2, 2, Method::Pork);
        zero.dr = exact.dr.clone();
        assert!((h2_error_direct(&dae, &zero).unwrap() - norm).abs() < 1e-9 * norm);
        let mut bad = zero.clone();
        bad.dr[(0, 0)] += 1.0;
        assert!(matches!(
            h2_error_direct(&dae, &bad),
            Err(MorError::FeedthroughMismatch { .. })
        ));
    }

    #[test]
    fn sign_flip_of_cr_is_symmetric_for_zero_baseline() {
        let dae = random_stable_dae(&RandomDaeOptions::new(6, 2).strictly_proper(), 8).unwrap();
        let mut rom = pork(
            &dae,
            &shifts_to_sylvester(&[TangentialPoint::real(1.0, &[1.0])], Side::Input).unwrap(),
        )
        .unwrap();
        rom.cr.fill(0.0);
        let a = h2_error_direct(&dae, &rom).unwrap();
        rom.cr = -rom.cr.clone();
        assert_eq!(a, h2_error_direct(&dae, &rom).unwrap());
    }

    #[test]
    fn pseudo_optimal_error_matches_direct() {
        let dae = random_stable_dae(&RandomDaeOptions::new(10, 4).strictly_proper(), 12).unwrap();
        let full_sq = h2_norm_sq(&ode_rom(&dae)).unwrap();
        let res = spark(&dae, Side::Input, (1.0, 1.0), &SparkOptions::default()).unwrap();
        let direct = h2_error_direct(&dae, &res.rom).unwrap();
        let via_norms = h2_error_pseudo_optimal(full_sq, &res.rom).unwrap();
        assert!(
            (direct - via_norms).abs() < 1e-6 * direct.max(via_norms),
            "{direct} vs {via_norms}"
        );
    }

    #[test]
    fn residuals_detect_broken_interpolant() {
        let dae = random_stable_dae(&RandomDaeOptions::new(10, 4), 3).unwrap();
        let pts = siso_points(&[c(0.5, 1.5), c(2.0, 0.0)]);
        let v = input_krylov_basis(&dae, &shifts_to_sylvester(&pts, Side::Input).unwrap()).unwrap();
        let w = output_krylov_basis(&dae, &shifts_to_sylvester(&pts, Side::Output).unwrap()).unwrap();
        let rom = project_corrected(&dae, &v, &w).unwrap();
        let res = interpolation_residuals(&dae, &rom, &rom.provenance.interpolation).unwrap();
        assert_eq!(res.len(), 6);
        assert!(res.iter().all(|r| r.residual < 1e-8), "{res:?}");
        let mut broken = rom.clone();
        broken.br *= 1.5;
        let res = interpolation_residuals(&dae, &broken, &rom.provenance.interpolation[..1]).unwrap();
        assert!(res.iter().all(|r| r.residual > 1e-3));
    }

    #[test]
    fn comparison_report_is_reproducible() {
        let dae = random_stable_dae(&RandomDaeOptions::new(8, 3).strictly_proper(), 30).unwrap();
        let rom = pork(
            &dae,
            &shifts_to_sylvester(&siso_points(&[c(0.4, 1.0)]), Side::Input).unwrap(),
        )
        .unwrap();
        let omegas = crate::model::logspace(-2.0, 2.0, 20);
        let a = compare(&dae, &[("pork", &rom)], &omegas, true).unwrap();
        let b = compare(&dae, &[("pork", &rom)], &omegas, true).unwrap();
        assert_eq!(a, b);
        assert!(a.models[1].stable && a.models[1].h2_error.is_some());
        let mut csv = Vec::new();
        a.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.starts_with("name,order,stable"));
    }
}
