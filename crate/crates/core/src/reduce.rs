//! Projection reducers: corrected two-sided projection, guarded orthogonal
//! reduction and pseudo-optimal rational Krylov (PORK).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{MorError, Result};
use crate::krylov::{krylov_basis_orthonormal, krylov_basis_raw, InterpolationData, KrylovBasis};
use crate::linalg::{
    eigenvalues_dense, max_abs, solve_lyapunov_small, symmetric_extremes, CMat, LuFactors, Mat, SparseMatrix, C64,
};
use crate::model::{dense_transfer, write_mtx_file, OdeRealization, SemiExplicitDae, Side, Sidecar, TransferFunction};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    TwoSidedCorrected,
    OrthogonalInput,
    OrthogonalOutput,
    Pork,
    Cure,
}

/// Which correction terms went into a reduced model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub method: Method,
    pub interpolation: Vec<InterpolationData>,
    #[serde(with = "crate::linalg::mat_serde")]
    pub d_imp: Mat,
    /// L·D_imp terms were added (a genuine output basis was attached).
    pub l_correction: bool,
    /// D_imp·R terms were added (a genuine input basis was attached).
    pub r_correction: bool,
    /// Orthogonal reduction run despite a failed structural guard.
    pub unsafe_override: bool,
}

impl Provenance {
    fn new(method: Method, d_imp: Mat) -> Self {
        Provenance {
            method,
            interpolation: Vec::new(),
            d_imp,
            l_correction: false,
            r_correction: false,
            unsafe_override: false,
        }
    }
}

/// A dense reduced ODE  er·x' = ar·x + br·u,  y = cr·x + dr·u.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReducedModel {
    #[serde(with = "crate::linalg::mat_serde")]
    pub er: Mat,
    #[serde(with = "crate::linalg::mat_serde")]
    pub ar: Mat,
    #[serde(with = "crate::linalg::mat_serde")]
    pub br: Mat,
    #[serde(with = "crate::linalg::mat_serde")]
    pub cr: Mat,
    #[serde(with = "crate::linalg::mat_serde")]
    pub dr: Mat,
    pub provenance: Provenance,
}

impl ReducedModel {
    pub fn new(er: Mat, ar: Mat, br: Mat, cr: Mat, dr: Mat, provenance: Provenance) -> Result<Self> {
        let n = ar.nrows();
        let (p, m) = dr.shape();
        let ok = er.shape() == (n, n) && ar.shape() == (n, n) && br.shape() == (n, m) && cr.shape() == (p, n);
        if !ok {
            return Err(MorError::dims(format!(
                "er {:?}, ar {:?}, br {:?}, cr {:?}, dr {:?}",
                er.shape(),
                ar.shape(),
                br.shape(),
                cr.shape(),
                dr.shape()
            )));
        }
        Ok(ReducedModel {
            er,
            ar,
            br,
            cr,
            dr,
            provenance,
        })
    }

    /// The zero model of order 0.
    pub fn empty(outputs: usize, inputs: usize, method: Method) -> Self {
        ReducedModel {
            er: Mat::zeros(0, 0),
            ar: Mat::zeros(0, 0),
            br: Mat::zeros(0, inputs),
            cr: Mat::zeros(outputs, 0),
            dr: Mat::zeros(outputs, inputs),
            provenance: Provenance::new(method, Mat::zeros(outputs, inputs)),
        }
    }

    pub fn order(&self) -> usize {
        self.ar.nrows()
    }

    pub fn inputs(&self) -> usize {
        self.br.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.cr.nrows()
    }

    /// Same model with dr = 0.
    pub fn strictly_proper(&self) -> Self {
        let mut out = self.clone();
        out.dr.fill(0.0);
        out
    }

    /// (er⁻¹·ar, er⁻¹·br).
    pub fn normalized(&self) -> Result<(Mat, Mat)> {
        if self.order() == 0 {
            return Ok((self.ar.clone(), self.br.clone()));
        }
        let lu = LuFactors::dense(&self.er).map_err(|_| MorError::SingularProjection)?;
        Ok((lu.solve(&self.ar), lu.solve(&self.br)))
    }

    pub fn to_ode(&self) -> OdeRealization {
        OdeRealization {
            e1: self.er.clone(),
            a1: self.ar.clone(),
            b1: self.br.clone(),
            c1: self.cr.clone(),
            d1: self.dr.clone(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let rom: ReducedModel = serde_json::from_str(s)?;
        ReducedModel::new(rom.er, rom.ar, rom.br, rom.cr, rom.dr, rom.provenance)
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    /// One Matrix Market file per matrix plus a sidecar; returns the sidecar path.
    pub fn save_matrix_market(&self, dir: &Path, stem: &str) -> Result<PathBuf> {
        std::fs::create_dir_all(dir)?;
        let name = |m: &str| PathBuf::from(format!("{stem}.{m}.mtx"));
        for (m, mat) in [
            ("E", &self.er),
            ("A", &self.ar),
            ("B", &self.br),
            ("C", &self.cr),
            ("D", &self.dr),
        ] {
            write_mtx_file(&SparseMatrix::from_dense(mat), &dir.join(name(m)))?;
        }
        let sidecar = Sidecar {
            e: name("E"),
            a: name("A"),
            b: name("B"),
            c: name("C"),
            d: Some(name("D")),
            n_dyn: Some(self.order()),
        };
        let path = dir.join(format!("{stem}.json"));
        std::fs::write(&path, serde_json::to_string_pretty(&sidecar)?)?;
        Ok(path)
    }
}

impl TransferFunction for ReducedModel {
    fn io_dims(&self) -> (usize, usize) {
        (self.outputs(), self.inputs())
    }

    fn transfer_eval(&self, s: C64) -> Result<CMat> {
        if self.order() == 0 {
            return Ok(crate::linalg::to_complex(&self.dr));
        }
        dense_transfer(&self.er, &self.ar, &self.br, &self.cr, &self.dr, s)
    }
}

fn check_basis_rows(dae: &SemiExplicitDae, basis: &KrylovBasis) -> Result<()> {
    if basis.basis.nrows() != dae.order() {
        return Err(MorError::dims(format!(
            "basis has {} rows, system order is {}",
            basis.basis.nrows(),
            dae.order()
        )));
    }
    Ok(())
}

/// Petrov-Galerkin projection with the implicit-feedthrough corrections:
///
/// er = WᵀEV, ar = WᵀAV + L·D_imp·R, br = WᵀB + L·D_imp, cr = CV + D_imp·R, dr = D + D_imp.
///
/// R is taken from `v` only if it is an input basis and L from `w` only if it is an
/// output basis; otherwise the respective term is zero.
pub fn project_corrected(dae: &SemiExplicitDae, v: &KrylovBasis, w: &KrylovBasis) -> Result<ReducedModel> {
    check_basis_rows(dae, v)?;
    check_basis_rows(dae, w)?;
    if v.order() != w.order() {
        return Err(MorError::dims(format!(
            "V has {} columns, W has {}",
            v.order(),
            w.order()
        )));
    }
    let r = v.data.r().cloned();
    let l = w.data.l().cloned();
    let mut rom = corrected(
        dae,
        &v.basis,
        &w.basis,
        r.as_ref(),
        l.as_ref(),
        Method::TwoSidedCorrected,
    )?;
    rom.provenance.interpolation = vec![v.data.clone(), w.data.clone()];
    Ok(rom)
}

fn corrected(
    dae: &SemiExplicitDae,
    v: &Mat,
    w: &Mat,
    r: Option<&Mat>,
    l: Option<&Mat>,
    method: Method,
) -> Result<ReducedModel> {
    let sys = dae.descriptor();
    let d_imp = dae.implicit_feedthrough();
    let er = w.transpose() * sys.e.mul_dense(v);
    if er.nrows() > 0 {
        LuFactors::dense(&er).map_err(|_| MorError::SingularProjection)?;
    }
    let mut ar = w.transpose() * sys.a.mul_dense(v);
    let mut br = w.tr_mul(&sys.b);
    let mut cr = &sys.c * v;
    let dr = &sys.d + &d_imp;
    let mut prov = Provenance::new(method, d_imp.clone());
    if let Some(l) = l {
        br += l * &d_imp;
        prov.l_correction = true;
    }
    if let Some(r) = r {
        cr += &d_imp * r;
        prov.r_correction = true;
    }
    if let (Some(l), Some(r)) = (l, r) {
        ar += l * &d_imp * r;
    }
    ReducedModel::new(er, ar, br, cr, dr, prov)
}

/// Orthogonal (W = V) reduction with the structural guards.
///
/// Input basis: needs b22 = 0 (L = 0) or the symmetry triple (L = Rᵀ).
/// Output basis: needs c22 = 0 (R = 0) or the symmetry triple (R = Lᵀ).
/// `allow_unsafe` skips the guard and projects with the zero correction on the
/// missing side, which in general does not reduce the underlying ODE.
pub fn orthogonal_reduce(dae: &SemiExplicitDae, basis: &KrylovBasis, allow_unsafe: bool) -> Result<ReducedModel> {
    check_basis_rows(dae, basis)?;
    let report = dae.validate();
    let v = &basis.basis;
    let (method, plain_ok) = match basis.side() {
        Side::Input => (Method::OrthogonalInput, report.b22_zero),
        Side::Output => (Method::OrthogonalOutput, report.c22_zero),
    };
    let triple = !plain_ok && report.symmetry_triple;
    if !plain_ok && !triple && !allow_unsafe {
        return Err(MorError::StructuralGuard(match basis.side() {
            Side::Input => "input-side orthogonal reduction needs b22 = 0 or a22 = a22ᵀ, a12 = a21ᵀ, c22 = b22ᵀ".into(),
            Side::Output => {
                "output-side orthogonal reduction needs c22 = 0 or a22 = a22ᵀ, a12 = a21ᵀ, c22 = b22ᵀ".into()
            }
        }));
    }
    let dirs = basis.data.dirs.clone();
    let (r, l) = match (basis.side(), triple) {
        (Side::Input, false) => (Some(dirs), None),
        (Side::Input, true) => (Some(dirs.clone()), Some(dirs.transpose())),
        (Side::Output, false) => (None, Some(dirs)),
        (Side::Output, true) => (Some(dirs.transpose()), Some(dirs)),
    };
    let mut rom = corrected(dae, v, v, r.as_ref(), l.as_ref(), method)?;
    rom.provenance.unsafe_override = !plain_ok && !triple;
    rom.provenance.interpolation = vec![basis.data.clone()];
    Ok(rom)
}

/// Petrov-Galerkin reduction of the underlying ODE, the reference for the
/// corrected projections.
pub fn project_ode(ode: &OdeRealization, v1: &Mat, w1: &Mat) -> Result<ReducedModel> {
    let er = w1.transpose() * &ode.e1 * v1;
    let ar = w1.transpose() * &ode.a1 * v1;
    let br = w1.transpose() * &ode.b1;
    let cr = &ode.c1 * v1;
    let prov = Provenance::new(Method::TwoSidedCorrected, Mat::zeros(ode.d1.nrows(), ode.d1.ncols()));
    ReducedModel::new(er, ar, br, cr, ode.d1.clone(), prov)
}

fn check_rhp(s: &Mat) -> Result<()> {
    if s.nrows() == 0 {
        return Err(MorError::InvalidInput("empty interpolation data".into()));
    }
    let eig = eigenvalues_dense(s, None)?;
    if let Some(bad) = eig.finite.iter().find(|z| !(z.re > 0.0)) {
        return Err(MorError::ShiftInClosedLeftHalfPlane { shift: *bad });
    }
    Ok(())
}

/// X from (−Sᵀ)·X + X·(−S) + RᵀR = 0, and P = X⁻¹.
fn pork_gramian(s: &Mat, r: &Mat) -> Result<Mat> {
    let x = solve_lyapunov_small(&(-s.transpose()), &(r.transpose() * r)).map_err(|_| MorError::LyapunovSingular)?;
    let (lo, hi) = symmetric_extremes(&x);
    // an unobservable pair leaves X singular
    if !(lo > 1e-14 * hi.abs().max(f64::MIN_POSITIVE)) {
        return Err(MorError::LyapunovSingular);
    }
    let p = LuFactors::dense(&x)
        .map_err(|_| MorError::LyapunovSingular)?
        .solve(&Mat::identity(x.nrows(), x.ncols()));
    let p = (&p + p.transpose()) * 0.5;
    Ok(if hooks::lyapunov_sign_flipped() { -p } else { p })
}

/// Mutation hooks for the self-check suite. Thread-local, so they never leak
/// into other threads.
#[doc(hidden)]
pub mod hooks {
    use std::cell::Cell;

    thread_local! {
        static FLIP_LYAPUNOV_SIGN: Cell<bool> = const { Cell::new(false) };
    }

    /// Negates the PORK Gramian, i.e. the wrong sign convention for the
    /// Lyapunov equation.
    pub fn set_lyapunov_sign_flipped(on: bool) {
        FLIP_LYAPUNOV_SIGN.with(|f| f.set(on));
    }

    pub fn lyapunov_sign_flipped() -> bool {
        FLIP_LYAPUNOV_SIGN.with(|f| f.get())
    }
}

/// PORK from a basis with its exact Sylvester pair (tracked through any basis change).
///
/// Input side: er = I, br = −P·Rᵀ, ar = S_V + br·R, cr = C·V + D_imp·R, dr = D + D_imp.
/// Output side: er = I, cr = −Lᵀ·P, ar = S_W + L·cr, br = WᵀB + L·D_imp, dr = D + D_imp.
pub fn pork_from_basis(dae: &SemiExplicitDae, basis: &KrylovBasis) -> Result<ReducedModel> {
    check_basis_rows(dae, basis)?;
    let data = &basis.data;
    check_rhp(&data.s)?;
    let sys = dae.descriptor();
    let d_imp = dae.implicit_feedthrough();
    let n = data.order();
    let er = Mat::identity(n, n);
    let dr = &sys.d + &d_imp;
    let mut prov = Provenance::new(Method::Pork, d_imp.clone());
    prov.interpolation = vec![data.clone()];
    let (ar, br, cr) = match data.side {
        Side::Input => {
            let r = &data.dirs;
            let p = pork_gramian(&data.s, r)?;
            let br = -(&p * r.transpose());
            let ar = &data.s + &br * r;
            let cr = &sys.c * &basis.basis + &d_imp * r;
            prov.r_correction = true;
            (ar, br, cr)
        }
        Side::Output => {
            let l = &data.dirs;
            let (s_in, r_in) = data.input_form();
            let p = pork_gramian(&s_in, &r_in)?;
            let cr = -(l.transpose() * &p);
            let ar = &data.s + l * &cr;
            let br = basis.basis.tr_mul(&sys.b) + l * &d_imp;
            prov.l_correction = true;
            (ar, br, cr)
        }
    };
    ReducedModel::new(er, ar, br, cr, dr, prov)
}

/// PORK for interpolation data: builds the orthonormal Krylov basis with its
/// tracked Sylvester pair, then applies [`pork_from_basis`].
///
/// PORK never inverts anything formed from the basis, so when orthonormalization
/// deflates (shifts far below the spectrum give nearly parallel columns) the
/// exact Sylvester solution is used instead.
pub fn pork(dae: &SemiExplicitDae, data: &InterpolationData) -> Result<ReducedModel> {
    check_rhp(&data.s)?;
    let basis = krylov_basis_orthonormal(dae.descriptor(), data)?;
    if basis.deflated.is_empty() {
        return pork_from_basis(dae, &basis);
    }
    let raw = krylov_basis_raw(dae.descriptor(), data)?;
    if raw.relative_residual > 1e-8 {
        return Err(MorError::InvalidInput(format!(
            "Krylov basis deflated columns {:?} and the direct solve is inaccurate; drop redundant shifts",
            basis.deflated
        )));
    }
    pork_from_basis(dae, &raw)
}

/// ‖G_r − dr‖² in H2.
pub fn h2_norm_sq(rom: &ReducedModel) -> Result<f64> {
    if rom.order() == 0 {
        return Ok(0.0);
    }
    let (a, b) = rom.normalized()?;
    let eig = eigenvalues_dense(&a, None)?;
    let max_real = eig.max_real();
    if !(max_real < 0.0) {
        return Err(MorError::UnstableModel { max_real });
    }
    let p = solve_lyapunov_small(&a, &(&b * b.transpose()))?;
    Ok((&rom.cr * p * rom.cr.transpose()).trace().max(0.0))
}

/// H2 norm of the strictly proper part of `rom`.
pub fn h2_norm(rom: &ReducedModel) -> Result<f64> {
    Ok(h2_norm_sq(rom)?.sqrt())
}

/// Largest matrix-entry deviation between two models of the same shape,
/// relative to the largest entry of `reference`.
pub fn max_entry_deviation(rom: &ReducedModel, reference: &ReducedModel) -> Result<f64> {
    let pairs = [
        (&rom.er, &reference.er),
        (&rom.ar, &reference.ar),
        (&rom.br, &reference.br),
        (&rom.cr, &reference.cr),
        (&rom.dr, &reference.dr),
    ];
    let mut dev: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for (x, y) in pairs {
        if x.shape() != y.shape() {
            return Err(MorError::dims(format!("{:?} vs {:?}", x.shape(), y.shape())));
        }
        dev = dev.max(max_abs(&(x - y)));
        scale = scale.max(max_abs(y));
    }
    Ok(dev / scale.max(f64::MIN_POSITIVE))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::krylov::{
        input_krylov_basis, input_krylov_basis_orthonormal, output_krylov_basis, output_krylov_basis_orthonormal,
        shifts_to_sylvester, siso_points, TangentialPoint,
    };
    use crate::model::{
        build_transmission_line, random_stable_dae, scalar_blocks, RandomDaeOptions, TransmissionLineParams,
    };

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn tline(q: usize) -> SemiExplicitDae {
        build_transmission_line(&TransmissionLineParams::telephone_cable(q)).unwrap()
    }

    fn first_order() -> SemiExplicitDae {
        // x' = −x + u, y = x: G = 1/(s+1); the algebraic state is decoupled
        SemiExplicitDae::new(scalar_blocks(1.0, -1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 1.0, 0.0, 0.0)).unwrap()
    }

    fn tangential_gap(g: &CMat, gr: &CMat, dir: &[C64]) -> f64 {
        let d = CMat::from_column_slice(dir.len(), 1, dir);
        ((g - gr) * &d).norm() / (g * &d).norm().max(f64::MIN_POSITIVE)
    }

    #[test]
    fn scalar_pork_by_hand() {
        let dae = first_order();
        let d = shifts_to_sylvester(&[TangentialPoint::real(1.0, &[1.0])], Side::Input).unwrap();
        let v = input_krylov_basis(&dae, &d).unwrap();
        let rom = pork_from_basis(&dae, &v).unwrap();
        assert_eq!(rom.er, Mat::identity(1, 1));
        assert!((rom.br[(0, 0)] + 2.0).abs() < 1e-14);
        assert!((rom.ar[(0, 0)] + 1.0).abs() < 1e-14);
        // exact for a first-order system
        let g = dae.transfer_eval(c(0.0, 3.0)).unwrap();
        let gr = rom.transfer_eval(c(0.0, 3.0)).unwrap();
        assert!((g[(0, 0)] - gr[(0, 0)]).norm() < 1e-14);
    }

    #[test]
    fn h2_closed_forms() {
        let one = |v: f64| Mat::from_element(1, 1, v);
        let prov = || Provenance::new(Method::Pork, one(0.0));
        let rom = ReducedModel::new(one(1.0), one(-1.0), one(1.0), one(1.0), one(5.0), prov()).unwrap();
        assert!((h2_norm(&rom).unwrap() - 0.5f64.sqrt()).abs() < 1e-14);
        let (a, b) = (3.0, -2.5);
        let rom = ReducedModel::new(one(2.0), one(-2.0 * a), one(2.0 * b), one(1.0), one(0.0), prov()).unwrap();
        assert!((h2_norm(&rom).unwrap() - b.abs() / (2.0 * a).sqrt()).abs() < 1e-13);
        let rom = ReducedModel::new(one(1.0), one(0.5), one(1.0), one(1.0), one(0.0), prov()).unwrap();
        assert!(matches!(h2_norm(&rom), Err(MorError::UnstableModel { .. })));
    }

    #[test]
    fn h2_matches_quadrature() {
        let full = random_stable_dae(&RandomDaeOptions::new(6, 2).io(2, 2).strictly_proper(), 11).unwrap();
        let ode = full.underlying_ode();
        let rom = ReducedModel::new(
            ode.e1.clone(),
            ode.a1.clone(),
            ode.b1.clone(),
            ode.c1.clone(),
            ode.d1.clone(),
            Provenance::new(Method::Pork, Mat::zeros(2, 2)),
        )
        .unwrap();
        let h2 = h2_norm_sq(&rom).unwrap();
        // ∫_{-∞}^{∞} ‖G(iω)‖_F² dω / 2π with ω = tan θ
        let n = 20000;
        let mut acc = 0.0;
        for k in 0..n {
            let theta = -std::f64::consts::FRAC_PI_2 + (k as f64 + 0.5) * std::f64::consts::PI / n as f64;
            let w = theta.tan();
            let g = rom.strictly_proper().transfer_eval(c(0.0, w)).unwrap();
            acc += g.norm_squared() * (1.0 + w * w) * (std::f64::consts::PI / n as f64);
        }
        let quad = acc / (2.0 * std::f64::consts::PI);
        assert!((quad - h2).abs() < 1e-4 * h2, "{quad} vs {h2}");
    }

    #[test]
    fn corrected_projection_equals_ode_projection() {
        // q = 2 with the inductor tap: b22 ≠ 0, c22 ≠ 0 and D_imp ≠ 0
        let params = TransmissionLineParams::telephone_cable(2).with_tap(crate::model::OutputTap::FirstInductorVoltage);
        let dae = build_transmission_line(&params).unwrap();
        assert!(max_abs(&dae.implicit_feedthrough()) > 0.0);
        let pts = siso_points(&[c(1e6, 3e7)]);
        let v = input_krylov_basis(&dae, &shifts_to_sylvester(&pts, Side::Input).unwrap()).unwrap();
        let w = output_krylov_basis(&dae, &shifts_to_sylvester(&pts, Side::Output).unwrap()).unwrap();
        let rom = project_corrected(&dae, &v, &w).unwrap();
        let (v1, _) = dae.split_rows(&v.basis);
        let (w1, _) = dae.split_rows(&w.basis);
        let reference = project_ode(&dae.underlying_ode(), &v1, &w1).unwrap();
        for (x, y) in [
            (&rom.er, &reference.er),
            (&rom.ar, &reference.ar),
            (&rom.br, &reference.br),
            (&rom.cr, &reference.cr),
            (&rom.dr, &reference.dr),
        ] {
            assert!(max_abs(&(x - y)) <= 1e-10 * max_abs(y).max(1.0), "{x} vs {y}");
        }
        // Hermite interpolation on both sides
        for p in &pts {
            let g = dae.transfer_eval(p.shift).unwrap();
            let gr = rom.transfer_eval(p.shift).unwrap();
            assert!(tangential_gap(&g, &gr, &p.direction) < 1e-8);
            assert!(tangential_gap(&g.transpose(), &gr.transpose(), &p.direction) < 1e-8);
        }
    }

    #[test]
    fn no_feedthrough_is_plain_petrov_galerkin() {
        let dae = random_stable_dae(&RandomDaeOptions::new(8, 3).strictly_proper(), 5).unwrap();
        let pts = [TangentialPoint::real(0.5, &[1.0]), TangentialPoint::real(2.0, &[1.0])];
        let v = input_krylov_basis(&dae, &shifts_to_sylvester(&pts, Side::Input).unwrap()).unwrap();
        let w = output_krylov_basis(&dae, &shifts_to_sylvester(&pts, Side::Output).unwrap()).unwrap();
        let rom = project_corrected(&dae, &v, &w).unwrap();
        let sys = dae.descriptor();
        assert_eq!(rom.ar, w.basis.transpose() * sys.a.mul_dense(&v.basis));
        assert_eq!(rom.br, w.basis.tr_mul(&sys.b));
    }

    #[test]
    fn guard_rejects_input_side_on_tline() {
        let dae = tline(3);
        let d = shifts_to_sylvester(&siso_points(&[c(1e6, 5e7)]), Side::Input).unwrap();
        let v = input_krylov_basis_orthonormal(&dae, &d).unwrap();
        assert!(matches!(
            orthogonal_reduce(&dae, &v, false),
            Err(MorError::StructuralGuard(_))
        ));
        let rom = orthogonal_reduce(&dae, &v, true).unwrap();
        assert!(rom.provenance.unsafe_override);
        let (v1, _) = dae.split_rows(&v.basis);
        let reference = project_ode(&dae.underlying_ode(), &v1, &v1).unwrap();
        assert!(max_entry_deviation(&rom, &reference).unwrap() > 1e-6);
    }

    #[test]
    fn output_side_orthogonal_matches_ode_projection() {
        let dae = tline(3);
        let d = shifts_to_sylvester(&siso_points(&[c(1e6, 5e7), c(2e8, 0.0)]), Side::Output).unwrap();
        let w = output_krylov_basis_orthonormal(&dae, &d).unwrap();
        let rom = orthogonal_reduce(&dae, &w, false).unwrap();
        assert!(!rom.provenance.unsafe_override);
        let (w1, _) = dae.split_rows(&w.basis);
        let reference = project_ode(&dae.underlying_ode(), &w1, &w1).unwrap();
        assert!(max_entry_deviation(&rom, &reference).unwrap() < 1e-10);
    }

    #[test]
    fn b22_zero_input_side_matches_ode_projection() {
        let dae = random_stable_dae(&RandomDaeOptions::new(10, 4).io(2, 2).strictly_proper(), 8).unwrap();
        let pts = [
            TangentialPoint::real(0.3, &[1.0, -0.5]),
            TangentialPoint::real(1.5, &[0.2, 1.0]),
            TangentialPoint::real(4.0, &[1.0, 1.0]),
        ];
        let v = input_krylov_basis_orthonormal(&dae, &shifts_to_sylvester(&pts, Side::Input).unwrap()).unwrap();
        let rom = orthogonal_reduce(&dae, &v, false).unwrap();
        let (v1, _) = dae.split_rows(&v.basis);
        let reference = project_ode(&dae.underlying_ode(), &v1, &v1).unwrap();
        assert!(max_entry_deviation(&rom, &reference).unwrap() < 1e-10);
    }

    #[test]
    fn pork_mirrors_shifts_and_interpolates() {
        let dae = random_stable_dae(&RandomDaeOptions::new(12, 5).io(2, 3), 21).unwrap();
        let pts = vec![
            TangentialPoint::new(c(0.5, 2.0), vec![c(1.0, 0.5), c(0.0, -1.0)]),
            TangentialPoint::new(c(0.5, -2.0), vec![c(1.0, -0.5), c(0.0, 1.0)]),
            TangentialPoint::real(1.3, &[1.0, 2.0]),
        ];
        for side in [Side::Input, Side::Output] {
            let pts: Vec<TangentialPoint> = match side {
                Side::Input => pts.clone(),
                Side::Output => pts
                    .iter()
                    .map(|p| {
                        let mut dir = p.direction.clone();
                        dir.push(c(1.0, 0.0));
                        TangentialPoint::new(p.shift, dir)
                    })
                    .collect(),
            };
            let d = shifts_to_sylvester(&pts, side).unwrap();
            let rom = pork(&dae, &d).unwrap();
            let mut ev = eigenvalues_dense(&rom.ar, None).unwrap().finite;
            let mut want: Vec<C64> = pts.iter().map(|p| -p.shift).collect();
            let key = |z: &C64| (z.re, z.im);
            ev.sort_by(|x, y| key(x).partial_cmp(&key(y)).unwrap());
            want.sort_by(|x, y| key(x).partial_cmp(&key(y)).unwrap());
            for (x, y) in ev.iter().zip(&want) {
                assert!((x - y).norm() < 1e-9, "{x} vs {y}");
            }
            for p in &pts {
                let g = dae.transfer_eval(p.shift).unwrap();
                let gr = rom.transfer_eval(p.shift).unwrap();
                let gap = match side {
                    Side::Input => tangential_gap(&g, &gr, &p.direction),
                    Side::Output => tangential_gap(&g.transpose(), &gr.transpose(), &p.direction),
                };
                assert!(gap < 1e-8, "{side:?} {gap}");
            }
        }
    }

    #[test]
    fn pork_survives_shifts_far_below_the_spectrum() {
        // poles of the cable sit near 1e5..1e8, so s = 1 and s = 2 give nearly parallel columns
        let dae = tline(2);
        let d = shifts_to_sylvester(&siso_points(&[c(1.0, 0.0), c(2.0, 0.0)]), Side::Input).unwrap();
        let rom = pork(&dae, &d).unwrap();
        let mut ev: Vec<f64> = eigenvalues_dense(&rom.ar, None)
            .unwrap()
            .finite
            .iter()
            .map(|z| z.re)
            .collect();
        ev.sort_by(f64::total_cmp);
        assert!((ev[0] + 2.0).abs() < 1e-12 && (ev[1] + 1.0).abs() < 1e-12, "{ev:?}");
        for s in [c(1.0, 0.0), c(2.0, 0.0)] {
            let g = dae.transfer_eval(s).unwrap()[(0, 0)];
            let gr = rom.transfer_eval(s).unwrap()[(0, 0)];
            assert!((g - gr).norm() < 1e-8 * g.norm(), "{g} vs {gr}");
        }
    }

    #[test]
    fn pork_rejects_bad_shifts() {
        let dae = first_order();
        let d = shifts_to_sylvester(&[TangentialPoint::real(-1.0, &[1.0])], Side::Input).unwrap();
        assert!(matches!(
            pork(&dae, &d),
            Err(MorError::ShiftInClosedLeftHalfPlane { .. })
        ));
        let d = shifts_to_sylvester(&[TangentialPoint::real(0.0, &[1.0])], Side::Input).unwrap();
        assert!(matches!(
            pork(&dae, &d),
            Err(MorError::ShiftInClosedLeftHalfPlane { .. })
        ));
    }

    #[test]
    fn pork_transfer_function_ignores_direction_scaling() {
        let dae = random_stable_dae(&RandomDaeOptions::new(10, 4).io(2, 1), 4).unwrap();
        let make = |alpha: f64| {
            let pts = vec![
                TangentialPoint::real(0.8, &[alpha, 0.3 * alpha]),
                TangentialPoint::real(2.5, &[-alpha, alpha]),
            ];
            pork(&dae, &shifts_to_sylvester(&pts, Side::Input).unwrap()).unwrap()
        };
        let (r1, r2) = (make(1.0), make(7.5));
        for s in [c(0.0, 0.3), c(1.0, 4.0), c(0.1, -20.0)] {
            let g1 = r1.transfer_eval(s).unwrap();
            let g2 = r2.transfer_eval(s).unwrap();
            assert!((&g1 - &g2).norm() < 1e-9 * g1.norm());
        }
    }

    #[test]
    fn json_and_mtx_round_trip() {
        let dae = first_order();
        let d = shifts_to_sylvester(&[TangentialPoint::real(1.0, &[1.0])], Side::Input).unwrap();
        let rom = pork(&dae, &d).unwrap();
        let back = ReducedModel::from_json(&rom.to_json().unwrap()).unwrap();
        assert_eq!(back, rom);
        let dir = tempfile::tempdir().unwrap();
        let sidecar = rom.save_matrix_market(dir.path(), "rom").unwrap();
        assert!(sidecar.exists());
        let a = crate::model::read_mtx_file(&dir.path().join("rom.A.mtx")).unwrap();
        assert_eq!(a.to_dense(), rom.ar);
    }
}
