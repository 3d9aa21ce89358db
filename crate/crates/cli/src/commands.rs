//! The pipelines behind each subcommand.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use daemor::adaptive::{cure_run, StepReducer, StopCriterion};
use daemor::analysis::{compare, mirrored_pole_shifts, spectral_band, stability_check, ComparisonReport};
use daemor::krylov::{
    input_krylov_basis_orthonormal, output_krylov_basis_orthonormal, shifts_to_sylvester, KrylovBasis, TangentialPoint,
};
use daemor::linalg::C64;
use daemor::model::{frequency_response, save_matrix_market, SemiExplicitDae, Side};
use daemor::reduce::{orthogonal_reduce, pork, project_corrected, ReducedModel};
use daemor::sdtransform::sd_transform;
use daemor::verify::{run_all, VerifyOptions};
use serde::Serialize;

use crate::config::{FrequencyGrid, MethodName, ModelSource, RunConfig};

const DEFAULT_POINTS: usize = 200;
// dense H2 error systems beyond this order are skipped
const H2_MAX_ORDER: usize = 2000;

pub fn format_complex(z: C64) -> String {
    if z.im == 0.0 {
        format!("{:e}", z.re)
    } else {
        format!("{:e}{:+e}i", z.re, z.im)
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

/// Writes the model files and returns the sidecar path.
pub fn cmd_generate(source: &ModelSource, seed: u64, out: &Path, stem: &str) -> Result<PathBuf> {
    let dae = source.load(seed)?;
    let report = dae.validate();
    if !report.is_valid() {
        bail!("generated model is not semi-explicit index-1: {:?}", report.messages);
    }
    let sidecar = save_matrix_market(&dae, out, stem)?;
    write_json(
        &out.join(format!("{stem}.validation.json")),
        &serde_json::json!({ "source": source, "seed": seed, "validation": report }),
    )?;
    println!(
        "N={} n_dyn={} n_alg={} inputs={} outputs={}",
        dae.order(),
        report.n_dyn,
        report.n_alg,
        report.inputs,
        report.outputs
    );
    println!(
        "b22_zero={} c22_zero={} symmetry_triple={} e11_factorizes={} a22_factorizes={}",
        report.b22_zero, report.c22_zero, report.symmetry_triple, report.e11_factorizes, report.a22_factorizes
    );
    println!("wrote {}", sidecar.display());
    Ok(sidecar)
}

/// Unit-direction points (all-ones direction for MIMO) closed under conjugation.
pub fn points_for(shifts: &[C64], dim: usize) -> Vec<TangentialPoint> {
    let dir = vec![C64::new(1.0 / (dim as f64).sqrt(), 0.0); dim];
    let mut out = Vec::new();
    for &s in shifts {
        out.push(TangentialPoint::new(s, dir.clone()));
        if s.im != 0.0 && !shifts.contains(&s.conj()) {
            out.push(TangentialPoint::new(s.conj(), dir.clone()));
        }
    }
    out
}

/// One CURE step per real point or conjugate pair.
fn pork_steps(points: &[TangentialPoint]) -> Result<Vec<Vec<TangentialPoint>>> {
    let mut left: Vec<TangentialPoint> = points.to_vec();
    let mut steps = Vec::new();
    while !left.is_empty() {
        let p = left.remove(0);
        if p.shift.im == 0.0 {
            steps.push(vec![p]);
            continue;
        }
        let Some(k) = left.iter().position(|q| q.shift == p.shift.conj()) else {
            bail!("shift {} has no conjugate partner", format_complex(p.shift));
        };
        let q = left.remove(k);
        steps.push(vec![p, q]);
    }
    Ok(steps)
}

fn checked(basis: KrylovBasis) -> Result<KrylovBasis> {
    if !basis.deflated.is_empty() {
        bail!(
            "Krylov basis deflated columns {:?}: the shifts are numerically redundant",
            basis.deflated
        );
    }
    Ok(basis)
}

fn default_grid(dae: &SemiExplicitDae) -> Result<FrequencyGrid> {
    let (lo, hi) = spectral_band(dae).context("deriving a default frequency grid; pass one explicitly")?;
    Ok(FrequencyGrid {
        omega_min: lo * 1e-3,
        omega_max: hi,
        points: DEFAULT_POINTS,
    })
}

/// Resolves defaults in `cfg`, runs the pipeline and writes every artifact
/// into the output directory.
pub fn cmd_reduce(mut cfg: RunConfig) -> Result<()> {
    let source = cfg.model.clone().context("no model given")?;
    let method = cfg.method.context("no method given")?;
    let out = cfg.out_dir.clone().context("no output directory given")?;
    let model = source.load(cfg.seed)?;
    let validation = model.validate();
    if !validation.is_valid() {
        bail!("model is not semi-explicit index-1: {:?}", validation.messages);
    }
    std::fs::create_dir_all(&out)?;

    let work = if cfg.sd_transform {
        let (t, record) = sd_transform(&model)?;
        write_json(&out.join("transform.json"), &record)?;
        t
    } else {
        model.clone()
    };
    let side = cfg.side.unwrap_or(Side::Input);

    let shifts = match cfg.parsed_shifts()? {
        Some(s) => Some(s),
        None if method.needs_shifts() => {
            let order = cfg.order.context("give --shifts or --order")?;
            Some(mirrored_pole_shifts(&work, order)?)
        }
        None => None,
    };
    if let Some(s) = &shifts {
        cfg.shifts = Some(s.iter().map(|&z| format_complex(z)).collect());
    }
    let (p, m) = (work.outputs(), work.inputs());
    let pts = |side: Side| {
        points_for(
            shifts.as_deref().unwrap_or(&[]),
            if side == Side::Input { m } else { p },
        )
    };

    let mut cure_log = None;
    let rom = match method {
        MethodName::OrthogonalV => {
            let data = shifts_to_sylvester(&pts(Side::Input), Side::Input)?;
            orthogonal_reduce(
                &work,
                &checked(input_krylov_basis_orthonormal(&work, &data)?)?,
                cfg.unsafe_orthogonal,
            )?
        }
        MethodName::OrthogonalW => {
            let data = shifts_to_sylvester(&pts(Side::Output), Side::Output)?;
            orthogonal_reduce(
                &work,
                &checked(output_krylov_basis_orthonormal(&work, &data)?)?,
                cfg.unsafe_orthogonal,
            )?
        }
        MethodName::TwoSidedCorrected => {
            let v = input_krylov_basis_orthonormal(&work, &shifts_to_sylvester(&pts(Side::Input), Side::Input)?)?;
            let w = output_krylov_basis_orthonormal(&work, &shifts_to_sylvester(&pts(Side::Output), Side::Output)?)?;
            project_corrected(&work, &checked(v)?, &checked(w)?)?
        }
        MethodName::Pork => pork(&work, &shifts_to_sylvester(&pts(side), side)?)?,
        MethodName::CureSpark => {
            let order = cfg.order.context("cure-spark needs --order")?;
            if order == 0 || order % 2 == 1 {
                bail!("cure-spark builds order-2 steps; --order must be even and positive");
            }
            let opts = cfg.spark.clone().unwrap_or_default();
            cfg.spark = Some(opts.clone());
            let (state, rom) = cure_run(&work, side, &StepReducer::Spark(opts), &StopCriterion::order(order))?;
            cure_log = Some(state);
            rom
        }
        MethodName::CurePork => {
            let steps = pork_steps(&pts(side))?;
            let stop = StopCriterion {
                target_order: None,
                rel_contribution: None,
                max_steps: steps.len(),
            };
            let (state, rom) = cure_run(&work, side, &StepReducer::Pork(steps), &stop)?;
            cure_log = Some(state);
            rom
        }
    };
    cfg.side = Some(side);
    cfg.order = Some(rom.order());

    let grid = match cfg.grid {
        Some(g) => g,
        None => default_grid(&model)?,
    };
    cfg.grid = Some(grid);
    let omegas = grid.omegas()?;
    let name = serde_json::to_value(method)?.as_str().unwrap_or("rom").to_string();
    let report = compare(&model, &[(&name, &rom)], &omegas, model.order() <= H2_MAX_ORDER)?;
    let spectrum = stability_check(&rom)?.spectrum;

    write_json(&out.join("config.json"), &cfg)?;
    rom.save_json(&out.join("rom_model.json"))?;
    rom.save_matrix_market(&out, "rom")?;
    std::fs::write(out.join("report.json"), report.to_json()? + "\n")?;
    report.write_csv(BufWriter::new(File::create(out.join("report.csv"))?))?;
    write_json(&out.join("spectrum.json"), &spectrum)?;
    let fom = frequency_response(&model, &omegas)?;
    let red = frequency_response(&rom, &omegas)?;
    fom.save(&out.join("freq_fom"))?;
    red.save(&out.join("freq_rom"))?;
    fom.difference(&red)?.save(&out.join("freq_error"))?;
    if let Some(state) = &cure_log {
        state.write_log(&mut BufWriter::new(File::create(out.join("cure_log.jsonl"))?))?;
    }

    let rec = &report.models[1];
    println!("method={name} order={} seed={}", rom.order(), cfg.seed);
    println!(
        "stable={} max_real_eig={:e} dissipative={}",
        rec.stable, rec.max_real_eig, rec.dissipative
    );
    if let Some(e) = rec.max_rel_freq_error {
        println!("max_rel_freq_error={e:e}");
    }
    if let Some(e) = rec.h2_error {
        println!("h2_error={e:e}");
    }
    let eig: Vec<String> = spectrum.iter().map(|&z| format_complex(z)).collect();
    println!("eig=[{}]", eig.join(", "));
    println!("wrote {}", out.display());
    Ok(())
}

pub enum BodeTarget {
    Model(SemiExplicitDae),
    Rom(ReducedModel),
}

pub fn cmd_bode(target: &BodeTarget, grid: Option<FrequencyGrid>, stem: &Path) -> Result<()> {
    let grid = match (grid, target) {
        (Some(g), _) => g,
        (None, BodeTarget::Model(dae)) => default_grid(dae)?,
        (None, BodeTarget::Rom(_)) => bail!("a ROM needs an explicit frequency grid"),
    };
    let omegas = grid.omegas()?;
    let resp = match target {
        BodeTarget::Model(dae) => frequency_response(dae, &omegas)?,
        BodeTarget::Rom(rom) => frequency_response(rom, &omegas)?,
    };
    if let Some(dir) = stem.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    resp.save(stem)?;
    println!("points={} failed={}", omegas.len(), resp.failed_points());
    println!("wrote {}.csv and {}_bode.csv", stem.display(), stem.display());
    Ok(())
}

pub fn cmd_compare(
    model: &SemiExplicitDae,
    roms: &[(String, ReducedModel)],
    grid: Option<FrequencyGrid>,
    with_h2: bool,
    out: &Path,
) -> Result<ComparisonReport> {
    let grid = match grid {
        Some(g) => g,
        None => default_grid(model)?,
    };
    let named: Vec<(&str, &ReducedModel)> = roms.iter().map(|(n, r)| (n.as_str(), r)).collect();
    let report = compare(model, &named, &grid.omegas()?, with_h2 && model.order() <= H2_MAX_ORDER)?;
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("report.json"), report.to_json()? + "\n")?;
    report.write_csv(BufWriter::new(File::create(out.join("report.csv"))?))?;
    report.write_csv(std::io::stdout())?;
    Ok(report)
}

/// Returns whether the suite passed.
pub fn cmd_verify(opts: &VerifyOptions, json: Option<&Path>) -> Result<bool> {
    let report = run_all(opts);
    for c in &report.checks {
        println!("{}", c.line());
    }
    if let Some(path) = json {
        std::fs::write(path, report.to_json()? + "\n")?;
    }
    let ok = report.passed();
    println!("verify: {}", if ok { "PASS" } else { "FAIL" });
    Ok(ok)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn steps_pair_conjugates_wherever_they_are() {
        let pts = points_for(&[C64::new(1.0, 2.0), C64::new(3.0, 0.0), C64::new(1.0, -2.0)], 1);
        let steps = pork_steps(&pts).unwrap();
        assert_eq!(steps.iter().map(|s| s.len()).collect::<Vec<_>>(), vec![2, 1]);
        assert!(pork_steps(&[TangentialPoint::siso(C64::new(1.0, 1.0))]).is_err());
    }

    #[test]
    fn mimo_points_use_unit_direction() {
        let pts = points_for(&[C64::new(1.0, 1.0)], 4);
        assert_eq!(pts.len(), 2);
        let norm: f64 = pts[0].direction.iter().map(|z| z.norm_sqr()).sum();
        assert!((norm - 1.0).abs() < 1e-15);
    }

    #[test]
    fn complex_format_parses_back() {
        for z in [C64::new(1e8, -3.5e8), C64::new(2.0, 0.0), C64::new(-1.0, 1e-3)] {
            assert_eq!(crate::config::parse_complex(&format_complex(z)).unwrap(), z);
        }
    }
}
