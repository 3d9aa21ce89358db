use daemor::adaptive::{cure_run, SparkOptions, StepReducer, StopCriterion};
use daemor::analysis::{compare, h2_error_direct, mirrored_pole_shifts};
use daemor::krylov::{output_krylov_basis_orthonormal, shifts_to_sylvester, siso_points};
use daemor::linalg::max_abs;
use daemor::model::{
    build_transmission_line, load_matrix_market, logspace, random_stable_dae, save_matrix_market, RandomDaeOptions,
    Side, TransferFunction, TransmissionLineParams,
};
use daemor::reduce::{orthogonal_reduce, ReducedModel};
use daemor::sdtransform::sd_transform;

#[test]
fn files_round_trip_then_reduce() {
    let dae = build_transmission_line(&TransmissionLineParams::telephone_cable(6)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let sidecar = save_matrix_market(&dae, dir.path(), "tline6").unwrap();
    let (back, _) = load_matrix_market(&sidecar).unwrap();
    assert_eq!(back.n_dyn(), dae.n_dyn());
    for w in [1e6, 1e8] {
        let s = daemor::linalg::C64::new(0.0, w);
        let (g, h) = (dae.transfer_eval(s).unwrap(), back.transfer_eval(s).unwrap());
        assert!((&g - &h).norm() <= 1e-12 * g.norm());
    }

    let shifts = mirrored_pole_shifts(&back, 6).unwrap();
    let w = output_krylov_basis_orthonormal(
        &back,
        &shifts_to_sylvester(&siso_points(&shifts), Side::Output).unwrap(),
    )
    .unwrap();
    let rom = orthogonal_reduce(&back, &w, false).unwrap();
    let stem_path = rom.save_matrix_market(dir.path(), "rom").unwrap();
    assert!(stem_path.exists());
    let json = dir.path().join("rom_model.json");
    rom.save_json(&json).unwrap();
    let again = ReducedModel::from_json(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(again.ar, rom.ar);

    let report = compare(&back, &[("w-based", &rom)], &logspace(5.0, 9.0, 40), true).unwrap();
    assert!(report.models[1].stable);
    let mut csv = Vec::new();
    report.write_csv(&mut csv).unwrap();
    assert!(String::from_utf8(csv).unwrap().contains("w-based,6,true"));
}

#[test]
fn transformed_system_reduces_with_certificate() {
    let dae = build_transmission_line(&TransmissionLineParams::telephone_cable(12)).unwrap();
    let (t, _) = sd_transform(&dae).unwrap();
    let shifts = mirrored_pole_shifts(&t, 8).unwrap();
    let w = output_krylov_basis_orthonormal(&t, &shifts_to_sylvester(&siso_points(&shifts), Side::Output).unwrap())
        .unwrap();
    let rom = orthogonal_reduce(&t, &w, false).unwrap();
    let d = daemor::analysis::rom_dissipativity(&rom);
    assert!(d.dissipative, "{d:?}");
}

#[test]
fn cure_spark_mimo_output_side() {
    let dae = random_stable_dae(&RandomDaeOptions::new(16, 6).io(2, 2).strictly_proper(), 42).unwrap();
    let (state, rom) = cure_run(
        &dae,
        Side::Output,
        &StepReducer::Spark(SparkOptions::default()),
        &StopCriterion::order(6),
    )
    .unwrap();
    assert_eq!(rom.order(), 6);
    assert_eq!(max_abs(&(&rom.dr - &dae.underlying_ode().d1)), 0.0);
    let errs: Vec<f64> = (1..=3)
        .map(|k| h2_error_direct(&dae, &state.prefix_rom(k)).unwrap())
        .collect();
    assert!(errs.windows(2).all(|w| w[1] <= w[0]), "{errs:?}");
    for w in [0.1, 1.0, 10.0] {
        assert!(state.factorization_residual(daemor::linalg::C64::new(0.0, w)).unwrap() < 1e-8);
    }
}
