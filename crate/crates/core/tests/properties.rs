use daemor::analysis::{h2_error_direct, interpolation_residuals, stability_check};
use daemor::krylov::{
    input_krylov_basis, output_krylov_basis, shifts_to_sylvester, underlying_residual, TangentialPoint,
};
use daemor::linalg::{max_abs, solve_lyapunov_small, symmetric_extremes, Mat, C64};
use daemor::model::{dissipative_full_a, random_stable_dae, RandomDaeOptions, Side, TransferFunction};
use daemor::reduce::{pork, project_corrected, project_ode, ReducedModel};
use daemor::sdtransform::{schur_complement, sd_transform};
use daemor::verify::{multiset_gap, random_points};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn config() -> ProptestConfig {
    ProptestConfig {
        cases: 24,
        ..ProptestConfig::default()
    }
}

fn system(seed: u64, n_dyn: usize, n_alg: usize, m: usize, p: usize) -> daemor::model::SemiExplicitDae {
    random_stable_dae(&RandomDaeOptions::new(n_dyn, n_alg).io(m, p), seed).unwrap()
}

fn points(seed: u64, count: usize, dim: usize) -> Vec<TangentialPoint> {
    random_points(&mut ChaCha8Rng::seed_from_u64(seed), count, dim, 1.0)
}

fn probe() -> [C64; 4] {
    [
        C64::new(0.0, 0.3),
        C64::new(0.0, 2.0),
        C64::new(1.0, 1.0),
        C64::new(0.1, -5.0),
    ]
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn pork_poles_are_mirrored_shifts(seed in 0u64..10_000, count in 1usize..5, input in any::<bool>()) {
        let dae = system(seed, 10, 4, 2, 2);
        let side = if input { Side::Input } else { Side::Output };
        let pts = points(seed, count, 2);
        let rom = pork(&dae, &shifts_to_sylvester(&pts, side).unwrap()).unwrap();
        let eig = daemor::linalg::eigenvalues_dense(&rom.ar, Some(&rom.er)).unwrap().finite;
        let want: Vec<C64> = pts.iter().map(|p| -p.shift).collect();
        prop_assert!(multiset_gap(&eig, &want) < 1e-9 * want.iter().map(|z| z.norm()).fold(1.0, f64::max));
        prop_assert!(stability_check(&rom).unwrap().stable);
    }

    #[test]
    fn pork_transfer_ignores_direction_scale(seed in 0u64..10_000, alpha in 0.01f64..100.0) {
        let dae = system(seed, 8, 3, 2, 1);
        let pts = points(seed, 3, 2);
        let scaled: Vec<TangentialPoint> = pts
            .iter()
            .map(|p| TangentialPoint::new(p.shift, p.direction.iter().map(|z| z * alpha).collect()))
            .collect();
        let a = pork(&dae, &shifts_to_sylvester(&pts, Side::Input).unwrap()).unwrap();
        let b = pork(&dae, &shifts_to_sylvester(&scaled, Side::Input).unwrap()).unwrap();
        for s in probe() {
            let (ga, gb) = (a.transfer_eval(s).unwrap(), b.transfer_eval(s).unwrap());
            prop_assert!((&ga - &gb).norm() < 1e-9 * ga.norm().max(1e-300));
        }
    }

    #[test]
    fn corrected_projection_is_ode_projection(seed in 0u64..10_000, count in 1usize..4) {
        let dae = system(seed, 9, 4, 2, 2);
        let pv = points(seed, count, 2);
        let pw = points(seed + 1, count, 2);
        let v = input_krylov_basis(&dae, &shifts_to_sylvester(&pv, Side::Input).unwrap()).unwrap();
        let w = output_krylov_basis(&dae, &shifts_to_sylvester(&pw, Side::Output).unwrap()).unwrap();
        let rom = project_corrected(&dae, &v, &w).unwrap();
        let (v1, _) = dae.split_rows(&v.basis);
        let (w1, _) = dae.split_rows(&w.basis);
        let reference = project_ode(&dae.underlying_ode(), &v1, &w1).unwrap();
        let scale = [&reference.er, &reference.ar, &reference.br, &reference.cr, &reference.dr]
            .iter()
            .map(|m| max_abs(m))
            .fold(0.0, f64::max);
        for (x, y) in [(&rom.er, &reference.er), (&rom.ar, &reference.ar), (&rom.br, &reference.br),
                       (&rom.cr, &reference.cr), (&rom.dr, &reference.dr)] {
            prop_assert!(max_abs(&(x - y)) < 1e-10 * scale);
        }
        let res = interpolation_residuals(&dae, &rom, &rom.provenance.interpolation).unwrap();
        prop_assert!(res.iter().all(|r| r.residual < 1e-8));
    }

    #[test]
    fn dae_bases_solve_ode_sylvester(seed in 0u64..10_000, count in 1usize..5) {
        let dae = system(seed, 8, 5, 1, 2);
        let v = input_krylov_basis(&dae, &shifts_to_sylvester(&points(seed, count, 1), Side::Input).unwrap()).unwrap();
        prop_assert!(underlying_residual(&dae, &v).1 < 1e-8);
    }

    #[test]
    fn schur_complement_keeps_dissipativity(seed in 0u64..10_000, n in 2usize..30, split in 0.0f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = dissipative_full_a(n, 1e-3, &mut rng);
        let n1 = 1 + ((n - 1) as f64 * split) as usize % (n - 1);
        prop_assert!(symmetric_extremes(&schur_complement(&a, n1).unwrap()).1 < 0.0);
    }

    #[test]
    fn sd_transform_keeps_transfer(seed in 0u64..10_000) {
        let opts = RandomDaeOptions::new(7, 3).io(2, 1).scrambled();
        let dae = random_stable_dae(&opts, seed).unwrap();
        let (t, rec) = sd_transform(&dae).unwrap();
        prop_assert!(rec.report_after.is_dissipative());
        for s in probe() {
            let (g, h) = (dae.transfer_eval(s).unwrap(), t.transfer_eval(s).unwrap());
            prop_assert!((&g - &h).norm() < 1e-9 * g.norm());
        }
    }

    #[test]
    fn lyapunov_residual_is_small(seed in 0u64..10_000, n in 1usize..12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = dissipative_full_a(n, 0.1, &mut rng);
        let q = Mat::identity(n, n);
        let x = solve_lyapunov_small(&a, &q).unwrap();
        let r = &a * &x + &x * a.transpose() + &q;
        prop_assert!(max_abs(&r) < 1e-10 * (max_abs(&a) * max_abs(&x)).max(1.0));
        prop_assert!(max_abs(&(&x - x.transpose())) < 1e-12 * max_abs(&x));
    }

    #[test]
    fn h2_error_is_even_in_cr(seed in 0u64..10_000) {
        let dae = random_stable_dae(&RandomDaeOptions::new(6, 2).strictly_proper(), seed).unwrap();
        let mut rom = ReducedModel::empty(1, 1, daemor::reduce::Method::Pork);
        rom.er = Mat::identity(2, 2);
        rom.ar = -Mat::identity(2, 2);
        rom.br = Mat::zeros(2, 1);
        rom.cr = Mat::from_row_slice(1, 2, &[0.5, -1.5]);
        let a = h2_error_direct(&dae, &rom).unwrap();
        rom.cr = -rom.cr.clone();
        prop_assert_eq!(a, h2_error_direct(&dae, &rom).unwrap());
    }

    #[test]
    fn rom_json_round_trip(seed in 0u64..10_000) {
        let dae = system(seed, 6, 2, 1, 1);
        let rom = pork(&dae, &shifts_to_sylvester(&points(seed, 2, 1), Side::Input).unwrap()).unwrap();
        let back = ReducedModel::from_json(&rom.to_json().unwrap()).unwrap();
        prop_assert_eq!(back.ar, rom.ar);
        prop_assert_eq!(back.cr, rom.cr);
        prop_assert_eq!(back.provenance.interpolation, rom.provenance.interpolation);
    }
}
