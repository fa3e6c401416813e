//! Property tests for the algebraic invariants of the operator, the lift and
//! the trajectory diagnostics.

use msl_core::diagnostics::{compute_record, decompose, symmetry_gap, DiagnosticsOptions};
use msl_core::linalg::{frob_inner, orthonormality_defect, spectral_norm};
use msl_core::model::{init_random, lift, make_ground_truth, sym_embed, FactorPair};
use msl_core::optimizer::{evaluate, gd_step, run_trajectory, GdConfig, Target};
use msl_core::rng::{gaussian_matrix, rng_from_seed};
use msl_core::sensing::{Precision, SensingOperator};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn dims() -> impl Strategy<Value = (usize, usize, usize)> {
    (1usize..9, 1usize..9, 1usize..30)
}

fn random_pair(n1: usize, n2: usize, k: usize, seed: u64) -> FactorPair {
    let mut rng = rng_from_seed(seed);
    FactorPair::new(
        gaussian_matrix(&mut rng, n1, k, 1.0),
        gaussian_matrix(&mut rng, n2, k, 1.0),
    )
    .unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / (1.0 + b.abs())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn adjointness((n1, n2, m) in dims(), seed in any::<u64>(), single in any::<bool>()) {
        let precision = if single { Precision::Single } else { Precision::Double };
        let op = SensingOperator::gaussian_with(n1, n2, m, seed, precision).unwrap();
        let mut rng = rng_from_seed(seed ^ 1);
        let mat = gaussian_matrix(&mut rng, n1, n2, 1.0);
        let y = DVector::from_column_slice(gaussian_matrix(&mut rng, m, 1, 1.0).as_slice());
        let lhs = op.apply(&mat).unwrap().dot(&y);
        let rhs = frob_inner(&mat, &op.adjoint(&y).unwrap());
        prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + rhs.abs()));
    }

    #[test]
    fn symmetrized_measurements_match((n1, n2, m) in dims(), k in 1usize..5, seed in any::<u64>()) {
        let op = SensingOperator::gaussian(n1, n2, m, seed).unwrap();
        let fp = random_pair(n1, n2, k, seed.wrapping_add(7));
        let l = lift(&fp);
        let s = &l.z * l.z.transpose() - &l.z_tilde * l.z_tilde.transpose();
        let lhs = op.symmetrized_apply(&s).unwrap() * std::f64::consts::FRAC_1_SQRT_2;
        let rhs = op.apply(&fp.product()).unwrap();
        prop_assert!((&lhs - &rhs).norm() <= 1e-12 * (1.0 + rhs.norm()));
    }

    #[test]
    fn linearity((n1, n2, m) in dims(), seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let op = SensingOperator::gaussian(n1, n2, m, seed).unwrap();
        let mut rng = rng_from_seed(seed ^ 2);
        let (x1, x2) = (gaussian_matrix(&mut rng, n1, n2, 1.0), gaussian_matrix(&mut rng, n1, n2, 1.0));
        let combined = op.apply(&(&x1 * a + &x2 * b)).unwrap();
        let separate = op.apply(&x1).unwrap() * a + op.apply(&x2).unwrap() * b;
        prop_assert!((&combined - &separate).amax() <= 1e-12 * (1.0 + separate.amax()));
        let y1 = DVector::from_column_slice(gaussian_matrix(&mut rng, m, 1, 1.0).as_slice());
        let y2 = DVector::from_column_slice(gaussian_matrix(&mut rng, m, 1, 1.0).as_slice());
        let combined = op.adjoint(&(&y1 * a + &y2 * b)).unwrap();
        let separate = op.adjoint(&y1).unwrap() * a + op.adjoint(&y2).unwrap() * b;
        prop_assert!((&combined - &separate).amax() <= 1e-12 * (1.0 + separate.amax()));
    }

    #[test]
    fn operators_are_deterministic((n1, n2, m) in dims(), seed in any::<u64>()) {
        let a = SensingOperator::gaussian(n1, n2, m, seed).unwrap();
        let b = SensingOperator::gaussian(n1, n2, m, seed).unwrap();
        prop_assert_eq!(a.entries(), b.entries());
    }

    #[test]
    fn ground_truth_bases(n1 in 1usize..12, n2 in 1usize..12, r_frac in 0.0f64..1.0, seed in any::<u64>()) {
        let r = 1 + ((n1.min(n2) - 1) as f64 * r_frac) as usize;
        let gt = make_ground_truth(n1, n2, r, seed).unwrap();
        let rebuilt = &gt.p_x * DMatrix::from_diagonal(&gt.sigma_x) * gt.q_x.transpose();
        prop_assert!((&rebuilt - &gt.x).amax() <= 1e-10);
        let lt_perp = gt.l_tilde_x_perp();
        for basis in [&gt.l_x, &gt.l_tilde_x, &gt.l_x_perp, &lt_perp] {
            prop_assert!(orthonormality_defect(basis) <= 1e-10);
        }
        prop_assert!(gt.l_x.tr_mul(&gt.l_tilde_x).amax() <= 1e-10);
        prop_assert!(gt.l_x.tr_mul(&gt.l_x_perp).amax() <= 1e-10);
        prop_assert!(gt.l_tilde_x.tr_mul(&lt_perp).amax() <= 1e-10);
        prop_assert_eq!(gt.l_x.ncols() + gt.l_x_perp.ncols(), n1 + n2);
    }

    #[test]
    fn lift_identities(n1 in 1usize..10, n2 in 1usize..10, k in 1usize..6, seed in any::<u64>()) {
        let fp = random_pair(n1, n2, k, seed);
        let l = lift(&fp);
        prop_assert!((spectral_norm(&l.z) - spectral_norm(&l.z_tilde)).abs() <= 1e-10 * (1.0 + spectral_norm(&l.z)));
        let imb = spectral_norm(&fp.imbalance());
        prop_assert!((imb - 2.0 * spectral_norm(&l.imbalance())).abs() <= 1e-10 * (1.0 + imb));
        let s = &l.z * l.z.transpose() - &l.z_tilde * l.z_tilde.transpose();
        prop_assert!((&s - sym_embed(&fp.product())).amax() <= 1e-10 * (1.0 + s.amax()));
        prop_assert!((&l.unlift().v - &fp.v).amax() <= 1e-14 * (1.0 + fp.v.amax()));
    }

    #[test]
    fn perp_basis_annihilates_and_norms_agree(k in 1usize..8, seed in any::<u64>(), scale in 1e-4f64..2.0) {
        let gt = make_ground_truth(9, 7, 2, seed).unwrap();
        let fp = init_random(9, 7, k, scale, seed ^ 3).unwrap();
        let l = lift(&fp);
        let dec = decompose(&gt, &l.z);
        let lz = gt.l_x.tr_mul(&l.z);
        prop_assert!((&lz * &dec.q_perp).amax() <= 1e-10 * (1.0 + lz.amax()));
        prop_assert!(symmetry_gap(&gt, &fp) <= 1e-10 * (1.0 + spectral_norm(&l.z)));
        if dec.full_rank {
            // L~_perp^T Z~ Q = L_perp^T Z Q
            let lhs = gt.l_tilde_x_perp().tr_mul(&l.z_tilde) * &dec.q;
            let rhs = gt.l_x_perp.tr_mul(&l.z) * &dec.q;
            prop_assert!((&lhs - &rhs).amax() <= 1e-10 * (1.0 + rhs.amax()));
        }
    }

    #[test]
    fn records_satisfy_forced_identities(k in 1usize..6, seed in any::<u64>(), scale in 1e-3f64..1.0) {
        let gt = make_ground_truth(7, 5, 2, seed).unwrap();
        let op = SensingOperator::gaussian(7, 5, 40, seed ^ 5).unwrap();
        let y = op.apply(&gt.x).unwrap();
        let fp = init_random(7, 5, k, scale, seed ^ 9).unwrap();
        let rec = compute_record(&gt, &op, Target::Measurements(&y), &fp, 0, true).unwrap();
        prop_assert!((rec.vw_imbalance - 2.0 * rec.imbalance_norm).abs() <= 1e-10 * (1.0 + rec.vw_imbalance));
        prop_assert!(rec.delta_norm.is_some());
        let loss = evaluate(&op, Target::Measurements(&y), &fp).unwrap().loss;
        prop_assert!(rel(rec.train_loss, loss) <= 1e-14);
    }

    #[test]
    fn symmetrized_update_equivalence(k in 1usize..5, seed in any::<u64>(), mu in 1e-3f64..0.2) {
        let gt = make_ground_truth(6, 5, 2, seed).unwrap();
        let op = SensingOperator::gaussian(6, 5, 50, seed ^ 11).unwrap();
        let y = op.apply(&gt.x).unwrap();
        let fp = init_random(6, 5, k, 0.3, seed ^ 13).unwrap();
        let next = lift(&gd_step(&op, Target::Measurements(&y), &fp, mu).unwrap());

        // Z' = Z + mu B*B(sym X - Z Z^T + Z~ Z~^T) Z, using B*B(sym M) = sym(A*A M).
        let l = lift(&fp);
        let bb = sym_embed(&op.normal_map(&(&gt.x - fp.product())).unwrap());
        let z = &l.z + &bb * &l.z * mu;
        let z_tilde = &l.z_tilde - &bb * &l.z_tilde * mu;
        prop_assert!((&next.z - &z).amax() <= 1e-12 * (1.0 + z.amax()));
        prop_assert!((&next.z_tilde - &z_tilde).amax() <= 1e-12 * (1.0 + z_tilde.amax()));
    }

    #[test]
    fn gradient_matches_central_differences(seed in any::<u64>(), population in any::<bool>()) {
        let gt = make_ground_truth(6, 4, 2, seed).unwrap();
        let op = if population {
            SensingOperator::population(6, 4).unwrap()
        } else {
            SensingOperator::gaussian(6, 4, 30, seed ^ 17).unwrap()
        };
        let y;
        let target = if population {
            Target::GroundTruth(&gt)
        } else {
            y = op.apply(&gt.x).unwrap();
            Target::Measurements(&y)
        };
        let fp = init_random(6, 4, 3, 0.5, seed ^ 19).unwrap();
        let eval = evaluate(&op, target, &fp).unwrap();
        let (gv, gw) = eval.gradient(&fp);
        let mut rng = rng_from_seed(seed ^ 23);
        let h = 1e-5;
        let dv = gaussian_matrix(&mut rng, 6, 3, 1.0);
        let dw = gaussian_matrix(&mut rng, 4, 3, 1.0);
        let at = |s: f64| {
            let p = FactorPair::new(&fp.v + &dv * s, &fp.w + &dw * s).unwrap();
            evaluate(&op, target, &p).unwrap().loss
        };
        let fd = (at(h) - at(-h)) / (2.0 * h);
        let analytic = frob_inner(&gv, &dv) + frob_inner(&gw, &dw);
        prop_assert!((fd - analytic).abs() <= 1e-5 * analytic.abs().max(1e-3), "fd {} analytic {}", fd, analytic);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn trajectories_are_reproducible(seed in any::<u64>()) {
        let gt = make_ground_truth(8, 6, 2, seed).unwrap();
        let op = SensingOperator::gaussian(8, 6, 60, seed ^ 29).unwrap();
        let cfg = GdConfig {
            mu: 0.05,
            alpha: 1e-3,
            k: 4,
            max_iters: 200,
            record_every: 20,
            stop_train_loss: None,
            stop_rel_test_error: None,
            seed: seed ^ 31,
        };
        let opts = DiagnosticsOptions::default();
        let a = run_trajectory(&gt, &op, &cfg, &opts).unwrap();
        let b = run_trajectory(&gt, &op, &cfg, &opts).unwrap();
        prop_assert_eq!(a.records, b.records);
    }
}
