use std::ffi::CStr;
use std::path::Path;
use std::process::Command;
use std::ptr;

use msl_core::model::make_ground_truth;
use msl_core::sensing::SensingOperator;
use msl_ffi::*;

fn last_error() -> String {
    let p = msl_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn ground_truth_round_trip_is_row_major() {
    unsafe {
        let mut gt = ptr::null_mut();
        assert_eq!(msl_ground_truth_new(6, 4, 2, 9, &mut gt), MslStatus::Ok);
        let (mut n1, mut n2, mut r, mut kappa) = (0, 0, 0, 0.0);
        assert_eq!(
            msl_ground_truth_info(gt, &mut n1, &mut n2, &mut r, &mut kappa),
            MslStatus::Ok
        );
        assert_eq!((n1, n2, r), (6, 4, 2));
        assert!(kappa >= 1.0);

        let mut buf = vec![0.0; 24];
        assert_eq!(
            msl_ground_truth_matrix(gt, buf.as_mut_ptr(), buf.len()),
            MslStatus::Ok
        );
        let reference = make_ground_truth(6, 4, 2, 9).unwrap();
        for i in 0..6 {
            for j in 0..4 {
                assert_eq!(buf[i * 4 + j], reference.x[(i, j)]);
            }
        }
        msl_ground_truth_free(gt);
    }
}

#[test]
fn operator_matches_core_and_checks_lengths() {
    unsafe {
        let mut op = ptr::null_mut();
        assert_eq!(msl_operator_gaussian(5, 3, 7, 4, &mut op), MslStatus::Ok);
        assert_eq!(msl_operator_m(op), 7);
        let reference = SensingOperator::gaussian(5, 3, 7, 4).unwrap();

        let mat: Vec<f64> = (0..15).map(|i| f64::from(i) - 7.0).collect();
        let mut y = vec![0.0; 7];
        assert_eq!(
            msl_operator_apply(op, mat.as_ptr(), 15, y.as_mut_ptr(), 7),
            MslStatus::Ok
        );
        let expected = reference
            .apply(&nalgebra::DMatrix::from_row_slice(5, 3, &mat))
            .unwrap();
        assert_eq!(y, expected.as_slice());

        let mut back = vec![0.0; 15];
        assert_eq!(
            msl_operator_adjoint(op, y.as_ptr(), 7, back.as_mut_ptr(), 15),
            MslStatus::Ok
        );
        // <A(M), y> = <M, A*(y)>
        let lhs: f64 = y.iter().map(|v| v * v).sum();
        let rhs: f64 = mat.iter().zip(&back).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(1.0));

        assert_eq!(
            msl_operator_apply(op, mat.as_ptr(), 14, y.as_mut_ptr(), 7),
            MslStatus::ShapeMismatch
        );
        assert!(last_error().contains("mat"));
        assert_eq!(
            msl_operator_apply(op, ptr::null(), 15, y.as_mut_ptr(), 7),
            MslStatus::NullPointer
        );
        msl_operator_free(op);
    }
}

#[test]
fn population_operator_has_no_adjoint() {
    unsafe {
        let mut op = ptr::null_mut();
        assert_eq!(msl_operator_population(4, 4, &mut op), MslStatus::Ok);
        assert_eq!(msl_operator_m(op), 0);
        let mut out = vec![0.0; 16];
        assert_eq!(
            msl_operator_adjoint(op, ptr::null(), 0, out.as_mut_ptr(), 16),
            MslStatus::ModeMismatch
        );
        msl_operator_free(op);
    }
}

#[test]
fn invalid_arguments_leave_output_null() {
    unsafe {
        let mut gt = 1usize as *mut MslGroundTruth;
        assert_eq!(
            msl_ground_truth_new(4, 4, 9, 0, &mut gt),
            MslStatus::InvalidArgument
        );
        assert!(gt.is_null());
        assert!(!last_error().is_empty());
        assert_eq!(
            msl_ground_truth_new(4, 4, 1, 0, ptr::null_mut()),
            MslStatus::NullPointer
        );
        assert_eq!(msl_trajectory_len(ptr::null()), 0);
        msl_ground_truth_free(ptr::null_mut());
        msl_operator_free(ptr::null_mut());
        msl_trajectory_free(ptr::null_mut());
    }
}

#[test]
fn short_trajectory_through_the_c_api() {
    unsafe {
        let mut gt = ptr::null_mut();
        let mut op = ptr::null_mut();
        assert_eq!(msl_ground_truth_new(8, 6, 2, 1, &mut gt), MslStatus::Ok);
        assert_eq!(msl_operator_gaussian(8, 6, 60, 2, &mut op), MslStatus::Ok);
        let cfg = MslGdConfig {
            mu: 0.05,
            k: 3,
            alpha: 1e-3,
            max_iters: 40,
            record_every: 10,
            ..msl_gd_config_default()
        };
        let mut traj = ptr::null_mut();
        assert_eq!(msl_run_trajectory(gt, op, &cfg, &mut traj), MslStatus::Ok);
        assert_eq!(msl_trajectory_len(traj), 5);
        let (mut iters, mut reason) = (0, MslStopReason::TrainLoss);
        assert_eq!(
            msl_trajectory_summary(traj, &mut iters, &mut reason),
            MslStatus::Ok
        );
        assert_eq!((iters, reason), (40, MslStopReason::MaxIters));

        let mut rec = std::mem::zeroed::<MslRecord>();
        assert_eq!(msl_trajectory_record(traj, 4, &mut rec), MslStatus::Ok);
        assert_eq!(rec.iter, 40);
        assert!(rec.train_loss.is_finite());
        assert_eq!(
            msl_trajectory_record(traj, 5, &mut rec),
            MslStatus::OutOfRange
        );

        let (mut v, mut w) = (vec![0.0; 24], vec![0.0; 18]);
        assert_eq!(
            msl_trajectory_factors(traj, v.as_mut_ptr(), 24, w.as_mut_ptr(), 18),
            MslStatus::Ok
        );
        assert!(v.iter().any(|x| *x != 0.0));

        let bad = MslGdConfig { mu: -1.0, ..cfg };
        let mut none = ptr::null_mut();
        assert_eq!(
            msl_run_trajectory(gt, op, &bad, &mut none),
            MslStatus::InvalidArgument
        );
        assert!(last_error().contains("mu"));

        let huge = MslGdConfig {
            mu: 1e6,
            alpha: 1.0,
            ..cfg
        };
        assert_eq!(
            msl_run_trajectory(gt, op, &huge, &mut none),
            MslStatus::Divergence
        );

        msl_trajectory_free(traj);
        msl_operator_free(op);
        msl_ground_truth_free(gt);
    }
}

#[test]
fn version_is_a_c_string() {
    let v = unsafe { CStr::from_ptr(msl_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_every_export() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/msl.h");
    let text = std::fs::read_to_string(&header).unwrap();
    let src =
        std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("src/lib.rs")).unwrap();
    let exports: Vec<&str> = src
        .split("extern \"C\" fn ")
        .skip(1)
        .map(|s| s.split('(').next().unwrap())
        .collect();
    assert!(exports.len() >= 15);
    for name in exports {
        assert!(
            text.contains(&format!("{name}(")),
            "{name} missing from header"
        );
    }
    for ty in [
        "MslStatus",
        "MslGroundTruth",
        "MslOperator",
        "MslTrajectory",
        "MslRecord",
        "MSL_STATUS_OK",
    ] {
        assert!(text.contains(ty), "{ty} missing from header");
    }
}

// The header must compile as C when a compiler is around.
#[test]
fn header_compiles_as_c() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/msl.h");
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        format!(
            "#include \"{}\"\nint main(void) {{ MslGdConfig c = msl_gd_config_default(); return c.k == 10 ? MSL_STATUS_OK : 1; }}\n",
            header.display()
        ),
    )
    .unwrap();
    match Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only"])
        .arg(&src)
        .output()
    {
        Ok(out) => assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        ),
        Err(_) => eprintln!("no C compiler found; skipping"),
    }
}
