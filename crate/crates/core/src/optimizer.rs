//! Factorized loss, gradients and the gradient descent driver.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::diagnostics::{record_from_eval, DiagnosticsOptions, DiagnosticsRecord};
use crate::error::{Error, Result};
use crate::model::{init_random, FactorPair, GroundTruth};
use crate::sensing::SensingOperator;

/// What the loss is measured against.
///
/// Empirical operators need the measurement vector, the population operator
/// needs the ground truth itself.
#[derive(Debug, Clone, Copy)]
pub enum Target<'a> {
    Measurements(&'a DVector<f64>),
    GroundTruth(&'a GroundTruth),
}

/// Everything one pass over the operator yields at the current iterate.
#[derive(Debug, Clone)]
pub struct StepEval {
    pub loss: f64,
    /// `VW^T`.
    pub product: DMatrix<f64>,
    /// `A*A(VW^T) - A*(y)`, or `VW^T - X` in population mode.
    pub back: DMatrix<f64>,
}

impl StepEval {
    pub fn gradient(&self, fp: &FactorPair) -> (DMatrix<f64>, DMatrix<f64>) {
        (&self.back * &fp.w, self.back.tr_mul(&fp.v))
    }
}

pub fn evaluate(op: &SensingOperator, target: Target<'_>, fp: &FactorPair) -> Result<StepEval> {
    let (n1, n2) = (op.n1(), op.n2());
    if fp.v.nrows() != n1 || fp.w.nrows() != n2 || fp.v.ncols() != fp.w.ncols() {
        return Err(Error::ShapeMismatch {
            context: "factor pair",
            expected: format!("V: {n1}xk, W: {n2}xk"),
            actual: format!(
                "V: {}x{}, W: {}x{}",
                fp.v.nrows(),
                fp.v.ncols(),
                fp.w.nrows(),
                fp.w.ncols()
            ),
        });
    }
    let product = fp.product();
    match (op.is_population(), target) {
        (false, Target::Measurements(y)) => {
            if y.len() != op.m() {
                return Err(Error::shape("measurements", (op.m(), 1), (y.len(), 1)));
            }
            let (residual, back) = op.residual_and_backprojection(&product, y);
            Ok(StepEval {
                loss: 0.5 * residual.norm_squared(),
                product,
                back,
            })
        }
        (true, Target::GroundTruth(gt)) => {
            if gt.x.shape() != (n1, n2) {
                return Err(Error::shape("ground truth", (n1, n2), gt.x.shape()));
            }
            let back = &product - &gt.x;
            Ok(StepEval {
                loss: 0.5 * back.norm_squared(),
                product,
                back,
            })
        }
        (false, Target::GroundTruth(_)) => Err(Error::ModeMismatch(
            "an empirical operator needs measurements, not the ground truth",
        )),
        (true, Target::Measurements(_)) => Err(Error::ModeMismatch(
            "a population operator needs the ground truth, not measurements",
        )),
    }
}

/// `(1/2) ||y - A(VW^T)||^2`, or `(1/2) ||X - VW^T||_F^2` in population mode.
pub fn loss(op: &SensingOperator, target: Target<'_>, fp: &FactorPair) -> Result<f64> {
    Ok(evaluate(op, target, fp)?.loss)
}

/// `(dV, dW) = (G W, G^T V)` with `G = A*A(VW^T) - A*(y)`.
pub fn gradient(
    op: &SensingOperator,
    target: Target<'_>,
    fp: &FactorPair,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    Ok(evaluate(op, target, fp)?.gradient(fp))
}

/// Simultaneous update of both factors from the same iterate.
pub fn gd_step(
    op: &SensingOperator,
    target: Target<'_>,
    fp: &FactorPair,
    mu: f64,
) -> Result<FactorPair> {
    if !(mu >= 0.0) || !mu.is_finite() {
        return Err(Error::param(
            "mu",
            format!("must be finite and >= 0, got {mu}"),
        ));
    }
    let eval = evaluate(op, target, fp)?;
    Ok(step_from_eval(fp, &eval, mu))
}

pub(crate) fn step_from_eval(fp: &FactorPair, eval: &StepEval, mu: f64) -> FactorPair {
    let (dv, dw) = eval.gradient(fp);
    FactorPair {
        v: &fp.v - dv * mu,
        w: &fp.w - dw * mu,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GdConfig {
    /// Absolute step size.
    pub mu: f64,
    pub alpha: f64,
    pub k: usize,
    pub max_iters: usize,
    pub record_every: usize,
    pub stop_train_loss: Option<f64>,
    pub stop_rel_test_error: Option<f64>,
    /// Seed of the initialization stream.
    pub seed: u64,
}

/// Default training-loss stopping threshold.
pub const DEFAULT_STOP_TRAIN_LOSS: f64 = 0.5e-9;

impl GdConfig {
    /// Record stride of 1 for runs under 2000 iterations, 10 otherwise.
    pub fn default_record_every(max_iters: usize) -> usize {
        if max_iters < 2000 {
            1
        } else {
            10
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu > 0.0) || !self.mu.is_finite() {
            return Err(Error::param(
                "mu",
                format!("must be finite and > 0, got {}", self.mu),
            ));
        }
        if !(self.alpha >= 0.0) || !self.alpha.is_finite() {
            return Err(Error::param(
                "alpha",
                format!("must be finite and >= 0, got {}", self.alpha),
            ));
        }
        if self.k == 0 {
            return Err(Error::param("k", "must be at least 1"));
        }
        if self.max_iters == 0 {
            return Err(Error::param("max_iters", "must be at least 1"));
        }
        if self.record_every == 0 {
            return Err(Error::param("record_every", "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxIters,
    TrainLoss,
    TestError,
}

#[derive(Debug, Clone)]
pub struct TrajectoryRecord {
    pub config: GdConfig,
    pub records: Vec<DiagnosticsRecord>,
    pub final_factors: FactorPair,
    pub iterations_run: usize,
    pub stop_reason: StopReason,
}

impl TrajectoryRecord {
    pub fn last(&self) -> &DiagnosticsRecord {
        self.records
            .last()
            .expect("trajectories always hold the iteration-0 record")
    }
}

/// Runs gradient descent from `init_random(.., cfg.alpha, cfg.seed)`.
pub fn run_trajectory(
    gt: &GroundTruth,
    op: &SensingOperator,
    cfg: &GdConfig,
    diag: &DiagnosticsOptions,
) -> Result<TrajectoryRecord> {
    cfg.validate()?;
    let init = init_random(gt.n1(), gt.n2(), cfg.k, cfg.alpha, cfg.seed)?;
    run_from(gt, op, cfg, diag, init)
}

/// Same as [`run_trajectory`] but from a caller-supplied starting point.
pub fn run_from(
    gt: &GroundTruth,
    op: &SensingOperator,
    cfg: &GdConfig,
    diag: &DiagnosticsOptions,
    init: FactorPair,
) -> Result<TrajectoryRecord> {
    cfg.validate()?;
    if (op.n1(), op.n2()) != (gt.n1(), gt.n2()) {
        return Err(Error::shape(
            "operator vs ground truth",
            (gt.n1(), gt.n2()),
            (op.n1(), op.n2()),
        ));
    }
    let y;
    let target = if op.is_population() {
        Target::GroundTruth(gt)
    } else {
        y = op.apply(&gt.x)?;
        Target::Measurements(&y)
    };
    let x_fro = gt.x.norm();

    let mut fp = init;
    let mut records = Vec::new();
    let mut t = 0usize;
    loop {
        let eval = evaluate(op, target, &fp)?;
        if !eval.loss.is_finite() || !fp.is_finite() {
            return Err(Error::Divergence {
                iter: t,
                quantity: "loss",
            });
        }
        let rel_fro = (&eval.product - &gt.x).norm() / x_fro;
        let stop = if cfg.stop_train_loss.is_some_and(|s| eval.loss < s) {
            Some(StopReason::TrainLoss)
        } else if cfg.stop_rel_test_error.is_some_and(|s| rel_fro < s) {
            Some(StopReason::TestError)
        } else if t >= cfg.max_iters {
            Some(StopReason::MaxIters)
        } else {
            None
        };
        if t % cfg.record_every == 0 || stop.is_some() {
            let with_delta = diag.delta_due(records.len());
            records.push(record_from_eval(gt, op, &fp, &eval, t, with_delta));
        }
        if let Some(stop_reason) = stop {
            return Ok(TrajectoryRecord {
                config: cfg.clone(),
                records,
                final_factors: fp,
                iterations_run: t,
                stop_reason,
            });
        }
        fp = step_from_eval(&fp, &eval, cfg.mu);
        t += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{lift, make_ground_truth, sym_embed};

    fn setup() -> (GroundTruth, SensingOperator, DVector<f64>) {
        let gt = make_ground_truth(9, 6, 2, 4).unwrap();
        let op = SensingOperator::gaussian(9, 6, 80, 5).unwrap();
        let y = op.apply(&gt.x).unwrap();
        (gt, op, y)
    }

    #[test]
    fn loss_zero_at_global_minimum() {
        let (gt, op, y) = setup();
        let s = gt.sigma_x.map(f64::sqrt);
        let fp = FactorPair::new(
            &gt.p_x * DMatrix::from_diagonal(&s),
            &gt.q_x * DMatrix::from_diagonal(&s),
        )
        .unwrap();
        assert!(loss(&op, Target::Measurements(&y), &fp).unwrap() < 1e-18);
        let (dv, dw) = gradient(&op, Target::Measurements(&y), &fp).unwrap();
        assert!(dv.amax() < 1e-14 && dw.amax() < 1e-14);
    }

    #[test]
    fn zero_factor_gives_half_norm_of_y() {
        let (_, op, y) = setup();
        let mut fp = init_random(9, 6, 3, 1.0, 2).unwrap();
        fp.v.fill(0.0);
        let l = loss(&op, Target::Measurements(&y), &fp).unwrap();
        assert!((l - 0.5 * y.norm_squared()).abs() <= 1e-14 * l);
        let (dv, dw) = gradient(&op, Target::Measurements(&y), &fp).unwrap();
        let expected = -op.adjoint(&y).unwrap() * &fp.w;
        assert!((dv - expected).amax() < 1e-12);
        assert_eq!(dw.amax(), 0.0);
    }

    #[test]
    fn loss_matches_symmetrized_form() {
        let (gt, op, y) = setup();
        let fp = init_random(9, 6, 3, 0.5, 7).unwrap();
        let l = loss(&op, Target::Measurements(&y), &fp).unwrap();
        let lp = lift(&fp);
        let s = gt.sym() - &lp.z * lp.z.transpose() + &lp.z_tilde * lp.z_tilde.transpose();
        let b = op.symmetrized_apply(&s).unwrap();
        let sym_loss = 0.25 * b.norm_squared();
        assert!((l - sym_loss).abs() <= 1e-12 * l);
    }

    #[test]
    fn population_gradient_is_direct_formula() {
        let (gt, _, _) = setup();
        let op = SensingOperator::population(9, 6).unwrap();
        let fp = init_random(9, 6, 3, 0.5, 7).unwrap();
        let (dv, dw) = gradient(&op, Target::GroundTruth(&gt), &fp).unwrap();
        let e = fp.product() - &gt.x;
        assert!((dv - &e * &fp.w).amax() < 1e-14);
        assert!((dw - e.transpose() * &fp.v).amax() < 1e-14);
    }

    #[test]
    fn mode_mismatch_is_rejected() {
        let (gt, op, y) = setup();
        let fp = init_random(9, 6, 3, 0.5, 7).unwrap();
        assert!(matches!(
            loss(&op, Target::GroundTruth(&gt), &fp),
            Err(Error::ModeMismatch(_))
        ));
        let pop = SensingOperator::population(9, 6).unwrap();
        assert!(matches!(
            loss(&pop, Target::Measurements(&y), &fp),
            Err(Error::ModeMismatch(_))
        ));
        let bad = init_random(8, 6, 3, 0.5, 7).unwrap();
        assert!(matches!(
            loss(&op, Target::Measurements(&y), &bad),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn step_edge_cases() {
        let (_, op, y) = setup();
        let target = Target::Measurements(&y);
        let fp = init_random(9, 6, 3, 0.5, 7).unwrap();
        assert_eq!(gd_step(&op, target, &fp, 0.0).unwrap(), fp);
        let mut zero = init_random(9, 6, 3, 0.0, 7).unwrap();
        for _ in 0..5 {
            zero = gd_step(&op, target, &zero, 0.1).unwrap();
        }
        assert_eq!(zero.v.amax() + zero.w.amax(), 0.0);
        let (dv, dw) = gradient(&op, target, &fp).unwrap();
        let manual = FactorPair::new(&fp.v - dv * 0.03, &fp.w - dw * 0.03).unwrap();
        let stepped = gd_step(&op, target, &fp, 0.03).unwrap();
        assert!((stepped.v - manual.v).amax() <= 1e-15);
        assert!((stepped.w - manual.w).amax() <= 1e-15);
    }

    #[test]
    fn symmetrized_update_equivalence() {
        let (gt, op, y) = setup();
        let fp = init_random(9, 6, 4, 0.3, 3).unwrap();
        let mu = 0.05;
        let next = lift(&gd_step(&op, Target::Measurements(&y), &fp, mu).unwrap());
        let lp = lift(&fp);
        // B*B(S) = sum_i <B_i, S> B_i, formed from the explicit measurement matrices.
        let s = gt.sym() - &lp.z * lp.z.transpose() + &lp.z_tilde * lp.z_tilde.transpose();
        let b = op.symmetrized_apply(&s).unwrap();
        let mut bb = DMatrix::zeros(15, 15);
        for i in 0..op.m() {
            bb += sym_embed(&op.matrix(i).unwrap()) * (b[i] * std::f64::consts::FRAC_1_SQRT_2);
        }
        let z1 = &lp.z + &bb * &lp.z * mu;
        let zt1 = &lp.z_tilde - &bb * &lp.z_tilde * mu;
        assert!((&next.z - &z1).norm() <= 1e-12 * z1.norm());
        assert!((&next.z_tilde - &zt1).norm() <= 1e-12 * zt1.norm());
    }

    #[test]
    fn one_iteration_gives_two_records() {
        let (gt, op, _) = setup();
        let cfg = GdConfig {
            mu: 0.01,
            alpha: 1e-3,
            k: 3,
            max_iters: 1,
            record_every: 1,
            stop_train_loss: None,
            stop_rel_test_error: None,
            seed: 1,
        };
        let tr = run_trajectory(&gt, &op, &cfg, &DiagnosticsOptions::default()).unwrap();
        let iters: Vec<usize> = tr.records.iter().map(|r| r.iter).collect();
        assert_eq!(iters, vec![0, 1]);
        assert_eq!(tr.stop_reason, StopReason::MaxIters);
    }

    #[test]
    fn huge_step_diverges() {
        let (gt, op, _) = setup();
        let cfg = GdConfig {
            mu: 10.0,
            alpha: 0.5,
            k: 3,
            max_iters: 10_000,
            record_every: 10,
            stop_train_loss: None,
            stop_rel_test_error: None,
            seed: 1,
        };
        let err = run_trajectory(&gt, &op, &cfg, &DiagnosticsOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Divergence { .. }));
    }

    #[test]
    fn rejects_bad_config() {
        let (gt, op, _) = setup();
        let mut cfg = GdConfig {
            mu: 0.0,
            alpha: 1e-3,
            k: 3,
            max_iters: 1,
            record_every: 1,
            stop_train_loss: None,
            stop_rel_test_error: None,
            seed: 1,
        };
        assert!(run_trajectory(&gt, &op, &cfg, &DiagnosticsOptions::default()).is_err());
        cfg.mu = 0.1;
        cfg.record_every = 0;
        assert!(run_trajectory(&gt, &op, &cfg, &DiagnosticsOptions::default()).is_err());
    }

    #[test]
    fn stride_and_final_record() {
        let (gt, op, _) = setup();
        let cfg = GdConfig {
            mu: 0.01,
            alpha: 1e-3,
            k: 3,
            max_iters: 25,
            record_every: 10,
            stop_train_loss: None,
            stop_rel_test_error: None,
            seed: 1,
        };
        let tr = run_trajectory(&gt, &op, &cfg, &DiagnosticsOptions::default()).unwrap();
        let iters: Vec<usize> = tr.records.iter().map(|r| r.iter).collect();
        assert_eq!(iters, vec![0, 10, 20, 25]);
        assert_eq!(tr.iterations_run, 25);
    }
}
