//! Signal/nuisance decomposition and the per-iteration tracked quantities.
//!
//! With `Z = (1/sqrt 2)[V; W]` and the thin SVD `L_X^T Z = P_t S_t Q_t^T`,
//! the signal part of `Z` is `Z Q_t Q_t^T` and the nuisance part is
//! `Z Q_perp Q_perp^T`, where `Q_perp` spans the orthogonal complement of
//! `span(Q_t)` in `R^k`.

mod lemmas;
mod phases;
mod power;

pub use lemmas::{
    audit_trajectory, check_lemma, AuditOptions, AuditReport, LemmaConstants, LemmaId, LemmaReport,
    LemmaTally,
};
pub use phases::{local_threshold, phase_boundaries, PhaseBoundaries};
pub use power::{power_method_comparison, PowerComparison, PowerRow};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::linalg::{orthonormal_complement, sigma_min, spectral_norm, thin_svd};
use crate::model::{lift, sym_embed, FactorPair, GroundTruth, LiftedPair};
use crate::optimizer::{evaluate, StepEval, Target};
use crate::sensing::SensingOperator;

/// Thin SVD of `L_X^T Z` and the complement of its right factor.
#[derive(Debug, Clone)]
pub struct Decomposition {
    /// `r x min(r, k)`.
    pub p: DMatrix<f64>,
    pub sigma: DVector<f64>,
    /// `k x min(r, k)`.
    pub q: DMatrix<f64>,
    /// `k x (k - min(r, k))`.
    pub q_perp: DMatrix<f64>,
    pub full_rank: bool,
}

pub fn decompose(gt: &GroundTruth, z: &DMatrix<f64>) -> Decomposition {
    let lz = gt.l_x.tr_mul(z);
    let svd = thin_svd(&lz);
    let r = gt.rank;
    let full_rank = svd.singular_values.len() == r
        && svd.singular_values[r - 1] > 1e-12 * svd.singular_values[0].max(1.0);
    let q_perp = orthonormal_complement(&svd.v);
    Decomposition {
        p: svd.u,
        sigma: svd.singular_values,
        q: svd.v,
        q_perp,
        full_rank,
    }
}

impl Decomposition {
    /// `sigma_r(L_X^T Z)`; zero when `k < r`.
    pub fn sigma_min_lz(&self, r: usize) -> f64 {
        if self.sigma.len() < r {
            0.0
        } else {
            self.sigma[r - 1]
        }
    }
}

/// Quantities that need a full-rank decomposition.
#[derive(Debug, Clone)]
pub(crate) struct SignalMetrics {
    pub sigma_min_signal: f64,
    pub nuisance_norm: f64,
    pub angle_norm: f64,
    pub imbalance_nuisance: f64,
    pub imbalance_signal_angle: f64,
}

/// One iterate with its lift, decomposition and derived norms.
#[derive(Debug, Clone)]
pub(crate) struct Snapshot {
    pub fp: FactorPair,
    pub lifted: LiftedPair,
    pub dec: Decomposition,
    pub z_norm: f64,
    pub sigma_min_lz: f64,
    pub imbalance_norm: f64,
    pub vw_imbalance: f64,
    pub signal: Option<SignalMetrics>,
}

impl Snapshot {
    pub fn new(gt: &GroundTruth, fp: &FactorPair) -> Self {
        let lifted = lift(fp);
        let dec = decompose(gt, &lifted.z);
        let imb = lifted.imbalance();
        let signal = dec.full_rank.then(|| {
            let zq = &lifted.z * &dec.q;
            let svd = thin_svd(&zq);
            let p_zq = svd.u;
            let sigma_min_signal = svd.singular_values.min();
            let nuisance_norm = spectral_norm(&(&lifted.z * &dec.q_perp));
            let angle_norm = spectral_norm(&gt.l_x_perp.tr_mul(&p_zq));
            let imbalance_nuisance = spectral_norm(&(&imb * &dec.q_perp));
            let imbalance_signal_angle = spectral_norm(&lifted.z_tilde.tr_mul(&p_zq));
            SignalMetrics {
                sigma_min_signal,
                nuisance_norm,
                angle_norm,
                imbalance_nuisance,
                imbalance_signal_angle,
            }
        });
        Self {
            fp: fp.clone(),
            z_norm: spectral_norm(&lifted.z),
            sigma_min_lz: dec.sigma_min_lz(gt.rank),
            imbalance_norm: spectral_norm(&imb),
            vw_imbalance: spectral_norm(&fp.imbalance()),
            lifted,
            dec,
            signal,
        }
    }
}

/// Per-iteration snapshot. Signal-dependent fields are `None` when
/// `L_X^T Z` is rank deficient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    pub iter: usize,
    pub train_loss: f64,
    pub rel_test_error_fro: f64,
    pub rel_test_error_spec: f64,
    pub sigma_min_signal: Option<f64>,
    pub nuisance_norm: Option<f64>,
    pub angle_norm: Option<f64>,
    pub imbalance_norm: f64,
    pub imbalance_nuisance: Option<f64>,
    pub imbalance_signal_angle: Option<f64>,
    pub vw_imbalance: f64,
    pub delta_norm: Option<f64>,
    pub z_norm: f64,
    #[serde(rename = "sigma_min_LZ")]
    pub sigma_min_lz: f64,
}

/// How much a trajectory records beyond the cheap fields.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiagnosticsOptions {
    /// Compute `||Delta_t||` on every `n`-th recorded point.
    pub delta_every: Option<usize>,
}

impl Default for DiagnosticsOptions {
    fn default() -> Self {
        Self {
            delta_every: Some(50),
        }
    }
}

impl DiagnosticsOptions {
    pub fn delta_due(&self, record_index: usize) -> bool {
        self.delta_every
            .is_some_and(|d| d > 0 && record_index % d == 0)
    }
}

/// Computes a record from scratch; this costs one pass over the operator.
pub fn compute_record(
    gt: &GroundTruth,
    op: &SensingOperator,
    target: Target<'_>,
    fp: &FactorPair,
    iter: usize,
    with_delta: bool,
) -> Result<DiagnosticsRecord> {
    let eval = evaluate(op, target, fp)?;
    Ok(record_from_eval(gt, op, fp, &eval, iter, with_delta))
}

pub(crate) fn record_from_eval(
    gt: &GroundTruth,
    op: &SensingOperator,
    fp: &FactorPair,
    eval: &StepEval,
    iter: usize,
    with_delta: bool,
) -> DiagnosticsRecord {
    let snap = Snapshot::new(gt, fp);
    let err = &eval.product - &gt.x;
    let sig = snap.signal.as_ref();
    DiagnosticsRecord {
        iter,
        train_loss: eval.loss,
        rel_test_error_fro: err.norm() / gt.x.norm(),
        rel_test_error_spec: spectral_norm(&err) / gt.norm(),
        sigma_min_signal: sig.map(|s| s.sigma_min_signal),
        nuisance_norm: sig.map(|s| s.nuisance_norm),
        angle_norm: sig.map(|s| s.angle_norm),
        imbalance_norm: snap.imbalance_norm,
        imbalance_nuisance: sig.map(|s| s.imbalance_nuisance),
        imbalance_signal_angle: sig.map(|s| s.imbalance_signal_angle),
        vw_imbalance: snap.vw_imbalance,
        delta_norm: with_delta.then(|| delta_norm_from_eval(op, eval, &err)),
        z_norm: snap.z_norm,
        sigma_min_lz: snap.sigma_min_lz,
    }
}

/// `||Delta_t||` from a step evaluation. The off-diagonal block of `Delta_t`
/// is `(VW^T - X) - A*A(VW^T - X)` and the back-projection already holds
/// `A*A(VW^T) - A*(y) = A*A(VW^T - X)` for noiseless `y = A(X)`.
pub(crate) fn delta_norm_from_eval(
    op: &SensingOperator,
    eval: &StepEval,
    err: &DMatrix<f64>,
) -> f64 {
    if op.is_population() {
        0.0
    } else {
        spectral_norm(&(err - &eval.back))
    }
}

/// `Delta = (Id - B*B)(Z Z^T - Z~ Z~^T - sym(X))` as a full symmetric matrix.
/// Identically zero for the population operator.
pub fn delta_term(
    gt: &GroundTruth,
    op: &SensingOperator,
    lifted: &LiftedPair,
) -> Result<DMatrix<f64>> {
    let n = gt.n1() + gt.n2();
    if op.is_population() {
        return Ok(DMatrix::zeros(n, n));
    }
    let err = lifted.unlift().product() - &gt.x;
    let block = &err - op.normal_map(&err)?;
    Ok(sym_embed(&block))
}

/// Singular values of `Z Q_t` and `Z~ Q_t` should coincide, likewise for the
/// nuisance parts. Returns the larger of the two absolute gaps.
pub fn symmetry_gap(gt: &GroundTruth, fp: &FactorPair) -> f64 {
    let lifted = lift(fp);
    let dec = decompose(gt, &lifted.z);
    let signal =
        (spectral_norm(&(&lifted.z * &dec.q)) - spectral_norm(&(&lifted.z_tilde * &dec.q))).abs();
    let nuisance = (spectral_norm(&(&lifted.z * &dec.q_perp))
        - spectral_norm(&(&lifted.z_tilde * &dec.q_perp)))
    .abs();
    signal.max(nuisance)
}

/// `sigma_min` of `L_X^T Z_next Q` for a fixed `Q` from an earlier iterate.
pub(crate) fn sigma_min_lz_on(gt: &GroundTruth, z: &DMatrix<f64>, q: &DMatrix<f64>) -> f64 {
    sigma_min(&(gt.l_x.tr_mul(z) * q))
}
