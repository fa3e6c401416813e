//! Phase boundaries read off a recorded trajectory.

use serde::{Deserialize, Serialize};

use crate::model::GroundTruth;
use crate::optimizer::TrajectoryRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseBoundaries {
    /// First recorded iteration where `sigma_min(Z Q_t)` has doubled from its
    /// iteration-0 value. A heuristic marker for the start of signal growth.
    pub t_signal: Option<usize>,
    /// First recorded iteration with `sigma_min(L_X^T Z_t) >= sqrt(sigma_min(X) / 8)`.
    pub t_local: Option<usize>,
}

pub fn local_threshold(gt: &GroundTruth) -> f64 {
    (gt.sigma_min() / 8.0).sqrt()
}

pub fn phase_boundaries(traj: &TrajectoryRecord, gt: &GroundTruth) -> PhaseBoundaries {
    let threshold = local_threshold(gt);
    let t_local = traj
        .records
        .iter()
        .find(|r| r.sigma_min_lz >= threshold)
        .map(|r| r.iter);
    let t_signal = traj
        .records
        .first()
        .and_then(|r| r.sigma_min_signal)
        .and_then(|s0| {
            traj.records
                .iter()
                .find(|r| r.sigma_min_signal.is_some_and(|s| s >= 2.0 * s0))
                .map(|r| r.iter)
        });
    PhaseBoundaries { t_signal, t_local }
}
