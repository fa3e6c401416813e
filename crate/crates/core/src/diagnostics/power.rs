//! Early iterates against the power method `Z'_t = (Id + mu F)^t Z_0`.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::linalg::spectral_norm;
use crate::model::{init_random, lift, sym_embed, GroundTruth};
use crate::optimizer::{evaluate, step_from_eval, GdConfig, Target};
use crate::sensing::SensingOperator;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerRow {
    pub t: usize,
    /// `||Z_t - Z'_t||`.
    pub e_norm: f64,
    pub bound: f64,
    pub in_window: bool,
}

impl PowerRow {
    pub fn holds(&self) -> bool {
        self.e_norm <= self.bound
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerComparison {
    /// `||F||` with `F = B*B(sym(X)) = sym(A*A(X))`.
    pub f_norm: f64,
    pub z0_norm: f64,
    /// Largest `t` covered by the bound, or `None` when `||Z_0||^2 > ||F|| / 16`.
    pub window: Option<usize>,
    pub rows: Vec<PowerRow>,
}

impl PowerComparison {
    /// Rows inside the window where the bound fails.
    pub fn violations(&self) -> usize {
        self.rows
            .iter()
            .filter(|r| r.in_window && !r.holds())
            .count()
    }
}

/// Runs `t_max` gradient steps from `init_random(.., cfg.alpha, cfg.seed)`
/// alongside the power iteration. `cfg.mu` may be zero here.
pub fn power_method_comparison(
    gt: &GroundTruth,
    op: &SensingOperator,
    cfg: &GdConfig,
    t_max: usize,
) -> Result<PowerComparison> {
    let y;
    let target = if op.is_population() {
        Target::GroundTruth(gt)
    } else {
        y = op.apply(&gt.x)?;
        Target::Measurements(&y)
    };
    let f = sym_embed(&op.normal_map(&gt.x)?);
    let f_norm = spectral_norm(&f);
    let mu = cfg.mu;

    let mut fp = init_random(gt.n1(), gt.n2(), cfg.k, cfg.alpha, cfg.seed)?;
    let z0 = lift(&fp).z;
    let z0_norm = spectral_norm(&z0);
    let width = cfg.k.min(gt.n1() + gt.n2()) as f64;

    let window = if z0_norm * z0_norm <= f_norm / 16.0 {
        let num = (f_norm / (16.0 * width * z0_norm * z0_norm)).ln();
        let den = 3.0 * (mu * f_norm).ln_1p();
        if num < 0.0 {
            None
        } else if den > 0.0 {
            Some((num / den).floor().min(usize::MAX as f64) as usize)
        } else {
            Some(usize::MAX)
        }
    } else {
        None
    };

    let mut power = z0.clone();
    let mut rows = Vec::with_capacity(t_max + 1);
    for t in 0..=t_max {
        let z = lift(&fp).z;
        let bound = 16.0 / f_norm
            * width
            * (3.0 * t as f64 * (mu * f_norm).ln_1p()).exp()
            * z0_norm.powi(3);
        rows.push(PowerRow {
            t,
            e_norm: spectral_norm(&(&z - &power)),
            bound,
            in_window: window.is_some_and(|w| t <= w),
        });
        if t == t_max {
            break;
        }
        let eval = evaluate(op, target, &fp)?;
        fp = step_from_eval(&fp, &eval, mu);
        power += &f * &power * mu;
    }
    Ok(PowerComparison {
        f_norm,
        z0_norm,
        window,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::make_ground_truth;

    fn cfg(mu: f64) -> GdConfig {
        GdConfig {
            mu,
            alpha: 1e-3,
            k: 4,
            max_iters: 1,
            record_every: 1,
            stop_train_loss: None,
            stop_rel_test_error: None,
            seed: 2,
        }
    }

    #[test]
    fn frozen_dynamics_have_no_error() {
        let gt = make_ground_truth(10, 8, 2, 1).unwrap();
        let op = SensingOperator::gaussian(10, 8, 100, 3).unwrap();
        let cmp = power_method_comparison(&gt, &op, &cfg(0.0), 5).unwrap();
        assert!(cmp.rows.iter().all(|r| r.e_norm == 0.0));
        assert_eq!(cmp.rows.len(), 6);
    }

    #[test]
    fn bound_holds_early() {
        let gt = make_ground_truth(10, 8, 2, 1).unwrap();
        let op = SensingOperator::gaussian(10, 8, 100, 3).unwrap();
        let cmp = power_method_comparison(&gt, &op, &cfg(0.05), 60).unwrap();
        assert_eq!(cmp.rows[0].e_norm, 0.0);
        assert!(cmp.window.is_some());
        assert_eq!(cmp.violations(), 0);
        // bound_t = (16/||F||) * width * (1 + mu ||F||)^(3t) * ||Z_0||^3
        let r = cmp.rows[7];
        let direct =
            16.0 / cmp.f_norm * 4.0 * (1.0 + 0.05 * cmp.f_norm).powi(21) * cmp.z0_norm.powi(3);
        assert!((r.bound - direct).abs() <= 1e-12 * direct);
    }
}
