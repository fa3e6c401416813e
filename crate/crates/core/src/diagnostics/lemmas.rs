//! Numerical checkers for the per-iteration inequalities of the analysis.
//!
//! Each checker evaluates a lemma's hypotheses under explicit constants and,
//! when the quantities involved are defined, the conclusion as a margin
//! (`rhs - lhs` for upper bounds, `lhs - rhs` for lower bounds). Audits only
//! count a violation when the hypotheses held.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{delta_norm_from_eval, sigma_min_lz_on, Snapshot};
use crate::error::{Error, Result};
use crate::linalg::{nuclear_norm, spectral_norm};
use crate::model::{init_random, FactorPair, GroundTruth};
use crate::optimizer::{evaluate, step_from_eval, GdConfig, StepEval, Target};
use crate::rng::derive_seed;
use crate::sensing::SensingOperator;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LemmaId {
    SigminGrowth,
    NoiseGrowth,
    AngleControl,
    NormControl,
    BalanceBase,
    BalancePerp,
    BalanceAngle,
    SpecLossBound,
    LocalConvergence,
    #[serde(rename = "rip_bound_1")]
    RipBound1,
    #[serde(rename = "rip_bound_2")]
    RipBound2,
    #[serde(rename = "rip_bound_3")]
    RipBound3,
}

impl LemmaId {
    pub const ALL: [LemmaId; 12] = [
        LemmaId::SigminGrowth,
        LemmaId::NoiseGrowth,
        LemmaId::AngleControl,
        LemmaId::NormControl,
        LemmaId::BalanceBase,
        LemmaId::BalancePerp,
        LemmaId::BalanceAngle,
        LemmaId::SpecLossBound,
        LemmaId::LocalConvergence,
        LemmaId::RipBound1,
        LemmaId::RipBound2,
        LemmaId::RipBound3,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LemmaId::SigminGrowth => "sigmin_growth",
            LemmaId::NoiseGrowth => "noise_growth",
            LemmaId::AngleControl => "angle_control",
            LemmaId::NormControl => "norm_control",
            LemmaId::BalanceBase => "balance_base",
            LemmaId::BalancePerp => "balance_perp",
            LemmaId::BalanceAngle => "balance_angle",
            LemmaId::SpecLossBound => "spec_loss_bound",
            LemmaId::LocalConvergence => "local_convergence",
            LemmaId::RipBound1 => "rip_bound_1",
            LemmaId::RipBound2 => "rip_bound_2",
            LemmaId::RipBound3 => "rip_bound_3",
        }
    }

    /// Whether the conclusion involves the successor iterate.
    pub fn needs_successor(self) -> bool {
        !matches!(
            self,
            LemmaId::SpecLossBound | LemmaId::RipBound1 | LemmaId::RipBound2 | LemmaId::RipBound3
        )
    }

    pub fn is_rip(self) -> bool {
        matches!(
            self,
            LemmaId::RipBound1 | LemmaId::RipBound2 | LemmaId::RipBound3
        )
    }
}

impl fmt::Display for LemmaId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LemmaId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LemmaId::ALL
            .iter()
            .copied()
            .find(|id| id.as_str() == s)
            .ok_or_else(|| Error::UnknownLemma(s.to_string()))
    }
}

/// Absolute constants the inequalities leave unspecified.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LemmaConstants {
    /// Small constant in the hypotheses.
    pub c: f64,
    /// Large constant in the conclusions.
    pub big_c: f64,
    pub epsilon: f64,
    /// RIP constant; only the RIP checks read it.
    pub delta: Option<f64>,
}

impl Default for LemmaConstants {
    fn default() -> Self {
        Self {
            c: 0.01,
            big_c: 100.0,
            epsilon: 1.0,
            delta: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaReport {
    pub lemma_id: LemmaId,
    pub iter: usize,
    pub preconditions_hold: bool,
    /// False when the conclusion could not be evaluated.
    pub conclusion_holds: bool,
    /// `None` when a quantity in the conclusion is undefined (rank loss).
    pub margin: Option<f64>,
    pub constants_used: BTreeMap<String, f64>,
}

/// Everything the checkers read about one iterate.
pub(crate) struct LemmaState {
    pub snap: Snapshot,
    pub delta_norm: f64,
    /// `D = sym(X) - ZZ^T + Z~Z~^T = sym(X - VW^T)`.
    d: DMatrix<f64>,
    pub lx_d: f64,
}

impl LemmaState {
    pub fn new(gt: &GroundTruth, op: &SensingOperator, fp: &FactorPair, eval: &StepEval) -> Self {
        let err = &eval.product - &gt.x;
        let delta_norm = delta_norm_from_eval(op, eval, &err);
        let d = crate::model::sym_embed(&(-err));
        let lx_d = spectral_norm(&gt.l_x.tr_mul(&d));
        Self {
            snap: Snapshot::new(gt, fp),
            delta_norm,
            d,
            lx_d,
        }
    }

    fn d_norm(&self) -> f64 {
        spectral_norm(&self.d)
    }

    fn lperp_d(&self, gt: &GroundTruth) -> f64 {
        spectral_norm(&gt.l_x_perp.tr_mul(&self.d))
    }
}

struct Scalars {
    nx: f64,
    smin: f64,
    kappa: f64,
    sqrt_nx: f64,
}

impl Scalars {
    fn of(gt: &GroundTruth) -> Self {
        Self {
            nx: gt.norm(),
            smin: gt.sigma_min(),
            kappa: gt.kappa,
            sqrt_nx: gt.norm().sqrt(),
        }
    }
}

enum Bound {
    Upper { lhs: f64, rhs: f64 },
    Lower { lhs: f64, rhs: f64 },
}

impl Bound {
    fn margin(&self) -> (f64, f64) {
        match *self {
            Bound::Upper { lhs, rhs } => (rhs - lhs, lhs.abs().max(rhs.abs())),
            Bound::Lower { lhs, rhs } => (lhs - rhs, lhs.abs().max(rhs.abs())),
        }
    }
}

fn combine(bounds: &[Bound]) -> (f64, f64) {
    bounds
        .iter()
        .map(Bound::margin)
        .fold((f64::INFINITY, 0.0f64), |(m, s), (bm, bs)| {
            (m.min(bm), s.max(bs))
        })
}

/// Evaluates one lemma on precomputed states. `next` must be the gradient
/// step successor of `cur` under `mu`.
pub(crate) fn evaluate_lemma(
    id: LemmaId,
    gt: &GroundTruth,
    op: &SensingOperator,
    cur: &LemmaState,
    next: Option<&LemmaState>,
    mu: f64,
    k: &LemmaConstants,
    iter: usize,
) -> Result<LemmaReport> {
    if id.needs_successor() && next.is_none() {
        return Err(Error::MissingSuccessor(id));
    }
    let delta = if id.is_rip() {
        Some(k.delta.ok_or(Error::MissingConstant {
            lemma: id,
            name: "delta",
        })?)
    } else {
        None
    };
    let s = Scalars::of(gt);
    let (c, big_c, eps) = (k.c, k.big_c, k.epsilon);
    let snap = &cur.snap;
    let z_ok = snap.z_norm <= 2.0 * s.sqrt_nx;
    let dn = cur.delta_norm;

    let mut constants = BTreeMap::new();
    let mut used = |name: &str, v: f64| {
        constants.insert(name.to_string(), v);
    };
    used("mu", mu);

    let (pre, bounds): (bool, Option<Vec<Bound>>) = match id {
        LemmaId::SigminGrowth => {
            used("c", c);
            let next = next.expect("checked above");
            match &snap.signal {
                Some(sig) => {
                    let pre = mu <= c / (s.nx * s.kappa)
                        && z_ok
                        && sig.angle_norm <= c / s.kappa
                        && dn <= c * s.smin
                        && snap.dec.full_rank;
                    let on_q = sigma_min_lz_on(gt, &next.snap.lifted.z, &snap.dec.q);
                    let sl = snap.sigma_min_lz;
                    let rhs = sl * (1.0 + 0.25 * mu * s.smin - mu * sl * sl);
                    let bounds = vec![
                        Bound::Lower {
                            lhs: next.snap.sigma_min_lz,
                            rhs: on_q,
                        },
                        Bound::Lower { lhs: on_q, rhs },
                    ];
                    (pre, Some(bounds))
                }
                None => (false, None),
            }
        }
        LemmaId::NoiseGrowth => {
            used("c", c);
            used("epsilon", eps);
            let next = next.expect("checked above");
            match (&snap.signal, &next.snap.signal) {
                (Some(sig), Some(_)) => {
                    let next_on_q = sigma_min_lz_on(gt, &next.snap.lifted.z, &snap.dec.q);
                    let full = next_on_q > 1e-12 * next.snap.dec.sigma[0].max(1.0);
                    let pre = (0.0..=1.0).contains(&eps)
                        && mu <= c * eps / (s.nx * s.kappa)
                        && z_ok
                        && dn <= c * eps * s.smin
                        && sig.angle_norm <= c * eps / s.kappa
                        && full
                        && snap.dec.full_rank;
                    let n = sig.nuisance_norm;
                    let lhs = next.snap.signal.as_ref().expect("matched").nuisance_norm;
                    let rhs = (1.0 - 0.5 * mu * n * n + mu * eps * s.smin) * n
                        + 2.0 * mu * s.sqrt_nx * sig.imbalance_nuisance;
                    (pre, Some(vec![Bound::Upper { lhs, rhs }]))
                }
                _ => (false, None),
            }
        }
        LemmaId::AngleControl => {
            used("c", c);
            used("C", big_c);
            let next = next.expect("checked above");
            match (&snap.signal, &next.snap.signal) {
                (Some(sig), Some(nsig)) => {
                    let pre = mu <= c / (s.nx * s.kappa)
                        && sig.angle_norm <= c / s.kappa
                        && z_ok
                        && dn <= c * s.smin
                        && sig.nuisance_norm
                            <= (c * s.smin.sqrt() / s.kappa.sqrt()).min(2.0 * sig.sigma_min_signal)
                        && sig.imbalance_nuisance <= s.sqrt_nx * sig.sigma_min_signal
                        && sig.sigma_min_signal > 0.0;
                    let rhs = (1.0 - 0.25 * mu * s.smin) * sig.angle_norm
                        + 2.0 * mu * s.sqrt_nx * sig.imbalance_signal_angle
                        + big_c * mu * s.sqrt_nx * sig.imbalance_nuisance / sig.sigma_min_signal
                        + big_c * mu * dn
                        + big_c * mu * mu * s.nx * s.nx;
                    (
                        pre,
                        Some(vec![Bound::Upper {
                            lhs: nsig.angle_norm,
                            rhs,
                        }]),
                    )
                }
                _ => (false, None),
            }
        }
        LemmaId::NormControl => {
            let next = next.expect("checked above");
            let pre = match &snap.signal {
                Some(sig) => {
                    z_ok && dn <= s.nx / 100.0
                        && sig.nuisance_norm <= s.sqrt_nx / 100.0
                        && sig.angle_norm <= 0.01
                        && mu <= 1.0 / (100.0 * s.nx)
                }
                None => false,
            };
            let bound = Bound::Upper {
                lhs: next.snap.z_norm,
                rhs: 2.0 * s.sqrt_nx,
            };
            (pre, Some(vec![bound]))
        }
        LemmaId::BalanceBase => {
            let next = next.expect("checked above");
            let pre = z_ok && dn <= s.nx;
            let rhs = snap.imbalance_norm + 400.0 * mu * mu * s.nx.powi(3);
            (
                pre,
                Some(vec![Bound::Upper {
                    lhs: next.snap.imbalance_norm,
                    rhs,
                }]),
            )
        }
        LemmaId::BalancePerp => {
            used("c", c);
            used("C", big_c);
            let next = next.expect("checked above");
            match (&snap.signal, &next.snap.signal) {
                (Some(sig), Some(nsig)) => {
                    let next_on_q = sigma_min_lz_on(gt, &next.snap.lifted.z, &snap.dec.q);
                    let pre = next_on_q > 1e-12 * next.snap.dec.sigma[0].max(1.0)
                        && snap.z_norm.max(next.snap.z_norm) <= 2.0 * s.sqrt_nx
                        && sig.angle_norm <= c
                        && mu <= c / (s.nx * s.kappa)
                        && dn <= c * s.smin;
                    let n = sig.nuisance_norm;
                    let beta = sig.angle_norm * s.nx + n * n + dn;
                    let rhs = sig.imbalance_nuisance
                        + big_c
                            * mu
                            * ((sig.angle_norm + mu * s.nx) * beta + mu * s.nx * s.nx)
                            * s.sqrt_nx
                            * n
                        + 8.0 * mu * beta * n * n;
                    (
                        pre,
                        Some(vec![Bound::Upper {
                            lhs: nsig.imbalance_nuisance,
                            rhs,
                        }]),
                    )
                }
                _ => (false, None),
            }
        }
        LemmaId::BalanceAngle => {
            used("c", c);
            let next = next.expect("checked above");
            match (&snap.signal, &next.snap.signal) {
                (Some(sig), Some(nsig)) => {
                    let pre = z_ok
                        && sig.nuisance_norm <= (2.0 * sig.sigma_min_signal).min(c * s.smin.sqrt())
                        && dn <= c * s.smin
                        && mu <= c / (s.nx * s.kappa)
                        && sig.imbalance_nuisance <= c / s.kappa * sig.sigma_min_signal * s.sqrt_nx
                        && sig.angle_norm <= c / s.kappa
                        && sig.sigma_min_signal > 0.0;
                    let rhs = (1.0 - 0.25 * mu * s.smin) * sig.imbalance_signal_angle
                        + 4.0 * mu * s.nx * sig.nuisance_norm
                        + 2.0 * mu * snap.imbalance_norm * s.sqrt_nx
                        + mu * sig.imbalance_nuisance * s.smin / sig.sigma_min_signal
                        + 800.0 * mu * mu * s.nx.powf(2.5);
                    (
                        pre,
                        Some(vec![Bound::Upper {
                            lhs: nsig.imbalance_signal_angle,
                            rhs,
                        }]),
                    )
                }
                _ => (false, None),
            }
        }
        LemmaId::SpecLossBound | LemmaId::LocalConvergence => {
            used("c", c);
            match &snap.signal {
                Some(sig) => {
                    let d_norm = cur.d_norm();
                    let pre = mu <= c / (s.kappa * s.nx)
                        && sig.angle_norm <= c / s.kappa
                        && z_ok
                        && dn <= c / s.kappa * d_norm
                        && sig.sigma_min_signal >= (s.smin / 8.0).sqrt()
                        && sig.nuisance_norm <= c * s.smin.sqrt();
                    let n2 = sig.nuisance_norm * sig.nuisance_norm;
                    let bounds = if id == LemmaId::SpecLossBound {
                        vec![
                            Bound::Upper {
                                lhs: cur.lperp_d(gt),
                                rhs: 5.0 * cur.lx_d + 4.0 * n2,
                            },
                            Bound::Upper {
                                lhs: d_norm,
                                rhs: 6.0 * cur.lx_d + 4.0 * n2,
                            },
                        ]
                    } else {
                        let next = next.expect("checked above");
                        vec![Bound::Upper {
                            lhs: next.lx_d,
                            rhs: (1.0 - mu * s.smin / 128.0) * cur.lx_d + mu / 20.0 * s.smin * n2,
                        }]
                    };
                    (pre, Some(bounds))
                }
                None => (false, None),
            }
        }
        LemmaId::RipBound1 | LemmaId::RipBound2 | LemmaId::RipBound3 => {
            let delta = delta.expect("checked above");
            used("delta", delta);
            let fp = &snap.fp;
            let distortion =
                |m: &DMatrix<f64>| -> Result<f64> { Ok(spectral_norm(&(m - op.normal_map(m)?))) };
            match id {
                LemmaId::RipBound3 => {
                    let m = fp.product();
                    let lhs = distortion(&m)?;
                    // ||ZZ^T - Z~Z~^T||_* = ||sym(VW^T)||_* = 2 ||VW^T||_*
                    let rhs = delta * 2.0 * nuclear_norm(&m);
                    (true, Some(vec![Bound::Upper { lhs, rhs }]))
                }
                _ if !snap.dec.full_rank => (false, None),
                LemmaId::RipBound1 => {
                    let q = &snap.dec.q;
                    let m = &fp.v * q * (&fp.w * q).transpose() - &gt.x;
                    let lhs = distortion(&m)?;
                    let rhs = delta * (gt.rank as f64).sqrt() * spectral_norm(&m);
                    (true, Some(vec![Bound::Upper { lhs, rhs }]))
                }
                _ => {
                    let q = &snap.dec.q_perp;
                    let m = &fp.v * q * (&fp.w * q).transpose();
                    let lhs = distortion(&m)?;
                    let rhs = q.ncols() as f64 * delta * spectral_norm(&m);
                    (true, Some(vec![Bound::Upper { lhs, rhs }]))
                }
            }
        }
    };

    let (margin, conclusion_holds) = match bounds {
        Some(b) => {
            let (m, scale) = combine(&b);
            (Some(m), m >= -1e-10 * scale.max(1.0))
        }
        None => (None, false),
    };
    Ok(LemmaReport {
        lemma_id: id,
        iter,
        preconditions_hold: pre,
        conclusion_holds,
        margin,
        constants_used: constants,
    })
}

/// Checks one lemma at `state_t`.
///
/// The successor is recomputed from `(state_t, mu)`; a supplied `state_t1`
/// that disagrees with it by more than `1e-10` relative is rejected.
#[allow(clippy::too_many_arguments)]
pub fn check_lemma(
    id: LemmaId,
    gt: &GroundTruth,
    op: &SensingOperator,
    target: Target<'_>,
    state_t: &FactorPair,
    state_t1: Option<&FactorPair>,
    mu: f64,
    constants: &LemmaConstants,
) -> Result<LemmaReport> {
    let eval = evaluate(op, target, state_t)?;
    let cur = LemmaState::new(gt, op, state_t, &eval);
    let next = if id.needs_successor() {
        let given = state_t1.ok_or(Error::MissingSuccessor(id))?;
        let recomputed = step_from_eval(state_t, &eval, mu);
        let scale = recomputed
            .v
            .norm()
            .hypot(recomputed.w.norm())
            .max(f64::MIN_POSITIVE);
        let diff = (&given.v - &recomputed.v)
            .norm()
            .hypot((&given.w - &recomputed.w).norm())
            / scale;
        if given.v.shape() != recomputed.v.shape()
            || given.w.shape() != recomputed.w.shape()
            || !(diff <= 1e-10)
        {
            return Err(Error::SuccessorMismatch(diff));
        }
        let next_eval = evaluate(op, target, &recomputed)?;
        Some(LemmaState::new(gt, op, &recomputed, &next_eval))
    } else {
        None
    };
    evaluate_lemma(id, gt, op, &cur, next.as_ref(), mu, constants, 0)
}

/// Per-lemma counts over an audited trajectory.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LemmaTally {
    pub audited: usize,
    pub preconditions_held: usize,
    pub conclusion_held: usize,
    /// Conclusion failures at iterations where the hypotheses held.
    pub violations: usize,
    /// Smallest margin among precondition-satisfied iterations.
    pub min_margin: Option<f64>,
    /// Smallest margin among all evaluated iterations.
    pub min_margin_any: Option<f64>,
    pub first_violation: Option<usize>,
}

impl LemmaTally {
    fn add(&mut self, rep: &LemmaReport) {
        self.audited += 1;
        if rep.conclusion_holds {
            self.conclusion_held += 1;
        }
        if let Some(m) = rep.margin {
            self.min_margin_any = Some(self.min_margin_any.map_or(m, |x| x.min(m)));
        }
        if rep.preconditions_hold {
            self.preconditions_held += 1;
            if let Some(m) = rep.margin {
                self.min_margin = Some(self.min_margin.map_or(m, |x| x.min(m)));
            }
            if !rep.conclusion_holds {
                self.violations += 1;
                self.first_violation.get_or_insert(rep.iter);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditOptions {
    pub lemmas: Vec<LemmaId>,
    /// Audit every `every`-th iteration.
    pub every: usize,
    /// RIP checks cost three extra operator passes; they run on this stride.
    pub rip_every: usize,
    /// Probes for the RIP estimate when `constants.delta` is unset.
    pub rip_trials: usize,
    /// Multiplier applied to the probed RIP lower bound.
    pub rip_inflation: f64,
    pub keep_reports: bool,
}

impl Default for AuditOptions {
    fn default() -> Self {
        Self {
            lemmas: LemmaId::ALL.to_vec(),
            every: 1,
            rip_every: 100,
            rip_trials: 50,
            rip_inflation: 3.0,
            keep_reports: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub constants: LemmaConstants,
    /// Probed lower bound on the RIP constant of order `2r+1`, when probed.
    pub delta_lower: Option<f64>,
    pub iterations_run: usize,
    pub final_train_loss: f64,
    pub tallies: BTreeMap<LemmaId, LemmaTally>,
    pub reports: Vec<LemmaReport>,
}

/// Runs gradient descent from `init_random(.., cfg.alpha, cfg.seed)` and
/// checks the selected lemmas along the way.
pub fn audit_trajectory(
    gt: &GroundTruth,
    op: &SensingOperator,
    cfg: &GdConfig,
    constants: &LemmaConstants,
    opts: &AuditOptions,
) -> Result<AuditReport> {
    cfg.validate()?;
    if opts.every == 0 || opts.rip_every == 0 {
        return Err(Error::param("every", "audit strides must be at least 1"));
    }
    let mut constants = *constants;
    let mut delta_lower = None;
    if constants.delta.is_none() && opts.lemmas.iter().any(|l| l.is_rip()) {
        let order = (2 * gt.rank + 1).min(gt.n1().min(gt.n2()));
        let est =
            op.estimate_rip_constant(order, opts.rip_trials, derive_seed(cfg.seed, "rip_probe"))?;
        delta_lower = Some(est.delta_lower);
        constants.delta = Some(opts.rip_inflation * est.delta_lower);
    }
    let y;
    let target = if op.is_population() {
        Target::GroundTruth(gt)
    } else {
        y = op.apply(&gt.x)?;
        Target::Measurements(&y)
    };

    let mut tallies: BTreeMap<LemmaId, LemmaTally> = opts
        .lemmas
        .iter()
        .map(|&l| (l, LemmaTally::default()))
        .collect();
    let mut reports = Vec::new();

    let mut fp = init_random(gt.n1(), gt.n2(), cfg.k, cfg.alpha, cfg.seed)?;
    let mut eval = evaluate(op, target, &fp)?;
    let mut cur: Option<LemmaState> = None;
    let mut t = 0usize;
    loop {
        if !eval.loss.is_finite() {
            return Err(Error::Divergence {
                iter: t,
                quantity: "loss",
            });
        }
        let rel_fro = (&eval.product - &gt.x).norm() / gt.x.norm();
        let stop = cfg.stop_train_loss.is_some_and(|s| eval.loss < s)
            || cfg.stop_rel_test_error.is_some_and(|s| rel_fro < s)
            || t >= cfg.max_iters;
        if stop {
            return Ok(AuditReport {
                constants,
                delta_lower,
                iterations_run: t,
                final_train_loss: eval.loss,
                tallies,
                reports,
            });
        }
        let next_fp = step_from_eval(&fp, &eval, cfg.mu);
        let next_eval = evaluate(op, target, &next_fp)?;
        let due = t % opts.every == 0;
        // The successor state is only needed when this or the next iterate is audited.
        let next_due = (t + 1) % opts.every == 0;
        if due {
            let cur_state = cur
                .take()
                .unwrap_or_else(|| LemmaState::new(gt, op, &fp, &eval));
            let next_state = LemmaState::new(gt, op, &next_fp, &next_eval);
            for &id in &opts.lemmas {
                if id.is_rip() && t % opts.rip_every != 0 {
                    continue;
                }
                let rep = evaluate_lemma(
                    id,
                    gt,
                    op,
                    &cur_state,
                    Some(&next_state),
                    cfg.mu,
                    &constants,
                    t,
                )?;
                tallies.get_mut(&id).expect("seeded").add(&rep);
                if opts.keep_reports {
                    reports.push(rep);
                }
            }
            cur = next_due.then_some(next_state);
        } else {
            cur = None;
        }
        fp = next_fp;
        eval = next_eval;
        t += 1;
    }
}
