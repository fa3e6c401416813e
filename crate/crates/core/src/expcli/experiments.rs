//! The experiment drivers. Each one writes its per-run CSVs under
//! `settings.out_dir` and returns a typed result that the caller folds into
//! `summary.json`.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::Settings;
use super::output::{write_json, write_run_csv, write_table, Cell};
use crate::diagnostics::{
    audit_trajectory, phase_boundaries, power_method_comparison, AuditOptions, AuditReport,
    DiagnosticsOptions, DiagnosticsRecord, PhaseBoundaries,
};
use crate::error::Result;
use crate::model::{make_ground_truth, GroundTruth};
use crate::optimizer::{run_trajectory, GdConfig, StopReason, TrajectoryRecord};
use crate::rng::derive_seed;
use crate::sensing::{RipEstimate, SensingOperator};

/// Ground truth and operator for one base seed.
pub struct Problem {
    pub seed: u64,
    pub gt: GroundTruth,
    pub op: SensingOperator,
}

impl Problem {
    pub fn new(s: &Settings, seed: u64, population: bool) -> Result<Self> {
        let gt = make_ground_truth(s.n1, s.n2, s.r, derive_seed(seed, "ground_truth"))?;
        let op = if population {
            SensingOperator::population(s.n1, s.n2)?
        } else {
            SensingOperator::gaussian(s.n1, s.n2, s.m, derive_seed(seed, "operator"))?
        };
        Ok(Problem { seed, gt, op })
    }

    pub fn gd_config(&self, s: &Settings, k: usize, alpha: f64, mu_rel: f64) -> GdConfig {
        GdConfig {
            mu: mu_rel / self.gt.norm(),
            alpha,
            k,
            max_iters: s.max_iters,
            record_every: s.record_every,
            stop_train_loss: s.stop_train_loss,
            stop_rel_test_error: None,
            seed: derive_seed(self.seed, "init"),
        }
    }
}

fn problems(s: &Settings, population: bool) -> Result<Vec<Problem>> {
    s.seeds
        .iter()
        .map(|&seed| Problem::new(s, seed, population))
        .collect()
}

fn diag_options(s: &Settings) -> DiagnosticsOptions {
    DiagnosticsOptions {
        delta_every: s.with_delta.then_some(s.delta_every),
    }
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

/// Median of the last 10% of the recorded values (at least one value).
pub fn plateau(values: &[f64]) -> Option<f64> {
    let tail = (values.len() / 10).max(1).min(values.len());
    median(&values[values.len() - tail..])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub points: usize,
}

/// Ordinary least squares `y ~ slope * x + intercept`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Option<LinearFit> {
    let n = xs.len();
    if n < 2 || ys.len() != n {
        return None;
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - slope * x - intercept).powi(2))
        .sum();
    let r_squared = if syy == 0.0 { 1.0 } else { 1.0 - ss_res / syy };
    Some(LinearFit {
        slope,
        intercept,
        r_squared,
        points: n,
    })
}

/// Short, filename-safe rendering of a grid value.
fn tag(x: f64) -> String {
    format!("{x:e}").replace('-', "m").replace('.', "p")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub population: bool,
    pub k: usize,
    pub alpha: f64,
    #[serde(rename = "mu_times_normX")]
    pub mu_times_norm_x: f64,
    pub mu: f64,
    pub kappa: f64,
    pub iterations_run: usize,
    pub stop_reason: StopReason,
    /// Whether the training-loss stop was reached.
    pub converged: bool,
    pub records: usize,
    pub initial_vw_imbalance: f64,
    pub max_vw_imbalance: f64,
    pub plateau_vw_imbalance: f64,
    pub phases: PhaseBoundaries,
    #[serde(rename = "final")]
    pub final_record: DiagnosticsRecord,
    pub csv: String,
}

impl RunSummary {
    fn new(p: &Problem, traj: &TrajectoryRecord, mu_rel: f64, csv: String) -> Self {
        let vw: Vec<f64> = traj.records.iter().map(|r| r.vw_imbalance).collect();
        RunSummary {
            seed: p.seed,
            population: p.op.is_population(),
            k: traj.config.k,
            alpha: traj.config.alpha,
            mu_times_norm_x: mu_rel,
            mu: traj.config.mu,
            kappa: p.gt.kappa,
            iterations_run: traj.iterations_run,
            stop_reason: traj.stop_reason,
            converged: traj.stop_reason == StopReason::TrainLoss,
            records: traj.records.len(),
            initial_vw_imbalance: vw[0],
            max_vw_imbalance: vw.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            plateau_vw_imbalance: plateau(&vw).unwrap_or(vw[0]),
            phases: phase_boundaries(traj, &p.gt),
            final_record: traj.last().clone(),
            csv,
        }
    }
}

/// One trajectory, written to `out_dir/file`.
fn run_one(
    s: &Settings,
    p: &Problem,
    k: usize,
    alpha: f64,
    mu_rel: f64,
    file: String,
) -> Result<(RunSummary, TrajectoryRecord)> {
    let cfg = p.gd_config(s, k, alpha, mu_rel);
    let traj = run_trajectory(&p.gt, &p.op, &cfg, &diag_options(s))?;
    write_run_csv(&s.out_dir.join(&file), &traj.records)?;
    let summary = RunSummary::new(p, &traj, mu_rel, file);
    eprintln!(
        "msl: {} seed {} alpha {:e} mu*|X| {} -> {} iterations ({:?}), train loss {:.3e}",
        summary.csv,
        p.seed,
        alpha,
        mu_rel,
        summary.iterations_run,
        summary.stop_reason,
        summary.final_record.train_loss
    );
    Ok((summary, traj))
}

// ---------------------------------------------------------------- run

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub runs: Vec<RunSummary>,
}

pub fn exp_run(s: &Settings) -> Result<RunResult> {
    let problems = problems(s, s.population)?;
    let single = s.alphas.len() == 1 && s.mus_times_norm_x.len() == 1;
    let grid: Vec<(&Problem, f64, f64)> = problems
        .iter()
        .flat_map(|p| {
            s.alphas
                .iter()
                .flat_map(move |&a| s.mus_times_norm_x.iter().map(move |&mu| (p, a, mu)))
        })
        .collect();
    let runs = grid
        .par_iter()
        .map(|&(p, a, mu)| {
            let file = if single {
                format!("run_seed{}.csv", p.seed)
            } else {
                format!("run_seed{}_alpha{}_mu{}.csv", p.seed, tag(a), tag(mu))
            };
            run_one(s, p, s.k, a, mu, file).map(|(summary, _)| summary)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RunResult { runs })
}

// ---------------------------------------------------------------- imbalance vs alpha

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImbalanceAlphaResult {
    pub runs: Vec<RunSummary>,
    pub sweep_csv: String,
}

pub const IMBALANCE_ALPHA_COLUMNS: [&str; 9] = [
    "seed",
    "mode",
    "alpha",
    "initial_vw_imbalance",
    "max_vw_imbalance",
    "plateau_vw_imbalance",
    "final_train_loss",
    "iterations",
    "converged",
];

fn mode_name(population: bool) -> &'static str {
    if population {
        "population"
    } else {
        "empirical"
    }
}

pub fn exp_imbalance_alpha(s: &Settings) -> Result<ImbalanceAlphaResult> {
    let empirical = problems(s, false)?;
    let population = problems(s, true)?;
    let grid: Vec<(&Problem, f64)> = empirical
        .iter()
        .chain(&population)
        .flat_map(|p| s.alphas.iter().map(move |&a| (p, a)))
        .collect();
    let mu = s.mus_times_norm_x[0];
    let runs = grid
        .par_iter()
        .map(|&(p, a)| {
            let file = format!(
                "run_{}_alpha{}_seed{}.csv",
                mode_name(p.op.is_population()),
                tag(a),
                p.seed
            );
            run_one(s, p, s.k, a, mu, file).map(|(summary, _)| summary)
        })
        .collect::<Result<Vec<_>>>()?;
    let rows: Vec<Vec<Cell>> = runs
        .iter()
        .map(|r| {
            vec![
                Cell::Int(r.seed),
                Cell::Text(mode_name(r.population).into()),
                r.alpha.into(),
                r.initial_vw_imbalance.into(),
                r.max_vw_imbalance.into(),
                r.plateau_vw_imbalance.into(),
                r.final_record.train_loss.into(),
                r.iterations_run.into(),
                r.converged.into(),
            ]
        })
        .collect();
    let sweep_csv = "imbalance_alpha.csv".to_string();
    write_table(&s.out_dir.join(&sweep_csv), &IMBALANCE_ALPHA_COLUMNS, &rows)?;
    Ok(ImbalanceAlphaResult { runs, sweep_csv })
}

// ---------------------------------------------------------------- train vs test

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraintestPair {
    pub seed: u64,
    pub large: RunSummary,
    pub small: RunSummary,
    /// Final relative Frobenius test error, large over small.
    pub test_error_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraintestResult {
    pub alpha_large: f64,
    pub alpha_large_rule: String,
    pub alpha_small: f64,
    pub pairs: Vec<TraintestPair>,
}

/// Initialization scale putting `||Z_0||` near one.
pub fn alpha_large(n1: usize, n2: usize, k: usize) -> f64 {
    1.0 / ((n1 + n2).max(k) as f64).sqrt()
}

pub fn exp_traintest(s: &Settings) -> Result<TraintestResult> {
    let problems = problems(s, s.population)?;
    let a_large = alpha_large(s.n1, s.n2, s.k);
    let a_small = s.alphas[0];
    let mu = s.mus_times_norm_x[0];
    let grid: Vec<(&Problem, bool)> = problems
        .iter()
        .flat_map(|p| [(p, true), (p, false)])
        .collect();
    let runs = grid
        .par_iter()
        .map(|&(p, large)| {
            let (a, name) = if large {
                (a_large, "large")
            } else {
                (a_small, "small")
            };
            run_one(
                s,
                p,
                s.k,
                a,
                mu,
                format!("run_traintest_{name}_seed{}.csv", p.seed),
            )
            .map(|(summary, _)| summary)
        })
        .collect::<Result<Vec<_>>>()?;
    let pairs = runs
        .chunks(2)
        .map(|c| TraintestPair {
            seed: c[0].seed,
            test_error_ratio: c[0].final_record.rel_test_error_fro
                / c[1].final_record.rel_test_error_fro,
            large: c[0].clone(),
            small: c[1].clone(),
        })
        .collect();
    Ok(TraintestResult {
        alpha_large: a_large,
        alpha_large_rule: "1/sqrt(max(n1+n2, k))".into(),
        alpha_small: a_small,
        pairs,
    })
}

// ---------------------------------------------------------------- error vs alpha

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorAlphaPoint {
    pub seed: u64,
    pub alpha: f64,
    pub converged: bool,
    /// `||VW^T - X||_F^2 / ||X||_F^2`.
    pub rel_test_error_fro_sq: f64,
    pub rel_test_error_spec: f64,
    pub final_train_loss: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorAlphaResult {
    pub points: Vec<ErrorAlphaPoint>,
    /// Alphas left out of the fits because the run did not reach the loss stop.
    pub excluded: Vec<ErrorAlphaPoint>,
    /// `log(rel_test_error_fro_sq)` against `log(alpha)`, converged points only.
    pub fit_fro_sq: Option<LinearFit>,
    /// `log(rel_test_error_spec)` against `log(alpha)`, converged points only.
    pub fit_spec: Option<LinearFit>,
    pub sweep_csv: String,
}

pub const ERROR_ALPHA_COLUMNS: [&str; 7] = [
    "seed",
    "alpha",
    "converged",
    "rel_test_error_fro_sq",
    "rel_test_error_spec",
    "final_train_loss",
    "iterations",
];

pub fn exp_error_alpha(s: &Settings) -> Result<ErrorAlphaResult> {
    let problems = problems(s, s.population)?;
    let mu = s.mus_times_norm_x[0];
    let grid: Vec<(&Problem, f64)> = problems
        .iter()
        .flat_map(|p| s.alphas.iter().map(move |&a| (p, a)))
        .collect();
    let points = grid
        .par_iter()
        .map(|&(p, a)| {
            let file = format!("run_error_alpha{}_seed{}.csv", tag(a), p.seed);
            let (r, _) = run_one(s, p, s.k, a, mu, file)?;
            Ok(ErrorAlphaPoint {
                seed: r.seed,
                alpha: a,
                converged: r.converged,
                rel_test_error_fro_sq: r.final_record.rel_test_error_fro.powi(2),
                rel_test_error_spec: r.final_record.rel_test_error_spec,
                final_train_loss: r.final_record.train_loss,
                iterations: r.iterations_run,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let used: Vec<&ErrorAlphaPoint> = points.iter().filter(|p| p.converged).collect();
    let log_a: Vec<f64> = used.iter().map(|p| p.alpha.ln()).collect();
    let fit = |f: fn(&ErrorAlphaPoint) -> f64| {
        let ys: Vec<f64> = used.iter().map(|p| f(p).ln()).collect();
        linear_fit(&log_a, &ys)
    };
    let fit_fro_sq = fit(|p| p.rel_test_error_fro_sq);
    let fit_spec = fit(|p| p.rel_test_error_spec);
    let rows: Vec<Vec<Cell>> = points
        .iter()
        .map(|p| {
            vec![
                Cell::Int(p.seed),
                p.alpha.into(),
                p.converged.into(),
                p.rel_test_error_fro_sq.into(),
                p.rel_test_error_spec.into(),
                p.final_train_loss.into(),
                p.iterations.into(),
            ]
        })
        .collect();
    let sweep_csv = "error_alpha.csv".to_string();
    write_table(&s.out_dir.join(&sweep_csv), &ERROR_ALPHA_COLUMNS, &rows)?;
    let excluded = points.iter().filter(|p| !p.converged).cloned().collect();
    Ok(ErrorAlphaResult {
        points,
        excluded,
        fit_fro_sq,
        fit_spec,
        sweep_csv,
    })
}

// ---------------------------------------------------------------- imbalance vs step size

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepsizeResult {
    pub runs: Vec<RunSummary>,
    /// `plateau_vw_imbalance` against `mu * ||X||`, pooled over seeds.
    pub fit: Option<LinearFit>,
    pub sweep_csv: String,
}

pub const STEPSIZE_COLUMNS: [&str; 7] = [
    "seed",
    "mu_times_normX",
    "plateau_vw_imbalance",
    "final_vw_imbalance",
    "converged",
    "final_train_loss",
    "iterations",
];

pub fn exp_imbalance_stepsize(s: &Settings) -> Result<StepsizeResult> {
    let problems = problems(s, s.population)?;
    let alpha = s.alphas[0];
    let grid: Vec<(&Problem, f64)> = problems
        .iter()
        .flat_map(|p| s.mus_times_norm_x.iter().map(move |&mu| (p, mu)))
        .collect();
    let runs = grid
        .par_iter()
        .map(|&(p, mu)| {
            let file = format!("run_stepsize_mu{}_seed{}.csv", tag(mu), p.seed);
            run_one(s, p, s.k, alpha, mu, file).map(|(summary, _)| summary)
        })
        .collect::<Result<Vec<_>>>()?;
    let xs: Vec<f64> = runs.iter().map(|r| r.mu_times_norm_x).collect();
    let ys: Vec<f64> = runs.iter().map(|r| r.plateau_vw_imbalance).collect();
    let fit = linear_fit(&xs, &ys);
    let rows: Vec<Vec<Cell>> = runs
        .iter()
        .map(|r| {
            vec![
                Cell::Int(r.seed),
                r.mu_times_norm_x.into(),
                r.plateau_vw_imbalance.into(),
                r.final_record.vw_imbalance.into(),
                r.converged.into(),
                r.final_record.train_loss.into(),
                r.iterations_run.into(),
            ]
        })
        .collect();
    let sweep_csv = "imbalance_stepsize.csv".to_string();
    write_table(&s.out_dir.join(&sweep_csv), &STEPSIZE_COLUMNS, &rows)?;
    Ok(StepsizeResult {
        runs,
        fit,
        sweep_csv,
    })
}

// ---------------------------------------------------------------- coupling

pub const COUPLING_COLUMNS: [&str; 4] = [
    "iter",
    "vw_imbalance",
    "two_imbalance_nuisance",
    "two_imbalance_signal_angle",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingRun {
    pub run: RunSummary,
    pub t_local: Option<usize>,
    /// Median of `2 imbalance_nuisance / vw_imbalance` over records at or after `t_local`.
    pub median_nuisance_ratio_after_local: Option<f64>,
    /// Largest `2 imbalance_signal_angle` over the run.
    pub max_two_signal_angle: Option<f64>,
    pub coupling_csv: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingResult {
    pub runs: Vec<CouplingRun>,
}

pub fn coupling_stats(
    records: &[DiagnosticsRecord],
    t_local: Option<usize>,
) -> (Option<f64>, Option<f64>) {
    let ratios: Vec<f64> = t_local
        .map(|t0| {
            records
                .iter()
                .filter(|r| r.iter >= t0 && r.vw_imbalance > 0.0)
                .filter_map(|r| r.imbalance_nuisance.map(|n| 2.0 * n / r.vw_imbalance))
                .collect()
        })
        .unwrap_or_default();
    let max_angle = records
        .iter()
        .filter_map(|r| r.imbalance_signal_angle.map(|a| 2.0 * a))
        .reduce(f64::max);
    (median(&ratios), max_angle)
}

pub fn exp_coupling(s: &Settings) -> Result<CouplingResult> {
    let problems = problems(s, s.population)?;
    let alpha = s.alphas[0];
    let mu = s.mus_times_norm_x[0];
    let runs = problems
        .par_iter()
        .map(|p| {
            let (run, traj) = run_one(
                s,
                p,
                s.k,
                alpha,
                mu,
                format!("run_coupling_seed{}.csv", p.seed),
            )?;
            let rows: Vec<Vec<Cell>> = traj
                .records
                .iter()
                .map(|r| {
                    vec![
                        r.iter.into(),
                        r.vw_imbalance.into(),
                        r.imbalance_nuisance.map(|x| 2.0 * x).into(),
                        r.imbalance_signal_angle.map(|x| 2.0 * x).into(),
                    ]
                })
                .collect();
            let coupling_csv = format!("coupling_seed{}.csv", p.seed);
            write_table(&s.out_dir.join(&coupling_csv), &COUPLING_COLUMNS, &rows)?;
            let t_local = run.phases.t_local;
            let (ratio, angle) = coupling_stats(&traj.records, t_local);
            Ok(CouplingRun {
                run,
                t_local,
                median_nuisance_ratio_after_local: ratio,
                max_two_signal_angle: angle,
                coupling_csv,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CouplingResult { runs })
}

// ---------------------------------------------------------------- lemma audit

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaAuditRun {
    pub seed: u64,
    pub alpha: f64,
    #[serde(rename = "mu_times_normX")]
    pub mu_times_norm_x: f64,
    pub report: AuditReport,
    pub report_json: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaAuditResult {
    pub runs: Vec<LemmaAuditRun>,
}

pub fn exp_lemma_audit(s: &Settings) -> Result<LemmaAuditResult> {
    let problems = problems(s, s.population)?;
    let alpha = s.alphas[0];
    let mu = s.mus_times_norm_x[0];
    let opts = AuditOptions {
        every: s.audit_every,
        rip_every: s.rip_every,
        rip_trials: s.rip_trials,
        ..AuditOptions::default()
    };
    let runs = problems
        .par_iter()
        .map(|p| {
            let cfg = p.gd_config(s, s.k, alpha, mu);
            let report = audit_trajectory(&p.gt, &p.op, &cfg, &s.lemma_constants, &opts)?;
            let report_json = format!("lemma_audit_seed{}.json", p.seed);
            write_json(&s.out_dir.join(&report_json), &report)?;
            eprintln!(
                "msl: {report_json} after {} iterations",
                report.iterations_run
            );
            Ok(LemmaAuditRun {
                seed: p.seed,
                alpha,
                mu_times_norm_x: mu,
                report,
                report_json,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LemmaAuditResult { runs })
}

// ---------------------------------------------------------------- RIP probe

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RipProbeResult {
    /// Each `delta_lower` is a lower bound: the largest distortion seen on
    /// random probes, not the supremum over all low-rank matrices.
    pub estimates: Vec<(u64, RipEstimate)>,
    pub sweep_csv: String,
}

pub fn exp_rip_probe(s: &Settings) -> Result<RipProbeResult> {
    let problems = problems(s, s.population)?;
    let grid: Vec<(&Problem, usize)> = problems
        .iter()
        .flat_map(|p| s.rip_orders.iter().map(move |&o| (p, o)))
        .collect();
    let estimates = grid
        .par_iter()
        .map(|&(p, order)| {
            let est =
                p.op.estimate_rip_constant(order, s.rip_trials, derive_seed(p.seed, "rip_probe"))?;
            Ok((p.seed, est))
        })
        .collect::<Result<Vec<_>>>()?;
    let rows: Vec<Vec<Cell>> = estimates
        .iter()
        .map(|(seed, e)| {
            vec![
                Cell::Int(*seed),
                e.order.into(),
                e.trials.into(),
                e.delta_lower.into(),
            ]
        })
        .collect();
    let sweep_csv = "rip_probe.csv".to_string();
    write_table(
        &s.out_dir.join(&sweep_csv),
        &["seed", "order", "trials", "delta_lower"],
        &rows,
    )?;
    Ok(RipProbeResult {
        estimates,
        sweep_csv,
    })
}

// ---------------------------------------------------------------- power method

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerCompareRun {
    pub seed: u64,
    pub f_norm: f64,
    pub z0_norm: f64,
    pub window: Option<usize>,
    pub t_max: usize,
    pub rows_in_window: usize,
    pub violations: usize,
    pub csv: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerCompareResult {
    pub runs: Vec<PowerCompareRun>,
}

pub fn exp_power_compare(s: &Settings) -> Result<PowerCompareResult> {
    let problems = problems(s, s.population)?;
    let alpha = s.alphas[0];
    let mu = s.mus_times_norm_x[0];
    let runs = problems
        .par_iter()
        .map(|p| {
            let cfg = p.gd_config(s, s.k, alpha, mu);
            // Default horizon: twice the window, capped by max_iters.
            let t_max = match s.t_max {
                Some(t) => t,
                None => {
                    let probe = power_method_comparison(&p.gt, &p.op, &cfg, 0)?;
                    probe
                        .window
                        .map_or(s.max_iters, |w| w.saturating_mul(2).max(1))
                        .min(s.max_iters)
                }
            };
            let cmp = power_method_comparison(&p.gt, &p.op, &cfg, t_max)?;
            let rows: Vec<Vec<Cell>> = cmp
                .rows
                .iter()
                .map(|r| {
                    vec![
                        r.t.into(),
                        r.e_norm.into(),
                        r.bound.into(),
                        r.in_window.into(),
                    ]
                })
                .collect();
            let csv = format!("power_compare_seed{}.csv", p.seed);
            write_table(
                &s.out_dir.join(&csv),
                &["t", "e_norm", "bound", "in_window"],
                &rows,
            )?;
            Ok(PowerCompareRun {
                seed: p.seed,
                f_norm: cmp.f_norm,
                z0_norm: cmp.z0_norm,
                window: cmp.window,
                t_max,
                rows_in_window: cmp.rows.iter().filter(|r| r.in_window).count(),
                violations: cmp.violations(),
                csv,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PowerCompareResult { runs })
}

pub(crate) fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}
