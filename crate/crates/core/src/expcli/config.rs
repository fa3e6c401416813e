//! Experiment configuration: the JSON file format, per-experiment defaults
//! and the resolved settings every driver reads.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::diagnostics::LemmaConstants;
use crate::error::{Error, Result};
use crate::optimizer::{GdConfig, DEFAULT_STOP_TRAIN_LOSS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Run,
    ImbalanceAlpha,
    Traintest,
    ErrorAlpha,
    ImbalanceStepsize,
    Coupling,
    LemmaAudit,
    RipProbe,
    PowerCompare,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Run => "run",
            Experiment::ImbalanceAlpha => "imbalance_alpha",
            Experiment::Traintest => "traintest",
            Experiment::ErrorAlpha => "error_alpha",
            Experiment::ImbalanceStepsize => "imbalance_stepsize",
            Experiment::Coupling => "coupling",
            Experiment::LemmaAudit => "lemma_audit",
            Experiment::RipProbe => "rip_probe",
            Experiment::PowerCompare => "power_compare",
        }
    }
}

/// Contents of a `--config` file. Every field is optional; absent fields
/// take the experiment's defaults and command-line flags override both.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Option<Experiment>,
    pub n1: Option<usize>,
    pub n2: Option<usize>,
    pub r: Option<usize>,
    pub m: Option<usize>,
    pub k: Option<usize>,
    pub alphas: Option<Vec<f64>>,
    #[serde(rename = "mus_times_normX")]
    pub mus_times_norm_x: Option<Vec<f64>>,
    pub seeds: Option<Vec<u64>>,
    pub max_iters: Option<usize>,
    pub out_dir: Option<PathBuf>,
    pub with_delta: Option<bool>,
    pub record_every: Option<usize>,
    pub delta_every: Option<usize>,
    pub stop_train_loss: Option<f64>,
    pub population: Option<bool>,
    pub lemma_constants: Option<LemmaConstants>,
    pub audit_every: Option<usize>,
    pub rip_every: Option<usize>,
    pub rip_trials: Option<usize>,
    pub rip_orders: Option<Vec<usize>>,
    pub t_max: Option<usize>,
}

impl ExperimentConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::Config {
                field: if path == "." { "<root>".into() } else { path },
                message: e.into_inner().to_string(),
            }
        })
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config {
            field: "--config".into(),
            message: format!("cannot read {}: {e}", path.display()),
        })?;
        Self::from_json_str(&text)
    }

    /// Fields set in `other` win.
    pub fn overlay(self, other: ExperimentConfig) -> ExperimentConfig {
        macro_rules! pick {
            ($($f:ident),*) => { ExperimentConfig { $($f: other.$f.or(self.$f)),* } };
        }
        pick!(
            experiment,
            n1,
            n2,
            r,
            m,
            k,
            alphas,
            mus_times_norm_x,
            seeds,
            max_iters,
            out_dir,
            with_delta,
            record_every,
            delta_every,
            stop_train_loss,
            population,
            lemma_constants,
            audit_every,
            rip_every,
            rip_trials,
            rip_orders,
            t_max
        )
    }
}

/// Fully resolved parameters of one experiment invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Settings {
    pub experiment: Experiment,
    pub n1: usize,
    pub n2: usize,
    pub r: usize,
    pub m: usize,
    pub k: usize,
    pub alphas: Vec<f64>,
    #[serde(rename = "mus_times_normX")]
    pub mus_times_norm_x: Vec<f64>,
    pub seeds: Vec<u64>,
    pub max_iters: usize,
    pub out_dir: PathBuf,
    pub with_delta: bool,
    pub record_every: usize,
    pub delta_every: usize,
    pub stop_train_loss: Option<f64>,
    pub population: bool,
    pub lemma_constants: LemmaConstants,
    pub audit_every: usize,
    pub rip_every: usize,
    pub rip_trials: usize,
    pub rip_orders: Vec<usize>,
    pub t_max: Option<usize>,
}

/// Default iteration cap: the desk-scale budget of `2e5` steps.
pub const DEFAULT_MAX_ITERS: usize = 200_000;

impl Settings {
    pub fn defaults(experiment: Experiment) -> Self {
        let (k, alphas, mus): (usize, Vec<f64>, Vec<f64>) = match experiment {
            Experiment::ImbalanceAlpha => (10, vec![1e-2, 1e-3, 1e-4, 1e-5], vec![0.01]),
            Experiment::Traintest => (40, vec![1e-6], vec![0.25]),
            Experiment::ErrorAlpha => (40, vec![1e-4, 1e-5, 1e-6, 1e-7], vec![0.25]),
            Experiment::ImbalanceStepsize => (
                10,
                vec![1e-5],
                (1..=10).map(|i| f64::from(i) / 100.0).collect(),
            ),
            Experiment::Coupling => (10, vec![1e-6], vec![0.01]),
            Experiment::Run
            | Experiment::LemmaAudit
            | Experiment::RipProbe
            | Experiment::PowerCompare => (10, vec![1e-5], vec![0.01]),
        };
        Settings {
            experiment,
            n1: 100,
            n2: 50,
            r: 5,
            m: 2000,
            k,
            alphas,
            mus_times_norm_x: mus,
            seeds: vec![1],
            max_iters: DEFAULT_MAX_ITERS,
            out_dir: PathBuf::from("out"),
            with_delta: false,
            record_every: GdConfig::default_record_every(DEFAULT_MAX_ITERS),
            delta_every: 50,
            stop_train_loss: Some(DEFAULT_STOP_TRAIN_LOSS),
            population: false,
            lemma_constants: LemmaConstants::default(),
            audit_every: 1,
            rip_every: 100,
            rip_trials: 200,
            rip_orders: vec![11],
            t_max: None,
        }
    }

    /// Applies a config on top of the experiment defaults and validates.
    pub fn resolve(experiment: Experiment, cfg: &ExperimentConfig) -> Result<Self> {
        if let Some(e) = cfg.experiment {
            if e != experiment {
                return Err(Error::Config {
                    field: "experiment".into(),
                    message: format!(
                        "config names `{}` but the subcommand is `{}`",
                        e.name(),
                        experiment.name()
                    ),
                });
            }
        }
        let mut s = Settings::defaults(experiment);
        macro_rules! take {
            ($($f:ident),*) => { $( if let Some(v) = cfg.$f.clone() { s.$f = v; } )* };
        }
        take!(
            n1,
            n2,
            r,
            m,
            k,
            alphas,
            mus_times_norm_x,
            seeds,
            max_iters,
            out_dir,
            with_delta,
            delta_every,
            population,
            lemma_constants,
            audit_every,
            rip_every,
            rip_trials,
            rip_orders
        );
        s.record_every = cfg
            .record_every
            .unwrap_or_else(|| GdConfig::default_record_every(s.max_iters));
        if cfg.rip_orders.is_none() {
            s.rip_orders = vec![(2 * s.r + 1).min(s.n1.min(s.n2))];
        }
        if let Some(v) = cfg.stop_train_loss {
            s.stop_train_loss = (v > 0.0).then_some(v);
        }
        s.t_max = cfg.t_max;
        s.validate()?;
        Ok(s)
    }

    fn validate(&self) -> Result<()> {
        let bad = |field: &str, message: String| {
            Err(Error::Config {
                field: field.into(),
                message,
            })
        };
        for (name, v) in [
            ("n1", self.n1),
            ("n2", self.n2),
            ("r", self.r),
            ("k", self.k),
            ("max_iters", self.max_iters),
        ] {
            if v == 0 {
                return bad(name, "must be at least 1".into());
            }
        }
        if self.r > self.n1.min(self.n2) {
            return bad(
                "r",
                format!("must not exceed min(n1, n2) = {}", self.n1.min(self.n2)),
            );
        }
        if self.m == 0 && !self.population {
            return bad("m", "must be at least 1 for an empirical operator".into());
        }
        if self.alphas.is_empty() {
            return bad("alphas", "must not be empty".into());
        }
        if let Some(a) = self.alphas.iter().find(|a| !(**a >= 0.0) || !a.is_finite()) {
            return bad(
                "alphas",
                format!("entries must be finite and >= 0, got {a}"),
            );
        }
        if self.mus_times_norm_x.is_empty() {
            return bad("mus_times_normX", "must not be empty".into());
        }
        if let Some(mu) = self
            .mus_times_norm_x
            .iter()
            .find(|m| !(**m > 0.0) || !m.is_finite())
        {
            return bad(
                "mus_times_normX",
                format!("entries must be finite and > 0, got {mu}"),
            );
        }
        if self.seeds.is_empty() {
            return bad("seeds", "must not be empty".into());
        }
        if self.record_every == 0 {
            return bad("record_every", "must be at least 1".into());
        }
        if self.audit_every == 0 || self.rip_every == 0 {
            return bad("audit_every", "audit strides must be at least 1".into());
        }
        if self.rip_trials == 0 {
            return bad("rip_trials", "must be at least 1".into());
        }
        if let Some(o) = self
            .rip_orders
            .iter()
            .find(|o| **o == 0 || **o > self.n1.min(self.n2))
        {
            return bad(
                "rip_orders",
                format!("order {o} outside 1..={}", self.n1.min(self.n2)),
            );
        }
        Ok(())
    }
}
