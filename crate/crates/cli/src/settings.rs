//! Optimizer settings as stored in problem files, plus the TOML config
//! overlay. Precedence is flag, then config file, then the stored value.

use std::path::Path;

use dipole_ident::{GreedySettings, MonotonicSettings, MultistartSettings, UpdateRule};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rule {
    Newton,
    Theta,
}

/// Everything that shapes precomputation and identification.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    pub beta: f64,
    pub theta: f64,
    pub tol: f64,
    pub max_iters: usize,
    pub update_rule: Rule,
    pub init_amplitude: f64,
    pub field_seed: u64,
    pub restarts: usize,
    pub init_scale: f64,
    pub convergence_tol: f64,
    pub max_evals: usize,
    pub multistart_seed: u64,
}

impl Settings {
    pub fn with_seeds(field_seed: u64, multistart_seed: u64) -> Self {
        let g = GreedySettings::default();
        Self {
            beta: g.monotonic.beta,
            theta: g.monotonic.theta,
            tol: g.monotonic.tol,
            max_iters: g.monotonic.max_iters,
            update_rule: Rule::Newton,
            init_amplitude: g.init_amplitude,
            field_seed,
            restarts: g.multistart.restarts,
            init_scale: g.multistart.init_scale,
            convergence_tol: g.multistart.convergence_tol,
            max_evals: g.multistart.max_evals,
            multistart_seed,
        }
    }

    pub fn multistart(&self) -> MultistartSettings {
        MultistartSettings {
            restarts: self.restarts,
            init_scale: self.init_scale,
            convergence_tol: self.convergence_tol,
            max_evals: self.max_evals,
            seed: self.multistart_seed,
        }
    }

    pub fn greedy(&self) -> GreedySettings {
        GreedySettings {
            monotonic: MonotonicSettings {
                beta: self.beta,
                theta: self.theta,
                tol: self.tol,
                max_iters: self.max_iters,
                update_rule: match self.update_rule {
                    Rule::Newton => UpdateRule::NewtonStep,
                    Rule::Theta => UpdateRule::ThetaImplicit,
                },
            },
            multistart: self.multistart(),
            init_amplitude: self.init_amplitude,
            field_seed: self.field_seed,
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let g = self.greedy();
        g.monotonic.validate().map_err(|e| CliError::usage(e.to_string()))?;
        g.multistart.validate().map_err(|e| CliError::usage(e.to_string()))?;
        if !(self.init_amplitude >= 0.0 && self.init_amplitude.is_finite()) {
            return Err(CliError::usage("init_amplitude must be non-negative"));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        crate::io::sha256_hex(serde_json::to_string(self).expect("settings serialize").as_bytes())
    }

    pub fn apply(&mut self, o: &SettingsOverlay) {
        macro_rules! set {
            ($($f:ident),*) => { $(if let Some(v) = o.$f { self.$f = v; })* };
        }
        set!(beta, theta, tol, max_iters, update_rule, init_amplitude, restarts, init_scale, convergence_tol, max_evals);
    }
}

/// Optional overrides, from a config file or from flags.
#[derive(Debug, Clone, Copy, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SettingsOverlay {
    pub beta: Option<f64>,
    pub theta: Option<f64>,
    pub tol: Option<f64>,
    pub max_iters: Option<usize>,
    pub update_rule: Option<Rule>,
    pub init_amplitude: Option<f64>,
    pub restarts: Option<usize>,
    pub init_scale: Option<f64>,
    pub convergence_tol: Option<f64>,
    pub max_evals: Option<usize>,
}

/// Contents of a `--config` TOML file. Problem keys matter only to
/// `generate-problem`; the `[settings]` table applies everywhere.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub seed: Option<u64>,
    pub paper: Option<bool>,
    pub dim: Option<usize>,
    pub basis_size: Option<usize>,
    pub steps: Option<usize>,
    pub final_time: Option<f64>,
    pub noise_sigma: Option<f64>,
    #[serde(default)]
    pub settings: SettingsOverlay,
}

impl ConfigFile {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = crate::io::read_text(p)?;
                toml::from_str(&text).map_err(|e| CliError::usage(format!("{}: {e}", p.display())))
            }
        }
    }
}
