//! Flat `key = value` run configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Every optimizer, generator,
//! SVM and harness setting has one key; unknown keys are an error.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::error::{param, Result};
use crate::eval::{EvalConfig, TuningGrid};
use crate::onda::{Hyperparams, MappingInit};
use crate::svm::SvmParams;
use crate::synth::SynthConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub hyperparams: Hyperparams,
    pub synth: SynthConfig,
    pub svm: SvmParams,
    pub eval: EvalConfig,
    pub grid: TuningGrid,
    /// Subspace dimension for the alignment benchmarks.
    pub subspace_dim: usize,
    /// Candidate subspace dimensions for leave-one-out tuning.
    pub subspace_grid: Vec<usize>,
    /// Fixed graph bandwidth; `None` uses the median heuristic.
    pub sigma: Option<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            hyperparams: Hyperparams::default(),
            synth: SynthConfig::default(),
            svm: SvmParams::default(),
            eval: EvalConfig::default(),
            grid: TuningGrid::default(),
            subspace_dim: 10,
            subspace_grid: vec![2, 5, 10, 20, 50],
            sigma: None,
        }
    }
}

fn num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| param(format!("invalid value {value:?} for key {key}")))
}

fn list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(|v| num(key, v.trim()))
        .collect::<Result<Vec<T>>>()
        .and_then(|v| {
            if v.is_empty() {
                Err(param(format!("empty list for key {key}")))
            } else {
                Ok(v)
            }
        })
}

fn optional(key: &str, value: &str) -> Result<Option<f64>> {
    if value == "auto" {
        Ok(None)
    } else {
        num(key, value).map(Some)
    }
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::default();
        cfg.apply_text(&text)?;
        Ok(cfg)
    }

    /// Applies every `key = value` line of `text` on top of the current values.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        let mut seen = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| param(format!("line {}: expected key = value", n + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            if seen.insert(key.to_string(), n + 1).is_some() {
                return Err(param(format!("line {}: duplicate key {key}", n + 1)));
            }
            self.set(key, value)
                .map_err(|e| param(format!("line {}: {e}", n + 1)))?;
        }
        self.validate()
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let hp = &mut self.hyperparams;
        let sy = &mut self.synth;
        let sv = &mut self.svm;
        match key {
            "lambda" => hp.lambda = num(key, value)?,
            "lambda1" => hp.lambda1 = num(key, value)?,
            "lambda2" => hp.lambda2 = num(key, value)?,
            "delta" => hp.delta = num(key, value)?,
            "r" => hp.rank = num(key, value)?,
            "m" => hp.latent_dim = num(key, value)?,
            "L1" => hp.lipschitz_u = num(key, value)?,
            "L2" => hp.lipschitz_w = num(key, value)?,
            "w1" => hp.extrapolation_u = num(key, value)?,
            "w2" => hp.extrapolation_w = num(key, value)?,
            "iters" => hp.iters = num(key, value)?,
            "tol" => hp.tol = num(key, value)?,
            "mapping_init" => hp.mapping_init = MappingInit::from_name(value)?,
            "n_subjects" => sy.n_subjects = num(key, value)?,
            "frames_per_subject" => sy.frames_per_subject = num(key, value)?,
            "cadence_minutes" => sy.cadence_minutes = num(key, value)?,
            "transition_frame" => sy.transition_frame = num(key, value)?,
            "exclusion_half_width" => sy.exclusion_half_width = num(key, value)?,
            "frame_height" => sy.frame_height = num(key, value)?,
            "frame_width" => sy.frame_width = num(key, value)?,
            "compression_window" => sy.compression_window = num(key, value)?,
            "graph_window" => sy.graph_window = num(key, value)?,
            "feature_dim" => sy.feature_dim = num(key, value)?,
            "n_modes" => sy.n_modes = num(key, value)?,
            "viable_spread" => sy.viable_spread = num(key, value)?,
            "unviable_spread" => sy.unviable_spread = num(key, value)?,
            "persistence" => sy.persistence = num(key, value)?,
            "class_separation" => sy.class_separation = num(key, value)?,
            "noise" => sy.noise = num(key, value)?,
            "offset_spread" => sy.offset_spread = num(key, value)?,
            "scale_spread" => sy.scale_spread = num(key, value)?,
            "rotation" => sy.rotation = num(key, value)?,
            "shift" => sy.shift = num(key, value)?,
            "graph_per_subject" => sy.graph_per_subject = num(key, value)?,
            "seed" => sy.seed = num(key, value)?,
            "svm_lambda" => sv.lambda = num(key, value)?,
            "svm_delta" => sv.delta = num(key, value)?,
            "svm_rank" => sv.rank = num(key, value)?,
            "svm_max_iter" => sv.max_iter = num(key, value)?,
            "svm_tol" => sv.tol = num(key, value)?,
            "refresh_every" => self.eval.refresh_every = num(key, value)?,
            "lambda1_grid" => self.grid.lambda1 = list(key, value)?,
            "lambda2_grid" => self.grid.lambda2 = list(key, value)?,
            "subspace_dim" => self.subspace_dim = num(key, value)?,
            "subspace_grid" => self.subspace_grid = list(key, value)?,
            "gamma" => hp.gamma = optional(key, value)?,
            "sigma" => self.sigma = optional(key, value)?,
            other => return Err(param(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.hyperparams.validate()?;
        self.synth.validate()?;
        self.svm.validate()?;
        if self.eval.refresh_every == 0 {
            return Err(param("refresh_every must be at least 1"));
        }
        if self.subspace_dim == 0 || self.subspace_grid.contains(&0) {
            return Err(param("subspace dimensions must be at least 1"));
        }
        if let Some(v) = self.sigma {
            if !(v > 0.0) || !v.is_finite() {
                return Err(param("sigma must be positive"));
            }
        }
        Ok(())
    }

    /// Every key with its current value, in the same syntax [`RunConfig::apply_text`] reads.
    pub fn to_text(&self) -> String {
        let hp = &self.hyperparams;
        let sy = &self.synth;
        let sv = &self.svm;
        let auto = |v: Option<f64>| v.map_or("auto".to_string(), |x| x.to_string());
        let pairs: Vec<(&str, String)> = vec![
            ("lambda", hp.lambda.to_string()),
            ("lambda1", hp.lambda1.to_string()),
            ("lambda2", hp.lambda2.to_string()),
            ("delta", hp.delta.to_string()),
            ("r", hp.rank.to_string()),
            ("m", hp.latent_dim.to_string()),
            ("L1", hp.lipschitz_u.to_string()),
            ("L2", hp.lipschitz_w.to_string()),
            ("w1", hp.extrapolation_u.to_string()),
            ("w2", hp.extrapolation_w.to_string()),
            ("iters", hp.iters.to_string()),
            ("tol", hp.tol.to_string()),
            ("mapping_init", hp.mapping_init.name().to_string()),
            ("n_subjects", sy.n_subjects.to_string()),
            ("frames_per_subject", sy.frames_per_subject.to_string()),
            ("cadence_minutes", sy.cadence_minutes.to_string()),
            ("transition_frame", sy.transition_frame.to_string()),
            ("exclusion_half_width", sy.exclusion_half_width.to_string()),
            ("frame_height", sy.frame_height.to_string()),
            ("frame_width", sy.frame_width.to_string()),
            ("compression_window", sy.compression_window.to_string()),
            ("graph_window", sy.graph_window.to_string()),
            ("feature_dim", sy.feature_dim.to_string()),
            ("n_modes", sy.n_modes.to_string()),
            ("viable_spread", sy.viable_spread.to_string()),
            ("unviable_spread", sy.unviable_spread.to_string()),
            ("persistence", sy.persistence.to_string()),
            ("class_separation", sy.class_separation.to_string()),
            ("noise", sy.noise.to_string()),
            ("offset_spread", sy.offset_spread.to_string()),
            ("scale_spread", sy.scale_spread.to_string()),
            ("rotation", sy.rotation.to_string()),
            ("shift", sy.shift.to_string()),
            ("graph_per_subject", sy.graph_per_subject.to_string()),
            ("seed", sy.seed.to_string()),
            ("svm_lambda", sv.lambda.to_string()),
            ("svm_delta", sv.delta.to_string()),
            ("svm_rank", sv.rank.to_string()),
            ("svm_max_iter", sv.max_iter.to_string()),
            ("svm_tol", sv.tol.to_string()),
            ("refresh_every", self.eval.refresh_every.to_string()),
            ("lambda1_grid", join(&self.grid.lambda1)),
            ("lambda2_grid", join(&self.grid.lambda2)),
            ("subspace_dim", self.subspace_dim.to_string()),
            ("subspace_grid", join(&self.subspace_grid)),
            ("gamma", auto(hp.gamma)),
            ("sigma", auto(self.sigma)),
        ];
        let mut out = String::new();
        for (k, v) in pairs {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_keys_comments_and_lists() {
        let mut cfg = RunConfig::default();
        cfg.apply_text("# comment\nlambda1 = 40\n\nlambda2_grid = 0.002, 0.004\nmapping_init = whitening\ngamma = 2.5\n")
            .unwrap();
        assert_eq!(cfg.hyperparams.lambda1, 40.0);
        assert_eq!(cfg.grid.lambda2, vec![0.002, 0.004]);
        assert_eq!(cfg.hyperparams.mapping_init, MappingInit::KernelWhitening);
        assert_eq!(cfg.hyperparams.gamma, Some(2.5));
    }

    #[test]
    fn rejects_unknown_and_duplicate_keys() {
        assert!(RunConfig::default().apply_text("lamda = 1").is_err());
        assert!(RunConfig::default().apply_text("lambda = 1\nlambda = 2").is_err());
        assert!(RunConfig::default().apply_text("lambda 1").is_err());
        assert!(RunConfig::default().apply_text("lambda = -1").is_err());
    }

    #[test]
    fn text_round_trip() {
        let mut cfg = RunConfig::default();
        cfg.apply_text("seed = 7\nsigma = 0.5\nsubspace_grid = 3,4").unwrap();
        let mut back = RunConfig::default();
        back.apply_text(&cfg.to_text()).unwrap();
        assert_eq!(back, cfg);
    }
}
