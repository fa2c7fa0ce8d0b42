//! Flat JSON experiment configuration.

use std::path::{Path, PathBuf};

use omd_curl::algorithms::RunConfig;
use omd_curl::estimation::Estimator;
use omd_curl::mirror::AlphaSchedule;
use serde::{Deserialize, Serialize};

use crate::error::HarnessError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKind {
    MultiObjective,
    Constrained,
    Custom,
    RandomMdp,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    FullInfo,
    Greedy,
    BanditRl,
    BanditCurlEntropic,
    BanditCurlLogbarrier,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorKind {
    Empirical,
    Laplace,
    Projected,
}

/// Objective of the `random-mdp` and `custom` tasks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObjectiveChoice {
    Quadratic,
    Linear,
    Bernoulli,
    Constrained,
    MultiTarget,
}

/// Everything needed to reproduce a run, as one flat JSON object.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub task: TaskKind,
    pub algorithm: Algorithm,
    pub episodes: usize,
    pub tau: f64,
    pub delta: f64,
    pub gamma: Option<f64>,
    /// Constant smoothing weight; `null` selects `1 / (t + 1)`.
    pub alpha: Option<f64>,
    pub bonus: bool,
    pub bonus_scale: f64,
    pub confidence: f64,
    pub estimator: EstimatorKind,
    pub known_kernel: bool,
    /// Share transition counts across layers.
    pub pooled_counts: bool,
    pub eps: f64,
    pub reps: usize,
    pub seed: u64,
    pub out_dir: Option<PathBuf>,
    /// Episodes at which heatmaps are written; empty means the last one.
    pub snapshots: Vec<usize>,
    /// Layers of the heatmaps; empty means the last layer.
    pub heatmap_layers: Vec<usize>,

    pub horizon: usize,
    pub grid_side: usize,
    pub grid_noise: f64,
    pub initial_cell: [usize; 2],
    pub doors: Option<Vec<[usize; 2]>>,
    /// Target cells; defaults depend on the task.
    pub targets: Option<Vec<[usize; 2]>>,
    pub constraint_cells: Option<Vec<[usize; 2]>>,
    pub reward_value: f64,
    pub cost_value: f64,

    pub states: usize,
    pub actions: usize,
    pub mdp_seed: u64,
    pub kernel_floor: f64,
    pub objective: ObjectiveChoice,
    pub quadratic_weight: f64,
    /// Stationary kernel rows laid out `(x * A + a) * S + x'`.
    pub kernel: Option<Vec<f64>>,
    /// Initial state-action distribution laid out `x * A + a`.
    pub mu0: Option<Vec<f64>>,
    /// Stationary per-layer vectors laid out `x * A + a`.
    pub loss: Option<Vec<f64>>,
    pub target: Option<Vec<f64>>,
    pub reward: Option<Vec<f64>>,
    pub cost: Option<Vec<f64>>,
    pub target_states: Option<Vec<usize>>,

    pub comparator_iters: usize,
    pub comparator_tau: f64,
    /// Episode range of the log-log regret slope fit.
    pub slope_window: [usize; 2],
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            task: TaskKind::MultiObjective,
            algorithm: Algorithm::FullInfo,
            episodes: 1000,
            tau: 0.01,
            delta: 0.1,
            gamma: None,
            alpha: None,
            bonus: true,
            bonus_scale: 1.0,
            confidence: 0.05,
            estimator: EstimatorKind::Empirical,
            known_kernel: false,
            pooled_counts: false,
            eps: 0.1,
            reps: 5,
            seed: 0,
            out_dir: None,
            snapshots: Vec::new(),
            heatmap_layers: Vec::new(),
            horizon: 40,
            grid_side: 11,
            grid_noise: 0.1,
            initial_cell: [0, 0],
            doors: None,
            targets: None,
            constraint_cells: None,
            reward_value: 1.0,
            cost_value: 1.0,
            states: 4,
            actions: 3,
            mdp_seed: 0,
            kernel_floor: 0.0,
            objective: ObjectiveChoice::Quadratic,
            quadratic_weight: 1.0,
            kernel: None,
            mu0: None,
            loss: None,
            target: None,
            reward: None,
            cost: None,
            target_states: None,
            comparator_iters: 2000,
            comparator_tau: 0.05,
            slope_window: [100, 1000],
        }
    }
}

fn field(name: &str, message: impl Into<String>) -> HarnessError {
    HarnessError::Config {
        field: name.to_string(),
        message: message.into(),
    }
}

impl ExperimentConfig {
    /// Parses a config document. A top-level `results` object, as written
    /// into `summary.json`, is ignored.
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let mut value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| field("$", format!("invalid JSON: {e}")))?;
        match value.as_object_mut() {
            Some(obj) => {
                obj.remove("results");
            }
            None => return Err(field("$", "expected a JSON object")),
        }
        let cfg: Self = serde_json::from_value(value).map_err(|e| {
            let msg = e.to_string();
            let name = msg
                .split('`')
                .nth(1)
                .filter(|_| msg.starts_with("unknown field") || msg.starts_with("missing field"))
                .unwrap_or("$")
                .to_string();
            field(&name, msg)
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.reps == 0 {
            return Err(field("reps", "must be at least 1"));
        }
        if self.horizon == 0 {
            return Err(field("horizon", "must be at least 1"));
        }
        let [lo, hi] = self.slope_window;
        if lo == 0 || lo >= hi {
            return Err(field("slope_window", "needs 1 <= start < end"));
        }
        if !(self.comparator_tau > 0.0) {
            return Err(field("comparator_tau", "must be positive"));
        }
        if !(self.quadratic_weight > 0.0) {
            return Err(field("quadratic_weight", "must be positive"));
        }
        if self.snapshots.iter().any(|&t| t == 0 || t > self.episodes) {
            return Err(field("snapshots", format!("episodes must lie in 1..={}", self.episodes)));
        }
        if self.heatmap_layers.iter().any(|&n| n > self.horizon) {
            return Err(field("heatmap_layers", format!("layers must lie in 0..={}", self.horizon)));
        }
        match self.task {
            TaskKind::MultiObjective | TaskKind::Constrained => {
                if matches!(self.algorithm, Algorithm::BanditRl) {
                    return Err(field("algorithm", "bandit-rl needs a linear-loss task"));
                }
            }
            TaskKind::RandomMdp => {
                if self.states == 0 || self.actions == 0 {
                    return Err(field("states", "states and actions must be positive"));
                }
                if !(self.kernel_floor >= 0.0 && self.kernel_floor * self.states as f64 <= 1.0) {
                    return Err(field("kernel_floor", "must lie in [0, 1/states]"));
                }
            }
            TaskKind::Custom => {
                let sa = self.states * self.actions;
                let kernel = self.kernel.as_ref().ok_or_else(|| field("kernel", "required by the custom task"))?;
                if kernel.len() != sa * self.states {
                    return Err(field("kernel", format!("expected {} entries", sa * self.states)));
                }
                let mu0 = self.mu0.as_ref().ok_or_else(|| field("mu0", "required by the custom task"))?;
                if mu0.len() != sa {
                    return Err(field("mu0", format!("expected {sa} entries")));
                }
            }
        }
        if matches!(self.task, TaskKind::Custom | TaskKind::RandomMdp) {
            let need = |v: &Option<Vec<f64>>, name: &str| -> Result<(), HarnessError> {
                if self.task == TaskKind::Custom && v.is_none() {
                    return Err(field(name, format!("required by the {:?} objective", self.objective)));
                }
                Ok(())
            };
            match self.objective {
                ObjectiveChoice::Linear | ObjectiveChoice::Bernoulli => need(&self.loss, "loss")?,
                ObjectiveChoice::Quadratic => need(&self.target, "target")?,
                ObjectiveChoice::Constrained => {
                    need(&self.reward, "reward")?;
                    need(&self.cost, "cost")?;
                }
                ObjectiveChoice::MultiTarget => {
                    if self.target_states.as_ref().is_none_or(|v| v.is_empty()) {
                        return Err(field("target_states", "required by the multi-target objective"));
                    }
                }
            }
            let linear = matches!(self.objective, ObjectiveChoice::Linear | ObjectiveChoice::Bernoulli);
            if self.algorithm == Algorithm::BanditRl && !linear {
                return Err(field("objective", "bandit-rl needs a linear or bernoulli objective"));
            }
        }
        self.run_config(0).validate().map_err(core_field)?;
        Ok(())
    }

    /// Per-repetition learner settings; repetition `k` uses seed `seed + k`.
    pub fn run_config(&self, rep: usize) -> RunConfig {
        let last = self.episodes.max(1);
        let mut snapshots = if self.snapshots.is_empty() { vec![last] } else { self.snapshots.clone() };
        snapshots.sort_unstable();
        snapshots.dedup();
        RunConfig {
            episodes: self.episodes,
            tau: self.tau,
            delta: self.delta,
            gamma: self.gamma,
            alpha: match self.alpha {
                Some(a) => AlphaSchedule::Constant(a),
                None => AlphaSchedule::Inverse,
            },
            bonus: self.bonus && self.algorithm != Algorithm::Greedy,
            bonus_scale: self.bonus_scale,
            confidence: self.confidence,
            estimator: match self.estimator {
                EstimatorKind::Empirical => Estimator::Empirical,
                EstimatorKind::Laplace => Estimator::Laplace,
                EstimatorKind::Projected => Estimator::Projected { eps: self.eps },
            },
            known_kernel: self.known_kernel,
            pooled_counts: self.pooled_counts,
            eps: self.eps,
            seed: self.rep_seed(rep),
            snapshots,
        }
    }

    pub fn rep_seed(&self, rep: usize) -> u64 {
        self.seed.wrapping_add(rep as u64)
    }

    pub fn to_json_value(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serialises")
    }
}

/// Maps a core parameter error onto the config field of the same name.
pub fn core_field(e: omd_curl::Error) -> HarnessError {
    match e {
        omd_curl::Error::InvalidParameter { name, reason } => field(name, reason),
        other => HarnessError::Core(other),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        ExperimentConfig::default().validate().unwrap();
    }

    #[test]
    fn unknown_field_is_named() {
        let err = ExperimentConfig::from_json(r#"{"taus": 0.1}"#).unwrap_err();
        match err {
            HarnessError::Config { field, .. } => assert_eq!(field, "taus"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_values_are_named() {
        for (doc, name) in [
            (r#"{"tau": -1}"#, "tau"),
            (r#"{"reps": 0}"#, "reps"),
            (r#"{"delta": 2}"#, "delta"),
            (r#"{"task": "custom"}"#, "kernel"),
            (r#"{"slope_window": [5, 5]}"#, "slope_window"),
        ] {
            match ExperimentConfig::from_json(doc).unwrap_err() {
                HarnessError::Config { field, .. } => assert_eq!(field, name, "{doc}"),
                other => panic!("{other:?}"),
            }
        }
    }

    #[test]
    fn results_key_is_ignored() {
        let cfg = ExperimentConfig { tau: 0.3, ..Default::default() };
        let mut v = cfg.to_json_value();
        v["results"] = serde_json::json!({"slope": 0.5});
        let back = ExperimentConfig::from_json(&v.to_string()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn greedy_disables_bonus() {
        let cfg = ExperimentConfig { algorithm: Algorithm::Greedy, ..Default::default() };
        assert!(!cfg.run_config(0).bonus);
        assert_eq!(cfg.run_config(3).seed, 3);
        assert_eq!(cfg.run_config(0).snapshots, vec![1000]);
    }
}
