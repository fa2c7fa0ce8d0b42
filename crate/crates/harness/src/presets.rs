//! Named configurations for the four-room experiments.

use crate::config::{Algorithm, ExperimentConfig, TaskKind};

pub const PRESET_NAMES: [&str; 2] = ["multi-objective", "constrained"];

/// 11x11 four-room grid, five actions, horizon 40, step 0.01, 1000 episodes,
/// five repetitions, noise 0.1. The grid kernel does not depend on the layer,
/// so counts are pooled across layers. The theoretical bonus is of order
/// `L N C` per unvisited pair, far above the gradient scale, and is damped to
/// `1e-4` of that.
pub fn preset(name: &str) -> Option<ExperimentConfig> {
    let base = ExperimentConfig {
        algorithm: Algorithm::FullInfo,
        episodes: 1000,
        tau: 0.01,
        reps: 5,
        horizon: 40,
        grid_side: 11,
        grid_noise: 0.1,
        pooled_counts: true,
        bonus_scale: 1e-4,
        ..ExperimentConfig::default()
    };
    match name {
        "multi-objective" => Some(ExperimentConfig {
            task: TaskKind::MultiObjective,
            snapshots: vec![50, 1000],
            ..base
        }),
        "constrained" => Some(ExperimentConfig {
            task: TaskKind::Constrained,
            ..base
        }),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_are_valid() {
        for name in PRESET_NAMES {
            let cfg = preset(name).unwrap();
            cfg.validate().unwrap();
            assert_eq!((cfg.horizon, cfg.tau, cfg.reps, cfg.episodes), (40, 0.01, 5, 1000));
        }
        assert!(preset("nope").is_none());
    }
}
