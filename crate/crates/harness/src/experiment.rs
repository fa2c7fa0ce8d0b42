//! Runs a configured experiment and writes its artifacts.

use std::path::Path;

use omd_curl::algorithms::{
    run_bandit_curl_entropic, run_bandit_curl_logbarrier, run_bandit_rl, run_full_info, run_greedy_baseline,
    RunConfig, RunTrace,
};
use omd_curl::mdp::EpisodicMdp;
use omd_curl::objectives::ObjectiveStream;
use rayon::prelude::*;
use serde::Serialize;

use crate::comparator::{fixed_comparator, hindsight_comparator, ComparatorValues};
use crate::config::{core_field, Algorithm, ExperimentConfig};
use crate::error::HarnessError;
use crate::output::{emit_plot_data, write_heatmap, write_plot_data, TraceColumns};
use crate::regret::{compute_regret, RegretReport};
use crate::tasks::{build_task, mean_state_mass, state_mass, Task, TaskStream};

pub fn run_algorithm(
    algorithm: Algorithm,
    mdp: &EpisodicMdp,
    stream: &mut dyn ObjectiveStream,
    cfg: &RunConfig,
) -> Result<RunTrace, HarnessError> {
    let out = match algorithm {
        Algorithm::FullInfo => run_full_info(mdp, stream, cfg),
        Algorithm::Greedy => run_greedy_baseline(mdp, stream, cfg),
        Algorithm::BanditRl => run_bandit_rl(mdp, stream, cfg),
        Algorithm::BanditCurlEntropic => run_bandit_curl_entropic(mdp, stream, cfg),
        Algorithm::BanditCurlLogbarrier => run_bandit_curl_logbarrier(mdp, stream, cfg),
    };
    out.map_err(core_field)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RepMetrics {
    pub rep: usize,
    pub seed: u64,
    pub final_loss: f64,
    pub first_decile_loss: f64,
    pub last_decile_loss: f64,
    pub final_regret: f64,
    pub slope: Option<f64>,
    /// Final-layer state mass on the task's targets in the last episode.
    pub target_mass: f64,
    /// Constraint-cell state mass averaged over layers in the last episode.
    pub constraint_mass: f64,
}

#[derive(Clone, Debug)]
pub struct RepOutcome {
    pub trace: RunTrace,
    pub regret: RegretReport,
    pub metrics: RepMetrics,
}

#[derive(Clone, Debug)]
pub struct ExperimentOutcome {
    pub reps: Vec<RepOutcome>,
    pub summary: serde_json::Value,
}

fn decile_means(loss: &[f64]) -> (f64, f64) {
    let k = (loss.len() / 10).max(1);
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    (mean(&loss[..k]), mean(&loss[loss.len() - k..]))
}

/// The comparator is shared across repetitions unless the loss stream is
/// random, in which case each repetition gets its own hindsight comparator.
fn shared_comparator(cfg: &ExperimentConfig, task: &Task) -> Result<Option<ComparatorValues>, HarnessError> {
    match task.fixed_objective() {
        Some(obj) => fixed_comparator(&task.mdp, obj, cfg.episodes, cfg.comparator_iters, cfg.comparator_tau).map(Some),
        None => Ok(None),
    }
}

pub fn run_repetition(
    cfg: &ExperimentConfig,
    rep: usize,
    comparator: Option<&ComparatorValues>,
) -> Result<RepOutcome, HarnessError> {
    let task = build_task(cfg, rep)?;
    let run_cfg = cfg.run_config(rep);
    let own;
    let comparator = match comparator {
        Some(c) => c,
        None => {
            let mut fresh: TaskStream = task.stream.clone();
            own = hindsight_comparator(&task.mdp, &mut fresh, cfg.episodes)?;
            &own
        }
    };
    let mut stream = task.stream.clone();
    let trace = run_algorithm(cfg.algorithm, &task.mdp, &mut stream, &run_cfg)?;
    let regret = compute_regret(&trace.loss, &comparator.per_round, &comparator.description, cfg.slope_window)?;
    let (first, last) = decile_means(&trace.loss);
    let horizon = task.mdp.dims().horizon;
    let metrics = RepMetrics {
        rep,
        seed: run_cfg.seed,
        final_loss: *trace.loss.last().expect("at least one episode"),
        first_decile_loss: first,
        last_decile_loss: last,
        final_regret: *regret.cumulative.last().expect("at least one episode"),
        slope: regret.slope,
        target_mass: state_mass(&trace.last_occupancy, &task.targets, horizon),
        constraint_mass: mean_state_mass(&trace.last_occupancy, &task.constraints),
    };
    if let Some(dir) = &cfg.out_dir {
        write_rep_files(cfg, &task, rep, &trace, &regret, dir)?;
    }
    Ok(RepOutcome { trace, regret, metrics })
}

fn write_rep_files(
    cfg: &ExperimentConfig,
    task: &Task,
    rep: usize,
    trace: &RunTrace,
    regret: &RegretReport,
    root: &Path,
) -> Result<(), HarnessError> {
    let dir = root.join(format!("rep_{rep}"));
    std::fs::create_dir_all(&dir).map_err(|e| HarnessError::io(&dir, e))?;
    TraceColumns {
        loss: trace.loss.clone(),
        regret: regret.cumulative.clone(),
        bonus_mass: trace.bonus_mass.clone(),
        est_error: trace.est_error.clone(),
    }
    .write(&dir.join("trace.csv"))?;
    let horizon = task.mdp.dims().horizon;
    let layers = if cfg.heatmap_layers.is_empty() { vec![horizon] } else { cfg.heatmap_layers.clone() };
    for snap in &trace.snapshots {
        for &n in &layers {
            let path = dir.join(format!("heatmap_{}_{}.csv", snap.episode, n));
            write_heatmap(&path, &snap.occupancy, n, task.layout.as_ref())?;
        }
    }
    Ok(())
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 { f64::NAN } else { s / n as f64 }
}

/// Runs every repetition and, when `out_dir` is set, writes per-repetition
/// traces and heatmaps, the plot aggregates and `summary.json`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome, HarnessError> {
    cfg.validate()?;
    if let Some(dir) = &cfg.out_dir {
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    }
    let probe = build_task(cfg, 0)?;
    let comparator = shared_comparator(cfg, &probe)?;
    let reps: Vec<RepOutcome> = (0..cfg.reps)
        .into_par_iter()
        .map(|rep| run_repetition(cfg, rep, comparator.as_ref()))
        .collect::<Result<_, _>>()?;

    let losses: Vec<&[f64]> = reps.iter().map(|r| r.trace.loss.as_slice()).collect();
    let regrets: Vec<&[f64]> = reps.iter().map(|r| r.regret.cumulative.as_slice()).collect();
    let loss_rows = emit_plot_data(&losses)?;
    let regret_rows = emit_plot_data(&regrets)?;

    let metrics: Vec<&RepMetrics> = reps.iter().map(|r| &r.metrics).collect();
    let results = serde_json::json!({
        "comparator": reps[0].regret.comparator,
        "reps": metrics,
        "mean_final_loss": mean(metrics.iter().map(|m| m.final_loss)),
        "mean_final_regret": mean(metrics.iter().map(|m| m.final_regret)),
        "mean_slope": mean(metrics.iter().filter_map(|m| m.slope)),
        "mean_target_mass": mean(metrics.iter().map(|m| m.target_mass)),
        "mean_constraint_mass": mean(metrics.iter().map(|m| m.constraint_mass)),
    });
    let mut summary = cfg.to_json_value();
    summary["results"] = results;

    if let Some(dir) = &cfg.out_dir {
        write_plot_data(&dir.join("plotdata_loss.csv"), &loss_rows)?;
        write_plot_data(&dir.join("plotdata_regret.csv"), &regret_rows)?;
        let path = dir.join("summary.json");
        let text = serde_json::to_string_pretty(&summary).expect("summary serialises");
        std::fs::write(&path, text + "\n").map_err(|e| HarnessError::io(&path, e))?;
    }
    Ok(ExperimentOutcome { reps, summary })
}
