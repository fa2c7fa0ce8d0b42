//! Environments and objective streams built from a config.

use omd_curl::gridworld::{build_four_room_gridworld, GridworldConfig, Layout};
use omd_curl::mdp::{occupancy, Dims, EpisodicMdp, Field, Kernel, Policy};
use omd_curl::objectives::{
    make_constrained_objective, make_linear_objective, make_multi_target_objective, make_quadratic_objective,
    BernoulliLossStream, FixedStream, Objective, ObjectiveStream,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{core_field, ExperimentConfig, ObjectiveChoice, TaskKind};
use crate::error::HarnessError;

/// Offset separating loss-stream seeds from learner seeds.
const STREAM_SEED_OFFSET: u64 = 0x5eed_0000;

#[derive(Clone, Debug)]
pub enum TaskStream {
    Fixed(FixedStream),
    Bernoulli(BernoulliLossStream),
}

impl ObjectiveStream for TaskStream {
    fn dims(&self) -> Dims {
        match self {
            TaskStream::Fixed(s) => s.dims(),
            TaskStream::Bernoulli(s) => s.dims(),
        }
    }

    fn objective(&mut self, t: usize) -> &Objective {
        match self {
            TaskStream::Fixed(s) => s.objective(t),
            TaskStream::Bernoulli(s) => s.objective(t),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Task {
    pub mdp: EpisodicMdp,
    pub stream: TaskStream,
    pub layout: Option<Layout>,
    /// States whose mass is reported as target mass.
    pub targets: Vec<usize>,
    /// States whose mass is reported as constraint mass.
    pub constraints: Vec<usize>,
}

impl Task {
    pub fn fixed_objective(&self) -> Option<&Objective> {
        match &self.stream {
            TaskStream::Fixed(s) => Some(&s.0),
            TaskStream::Bernoulli(_) => None,
        }
    }
}

fn bad(name: &str, message: impl Into<String>) -> HarnessError {
    HarnessError::Config {
        field: name.to_string(),
        message: message.into(),
    }
}

/// Default constrained layout: reward at the bottom-right room centre, cost
/// on the top door and the two cells beside it.
pub fn default_constraint_cells(side: usize) -> Vec<[usize; 2]> {
    let mid = side / 2;
    let lo = mid / 2;
    vec![[lo, mid - 1], [lo, mid], [lo, mid + 1]]
}

fn grid_states(layout: &Layout, cells: &[[usize; 2]], name: &str) -> Result<Vec<usize>, HarnessError> {
    cells
        .iter()
        .map(|&[r, c]| {
            if r >= layout.side() || c >= layout.side() || layout.is_wall(r, c) {
                Err(bad(name, format!("cell ({r}, {c}) is outside the grid or a wall")))
            } else {
                Ok(layout.state(r, c))
            }
        })
        .collect()
}

fn gridworld(cfg: &ExperimentConfig) -> Result<(EpisodicMdp, Layout), HarnessError> {
    let g = GridworldConfig {
        side: cfg.grid_side,
        doors: cfg.doors.as_ref().map(|d| d.iter().map(|&[r, c]| (r, c)).collect()),
        noise: cfg.grid_noise,
        horizon: cfg.horizon,
        initial_cell: (cfg.initial_cell[0], cfg.initial_cell[1]),
    };
    let layout = g.layout().map_err(|e| bad("grid", e.to_string()))?;
    let mdp = build_four_room_gridworld(&g).map_err(|e| bad("grid", e.to_string()))?;
    Ok((mdp, layout))
}

fn per_state_action(states: &[usize], value: f64, dims: Dims) -> Vec<f64> {
    let mut v = vec![0.0; dims.sa()];
    for &x in states {
        v[x * dims.actions..(x + 1) * dims.actions].fill(value);
    }
    v
}

fn random_simplex(k: usize, floor: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let v: Vec<f64> = (0..k).map(|_| rng.random::<f64>() + 1e-3).collect();
    let s: f64 = v.iter().sum();
    let free = 1.0 - floor * k as f64;
    v.into_iter().map(|x| floor + free * x / s).collect()
}

/// Seeded random kernel with every entry at least `floor`; the initial
/// distribution puts state 0 under uniform actions.
pub fn random_mdp(dims: Dims, floor: f64, seed: u64) -> Result<EpisodicMdp, HarnessError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<f64> = (0..dims.horizon * dims.sa())
        .flat_map(|_| random_simplex(dims.states, floor, &mut rng))
        .collect();
    let mut it = rows.into_iter();
    let kernel = Kernel::from_fn(dims, |_, _, _, _| it.next().expect("enough rows"))?;
    let mut mu0 = vec![0.0; dims.sa()];
    mu0[..dims.actions].fill(1.0 / dims.actions as f64);
    Ok(EpisodicMdp::new(kernel, mu0)?)
}

fn stationary(dims: Dims, v: &[f64]) -> Field {
    Field::from_fn(dims, |n, x, a| if n == 0 { 0.0 } else { v[x * dims.actions + a] })
}

fn tabular_objective(
    cfg: &ExperimentConfig,
    mdp: &EpisodicMdp,
    rep: usize,
) -> Result<TaskStream, HarnessError> {
    let d = mdp.dims();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.mdp_seed.wrapping_add(1));
    let sa_vec = |given: &Option<Vec<f64>>, name: &str, rng: &mut ChaCha8Rng| -> Result<Vec<f64>, HarnessError> {
        match given {
            Some(v) if v.len() == d.sa() => Ok(v.clone()),
            Some(v) => Err(bad(name, format!("expected {} entries, got {}", d.sa(), v.len()))),
            None => Ok((0..d.sa()).map(|_| rng.random::<f64>()).collect()),
        }
    };
    let objective = match cfg.objective {
        ObjectiveChoice::Linear => make_linear_objective(stationary(d, &sa_vec(&cfg.loss, "loss", &mut rng)?)),
        ObjectiveChoice::Bernoulli => {
            let means = stationary(d, &sa_vec(&cfg.loss, "loss", &mut rng)?);
            let seed = cfg.rep_seed(rep).wrapping_add(STREAM_SEED_OFFSET);
            let stream = BernoulliLossStream::new(means, seed).map_err(|e| bad("loss", e.to_string()))?;
            return Ok(TaskStream::Bernoulli(stream));
        }
        ObjectiveChoice::Quadratic => {
            let target = match &cfg.target {
                Some(v) if v.len() == d.sa() => stationary(d, v),
                Some(v) => return Err(bad("target", format!("expected {} entries, got {}", d.sa(), v.len()))),
                None => {
                    // occupancy of a random policy, so the optimum is zero
                    let rows: Vec<f64> = (0..d.horizon * d.states)
                        .flat_map(|_| random_simplex(d.actions, 0.0, &mut rng))
                        .collect();
                    let mut it = rows.into_iter();
                    let pi = Policy::from_fn(d, |_, _, _| it.next().expect("enough rows"))?;
                    occupancy(&pi, mdp.kernel(), mdp.mu0())?.into_field()
                }
            };
            make_quadratic_objective(target, cfg.quadratic_weight)
        }
        ObjectiveChoice::Constrained => {
            let r = sa_vec(&cfg.reward, "reward", &mut rng)?;
            let c = sa_vec(&cfg.cost, "cost", &mut rng)?;
            make_constrained_objective(d, r, c)
        }
        ObjectiveChoice::MultiTarget => {
            let targets = cfg.target_states.clone().unwrap_or_else(|| vec![d.states - 1]);
            make_multi_target_objective(d, &targets)
        }
    }
    .map_err(core_field)?;
    Ok(TaskStream::Fixed(FixedStream(objective)))
}

/// Builds the environment and objective stream of repetition `rep`.
pub fn build_task(cfg: &ExperimentConfig, rep: usize) -> Result<Task, HarnessError> {
    match cfg.task {
        TaskKind::MultiObjective => {
            let (mdp, layout) = gridworld(cfg)?;
            let targets = match &cfg.targets {
                Some(cells) => grid_states(&layout, cells, "targets")?,
                None => {
                    let init = (cfg.initial_cell[0], cfg.initial_cell[1]);
                    let dist = |(r, c): (usize, usize)| r.abs_diff(init.0) + c.abs_diff(init.1);
                    let mut centres = layout.room_centres().to_vec();
                    centres.sort_by_key(|&c| dist(c));
                    centres[1..].iter().map(|&(r, c)| layout.state(r, c)).collect()
                }
            };
            let objective = make_multi_target_objective(mdp.dims(), &targets).map_err(core_field)?;
            Ok(Task {
                mdp,
                stream: TaskStream::Fixed(FixedStream(objective)),
                layout: Some(layout),
                targets,
                constraints: Vec::new(),
            })
        }
        TaskKind::Constrained => {
            let (mdp, layout) = gridworld(cfg)?;
            let d = mdp.dims();
            let targets = match &cfg.targets {
                Some(cells) => grid_states(&layout, cells, "targets")?,
                None => {
                    let (r, c) = layout.room_centres()[3];
                    vec![layout.state(r, c)]
                }
            };
            let cells = cfg.constraint_cells.clone().unwrap_or_else(|| default_constraint_cells(cfg.grid_side));
            let constraints = grid_states(&layout, &cells, "constraint_cells")?;
            let objective = make_constrained_objective(
                d,
                per_state_action(&targets, cfg.reward_value, d),
                per_state_action(&constraints, cfg.cost_value, d),
            )
            .map_err(core_field)?;
            Ok(Task {
                mdp,
                stream: TaskStream::Fixed(FixedStream(objective)),
                layout: Some(layout),
                targets,
                constraints,
            })
        }
        TaskKind::RandomMdp => {
            let d = Dims::new(cfg.horizon, cfg.states, cfg.actions).map_err(core_field)?;
            let mdp = random_mdp(d, cfg.kernel_floor, cfg.mdp_seed)?;
            let stream = tabular_objective(cfg, &mdp, rep)?;
            Ok(Task {
                mdp,
                stream,
                layout: None,
                targets: Vec::new(),
                constraints: Vec::new(),
            })
        }
        TaskKind::Custom => {
            let d = Dims::new(cfg.horizon, cfg.states, cfg.actions).map_err(core_field)?;
            let rows = cfg.kernel.as_ref().ok_or_else(|| bad("kernel", "required by the custom task"))?;
            let kernel = Kernel::stationary(d, rows).map_err(|e| bad("kernel", e.to_string()))?;
            let mu0 = cfg.mu0.clone().ok_or_else(|| bad("mu0", "required by the custom task"))?;
            let mdp = EpisodicMdp::new(kernel, mu0).map_err(|e| bad("mu0", e.to_string()))?;
            let stream = tabular_objective(cfg, &mdp, rep)?;
            Ok(Task {
                mdp,
                stream,
                layout: None,
                targets: cfg.target_states.clone().unwrap_or_default(),
                constraints: Vec::new(),
            })
        }
    }
}

/// Total state mass on `states` at layer `n`.
pub fn state_mass(mu: &Field, states: &[usize], n: usize) -> f64 {
    let a = mu.dims().actions;
    // an empty float sum is -0.0
    states.iter().map(|&x| mu.layer(n)[x * a..(x + 1) * a].iter().sum::<f64>()).sum::<f64>() + 0.0
}

/// Mass on `states` averaged over layers `1..=N`.
pub fn mean_state_mass(mu: &Field, states: &[usize]) -> f64 {
    let horizon = mu.dims().horizon;
    (1..=horizon).map(|n| state_mass(mu, states, n)).sum::<f64>() / horizon as f64
}
