//! Online learning loops: full-information and bandit variants.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::estimation::{bernstein_widths, c_delta, upper_occupancy, Estimator, VisitCounts};
use crate::exploration::{bandit_curl_bonus, full_info_bonus};
use crate::logbarrier::{analytic_center, lb_omd_step, uniform_start, BarrierContext};
use crate::lowdim::{
    build_constraint_system, entropic_gradient_surrogate, expand, kappa, lift, reduced_dim, sample_unit_sphere,
    sphere_occupancy_point,
};
use crate::mdp::{
    check_feasibility, compute_occupancy, l1_distance, occupancy, policy_from_occupancy, sample_trajectory, EpisodicMdp,
    Field, Kernel, OccupancyMeasure, Policy,
};
use crate::mirror::{omd_step, smooth_policy, AlphaSchedule, OmdState};
use crate::objectives::{Objective, ObjectiveKind, ObjectiveStream};

/// Tolerance of the per-episode feasibility checks.
pub const FEASIBILITY_TOL: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub episodes: usize,
    pub tau: f64,
    /// Perturbation radius of the bandit-CURL learners.
    pub delta: f64,
    /// Implicit exploration of the bandit-RL learner; `None` means `tau`.
    pub gamma: Option<f64>,
    pub alpha: AlphaSchedule,
    pub bonus: bool,
    /// Multiplier on the bonus field.
    pub bonus_scale: f64,
    /// Confidence level of `C_delta` and of the Bernstein widths.
    pub confidence: f64,
    /// Kernel estimator of the full-information and bandit-RL learners.
    pub estimator: Estimator,
    /// Plan on the true kernel instead of an estimate.
    pub known_kernel: bool,
    /// Share transition counts across layers, for kernels that do not depend
    /// on the layer.
    pub pooled_counts: bool,
    /// Declared kernel floor of the entropic bandit-CURL learner.
    pub eps: f64,
    pub seed: u64,
    /// Episodes whose true occupancy is stored in the trace.
    pub snapshots: Vec<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            episodes: 1000,
            tau: 0.01,
            delta: 0.1,
            gamma: None,
            alpha: AlphaSchedule::Inverse,
            bonus: true,
            bonus_scale: 1.0,
            confidence: 0.05,
            estimator: Estimator::Empirical,
            known_kernel: false,
            pooled_counts: false,
            eps: 0.1,
            seed: 0,
            snapshots: Vec::new(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.episodes == 0 {
            return Err(Error::param("episodes", "must be at least 1"));
        }
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return Err(Error::param("tau", format!("must be positive, got {}", self.tau)));
        }
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            return Err(Error::param("delta", format!("must lie in (0, 1], got {}", self.delta)));
        }
        if let Some(g) = self.gamma {
            if !(g >= 0.0) || !g.is_finite() {
                return Err(Error::param("gamma", format!("must be nonnegative, got {g}")));
            }
        }
        if let AlphaSchedule::Constant(a) = self.alpha {
            if !(a > 0.0 && a <= 0.5) {
                return Err(Error::param("alpha", format!("must lie in (0, 0.5], got {a}")));
            }
        }
        if !(self.bonus_scale >= 0.0) || !self.bonus_scale.is_finite() {
            return Err(Error::param("bonus_scale", format!("must be nonnegative, got {}", self.bonus_scale)));
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(Error::param("confidence", format!("must lie in (0, 1), got {}", self.confidence)));
        }
        if !(self.eps > 0.0) {
            return Err(Error::param("eps", format!("must be positive, got {}", self.eps)));
        }
        Ok(())
    }

    pub fn gamma(&self) -> f64 {
        self.gamma.unwrap_or(self.tau)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub episode: usize,
    pub occupancy: Field,
}

/// Per-episode record of a run. Index `t - 1` holds episode `t`.
#[derive(Clone, Debug, PartialEq)]
pub struct RunTrace {
    /// `F^t(mu^{pi^t, p})` in loss orientation.
    pub loss: Vec<f64>,
    /// Largest row L1 gap between the true and the estimated kernel.
    pub est_error: Vec<f64>,
    /// `<b^t, mu^{pi^t, p^t}>` under the estimated kernel.
    pub bonus_mass: Vec<f64>,
    /// `|F^t(mu^{pi^t, p}) - F^t(mu^{pi^t, p^t})|`.
    pub model_gap: Vec<f64>,
    pub snapshots: Vec<Snapshot>,
    /// True occupancy of the policy played in the last episode.
    pub last_occupancy: Field,
    /// Policy after the last update.
    pub final_policy: Policy,
    /// Log-barrier steps on which the stability check applied.
    pub guarded_steps: usize,
    /// Largest local-norm step among those.
    pub max_guarded_step: f64,
}

impl RunTrace {
    fn new(mdp: &EpisodicMdp, episodes: usize) -> Self {
        Self {
            loss: Vec::with_capacity(episodes),
            est_error: Vec::with_capacity(episodes),
            bonus_mass: Vec::with_capacity(episodes),
            model_gap: Vec::with_capacity(episodes),
            snapshots: Vec::new(),
            last_occupancy: Field::zeros(mdp.dims()),
            final_policy: Policy::uniform(mdp.dims()),
            guarded_steps: 0,
            max_guarded_step: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.loss.len()
    }

    pub fn is_empty(&self) -> bool {
        self.loss.is_empty()
    }

    fn record_true(&mut self, cfg: &RunConfig, t: usize, mu: &OccupancyMeasure) {
        if cfg.snapshots.contains(&t) {
            self.snapshots.push(Snapshot {
                episode: t,
                occupancy: mu.field().clone(),
            });
        }
        if t == cfg.episodes {
            self.last_occupancy = mu.field().clone();
        }
    }

    fn check_finite(&self) -> Result<()> {
        let all = [&self.loss, &self.est_error, &self.bonus_mass, &self.model_gap];
        if all.iter().any(|v| v.iter().any(|x| !x.is_finite())) {
            return Err(Error::InvariantViolated("non-finite value in trace".into()));
        }
        Ok(())
    }
}

fn check_stream(mdp: &EpisodicMdp, stream: &dyn ObjectiveStream) -> Result<()> {
    if stream.dims() != mdp.dims() {
        return Err(Error::DimensionMismatch("objective stream vs MDP".into()));
    }
    Ok(())
}

fn ensure_feasible(mu: &Field, kernel: &Kernel, mu0: &[f64], what: &str) -> Result<()> {
    if !check_feasibility(mu, kernel, mu0, FEASIBILITY_TOL) {
        return Err(Error::InvariantViolated(format!("{what} left the occupancy polytope")));
    }
    Ok(())
}

/// Upper bound on the L1 change of a refreshed row whose visit count grew by
/// `added` to reach `visits`.
pub fn drift_bound(estimator: Estimator, visits: u64, added: u64, states: usize) -> f64 {
    let k = added as f64;
    match estimator {
        Estimator::Empirical => 2.0 * k / visits.max(1) as f64,
        Estimator::Laplace => 2.0 * k / (visits + states as u64) as f64,
        Estimator::Projected { .. } => 5.0 * k / (visits + states as u64) as f64,
    }
}

/// Refreshes the touched rows and checks each against [`drift_bound`].
fn refresh_checked(
    estimator: Estimator,
    kernel: &mut Kernel,
    counts: &VisitCounts,
    touched: &[((usize, usize, usize), u64)],
) -> Result<()> {
    let rows: Vec<(usize, usize, usize)> = touched.iter().map(|t| t.0).collect();
    let old: Vec<Vec<f64>> = rows.iter().map(|&(n, x, a)| kernel.row(n + 1, x, a).to_vec()).collect();
    estimator.refresh(kernel, counts, &rows);
    let s = counts.dims().states;
    for (&((n, x, a), added), before) in touched.iter().zip(&old) {
        let change = l1_distance(before, kernel.row(n + 1, x, a));
        let bound = drift_bound(estimator, counts.visits(n, x, a), added, s);
        if change > bound + 1e-12 {
            return Err(Error::InvariantViolated(format!(
                "estimator drift {change} exceeds {bound} at row ({n}, {x}, {a})"
            )));
        }
    }
    Ok(())
}

fn new_counts(mdp: &EpisodicMdp, cfg: &RunConfig) -> VisitCounts {
    if cfg.pooled_counts {
        VisitCounts::pooled(mdp.dims())
    } else {
        VisitCounts::new(mdp.dims())
    }
}

fn initial_estimate(mdp: &EpisodicMdp, counts: &VisitCounts, cfg: &RunConfig) -> Result<Kernel> {
    if cfg.known_kernel {
        Ok(mdp.kernel().clone())
    } else {
        cfg.estimator.build(counts)
    }
}

fn scaled_bonus(b: Field, cfg: &RunConfig) -> Field {
    if cfg.bonus_scale == 1.0 {
        b
    } else {
        b.scaled(cfg.bonus_scale)
    }
}

/// Full-information learner with the count-based bonus.
pub fn run_full_info(mdp: &EpisodicMdp, stream: &mut dyn ObjectiveStream, cfg: &RunConfig) -> Result<RunTrace> {
    full_info_loop(mdp, stream, cfg, cfg.bonus)
}

/// The same loop without bonus.
pub fn run_greedy_baseline(mdp: &EpisodicMdp, stream: &mut dyn ObjectiveStream, cfg: &RunConfig) -> Result<RunTrace> {
    full_info_loop(mdp, stream, cfg, false)
}

fn full_info_loop(
    mdp: &EpisodicMdp,
    stream: &mut dyn ObjectiveStream,
    cfg: &RunConfig,
    bonus: bool,
) -> Result<RunTrace> {
    cfg.validate()?;
    check_stream(mdp, stream)?;
    let d = mdp.dims();
    cfg.estimator.validate(d.states)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut counts = new_counts(mdp, cfg);
    let mut p_hat = initial_estimate(mdp, &counts, cfg)?;
    let mut state = OmdState::new(d, cfg.tau, cfg.alpha)?;
    let c = c_delta(d, cfg.episodes, cfg.confidence)?;
    let mut trace = RunTrace::new(mdp, cfg.episodes);

    for t in 1..=cfg.episodes {
        let pi = state.policy().clone();
        let mu_hat = occupancy(&pi, &p_hat, mdp.mu0())?;
        ensure_feasible(&mu_hat, &p_hat, mdp.mu0(), "estimated occupancy")?;
        let mu_true = compute_occupancy(&pi, mdp)?;
        trace.record_true(cfg, t, &mu_true);
        trace.est_error.push(mdp.kernel().max_row_l1_gap(&p_hat));

        let objective = stream.objective(t);
        let loss = objective.loss(&mu_true);
        trace.loss.push(loss);
        trace.model_gap.push((loss - objective.loss(&mu_hat)).abs());
        let mut z = objective.loss_gradient(&mu_hat);

        let traj = sample_trajectory(&pi, mdp, &mut rng);
        let rows = counts.record_with_increments(&traj)?;
        if bonus {
            let b = scaled_bonus(full_info_bonus(&counts, objective.lipschitz(), c)?, cfg);
            trace.bonus_mass.push(b.dot(&mu_hat));
            z.add_scaled(-1.0, &b);
        } else {
            trace.bonus_mass.push(0.0);
        }
        if !cfg.known_kernel {
            refresh_checked(cfg.estimator, &mut p_hat, &counts, &rows)?;
        }
        state.update(&z, &p_hat)?;
    }
    trace.final_policy = state.policy().clone();
    trace.check_finite()?;
    Ok(trace)
}

/// `l_hat_n(x, a) = l_n(x, a) 1{(x_n, a_n) = (x, a)} / (mu_bar_n(x, a) + gamma)`.
pub fn importance_weighted_loss(
    losses: &Field,
    steps: &[(usize, usize)],
    mu_bar: &Field,
    gamma: f64,
) -> Result<Field> {
    let d = losses.dims();
    if mu_bar.dims() != d || steps.len() != d.horizon + 1 {
        return Err(Error::DimensionMismatch("importance-weighted loss operands".into()));
    }
    let mut out = Field::zeros(d);
    for (n, &(x, a)) in steps.iter().enumerate().skip(1) {
        let denom = mu_bar.get(n, x, a) + gamma;
        if denom > 0.0 {
            out.set(n, x, a, losses.get(n, x, a) / denom);
        }
    }
    Ok(out)
}

fn linear_loss(objective: &Objective) -> Result<&Field> {
    match objective.kind() {
        ObjectiveKind::Linear { loss } => Ok(loss),
        _ => Err(Error::param("objective", "bandit RL needs linear losses")),
    }
}

/// Bandit-feedback RL with linear losses observed along the trajectory.
pub fn run_bandit_rl(mdp: &EpisodicMdp, stream: &mut dyn ObjectiveStream, cfg: &RunConfig) -> Result<RunTrace> {
    cfg.validate()?;
    check_stream(mdp, stream)?;
    let d = mdp.dims();
    cfg.estimator.validate(d.states)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut counts = new_counts(mdp, cfg);
    let mut p_hat = initial_estimate(mdp, &counts, cfg)?;
    let mut state = OmdState::new(d, cfg.tau, cfg.alpha)?;
    let c = c_delta(d, cfg.episodes, cfg.confidence)?;
    let gamma = cfg.gamma();
    let mut trace = RunTrace::new(mdp, cfg.episodes);

    for t in 1..=cfg.episodes {
        let pi = state.policy().clone();
        let mu_hat = occupancy(&pi, &p_hat, mdp.mu0())?;
        ensure_feasible(&mu_hat, &p_hat, mdp.mu0(), "estimated occupancy")?;
        let mu_true = compute_occupancy(&pi, mdp)?;
        trace.record_true(cfg, t, &mu_true);
        trace.est_error.push(mdp.kernel().max_row_l1_gap(&p_hat));

        let widths = bernstein_widths(&counts, &p_hat, cfg.episodes, cfg.confidence)?;
        let mu_bar = upper_occupancy(&pi, &p_hat, &widths, mdp.mu0())?;

        let objective = stream.objective(t);
        let losses = linear_loss(objective)?;
        let loss = objective.loss(&mu_true);
        trace.loss.push(loss);
        trace.model_gap.push((loss - objective.loss(&mu_hat)).abs());

        let mut traj = sample_trajectory(&pi, mdp, &mut rng);
        traj.losses = Some(traj.steps.iter().enumerate().map(|(n, &(x, a))| losses.get(n, x, a)).collect());
        let mut z = importance_weighted_loss(losses, &traj.steps, &mu_bar, gamma)?;

        let rows = counts.record_with_increments(&traj)?;
        if cfg.bonus {
            let b = scaled_bonus(full_info_bonus(&counts, objective.lipschitz(), c)?, cfg);
            trace.bonus_mass.push(b.dot(&mu_hat));
            z.add_scaled(-1.0, &b);
        } else {
            trace.bonus_mass.push(0.0);
        }
        if !cfg.known_kernel {
            refresh_checked(cfg.estimator, &mut p_hat, &counts, &rows)?;
        }
        state.update(&z, &p_hat)?;
    }
    trace.final_policy = state.policy().clone();
    trace.check_finite()?;
    Ok(trace)
}

fn observe_bounded(objective: &Objective, mu: &Field) -> Result<f64> {
    let v = objective.loss(mu);
    let upper = objective.dims().horizon as f64;
    if !(-1e-12..=upper + 1e-12).contains(&v) {
        return Err(Error::ObjectiveOutOfRange { value: v, upper });
    }
    Ok(v)
}

/// Bandit convex RL with entropic mirror descent and one-point gradients
/// drawn on a sphere inside the estimated polytope.
pub fn run_bandit_curl_entropic(
    mdp: &EpisodicMdp,
    stream: &mut dyn ObjectiveStream,
    cfg: &RunConfig,
) -> Result<RunTrace> {
    cfg.validate()?;
    check_stream(mdp, stream)?;
    let d = mdp.dims();
    let estimator = Estimator::Projected { eps: cfg.eps };
    estimator.validate(d.states)?;
    let floor = mdp.kernel().min_entry();
    if floor < cfg.eps * (1.0 - 1e-12) {
        return Err(Error::KernelFloorViolated { value: floor, floor: cfg.eps });
    }
    let dim = reduced_dim(d);
    let k = kappa(cfg.eps, d.actions)?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut counts = new_counts(mdp, cfg);
    let mut p_hat = estimator.build(&counts)?;
    let mut pi_cur = Policy::uniform(d);
    let mut mu = occupancy(&pi_cur, &p_hat, mdp.mu0())?;
    let mut trace = RunTrace::new(mdp, cfg.episodes);

    for t in 1..=cfg.episodes {
        let u = sample_unit_sphere(dim, &mut rng);
        let zeta = sphere_occupancy_point(u.as_slice(), &p_hat, mdp.mu0(), cfg.eps)?;
        let mu_mix = mu.mix(cfg.delta, &zeta);
        ensure_feasible(&mu_mix, &p_hat, mdp.mu0(), "perturbed occupancy")?;
        let pi = policy_from_occupancy(&mu_mix, Some(&pi_cur));
        let mu_true = compute_occupancy(&pi, mdp)?;
        trace.record_true(cfg, t, &mu_true);
        trace.est_error.push(mdp.kernel().max_row_l1_gap(&p_hat));

        let objective = stream.objective(t);
        let f = observe_bounded(objective, &mu_true)?;
        trace.loss.push(f);
        trace.model_gap.push((f - objective.loss(&mu_mix)).abs());
        let g = lift(entropic_gradient_surrogate(f, &u, cfg.delta, k).as_slice(), d)?;

        let traj = sample_trajectory(&pi, mdp, &mut rng);
        let rows = counts.record_with_increments(&traj)?;
        let mut z = g;
        if cfg.bonus {
            let b = scaled_bonus(bandit_curl_bonus(&counts, objective.lipschitz(), cfg.episodes)?, cfg);
            trace.bonus_mass.push(b.dot(&mu_mix));
            z.add_scaled(-1.0, &b);
        } else {
            trace.bonus_mass.push(0.0);
        }
        let smoothed = smooth_policy(&pi_cur, cfg.alpha.alpha(t))?;
        refresh_checked(estimator, &mut p_hat, &counts, &rows)?;
        pi_cur = omd_step(&z, cfg.tau, &smoothed, &p_hat)?;
        mu = occupancy(&pi_cur, &p_hat, mdp.mu0())?;
    }
    trace.final_policy = pi_cur;
    trace.check_finite()?;
    Ok(trace)
}

/// Largest step size for which the log-barrier stability check is guaranteed
/// to apply on every round: `delta / (16 N^2 S A)`.
pub fn logbarrier_tau_guardrail(mdp: &EpisodicMdp, delta: f64) -> f64 {
    let d = mdp.dims();
    delta / (16.0 * (d.horizon * d.horizon * d.states * d.actions) as f64)
}

/// Bandit convex RL on a known kernel with log-barrier mirror descent in
/// reduced coordinates and Dikin-ellipsoid exploration.
pub fn run_bandit_curl_logbarrier(
    mdp: &EpisodicMdp,
    stream: &mut dyn ObjectiveStream,
    cfg: &RunConfig,
) -> Result<RunTrace> {
    cfg.validate()?;
    check_stream(mdp, stream)?;
    let d = mdp.dims();
    let ctx = BarrierContext::new(build_constraint_system(mdp.kernel(), mdp.mu0())?);
    let mut xi: DVector<f64> = analytic_center(&ctx, &uniform_start(mdp.kernel(), mdp.mu0())?)?.xi;
    let dim = xi.len();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut trace = RunTrace::new(mdp, cfg.episodes);
    let mut pi_prev = Policy::uniform(d);

    for t in 1..=cfg.episodes {
        let geom = ctx.geometry(&xi)?;
        let u = sample_unit_sphere(dim, &mut rng);
        let xi_hat = geom.dikin_sample(cfg.delta, &u);
        let mu_hat = expand(xi_hat.as_slice(), mdp.kernel(), mdp.mu0())?;
        ensure_feasible(&mu_hat, mdp.kernel(), mdp.mu0(), "Dikin sample")?;
        let pi = policy_from_occupancy(&mu_hat, Some(&pi_prev));
        let mu_true = compute_occupancy(&pi, mdp)?;
        trace.record_true(cfg, t, &mu_true);
        trace.est_error.push(0.0);
        trace.bonus_mass.push(0.0);

        let objective = stream.objective(t);
        let f = observe_bounded(objective, &mu_hat)?;
        trace.loss.push(f);
        trace.model_gap.push((f - objective.loss(&mu_true)).abs());

        let g = geom.gradient_surrogate(f, &u, cfg.delta);
        let step = lb_omd_step(&ctx, &geom, &g, cfg.tau)?;
        if step.scaled_dual_norm <= 1.0 / 16.0 {
            trace.guarded_steps += 1;
            trace.max_guarded_step = trace.max_guarded_step.max(step.local_step);
        }
        xi = step.xi;
        pi_prev = pi;
    }
    let mu = expand(xi.as_slice(), mdp.kernel(), mdp.mu0())?;
    trace.final_policy = policy_from_occupancy(&mu, Some(&pi_prev));
    trace.check_finite()?;
    Ok(trace)
}
