//! Fixed comparator policies for regret reporting.

use omd_curl::mdp::{compute_occupancy, EpisodicMdp, Field, Policy};
use omd_curl::mirror::omd_step;
use omd_curl::objectives::{Objective, ObjectiveKind, ObjectiveStream};

use crate::error::HarnessError;

/// Deterministic policy minimising `<loss, mu^{pi, p}>` by backward induction.
/// Ties go to the lowest action index.
pub fn best_response_dp(mdp: &EpisodicMdp, loss: &Field) -> Result<Policy, HarnessError> {
    let d = mdp.dims();
    let (s, na) = (d.states, d.actions);
    let mut value = vec![0.0; s];
    let mut choice = vec![0usize; d.horizon * s];
    for n in (1..=d.horizon).rev() {
        let mut next = vec![0.0; s];
        for x in 0..s {
            let mut best = (f64::INFINITY, 0);
            for a in 0..na {
                let cont: f64 = if n < d.horizon {
                    mdp.kernel().row(n + 1, x, a).iter().zip(&value).map(|(p, v)| p * v).sum()
                } else {
                    0.0
                };
                let q = loss.get(n, x, a) + cont;
                if q < best.0 {
                    best = (q, a);
                }
            }
            next[x] = best.0;
            choice[(n - 1) * s + x] = best.1;
        }
        value = next;
    }
    Ok(Policy::from_fn(d, |n, x, a| if choice[(n - 1) * s + x] == a { 1.0 } else { 0.0 })?)
}

/// Known-kernel, bonus-free mirror descent on a fixed objective, or the exact
/// best response when the objective is linear. `iters = 0` gives the uniform
/// policy.
pub fn compute_comparator(
    mdp: &EpisodicMdp,
    objective: &Objective,
    iters: usize,
    tau: f64,
) -> Result<Policy, HarnessError> {
    let d = mdp.dims();
    if iters == 0 {
        return Ok(Policy::uniform(d));
    }
    if let ObjectiveKind::Linear { loss } = objective.kind() {
        return best_response_dp(mdp, loss);
    }
    let mut pi = Policy::uniform(d);
    for _ in 0..iters {
        let mu = compute_occupancy(&pi, mdp)?;
        pi = omd_step(&objective.loss_gradient(&mu), tau, &pi, mdp.kernel())?;
    }
    Ok(pi)
}

/// Per-round comparator losses and a description of the comparator.
#[derive(Clone, Debug, PartialEq)]
pub struct ComparatorValues {
    pub per_round: Vec<f64>,
    pub description: String,
}

/// Constant comparator loss of a fixed objective.
pub fn fixed_comparator(
    mdp: &EpisodicMdp,
    objective: &Objective,
    episodes: usize,
    iters: usize,
    tau: f64,
) -> Result<ComparatorValues, HarnessError> {
    let pi = compute_comparator(mdp, objective, iters, tau)?;
    let mu = compute_occupancy(&pi, mdp)?;
    let value = objective.loss(&mu);
    let description = match objective.kind() {
        ObjectiveKind::Linear { .. } if iters > 0 => "exact best response by backward induction".to_string(),
        _ => format!("known-kernel mirror descent, {iters} iterations, step {tau}"),
    };
    Ok(ComparatorValues {
        per_round: vec![value; episodes],
        description,
    })
}

/// Best fixed policy in hindsight for a linear loss stream: backward induction
/// on the summed losses, then its loss on every round. `stream` must be a
/// fresh copy of the stream the learner sees.
pub fn hindsight_comparator(
    mdp: &EpisodicMdp,
    stream: &mut dyn ObjectiveStream,
    episodes: usize,
) -> Result<ComparatorValues, HarnessError> {
    let d = mdp.dims();
    let mut losses = Vec::with_capacity(episodes);
    let mut total = Field::zeros(d);
    for t in 1..=episodes {
        match stream.objective(t).kind() {
            ObjectiveKind::Linear { loss } => {
                total.add_scaled(1.0, loss);
                losses.push(loss.clone());
            }
            _ => {
                return Err(HarnessError::Config {
                    field: "objective".into(),
                    message: "hindsight comparator needs linear losses".into(),
                })
            }
        }
    }
    let pi = best_response_dp(mdp, &total)?;
    let mu = compute_occupancy(&pi, mdp)?;
    Ok(ComparatorValues {
        per_round: losses.iter().map(|l| l.dot_from_layer1(&mu)).collect(),
        description: "best fixed policy in hindsight by backward induction on the summed losses".into(),
    })
}
