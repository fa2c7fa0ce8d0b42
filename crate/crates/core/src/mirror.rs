//! Conditional-entropy divergence and the closed-form mirror-descent step.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{policy_from_occupancy, Dims, Field, Kernel, Policy};

fn xlogx_ratio(m: f64, d: f64) -> f64 {
    if m > 0.0 {
        m * (m / d).ln()
    } else {
        0.0
    }
}

/// `psi(mu) = sum_{n>=1} [phi(mu_n) - phi(rho_n)]`, `phi(v) = sum v log v`.
pub fn neg_entropy_psi(mu: &Field) -> f64 {
    let d = mu.dims();
    let mut total = 0.0;
    for n in 1..=d.horizon {
        for row in mu.layer(n).chunks_exact(d.actions) {
            let rho: f64 = row.iter().sum();
            total += row.iter().map(|&m| xlogx_ratio(m, rho)).sum::<f64>();
        }
    }
    total
}

/// `grad psi(mu) = log pi` where `pi` is the conditional of `mu`; layer 0 is zero.
pub fn psi_gradient(mu: &Field) -> Field {
    let pi = policy_from_occupancy(mu, None);
    log_policy_field(&pi)
}

pub(crate) fn log_policy_field(pi: &Policy) -> Field {
    let d = pi.dims();
    let mut g = Field::zeros(d);
    for n in 1..=d.horizon {
        for x in 0..d.states {
            for a in 0..d.actions {
                g.set(n, x, a, pi.get(n, x, a).ln());
            }
        }
    }
    g
}

/// `sum_n E_{mu_n}[log(pi_n / pi_ref_n)]` with `pi` the conditional of `mu`.
pub fn gamma_divergence_to_policy(mu: &Field, pi_ref: &Policy) -> Result<f64> {
    let d = mu.dims();
    if d != pi_ref.dims() {
        return Err(Error::DimensionMismatch(format!("{d:?} vs {:?}", pi_ref.dims())));
    }
    let mut total = 0.0;
    for n in 1..=d.horizon {
        for (x, row) in mu.layer(n).chunks_exact(d.actions).enumerate() {
            let rho: f64 = row.iter().sum();
            for (a, &m) in row.iter().enumerate() {
                if m <= 0.0 {
                    continue;
                }
                let r = pi_ref.get(n, x, a);
                if r <= 0.0 {
                    return Err(Error::InfiniteDivergence {
                        layer: n,
                        state: x,
                        action: a,
                    });
                }
                total += m * ((m / rho) / r).ln();
            }
        }
    }
    Ok(total)
}

/// `Gamma(mu, mu_ref)`; only the conditional policy of `mu_ref` is read.
pub fn gamma_divergence(mu: &Field, mu_ref: &Field) -> Result<f64> {
    gamma_divergence_to_policy(mu, &policy_from_occupancy(mu_ref, None))
}

/// Rowwise `(1 - alpha) pi + alpha / A`.
pub fn smooth_policy(pi: &Policy, alpha: f64) -> Result<Policy> {
    if !(alpha > 0.0 && alpha <= 0.5) {
        return Err(Error::param("alpha", format!("must lie in (0, 0.5], got {alpha}")));
    }
    Ok(mix_uniform(pi, alpha))
}

fn mix_uniform(pi: &Policy, alpha: f64) -> Policy {
    let d = pi.dims();
    let u = alpha / d.actions as f64;
    let mut out = pi.clone();
    for n in 1..=d.horizon {
        for x in 0..d.states {
            for v in out.row_mut(n, x) {
                *v = (1.0 - alpha) * *v + u;
            }
        }
    }
    out
}

/// Policy whose occupancy under `q_next` minimises
/// `tau <z, mu> + Gamma(mu, mu^{pi_ref, q_next})`.
///
/// Layer 0 of `z` does not affect the result since `mu_0` is fixed.
pub fn omd_step(z: &Field, tau: f64, pi_ref: &Policy, q_next: &Kernel) -> Result<Policy> {
    let d = q_next.dims();
    if z.dims() != d || pi_ref.dims() != d {
        return Err(Error::DimensionMismatch("omd_step operands".into()));
    }
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::param("tau", format!("must be positive, got {tau}")));
    }
    if pi_ref.as_slice().iter().any(|v| !(*v > 0.0)) {
        return Err(Error::param("pi_ref", "reference policy rows must be strictly positive"));
    }
    let (s, a_count) = (d.states, d.actions);
    let mut pi = Policy::zeros(d);
    // q_tilde holds Q~_n for the layer being processed
    let mut q_tilde: Vec<f64> = z.layer(d.horizon).iter().map(|v| -v).collect();
    let mut value = vec![0.0; s];
    let mut logits = vec![0.0; a_count];
    for n in (1..=d.horizon).rev() {
        for x in 0..s {
            let q_row = &q_tilde[x * a_count..(x + 1) * a_count];
            let ref_row = pi_ref.row(n, x);
            let mut m = f64::NEG_INFINITY;
            for (l, (&q, &r)) in logits.iter_mut().zip(q_row.iter().zip(ref_row)) {
                *l = tau * q + r.ln();
                m = m.max(*l);
            }
            let mut total = 0.0;
            let out = pi.row_mut(n, x);
            for (o, l) in out.iter_mut().zip(&logits) {
                *o = (l - m).exp();
                total += *o;
            }
            out.iter_mut().for_each(|o| *o /= total);
            value[x] = (m + total.ln()) / tau;
        }
        if n == 1 {
            break;
        }
        for x in 0..s {
            for a in 0..a_count {
                let cont: f64 = q_next
                    .row(n, x, a)
                    .iter()
                    .zip(&value)
                    .map(|(p, v)| p * v)
                    .sum();
                q_tilde[x * a_count + a] = -z.get(n - 1, x, a) + cont;
            }
        }
    }
    Ok(pi)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "value")]
pub enum AlphaSchedule {
    /// `alpha_t = 1 / (t + 1)`.
    Inverse,
    Constant(f64),
}

impl AlphaSchedule {
    pub fn alpha(&self, t: usize) -> f64 {
        match self {
            AlphaSchedule::Inverse => 1.0 / (t as f64 + 1.0),
            AlphaSchedule::Constant(a) => *a,
        }
    }
}

/// Current policy `pi^t`, its smoothed version `pi~^t` and the step size.
#[derive(Clone, Debug)]
pub struct OmdState {
    policy: Policy,
    smoothed: Policy,
    tau: f64,
    schedule: AlphaSchedule,
    round: usize,
}

impl OmdState {
    /// Starts from the uniform policy at round 1.
    pub fn new(dims: Dims, tau: f64, schedule: AlphaSchedule) -> Result<Self> {
        if !(tau > 0.0) || !tau.is_finite() {
            return Err(Error::param("tau", format!("must be positive, got {tau}")));
        }
        if let AlphaSchedule::Constant(a) = schedule {
            if !(a > 0.0 && a <= 0.5) {
                return Err(Error::param("alpha", format!("must lie in (0, 0.5], got {a}")));
            }
        }
        let policy = Policy::uniform(dims);
        Ok(Self {
            smoothed: policy.clone(),
            policy,
            tau,
            schedule,
            round: 1,
        })
    }

    pub fn policy(&self) -> &Policy {
        &self.policy
    }

    pub fn smoothed(&self) -> &Policy {
        &self.smoothed
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn round(&self) -> usize {
        self.round
    }

    /// `pi^{t+1} = omd_step(z^t, tau, pi~^t, q^{t+1})`, then
    /// `pi~^{t+1} = (1 - alpha_t) pi^{t+1} + alpha_t / A`.
    pub fn update(&mut self, z: &Field, q_next: &Kernel) -> Result<()> {
        let next = omd_step(z, self.tau, &self.smoothed, q_next)?;
        self.smoothed = smooth_policy(&next, self.schedule.alpha(self.round))?;
        self.policy = next;
        self.round += 1;
        Ok(())
    }
}
