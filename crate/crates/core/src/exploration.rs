//! Count-based exploration bonuses.

use crate::error::{Error, Result};
use crate::estimation::VisitCounts;
use crate::mdp::{Dims, Field};

/// `b_n(x, a) = L (N - n) C / sqrt(max(1, N_n(x, a)))` for `n in 0..=N`.
pub fn bonus_field(counts: &VisitCounts, lipschitz: f64, constant: f64) -> Result<Field> {
    if !(lipschitz >= 0.0) || !(constant >= 0.0) {
        return Err(Error::param(
            "bonus",
            format!("Lipschitz constant and confidence factor must be nonnegative, got {lipschitz} and {constant}"),
        ));
    }
    let d = counts.dims();
    let mut b = Field::zeros(d);
    for n in 0..d.horizon {
        let scale = lipschitz * (d.horizon - n) as f64 * constant;
        for x in 0..d.states {
            for a in 0..d.actions {
                b.set(n, x, a, scale / (counts.visits(n, x, a).max(1) as f64).sqrt());
            }
        }
    }
    Ok(b)
}

/// Full-information bonus with `C = C_delta`.
pub fn full_info_bonus(counts: &VisitCounts, lipschitz: f64, c_delta: f64) -> Result<Field> {
    bonus_field(counts, lipschitz, c_delta)
}

/// `C'_delta = sqrt(322 S + 12 sqrt(S) log^{5/2}(S^2 A N T^2 / (4 delta)) + 620)`.
pub fn c_prime_delta(dims: Dims, episodes: usize, delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::param("delta", format!("must lie in (0, 1), got {delta}")));
    }
    let s = dims.states as f64;
    let t = episodes.max(1) as f64;
    let arg = s * s * dims.actions as f64 * dims.horizon as f64 * t * t / (4.0 * delta);
    // log^{5/2} of an argument below 1 is undefined; clamp it at zero
    let lg = arg.ln().max(0.0);
    Ok((322.0 * s + 12.0 * s.sqrt() * lg.powf(2.5) + 620.0).sqrt())
}

/// Bandit-CURL bonus: [`bonus_field`] with `C = C'_{1/T}`. For `T = 1` the
/// confidence level `1/T` degenerates, so `delta = 1/(T+1)` is used there.
pub fn bandit_curl_bonus(counts: &VisitCounts, lipschitz: f64, episodes: usize) -> Result<Field> {
    let delta = if episodes > 1 { 1.0 / episodes as f64 } else { 0.5 };
    let c = c_prime_delta(counts.dims(), episodes, delta)?;
    bonus_field(counts, lipschitz, c)
}
