//! Tabular episodic MDPs, policies and occupancy measures.
//!
//! Layers are indexed `0..=N`. Layer 0 carries the fixed initial state-action
//! distribution `mu0`; kernels and policies are indexed by the layer they
//! lead *into*, so `p_n(.|x, a)` for `n in 1..=N` moves mass from layer
//! `n - 1` to layer `n` and `pi_n(.|x)` picks actions at layer `n`.
//! States and actions are zero-based.

use std::ops::Deref;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const DIST_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub horizon: usize,
    pub states: usize,
    pub actions: usize,
}

impl Dims {
    pub fn new(horizon: usize, states: usize, actions: usize) -> Result<Self> {
        if horizon == 0 || states == 0 || actions == 0 {
            return Err(Error::param(
                "dims",
                format!("horizon, states and actions must be positive, got ({horizon}, {states}, {actions})"),
            ));
        }
        Ok(Self {
            horizon,
            states,
            actions,
        })
    }

    /// `S * A`.
    #[inline]
    pub fn sa(&self) -> usize {
        self.states * self.actions
    }

    fn ensure_eq(&self, other: &Dims, what: &str) -> Result<()> {
        if self != other {
            return Err(Error::DimensionMismatch(format!(
                "{what}: {self:?} vs {other:?}"
            )));
        }
        Ok(())
    }
}

pub(crate) fn check_distribution(p: &[f64], tol: f64, what: impl FnOnce() -> String) -> Result<()> {
    let sum: f64 = p.iter().sum();
    if p.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) || (sum - 1.0).abs() > tol {
        return Err(Error::InvalidDistribution(format!("{} (sum {sum})", what())));
    }
    Ok(())
}

/// A real value per `(n, x, a)` for `n in 0..=N`.
///
/// Used for occupancy measures, gradients, losses and bonuses alike.
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    dims: Dims,
    data: Vec<f64>,
}

impl Field {
    pub fn zeros(dims: Dims) -> Self {
        Self {
            dims,
            data: vec![0.0; (dims.horizon + 1) * dims.sa()],
        }
    }

    pub fn from_fn(dims: Dims, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut out = Self::zeros(dims);
        for n in 0..=dims.horizon {
            for x in 0..dims.states {
                for a in 0..dims.actions {
                    out.set(n, x, a, f(n, x, a));
                }
            }
        }
        out
    }

    pub fn from_vec(dims: Dims, data: Vec<f64>) -> Result<Self> {
        if data.len() != (dims.horizon + 1) * dims.sa() {
            return Err(Error::DimensionMismatch(format!(
                "field data has length {}, expected {}",
                data.len(),
                (dims.horizon + 1) * dims.sa()
            )));
        }
        Ok(Self { dims, data })
    }

    #[inline]
    pub fn dims(&self) -> Dims {
        self.dims
    }

    #[inline]
    fn idx(&self, n: usize, x: usize, a: usize) -> usize {
        (n * self.dims.states + x) * self.dims.actions + a
    }

    #[inline]
    pub fn get(&self, n: usize, x: usize, a: usize) -> f64 {
        self.data[self.idx(n, x, a)]
    }

    #[inline]
    pub fn set(&mut self, n: usize, x: usize, a: usize, v: f64) {
        let i = self.idx(n, x, a);
        self.data[i] = v;
    }

    /// Entries of layer `n`, laid out as `x * A + a`.
    #[inline]
    pub fn layer(&self, n: usize) -> &[f64] {
        let w = self.dims.sa();
        &self.data[n * w..(n + 1) * w]
    }

    #[inline]
    pub fn layer_mut(&mut self, n: usize) -> &mut [f64] {
        let w = self.dims.sa();
        &mut self.data[n * w..(n + 1) * w]
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Inner product over all layers, including layer 0.
    pub fn dot(&self, other: &Field) -> f64 {
        debug_assert_eq!(self.dims, other.dims);
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    /// Inner product over layers `1..=N`.
    pub fn dot_from_layer1(&self, other: &Field) -> f64 {
        let w = self.dims.sa();
        self.data[w..]
            .iter()
            .zip(&other.data[w..])
            .map(|(a, b)| a * b)
            .sum()
    }

    pub fn scaled(&self, s: f64) -> Field {
        Field {
            dims: self.dims,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    /// `self + s * other`
    pub fn add_scaled(&mut self, s: f64, other: &Field) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
    }

    /// `sup_n ||v_n||_1` over layers `1..=N`.
    pub fn norm_inf_1(&self) -> f64 {
        (1..=self.dims.horizon)
            .map(|n| self.layer(n).iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// `sum_n max |v_n|` over layers `1..=N`, the dual of [`Field::norm_inf_1`].
    pub fn norm_1_inf(&self) -> f64 {
        (1..=self.dims.horizon)
            .map(|n| self.layer(n).iter().fold(0.0f64, |m, v| m.max(v.abs())))
            .sum()
    }

    /// State marginal `sum_a v_n(x, a)` of layer `n`.
    pub fn state_sums(&self, n: usize) -> Vec<f64> {
        self.layer(n)
            .chunks_exact(self.dims.actions)
            .map(|row| row.iter().sum())
            .collect()
    }
}

/// A sequence of state-action distributions `(mu_n)_{n=0..N}`.
///
/// Construction through [`compute_occupancy`] guarantees the flow constraints
/// for the kernel it was computed with. Values built from raw fields are only
/// checked for per-layer normalisation.
#[derive(Clone, Debug, PartialEq)]
pub struct OccupancyMeasure(Field);

impl OccupancyMeasure {
    /// Wraps a field whose layers are probability distributions (within 1e-10).
    pub fn from_field(field: Field) -> Result<Self> {
        for n in 0..=field.dims().horizon {
            check_distribution(field.layer(n), 1e-10, || format!("occupancy layer {n}"))?;
        }
        Ok(Self(field))
    }

    /// Wraps a field without validation. Intended for occupancy-shaped
    /// vectors whose feasibility is checked separately.
    pub fn from_field_unchecked(field: Field) -> Self {
        Self(field)
    }

    pub fn field(&self) -> &Field {
        &self.0
    }

    pub fn into_field(self) -> Field {
        self.0
    }

    /// Convex combination `(1 - w) * self + w * other`.
    pub fn mix(&self, w: f64, other: &OccupancyMeasure) -> OccupancyMeasure {
        let data = self
            .0
            .data
            .iter()
            .zip(&other.0.data)
            .map(|(a, b)| (1.0 - w) * a + w * b)
            .collect();
        OccupancyMeasure(Field {
            dims: self.0.dims,
            data,
        })
    }
}

impl Deref for OccupancyMeasure {
    type Target = Field;

    fn deref(&self) -> &Field {
        &self.0
    }
}

/// Per-layer conditional action distributions `pi_n(.|x)`, `n in 1..=N`.
#[derive(Clone, Debug, PartialEq)]
pub struct Policy {
    dims: Dims,
    data: Vec<f64>,
}

impl Policy {
    pub fn uniform(dims: Dims) -> Self {
        Self {
            dims,
            data: vec![1.0 / dims.actions as f64; dims.horizon * dims.sa()],
        }
    }

    /// Builds a policy from `f(n, x, a)`, validating every row.
    pub fn from_fn(dims: Dims, mut f: impl FnMut(usize, usize, usize) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(dims.horizon * dims.sa());
        for n in 1..=dims.horizon {
            for x in 0..dims.states {
                for a in 0..dims.actions {
                    data.push(f(n, x, a));
                }
            }
        }
        let p = Self { dims, data };
        p.validate()?;
        Ok(p)
    }

    pub(crate) fn zeros(dims: Dims) -> Self {
        Self {
            dims,
            data: vec![0.0; dims.horizon * dims.sa()],
        }
    }

    pub fn validate(&self) -> Result<()> {
        for n in 1..=self.dims.horizon {
            for x in 0..self.dims.states {
                check_distribution(self.row(n, x), DIST_TOL, || format!("policy row ({n}, {x})"))?;
            }
        }
        Ok(())
    }

    #[inline]
    pub fn dims(&self) -> Dims {
        self.dims
    }

    #[inline]
    fn offset(&self, n: usize, x: usize) -> usize {
        debug_assert!(n >= 1 && n <= self.dims.horizon);
        ((n - 1) * self.dims.states + x) * self.dims.actions
    }

    #[inline]
    pub fn row(&self, n: usize, x: usize) -> &[f64] {
        let o = self.offset(n, x);
        &self.data[o..o + self.dims.actions]
    }

    #[inline]
    pub fn row_mut(&mut self, n: usize, x: usize) -> &mut [f64] {
        let o = self.offset(n, x);
        let a = self.dims.actions;
        &mut self.data[o..o + a]
    }

    #[inline]
    pub fn get(&self, n: usize, x: usize, a: usize) -> f64 {
        self.data[self.offset(n, x) + a]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Largest entrywise difference to another policy.
    pub fn max_abs_diff(&self, other: &Policy) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }
}

/// Transition kernels `p_n(x'|x, a)` for `n in 1..=N`.
#[derive(Clone, Debug, PartialEq)]
pub struct Kernel {
    dims: Dims,
    data: Vec<f64>,
}

impl Kernel {
    pub fn uniform(dims: Dims) -> Self {
        Self {
            dims,
            data: vec![1.0 / dims.states as f64; dims.horizon * dims.sa() * dims.states],
        }
    }

    /// Builds a kernel from `f(n, x, a, x')`, validating every row.
    pub fn from_fn(
        dims: Dims,
        mut f: impl FnMut(usize, usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(dims.horizon * dims.sa() * dims.states);
        for n in 1..=dims.horizon {
            for x in 0..dims.states {
                for a in 0..dims.actions {
                    for y in 0..dims.states {
                        data.push(f(n, x, a, y));
                    }
                }
            }
        }
        let k = Self { dims, data };
        k.validate()?;
        Ok(k)
    }

    /// Uses the same per-`(x, a)` rows at every layer. `rows` is laid out as
    /// `(x * A + a) * S + x'`.
    pub fn stationary(dims: Dims, rows: &[f64]) -> Result<Self> {
        let w = dims.sa() * dims.states;
        if rows.len() != w {
            return Err(Error::DimensionMismatch(format!(
                "stationary kernel rows have length {}, expected {w}",
                rows.len()
            )));
        }
        let mut data = Vec::with_capacity(dims.horizon * w);
        for _ in 0..dims.horizon {
            data.extend_from_slice(rows);
        }
        let k = Self { dims, data };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        for n in 1..=self.dims.horizon {
            for x in 0..self.dims.states {
                for a in 0..self.dims.actions {
                    check_distribution(self.row(n, x, a), DIST_TOL, || {
                        format!("kernel row ({n}, {x}, {a})")
                    })?;
                }
            }
        }
        Ok(())
    }

    #[inline]
    pub fn dims(&self) -> Dims {
        self.dims
    }

    #[inline]
    fn offset(&self, n: usize, x: usize, a: usize) -> usize {
        debug_assert!(n >= 1 && n <= self.dims.horizon);
        (((n - 1) * self.dims.states + x) * self.dims.actions + a) * self.dims.states
    }

    #[inline]
    pub fn row(&self, n: usize, x: usize, a: usize) -> &[f64] {
        let o = self.offset(n, x, a);
        &self.data[o..o + self.dims.states]
    }

    #[inline]
    pub fn row_mut(&mut self, n: usize, x: usize, a: usize) -> &mut [f64] {
        let o = self.offset(n, x, a);
        let s = self.dims.states;
        &mut self.data[o..o + s]
    }

    pub fn min_entry(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `max_{n,x,a} ||p_n(.|x,a) - q_n(.|x,a)||_1`.
    pub fn max_row_l1_gap(&self, other: &Kernel) -> f64 {
        self.data
            .chunks_exact(self.dims.states)
            .zip(other.data.chunks_exact(self.dims.states))
            .map(|(p, q)| l1_distance(p, q))
            .fold(0.0, f64::max)
    }
}

pub fn l1_distance(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum()
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodicMdp {
    kernel: Kernel,
    mu0: Vec<f64>,
}

impl EpisodicMdp {
    /// `mu0` is laid out as `x * A + a`.
    pub fn new(kernel: Kernel, mu0: Vec<f64>) -> Result<Self> {
        let dims = kernel.dims();
        if mu0.len() != dims.sa() {
            return Err(Error::DimensionMismatch(format!(
                "mu0 has length {}, expected {}",
                mu0.len(),
                dims.sa()
            )));
        }
        check_distribution(&mu0, DIST_TOL, || "mu0".to_string())?;
        Ok(Self { kernel, mu0 })
    }

    #[inline]
    pub fn dims(&self) -> Dims {
        self.kernel.dims()
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn mu0(&self) -> &[f64] {
        &self.mu0
    }

    /// Same initial distribution, different kernel.
    pub fn with_kernel(&self, kernel: Kernel) -> Result<Self> {
        self.dims().ensure_eq(&kernel.dims(), "replacement kernel")?;
        Ok(Self {
            kernel,
            mu0: self.mu0.clone(),
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    /// `(x_n, a_n)` for `n = 0..=N`.
    pub steps: Vec<(usize, usize)>,
    /// Observed losses `l_n(x_n, a_n)` for `n = 1..=N`, when revealed.
    pub losses: Option<Vec<f64>>,
}

/// Occupancy induced by `policy` under `kernel` from `mu0`.
pub fn occupancy(policy: &Policy, kernel: &Kernel, mu0: &[f64]) -> Result<OccupancyMeasure> {
    let dims = kernel.dims();
    dims.ensure_eq(&policy.dims(), "policy vs kernel")?;
    if mu0.len() != dims.sa() {
        return Err(Error::DimensionMismatch("mu0 length".into()));
    }
    let (s, a_count) = (dims.states, dims.actions);
    let mut mu = Field::zeros(dims);
    mu.layer_mut(0).copy_from_slice(mu0);
    let mut rho = vec![0.0; s];
    for n in 1..=dims.horizon {
        rho.iter_mut().for_each(|r| *r = 0.0);
        for x in 0..s {
            for a in 0..a_count {
                let m = mu.get(n - 1, x, a);
                if m == 0.0 {
                    continue;
                }
                for (r, p) in rho.iter_mut().zip(kernel.row(n, x, a)) {
                    *r += m * p;
                }
            }
        }
        for x in 0..s {
            let pi = policy.row(n, x);
            for a in 0..a_count {
                mu.set(n, x, a, rho[x] * pi[a]);
            }
        }
    }
    Ok(OccupancyMeasure(mu))
}

/// `mu^{pi, p}` for the MDP's own kernel.
pub fn compute_occupancy(policy: &Policy, mdp: &EpisodicMdp) -> Result<OccupancyMeasure> {
    occupancy(policy, mdp.kernel(), mdp.mu0())
}

/// `pi_n(a|x) = mu_n(x, a) / rho_n(x)`; rows with zero marginal are copied from
/// `fallback` (uniform when `None`).
pub fn policy_from_occupancy(mu: &Field, fallback: Option<&Policy>) -> Policy {
    let dims = mu.dims();
    let mut pi = Policy::zeros(dims);
    let uniform = 1.0 / dims.actions as f64;
    for n in 1..=dims.horizon {
        for x in 0..dims.states {
            let row = &mu.layer(n)[x * dims.actions..(x + 1) * dims.actions];
            let rho: f64 = row.iter().sum();
            let out = pi.row_mut(n, x);
            if rho > 0.0 {
                for (o, m) in out.iter_mut().zip(row) {
                    *o = m / rho;
                }
            } else if let Some(fb) = fallback {
                out.copy_from_slice(fb.row(n, x));
            } else {
                out.iter_mut().for_each(|o| *o = uniform);
            }
        }
    }
    pi
}

/// `rho_n(x) = sum_a mu_n(x, a)`.
pub fn state_marginal(mu: &Field, n: usize) -> Result<Vec<f64>> {
    let horizon = mu.dims().horizon;
    if n > horizon {
        return Err(Error::LayerOutOfRange { layer: n, horizon });
    }
    Ok(mu.state_sums(n))
}

/// Checks layer sums, nonnegativity, `mu_0 = mu0` and the flow constraints
/// `sum_a mu_n(x, a) = sum_{x',a'} mu_{n-1}(x', a') p_n(x|x', a')`.
pub fn check_feasibility(mu: &Field, kernel: &Kernel, mu0: &[f64], tol: f64) -> bool {
    let dims = kernel.dims();
    if mu.dims() != dims || mu0.len() != dims.sa() {
        return false;
    }
    if mu.as_slice().iter().any(|v| !v.is_finite() || *v < -tol) {
        return false;
    }
    if mu.layer(0).iter().zip(mu0).any(|(a, b)| (a - b).abs() > tol) {
        return false;
    }
    let mut flow = vec![0.0; dims.states];
    for n in 0..=dims.horizon {
        let total: f64 = mu.layer(n).iter().sum();
        if (total - 1.0).abs() > tol {
            return false;
        }
        if n == 0 {
            continue;
        }
        flow.iter_mut().for_each(|f| *f = 0.0);
        for x in 0..dims.states {
            for a in 0..dims.actions {
                let m = mu.get(n - 1, x, a);
                if m == 0.0 {
                    continue;
                }
                for (f, p) in flow.iter_mut().zip(kernel.row(n, x, a)) {
                    *f += m * p;
                }
            }
        }
        let rho = mu.state_sums(n);
        if rho.iter().zip(&flow).any(|(r, f)| (r - f).abs() > tol) {
            return false;
        }
    }
    true
}

fn sample_index<R: Rng + ?Sized>(p: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &w) in p.iter().enumerate() {
        if w <= 0.0 {
            continue;
        }
        acc += w;
        last = i;
        if u < acc {
            return i;
        }
    }
    last
}

/// Draws `(x_0, a_0) ~ mu0`, `x_n ~ p_n(.|x_{n-1}, a_{n-1})`, `a_n ~ pi_n(.|x_n)`.
pub fn sample_trajectory<R: Rng + ?Sized>(
    policy: &Policy,
    mdp: &EpisodicMdp,
    rng: &mut R,
) -> Trajectory {
    let dims = mdp.dims();
    let mut steps = Vec::with_capacity(dims.horizon + 1);
    let first = sample_index(mdp.mu0(), rng);
    let (mut x, mut a) = (first / dims.actions, first % dims.actions);
    steps.push((x, a));
    for n in 1..=dims.horizon {
        x = sample_index(mdp.kernel().row(n, x, a), rng);
        a = sample_index(policy.row(n, x), rng);
        steps.push((x, a));
    }
    Trajectory {
        steps,
        losses: None,
    }
}

/// Right-hand side of the occupancy perturbation bound
/// `||mu_n^{pi,p} - mu_n^{pi,q}||_1 <= sum_{i<n} sum_{x,a} mu_i^{pi,p}(x,a) ||p_{i+1}(.|x,a) - q_{i+1}(.|x,a)||_1`,
/// maximised over `n` (attained at `n = N` since every term is nonnegative).
pub fn occupancy_shift_bound(
    policy: &Policy,
    p: &Kernel,
    q: &Kernel,
    mu0: &[f64],
) -> Result<f64> {
    let dims = p.dims();
    dims.ensure_eq(&q.dims(), "kernels")?;
    let mu = occupancy(policy, p, mu0)?;
    let mut total = 0.0;
    for i in 0..dims.horizon {
        for x in 0..dims.states {
            for a in 0..dims.actions {
                let m = mu.get(i, x, a);
                if m != 0.0 {
                    total += m * l1_distance(p.row(i + 1, x, a), q.row(i + 1, x, a));
                }
            }
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn random_simplex<R: Rng>(k: usize, rng: &mut R) -> Vec<f64> {
        let v: Vec<f64> = (0..k).map(|_| -rng.random::<f64>().max(1e-300).ln()).collect();
        let s: f64 = v.iter().sum();
        v.into_iter().map(|x| x / s).collect()
    }

    fn random_mdp(dims: Dims, rng: &mut ChaCha8Rng) -> EpisodicMdp {
        let mut rows = Vec::new();
        for _ in 0..dims.horizon * dims.sa() {
            rows.push(random_simplex(dims.states, rng));
        }
        let mut it = rows.into_iter().flatten();
        let kernel = Kernel::from_fn(dims, |_, _, _, _| it.next().unwrap()).unwrap();
        EpisodicMdp::new(kernel, random_simplex(dims.sa(), rng)).unwrap()
    }

    fn random_policy(dims: Dims, rng: &mut ChaCha8Rng) -> Policy {
        let rows: Vec<f64> = (0..dims.horizon * dims.states)
            .flat_map(|_| random_simplex(dims.actions, rng))
            .collect();
        let mut it = rows.into_iter();
        Policy::from_fn(dims, |_, _, _| it.next().unwrap()).unwrap()
    }

    #[test]
    fn deterministic_chain() {
        let dims = Dims::new(1, 2, 1).unwrap();
        let k = Kernel::from_fn(dims, |_, x, _, y| if y == 1 || (x == 1 && y == 1) { 1.0 } else { 0.0 }).unwrap();
        let mdp = EpisodicMdp::new(k, vec![1.0, 0.0]).unwrap();
        let mu = compute_occupancy(&Policy::uniform(dims), &mdp).unwrap();
        assert_eq!(mu.get(1, 1, 0), 1.0);
        assert_eq!(mu.get(1, 0, 0), 0.0);
    }

    #[test]
    fn single_transition_step() {
        let dims = Dims::new(1, 2, 1).unwrap();
        let k = Kernel::from_fn(dims, |_, _, _, y| [0.3, 0.7][y]).unwrap();
        let mdp = EpisodicMdp::new(k, vec![1.0, 0.0]).unwrap();
        let mu = compute_occupancy(&Policy::uniform(dims), &mdp).unwrap();
        assert!((mu.get(1, 0, 0) - 0.3).abs() < 1e-15);
        assert!((mu.get(1, 1, 0) - 0.7).abs() < 1e-15);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let dims = Dims::new(2, 2, 2).unwrap();
        let mdp = EpisodicMdp::new(Kernel::uniform(dims), vec![0.25; 4]).unwrap();
        let other = Policy::uniform(Dims::new(2, 3, 2).unwrap());
        assert!(matches!(
            compute_occupancy(&other, &mdp),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn policy_rows_normalise_and_fallback() {
        let dims = Dims::new(1, 2, 2).unwrap();
        let mu = Field::from_fn(dims, |n, x, _| if n == 1 && x == 0 { 0.2 } else if n == 0 && x == 0 { 0.5 } else { 0.0 });
        let pi = policy_from_occupancy(&mu, None);
        assert_eq!(pi.row(1, 0), &[0.5, 0.5]);
        assert_eq!(pi.row(1, 1), &[0.5, 0.5]);

        let skewed = Policy::from_fn(dims, |_, _, a| if a == 0 { 0.9 } else { 0.1 }).unwrap();
        let pi = policy_from_occupancy(&mu, Some(&skewed));
        assert_eq!(pi.row(1, 1), &[0.9, 0.1]);
    }

    #[test]
    fn occupancy_round_trips_through_policy() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let dims = Dims::new(3, 4, 3).unwrap();
            let mdp = random_mdp(dims, &mut rng);
            let pi = random_policy(dims, &mut rng);
            let mu = compute_occupancy(&pi, &mdp).unwrap();
            let back = compute_occupancy(&policy_from_occupancy(&mu, None), &mdp).unwrap();
            let gap = mu
                .as_slice()
                .iter()
                .zip(back.as_slice())
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            assert!(gap < 1e-10, "gap {gap}");
        }
    }

    #[test]
    fn marginals() {
        let dims = Dims::new(1, 1, 3).unwrap();
        let mu = Field::from_fn(dims, |_, _, _| 1.0 / 3.0);
        let rho = state_marginal(&mu, 1).unwrap();
        assert!((rho[0] - 1.0).abs() < 1e-15);

        let dims = Dims::new(1, 2, 2).unwrap();
        let mu = Field::from_fn(dims, |_, _, _| 0.25);
        assert_eq!(state_marginal(&mu, 1).unwrap(), vec![0.5, 0.5]);
        assert!(matches!(
            state_marginal(&mu, 2),
            Err(Error::LayerOutOfRange { layer: 2, horizon: 1 })
        ));

        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let dims = Dims::new(2, 5, 3).unwrap();
        let mdp = random_mdp(dims, &mut rng);
        let mu = compute_occupancy(&random_policy(dims, &mut rng), &mdp).unwrap();
        for n in 0..=2 {
            let s: f64 = state_marginal(&mu, n).unwrap().iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn feasibility_checks() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let dims = Dims::new(3, 3, 2).unwrap();
        let mdp = random_mdp(dims, &mut rng);
        let pi = random_policy(dims, &mut rng);
        let mu = compute_occupancy(&pi, &mdp).unwrap();
        assert!(check_feasibility(&mu, mdp.kernel(), mdp.mu0(), 1e-10));

        // move 0.1 of mass between two states at layer 2: layer still sums to 1
        let mut bad = mu.field().clone();
        let v0 = bad.get(2, 0, 0);
        let v1 = bad.get(2, 1, 0);
        let shift = 0.1f64.min(v0);
        bad.set(2, 0, 0, v0 - shift);
        bad.set(2, 1, 0, v1 + shift);
        assert!(!check_feasibility(&bad, mdp.kernel(), mdp.mu0(), 1e-10));

        let other = random_mdp(dims, &mut rng);
        let mu_q = occupancy(&pi, other.kernel(), mdp.mu0()).unwrap();
        assert!(!check_feasibility(&mu_q, mdp.kernel(), mdp.mu0(), 1e-10));
    }

    #[test]
    fn deterministic_sampling() {
        let dims = Dims::new(3, 3, 2).unwrap();
        let k = Kernel::from_fn(dims, |_, x, a, y| if y == (x + a + 1) % 3 { 1.0 } else { 0.0 }).unwrap();
        let mut mu0 = vec![0.0; 6];
        mu0[1] = 1.0;
        let mdp = EpisodicMdp::new(k, mu0).unwrap();
        let pi = Policy::from_fn(dims, |_, _, a| if a == 0 { 1.0 } else { 0.0 }).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let t = sample_trajectory(&pi, &mdp, &mut rng);
        assert_eq!(t.steps, vec![(0, 1), (2, 0), (0, 0), (1, 0)]);
    }

    #[test]
    fn sampling_is_reproducible() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let dims = Dims::new(4, 3, 2).unwrap();
        let mdp = random_mdp(dims, &mut rng);
        let pi = random_policy(dims, &mut rng);
        let a = sample_trajectory(&pi, &mdp, &mut ChaCha8Rng::seed_from_u64(42));
        let b = sample_trajectory(&pi, &mdp, &mut ChaCha8Rng::seed_from_u64(42));
        assert_eq!(a, b);
        assert_eq!(a.steps.len(), 5);
    }

    #[test]
    fn shift_bound_zero_for_equal_kernels() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let dims = Dims::new(3, 3, 2).unwrap();
        let mdp = random_mdp(dims, &mut rng);
        let pi = random_policy(dims, &mut rng);
        let b = occupancy_shift_bound(&pi, mdp.kernel(), mdp.kernel(), mdp.mu0()).unwrap();
        assert_eq!(b, 0.0);
    }

    #[test]
    fn shift_bound_single_layer_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let dims = Dims::new(3, 3, 2).unwrap();
        let mdp = random_mdp(dims, &mut rng);
        let other = random_mdp(dims, &mut rng);
        let p = mdp.kernel();
        let q = Kernel::from_fn(dims, |n, x, a, y| {
            if n == dims.horizon { other.kernel().row(n, x, a)[y] } else { p.row(n, x, a)[y] }
        })
        .unwrap();
        let pi = random_policy(dims, &mut rng);
        let mu = compute_occupancy(&pi, &mdp).unwrap();
        let mut expected = 0.0;
        for x in 0..3 {
            for a in 0..2 {
                expected += mu.get(2, x, a) * l1_distance(p.row(3, x, a), q.row(3, x, a));
            }
        }
        let b = occupancy_shift_bound(&pi, p, &q, mdp.mu0()).unwrap();
        assert!((b - expected).abs() < 1e-14);
    }

    #[test]
    fn shift_bound_holds_on_random_triples() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let dims = Dims::new(4, 3, 2).unwrap();
            let mdp = random_mdp(dims, &mut rng);
            let other = random_mdp(dims, &mut rng);
            let pi = random_policy(dims, &mut rng);
            let bound = occupancy_shift_bound(&pi, mdp.kernel(), other.kernel(), mdp.mu0()).unwrap();
            let mp = occupancy(&pi, mdp.kernel(), mdp.mu0()).unwrap();
            let mq = occupancy(&pi, other.kernel(), mdp.mu0()).unwrap();
            for n in 0..=dims.horizon {
                let lhs = l1_distance(mp.layer(n), mq.layer(n));
                assert!(lhs <= bound + 1e-12, "layer {n}: {lhs} > {bound}");
            }
        }
    }
}
