//! Visit counters, transition estimators, confidence widths and the
//! optimistic occupancy bound.
//!
//! Counts are indexed by the source layer `n in 0..N`; the estimate of kernel
//! layer `n + 1` is built from `N_n` and `M_n`.

use crate::error::{Error, Result};
use crate::mdp::{Dims, Field, Kernel, Policy, Trajectory};

#[derive(Clone, Debug, PartialEq)]
pub struct VisitCounts {
    dims: Dims,
    visits: Vec<u64>,
    transitions: Vec<u64>,
    rounds: u64,
    pooled: bool,
}

impl VisitCounts {
    pub fn new(dims: Dims) -> Self {
        Self {
            dims,
            visits: vec![0; dims.horizon * dims.sa()],
            transitions: vec![0; dims.horizon * dims.sa() * dims.states],
            rounds: 0,
            pooled: false,
        }
    }

    /// Counters for a kernel that is the same at every layer: each observed
    /// transition is credited to all layers.
    pub fn pooled(dims: Dims) -> Self {
        Self {
            pooled: true,
            ..Self::new(dims)
        }
    }

    pub fn is_pooled(&self) -> bool {
        self.pooled
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn rounds(&self) -> u64 {
        self.rounds
    }

    #[inline]
    fn vidx(&self, n: usize, x: usize, a: usize) -> usize {
        debug_assert!(n < self.dims.horizon);
        (n * self.dims.states + x) * self.dims.actions + a
    }

    /// `N_n(x, a)` for `n in 0..N`.
    #[inline]
    pub fn visits(&self, n: usize, x: usize, a: usize) -> u64 {
        self.visits[self.vidx(n, x, a)]
    }

    /// `M_n(.|x, a)` for `n in 0..N`.
    #[inline]
    pub fn transitions(&self, n: usize, x: usize, a: usize) -> &[u64] {
        let o = self.vidx(n, x, a) * self.dims.states;
        &self.transitions[o..o + self.dims.states]
    }

    /// Adds one episode. Returns the `(n, x, a)` source rows it touched, in
    /// layer order (a row appears once per layer).
    pub fn record_trajectory(&mut self, traj: &Trajectory) -> Result<Vec<(usize, usize, usize)>> {
        Ok(self.record_with_increments(traj)?.into_iter().map(|(row, _)| row).collect())
    }

    /// As [`record_trajectory`](Self::record_trajectory), with the amount each
    /// touched row's visit count grew by. Without pooling every increment is 1.
    pub fn record_with_increments(&mut self, traj: &Trajectory) -> Result<Vec<((usize, usize, usize), u64)>> {
        let d = self.dims;
        if traj.steps.len() != d.horizon + 1 {
            return Err(Error::DimensionMismatch(format!(
                "trajectory has {} steps, expected {}",
                traj.steps.len(),
                d.horizon + 1
            )));
        }
        if traj.steps.iter().any(|&(x, a)| x >= d.states || a >= d.actions) {
            return Err(Error::param("trajectory", "state or action out of range"));
        }
        let mut touched = Vec::with_capacity(d.horizon);
        if self.pooled {
            let mut added = vec![0u64; d.sa()];
            for n in 0..d.horizon {
                let (x, a) = traj.steps[n];
                let (y, _) = traj.steps[n + 1];
                added[x * d.actions + a] += 1;
                for m in 0..d.horizon {
                    let i = self.vidx(m, x, a);
                    self.visits[i] += 1;
                    self.transitions[i * d.states + y] += 1;
                }
            }
            for m in 0..d.horizon {
                for (j, &k) in added.iter().enumerate() {
                    if k > 0 {
                        touched.push(((m, j / d.actions, j % d.actions), k));
                    }
                }
            }
        } else {
            for n in 0..d.horizon {
                let (x, a) = traj.steps[n];
                let (y, _) = traj.steps[n + 1];
                let i = self.vidx(n, x, a);
                self.visits[i] += 1;
                self.transitions[i * d.states + y] += 1;
                touched.push(((n, x, a), 1));
            }
        }
        self.rounds += 1;
        Ok(touched)
    }

    /// `p^_{n+1}(.|x,a) = M_n / max(1, N_n)`, uniform when unvisited.
    pub fn empirical_row(&self, n: usize, x: usize, a: usize, out: &mut [f64]) {
        let c = self.visits(n, x, a);
        if c == 0 {
            out.fill(1.0 / self.dims.states as f64);
        } else {
            for (o, &m) in out.iter_mut().zip(self.transitions(n, x, a)) {
                *o = m as f64 / c as f64;
            }
        }
    }

    /// `(M_n + 1) / (N_n + S)`.
    pub fn laplace_row(&self, n: usize, x: usize, a: usize, out: &mut [f64]) {
        let denom = (self.visits(n, x, a) + self.dims.states as u64) as f64;
        for (o, &m) in out.iter_mut().zip(self.transitions(n, x, a)) {
            *o = (m + 1) as f64 / denom;
        }
    }

    fn check_invariants(&self) -> bool {
        let d = self.dims;
        (0..d.horizon).all(|n| {
            let layer: u64 = self.visits[n * d.sa()..(n + 1) * d.sa()].iter().sum();
            let per_round = if self.pooled { d.horizon as u64 } else { 1 };
            layer == per_round * self.rounds
        }) && self
            .visits
            .iter()
            .enumerate()
            .all(|(i, &v)| self.transitions[i * d.states..(i + 1) * d.states].iter().sum::<u64>() == v)
    }
}

/// Which estimator to build from counts.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Estimator {
    Empirical,
    Laplace,
    /// Laplace followed by the information projection onto entries `>= eps`.
    Projected { eps: f64 },
}

impl Estimator {
    pub fn validate(&self, states: usize) -> Result<()> {
        if let Estimator::Projected { eps } = *self {
            check_eps(eps, states)?;
        }
        Ok(())
    }

    fn fill_row(&self, counts: &VisitCounts, n: usize, x: usize, a: usize, out: &mut [f64]) {
        match *self {
            Estimator::Empirical => counts.empirical_row(n, x, a, out),
            Estimator::Laplace => counts.laplace_row(n, x, a, out),
            Estimator::Projected { eps } => {
                counts.laplace_row(n, x, a, out);
                project_in_place(out, eps);
            }
        }
    }

    pub fn build(&self, counts: &VisitCounts) -> Result<Kernel> {
        let d = counts.dims();
        self.validate(d.states)?;
        let mut k = Kernel::uniform(d);
        for n in 0..d.horizon {
            for x in 0..d.states {
                for a in 0..d.actions {
                    self.fill_row(counts, n, x, a, k.row_mut(n + 1, x, a));
                }
            }
        }
        Ok(k)
    }

    /// Recomputes the rows fed by the given source rows.
    pub fn refresh(&self, kernel: &mut Kernel, counts: &VisitCounts, rows: &[(usize, usize, usize)]) {
        for &(n, x, a) in rows {
            self.fill_row(counts, n, x, a, kernel.row_mut(n + 1, x, a));
        }
    }
}

pub fn empirical_kernel(counts: &VisitCounts) -> Kernel {
    Estimator::Empirical.build(counts).expect("empirical estimator has no parameters")
}

pub fn laplace_kernel(counts: &VisitCounts) -> Kernel {
    Estimator::Laplace.build(counts).expect("laplace estimator has no parameters")
}

pub fn projected_kernel(counts: &VisitCounts, eps: f64) -> Result<Kernel> {
    Estimator::Projected { eps }.build(counts)
}

fn check_eps(eps: f64, states: usize) -> Result<()> {
    if !(eps > 0.0 && eps <= 1.0 / (2.0 * states as f64)) {
        return Err(Error::param(
            "eps",
            format!("must lie in (0, 1/(2S)] = (0, {}], got {eps}", 1.0 / (2.0 * states as f64)),
        ));
    }
    Ok(())
}

/// `g_eps(r; p) = sum_x max(r eps, p(x))`.
pub fn fixed_point_map(r: f64, p: &[f64], eps: f64) -> f64 {
    p.iter().map(|&v| (r * eps).max(v)).sum()
}

/// KL projection of `p` onto `{q in simplex : q >= eps}`, with the fixed
/// point `r` of `g_eps(.; p)`.
pub fn eps_info_projection(p: &[f64], eps: f64) -> Result<(Vec<f64>, f64)> {
    check_eps(eps, p.len())?;
    crate::mdp::check_distribution(p, 1e-9, || "projection input".into())?;
    let mut out = p.to_vec();
    let r = project_in_place(&mut out, eps);
    Ok((out, r))
}

fn project_in_place(p: &mut [f64], eps: f64) -> f64 {
    let mut plus_mass = 0.0;
    let mut minus = 0usize;
    let mut in_plus = vec![false; p.len()];
    for (i, &v) in p.iter().enumerate() {
        let r = v / eps;
        if fixed_point_map(r, p, eps) < r {
            in_plus[i] = true;
            plus_mass += v;
        } else {
            minus += 1;
        }
    }
    if minus == 0 {
        return 1.0;
    }
    let scale = 1.0 - eps * minus as f64;
    for (v, plus) in p.iter_mut().zip(&in_plus) {
        *v = if *plus { (*v * scale / plus_mass).max(eps) } else { eps };
    }
    plus_mass / scale
}

/// `C_delta = sqrt(2 S log(S A N T / delta))`.
pub fn c_delta(dims: Dims, episodes: usize, delta: f64) -> Result<f64> {
    check_delta(delta)?;
    let arg = (dims.sa() * dims.horizon * episodes.max(1)) as f64 / delta;
    Ok((2.0 * dims.states as f64 * arg.ln()).sqrt())
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::param("delta", format!("must lie in (0, 1), got {delta}")));
    }
    Ok(())
}

/// L1 radii around each estimated row, kernel layers `1..=N`.
#[derive(Clone, Debug, PartialEq)]
pub struct RowWidths {
    dims: Dims,
    data: Vec<f64>,
}

impl RowWidths {
    pub fn get(&self, n: usize, x: usize, a: usize) -> f64 {
        self.data[((n - 1) * self.dims.states + x) * self.dims.actions + a]
    }
}

/// `sqrt(2 S log(SANT/delta) / max(1, N_{n-1}(x, a)))`.
pub fn hoeffding_width(counts: &VisitCounts, episodes: usize, delta: f64) -> Result<RowWidths> {
    let d = counts.dims();
    let c = c_delta(d, episodes, delta)?;
    let mut data = Vec::with_capacity(d.horizon * d.sa());
    for n in 0..d.horizon {
        for x in 0..d.states {
            for a in 0..d.actions {
                data.push(c / (counts.visits(n, x, a).max(1) as f64).sqrt());
            }
        }
    }
    Ok(RowWidths { dims: d, data })
}

/// Per-entry interval half-widths `eps_n(x'|x, a)`, kernel layers `1..=N`.
#[derive(Clone, Debug, PartialEq)]
pub struct EntrywiseWidths {
    dims: Dims,
    data: Vec<f64>,
}

impl EntrywiseWidths {
    pub fn constant(dims: Dims, w: f64) -> Self {
        Self {
            dims,
            data: vec![w; dims.horizon * dims.sa() * dims.states],
        }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn row(&self, n: usize, x: usize, a: usize) -> &[f64] {
        let o = (((n - 1) * self.dims.states + x) * self.dims.actions + a) * self.dims.states;
        &self.data[o..o + self.dims.states]
    }

    /// Whether `q` lies in the entrywise intervals around `center`.
    pub fn contains(&self, center: &Kernel, q: &Kernel, tol: f64) -> bool {
        let d = self.dims;
        (1..=d.horizon).all(|n| {
            (0..d.states).all(|x| {
                (0..d.actions).all(|a| {
                    self.row(n, x, a)
                        .iter()
                        .zip(center.row(n, x, a).iter().zip(q.row(n, x, a)))
                        .all(|(w, (c, v))| (c - v).abs() <= w + tol)
                })
            })
        })
    }
}

/// `2 sqrt(p^ L / max(1, N)) + 14 L / (3 max(1, N))` with `L = log(T N S A / delta)`.
pub fn bernstein_widths(
    counts: &VisitCounts,
    p_hat: &Kernel,
    episodes: usize,
    delta: f64,
) -> Result<EntrywiseWidths> {
    check_delta(delta)?;
    let d = counts.dims();
    if p_hat.dims() != d {
        return Err(Error::DimensionMismatch("bernstein widths: kernel vs counts".into()));
    }
    let log_term = ((episodes.max(1) * d.horizon * d.sa()) as f64 / delta).ln();
    let mut data = Vec::with_capacity(d.horizon * d.sa() * d.states);
    for n in 1..=d.horizon {
        for x in 0..d.states {
            for a in 0..d.actions {
                let c = counts.visits(n - 1, x, a).max(1) as f64;
                for &p in p_hat.row(n, x, a) {
                    data.push(2.0 * (p * log_term / c).sqrt() + 14.0 * log_term / (3.0 * c));
                }
            }
        }
    }
    Ok(EntrywiseWidths { dims: d, data })
}

/// Maximiser of `<q, values>` over `{q in simplex : |q - p_hat| <= widths}`.
///
/// `order` must list the indices by decreasing `values`.
fn greedy_fill(p_hat: &[f64], widths: &[f64], order: &[usize], q: &mut [f64]) {
    let mut mass = 0.0;
    for ((qi, &p), &w) in q.iter_mut().zip(p_hat).zip(widths) {
        *qi = (p - w).max(0.0);
        mass += *qi;
    }
    let mut rem = 1.0 - mass;
    for &i in order {
        if rem <= 0.0 {
            break;
        }
        let upper = (p_hat[i] + widths[i]).min(1.0);
        let add = (upper - q[i]).min(rem);
        if add > 0.0 {
            q[i] += add;
            rem -= add;
        }
    }
    debug_assert!(rem <= 1e-9, "box does not reach the simplex");
}

fn descending_order(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[j].total_cmp(&values[i]));
    order
}

/// The maximising `q` of [`greedy_box_simplex_max`].
pub fn greedy_box_simplex_argmax(values: &[f64], p_hat_row: &[f64], widths_row: &[f64]) -> Vec<f64> {
    let mut q = vec![0.0; values.len()];
    greedy_fill(p_hat_row, widths_row, &descending_order(values), &mut q);
    q
}

/// `max <q, values>` over the box `[p_hat - w, p_hat + w] ∩ [0, 1]` intersected
/// with the simplex.
pub fn greedy_box_simplex_max(values: &[f64], p_hat_row: &[f64], widths_row: &[f64]) -> f64 {
    let q = greedy_box_simplex_argmax(values, p_hat_row, widths_row);
    q.iter().zip(values).map(|(a, b)| a * b).sum()
}

/// `mu_bar_n(x, a) = max_{q in Omega} mu^{pi, q}_n(x, a)`, computed per target
/// `(n, x)` by backward dynamic programming. Layer 0 is `mu0`.
pub fn upper_occupancy(
    pi: &Policy,
    p_hat: &Kernel,
    widths: &EntrywiseWidths,
    mu0: &[f64],
) -> Result<Field> {
    let d = p_hat.dims();
    if pi.dims() != d || widths.dims() != d || mu0.len() != d.sa() {
        return Err(Error::DimensionMismatch("upper_occupancy operands".into()));
    }
    let (s, na) = (d.states, d.actions);
    let mut out = Field::zeros(d);
    out.layer_mut(0).copy_from_slice(mu0);
    let mut w = vec![0.0; s];
    let mut u = vec![0.0; d.sa()];
    let mut q = vec![0.0; s];
    for n in 1..=d.horizon {
        for target in 0..s {
            w.fill(0.0);
            w[target] = 1.0;
            for m in (0..n).rev() {
                let order = descending_order(&w);
                for y in 0..s {
                    for a in 0..na {
                        let row = p_hat.row(m + 1, y, a);
                        greedy_fill(row, widths.row(m + 1, y, a), &order, &mut q);
                        u[y * na + a] = q.iter().zip(&w).map(|(a, b)| a * b).sum();
                    }
                }
                if m >= 1 {
                    for y in 0..s {
                        w[y] = pi.row(m, y).iter().zip(&u[y * na..(y + 1) * na]).map(|(p, v)| p * v).sum();
                    }
                }
            }
            let rho: f64 = mu0.iter().zip(&u).map(|(a, b)| a * b).sum();
            for (a, &p) in pi.row(n, target).iter().enumerate() {
                out.set(n, target, a, p * rho);
            }
        }
    }
    Ok(out)
}

/// Asserts the count invariants; used by algorithm loops in checked mode.
pub fn verify_counts(counts: &VisitCounts) -> Result<()> {
    if counts.check_invariants() {
        Ok(())
    } else {
        Err(Error::InvariantViolated("visit counts are inconsistent".into()))
    }
}
