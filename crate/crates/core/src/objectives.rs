//! Objective oracles `F(mu) = sum_{n=1}^N f_n(mu_n)`.
//!
//! `value` and `gradient` evaluate the formulas as written. Some objectives
//! are utilities to be maximised (the multi-target one); learners always
//! consume [`Objective::loss`] and [`Objective::loss_gradient`], which flip the
//! sign for [`Sense::Maximize`].

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{Dims, Field};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Minimize,
    Maximize,
}

#[derive(Clone, Debug, PartialEq)]
pub enum ObjectiveKind {
    /// `<l, mu>` with `l_n(x, a) in [0, 1]`.
    Linear { loss: Field },
    /// `-sum_k (1 - rho_n(target_k))^2` per layer.
    MultiTarget { targets: Vec<usize> },
    /// `-<r, mu_n> + <c, mu_n>^2` per layer; `r`, `c` are laid out as `x * A + a`.
    Constrained { reward: Vec<f64>, cost: Vec<f64> },
    /// `(w / 2) * ||mu_n - nu_n||_2^2` per layer.
    Quadratic { target: Field, weight: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Objective {
    dims: Dims,
    kind: ObjectiveKind,
    sense: Sense,
    lipschitz: f64,
}

pub fn make_linear_objective(loss: Field) -> Result<Objective> {
    let dims = loss.dims();
    for n in 1..=dims.horizon {
        if let Some(v) = loss.layer(n).iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::param("loss", format!("entry {v} at layer {n} outside [0, 1]")));
        }
    }
    let mut loss = loss;
    loss.layer_mut(0).iter_mut().for_each(|v| *v = 0.0);
    Ok(Objective {
        dims,
        kind: ObjectiveKind::Linear { loss },
        sense: Sense::Minimize,
        lipschitz: 1.0,
    })
}

pub fn make_multi_target_objective(dims: Dims, targets: &[usize]) -> Result<Objective> {
    if targets.is_empty() {
        return Err(Error::param("targets", "target list is empty"));
    }
    for (i, &t) in targets.iter().enumerate() {
        if t >= dims.states {
            return Err(Error::param("targets", format!("state {t} out of range")));
        }
        if targets[..i].contains(&t) {
            return Err(Error::param("targets", format!("state {t} listed twice")));
        }
    }
    Ok(Objective {
        dims,
        kind: ObjectiveKind::MultiTarget {
            targets: targets.to_vec(),
        },
        sense: Sense::Maximize,
        lipschitz: 2.0 * targets.len() as f64,
    })
}

pub fn make_constrained_objective(dims: Dims, reward: Vec<f64>, cost: Vec<f64>) -> Result<Objective> {
    for (name, v) in [("reward", &reward), ("cost", &cost)] {
        if v.len() != dims.sa() {
            return Err(Error::DimensionMismatch(format!(
                "{name} has length {}, expected {}",
                v.len(),
                dims.sa()
            )));
        }
        if v.iter().any(|x| !(*x >= 0.0) || !x.is_finite()) {
            return Err(Error::param(name, "entries must be finite and nonnegative"));
        }
    }
    let r_inf = reward.iter().fold(0.0f64, |m, v| m.max(*v));
    let c_inf = cost.iter().fold(0.0f64, |m, v| m.max(*v));
    Ok(Objective {
        dims,
        kind: ObjectiveKind::Constrained { reward, cost },
        sense: Sense::Minimize,
        lipschitz: r_inf + 2.0 * c_inf * c_inf,
    })
}

pub fn make_quadratic_objective(target: Field, weight: f64) -> Result<Objective> {
    if !(weight > 0.0) || !weight.is_finite() {
        return Err(Error::param("weight", format!("must be positive, got {weight}")));
    }
    Ok(Objective {
        dims: target.dims(),
        kind: ObjectiveKind::Quadratic { target, weight },
        sense: Sense::Minimize,
        lipschitz: weight,
    })
}

impl Objective {
    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn kind(&self) -> &ObjectiveKind {
        &self.kind
    }

    pub fn sense(&self) -> Sense {
        self.sense
    }

    /// Per-layer Lipschitz constant with respect to `||.||_1`.
    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    fn check(&self, mu: &Field) {
        assert_eq!(mu.dims(), self.dims, "objective evaluated on a field of the wrong shape");
    }

    pub fn value(&self, mu: &Field) -> f64 {
        self.check(mu);
        let d = self.dims;
        match &self.kind {
            ObjectiveKind::Linear { loss } => loss.dot_from_layer1(mu),
            ObjectiveKind::MultiTarget { targets } => (1..=d.horizon)
                .map(|n| {
                    let layer = mu.layer(n);
                    -targets
                        .iter()
                        .map(|&t| {
                            let m: f64 = layer[t * d.actions..(t + 1) * d.actions].iter().sum();
                            (1.0 - m).powi(2)
                        })
                        .sum::<f64>()
                })
                .sum(),
            ObjectiveKind::Constrained { reward, cost } => (1..=d.horizon)
                .map(|n| {
                    let layer = mu.layer(n);
                    let r = dot(reward, layer);
                    let c = dot(cost, layer);
                    -r + c * c
                })
                .sum(),
            ObjectiveKind::Quadratic { target, weight } => (1..=d.horizon)
                .map(|n| {
                    let sq: f64 = mu
                        .layer(n)
                        .iter()
                        .zip(target.layer(n))
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum();
                    0.5 * weight * sq
                })
                .sum(),
        }
    }

    /// `df_n / dmu_n(x, a)` for layers `1..=N`; layer 0 is zero.
    pub fn gradient(&self, mu: &Field) -> Field {
        self.check(mu);
        let d = self.dims;
        let mut g = Field::zeros(d);
        match &self.kind {
            ObjectiveKind::Linear { loss } => g.clone_from(loss),
            ObjectiveKind::MultiTarget { targets } => {
                for n in 1..=d.horizon {
                    for &t in targets {
                        let span = t * d.actions..(t + 1) * d.actions;
                        let m: f64 = mu.layer(n)[span.clone()].iter().sum();
                        g.layer_mut(n)[span].iter_mut().for_each(|v| *v = 2.0 * (1.0 - m));
                    }
                }
            }
            ObjectiveKind::Constrained { reward, cost } => {
                for n in 1..=d.horizon {
                    let c = dot(cost, mu.layer(n));
                    for ((gv, r), cv) in g.layer_mut(n).iter_mut().zip(reward).zip(cost) {
                        *gv = -r + 2.0 * c * cv;
                    }
                }
            }
            ObjectiveKind::Quadratic { target, weight } => {
                for n in 1..=d.horizon {
                    for ((gv, m), t) in g.layer_mut(n).iter_mut().zip(mu.layer(n)).zip(target.layer(n)) {
                        *gv = weight * (m - t);
                    }
                }
            }
        }
        g
    }

    /// The quantity the learner minimises.
    pub fn loss(&self, mu: &Field) -> f64 {
        match self.sense {
            Sense::Minimize => self.value(mu),
            Sense::Maximize => -self.value(mu),
        }
    }

    pub fn loss_gradient(&self, mu: &Field) -> Field {
        match self.sense {
            Sense::Minimize => self.gradient(mu),
            Sense::Maximize => self.gradient(mu).scaled(-1.0),
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Source of the per-episode objectives `F^t`.
pub trait ObjectiveStream {
    fn dims(&self) -> Dims;

    /// Objective for episode `t` (1-based). Called once per episode, in order.
    fn objective(&mut self, t: usize) -> &Objective;
}

/// The same objective every episode.
#[derive(Clone, Debug)]
pub struct FixedStream(pub Objective);

impl ObjectiveStream for FixedStream {
    fn dims(&self) -> Dims {
        self.0.dims()
    }

    fn objective(&mut self, _t: usize) -> &Objective {
        &self.0
    }
}

/// Linear losses with independent Bernoulli entries of fixed means.
#[derive(Clone, Debug)]
pub struct BernoulliLossStream {
    means: Field,
    rng: ChaCha8Rng,
    current: Objective,
}

impl BernoulliLossStream {
    pub fn new(means: Field, seed: u64) -> Result<Self> {
        let current = make_linear_objective(means.clone())?;
        Ok(Self {
            means,
            rng: ChaCha8Rng::seed_from_u64(seed),
            current,
        })
    }

    pub fn means(&self) -> &Field {
        &self.means
    }
}

impl ObjectiveStream for BernoulliLossStream {
    fn dims(&self) -> Dims {
        self.means.dims()
    }

    fn objective(&mut self, _t: usize) -> &Objective {
        let dims = self.means.dims();
        let mut loss = Field::zeros(dims);
        for n in 1..=dims.horizon {
            for (l, m) in loss.layer_mut(n).iter_mut().zip(self.means.layer(n)) {
                *l = if self.rng.random::<f64>() < *m { 1.0 } else { 0.0 };
            }
        }
        if let ObjectiveKind::Linear { loss: cur } = &mut self.current.kind {
            *cur = loss;
        }
        &self.current
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn random_point(dims: Dims, rng: &mut ChaCha8Rng) -> Field {
        let mut f = Field::zeros(dims);
        for n in 0..=dims.horizon {
            let v: Vec<f64> = (0..dims.sa()).map(|_| rng.random::<f64>() + 0.05).collect();
            let s: f64 = v.iter().sum();
            for (o, x) in f.layer_mut(n).iter_mut().zip(v) {
                *o = x / s;
            }
        }
        f
    }

    fn fd_check(obj: &Objective, mu: &Field) {
        let g = obj.gradient(mu);
        let h = 1e-5;
        let mut num = Field::zeros(mu.dims());
        for i in mu.dims().sa()..mu.as_slice().len() {
            let mut p = mu.clone();
            let mut m = mu.clone();
            p.as_mut_slice()[i] += h;
            m.as_mut_slice()[i] -= h;
            num.as_mut_slice()[i] = (obj.value(&p) - obj.value(&m)) / (2.0 * h);
        }
        let err: f64 = g
            .as_slice()
            .iter()
            .zip(num.as_slice())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let scale = g.as_slice().iter().map(|a| a * a).sum::<f64>().sqrt().max(1e-3);
        assert!(err / scale <= 1e-6, "relative fd error {}", err / scale);
    }

    fn constrained(dims: Dims, rng: &mut ChaCha8Rng) -> Objective {
        let r: Vec<f64> = (0..dims.sa()).map(|_| rng.random()).collect();
        let c: Vec<f64> = (0..dims.sa()).map(|_| rng.random()).collect();
        make_constrained_objective(dims, r, c).unwrap()
    }

    #[test]
    fn linear_basics() {
        let dims = Dims::new(3, 2, 2).unwrap();
        let mu = Field::from_fn(dims, |_, _, _| 0.25);
        let zero = make_linear_objective(Field::zeros(dims)).unwrap();
        assert_eq!(zero.value(&mu), 0.0);
        assert_eq!(zero.gradient(&mu), Field::zeros(dims));
        let one = make_linear_objective(Field::from_fn(dims, |_, _, _| 1.0)).unwrap();
        assert!((one.value(&mu) - 3.0).abs() < 1e-12);
        assert_eq!(one.lipschitz(), 1.0);
        assert!(make_linear_objective(Field::from_fn(dims, |_, _, _| 1.5)).is_err());
    }

    #[test]
    fn linear_matches_naive_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let dims = Dims::new(3, 4, 3).unwrap();
        let l = Field::from_fn(dims, |_, _, _| rng.random());
        let obj = make_linear_objective(l.clone()).unwrap();
        let mu = random_point(dims, &mut rng);
        let mut naive = 0.0;
        for n in 1..=3 {
            for x in 0..4 {
                for a in 0..3 {
                    naive += l.get(n, x, a) * mu.get(n, x, a);
                }
            }
        }
        assert!((obj.value(&mu) - naive).abs() < 1e-12);
        let mu2 = random_point(dims, &mut rng);
        assert_eq!(obj.gradient(&mu), obj.gradient(&mu2));
    }

    #[test]
    fn multi_target_extremes() {
        let dims = Dims::new(1, 3, 2).unwrap();
        let on = Field::from_fn(dims, |_, x, a| if x == 0 && a == 0 { 1.0 } else { 0.0 });
        let obj = make_multi_target_objective(dims, &[0]).unwrap();
        assert_eq!(obj.value(&on), 0.0);
        assert_eq!(obj.gradient(&on).layer(1), &[0.0; 6]);
        let off = Field::from_fn(dims, |_, x, a| if x == 2 && a == 0 { 1.0 } else { 0.0 });
        let obj2 = make_multi_target_objective(dims, &[0, 1]).unwrap();
        assert_eq!(obj2.value(&off), -2.0);
        assert_eq!(obj2.lipschitz(), 4.0);
        assert_eq!(obj2.sense(), Sense::Maximize);
        assert_eq!(obj2.loss(&off), 2.0);
        assert!(make_multi_target_objective(dims, &[]).is_err());
        assert!(make_multi_target_objective(dims, &[1, 1]).is_err());
        assert!(make_multi_target_objective(dims, &[3]).is_err());
    }

    #[test]
    fn constrained_reductions() {
        let dims = Dims::new(2, 3, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let r: Vec<f64> = (0..6).map(|_| rng.random()).collect();
        let obj = make_constrained_objective(dims, r.clone(), vec![0.0; 6]).unwrap();
        let lin = make_linear_objective(Field::from_fn(dims, |_, x, a| r[x * 2 + a])).unwrap();
        let mu = random_point(dims, &mut rng);
        assert!((obj.value(&mu) + lin.value(&mu)).abs() < 1e-12);

        let mut r = vec![0.0; 6];
        r[0] = 1.0;
        let mut c = vec![0.0; 6];
        c[1] = 1.0;
        let obj = make_constrained_objective(dims, r, c).unwrap();
        let away = Field::from_fn(dims, |_, x, _| if x == 2 { 0.5 } else { 0.0 });
        assert_eq!(obj.value(&away), 0.0);
        assert!(make_constrained_objective(dims, vec![-1.0; 6], vec![0.0; 6]).is_err());
        assert!(make_constrained_objective(dims, vec![0.0; 5], vec![0.0; 6]).is_err());
    }

    #[test]
    fn finite_differences_all_kinds() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let dims = Dims::new(2, 3, 2).unwrap();
        let objs = vec![
            make_multi_target_objective(dims, &[0, 2]).unwrap(),
            constrained(dims, &mut rng),
            make_quadratic_objective(random_point(dims, &mut rng), 0.7).unwrap(),
            make_linear_objective(Field::from_fn(dims, |_, _, _| 0.3)).unwrap(),
        ];
        for obj in &objs {
            for _ in 0..100 {
                let mu = random_point(dims, &mut rng);
                fd_check(obj, &mu);
            }
        }
    }

    #[test]
    fn taylor_residual_is_second_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let dims = Dims::new(2, 3, 2).unwrap();
        let obj = constrained(dims, &mut rng);
        let mu = random_point(dims, &mut rng);
        let dir = Field::from_fn(dims, |_, _, _| rng.random::<f64>() - 0.5);
        let g = obj.gradient(&mu);
        let resid = |h: f64| {
            let mut p = mu.clone();
            p.add_scaled(h, &dir);
            (obj.value(&p) - obj.value(&mu) - h * g.dot(&dir)).abs()
        };
        let (r1, r2) = (resid(1e-2), resid(5e-3));
        assert!(r1 > 0.0 && (r1 / r2 - 4.0).abs() < 0.1, "ratio {}", r1 / r2);
    }

    #[test]
    fn loss_sign_follows_sense() {
        let dims = Dims::new(1, 2, 2).unwrap();
        let obj = make_multi_target_objective(dims, &[1]).unwrap();
        let mu = Field::from_fn(dims, |_, _, _| 0.25);
        assert_eq!(obj.loss(&mu), -obj.value(&mu));
        assert_eq!(obj.loss_gradient(&mu), obj.gradient(&mu).scaled(-1.0));
    }

    #[test]
    fn bernoulli_stream_is_seeded() {
        let dims = Dims::new(2, 2, 2).unwrap();
        let means = Field::from_fn(dims, |_, _, _| 0.5);
        let mut a = BernoulliLossStream::new(means.clone(), 3).unwrap();
        let mut b = BernoulliLossStream::new(means, 3).unwrap();
        for t in 1..10 {
            assert_eq!(a.objective(t), b.objective(t));
        }
        let o = a.objective(10);
        if let ObjectiveKind::Linear { loss } = o.kind() {
            assert!(loss.as_slice().iter().all(|v| *v == 0.0 || *v == 1.0));
            assert!(loss.layer(0).iter().all(|v| *v == 0.0));
        } else {
            panic!("expected a linear objective");
        }
    }

    proptest! {
        #[test]
        fn constrained_is_convex(seed in any::<u64>(), lam in 0.01f64..0.99) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let dims = Dims::new(2, 3, 2).unwrap();
            let obj = constrained(dims, &mut rng);
            let a = random_point(dims, &mut rng);
            let b = random_point(dims, &mut rng);
            let mut mix = a.scaled(lam);
            mix.add_scaled(1.0 - lam, &b);
            prop_assert!(obj.value(&mix) <= lam * obj.value(&a) + (1.0 - lam) * obj.value(&b) + 1e-12);
        }
    }
}
