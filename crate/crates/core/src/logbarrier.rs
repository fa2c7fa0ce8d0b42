//! Logarithmic barrier on the reduced occupancy polytope `{xi : B xi + beta >= 0}`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::lowdim::{reduce, ConstraintSystem};
use crate::mdp::{occupancy, Kernel, Policy};

pub const NEWTON_TOL: f64 = 1e-8;
pub const MAX_NEWTON_STEPS: usize = 200;

#[derive(Clone, Debug)]
pub struct BarrierContext {
    system: ConstraintSystem,
}

impl BarrierContext {
    pub fn new(system: ConstraintSystem) -> Self {
        Self { system }
    }

    pub fn system(&self) -> &ConstraintSystem {
        &self.system
    }

    pub fn dim(&self) -> usize {
        self.system.b.ncols()
    }

    /// Barrier parameter: the number of constraints.
    pub fn num_constraints(&self) -> usize {
        self.system.b.nrows()
    }

    /// Slacks `B xi + beta`, all strictly positive.
    pub fn slacks(&self, xi: &DVector<f64>) -> Result<DVector<f64>> {
        let s = self.system.slacks(xi);
        let min = s.min();
        if !(min > 0.0) {
            return Err(Error::NotInterior { min_slack: min });
        }
        Ok(s)
    }

    /// `-sum_i log s_i`.
    pub fn value(&self, xi: &DVector<f64>) -> Result<f64> {
        Ok(-self.slacks(xi)?.iter().map(|s| s.ln()).sum::<f64>())
    }

    /// `-B^T (1 / s)`.
    pub fn gradient(&self, xi: &DVector<f64>) -> Result<DVector<f64>> {
        let s = self.slacks(xi)?;
        Ok(self.gradient_from_slacks(&s))
    }

    fn gradient_from_slacks(&self, s: &DVector<f64>) -> DVector<f64> {
        let inv = s.map(|v| -1.0 / v);
        self.system.b.tr_mul(&inv)
    }

    /// `B^T diag(1 / s^2) B`.
    pub fn hessian(&self, xi: &DVector<f64>) -> Result<DMatrix<f64>> {
        let s = self.slacks(xi)?;
        Ok(self.hessian_from_slacks(&s))
    }

    fn hessian_from_slacks(&self, s: &DVector<f64>) -> DMatrix<f64> {
        let mut scaled = self.system.b.clone();
        for (mut row, v) in scaled.row_iter_mut().zip(s.iter()) {
            row /= *v;
        }
        scaled.tr_mul(&scaled)
    }

    /// Hessian factorisation at `xi`.
    pub fn geometry(&self, xi: &DVector<f64>) -> Result<LocalGeometry> {
        let h = self.hessian(xi)?;
        let chol = Cholesky::new(h).ok_or(Error::Factorization)?;
        Ok(LocalGeometry {
            xi: xi.clone(),
            l: chol.l(),
            chol,
        })
    }
}

/// Cholesky factor `H = L L^T` of the barrier Hessian at a point. The
/// ellipsoid transform is `A = L^{-T}`, so `A A^T = H^{-1}`.
#[derive(Clone, Debug)]
pub struct LocalGeometry {
    xi: DVector<f64>,
    l: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
}

impl LocalGeometry {
    pub fn point(&self) -> &DVector<f64> {
        &self.xi
    }

    /// `A u = L^{-T} u`.
    pub fn transform(&self, u: &DVector<f64>) -> DVector<f64> {
        self.l
            .tr_solve_lower_triangular(u)
            .expect("cholesky factor has a positive diagonal")
    }

    /// `xi + delta A u`.
    pub fn dikin_sample(&self, delta: f64, u: &DVector<f64>) -> DVector<f64> {
        &self.xi + self.transform(u) * delta
    }

    /// `((1 - delta) / delta) d F (A^{-1})^T u = ((1 - delta) / delta) d F L u`.
    pub fn gradient_surrogate(&self, f_value: f64, u: &DVector<f64>, delta: f64) -> DVector<f64> {
        let d = self.xi.len() as f64;
        (&self.l * u) * ((1.0 - delta) / delta * d * f_value)
    }

    /// `||h||_xi = sqrt(h^T H h)`.
    pub fn local_norm(&self, h: &DVector<f64>) -> f64 {
        self.l.tr_mul(h).norm()
    }

    /// `||g||_{xi,*} = sqrt(g^T H^{-1} g)`.
    pub fn dual_norm(&self, g: &DVector<f64>) -> f64 {
        self.l
            .solve_lower_triangular(g)
            .expect("cholesky factor has a positive diagonal")
            .norm()
    }

    pub fn solve(&self, g: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(g)
    }
}

#[derive(Clone, Debug)]
pub struct NewtonOutcome {
    pub xi: DVector<f64>,
    pub decrement: f64,
    pub iterations: usize,
}

/// Damped Newton on `c^T y + psi_lb(y)` starting from `start`.
fn damped_newton(
    ctx: &BarrierContext,
    linear: &DVector<f64>,
    start: &DVector<f64>,
    max_iter: usize,
    what: &'static str,
) -> Result<NewtonOutcome> {
    let mut y = start.clone();
    let mut decrement = f64::INFINITY;
    for it in 0..=max_iter {
        let s = ctx.slacks(&y)?;
        let grad = ctx.gradient_from_slacks(&s) + linear;
        let chol = Cholesky::new(ctx.hessian_from_slacks(&s)).ok_or(Error::Factorization)?;
        let step = chol.solve(&grad);
        decrement = grad.dot(&step).max(0.0).sqrt();
        if decrement <= NEWTON_TOL {
            return Ok(NewtonOutcome {
                xi: y,
                decrement,
                iterations: it,
            });
        }
        if it == max_iter {
            break;
        }
        y -= step / (1.0 + decrement);
    }
    Err(Error::NoConvergence {
        what,
        iterations: max_iter,
        decrement,
    })
}

/// Reduced coordinates of the uniform policy's occupancy, strictly interior
/// whenever every state is reachable.
pub fn uniform_start(kernel: &Kernel, mu0: &[f64]) -> Result<DVector<f64>> {
    let mu = occupancy(&Policy::uniform(kernel.dims()), kernel, mu0)?;
    Ok(reduce(&mu))
}

/// Minimiser of the barrier, from `start`.
pub fn analytic_center(ctx: &BarrierContext, start: &DVector<f64>) -> Result<NewtonOutcome> {
    ctx.slacks(start)?;
    let zero = DVector::zeros(ctx.dim());
    damped_newton(ctx, &zero, start, 10 * MAX_NEWTON_STEPS, "analytic center")
}

#[derive(Clone, Debug)]
pub struct LbStep {
    pub xi: DVector<f64>,
    pub decrement: f64,
    pub iterations: usize,
    /// `||xi_next - xi||_xi`.
    pub local_step: f64,
    /// `tau ||g||_{xi,*}`.
    pub scaled_dual_norm: f64,
}

/// `argmin_y tau <g, y> + D_lb(y, xi)` where `D_lb` is the barrier's Bregman
/// divergence. Fails if `tau ||g||_{xi,*} <= 1/16` but the step leaves the
/// Dikin ellipsoid of radius 1/2.
pub fn lb_omd_step(ctx: &BarrierContext, geom: &LocalGeometry, g: &DVector<f64>, tau: f64) -> Result<LbStep> {
    if !(tau > 0.0) {
        return Err(Error::param("tau", format!("must be positive, got {tau}")));
    }
    let xi = geom.point();
    let linear = g * tau - ctx.gradient(xi)?;
    let out = damped_newton(ctx, &linear, xi, MAX_NEWTON_STEPS, "log-barrier OMD step")?;
    let local_step = geom.local_norm(&(&out.xi - xi));
    let scaled_dual_norm = tau * geom.dual_norm(g);
    if scaled_dual_norm <= 1.0 / 16.0 && local_step > 0.5 {
        return Err(Error::InvariantViolated(format!(
            "step left the half Dikin ellipsoid: local norm {local_step} with tau*||g||_* = {scaled_dual_norm}"
        )));
    }
    Ok(LbStep {
        xi: out.xi,
        decrement: out.decrement,
        iterations: out.iterations,
        local_step,
        scaled_dual_norm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lowdim::{build_constraint_system, reduced_dim, sample_unit_sphere};
    use crate::mdp::{Dims, EpisodicMdp};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn simplex(k: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let v: Vec<f64> = (0..k).map(|_| rng.random::<f64>() + 0.1).collect();
        let s: f64 = v.iter().sum();
        v.into_iter().map(|x| x / s).collect()
    }

    fn setup(d: Dims, seed: u64) -> (EpisodicMdp, BarrierContext) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<f64> = (0..d.horizon * d.sa()).flat_map(|_| simplex(d.states, &mut rng)).collect();
        let mut it = rows.into_iter();
        let k = Kernel::from_fn(d, |_, _, _, _| it.next().unwrap()).unwrap();
        let mdp = EpisodicMdp::new(k, simplex(d.sa(), &mut rng)).unwrap();
        let ctx = BarrierContext::new(build_constraint_system(mdp.kernel(), mdp.mu0()).unwrap());
        (mdp, ctx)
    }

    fn centre(mdp: &EpisodicMdp, ctx: &BarrierContext) -> DVector<f64> {
        let start = uniform_start(mdp.kernel(), mdp.mu0()).unwrap();
        analytic_center(ctx, &start).unwrap().xi
    }

    #[test]
    fn scaling_slacks_shifts_value() {
        let (mdp, ctx) = setup(Dims::new(2, 2, 3).unwrap(), 0);
        let xi = uniform_start(mdp.kernel(), mdp.mu0()).unwrap();
        let v = ctx.value(&xi).unwrap();
        let mut sys = ctx.system().clone();
        sys.b *= 2.0;
        sys.beta *= 2.0;
        let doubled = BarrierContext::new(sys);
        let m = ctx.num_constraints() as f64;
        assert!((doubled.value(&xi).unwrap() - (v - m * 2f64.ln())).abs() < 1e-10);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let (mdp, ctx) = setup(Dims::new(2, 2, 3).unwrap(), 1);
        let xi = uniform_start(mdp.kernel(), mdp.mu0()).unwrap();
        let g = ctx.gradient(&xi).unwrap();
        let h = ctx.hessian(&xi).unwrap();
        let step = 1e-6;
        for j in 0..xi.len() {
            let mut p = xi.clone();
            let mut m = xi.clone();
            p[j] += step;
            m[j] -= step;
            let fd = (ctx.value(&p).unwrap() - ctx.value(&m).unwrap()) / (2.0 * step);
            assert!((fd - g[j]).abs() <= 1e-6 * g[j].abs().max(1.0));
            let col = (ctx.gradient(&p).unwrap() - ctx.gradient(&m).unwrap()) / (2.0 * step);
            for i in 0..xi.len() {
                assert!((col[i] - h[(i, j)]).abs() <= 1e-5 * h[(i, j)].abs().max(1.0));
            }
        }
        assert!(ctx.geometry(&xi).is_ok());
        let outside = &xi * 0.0 - DVector::from_element(xi.len(), 1.0);
        assert!(matches!(ctx.value(&outside), Err(Error::NotInterior { .. })));
    }

    #[test]
    fn analytic_center_is_stationary() {
        let (mdp, ctx) = setup(Dims::new(3, 3, 2).unwrap(), 2);
        let start = uniform_start(mdp.kernel(), mdp.mu0()).unwrap();
        let out = analytic_center(&ctx, &start).unwrap();
        assert!(out.decrement <= NEWTON_TOL);
        assert!(ctx.gradient(&out.xi).unwrap().norm() <= 1e-6);
        assert!(ctx.slacks(&out.xi).unwrap().min() > 0.0);
    }

    #[test]
    fn symmetric_center_is_uniform() {
        let d = Dims::new(1, 3, 3).unwrap();
        let mdp = EpisodicMdp::new(Kernel::uniform(d), vec![1.0 / 9.0; 9]).unwrap();
        let ctx = BarrierContext::new(build_constraint_system(mdp.kernel(), mdp.mu0()).unwrap());
        let xi = centre(&mdp, &ctx);
        let mu = crate::lowdim::expand(xi.as_slice(), mdp.kernel(), mdp.mu0()).unwrap();
        let pi = crate::mdp::policy_from_occupancy(&mu, None);
        assert!(pi.max_abs_diff(&Policy::uniform(d)) < 1e-6);
    }

    #[test]
    fn dikin_samples() {
        let (mdp, ctx) = setup(Dims::new(2, 3, 3).unwrap(), 3);
        let xi = centre(&mdp, &ctx);
        let geom = ctx.geometry(&xi).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let dim = reduced_dim(ctx.system().dims());
        let u = sample_unit_sphere(dim, &mut rng);
        assert_eq!(geom.dikin_sample(0.0, &u), xi);
        let y = geom.dikin_sample(0.7, &u);
        assert!((geom.local_norm(&(&y - &xi)) - 0.7).abs() < 1e-10);
        for _ in 0..2000 {
            let u = sample_unit_sphere(dim, &mut rng);
            assert!(ctx.slacks(&geom.dikin_sample(0.9, &u)).is_ok());
        }
    }

    #[test]
    fn surrogate_dual_norm() {
        let (mdp, ctx) = setup(Dims::new(2, 2, 3).unwrap(), 4);
        let xi = centre(&mdp, &ctx);
        let geom = ctx.geometry(&xi).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let u = sample_unit_sphere(xi.len(), &mut rng);
        assert_eq!(geom.gradient_surrogate(0.0, &u, 0.3).norm(), 0.0);
        let g = geom.gradient_surrogate(1.7, &u, 0.3);
        let expected = 0.7 / 0.3 * xi.len() as f64 * 1.7;
        assert!((geom.dual_norm(&g) - expected).abs() < 1e-8 * expected);
    }

    #[test]
    fn omd_step_properties() {
        let (mdp, ctx) = setup(Dims::new(2, 2, 3).unwrap(), 5);
        let xi = centre(&mdp, &ctx);
        let geom = ctx.geometry(&xi).unwrap();
        let zero = DVector::zeros(xi.len());
        let same = lb_omd_step(&ctx, &geom, &zero, 0.1).unwrap();
        assert!((same.xi - &xi).norm() < 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let g = DVector::from_fn(xi.len(), |_, _| rng.random::<f64>() - 0.5);
        let tau = 0.05;
        let step = lb_omd_step(&ctx, &geom, &g, tau).unwrap();
        let stationarity = &g * tau + ctx.gradient(&step.xi).unwrap() - ctx.gradient(&xi).unwrap();
        assert!(stationarity.norm() <= 1e-6);

        // plain gradient descent with backtracking on the same objective
        let phi = |y: &DVector<f64>| -> Option<f64> {
            let v = ctx.value(y).ok()?;
            Some(tau * g.dot(y) + v - ctx.gradient(&xi).unwrap().dot(y))
        };
        let mut y = xi.clone();
        for _ in 0..20_000 {
            let grad = &g * tau + ctx.gradient(&y).unwrap() - ctx.gradient(&xi).unwrap();
            if grad.norm() < 1e-11 {
                break;
            }
            let f0 = phi(&y).unwrap();
            let mut t = 1.0;
            loop {
                let cand = &y - &grad * t;
                if let Some(f) = phi(&cand) {
                    if f <= f0 - 0.5 * t * grad.norm_squared() {
                        y = cand;
                        break;
                    }
                }
                t *= 0.5;
            }
        }
        assert!((y - &step.xi).norm() < 1e-6);
    }

    #[test]
    fn stability_and_hessian_sandwich() {
        let (mdp, ctx) = setup(Dims::new(2, 2, 3).unwrap(), 6);
        let xi = centre(&mdp, &ctx);
        let geom = ctx.geometry(&xi).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let hx = ctx.hessian(&xi).unwrap();
        for _ in 0..200 {
            let u = sample_unit_sphere(xi.len(), &mut rng);
            let g = geom.gradient_surrogate(rng.random::<f64>() * 2.0, &u, 0.5);
            let tau = 1.0 / (16.0 * geom.dual_norm(&g).max(1e-12));
            let step = lb_omd_step(&ctx, &geom, &g, tau).unwrap();
            assert!(step.local_step <= 0.5);

            let r: f64 = rng.random::<f64>() * 0.5;
            let y = geom.dikin_sample(r, &sample_unit_sphere(xi.len(), &mut rng));
            let hy = ctx.hessian(&y).unwrap();
            for _ in 0..5 {
                let v = sample_unit_sphere(xi.len(), &mut rng);
                let qx = v.dot(&(&hx * &v));
                let qy = v.dot(&(&hy * &v));
                assert!(qy >= (1.0 - r).powi(2) * qx * (1.0 - 1e-9));
                assert!(qy <= qx / (1.0 - r).powi(2) * (1.0 + 1e-9));
            }
        }
    }
}
