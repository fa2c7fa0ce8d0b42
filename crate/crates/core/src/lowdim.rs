//! Reduced occupancy coordinates.
//!
//! For a fixed kernel, an occupancy is determined by its entries at actions
//! other than the last one (`a* = A - 1`): the `a*` entry of each state is
//! whatever mass the flow constraint leaves. The reduced vector `xi` lives in
//! `R^{N S (A-1)}`, indexed by `((n - 1) * S + x) * (A - 1) + a`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::mdp::{Dims, Field, Kernel, OccupancyMeasure};

/// `N S (A - 1)`.
pub fn reduced_dim(dims: Dims) -> usize {
    dims.horizon * dims.states * (dims.actions - 1)
}

#[inline]
fn ridx(dims: Dims, n: usize, x: usize, a: usize) -> usize {
    ((n - 1) * dims.states + x) * (dims.actions - 1) + a
}

fn check_dims(dims: Dims, len: usize) -> Result<()> {
    if dims.actions < 2 {
        return Err(Error::param("actions", "reduced coordinates need at least two actions"));
    }
    if len != reduced_dim(dims) {
        return Err(Error::DimensionMismatch(format!(
            "reduced vector has length {len}, expected {}",
            reduced_dim(dims)
        )));
    }
    Ok(())
}

/// Rebuilds the full occupancy-shaped vector from `xi` by forward recursion.
/// The result may have negative `a*` entries when `xi` is infeasible.
pub fn expand(xi: &[f64], kernel: &Kernel, mu0: &[f64]) -> Result<Field> {
    let d = kernel.dims();
    check_dims(d, xi.len())?;
    if mu0.len() != d.sa() {
        return Err(Error::DimensionMismatch("mu0 length".into()));
    }
    let (s, na) = (d.states, d.actions);
    let mut out = Field::zeros(d);
    out.layer_mut(0).copy_from_slice(mu0);
    let mut rho = vec![0.0; s];
    for n in 1..=d.horizon {
        rho.fill(0.0);
        for x in 0..s {
            for a in 0..na {
                let m = out.get(n - 1, x, a);
                if m != 0.0 {
                    for (r, p) in rho.iter_mut().zip(kernel.row(n, x, a)) {
                        *r += m * p;
                    }
                }
            }
        }
        for x in 0..s {
            let mut rest = rho[x];
            for a in 0..na - 1 {
                let v = xi[ridx(d, n, x, a)];
                out.set(n, x, a, v);
                rest -= v;
            }
            out.set(n, x, na - 1, rest);
        }
    }
    Ok(out)
}

/// Drops the `a*` entries and layer 0.
pub fn reduce(mu: &Field) -> DVector<f64> {
    let d = mu.dims();
    let mut xi = DVector::zeros(reduced_dim(d));
    for n in 1..=d.horizon {
        for x in 0..d.states {
            for a in 0..d.actions - 1 {
                xi[ridx(d, n, x, a)] = mu.get(n, x, a);
            }
        }
    }
    xi
}

/// Embeds a reduced vector into a field with zeros at `a*` and at layer 0.
pub fn lift(xi: &[f64], dims: Dims) -> Result<Field> {
    check_dims(dims, xi.len())?;
    let mut out = Field::zeros(dims);
    for n in 1..=dims.horizon {
        for x in 0..dims.states {
            for a in 0..dims.actions - 1 {
                out.set(n, x, a, xi[ridx(dims, n, x, a)]);
            }
        }
    }
    Ok(out)
}

/// `expand(xi) = B xi + beta` restricted to layers `1..=N`, flattened as
/// `((n - 1) * S + x) * A + a`.
#[derive(Clone, Debug)]
pub struct ConstraintSystem {
    dims: Dims,
    pub b: DMatrix<f64>,
    pub beta: DVector<f64>,
}

impl ConstraintSystem {
    pub fn dims(&self) -> Dims {
        self.dims
    }

    /// `B xi + beta`.
    pub fn slacks(&self, xi: &DVector<f64>) -> DVector<f64> {
        &self.b * xi + &self.beta
    }

    /// Whether `B xi >= -beta` entrywise within `tol`.
    pub fn is_feasible(&self, xi: &DVector<f64>, tol: f64) -> bool {
        self.slacks(xi).iter().all(|v| *v >= -tol)
    }
}

fn tail(field: &Field) -> DVector<f64> {
    DVector::from_column_slice(&field.as_slice()[field.dims().sa()..])
}

/// Materialises `(B, beta)` by expanding unit vectors.
pub fn build_constraint_system(kernel: &Kernel, mu0: &[f64]) -> Result<ConstraintSystem> {
    let d = kernel.dims();
    let dim = reduced_dim(d);
    let mut xi = vec![0.0; dim];
    let beta = tail(&expand(&xi, kernel, mu0)?);
    let mut b = DMatrix::zeros(d.horizon * d.sa(), dim);
    for j in 0..dim {
        xi[j] = 1.0;
        let col = tail(&expand(&xi, kernel, mu0)?) - &beta;
        b.set_column(j, &col);
        xi[j] = 0.0;
    }
    Ok(ConstraintSystem { dims: d, b, beta })
}

/// `kappa = eps / (A - 1 + sqrt(A - 1))`.
pub fn kappa(eps: f64, actions: usize) -> Result<f64> {
    if actions < 2 {
        return Err(Error::param("actions", format!("need at least two actions, got {actions}")));
    }
    if !(eps > 0.0) {
        return Err(Error::param("eps", format!("must be positive, got {eps}")));
    }
    let k = (actions - 1) as f64;
    Ok(eps / (k + k.sqrt()))
}

/// `expand(kappa 1 + kappa u)`: a point of the ball of radius `kappa` around
/// `kappa 1`, which is feasible whenever every kernel entry is at least `eps`.
pub fn sphere_occupancy_point(u: &[f64], kernel: &Kernel, mu0: &[f64], eps: f64) -> Result<OccupancyMeasure> {
    let d = kernel.dims();
    check_dims(d, u.len())?;
    let floor = kernel.min_entry();
    if floor < eps * (1.0 - 1e-12) {
        return Err(Error::KernelFloorViolated { value: floor, floor: eps });
    }
    let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 1.0 + 1e-12 {
        return Err(Error::param("u", format!("norm {norm} exceeds 1")));
    }
    let k = kappa(eps, d.actions)?;
    let xi: Vec<f64> = u.iter().map(|v| k + k * v).collect();
    Ok(OccupancyMeasure::from_field_unchecked(expand(&xi, kernel, mu0)?))
}

/// One-point gradient estimate `((1 - delta) / (delta kappa)) d f u` in
/// reduced coordinates, for a value `f` observed at the mixture
/// `(1 - delta) mu + delta zeta(u)`.
pub fn entropic_gradient_surrogate(f_value: f64, u: &DVector<f64>, delta: f64, kappa: f64) -> DVector<f64> {
    u * ((1.0 - delta) / (delta * kappa) * u.len() as f64 * f_value)
}

/// Uniform direction on the unit sphere of `R^dim`.
pub fn sample_unit_sphere<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> DVector<f64> {
    assert!(dim >= 1, "sphere dimension must be positive");
    loop {
        let v = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        let n = v.norm();
        if n > 1e-300 {
            return v / n;
        }
    }
}

/// Uniform point in the unit ball of `R^dim`.
pub fn sample_unit_ball<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> DVector<f64> {
    let dir = sample_unit_sphere(dim, rng);
    let r = rng.random::<f64>().powf(1.0 / dim as f64);
    dir * r
}
