use nalgebra::DVector;
use omd_curl::estimation::{
    eps_info_projection, fixed_point_map, projected_kernel, upper_occupancy, EntrywiseWidths, Estimator, VisitCounts,
};
use omd_curl::exploration::bonus_field;
use omd_curl::logbarrier::{analytic_center, lb_omd_step, uniform_start, BarrierContext};
use omd_curl::lowdim::{build_constraint_system, expand, reduce, reduced_dim, sample_unit_sphere};
use omd_curl::mdp::{
    check_feasibility, occupancy, occupancy_shift_bound, sample_trajectory, Dims, EpisodicMdp, Field, Kernel, Policy,
};
use omd_curl::mirror::{gamma_divergence, gamma_divergence_to_policy, omd_step, psi_gradient};
use omd_curl::objectives::make_linear_objective;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn simplex(k: usize, floor: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let v: Vec<f64> = (0..k).map(|_| rng.random::<f64>() + 1e-3).collect();
    let s: f64 = v.iter().sum();
    let free = 1.0 - floor * k as f64;
    v.into_iter().map(|x| floor + free * x / s).collect()
}

fn kernel(d: Dims, floor: f64, rng: &mut ChaCha8Rng) -> Kernel {
    let rows: Vec<f64> = (0..d.horizon * d.sa()).flat_map(|_| simplex(d.states, floor, rng)).collect();
    let mut it = rows.into_iter();
    Kernel::from_fn(d, |_, _, _, _| it.next().unwrap()).unwrap()
}

fn policy(d: Dims, floor: f64, rng: &mut ChaCha8Rng) -> Policy {
    let rows: Vec<f64> = (0..d.horizon * d.states).flat_map(|_| simplex(d.actions, floor, rng)).collect();
    let mut it = rows.into_iter();
    Policy::from_fn(d, |_, _, _| it.next().unwrap()).unwrap()
}

fn mdp(d: Dims, floor: f64, rng: &mut ChaCha8Rng) -> EpisodicMdp {
    let k = kernel(d, floor, rng);
    EpisodicMdp::new(k, simplex(d.sa(), 0.0, rng)).unwrap()
}

fn dims() -> impl Strategy<Value = Dims> {
    (1usize..=4, 1usize..=4, 2usize..=3).prop_map(|(n, s, a)| Dims::new(n, s, a).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn occupancy_is_feasible_and_starts_at_mu0(d in dims(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = mdp(d, 0.0, &mut rng);
        let mu = occupancy(&policy(d, 0.0, &mut rng), m.kernel(), m.mu0()).unwrap();
        prop_assert!(check_feasibility(&mu, m.kernel(), m.mu0(), 1e-10));
        prop_assert_eq!(mu.layer(0), m.mu0());
    }

    #[test]
    fn kernel_perturbation_is_bounded(d in dims(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = mdp(d, 0.0, &mut rng);
        let q = kernel(d, 0.0, &mut rng);
        let pi = policy(d, 0.0, &mut rng);
        let a = occupancy(&pi, m.kernel(), m.mu0()).unwrap();
        let b = occupancy(&pi, &q, m.mu0()).unwrap();
        let bound = occupancy_shift_bound(&pi, m.kernel(), &q, m.mu0()).unwrap();
        for n in 0..=d.horizon {
            let gap: f64 = a.layer(n).iter().zip(b.layer(n)).map(|(x, y)| (x - y).abs()).sum();
            prop_assert!(gap <= bound + 1e-12);
        }
    }

    #[test]
    fn trajectories_depend_only_on_the_seed(d in dims(), seed in any::<u64>(), draw in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = mdp(d, 0.0, &mut rng);
        let pi = policy(d, 0.0, &mut rng);
        let a = sample_trajectory(&pi, &m, &mut ChaCha8Rng::seed_from_u64(draw));
        let b = sample_trajectory(&pi, &m, &mut ChaCha8Rng::seed_from_u64(draw));
        prop_assert_eq!(a, b);
    }

    #[test]
    fn linear_gradient_is_constant(d in dims(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let loss = Field::from_fn(d, |_, _, _| rng.random::<f64>());
        let obj = make_linear_objective(loss).unwrap();
        let m = mdp(d, 0.0, &mut rng);
        let mu = occupancy(&policy(d, 0.0, &mut rng), m.kernel(), m.mu0()).unwrap();
        let nu = occupancy(&policy(d, 0.0, &mut rng), m.kernel(), m.mu0()).unwrap();
        prop_assert_eq!(obj.gradient(&mu), obj.gradient(&nu));
    }

    #[test]
    fn divergence_is_nonnegative_and_strongly_convex(d in dims(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = mdp(d, 0.0, &mut rng);
        let mu = occupancy(&policy(d, 0.0, &mut rng), m.kernel(), m.mu0()).unwrap().into_field();
        let nu = occupancy(&policy(d, 0.01, &mut rng), m.kernel(), m.mu0()).unwrap().into_field();
        let g = gamma_divergence(&mu, &nu).unwrap();
        let mut diff = mu.clone();
        diff.add_scaled(-1.0, &nu);
        prop_assert!(g >= 0.0);
        prop_assert!(g >= 0.5 * diff.norm_inf_1().powi(2) - 1e-9);
    }

    #[test]
    fn omd_step_satisfies_first_order_conditions(d in dims(), seed in any::<u64>(), tau in 0.01f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = mdp(d, 0.0, &mut rng);
        let pi_ref = policy(d, 0.01, &mut rng);
        let z = Field::from_fn(d, |_, _, _| rng.random_range(-2.0..2.0));
        let pi = omd_step(&z, tau, &pi_ref, m.kernel()).unwrap();
        prop_assert!(pi.as_slice().iter().all(|v| *v > 0.0));
        let mu = occupancy(&pi, m.kernel(), m.mu0()).unwrap().into_field();
        let mu_ref = occupancy(&pi_ref, m.kernel(), m.mu0()).unwrap().into_field();
        let mut grad = z.scaled(tau);
        grad.add_scaled(1.0, &psi_gradient(&mu));
        grad.add_scaled(-1.0, &psi_gradient(&mu_ref));
        for _ in 0..100 {
            let mut dir = occupancy(&policy(d, 0.0, &mut rng), m.kernel(), m.mu0()).unwrap().into_field();
            dir.add_scaled(-1.0, &mu);
            prop_assert!(grad.dot_from_layer1(&dir) >= -1e-6);
        }
        // the minimiser beats the reference
        let value = |f: &Field| tau * z.dot_from_layer1(f) + gamma_divergence_to_policy(f, &pi_ref).unwrap();
        prop_assert!(value(&mu) <= value(&mu_ref) + 1e-12);
    }

    #[test]
    fn counts_and_estimators_stay_consistent(d in dims(), seed in any::<u64>(), episodes in 1usize..40) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = mdp(d, 0.0, &mut rng);
        let pi = policy(d, 0.0, &mut rng);
        let mut counts = VisitCounts::new(d);
        for _ in 0..episodes {
            counts.record_trajectory(&sample_trajectory(&pi, &m, &mut rng)).unwrap();
        }
        for n in 0..d.horizon {
            for x in 0..d.states {
                for a in 0..d.actions {
                    prop_assert_eq!(counts.transitions(n, x, a).iter().sum::<u64>(), counts.visits(n, x, a));
                }
            }
        }
        let eps = 0.5 / d.states as f64 * 0.9;
        for est in [Estimator::Empirical, Estimator::Laplace, Estimator::Projected { eps }] {
            let k = est.build(&counts).unwrap();
            for n in 1..=d.horizon {
                for x in 0..d.states {
                    for a in 0..d.actions {
                        let row = k.row(n, x, a);
                        prop_assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
                        prop_assert!(row.iter().all(|v| *v >= 0.0));
                    }
                }
            }
        }
        let p = projected_kernel(&counts, eps).unwrap();
        prop_assert!(p.min_entry() >= eps - 1e-15);
    }

    #[test]
    fn projection_fixed_point(s in 2usize..8, seed in any::<u64>(), frac in 0.01f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = simplex(s, 0.0, &mut rng);
        let eps = frac / (2.0 * s as f64);
        let (q, r) = eps_info_projection(&p, eps).unwrap();
        prop_assert!((fixed_point_map(r, &p, eps) - r).abs() <= 1e-12);
        let pmax = p.iter().cloned().fold(0.0, f64::max);
        prop_assert!(r >= 1.0 && r < pmax / eps);
        prop_assert!(q.iter().all(|v| *v >= eps));
    }

    #[test]
    fn projection_is_lipschitz(s in 2usize..6, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let eps = 0.5 / s as f64 * rng.random_range(0.05..1.0);
        let p = simplex(s, 0.0, &mut rng);
        let q = simplex(s, 0.0, &mut rng);
        let (pe, _) = eps_info_projection(&p, eps).unwrap();
        let (qe, _) = eps_info_projection(&q, eps).unwrap();
        let l1 = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>();
        prop_assert!(l1(&pe, &qe) <= 2.5 * l1(&p, &q) + 1e-12);
    }

    #[test]
    fn upper_occupancy_dominates_center(d in dims(), seed in any::<u64>(), w in 0.0f64..0.5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = mdp(d, 0.0, &mut rng);
        let pi = policy(d, 0.0, &mut rng);
        let mu = occupancy(&pi, m.kernel(), m.mu0()).unwrap();
        let up = upper_occupancy(&pi, m.kernel(), &EntrywiseWidths::constant(d, w), m.mu0()).unwrap();
        for (u, v) in up.as_slice().iter().zip(mu.as_slice()) {
            prop_assert!(*u >= v - 1e-12);
        }
    }

    #[test]
    fn bonus_decreases_with_visits(d in dims(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = mdp(d, 0.0, &mut rng);
        let pi = policy(d, 0.0, &mut rng);
        let mut counts = VisitCounts::new(d);
        counts.record_trajectory(&sample_trajectory(&pi, &m, &mut rng)).unwrap();
        let before = bonus_field(&counts, 1.0, 2.0).unwrap();
        let traj = sample_trajectory(&pi, &m, &mut rng);
        let rows = counts.record_trajectory(&traj).unwrap();
        let after = bonus_field(&counts, 1.0, 2.0).unwrap();
        for n in 0..d.horizon {
            for x in 0..d.states {
                for a in 0..d.actions {
                    if rows.contains(&(n, x, a)) && counts.visits(n, x, a) > 1 {
                        prop_assert!(after.get(n, x, a) < before.get(n, x, a));
                    } else if !rows.contains(&(n, x, a)) {
                        prop_assert_eq!(after.get(n, x, a), before.get(n, x, a));
                    }
                }
            }
        }
    }

    #[test]
    fn reduced_coordinates_are_affine_and_full_rank(d in dims(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = mdp(d, 0.0, &mut rng);
        let sys = build_constraint_system(m.kernel(), m.mu0()).unwrap();
        let dim = reduced_dim(d);
        let btb = sys.b.transpose() * &sys.b;
        prop_assert_eq!(btb.rank(1e-9), dim);
        let x: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mid: Vec<f64> = x.iter().zip(&y).map(|(a, b)| 0.5 * (a + b)).collect();
        let (fx, fy, fm) = (
            expand(&x, m.kernel(), m.mu0()).unwrap(),
            expand(&y, m.kernel(), m.mu0()).unwrap(),
            expand(&mid, m.kernel(), m.mu0()).unwrap(),
        );
        for ((a, b), c) in fx.as_slice().iter().zip(fy.as_slice()).zip(fm.as_slice()) {
            prop_assert!((0.5 * (a + b) - c).abs() <= 1e-12);
        }
        let mu = occupancy(&policy(d, 0.0, &mut rng), m.kernel(), m.mu0()).unwrap();
        let back = expand(reduce(&mu).as_slice(), m.kernel(), m.mu0()).unwrap();
        for (a, b) in back.as_slice().iter().zip(mu.as_slice()) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn barrier_iterates_stay_interior(d in dims(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = mdp(d, 0.05, &mut rng);
        let ctx = BarrierContext::new(build_constraint_system(m.kernel(), m.mu0()).unwrap());
        let mut xi = analytic_center(&ctx, &uniform_start(m.kernel(), m.mu0()).unwrap()).unwrap().xi;
        for _ in 0..20 {
            let geom = ctx.geometry(&xi).unwrap();
            let u = sample_unit_sphere(ctx.dim(), &mut rng);
            prop_assert!(ctx.system().is_feasible(&geom.dikin_sample(1.0, &u), 0.0));
            let g = DVector::from_fn(ctx.dim(), |_, _| rng.random_range(-1.0..1.0));
            let tau = 1.0 / (16.0 * geom.dual_norm(&g));
            let step = lb_omd_step(&ctx, &geom, &g, tau).unwrap();
            prop_assert!(step.local_step <= 0.5);
            xi = step.xi;
            prop_assert!(ctx.slacks(&xi).is_ok());
        }
    }
}
