//! Online mirror descent for episodic convex reinforcement learning on
//! tabular finite-horizon MDPs.
//!
//! The learner picks a policy each episode and is charged a convex function
//! of the state-action occupancy it induces. Policies are updated by a
//! closed-form mirror-descent step over occupancy polytopes built from
//! estimated transition kernels, with count-based exploration bonuses
//! compensating for the estimation error. Bandit variants replace the
//! gradient with importance-weighted or one-point estimates.
//!
//! Module map:
//!
//! * [`mdp`] and [`gridworld`]: kernels, policies, occupancy measures and the
//!   four-room environment.
//! * [`objectives`]: value/gradient oracles.
//! * [`mirror`]: the conditional-entropy divergence and the OMD step.
//! * [`estimation`]: visit counters, kernel estimators, confidence widths and
//!   the optimistic occupancy bound.
//! * [`exploration`]: bonus fields.
//! * [`lowdim`] and [`logbarrier`]: the reduced occupancy representation and
//!   the self-concordant barrier machinery on it.
//! * [`algorithms`]: the online learning loops.

pub mod algorithms;
pub mod error;
pub mod estimation;
pub mod exploration;
pub mod gridworld;
pub mod logbarrier;
pub mod lowdim;
pub mod mdp;
pub mod mirror;
pub mod objectives;

pub use error::{Error, Result};
pub use mdp::{Dims, EpisodicMdp, Field, Kernel, OccupancyMeasure, Policy, Trajectory};
