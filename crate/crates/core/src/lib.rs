//! Tabular reinforcement learning with Curious Explorer.
//!
//! The crate is organized bottom-up:
//!
//! * [`mdp`], [`policy`], [`distribution`], [`sampling`]: finite MDPs,
//!   stationary policies, state distributions and seeded rollouts.
//! * [`dp`]: exact visitation distributions, values and optimal policies.
//! * [`explorer`]: the `visit` reset simulator and the iterative
//!   intrinsic-reward exploration loop producing a reset model.
//! * [`optimizers`]: REINFORCE and an exact planner behind one interface.
//! * [`envs`]: Consecutive Crossroad Traps, Diabolical Combination Lock and
//!   random MDPs.
//! * [`verifier`]: exact-mode checks of the exploration bounds.

pub mod distribution;
pub mod dp;
pub mod envs;
pub mod error;
pub mod explorer;
pub mod mdp;
pub mod optimizers;
pub mod policy;
pub mod rng;
pub mod sampling;
pub mod verifier;

pub use distribution::{ResetSampler, StateDistribution};
pub use error::{Error, Result};
pub use explorer::{
    run_curious_explorer, BetaSchedule, ExplorationSchedule, ExplorationTrace, Optimizer,
    VisitationMode,
};
pub use mdp::{DiscountFactor, MdpBuilder, StateSet, TabularMdp};
pub use optimizers::{ExactPlanner, OptimizerConfig, ReinforceOptimizer};
pub use policy::{SoftmaxPolicy, StochasticPolicy};
pub use rng::{stream_rng, SimRng};
pub use sampling::Trajectory;
