//! Bohmian mechanics: pointwise pilot wave and guiding velocity, RK4
//! trajectories, quantum-equilibrium ensembles, equivariance diagnostics and
//! the unmeasured two-time position correlator.

mod ensemble;
mod integrate;
mod wave;

pub use ensemble::{
    equivariance_check, mean_stderr, sample_equilibrium, unmeasured_grid, unmeasured_two_time, EquilibriumSampler,
    EquivarianceReport, MomentCheck, Propagated, TrajectoryEnsemble, UnmeasuredGrid, UnmeasuredResult,
};
pub use integrate::{Integrator, NodeHit, TrajectoryResult};
pub use wave::{
    continuity_residual, wave_eval, Configuration, PilotWave, Velocity, WaveValue, DEFAULT_NODE_FLOOR, POINTER_CUTOFF,
};
