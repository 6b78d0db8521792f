//! Von Neumann pointer measurements: coupling windows, branch formation,
//! overlap diagnostics, Born-rule probabilities, the two-time measured
//! protocol, effective collapse and trajectory transport through windows.

mod branch;
mod pointer;
mod scenario;
mod trajectory;

pub use branch::{
    apply_measurement, born_probabilities, branch_overlap_report, outcome_regions, BornReport, Branch, BranchState,
    Outcome, OutcomeRegion, OverlapReport, EMPTY_BRANCH, MIN_SEPARATION,
};
pub use pointer::{
    normal_cdf, pointer_regions, PointerModel, DEFAULT_SEPARATION, DEFAULT_SIGMA, DEFAULT_WINDOW,
};
pub use trajectory::{
    multinomial_tv_bound, ready_wave, total_variation, trajectory_outcome_sampler, trajectory_outcomes, SamplerConfig, TrajectoryTable,
    MAX_DROPOUT,
};
pub use scenario::{
    compare_collapse, effective_collapse, measured_two_time_correlation, run_two_time_scenario, CollapseComparison,
    Ordering, Scenario, ScenarioOutcome,
};

