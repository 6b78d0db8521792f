use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::branch::Outcome;
use super::pointer::pointer_regions;
use super::scenario::Scenario;
use crate::bohm::{Configuration, Integrator, PilotWave, TrajectoryEnsemble, DEFAULT_NODE_FLOOR, POINTER_CUTOFF};
use crate::error::{domain, Error, Result};
use crate::hilbert::{Interval, Subsystem};
use crate::sqm::DiscreteObservable;

/// Largest fraction of members allowed to drop out at nodes.
pub const MAX_DROPOUT: f64 = 0.005;

/// Settings of the trajectory outcome sampler.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub integrator: Integrator,
    pub max_dropout: f64,
    /// Device whose window is skipped entirely, if any.
    pub skip: Option<Subsystem>,
    /// Branches whose pointer factor is below this fraction of the dominant
    /// one are left out of the guiding field.
    pub pointer_cutoff: f64,
    /// Density below which a member counts as lost at a node.
    pub node_floor: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self { integrator: Integrator::default(), max_dropout: MAX_DROPOUT, skip: None, pointer_cutoff: POINTER_CUTOFF, node_floor: DEFAULT_NODE_FLOOR }
    }
}

/// Empirical outcome frequencies of a trajectory ensemble.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrajectoryTable {
    pub counts: BTreeMap<Outcome, usize>,
    pub used: usize,
    pub dropouts: usize,
    pub outcomes_a: usize,
    pub outcomes_b: usize,
}

impl TrajectoryTable {
    pub fn dropout_fraction(&self) -> f64 {
        self.dropouts as f64 / (self.used + self.dropouts).max(1) as f64
    }

    /// Empirical `P(a, b)`; requires both devices to have fired.
    pub fn joint(&self) -> DMatrix<f64> {
        let mut t = DMatrix::zeros(self.outcomes_a, self.outcomes_b);
        for (o, c) in &self.counts {
            if let (Some(a), Some(b)) = (o.a, o.b) {
                t[(a, b)] += *c as f64 / self.used as f64;
            }
        }
        t
    }

    /// Empirical outcome distribution of one device.
    pub fn marginal(&self, which: Subsystem) -> Vec<f64> {
        let k = match which {
            Subsystem::A => self.outcomes_a,
            Subsystem::B => self.outcomes_b,
        };
        let mut m = vec![0.0; k];
        for (o, c) in &self.counts {
            if let Some(i) = o.get(which) {
                m[i] += *c as f64 / self.used as f64;
            }
        }
        m
    }
}

/// `sum |p - q| / 2`.
pub fn total_variation(p: &DMatrix<f64>, q: &DMatrix<f64>) -> f64 {
    0.5 * (p - q).abs().sum()
}

/// Half the sum of `k` multinomial standard deviations `sqrt(q (1 - q) / n)`:
/// the total-variation distance reached when every cell deviates by `k`
/// standard errors.
pub fn multinomial_tv_bound(q: &DMatrix<f64>, n: usize, k: f64) -> f64 {
    0.5 * k * q.iter().map(|p| (p.clamp(0.0, 1.0) * (1.0 - p.clamp(0.0, 1.0)) / n as f64).sqrt()).sum::<f64>()
}

/// The unmeasured guiding wave of a scenario, for sampling its ensemble.
pub fn ready_wave(scenario: &Scenario) -> Result<PilotWave> {
    PilotWave::bare(&scenario.basis, &scenario.state, [scenario.device_a, scenario.device_b])
}

fn regions_of(obs: &DiscreteObservable) -> Result<Vec<Interval>> {
    obs.projectors()
        .iter()
        .map(|p| p.region().copied().ok_or_else(|| Error::Domain("trajectory windows need position-bin observables".into())))
        .collect()
}

fn locate(regions: &[Interval], v: f64) -> Option<usize> {
    regions.iter().position(|r| r.contains(v))
}

/// Transports every member through the scenario timeline and tallies which
/// pointer region each device reads. See [`trajectory_outcomes`].
pub fn trajectory_outcome_sampler(
    ensemble: &TrajectoryEnsemble,
    scenario: &Scenario,
    config: &SamplerConfig,
) -> Result<TrajectoryTable> {
    let results = trajectory_outcomes(ensemble, scenario, config)?;
    let mut counts = BTreeMap::new();
    let mut dropouts = 0;
    for r in results {
        match r {
            Some(o) => *counts.entry(o).or_insert(0) += 1,
            None => dropouts += 1,
        }
    }
    let table = TrajectoryTable {
        counts,
        used: ensemble.len() - dropouts,
        dropouts,
        outcomes_a: scenario.obs_a.len(),
        outcomes_b: scenario.obs_b.len(),
    };
    if table.dropout_fraction() > config.max_dropout {
        return Err(Error::Budget(format!(
            "{} of {} trajectories dropped out at nodes ({:.3}% > {:.3}%)",
            table.dropouts,
            ensemble.len(),
            100.0 * table.dropout_fraction(),
            100.0 * config.max_dropout
        )));
    }
    Ok(table)
}

/// Per-member outcome labels, `None` for members lost at a node.
///
/// Windows are impulsive: during a window only the coupled pointer moves,
/// with velocity `g a(x)` where `a(x)` is the eigenvalue of the bin holding
/// the particle, so it jumps by `g a(x) t_m`. Between windows the particles
/// follow the branch-sum guiding field and pointers stay put.
pub fn trajectory_outcomes(
    ensemble: &TrajectoryEnsemble,
    scenario: &Scenario,
    config: &SamplerConfig,
) -> Result<Vec<Option<Outcome>>> {
    config.integrator.validate()?;
    if ensemble.is_empty() {
        return domain("empty ensemble");
    }
    if (ensemble.t - scenario.state.clock()).abs() > 0.0 {
        return domain(format!("ensemble at t = {} but the state is prepared at {}", ensemble.t, scenario.state.clock()));
    }
    let [ready, after_first, _] = scenario.stages()?;
    let [(ta, first), (tb, second)] = scenario.windows();
    let fires = |w: Subsystem| config.skip != Some(w);
    let wave0 = PilotWave::from_branches(&scenario.basis, &ready)?
        .with_pointer_cutoff(config.pointer_cutoff)
        .with_node_floor(config.node_floor);
    // with the first window skipped, the guiding wave keeps its ready form
    let wave1 = if fires(first) {
        PilotWave::from_branches(&scenario.basis, &after_first)?
            .with_pointer_cutoff(config.pointer_cutoff)
            .with_node_floor(config.node_floor)
    } else {
        wave0.clone()
    };
    let bins = [regions_of(&scenario.obs_a)?, regions_of(&scenario.obs_b)?];
    let pointers = [
        pointer_regions(&scenario.device_a, scenario.obs_a.eigenvalues()),
        pointer_regions(&scenario.device_b, scenario.obs_b.eigenvalues()),
    ];
    let slot = |w: Subsystem| match w {
        Subsystem::A => 0,
        Subsystem::B => 1,
    };

    let window = |q: &mut Configuration, w: Subsystem| -> Option<usize> {
        let k = slot(w);
        let obs = scenario.observable(w);
        let device = scenario.device(w);
        let (coord, z) = match w {
            Subsystem::A => (q.x, &mut q.za),
            Subsystem::B => (q.y, &mut q.zb),
        };
        let bin = locate(&bins[k], coord)?;
        *z += device.offset(obs.eigenvalues()[bin]);
        locate(&pointers[k], *z)
    };

    Ok(ensemble
        .members
        .par_iter()
        .map(|q0| {
            let it = &config.integrator;
            let mut q = it.advance(&wave0, q0, ensemble.t, ta).ok()?;
            let mut label = Outcome::NONE;
            if fires(first) {
                label = label.with(first, window(&mut q, first)?);
            }
            q = if fires(first) { it.advance_after_window(&wave1, &q, ta, tb) } else { it.advance(&wave1, &q, ta, tb) }.ok()?;
            if fires(second) {
                label = label.with(second, window(&mut q, second)?);
            }
            Some(label)
        })
        .collect())
}
