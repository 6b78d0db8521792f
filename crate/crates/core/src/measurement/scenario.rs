use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::branch::{
    apply_measurement, born_probabilities, branch_overlap_report, outcome_regions, BranchState, Outcome,
};
use super::pointer::PointerModel;
use crate::error::{domain, Result};
use crate::hilbert::{OscillatorBasis, Subsystem, WaveCoefficients};
use crate::sqm::{correlator_from_table, CorrelationResult, DiscreteObservable, Method};

/// A two-time measurement protocol: device A reads `obs_a` at `t1`, device B
/// reads `obs_b` at `t2`.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub basis: OscillatorBasis,
    pub state: WaveCoefficients,
    pub device_a: PointerModel,
    pub device_b: PointerModel,
    pub obs_a: DiscreteObservable,
    pub obs_b: DiscreteObservable,
    pub t1: f64,
    pub t2: f64,
}

/// Which device fires first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ordering {
    AFirst,
    BFirst,
    Simultaneous,
}

impl Scenario {
    pub fn ordering(&self) -> Ordering {
        if self.t1 < self.t2 {
            Ordering::AFirst
        } else if self.t2 < self.t1 {
            Ordering::BFirst
        } else {
            Ordering::Simultaneous
        }
    }

    /// Measurement windows in time order as `(time, particle)`.
    pub fn windows(&self) -> [(f64, Subsystem); 2] {
        match self.ordering() {
            Ordering::BFirst => [(self.t2, Subsystem::B), (self.t1, Subsystem::A)],
            _ => [(self.t1, Subsystem::A), (self.t2, Subsystem::B)],
        }
    }

    pub fn device(&self, which: Subsystem) -> &PointerModel {
        match which {
            Subsystem::A => &self.device_a,
            Subsystem::B => &self.device_b,
        }
    }

    pub fn observable(&self, which: Subsystem) -> &DiscreteObservable {
        match which {
            Subsystem::A => &self.obs_a,
            Subsystem::B => &self.obs_b,
        }
    }

    /// The branch state right after each window, plus the initial ready state.
    pub fn stages(&self) -> Result<[BranchState; 3]> {
        for t in [self.t1, self.t2] {
            if !(t.is_finite() && t >= self.state.clock()) {
                return domain(format!("measurement time {t} precedes the preparation at {}", self.state.clock()));
            }
        }
        let ready = BranchState::ready(self.state.clone(), self.device_a, self.device_b)?;
        let [(ta, first), (tb, second)] = self.windows();
        let one = apply_measurement(
            &ready.evolve_to(&self.basis, ta)?,
            self.device(first),
            self.observable(first),
            first,
        )?;
        let two = apply_measurement(
            &one.evolve_to(&self.basis, tb)?,
            self.device(second),
            self.observable(second),
            second,
        )?;
        Ok([ready, one, two])
    }
}

/// Joint outcome probabilities of a two-time run.
#[derive(Debug, Clone)]
pub struct ScenarioOutcome {
    pub t1: f64,
    pub t2: f64,
    pub ordering: Ordering,
    /// `P(a, b)` with `a` indexing device A's outcomes.
    pub table: DMatrix<f64>,
    /// Largest interference contribution to any entry.
    pub cross_term: f64,
    /// Largest pointer overlap between distinct labels (`epsilon_actual`).
    pub epsilon: f64,
    /// Total weight of empty sub-branches that were dropped.
    pub dropped_weight: f64,
    pub warnings: Vec<String>,
    pub final_state: BranchState,
}

/// Runs the measured protocol: free evolution to the earlier window, the
/// earlier measurement, free evolution of every branch (pointers frozen) to
/// the later window, the later measurement, then `int_{Q_ab} |Psi|^2`.
pub fn run_two_time_scenario(scenario: &Scenario) -> Result<ScenarioOutcome> {
    let [_, _, last] = scenario.stages()?;
    let regions = outcome_regions(&last, Some(&scenario.obs_a), Some(&scenario.obs_b));
    let born = born_probabilities(&last, &regions)?;
    let mut table = DMatrix::zeros(scenario.obs_a.len(), scenario.obs_b.len());
    for (label, p) in &born.probabilities {
        if let (Some(a), Some(b)) = (label.a, label.b) {
            table[(a, b)] = *p;
        }
    }
    Ok(ScenarioOutcome {
        t1: scenario.t1,
        t2: scenario.t2,
        ordering: scenario.ordering(),
        table,
        cross_term: born.max_cross,
        epsilon: branch_overlap_report(&last).max_overlap,
        dropped_weight: last.dropped_weight(),
        warnings: last.warnings().to_vec(),
        final_state: last,
    })
}

/// `sum_ab a b P(a, b)` of a measured table.
pub fn measured_two_time_correlation(
    outcome: &ScenarioOutcome,
    obs_a: &DiscreteObservable,
    obs_b: &DiscreteObservable,
) -> CorrelationResult {
    let v = correlator_from_table(&outcome.table, obs_a.eigenvalues(), obs_b.eigenvalues());
    CorrelationResult::exact(v, outcome.t1, outcome.t2, Method::MeasuredQuadrature)
}

/// Keeps only the branch with `label` and renormalizes it.
pub fn effective_collapse(state: &BranchState, label: &Outcome) -> Result<BranchState> {
    let Some(branch) = state.branch(label) else {
        return domain(format!("no branch with label {label:?}"));
    };
    let p = branch.weight();
    if !(p > 0.0) {
        return domain(format!("label {label:?} has zero probability"));
    }
    let mut kept = branch.clone();
    kept.system = kept.system.normalized()?;
    Ok(state.only(kept))
}

/// Conditional statistics of the later device given the earlier outcome,
/// computed with and without the effective collapse.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CollapseComparison {
    pub earlier: Subsystem,
    pub label: usize,
    pub uncollapsed: Vec<f64>,
    pub collapsed: Vec<f64>,
    pub max_difference: f64,
    pub epsilon: f64,
}

/// Compares `P(later | earlier = label)` from the full branch sum with the
/// same conditional computed after collapsing onto the earlier branch.
pub fn compare_collapse(scenario: &Scenario, label: usize) -> Result<CollapseComparison> {
    let [_, after_first, after_second] = scenario.stages()?;
    let [(_, first), (t_second, second)] = scenario.windows();
    let pick = |o: &Outcome, w: Subsystem| o.get(w);

    // uncollapsed: joint Born probabilities over product regions
    let regions = outcome_regions(&after_second, Some(&scenario.obs_a), Some(&scenario.obs_b));
    let born = born_probabilities(&after_second, &regions)?;
    let k = scenario.observable(second).len();
    let mut joint = vec![0.0; k];
    for (o, p) in &born.probabilities {
        if pick(o, first) == Some(label) {
            if let Some(j) = pick(o, second) {
                joint[j] += p;
            }
        }
    }
    let marginal: f64 = joint.iter().sum();
    if !(marginal > 0.0) {
        return domain(format!("earlier outcome {label} has zero probability"));
    }
    let uncollapsed: Vec<f64> = joint.iter().map(|p| p / marginal).collect();

    // collapsed: keep the earlier branch only, then measure the later device
    let earlier_label = match first {
        Subsystem::A => Outcome { a: Some(label), b: None },
        Subsystem::B => Outcome { a: None, b: Some(label) },
    };
    let collapsed_state = effective_collapse(&after_first, &earlier_label)?;
    let measured = apply_measurement(
        &collapsed_state.evolve_to(&scenario.basis, t_second)?,
        scenario.device(second),
        scenario.observable(second),
        second,
    )?;
    let later_only = match second {
        Subsystem::A => outcome_regions(&measured, Some(&scenario.obs_a), None),
        Subsystem::B => outcome_regions(&measured, None, Some(&scenario.obs_b)),
    };
    // the earlier pointer is irrelevant after collapse: integrate it out
    let later_born = born_probabilities(&measured, &later_only)?;
    let mut collapsed = vec![0.0; k];
    for (o, p) in &later_born.probabilities {
        if let Some(j) = pick(o, second) {
            collapsed[j] += p;
        }
    }
    let max_difference = uncollapsed.iter().zip(&collapsed).map(|(u, c)| (u - c).abs()).fold(0.0, f64::max);
    Ok(CollapseComparison {
        earlier: first,
        label,
        uncollapsed,
        collapsed,
        max_difference,
        epsilon: branch_overlap_report(&after_second).max_overlap,
    })
}
