use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::config::ScenarioConfig;
use super::run::Prepared;
use crate::bohm::{
    continuity_residual, equivariance_check, sample_equilibrium, unmeasured_two_time, Configuration,
};
use crate::error::Result;
use crate::hilbert::Subsystem;
use crate::measurement::{
    born_probabilities, compare_collapse, multinomial_tv_bound, outcome_regions, run_two_time_scenario,
    total_variation, trajectory_outcome_sampler,
};
use crate::sqm::{
    closed_form_xx, correlator_from_table, correlator_period, factorized_joint, heisenberg_expectation,
    heisenberg_two_time, single_time_probability, BinnedObservable,
};

/// Frozen reconciliation constants: the measured correlator may deviate
/// from the closed form by at most `C1 * epsilon + C2 * delta^2`. Fitted on
/// the default oscillator with bins of width 2, 1 and 0.5 and separations
/// 2 to 10 (largest binning error 0.184 at width 2; misassignment moves the
/// correlator by less than 1e-4 even at epsilon = 0.6).
pub const RECONCILIATION_C1: f64 = 1.0;
pub const RECONCILIATION_C2: f64 = 0.05;

/// Pointer overlap above which the measured and standard predictions are
/// not expected to reconcile: the pointers are no longer discernible.
pub const EPSILON_BUDGET: f64 = 1e-3;

/// Cap on Monte Carlo sizes used by `verify`.
const VERIFY_MEMBERS: usize = 20_000;
const VERIFY_TRAJECTORIES: usize = 2_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckStatus {
    Pass,
    Fail,
    Skip,
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub status: CheckStatus,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub checks: Vec<Check>,
    pub warnings: Vec<String>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.status != CheckStatus::Fail)
    }

    pub fn failures(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| c.status == CheckStatus::Fail).collect()
    }

    pub fn table(&self) -> String {
        let width = self.checks.iter().map(|c| c.name.len()).max().unwrap_or(0);
        let mut out = String::new();
        for c in &self.checks {
            let tag = match c.status {
                CheckStatus::Pass => "PASS",
                CheckStatus::Fail => "FAIL",
                CheckStatus::Skip => "skip",
            };
            out += &format!("{tag}  {:<width$}  {}\n", c.name, c.detail);
        }
        for w in &self.warnings {
            out += &format!("warning: {w}\n");
        }
        out
    }
}

struct Checks(Vec<Check>);

impl Checks {
    fn bound(&mut self, name: &str, value: f64, limit: f64) {
        let ok = value <= limit;
        self.push(name, ok, format!("{value:.3e} <= {limit:.3e}"));
    }

    fn push(&mut self, name: &str, ok: bool, detail: String) {
        let status = if ok { CheckStatus::Pass } else { CheckStatus::Fail };
        self.0.push(Check { name: name.into(), status, detail });
    }

    fn skip(&mut self, name: &str, why: &str) {
        self.0.push(Check { name: name.into(), status: CheckStatus::Skip, detail: why.into() });
    }
}

fn max_abs(values: impl IntoIterator<Item = f64>) -> f64 {
    values.into_iter().map(f64::abs).fold(0.0, f64::max)
}

/// Runs the invariant suite at desk scale.
pub fn verify(config: &ScenarioConfig) -> Result<VerifyReport> {
    let prep = Prepared::new(config)?;
    let (_, _, warnings) = prep.diagnostics()?;
    let mut c = Checks(Vec::new());
    let basis = &prep.basis;
    let state = &prep.state;
    let obs = prep.binned.observable();
    let pairs = config.time_pairs();
    let seed = config.monte_carlo.seed;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // configuration
    let again = ScenarioConfig::from_toml(&config.to_toml())?;
    c.push("config_round_trip", &again == config, "parse(serialize(config)) == config".into());

    // basis and state
    let n = basis.n_max();
    let gram = basis.gram_matrix() - DMatrix::identity(n, n);
    c.bound("basis_orthonormal", max_abs(gram.iter().copied()), 1e-10);
    let drift = max_abs(pairs.iter().map(|&(_, t2)| state.evolve_to(basis, t2).map(|s| s.norm_sqr() - 1.0).unwrap_or(f64::NAN)));
    c.bound("norm_conserved", drift, 1e-10);

    // standard quantum mechanics
    if prep.has_closed_form() {
        let x = basis.position_matrix().map(|v| Complex64::new(v, 0.0));
        let mut worst: f64 = 0.0;
        for &(t1, t2) in &pairs {
            let h = heisenberg_expectation(basis, state, &x, &x, t1, t2)?.re;
            worst = worst.max((h - closed_form_xx(basis, t1, t2).value).abs());
        }
        c.bound("heisenberg_matches_closed_form", worst, 1e-10);
    } else {
        c.skip("heisenberg_matches_closed_form", "closed form applies to entangled01 only");
    }
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let (t1, t2) = (rng.random_range(0.0..2.0 * PI), rng.random_range(0.0..2.0 * PI));
        let (i, j) = (rng.random_range(0..obs.len()), rng.random_range(0..obs.len()));
        let (pa, pb) = (obs.projector(i), obs.projector(j));
        let f = factorized_joint(basis, state, pa, pb, t1, t2)?;
        let h = heisenberg_expectation(basis, state, pa.matrix(), pb.matrix(), t1, t2)?.re;
        worst = worst.max((f - h).abs());
    }
    c.bound("factorization_identity", worst, 1e-10);
    if prep.has_closed_form() {
        let mut errors = Vec::new();
        for count in [4, 8, 16] {
            let b = BinnedObservable::uniform(basis, config.bins.lo, config.bins.hi, count)?;
            let v = heisenberg_two_time(basis, state, b.observable(), b.observable(), 0.0, 0.0)?.value;
            errors.push((v - closed_form_xx(basis, 0.0, 0.0).value).abs());
        }
        let ok = errors.windows(2).all(|w| w[1] < w[0] || w[0] < 1e-8);
        c.push("bin_refinement", ok, format!("errors {:.2e}, {:.2e}, {:.2e} for 4, 8, 16 bins", errors[0], errors[1], errors[2]));
    } else {
        c.skip("bin_refinement", "closed form applies to entangled01 only");
    }

    // Bohmian dynamics
    let wave = prep.ready_wave()?;
    let members = config.monte_carlo.n.min(VERIFY_MEMBERS);
    let ensemble = sample_equilibrium(&wave, members, seed)?;
    let at_start = equivariance_check(&wave, &ensemble, 0.0)?;
    c.bound("equilibrium_moments_z", at_start.max_abs_z, 4.5);
    let small = crate::bohm::TrajectoryEnsemble {
        members: ensemble.members[..members.min(5_000)].to_vec(),
        ..ensemble.clone()
    };
    let t_end = pairs.iter().map(|p| p.1).fold(0.0, f64::max).max(1.0);
    let propagated = small.propagate(&wave, t_end, &config.integrator())?;
    let later = equivariance_check(&wave, &propagated.ensemble, t_end)?;
    c.bound("equivariance_moments_z", later.max_abs_z, 4.5);
    let mut residual: f64 = 0.0;
    for q in small.members.iter().take(50) {
        let t = rng.random_range(0.0..2.0 * PI);
        if wave.density(q, t)? > 1e-4 {
            residual = residual.max(continuity_residual(&wave, q, t, 1e-4)?);
        }
    }
    c.bound("continuity_equation", residual, 1e-5);
    if stationary_real(&prep) {
        let mut speed: f64 = 0.0;
        for q in small.members.iter().take(1000) {
            let t = rng.random_range(0.0..10.0);
            let v = wave.velocity(&Configuration { ..*q }, t)?;
            speed = speed.max(v.x.abs()).max(v.y.abs());
        }
        c.bound("real_stationary_state_frozen", speed, 1e-12);
    } else {
        c.skip("real_stationary_state_frozen", "state is not a real stationary tensor");
    }

    // measurement
    let mut norm_err: f64 = 0.0;
    let mut cross_excess: f64 = f64::NEG_INFINITY;
    let mut outcomes = Vec::new();
    for &(t1, t2) in &pairs {
        let s = prep.scenario(t1, t2);
        for stage in s.stages()? {
            norm_err = norm_err.max((stage.total_weight() + stage.dropped_weight() - 1.0).abs());
        }
        let o = run_two_time_scenario(&s)?;
        cross_excess = cross_excess.max(o.cross_term - o.epsilon);
        outcomes.push(o);
    }
    c.bound("norm_through_windows", norm_err, 1e-8);
    c.push("cross_terms_within_epsilon", cross_excess <= 0.0, format!("max(cross - epsilon) = {cross_excess:.3e}"));

    let (t1, t2) = pairs[0];
    let ready = prep.scenario(t1, t1).stages()?;
    let first = crate::measurement::apply_measurement(
        &ready[0].evolve_to(basis, t1)?,
        &prep.scenario_template.device_a,
        obs,
        Subsystem::A,
    )?;
    let regions = outcome_regions(&first, Some(obs), None);
    let born = born_probabilities(&first, &regions)?;
    let eps = crate::measurement::branch_overlap_report(&first).max_overlap;
    let mut born_err: f64 = 0.0;
    for (label, p) in &born.probabilities {
        if let Some(a) = label.a {
            let exact = single_time_probability(basis, state, obs.projector(a), Subsystem::A, t1)?;
            born_err = born_err.max((p - exact).abs());
        }
    }
    c.bound("born_rule", born_err, eps + 1e-8);

    let collapse_scenario = prep.scenario(t1, if t2 == t1 { t1 + 1.0 } else { t2 });
    let mut collapse_excess: f64 = f64::NEG_INFINITY;
    let first_device = collapse_scenario.windows()[0].1;
    for label in 0..collapse_scenario.observable(first_device).len() {
        if let Ok(cmp) = compare_collapse(&collapse_scenario, label) {
            collapse_excess = collapse_excess.max(cmp.max_difference - cmp.epsilon - 1e-8);
        }
    }
    c.push(
        "effective_collapse",
        collapse_excess <= 0.0,
        format!("max(|collapsed - uncollapsed| - epsilon - 1e-8) = {collapse_excess:.3e}"),
    );

    if symmetric(&prep) {
        let mut worst: f64 = 0.0;
        let mut eps: f64 = 0.0;
        for &(t1, t2) in &pairs {
            let forward = run_two_time_scenario(&prep.scenario(t1, t2))?;
            let backward = run_two_time_scenario(&prep.scenario(t2, t1))?;
            worst = worst.max(max_abs((&forward.table - backward.table.transpose()).iter().copied()));
            eps = eps.max(forward.epsilon).max(backward.epsilon);
        }
        c.bound("ordering_symmetry", worst, 2.0 * eps + 1e-10);
    } else {
        c.skip("ordering_symmetry", "needs a symmetric state and identical devices");
    }

    let shortness = [
        prep.scenario_template.device_a.shortness(basis, state)?,
        prep.scenario_template.device_b.shortness(basis, state)?,
    ];
    c.bound("window_shortness", shortness[0].max(shortness[1]), 0.01);

    if prep.has_closed_form() {
        let delta = prep.binned.delta();
        let mut worst_excess: f64 = f64::NEG_INFINITY;
        let mut epsilon: f64 = 0.0;
        for dt in [0.0, PI / 4.0, PI / 2.0, PI, 2.0 * PI] {
            for (a, b) in [(t1, t1 + dt), (t1 + dt, t1)] {
                let o = run_two_time_scenario(&prep.scenario(a, b))?;
                let measured = correlator_from_table(&o.table, obs.eigenvalues(), obs.eigenvalues());
                let err = (measured - closed_form_xx(basis, a, b).value).abs();
                worst_excess = worst_excess.max(err - RECONCILIATION_C1 * o.epsilon - RECONCILIATION_C2 * delta * delta);
                epsilon = epsilon.max(o.epsilon);
            }
        }
        let ok = epsilon <= EPSILON_BUDGET && worst_excess <= 0.0;
        c.push(
            "reconciliation",
            ok,
            format!("epsilon {epsilon:.3e} (budget {EPSILON_BUDGET:.0e}); max(|err| - C1 eps - C2 delta^2) = {worst_excess:.3e}"),
        );

        let half = 0.5 * correlator_period(basis);
        let unmeasured = unmeasured_two_time(&ensemble, &wave, t1, t1 + half, &config.integrator())?;
        let gap = (unmeasured.correlation.value - closed_form_xx(basis, t1, t1 + half).value).abs();
        c.push("unmeasured_discrepancy", gap >= 0.9, format!("|unmeasured - closed form| = {gap:.4} >= 0.9 at half period"));
    } else {
        c.skip("reconciliation", "closed form applies to entangled01 only");
        c.skip("unmeasured_discrepancy", "closed form applies to entangled01 only");
    }

    let trajectories = config.monte_carlo.trajectory_n.min(VERIFY_TRAJECTORIES);
    if trajectories > 0 {
        let s = prep.scenario(t1, t2);
        let e = sample_equilibrium(&wave, trajectories, seed.wrapping_add(1))?;
        let table = trajectory_outcome_sampler(&e, &s, &prep.sampler_config())?;
        let q = &outcomes[0].table;
        let tv = total_variation(&table.joint(), q);
        c.bound("trajectory_matches_quadrature", tv, multinomial_tv_bound(q, table.used, 4.0));
    } else {
        c.skip("trajectory_matches_quadrature", "monte_carlo.trajectory_n = 0");
    }

    Ok(VerifyReport { checks: c.0, warnings })
}

/// Real coefficients on a single energy shell.
fn stationary_real(prep: &Prepared) -> bool {
    let c = prep.state.coeffs();
    let mut shell = None;
    for ((i, j), v) in c.iter().enumerate().map(|(k, v)| ((k % c.nrows(), k / c.nrows()), v)) {
        if v.norm() == 0.0 {
            continue;
        }
        if v.im != 0.0 {
            return false;
        }
        let e = prep.basis.energy(i) + prep.basis.energy(j);
        match shell {
            None => shell = Some(e),
            Some(s) if (s - e).abs() > 1e-12 * s.abs() => return false,
            _ => {}
        }
    }
    true
}

/// Exchange-symmetric state measured by identical devices.
fn symmetric(prep: &Prepared) -> bool {
    let c = prep.state.coeffs();
    let s = &prep.scenario_template;
    (c - c.transpose()).iter().all(|v| v.norm() < 1e-14) && s.device_a == s.device_b
}
