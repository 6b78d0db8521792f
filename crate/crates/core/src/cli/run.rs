use serde::Serialize;
use sha2::{Digest, Sha256};

use super::config::{ScenarioConfig, StateKind};
use crate::bohm::{mean_stderr, sample_equilibrium, unmeasured_grid, PilotWave};
use crate::error::{Error, Result};
use crate::hilbert::{OscillatorBasis, Subsystem, WaveCoefficients};
use crate::measurement::{
    ready_wave, run_two_time_scenario, trajectory_outcomes, SamplerConfig, Scenario, MAX_DROPOUT,
};
use crate::sqm::{
    closed_form_xx, correlator_from_table, factorized_table, heisenberg_expectation, heisenberg_two_time,
    truncation_leak, BinnedObservable,
};

/// Compression leak above which a truncation warning is emitted.
pub const LEAK_WARNING: f64 = 5e-2;

/// Largest window shortness distance before a warning is emitted.
pub const SHORTNESS_WARNING: f64 = 0.01;

/// Branches below this pointer-factor fraction are left out of the guiding
/// field of the trajectory sampler.
pub const SAMPLER_POINTER_CUTOFF: f64 = 1e-6;

/// One `(t1, t2)` row. `None` entries were skipped; `skipped` says why.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub t1: f64,
    pub t2: f64,
    pub delta_t: f64,
    pub closed_form: Option<f64>,
    pub heisenberg: f64,
    pub factorized: f64,
    pub binned: f64,
    pub unmeasured_bohm: Option<f64>,
    pub unmeasured_bohm_stderr: Option<f64>,
    pub measured_quadrature: f64,
    pub measured_trajectory: Option<f64>,
    pub measured_trajectory_stderr: Option<f64>,
    pub epsilon_actual: f64,
    pub dropouts: usize,
    pub skipped: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    /// Some trajectory tables were abandoned because too many members hit
    /// nodes; the affected rows are marked skipped.
    BudgetExceeded,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunMetadata {
    pub version: String,
    pub seed: u64,
    /// SHA-256 of the effective configuration in canonical TOML form.
    pub config_hash: String,
    pub status: RunStatus,
    pub warnings: Vec<String>,
    pub truncation_leak: f64,
    pub separation: [f64; 2],
    pub epsilon_bound: [f64; 2],
    pub shortness: [f64; 2],
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub metadata: RunMetadata,
    pub config: ScenarioConfig,
    pub rows: Vec<ReportRow>,
}

pub fn config_hash(config: &ScenarioConfig) -> String {
    let digest = Sha256::digest(config.to_toml().as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Everything a run needs, built once from a validated configuration.
pub struct Prepared {
    pub config: ScenarioConfig,
    pub basis: OscillatorBasis,
    pub state: WaveCoefficients,
    pub binned: BinnedObservable,
    pub scenario_template: Scenario,
}

impl Prepared {
    pub fn new(config: &ScenarioConfig) -> Result<Self> {
        config.validate()?;
        let basis = config.basis()?;
        let state = config.initial_state()?;
        let binned = config.binned(&basis)?;
        let [device_a, device_b] = config.devices(&binned)?;
        let scenario_template = Scenario {
            basis: basis.clone(),
            state: state.clone(),
            device_a,
            device_b,
            obs_a: binned.observable().clone(),
            obs_b: binned.observable().clone(),
            t1: 0.0,
            t2: 0.0,
        };
        Ok(Self { config: config.clone(), basis, state, binned, scenario_template })
    }

    pub fn scenario(&self, t1: f64, t2: f64) -> Scenario {
        Scenario { t1, t2, ..self.scenario_template.clone() }
    }

    pub fn has_closed_form(&self) -> bool {
        self.config.state.kind == StateKind::Entangled01
    }

    pub fn sampler_config(&self) -> SamplerConfig {
        SamplerConfig {
            integrator: self.config.integrator(),
            max_dropout: MAX_DROPOUT,
            skip: None,
            pointer_cutoff: SAMPLER_POINTER_CUTOFF,
            node_floor: self.config.monte_carlo.node_floor,
        }
    }

    pub fn ready_wave(&self) -> Result<PilotWave> {
        Ok(ready_wave(&self.scenario_template)?.with_node_floor(self.config.monte_carlo.node_floor))
    }

    /// Diagnostics that do not stop a run.
    pub fn diagnostics(&self) -> Result<(f64, [f64; 2], Vec<String>)> {
        let obs = self.binned.observable();
        let leak = truncation_leak(&self.basis, &self.state, obs, Subsystem::A)?
            .max(truncation_leak(&self.basis, &self.state, obs, Subsystem::B)?);
        let s = &self.scenario_template;
        let shortness = [s.device_a.shortness(&self.basis, &self.state)?, s.device_b.shortness(&self.basis, &self.state)?];
        let mut warnings = Vec::new();
        if leak > LEAK_WARNING {
            warnings.push(format!(
                "truncation leak {leak:.3e} exceeds {LEAK_WARNING:.0e}: bin projections of the state lose that much norm \
                 when truncated to n_max = {}; results use exact projections, but raise n_max before trusting \
                 truncated-matrix quantities",
                self.basis.n_max()
            ));
        }
        for (name, v) in ["A", "B"].iter().zip(shortness) {
            if v > SHORTNESS_WARNING {
                warnings.push(format!(
                    "pointer {name}: window shortness {v:.3e} exceeds {SHORTNESS_WARNING}; free motion during the window is not negligible"
                ));
            }
        }
        let tail = self.binned.tail_mass(&self.basis, &self.state, Subsystem::A)?;
        if tail > 1e-3 {
            warnings.push(format!("{tail:.3e} of the probability lies outside [bins.lo, bins.hi]"));
        }
        Ok((leak, shortness, warnings))
    }
}

fn push_unique(warnings: &mut Vec<String>, w: String) {
    if !warnings.contains(&w) {
        warnings.push(w);
    }
}

/// Runs every pipeline for every `(t1, t2)` row.
///
/// A trajectory table that exceeds the node-dropout budget does not abort
/// the run: its row is marked skipped and the report status says so.
pub fn run(config: &ScenarioConfig) -> Result<RunReport> {
    let prep = Prepared::new(config)?;
    let (leak, shortness, mut warnings) = prep.diagnostics()?;
    let pairs = config.time_pairs();
    let obs = prep.binned.observable();
    let centers = prep.binned.centers();
    let x = prep.basis.position_matrix().map(|v| num_complex::Complex64::new(v, 0.0));
    let mut status = RunStatus::Ok;

    // unmeasured Bohmian correlator: one ensemble, one pass through all times
    let wave = prep.ready_wave()?;
    let mc = &config.monte_carlo;
    let ensemble = sample_equilibrium(&wave, mc.n, mc.seed)?;
    let t1s: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let t2s: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let grid = unmeasured_grid(&ensemble, &wave, &t1s, &t2s, &config.integrator())?;
    let unmeasured_failed = grid.dropout_fraction() > MAX_DROPOUT;
    if unmeasured_failed {
        status = RunStatus::BudgetExceeded;
    }

    // the trajectory ensemble is independent of the unmeasured one
    let trajectory_ensemble = if mc.trajectory_n > 0 {
        Some(sample_equilibrium(&wave, mc.trajectory_n, mc.seed.wrapping_add(1))?)
    } else {
        None
    };
    let sampler = prep.sampler_config();

    let mut rows = Vec::with_capacity(pairs.len());
    for (k, &(t1, t2)) in pairs.iter().enumerate() {
        let mut skipped = Vec::new();
        let closed_form = if prep.has_closed_form() {
            Some(closed_form_xx(&prep.basis, t1, t2).value)
        } else {
            skipped.push("closed_form: defined for the entangled01 state only".to_string());
            None
        };
        let heisenberg = heisenberg_expectation(&prep.basis, &prep.state, &x, &x, t1, t2)?.re;
        let table = factorized_table(&prep.basis, &prep.state, obs, obs, t1, t2)?;
        let factorized = correlator_from_table(&table, centers, centers);
        let binned = heisenberg_two_time(&prep.basis, &prep.state, obs, obs, t1, t2)?.value;

        let (unmeasured_bohm, unmeasured_bohm_stderr) = if unmeasured_failed {
            skipped.push(format!(
                "unmeasured_bohm: {} of {} members hit nodes",
                grid.dropouts,
                grid.dropouts + grid.used
            ));
            (None, None)
        } else {
            let r = grid.result(k, k);
            (Some(r.value), r.stderr)
        };

        let scenario = prep.scenario(t1, t2);
        let outcome = run_two_time_scenario(&scenario)?;
        for w in &outcome.warnings {
            push_unique(&mut warnings, w.clone());
        }
        let measured_quadrature = correlator_from_table(&outcome.table, obs.eigenvalues(), obs.eigenvalues());

        let mut dropouts = grid.dropouts;
        let (measured_trajectory, measured_trajectory_stderr) = match &trajectory_ensemble {
            None => {
                skipped.push("measured_trajectory: monte_carlo.trajectory_n = 0".to_string());
                (None, None)
            }
            Some(e) => {
                let labels = trajectory_outcomes(e, &scenario, &sampler)?;
                let lost = labels.iter().filter(|l| l.is_none()).count();
                dropouts += lost;
                if lost as f64 / labels.len() as f64 > sampler.max_dropout {
                    status = RunStatus::BudgetExceeded;
                    skipped.push(format!("measured_trajectory: {lost} of {} members hit nodes", labels.len()));
                    (None, None)
                } else {
                    let ev = obs.eigenvalues();
                    let products = labels.iter().flatten().filter_map(|o| Some(ev[o.a?] * ev[o.b?]));
                    let (m, s) = mean_stderr(products);
                    (Some(m), Some(s))
                }
            }
        };

        rows.push(ReportRow {
            t1,
            t2,
            delta_t: t2 - t1,
            closed_form,
            heisenberg,
            factorized,
            binned,
            unmeasured_bohm,
            unmeasured_bohm_stderr,
            measured_quadrature,
            measured_trajectory,
            measured_trajectory_stderr,
            epsilon_actual: outcome.epsilon,
            dropouts,
            skipped,
        });
    }

    let s = &prep.scenario_template;
    let gap = prep.binned.delta();
    Ok(RunReport {
        metadata: RunMetadata {
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: mc.seed,
            config_hash: config_hash(config),
            status,
            warnings,
            truncation_leak: leak,
            separation: [s.device_a.separation_ratio(gap), s.device_b.separation_ratio(gap)],
            epsilon_bound: [s.device_a.overlap_bound(gap), s.device_b.overlap_bound(gap)],
            shortness,
        },
        config: config.clone(),
        rows,
    })
}

impl RunReport {
    pub fn budget_error(&self) -> Option<Error> {
        (self.metadata.status == RunStatus::BudgetExceeded)
            .then(|| Error::Budget("node dropouts exceeded the budget; affected rows are marked skipped".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ScenarioConfig {
        ScenarioConfig::from_toml(
            "[times]\nt1 = [0.5]\ndelta_t = [0.0, 1.5707963267948966]\n\
             [monte_carlo]\nn = 2000\ntrajectory_n = 200\nseed = 3\ndt = 0.02",
        )
        .unwrap()
    }

    #[test]
    fn rows_complete_and_consistent() {
        let r = run(&small()).unwrap();
        assert_eq!(r.rows.len(), 2);
        assert_eq!(r.metadata.status, RunStatus::Ok);
        for row in &r.rows {
            let cf = row.closed_form.unwrap();
            assert!((cf - 0.5 * row.delta_t.cos()).abs() < 1e-10);
            assert!((row.heisenberg - cf).abs() < 1e-10);
            assert!((row.factorized - row.binned).abs() < 1e-10);
            let u = row.unmeasured_bohm.unwrap();
            assert!((u - 0.5).abs() < 4.0 * row.unmeasured_bohm_stderr.unwrap(), "{u}");
            // frozen trajectories: the same estimate at every time pair
            assert_eq!(u, r.rows[0].unmeasured_bohm.unwrap());
            assert!(row.measured_trajectory.is_some() && row.skipped.is_empty());
            assert!(row.epsilon_actual < 1e-3);
        }
        assert!((r.rows[1].measured_quadrature - 0.0).abs() < 0.02);
    }

    #[test]
    fn product_state_skips_closed_form() {
        let mut c = small();
        c.state.kind = StateKind::Product01;
        c.monte_carlo.trajectory_n = 0;
        let r = run(&c).unwrap();
        for row in &r.rows {
            assert!(row.closed_form.is_none());
            assert!(row.heisenberg.abs() < 1e-12 && row.measured_quadrature.abs() < 1e-6);
            assert!(row.unmeasured_bohm.unwrap().abs() < 0.1);
            assert_eq!(row.skipped.len(), 2);
        }
    }

    #[test]
    fn hash_tracks_content() {
        let a = small();
        let mut b = small();
        assert_eq!(config_hash(&a), config_hash(&b));
        b.monte_carlo.seed = 4;
        assert_ne!(config_hash(&a), config_hash(&b));
        assert_eq!(config_hash(&a).len(), 64);
    }
}
