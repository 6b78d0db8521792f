//! Acceptance criteria, one test per criterion.
//!
//! Every test prints a single `PASS`/`FAIL` line with the measured value,
//! its pinned tolerance and the wall-clock time, then asserts both the
//! tolerance and the runtime budget. Tests hold a shared lock so budgets
//! are measured one criterion at a time.

use std::io::Write;
use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use bohm_twotime::bohm::{
    equivariance_check, sample_equilibrium, unmeasured_grid, Integrator, PilotWave,
};
use bohm_twotime::hilbert::{CMatrix, Interval, OscillatorBasis, Subsystem, WaveCoefficients};
use bohm_twotime::measurement::{
    apply_measurement, born_probabilities, branch_overlap_report, compare_collapse, measured_two_time_correlation,
    multinomial_tv_bound, outcome_regions, ready_wave, run_two_time_scenario, total_variation,
    trajectory_outcome_sampler, BranchState, PointerModel, SamplerConfig, Scenario,
};
use bohm_twotime::sqm::{
    closed_form_xx, factorized_joint, heisenberg_expectation, heisenberg_two_time, single_time_probability,
    BinnedObservable, DiscreteObservable,
};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Basis truncation used throughout.
const N_MAX: usize = 32;
/// Time grid of the correlator criteria.
const DELTA_T_GRID: [f64; 5] = [0.0, PI / 4.0, PI / 2.0, PI, 2.0 * PI];

const C1_TOLERANCE: f64 = 2e-3;
const C1_BUDGET: Duration = Duration::from_secs(10);

const C2_TOLERANCE: f64 = 1e-10;
const C2_DRAWS: usize = 200;
const C2_BUDGET: Duration = Duration::from_secs(30);

const C3_MEMBERS: usize = 100_000;
const C3_SIGMAS: f64 = 3.0;
const C3_MIN_GAP: f64 = 0.9;
const C3_DT: f64 = 1e-2;
const C3_BUDGET: Duration = Duration::from_secs(120);

const C4_TOLERANCE: f64 = 0.02;
const C4_BUDGET: Duration = Duration::from_secs(120);

const C5_MEMBERS: usize = 100_000;
const C5_SIGMAS: f64 = 4.0;
const C5_MAX_DROPOUT: f64 = 1e-3;
const C5_BUDGET: Duration = Duration::from_secs(600);

const C6_STATES: usize = 50;
const C6_SLACK: f64 = 1e-8;
const C6_BUDGET: Duration = Duration::from_secs(30);

const C7_SCENARIOS: usize = 50;
const C7_SLACK: f64 = 1e-8;
const C7_BUDGET: Duration = Duration::from_secs(60);

const C8_MEMBERS: usize = 100_000;
const C8_SIGMAS: f64 = 3.0;
const C8_TIMES: [f64; 3] = [0.5, 1.0, 2.0];
const C8_DT: f64 = 1e-2;
const C8_BUDGET: Duration = Duration::from_secs(120);

const C9_BINS: [usize; 3] = [4, 8, 16];
const C9_BUDGET: Duration = Duration::from_secs(30);

static SERIAL: Mutex<()> = Mutex::new(());

fn report(criterion: u32, what: &str, ok: bool, detail: &str, elapsed: Duration, budget: Duration) {
    let within = elapsed <= budget;
    let tag = if ok && within { "PASS" } else { "FAIL" };
    // written to the raw handle so the line shows without --nocapture
    let line = format!(
        "\n{tag} criterion {criterion} ({what}): {detail}; runtime {:.1} s (budget {} s)\n",
        elapsed.as_secs_f64(),
        budget.as_secs()
    );
    let _ = std::io::stderr().write_all(line.as_bytes());
    assert!(ok, "criterion {criterion} failed: {detail}");
    assert!(within, "criterion {criterion} over its runtime budget");
}

fn basis() -> OscillatorBasis {
    OscillatorBasis::harmonic(N_MAX).unwrap()
}

fn entangled() -> WaveCoefficients {
    WaveCoefficients::entangled01(N_MAX).unwrap()
}

fn default_binned(basis: &OscillatorBasis) -> BinnedObservable {
    BinnedObservable::uniform(basis, -4.0, 4.0, 8).unwrap()
}

fn scenario(basis: &OscillatorBasis, state: WaveCoefficients, binned: &BinnedObservable, t1: f64, t2: f64) -> Scenario {
    let device = PointerModel::default_for_gap(binned.delta()).unwrap();
    Scenario {
        basis: basis.clone(),
        state,
        device_a: device,
        device_b: device,
        obs_a: binned.observable().clone(),
        obs_b: binned.observable().clone(),
        t1,
        t2,
    }
}

#[test]
fn criterion_1_sqm_closed_form() {
    let _serial = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let b = basis();
    let psi = entangled();
    let binned = BinnedObservable::uniform(&b, -4.0, 4.0, 32).unwrap();
    let obs = binned.observable();
    let t1 = 0.5;
    let worst = DELTA_T_GRID
        .iter()
        .map(|dt| {
            let v = heisenberg_two_time(&b, &psi, obs, obs, t1, t1 + dt).unwrap().value;
            (v - 0.5 * dt.cos()).abs()
        })
        .fold(0.0, f64::max);
    report(
        1,
        "32-bin Heisenberg correlator vs 0.5 cos(dt)",
        worst <= C1_TOLERANCE,
        &format!("max error {worst:.3e} <= {C1_TOLERANCE:.0e}"),
        start.elapsed(),
        C1_BUDGET,
    );
}

#[test]
fn criterion_2_factorization_identity() {
    let _serial = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let n = 16;
    let b = OscillatorBasis::harmonic(n).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut worst, mut earlier_a, mut earlier_b): (f64, usize, usize) = (0.0, 0, 0);
    for _ in 0..C2_DRAWS {
        let psi = WaveCoefficients::random(n, 6, &mut rng).unwrap();
        // a random partition of the line into 2..=8 position bins
        let mut edges: Vec<f64> = (0..rng.random_range(1..8)).map(|_| rng.random_range(-3.0..3.0)).collect();
        edges.sort_by(f64::total_cmp);
        edges.dedup();
        let bounds: Vec<f64> = std::iter::once(f64::NEG_INFINITY).chain(edges).chain([f64::INFINITY]).collect();
        let regions = bounds.windows(2).map(|w| Interval::new(w[0], w[1]).unwrap()).collect::<Vec<_>>();
        let obs = DiscreteObservable::from_regions(&b, (0..regions.len()).map(|i| i as f64).collect(), regions).unwrap();
        let (t1, t2) = (rng.random_range(0.0..8.0), rng.random_range(0.0..8.0));
        if t1 <= t2 {
            earlier_a += 1;
        } else {
            earlier_b += 1;
        }
        let pa = obs.projector(rng.random_range(0..obs.len()));
        let pb = obs.projector(rng.random_range(0..obs.len()));
        let f = factorized_joint(&b, &psi, pa, pb, t1, t2).unwrap();
        let h = heisenberg_expectation(&b, &psi, pa.matrix(), pb.matrix(), t1, t2).unwrap();
        worst = worst.max((f - h.re).abs()).max(h.im.abs());
    }
    report(
        2,
        "factorized joint vs Heisenberg projector expectation",
        worst <= C2_TOLERANCE && earlier_a > 0 && earlier_b > 0,
        &format!("max |difference| {worst:.3e} <= {C2_TOLERANCE:.0e} over {C2_DRAWS} draws ({earlier_a} A-first, {earlier_b} B-first)"),
        start.elapsed(),
        C2_BUDGET,
    );
}

#[test]
fn criterion_3_unmeasured_discrepancy() {
    let _serial = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let b = basis();
    let psi = entangled();
    let device = PointerModel::default_for_gap(1.0).unwrap();
    let wave = PilotWave::bare(&b, &psi, [device, device]).unwrap();
    let ensemble = sample_equilibrium(&wave, C3_MEMBERS, 3).unwrap();
    let times: Vec<f64> = (0..5).map(|k| 0.5 + k as f64 * PI / 4.0).collect();
    let grid = unmeasured_grid(&ensemble, &wave, &times, &times, &Integrator::new(C3_DT).unwrap()).unwrap();
    let mut worst_z: f64 = 0.0;
    for i in 0..5 {
        for j in 0..5 {
            let r = grid.result(i, j);
            worst_z = worst_z.max((r.value - 0.5).abs() / r.stderr.unwrap());
        }
    }
    let t1 = times[0];
    let gap = (grid.result(0, 0).value - closed_form_xx(&b, t1, t1 + PI).value).abs();
    let closed = closed_form_xx(&b, t1, t1 + PI).value;
    report(
        3,
        "unmeasured Bohmian correlator vs standard QM",
        worst_z <= C3_SIGMAS && gap >= C3_MIN_GAP && grid.dropouts == 0,
        &format!(
            "max |unmeasured - 0.5| = {worst_z:.2} sigma <= {C3_SIGMAS} on the 5x5 grid; closed form at half period {closed:.6}; gap {gap:.4} >= {C3_MIN_GAP}; dropouts {}",
            grid.dropouts
        ),
        start.elapsed(),
        C3_BUDGET,
    );
}

#[test]
fn criterion_4_measured_reconciliation() {
    let _serial = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let b = basis();
    let binned = default_binned(&b);
    let mut worst: f64 = 0.0;
    let mut separation: f64 = f64::INFINITY;
    let t1 = 0.5;
    for dt in DELTA_T_GRID {
        // forward ordering and the reversed one (B measured first)
        for (ta, tb) in [(t1, t1 + dt), (t1 + dt, t1)] {
            let s = scenario(&b, entangled(), &binned, ta, tb);
            separation = separation.min(s.device_a.separation_ratio(binned.delta()));
            let outcome = run_two_time_scenario(&s).unwrap();
            let measured = measured_two_time_correlation(&outcome, &s.obs_a, &s.obs_b).value;
            worst = worst.max((measured - closed_form_xx(&b, ta, tb).value).abs());
        }
    }
    report(
        4,
        "measured quadrature correlator vs closed form",
        worst <= C4_TOLERANCE && separation >= 8.0 - 1e-12,
        &format!("max error {worst:.3e} <= {C4_TOLERANCE} at s = {separation:.1}, 8 bins, both orderings"),
        start.elapsed(),
        C4_BUDGET,
    );
}

#[test]
fn criterion_5_trajectory_quadrature_consistency() {
    let _serial = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let b = basis();
    let binned = default_binned(&b);
    let s = scenario(&b, entangled(), &binned, 0.3, 0.3 + PI / 2.0);
    let ensemble = sample_equilibrium(&ready_wave(&s).unwrap(), C5_MEMBERS, 5).unwrap();
    let config = SamplerConfig {
        integrator: Integrator::new(1e-2).unwrap(),
        pointer_cutoff: 1e-6,
        ..SamplerConfig::default()
    };
    let table = trajectory_outcome_sampler(&ensemble, &s, &config).unwrap();
    let quadrature = run_two_time_scenario(&s).unwrap().table;
    let tv = total_variation(&table.joint(), &quadrature);
    let bound = multinomial_tv_bound(&quadrature, table.used, C5_SIGMAS);
    let dropout = table.dropout_fraction();
    report(
        5,
        "trajectory outcome table vs quadrature table",
        tv <= bound && dropout < C5_MAX_DROPOUT,
        &format!("TV {tv:.4e} <= {C5_SIGMAS}-sigma bound {bound:.4e}; dropout {dropout:.2e} < {C5_MAX_DROPOUT:.0e}"),
        start.elapsed(),
        C5_BUDGET,
    );
}

#[test]
fn criterion_6_born_rule() {
    let _serial = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let b = basis();
    let binned = default_binned(&b);
    let obs = binned.observable();
    let device = PointerModel::default_for_gap(binned.delta()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst_excess = f64::NEG_INFINITY;
    let mut worst_eps: f64 = 0.0;
    for _ in 0..C6_STATES {
        let psi = WaveCoefficients::random(N_MAX, 8, &mut rng).unwrap();
        let which = if rng.random_bool(0.5) { Subsystem::A } else { Subsystem::B };
        let ready = BranchState::ready(psi.clone(), device, device).unwrap();
        let measured = apply_measurement(&ready, &device, obs, which).unwrap();
        let eps = branch_overlap_report(&measured).max_overlap;
        worst_eps = worst_eps.max(eps);
        let (oa, ob) = match which {
            Subsystem::A => (Some(obs), None),
            Subsystem::B => (None, Some(obs)),
        };
        let born = born_probabilities(&measured, &outcome_regions(&measured, oa, ob)).unwrap();
        for (label, p) in &born.probabilities {
            let i = label.get(which).unwrap();
            let exact = single_time_probability(&b, &psi, obs.projector(i), which, 0.0).unwrap();
            worst_excess = worst_excess.max((p - exact).abs() - eps - C6_SLACK);
        }
    }
    report(
        6,
        "Born probabilities vs projection norms",
        worst_excess <= 0.0,
        &format!("max(|P - ||Pi psi||^2| - epsilon - {C6_SLACK:.0e}) = {worst_excess:.3e} <= 0 (epsilon <= {worst_eps:.2e})"),
        start.elapsed(),
        C6_BUDGET,
    );
}

#[test]
fn criterion_7_effective_collapse() {
    let _serial = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let b = basis();
    let binned = default_binned(&b);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst_excess = f64::NEG_INFINITY;
    for _ in 0..C7_SCENARIOS {
        let psi = WaveCoefficients::random(N_MAX, 6, &mut rng).unwrap();
        let (t1, t2) = (rng.random_range(0.0..4.0), rng.random_range(0.0..4.0));
        let s = scenario(&b, psi, &binned, t1, t2);
        // the earlier label is drawn from its Born distribution
        let [(t_first, first), _] = s.windows();
        let obs = s.observable(first);
        let weights: Vec<f64> = (0..obs.len())
            .map(|i| single_time_probability(&b, &s.state, obs.projector(i), first, t_first).unwrap())
            .collect();
        let mut u = rng.random_range(0.0..weights.iter().sum::<f64>());
        let mut label = weights.len() - 1;
        for (i, w) in weights.iter().enumerate() {
            if u < *w {
                label = i;
                break;
            }
            u -= w;
        }
        let cmp = compare_collapse(&s, label).unwrap();
        worst_excess = worst_excess.max(cmp.max_difference - cmp.epsilon - C7_SLACK);
    }
    report(
        7,
        "collapsed vs uncollapsed conditionals",
        worst_excess <= 0.0,
        &format!("max(|collapsed - uncollapsed| - epsilon - {C7_SLACK:.0e}) = {worst_excess:.3e} <= 0 over {C7_SCENARIOS} scenarios"),
        start.elapsed(),
        C7_BUDGET,
    );
}

#[test]
fn criterion_8_equivariance() {
    let _serial = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let b = basis();
    let mut c = CMatrix::zeros(N_MAX, N_MAX);
    c[(0, 0)] = Complex64::new(FRAC_1_SQRT_2, 0.0);
    c[(1, 0)] = Complex64::from_polar(FRAC_1_SQRT_2, 2.5);
    let psi = WaveCoefficients::from_matrix(c, 1e-12).unwrap();
    let device = PointerModel::default_for_gap(1.0).unwrap();
    let wave = PilotWave::bare(&b, &psi, [device, device]).unwrap();
    let integrator = Integrator::new(C8_DT).unwrap();
    let mut ensemble = sample_equilibrium(&wave, C8_MEMBERS, 8).unwrap();
    let mut worst_z: f64 = 0.0;
    let mut dropouts = 0;
    let mut moved: f64 = 0.0;
    for t in C8_TIMES {
        let p = ensemble.propagate(&wave, t, &integrator).unwrap();
        dropouts += p.dropouts;
        ensemble = p.ensemble;
        let r = equivariance_check(&wave, &ensemble, t).unwrap();
        worst_z = worst_z.max(r.max_abs_z);
        moved = moved.max(r.moments[0].exact.abs());
    }
    report(
        8,
        "propagated ensemble moments vs |Psi_t|^2",
        worst_z <= C8_SIGMAS && moved > 0.1,
        &format!("max |z| {worst_z:.2} <= {C8_SIGMAS} over x, y, x^2, y^2, xy at t = 0.5, 1, 2; <x> reaches {moved:.3}; dropouts {dropouts}"),
        start.elapsed(),
        C8_BUDGET,
    );
}

#[test]
fn criterion_9_bin_refinement() {
    let _serial = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let b = basis();
    let psi = entangled();
    let exact = closed_form_xx(&b, 0.0, 0.0).value;
    let errors: Vec<f64> = C9_BINS
        .iter()
        .map(|&count| {
            let binned = BinnedObservable::uniform(&b, -4.0, 4.0, count).unwrap();
            let obs = binned.observable();
            (heisenberg_two_time(&b, &psi, obs, obs, 0.0, 0.0).unwrap().value - exact).abs()
        })
        .collect();
    let decreasing = errors.windows(2).all(|w| w[1] < w[0]);
    report(
        9,
        "binned correlator error under bin refinement",
        decreasing,
        &format!("errors {:.3e} > {:.3e} > {:.3e} for 4, 8, 16 bins", errors[0], errors[1], errors[2]),
        start.elapsed(),
        C9_BUDGET,
    );
}
