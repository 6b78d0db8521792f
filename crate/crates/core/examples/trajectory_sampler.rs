//! Trajectories carried through both measurement windows reproduce the
//! quadrature outcome table.

use std::f64::consts::PI;

use bohm_twotime::bohm::{sample_equilibrium, Integrator};
use bohm_twotime::hilbert::{OscillatorBasis, WaveCoefficients};
use bohm_twotime::measurement::{
    multinomial_tv_bound, ready_wave, run_two_time_scenario, total_variation, trajectory_outcome_sampler,
    PointerModel, SamplerConfig, Scenario,
};
use bohm_twotime::sqm::BinnedObservable;

fn main() -> bohm_twotime::Result<()> {
    let basis = OscillatorBasis::harmonic(32)?;
    let binned = BinnedObservable::uniform(&basis, -4.0, 4.0, 8)?;
    let device = PointerModel::default_for_gap(binned.delta())?;
    let s = Scenario {
        basis: basis.clone(),
        state: WaveCoefficients::entangled01(32)?,
        device_a: device,
        device_b: device,
        obs_a: binned.observable().clone(),
        obs_b: binned.observable().clone(),
        t1: 0.3,
        t2: 0.3 + PI / 2.0,
    };
    let n = 5_000;
    let ensemble = sample_equilibrium(&ready_wave(&s)?, n, 5)?;
    let config = SamplerConfig { integrator: Integrator::new(1e-2)?, pointer_cutoff: 1e-6, ..SamplerConfig::default() };
    let table = trajectory_outcome_sampler(&ensemble, &s, &config)?;
    let quadrature = run_two_time_scenario(&s)?.table;
    let joint = table.joint();
    println!("bins 2..6 of each device, trajectories / quadrature:");
    for a in 2..6 {
        let cells: Vec<String> = (2..6).map(|b| format!("{:.4}/{:.4}", joint[(a, b)], quadrature[(a, b)])).collect();
        println!("  {}", cells.join("  "));
    }
    println!(
        "total variation {:.4} (4-sigma bound {:.4}), dropouts {}",
        total_variation(&joint, &quadrature),
        multinomial_tv_bound(&quadrature, table.used, 4.0),
        table.dropouts
    );
    Ok(())
}
