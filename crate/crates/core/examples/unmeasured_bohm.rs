//! Trajectories of the entangled stationary state stand still, so the
//! unmeasured Bohmian correlator stays at 0.5 while the standard one
//! oscillates.

use std::f64::consts::PI;

use bohm_twotime::bohm::{sample_equilibrium, unmeasured_grid, Integrator, PilotWave};
use bohm_twotime::hilbert::{OscillatorBasis, WaveCoefficients};
use bohm_twotime::measurement::PointerModel;
use bohm_twotime::sqm::closed_form_xx;

fn main() -> bohm_twotime::Result<()> {
    let basis = OscillatorBasis::harmonic(32)?;
    let psi = WaveCoefficients::entangled01(32)?;
    let device = PointerModel::default_for_gap(1.0)?;
    let wave = PilotWave::bare(&basis, &psi, [device, device])?;
    let ensemble = sample_equilibrium(&wave, 20_000, 1)?;
    let v = wave.velocity(&ensemble.members[0], 1.3)?;
    println!("velocity of a sampled member: ({:e}, {:e})", v.x, v.y);
    let t1 = 0.5;
    let t2: Vec<f64> = (0..=4).map(|k| t1 + k as f64 * PI / 4.0).collect();
    let grid = unmeasured_grid(&ensemble, &wave, &[t1], &t2, &Integrator::new(1e-2)?)?;
    for (j, &t) in t2.iter().enumerate() {
        let r = grid.result(0, j);
        let closed = closed_form_xx(&basis, t1, t).value;
        println!("dt {:.4}: unmeasured {:.4} +- {:.4}, standard {closed:+.4}", t - t1, r.value, r.stderr.unwrap());
    }
    Ok(())
}
