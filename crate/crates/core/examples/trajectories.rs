//! A few recorded trajectories of a nonstationary state.

use std::f64::consts::FRAC_1_SQRT_2;

use bohm_twotime::bohm::{Configuration, Integrator, PilotWave, TrajectoryResult};
use bohm_twotime::hilbert::{CMatrix, OscillatorBasis, WaveCoefficients};
use bohm_twotime::measurement::PointerModel;
use num_complex::Complex64;

fn main() -> bohm_twotime::Result<()> {
    let basis = OscillatorBasis::harmonic(8)?;
    let mut c = CMatrix::zeros(8, 8);
    c[(0, 0)] = Complex64::new(FRAC_1_SQRT_2, 0.0);
    c[(1, 1)] = Complex64::from_polar(FRAC_1_SQRT_2, 1.0);
    let psi = WaveCoefficients::from_matrix(c, 1e-12)?;
    let device = PointerModel::default_for_gap(1.0)?;
    let wave = PilotWave::bare(&basis, &psi, [device, device])?;
    let integrator = Integrator::new(0.05)?;
    for x0 in [-1.0, -0.3, 0.4, 1.2] {
        let q = Configuration::new(x0, 0.5, 0.0, 0.0);
        match integrator.integrate_trajectory(&wave, &q, 0.0, 6.0) {
            TrajectoryResult::Complete(path) => {
                let samples: Vec<String> =
                    path.iter().step_by(20).map(|(t, q)| format!("t={t:.1} ({:+.3},{:+.3})", q.x, q.y)).collect();
                println!("{}", samples.join("  "));
            }
            TrajectoryResult::Node(hit) => println!("x0 = {x0}: node at t = {:.3}", hit.t),
        }
    }
    Ok(())
}
