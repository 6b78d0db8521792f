//! A nonstationary state: the propagated ensemble keeps matching the
//! moments of |Psi_t|^2.

use std::f64::consts::FRAC_1_SQRT_2;

use bohm_twotime::bohm::{equivariance_check, sample_equilibrium, Integrator, PilotWave};
use bohm_twotime::hilbert::{CMatrix, OscillatorBasis, WaveCoefficients};
use bohm_twotime::measurement::PointerModel;
use num_complex::Complex64;

fn main() -> bohm_twotime::Result<()> {
    let basis = OscillatorBasis::harmonic(16)?;
    let mut c = CMatrix::zeros(16, 16);
    c[(0, 0)] = Complex64::new(FRAC_1_SQRT_2, 0.0);
    c[(1, 0)] = Complex64::from_polar(FRAC_1_SQRT_2, 2.5);
    let psi = WaveCoefficients::from_matrix(c, 1e-12)?;
    let device = PointerModel::default_for_gap(1.0)?;
    let wave = PilotWave::bare(&basis, &psi, [device, device])?;
    let mut ensemble = sample_equilibrium(&wave, 20_000, 2)?;
    let integrator = Integrator::new(1e-2)?;
    for t in [0.5, 1.0, 2.0, 3.0] {
        let p = ensemble.propagate(&wave, t, &integrator)?;
        ensemble = p.ensemble;
        let r = equivariance_check(&wave, &ensemble, t)?;
        println!("t = {t}: dropouts {}, max |z| {:.2}", p.dropouts, r.max_abs_z);
        for m in &r.moments {
            println!("    {:>3}: ensemble {:+.4} +- {:.4}, exact {:+.4}", m.name, m.empirical, m.stderr, m.exact);
        }
    }
    Ok(())
}
