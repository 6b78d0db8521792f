//! Standard two-time correlator of the entangled state: closed form, exact
//! Heisenberg matrices and the binned position operator.

use std::f64::consts::PI;

use bohm_twotime::hilbert::{OscillatorBasis, WaveCoefficients};
use bohm_twotime::sqm::{closed_form_xx, heisenberg_expectation, heisenberg_two_time, BinnedObservable};
use num_complex::Complex64;

fn main() -> bohm_twotime::Result<()> {
    let basis = OscillatorBasis::harmonic(32)?;
    let psi = WaveCoefficients::entangled01(32)?;
    let x = basis.position_matrix().map(|v| Complex64::new(v, 0.0));
    let binned = BinnedObservable::uniform(&basis, -4.0, 4.0, 32)?;
    let obs = binned.observable();
    let t1 = 0.5;
    println!("{:>8} {:>12} {:>12} {:>12}", "dt", "closed", "heisenberg", "32 bins");
    for k in 0..=8 {
        let dt = k as f64 * PI / 4.0;
        let closed = closed_form_xx(&basis, t1, t1 + dt).value;
        let exact = heisenberg_expectation(&basis, &psi, &x, &x, t1, t1 + dt)?.re;
        let binned = heisenberg_two_time(&basis, &psi, obs, obs, t1, t1 + dt)?.value;
        println!("{dt:>8.4} {closed:>12.8} {exact:>12.8} {binned:>12.8}");
    }
    Ok(())
}
