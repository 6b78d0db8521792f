//! Error of the binned equal-time correlator as the bins shrink.

use bohm_twotime::hilbert::{OscillatorBasis, WaveCoefficients};
use bohm_twotime::sqm::{closed_form_xx, heisenberg_two_time, BinnedObservable};

fn main() -> bohm_twotime::Result<()> {
    let basis = OscillatorBasis::harmonic(32)?;
    let psi = WaveCoefficients::entangled01(32)?;
    let exact = closed_form_xx(&basis, 0.0, 0.0).value;
    for count in [2, 4, 8, 16, 32, 64] {
        let binned = BinnedObservable::uniform(&basis, -4.0, 4.0, count)?;
        let obs = binned.observable();
        let v = heisenberg_two_time(&basis, &psi, obs, obs, 0.0, 0.0)?.value;
        println!("{count:>3} bins (width {:.4}): correlator {v:.10}, error {:.3e}", binned.delta(), (v - exact).abs());
    }
    Ok(())
}
