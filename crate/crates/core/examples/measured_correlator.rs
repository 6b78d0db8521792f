//! With both pointer measurements modelled, the Bohmian correlator follows
//! the standard prediction, not the frozen unmeasured value.

use std::f64::consts::PI;

use bohm_twotime::hilbert::{OscillatorBasis, WaveCoefficients};
use bohm_twotime::measurement::{measured_two_time_correlation, run_two_time_scenario, PointerModel, Scenario};
use bohm_twotime::sqm::{closed_form_xx, BinnedObservable};

fn main() -> bohm_twotime::Result<()> {
    let basis = OscillatorBasis::harmonic(32)?;
    let binned = BinnedObservable::uniform(&basis, -4.0, 4.0, 8)?;
    let device = PointerModel::default_for_gap(binned.delta())?;
    let t1 = 2.0;
    println!("{:>8} {:>10} {:>10} {:>10} {:>10}", "dt", "measured", "standard", "unmeasured", "epsilon");
    for dt in [0.0, PI / 4.0, PI / 2.0, PI, 2.0 * PI, -PI / 2.0] {
        let s = Scenario {
            basis: basis.clone(),
            state: WaveCoefficients::entangled01(32)?,
            device_a: device,
            device_b: device,
            obs_a: binned.observable().clone(),
            obs_b: binned.observable().clone(),
            t1,
            t2: t1 + dt,
        };
        let outcome = run_two_time_scenario(&s)?;
        let measured = measured_two_time_correlation(&outcome, &s.obs_a, &s.obs_b).value;
        let standard = closed_form_xx(&basis, t1, t1 + dt).value;
        println!("{dt:>8.4} {measured:>10.5} {standard:>10.5} {:>10.5} {:>10.2e}", 0.5, outcome.epsilon);
    }
    Ok(())
}
