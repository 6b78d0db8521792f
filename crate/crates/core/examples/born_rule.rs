//! Pointer readout probabilities after one measurement equal the
//! projection norms, up to the pointer overlap.

use bohm_twotime::hilbert::{OscillatorBasis, Subsystem, WaveCoefficients};
use bohm_twotime::measurement::{
    apply_measurement, born_probabilities, branch_overlap_report, outcome_regions, BranchState, PointerModel,
};
use bohm_twotime::sqm::{single_time_probability, BinnedObservable};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> bohm_twotime::Result<()> {
    let basis = OscillatorBasis::harmonic(32)?;
    let binned = BinnedObservable::uniform(&basis, -4.0, 4.0, 8)?;
    let obs = binned.observable();
    let device = PointerModel::default_for_gap(binned.delta())?;
    let psi = WaveCoefficients::random(32, 6, &mut ChaCha8Rng::seed_from_u64(3))?;
    let ready = BranchState::ready(psi.clone(), device, device)?;
    let measured = apply_measurement(&ready, &device, obs, Subsystem::A)?;
    let born = born_probabilities(&measured, &outcome_regions(&measured, Some(obs), None))?;
    println!("pointer overlap epsilon = {:.3e}", branch_overlap_report(&measured).max_overlap);
    for (label, p) in &born.probabilities {
        let a = label.a.unwrap();
        let norm = single_time_probability(&basis, &psi, obs.projector(a), Subsystem::A, 0.0)?;
        println!("bin {a} (x = {:+.2}): pointer readout {p:.8}, ||Pi psi||^2 {norm:.8}", binned.centers()[a]);
    }
    Ok(())
}
