//! Conditionals of the later device computed from the full branch sum and
//! after collapsing onto the earlier outcome agree up to the pointer
//! overlap.

use bohm_twotime::hilbert::{OscillatorBasis, WaveCoefficients};
use bohm_twotime::measurement::{compare_collapse, PointerModel, Scenario};
use bohm_twotime::sqm::BinnedObservable;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> bohm_twotime::Result<()> {
    let basis = OscillatorBasis::harmonic(32)?;
    let binned = BinnedObservable::uniform(&basis, -4.0, 4.0, 8)?;
    let device = PointerModel::default_for_gap(binned.delta())?;
    let s = Scenario {
        basis: basis.clone(),
        state: WaveCoefficients::random(32, 5, &mut ChaCha8Rng::seed_from_u64(4))?,
        device_a: device,
        device_b: device,
        obs_a: binned.observable().clone(),
        obs_b: binned.observable().clone(),
        t1: 0.4,
        t2: 1.7,
    };
    for label in 2..6 {
        let cmp = compare_collapse(&s, label)?;
        let row: Vec<String> = cmp.collapsed.iter().map(|p| format!("{p:.4}")).collect();
        println!("A read bin {label}: P(b | a) = [{}], max difference {:.2e} (epsilon {:.2e})", row.join(" "), cmp.max_difference, cmp.epsilon);
    }
    Ok(())
}
