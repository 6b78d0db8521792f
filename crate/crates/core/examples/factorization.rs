//! The project-evolve-project joint probability equals the Heisenberg
//! expectation of the product of projectors, in either time order.

use bohm_twotime::hilbert::{OscillatorBasis, WaveCoefficients};
use bohm_twotime::sqm::{factorized_joint, heisenberg_expectation, BinnedObservable};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> bohm_twotime::Result<()> {
    let basis = OscillatorBasis::harmonic(16)?;
    let binned = BinnedObservable::uniform(&basis, -2.0, 2.0, 4)?;
    let obs = binned.observable();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..6 {
        let psi = WaveCoefficients::random(16, 5, &mut rng)?;
        let (t1, t2) = (rng.random_range(0.0..5.0), rng.random_range(0.0..5.0));
        let (i, j) = (rng.random_range(0..4), rng.random_range(0..4));
        let (pa, pb) = (obs.projector(i), obs.projector(j));
        let f = factorized_joint(&basis, &psi, pa, pb, t1, t2)?;
        let h = heisenberg_expectation(&basis, &psi, pa.matrix(), pb.matrix(), t1, t2)?;
        println!("t1 {t1:.3} t2 {t2:.3} bins ({i},{j}): factorized {f:.12} heisenberg {:.12} diff {:.1e}", h.re, (f - h.re).abs());
    }
    Ok(())
}
