use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::integrate::Integrator;
use super::wave::{Configuration, PilotWave};
use crate::error::{domain, Error, Result};
use crate::hilbert::quadrature::gauss_legendre;
use crate::hilbert::{CMatrix, OscillatorBasis, Subsystem, WaveCoefficients};
use crate::sqm::{CorrelationResult, Method};

/// Grid cells per oscillator length used by the inverse-CDF tables.
const CELLS_PER_LENGTH: f64 = 128.0;
/// Gauss–Legendre order inside one grid cell.
const CELL_ORDER: usize = 8;
/// Redraws allowed for a member that lands on a node before giving up.
const MAX_REDRAWS: usize = 1000;

/// Equal-weight ensemble of configurations at a common time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryEnsemble {
    pub members: Vec<Configuration>,
    pub seed: u64,
    pub t: f64,
    /// Draws rejected because they fell below the node floor.
    pub redrawn: usize,
}

impl TrajectoryEnsemble {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Moves every member to time `t`. Members that run into a node are
    /// removed and counted.
    pub fn propagate(&self, wave: &PilotWave, t: f64, integrator: &Integrator) -> Result<Propagated> {
        integrator.validate()?;
        let moved: Vec<Option<Configuration>> = self
            .members
            .par_iter()
            .map(|q| integrator.advance(wave, q, self.t, t).ok())
            .collect();
        let dropouts = moved.iter().filter(|m| m.is_none()).count();
        Ok(Propagated {
            ensemble: TrajectoryEnsemble {
                members: moved.into_iter().flatten().collect(),
                seed: self.seed,
                t,
                redrawn: self.redrawn,
            },
            dropouts,
        })
    }
}

/// A propagated ensemble and the number of members lost to nodes.
#[derive(Debug, Clone)]
pub struct Propagated {
    pub ensemble: TrajectoryEnsemble,
    pub dropouts: usize,
}

/// Exact sampler for `|psi(x, y)|^2` of a coefficient tensor: `x` from the
/// marginal, then `y` from the conditional given `x`, both by inverse CDF on
/// cumulative Galerkin tables.
#[derive(Debug, Clone)]
pub struct EquilibriumSampler {
    basis: OscillatorBasis,
    coeffs: CMatrix,
    levels: usize,
    grid: Vec<f64>,
    /// `cum[k][i * levels + j] = int_{grid[0]}^{grid[k]} phi_i phi_j`.
    cum: Vec<f64>,
    marginal: DMatrix<f64>,
    gl_nodes: Vec<f64>,
    gl_weights: Vec<f64>,
}

impl EquilibriumSampler {
    pub fn new(basis: &OscillatorBasis, state: &WaveCoefficients) -> Result<Self> {
        state.check_basis(basis)?;
        if !state.is_unprojected() {
            return domain("equilibrium sampling needs a state without pending projections");
        }
        let la = state.active_levels(Subsystem::A).max(1);
        let lb = state.active_levels(Subsystem::B).max(1);
        let levels = la.max(lb);
        let coeffs = state.coeffs().view((0, 0), (la, lb)).into_owned();
        let ell = basis.length();
        let radius = ell * ((2.0 * levels as f64 + 1.0).sqrt() + 10.0);
        let cells = (2.0 * radius / ell * CELLS_PER_LENGTH).ceil() as usize;
        let h = 2.0 * radius / cells as f64;
        let grid: Vec<f64> = (0..=cells).map(|k| -radius + k as f64 * h).collect();
        let (gl_nodes, gl_weights) = gauss_legendre(CELL_ORDER);

        let stride = levels * levels;
        let mut cum = vec![0.0; (cells + 1) * stride];
        let mut phi = vec![0.0; levels];
        for k in 0..cells {
            let (a, b) = (grid[k], grid[k + 1]);
            let (prev, next) = cum.split_at_mut((k + 1) * stride);
            let row = &mut next[..stride];
            row.copy_from_slice(&prev[k * stride..]);
            for (s, w) in gl_nodes.iter().zip(&gl_weights) {
                let x = 0.5 * (a + b) + 0.5 * (b - a) * s;
                basis.eigenfunctions(x, &mut phi);
                let w = 0.5 * (b - a) * w;
                for i in 0..levels {
                    for j in 0..levels {
                        row[i * levels + j] += w * phi[i] * phi[j];
                    }
                }
            }
        }
        let h_full = &coeffs * coeffs.adjoint();
        let marginal = DMatrix::from_fn(la, la, |i, j| h_full[(i, j)].re);
        Ok(Self { basis: basis.clone(), coeffs, levels, grid, cum, marginal, gl_nodes, gl_weights })
    }

    fn cdf_at(&self, k: usize, w: &DMatrix<f64>) -> f64 {
        let row = &self.cum[k * self.levels * self.levels..];
        let mut s = 0.0;
        for i in 0..w.nrows() {
            for j in 0..w.ncols() {
                s += w[(i, j)] * row[i * self.levels + j];
            }
        }
        s
    }

    fn density(&self, x: f64, w: &DMatrix<f64>, phi: &mut [f64]) -> f64 {
        self.basis.eigenfunctions(x, phi);
        let mut s = 0.0;
        for i in 0..w.nrows() {
            for j in 0..w.ncols() {
                s += w[(i, j)] * phi[i] * phi[j];
            }
        }
        s.max(0.0)
    }

    fn partial(&self, a: f64, b: f64, w: &DMatrix<f64>, phi: &mut [f64]) -> f64 {
        let mut s = 0.0;
        for (u, gw) in self.gl_nodes.iter().zip(&self.gl_weights) {
            s += gw * self.density(0.5 * (a + b) + 0.5 * (b - a) * u, w, phi);
        }
        0.5 * (b - a) * s
    }

    /// Inverse CDF of the density `sum_ij w_ij phi_i phi_j` at quantile `u`.
    fn invert(&self, w: &DMatrix<f64>, u: f64, phi: &mut [f64]) -> f64 {
        let last = self.grid.len() - 1;
        let target = u * self.cdf_at(last, w);
        // largest k with F(grid[k]) <= target
        let (mut lo, mut hi) = (0usize, last);
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if self.cdf_at(mid, w) <= target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let base = self.cdf_at(lo, w);
        let (a, b) = (self.grid[lo], self.grid[hi]);
        let want = target - base;
        let (mut left, mut right) = (a, b);
        let mut x = 0.5 * (a + b);
        for _ in 0..60 {
            let f = self.partial(a, x, w, phi) - want;
            if f > 0.0 {
                right = x;
            } else {
                left = x;
            }
            let d = self.density(x, w, phi);
            let newton = if d > 0.0 { x - f / d } else { f64::NAN };
            let next = if newton > left && newton < right { newton } else { 0.5 * (left + right) };
            if (next - x).abs() <= 1e-14 * (b - a).max(1e-300) {
                return next;
            }
            x = next;
        }
        x
    }

    /// Draws `(x, y)` from `|psi|^2` given two uniform quantiles.
    pub fn draw(&self, u1: f64, u2: f64) -> (f64, f64) {
        let mut phi = vec![0.0; self.levels];
        let x = self.invert(&self.marginal, u1, &mut phi);
        self.basis.eigenfunctions(x, &mut phi);
        let (la, lb) = self.coeffs.shape();
        let d: Vec<_> = (0..lb)
            .map(|j| (0..la).map(|i| self.coeffs[(i, j)] * phi[i]).sum::<num_complex::Complex64>())
            .collect();
        let cond = DMatrix::from_fn(lb, lb, |i, j| (d[i].conj() * d[j]).re);
        let y = self.invert(&cond, u2, &mut phi);
        (x, y)
    }
}

/// Draws `n` i.i.d. configurations from `|Psi_0|^2 |eta_R(z_A)|^2 |mu_R(z_B)|^2`.
///
/// Member `i` uses its own ChaCha8 stream `i` of the master seed, so the
/// result does not depend on the thread count.
pub fn sample_equilibrium(wave: &PilotWave, n: usize, seed: u64) -> Result<TrajectoryEnsemble> {
    if n == 0 {
        return domain("ensemble size must be at least 1");
    }
    let Some(state) = wave.bare_state() else {
        return domain("equilibrium sampling needs an unmeasured wave");
    };
    let sampler = EquilibriumSampler::new(wave.basis(), state)?;
    let t = state.clock();
    let da = *wave.device(Subsystem::A);
    let db = *wave.device(Subsystem::B);
    let drawn: Vec<(Configuration, usize)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            for redraws in 0..MAX_REDRAWS {
                let (x, y) = sampler.draw(rng.random(), rng.random());
                let za = da.ready_center + da.sigma * rng.sample::<f64, _>(StandardNormal);
                let zb = db.ready_center + db.sigma * rng.sample::<f64, _>(StandardNormal);
                let q = Configuration { x, y, za, zb };
                if wave.density(&q, t)? >= wave.node_floor() {
                    return Ok((q, redraws));
                }
            }
            Err(Error::Budget(format!("member {i}: no draw above the node floor")))
        })
        .collect::<Result<_>>()?;
    let redrawn = drawn.iter().map(|d| d.1).sum();
    Ok(TrajectoryEnsemble { members: drawn.into_iter().map(|d| d.0).collect(), seed, t, redrawn })
}

/// One moment of the equivariance check.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MomentCheck {
    pub name: String,
    pub empirical: f64,
    pub exact: f64,
    pub stderr: f64,
    pub z: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EquivarianceReport {
    pub t: f64,
    pub members: usize,
    pub moments: Vec<MomentCheck>,
    pub max_abs_z: f64,
}

/// `<psi| A (x) B |psi>` for real one-particle matrices.
fn moment(c: &CMatrix, a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let a = a.map(|v| num_complex::Complex64::new(v, 0.0));
    let b = b.map(|v| num_complex::Complex64::new(v, 0.0));
    c.dotc(&(&a * c * b.transpose())).re
}

/// Compares ensemble moments `x, y, x^2, y^2, xy` at time `t` against exact
/// moments of `|Psi_t|^2`, returning z-scores.
pub fn equivariance_check(wave: &PilotWave, ensemble: &TrajectoryEnsemble, t: f64) -> Result<EquivarianceReport> {
    let Some(state) = wave.bare_state() else {
        return domain("equivariance check needs an unmeasured wave");
    };
    if ensemble.members.len() < 2 {
        return domain("equivariance check needs at least two members");
    }
    let basis = wave.basis();
    let c = state.evolve_to(basis, t)?.coeffs().clone();
    let one = DMatrix::identity(basis.n_max(), basis.n_max());
    let x = basis.position_matrix();
    let x2 = basis.operator_matrix(|s| s * s);
    let exact = [
        moment(&c, &x, &one),
        moment(&c, &one, &x),
        moment(&c, &x2, &one),
        moment(&c, &one, &x2),
        moment(&c, &x, &x),
    ];
    let names = ["x", "y", "x2", "y2", "xy"];
    let fs: [fn(&Configuration) -> f64; 5] =
        [|q| q.x, |q| q.y, |q| q.x * q.x, |q| q.y * q.y, |q| q.x * q.y];
    let moments: Vec<MomentCheck> = (0..5)
        .map(|k| {
            let (mean, stderr) = mean_stderr(ensemble.members.iter().map(fs[k]));
            let z = if stderr > 0.0 { (mean - exact[k]) / stderr } else { 0.0 };
            MomentCheck { name: names[k].into(), empirical: mean, exact: exact[k], stderr, z }
        })
        .collect();
    let max_abs_z = moments.iter().map(|m| m.z.abs()).fold(0.0, f64::max);
    Ok(EquivarianceReport { t, members: ensemble.members.len(), moments, max_abs_z })
}

/// Sample mean and its standard error.
pub fn mean_stderr(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (mut n, mut mean, mut m2) = (0.0, 0.0, 0.0);
    for v in values {
        n += 1.0;
        let d = v - mean;
        mean += d / n;
        m2 += d * (v - mean);
    }
    if n < 2.0 {
        return (mean, f64::NAN);
    }
    (mean, (m2 / (n - 1.0) / n).sqrt())
}

/// Unmeasured two-time correlator on a grid of times.
#[derive(Debug, Clone)]
pub struct UnmeasuredGrid {
    pub times_a: Vec<f64>,
    pub times_b: Vec<f64>,
    /// `values[(i, j)]` is the ensemble mean of `x(times_a[i]) y(times_b[j])`.
    pub values: DMatrix<f64>,
    pub stderr: DMatrix<f64>,
    pub used: usize,
    pub dropouts: usize,
}

impl UnmeasuredGrid {
    pub fn result(&self, i: usize, j: usize) -> CorrelationResult {
        CorrelationResult {
            value: self.values[(i, j)],
            t1: self.times_a[i],
            t2: self.times_b[j],
            method: Method::UnmeasuredBohm,
            stderr: Some(self.stderr[(i, j)]),
        }
    }

    pub fn dropout_fraction(&self) -> f64 {
        self.dropouts as f64 / (self.used + self.dropouts).max(1) as f64
    }
}

/// Propagates every member once through all requested times and averages
/// `x(t_a) y(t_b)` over the members that never met a node.
pub fn unmeasured_grid(
    ensemble: &TrajectoryEnsemble,
    wave: &PilotWave,
    times_a: &[f64],
    times_b: &[f64],
    integrator: &Integrator,
) -> Result<UnmeasuredGrid> {
    integrator.validate()?;
    if times_a.is_empty() || times_b.is_empty() {
        return domain("time grids must be non-empty");
    }
    let mut all: Vec<f64> = times_a.iter().chain(times_b).copied().collect();
    if all.iter().any(|t| !t.is_finite()) {
        return domain("times must be finite");
    }
    all.sort_by(f64::total_cmp);
    all.dedup();
    let index = |t: f64| all.iter().position(|s| *s == t).expect("time is in the union");
    let ia: Vec<usize> = times_a.iter().map(|t| index(*t)).collect();
    let ib: Vec<usize> = times_b.iter().map(|t| index(*t)).collect();

    let paths: Vec<Option<Vec<Configuration>>> = ensemble
        .members
        .par_iter()
        .map(|q| integrator.advance_through(wave, q, ensemble.t, &all).ok())
        .collect();
    let dropouts = paths.iter().filter(|p| p.is_none()).count();
    let kept: Vec<&Vec<Configuration>> = paths.iter().flatten().collect();
    let (na, nb) = (times_a.len(), times_b.len());
    let mut values = DMatrix::zeros(na, nb);
    let mut stderr = DMatrix::zeros(na, nb);
    for i in 0..na {
        for j in 0..nb {
            let (m, s) = mean_stderr(kept.iter().map(|p| p[ia[i]].x * p[ib[j]].y));
            values[(i, j)] = m;
            stderr[(i, j)] = s;
        }
    }
    Ok(UnmeasuredGrid {
        times_a: times_a.to_vec(),
        times_b: times_b.to_vec(),
        values,
        stderr,
        used: kept.len(),
        dropouts,
    })
}

/// Unmeasured correlator `<x(t1) y(t2)>` over the trajectory ensemble.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UnmeasuredResult {
    pub correlation: CorrelationResult,
    pub used: usize,
    pub dropouts: usize,
}

pub fn unmeasured_two_time(
    ensemble: &TrajectoryEnsemble,
    wave: &PilotWave,
    t1: f64,
    t2: f64,
    integrator: &Integrator,
) -> Result<UnmeasuredResult> {
    let grid = unmeasured_grid(ensemble, wave, &[t1], &[t2], integrator)?;
    Ok(UnmeasuredResult { correlation: grid.result(0, 0), used: grid.used, dropouts: grid.dropouts })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measurement::{normal_cdf, PointerModel};
    use num_complex::Complex64;

    fn devices() -> [PointerModel; 2] {
        let d = PointerModel::default_for_gap(1.0).unwrap();
        [d, d]
    }

    fn entangled() -> PilotWave {
        let basis = OscillatorBasis::harmonic(8).unwrap();
        PilotWave::bare(&basis, &WaveCoefficients::entangled01(8).unwrap(), devices()).unwrap()
    }

    fn moving(theta: f64) -> PilotWave {
        let basis = OscillatorBasis::harmonic(8).unwrap();
        let mut c = CMatrix::zeros(8, 8);
        c[(0, 0)] = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        c[(1, 0)] = Complex64::from_polar(std::f64::consts::FRAC_1_SQRT_2, theta);
        PilotWave::bare(&basis, &WaveCoefficients::from_matrix(c, 1e-12).unwrap(), devices()).unwrap()
    }

    #[test]
    fn sampler_inverts_cdf() {
        let w = entangled();
        let s = EquilibriumSampler::new(w.basis(), w.bare_state().unwrap()).unwrap();
        let mut phi = vec![0.0; 2];
        // marginal |phi_0|^2/2 + |phi_1|^2/2 has CDF Phi(sqrt2 x) - x exp(-x^2) / (2 sqrt pi)
        let cdf = |x: f64| {
            normal_cdf(std::f64::consts::SQRT_2 * x) - x * (-x * x).exp() / (2.0 * std::f64::consts::PI.sqrt())
        };
        for &u in &[1e-6, 0.01, 0.3, 0.5, 0.77, 0.999] {
            let x = s.invert(&s.marginal, u, &mut phi);
            assert!((cdf(x) - u).abs() < 1e-12, "{u}: {}", cdf(x));
        }
        assert!(s.invert(&s.marginal, 0.5, &mut phi).abs() < 1e-12);
    }

    #[test]
    fn equilibrium_moments() {
        let w = entangled();
        let e = sample_equilibrium(&w, 20_000, 7).unwrap();
        let r = equivariance_check(&w, &e, 0.0).unwrap();
        assert!(r.max_abs_z < 4.0, "{r:?}");
        let (xy, se) = mean_stderr(e.members.iter().map(|q| q.x * q.y));
        assert!((xy - 0.5).abs() < 4.0 * se, "{xy} {se}");
        let (za, _) = mean_stderr(e.members.iter().map(|q| q.za * q.za));
        assert!((za - 0.0025).abs() < 2e-4);
    }

    #[test]
    fn sampling_is_deterministic() {
        let w = entangled();
        let a = sample_equilibrium(&w, 300, 11).unwrap();
        let b = sample_equilibrium(&w, 300, 11).unwrap();
        let c = sample_equilibrium(&w, 300, 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.members, c.members);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let d = pool.install(|| sample_equilibrium(&w, 300, 11).unwrap());
        assert_eq!(a, d);
        assert!(sample_equilibrium(&w, 0, 1).is_err());
    }

    #[test]
    fn stationary_state_frozen_and_correlator_constant() {
        let w = entangled();
        let e = sample_equilibrium(&w, 2000, 3).unwrap();
        let it = Integrator::new(0.05).unwrap();
        let p = e.propagate(&w, 1.7, &it).unwrap();
        assert_eq!(p.dropouts, 0);
        for (a, b) in e.members.iter().zip(&p.ensemble.members) {
            assert!((a.x - b.x).abs() < 1e-12 && (a.y - b.y).abs() < 1e-12);
        }
        let g = unmeasured_grid(&e, &w, &[0.0, 1.0, 2.5], &[0.0, 3.1], &it).unwrap();
        let v = g.values[(0, 0)];
        assert!(g.values.iter().all(|x| (x - v).abs() < 1e-12));
        assert!((v - 0.5).abs() < 4.0 * g.stderr[(0, 0)]);
        let one = unmeasured_two_time(&e, &w, 1.0, 3.1, &it).unwrap();
        assert_eq!(one.correlation.value, g.values[(1, 1)]);
    }

    #[test]
    fn nonstationary_equivariance() {
        let w = moving(2.5);
        let e = sample_equilibrium(&w, 20_000, 5).unwrap();
        let it = Integrator::new(1e-2).unwrap();
        let p = e.propagate(&w, 1.0, &it).unwrap();
        assert_eq!(p.dropouts, 0);
        let r = equivariance_check(&w, &p.ensemble, 1.0).unwrap();
        assert!(r.max_abs_z < 4.0, "{r:?}");
        // the flow actually moved the ensemble
        let (m0, _) = mean_stderr(e.members.iter().map(|q| q.x));
        let (m1, _) = mean_stderr(p.ensemble.members.iter().map(|q| q.x));
        assert!((m1 - m0).abs() > 0.1);
    }
}
