use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::basis::OscillatorBasis;
use super::projector::Projector;
use super::propagator::evolve_bin_functions_with_derivative;
use super::quadrature::hermite_functions_with_derivative;
use super::CMatrix;
use crate::error::{domain, Error, Result};

/// One of the two particles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Subsystem {
    A,
    B,
}

impl Subsystem {
    fn slot(self) -> usize {
        match self {
            Subsystem::A => 0,
            Subsystem::B => 1,
        }
    }
}

/// How one particle's factor of the state is represented.
#[derive(Debug, Clone)]
pub enum Side {
    /// Plain eigenbasis expansion; phases in the coefficients track the clock.
    Free,
    /// The projector was applied at `time`; phases on this side stay frozen at
    /// that time and the subsequent free evolution is applied exactly when the
    /// state is evaluated pointwise.
    Projected { projector: Arc<Projector>, time: f64 },
}

/// Two-particle state `sum_mn c_mn |m>|n>`, possibly with one projector per
/// particle applied lazily.
///
/// Lazy projection keeps `P^2 = P` exact: norms and overlaps use the
/// compressed projector matrix once, which is exact for states in the span of
/// the truncated basis, instead of squaring a truncated matrix.
#[derive(Debug, Clone)]
pub struct WaveCoefficients {
    coeffs: CMatrix,
    clock: f64,
    sides: [Side; 2],
    normalized: bool,
    norm_tolerance: f64,
}

pub const DEFAULT_NORM_TOLERANCE: f64 = 1e-10;

impl WaveCoefficients {
    /// `(|0>|1> + |1>|0>) / sqrt(2)`.
    pub fn entangled01(n_max: usize) -> Result<Self> {
        if n_max < 2 {
            return domain("entangled state needs n_max >= 2");
        }
        let mut c = CMatrix::zeros(n_max, n_max);
        c[(0, 1)] = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        c[(1, 0)] = c[(0, 1)];
        Self::from_matrix(c, DEFAULT_NORM_TOLERANCE)
    }

    /// `|m>|n>`.
    pub fn product(m: usize, n: usize, n_max: usize) -> Result<Self> {
        if m >= n_max || n >= n_max {
            return domain(format!("levels ({m}, {n}) outside basis 0..{n_max}"));
        }
        let mut c = CMatrix::zeros(n_max, n_max);
        c[(m, n)] = Complex64::new(1.0, 0.0);
        Self::from_matrix(c, DEFAULT_NORM_TOLERANCE)
    }

    /// A physical state; the norm must be 1 within `norm_tolerance`.
    pub fn from_matrix(coeffs: CMatrix, norm_tolerance: f64) -> Result<Self> {
        let state = Self::unnormalized(coeffs)?;
        let n2 = state.norm_sqr();
        if (n2 - 1.0).abs() > norm_tolerance {
            return domain(format!("state norm^2 {n2} differs from 1 by more than {norm_tolerance:e}"));
        }
        Ok(Self { normalized: true, norm_tolerance, ..state })
    }

    /// A branch or other state with arbitrary norm, flagged as such.
    pub fn unnormalized(coeffs: CMatrix) -> Result<Self> {
        if !coeffs.is_square() || coeffs.nrows() < 2 {
            return domain(format!("coefficient tensor must be square, got {}x{}", coeffs.nrows(), coeffs.ncols()));
        }
        if coeffs.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return domain("coefficient tensor has non-finite entries");
        }
        Ok(Self {
            coeffs,
            clock: 0.0,
            sides: [Side::Free, Side::Free],
            normalized: false,
            norm_tolerance: DEFAULT_NORM_TOLERANCE,
        })
    }

    /// Random normalized state on the lowest `levels` levels of each particle.
    pub fn random(n_max: usize, levels: usize, rng: &mut impl Rng) -> Result<Self> {
        if levels == 0 || levels > n_max {
            return domain(format!("levels {levels} outside 1..={n_max}"));
        }
        let mut c = CMatrix::zeros(n_max, n_max);
        for i in 0..levels {
            for j in 0..levels {
                c[(i, j)] = Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
            }
        }
        let norm = c.norm();
        Self::from_matrix(c / Complex64::new(norm, 0.0), DEFAULT_NORM_TOLERANCE)
    }

    pub fn dim(&self) -> usize {
        self.coeffs.nrows()
    }

    /// Raw coefficients. On a projected side they are the pre-projection
    /// coefficients, with phases frozen at the projection time.
    pub fn coeffs(&self) -> &CMatrix {
        &self.coeffs
    }

    pub fn clock(&self) -> f64 {
        self.clock
    }

    pub fn side(&self, which: Subsystem) -> &Side {
        &self.sides[which.slot()]
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn norm_tolerance(&self) -> f64 {
        self.norm_tolerance
    }

    /// One past the highest level carrying a nonzero coefficient on `which`;
    /// pointwise evaluation never needs more basis functions than this.
    pub fn active_levels(&self, which: Subsystem) -> usize {
        let n = self.dim();
        let nonzero = |i: usize, j: usize| {
            let c = self.coeffs[(i, j)];
            c.re != 0.0 || c.im != 0.0
        };
        let mut top = 0;
        for i in 0..n {
            for j in 0..n {
                if nonzero(i, j) {
                    let k = match which {
                        Subsystem::A => i,
                        Subsystem::B => j,
                    };
                    top = top.max(k + 1);
                }
            }
        }
        top.max(1)
    }

    pub fn is_unprojected(&self) -> bool {
        matches!(self.sides, [Side::Free, Side::Free])
    }

    pub fn check_basis(&self, basis: &OscillatorBasis) -> Result<()> {
        if basis.n_max() != self.dim() {
            return Err(Error::BasisMismatch(format!(
                "state has {} levels per particle, basis has {}",
                self.dim(),
                basis.n_max()
            )));
        }
        Ok(())
    }

    /// Free evolution by `t`: `c_mn -> exp(-i (E_m + E_n) t) c_mn` on free sides.
    pub fn evolve_free(&self, basis: &OscillatorBasis, t: f64) -> Result<Self> {
        self.check_basis(basis)?;
        if !t.is_finite() {
            return domain(format!("evolution time must be finite, got {t}"));
        }
        let n = self.dim();
        let free = |s: &Side| matches!(s, Side::Free);
        let (fa, fb) = (free(&self.sides[0]), free(&self.sides[1]));
        let mut out = self.clone();
        out.clock += t;
        if t == 0.0 || !(fa || fb) {
            return Ok(out);
        }
        let phase = |k: usize, on: bool| {
            if on {
                Complex64::from_polar(1.0, -basis.energy(k) * t)
            } else {
                Complex64::new(1.0, 0.0)
            }
        };
        let pa: Vec<Complex64> = (0..n).map(|k| phase(k, fa)).collect();
        let pb: Vec<Complex64> = (0..n).map(|k| phase(k, fb)).collect();
        for j in 0..n {
            for i in 0..n {
                out.coeffs[(i, j)] *= pa[i] * pb[j];
            }
        }
        Ok(out)
    }

    /// Evolves freely until the clock reads `t`.
    pub fn evolve_to(&self, basis: &OscillatorBasis, t: f64) -> Result<Self> {
        self.evolve_free(basis, t - self.clock)
    }

    /// Applies `projector` to one particle at the current clock.
    pub fn project(&self, which: Subsystem, projector: &Arc<Projector>) -> Result<Self> {
        if projector.dim() != self.dim() {
            return Err(Error::BasisMismatch(format!(
                "projector has dimension {}, state {}",
                projector.dim(),
                self.dim()
            )));
        }
        let mut out = self.clone();
        out.normalized = false;
        let slot = which.slot();
        match &self.sides[slot] {
            Side::Free => {
                out.sides[slot] = Side::Projected { projector: projector.clone(), time: self.clock };
            }
            Side::Projected { projector: p, time } => {
                if p.family() == projector.family() && *time == self.clock {
                    if p.index() != projector.index() {
                        out.coeffs.fill(Complex64::new(0.0, 0.0));
                    }
                } else {
                    return domain(format!(
                        "particle {which:?} already projected at t = {time}; a second projection at t = {} \
                         is not supported",
                        self.clock
                    ));
                }
            }
        }
        Ok(out)
    }

    /// Multiplies the coefficients by a scalar.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        out.coeffs *= Complex64::new(factor, 0.0);
        out.normalized = false;
        out
    }

    /// Renormalized copy.
    pub fn normalized(&self) -> Result<Self> {
        let n2 = self.norm_sqr();
        if !(n2 > 0.0) {
            return domain("cannot normalize a zero state");
        }
        let mut out = self.scaled(n2.sqrt().recip());
        out.normalized = true;
        Ok(out)
    }

    /// Overlap matrix between two side representations, or `None` when the
    /// factors are orthogonal.
    fn side_gram(a: &Side, b: &Side, n: usize) -> Result<Option<CMatrix>> {
        match (a, b) {
            (Side::Free, Side::Free) => Ok(Some(CMatrix::identity(n, n))),
            (Side::Projected { projector: p, time: s }, Side::Projected { projector: q, time: u }) => {
                if p.family() == q.family() && s == u {
                    if p.index() == q.index() {
                        Ok(Some(p.matrix().clone()))
                    } else {
                        Ok(None)
                    }
                } else if Arc::ptr_eq(p, q) && s == u {
                    Ok(Some(p.matrix().clone()))
                } else {
                    domain("overlap of factors projected by unrelated projectors is not supported")
                }
            }
            _ => domain("overlap between a free and a projected factor is not supported"),
        }
    }

    /// `<self|other>`. Both states must share the clock.
    pub fn inner(&self, other: &WaveCoefficients) -> Result<Complex64> {
        if self.dim() != other.dim() {
            return Err(Error::BasisMismatch("states of different dimension".into()));
        }
        if self.clock != other.clock {
            return domain(format!("inner product of states at clocks {} and {}", self.clock, other.clock));
        }
        let n = self.dim();
        let ga = Self::side_gram(&self.sides[0], &other.sides[0], n)?;
        let gb = Self::side_gram(&self.sides[1], &other.sides[1], n)?;
        let (Some(ga), Some(gb)) = (ga, gb) else {
            return Ok(Complex64::new(0.0, 0.0));
        };
        let mapped = &ga * &other.coeffs * gb.transpose();
        Ok(self.coeffs.iter().zip(mapped.iter()).map(|(a, b)| a.conj() * b).sum())
    }

    pub fn norm_sqr(&self) -> f64 {
        match self.sides {
            [Side::Free, Side::Free] => self.coeffs.norm_squared(),
            _ => self.inner(self).expect("self-overlap is always defined").re,
        }
    }

    /// Basis-function values (and derivatives) of one side at position `x`:
    /// `phi_m(x)` for a free side, the exactly evolved `chi phi_m` for a
    /// projected side.
    pub fn side_functions(
        &self,
        basis: &OscillatorBasis,
        which: Subsystem,
        x: f64,
        vals: &mut [Complex64],
        ders: &mut [Complex64],
    ) -> Result<()> {
        side_functions(basis, &self.sides[which.slot()], self.clock, self.clock, x, vals, ders)
    }

    /// `Psi(x, y)` together with `dPsi/dx` and `dPsi/dy`.
    pub fn eval_with_gradient(&self, basis: &OscillatorBasis, x: f64, y: f64) -> Result<[Complex64; 3]> {
        self.check_basis(basis)?;
        let n = self.dim();
        let zero = Complex64::new(0.0, 0.0);
        let (mut va, mut da, mut vb, mut db) = (vec![zero; n], vec![zero; n], vec![zero; n], vec![zero; n]);
        self.side_functions(basis, Subsystem::A, x, &mut va, &mut da)?;
        self.side_functions(basis, Subsystem::B, y, &mut vb, &mut db)?;
        Ok(contract(&self.coeffs, &va, &da, &vb, &db))
    }

    pub fn eval(&self, basis: &OscillatorBasis, x: f64, y: f64) -> Result<Complex64> {
        Ok(self.eval_with_gradient(basis, x, y)?[0])
    }
}

/// Side basis functions at position `x` and time `t` for a factor whose
/// coefficients are stored at `clock`. A free side picks up the phases
/// `exp(-i E_m (t - clock))`; a projected side is evolved exactly from its
/// projection time.
pub fn side_functions(
    basis: &OscillatorBasis,
    side: &Side,
    clock: f64,
    t: f64,
    x: f64,
    vals: &mut [Complex64],
    ders: &mut [Complex64],
) -> Result<()> {
    match side {
        Side::Free => {
            let l = basis.length();
            let n = vals.len();
            let mut phi = vec![0.0; n + 1];
            let mut dphi = vec![0.0; n];
            hermite_functions_with_derivative(x / l, &mut phi, &mut dphi);
            let s = l.powf(-0.5);
            let dt = t - clock;
            for m in 0..n {
                let ph = if dt == 0.0 {
                    Complex64::new(s, 0.0)
                } else {
                    Complex64::from_polar(s, -basis.energy(m) * dt)
                };
                vals[m] = ph * phi[m];
                ders[m] = ph * (dphi[m] / l);
            }
            Ok(())
        }
        Side::Projected { projector, time } => {
            let Some(region) = projector.region() else {
                return domain("pointwise evaluation needs a position-region projector");
            };
            evolve_bin_functions_with_derivative(basis, region, x, t - time, vals, ders);
            Ok(())
        }
    }
}

/// `[v_A^T C v_B, d_A^T C v_B, v_A^T C d_B]` over the leading
/// `va.len() x vb.len()` block of `c`.
pub fn contract(c: &CMatrix, va: &[Complex64], da: &[Complex64], vb: &[Complex64], db: &[Complex64]) -> [Complex64; 3] {
    let zero = Complex64::new(0.0, 0.0);
    let (mut psi, mut dx, mut dy) = (zero, zero, zero);
    for i in 0..va.len() {
        let (mut u, mut ud) = (zero, zero);
        for j in 0..vb.len() {
            let cij = c[(i, j)];
            u += cij * vb[j];
            ud += cij * db[j];
        }
        psi += va[i] * u;
        dx += da[i] * u;
        dy += va[i] * ud;
    }
    [psi, dx, dy]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::projector::new_family;
    use crate::hilbert::Interval;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn evolution_is_unitary_phase() {
        let basis = OscillatorBasis::harmonic(8).unwrap();
        let psi = WaveCoefficients::entangled01(8).unwrap();
        assert!((psi.evolve_free(&basis, 0.0).unwrap().coeffs() - psi.coeffs()).norm() == 0.0);
        for &t in &[0.3, 17.0, -250.0, 1000.0] {
            let e = psi.evolve_free(&basis, t).unwrap();
            assert!((e.norm_sqr() - 1.0).abs() < 1e-14);
            // Psi_0 only picks up exp(-i (E_0 + E_1) t)
            let g = Complex64::from_polar(1.0, -2.0 * t);
            assert!((e.coeffs() - psi.coeffs() * g).norm() < 1e-13);
        }
    }

    #[test]
    fn random_states_stay_normalized() {
        let basis = OscillatorBasis::harmonic(16).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let s = WaveCoefficients::random(16, 6, &mut rng).unwrap();
            let e = s.evolve_free(&basis, rng.random_range(-1000.0..1000.0)).unwrap();
            assert!((e.norm_sqr() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn basis_mismatch_detected() {
        let basis = OscillatorBasis::harmonic(8).unwrap();
        let psi = WaveCoefficients::entangled01(6).unwrap();
        assert!(matches!(psi.evolve_free(&basis, 1.0), Err(Error::BasisMismatch(_))));
        assert!(WaveCoefficients::from_matrix(CMatrix::identity(4, 4), 1e-10).is_err());
    }

    #[test]
    fn lazy_projection_is_idempotent_and_orthogonal() {
        let basis = OscillatorBasis::harmonic(16).unwrap();
        let fam = new_family();
        let left = Arc::new(Projector::from_region(&basis, Interval::new(f64::NEG_INFINITY, 0.0).unwrap(), fam, 0).unwrap());
        let right = Arc::new(Projector::from_region(&basis, Interval::new(0.0, f64::INFINITY).unwrap(), fam, 1).unwrap());
        let psi = WaveCoefficients::entangled01(16).unwrap().evolve_free(&basis, 0.4).unwrap();
        let pl = psi.project(Subsystem::A, &left).unwrap();
        let pr = psi.project(Subsystem::A, &right).unwrap();
        assert!((pl.norm_sqr() - 0.5).abs() < 1e-14);
        assert!((pl.norm_sqr() + pr.norm_sqr() - 1.0).abs() < 1e-14);
        assert!(pl.inner(&pr).unwrap().norm() == 0.0);
        let twice = pl.project(Subsystem::A, &left).unwrap();
        assert!((twice.norm_sqr() - pl.norm_sqr()).abs() == 0.0);
        assert!(pl.project(Subsystem::A, &right).unwrap().norm_sqr() == 0.0);
        // later evolution does not change the weight
        let later = pl.evolve_free(&basis, 2.0).unwrap();
        assert!((later.norm_sqr() - 0.5).abs() < 1e-14);
    }

    #[test]
    fn pointwise_projection_matches_restriction() {
        let basis = OscillatorBasis::harmonic(12).unwrap();
        let bin = Interval::new(-0.5, 1.0).unwrap();
        let p = Arc::new(Projector::from_region(&basis, bin, new_family(), 0).unwrap());
        let psi = WaveCoefficients::entangled01(12).unwrap();
        let proj = psi.project(Subsystem::A, &p).unwrap();
        for &(x, y) in &[(0.2, 0.7), (1.5, 0.3), (-0.7, -1.0)] {
            let a = proj.eval(&basis, x, y).unwrap();
            let b = psi.eval(&basis, x, y).unwrap();
            let expect = if bin.contains(x) { b } else { Complex64::new(0.0, 0.0) };
            assert!((a - expect).norm() < 1e-14);
        }
        // symmetry of the entangled state
        let a = psi.eval(&basis, 0.3, -1.2).unwrap();
        let b = psi.eval(&basis, -1.2, 0.3).unwrap();
        assert!((a - b).norm() < 1e-14);
        assert_eq!(psi.eval(&basis, 0.0, 0.0).unwrap().norm(), 0.0);
    }
}
