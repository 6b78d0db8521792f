//! Standard quantum-mechanical predictions: Heisenberg-picture two-time
//! correlators, the closed form for position, the project–evolve–project
//! joint probabilities and their detector-array (binned) versions.

use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::hilbert::{new_family, CMatrix, Interval, OscillatorBasis, Projector, Subsystem, WaveCoefficients};

/// Matrix projectors whose idempotency residual exceeds this are rejected by
/// the joint-probability routines.
pub const PROJECTION_TOLERANCE: f64 = 1e-6;

/// Observable with a finite spectrum, `A = sum_a a P_a`.
#[derive(Debug, Clone)]
pub struct DiscreteObservable {
    eigenvalues: Vec<f64>,
    projectors: Vec<Arc<Projector>>,
    family: u64,
}

impl DiscreteObservable {
    /// Builds an observable from matrix projectors, checking that they are
    /// idempotent, mutually orthogonal and complete within `tolerance`.
    pub fn new(eigenvalues: Vec<f64>, matrices: Vec<CMatrix>, tolerance: f64) -> Result<Self> {
        check_eigenvalues(&eigenvalues, matrices.len())?;
        let n = matrices[0].nrows();
        let family = new_family();
        let projectors = matrices
            .into_iter()
            .enumerate()
            .map(|(i, m)| Projector::from_matrix(m, tolerance, family, i).map(Arc::new))
            .collect::<Result<Vec<_>>>()?;
        if projectors.iter().any(|p| p.dim() != n) {
            return Err(Error::BasisMismatch("projectors of different dimensions".into()));
        }
        let obs = Self { eigenvalues, projectors, family };
        let (orth, comp) = obs.matrix_residuals();
        if orth > tolerance || comp > tolerance {
            return domain(format!(
                "projectors not an orthogonal resolution of identity: orthogonality {orth:e}, completeness {comp:e}"
            ));
        }
        Ok(obs)
    }

    /// Builds an observable from position regions that partition the line.
    /// These projectors are exact; their matrices are compressions.
    pub fn from_regions(basis: &OscillatorBasis, eigenvalues: Vec<f64>, regions: Vec<Interval>) -> Result<Self> {
        check_eigenvalues(&eigenvalues, regions.len())?;
        if regions[0].lo != f64::NEG_INFINITY || regions[regions.len() - 1].hi != f64::INFINITY {
            return domain("regions must cover the whole real line");
        }
        if regions.windows(2).any(|w| w[0].hi != w[1].lo) {
            return domain("regions must be contiguous and ordered");
        }
        let family = new_family();
        let projectors = regions
            .into_iter()
            .enumerate()
            .map(|(i, r)| Projector::from_region(basis, r, family, i).map(Arc::new))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { eigenvalues, projectors, family })
    }

    /// Energy eigenprojectors `|n><n|` with eigenvalue `E_n`.
    pub fn energy(basis: &OscillatorBasis) -> Result<Self> {
        let n = basis.n_max();
        let mats = (0..n)
            .map(|k| {
                let mut m = CMatrix::zeros(n, n);
                m[(k, k)] = Complex64::new(1.0, 0.0);
                m
            })
            .collect();
        Self::new(basis.energies(), mats, 1e-12)
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn projectors(&self) -> &[Arc<Projector>] {
        &self.projectors
    }

    pub fn projector(&self, i: usize) -> &Arc<Projector> {
        &self.projectors[i]
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn family(&self) -> u64 {
        self.family
    }

    pub fn dim(&self) -> usize {
        self.projectors[0].dim()
    }

    /// Smallest gap between adjacent eigenvalues.
    pub fn min_gap(&self) -> f64 {
        self.eigenvalues.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min)
    }

    /// `sum_a a P_a` in the oscillator basis.
    pub fn matrix(&self) -> CMatrix {
        let n = self.dim();
        let mut out = CMatrix::zeros(n, n);
        for (a, p) in self.eigenvalues.iter().zip(&self.projectors) {
            out += p.matrix() * Complex64::new(*a, 0.0);
        }
        out
    }

    /// Largest `|P^2 - P|` entry over the projectors (truncation residual).
    pub fn max_idempotency_residual(&self) -> f64 {
        self.projectors.iter().map(|p| p.idempotency_residual()).fold(0.0, f64::max)
    }

    /// (`max |P_a P_b|` over `a != b`, `|sum P_a - 1|`) of the stored matrices.
    pub fn matrix_residuals(&self) -> (f64, f64) {
        let n = self.dim();
        let mut orth: f64 = 0.0;
        let mut sum = CMatrix::zeros(n, n);
        for (i, p) in self.projectors.iter().enumerate() {
            sum += p.matrix();
            for q in &self.projectors[i + 1..] {
                orth = orth.max(max_abs(&(p.matrix() * q.matrix())));
            }
        }
        (orth, max_abs(&(sum - CMatrix::identity(n, n))))
    }

    pub fn is_exact(&self) -> bool {
        self.projectors.iter().all(|p| p.region().is_some())
    }
}

fn check_eigenvalues(eigenvalues: &[f64], count: usize) -> Result<()> {
    if eigenvalues.is_empty() || eigenvalues.len() != count {
        return domain(format!("{} eigenvalues for {count} projectors", eigenvalues.len()));
    }
    if eigenvalues.iter().any(|a| !a.is_finite()) || eigenvalues.windows(2).any(|w| !(w[1] > w[0])) {
        return domain("eigenvalues must be finite and strictly increasing");
    }
    Ok(())
}

fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|c| c.norm()).fold(0.0, f64::max)
}

/// Detector-array discretization of position: `x_Delta = sum_i x_i P_i`.
#[derive(Debug, Clone)]
pub struct BinnedObservable {
    edges: Vec<f64>,
    centers: Vec<f64>,
    delta: f64,
    observable: DiscreteObservable,
}

impl BinnedObservable {
    /// `count` bins of equal width over `[lo, hi]`, outer bins extended to infinity.
    pub fn uniform(basis: &OscillatorBasis, lo: f64, hi: f64, count: usize) -> Result<Self> {
        if count == 0 || !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
            return domain(format!("invalid bin grid [{lo}, {hi}] with {count} bins"));
        }
        let edges = (0..=count).map(|i| lo + (hi - lo) * i as f64 / count as f64).collect();
        Self::from_edges(basis, edges)
    }

    /// Finite edges `e_0 < ... < e_K` define `K` bins; the first and last bins
    /// are extended to `-inf` and `+inf`. Outer centers sit half a nominal
    /// width inside the adjacent finite edge.
    pub fn from_edges(basis: &OscillatorBasis, edges: Vec<f64>) -> Result<Self> {
        if edges.len() < 2 || edges.iter().any(|e| !e.is_finite()) || edges.windows(2).any(|w| !(w[1] > w[0])) {
            return domain("bin edges must be finite and strictly increasing");
        }
        let k = edges.len() - 1;
        let delta = (edges[k] - edges[0]) / k as f64;
        let mut centers: Vec<f64> = edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        if k >= 2 {
            centers[0] = edges[1] - 0.5 * delta;
            centers[k - 1] = edges[k - 1] + 0.5 * delta;
        }
        let regions = (0..k)
            .map(|i| {
                let lo = if i == 0 { f64::NEG_INFINITY } else { edges[i] };
                let hi = if i + 1 == k { f64::INFINITY } else { edges[i + 1] };
                Interval::new(lo, hi)
            })
            .collect::<Result<Vec<_>>>()?;
        if centers.windows(2).any(|w| !(w[1] > w[0])) {
            return domain("bin centers must be strictly increasing");
        }
        let observable = DiscreteObservable::from_regions(basis, centers.clone(), regions)?;
        Ok(Self { edges, centers, delta, observable })
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn observable(&self) -> &DiscreteObservable {
        &self.observable
    }

    /// Index of the bin containing `x`.
    pub fn bin_of(&self, x: f64) -> usize {
        let inner = &self.edges[1..self.edges.len() - 1];
        inner.partition_point(|e| *e <= x)
    }

    /// Probability that particle `which` lies beyond the outer finite edges.
    pub fn tail_mass(&self, basis: &OscillatorBasis, state: &WaveCoefficients, which: Subsystem) -> Result<f64> {
        let lo = Interval::new(f64::NEG_INFINITY, self.edges[0])?;
        let hi = Interval::new(self.edges[self.edges.len() - 1], f64::INFINITY)?;
        let mut g = basis.bin_projection_matrix(&lo)?;
        g += basis.bin_projection_matrix(&hi)?;
        one_side_expectation(state, &g, which)
    }
}

impl AsRef<DiscreteObservable> for DiscreteObservable {
    fn as_ref(&self) -> &DiscreteObservable {
        self
    }
}

impl AsRef<DiscreteObservable> for BinnedObservable {
    fn as_ref(&self) -> &DiscreteObservable {
        &self.observable
    }
}

/// How a correlator was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Heisenberg,
    ClosedForm,
    Factorized,
    Binned,
    UnmeasuredBohm,
    MeasuredQuadrature,
    MeasuredTrajectory,
}

/// `<A_A B_B>(t1, t2)` tagged with the method that produced it and, for
/// Monte Carlo estimates, a standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationResult {
    pub value: f64,
    pub t1: f64,
    pub t2: f64,
    pub method: Method,
    pub stderr: Option<f64>,
}

impl CorrelationResult {
    pub fn exact(value: f64, t1: f64, t2: f64, method: Method) -> Self {
        Self { value, t1, t2, method, stderr: None }
    }
}

fn require_plain(state: &WaveCoefficients, basis: &OscillatorBasis) -> Result<()> {
    state.check_basis(basis)?;
    if !state.is_unprojected() {
        return domain("expected a state without pending projections");
    }
    Ok(())
}

fn check_dim(state: &WaveCoefficients, m: &CMatrix) -> Result<()> {
    if m.nrows() != state.dim() || m.ncols() != state.dim() {
        return Err(Error::BasisMismatch(format!(
            "operator is {}x{}, state has {} levels",
            m.nrows(),
            m.ncols(),
            state.dim()
        )));
    }
    Ok(())
}

/// Heisenberg-picture operator `U^dagger(t) M U(t)`.
fn heisenberg(basis: &OscillatorBasis, m: &CMatrix, t: f64) -> CMatrix {
    let n = m.nrows();
    let e = basis.energies();
    CMatrix::from_fn(n, n, |i, j| m[(i, j)] * Complex64::from_polar(1.0, (e[i] - e[j]) * t))
}

/// `<Psi| M_A(t1) (x) N_B(t2) |Psi>` by dense matrix algebra with diagonal
/// phase matrices, for the state taken at its current clock as time origin
/// `clock = 0`.
pub fn heisenberg_expectation(
    basis: &OscillatorBasis,
    state: &WaveCoefficients,
    ma: &CMatrix,
    mb: &CMatrix,
    t1: f64,
    t2: f64,
) -> Result<Complex64> {
    require_plain(state, basis)?;
    check_dim(state, ma)?;
    check_dim(state, mb)?;
    let a = heisenberg(basis, ma, t1 - state.clock());
    let b = heisenberg(basis, mb, t2 - state.clock());
    let c = state.coeffs();
    let mapped = a * c * b.transpose();
    Ok(c.iter().zip(mapped.iter()).map(|(x, y)| x.conj() * y).sum())
}

/// Two-time correlator `<Psi| A(t1) (x) B(t2) |Psi>`.
pub fn heisenberg_two_time(
    basis: &OscillatorBasis,
    state: &WaveCoefficients,
    obs_a: &DiscreteObservable,
    obs_b: &DiscreteObservable,
    t1: f64,
    t2: f64,
) -> Result<CorrelationResult> {
    let v = heisenberg_expectation(basis, state, &obs_a.matrix(), &obs_b.matrix(), t1, t2)?;
    Ok(CorrelationResult::exact(v.re, t1, t2, Method::Heisenberg))
}

/// `|<0|x|1>|^2 cos(dE (t2 - t1)) + <0|x|0><1|x|1>` for the entangled state.
pub fn closed_form_xx(basis: &OscillatorBasis, t1: f64, t2: f64) -> CorrelationResult {
    let x01 = basis.matrix_element_x(0, 1).expect("basis has at least two levels");
    let x00 = basis.matrix_element_x(0, 0).expect("basis has at least two levels");
    let x11 = basis.matrix_element_x(1, 1).expect("basis has at least two levels");
    let de = basis.energy(1) - basis.energy(0);
    CorrelationResult::exact(x01 * x01 * (de * (t2 - t1)).cos() + x00 * x11, t1, t2, Method::ClosedForm)
}

/// Oscillation period `2 pi / (E_1 - E_0)` of the closed form.
pub fn correlator_period(basis: &OscillatorBasis) -> f64 {
    2.0 * std::f64::consts::PI / (basis.energy(1) - basis.energy(0))
}

fn check_projection(p: &Projector) -> Result<()> {
    if p.region().is_none() && p.idempotency_residual() > PROJECTION_TOLERANCE {
        return domain(format!(
            "not a projection: idempotency residual {:e} > {PROJECTION_TOLERANCE:e}",
            p.idempotency_residual()
        ));
    }
    Ok(())
}

/// `P_t1(a) * P_{t2,t1}(b|a)` by the explicit project–evolve–project pipeline:
/// evolve to the earlier time, project and renormalize, evolve to the later
/// time, project. A zero earlier-time probability gives a zero joint
/// probability without forming the conditional.
pub fn factorized_joint(
    basis: &OscillatorBasis,
    state: &WaveCoefficients,
    pa: &Arc<Projector>,
    pb: &Arc<Projector>,
    t1: f64,
    t2: f64,
) -> Result<f64> {
    require_plain(state, basis)?;
    check_projection(pa)?;
    check_projection(pb)?;
    let (first, second) = if t1 <= t2 {
        ((Subsystem::A, pa, t1), (Subsystem::B, pb, t2))
    } else {
        ((Subsystem::B, pb, t2), (Subsystem::A, pa, t1))
    };
    let at_first = state.evolve_to(basis, first.2)?;
    let norm_before = at_first.norm_sqr();
    let projected = at_first.project(first.0, first.1)?;
    let p_first = projected.norm_sqr() / norm_before;
    if !(p_first > 0.0) {
        return Ok(0.0);
    }
    let collapsed = projected.normalized()?;
    let later = collapsed.evolve_to(basis, second.2)?.project(second.0, second.1)?;
    let p_conditional = later.norm_sqr();
    Ok(p_first * p_conditional)
}

/// `<Psi(t)| P_a (x) P_b |Psi(t)>` at a single time.
pub fn joint_equal_time(
    basis: &OscillatorBasis,
    state: &WaveCoefficients,
    pa: &Arc<Projector>,
    pb: &Arc<Projector>,
    t: f64,
) -> Result<f64> {
    require_plain(state, basis)?;
    check_projection(pa)?;
    check_projection(pb)?;
    let s = state.evolve_to(basis, t)?;
    let c = s.coeffs();
    check_dim(&s, pa.matrix())?;
    check_dim(&s, pb.matrix())?;
    let mapped = pa.matrix() * c * pb.matrix().transpose();
    Ok(c.iter().zip(mapped.iter()).map(|(x, y)| (x.conj() * y).re).sum())
}

/// Single-time outcome probability `<Psi(t)| P |Psi(t)>` on one particle.
pub fn single_time_probability(
    basis: &OscillatorBasis,
    state: &WaveCoefficients,
    p: &Projector,
    which: Subsystem,
    t: f64,
) -> Result<f64> {
    require_plain(state, basis)?;
    let s = state.evolve_to(basis, t)?;
    one_side_expectation(&s, p.matrix(), which)
}

fn one_side_expectation(state: &WaveCoefficients, g: &CMatrix, which: Subsystem) -> Result<f64> {
    check_dim(state, g)?;
    let c = state.coeffs();
    let mapped = match which {
        Subsystem::A => g * c,
        Subsystem::B => c * g.transpose(),
    };
    Ok(c.iter().zip(mapped.iter()).map(|(x, y)| (x.conj() * y).re).sum())
}

/// Full table `P(a, b)` of `factorized_joint` over two observables.
pub fn factorized_table(
    basis: &OscillatorBasis,
    state: &WaveCoefficients,
    obs_a: &DiscreteObservable,
    obs_b: &DiscreteObservable,
    t1: f64,
    t2: f64,
) -> Result<DMatrix<f64>> {
    let mut table = DMatrix::zeros(obs_a.len(), obs_b.len());
    for (i, pa) in obs_a.projectors().iter().enumerate() {
        for (j, pb) in obs_b.projectors().iter().enumerate() {
            table[(i, j)] = factorized_joint(basis, state, pa, pb, t1, t2)?;
        }
    }
    Ok(table)
}

/// `sum_ab a b P(a, b)`.
pub fn correlator_from_table(table: &DMatrix<f64>, values_a: &[f64], values_b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (i, a) in values_a.iter().enumerate() {
        for (j, b) in values_b.iter().enumerate() {
            acc += a * b * table[(i, j)];
        }
    }
    acc
}

/// `sum_ij x_i x_j P(i, j)` with the factorized joint probabilities.
pub fn binned_closed_form_xx(
    basis: &OscillatorBasis,
    binned: &BinnedObservable,
    state: &WaveCoefficients,
    t1: f64,
    t2: f64,
) -> Result<CorrelationResult> {
    let obs = binned.observable();
    let table = factorized_table(basis, state, obs, obs, t1, t2)?;
    let v = correlator_from_table(&table, binned.centers(), binned.centers());
    Ok(CorrelationResult::exact(v, t1, t2, Method::Binned))
}

/// Largest norm that a projection of the state on particle `which` leaks out
/// of the truncated basis, `||P psi||^2 - ||Q_N P psi||^2`, over the outcomes.
/// This is what a projector squared in the truncated basis would lose.
pub fn truncation_leak(
    basis: &OscillatorBasis,
    state: &WaveCoefficients,
    obs: &DiscreteObservable,
    which: Subsystem,
) -> Result<f64> {
    require_plain(state, basis)?;
    let mut worst: f64 = 0.0;
    for p in obs.projectors() {
        check_dim(state, p.matrix())?;
        let exact = one_side_expectation(state, p.matrix(), which)?;
        let squared = p.matrix() * p.matrix();
        let kept = one_side_expectation(state, &squared, which)?;
        worst = worst.max(exact - kept);
    }
    Ok(worst)
}
