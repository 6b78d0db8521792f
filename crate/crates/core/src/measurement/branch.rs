use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::pointer::{pointer_regions, PointerModel};
use crate::error::{domain, Error, Result};
use crate::hilbert::{Interval, OscillatorBasis, Subsystem, WaveCoefficients};
use crate::sqm::DiscreteObservable;

/// Outcome tuple: index of the recorded outcome on each device, if it fired.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Outcome {
    pub a: Option<usize>,
    pub b: Option<usize>,
}

impl Outcome {
    pub const NONE: Outcome = Outcome { a: None, b: None };

    pub fn get(&self, which: Subsystem) -> Option<usize> {
        match which {
            Subsystem::A => self.a,
            Subsystem::B => self.b,
        }
    }

    pub fn with(mut self, which: Subsystem, i: usize) -> Self {
        match which {
            Subsystem::A => self.a = Some(i),
            Subsystem::B => self.b = Some(i),
        }
        self
    }
}

/// One term `psi_label(x, y) eta(z_A - o_A) mu(z_B - o_B)` of the branch sum.
#[derive(Debug, Clone)]
pub struct Branch {
    pub label: Outcome,
    pub system: WaveCoefficients,
    /// Pointer offsets; `None` while the device is in its ready state.
    pub offset_a: Option<f64>,
    pub offset_b: Option<f64>,
}

impl Branch {
    pub fn offset(&self, which: Subsystem) -> Option<f64> {
        match which {
            Subsystem::A => self.offset_a,
            Subsystem::B => self.offset_b,
        }
    }

    pub fn weight(&self) -> f64 {
        self.system.norm_sqr()
    }
}

/// Post-measurement wavefunction as a sum of branches with pointer offsets.
#[derive(Debug, Clone)]
pub struct BranchState {
    branches: Vec<Branch>,
    devices: [PointerModel; 2],
    fired: [bool; 2],
    dropped: usize,
    dropped_weight: f64,
    warnings: Vec<String>,
}

/// Relative weight below which a sub-branch counts as empty and is dropped.
pub const EMPTY_BRANCH: f64 = 1e-15;

/// Separation ratios below this trigger a warning.
pub const MIN_SEPARATION: f64 = 4.0;

impl BranchState {
    /// Both devices ready; a single branch carrying `state`.
    pub fn ready(state: WaveCoefficients, device_a: PointerModel, device_b: PointerModel) -> Result<Self> {
        device_a.validate()?;
        device_b.validate()?;
        Ok(Self {
            branches: vec![Branch { label: Outcome::NONE, system: state, offset_a: None, offset_b: None }],
            devices: [device_a, device_b],
            fired: [false, false],
            dropped: 0,
            dropped_weight: 0.0,
            warnings: Vec::new(),
        })
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    pub fn device(&self, which: Subsystem) -> &PointerModel {
        match which {
            Subsystem::A => &self.devices[0],
            Subsystem::B => &self.devices[1],
        }
    }

    pub fn fired(&self, which: Subsystem) -> bool {
        self.fired[slot(which)]
    }

    /// Number of zero-weight sub-branches dropped so far.
    pub fn dropped(&self) -> usize {
        self.dropped
    }

    pub fn dropped_weight(&self) -> f64 {
        self.dropped_weight
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// Common clock of the branches.
    pub fn time(&self) -> f64 {
        self.branches[0].system.clock()
    }

    pub fn total_weight(&self) -> f64 {
        self.branches.iter().map(Branch::weight).sum()
    }

    /// Free evolution of every branch until `t`; pointers stay where they are.
    pub fn evolve_to(&self, basis: &OscillatorBasis, t: f64) -> Result<Self> {
        let mut out = self.clone();
        for b in &mut out.branches {
            b.system = b.system.evolve_to(basis, t)?;
        }
        Ok(out)
    }

    pub fn branch(&self, label: &Outcome) -> Option<&Branch> {
        self.branches.iter().find(|b| b.label == *label)
    }

    /// The same state reduced to a single branch.
    pub(crate) fn only(&self, branch: Branch) -> Self {
        self.with_branches(vec![branch])
    }

    fn with_branches(&self, branches: Vec<Branch>) -> Self {
        Self { branches, ..self.clone() }
    }
}

fn slot(which: Subsystem) -> usize {
    match which {
        Subsystem::A => 0,
        Subsystem::B => 1,
    }
}

/// Couples one device to its particle for a window: every branch `psi`
/// splits into `(P_a psi, offset g a t_m)` for each outcome `a` with nonzero
/// weight.
pub fn apply_measurement(
    state: &BranchState,
    device: &PointerModel,
    observable: &DiscreteObservable,
    which: Subsystem,
) -> Result<BranchState> {
    if state.fired(which) {
        return Err(Error::Protocol(format!("device on particle {which:?} already fired")));
    }
    device.validate()?;
    let mut out = state.with_branches(Vec::new());
    out.devices[slot(which)] = *device;
    out.fired[slot(which)] = true;
    if observable.len() > 1 {
        let s = device.separation_ratio(observable.min_gap());
        if s < MIN_SEPARATION {
            out.warnings.push(format!(
                "separation ratio {s:.3} on particle {which:?} is below {MIN_SEPARATION}; branches overlap"
            ));
        }
    }
    for branch in &state.branches {
        let parent = branch.weight();
        for (i, (a, p)) in observable.eigenvalues().iter().zip(observable.projectors()).enumerate() {
            let system = branch.system.project(which, p)?;
            let w = system.norm_sqr();
            if !(w > EMPTY_BRANCH * parent) {
                out.dropped += 1;
                out.dropped_weight += w.max(0.0);
                continue;
            }
            let mut sub = Branch { label: branch.label.with(which, i), system, ..branch.clone() };
            match which {
                Subsystem::A => sub.offset_a = Some(device.offset(*a)),
                Subsystem::B => sub.offset_b = Some(device.offset(*a)),
            }
            out.branches.push(sub);
        }
    }
    if out.branches.is_empty() {
        return domain("measurement left no branch with nonzero weight");
    }
    Ok(out)
}

/// Pairwise pointer-factor overlaps of a branch state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverlapReport {
    /// Largest overlap between pointer factors of distinct labels.
    pub max_overlap: f64,
    pub pairs: usize,
}

fn pointer_overlap(state: &BranchState, which: Subsystem, b1: &Branch, b2: &Branch) -> f64 {
    let dev = state.device(which);
    match (b1.offset(which), b2.offset(which)) {
        (Some(o1), Some(o2)) => dev.overlap(o1, o2),
        (None, None) => 1.0,
        (Some(o), None) | (None, Some(o)) => dev.overlap(o, 0.0),
    }
}

/// Exact Gaussian overlap of the pointer factors, maximized over pairs of
/// branches with distinct labels. This is the `epsilon` that certifies every
/// approximate equality downstream.
pub fn branch_overlap_report(state: &BranchState) -> OverlapReport {
    let mut max_overlap: f64 = 0.0;
    let mut pairs = 0;
    for (i, b1) in state.branches.iter().enumerate() {
        for b2 in &state.branches[i + 1..] {
            if b1.label == b2.label {
                continue;
            }
            pairs += 1;
            let v = pointer_overlap(state, Subsystem::A, b1, b2) * pointer_overlap(state, Subsystem::B, b1, b2);
            max_overlap = max_overlap.max(v);
        }
    }
    OverlapReport { max_overlap, pairs }
}

/// Region of pointer space read as one outcome tuple.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutcomeRegion {
    pub label: Outcome,
    pub za: Interval,
    pub zb: Interval,
}

impl OutcomeRegion {
    pub fn contains(&self, za: f64, zb: f64) -> bool {
        self.za.contains(za) && self.zb.contains(zb)
    }
}

/// Product regions for every combination of outcomes of the fired devices.
pub fn outcome_regions(
    state: &BranchState,
    obs_a: Option<&DiscreteObservable>,
    obs_b: Option<&DiscreteObservable>,
) -> Vec<OutcomeRegion> {
    let side = |which: Subsystem, obs: Option<&DiscreteObservable>| -> Vec<(Option<usize>, Interval)> {
        match obs {
            Some(o) if state.fired(which) => pointer_regions(state.device(which), o.eigenvalues())
                .into_iter()
                .enumerate()
                .map(|(i, r)| (Some(i), r))
                .collect(),
            _ => vec![(None, Interval::real_line())],
        }
    };
    let mut out = Vec::new();
    for (a, za) in side(Subsystem::A, obs_a) {
        for (b, zb) in side(Subsystem::B, obs_b) {
            out.push(OutcomeRegion { label: Outcome { a, b }, za, zb });
        }
    }
    out
}

/// Born-rule probabilities of a set of pointer regions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BornReport {
    pub probabilities: BTreeMap<Outcome, f64>,
    /// Branch-diagonal part of each probability.
    pub diagonal: BTreeMap<Outcome, f64>,
    /// Interference (cross-branch) part of each probability.
    pub cross: BTreeMap<Outcome, f64>,
    pub max_cross: f64,
}

fn region_factor(state: &BranchState, which: Subsystem, b1: &Branch, b2: &Branch, region: &Interval) -> f64 {
    let dev = state.device(which);
    let o1 = b1.offset(which).unwrap_or(0.0);
    let o2 = b2.offset(which).unwrap_or(0.0);
    dev.region_overlap(o1, o2, region)
}

/// `P(R) = int_R |Psi'|^2`, integrated over the system coordinates exactly
/// (through branch overlaps) and over the pointer coordinates in closed form.
pub fn born_probabilities(state: &BranchState, regions: &[OutcomeRegion]) -> Result<BornReport> {
    for (i, r1) in regions.iter().enumerate() {
        for r2 in &regions[i + 1..] {
            if r1.za.intersect(&r2.za).is_some() && r1.zb.intersect(&r2.zb).is_some() {
                return domain(format!("outcome regions for {:?} and {:?} overlap", r1.label, r2.label));
            }
        }
    }
    let n = state.branches.len();
    let mut inner = vec![vec![num_complex::Complex64::new(0.0, 0.0); n]; n];
    for i in 0..n {
        for j in i..n {
            let v = state.branches[i].system.inner(&state.branches[j].system)?;
            inner[i][j] = v;
            inner[j][i] = v.conj();
        }
    }
    let mut report = BornReport {
        probabilities: BTreeMap::new(),
        diagonal: BTreeMap::new(),
        cross: BTreeMap::new(),
        max_cross: 0.0,
    };
    for region in regions {
        let (mut diag, mut cross) = (0.0, 0.0);
        for i in 0..n {
            for j in 0..n {
                if inner[i][j].norm() == 0.0 {
                    continue;
                }
                let (b1, b2) = (&state.branches[i], &state.branches[j]);
                let f = region_factor(state, Subsystem::A, b1, b2, &region.za)
                    * region_factor(state, Subsystem::B, b1, b2, &region.zb);
                let v = inner[i][j].re * f;
                if i == j {
                    diag += v;
                } else {
                    cross += v;
                }
            }
        }
        report.probabilities.insert(region.label, diag + cross);
        report.diagonal.insert(region.label, diag);
        report.cross.insert(region.label, cross);
        report.max_cross = report.max_cross.max(cross.abs());
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sqm::BinnedObservable;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn fixture() -> (OscillatorBasis, BinnedObservable, PointerModel) {
        let basis = OscillatorBasis::harmonic(32).unwrap();
        let binned = BinnedObservable::uniform(&basis, -4.0, 4.0, 8).unwrap();
        let dev = PointerModel::default_for_gap(1.0).unwrap();
        (basis, binned, dev)
    }

    #[test]
    fn two_bin_split_of_entangled_state() {
        let (basis, _, dev) = fixture();
        let split = BinnedObservable::from_edges(&basis, vec![-1.0, 0.0, 1.0]).unwrap();
        let psi = WaveCoefficients::entangled01(32).unwrap();
        let s = BranchState::ready(psi, dev, dev).unwrap();
        let m = apply_measurement(&s, &dev, split.observable(), Subsystem::A).unwrap();
        assert_eq!(m.branches().len(), 2);
        for b in m.branches() {
            assert!((b.weight() - 0.5).abs() < 1e-14);
        }
        assert!(matches!(
            apply_measurement(&m, &dev, split.observable(), Subsystem::A),
            Err(Error::Protocol(_))
        ));
        let regions = outcome_regions(&m, Some(split.observable()), None);
        let born = born_probabilities(&m, &regions).unwrap();
        for p in born.probabilities.values() {
            assert!((p - 0.5).abs() < m.device(Subsystem::A).overlap_bound(1.0));
        }
    }

    #[test]
    fn eigenstate_gives_single_branch() {
        let basis = OscillatorBasis::harmonic(6).unwrap();
        let energy = DiscreteObservable::energy(&basis).unwrap();
        let dev = PointerModel::default_for_gap(1.0).unwrap();
        let psi = WaveCoefficients::product(2, 0, 6).unwrap();
        let s = BranchState::ready(psi, dev, dev).unwrap();
        let m = apply_measurement(&s, &dev, &energy, Subsystem::A).unwrap();
        assert_eq!(m.branches().len(), 1);
        assert_eq!(m.branches()[0].label.a, Some(2));
        assert!((m.branches()[0].offset_a.unwrap() - dev.offset(2.5)).abs() < 1e-15);
        assert!((m.total_weight() - 1.0).abs() < 1e-14);
        assert_eq!(m.dropped(), 5);
    }

    #[test]
    fn born_rule_random_states() {
        let (_basis, binned, dev) = fixture();
        let obs = binned.observable();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..5 {
            let psi = WaveCoefficients::random(32, 5, &mut rng).unwrap();
            let s = BranchState::ready(psi.clone(), dev, dev).unwrap();
            let m = apply_measurement(&s, &dev, obs, Subsystem::A).unwrap();
            assert!((m.total_weight() + m.dropped_weight() - 1.0).abs() < 1e-12);
            let eps = branch_overlap_report(&m).max_overlap;
            assert!((eps - (-8.0f64).exp()).abs() < 1e-12);
            let born = born_probabilities(&m, &outcome_regions(&m, Some(obs), None)).unwrap();
            assert!(born.max_cross <= eps);
            let total: f64 = born.probabilities.values().sum();
            assert!((total - 1.0).abs() < 1e-12);
            for (i, p) in obs.projectors().iter().enumerate() {
                let direct = psi.project(Subsystem::A, p).unwrap().norm_sqr();
                let got = born.probabilities.get(&Outcome { a: Some(i), b: None }).copied().unwrap_or(0.0);
                assert!((got - direct).abs() <= eps + 1e-8, "{got} vs {direct}");
            }
        }
    }

    #[test]
    fn overlapping_regions_rejected() {
        let (_, _, dev) = fixture();
        let psi = WaveCoefficients::entangled01(32).unwrap();
        let s = BranchState::ready(psi, dev, dev).unwrap();
        let r = OutcomeRegion { label: Outcome::NONE, za: Interval::real_line(), zb: Interval::real_line() };
        assert!(born_probabilities(&s, &[r, r]).is_err());
    }

    #[test]
    fn weak_coupling_warns() {
        let (_, binned, _) = fixture();
        let weak = PointerModel::with_separation(0.05, 0.01, 1.0, 2.0).unwrap();
        let psi = WaveCoefficients::entangled01(32).unwrap();
        let s = BranchState::ready(psi, weak, weak).unwrap();
        let m = apply_measurement(&s, &weak, binned.observable(), Subsystem::B).unwrap();
        assert_eq!(m.warnings().len(), 1);
        assert!((branch_overlap_report(&m).max_overlap - (-0.5f64).exp()).abs() < 1e-12);
    }
}
