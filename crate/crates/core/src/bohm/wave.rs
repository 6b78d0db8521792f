use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::hilbert::{contract, side_functions, CMatrix, OscillatorBasis, Side, Subsystem, WaveCoefficients};
use crate::measurement::{BranchState, PointerModel};

/// Default density below which a configuration counts as sitting on a node.
pub const DEFAULT_NODE_FLOOR: f64 = 1e-12;

/// Pointer factors smaller than this fraction of the largest are skipped.
pub const POINTER_CUTOFF: f64 = 1e-14;

/// Configuration `q = (x, y, z_A, z_B)`: both particles and both pointers.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Configuration {
    pub x: f64,
    pub y: f64,
    pub za: f64,
    pub zb: f64,
}

impl Configuration {
    pub fn new(x: f64, y: f64, za: f64, zb: f64) -> Self {
        Self { x, y, za, zb }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.za.is_finite() && self.zb.is_finite()
    }
}

/// Value of the pilot wave and its particle-coordinate derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaveValue {
    pub psi: Complex64,
    pub dx: Complex64,
    pub dy: Complex64,
}

impl WaveValue {
    pub fn density(&self) -> f64 {
        self.psi.norm_sqr()
    }
}

/// Velocity of a configuration. Pointer components vanish outside
/// measurement windows because the free pointer Hamiltonian is zero.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Velocity {
    pub x: f64,
    pub y: f64,
    pub za: f64,
    pub zb: f64,
}

#[derive(Debug, Clone)]
struct SideRep {
    side: Side,
    clock: f64,
    levels: usize,
}

#[derive(Debug, Clone)]
struct Term {
    coeffs: CMatrix,
    side_a: usize,
    side_b: usize,
    offset_a: f64,
    offset_b: f64,
}

/// The guiding wave `Psi_t(q) = sum_branches psi(x, y, t) eta(z_A) mu(z_B)`,
/// evaluable pointwise with exact spatial derivatives.
#[derive(Debug, Clone)]
pub struct PilotWave {
    basis: OscillatorBasis,
    devices: [PointerModel; 2],
    sides_a: Vec<SideRep>,
    sides_b: Vec<SideRep>,
    terms: Vec<Term>,
    node_floor: f64,
    pointer_cutoff: f64,
    bare: Option<WaveCoefficients>,
    /// Set when every term is unprojected on both sides at a common clock:
    /// `(clock, reference energy)`. Such waves are evolved entry by entry
    /// with phases relative to the reference energy, so the global phase
    /// never enters the velocity.
    free: Option<(f64, f64)>,
}

fn same_side(a: &SideRep, side: &Side, clock: f64) -> bool {
    match (&a.side, side) {
        (Side::Free, Side::Free) => a.clock == clock,
        (Side::Projected { projector: p, time: s }, Side::Projected { projector: q, time: u }) => {
            p.family() == q.family() && p.index() == q.index() && s == u
        }
        _ => false,
    }
}

fn intern(list: &mut Vec<SideRep>, side: &Side, clock: f64, levels: usize) -> usize {
    if let Some(i) = list.iter().position(|r| same_side(r, side, clock)) {
        list[i].levels = list[i].levels.max(levels);
        return i;
    }
    list.push(SideRep { side: side.clone(), clock, levels });
    list.len() - 1
}

impl PilotWave {
    /// Unmeasured wave with both pointers in their ready states.
    pub fn bare(basis: &OscillatorBasis, state: &WaveCoefficients, devices: [PointerModel; 2]) -> Result<Self> {
        let branches = BranchState::ready(state.clone(), devices[0], devices[1])?;
        let mut wave = Self::from_branches(basis, &branches)?;
        wave.bare = Some(state.clone());
        Ok(wave)
    }

    /// Wave built from a branch sum.
    pub fn from_branches(basis: &OscillatorBasis, state: &BranchState) -> Result<Self> {
        let mut sides_a = Vec::new();
        let mut sides_b = Vec::new();
        let mut terms = Vec::new();
        for b in state.branches() {
            let s = &b.system;
            s.check_basis(basis)?;
            for which in [Subsystem::A, Subsystem::B] {
                if let Side::Projected { projector, .. } = s.side(which) {
                    if projector.region().is_none() {
                        return domain("pilot waves need position-region projectors");
                    }
                }
            }
            let la = s.active_levels(Subsystem::A);
            let lb = s.active_levels(Subsystem::B);
            let ia = intern(&mut sides_a, s.side(Subsystem::A), s.clock(), la);
            let ib = intern(&mut sides_b, s.side(Subsystem::B), s.clock(), lb);
            terms.push(Term {
                coeffs: s.coeffs().clone(),
                side_a: ia,
                side_b: ib,
                offset_a: b.offset_a.unwrap_or(0.0),
                offset_b: b.offset_b.unwrap_or(0.0),
            });
        }
        let all_free = sides_a.len() == 1
            && sides_b.len() == 1
            && matches!(sides_a[0].side, Side::Free)
            && matches!(sides_b[0].side, Side::Free);
        let free = all_free.then(|| {
            let (mut best, mut eref) = (-1.0, 0.0);
            for term in &terms {
                for n in 0..term.coeffs.ncols() {
                    for m in 0..term.coeffs.nrows() {
                        let w = term.coeffs[(m, n)].norm_sqr();
                        if w > best {
                            best = w;
                            eref = basis.energy(m) + basis.energy(n);
                        }
                    }
                }
            }
            (sides_a[0].clock, eref)
        });
        Ok(Self {
            basis: basis.clone(),
            devices: [*state.device(Subsystem::A), *state.device(Subsystem::B)],
            sides_a,
            sides_b,
            terms,
            node_floor: DEFAULT_NODE_FLOOR,
            pointer_cutoff: POINTER_CUTOFF,
            bare: None,
            free,
        })
    }

    pub fn with_node_floor(mut self, floor: f64) -> Self {
        self.node_floor = floor;
        self
    }

    /// Skips branches whose pointer factor is below `cutoff` times the
    /// largest one at the evaluation point.
    pub fn with_pointer_cutoff(mut self, cutoff: f64) -> Self {
        self.pointer_cutoff = cutoff;
        self
    }

    pub fn pointer_cutoff(&self) -> f64 {
        self.pointer_cutoff
    }

    pub fn node_floor(&self) -> f64 {
        self.node_floor
    }

    pub fn basis(&self) -> &OscillatorBasis {
        &self.basis
    }

    pub fn device(&self, which: Subsystem) -> &PointerModel {
        match which {
            Subsystem::A => &self.devices[0],
            Subsystem::B => &self.devices[1],
        }
    }

    /// The system state if this wave has no branches.
    pub fn bare_state(&self) -> Option<&WaveCoefficients> {
        self.bare.as_ref()
    }

    pub fn term_count(&self) -> usize {
        self.terms.len()
    }

    /// `Psi_t(q)` with `d/dx` and `d/dy`.
    pub fn evaluate(&self, q: &Configuration, t: f64) -> Result<WaveValue> {
        let (w, phase) = self.evaluate_relative(q, t)?;
        Ok(WaveValue { psi: w.psi * phase, dx: w.dx * phase, dy: w.dy * phase })
    }

    /// `Psi_t(q)` up to a global phase factor, which is returned separately.
    fn evaluate_relative(&self, q: &Configuration, t: f64) -> Result<(WaveValue, Complex64)> {
        let Some((clock, eref)) = self.free else {
            return Ok((self.evaluate_branches(q, t)?, Complex64::new(1.0, 0.0)));
        };
        let (ra, rb) = (&self.sides_a[0], &self.sides_b[0]);
        let zero = Complex64::new(0.0, 0.0);
        const STACK: usize = 16;
        let out = if ra.levels <= STACK && rb.levels <= STACK {
            let mut buf = [zero; 4 * STACK];
            let (va, rest) = buf.split_at_mut(STACK);
            let (dva, rest) = rest.split_at_mut(STACK);
            let (vb, dvb) = rest.split_at_mut(STACK);
            let (va, dva) = (&mut va[..ra.levels], &mut dva[..ra.levels]);
            self.free_sum(q, t, clock, eref, va, dva, &mut vb[..rb.levels], &mut dvb[..rb.levels])?
        } else {
            let (mut va, mut dva) = (vec![zero; ra.levels], vec![zero; ra.levels]);
            let (mut vb, mut dvb) = (vec![zero; rb.levels], vec![zero; rb.levels]);
            self.free_sum(q, t, clock, eref, &mut va, &mut dva, &mut vb, &mut dvb)?
        };
        Ok((out, Complex64::from_polar(1.0, -eref * (t - clock))))
    }

    /// Branch sum of an unprojected wave, each coefficient carrying its own
    /// relative phase `exp(-i (E_m + E_n - E_ref) (t - clock))`.
    #[allow(clippy::too_many_arguments)]
    fn free_sum(
        &self,
        q: &Configuration,
        t: f64,
        clock: f64,
        eref: f64,
        va: &mut [Complex64],
        dva: &mut [Complex64],
        vb: &mut [Complex64],
        dvb: &mut [Complex64],
    ) -> Result<WaveValue> {
        let [da, db] = &self.devices;
        let zero = Complex64::new(0.0, 0.0);
        side_functions(&self.basis, &Side::Free, clock, clock, q.x, va, dva)?;
        side_functions(&self.basis, &Side::Free, clock, clock, q.y, vb, dvb)?;
        let tau = t - clock;
        let mut out = WaveValue { psi: zero, dx: zero, dy: zero };
        for term in &self.terms {
            let f = da.amplitude(q.za, term.offset_a) * db.amplitude(q.zb, term.offset_b);
            if f == 0.0 {
                continue;
            }
            let (mut psi, mut dx, mut dy) = (zero, zero, zero);
            for m in 0..va.len() {
                let (mut u, mut ud) = (zero, zero);
                for n in 0..vb.len() {
                    let c = term.coeffs[(m, n)];
                    if c == zero {
                        continue;
                    }
                    let e = self.basis.energy(m) + self.basis.energy(n) - eref;
                    let c = c * Complex64::from_polar(1.0, -e * tau);
                    u += c * vb[n];
                    ud += c * dvb[n];
                }
                psi += va[m] * u;
                dx += dva[m] * u;
                dy += va[m] * ud;
            }
            out.psi += psi * f;
            out.dx += dx * f;
            out.dy += dy * f;
        }
        Ok(out)
    }

    fn evaluate_branches(&self, q: &Configuration, t: f64) -> Result<WaveValue> {
        let [da, db] = &self.devices;
        let factors: Vec<f64> = self
            .terms
            .iter()
            .map(|term| da.amplitude(q.za, term.offset_a) * db.amplitude(q.zb, term.offset_b))
            .collect();
        let top = factors.iter().cloned().fold(0.0, f64::max);
        let zero = Complex64::new(0.0, 0.0);
        let mut out = WaveValue { psi: zero, dx: zero, dy: zero };
        if !(top > 0.0) {
            return Ok(out);
        }
        let cut = top * self.pointer_cutoff;
        let mut cache_a: Vec<Option<(Vec<Complex64>, Vec<Complex64>)>> = vec![None; self.sides_a.len()];
        let mut cache_b: Vec<Option<(Vec<Complex64>, Vec<Complex64>)>> = vec![None; self.sides_b.len()];
        for (term, &f) in self.terms.iter().zip(&factors) {
            if f < cut {
                continue;
            }
            let fill = |rep: &SideRep, x: f64| -> Result<(Vec<Complex64>, Vec<Complex64>)> {
                let mut v = vec![zero; rep.levels];
                let mut d = vec![zero; rep.levels];
                side_functions(&self.basis, &rep.side, rep.clock, t, x, &mut v, &mut d)?;
                Ok((v, d))
            };
            if cache_a[term.side_a].is_none() {
                cache_a[term.side_a] = Some(fill(&self.sides_a[term.side_a], q.x)?);
            }
            if cache_b[term.side_b].is_none() {
                cache_b[term.side_b] = Some(fill(&self.sides_b[term.side_b], q.y)?);
            }
            let (va, dva) = cache_a[term.side_a].as_ref().expect("filled above");
            let (vb, dvb) = cache_b[term.side_b].as_ref().expect("filled above");
            let [psi, dx, dy] = contract(&term.coeffs, va, dva, vb, dvb);
            out.psi += psi * f;
            out.dx += dx * f;
            out.dy += dy * f;
        }
        Ok(out)
    }

    pub fn density(&self, q: &Configuration, t: f64) -> Result<f64> {
        Ok(self.evaluate(q, t)?.density())
    }

    /// Guiding-equation velocity `Im(Psi^* grad Psi) / (m |Psi|^2)`.
    pub fn velocity(&self, q: &Configuration, t: f64) -> Result<Velocity> {
        let (w, _) = self.evaluate_relative(q, t)?;
        let rho = w.density();
        if !(rho >= self.node_floor) {
            return Err(Error::Node { t, density: rho });
        }
        let m = self.basis.mass();
        Ok(Velocity {
            x: (w.psi.conj() * w.dx).im / (m * rho),
            y: (w.psi.conj() * w.dy).im / (m * rho),
            za: 0.0,
            zb: 0.0,
        })
    }

    /// Probability current `(j_x, j_y) = Im(Psi^* grad Psi) / m`.
    pub fn current(&self, q: &Configuration, t: f64) -> Result<(f64, f64)> {
        let (w, _) = self.evaluate_relative(q, t)?;
        let m = self.basis.mass();
        Ok(((w.psi.conj() * w.dx).im / m, (w.psi.conj() * w.dy).im / m))
    }
}

/// Pointwise `Psi_t(x, y)` of a bare system state with ready pointers factored
/// out.
pub fn wave_eval(basis: &OscillatorBasis, state: &WaveCoefficients, x: f64, y: f64) -> Result<Complex64> {
    state.eval(basis, x, y)
}

/// Residual of the continuity equation `d rho/dt + div j` at `q`, by central
/// differences of step `h` in time and both particle coordinates.
pub fn continuity_residual(wave: &PilotWave, q: &Configuration, t: f64, h: f64) -> Result<f64> {
    let rho = |c: &Configuration, s: f64| wave.density(c, s);
    let shift = |dx: f64, dy: f64| Configuration { x: q.x + dx, y: q.y + dy, ..*q };
    let drho = (rho(q, t + h)? - rho(q, t - h)?) / (2.0 * h);
    let (jxp, _) = wave.current(&shift(h, 0.0), t)?;
    let (jxm, _) = wave.current(&shift(-h, 0.0), t)?;
    let (_, jyp) = wave.current(&shift(0.0, h), t)?;
    let (_, jym) = wave.current(&shift(0.0, -h), t)?;
    Ok(drho + (jxp - jxm) / (2.0 * h) + (jyp - jym) / (2.0 * h))
}
