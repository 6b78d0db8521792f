use errorfunctions::RealErrorFunctions;
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, SQRT_2};

use crate::error::{domain, Result};
use crate::hilbert::{Interval, OscillatorBasis, WaveCoefficients};

/// Default ready-state width of a pointer.
pub const DEFAULT_SIGMA: f64 = 0.05;
/// Default coupling-window duration.
pub const DEFAULT_WINDOW: f64 = 0.01;
/// Default separation ratio between adjacent outcomes.
pub const DEFAULT_SEPARATION: f64 = 8.0;

/// One-coordinate von Neumann pointer coupled through `W = -g A p_z` for a
/// window of length `t_m`.
///
/// The ready state is the Gaussian `eta(z) ~ exp(-(z - c)^2 / (4 sigma^2))`,
/// so `|eta|^2` has standard deviation `sigma`. Outcome `a` shifts it by
/// `g a t_m`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointerModel {
    pub sigma: f64,
    pub g: f64,
    pub t_m: f64,
    #[serde(default)]
    pub ready_center: f64,
}

impl PointerModel {
    pub fn new(sigma: f64, g: f64, t_m: f64) -> Result<Self> {
        let model = Self { sigma, g, t_m, ready_center: 0.0 };
        model.validate()?;
        Ok(model)
    }

    /// Coupling chosen so adjacent outcomes `gap` apart are displaced by
    /// `separation * sigma`.
    pub fn with_separation(sigma: f64, t_m: f64, gap: f64, separation: f64) -> Result<Self> {
        if !(gap > 0.0 && gap.is_finite()) {
            return domain(format!("eigenvalue gap must be positive, got {gap}"));
        }
        Self::new(sigma, separation * sigma / (t_m * gap), t_m)
    }

    /// `sigma = 0.05`, `t_m = 0.01`, separation 8 for the given gap.
    pub fn default_for_gap(gap: f64) -> Result<Self> {
        Self::with_separation(DEFAULT_SIGMA, DEFAULT_WINDOW, gap, DEFAULT_SEPARATION)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("sigma", self.sigma), ("g", self.g), ("t_m", self.t_m)] {
            if !(v > 0.0 && v.is_finite()) {
                return domain(format!("pointer {name} must be positive and finite, got {v}"));
            }
        }
        if !self.ready_center.is_finite() {
            return domain("pointer ready_center must be finite");
        }
        Ok(())
    }

    /// Displacement per unit eigenvalue, `g t_m`.
    pub fn shift_per_eigenvalue(&self) -> f64 {
        self.g * self.t_m
    }

    /// Pointer offset recorded for outcome `a`.
    pub fn offset(&self, a: f64) -> f64 {
        self.g * a * self.t_m
    }

    /// `s = g t_m gap / sigma`.
    pub fn separation_ratio(&self, gap: f64) -> f64 {
        self.shift_per_eigenvalue() * gap / self.sigma
    }

    /// `exp(-s^2 / 8)`, the overlap of adjacent pointer states.
    pub fn overlap_bound(&self, gap: f64) -> f64 {
        (-self.separation_ratio(gap).powi(2) / 8.0).exp()
    }

    /// Pointer wavefunction `eta(z - offset)`.
    pub fn amplitude(&self, z: f64, offset: f64) -> f64 {
        let u = z - self.ready_center - offset;
        (2.0 * PI * self.sigma * self.sigma).sqrt().sqrt().recip() * (-u * u / (4.0 * self.sigma * self.sigma)).exp()
    }

    /// `int eta(z - o1) eta(z - o2) dz = exp(-d^2 / (8 sigma^2))`.
    pub fn overlap(&self, o1: f64, o2: f64) -> f64 {
        let d = o1 - o2;
        (-d * d / (8.0 * self.sigma * self.sigma)).exp()
    }

    /// `int_region eta(z - o1) eta(z - o2) dz`.
    pub fn region_overlap(&self, o1: f64, o2: f64, region: &Interval) -> f64 {
        let mid = self.ready_center + 0.5 * (o1 + o2);
        let cdf = |z: f64| normal_cdf((z - mid) / self.sigma);
        self.overlap(o1, o2) * (cdf(region.hi) - cdf(region.lo))
    }

    /// Shortness of the window for `state`: `sqrt(2 - 2 |<psi| exp(-i H t_m) |psi>|)`,
    /// the distance between the state and its freely evolved self modulo a
    /// global phase.
    pub fn shortness(&self, basis: &OscillatorBasis, state: &WaveCoefficients) -> Result<f64> {
        state.check_basis(basis)?;
        if !state.is_unprojected() {
            return crate::error::domain("window shortness is defined for states without pending projections");
        }
        let c = state.coeffs();
        let mut amp = num_complex::Complex64::new(0.0, 0.0);
        for j in 0..c.ncols() {
            for i in 0..c.nrows() {
                let w = c[(i, j)].norm_sqr();
                if w > 0.0 {
                    amp += num_complex::Complex64::from_polar(w, -(basis.energy(i) + basis.energy(j)) * self.t_m);
                }
            }
        }
        let overlap = amp.norm() / state.norm_sqr();
        Ok((2.0 - 2.0 * overlap).max(0.0).sqrt())
    }
}

/// Standard normal CDF; exact at infinite arguments.
pub fn normal_cdf(x: f64) -> f64 {
    if x == f64::INFINITY {
        1.0
    } else if x == f64::NEG_INFINITY {
        0.0
    } else {
        0.5 * RealErrorFunctions::erfc(-x / SQRT_2)
    }
}

/// Midpoint partition of the pointer axis around the outcome offsets: each
/// outcome owns the interval between the midpoints to its neighbours, the
/// outer outcomes extend to infinity.
pub fn pointer_regions(device: &PointerModel, eigenvalues: &[f64]) -> Vec<Interval> {
    let centers: Vec<f64> = eigenvalues.iter().map(|a| device.ready_center + device.offset(*a)).collect();
    let k = centers.len();
    (0..k)
        .map(|i| {
            let lo = if i == 0 { f64::NEG_INFINITY } else { 0.5 * (centers[i - 1] + centers[i]) };
            let hi = if i + 1 == k { f64::INFINITY } else { 0.5 * (centers[i] + centers[i + 1]) };
            Interval { lo, hi }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::quadrature::PanelIntegrator;

    fn quad_overlap(p: &PointerModel, o1: f64, o2: f64, lo: f64, hi: f64) -> f64 {
        let mut acc = [0.0];
        PanelIntegrator::default().integrate(lo, hi, &mut acc, &mut |z, out| {
            out[0] = p.amplitude(z, o1) * p.amplitude(z, o2)
        });
        acc[0]
    }

    #[test]
    fn overlap_matches_quadrature() {
        let p = PointerModel::new(0.05, 40.0, 0.01).unwrap();
        // offsets 0 and 8 sigma
        let o = 8.0 * p.sigma;
        let q = quad_overlap(&p, 0.0, o, -2.0, 2.0);
        assert!((q - (-8.0f64).exp()).abs() < 1e-14, "{q}");
        assert!((p.overlap(0.0, o) - q).abs() < 1e-14);
        assert!((p.overlap(0.3, 0.3) - 1.0).abs() == 0.0);
        let mut last = 1.0;
        for k in 1..20 {
            let v = p.overlap(0.0, k as f64 * 0.01);
            assert!(v < last);
            last = v;
        }
        let region = Interval::new(-0.1, 0.17).unwrap();
        let r = p.region_overlap(0.0, o, &region);
        assert!((r - quad_overlap(&p, 0.0, o, -0.1, 0.17)).abs() < 1e-14);
        assert!((quad_overlap(&p, 0.1, 0.1, -2.0, 2.0) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn default_separation() {
        let p = PointerModel::default_for_gap(1.0).unwrap();
        assert!((p.g - 40.0).abs() < 1e-12);
        assert!((p.separation_ratio(1.0) - 8.0).abs() < 1e-12);
        assert!((p.overlap_bound(1.0) - (-8.0f64).exp()).abs() < 1e-18);
        assert!(PointerModel::new(0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn regions_partition_axis() {
        let p = PointerModel::default_for_gap(1.0).unwrap();
        let r = pointer_regions(&p, &[-1.5, -0.5, 0.5, 1.5]);
        assert_eq!(r[0].lo, f64::NEG_INFINITY);
        assert_eq!(r[3].hi, f64::INFINITY);
        assert!((r[1].lo - (-0.4)).abs() < 1e-12 && (r[1].hi - 0.0).abs() < 1e-12);
        // each region keeps all but Phi(-s/2) per side of its own pointer mass
        let own = p.region_overlap(p.offset(-0.5), p.offset(-0.5), &r[1]);
        assert!((1.0 - own - 2.0 * normal_cdf(-4.0)).abs() < 1e-14);
    }

    #[test]
    fn window_is_short_for_default_state() {
        let basis = OscillatorBasis::harmonic(16).unwrap();
        let psi = WaveCoefficients::entangled01(16).unwrap();
        let p = PointerModel::default_for_gap(1.0).unwrap();
        assert!(p.shortness(&basis, &psi).unwrap() < 1e-12);
        let mixed = WaveCoefficients::product(0, 0, 16).unwrap();
        let mut c = mixed.coeffs().clone();
        c[(0, 0)] = num_complex::Complex64::new(0.6, 0.0);
        c[(1, 0)] = num_complex::Complex64::new(0.8, 0.0);
        let s = WaveCoefficients::from_matrix(c, 1e-12).unwrap();
        let v = p.shortness(&basis, &s).unwrap();
        assert!(v > 1e-3 && v < 0.01, "{v}");
    }
}
