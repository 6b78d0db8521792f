use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::quadrature::{gauss_hermite, hermite_functions, PanelIntegrator};
use super::CMatrix;
use crate::error::{domain, Error, Result};

/// A real interval, possibly half-infinite. Membership is `lo <= x < hi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if lo.is_nan() || hi.is_nan() || !(hi > lo) {
            return domain(format!("empty or invalid interval [{lo}, {hi})"));
        }
        if lo == f64::INFINITY || hi == f64::NEG_INFINITY {
            return domain(format!("interval [{lo}, {hi}) has no finite part"));
        }
        Ok(Self { lo, hi })
    }

    pub fn real_line() -> Self {
        Self { lo: f64::NEG_INFINITY, hi: f64::INFINITY }
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x < self.hi
    }

    pub fn intersect(&self, other: &Interval) -> Option<Interval> {
        let lo = self.lo.max(other.lo);
        let hi = self.hi.min(other.hi);
        (hi > lo).then_some(Interval { lo, hi })
    }
}

/// Truncated eigenbasis of the one-dimensional harmonic oscillator, `hbar = 1`.
///
/// States `0..n_max` are kept. The Gauss–Hermite rule of order `quad_order`
/// is stored in physical units: `sum_k weights[k] * f(nodes[k])` integrates
/// `f = phi_m * phi_n * poly` exactly up to the rule's degree.
#[derive(Debug, Clone)]
pub struct OscillatorBasis {
    mass: f64,
    frequency: f64,
    n_max: usize,
    quad_order: usize,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl OscillatorBasis {
    pub fn new(mass: f64, frequency: f64, n_max: usize) -> Result<Self> {
        Self::with_quad_order(mass, frequency, n_max, 2 * n_max + 8)
    }

    /// Unit mass and frequency.
    pub fn harmonic(n_max: usize) -> Result<Self> {
        Self::new(1.0, 1.0, n_max)
    }

    pub fn with_quad_order(mass: f64, frequency: f64, n_max: usize, quad_order: usize) -> Result<Self> {
        if !(mass.is_finite() && mass > 0.0) {
            return domain(format!("mass must be positive and finite, got {mass}"));
        }
        if !(frequency.is_finite() && frequency > 0.0) {
            return domain(format!("frequency must be positive and finite, got {frequency}"));
        }
        if n_max < 2 {
            return domain(format!("n_max must be at least 2, got {n_max}"));
        }
        if quad_order < 2 * n_max {
            return domain(format!("quad_order {quad_order} < 2 * n_max = {}", 2 * n_max));
        }
        let length = 1.0 / (mass * frequency).sqrt();
        let (xi, w) = gauss_hermite(quad_order);
        Ok(Self {
            mass,
            frequency,
            n_max,
            quad_order,
            nodes: xi.iter().map(|x| x * length).collect(),
            weights: w.iter().map(|w| w * length).collect(),
        })
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn frequency(&self) -> f64 {
        self.frequency
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn quad_order(&self) -> usize {
        self.quad_order
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Oscillator length `sqrt(hbar / (m omega))`.
    pub fn length(&self) -> f64 {
        1.0 / (self.mass * self.frequency).sqrt()
    }

    pub fn energy(&self, n: usize) -> f64 {
        self.frequency * (n as f64 + 0.5)
    }

    pub fn energies(&self) -> Vec<f64> {
        (0..self.n_max).map(|n| self.energy(n)).collect()
    }

    /// Same physical system and truncation.
    pub fn compatible(&self, other: &OscillatorBasis) -> bool {
        self.n_max == other.n_max && self.mass == other.mass && self.frequency == other.frequency
    }

    pub(crate) fn check_index(&self, n: usize) -> Result<()> {
        if n >= self.n_max {
            return domain(format!("level {n} outside basis 0..{}", self.n_max));
        }
        Ok(())
    }

    /// `phi_n(x)` by the normalized three-term recurrence.
    pub fn eigenfunction(&self, n: usize, x: f64) -> Result<f64> {
        self.check_index(n)?;
        let mut buf = vec![0.0; n + 1];
        self.eigenfunctions(x, &mut buf);
        Ok(buf[n])
    }

    /// Fills `out[k] = phi_k(x)` for `k < out.len()` (not limited to `n_max`).
    pub fn eigenfunctions(&self, x: f64, out: &mut [f64]) {
        let l = self.length();
        hermite_functions(x / l, out);
        let s = l.powf(-0.5);
        out.iter_mut().for_each(|v| *v *= s);
    }

    /// Matrix of a multiplication operator `f(x)` by Gauss–Hermite quadrature.
    pub fn operator_matrix(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let n = self.n_max;
        let mut m = DMatrix::<f64>::zeros(n, n);
        let mut phi = vec![0.0; n];
        for (&x, &w) in self.nodes.iter().zip(&self.weights) {
            self.eigenfunctions(x, &mut phi);
            let fx = w * f(x);
            for i in 0..n {
                let a = fx * phi[i];
                for j in 0..=i {
                    m[(i, j)] += a * phi[j];
                }
            }
        }
        for i in 0..n {
            for j in 0..i {
                m[(j, i)] = m[(i, j)];
            }
        }
        m
    }

    /// Overlap matrix `<phi_m|phi_n>` evaluated by quadrature.
    pub fn gram_matrix(&self) -> DMatrix<f64> {
        self.operator_matrix(|_| 1.0)
    }

    pub fn position_matrix(&self) -> DMatrix<f64> {
        self.operator_matrix(|x| x)
    }

    /// `<m|x|n>` by Gauss–Hermite quadrature.
    pub fn matrix_element_x(&self, m: usize, n: usize) -> Result<f64> {
        self.check_index(m)?;
        self.check_index(n)?;
        let top = m.max(n) + 1;
        let mut phi = vec![0.0; top];
        let mut acc = 0.0;
        for (&x, &w) in self.nodes.iter().zip(&self.weights) {
            self.eigenfunctions(x, &mut phi);
            acc += w * x * phi[m] * phi[n];
        }
        Ok(acc)
    }

    /// Half-width beyond which every basis function is below `1e-40`.
    pub fn support_radius(&self) -> f64 {
        self.length() * ((2.0 * self.n_max as f64 + 1.0).sqrt() + 10.0)
    }

    /// `M_mn = int_bin phi_m phi_n dx` with adaptive Gauss–Legendre panels.
    pub fn bin_projection_matrix(&self, bin: &Interval) -> Result<CMatrix> {
        Ok(self.bin_matrix_real(bin)?.map(|v| Complex64::new(v, 0.0)))
    }

    pub(crate) fn bin_matrix_real(&self, bin: &Interval) -> Result<DMatrix<f64>> {
        if bin.lo.is_nan() || bin.hi.is_nan() || !(bin.hi > bin.lo) {
            return Err(Error::Domain(format!("degenerate bin [{}, {})", bin.lo, bin.hi)));
        }
        let n = self.n_max;
        let r = self.support_radius();
        let lo = bin.lo.max(-r);
        let hi = bin.hi.min(r);
        let mut packed = vec![0.0; n * (n + 1) / 2];
        if hi > lo {
            let mut phi = vec![0.0; n];
            let integrator = PanelIntegrator::default();
            integrator.integrate(lo, hi, &mut packed, &mut |x, out| {
                self.eigenfunctions(x, &mut phi);
                let mut k = 0;
                for i in 0..n {
                    for j in 0..=i {
                        out[k] = phi[i] * phi[j];
                        k += 1;
                    }
                }
            });
        }
        let mut m = DMatrix::<f64>::zeros(n, n);
        let mut k = 0;
        for i in 0..n {
            for j in 0..=i {
                m[(i, j)] = packed[k];
                m[(j, i)] = packed[k];
                k += 1;
            }
        }
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn ground_state_at_origin() {
        let b = OscillatorBasis::harmonic(8).unwrap();
        // oracle: normalized Gaussian pi^{-1/4} exp(-x^2/2) at 0
        assert!((b.eigenfunction(0, 0.0).unwrap() - PI.powf(-0.25)).abs() < 1e-15);
        assert_eq!(b.eigenfunction(1, 0.0).unwrap(), 0.0);
        assert!(matches!(b.eigenfunction(8, 0.0), Err(Error::Domain(_))));
    }

    #[test]
    fn no_overflow_at_high_levels() {
        let b = OscillatorBasis::harmonic(64).unwrap();
        for &x in &[0.0, 1.3, 5.0, 11.0, 30.0] {
            assert!(b.eigenfunction(63, x).unwrap().is_finite());
        }
        let g = b.gram_matrix();
        assert!((g[(63, 63)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn orthonormal_under_quadrature() {
        let b = OscillatorBasis::harmonic(32).unwrap();
        let g = b.gram_matrix();
        let dev = (&g - DMatrix::<f64>::identity(32, 32)).amax();
        assert!(dev < 1e-12, "{dev}");
        assert!(g[(2, 3)].abs() < 1e-12);
    }

    #[test]
    fn ladder_matrix_elements() {
        let b = OscillatorBasis::harmonic(16).unwrap();
        // oracle: <n-1|x|n> = sqrt(n/2)
        for n in 1..16 {
            let v = b.matrix_element_x(n - 1, n).unwrap();
            assert!((v - (n as f64 / 2.0).sqrt()).abs() < 1e-12);
            assert!((b.matrix_element_x(n, n - 1).unwrap() - v).abs() < 1e-14);
        }
        assert!(b.matrix_element_x(0, 0).unwrap().abs() < 1e-14);
        assert!(b.matrix_element_x(1, 1).unwrap().abs() < 1e-14);
        assert!((b.matrix_element_x(0, 1).unwrap() - 0.5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn scaled_units() {
        // m = 2, omega = 0.5 gives unit length; m = 4, omega = 1 gives length 1/2
        let b = OscillatorBasis::new(4.0, 1.0, 8).unwrap();
        assert!((b.length() - 0.5).abs() < 1e-15);
        assert!((b.matrix_element_x(0, 1).unwrap() - 0.5 * 0.5f64.sqrt()).abs() < 1e-12);
        assert!((b.energy(3) - 3.5).abs() < 1e-15);
        let g = b.gram_matrix();
        assert!((&g - DMatrix::<f64>::identity(8, 8)).amax() < 1e-12);
    }

    #[test]
    fn bin_matrices() {
        let b = OscillatorBasis::harmonic(32).unwrap();
        let full = b.bin_matrix_real(&Interval::real_line()).unwrap();
        assert!((&full - DMatrix::<f64>::identity(32, 32)).amax() < 1e-10);
        let left = b.bin_matrix_real(&Interval::new(f64::NEG_INFINITY, 0.0).unwrap()).unwrap();
        assert!((left[(0, 0)] - 0.5).abs() < 1e-14);
        let edges = [f64::NEG_INFINITY, -1.0, 0.0, 1.5, f64::INFINITY];
        let mut sum = DMatrix::<f64>::zeros(32, 32);
        for w in edges.windows(2) {
            let m = b.bin_matrix_real(&Interval::new(w[0], w[1]).unwrap()).unwrap();
            assert!((&m - m.transpose()).amax() < 1e-12);
            sum += m;
        }
        assert!((&sum - DMatrix::<f64>::identity(32, 32)).amax() < 1e-10);
        assert!(Interval::new(1.0, 1.0).is_err());
        assert!(b.bin_projection_matrix(&Interval { lo: 2.0, hi: 1.0 }).is_err());
    }

    #[test]
    fn invalid_parameters() {
        assert!(OscillatorBasis::harmonic(1).is_err());
        assert!(OscillatorBasis::new(-1.0, 1.0, 4).is_err());
        assert!(OscillatorBasis::with_quad_order(1.0, 1.0, 8, 10).is_err());
    }
}
