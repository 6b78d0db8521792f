//! Closed-form free evolution of bin-restricted eigenfunctions.
//!
//! For a bin `[l, r]` the function `chi_[l,r] * phi_m` is not a finite
//! combination of eigenfunctions, so evolving it in the truncated basis would
//! smear its edges. Instead this module evaluates
//! `f_m(xi, tau) = [exp(-i H tau) (chi_[l,r] phi_m)](xi)` exactly, in
//! dimensionless units (`H = (p^2 + xi^2) / 2`), together with its spatial
//! derivative.
//!
//! `f_0` is a pair of Faddeeva-function boundary terms; higher levels follow
//! from the ladder recurrence of the oscillator with an inhomogeneous term
//! carrying the Mehler kernel at the two bin edges. Times are reduced modulo
//! `pi` with `exp(-i H pi) = exp(-i pi / 2) * parity`.

use errorfunctions::ComplexErrorFunctions;
use num_complex::Complex64;
use std::f64::consts::{FRAC_1_SQRT_2, PI};

use super::basis::{Interval, OscillatorBasis};
use super::quadrature::{hermite_functions, hermite_functions_with_derivative};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Fills `vals[m] = f_m(xi, tau)` and, if requested, `ders[m] = d f_m / d xi`
/// for the dimensionless bin `[lo, hi)` (either edge may be infinite).
pub fn evolve_restricted(
    lo: f64,
    hi: f64,
    xi: f64,
    tau: f64,
    vals: &mut [Complex64],
    ders: Option<&mut [Complex64]>,
) {
    let levels = vals.len();
    if lo == f64::NEG_INFINITY && hi == f64::INFINITY {
        evolve_full_line(xi, tau, vals, ders);
        return;
    }
    let k = (tau / PI).floor();
    let reduced = tau - k * PI;
    let odd = (k as i64).rem_euclid(2) == 1;
    let x = if odd { -xi } else { xi };
    let quarter = Complex64::from_polar(1.0, -0.5 * PI * k.rem_euclid(4.0));

    let mut f = vec![Complex64::new(0.0, 0.0); levels + 1];
    let mut d = vec![Complex64::new(0.0, 0.0); levels];
    if reduced == 0.0 {
        restricted_at_zero(lo, hi, x, &mut f, &mut d);
    } else {
        restricted_reduced(lo, hi, x, reduced, &mut f, &mut d);
    }
    for m in 0..levels {
        vals[m] = quarter * f[m];
    }
    if let Some(ders) = ders {
        let sign = if odd { -1.0 } else { 1.0 };
        for m in 0..levels.min(ders.len()) {
            ders[m] = quarter * d[m] * sign;
        }
    }
}

fn evolve_full_line(xi: f64, tau: f64, vals: &mut [Complex64], ders: Option<&mut [Complex64]>) {
    let levels = vals.len();
    let mut phi = vec![0.0; levels + 1];
    let mut dphi = vec![0.0; levels];
    hermite_functions_with_derivative(xi, &mut phi, &mut dphi);
    let phases: Vec<Complex64> =
        (0..levels).map(|m| Complex64::from_polar(1.0, -tau * (m as f64 + 0.5))).collect();
    for m in 0..levels {
        vals[m] = phases[m] * phi[m];
    }
    if let Some(ders) = ders {
        for m in 0..levels.min(ders.len()) {
            ders[m] = phases[m] * dphi[m];
        }
    }
}

fn restricted_at_zero(lo: f64, hi: f64, x: f64, f: &mut [Complex64], d: &mut [Complex64]) {
    let inside = x >= lo && x < hi;
    let mut phi = vec![0.0; f.len()];
    let mut dphi = vec![0.0; d.len()];
    hermite_functions_with_derivative(x, &mut phi, &mut dphi);
    for (m, v) in f.iter_mut().enumerate() {
        *v = Complex64::new(if inside { phi[m] } else { 0.0 }, 0.0);
    }
    for (m, v) in d.iter_mut().enumerate() {
        *v = Complex64::new(if inside { dphi[m] } else { 0.0 }, 0.0);
    }
}

/// Boundary data of one bin edge at reduced time `0 < tau < pi`.
struct Edge {
    /// Faddeeva boundary term for the ground state.
    big_phi: Complex64,
    /// Mehler kernel `K(xi, e, tau)`.
    kernel: Complex64,
}

fn edge_terms(e: f64, x: f64, tau: f64, phi0_x: f64) -> Edge {
    if e == f64::NEG_INFINITY {
        return Edge { big_phi: Complex64::new(2.0 * phi0_x, 0.0), kernel: Complex64::new(0.0, 0.0) };
    }
    if e == f64::INFINITY {
        return Edge { big_phi: Complex64::new(0.0, 0.0), kernel: Complex64::new(0.0, 0.0) };
    }
    let (sn, cs) = tau.sin_cos();
    let rot = Complex64::from_polar(1.0, -tau);
    let s = Complex64::from_polar(1.0 / (2.0 * sn).sqrt(), 0.5 * tau - 0.25 * PI);
    let z = s * (e - x * rot);
    let theta = ((e * e + x * x) * cs - 2.0 * e * x) / (2.0 * sn);
    let phase = Complex64::from_polar(1.0, theta);
    let big_e = PI.powf(-0.25) * (-0.5 * e * e).exp() * phase;
    let big_phi = if z.re >= 0.0 {
        big_e * (I * z).w()
    } else {
        2.0 * phi0_x - big_e * (-I * z).w()
    };
    let kernel = Complex64::from_polar((2.0 * PI * sn).powf(-0.5), theta - 0.25 * PI);
    Edge { big_phi, kernel }
}

fn restricted_reduced(lo: f64, hi: f64, x: f64, tau: f64, f: &mut [Complex64], d: &mut [Complex64]) {
    let n = f.len();
    let mut phi_x = [0.0];
    hermite_functions(x, &mut phi_x);
    let left = edge_terms(lo, x, tau, phi_x[0]);
    let right = edge_terms(hi, x, tau, phi_x[0]);

    let mut phi_lo = vec![0.0; n];
    let mut phi_hi = vec![0.0; n];
    if lo.is_finite() {
        hermite_functions(lo, &mut phi_lo);
    }
    if hi.is_finite() {
        hermite_functions(hi, &mut phi_hi);
    }
    let boundary: Vec<Complex64> =
        (0..n).map(|m| phi_lo[m] * left.kernel - phi_hi[m] * right.kernel).collect();

    let sn = tau.sin();
    let rot = Complex64::from_polar(1.0, -tau);
    let rot2 = rot * rot;
    f[0] = Complex64::from_polar(0.5, -0.5 * tau) * (left.big_phi - right.big_phi);
    for m in 0..n - 1 {
        let mf = m as f64;
        let prev = if m > 0 { f[m - 1] } else { Complex64::new(0.0, 0.0) };
        let term = rot * FRAC_1_SQRT_2 * x * f[m] - 0.5 * mf.sqrt() * rot2 * prev
            + I * sn * rot * boundary[m] * FRAC_1_SQRT_2;
        f[m + 1] = term * (2.0 / (mf + 1.0).sqrt());
    }
    let cs = tau.cos();
    let conj_rot = rot.conj();
    for m in 0..d.len() {
        let mf = m as f64;
        let lower = if m > 0 { (mf / 2.0).sqrt() * rot * f[m - 1] } else { Complex64::new(0.0, 0.0) };
        d[m] = lower - ((mf + 1.0) / 2.0).sqrt() * conj_rot * f[m + 1] + cs * boundary[m];
    }
}

/// Physical-unit wrapper: `[exp(-i H t) (chi_bin phi_m)](x)` for `m < vals.len()`.
pub fn evolve_bin_functions(basis: &OscillatorBasis, bin: &Interval, x: f64, t: f64, vals: &mut [Complex64]) {
    let l = basis.length();
    evolve_restricted(bin.lo / l, bin.hi / l, x / l, basis.frequency() * t, vals, None);
    let scale = l.powf(-0.5);
    vals.iter_mut().for_each(|v| *v *= scale);
}

/// Values and derivatives in a single pass (physical units).
pub fn evolve_bin_functions_with_derivative(
    basis: &OscillatorBasis,
    bin: &Interval,
    x: f64,
    t: f64,
    vals: &mut [Complex64],
    ders: &mut [Complex64],
) {
    let l = basis.length();
    let tau = basis.frequency() * t;
    let scale = l.powf(-0.5);
    evolve_restricted(bin.lo / l, bin.hi / l, x / l, tau, vals, Some(ders));
    vals.iter_mut().for_each(|v| *v *= scale);
    ders.iter_mut().for_each(|v| *v *= scale / l);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::quadrature::PanelIntegrator;

    /// Direct quadrature of the Mehler kernel against `phi_m` over the bin,
    /// valid for `0 < tau < pi`.
    fn mehler(lo: f64, hi: f64, xi: f64, tau: f64, levels: usize) -> Vec<Complex64> {
        let (sn, cs) = tau.sin_cos();
        let pre = Complex64::from_polar((2.0 * PI * sn).powf(-0.5), -0.25 * PI);
        let mut acc = vec![0.0; 2 * levels];
        let mut phi = vec![0.0; levels];
        let integrator = PanelIntegrator { tolerance: 1e-14, ..Default::default() };
        integrator.integrate(lo.max(-14.0), hi.min(14.0), &mut acc, &mut |eta, out| {
            hermite_functions(eta, &mut phi);
            let theta = ((xi * xi + eta * eta) * cs - 2.0 * xi * eta) / (2.0 * sn);
            let k = pre * Complex64::from_polar(1.0, theta);
            for m in 0..levels {
                out[2 * m] = k.re * phi[m];
                out[2 * m + 1] = k.im * phi[m];
            }
        });
        (0..levels).map(|m| Complex64::new(acc[2 * m], acc[2 * m + 1])).collect()
    }

    fn closed(lo: f64, hi: f64, xi: f64, tau: f64, levels: usize) -> Vec<Complex64> {
        let mut v = vec![Complex64::new(0.0, 0.0); levels];
        evolve_restricted(lo, hi, xi, tau, &mut v, None);
        v
    }

    #[test]
    fn matches_mehler_quadrature() {
        let cases = [
            (-0.5, 1.2, 0.7, 0.9),
            (0.3, f64::INFINITY, -1.1, 2.3),
            (f64::NEG_INFINITY, -0.4, 0.2, 0.15),
            (1.0, 2.0, 1.5, 1.4),
            (-3.0, -2.0, 2.5, 3.0),
        ];
        for &(lo, hi, xi, tau) in &cases {
            let a = closed(lo, hi, xi, tau, 12);
            let b = mehler(lo, hi, xi, tau, 12);
            for m in 0..12 {
                assert!((a[m] - b[m]).norm() < 1e-9, "{lo} {hi} {xi} {tau} m={m}: {} vs {}", a[m], b[m]);
            }
        }
    }

    #[test]
    fn beyond_half_period_uses_parity() {
        // oracle: U(pi + s) g = exp(-i pi/2) U(s) (P g), with P g supported on the mirrored bin
        let (lo, hi, xi, s) = (-0.5, 1.2, 0.4, 0.8);
        let a = closed(lo, hi, xi, PI + s, 8);
        let b = mehler(-hi, -lo, xi, s, 8);
        for m in 0..8 {
            let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
            let expect = Complex64::new(0.0, -1.0) * b[m] * sign;
            assert!((a[m] - expect).norm() < 1e-9, "m={m}");
        }
        // a full period returns to exp(-i pi) times the start
        let c = closed(lo, hi, xi, 2.0 * PI + s, 8);
        let d = closed(lo, hi, xi, s, 8);
        for m in 0..8 {
            assert!((c[m] + d[m]).norm() < 1e-12);
        }
    }

    #[test]
    fn full_line_is_free_evolution() {
        let a = closed(f64::NEG_INFINITY, f64::INFINITY, 0.3, 1.7, 6);
        // splitting the line in two bins must add back up
        let l = closed(f64::NEG_INFINITY, 0.25, 0.3, 1.7, 6);
        let r = closed(0.25, f64::INFINITY, 0.3, 1.7, 6);
        for m in 0..6 {
            assert!((a[m] - l[m] - r[m]).norm() < 1e-12, "m={m}");
        }
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let (lo, hi, tau) = (-0.3, 0.9, 1.1);
        let h = 1e-5;
        for &xi in &[-1.2, 0.1, 0.8, 2.0] {
            let mut v = vec![Complex64::new(0.0, 0.0); 10];
            let mut d = vec![Complex64::new(0.0, 0.0); 10];
            evolve_restricted(lo, hi, xi, tau, &mut v, Some(&mut d));
            let p = closed(lo, hi, xi + h, tau, 10);
            let q = closed(lo, hi, xi - h, tau, 10);
            for m in 0..10 {
                let fd = (p[m] - q[m]) / (2.0 * h);
                assert!((fd - d[m]).norm() < 1e-7, "xi={xi} m={m}");
            }
        }
    }

    #[test]
    fn zero_time_is_restriction() {
        let v = closed(-1.0, 1.0, 0.5, 0.0, 4);
        let mut phi = [0.0; 4];
        hermite_functions(0.5, &mut phi);
        for m in 0..4 {
            assert!((v[m].re - phi[m]).abs() < 1e-15 && v[m].im == 0.0);
        }
        assert!(closed(-1.0, 1.0, 1.5, 0.0, 4).iter().all(|c| c.norm() == 0.0));
    }

    #[test]
    fn physical_units_scale() {
        let basis = OscillatorBasis::new(4.0, 2.0, 8).unwrap();
        let l = basis.length();
        let bin = Interval::new(-0.2, 0.4).unwrap();
        let mut v = vec![Complex64::new(0.0, 0.0); 5];
        let mut d = vec![Complex64::new(0.0, 0.0); 5];
        evolve_bin_functions_with_derivative(&basis, &bin, 0.1, 0.3, &mut v, &mut d);
        let r = closed(-0.2 / l, 0.4 / l, 0.1 / l, 0.6, 5);
        for m in 0..5 {
            assert!((v[m] - r[m] / l.sqrt()).norm() < 1e-13);
        }
    }
}
