//! Gauss rules used by the oscillator basis.
//!
//! Hermite nodes come from the Golub–Welsch eigenproblem and are polished by
//! Newton steps on the normalized Hermite functions. The returned weights
//! integrate products of Hermite *functions* (Gaussian factor included), so
//! `sum_k w[k] * phi_m(x[k]) * phi_n(x[k])` is exact for `m + n < 2 * order`.

use nalgebra::{DMatrix, SymmetricEigen};
use std::f64::consts::PI;

/// Normalized Hermite functions `phi_0..phi_{out.len()-1}` at dimensionless `xi`.
pub fn hermite_functions(xi: f64, out: &mut [f64]) {
    if out.is_empty() {
        return;
    }
    out[0] = PI.powf(-0.25) * (-0.5 * xi * xi).exp();
    if out.len() > 1 {
        out[1] = std::f64::consts::SQRT_2 * xi * out[0];
    }
    for k in 2..out.len() {
        let kf = k as f64;
        out[k] = (2.0 / kf).sqrt() * xi * out[k - 1] - ((kf - 1.0) / kf).sqrt() * out[k - 2];
    }
}

/// Hermite functions and their derivatives. `vals` must have one more slot than
/// `ders` so the derivative of the top function can use `phi_{n+1}`.
pub fn hermite_functions_with_derivative(xi: f64, vals: &mut [f64], ders: &mut [f64]) {
    debug_assert!(vals.len() > ders.len());
    hermite_functions(xi, vals);
    for (n, d) in ders.iter_mut().enumerate() {
        let nf = n as f64;
        let lower = if n > 0 { (nf / 2.0).sqrt() * vals[n - 1] } else { 0.0 };
        *d = lower - ((nf + 1.0) / 2.0).sqrt() * vals[n + 1];
    }
}

/// Gauss–Hermite nodes and function-weights of the given order.
pub fn gauss_hermite(order: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(order >= 1, "quadrature order must be positive");
    let mut jacobi = DMatrix::<f64>::zeros(order, order);
    for k in 1..order {
        let b = (k as f64 / 2.0).sqrt();
        jacobi[(k - 1, k)] = b;
        jacobi[(k, k - 1)] = b;
    }
    let mut nodes: Vec<f64> = SymmetricEigen::new(jacobi).eigenvalues.iter().copied().collect();
    nodes.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let mut buf = vec![0.0; order + 1];
    for x in nodes.iter_mut() {
        for _ in 0..3 {
            hermite_functions(*x, &mut buf);
            let f = buf[order];
            let df = (2.0 * order as f64).sqrt() * buf[order - 1] - *x * f;
            if df != 0.0 {
                *x -= f / df;
            }
        }
    }
    // symmetrize to kill round-off asymmetry
    for i in 0..order / 2 {
        let j = order - 1 - i;
        let m = 0.5 * (nodes[j] - nodes[i]);
        nodes[i] = -m;
        nodes[j] = m;
    }
    if order % 2 == 1 {
        nodes[order / 2] = 0.0;
    }

    let weights = nodes
        .iter()
        .map(|&x| {
            hermite_functions(x, &mut buf[..order]);
            1.0 / buf[..order].iter().map(|v| v * v).sum::<f64>()
        })
        .collect();
    (nodes, weights)
}

/// Gauss–Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    let n = order;
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, 0.0);
            for j in 0..n {
                let p2 = p1;
                p1 = p0;
                p0 = ((2 * j + 1) as f64 * z * p1 - j as f64 * p2) / (j + 1) as f64;
            }
            dp = n as f64 * (z * p0 - p1) / (z * z - 1.0);
            let dz = p0 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Adaptive Gauss–Legendre panels for vector-valued integrands.
pub struct PanelIntegrator {
    pub(crate) nodes: Vec<f64>,
    pub(crate) weights: Vec<f64>,
    pub tolerance: f64,
    pub max_depth: u32,
}

impl Default for PanelIntegrator {
    fn default() -> Self {
        let (nodes, weights) = gauss_legendre(20);
        Self { nodes, weights, tolerance: 1e-15, max_depth: 24 }
    }
}

impl PanelIntegrator {
    /// Adds `int_a^b f` into `acc`. `f(x, out)` must overwrite `out`.
    pub fn integrate<F>(&self, a: f64, b: f64, acc: &mut [f64], f: &mut F)
    where
        F: FnMut(f64, &mut [f64]),
    {
        if !(b > a) {
            return;
        }
        let dim = acc.len();
        let mut scratch = vec![0.0; dim];
        let pieces = ((b - a) / 0.5).ceil().max(1.0) as usize;
        let h = (b - a) / pieces as f64;
        for p in 0..pieces {
            let lo = a + p as f64 * h;
            let hi = if p + 1 == pieces { b } else { lo + h };
            let whole = self.rule(lo, hi, &mut scratch, f);
            self.refine(lo, hi, whole, acc, &mut scratch, f, 0);
        }
    }

    fn rule<F>(&self, a: f64, b: f64, scratch: &mut [f64], f: &mut F) -> Vec<f64>
    where
        F: FnMut(f64, &mut [f64]),
    {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut total = vec![0.0; scratch.len()];
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            f(mid + half * x, scratch);
            for (t, s) in total.iter_mut().zip(scratch.iter()) {
                *t += w * half * s;
            }
        }
        total
    }

    #[allow(clippy::too_many_arguments)]
    fn refine<F>(
        &self,
        a: f64,
        b: f64,
        whole: Vec<f64>,
        acc: &mut [f64],
        scratch: &mut [f64],
        f: &mut F,
        depth: u32,
    ) where
        F: FnMut(f64, &mut [f64]),
    {
        let mid = 0.5 * (a + b);
        let left = self.rule(a, mid, scratch, f);
        let right = self.rule(mid, b, scratch, f);
        let mut err: f64 = 0.0;
        let mut scale: f64 = 0.0;
        for i in 0..whole.len() {
            let split = left[i] + right[i];
            err = err.max((split - whole[i]).abs());
            scale = scale.max(split.abs());
        }
        if err <= self.tolerance * scale.max(1.0) || depth >= self.max_depth {
            for i in 0..acc.len() {
                acc[i] += left[i] + right[i];
            }
        } else {
            self.refine(a, mid, left, acc, scratch, f, depth + 1);
            self.refine(mid, b, right, acc, scratch, f, depth + 1);
        }
    }
}
