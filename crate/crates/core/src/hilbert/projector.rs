use std::sync::atomic::{AtomicU64, Ordering};

use super::basis::{Interval, OscillatorBasis};
use super::CMatrix;
use crate::error::{domain, Result};

static NEXT_FAMILY: AtomicU64 = AtomicU64::new(1);

/// Fresh identifier for a set of mutually orthogonal projectors.
pub fn new_family() -> u64 {
    NEXT_FAMILY.fetch_add(1, Ordering::Relaxed)
}

/// An orthogonal projector on one particle.
///
/// Projectors built from a position region are exact: the stored matrix is the
/// compression `<phi_m| chi_region |phi_n>` and the region itself is used for
/// norms, overlaps and pointwise evolution, so no truncation error enters.
/// Projectors given only as a matrix must be idempotent in the truncated basis.
/// Projectors sharing a `family` with different `index` are orthogonal.
#[derive(Debug, Clone)]
pub struct Projector {
    matrix: CMatrix,
    region: Option<Interval>,
    family: u64,
    index: usize,
    idempotency_residual: f64,
}

impl Projector {
    pub fn from_region(basis: &OscillatorBasis, region: Interval, family: u64, index: usize) -> Result<Self> {
        let matrix = basis.bin_projection_matrix(&region)?;
        let idempotency_residual = residual(&matrix);
        Ok(Self { matrix, region: Some(region), family, index, idempotency_residual })
    }

    /// A matrix projector, rejected if `|P^2 - P|` or `|P - P^dagger|` exceeds `tolerance`.
    pub fn from_matrix(matrix: CMatrix, tolerance: f64, family: u64, index: usize) -> Result<Self> {
        if !matrix.is_square() {
            return domain(format!("projector must be square, got {}x{}", matrix.nrows(), matrix.ncols()));
        }
        let herm = (&matrix - matrix.adjoint()).iter().map(|c| c.norm()).fold(0.0, f64::max);
        if herm > tolerance {
            return domain(format!("projector not Hermitian: residual {herm:e}"));
        }
        let idempotency_residual = residual(&matrix);
        if !(idempotency_residual <= tolerance) {
            return domain(format!(
                "not a projection: idempotency residual {idempotency_residual:e} > {tolerance:e}"
            ));
        }
        Ok(Self { matrix, region: None, family, index, idempotency_residual })
    }

    pub fn identity(basis: &OscillatorBasis) -> Self {
        let n = basis.n_max();
        Self {
            matrix: CMatrix::identity(n, n),
            region: Some(Interval::real_line()),
            family: new_family(),
            index: 0,
            idempotency_residual: 0.0,
        }
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn region(&self) -> Option<&Interval> {
        self.region.as_ref()
    }

    pub fn family(&self) -> u64 {
        self.family
    }

    pub fn index(&self) -> usize {
        self.index
    }

    /// `max |(P^2 - P)_mn|` of the stored matrix, i.e. the truncation leak.
    pub fn idempotency_residual(&self) -> f64 {
        self.idempotency_residual
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }
}

fn residual(m: &CMatrix) -> f64 {
    (m * m - m).iter().map(|c| c.norm()).fold(0.0, f64::max)
}
