//! Harmonic-oscillator eigenbasis, quadrature rules, operator matrices and
//! free time evolution of two-particle coefficient tensors.

mod basis;
mod projector;
pub mod propagator;
pub mod quadrature;
mod state;

use nalgebra::DMatrix;
use num_complex::Complex64;

pub use basis::{Interval, OscillatorBasis};
pub use projector::{new_family, Projector};
pub use state::{contract, side_functions, Side, Subsystem, WaveCoefficients, DEFAULT_NORM_TOLERANCE};

/// Dense complex matrix in the oscillator basis.
pub type CMatrix = DMatrix<Complex64>;
