//! Minimizing ellipses of Coulomb energies perturbed by an even,
//! zero-homogeneous kernel.
//!
//! The pipeline: represent the kernel by its circle Fourier series
//! ([`kernel`]), certify positivity of the interaction's Fourier symbol
//! ([`spectral`]), solve the first Euler–Lagrange system for the ellipse
//! ([`el_system`]), and audit the result through direct potential quadrature
//! ([`potential`]) and an independent particle simulation ([`particle`]).
//! [`nd`] covers the axis-aligned ellipsoid problem in dimension three and up.

pub mod el_system;
pub mod io;
pub mod kernel;
pub mod nd;
pub mod particle;
pub mod potential;
pub mod quadrature;
pub mod spectral;

pub use el_system::{solve, ElError, Ellipse, EllipseParams, Solution, SolveOptions};
pub use kernel::{FourierKernel2D, KernelError, KernelSpec, PresetRegistry};
pub use spectral::{certify, symbol, PositivityCertificate};
