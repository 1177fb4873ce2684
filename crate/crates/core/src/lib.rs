//! Implicit-explicit general linear methods built by extrapolating the
//! non-stiff stage derivatives of a diagonally implicit base method.
//!
//! The crate covers the whole pipeline: base tableaux and their order
//! conditions ([`glm`], [`catalogue`]), extrapolation and scheme assembly
//! ([`extrap`]), two-parameter stability analysis and coefficient search
//! ([`stability`]), and fixed-step time integration on stiff test problems
//! ([`integrate`], [`problems`]). Dense and banded linear algebra lives in
//! [`matkit`].

pub mod catalogue;
pub mod extrap;
pub mod glm;
pub mod integrate;
pub mod matkit;
pub mod problems;
pub mod stability;
pub mod workers;

pub use catalogue::MethodFamily;
pub use extrap::{ExtrapCoeffs, ImexScheme};
pub use glm::GlmTableau;
pub use matkit::{Complex64, DenseMatrix, Polynomial};
