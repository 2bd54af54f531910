//! Bimodules over multi-matrix von Neumann algebras, as verified numerics.
//!
//! A multi-matrix algebra is a finite direct sum of full complex matrix
//! algebras. Over that class this crate realizes, with concrete matrices and
//! residual checks: standard forms and Haagerup L² spaces, Connes fusion,
//! duality data with the zig-zag and normalization equations, statistical
//! dimension matrices, minimal conditional expectations, Pimsner–Popa and
//! Longo indices, the L² functor on finite homomorphisms, fusion
//! functoriality in all three variables, and a small textual string-diagram
//! language for stating and checking diagrammatic identities.

pub mod numerics;

pub mod algebra;
pub mod l2;

pub mod bimodule;
pub mod duality;

pub mod concrete;
pub mod index;

pub mod functor;

pub mod diagram;
pub mod scene;

pub use numerics::{CMat, CVec, DEFAULT_TOL};
