//! Physics-informed neural network solver for incompressible
//! magnetohydrodynamics.
//!
//! Three formulations are supported: the primitive magnetic-induction form
//! (`B`), a magnetic vector potential form (`A1`, `B = curl A1`) and a form
//! that also represents velocity through a potential (`A2`, `u = curl A2`),
//! in which `div u = 0` and `div B = 0` hold by construction. The surrogate
//! is a multiscale network of embedded subnetworks trained by Adam followed
//! by L-BFGS.

pub mod autodiff;
pub mod benchmarks;
pub mod diagnostics;
pub mod geometry;
pub mod mhd;
pub mod network;
pub mod parallel;
pub mod runner;
pub mod training;
