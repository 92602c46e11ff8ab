//! Hermite–Galerkin spectral toolkit for the spatially homogeneous Landau
//! equation with hard potentials, linearized around the Maxwellian.

pub mod cli;
pub mod config;
pub mod diagnostics;
pub mod hermite;
pub mod inequalities;
pub mod io;
pub mod kernel;
pub mod nodal;
pub mod operators;
pub mod quadrature;
pub mod solver;
