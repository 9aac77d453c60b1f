//! Numerical laboratory for the integer phase invariant of an
//! S³-parametrized spin-½ dimer chain, together with the finite-dimensional
//! operator-algebraic, projective, Čech and homotopy tools it is built from.

pub mod cech;
pub mod dimer;
pub mod homotopy;
pub mod linalg;
pub mod projective;
pub mod sample;
pub mod states;
pub mod supernatural;
