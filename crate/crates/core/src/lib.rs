//! Hamiltonian dynamics relative to the linear coisotropic subspaces
//! `ℝ^{n,k} ⊂ ℝ^{2n}`: admissible Hamiltonians, leafwise return times, a
//! spectral discretization of the constrained action functional, a minimax
//! search for leafwise chords, and the capacity bounds built on them.

pub mod capacity;
pub mod chord;
pub mod dynamics;
pub mod geometry;
pub mod hamiltonian;
pub mod quadrature;
pub mod spectral;
