//! Solvers and verifiers for L1 extremal problems for polynomials on finite
//! unions of real intervals: the discretized primal, its moment-problem dual,
//! orthogonal-polynomial constructions, transfer-matrix identities, and
//! finite-gap potential theory.

pub mod canonical;
pub mod error;
pub mod interval;
pub mod l1;
pub mod laurent;
pub mod markov;
pub mod orthopoly;
pub mod poly;
pub mod potential;
pub mod report;
pub mod simplex;
pub mod verify;

pub use error::{Error, Result};
pub mod boxlp;
