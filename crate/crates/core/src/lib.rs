//! Analysis on the Heisenberg group: group law, horizontal calculus,
//! quadrature on gauge spheres, integral identities, blow-up profiles,
//! a finite-difference CR Yamabe solver and an order calculus for
//! pseudohermitian frame expansions.

pub mod blowup;
pub mod calculus;
pub mod error;
pub mod field;
pub mod group;
pub mod identities;
pub mod jet;
pub mod ordercalc;
pub mod quadrature;
pub mod solver;

pub use error::{HeisError, Result};
