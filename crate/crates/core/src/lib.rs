//! Realizability of balanced piecewise-linear functions on tropical curves.
//!
//! The library models tropical curves with exact rational lengths, balanced
//! integer-slope functions on them, and harmonic maps between them. A
//! function is certified realizable by exhibiting a finite harmonic lift to a
//! modified tree target together with a solvable local Hurwitz problem at
//! every vertex; the certificate is checked by an independent verifier.
//! Deciders cover tree domains, functions without contracted cycles, the
//! genus-1 well-spacedness criterion, and explicit genus-2 constructions.

pub mod error;
pub mod rat;
pub mod graph;
pub mod balanced;
pub mod harmonic;
pub mod hurwitz;
pub mod modify;
pub mod builder;
pub mod combine;
pub mod realize0;
pub mod realize1;
pub mod realize2;
pub mod multirank;
pub mod json;
pub mod dot;
pub mod check;

pub use error::Error;
pub use rat::Rat;
