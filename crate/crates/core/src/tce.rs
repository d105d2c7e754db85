//! Tabular certainty-equivalence victim and the attack against it.

pub mod attack;
pub mod victim;
