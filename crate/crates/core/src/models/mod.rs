//! Concrete state-space models and their oracles.

pub mod hh;
pub mod lgssm;
pub mod slds;
