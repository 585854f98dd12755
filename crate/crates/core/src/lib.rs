//! Shift-lab core: distribution-shift estimators, permutation testing,
//! from-scratch MLP training, a calibrated surface-radiation
//! parameterisation, and the compositional expert model built on top of it.

pub mod dataset;
pub mod divergence;
pub mod mlp;
pub mod rng;
pub mod special;
pub mod stats;
