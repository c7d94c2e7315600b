//! Structural causal models: the continuous synthetic simulator and
//! finite-domain models with exact enumeration.

mod discrete;
pub mod random;
mod synth;

pub use discrete::{Condition, DiscreteScm, DiscreteVar, Roles, ScmBuilder, MAX_DOMAIN, MAX_STATES};
pub use synth::{
    generate, generate_with_weights, kappa1, kappa2, kappa3, ScmSample, SynthConfig, SynthWeights, DC_DIM,
    ND_DIM, PA_DIM,
};
