//! Transition kernels used inside the Gibbs sweeps.

mod hmc;
mod mh;
mod normal_gamma;

pub use hmc::{hmc_step, leapfrog, Hmc, HmcConfig, HmcStep};
pub use mh::{independence_mh_step, IndependenceProposal, MhCounters, MhStep};
pub use normal_gamma::NormalGammaParams;
