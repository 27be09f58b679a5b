//! Desk-scale reproduction of high-dimensional two-photon Bell tests with
//! OAM qudits.
//!
//! * [`numerics`]: dense complex matrices and Hermitian eigen-decomposition
//! * [`modes`]: OAM mode sets and the two-setting analyser bases
//! * [`bell`]: joint probabilities, the CGLMP parameter `S_d` and its operator
//! * [`spdc`]: spiral-bandwidth source model and the coincidence fringe
//! * [`concentration`]: Procrustean local filtering
//! * [`witness`]: constrained maximization certifying entanglement dimension
//! * [`sim`]: Poisson photon-counting Monte Carlo with error propagation
//! * [`cli`]: the `qbell` command-line front end

pub mod bell;
pub mod cli;
pub mod concentration;
pub mod error;
pub mod modes;
pub mod numerics;
mod optim;
pub mod output;
pub mod reference;
pub mod sim;
pub mod spdc;
pub mod state;
pub mod witness;

pub use error::{Error, Result};
