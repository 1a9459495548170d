//! The four training losses: transducer, CTC, LM cross-entropy, and KL
//! divergence. Each returns the loss together with its exact gradient with
//! respect to the given log-probabilities; brute-force oracles for the two
//! lattice losses live in the test code.

mod ctc;
mod transducer;
mod xent;

pub use ctc::ctc_loss;
pub use transducer::{transducer_loss, JointLattice};
pub use xent::{kl_divergence, lm_cross_entropy};
