//! Piecewise-affine networks: forward evaluation, exact per-region affine
//! extraction, Gaussian pushforward, and the reverse-mode tape used to train
//! them.

mod network;
mod pushforward;
pub mod tape;

pub use network::{Activation, Checkpoint, Layer, LayerDoc, NetParams, PwaNetwork, RegionAffine, TapeForward, BOUNDARY_TOL};
pub use pushforward::{pushforward_gaussian, Pushforward, DEFAULT_PURITY_SAMPLES};
pub use tape::{Gradients, Tape, Var};
