//! Reconstruction, certification, and training of convex Lipschitz
//! functions from finite samples.
//!
//! Given pointwise evaluations of an `L`-Lipschitz convex function, the
//! crate builds a max-affine model that is convex and `L`-Lipschitz by
//! construction and uniformly accurate at a requested tolerance
//! ([`dual`]), exposes the interpolating convex envelope of the data as a
//! primal reference oracle ([`extension`]), compiles the model into an
//! exact ReLU network with explicit size/width/depth accounting ([`relu`]),
//! embeds it into a trainable architecture class whose every admissible
//! parameter setting is certifiably convex and Lipschitz ([`cnf`]), and
//! trains such models with projected gradient descent ([`training`]).
//!
//! See the `examples/` directory for one runnable walkthrough per
//! capability, and the `cvxfn` binary for the file-based command line.

pub mod cli;
pub mod cnf;
pub mod dual;
pub mod error;
pub mod extension;
pub mod geometry;
pub mod io;
pub mod reference;
pub mod relu;
pub mod rng;
pub mod training;

pub use error::{CvxError, Result};
pub use geometry::{SampleSet, Subspace, Vector};
