//! Learned point-to-point correspondence between a rigid "driver" point set
//! (bone) and a "driven" surface (skin), used to turn segment-wise rigid
//! movements into dense surface deformation.
//!
//! The crate is organised bottom-up:
//!
//! * [`geometry`]: point sets, meshes, normalisation, sampling, neighbour
//!   queries, interpolation and file formats.
//! * [`diff`]: a small reverse-mode differentiation tape, Adam and the
//!   checkpoint container.
//! * [`network`]: the two point-set encoders, the cross point-set attention
//!   block and the movement head, plus the two ablation variants.
//! * [`losses`]: shape, density and local-point-transform terms.
//! * [`synth`]: synthetic bone/skin cases with analytic ground truth.
//! * [`trainer`]: training, simulation, evaluation and the ablation suite.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diff;
pub mod error;
pub(crate) mod files;
pub mod geometry;
pub mod losses;
pub mod network;
pub mod synth;
pub mod trainer;

pub use error::{Error, Result};

/// Apply `f` to every item, in parallel when the `parallel` feature is on.
/// Output order always matches input order.
pub(crate) fn par_map<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}
