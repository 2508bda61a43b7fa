//! Dense (whole-image) training of max-pooling convolutional networks.
//!
//! A classifier with a `W`x`W` input window can segment an image by being
//! evaluated on the patch around every pixel. Convolutional layers slide
//! naturally over a whole image, but a max-pooling layer does not: each
//! pooling alignment produces a different downsampled grid. This crate
//! represents all `k*k` pooling alignments side by side as *fragments* and
//! carries them through the network together, so one forward pass over the
//! image produces the classifier output for every pixel without re-computing
//! overlapping patches. Backpropagation runs over the same fragments, which
//! makes whole-image training cheap as well.
//!
//! The main entry points are [`network::forward_dense`] and
//! [`network::backward_dense`]. The [`oracle`] module holds a deliberately
//! naive patch-by-patch implementation of the same network; it is the
//! correctness reference and the baseline that the speedup is measured
//! against.
//!
//! The crate is `no_std` (alloc required); float transcendentals come from
//! `libm` so results are identical across platforms.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod arch;
pub mod conv;
pub mod data;
pub mod dense;
pub mod error;
pub mod fragment;
pub mod geometry;
pub mod loss;
pub mod map;
pub mod network;
pub mod optim;
pub mod oracle;
pub mod pool;
pub mod rng;
pub mod scalar;

pub use arch::{ArchSpec, GeometryReport, LayerSpec};
pub use conv::{Activation, ConvParams};
pub use error::{Error, Result};
pub use fragment::{
    expected_fragment_count, lineage_to_pixel, storage_from_image, FragmentStack, OffsetLineage,
    PoolStep, Storage,
};
pub use geometry::{mirror_pad, plan_geometry, GeometryPlan};
pub use loss::{mcce_loss_and_delta, LabelImage};
pub use map::Map;
pub use network::{backward_dense, defragment, forward_dense, Model, Tape};
pub use scalar::Scalar;
