//! Boltzmann bipartite planar maps through labeled mobiles.
//!
//! The pipeline is: a [`weights::WeightSequence`] is classified and turned into a
//! [`weights::BranchingLaw`]; [`sampler`] draws conditioned two-type trees and labels
//! them; [`mobile_map`] maps the labeled mobile to a rooted pointed map. [`enumerate`]
//! provides exact small-size laws and [`snake_ref`] a reference for scaling limits.

pub mod enumerate;
pub mod error;
pub mod harness;
pub mod mobile_map;
pub mod sampler;
pub mod snake_ref;
pub mod stats;
pub mod trees;
pub mod weights;

pub use error::{Error, Result};
