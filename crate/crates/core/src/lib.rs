//! Conditional weighting adversarial network (CWAN) for multisource
//! heterogeneous domain adaptation.
//!
//! Each source domain and the target get their own two-layer feature
//! transformer into a shared subspace. A shared label classifier and a binary
//! domain discriminator sit on top; the discriminator is trained adversarially
//! through an inverted-label loss, and every source is weighted by how far its
//! class-conditional means sit from the target's.

pub mod data;
pub mod error;
pub mod experiments;
pub mod model;
pub mod numerics;
pub mod training;

pub use error::{Error, ParseErrorKind, Result};
pub use numerics::Tensor;
