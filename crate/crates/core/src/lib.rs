//! Classification of planar random-set realisations.
//!
//! Binary images are split into connected components, each component is
//! summarised by a boundary-occupancy histogram (its C-function) and its
//! perimeter/area ratio, and realisations are compared with empirical
//! N-distances between the component feature samples. The resulting
//! distance matrices feed a kernel nearest-neighbour classifier, k-medoids
//! and Ward hierarchical clustering.

pub mod classify;
pub mod error;
pub mod experiment;
pub mod features;
pub mod morphology;
pub mod ndistance;
pub mod raster;
pub mod seed;
pub mod sim;

pub use error::{Error, Result};
pub use features::{ComponentFeatures, RealisationFeatures};
pub use morphology::{Component, DiscMask};
pub use ndistance::{ComponentCount, DistanceMatrix, FeatureMode, SamplingPolicy};
pub use raster::{BinaryRaster, PbmVariant};
