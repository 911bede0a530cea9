//! Segmentation of 3D volumes from predicted voxel affinities.
//!
//! The crate covers the full reconstruction pipeline on the 6-connected voxel
//! grid:
//!
//! * [`malis`]: the constrained MALIS structured loss with its dense gradient,
//!   computed by one Kruskal sweep per pass, plus a quadratic brute-force
//!   oracle.
//! * [`watershed`]: seeded watershed fragment extraction (3D or per xy-section).
//! * [`agglomerate`]: region adjacency graph construction and hierarchical
//!   agglomeration with discretized scores and a bucket priority queue.
//! * [`metrics`]: variation of information, adapted RAND error, CREMI score.
//! * [`synth`]: deterministic synthetic labels and affinities.
//! * [`pipeline`]: end-to-end runs with per-stage throughput.
//! * [`bench`]: the bucket-queue versus binary-heap runtime benchmark.
//!
//! Numeric code is generic over the affinity scalar ([`Real`], implemented for
//! `f32` and `f64`). The on-disk format always stores `f32`.

pub mod agglomerate;
pub mod bench;
pub mod edt;
mod error;
pub mod io;
pub mod malis;
pub mod metrics;
pub mod pipeline;
pub mod rng;
mod scalar;
pub mod synth;
pub mod unionfind;
pub mod volume;
pub mod watershed;

pub use error::{Error, Result};
pub use scalar::Real;
pub use volume::{AffinityVolume, Axis, EdgeId, EdgeVolume, LabelVolume, Shape3};

/// Affinities as stored on disk and produced by networks.
pub type Affinities = AffinityVolume<f32>;
/// Double-precision affinities, used where gradients are checked numerically.
pub type Affinities64 = AffinityVolume<f64>;
/// Per-edge gradient in single precision.
pub type Gradient = EdgeVolume<f32>;
/// Per-edge gradient in double precision.
pub type Gradient64 = EdgeVolume<f64>;
/// MALIS loss and gradient in single precision.
pub type MalisResult = malis::MalisResult<f32>;
/// MALIS loss and gradient in double precision.
pub type MalisResult64 = malis::MalisResult<f64>;
/// Boundary map derived from single-precision affinities.
pub type BoundaryMap = watershed::BoundaryMap<f32>;
/// Fragments are plain label volumes.
pub type FragmentVolume = LabelVolume;
