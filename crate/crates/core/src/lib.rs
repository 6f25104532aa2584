//! Metric geometry of the negatively curved homogeneous spaces
//! `G = R ⋉ Rⁿ`, where `t ∈ R` acts on `Rⁿ` by `e^{tA}` for a matrix `A`
//! with positive real eigenvalues.
//!
//! The toolkit works in the coordinates of a user-supplied Jordan structure
//! for `A` (see [`JordanSpec`]) and provides:
//!
//! * the flag-ordered basis, its level order, and closed-form one-parameter
//!   flows `e^{tA}` ([`basis`]);
//! * the interior model metric `d_L` on height–fiber pairs and the
//!   first-contact height solver ([`space`]);
//! * the boundary quasimetric `D_M(p,q) = e^{t₀}` together with its explicit
//!   per-coordinate formula and metric-axiom audits ([`boundary`]);
//! * the gauge functionals `η_{α,j}` and the chain-length trichotomy
//!   classifier ([`length`]);
//! * boundary self-map descriptors (triangular, affine quasi-similarity,
//!   unipotent shear, sampled) and structural verifiers: bilipschitz-constant
//!   estimation, foliation preservation, modulus curves, rotation-blowup and
//!   shear-cocycle experiments ([`maps`], [`verify`]);
//! * height-respecting maps of `G` and the similarity constants they induce
//!   on the boundary ([`action`]).
//!
//! All randomized routines are driven by explicit seeds and are deterministic;
//! see [`sample`] for the seed-derivation scheme.

pub mod action;
pub mod basis;
pub mod boundary;
pub mod error;
pub mod length;
pub mod maps;
pub mod matrix;
pub mod sample;
mod solve;
pub mod space;
pub mod verify;

pub use action::HeightRespectingMap;
pub use basis::{BoundaryPoint, CoordIndex, JordanSpec, Level, OrderedBasis};
pub use boundary::BoundaryDistanceResult;
pub use error::{Error, Result};
pub use length::{ChainBound, Classification, ClassifyParams, Kind};
pub use maps::MapDescriptor;
pub use sample::Sampler;
pub use space::SpacePoint;
