//! Sparse semantic scene graphs and the numerical machinery that conditions an
//! image generator on them.
//!
//! The crate is organised bottom-up:
//!
//! - [`vocab`], [`geometry`] and [`mask`] hold the shared value types.
//! - [`scene`] is the editable instance forest (move, scale, delete, duplicate,
//!   attribute edits) together with the containment hierarchy.
//! - [`ingest`] turns raw detector output into a scene.
//! - [`raster`] paints scenes into class/instance/attribute planes and encodes them.
//! - [`tensor`] and [`condkernel`] implement the conditional normalization blocks,
//!   sentence-semantic attention and their exact backward passes.
//! - [`compositor`] alpha-blends background and foreground renders.
//! - [`stylekit`] fits and samples per-class attribute distributions and slerps
//!   embeddings.
//! - [`verify`] bundles the finite-difference and brute-force checks that the CLI
//!   exposes as `verify`.

pub mod compositor;
pub mod condkernel;
pub mod geometry;
pub mod ingest;
pub mod mask;
pub mod preview;
pub mod raster;
pub mod scene;
pub mod stylekit;
pub mod tensor;
pub mod verify;
pub mod vocab;

pub use geometry::{BBox, Point};
pub use mask::Bitmap;
pub use scene::{Instance, InstanceId, InstanceMask, SceneGraph};
pub use tensor::Tensor;
pub use vocab::{AttrId, AttributeVocab, ClassId, ClassVocab, Role, Vocabulary};
