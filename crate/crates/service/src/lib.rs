//! HTTP facade over the scene engine: scenes with optimistic revisions,
//! manipulations, rasters, toy-generator previews, attention maps and style
//! tools, all under `/api/v1`.

pub mod config;
pub mod error;
pub mod routes;
pub mod state;
pub mod store;

pub use error::{ApiError, ApiResult};
pub use routes::router;
pub use state::{AppState, SceneEntry, Settings};
