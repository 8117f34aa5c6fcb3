//! Procedural city environment: graph, routes, rendered perspectives,
//! path traces, landmarks and templated instructions.
//!
//! Everything is deterministic in (config, seed). Rasters use [0,1] floats
//! in channel-major [C,H,W] layout and serialize as 8-bit PNM files.

pub mod dataset;
pub mod error;
pub mod glyph;
pub mod graph;
pub mod instr;
pub mod landmarks;
pub mod pnm;
pub mod render;
pub mod route;
pub mod trace;
pub mod vocab;

pub use error::{CitySimError, Result};
pub use graph::{signed_delta, norm_deg, NavGraph};
pub use instr::{Grammar, Instruction};
pub use landmarks::{CellGrid, Landmark, LandmarkRecord};
pub use render::{visible_landmarks, PerspectiveSpec};
pub use route::{Action, Route};
pub use trace::{rot180, TraceSpec};
pub use vocab::Vocab;
