//! Staged play in, story out.
//!
//! The engine watches a small stage of characters and props, turns every
//! grab, drag, attach and spoken line into scored observations, fuses them
//! into intent frames, shows each frame as a story marble on a reorderable
//! timeline and finally exports a synopsis and a screenplay.
//!
//! Everything is driven by a logical millisecond clock supplied by the
//! caller, so a recorded session log replays to byte-identical output.

pub mod agents;
pub mod assembly;
pub mod backend;
pub mod config;
pub mod dialogue;
pub mod export;
pub mod fusion;
pub mod geometry;
pub mod log;
pub mod prompts;
pub mod scene;
pub mod session;
pub mod text;

#[cfg(feature = "server")]
pub mod server;

pub use config::Config;
pub use geometry::{Aabb, Vec3};
pub use scene::{EntityId, SceneState};
pub use session::{Session, SessionError};
