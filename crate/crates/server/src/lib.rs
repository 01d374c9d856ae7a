//! HTTP service and admin commands for the codecoach engines.

pub mod auth;
pub mod commands;
pub mod error;
pub mod llm;
pub mod routes;
pub mod settings;
pub mod state;

pub use routes::router;
pub use settings::{Role, ServerConfig, TokenEntry};
pub use state::AppState;
