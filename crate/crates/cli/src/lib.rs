//! Operational shell for the simulator: dataset generation, evaluation, a
//! line-mode session and the HTTP service behind the console.

pub mod cli;
pub mod http;
pub mod session;

pub use session::{Engine, Response, Session};
