//! Library surface of the command-line tool, exposed so integration tests
//! can drive the orchestration layers directly.

pub mod cli;
pub mod pipeline;
pub mod settings;
pub mod sweep;
