//! Configuration, checkpoints and the end-to-end pipeline behind the `qfid` binary.

pub mod checkpoint;
pub mod config;
pub mod pipeline;

pub use checkpoint::Checkpoint;
pub use config::RunConfig;
