//! Command line, HTTP service and on-disk state store for the face-swap
//! creation/detection game.

pub mod cli;
pub mod service;
pub mod store;
