//! Bias-corrected estimation for parametric models: the experiment
//! harness, file formats, and thread-pool plumbing around `jini-core`.

pub mod exec;
pub mod harness;
pub mod io;
