//! Problem files, seeded experiments, traces and reports on top of
//! [`fracprox_core`].

pub mod experiments;
pub mod problem_file;
pub mod report;
pub mod trace;
