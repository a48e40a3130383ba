#![cfg_attr(not(feature = "std"), no_std)]
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;

pub mod clock;
pub mod config;
pub mod diagnostics;
pub mod enhanced;
pub mod epsg;
pub mod instances;
pub mod l1ipm;
pub mod linalg;
pub mod problem;
pub mod prox;
pub mod qp;
pub mod schedules;
pub mod vector;
