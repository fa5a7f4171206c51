//! Operator Schmidt decompositions, controlled-unitary detection and
//! nonlocal implementation protocols for finite-dimensional multipartite
//! unitaries.
#![no_std]
extern crate alloc;

pub mod algebra;
pub mod control;
pub mod error;
pub mod gates;
pub mod linalg;
pub mod matrix;
pub mod protocols;
pub mod rng;
pub mod schmidt;
pub mod schmidt_number;

pub use error::{Error, Result};
