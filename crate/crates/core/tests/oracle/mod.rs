//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

pub mod dd;
pub mod nnls_grid;
pub mod quadrature;
pub mod special;
