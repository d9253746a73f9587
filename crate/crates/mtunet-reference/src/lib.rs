//! Independent reference implementations for verification.
//!
//! Everything here is written as plain nested loops over `Vec<f64>`, with no
//! use of the tensor operation path it is checking. Test suites compare the
//! optimized implementations against these.

pub mod primitives;
