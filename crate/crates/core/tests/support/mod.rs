//! Brute-force references shared by the integration tests and the
//! acceptance harness.
#![allow(dead_code)]

pub mod attention;
pub mod io;
pub mod metrics;
