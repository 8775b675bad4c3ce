//! Oracles and fixtures shared by the integration tests and the acceptance
//! runner. Each test binary uses a different subset.
#![allow(dead_code)]

pub mod decode;
pub mod fixtures;
pub mod gradcheck;
pub mod oracles;
