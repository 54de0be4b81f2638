//! Test-side oracles shared by the integration tests.
#![allow(dead_code)]

pub mod sdp_instances;
pub mod oracles;
