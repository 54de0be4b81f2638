//! Robust adaptive beamforming by worst-case SINR maximization over nonconvex
//! steering-vector uncertainty sets, on top of a dense interior-point SDP solver.

pub mod error;
pub mod hermlinalg;
pub mod sdp;
pub mod array_model;
pub mod rankone;
pub mod baselines;
pub mod blmi;
pub mod wcsinr_a1;
pub mod wcsinr_quad;

pub use error::{Error, Result};
pub mod harness;
