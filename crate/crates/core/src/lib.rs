//! Minimal phase-type representations of rational Laplace-Stieltjes transforms.

pub mod am;
pub mod cli;
pub mod discrete;
pub mod error;
pub mod io;
pub mod jordan;
pub mod phgen;
pub mod poly;
pub mod qp;
pub mod verify;

pub use error::{PhError, Result};
