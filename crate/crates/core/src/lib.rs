//! Micro-continuum simulation of reactive crystal growth in porous media.
//!
//! The crate couples a Darcy-Brinkman-Stokes flow solver in velocity-vorticity
//! form with semi-Lagrangian remeshed-particle transport, a DC-PSE operator
//! for heterogeneous diffusion, and calcite precipitation kinetics, on fully
//! periodic voxel grids.

pub mod chemistry;
pub mod cli;
pub mod error;
pub mod fields;
pub mod hydro;
pub mod particles;
pub mod pse;
pub mod sim;
pub mod validate;

pub use error::{Error, Result};
