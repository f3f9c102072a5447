//! Grid containers, discrete operators, spectral solvers, voxel ingestion.

pub mod field;
pub mod grid;
pub mod ops;
pub mod spectral;
pub mod voxel;
pub mod vtk;

pub use field::{PorosityField, ScalarField, VectorField};
pub use grid::Grid;
pub use ops::{convolve_w, curl, divergence4, gradient2, gradient4};
pub use spectral::SpectralSolver;
pub use voxel::{load_voxels, voxels_from_bytes, VoxelMapping};
pub use vtk::VtkWriter;
