//! Ingestion of headerless uint8 voxel volumes (x fastest-varying index).

use crate::error::{Error, Result};
use crate::fields::field::{PorosityField, ScalarField};
use crate::fields::grid::Grid;
use std::fs;
use std::path::Path;

/// How raw bytes map onto micro-porosity.
#[derive(Debug, Clone, Copy)]
pub enum VoxelMapping {
    /// byte >= threshold is solid (eps = eps0), below is fluid (eps = 1).
    Binary { solid_threshold: u8 },
    /// Linear byte -> eps map for partially resolved matrices:
    /// 0 -> 1 (fluid), 255 -> eps0 (solid).
    Grayscale,
}

/// Load a raw uint8 volume from `path` into a porosity field.
pub fn load_voxels(
    path: &Path,
    dims: [usize; 3],
    h: f64,
    mapping: VoxelMapping,
    eps0: f64,
) -> Result<PorosityField> {
    let bytes = fs::read(path)?;
    voxels_from_bytes(&bytes, dims, h, mapping, eps0)
}

pub fn voxels_from_bytes(
    bytes: &[u8],
    dims: [usize; 3],
    h: f64,
    mapping: VoxelMapping,
    eps0: f64,
) -> Result<PorosityField> {
    if !(eps0 > 0.0 && eps0 < 1.0) {
        return Err(Error::Parameter(format!("eps0 = {eps0} must lie in (0, 1)")));
    }
    let grid = Grid::new(dims, h)?;
    let expected = grid.len();
    if bytes.len() != expected {
        return Err(Error::Format(format!(
            "voxel file holds {} bytes, expected {}x{}x{} = {}",
            bytes.len(),
            dims[0],
            dims[1],
            dims[2],
            expected
        )));
    }
    let data: Vec<f64> = match mapping {
        VoxelMapping::Binary { solid_threshold } => bytes
            .iter()
            .map(|&b| if b >= solid_threshold { eps0 } else { 1.0 })
            .collect(),
        VoxelMapping::Grayscale => bytes
            .iter()
            .map(|&b| 1.0 - (1.0 - eps0) * b as f64 / 255.0)
            .collect(),
    };
    PorosityField::new(ScalarField { grid, data }, eps0)
}
