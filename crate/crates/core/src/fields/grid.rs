use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Uniform Cartesian grid with isotropic voxels.
///
/// Node `(i, j, k)` sits at `origin + h * (i, j, k)`; the x index varies
/// fastest in the flat data layout. All axes are periodic in the baseline
/// build.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub dims: [usize; 3],
    /// Voxel edge length in meters, identical on all axes.
    pub h: f64,
    pub origin: [f64; 3],
    pub periodic: [bool; 3],
}

impl Grid {
    pub fn new(dims: [usize; 3], h: f64) -> Result<Self> {
        Self::with_origin(dims, h, [0.0; 3])
    }

    pub fn with_origin(dims: [usize; 3], h: f64, origin: [f64; 3]) -> Result<Self> {
        if dims.iter().any(|&n| n < 4) {
            return Err(Error::Parameter(format!(
                "grid dims {dims:?} below the minimum of 4 per axis"
            )));
        }
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::Parameter(format!("grid spacing h = {h} must be positive")));
        }
        Ok(Grid {
            dims,
            h,
            origin,
            periodic: [true; 3],
        })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    /// Flat index of node (i, j, k); x fastest.
    #[inline]
    pub fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    /// Flat index with periodic wrap of possibly-negative offsets.
    #[inline]
    pub fn idx_wrap(&self, i: isize, j: isize, k: isize) -> usize {
        let nx = self.dims[0] as isize;
        let ny = self.dims[1] as isize;
        let nz = self.dims[2] as isize;
        let i = i.rem_euclid(nx) as usize;
        let j = j.rem_euclid(ny) as usize;
        let k = k.rem_euclid(nz) as usize;
        self.idx(i, j, k)
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> (usize, usize, usize) {
        let i = idx % self.dims[0];
        let j = (idx / self.dims[0]) % self.dims[1];
        let k = idx / (self.dims[0] * self.dims[1]);
        (i, j, k)
    }

    /// Physical position of a node.
    #[inline]
    pub fn position(&self, i: usize, j: usize, k: usize) -> [f64; 3] {
        [
            self.origin[0] + self.h * i as f64,
            self.origin[1] + self.h * j as f64,
            self.origin[2] + self.h * k as f64,
        ]
    }

    /// Domain extent per axis.
    pub fn extent(&self) -> [f64; 3] {
        [
            self.dims[0] as f64 * self.h,
            self.dims[1] as f64 * self.h,
            self.dims[2] as f64 * self.h,
        ]
    }

    /// Cell volume h^3.
    #[inline]
    pub fn cell_volume(&self) -> f64 {
        self.h * self.h * self.h
    }

    /// Domain volume.
    pub fn volume(&self) -> f64 {
        self.len() as f64 * self.cell_volume()
    }

    pub fn assert_periodic(&self) -> Result<()> {
        if self.periodic.iter().all(|&p| p) {
            Ok(())
        } else {
            Err(Error::UnsupportedBoundary(
                "operation requires a fully periodic grid".into(),
            ))
        }
    }

    /// Wrap a physical position into the periodic fundamental domain.
    pub fn wrap_position(&self, x: [f64; 3]) -> [f64; 3] {
        let ext = self.extent();
        let mut out = [0.0; 3];
        for d in 0..3 {
            let rel = (x[d] - self.origin[d]).rem_euclid(ext[d]);
            out[d] = self.origin[d] + rel;
        }
        out
    }
}
