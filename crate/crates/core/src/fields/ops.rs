//! Discrete differential operators on periodic grids.
//!
//! The curl/gradient/divergence family uses the 4th-order centered stencil
//! with coefficients (±8/12h, ∓1/12h). Divergence uses the same stencil as
//! curl, so div(curl(.)) vanishes identically (the centered difference
//! operators commute).

use crate::error::Result;
use crate::fields::field::{PorosityField, ScalarField, VectorField};
use crate::fields::grid::Grid;

/// 4th-order centered derivative of `data` along `axis`, periodic wrap.
fn derive4(grid: &Grid, data: &[f64], axis: usize, out: &mut [f64]) {
    let [nx, ny, nz] = grid.dims;
    let inv12h = 1.0 / (12.0 * grid.h);
    let stride = match axis {
        0 => 1,
        1 => nx,
        _ => nx * ny,
    };
    let n = grid.dims[axis] as isize;
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let idx = grid.idx(i, j, k);
                let c = [i, j, k][axis] as isize;
                let base = idx as isize - c * stride as isize;
                let at = |off: isize| {
                    let w = (c + off).rem_euclid(n);
                    data[(base + w * stride as isize) as usize]
                };
                out[idx] = (8.0 * (at(1) - at(-1)) - (at(2) - at(-2))) * inv12h;
            }
        }
    }
}

/// 4th-order gradient of a scalar field.
pub fn gradient4(f: &ScalarField) -> Result<VectorField> {
    f.grid.assert_periodic()?;
    let mut out = VectorField::zeros(&f.grid);
    for d in 0..3 {
        derive4(&f.grid, &f.data, d, &mut out.comps[d]);
    }
    Ok(out)
}

/// 4th-order curl of a vector field.
pub fn curl(v: &VectorField) -> Result<VectorField> {
    v.grid.assert_periodic()?;
    let grid = &v.grid;
    let n = grid.len();
    let mut d = vec![vec![0.0; n]; 6];
    // d[0]=dy vz, d[1]=dz vy, d[2]=dz vx, d[3]=dx vz, d[4]=dx vy, d[5]=dy vx
    derive4(grid, &v.comps[2], 1, &mut d[0]);
    derive4(grid, &v.comps[1], 2, &mut d[1]);
    derive4(grid, &v.comps[0], 2, &mut d[2]);
    derive4(grid, &v.comps[2], 0, &mut d[3]);
    derive4(grid, &v.comps[1], 0, &mut d[4]);
    derive4(grid, &v.comps[0], 1, &mut d[5]);
    let mut out = VectorField::zeros(grid);
    for idx in 0..n {
        out.comps[0][idx] = d[0][idx] - d[1][idx];
        out.comps[1][idx] = d[2][idx] - d[3][idx];
        out.comps[2][idx] = d[4][idx] - d[5][idx];
    }
    out.check_finite("curl")?;
    Ok(out)
}

/// 4th-order divergence, matching the curl stencil.
pub fn divergence4(v: &VectorField) -> Result<ScalarField> {
    v.grid.assert_periodic()?;
    let grid = &v.grid;
    let mut out = ScalarField::zeros(grid);
    let mut tmp = vec![0.0; grid.len()];
    for d in 0..3 {
        derive4(grid, &v.comps[d], d, &mut tmp);
        for (o, t) in out.data.iter_mut().zip(&tmp) {
            *o += *t;
        }
    }
    Ok(out)
}

/// 2nd-order centered gradient (used by the specific-area estimate, where the
/// jump integral of a sharp step is exact for this stencil).
pub fn gradient2(f: &ScalarField) -> Result<VectorField> {
    f.grid.assert_periodic()?;
    let grid = &f.grid;
    let [nx, ny, nz] = grid.dims;
    let inv2h = 1.0 / (2.0 * grid.h);
    let mut out = VectorField::zeros(grid);
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let idx = grid.idx(i, j, k);
                let (i, j, k) = (i as isize, j as isize, k as isize);
                out.comps[0][idx] =
                    (f.data[grid.idx_wrap(i + 1, j, k)] - f.data[grid.idx_wrap(i - 1, j, k)]) * inv2h;
                out.comps[1][idx] =
                    (f.data[grid.idx_wrap(i, j + 1, k)] - f.data[grid.idx_wrap(i, j - 1, k)]) * inv2h;
                out.comps[2][idx] =
                    (f.data[grid.idx_wrap(i, j, k + 1)] - f.data[grid.idx_wrap(i, j, k - 1)]) * inv2h;
            }
        }
    }
    Ok(out)
}

/// 3-point uniform average along one axis, applied in place.
fn average3_axis(grid: &Grid, data: &mut Vec<f64>, axis: usize) {
    let [nx, ny, nz] = grid.dims;
    let stride = match axis {
        0 => 1usize,
        1 => nx,
        _ => nx * ny,
    };
    let n = grid.dims[axis] as isize;
    let mut out = vec![0.0; grid.len()];
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let idx = grid.idx(i, j, k);
                let c = [i, j, k][axis] as isize;
                let base = idx as isize - c * stride as isize;
                let at = |off: isize| {
                    let w = (c + off).rem_euclid(n);
                    data[(base + w * stride as isize) as usize]
                };
                out[idx] = (at(-1) + at(0) + at(1)) / 3.0;
            }
        }
    }
    *data = out;
}

/// Discrete averaging convolution eps * W_h with W = (delta_-1 + delta_0 + delta_1)/3
/// tensorized per axis (a 27-point stencil with uniform weight 1/27 in 3D).
pub fn convolve_w(eps: &PorosityField) -> Result<ScalarField> {
    eps.grid().assert_periodic()?;
    let grid = eps.grid().clone();
    let mut data = eps.eps.data.clone();
    for axis in 0..3 {
        average3_axis(&grid, &mut data, axis);
    }
    Ok(ScalarField { grid, data })
}
