//! FFT-based elliptic solvers on fully periodic grids.
//!
//! Poisson and Helmholtz solves use the continuous symbol |k|^2, so they are
//! exact inverses of the spectral Laplacian (not of a finite-difference one).

use crate::error::{Error, Result};
use crate::fields::field::{ScalarField, VectorField};
use crate::fields::grid::Grid;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

/// Cached FFT plans and wavenumbers for one grid.
pub struct SpectralSolver {
    grid: Grid,
    forward: [Arc<dyn Fft<f64>>; 3],
    inverse: [Arc<dyn Fft<f64>>; 3],
    /// Angular wavenumbers per axis, 2*pi*m~/L with m~ the signed mode index.
    wavenumbers: [Vec<f64>; 3],
}

impl SpectralSolver {
    pub fn new(grid: &Grid) -> Result<Self> {
        grid.assert_periodic()?;
        let mut planner = FftPlanner::new();
        let mk = |n: usize, h: f64| -> Vec<f64> {
            let len = n as f64 * h;
            (0..n)
                .map(|m| {
                    let m_signed = if m <= n / 2 { m as isize } else { m as isize - n as isize };
                    2.0 * std::f64::consts::PI * m_signed as f64 / len
                })
                .collect()
        };
        Ok(SpectralSolver {
            grid: grid.clone(),
            forward: [
                planner.plan_fft_forward(grid.dims[0]),
                planner.plan_fft_forward(grid.dims[1]),
                planner.plan_fft_forward(grid.dims[2]),
            ],
            inverse: [
                planner.plan_fft_inverse(grid.dims[0]),
                planner.plan_fft_inverse(grid.dims[1]),
                planner.plan_fft_inverse(grid.dims[2]),
            ],
            wavenumbers: [
                mk(grid.dims[0], grid.h),
                mk(grid.dims[1], grid.h),
                mk(grid.dims[2], grid.h),
            ],
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    fn transform_axis(&self, data: &mut [Complex64], axis: usize, inverse: bool) {
        let [nx, ny, nz] = self.grid.dims;
        let n = self.grid.dims[axis];
        let stride = match axis {
            0 => 1usize,
            1 => nx,
            _ => nx * ny,
        };
        let plan = if inverse { &self.inverse[axis] } else { &self.forward[axis] };
        let mut scratch = vec![Complex64::default(); plan.get_inplace_scratch_len()];
        if axis == 0 {
            // x lines are contiguous: transform in place
            for chunk in data.chunks_exact_mut(nx) {
                plan.process_with_scratch(chunk, &mut scratch);
            }
            return;
        }
        let mut line = vec![Complex64::default(); n];
        let (outer, inner) = match axis {
            1 => (nz, nx),
            _ => (1, nx * ny),
        };
        // Lines along `axis` start at every combination of the other two indices.
        for o in 0..outer {
            for i in 0..inner {
                let start = match axis {
                    1 => (o * ny * nx) + i,
                    _ => i,
                };
                for m in 0..n {
                    line[m] = data[start + m * stride];
                }
                plan.process_with_scratch(&mut line, &mut scratch);
                for m in 0..n {
                    data[start + m * stride] = line[m];
                }
            }
        }
    }

    /// Forward 3D FFT of real data (unnormalized).
    pub fn forward(&self, data: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = data.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        for axis in 0..3 {
            self.transform_axis(&mut buf, axis, false);
        }
        buf
    }

    /// Inverse 3D FFT, returning the real part, normalized by 1/N.
    pub fn inverse(&self, mut buf: Vec<Complex64>) -> Vec<f64> {
        for axis in 0..3 {
            self.transform_axis(&mut buf, axis, true);
        }
        let norm = 1.0 / self.grid.len() as f64;
        buf.into_iter().map(|c| c.re * norm).collect()
    }

    fn apply_symbol(&self, data: &[f64], mut symbol: impl FnMut(f64) -> f64) -> Vec<f64> {
        let mut buf = self.forward(data);
        let [nx, ny, nz] = self.grid.dims;
        for kz in 0..nz {
            let wz = self.wavenumbers[2][kz];
            for ky in 0..ny {
                let wy = self.wavenumbers[1][ky];
                for kx in 0..nx {
                    let wx = self.wavenumbers[0][kx];
                    let k2 = wx * wx + wy * wy + wz * wz;
                    buf[self.grid.idx(kx, ky, kz)] *= symbol(k2);
                }
            }
        }
        self.inverse(buf)
    }

    fn solve_poisson_raw(&self, data: &[f64]) -> Vec<f64> {
        let n = data.len() as f64;
        let mean = data.iter().sum::<f64>() / n;
        let shifted: Vec<f64> = data.iter().map(|v| v - mean).collect();
        // k = 0 mode pinned to zero: the returned solution is zero mean.
        self.apply_symbol(&shifted, |k2| if k2 > 0.0 { 1.0 / k2 } else { 0.0 })
    }

    /// Solve -Lap(out) = rhs with the continuous symbol |k|^2. The rhs mean is
    /// subtracted first and the solution is zero mean.
    pub fn solve_poisson(&self, rhs: &ScalarField) -> Result<ScalarField> {
        rhs.check_finite("solve_poisson rhs")?;
        Ok(ScalarField {
            grid: self.grid.clone(),
            data: self.solve_poisson_raw(&rhs.data),
        })
    }

    /// Componentwise Poisson solve on a vector field.
    pub fn solve_poisson_vec(&self, rhs: &VectorField) -> Result<VectorField> {
        rhs.check_finite("solve_poisson rhs")?;
        Ok(VectorField {
            grid: self.grid.clone(),
            comps: [
                self.solve_poisson_raw(&rhs.comps[0]),
                self.solve_poisson_raw(&rhs.comps[1]),
                self.solve_poisson_raw(&rhs.comps[2]),
            ],
        })
    }

    /// Solve [I - coef*Lap](out) = rhs, coef in m^2 (typically mu*dt).
    pub fn solve_helmholtz(&self, rhs: &ScalarField, coef: f64) -> Result<ScalarField> {
        if coef < 0.0 {
            return Err(Error::Parameter(format!("helmholtz coefficient {coef} < 0")));
        }
        rhs.check_finite("solve_helmholtz rhs")?;
        Ok(ScalarField {
            grid: self.grid.clone(),
            data: self.apply_symbol(&rhs.data, |k2| 1.0 / (1.0 + coef * k2)),
        })
    }

    /// Componentwise Helmholtz solve on a vector field.
    pub fn solve_helmholtz_vec(&self, rhs: &VectorField, coef: f64) -> Result<VectorField> {
        if coef < 0.0 {
            return Err(Error::Parameter(format!("helmholtz coefficient {coef} < 0")));
        }
        rhs.check_finite("solve_helmholtz rhs")?;
        Ok(VectorField {
            grid: self.grid.clone(),
            comps: [
                self.apply_symbol(&rhs.comps[0], |k2| 1.0 / (1.0 + coef * k2)),
                self.apply_symbol(&rhs.comps[1], |k2| 1.0 / (1.0 + coef * k2)),
                self.apply_symbol(&rhs.comps[2], |k2| 1.0 / (1.0 + coef * k2)),
            ],
        })
    }

    /// Fused solve of [I - coef*Lap] (-Lap) out = rhs in one spectral round
    /// trip (the two operators are simultaneously diagonal). The rhs mean is
    /// subtracted and the k = 0 mode pinned, as in the Poisson solve.
    pub fn solve_helmholtz_poisson_vec(&self, rhs: &VectorField, coef: f64) -> Result<VectorField> {
        if coef < 0.0 {
            return Err(Error::Parameter(format!("helmholtz coefficient {coef} < 0")));
        }
        rhs.check_finite("solve_helmholtz_poisson rhs")?;
        let solve = |data: &[f64]| -> Vec<f64> {
            let n = data.len() as f64;
            let mean = data.iter().sum::<f64>() / n;
            let shifted: Vec<f64> = data.iter().map(|v| v - mean).collect();
            self.apply_symbol(&shifted, |k2| {
                if k2 > 0.0 {
                    1.0 / ((1.0 + coef * k2) * k2)
                } else {
                    0.0
                }
            })
        };
        Ok(VectorField {
            grid: self.grid.clone(),
            comps: [
                solve(&rhs.comps[0]),
                solve(&rhs.comps[1]),
                solve(&rhs.comps[2]),
            ],
        })
    }

    /// Spectral negative Laplacian, the left inverse checked by the tests.
    pub fn neg_laplacian(&self, f: &ScalarField) -> ScalarField {
        ScalarField {
            grid: self.grid.clone(),
            data: self.apply_symbol(&f.data, |k2| k2),
        }
    }
}
