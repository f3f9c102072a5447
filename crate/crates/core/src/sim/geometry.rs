//! Deterministic synthetic porosity fields used by the shipped presets.

use crate::error::{Error, Result};
use crate::fields::{Grid, PorosityField, ScalarField};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Built-in geometry generators. All are extruded/aligned along x (the flow
/// axis of the presets).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum SyntheticGeometry {
    /// Open channel along x bounded by solid walls in y. `width_cells = None`
    /// leaves the whole box fluid.
    Channel { width_cells: Option<usize> },
    /// Square duct along x with a constricted neck.
    /// `bore_cells` / `neck_cells` are half-widths in cells; the neck spans
    /// `neck_length_cells` x slabs centered at `neck_center_fraction` of the
    /// x axis (default: the middle).
    Throat {
        bore_cells: usize,
        neck_cells: usize,
        neck_length_cells: usize,
        #[serde(default)]
        neck_center_fraction: Option<f64>,
    },
    /// Jittered lattice of solid spheres.
    SpherePack {
        spheres_per_axis: usize,
        radius_cells: f64,
        jitter_cells: f64,
        seed: u64,
    },
    /// Solid slab covering the first `fraction` of the x axis.
    Slab { fraction: f64 },
}

/// One periodic 7-point box-average pass over the porosity field. The convex
/// average keeps values inside `[eps0, 1]`; repeated passes soften the voxel
/// staircase into a graded wall layer a few cells thick.
pub fn smooth_porosity(eps: &mut PorosityField) {
    let grid = eps.grid().clone();
    let [nx, ny, nz] = grid.dims;
    let src = eps.eps.data.clone();
    for k in 0..nz {
        let (km, kp) = ((k + nz - 1) % nz, (k + 1) % nz);
        for j in 0..ny {
            let (jm, jp) = ((j + ny - 1) % ny, (j + 1) % ny);
            for i in 0..nx {
                let (im, ip) = ((i + nx - 1) % nx, (i + 1) % nx);
                eps.eps.data[grid.idx(i, j, k)] = (src[grid.idx(i, j, k)]
                    + src[grid.idx(im, j, k)]
                    + src[grid.idx(ip, j, k)]
                    + src[grid.idx(i, jm, k)]
                    + src[grid.idx(i, jp, k)]
                    + src[grid.idx(i, j, km)]
                    + src[grid.idx(i, j, kp)])
                    / 7.0;
            }
        }
    }
    // the convex average can land one ulp outside [eps0, 1]
    eps.clamp_in_place();
}

pub fn synthetic_geometry(
    grid: &Grid,
    geometry: &SyntheticGeometry,
    eps0: f64,
) -> Result<PorosityField> {
    let [nx, ny, nz] = grid.dims;
    let solid = |raw: Vec<bool>| -> Result<PorosityField> {
        let data = raw
            .into_iter()
            .map(|s| if s { eps0 } else { 1.0 })
            .collect();
        PorosityField::new(
            ScalarField {
                grid: grid.clone(),
                data,
            },
            eps0,
        )
    };
    match geometry {
        SyntheticGeometry::Channel { width_cells } => {
            let width = match width_cells {
                None => return PorosityField::uniform(grid, 1.0, eps0),
                Some(w) => *w,
            };
            if width == 0 || width > ny {
                return Err(Error::Parameter(format!(
                    "channel width {width} cells outside 1..={ny}"
                )));
            }
            let c = ny as f64 / 2.0;
            let half = width as f64 / 2.0;
            let mut raw = vec![false; grid.len()];
            for k in 0..nz {
                for j in 0..ny {
                    let wall = ((j as f64 + 0.5) - c).abs() > half;
                    for i in 0..nx {
                        raw[grid.idx(i, j, k)] = wall;
                    }
                }
            }
            solid(raw)
        }
        SyntheticGeometry::Throat {
            bore_cells,
            neck_cells,
            neck_length_cells,
            neck_center_fraction,
        } => {
            if *neck_cells == 0 || neck_cells > bore_cells {
                return Err(Error::Parameter(format!(
                    "throat neck {neck_cells} must lie in 1..=bore ({bore_cells})"
                )));
            }
            if 2 * *bore_cells > ny.min(nz) {
                return Err(Error::Parameter(format!(
                    "throat bore {bore_cells} too wide for {ny}x{nz} cross-section"
                )));
            }
            let center = neck_center_fraction.unwrap_or(0.5);
            if !(0.0..=1.0).contains(&center) {
                return Err(Error::Parameter(format!(
                    "throat neck_center_fraction {center} outside [0, 1]"
                )));
            }
            let cy = ny as f64 / 2.0;
            let cz = nz as f64 / 2.0;
            let mid = (center * nx as f64).round() as usize;
            let neck_lo = mid.saturating_sub(neck_length_cells / 2).min(nx);
            let neck_hi = (neck_lo + neck_length_cells).min(nx);
            let mut raw = vec![true; grid.len()];
            for i in 0..nx {
                let half = if (neck_lo..neck_hi).contains(&i) {
                    *neck_cells as f64
                } else {
                    *bore_cells as f64
                };
                for k in 0..nz {
                    for j in 0..ny {
                        let dy = ((j as f64 + 0.5) - cy).abs();
                        let dz = ((k as f64 + 0.5) - cz).abs();
                        if dy < half && dz < half {
                            raw[grid.idx(i, j, k)] = false;
                        }
                    }
                }
            }
            solid(raw)
        }
        SyntheticGeometry::SpherePack {
            spheres_per_axis,
            radius_cells,
            jitter_cells,
            seed,
        } => {
            let m = *spheres_per_axis;
            if m == 0 {
                return Err(Error::Parameter("sphere-pack needs at least one sphere".into()));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let mut centers = Vec::with_capacity(m * m * m);
            let spacing = [nx, ny, nz].map(|n| n as f64 / m as f64);
            for a in 0..m {
                for b in 0..m {
                    for c in 0..m {
                        let jitter = |r: &mut ChaCha8Rng| (r.gen::<f64>() - 0.5) * 2.0 * jitter_cells;
                        centers.push([
                            (a as f64 + 0.5) * spacing[0] + jitter(&mut rng),
                            (b as f64 + 0.5) * spacing[1] + jitter(&mut rng),
                            (c as f64 + 0.5) * spacing[2] + jitter(&mut rng),
                        ]);
                    }
                }
            }
            let r2 = radius_cells * radius_cells;
            let mut raw = vec![false; grid.len()];
            for k in 0..nz {
                for j in 0..ny {
                    for i in 0..nx {
                        let p = [i as f64 + 0.5, j as f64 + 0.5, k as f64 + 0.5];
                        // periodic minimum-image distance in cells
                        let hit = centers.iter().any(|c| {
                            let mut d2 = 0.0;
                            for (d, n) in [nx, ny, nz].iter().enumerate() {
                                let mut dd = (p[d] - c[d]).abs();
                                let nn = *n as f64;
                                if dd > nn / 2.0 {
                                    dd = nn - dd;
                                }
                                d2 += dd * dd;
                            }
                            d2 < r2
                        });
                        if hit {
                            raw[grid.idx(i, j, k)] = true;
                        }
                    }
                }
            }
            solid(raw)
        }
        SyntheticGeometry::Slab { fraction } => {
            if !(0.0..=1.0).contains(fraction) {
                return Err(Error::Parameter(format!(
                    "slab fraction {fraction} outside [0, 1]"
                )));
            }
            let cut = (*fraction * nx as f64).round() as usize;
            let mut raw = vec![false; grid.len()];
            for k in 0..nz {
                for j in 0..ny {
                    for i in 0..cut {
                        raw[grid.idx(i, j, k)] = true;
                    }
                }
            }
            solid(raw)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize) -> Grid {
        Grid::new([n, n, n], 1.0).unwrap()
    }

    #[test]
    fn full_channel_is_all_fluid() {
        let g = grid(8);
        let eps = synthetic_geometry(&g, &SyntheticGeometry::Channel { width_cells: None }, 0.05)
            .unwrap();
        assert!(eps.eps.data.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn half_slab_mean() {
        let g = grid(8);
        let eps =
            synthetic_geometry(&g, &SyntheticGeometry::Slab { fraction: 0.5 }, 0.05).unwrap();
        let expected = (1.0 + 0.05) / 2.0;
        assert!((eps.mean() - expected).abs() < 1e-12);
    }

    #[test]
    fn throat_neck_area_by_direct_count() {
        let g = grid(16);
        let geom = SyntheticGeometry::Throat {
            bore_cells: 6,
            neck_cells: 2,
            neck_length_cells: 4,
            neck_center_fraction: None,
        };
        let eps = synthetic_geometry(&g, &geom, 0.05).unwrap();
        // minimum fluid cross-section over x slabs
        let mut min_count = usize::MAX;
        for i in 0..16 {
            let mut count = 0;
            for k in 0..16 {
                for j in 0..16 {
                    if eps.eps.at(i, j, k) == 1.0 {
                        count += 1;
                    }
                }
            }
            min_count = min_count.min(count);
        }
        assert_eq!(min_count, 16, "neck half-width 2 gives a 4x4 fluid core");
    }

    #[test]
    fn sphere_pack_is_deterministic() {
        let g = grid(16);
        let geom = SyntheticGeometry::SpherePack {
            spheres_per_axis: 2,
            radius_cells: 3.0,
            jitter_cells: 1.0,
            seed: 7,
        };
        let a = synthetic_geometry(&g, &geom, 0.05).unwrap();
        let b = synthetic_geometry(&g, &geom, 0.05).unwrap();
        assert_eq!(a.eps.data, b.eps.data);
        assert!(a.mean() < 1.0 && a.mean() > 0.05);
    }

    #[test]
    fn smoothing_preserves_mean_and_bounds() {
        let g = grid(8);
        let mut eps =
            synthetic_geometry(&g, &SyntheticGeometry::Channel { width_cells: Some(4) }, 0.05)
                .unwrap();
        let mean0 = eps.mean();
        smooth_porosity(&mut eps);
        assert!((eps.mean() - mean0).abs() < 1e-12, "box average preserves the mean");
        assert!(eps.eps.data.iter().all(|&v| (0.05..=1.0).contains(&v)));
        // a wall-adjacent fluid cell is pulled below 1, the channel core is not
        assert!(eps.eps.at(0, 2, 0) < 1.0 - 1e-3);
        assert_eq!(eps.eps.at(0, 4, 0), 1.0);
    }

    #[test]
    fn invalid_parameters_rejected() {
        let g = grid(8);
        assert!(synthetic_geometry(&g, &SyntheticGeometry::Slab { fraction: 1.5 }, 0.05).is_err());
        assert!(synthetic_geometry(
            &g,
            &SyntheticGeometry::Throat {
                bore_cells: 2,
                neck_cells: 3,
                neck_length_cells: 2,
                neck_center_fraction: None,
            },
            0.05
        )
        .is_err());
        assert!(
            synthetic_geometry(&g, &SyntheticGeometry::Channel { width_cells: Some(0) }, 0.05)
                .is_err()
        );
    }
}
