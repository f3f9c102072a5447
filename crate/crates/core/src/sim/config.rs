//! TOML run configuration. Schema documented in docs/config.md.

use crate::chemistry::ChemParams;
use crate::error::{Error, Result};
use crate::fields::{Grid, PorosityField, VoxelMapping};
use crate::hydro::FlowParams;
use crate::particles::RemeshKernel;
use crate::sim::geometry::{smooth_porosity, synthetic_geometry, SyntheticGeometry};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridConfig {
    pub dims: [usize; 3],
    pub h: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GeometryConfig {
    /// Headerless uint8 volume, x fastest.
    Voxel {
        path: PathBuf,
        /// "binary" or "grayscale"
        #[serde(default = "default_mapping")]
        mapping: String,
        #[serde(default = "default_threshold")]
        solid_threshold: u8,
    },
    Synthetic {
        #[serde(flatten)]
        shape: SyntheticGeometry,
    },
}

fn default_mapping() -> String {
    "binary".to_string()
}

fn default_threshold() -> u8 {
    128
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundaryMode {
    Periodic,
    InflowStrip,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct BoundaryConfig {
    pub mode: BoundaryMode,
    /// Upstream slab thickness (x cells) reset to the inlet concentrations.
    pub strip_cells: usize,
}

impl Default for BoundaryConfig {
    fn default() -> Self {
        BoundaryConfig {
            mode: BoundaryMode::Periodic,
            strip_cells: 4,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct InitialConfig {
    /// Superficial concentrations (mol/m^3).
    pub c_ca: f64,
    pub c_co3: f64,
    pub c_precip: f64,
    /// When set, c_co3 is derived from this CO2 partial pressure (atm)
    /// through Henry's law instead.
    pub p_co2: Option<f64>,
    /// Initial specific reactive area (m^-1).
    pub a_s: f64,
}

impl Default for InitialConfig {
    fn default() -> Self {
        InitialConfig {
            c_ca: 100.0,
            c_co3: 1.0,
            c_precip: 0.0,
            p_co2: None,
            a_s: 8300.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TimeConfig {
    /// Simulated end time (s). Zero writes the initial state only.
    pub t_final: f64,
    /// Fixed macro step override; None re-evaluates the stability bounds
    /// each step.
    pub dt_macro: Option<f64>,
    /// Safety factor applied to the adaptive bound.
    pub safety: f64,
    /// Hard cap on macro steps (guards runaway configs).
    pub max_steps: usize,
}

impl Default for TimeConfig {
    fn default() -> Self {
        TimeConfig {
            t_final: 0.0,
            dt_macro: None,
            safety: 0.9,
            max_steps: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TransportConfig {
    pub kernel: RemeshKernel,
}

impl Default for TransportConfig {
    fn default() -> Self {
        TransportConfig {
            kernel: RemeshKernel::M4Prime,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct HydroPolicy {
    /// Re-solve DBS when max|eps - eps_at_last_solve| reaches this value.
    pub skip_threshold: f64,
}

impl Default for HydroPolicy {
    fn default() -> Self {
        HydroPolicy {
            skip_threshold: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Diagnostics sample cadence in macro steps.
    pub sample_every: usize,
    /// Slice-profile cadence in macro steps (0 disables intermediate blocks;
    /// initial and final profiles are always recorded).
    pub slices_every: usize,
    /// Checkpoint cadence in macro steps (0 = final checkpoint only).
    pub checkpoint_every: usize,
    pub write_vtk: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: PathBuf::from("out"),
            sample_every: 1,
            slices_every: 0,
            checkpoint_every: 0,
            write_vtk: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub grid: GridConfig,
    pub geometry: GeometryConfig,
    #[serde(default = "default_eps0")]
    pub eps0: f64,
    /// Box-smoothing passes applied to the porosity field after construction
    /// (periodic 7-point average). Softens voxel staircases into a thin graded
    /// wall layer, which removes the spurious shear-dissipation spike of sharp
    /// corners from the initial permeability estimate.
    #[serde(default)]
    pub smooth_passes: usize,
    pub flow: FlowParams,
    #[serde(default)]
    pub chemistry: ChemParams,
    #[serde(default)]
    pub initial: InitialConfig,
    #[serde(default)]
    pub transport: TransportConfig,
    #[serde(default)]
    pub boundary: BoundaryConfig,
    #[serde(default)]
    pub time: TimeConfig,
    #[serde(default)]
    pub hydro: HydroPolicy,
    #[serde(default)]
    pub output: OutputConfig,
}

fn default_eps0() -> f64 {
    PorosityField::DEFAULT_EPS0
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config {
            path: "<config>".to_string(),
            msg: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config {
            path: path.display().to_string(),
            msg: e.to_string(),
        })?;
        let cfg: RunConfig = toml::from_str(&text).map_err(|e| Error::Config {
            path: path.display().to_string(),
            msg: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let cfg_err = |field: &str, msg: String| Error::Config {
            path: field.to_string(),
            msg,
        };
        Grid::new(self.grid.dims, self.grid.h)
            .map_err(|e| cfg_err("grid", e.to_string()))?;
        if !(self.eps0 > 0.0 && self.eps0 < 1.0) {
            return Err(cfg_err("eps0", format!("{} outside (0, 1)", self.eps0)));
        }
        self.flow
            .validate()
            .map_err(|e| cfg_err("flow", e.to_string()))?;
        self.chemistry
            .validate()
            .map_err(|e| cfg_err("chemistry", e.to_string()))?;
        if self.time.t_final < 0.0 {
            return Err(cfg_err("time.t_final", "must be >= 0".to_string()));
        }
        if let Some(dt) = self.time.dt_macro {
            if !(dt > 0.0) {
                return Err(cfg_err("time.dt_macro", "must be > 0".to_string()));
            }
        }
        if !(self.time.safety > 0.0 && self.time.safety <= 1.0) {
            return Err(cfg_err("time.safety", "must lie in (0, 1]".to_string()));
        }
        if self.boundary.mode == BoundaryMode::InflowStrip {
            if self.boundary.strip_cells == 0 || self.boundary.strip_cells >= self.grid.dims[0] {
                return Err(cfg_err(
                    "boundary.strip_cells",
                    format!(
                        "{} outside 1..{}",
                        self.boundary.strip_cells, self.grid.dims[0]
                    ),
                ));
            }
        }
        if !(self.hydro.skip_threshold > 0.0) {
            return Err(cfg_err("hydro.skip_threshold", "must be > 0".to_string()));
        }
        for (name, v) in [
            ("initial.c_ca", self.initial.c_ca),
            ("initial.c_co3", self.initial.c_co3),
            ("initial.c_precip", self.initial.c_precip),
        ] {
            if v < 0.0 || !v.is_finite() {
                return Err(cfg_err(name, format!("{v} must be finite and >= 0")));
            }
        }
        if matches!(self.geometry, GeometryConfig::Voxel { ref mapping, .. }
            if mapping != "binary" && mapping != "grayscale")
        {
            return Err(cfg_err(
                "geometry.mapping",
                "must be \"binary\" or \"grayscale\"".to_string(),
            ));
        }
        Ok(())
    }

    pub fn build_grid(&self) -> Result<Grid> {
        Grid::new(self.grid.dims, self.grid.h)
    }

    pub fn build_porosity(&self) -> Result<PorosityField> {
        let grid = self.build_grid()?;
        let mut eps = match &self.geometry {
            GeometryConfig::Voxel {
                path,
                mapping,
                solid_threshold,
            } => {
                let m = match mapping.as_str() {
                    "binary" => VoxelMapping::Binary {
                        solid_threshold: *solid_threshold,
                    },
                    "grayscale" => VoxelMapping::Grayscale,
                    other => {
                        return Err(Error::Config {
                            path: "geometry.mapping".to_string(),
                            msg: format!("unknown mapping {other:?}"),
                        })
                    }
                };
                crate::fields::load_voxels(path, self.grid.dims, self.grid.h, m, self.eps0)
            }
            GeometryConfig::Synthetic { shape } => synthetic_geometry(&grid, shape, self.eps0),
        }?;
        for _ in 0..self.smooth_passes {
            smooth_porosity(&mut eps);
        }
        Ok(eps)
    }

    /// FNV-1a hash of the canonical serialized config, stamped into
    /// checkpoints to guard resumes against mismatched configs.
    pub fn hash(&self) -> Result<u64> {
        let canon = toml::to_string(self).map_err(|e| Error::Format(e.to_string()))?;
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in canon.as_bytes() {
            h ^= *b as u64;
            h = h.wrapping_mul(0x1000_0000_01b3);
        }
        Ok(h)
    }
}
