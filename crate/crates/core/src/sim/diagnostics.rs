//! Time-series diagnostics accumulated during a run and consumed by the
//! post-processing commands.

use serde::{Deserialize, Serialize};
use std::io::Write;

use crate::error::Result;
use crate::fields::{PorosityField, ScalarField};

/// One sampled macro step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub time: f64,
    pub step: usize,
    pub dt: f64,
    /// Mean porosity, full domain / upstream quarter.
    pub phi: f64,
    pub phi_upstream: f64,
    /// Energy-dissipation permeability, full domain / upstream quarter.
    pub kappa: f64,
    pub kappa_upstream: f64,
    /// Domain totals (mol) per pool.
    pub total_co3: f64,
    pub total_ca: f64,
    pub total_precip: f64,
    pub total_crystal: f64,
    /// Moles injected by the inflow strip this step (carbonate chain).
    pub inflow_moles: f64,
    /// Net moles added by negative-concentration clipping (transport + RK2).
    pub clipped_moles: f64,
    /// Moles refunded by the full-clog rule.
    pub refunded_moles: f64,
    pub full_clog_cells: usize,
    /// Carbonate-chain budget residual:
    /// d(CO3 + precip + crystal) - inflow - clipped over the step.
    pub budget_residual: f64,
    /// DBS iterations this step (0 when the solve was skipped).
    pub dbs_iterations: usize,
}

/// Per-x-slab YZ averages at one output time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceProfile {
    pub time: f64,
    pub x: Vec<f64>,
    pub eps: Vec<f64>,
    pub c_precip: Vec<f64>,
}

impl SliceProfile {
    pub fn compute(time: f64, eps: &PorosityField, c_precip: &ScalarField) -> SliceProfile {
        let grid = eps.grid();
        let [nx, ny, nz] = grid.dims;
        let slab = (ny * nz) as f64;
        let mut out = SliceProfile {
            time,
            x: Vec::with_capacity(nx),
            eps: Vec::with_capacity(nx),
            c_precip: Vec::with_capacity(nx),
        };
        for i in 0..nx {
            let mut se = 0.0;
            let mut sp = 0.0;
            for k in 0..nz {
                for j in 0..ny {
                    let idx = grid.idx(i, j, k);
                    se += eps.eps.data[idx];
                    sp += c_precip.data[idx];
                }
            }
            out.x.push(grid.position(i, 0, 0)[0]);
            out.eps.push(se / slab);
            out.c_precip.push(sp / slab);
        }
        out
    }
}

/// A sharp permeability drop flagged by the sliding-window detector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClogEvent {
    pub time: f64,
    pub sample_index: usize,
    /// Fractional drop relative to the window maximum.
    pub drop_fraction: f64,
    pub window: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub samples: Vec<Sample>,
    pub slices: Vec<SliceProfile>,
    pub clog_events: Vec<ClogEvent>,
}

impl Diagnostics {
    pub fn push_sample(&mut self, s: Sample) {
        if let Some(last) = self.samples.last() {
            debug_assert!(s.time > last.time, "sample times must increase");
        }
        self.samples.push(s);
    }

    pub fn write_samples_csv(&self, w: &mut impl Write) -> Result<()> {
        writeln!(
            w,
            "time,step,dt,phi,phi_upstream,kappa,kappa_upstream,\
             total_co3,total_ca,total_precip,total_crystal,\
             inflow_moles,clipped_moles,refunded_moles,full_clog_cells,\
             budget_residual,dbs_iterations"
        )?;
        for s in &self.samples {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                s.time,
                s.step,
                s.dt,
                s.phi,
                s.phi_upstream,
                s.kappa,
                s.kappa_upstream,
                s.total_co3,
                s.total_ca,
                s.total_precip,
                s.total_crystal,
                s.inflow_moles,
                s.clipped_moles,
                s.refunded_moles,
                s.full_clog_cells,
                s.budget_residual,
                s.dbs_iterations
            )?;
        }
        Ok(())
    }

    /// One CSV block per output time, blocks separated by a blank line.
    pub fn write_slices_csv(&self, w: &mut impl Write) -> Result<()> {
        for profile in &self.slices {
            writeln!(w, "# time = {}", profile.time)?;
            writeln!(w, "x,eps,c_precip")?;
            for i in 0..profile.x.len() {
                writeln!(
                    w,
                    "{},{},{}",
                    profile.x[i], profile.eps[i], profile.c_precip[i]
                )?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}
