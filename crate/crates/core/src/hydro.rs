//! Stationary Darcy-Brinkman-Stokes solver in velocity-vorticity form.
//!
//! The stationary flow is the fixed point of the Brinkman-Diffusion-Projection
//! composition: exact pointwise Brinkman damping, implicit vorticity diffusion
//! via a spectral Helmholtz solve, and projection onto divergence-free fields
//! through the stream function. The velocity unknown is the zero-mean
//! fluctuation around the prescribed mean flow.

use crate::error::{Error, Result};
use crate::fields::{curl, gradient4, PorosityField, SpectralSolver, VectorField};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FlowParams {
    /// Dynamic viscosity (Pa s), treated with unit reference density.
    pub mu: f64,
    /// Bulk permeability of the micro-porous matrix (m^2).
    pub kappa_b: f64,
    /// Prescribed mean velocity (m/s).
    pub u_bar: [f64; 3],
    /// Pseudo-time step of the fixed point; None selects 0.25 h^2 / mu.
    pub dt_pseudo: Option<f64>,
    /// Relative velocity-residual tolerance.
    pub tol: f64,
    pub max_iters: usize,
}

impl FlowParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu > 0.0) {
            return Err(Error::Parameter(format!("mu = {} must be > 0", self.mu)));
        }
        if !(self.kappa_b > 0.0) {
            return Err(Error::Parameter(format!("kappa_b = {} must be > 0", self.kappa_b)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Parameter(format!("tol = {} must be > 0", self.tol)));
        }
        if let Some(dt) = self.dt_pseudo {
            if !(dt > 0.0) {
                return Err(Error::Parameter(format!("dt_pseudo = {dt} must be > 0")));
            }
        }
        Ok(())
    }

    pub fn dt_pseudo_for(&self, h: f64) -> f64 {
        self.dt_pseudo.unwrap_or(0.25 * h * h / self.mu)
    }
}

impl Default for FlowParams {
    fn default() -> Self {
        FlowParams {
            mu: 1e-3,
            kappa_b: 2e-15,
            u_bar: [1e-3, 0.0, 0.0],
            dt_pseudo: None,
            tol: 1e-6,
            max_iters: 200_000,
        }
    }
}

/// Converged flow state: zero-mean fluctuation `u`, vorticity, stream function
/// and the mean flow it is lifted by.
#[derive(Debug, Clone)]
pub struct FlowState {
    pub u: VectorField,
    pub omega: VectorField,
    pub psi: VectorField,
    pub u_bar: [f64; 3],
    pub iterations: usize,
    pub residual: f64,
    /// Relative residual per iteration, for convergence diagnostics.
    pub residual_history: Vec<f64>,
}

impl FlowState {
    /// Total velocity u_bar + u at a flat index.
    #[inline]
    pub fn total_at(&self, idx: usize) -> [f64; 3] {
        [
            self.u_bar[0] + self.u.comps[0][idx],
            self.u_bar[1] + self.u.comps[1][idx],
            self.u_bar[2] + self.u.comps[2][idx],
        ]
    }

    /// Total velocity field u_bar + u.
    pub fn total_velocity(&self) -> VectorField {
        let mut out = self.u.clone();
        for d in 0..3 {
            for v in &mut out.comps[d] {
                *v += self.u_bar[d];
            }
        }
        out
    }
}

/// Darcy drag coefficient of the momentum equation, kappa_b^-1 (1-eps)^2 eps^-2.
#[inline]
pub fn lambda_of(eps: f64, kappa_b: f64) -> f64 {
    let s = 1.0 - eps;
    s * s / (eps * eps * kappa_b)
}

/// Kozeny-Carman inverse micro-permeability, kappa_b^-1 (1-eps)^2 eps^-3.
#[inline]
pub fn kozeny_inverse(eps: f64, kappa_b: f64) -> f64 {
    let s = 1.0 - eps;
    s * s / (eps * eps * eps * kappa_b)
}

/// Exact Brinkman damping over one pseudo-time step:
/// Lambda(u) = exp(-mu lambda(eps) dt) (u + u_bar) - u_bar.
pub fn brinkman_step(
    u: &VectorField,
    eps: &PorosityField,
    params: &FlowParams,
    dt: f64,
) -> VectorField {
    let mut out = u.clone();
    for (idx, &e) in eps.eps.data.iter().enumerate() {
        let damp = (-params.mu * lambda_of(e, params.kappa_b) * dt).exp();
        for d in 0..3 {
            out.comps[d][idx] = damp * (u.comps[d][idx] + params.u_bar[d]) - params.u_bar[d];
        }
    }
    out
}

/// 4th-order vorticity of the total velocity.
pub fn vorticity_of(u_total: &VectorField) -> Result<VectorField> {
    curl(u_total)
}

/// Implicit-Euler vorticity diffusion: omega = [I - mu dt Lap]^-1 curl(u_bar + u).
pub fn diffuse_vorticity(
    u: &VectorField,
    solver: &SpectralSolver,
    params: &FlowParams,
    dt: f64,
) -> Result<VectorField> {
    // curl(u_bar) = 0, so the fluctuation carries all the vorticity.
    let w = curl(u)?;
    solver.solve_helmholtz_vec(&w, params.mu * dt)
}

/// Stream-function projection: psi solves -Lap psi = omega, u = curl(psi).
/// Returns (psi, u); u is zero mean and discretely divergence free.
pub fn project(omega: &VectorField, solver: &SpectralSolver) -> Result<(VectorField, VectorField)> {
    let psi = solver.solve_poisson_vec(omega)?;
    let u = curl(&psi)?;
    Ok((psi, u))
}

/// Iterate the Brinkman-Diffusion-Projection fixed point from `initial`
/// (zeros when None, or a warm start from a previous solve).
pub fn solve_dbs(
    eps: &PorosityField,
    params: &FlowParams,
    solver: &SpectralSolver,
    initial: Option<&VectorField>,
) -> Result<FlowState> {
    params.validate()?;
    let grid = eps.grid();
    let dt = params.dt_pseudo_for(grid.h);
    let vol = grid.volume();
    let ub = params.u_bar;
    let ub_l2 = (ub[0] * ub[0] + ub[1] * ub[1] + ub[2] * ub[2]).sqrt() * vol.sqrt();

    // exp(-mu lambda dt) per node, fixed over the iteration
    let damp: Vec<f64> = eps
        .eps
        .data
        .iter()
        .map(|&e| (-params.mu * lambda_of(e, params.kappa_b) * dt).exp())
        .collect();

    let mut u = match initial {
        Some(u0) => u0.clone(),
        None => VectorField::zeros(grid),
    };
    let mut scratch = VectorField::zeros(grid);
    let mut history = Vec::new();

    for m in 0..params.max_iters {
        // Brinkman: damp * (u + u_bar) is the total velocity after penalization
        for idx in 0..grid.len() {
            let d = damp[idx];
            for c in 0..3 {
                scratch.comps[c][idx] = d * (u.comps[c][idx] + ub[c]);
            }
        }
        // Helmholtz (vorticity diffusion) and Poisson (stream function) are
        // both diagonal in Fourier space, so fuse them into one round trip.
        let w = curl(&scratch)?;
        let psi = solver.solve_helmholtz_poisson_vec(&w, params.mu * dt)?;
        let u_new = curl(&psi)?;

        let mut diff2 = 0.0;
        let mut u2 = 0.0;
        for c in 0..3 {
            for (a, b) in u_new.comps[c].iter().zip(&u.comps[c]) {
                let d = a - b;
                diff2 += d * d;
                u2 += b * b;
            }
        }
        let cell = grid.cell_volume();
        let diff = (diff2 * cell).sqrt();
        let denom = (u2 * cell).sqrt().max(ub_l2);
        let residual = if denom > 0.0 { diff / denom } else { diff };
        history.push(residual);
        u = u_new;

        if residual < params.tol {
            u.check_finite("solve_dbs velocity")?;
            // Recover the diffused vorticity for the converged state.
            let omega = solver.solve_helmholtz_vec(&w, params.mu * dt)?;
            return Ok(FlowState {
                u,
                omega,
                psi,
                u_bar: ub,
                iterations: m + 1,
                residual,
                residual_history: history,
            });
        }
    }
    Err(Error::Convergence {
        iters: params.max_iters,
        residual: history.last().copied().unwrap_or(f64::NAN),
    })
}

/// Subdomain over which the macroscopic permeability is extracted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PermeabilityWindow {
    Full,
    /// Axis-aligned slab covering the first quarter of the flow axis.
    UpstreamQuarter,
}

/// Energy-dissipation permeability estimate over a window:
/// kappa = mu |u_bar|^2 |W| / Int_W (2 mu D(u):D(u) + mu K_eps^-1 |u_tot|^2) dv.
///
/// The drag weight is the Kozeny-Carman K_eps^-1 of the intrinsic momentum
/// balance, so a uniform-porosity box returns kappa_b eps^3 / (1-eps)^2
/// exactly.
pub fn estimate_permeability(
    state: &FlowState,
    eps: &PorosityField,
    params: &FlowParams,
    window: PermeabilityWindow,
    flow_axis: usize,
) -> Result<f64> {
    let grid = eps.grid();
    let u_tot = state.total_velocity();
    // strain-rate tensor from the 4th-order gradient of each component
    let grads: Vec<VectorField> = (0..3)
        .map(|c| {
            gradient4(&crate::fields::ScalarField {
                grid: grid.clone(),
                data: u_tot.comps[c].clone(),
            })
        })
        .collect::<Result<_>>()?;

    let quarter = grid.dims[flow_axis].div_ceil(4);
    let in_window = |i: usize, j: usize, k: usize| match window {
        PermeabilityWindow::Full => true,
        PermeabilityWindow::UpstreamQuarter => [i, j, k][flow_axis] < quarter,
    };

    let mu = params.mu;
    let mut dissipation = 0.0;
    let mut count = 0usize;
    for k in 0..grid.dims[2] {
        for j in 0..grid.dims[1] {
            for i in 0..grid.dims[0] {
                if !in_window(i, j, k) {
                    continue;
                }
                count += 1;
                let idx = grid.idx(i, j, k);
                // D_ab = (du_a/dx_b + du_b/dx_a)/2 ; D:D summed over all entries
                let mut dd = 0.0;
                for a in 0..3 {
                    for b in 0..3 {
                        let d_ab = 0.5 * (grads[a].comps[b][idx] + grads[b].comps[a][idx]);
                        dd += d_ab * d_ab;
                    }
                }
                let v = [
                    u_tot.comps[0][idx],
                    u_tot.comps[1][idx],
                    u_tot.comps[2][idx],
                ];
                let v2 = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
                dissipation +=
                    2.0 * mu * dd + mu * kozeny_inverse(eps.eps.data[idx], params.kappa_b) * v2;
            }
        }
    }
    let cell = grid.cell_volume();
    dissipation *= cell;
    let window_vol = count as f64 * cell;
    if dissipation < 1e-30 {
        return Err(Error::UndefinedPermeability(dissipation));
    }
    let ub = params.u_bar;
    let ub2 = ub[0] * ub[0] + ub[1] * ub[1] + ub[2] * ub[2];
    Ok(mu * ub2 * window_vol / dissipation)
}
