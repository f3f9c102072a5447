//! Calcite precipitation/crystallization kinetics, attachment probability,
//! porosity and specific-area bookkeeping.
//!
//! Concentration fields are superficial (C = eps * intrinsic); rate laws
//! convert to intrinsic concentrations before applying activity coefficients.

use crate::error::{Error, Result};
use crate::fields::{convolve_w, gradient2, PorosityField, ScalarField};
use crate::pse::{archie_apply, DiffusionSpec, PseKernel};
use serde::{Deserialize, Serialize};

/// Rate constants and thermodynamic parameters of the CaCO3 system.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KineticConstants {
    /// Forward TST constants (mol m^-2 s^-1).
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    /// Solubility product (activity scale).
    pub k_eq: f64,
    /// Precipitation constant K3/K_eq (mol m^-2 s^-1).
    pub k_minus3: f64,
    /// Adsorption frequency (s^-1).
    pub k_c: f64,
    /// Activity coefficients (m^3/mol).
    pub gamma_ca: f64,
    pub gamma_co3: f64,
    /// Crystal molar volume (m^3/mol).
    pub v_molar: f64,
    /// Henry constant (L atm / mol).
    pub k_h: f64,
    /// Initial specific reactive area (m^-1).
    pub a_s_init: f64,
}

impl Default for KineticConstants {
    fn default() -> Self {
        KineticConstants {
            k1: 0.0,
            k2: 0.0,
            k3: 6.6e-7,
            k_eq: 10f64.powf(-8.48),
            k_minus3: 199.0,
            k_c: 1e3,
            gamma_ca: 1e-3,
            gamma_co3: 1e-3,
            v_molar: 36.93e-6,
            k_h: 29.41,
            a_s_init: 8300.0,
        }
    }
}

impl KineticConstants {
    pub fn validate(&self) -> Result<()> {
        let positives = [
            ("k_eq", self.k_eq),
            ("gamma_ca", self.gamma_ca),
            ("gamma_co3", self.gamma_co3),
            ("v_molar", self.v_molar),
            ("k_h", self.k_h),
            ("a_s_init", self.a_s_init),
        ];
        for (name, v) in positives {
            if !(v > 0.0) {
                return Err(Error::Parameter(format!("{name} = {v} must be > 0")));
            }
        }
        if self.k1 < 0.0 || self.k2 < 0.0 || self.k3 < 0.0 {
            return Err(Error::Parameter("forward TST constants must be >= 0".into()));
        }
        // zero turns the corresponding pathway off (pure transport runs)
        if self.k_minus3 < 0.0 || self.k_c < 0.0 {
            return Err(Error::Parameter("k_minus3 and k_c must be >= 0".into()));
        }
        if self.k3 > 0.0 && self.k_minus3 > 0.0 {
            let derived = self.k3 / self.k_eq;
            if ((derived - self.k_minus3) / self.k_minus3).abs() > 0.01 {
                return Err(Error::Parameter(format!(
                    "k_minus3 = {} inconsistent with k3/k_eq = {derived:.4}",
                    self.k_minus3
                )));
            }
        }
        Ok(())
    }
}

/// Attachment-probability configuration (Eq. 20 shape).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttachmentSpec {
    /// Porosity exponent m; 2 in practice.
    pub m_exponent: i32,
    pub normalization: AttachmentNormalization,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AttachmentNormalization {
    /// 1/C = (1 - eps0)/2: pointwise capture probability.
    PointwiseCapture,
    /// C chosen so the raw profile integrates to one over the domain.
    DistributionOverDomain,
}

impl Default for AttachmentSpec {
    fn default() -> Self {
        AttachmentSpec {
            m_exponent: 2,
            normalization: AttachmentNormalization::PointwiseCapture,
        }
    }
}

/// All mobile/immobile pools plus the geometry they live in.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChemState {
    /// Superficial concentrations (mol/m^3).
    pub c_co3: ScalarField,
    pub c_ca: ScalarField,
    pub c_precip: ScalarField,
    /// Immobile crystal (mol/m^3), non-decreasing.
    pub c_crystal: ScalarField,
    pub eps: PorosityField,
    /// Specific reactive area (m^-1).
    pub a_s: f64,
}

impl ChemState {
    pub fn uniform(
        eps: PorosityField,
        c_co3: f64,
        c_ca: f64,
        a_s: f64,
    ) -> Self {
        let grid = eps.grid().clone();
        ChemState {
            c_co3: ScalarField::constant(&grid, c_co3),
            c_ca: ScalarField::constant(&grid, c_ca),
            c_precip: ScalarField::zeros(&grid),
            c_crystal: ScalarField::zeros(&grid),
            eps,
            a_s,
        }
    }

    /// Total moles of the three-pool calcium budget.
    pub fn calcium_moles(&self) -> f64 {
        self.c_ca.integral() + self.c_precip.integral() + self.c_crystal.integral()
    }
}

/// Full TST rate R = A_s (K1 aH + K2 aH2CO3 + K3)(Q/K_eq - 1); negative for
/// net dissolution.
pub fn tst_rate(
    a_h: f64,
    a_h2co3: f64,
    a_ca: f64,
    a_co3: f64,
    a_s: f64,
    k: &KineticConstants,
) -> f64 {
    let q = a_ca * a_co3;
    a_s * (k.k1 * a_h + k.k2 * a_h2co3 + k.k3) * (q / k.k_eq - 1.0)
}

/// Far-from-equilibrium precipitation rate R_prec = K-3 A_s a_Ca a_CO3, with
/// activities built from intrinsic concentrations eps^-1 C.
pub fn precipitation_rate(
    c_ca: &ScalarField,
    c_co3: &ScalarField,
    eps: &PorosityField,
    a_s: f64,
    k: &KineticConstants,
) -> ScalarField {
    let mut out = ScalarField::zeros(&c_ca.grid);
    let pref = k.k_minus3 * a_s * k.gamma_ca * k.gamma_co3;
    for idx in 0..out.data.len() {
        let e = eps.eps.data[idx];
        out.data[idx] = pref * (c_ca.data[idx] / e) * (c_co3.data[idx] / e);
    }
    out
}

/// Attachment probability P_ad = C (1 - eps*W_h) eps^m, clamped to [0, 1].
/// Returns the field and the number of clamped nodes.
pub fn attachment_probability(
    eps: &PorosityField,
    spec: &AttachmentSpec,
) -> Result<(ScalarField, usize)> {
    let smoothed = convolve_w(eps)?;
    let grid = eps.grid();
    let mut raw = ScalarField::zeros(grid);
    for idx in 0..grid.len() {
        raw.data[idx] =
            (1.0 - smoothed.data[idx]) * eps.eps.data[idx].powi(spec.m_exponent);
    }
    let norm = match spec.normalization {
        AttachmentNormalization::PointwiseCapture => 2.0 / (1.0 - eps.eps0),
        AttachmentNormalization::DistributionOverDomain => {
            let total = raw.integral();
            if total <= 0.0 {
                0.0
            } else {
                1.0 / total
            }
        }
    };
    let mut clamped = 0usize;
    for v in &mut raw.data {
        let p = *v * norm;
        if !(0.0..=1.0).contains(&p) {
            clamped += 1;
        }
        *v = p.clamp(0.0, 1.0);
    }
    Ok((raw, clamped))
}

/// Crystallization rate R_crys = K_c P_ad C_precip.
pub fn crystallization_rate(
    c_precip: &ScalarField,
    p_ad: &ScalarField,
    k: &KineticConstants,
) -> ScalarField {
    ScalarField {
        grid: c_precip.grid.clone(),
        data: c_precip
            .data
            .iter()
            .zip(&p_ad.data)
            .map(|(c, p)| k.k_c * p * c)
            .collect(),
    }
}

/// Henry's law: dissolved concentration (mol/L) from partial pressure (atm).
pub fn henry_concentration(p_co2: f64, k_h: f64) -> Result<f64> {
    if p_co2 < 0.0 {
        return Err(Error::Parameter(format!("P_CO2 = {p_co2} must be >= 0")));
    }
    if !(k_h > 0.0) {
        return Err(Error::Parameter(format!("K_H = {k_h} must be > 0")));
    }
    Ok(p_co2 / k_h)
}

/// Bookkeeping of one porosity update.
#[derive(Debug, Clone, Default)]
pub struct PorosityAudit {
    /// Cells where the eps0 clamp bound (fully clogged).
    pub full_clog_cells: usize,
    /// Moles returned to C_precip by the truncation rule.
    pub refunded_moles: f64,
}

/// Apply a crystal increment: eps <- clamp(eps - v dC, eps0, 1). Where the
/// clamp binds, the increment is truncated to exactly reach eps0 and the
/// excess stays in C_precip (mass-preserving refund).
pub fn update_porosity(
    state: &mut ChemState,
    d_c_crystal: &ScalarField,
    k: &KineticConstants,
) -> Result<PorosityAudit> {
    let grid = state.eps.grid().clone();
    if d_c_crystal.grid != grid {
        return Err(Error::Parameter("update_porosity grid mismatch".into()));
    }
    let mut audit = PorosityAudit::default();
    let v = k.v_molar;
    let eps0 = state.eps.eps0;
    let cell = grid.cell_volume();
    for idx in 0..grid.len() {
        let dc = d_c_crystal.data[idx];
        if dc < -1e-15 {
            return Err(Error::Parameter(format!(
                "negative crystal increment {dc:e}: dissolution is not modeled"
            )));
        }
        let dc = dc.max(0.0);
        let e = state.eps.eps.data[idx];
        let capacity = (e - eps0) / v; // largest increment before full clog
        let applied = if dc > capacity {
            audit.full_clog_cells += 1;
            let refund = dc - capacity;
            state.c_precip.data[idx] += refund;
            audit.refunded_moles += refund * cell;
            capacity
        } else {
            dc
        };
        state.c_crystal.data[idx] += applied;
        state.eps.eps.data[idx] = (e - v * applied).clamp(eps0, 1.0);
    }
    Ok(audit)
}

/// Diffuse-interface surface density: A_s = (1/|Omega|) Int |grad eps| dv with
/// 2nd-order central gradients (exact jump integral for sharp steps).
pub fn estimate_specific_area(eps: &PorosityField) -> Result<f64> {
    let g = gradient2(&eps.eps)?;
    let n = eps.grid().len();
    let mut total = 0.0;
    for idx in 0..n {
        let v = [g.comps[0][idx], g.comps[1][idx], g.comps[2][idx]];
        total += (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    }
    Ok(total / n as f64)
}

/// Peclet and Damkohler numbers with L = sqrt(kappa0).
pub fn dimensionless_numbers(
    u_bar: f64,
    kappa0: f64,
    d_m: f64,
    a_s: f64,
    k: &KineticConstants,
) -> Result<(f64, f64, f64)> {
    if !(kappa0 > 0.0) {
        return Err(Error::Parameter(format!("kappa0 = {kappa0} must be > 0")));
    }
    if !(d_m > 0.0) {
        return Err(Error::Parameter(format!("D_m = {d_m} must be > 0")));
    }
    let l = kappa0.sqrt();
    let pe = u_bar * l / d_m;
    let da_prec = k.k_minus3 * k.gamma_co3 * a_s * l * l / d_m;
    let da_crys = k.k_c * l * l / d_m;
    Ok((pe, da_prec, da_crys))
}

/// Reaction/diffusion configuration for [`reaction_step`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChemParams {
    pub constants: KineticConstants,
    pub attachment: AttachmentSpec,
    /// Molecular diffusion of the ionic species (m^2/s).
    pub d_m: f64,
    /// Nuclei diffusivity; defaults to d_m.
    pub d_precip: Option<f64>,
    /// Archie tortuosity index.
    pub eta: f64,
    /// Keep C_Ca frozen at its current value (paper's operating assumption).
    pub hold_calcium: bool,
    /// Skip the per-step A_s re-estimate (useful for 0D boxes with no
    /// interfaces, where the gradient estimate is identically zero).
    pub hold_specific_area: bool,
}

impl Default for ChemParams {
    fn default() -> Self {
        ChemParams {
            constants: KineticConstants::default(),
            attachment: AttachmentSpec::default(),
            d_m: 1e-9,
            d_precip: None,
            eta: 2.0,
            hold_calcium: true,
            hold_specific_area: false,
        }
    }
}

impl ChemParams {
    pub fn validate(&self) -> Result<()> {
        self.constants.validate()?;
        if !(self.d_m > 0.0) {
            return Err(Error::Parameter(format!("d_m = {} must be > 0", self.d_m)));
        }
        if let Some(dp) = self.d_precip {
            if !(dp > 0.0) {
                return Err(Error::Parameter(format!("d_precip = {dp} must be > 0")));
            }
        }
        if self.eta < 0.0 {
            return Err(Error::Parameter(format!("eta = {} must be >= 0", self.eta)));
        }
        Ok(())
    }
}

/// Largest stable reaction/diffusion step for the current state.
pub fn chem_dt_max(state: &ChemState, params: &ChemParams) -> Result<f64> {
    let k = &params.constants;
    let (p_ad, _) = attachment_probability(&state.eps, &params.attachment)?;
    let p_max = p_ad.max_abs();
    let mut ca_int_max = 0.0_f64;
    for (c, e) in state.c_ca.data.iter().zip(&state.eps.eps.data) {
        ca_int_max = ca_int_max.max(c / e);
    }
    let rate_scale = (k.k_c * p_max)
        .max(k.k_minus3 * k.gamma_ca * k.gamma_co3 * state.a_s * ca_int_max);
    let dt_react = if rate_scale > 0.0 { 0.1 / rate_scale } else { f64::INFINITY };
    let h = state.eps.grid().h;
    let d = params.d_m.max(params.d_precip.unwrap_or(params.d_m));
    let dt_diff = 0.25 * h * h / d;
    Ok(dt_react.min(dt_diff))
}

/// Per-step chemistry audit for the budget log.
#[derive(Debug, Clone, Default)]
pub struct ChemAudit {
    pub porosity: PorosityAudit,
    pub p_ad_clamped_nodes: usize,
    /// Moles of precipitate converted to crystal this step.
    pub crystallized_moles: f64,
    /// Moles of tiny negative concentrations zeroed after RK2.
    pub clipped_moles: f64,
}

struct Derivatives {
    d_co3: Vec<f64>,
    d_ca: Vec<f64>,
    d_precip: Vec<f64>,
    d_crystal: Vec<f64>,
}

fn derivatives(
    c_co3: &ScalarField,
    c_ca: &ScalarField,
    c_precip: &ScalarField,
    eps: &PorosityField,
    a_s: f64,
    p_ad: &ScalarField,
    params: &ChemParams,
    kernel: &PseKernel,
) -> Result<Derivatives> {
    let k = &params.constants;
    let r_prec = precipitation_rate(c_ca, c_co3, eps, a_s, k);
    let r_crys = crystallization_rate(c_precip, p_ad, k);
    let ion_spec = DiffusionSpec::ArchieSuperficial {
        d_m: params.d_m,
        eta: params.eta,
    };
    let nuc_spec = DiffusionSpec::ArchieSuperficial {
        d_m: params.d_precip.unwrap_or(params.d_m),
        eta: params.eta,
    };
    let diff_co3 = archie_apply(c_co3, eps, &ion_spec, kernel)?;
    let diff_precip = archie_apply(c_precip, eps, &nuc_spec, kernel)?;
    let n = c_co3.data.len();
    let mut d = Derivatives {
        d_co3: vec![0.0; n],
        d_ca: vec![0.0; n],
        d_precip: vec![0.0; n],
        d_crystal: vec![0.0; n],
    };
    for i in 0..n {
        d.d_co3[i] = -r_prec.data[i] + diff_co3.data[i];
        d.d_precip[i] = r_prec.data[i] - r_crys.data[i] + diff_precip.data[i];
        d.d_crystal[i] = r_crys.data[i];
    }
    if !params.hold_calcium {
        let diff_ca = archie_apply(c_ca, eps, &ion_spec, kernel)?;
        for i in 0..n {
            d.d_ca[i] = -r_prec.data[i] + diff_ca.data[i];
        }
    }
    Ok(d)
}

/// One RK2 (midpoint) reaction-diffusion step, followed by the porosity and
/// specific-area updates. Porosity, P_ad and A_s are frozen within the step.
pub fn reaction_step(
    state: &ChemState,
    dt: f64,
    params: &ChemParams,
    kernel: &PseKernel,
) -> Result<(ChemState, ChemAudit)> {
    params.validate()?;
    if !(dt > 0.0) {
        return Err(Error::Parameter(format!("reaction dt = {dt} must be > 0")));
    }
    let dt_max = chem_dt_max(state, params)?;
    if dt > dt_max * (1.0 + 1e-12) {
        return Err(Error::Stability(format!(
            "reaction dt = {dt:e} exceeds the stability bound {dt_max:e}"
        )));
    }
    let (p_ad, p_ad_clamped_nodes) = attachment_probability(&state.eps, &params.attachment)?;

    // midpoint stage
    let k1 = derivatives(
        &state.c_co3,
        &state.c_ca,
        &state.c_precip,
        &state.eps,
        state.a_s,
        &p_ad,
        params,
        kernel,
    )?;
    let half = 0.5 * dt;
    let mid = |base: &[f64], d: &[f64]| -> ScalarField {
        ScalarField {
            grid: state.c_co3.grid.clone(),
            data: base.iter().zip(d).map(|(b, dv)| b + half * dv).collect(),
        }
    };
    let co3_mid = mid(&state.c_co3.data, &k1.d_co3);
    let ca_mid = mid(&state.c_ca.data, &k1.d_ca);
    let precip_mid = mid(&state.c_precip.data, &k1.d_precip);
    let k2 = derivatives(
        &co3_mid,
        &ca_mid,
        &precip_mid,
        &state.eps,
        state.a_s,
        &p_ad,
        params,
        kernel,
    )?;

    let mut out = state.clone();
    let mut audit = ChemAudit::default();
    let cell = state.eps.grid().cell_volume();
    let mut advance = |field: &mut Vec<f64>, d: &[f64], scale: f64| -> Result<()> {
        let scale = scale.max(1e-300);
        for (v, dv) in field.iter_mut().zip(d) {
            *v += dt * dv;
            if *v < 0.0 {
                // DC-PSE diffusion is not monotone: sharp fronts undershoot by
                // a small fraction of the species scale. Clip and audit those,
                // and reject only percent-level excursions, which indicate an
                // unstable step.
                if *v < -1e-2 * scale {
                    return Err(Error::Stability(format!(
                        "concentration underflow {:e} (scale {scale:e}); reduce dt",
                        *v
                    )));
                }
                audit.clipped_moles += -*v * cell;
                *v = 0.0;
            }
        }
        Ok(())
    };
    advance(&mut out.c_co3.data, &k2.d_co3, state.c_co3.max_abs())?;
    if !params.hold_calcium {
        advance(&mut out.c_ca.data, &k2.d_ca, state.c_ca.max_abs())?;
    }
    advance(
        &mut out.c_precip.data,
        &k2.d_precip,
        state.c_precip.max_abs().max(state.c_co3.max_abs()),
    )?;

    // crystal increment is applied through the porosity update, which owns
    // the truncation/refund rule
    let d_crystal = ScalarField {
        grid: state.c_crystal.grid.clone(),
        data: k2.d_crystal.iter().map(|d| dt * d).collect(),
    };
    audit.crystallized_moles = d_crystal.integral();
    audit.porosity = update_porosity(&mut out, &d_crystal, &params.constants)?;
    audit.crystallized_moles -= audit.porosity.refunded_moles;
    audit.p_ad_clamped_nodes = p_ad_clamped_nodes;

    if !params.hold_specific_area {
        out.a_s = estimate_specific_area(&out.eps)?;
    }
    Ok((out, audit))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::Grid;

    fn grid(n: usize) -> Grid {
        Grid::new([n, n, n], 1.0).unwrap()
    }

    #[test]
    fn constants_validate() {
        assert!(KineticConstants::default().validate().is_ok());
        let mut k = KineticConstants::default();
        k.k_minus3 = 50.0; // inconsistent with k3/k_eq
        assert!(k.validate().is_err());
        let mut k = KineticConstants::default();
        k.k_c = 0.0; // valid: disables crystallization
        assert!(k.validate().is_ok());
        k.k_c = -1.0;
        assert!(k.validate().is_err());
    }

    #[test]
    fn tst_rate_cases() {
        let k = KineticConstants::default();
        // equilibrium: Q = K_eq
        let a = k.k_eq.sqrt();
        assert!(tst_rate(0.0, 0.0, a, a, 8300.0, &k).abs() < 1e-20);
        // K1 = K2 = 0, far from equilibrium: matches the precipitation form
        let (a_ca, a_co3) = (0.1, 1e-3);
        let r = tst_rate(0.0, 0.0, a_ca, a_co3, 8300.0, &k);
        let r_prec = k.k_minus3 * 8300.0 * a_ca * a_co3;
        assert!(((r - r_prec) / r_prec).abs() < 2e-3, "{r} vs {r_prec}");
        // zero calcium: pure dissolution drive
        let r0 = tst_rate(0.0, 0.0, 0.0, a_co3, 8300.0, &k);
        assert!((r0 + 8300.0 * k.k3).abs() < 1e-12);
    }

    #[test]
    fn precipitation_rate_reference_value() {
        let k = KineticConstants::default();
        let g = grid(4);
        let eps = PorosityField::uniform(&g, 1.0, 0.05).unwrap();
        let c_ca = ScalarField::constant(&g, 100.0);
        let c_co3 = ScalarField::constant(&g, 1.0);
        let r = precipitation_rate(&c_ca, &c_co3, &eps, 8300.0, &k);
        let expected = 199.0 * 8300.0 * 0.1 * 0.001;
        for v in &r.data {
            assert!(((v - expected) / expected).abs() < 1e-12);
        }
        // bilinear: doubling both activities quadruples the rate
        let c_ca2 = ScalarField::constant(&g, 200.0);
        let c_co32 = ScalarField::constant(&g, 2.0);
        let r2 = precipitation_rate(&c_ca2, &c_co32, &eps, 8300.0, &k);
        assert!((r2.data[0] / r.data[0] - 4.0).abs() < 1e-12);
        // zero carbonate kills the rate
        let z = precipitation_rate(&c_ca, &ScalarField::zeros(&g), &eps, 8300.0, &k);
        assert!(z.max_abs() == 0.0);
    }

    #[test]
    fn attachment_probability_anchors() {
        let eps0 = 0.05;
        let spec = AttachmentSpec::default();
        // open pore: P_ad = 0
        let g = grid(8);
        let open = PorosityField::uniform(&g, 1.0, eps0).unwrap();
        let (p, _) = attachment_probability(&open, &spec).unwrap();
        assert!(p.max_abs() < 1e-13);
        // deep solid: 2 eps0^m
        let solid = PorosityField::uniform(&g, eps0, eps0).unwrap();
        let (p, _) = attachment_probability(&solid, &spec).unwrap();
        for v in &p.data {
            assert!((v - 2.0 * eps0 * eps0).abs() < 1e-14);
        }
        // sharp 1D interface: first fluid node gets 2/3
        let gx = Grid::new([12, 4, 4], 1.0).unwrap();
        let raw = ScalarField::from_fn(&gx, |x, _, _| if x < 6.0 { eps0 } else { 1.0 });
        let eps = PorosityField::new(raw, eps0).unwrap();
        let (p, _) = attachment_probability(&eps, &spec).unwrap();
        let got = p.at(6, 2, 2);
        assert!((got - 2.0 / 3.0).abs() < 1e-12, "first fluid node P_ad = {got}");
        // all values in [0, 1]
        for v in &p.data {
            assert!((0.0..=1.0).contains(v));
        }
    }

    #[test]
    fn crystallization_rate_substitution() {
        let k = KineticConstants::default();
        let g = grid(4);
        let c = ScalarField::constant(&g, 1.0);
        let p = ScalarField::constant(&g, 2.0 / 3.0);
        let r = crystallization_rate(&c, &p, &k);
        for v in &r.data {
            assert!((v - 1e3 * 2.0 / 3.0).abs() < 1e-9);
        }
        let r0 = crystallization_rate(&c, &ScalarField::zeros(&g), &k);
        assert!(r0.max_abs() == 0.0);
    }

    #[test]
    fn henry_values() {
        assert_eq!(henry_concentration(0.0, 29.41).unwrap(), 0.0);
        let c = henry_concentration(2.96e-2, 29.41).unwrap();
        assert!((c - 1.0e-3).abs() < 1e-5, "{c}");
        assert!((henry_concentration(29.41, 29.41).unwrap() - 1.0).abs() < 1e-15);
        assert!(henry_concentration(-1.0, 29.41).is_err());
    }

    #[test]
    fn update_porosity_cases() {
        let k = KineticConstants::default();
        let g = grid(4);
        let eps = PorosityField::uniform(&g, 0.5, 0.05).unwrap();
        let mut state = ChemState::uniform(eps, 1.0, 100.0, 8300.0);
        // zero increment: unchanged
        let zero = ScalarField::zeros(&g);
        update_porosity(&mut state, &zero, &k).unwrap();
        assert!((state.eps.eps.data[0] - 0.5).abs() < 1e-15);
        // direct formula: dC = 0.1/v lowers eps by 0.1
        let dc = ScalarField::constant(&g, 0.1 / k.v_molar);
        update_porosity(&mut state, &dc, &k).unwrap();
        assert!((state.eps.eps.data[0] - 0.4).abs() < 1e-12);
        // full clog with refund
        let delta = 1.0;
        let eps_val = 0.05 + k.v_molar * delta;
        let eps = PorosityField::uniform(&g, eps_val, 0.05).unwrap();
        let mut state = ChemState::uniform(eps, 1.0, 100.0, 8300.0);
        let dc = ScalarField::constant(&g, 2.0 * delta);
        let audit = update_porosity(&mut state, &dc, &k).unwrap();
        assert_eq!(audit.full_clog_cells, g.len());
        // increment delta reaches eps0 exactly; the other delta is refunded
        for idx in 0..g.len() {
            assert!((state.eps.eps.data[idx] - 0.05).abs() < 1e-14);
            assert!((state.c_crystal.data[idx] - delta).abs() < 1e-9);
            assert!((state.c_precip.data[idx] - delta).abs() < 1e-9);
        }
        assert!((audit.refunded_moles - delta * g.volume()).abs() < 1e-9 * g.volume());
        // negative increment rejected
        let neg = ScalarField::constant(&g, -1.0);
        assert!(update_porosity(&mut state, &neg, &k).is_err());
    }

    #[test]
    fn specific_area_cases() {
        // uniform: zero
        let g = grid(8);
        let eps = PorosityField::uniform(&g, 0.7, 0.05).unwrap();
        assert!(estimate_specific_area(&eps).unwrap() < 1e-15);
        // slab with two planar interfaces: 2 (1 - eps0) / Lx
        let eps0 = 0.05;
        let gx = Grid::new([16, 8, 8], 0.5).unwrap();
        let raw = ScalarField::from_fn(&gx, |x, _, _| if x < 4.0 { eps0 } else { 1.0 });
        let eps = PorosityField::new(raw, eps0).unwrap();
        let a_s = estimate_specific_area(&eps).unwrap();
        let lx = gx.extent()[0];
        let expected = 2.0 * (1.0 - eps0) / lx;
        assert!(((a_s - expected) / expected).abs() < 1e-12, "{a_s} vs {expected}");
    }

    #[test]
    fn specific_area_sphere() {
        let n = 64;
        let g = Grid::new([n, n, n], 1.0 / n as f64).unwrap();
        let eps0 = 0.05;
        let r = 0.25;
        let c = 0.5;
        let raw = ScalarField::from_fn(&g, |x, y, z| {
            let d2 = (x - c).powi(2) + (y - c).powi(2) + (z - c).powi(2);
            if d2 < r * r {
                eps0
            } else {
                1.0
            }
        });
        let eps = PorosityField::new(raw, eps0).unwrap();
        let a_s = estimate_specific_area(&eps).unwrap();
        let expected = 4.0 * std::f64::consts::PI * r * r * (1.0 - eps0) / 1.0;
        assert!(
            ((a_s - expected) / expected).abs() < 0.1,
            "{a_s} vs {expected}"
        );
    }

    #[test]
    fn paper_dimensionless_numbers() {
        let k = KineticConstants::default();
        let (pe, da_prec, da_crys) =
            dimensionless_numbers(1e-3, 2e-11, 1e-9, 8300.0, &k).unwrap();
        assert!((pe - 4.47).abs() < 0.01, "Pe = {pe}");
        assert!((da_prec - 33.034).abs() < 0.01, "Da_prec = {da_prec}");
        assert!((da_crys - 20.0).abs() < 0.01, "Da_crys = {da_crys}");
        let mut k2 = k.clone();
        k2.k_c = 1e2;
        let (_, _, da2) = dimensionless_numbers(1e-3, 2e-11, 1e-9, 8300.0, &k2).unwrap();
        assert!((da2 - 2.0).abs() < 0.01);
        assert!(dimensionless_numbers(1e-3, 0.0, 1e-9, 8300.0, &k).is_err());
    }

    fn box_params(hold_ca: bool) -> ChemParams {
        ChemParams {
            hold_calcium: hold_ca,
            hold_specific_area: true,
            ..Default::default()
        }
    }

    #[test]
    fn reaction_step_identity_when_inert() {
        let g = grid(6);
        let eps = PorosityField::uniform(&g, 1.0, 0.05).unwrap();
        // no carbonate: no precipitation; open pore: no crystallization
        let state = ChemState::uniform(eps, 0.0, 100.0, 8300.0);
        let params = box_params(false);
        let kernel = PseKernel::default_for(g.h).unwrap();
        let dt = 0.5 * chem_dt_max(&state, &params).unwrap();
        let (out, audit) = reaction_step(&state, dt, &params, &kernel).unwrap();
        assert!(out.c_precip.max_abs() == 0.0);
        assert!(out.c_crystal.max_abs() == 0.0);
        assert!((out.c_ca.data[0] - 100.0).abs() < 1e-12);
        assert_eq!(audit.porosity.full_clog_cells, 0);
    }

    #[test]
    fn uniform_fluid_box_grows_precipitate_only() {
        let g = grid(6);
        let eps = PorosityField::uniform(&g, 1.0, 0.05).unwrap();
        let state = ChemState::uniform(eps, 1.0, 100.0, 8300.0);
        let params = box_params(true);
        let kernel = PseKernel::default_for(g.h).unwrap();
        let dt = 0.5 * chem_dt_max(&state, &params).unwrap();
        let (out, _) = reaction_step(&state, dt, &params, &kernel).unwrap();
        assert!(out.c_precip.data[0] > 0.0);
        assert!(out.c_crystal.max_abs() == 0.0, "P_ad = 0 in open pores");
        assert!((out.eps.eps.data[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn closed_box_calcium_conservation() {
        // porous box (eps = 0.5) so both precipitation and crystallization run
        let g = grid(6);
        let eps = PorosityField::uniform(&g, 0.5, 0.05).unwrap();
        let mut state = ChemState::uniform(eps, 1.0, 100.0, 8300.0);
        let params = box_params(false);
        let kernel = PseKernel::default_for(g.h).unwrap();
        let before = state.calcium_moles();
        for _ in 0..100 {
            let dt = 0.9 * chem_dt_max(&state, &params).unwrap();
            let (next, _) = reaction_step(&state, dt, &params, &kernel).unwrap();
            state = next;
        }
        let after = state.calcium_moles();
        assert!(
            ((after - before) / before).abs() < 1e-9,
            "Ca drift {before} -> {after}"
        );
        assert!(state.c_crystal.data[0] > 0.0, "crystal actually grew");
    }

    /// High-accuracy RK4 integration of the reduced 0D system with frozen
    /// eps / A_s / P_ad, the oracle for the RK2 order check.
    fn ode_oracle(
        y0: [f64; 4],
        eps: f64,
        a_s: f64,
        p_ad: f64,
        k: &KineticConstants,
        t_end: f64,
        n: usize,
    ) -> [f64; 4] {
        let f = |y: [f64; 4]| -> [f64; 4] {
            let r_prec = k.k_minus3 * a_s * k.gamma_ca * k.gamma_co3 * (y[1] / eps) * (y[0] / eps);
            let r_crys = k.k_c * p_ad * y[2];
            [-r_prec, -r_prec, r_prec - r_crys, r_crys]
        };
        let dt = t_end / n as f64;
        let mut y = y0;
        for _ in 0..n {
            let k1 = f(y);
            let k2 = f(std::array::from_fn(|i| y[i] + 0.5 * dt * k1[i]));
            let k3 = f(std::array::from_fn(|i| y[i] + 0.5 * dt * k2[i]));
            let k4 = f(std::array::from_fn(|i| y[i] + dt * k3[i]));
            for i in 0..4 {
                y[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
        }
        y
    }

    #[test]
    fn zero_d_oracle_rk2_order() {
        let g = grid(4);
        let eps_val = 0.5;
        let k = KineticConstants::default();
        let params = box_params(false);
        let kernel = PseKernel::default_for(g.h).unwrap();
        let eps = PorosityField::uniform(&g, eps_val, 0.05).unwrap();
        let spec = AttachmentSpec::default();
        let (p_ad_field, _) = attachment_probability(&eps, &spec).unwrap();
        let p_ad = p_ad_field.data[0];
        assert!(p_ad > 0.0);

        let y0 = [1.0, 100.0, 0.0, 0.0]; // CO3, Ca, precip, crystal
        let state0 = ChemState::uniform(eps.clone(), y0[0], y0[1], 8300.0);
        let dt0 = 0.5 * chem_dt_max(&state0, &params).unwrap();
        let t_end = 8.0 * dt0;
        let exact = ode_oracle(y0, eps_val, 8300.0, p_ad, &k, t_end, 40_000);

        let run = |steps: usize| -> [f64; 4] {
            let mut s = state0.clone();
            let dt = t_end / steps as f64;
            for _ in 0..steps {
                let (next, _) = reaction_step(&s, dt, &params, &kernel).unwrap();
                s = next;
            }
            [
                s.c_co3.data[0],
                s.c_ca.data[0],
                s.c_precip.data[0],
                s.c_crystal.data[0],
            ]
        };
        let err = |y: [f64; 4]| -> f64 {
            (0..4)
                .map(|i| (y[i] - exact[i]).powi(2))
                .sum::<f64>()
                .sqrt()
        };
        let e1 = err(run(8));
        let e2 = err(run(16));
        let ratio = e1 / e2;
        assert!(
            (3.3..=4.7).contains(&ratio),
            "RK2 order ratio {ratio} ({e1:e} vs {e2:e})"
        );
    }

    #[test]
    fn reaction_step_rejects_unstable_dt() {
        let g = grid(4);
        let eps = PorosityField::uniform(&g, 0.5, 0.05).unwrap();
        let state = ChemState::uniform(eps, 1.0, 100.0, 8300.0);
        let params = box_params(true);
        let kernel = PseKernel::default_for(g.h).unwrap();
        let dt = 100.0 * chem_dt_max(&state, &params).unwrap();
        assert!(matches!(
            reaction_step(&state, dt, &params, &kernel),
            Err(Error::Stability(_))
        ));
    }
}
