//! Command-line surface: run configs, validation suites, post-processing of
//! histories into slice/K-phi/clogging tables, and geometry generation.

use crate::error::{Error, Result};
use crate::fields::{Grid, ScalarField};
use crate::sim::checkpoint;
use crate::sim::diagnostics::{ClogEvent, Diagnostics, SliceProfile};
use crate::sim::{synthetic_geometry, RunConfig, Simulation, SyntheticGeometry};
use crate::validate::validate_suite;
use clap::{Args, Parser, Subcommand};
use std::io::Write;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(name = "porecryst", version, about = "Reactive crystal growth in porous media")]
pub struct Cli {
    /// Emit machine-readable JSON instead of CSV/plain text.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Run a simulation described by a TOML config.
    Run {
        config: PathBuf,
        /// Resume from a checkpoint written by the same config.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Run a validation suite: pse|hydro|particles|chemistry|conservation|all.
    Validate {
        suite: String,
        /// Also write the report to this file.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Post-process a checkpoint or diagnostics history.
    Post {
        #[command(subcommand)]
        what: PostCommand,
    },
    /// Generate a synthetic geometry as a raw uint8 voxel file.
    GenGeometry(GenGeometryArgs),
}

#[derive(Subcommand)]
pub enum PostCommand {
    /// Per-x-slab porosity / precipitate profile from a checkpoint.
    Slice {
        /// Checkpoint binary.
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Renormalized K-phi table with reference power laws.
    Kphi {
        /// Checkpoint (.bin / sidecar .json) or diagnostics.json.
        input: PathBuf,
        /// Use the upstream-quarter series instead of the full domain.
        #[arg(long)]
        upstream: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sharp permeability-drop events.
    Clog {
        input: PathBuf,
        #[arg(long)]
        upstream: bool,
        /// Fractional drop within the window that counts as an event.
        #[arg(long, default_value_t = 0.2)]
        threshold: f64,
        /// Sliding window length in samples.
        #[arg(long, default_value_t = 5)]
        window: usize,
    },
}

#[derive(Args)]
pub struct GenGeometryArgs {
    /// channel | throat | sphere-pack | slab
    pub name: String,
    #[arg(long, num_args = 3, default_values_t = [64, 64, 64])]
    pub dims: Vec<usize>,
    #[arg(long, default_value_t = 1e-6)]
    pub h: f64,
    /// Output voxel file (solid = 255, fluid = 0).
    #[arg(long, default_value = "geometry.raw")]
    pub out: PathBuf,
    /// channel: open width in cells (omit for a fully open box).
    #[arg(long)]
    pub width: Option<usize>,
    /// throat: bore half-width in cells.
    #[arg(long, default_value_t = 20)]
    pub bore: usize,
    /// throat: neck half-width in cells.
    #[arg(long, default_value_t = 2)]
    pub neck: usize,
    /// throat: neck length in cells.
    #[arg(long, default_value_t = 8)]
    pub neck_length: usize,
    /// throat: neck center as a fraction of the x extent (default 0.5).
    #[arg(long)]
    pub neck_center: Option<f64>,
    /// sphere-pack: spheres per axis.
    #[arg(long, default_value_t = 2)]
    pub spheres: usize,
    /// sphere-pack: sphere radius in cells.
    #[arg(long, default_value_t = 8.0)]
    pub radius: f64,
    /// sphere-pack: center jitter in cells.
    #[arg(long, default_value_t = 2.0)]
    pub jitter: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// slab: solid fraction along x.
    #[arg(long, default_value_t = 0.5)]
    pub fraction: f64,
}

/// One row of the K-phi diagram.
#[derive(Debug, Clone, serde::Serialize)]
pub struct KPhiRow {
    pub time: f64,
    pub phi_ratio: f64,
    pub kappa_ratio: f64,
    /// Instantaneous exponent d(log kappa)/d(log phi); None when the porosity
    /// ratio did not change between samples.
    pub exponent: Option<f64>,
    pub ref_n2: f64,
    pub ref_n3: f64,
    pub ref_n8: f64,
    pub ref_n64: f64,
}

/// Renormalized permeability-porosity table from a sample history.
/// The first sample defines phi_0 and kappa_0.
pub fn kphi_diagram(history: &Diagnostics, upstream: bool) -> Result<Vec<KPhiRow>> {
    if history.samples.len() < 2 {
        return Err(Error::Parameter(
            "k-phi diagram needs at least 2 samples".into(),
        ));
    }
    let series: Vec<(f64, f64, f64)> = history
        .samples
        .iter()
        .map(|s| {
            if upstream {
                (s.time, s.phi_upstream, s.kappa_upstream)
            } else {
                (s.time, s.phi, s.kappa)
            }
        })
        .collect();
    let (_, phi0, kappa0) = series[0];
    if !(phi0 > 0.0) || !(kappa0 > 0.0) || !kappa0.is_finite() {
        return Err(Error::Parameter(format!(
            "reference state unusable: phi0 = {phi0}, kappa0 = {kappa0}"
        )));
    }
    let mut rows = Vec::with_capacity(series.len());
    for (i, &(t, phi, kappa)) in series.iter().enumerate() {
        let pr = phi / phi0;
        let kr = kappa / kappa0;
        let exponent = if i == 0 {
            None
        } else {
            let (_, pp, kp) = series[i - 1];
            let dp = pr.ln() - (pp / phi0).ln();
            if dp == 0.0 {
                None
            } else {
                Some((kr.ln() - (kp / kappa0).ln()) / dp)
            }
        };
        rows.push(KPhiRow {
            time: t,
            phi_ratio: pr,
            kappa_ratio: kr,
            exponent,
            ref_n2: pr.powi(2),
            ref_n3: pr.powi(3),
            ref_n8: pr.powi(8),
            ref_n64: pr.powi(64),
        });
    }
    Ok(rows)
}

pub fn write_kphi_csv(rows: &[KPhiRow], w: &mut impl Write) -> Result<()> {
    writeln!(
        w,
        "time,phi_ratio,kappa_ratio,exponent,ref_n2,ref_n3,ref_n8,ref_n64"
    )?;
    for r in rows {
        let n = r.exponent.map_or(String::new(), |v| v.to_string());
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            r.time, r.phi_ratio, r.kappa_ratio, n, r.ref_n2, r.ref_n3, r.ref_n8, r.ref_n64
        )?;
    }
    Ok(())
}

/// Flag samples where kappa has dropped by at least `threshold` relative to
/// the maximum of the trailing `window` samples. Consecutive triggers are
/// merged into the event at the first crossing (a single sharp drop yields a
/// single event; a slow decay never accumulates enough within one window).
pub fn detect_clogging(
    times: &[f64],
    kappa: &[f64],
    threshold: f64,
    window: usize,
) -> Result<Vec<ClogEvent>> {
    if times.len() != kappa.len() {
        return Err(Error::Parameter("time/kappa series length mismatch".into()));
    }
    let trigger = clog_trigger(kappa, threshold, window)?;
    let mut events = Vec::new();
    let mut armed = true;
    for j in 0..kappa.len() {
        match trigger(j) {
            Some(drop) if armed => {
                events.push(ClogEvent {
                    time: times[j],
                    sample_index: j,
                    drop_fraction: drop,
                    window,
                });
                armed = false;
            }
            Some(_) => {}
            None => armed = true,
        }
    }
    Ok(events)
}

/// Per-sample clogging flag: true wherever kappa sits at least `threshold`
/// below the trailing-window maximum, i.e. for the full duration of a drop,
/// not just its first crossing. Complements `detect_clogging`, which reports
/// one event per contiguous stretch of the mask.
pub fn clogging_mask(kappa: &[f64], threshold: f64, window: usize) -> Result<Vec<bool>> {
    let trigger = clog_trigger(kappa, threshold, window)?;
    Ok((0..kappa.len()).map(|j| trigger(j).is_some()).collect())
}

/// Validated trigger shared by the event detector and the mask: the relative
/// drop of `kappa[j]` below the maximum of the trailing `window` samples, if
/// it exceeds `threshold`.
fn clog_trigger<'a>(
    kappa: &'a [f64],
    threshold: f64,
    window: usize,
) -> Result<impl Fn(usize) -> Option<f64> + 'a> {
    if window < 2 {
        return Err(Error::Parameter(format!(
            "clogging window {window} must be >= 2"
        )));
    }
    if !(0.0 < threshold && threshold < 1.0) {
        return Err(Error::Parameter(format!(
            "clogging threshold {threshold} outside (0, 1)"
        )));
    }
    if kappa.len() < window {
        return Err(Error::Parameter(format!(
            "series of {} samples is shorter than the window ({window})",
            kappa.len()
        )));
    }
    Ok(move |j: usize| -> Option<f64> {
        if j == 0 {
            return None;
        }
        let lo = j.saturating_sub(window - 1);
        let peak = kappa[lo..=j].iter().fold(f64::MIN, |m, &v| m.max(v));
        if peak > 0.0 && kappa[j] <= (1.0 - threshold) * peak {
            Some(1.0 - kappa[j] / peak)
        } else {
            None
        }
    })
}

/// Read a diagnostics history from a checkpoint binary, a checkpoint sidecar,
/// or a bare diagnostics.json.
pub fn load_history(path: &Path) -> Result<Diagnostics> {
    if path.extension().is_some_and(|e| e == "json") {
        let text = std::fs::read_to_string(path)?;
        if let Ok(meta) = serde_json::from_str::<checkpoint::CheckpointMeta>(&text) {
            return Ok(meta.diagnostics);
        }
        return serde_json::from_str::<Diagnostics>(&text)
            .map_err(|e| Error::Format(format!("{}: {e}", path.display())));
    }
    Ok(checkpoint::load_meta(path)?.diagnostics)
}

fn post_slice(input: &Path, out: Option<&Path>, json: bool) -> Result<()> {
    let ck = checkpoint::load(input)?;
    let grid = Grid::new(ck.meta.dims, ck.meta.h)?;
    let find = |name: &str| -> Result<ScalarField> {
        let i = ck
            .meta
            .fields
            .iter()
            .position(|f| f == name)
            .ok_or_else(|| Error::Format(format!("checkpoint lacks field {name:?}")))?;
        Ok(ScalarField {
            grid: grid.clone(),
            data: ck.blocks[i].clone(),
        })
    };
    let eps = crate::fields::PorosityField::new(find("eps")?, ck.meta.eps0)?;
    let profile = SliceProfile::compute(ck.meta.time, &eps, &find("c_precip")?);
    let mut buf = Vec::new();
    if json {
        serde_json::to_writer_pretty(&mut buf, &profile).map_err(|e| Error::Format(e.to_string()))?;
    } else {
        let d = Diagnostics {
            slices: vec![profile],
            ..Default::default()
        };
        d.write_slices_csv(&mut buf)?;
    }
    emit(&buf, out)
}

fn emit(buf: &[u8], out: Option<&Path>) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, buf)?,
        None => std::io::stdout().write_all(buf)?,
    }
    Ok(())
}

fn gen_geometry(args: &GenGeometryArgs) -> Result<()> {
    if args.dims.len() != 3 {
        return Err(Error::Parameter("--dims takes exactly three values".into()));
    }
    let grid = Grid::new([args.dims[0], args.dims[1], args.dims[2]], args.h)?;
    let shape = match args.name.as_str() {
        "channel" => SyntheticGeometry::Channel {
            width_cells: args.width,
        },
        "throat" => SyntheticGeometry::Throat {
            bore_cells: args.bore,
            neck_cells: args.neck,
            neck_length_cells: args.neck_length,
            neck_center_fraction: args.neck_center,
        },
        "sphere-pack" => SyntheticGeometry::SpherePack {
            spheres_per_axis: args.spheres,
            radius_cells: args.radius,
            jitter_cells: args.jitter,
            seed: args.seed,
        },
        "slab" => SyntheticGeometry::Slab {
            fraction: args.fraction,
        },
        other => return Err(Error::Parameter(format!("unknown geometry {other:?}"))),
    };
    let eps0 = 0.05;
    let eps = synthetic_geometry(&grid, &shape, eps0)?;
    let bytes: Vec<u8> = eps
        .eps
        .data
        .iter()
        .map(|&v| if v < 0.5 { 255 } else { 0 })
        .collect();
    std::fs::write(&args.out, &bytes)?;
    eprintln!(
        "wrote {} ({} voxels, mean porosity {:.4})",
        args.out.display(),
        bytes.len(),
        eps.mean()
    );
    Ok(())
}

fn run_command(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Run { config, resume } => {
            let cfg = RunConfig::from_path(config)?;
            let mut sim = match resume {
                Some(ck) => Simulation::resume(cfg, ck)?,
                None => Simulation::new(cfg)?,
            };
            sim.run()?;
            if cli.json {
                let summary = serde_json::json!({
                    "time": sim.time,
                    "steps": sim.step_index,
                    "samples": sim.diagnostics.samples.len(),
                    "output_dir": sim.cfg.output.dir,
                });
                println!("{summary}");
            } else {
                eprintln!(
                    "finished: t = {:.6e} s after {} steps; outputs in {}",
                    sim.time,
                    sim.step_index,
                    sim.cfg.output.dir.display()
                );
            }
            Ok(())
        }
        Command::Validate { suite, report } => {
            let reports = validate_suite(suite)?;
            let mut buf = Vec::new();
            if cli.json {
                serde_json::to_writer_pretty(&mut buf, &reports)
                    .map_err(|e| Error::Format(e.to_string()))?;
            } else {
                for r in &reports {
                    r.write_csv(&mut buf)?;
                }
            }
            std::io::stdout().write_all(&buf)?;
            if let Some(p) = report {
                std::fs::write(p, &buf)?;
            }
            let failed: Vec<&str> = reports
                .iter()
                .flat_map(|r| r.checks.iter())
                .filter(|c| !c.passed)
                .map(|c| c.name.as_str())
                .collect();
            if failed.is_empty() {
                Ok(())
            } else {
                Err(Error::Parameter(format!(
                    "validation failed: {}",
                    failed.join(", ")
                )))
            }
        }
        Command::Post { what } => match what {
            PostCommand::Slice { input, out } => post_slice(input, out.as_deref(), cli.json),
            PostCommand::Kphi {
                input,
                upstream,
                out,
            } => {
                let history = load_history(input)?;
                let rows = kphi_diagram(&history, *upstream)?;
                let mut buf = Vec::new();
                if cli.json {
                    serde_json::to_writer_pretty(&mut buf, &rows)
                        .map_err(|e| Error::Format(e.to_string()))?;
                } else {
                    write_kphi_csv(&rows, &mut buf)?;
                }
                emit(&buf, out.as_deref())
            }
            PostCommand::Clog {
                input,
                upstream,
                threshold,
                window,
            } => {
                let history = load_history(input)?;
                let (times, kappa): (Vec<f64>, Vec<f64>) = history
                    .samples
                    .iter()
                    .map(|s| {
                        (
                            s.time,
                            if *upstream { s.kappa_upstream } else { s.kappa },
                        )
                    })
                    .unzip();
                let events = detect_clogging(&times, &kappa, *threshold, *window)?;
                let mut buf = Vec::new();
                if cli.json {
                    serde_json::to_writer_pretty(&mut buf, &events)
                        .map_err(|e| Error::Format(e.to_string()))?;
                } else {
                    writeln!(&mut buf, "time,sample_index,drop_fraction,window")?;
                    for e in &events {
                        writeln!(
                            &mut buf,
                            "{},{},{},{}",
                            e.time, e.sample_index, e.drop_fraction, e.window
                        )?;
                    }
                }
                std::io::stdout().write_all(&buf)?;
                Ok(())
            }
        },
        Command::GenGeometry(args) => gen_geometry(args),
    }
}

/// Parse arguments and dispatch; returns the process exit code
/// (0 ok, 2 config/usage error, 3 numerical failure).
pub fn main_entry() -> i32 {
    let cli = Cli::parse();
    match run_command(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Stability(_) | Error::NonFinite(_) | Error::Convergence { .. } => 3,
                _ => 2,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::diagnostics::Sample;

    fn history(kappa: &[f64], phi: &[f64]) -> Diagnostics {
        let mut d = Diagnostics::default();
        for (i, (&k, &p)) in kappa.iter().zip(phi).enumerate() {
            d.samples.push(Sample {
                time: i as f64,
                step: i,
                dt: 1.0,
                phi: p,
                phi_upstream: p,
                kappa: k,
                kappa_upstream: k,
                total_co3: 0.0,
                total_ca: 0.0,
                total_precip: 0.0,
                total_crystal: 0.0,
                inflow_moles: 0.0,
                clipped_moles: 0.0,
                refunded_moles: 0.0,
                full_clog_cells: 0,
                budget_residual: 0.0,
                dbs_iterations: 0,
            });
        }
        d
    }

    #[test]
    fn constant_kappa_yields_no_events() {
        let k = vec![1.0; 50];
        let t: Vec<f64> = (0..50).map(|i| i as f64).collect();
        assert!(detect_clogging(&t, &k, 0.2, 5).unwrap().is_empty());
    }

    #[test]
    fn single_step_drop_yields_one_event() {
        let mut k = vec![1.0; 30];
        for v in k.iter_mut().skip(15) {
            *v = 0.5;
        }
        let t: Vec<f64> = (0..30).map(|i| i as f64).collect();
        let events = detect_clogging(&t, &k, 0.2, 5).unwrap();
        assert_eq!(events.len(), 1);
        assert_eq!(events[0].sample_index, 15);
        assert!((events[0].drop_fraction - 0.5).abs() < 1e-12);
    }

    #[test]
    fn gradual_decay_yields_no_events() {
        let k: Vec<f64> = (0..100).map(|i| 0.99_f64.powi(i)).collect();
        let t: Vec<f64> = (0..100).map(|i| i as f64).collect();
        assert!(detect_clogging(&t, &k, 0.2, 5).unwrap().is_empty());
    }

    #[test]
    fn mask_covers_full_drop_duration() {
        let mut k = vec![1.0; 12];
        for (i, v) in k.iter_mut().enumerate().skip(6) {
            // sustained 30% decay per sample: each sample sits >20% below the
            // trailing-window maximum for the rest of the series
            *v = 0.7_f64.powi(i as i32 - 5);
        }
        let mask = clogging_mask(&k, 0.2, 5).unwrap();
        assert!(!mask[..6].iter().any(|&m| m), "flat stretch is quiescent");
        assert!(mask[6..].iter().all(|&m| m), "the whole drop is flagged");
        let t: Vec<f64> = (0..12).map(|i| i as f64).collect();
        assert_eq!(detect_clogging(&t, &k, 0.2, 5).unwrap().len(), 1);
    }

    #[test]
    fn kphi_flat_history_has_absent_exponents() {
        let d = history(&[1.0; 10], &[0.5; 10]);
        let rows = kphi_diagram(&d, false).unwrap();
        assert!(rows
            .iter()
            .all(|r| r.phi_ratio == 1.0 && r.kappa_ratio == 1.0 && r.exponent.is_none()));
    }

    #[test]
    fn kphi_recovers_cubic_power_law() {
        let phi: Vec<f64> = (0..20).map(|i| 0.5 * (1.0 - 0.01 * i as f64)).collect();
        let kappa: Vec<f64> = phi.iter().map(|&p| 2e-11 * (p / 0.5).powi(3)).collect();
        let d = history(&kappa, &phi);
        let rows = kphi_diagram(&d, false).unwrap();
        for r in rows.iter().skip(1) {
            let n = r.exponent.unwrap();
            assert!((n - 3.0).abs() <= 0.01, "n = {n}");
        }
    }

    #[test]
    fn clog_detector_rejects_bad_params() {
        let t = vec![0.0, 1.0];
        let k = vec![1.0, 1.0];
        assert!(detect_clogging(&t, &k, 0.2, 1).is_err());
        assert!(detect_clogging(&t, &k, 1.5, 5).is_err());
        assert!(detect_clogging(&t[..1], &k, 0.2, 5).is_err());
    }
}
