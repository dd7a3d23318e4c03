//! Stage orchestration: solve -> kernels -> dynamics, and disorder sweeps.
//!
//! Each stage reads its inputs from, and writes its artifacts to, one output
//! directory, so stages can be rerun independently.

use std::f64::consts::PI;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Displacement, FrictionMode, RunConfig};
use crate::dynamics::{
    hall_angle, integrate, memory_kernel, ohmic_reduction, EquationOfMotion, Friction, OhmicFit, TrajectoryRecord,
};
use crate::error::{Error, Result};
use crate::kernels::{
    assemble_action_kernels, damping_kernel, default_broadening, default_omega_grid, default_tau_grid,
    force_matrix_elements, spectral_function, spring_constant, transverse_coefficient_state,
    transverse_coefficient_virtual, AdiabaticProvider, KernelMetadata, KernelSet, RigidProvider, SpectralFunction,
    SpringConstant,
};
use crate::model::{build_lattice, seed_pair_field, LatticeModel, PairField};
use crate::report::{read_csv_columns, read_json, ArtifactWriter, Cell, RunManifest, Table};
use crate::spectrum::{occupations, self_consistent_gap, solve_field, BdgSpectrum, SelfConsistencyReport};

pub const PAIR_FIELD_FILE: &str = "solve/pair_field.json";
pub const EIGENVALUES_FILE: &str = "solve/eigenvalues.csv";
pub const SOLVE_SUMMARY_FILE: &str = "solve/summary.json";
pub const KERNELS_FILE: &str = "kernels/kernels.json";
pub const SPECTRAL_FILE: &str = "kernels/spectral_function.csv";

/// Eigenvalues re-derived from a stored field must match the stored list to this.
const EIGENVALUE_RECHECK_TOL: f64 = 1e-9;

/// Scalar results of the solve stage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveSummary {
    pub physics_hash: String,
    pub disorder_seed: u64,
    pub converged: bool,
    pub iterations: usize,
    pub final_residual: Option<f64>,
    pub background_iterations: Option<usize>,
    pub bulk_gap: f64,
    /// Length of the displacement carrier (the seed core length).
    pub coherence_length: f64,
    /// `r / atanh(|Delta(r)| / Delta_bulk)` on the innermost ring of sites.
    pub fitted_core_length: Option<f64>,
    pub degenerate: bool,
    pub winding: i32,
    pub measured_winding: Option<f64>,
    pub mean_density: f64,
    /// `pi q nbar`, the topological value of `B`.
    pub pi_q_nbar: f64,
    pub lowest_excitation: Option<f64>,
    /// Positive eigenvalues below the bulk gap.
    pub subgap_states: usize,
    pub particle_hole_defect: f64,
    pub spectral_symmetry_defect: f64,
}

pub struct SolveOutcome {
    pub model: LatticeModel,
    pub pair: PairField,
    pub spectrum: BdgSpectrum,
    pub report: SelfConsistencyReport,
    pub summary: SolveSummary,
}

/// Scalar results of the kernels stage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelSummary {
    pub physics_hash: String,
    pub disorder_seed: u64,
    pub b_virtual: f64,
    pub b_state: Option<f64>,
    /// `|B_state - B_virtual| / |B_virtual|`.
    pub b_relative_difference: Option<f64>,
    pub b_state_min_overlap: Option<f64>,
    pub pi_q_nbar: f64,
    pub b_over_pi_q_nbar: Option<f64>,
    pub k_spring: f64,
    pub k_gradient_term: f64,
    pub k_spectral_term: f64,
    pub eta: f64,
    pub ohmic_fit: OhmicFit,
    pub hall_angle: Option<f64>,
    pub eta_b: f64,
    pub total_weight: f64,
    /// `|int J - sum of weights| / sum of weights`.
    pub sum_rule_defect: f64,
    pub damping_symmetry_defect: f64,
    pub zero_frequency_flag: bool,
    pub skipped_pairs: usize,
}

pub struct KernelOutcome {
    pub set: KernelSet,
    pub spectral: SpectralFunction,
    pub summary: KernelSummary,
}

/// Hash of the sections that determine the solve and kernels artifacts.
pub fn physics_hash(cfg: &RunConfig) -> String {
    let mut c = cfg.clone();
    c.dynamics = RunConfig::default().dynamics;
    c.outputs = RunConfig::default().outputs;
    c.disorder.ensemble_size = 1;
    c.hash()
}

pub fn build_model(cfg: &RunConfig, seed: u64) -> Result<LatticeModel> {
    let l = &cfg.lattice;
    build_lattice(l.nx, l.ny, l.a, l.t_hop, l.mu, l.boundary, &cfg.disorder.spec(seed))
}

/// Converges the gap for one disorder realization. With a vortex and
/// `numerics.background`, the vortex-free gap on the same lattice is
/// converged too and attached for displacements.
pub fn solve(cfg: &RunConfig, seed: u64) -> Result<SolveOutcome> {
    cfg.validate()?;
    let model = build_model(cfg, seed)?;
    let center = cfg.center();
    let params = cfg.gap_params();
    let start = seed_pair_field(&model, center, cfg.vortex.q, cfg.pairing.delta_seed, cfg.pairing.xi)?;
    let (mut pair, spectrum, report) = self_consistent_gap(&model, &start, &params)?;
    if !report.converged {
        return Err(Error::Numeric(format!(
            "gap equation did not converge in {} iterations (residual {:.3e})",
            report.iterations,
            report.final_residual().unwrap_or(f64::NAN)
        )));
    }
    let mut background_iterations = None;
    if cfg.numerics.background && cfg.vortex.q != 0 && !pair.degenerate {
        let flat = seed_pair_field(&model, center, 0, cfg.pairing.delta_seed, cfg.pairing.xi)?;
        let (bg, _, bg_report) = self_consistent_gap(&model, &flat, &params)?;
        background_iterations = Some(bg_report.iterations);
        if bg_report.converged && bg.delta.iter().all(|d| d.norm() > 0.0) {
            pair = pair.with_background(bg.delta)?;
        }
    }
    let spectrum = occupations(spectrum, cfg.temperature.beta)?;
    let summary = summarize_solve(cfg, seed, &pair, &spectrum, &report, background_iterations)?;
    Ok(SolveOutcome {
        model,
        pair,
        spectrum,
        report,
        summary,
    })
}

fn summarize_solve(
    cfg: &RunConfig,
    seed: u64,
    pair: &PairField,
    spectrum: &BdgSpectrum,
    report: &SelfConsistencyReport,
    background_iterations: Option<usize>,
) -> Result<SolveSummary> {
    let mean_density = spectrum.mean_density();
    let ph = spectrum.particle_hole_pairing_defect();
    Ok(SolveSummary {
        physics_hash: physics_hash(cfg),
        disorder_seed: seed,
        converged: report.converged,
        iterations: report.iterations,
        final_residual: report.final_residual(),
        background_iterations,
        bulk_gap: pair.bulk_gap,
        coherence_length: pair.coherence_length,
        fitted_core_length: pair.fitted_core_length(),
        degenerate: pair.degenerate,
        winding: pair.winding,
        measured_winding: pair.measured_winding(),
        mean_density,
        pi_q_nbar: PI * pair.winding as f64 * mean_density,
        lowest_excitation: spectrum.lowest_excitation(),
        subgap_states: spectrum
            .energies
            .iter()
            .filter(|&&e| e > 0.0 && e < pair.bulk_gap)
            .count(),
        particle_hole_defect: ph,
        spectral_symmetry_defect: spectrum.spectral_symmetry_defect(),
    })
}

/// Influence-functional kernels of a converged vortex.
pub fn kernels(cfg: &RunConfig, solved: &SolveOutcome) -> Result<KernelOutcome> {
    let n = &cfg.numerics;
    let (model, pair, spectrum) = (&solved.model, &solved.pair, &solved.spectrum);
    let beta = cfg.temperature.beta;
    let elements = force_matrix_elements(model, pair, spectrum, n.fd_step)?;
    let virt = transverse_coefficient_virtual(&elements, spectrum, 1e-8);
    let state = if n.state_transverse && cfg.vortex.q != 0 && !pair.degenerate {
        let st = match n.displacement {
            Displacement::Rigid => transverse_coefficient_state(
                &RigidProvider {
                    model,
                    pair,
                    spectrum,
                },
                n.transverse_step,
            )?,
            Displacement::Adiabatic => transverse_coefficient_state(
                &AdiabaticProvider {
                    model,
                    pair,
                    spectrum,
                    params: cfg.gap_params(),
                },
                n.transverse_step,
            )?,
        };
        Some(st)
    } else {
        None
    };
    let eta_b = n.eta_b.unwrap_or_else(|| default_broadening(spectrum));
    let grid = match n.omega_step {
        None => default_omega_grid(spectrum, eta_b),
        Some(step) => {
            let top = default_omega_grid(spectrum, eta_b).last().copied().unwrap_or(1.0);
            let count = (top / step).ceil() as usize;
            (0..=count).map(|i| i as f64 * step).collect()
        }
    };
    let j = spectral_function(&elements, spectrum, &grid, eta_b)?;
    let tau = default_tau_grid(beta, n.tau_points, n.tau_max);
    let f = damping_kernel(&j, &tau, beta)?;
    let spring = if cfg.pairing.g > 0.0 {
        spring_constant(model, pair, &j, cfg.pairing.g, n.fd_step)?
    } else {
        SpringConstant {
            k: 0.0,
            gradient_term: 0.0,
            spectral_term: 0.0,
        }
    };
    let omega_fit = n.omega_fit.unwrap_or(10.0 * eta_b);
    let fit = ohmic_reduction(&j, omega_fit, n.ohmic_threshold)?;
    let metadata = KernelMetadata {
        eta_b,
        beta,
        disorder_seed: solved.summary.disorder_seed,
        fd_step: n.fd_step,
        zero_frequency_flag: f.zero_frequency_flag,
    };
    let set = assemble_action_kernels(&spring, &j, &f, virt.b, &tau, metadata)?;
    let pi_q_nbar = solved.summary.pi_q_nbar;
    let summary = KernelSummary {
        physics_hash: physics_hash(cfg),
        disorder_seed: solved.summary.disorder_seed,
        b_virtual: virt.b,
        b_state: state.as_ref().map(|s| s.b),
        b_relative_difference: state
            .as_ref()
            .filter(|_| virt.b != 0.0)
            .map(|s| ((s.b - virt.b) / virt.b).abs()),
        b_state_min_overlap: state.as_ref().map(|s| s.min_overlap),
        pi_q_nbar,
        b_over_pi_q_nbar: (pi_q_nbar != 0.0).then(|| virt.b / pi_q_nbar),
        k_spring: spring.k,
        k_gradient_term: spring.gradient_term,
        k_spectral_term: spring.spectral_term,
        eta: fit.eta,
        ohmic_fit: fit,
        hall_angle: hall_angle(virt.b, fit.eta.max(0.0)).ok(),
        eta_b,
        total_weight: j.total_weight,
        sum_rule_defect: j.missing_weight_fraction(),
        damping_symmetry_defect: f.symmetry_defect(),
        zero_frequency_flag: f.zero_frequency_flag,
        skipped_pairs: virt.skipped_pairs,
    };
    Ok(KernelOutcome {
        set,
        spectral: j,
        summary,
    })
}

fn solve_artifacts(w: &ArtifactWriter, solved: &SolveOutcome) -> Result<()> {
    let (model, pair, spectrum) = (&solved.model, &solved.pair, &solved.spectrum);
    let g = &model.geometry;
    let density = spectrum.density();
    let mut profile = Table::new(&[
        "x [a]",
        "y [a]",
        "re_delta [t_hop]",
        "im_delta [t_hop]",
        "abs_delta [t_hop]",
        "phase [rad]",
        "density [1/a^2]",
        "potential [t_hop]",
    ]);
    for s in 0..g.sites() {
        let p = g.position(s);
        let d = pair.delta[s];
        profile.rows.push(vec![
            Cell::Float(p[0]),
            Cell::Float(p[1]),
            Cell::Float(d.re),
            Cell::Float(d.im),
            Cell::Float(d.norm()),
            Cell::Float(d.arg()),
            Cell::Float(density[s]),
            Cell::Float(model.potential[s]),
        ]);
    }
    w.write_table("solve/gap_profile.csv", &profile)?;
    let mut eig = Table::new(&["index", "energy [t_hop]", "occupation"]);
    for (k, (&e, &f)) in spectrum.energies.iter().zip(&spectrum.occupations).enumerate() {
        eig.rows.push(vec![Cell::Int(k as i64), Cell::Float(e), Cell::Float(f)]);
    }
    w.write_table(EIGENVALUES_FILE, &eig)?;
    let mut res = Table::new(&["iteration", "residual [t_hop]"]);
    for (i, r) in solved.report.residual_history.iter().enumerate() {
        res.rows.push(vec![Cell::Int(i as i64 + 1), Cell::Float(*r)]);
    }
    w.write_table("solve/scf_residuals.csv", &res)?;
    w.write_json(PAIR_FIELD_FILE, pair)?;
    w.write_json("solve/scf_report.json", &solved.report)?;
    w.write_json(SOLVE_SUMMARY_FILE, &solved.summary)
}

fn kernel_artifacts(w: &ArtifactWriter, prefix: &str, out: &KernelOutcome) -> Result<()> {
    let set = &out.set;
    w.write_table(
        &format!("{prefix}spectral_function.csv"),
        &Table::from_columns(&["omega [t_hop/hbar]", "J [t_hop/a^2]"], &[&set.omega_grid, &set.j_of_omega]),
    )?;
    w.write_table(
        &format!("{prefix}damping_kernel.csv"),
        &Table::from_columns(&["tau [hbar/t_hop]", "F_parallel [t_hop^2/(hbar a^2)]"], &[&set.tau_grid, &set.f_parallel]),
    )?;
    w.write_json(&format!("{prefix}kernels.json"), &out.summary)
}

fn check_config(cfg: &RunConfig, stage: &str) -> Result<()> {
    cfg.validate().map_err(|e| e.in_stage(stage))
}

/// Converges the gap and writes the field, eigenvalues and report.
pub fn run_solve(cfg: &RunConfig, out: &Path, threads: usize) -> Result<(SolveOutcome, RunManifest)> {
    check_config(cfg, "solve")?;
    let w = ArtifactWriter::new(out, "solve")?;
    let seed = cfg.disorder.seed;
    let solved = solve(cfg, seed).map_err(|e| e.in_stage("solve"))?;
    w.write_bytes("config.json", cfg.to_json().as_bytes())?;
    solve_artifacts(&w, &solved)?;
    let manifest = w.finish(&cfg.hash(), threads, vec![seed])?;
    Ok((solved, manifest))
}

fn missing(stage: &str, artifact: &str, prerequisite: &str) -> Error {
    Error::MissingArtifact {
        stage: stage.into(),
        artifact: artifact.into(),
        prerequisite: prerequisite.into(),
    }
}

/// Rebuilds the solve outcome from the stored field, checking that it was
/// produced by the same physics configuration and reproduces the stored
/// eigenvalues.
pub fn load_solve(cfg: &RunConfig, out: &Path, stage: &str) -> Result<SolveOutcome> {
    let summary_path = out.join(SOLVE_SUMMARY_FILE);
    let pair_path = out.join(PAIR_FIELD_FILE);
    let eig_path = out.join(EIGENVALUES_FILE);
    for (p, name) in [(&summary_path, SOLVE_SUMMARY_FILE), (&pair_path, PAIR_FIELD_FILE), (&eig_path, EIGENVALUES_FILE)] {
        if !p.exists() {
            return Err(missing(stage, name, "solve"));
        }
    }
    let summary: SolveSummary = read_json(&summary_path)?;
    if summary.physics_hash != physics_hash(cfg) {
        return Err(missing(stage, "solve artifacts for this configuration", "solve"));
    }
    let pair: PairField = read_json(&pair_path)?;
    let report: SelfConsistencyReport = read_json(&out.join("solve/scf_report.json"))?;
    let model = build_model(cfg, summary.disorder_seed)?;
    let spectrum = solve_field(&model, &pair, cfg.temperature.beta)?;
    let (_, cols) = read_csv_columns(&eig_path)?;
    let stored = cols.get(1).ok_or_else(|| Error::Format {
        path: eig_path.clone(),
        message: "missing energy column".into(),
    })?;
    let drift = stored.len() != spectrum.len()
        || stored
            .iter()
            .zip(&spectrum.energies)
            .any(|(a, b)| (a - b).abs() > EIGENVALUE_RECHECK_TOL * (1.0 + b.abs()));
    if drift {
        return Err(Error::Format {
            path: eig_path,
            message: "stored eigenvalues do not match the stored pair field".into(),
        });
    }
    Ok(SolveOutcome {
        model,
        pair,
        spectrum,
        report,
        summary,
    })
}

/// Computes `J`, `F_parallel`, `B` (both forms), `K` and `eta` from the solve artifacts.
pub fn run_kernels(cfg: &RunConfig, out: &Path, threads: usize) -> Result<(KernelOutcome, RunManifest)> {
    check_config(cfg, "kernels")?;
    let solved = load_solve(cfg, out, "kernels").map_err(|e| e.in_stage("kernels"))?;
    let w = ArtifactWriter::new(out, "kernels")?;
    let result = kernels(cfg, &solved).map_err(|e| e.in_stage("kernels"))?;
    kernel_artifacts(&w, "kernels/", &result)?;
    let manifest = w.finish(&cfg.hash(), threads, vec![solved.summary.disorder_seed])?;
    Ok((result, manifest))
}

/// Scalars and measured rates of one trajectory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DynamicsSummary {
    pub b: f64,
    pub eta: f64,
    pub k_spring: f64,
    pub friction: FrictionMode,
    pub hall_angle: Option<f64>,
    /// `K B / (B^2 + eta^2)` and `K eta / (B^2 + eta^2)`.
    pub rotation_rate_expected: f64,
    pub decay_rate_expected: f64,
    pub rotation_rate_measured: Option<f64>,
    pub decay_rate_measured: Option<f64>,
    pub orbit_period_expected: Option<f64>,
    pub orbit_period_measured: Option<f64>,
    /// Largest relative change of `K |x|^2 / 2` over any one expected period.
    pub max_energy_drift_per_period: Option<f64>,
    pub steps: usize,
}

pub struct DynamicsOutcome {
    pub eom: EquationOfMotion,
    pub trajectory: TrajectoryRecord,
    pub summary: DynamicsSummary,
}

/// Integrates the vortex equation of motion with coefficients from the
/// kernels stage, or from the overrides in `dynamics`.
pub fn dynamics(cfg: &RunConfig, out: &Path) -> Result<DynamicsOutcome> {
    let d = &cfg.dynamics;
    let needs_kernels = d.b.is_none() || d.eta.is_none() || d.k_spring.is_none() || d.friction == FrictionMode::Memory;
    let stored = if needs_kernels {
        let path = out.join(KERNELS_FILE);
        if !path.exists() {
            return Err(missing("dynamics", KERNELS_FILE, "kernels"));
        }
        Some(read_json::<KernelSummary>(&path)?)
    } else {
        None
    };
    let b = d.b.or(stored.as_ref().map(|s| s.b_virtual)).unwrap_or(0.0);
    let eta = d.eta.or(stored.as_ref().map(|s| s.eta.max(0.0))).unwrap_or(0.0);
    let k = d.k_spring.or(stored.as_ref().map(|s| s.k_spring)).unwrap_or(0.0);
    let steps = (d.t_final / d.dt).round() as usize;
    let friction = match d.friction {
        FrictionMode::Ohmic => Friction::Ohmic(eta),
        FrictionMode::Memory => {
            let path = out.join(SPECTRAL_FILE);
            if !path.exists() {
                return Err(missing("dynamics", SPECTRAL_FILE, "kernels"));
            }
            let (_, cols) = read_csv_columns(&path)?;
            let mut j = SpectralFunction::zeros(cols[0].clone(), stored.as_ref().map_or(1.0, |s| s.eta_b));
            j.j = cols[1].clone();
            Friction::Memory {
                dt: d.dt,
                gamma: memory_kernel(&j, d.dt, steps),
            }
        }
    };
    let eom = EquationOfMotion {
        b,
        k_spring: k,
        friction,
        drive: d.drive.clone(),
        mass: d.mass,
    };
    let trajectory = integrate(&eom, d.x_init, d.t_final, d.dt)?;
    let eta_eff = eom.effective_eta();
    let den = b * b + eta_eff * eta_eff;
    let rotation_rate_expected = if den > 0.0 { k * b / den } else { 0.0 };
    let decay_rate_expected = if den > 0.0 { k * eta_eff / den } else { 0.0 };
    let (rot, decay) = measured_rates(&trajectory);
    let period = |w: f64| (w != 0.0).then(|| 2.0 * PI / w.abs());
    let summary = DynamicsSummary {
        b,
        eta: eta_eff,
        k_spring: k,
        friction: d.friction,
        hall_angle: hall_angle(b, eta_eff).ok(),
        rotation_rate_expected,
        decay_rate_expected,
        rotation_rate_measured: rot,
        decay_rate_measured: decay,
        orbit_period_expected: period(rotation_rate_expected),
        orbit_period_measured: rot.and_then(period),
        max_energy_drift_per_period: period(rotation_rate_expected)
            .and_then(|p| energy_drift_per_period(&trajectory, k, p)),
        steps,
    };
    Ok(DynamicsOutcome {
        eom,
        trajectory,
        summary,
    })
}

/// Mean angular velocity and logarithmic decay rate of `|x|` over the run.
fn measured_rates(tr: &TrajectoryRecord) -> (Option<f64>, Option<f64>) {
    let (first, last) = match (tr.positions.first(), tr.positions.last()) {
        (Some(a), Some(b)) => (*a, *b),
        _ => return (None, None),
    };
    let t = tr.times.last().copied().unwrap_or(0.0);
    let r0 = first[0].hypot(first[1]);
    if t <= 0.0 || r0 == 0.0 || tr.positions.iter().any(|p| p[0] == 0.0 && p[1] == 0.0) {
        return (None, None);
    }
    let mut angle = 0.0;
    for w in tr.positions.windows(2) {
        let cross = w[0][0] * w[1][1] - w[0][1] * w[1][0];
        let dot = w[0][0] * w[1][0] + w[0][1] * w[1][1];
        angle += cross.atan2(dot);
    }
    let r1 = last[0].hypot(last[1]);
    (Some(angle / t), Some((r0 / r1).ln() / t))
}

fn energy_drift_per_period(tr: &TrajectoryRecord, k: f64, period: f64) -> Option<f64> {
    let e = tr.pinning_energy(k);
    let e0 = e.first().copied().filter(|v| *v > 0.0)?;
    let per = ((period / tr.dt).round() as usize).max(1);
    if per >= e.len() {
        return None;
    }
    Some((0..e.len() - per).map(|i| (e[i + per] - e[i]).abs() / e0).fold(0.0, f64::max))
}

pub fn run_dynamics(cfg: &RunConfig, out: &Path, threads: usize) -> Result<(DynamicsOutcome, RunManifest)> {
    check_config(cfg, "dynamics")?;
    let result = dynamics(cfg, out).map_err(|e| e.in_stage("dynamics"))?;
    let w = ArtifactWriter::new(out, "dynamics")?;
    let tr = &result.trajectory;
    let energy = tr.pinning_energy(result.eom.k_spring);
    let mut table = Table::new(&[
        "t [hbar/t_hop]",
        "x [a]",
        "y [a]",
        "vx [a t_hop/hbar]",
        "vy [a t_hop/hbar]",
        "pinning_energy [t_hop]",
    ]);
    for i in 0..tr.times.len() {
        table.rows.push(vec![
            Cell::Float(tr.times[i]),
            Cell::Float(tr.positions[i][0]),
            Cell::Float(tr.positions[i][1]),
            Cell::Float(tr.velocities[i][0]),
            Cell::Float(tr.velocities[i][1]),
            Cell::Float(energy[i]),
        ]);
    }
    w.write_table("dynamics/trajectory.csv", &table)?;
    w.write_json("dynamics/summary.json", &result.summary)?;
    let manifest = w.finish(&cfg.hash(), threads, vec![])?;
    Ok((result, manifest))
}

/// One ensemble member: its kernels, or why it failed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleRow {
    pub seed: u64,
    pub ok: bool,
    pub b: Option<f64>,
    pub eta: Option<f64>,
    pub k_spring: Option<f64>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Statistics {
    pub mean: f64,
    pub stdev: f64,
    pub min: f64,
    pub max: f64,
    /// `stdev / |mean|`, zero when both vanish.
    pub relative_spread: f64,
}

impl Statistics {
    /// Sample statistics (`n - 1` in the variance) of the values, in the given order.
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = if values.len() > 1 {
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        let stdev = var.sqrt();
        let relative_spread = if stdev == 0.0 { 0.0 } else { stdev / mean.abs() };
        Some(Self {
            mean,
            stdev,
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            relative_spread,
        })
    }
}

/// Largest relative spread of `B` over an ensemble that still counts as fixed.
pub const B_SPREAD_LIMIT: f64 = 0.05;
/// Smallest relative spread of `eta` that counts as disorder-sensitive.
pub const ETA_SPREAD_FLOOR: f64 = 0.20;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub members: usize,
    pub failed: usize,
    pub b: Option<Statistics>,
    pub eta: Option<Statistics>,
    pub k_spring: Option<Statistics>,
    /// `stdev(B)/mean(B)` next to `stdev(eta)/mean(eta)`.
    pub b_relative_spread: Option<f64>,
    pub eta_relative_spread: Option<f64>,
    /// "confirmed" when `B` spreads by less than [`B_SPREAD_LIMIT`] while `eta`
    /// spreads by more than [`ETA_SPREAD_FLOOR`].
    pub decoupling: String,
}

pub struct SweepOutcome {
    pub rows: Vec<EnsembleRow>,
    pub summary: EnsembleSummary,
}

/// Solves and analyses every seed of the ensemble on a pool of `threads`
/// workers. Rows are ordered by seed, so the result does not depend on the
/// scheduling.
pub fn sweep(cfg: &RunConfig, threads: usize) -> Result<(SweepOutcome, Vec<(u64, KernelOutcome)>)> {
    if cfg.disorder.ensemble_size < 2 {
        return Err(Error::config("disorder.ensemble_size", "a sweep needs at least 2 members"));
    }
    let seeds = cfg.disorder.ensemble_seeds();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::Numeric(format!("cannot start worker pool: {e}")))?;
    let mut results: Vec<(u64, Result<KernelOutcome>)> = pool.install(|| {
        seeds
            .par_iter()
            .map(|&seed| (seed, solve(cfg, seed).and_then(|s| kernels(cfg, &s))))
            .collect()
    });
    results.sort_by_key(|(seed, _)| *seed);
    let mut rows = Vec::new();
    let mut outcomes = Vec::new();
    for (seed, r) in results {
        match r {
            Ok(k) => {
                rows.push(EnsembleRow {
                    seed,
                    ok: true,
                    b: Some(k.summary.b_virtual),
                    eta: Some(k.summary.eta),
                    k_spring: Some(k.summary.k_spring),
                    error: None,
                });
                outcomes.push((seed, k));
            }
            Err(e) => rows.push(EnsembleRow {
                seed,
                ok: false,
                b: None,
                eta: None,
                k_spring: None,
                error: Some(e.to_string()),
            }),
        }
    }
    let failed = rows.iter().filter(|r| !r.ok).count();
    if 2 * failed > rows.len() {
        return Err(Error::Numeric(format!(
            "{failed} of {} ensemble members failed; first error: {}",
            rows.len(),
            rows.iter().find_map(|r| r.error.clone()).unwrap_or_default()
        )));
    }
    let column = |f: fn(&EnsembleRow) -> Option<f64>| rows.iter().filter_map(f).collect::<Vec<f64>>();
    let b = Statistics::of(&column(|r| r.b));
    let eta = Statistics::of(&column(|r| r.eta));
    let k_spring = Statistics::of(&column(|r| r.k_spring));
    let b_relative_spread = b.as_ref().map(|s| s.relative_spread);
    let eta_relative_spread = eta.as_ref().map(|s| s.relative_spread);
    let decoupling = match (b_relative_spread, eta_relative_spread) {
        (Some(sb), Some(se)) if sb < B_SPREAD_LIMIT && se > ETA_SPREAD_FLOOR => "confirmed",
        (Some(sb), Some(se)) if sb == 0.0 && se == 0.0 => "undetermined",
        _ => "violated",
    };
    let summary = EnsembleSummary {
        members: rows.len(),
        failed,
        b,
        eta,
        k_spring,
        b_relative_spread,
        eta_relative_spread,
        decoupling: decoupling.into(),
    };
    Ok((SweepOutcome { rows, summary }, outcomes))
}

pub fn run_sweep(cfg: &RunConfig, out: &Path, threads: usize) -> Result<(SweepOutcome, RunManifest)> {
    check_config(cfg, "sweep")?;
    let (result, outcomes) = sweep(cfg, threads).map_err(|e| e.in_stage("sweep"))?;
    let w = ArtifactWriter::new(out, "sweep")?;
    for (seed, k) in &outcomes {
        kernel_artifacts(&w, &format!("sweep/seed_{seed}/"), k)?;
    }
    let mut table = Table::new(&["seed", "ok", "B [hbar/a^2]", "eta [hbar/a^2]", "K [t_hop/a^2]", "error"]);
    let opt = |v: Option<f64>| v.map_or(Cell::Text(String::new()), Cell::Float);
    for r in &result.rows {
        table.rows.push(vec![
            Cell::Int(r.seed as i64),
            Cell::Int(r.ok as i64),
            opt(r.b),
            opt(r.eta),
            opt(r.k_spring),
            Cell::Text(r.error.clone().unwrap_or_default()),
        ]);
    }
    w.write_table("sweep/ensemble.csv", &table)?;
    w.write_json("sweep/summary.json", &result.summary)?;
    let seeds = result.rows.iter().map(|r| r.seed).collect();
    let manifest = w.finish(&cfg.hash(), threads, seeds)?;
    Ok((result, manifest))
}
