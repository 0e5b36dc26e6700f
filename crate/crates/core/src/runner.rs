//! Scenario orchestration: resolve a declarative scenario into an operator
//! context, initial state and step control; run it; write the output
//! directory (manifest.json, diagnostics.csv, snapshots/, report.json).
//!
//! The manifest holds every effective parameter, including auto-chosen
//! `b`, `t0` and `dt`, so a run is reproducible from its manifest alone.

use std::path::Path;

use serde::Serialize;

use crate::diagnostics::{self, DiagnosticsRecord, DiagnosticsSettings, LevineConfig};
use crate::error::{Error, Result};
use crate::initial::{boundary_check, BoundaryCheck};
use crate::integrator::{
    self, HaltReason, Observer, RecordCollector, RunOutcome, SimState, StepControl,
};
use crate::nonlinearity::{
    check_blowup_condition, check_conditions_anisotropic, check_global_condition,
    AnisotropicCondition, ConditionReport, EnergyModel,
};
use crate::operator::{OperatorContext, OperatorOptions};
use crate::output::{BoundaryTracker, CsvWriter, SnapshotWriter};
use crate::scenario::Scenario;

/// Exit classes, a stable contract: 0 completed, 1 error-like halt,
/// 3 blow-up-like halt.
pub const EXIT_COMPLETED: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_BLOWUP_HALT: i32 = 3;

#[derive(Clone, Copy, Debug, Serialize)]
pub struct LevineSetup {
    pub nu: f64,
    pub b: f64,
    pub t0: f64,
    pub h0: f64,
    pub hprime0: f64,
    /// Blow-up time bound `t1 = H(0) / (nu H'(0))`.
    pub t1: f64,
}

#[derive(Serialize)]
pub struct EffectiveParams {
    pub dt: f64,
    pub omega_max: f64,
    pub e0: f64,
    pub initial_sup_grad: f64,
    pub sup_gradient_bound: f64,
    pub field_magnitude_bound: f64,
    pub kernel: String,
    pub kernel_params: Vec<(String, f64)>,
    pub energy: String,
    pub levine: Option<LevineSetup>,
    pub boundary_phi: BoundaryCheck,
    pub boundary_psi: BoundaryCheck,
}

/// Fully resolved run configuration plus the manifest document.
#[derive(Serialize)]
pub struct Manifest {
    pub scenario: Scenario,
    pub effective: EffectiveParams,
}

pub struct Prepared {
    pub scenario: Scenario,
    pub ctx: OperatorContext,
    pub initial: SimState,
    pub control: StepControl,
    pub diag: DiagnosticsSettings,
    pub manifest: Manifest,
    pub checks: Vec<ConditionReport>,
    pub kernel_validation: crate::kernels::ValidationReport,
    pub truncation_warnings: Vec<String>,
}

/// Resolve a validated scenario into everything a run needs.
pub fn prepare(scenario: &Scenario) -> Result<Prepared> {
    scenario.validate()?;
    let grid = scenario.build_grid()?;
    let kernel = scenario.build_kernel(&grid)?;
    let energy = scenario.build_energy()?;
    let kernel_validation = kernel.validate_decay(&grid);

    let ctx = OperatorContext::new(
        grid.clone(),
        kernel,
        energy,
        OperatorOptions {
            dealias: scenario.dealias,
            strict: scenario.strict,
            ..OperatorOptions::default()
        },
    )?;

    let phi_vals = scenario.initial.phi.realize(&grid, None)?;
    let psi_vals = scenario.initial.psi.realize(&grid, Some(&phi_vals))?;
    let boundary_phi = boundary_check(&phi_vals);
    let boundary_psi = boundary_check(&psi_vals);
    let mut truncation_warnings = Vec::new();
    for (name, check) in [("phi", &boundary_phi), ("psi", &boundary_psi)] {
        if !check.ok {
            let msg = format!(
                "truncation: {name} boundary ring magnitude {:.3e} exceeds 1e-12 x amplitude {:.3e}",
                check.ring_max, check.amplitude_max
            );
            if scenario.strict {
                return Err(Error::StrictMode(msg));
            }
            truncation_warnings.push(msg);
        }
    }

    let mut state = SimState::new(
        crate::grid::SpectralField::from_real(&grid, phi_vals)?,
        crate::grid::SpectralField::from_real(&grid, psi_vals)?,
    )?;

    let (e0, _) = diagnostics::energy(&ctx, &mut state)?;
    let initial_sup_grad = state.w.sup_norm_gradient();

    // condition checks requested by the scenario
    let mut checks = Vec::new();
    if let Some(cfg) = &scenario.checks {
        match ctx.energy() {
            EnergyModel::Isotropic(iso) => {
                if let Some(k) = cfg.k {
                    checks.push(check_global_condition(iso, k, cfg.u_max, cfg.n_samples)?);
                }
                if let Some(nu) = cfg.nu {
                    checks.push(check_blowup_condition(iso, nu, cfg.u_max, cfg.n_samples)?);
                }
            }
            EnergyModel::Anisotropic(aniso) => {
                // |U| <= sqrt(u_max) matches the isotropic sample range
                let radius = cfg.u_max.sqrt();
                if let Some(k) = cfg.k {
                    checks.push(check_conditions_anisotropic(
                        aniso,
                        AnisotropicCondition::Global { k },
                        radius,
                        cfg.n_samples,
                    )?);
                }
                if let Some(nu) = cfg.nu {
                    checks.push(check_conditions_anisotropic(
                        aniso,
                        AnisotropicCondition::BlowUp { nu },
                        radius,
                        cfg.n_samples,
                    )?);
                }
            }
        }
    }

    // concavity setup: explicit spec wins; otherwise automatic when E(0) < 0
    let levine_cfg = match &scenario.levine {
        Some(spec) => {
            let (inner, _) = ctx.r_inner(&mut state.w.clone(), &mut state.v.clone())?;
            let b = match spec.b {
                Some(b) => b,
                None => {
                    if e0 < 0.0 {
                        -2.0 * e0
                    } else {
                        return Err(Error::invalid_argument(
                            "levine.b must be given explicitly when E(0) >= 0",
                        ));
                    }
                }
            };
            let t0 = spec
                .t0
                .unwrap_or_else(|| 1.0f64.max((1.0 + inner.abs()) / b));
            Some(LevineConfig::explicit(spec.nu, b, t0, Some(e0), inner)?)
        }
        None if e0 < 0.0 => {
            let (inner, _) = ctx.r_inner(&mut state.w.clone(), &mut state.v.clone())?;
            Some(LevineConfig::auto(0.5, e0, inner)?)
        }
        None => None,
    };

    let levine_setup = match &levine_cfg {
        Some(cfg) => {
            let (values, _) = diagnostics::levine_h(&ctx, &mut state, cfg)?;
            let t1 = if values.h > 0.0 && values.hprime > 0.0 {
                diagnostics::levine_bound(cfg.nu, values.h, values.hprime)?
            } else {
                f64::NAN
            };
            Some(LevineSetup {
                nu: cfg.nu,
                b: cfg.b,
                t0: cfg.t0,
                h0: values.h,
                hprime0: values.hprime,
                t1,
            })
        }
        None => None,
    };

    let dt = match scenario.control.dt {
        Some(dt) => dt.min(scenario.control.t_end),
        None => integrator::default_dt(&ctx, scenario.control.t_end),
    };
    let sup_gradient_bound = if initial_sup_grad > 0.0 {
        scenario.control.sup_gradient_factor * initial_sup_grad
    } else {
        scenario.control.sup_gradient_factor
    };
    let control = StepControl::new(
        dt,
        scenario.control.t_end,
        scenario.control.scheme,
        scenario.control.max_steps,
        sup_gradient_bound,
        scenario.control.field_magnitude_bound,
    )?;

    let manifest = Manifest {
        scenario: scenario.clone(),
        effective: EffectiveParams {
            dt,
            omega_max: ctx.omega_max(),
            e0,
            initial_sup_grad,
            sup_gradient_bound,
            field_magnitude_bound: scenario.control.field_magnitude_bound,
            kernel: ctx.kernel().name().to_string(),
            kernel_params: ctx.kernel().params().to_vec(),
            energy: ctx.energy().describe(),
            levine: levine_setup,
            boundary_phi,
            boundary_psi,
        },
    };

    Ok(Prepared {
        scenario: scenario.clone(),
        ctx,
        initial: state,
        control,
        diag: DiagnosticsSettings {
            levine: levine_cfg,
            sobolev_s: scenario.output.sobolev_s,
        },
        manifest,
        checks,
        kernel_validation,
        truncation_warnings,
    })
}

#[derive(Serialize)]
pub struct EnergySummary {
    pub e0: f64,
    pub e_final: f64,
    pub drift: f64,
}

#[derive(Serialize)]
pub struct DetectorVsBound {
    pub t_star: f64,
    pub t1: f64,
    pub within_bound: bool,
}

#[derive(Serialize)]
pub struct TelemetrySummary {
    pub max_skipped_energy_fraction: f64,
    pub floored_modes_total: u64,
    pub floor_warnings: u64,
    pub max_imag_residue: f64,
    pub max_boundary_ring_w: f64,
}

/// Final outcome document, written as `report.json`.
#[derive(Serialize)]
pub struct RunReport {
    pub outcome: String,
    pub exit_class: i32,
    pub t_final: f64,
    pub t_star: Option<f64>,
    pub steps_taken: u64,
    pub energy: EnergySummary,
    pub levine: Option<LevineSetup>,
    pub detector_vs_bound: Option<DetectorVsBound>,
    pub condition_checks: Vec<ConditionReport>,
    pub kernel_validation: crate::kernels::ValidationReport,
    pub truncation_warnings: Vec<String>,
    pub final_sup_grad: f64,
    pub telemetry: TelemetrySummary,
}

pub struct RunArtifacts {
    pub outcome: RunOutcome,
    pub exit_class: i32,
    pub records: Vec<DiagnosticsRecord>,
    pub report: RunReport,
    pub final_state: SimState,
}

fn outcome_label(outcome: &RunOutcome) -> (String, i32) {
    match outcome {
        RunOutcome::Completed { .. } => ("completed".into(), EXIT_COMPLETED),
        RunOutcome::Halted { reason, .. } => match reason {
            HaltReason::SupGradientExceeded { .. } => {
                ("halted_sup_gradient_exceeded".into(), EXIT_BLOWUP_HALT)
            }
            HaltReason::FieldMagnitudeExceeded { .. } => {
                ("halted_field_magnitude_exceeded".into(), EXIT_BLOWUP_HALT)
            }
            HaltReason::NonFinite => ("halted_non_finite".into(), EXIT_BLOWUP_HALT),
            HaltReason::MaxSteps => ("halted_max_steps".into(), EXIT_ERROR),
        },
    }
}

/// Run a prepared scenario; when `out_dir` is given, write the full output
/// directory layout.
pub fn execute(prepared: Prepared, out_dir: Option<&Path>) -> Result<RunArtifacts> {
    let Prepared {
        scenario,
        ctx,
        initial,
        control,
        diag,
        manifest,
        checks,
        kernel_validation,
        truncation_warnings,
    } = prepared;

    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
        crate::output::write_json(&dir.join("manifest.json"), &manifest)?;
    }

    let mut collector = RecordCollector::default();
    let mut boundary = BoundaryTracker::default();
    let mut csv = match out_dir {
        Some(dir) => Some(CsvWriter::create(
            &dir.join("diagnostics.csv"),
            scenario.output.diagnostics_every,
        )?),
        None => None,
    };
    let mut snapshots = out_dir.and_then(|dir| {
        (scenario.output.snapshot_every > 0)
            .then(|| SnapshotWriter::new(dir.join("snapshots"), scenario.output.snapshot_every))
    });

    let result = {
        let mut observers: Vec<&mut dyn Observer> = vec![&mut collector, &mut boundary];
        if let Some(csv) = csv.as_mut() {
            observers.push(csv);
        }
        if let Some(snap) = snapshots.as_mut() {
            observers.push(snap);
        }
        integrator::run(&ctx, initial, &control, &diag, &mut observers)?
    };
    if let Some(csv) = csv.take() {
        csv.finish()?;
    }

    let records = collector.records;
    let e0 = manifest.effective.e0;
    let e_final = records.last().map(|r| r.e).unwrap_or(e0);
    let drift = if records.len() >= 2 {
        diagnostics::energy_drift(&records)?
    } else {
        0.0
    };
    let (outcome_name, exit_class) = outcome_label(&result.outcome);
    let t_star = result.outcome.t_star();
    let detector_vs_bound = match (t_star, &manifest.effective.levine) {
        (Some(t_star), Some(setup)) if setup.t1.is_finite() => Some(DetectorVsBound {
            t_star,
            t1: setup.t1,
            within_bound: t_star <= setup.t1,
        }),
        _ => None,
    };
    let final_sup_grad = records.last().map(|r| r.sup_grad).unwrap_or(0.0);

    let report = RunReport {
        outcome: outcome_name,
        exit_class,
        t_final: result.final_state.t,
        t_star,
        steps_taken: result.steps_taken,
        energy: EnergySummary { e0, e_final, drift },
        levine: manifest.effective.levine,
        detector_vs_bound,
        condition_checks: checks,
        kernel_validation,
        truncation_warnings,
        final_sup_grad,
        telemetry: TelemetrySummary {
            max_skipped_energy_fraction: ctx.telemetry().max_skipped_energy_fraction(),
            floored_modes_total: ctx.telemetry().floored_modes_total(),
            floor_warnings: ctx.telemetry().floor_warnings(),
            max_imag_residue: ctx.telemetry().max_imag_residue(),
            max_boundary_ring_w: boundary.max_ring,
        },
    };

    if let Some(dir) = out_dir {
        crate::output::write_json(&dir.join("report.json"), &report)?;
    }

    Ok(RunArtifacts {
        outcome: result.outcome,
        exit_class,
        records,
        report,
        final_state: result.final_state,
    })
}

/// Prepare and execute, honoring the optional step-halving restart: when a
/// run halts on non-finite values and retries remain, the whole run repeats
/// from the initial data with `dt/2`.
pub fn run_scenario(scenario: &Scenario, out_dir: Option<&Path>) -> Result<RunArtifacts> {
    let mut current = scenario.clone();
    let mut retries = scenario.control.halve_dt_retries;
    loop {
        let prepared = prepare(&current)?;
        let dt = prepared.manifest.effective.dt;
        let artifacts = execute(prepared, out_dir)?;
        let non_finite = matches!(
            artifacts.outcome,
            RunOutcome::Halted {
                reason: HaltReason::NonFinite,
                ..
            }
        );
        if non_finite && retries > 0 {
            retries -= 1;
            current.control.dt = Some(0.5 * dt);
            continue;
        }
        return Ok(artifacts);
    }
}
