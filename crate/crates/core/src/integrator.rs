//! Time evolution of the first-order system `w_t = v`, `v_t = K w` with
//! fixed-step RK4 and kick-drift-kick leapfrog, plus the run loop with halt
//! detection.
//!
//! Blow-up is detected, never resolved: the run halts once `||grad w||_inf`
//! exceeds its configured bound or non-finite values appear.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{compute_record, DiagnosticsRecord, DiagnosticsSettings};
use crate::error::{Error, Result};
use crate::grid::SpectralField;
use crate::operator::OperatorContext;

/// The unknowns `(w, w_t)` of the first-order system plus time.
#[derive(Clone, Debug)]
pub struct SimState {
    pub w: SpectralField,
    pub v: SpectralField,
    pub t: f64,
    pub step_index: u64,
}

impl SimState {
    pub fn new(w: SpectralField, v: SpectralField) -> Result<Self> {
        if w.grid() != v.grid() {
            return Err(Error::invalid_argument(
                "w and v must live on the same grid",
            ));
        }
        Ok(SimState {
            w,
            v,
            t: 0.0,
            step_index: 0,
        })
    }

    pub fn is_finite(&self) -> bool {
        self.w.is_finite() && self.v.is_finite()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Rk4,
    Leapfrog,
}

/// Fixed-step control with halt thresholds (absolute values).
#[derive(Clone, Copy, Debug)]
pub struct StepControl {
    pub dt: f64,
    pub t_end: f64,
    pub scheme: Scheme,
    pub max_steps: u64,
    pub sup_gradient_bound: f64,
    pub field_magnitude_bound: f64,
}

impl StepControl {
    pub fn new(
        dt: f64,
        t_end: f64,
        scheme: Scheme,
        max_steps: u64,
        sup_gradient_bound: f64,
        field_magnitude_bound: f64,
    ) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::invalid_argument("dt must be positive"));
        }
        if !(t_end > 0.0 && t_end.is_finite()) {
            return Err(Error::invalid_argument("t_end must be positive"));
        }
        if dt > t_end {
            return Err(Error::invalid_argument("dt must not exceed t_end"));
        }
        if max_steps == 0 {
            return Err(Error::invalid_argument("max_steps must be positive"));
        }
        if !(sup_gradient_bound > 0.0 && field_magnitude_bound > 0.0) {
            return Err(Error::invalid_argument("halt thresholds must be positive"));
        }
        Ok(StepControl {
            dt,
            t_end,
            scheme,
            max_steps,
            sup_gradient_bound,
            field_magnitude_bound,
        })
    }
}

/// `0.2 / omega_max` where `omega_max` is the largest linear mode frequency
/// `|xi| sqrt(beta_hat)`, clamped to `t_end`.
pub fn default_dt(ctx: &OperatorContext, t_end: f64) -> f64 {
    let omega = ctx.omega_max();
    if omega > 0.0 {
        (0.2 / omega).min(t_end)
    } else {
        t_end
    }
}

fn eval_k(ctx: &OperatorContext, w: &Array2<f64>, t: f64, step: u64) -> Result<Array2<f64>> {
    let mut field = SpectralField::from_real(ctx.grid(), w.clone())?;
    match ctx.apply_k(&mut field) {
        Ok(out) => Ok(out.into_real()),
        Err(Error::NonFinite { what, .. }) => Err(Error::Instability {
            t,
            step,
            reason: format!("non-finite value in {what}"),
        }),
        Err(Error::ImagResidue { residue, tol, .. }) => Err(Error::Instability {
            t,
            step,
            reason: format!("imaginary residue {residue:.3e} above {tol:.3e}"),
        }),
        Err(e) => Err(e),
    }
}

fn axpy(a: &Array2<f64>, b: &Array2<f64>, c: f64) -> Array2<f64> {
    a + &(b * c)
}

/// One classical RK4 step of `(w, v)`.
pub fn step_rk4(ctx: &OperatorContext, state: &mut SimState, dt: f64) -> Result<SimState> {
    let (t, step) = (state.t, state.step_index);
    let w0 = state.w.real().clone();
    let v0 = state.v.real().clone();

    let k1v = eval_k(ctx, &w0, t, step)?;
    let k1w = &v0;

    let w_half = axpy(&w0, k1w, 0.5 * dt);
    let k2v = eval_k(ctx, &w_half, t, step)?;
    let k2w = axpy(&v0, &k1v, 0.5 * dt);

    let w_half2 = axpy(&w0, &k2w, 0.5 * dt);
    let k3v = eval_k(ctx, &w_half2, t, step)?;
    let k3w = axpy(&v0, &k2v, 0.5 * dt);

    let w_full = axpy(&w0, &k3w, dt);
    let k4v = eval_k(ctx, &w_full, t, step)?;
    let k4w = axpy(&v0, &k3v, dt);

    let sixth = dt / 6.0;
    let w1 = &w0 + &((k1w + &(&k2w * 2.0) + &(&k3w * 2.0) + &k4w) * sixth);
    let v1 = &v0 + &((&k1v + &(&k2v * 2.0) + &(&k3v * 2.0) + &k4v) * sixth);

    Ok(SimState {
        w: SpectralField::from_real(ctx.grid(), w1)?,
        v: SpectralField::from_real(ctx.grid(), v1)?,
        t: t + dt,
        step_index: step + 1,
    })
}

/// One kick-drift-kick leapfrog step; symmetric and second order.
pub fn step_leapfrog(ctx: &OperatorContext, state: &mut SimState, dt: f64) -> Result<SimState> {
    let (t, step) = (state.t, state.step_index);
    let w0 = state.w.real().clone();
    let v0 = state.v.real().clone();

    let k0 = eval_k(ctx, &w0, t, step)?;
    let v_half = axpy(&v0, &k0, 0.5 * dt);
    let w1 = axpy(&w0, &v_half, dt);
    let k1 = eval_k(ctx, &w1, t, step)?;
    let v1 = axpy(&v_half, &k1, 0.5 * dt);

    Ok(SimState {
        w: SpectralField::from_real(ctx.grid(), w1)?,
        v: SpectralField::from_real(ctx.grid(), v1)?,
        t: t + dt,
        step_index: step + 1,
    })
}

pub fn step(
    ctx: &OperatorContext,
    state: &mut SimState,
    dt: f64,
    scheme: Scheme,
) -> Result<SimState> {
    match scheme {
        Scheme::Rk4 => step_rk4(ctx, state, dt),
        Scheme::Leapfrog => step_leapfrog(ctx, state, dt),
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum HaltReason {
    SupGradientExceeded { value: f64 },
    FieldMagnitudeExceeded { value: f64 },
    NonFinite,
    MaxSteps,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RunOutcome {
    Completed { t_final: f64 },
    Halted { reason: HaltReason, t_star: f64 },
}

impl RunOutcome {
    pub fn is_completed(&self) -> bool {
        matches!(self, RunOutcome::Completed { .. })
    }

    pub fn t_star(&self) -> Option<f64> {
        match self {
            RunOutcome::Halted { t_star, .. } => Some(*t_star),
            RunOutcome::Completed { .. } => None,
        }
    }
}

/// Per-step callback with read access to the state and its diagnostics.
pub trait Observer {
    fn on_record(&mut self, state: &SimState, record: &DiagnosticsRecord) -> Result<()>;
}

impl<F> Observer for F
where
    F: FnMut(&SimState, &DiagnosticsRecord) -> Result<()>,
{
    fn on_record(&mut self, state: &SimState, record: &DiagnosticsRecord) -> Result<()> {
        self(state, record)
    }
}

/// Observer that keeps every record in memory.
#[derive(Default)]
pub struct RecordCollector {
    pub records: Vec<DiagnosticsRecord>,
}

impl Observer for RecordCollector {
    fn on_record(&mut self, _state: &SimState, record: &DiagnosticsRecord) -> Result<()> {
        self.records.push(*record);
        Ok(())
    }
}

#[derive(Debug)]
pub struct RunResult {
    pub outcome: RunOutcome,
    pub final_state: SimState,
    pub steps_taken: u64,
}

/// Advance `initial` to `t_end`, emitting a diagnostics record to every
/// observer at each step (including the initial state). Halts on the
/// gradient or magnitude bound, non-finite values, or the step cap; observer
/// failure aborts the run.
pub fn run(
    ctx: &OperatorContext,
    initial: SimState,
    control: &StepControl,
    diag: &DiagnosticsSettings,
    observers: &mut [&mut dyn Observer],
) -> Result<RunResult> {
    let mut state = initial;
    let mut steps_taken = 0u64;

    if let Some(reason) = observe_and_check(ctx, &mut state, control, diag, observers)? {
        return Ok(RunResult {
            outcome: RunOutcome::Halted {
                reason,
                t_star: state.t,
            },
            final_state: state,
            steps_taken,
        });
    }

    loop {
        let remaining = control.t_end - state.t;
        if remaining <= 1e-12 * control.t_end {
            return Ok(RunResult {
                outcome: RunOutcome::Completed { t_final: state.t },
                final_state: state,
                steps_taken,
            });
        }
        if steps_taken >= control.max_steps {
            return Ok(RunResult {
                outcome: RunOutcome::Halted {
                    reason: HaltReason::MaxSteps,
                    t_star: state.t,
                },
                final_state: state,
                steps_taken,
            });
        }
        let dt = control.dt.min(remaining);
        let next = match step(ctx, &mut state, dt, control.scheme) {
            Ok(next) => next,
            Err(Error::Instability { t, .. }) => {
                return Ok(RunResult {
                    outcome: RunOutcome::Halted {
                        reason: HaltReason::NonFinite,
                        t_star: t + dt,
                    },
                    final_state: state,
                    steps_taken,
                });
            }
            Err(e) => return Err(e),
        };
        state = next;
        steps_taken += 1;

        if let Some(reason) = observe_and_check(ctx, &mut state, control, diag, observers)? {
            return Ok(RunResult {
                outcome: RunOutcome::Halted {
                    reason,
                    t_star: state.t,
                },
                final_state: state,
                steps_taken,
            });
        }
    }
}

fn record_is_finite(record: &DiagnosticsRecord) -> bool {
    [
        record.t,
        record.e,
        record.h,
        record.hprime,
        record.hdoubleprime,
        record.concavity_residual,
        record.sup_grad,
        record.l2_w,
        record.sobolev_w,
        record.sobolev_v,
        record.skipped_mode_energy_fraction,
    ]
    .iter()
    .all(|v| v.is_finite())
}

/// Compute the diagnostics record, hand it to the observers and apply the
/// halt rules. Non-finite state or diagnostics classify as `NonFinite` and
/// are never emitted, so recorded series stay finite.
fn observe_and_check(
    ctx: &OperatorContext,
    state: &mut SimState,
    control: &StepControl,
    diag: &DiagnosticsSettings,
    observers: &mut [&mut dyn Observer],
) -> Result<Option<HaltReason>> {
    if !state.is_finite() {
        return Ok(Some(HaltReason::NonFinite));
    }
    let record = compute_record(ctx, state, diag)?;
    if !record_is_finite(&record) {
        return Ok(Some(HaltReason::NonFinite));
    }
    let t = state.t;
    for obs in observers.iter_mut() {
        obs.on_record(&*state, &record)
            .map_err(|e| Error::Observer {
                t,
                reason: e.to_string(),
            })?;
    }
    if record.sup_grad > control.sup_gradient_bound {
        return Ok(Some(HaltReason::SupGradientExceeded {
            value: record.sup_grad,
        }));
    }
    let magnitude = state.w.sup_norm().max(state.v.sup_norm());
    if magnitude > control.field_magnitude_bound {
        return Ok(Some(HaltReason::FieldMagnitudeExceeded {
            value: magnitude,
        }));
    }
    Ok(None)
}
