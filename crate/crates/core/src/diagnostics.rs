//! Scalar functionals recorded along a run: the conserved energy `E(t)`,
//! the concavity functional `H(t) = ||R w||^2 + b (t + t0)^2` with its
//! derivatives, Sobolev norms, and the blow-up time bound.
//!
//! `H''` needs the pairing `<R w_tt, R w> = <R^2 w_tt, w>`, which is
//! evaluated through the bare stress divergence so no unbounded multiplier
//! is ever applied; agreement of that route with the spectral inner
//! products is itself cross-checked by the recorded-series consistency
//! tests.

use crate::error::{Error, Result};
use crate::grid::SpectralField;
use crate::integrator::SimState;
use crate::operator::{OperatorContext, SkipStats};

/// Parameters of the concavity functional. `b` and `t0` are constants of
/// the argument, fixed from the initial data.
#[derive(Clone, Copy, Debug)]
pub struct LevineConfig {
    pub nu: f64,
    pub b: f64,
    pub t0: f64,
}

impl LevineConfig {
    /// Automatic choice for negative initial energy: `b = -2 E(0)` and
    /// `t0 = max(1, (1 + |<R phi, R psi>|) / b)`, which makes
    /// `H'(0) = 2 <R phi, R psi> + 2 b t0 >= 2`.
    pub fn auto(nu: f64, e0: f64, r_phi_psi_inner: f64) -> Result<Self> {
        if !(nu > 0.0 && nu.is_finite()) {
            return Err(Error::invalid_argument("nu must be positive"));
        }
        if !(e0 < 0.0) {
            return Err(Error::invalid_argument(
                "automatic concavity setup requires E(0) < 0",
            ));
        }
        let b = -2.0 * e0;
        let t0 = 1.0f64.max((1.0 + r_phi_psi_inner.abs()) / b);
        Self::explicit(nu, b, t0, Some(e0), r_phi_psi_inner)
    }

    /// Explicit parameters. When `E(0) < 0` the admissible choice requires
    /// `b <= -2 E(0)`; `t0` is raised (doubling) until `H'(0) > 0`.
    pub fn explicit(
        nu: f64,
        b: f64,
        t0: f64,
        e0: Option<f64>,
        r_phi_psi_inner: f64,
    ) -> Result<Self> {
        if !(nu > 0.0 && nu.is_finite()) {
            return Err(Error::invalid_argument("nu must be positive"));
        }
        if !(b > 0.0 && b.is_finite()) {
            return Err(Error::invalid_argument("b must be positive"));
        }
        if !(t0 > 0.0 && t0.is_finite()) {
            return Err(Error::invalid_argument("t0 must be positive"));
        }
        if let Some(e0) = e0 {
            if e0 < 0.0 && b > -2.0 * e0 * (1.0 + 1e-12) {
                return Err(Error::invalid_argument(format!(
                    "b = {b} violates the admissible bound b <= -2 E(0) = {}",
                    -2.0 * e0
                )));
            }
        }
        let mut t0 = t0;
        let mut guard = 0;
        while 2.0 * (r_phi_psi_inner + b * t0) <= 0.0 {
            t0 *= 2.0;
            guard += 1;
            if guard > 2048 {
                return Err(Error::invalid_argument(
                    "could not raise t0 to make H'(0) positive",
                ));
            }
        }
        Ok(LevineConfig { nu, b, t0 })
    }
}

/// Values of the concavity functional at one instant.
#[derive(Clone, Copy, Debug)]
pub struct LevineValues {
    pub h: f64,
    pub hprime: f64,
    pub hdoubleprime: f64,
    /// `H'' H - (1 + nu) (H')^2`
    pub concavity_residual: f64,
}

/// Per-step scalar diagnostics, also the CSV row layout.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub e: f64,
    pub h: f64,
    pub hprime: f64,
    pub hdoubleprime: f64,
    pub concavity_residual: f64,
    pub sup_grad: f64,
    pub l2_w: f64,
    pub sobolev_w: f64,
    pub sobolev_v: f64,
    pub skipped_mode_energy_fraction: f64,
}

/// What the run loop computes each step.
#[derive(Clone, Debug)]
pub struct DiagnosticsSettings {
    pub levine: Option<LevineConfig>,
    pub sobolev_s: f64,
}

impl Default for DiagnosticsSettings {
    fn default() -> Self {
        DiagnosticsSettings {
            levine: None,
            sobolev_s: 1.0,
        }
    }
}

/// Conserved energy `E = 1/2 ||R w_t||^2 + integral of the energy density`.
pub fn energy(ctx: &OperatorContext, state: &mut SimState) -> Result<(f64, SkipStats)> {
    let (rv2, stats) = ctx.r_norm_sq(&mut state.v)?;
    let potential = potential_integral(ctx, state)?;
    Ok((0.5 * rv2 + potential, stats))
}

fn potential_integral(ctx: &OperatorContext, state: &mut SimState) -> Result<f64> {
    let (mut wx, mut wy) = ctx.gradient(&mut state.w)?;
    let cell = ctx.grid().cell_area();
    let gx = wx.real().clone();
    let gy = wy.real();
    let mut total = 0.0;
    for (p, q) in gx.iter().zip(gy.iter()) {
        total += ctx.energy().potential_at(*p, *q);
    }
    Ok(total * cell)
}

/// `H`, `H'`, `H''` and the concavity residual at the current state.
pub fn levine_h(
    ctx: &OperatorContext,
    state: &mut SimState,
    cfg: &LevineConfig,
) -> Result<(LevineValues, SkipStats)> {
    let (rw2, s1) = ctx.r_norm_sq(&mut state.w)?;
    let (rv2, s2) = ctx.r_norm_sq(&mut state.v)?;
    let (rvw, s3) = ctx.r_inner(&mut state.v, &mut state.w)?;
    // <R^2 w_tt, w> via the bare divergence of the stress
    let mut div = ctx.local_divergence(&mut state.w)?;
    let pairing = SpectralField::l2_inner(&mut div, &mut state.w);
    let shifted = state.t + cfg.t0;
    let h = rw2 + cfg.b * shifted * shifted;
    let hprime = 2.0 * rvw + 2.0 * cfg.b * shifted;
    let hdoubleprime = 2.0 * rv2 + 2.0 * pairing + 2.0 * cfg.b;
    let concavity_residual = hdoubleprime * h - (1.0 + cfg.nu) * hprime * hprime;
    let stats = s1.merge_max(s2).merge_max(s3);
    Ok((
        LevineValues {
            h,
            hprime,
            hdoubleprime,
            concavity_residual,
        },
        stats,
    ))
}

/// Upper bound `t1 = H(0) / (nu H'(0))` on the blow-up time.
pub fn levine_bound(nu: f64, h0: f64, hprime0: f64) -> Result<f64> {
    if !(nu > 0.0 && h0 > 0.0 && hprime0 > 0.0) {
        return Err(Error::invalid_argument(
            "levine_bound requires nu, H(0) and H'(0) positive",
        ));
    }
    Ok(h0 / (nu * hprime0))
}

/// `max |E(t) - E(0)| / max(1, |E(0)|)` over a record series.
pub fn energy_drift(records: &[DiagnosticsRecord]) -> Result<f64> {
    if records.len() < 2 {
        return Err(Error::invalid_argument(
            "energy drift needs at least two records",
        ));
    }
    let e0 = records[0].e;
    let denom = 1.0f64.max(e0.abs());
    Ok(records.iter().fold(0.0f64, |m, r| m.max((r.e - e0).abs())) / denom)
}

/// Full record for the current state.
pub fn compute_record(
    ctx: &OperatorContext,
    state: &mut SimState,
    settings: &DiagnosticsSettings,
) -> Result<DiagnosticsRecord> {
    let (e, e_stats) = energy(ctx, state)?;
    let (levine, l_stats) = match &settings.levine {
        Some(cfg) => {
            let (values, stats) = levine_h(ctx, state, cfg)?;
            (values, stats)
        }
        None => (
            LevineValues {
                h: 0.0,
                hprime: 0.0,
                hdoubleprime: 0.0,
                concavity_residual: 0.0,
            },
            SkipStats::default(),
        ),
    };
    let sup_grad = state.w.sup_norm_gradient();
    let l2_w = state.w.l2_norm();
    let sobolev_w = state.w.sobolev_norm(settings.sobolev_s);
    let sobolev_v = state.v.sobolev_norm(settings.sobolev_s);
    Ok(DiagnosticsRecord {
        t: state.t,
        e,
        h: levine.h,
        hprime: levine.hprime,
        hdoubleprime: levine.hdoubleprime,
        concavity_residual: levine.concavity_residual,
        sup_grad,
        l2_w,
        sobolev_w,
        sobolev_v,
        skipped_mode_energy_fraction: e_stats.merge_max(l_stats).energy_fraction,
    })
}

pub const CSV_HEADER: &str =
    "t,E,H,Hprime,Hdoubleprime,concavity_residual,sup_grad,l2_w,sobolev_w,sobolev_v,skipped_mode_energy_fraction";

/// One CSV row with 17 significant digits per column.
pub fn csv_row(r: &DiagnosticsRecord) -> String {
    format!(
        "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
        r.t,
        r.e,
        r.h,
        r.hprime,
        r.hdoubleprime,
        r.concavity_residual,
        r.sup_grad,
        r.l2_w,
        r.sobolev_w,
        r.sobolev_v,
        r.skipped_mode_energy_fraction
    )
}

/// Max error of centered finite differences of `value` against `deriv`
/// over the interior of a record series; tolerant of a non-uniform tail.
pub fn centered_difference_error(
    records: &[DiagnosticsRecord],
    value: impl Fn(&DiagnosticsRecord) -> f64,
    deriv: impl Fn(&DiagnosticsRecord) -> f64,
) -> Result<f64> {
    if records.len() < 3 {
        return Err(Error::invalid_argument(
            "centered differences need at least three records",
        ));
    }
    let mut worst = 0.0f64;
    for k in 1..records.len() - 1 {
        let (a, b, c) = (&records[k - 1], &records[k], &records[k + 1]);
        let h1 = b.t - a.t;
        let h2 = c.t - b.t;
        if h1 <= 0.0 || h2 <= 0.0 {
            return Err(Error::invalid_argument("record times must increase"));
        }
        // three-point first-derivative formula on a possibly non-uniform grid
        let fd = (value(c) * h1 * h1 - value(a) * h2 * h2 + value(b) * (h2 * h2 - h1 * h1))
            / (h1 * h2 * (h1 + h2));
        worst = worst.max((fd - deriv(b)).abs());
    }
    Ok(worst)
}
