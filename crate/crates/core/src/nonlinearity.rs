//! Strain-energy densities and the induced stresses.
//!
//! Isotropic materials use `F(u)` with `u = |grad w|^2`; anisotropic ones
//! use `Ft(p, q)` of the gradient components directly. Both carry their
//! derivatives and are checked for consistency at construction. The module
//! also hosts the sampled checkers for the global-existence condition
//! `F(u) >= -k u` and the blow-up condition `u F'(u) <= (1 + 2 nu) F(u)`.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::SpectralField;

type Fn1 = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
type Fn2 = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;
type Grad2 = Arc<dyn Fn(f64, f64) -> (f64, f64) + Send + Sync>;

/// Named family metadata, for manifests and sweep summaries.
#[derive(Clone, Debug, PartialEq)]
pub enum EnergyFamily {
    /// `F(u) = a u^q`
    PowerLaw {
        a: f64,
        q: f64,
    },
    /// `F(u) = u/2 + a u^q`, the linear wave part plus a perturbation
    LinearPlusPower {
        a: f64,
        q: f64,
    },
    /// `F(u) = u/2`
    Linear,
    /// `F = 0` (free drift)
    Zero,
    Custom {
        name: String,
    },
}

impl EnergyFamily {
    pub fn describe(&self) -> String {
        match self {
            EnergyFamily::PowerLaw { a, q } => format!("powerlaw(a={a}, q={q})"),
            EnergyFamily::LinearPlusPower { a, q } => format!("linear_plus(a={a}, q={q})"),
            EnergyFamily::Linear => "linear".into(),
            EnergyFamily::Zero => "zero".into(),
            EnergyFamily::Custom { name } => format!("custom({name})"),
        }
    }
}

/// Isotropic strain-energy density `F(u)`, `u >= 0`, with `F(0) = 0`.
#[derive(Clone)]
pub struct IsotropicEnergy {
    family: EnergyFamily,
    f: Fn1,
    fprime: Fn1,
}

impl std::fmt::Debug for IsotropicEnergy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "IsotropicEnergy({})", self.family.describe())
    }
}

impl IsotropicEnergy {
    /// `F(u) = a u^q` with exact symbolic derivative.
    pub fn power_law(a: f64, q: f64) -> Result<Self> {
        if !(a.is_finite() && q.is_finite() && q > 0.0) {
            return Err(Error::InvalidEnergy(format!(
                "power law needs finite a and q > 0, got a = {a}, q = {q}"
            )));
        }
        Ok(IsotropicEnergy {
            family: EnergyFamily::PowerLaw { a, q },
            f: Arc::new(move |u: f64| a * u.powf(q)),
            fprime: Arc::new(move |u: f64| a * q * u.powf(q - 1.0)),
        })
    }

    /// `F(u) = u/2`: the linear wave equation.
    pub fn linear() -> Self {
        IsotropicEnergy {
            family: EnergyFamily::Linear,
            f: Arc::new(|u| 0.5 * u),
            fprime: Arc::new(|_| 0.5),
        }
    }

    /// `F(u) = u/2 + a u^q`.
    pub fn linear_plus_power(a: f64, q: f64) -> Result<Self> {
        if !(a.is_finite() && q.is_finite() && q > 0.0) {
            return Err(Error::InvalidEnergy(format!(
                "linear_plus needs finite a and q > 0, got a = {a}, q = {q}"
            )));
        }
        Ok(IsotropicEnergy {
            family: EnergyFamily::LinearPlusPower { a, q },
            f: Arc::new(move |u: f64| 0.5 * u + a * u.powf(q)),
            fprime: Arc::new(move |u: f64| 0.5 + a * q * u.powf(q - 1.0)),
        })
    }

    /// `F = 0`; gives free drift `w = phi + t psi`.
    pub fn zero() -> Self {
        IsotropicEnergy {
            family: EnergyFamily::Zero,
            f: Arc::new(|_| 0.0),
            fprime: Arc::new(|_| 0.0),
        }
    }

    /// Arbitrary `F` with its derivative; both `F(0) = 0` and derivative
    /// consistency are verified at construction.
    pub fn custom(
        name: impl Into<String>,
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
        fprime: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        let energy = IsotropicEnergy {
            family: EnergyFamily::Custom { name: name.into() },
            f: Arc::new(f),
            fprime: Arc::new(fprime),
        };
        energy.check_consistency(10.0)?;
        Ok(energy)
    }

    pub fn family(&self) -> &EnergyFamily {
        &self.family
    }

    pub fn f(&self, u: f64) -> f64 {
        (self.f)(u)
    }

    pub fn fprime(&self, u: f64) -> f64 {
        (self.fprime)(u)
    }

    /// `F(0) = 0` plus centered-difference agreement of the stored
    /// derivative on log-spaced samples of `(0, u_max]`.
    pub fn check_consistency(&self, u_max: f64) -> Result<()> {
        let f0 = self.f(0.0);
        if !(f0.abs() <= 1e-12) {
            return Err(Error::InvalidEnergy(format!("F(0) = {f0}, expected 0")));
        }
        for u in log_samples(u_max, 64) {
            let h = 1e-5 * u;
            let fd = (self.f(u + h) - self.f(u - h)) / (2.0 * h);
            let exact = self.fprime(u);
            if !fd.is_finite() || !exact.is_finite() {
                continue; // singular endpoints are checked by the samplers
            }
            let scale = exact.abs().max(1.0);
            if (fd - exact).abs() > 1e-6 * scale {
                return Err(Error::InvalidEnergy(format!(
                    "derivative mismatch at u = {u}: finite difference {fd} vs stored {exact}"
                )));
            }
        }
        Ok(())
    }
}

/// Anisotropic strain-energy density `Ft(p, q)` with `Ft(0, 0) = 0`.
#[derive(Clone)]
pub struct AnisotropicEnergy {
    name: String,
    f: Fn2,
    grad: Grad2,
    /// Set when this wraps an isotropic family; kept for manifests.
    base: Option<EnergyFamily>,
}

impl std::fmt::Debug for AnisotropicEnergy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "AnisotropicEnergy({})", self.name)
    }
}

impl AnisotropicEnergy {
    /// `Ft(p, q) = F(p^2 + q^2)`: the isotropic reduction. Gradient
    /// components are evaluated with the same floating-point operations as
    /// the isotropic stress path, so the two pipelines agree bitwise.
    pub fn from_isotropic(iso: &IsotropicEnergy) -> Self {
        let f = iso.f.clone();
        let fp = iso.fprime.clone();
        AnisotropicEnergy {
            name: format!("isotropic({})", iso.family.describe()),
            f: Arc::new(move |p, q| f(p * p + q * q)),
            grad: Arc::new(move |p, q| {
                if p == 0.0 && q == 0.0 {
                    return (0.0, 0.0);
                }
                let fpv = fp(p * p + q * q);
                (2.0 * p * fpv, 2.0 * q * fpv)
            }),
            base: Some(iso.family.clone()),
        }
    }

    pub fn custom(
        name: impl Into<String>,
        f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        grad: impl Fn(f64, f64) -> (f64, f64) + Send + Sync + 'static,
    ) -> Result<Self> {
        let energy = AnisotropicEnergy {
            name: name.into(),
            f: Arc::new(f),
            grad: Arc::new(grad),
            base: None,
        };
        energy.check_consistency(3.0)?;
        Ok(energy)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn base_family(&self) -> Option<&EnergyFamily> {
        self.base.as_ref()
    }

    pub fn f(&self, p: f64, q: f64) -> f64 {
        (self.f)(p, q)
    }

    pub fn grad(&self, p: f64, q: f64) -> (f64, f64) {
        (self.grad)(p, q)
    }

    pub fn check_consistency(&self, radius: f64) -> Result<()> {
        let f00 = self.f(0.0, 0.0);
        if !(f00.abs() <= 1e-12) {
            return Err(Error::InvalidEnergy(format!("Ft(0,0) = {f00}, expected 0")));
        }
        for (p, q) in disk_samples(radius, 64) {
            let h = 1e-5 * (p * p + q * q).sqrt().max(1e-3);
            let fd_p = (self.f(p + h, q) - self.f(p - h, q)) / (2.0 * h);
            let fd_q = (self.f(p, q + h) - self.f(p, q - h)) / (2.0 * h);
            let (gp, gq) = self.grad(p, q);
            if ![fd_p, fd_q, gp, gq].iter().all(|v| v.is_finite()) {
                continue;
            }
            let scale = gp.abs().max(gq.abs()).max(1.0);
            if (fd_p - gp).abs() > 1e-6 * scale || (fd_q - gq).abs() > 1e-6 * scale {
                return Err(Error::InvalidEnergy(format!(
                    "gradient mismatch at ({p}, {q}): fd ({fd_p}, {fd_q}) vs stored ({gp}, {gq})"
                )));
            }
        }
        Ok(())
    }
}

/// Either flavour of energy, as carried by the operator context.
#[derive(Clone, Debug)]
pub enum EnergyModel {
    Isotropic(IsotropicEnergy),
    Anisotropic(AnisotropicEnergy),
}

impl EnergyModel {
    /// Stress components at one grid point; `None` when the derivative
    /// evaluates non-finite (reported by the caller with the location).
    ///
    /// At `grad w = 0` exactly the stress is taken as 0, the limit value for
    /// every family whose stress extends continuously.
    pub fn stress_at(&self, p: f64, q: f64) -> (f64, f64) {
        match self {
            EnergyModel::Isotropic(iso) => {
                if p == 0.0 && q == 0.0 {
                    return (0.0, 0.0);
                }
                let fpv = iso.fprime(p * p + q * q);
                (2.0 * p * fpv, 2.0 * q * fpv)
            }
            EnergyModel::Anisotropic(aniso) => {
                if p == 0.0 && q == 0.0 {
                    return (0.0, 0.0);
                }
                aniso.grad(p, q)
            }
        }
    }

    /// Energy density: `F(|grad w|^2)` or `Ft(grad w)`.
    pub fn potential_at(&self, p: f64, q: f64) -> f64 {
        match self {
            EnergyModel::Isotropic(iso) => iso.f(p * p + q * q),
            EnergyModel::Anisotropic(aniso) => aniso.f(p, q),
        }
    }

    /// Integrand of the concavity pairing: `2 u F'(u)` resp.
    /// `grad w . grad Ft(grad w)`; used only as a cross-check against the
    /// divergence route.
    pub fn pairing_density_at(&self, p: f64, q: f64) -> f64 {
        match self {
            EnergyModel::Isotropic(iso) => {
                let u = p * p + q * q;
                if u == 0.0 {
                    return 0.0;
                }
                2.0 * u * iso.fprime(u)
            }
            EnergyModel::Anisotropic(aniso) => {
                if p == 0.0 && q == 0.0 {
                    return 0.0;
                }
                let (gp, gq) = aniso.grad(p, q);
                p * gp + q * gq
            }
        }
    }

    pub fn describe(&self) -> String {
        match self {
            EnergyModel::Isotropic(iso) => iso.family.describe(),
            EnergyModel::Anisotropic(aniso) => aniso.name.clone(),
        }
    }
}

/// Pointwise stress fields `(dF/dw_x, dF/dw_y)` for an isotropic energy,
/// optionally dealiased.
pub fn stress_isotropic(
    energy: &IsotropicEnergy,
    wx: &mut SpectralField,
    wy: &mut SpectralField,
    dealias: bool,
) -> Result<(SpectralField, SpectralField)> {
    stress_with_model(&EnergyModel::Isotropic(energy.clone()), wx, wy, dealias)
}

/// Pointwise stress fields for an anisotropic energy.
pub fn stress_anisotropic(
    energy: &AnisotropicEnergy,
    wx: &mut SpectralField,
    wy: &mut SpectralField,
    dealias: bool,
) -> Result<(SpectralField, SpectralField)> {
    stress_with_model(&EnergyModel::Anisotropic(energy.clone()), wx, wy, dealias)
}

pub fn stress_with_model(
    energy: &EnergyModel,
    wx: &mut SpectralField,
    wy: &mut SpectralField,
    dealias: bool,
) -> Result<(SpectralField, SpectralField)> {
    if wx.grid() != wy.grid() {
        return Err(Error::invalid_argument(
            "stress requires gradient components on one grid",
        ));
    }
    let grid = wx.grid().clone();
    let gx = wx.real().clone();
    let gy = wy.real();
    let mut sx = ndarray::Array2::zeros((grid.nx(), grid.ny()));
    let mut sy = ndarray::Array2::zeros((grid.nx(), grid.ny()));
    for ((i, j), p) in gx.indexed_iter() {
        let q = gy[[i, j]];
        let (a, b) = energy.stress_at(*p, q);
        if !a.is_finite() || !b.is_finite() {
            return Err(Error::NonFinite {
                what: format!("stress of {}", energy.describe()),
                location: Some((i, j)),
            });
        }
        sx[[i, j]] = a;
        sy[[i, j]] = b;
    }
    let mut fx = SpectralField::from_real(&grid, sx)?;
    let mut fy = SpectralField::from_real(&grid, sy)?;
    if dealias {
        fx = fx.dealias();
        fy = fy.dealias();
    }
    Ok((fx, fy))
}

/// Verdict of sampling a universally quantified condition on a finite range.
#[derive(Clone, Debug, serde::Serialize)]
pub struct ConditionReport {
    pub condition: String,
    pub parameter: f64,
    pub pass: bool,
    /// The extremal margin: minimum of `F + k u` for the global condition,
    /// maximum of `u F' - (1+2 nu) F` for the blow-up condition.
    pub worst_margin: f64,
    pub worst_at: f64,
    pub tolerance: f64,
    pub sample_min: f64,
    pub sample_max: f64,
    pub n_samples: usize,
}

const SAMPLE_DECADES: f64 = 8.0;

fn log_samples(u_max: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| {
            let frac = i as f64 / (n - 1) as f64;
            u_max * 10f64.powf(-SAMPLE_DECADES * (1.0 - frac))
        })
        .collect()
}

/// Deterministic golden-angle spiral: equidistributed angles, log-spaced
/// radii.
fn disk_samples(radius: f64, n: usize) -> Vec<(f64, f64)> {
    const GOLDEN_ANGLE: f64 = 2.399_963_229_728_653;
    (0..n)
        .map(|i| {
            let frac = i as f64 / (n - 1) as f64;
            let r = radius * 10f64.powf(-SAMPLE_DECADES * (1.0 - frac));
            let theta = i as f64 * GOLDEN_ANGLE;
            (r * theta.cos(), r * theta.sin())
        })
        .collect()
}

/// Sampled check of `F(u) >= -k u` on a log-uniform grid over `(0, u_max]`.
pub fn check_global_condition(
    energy: &IsotropicEnergy,
    k: f64,
    u_max: f64,
    n_samples: usize,
) -> Result<ConditionReport> {
    if !(k > 0.0 && k.is_finite()) {
        return Err(Error::invalid_argument("k must be positive"));
    }
    if !(u_max > 0.0 && u_max.is_finite()) {
        return Err(Error::invalid_argument("u_max must be positive"));
    }
    if n_samples < 100 {
        return Err(Error::invalid_argument("n_samples must be at least 100"));
    }
    let samples = log_samples(u_max, n_samples);
    let mut worst = f64::INFINITY;
    let mut worst_at = 0.0;
    let mut scale = 1.0f64;
    for u in &samples {
        let margin = energy.f(*u) + k * u;
        scale = scale.max(energy.f(*u).abs());
        if margin < worst {
            worst = margin;
            worst_at = *u;
        }
    }
    let tolerance = 1e-12 * scale;
    Ok(ConditionReport {
        condition: "global_existence: F(u) >= -k u".into(),
        parameter: k,
        pass: worst >= -tolerance,
        worst_margin: worst,
        worst_at,
        tolerance,
        sample_min: samples[0],
        sample_max: u_max,
        n_samples,
    })
}

/// Sampled check of `u F'(u) <= (1 + 2 nu) F(u)` on `(0, u_max]`.
pub fn check_blowup_condition(
    energy: &IsotropicEnergy,
    nu: f64,
    u_max: f64,
    n_samples: usize,
) -> Result<ConditionReport> {
    if !(nu > 0.0 && nu.is_finite()) {
        return Err(Error::invalid_argument("nu must be positive"));
    }
    if !(u_max > 0.0 && u_max.is_finite()) {
        return Err(Error::invalid_argument("u_max must be positive"));
    }
    if n_samples < 100 {
        return Err(Error::invalid_argument("n_samples must be at least 100"));
    }
    let samples = log_samples(u_max, n_samples);
    let mut worst = f64::NEG_INFINITY;
    let mut worst_at = 0.0;
    let mut scale = 1.0f64;
    for u in &samples {
        let lhs = u * energy.fprime(*u);
        let rhs = (1.0 + 2.0 * nu) * energy.f(*u);
        scale = scale.max(lhs.abs()).max(rhs.abs());
        let margin = lhs - rhs;
        if margin > worst {
            worst = margin;
            worst_at = *u;
        }
    }
    let tolerance = 1e-12 * scale;
    Ok(ConditionReport {
        condition: "blow_up: u F'(u) <= (1 + 2 nu) F(u)".into(),
        parameter: nu,
        pass: worst <= tolerance,
        worst_margin: worst,
        worst_at,
        tolerance,
        sample_min: samples[0],
        sample_max: u_max,
        n_samples,
    })
}

/// Which anisotropic condition to sample.
#[derive(Clone, Copy, Debug)]
pub enum AnisotropicCondition {
    /// `Ft(U) >= -k |U|^2`
    Global { k: f64 },
    /// `U . grad Ft(U) <= 2 (1 + 2 nu) Ft(U)`
    BlowUp { nu: f64 },
}

/// Sampled check of the anisotropic conditions over a disk.
pub fn check_conditions_anisotropic(
    energy: &AnisotropicEnergy,
    condition: AnisotropicCondition,
    radius: f64,
    n_samples: usize,
) -> Result<ConditionReport> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::invalid_argument("radius must be positive"));
    }
    if n_samples < 100 {
        return Err(Error::invalid_argument("n_samples must be at least 100"));
    }
    let samples = disk_samples(radius, n_samples);
    let mut scale = 1.0f64;
    match condition {
        AnisotropicCondition::Global { k } => {
            if !(k > 0.0 && k.is_finite()) {
                return Err(Error::invalid_argument("k must be positive"));
            }
            let mut worst = f64::INFINITY;
            let mut worst_at = 0.0;
            for (p, q) in &samples {
                let u2 = p * p + q * q;
                let value = energy.f(*p, *q);
                scale = scale.max(value.abs());
                let margin = value + k * u2;
                if margin < worst {
                    worst = margin;
                    worst_at = u2.sqrt();
                }
            }
            let tolerance = 1e-12 * scale;
            Ok(ConditionReport {
                condition: "global_existence: Ft(U) >= -k |U|^2".into(),
                parameter: k,
                pass: worst >= -tolerance,
                worst_margin: worst,
                worst_at,
                tolerance,
                sample_min: samples[0].0.hypot(samples[0].1),
                sample_max: radius,
                n_samples,
            })
        }
        AnisotropicCondition::BlowUp { nu } => {
            if !(nu > 0.0 && nu.is_finite()) {
                return Err(Error::invalid_argument("nu must be positive"));
            }
            let mut worst = f64::NEG_INFINITY;
            let mut worst_at = 0.0;
            for (p, q) in &samples {
                let (gp, gq) = energy.grad(*p, *q);
                let lhs = p * gp + q * gq;
                let rhs = 2.0 * (1.0 + 2.0 * nu) * energy.f(*p, *q);
                scale = scale.max(lhs.abs()).max(rhs.abs());
                let margin = lhs - rhs;
                if margin > worst {
                    worst = margin;
                    worst_at = (p * p + q * q).sqrt();
                }
            }
            let tolerance = 1e-12 * scale;
            Ok(ConditionReport {
                condition: "blow_up: U . grad Ft(U) <= 2 (1 + 2 nu) Ft(U)".into(),
                parameter: nu,
                pass: worst <= tolerance,
                worst_margin: worst,
                worst_at,
                tolerance,
                sample_min: samples[0].0.hypot(samples[0].1),
                sample_max: radius,
                n_samples,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid2D;

    #[test]
    fn families_enforce_f_of_zero() {
        for e in [
            IsotropicEnergy::power_law(2.0, 1.5).unwrap(),
            IsotropicEnergy::linear(),
            IsotropicEnergy::linear_plus_power(-1.0, 2.0).unwrap(),
            IsotropicEnergy::zero(),
        ] {
            assert_eq!(e.f(0.0), 0.0);
            e.check_consistency(10.0).unwrap();
        }
        assert!(IsotropicEnergy::custom("bad", |u| u + 1.0, |_| 1.0).is_err());
        assert!(IsotropicEnergy::custom("wrong-deriv", |u| u * u, |_| 1.0).is_err());
        assert!(IsotropicEnergy::custom("ok", |u| u * u, |u| 2.0 * u).is_ok());
    }

    #[test]
    fn anisotropic_consistency_checks() {
        assert!(AnisotropicEnergy::custom("bad0", |p, q| p + q + 1.0, |_, _| (1.0, 1.0)).is_err());
        assert!(
            AnisotropicEnergy::custom("p2q", |p, q| p * p * q, |p, q| (2.0 * p * q, p * p)).is_ok()
        );
    }

    #[test]
    fn half_u_energy_gives_identity_stress() {
        let grid = Grid2D::new(8, 8, 2.0, 2.0).unwrap();
        let e = IsotropicEnergy::linear();
        let mut wx = SpectralField::from_fn(&grid, |x, y| x + 2.0 * y);
        let mut wy = SpectralField::from_fn(&grid, |x, y| x * y);
        let wx_vals = wx.real().clone();
        let wy_vals = wy.real().clone();
        let (mut sx, mut sy) = stress_isotropic(&e, &mut wx, &mut wy, false).unwrap();
        for ((i, j), v) in sx.real().indexed_iter() {
            assert!((v - wx_vals[[i, j]]).abs() <= 1e-14);
        }
        for ((i, j), v) in sy.real().indexed_iter() {
            assert!((v - wy_vals[[i, j]]).abs() <= 1e-14);
        }
    }

    #[test]
    fn zero_gradient_gives_zero_stress() {
        let grid = Grid2D::new(8, 8, 2.0, 2.0).unwrap();
        // q = 0.5 has a singular F' at 0; the limit convention applies
        let e = IsotropicEnergy::power_law(-1.0, 0.5).unwrap();
        let mut wx = SpectralField::zeros(&grid);
        let mut wy = SpectralField::zeros(&grid);
        let (mut sx, mut sy) = stress_isotropic(&e, &mut wx, &mut wy, false).unwrap();
        assert_eq!(sx.sup_norm(), 0.0);
        assert_eq!(sy.sup_norm(), 0.0);
    }

    #[test]
    fn quadratic_energy_stress_hand_value() {
        // F(u) = u^2 at (wx, wy) = (1, 2): u = 5, F' = 2u = 10,
        // stress = (2*1*10, 2*2*10) = (20, 40)
        let grid = Grid2D::new(8, 8, 2.0, 2.0).unwrap();
        let e = IsotropicEnergy::power_law(1.0, 2.0).unwrap();
        let mut wx = SpectralField::from_fn(&grid, |_, _| 1.0);
        let mut wy = SpectralField::from_fn(&grid, |_, _| 2.0);
        let (mut sx, mut sy) = stress_isotropic(&e, &mut wx, &mut wy, false).unwrap();
        assert!((sx.real()[[3, 4]] - 20.0).abs() <= 1e-12);
        assert!((sy.real()[[3, 4]] - 40.0).abs() <= 1e-12);
    }

    #[test]
    fn anisotropic_hand_gradient() {
        // Ft(p, q) = p^2 q at (1, 2): grad = (2pq, p^2) = (4, 1)
        let e = AnisotropicEnergy::custom("p2q", |p, q| p * p * q, |p, q| (2.0 * p * q, p * p))
            .unwrap();
        let grid = Grid2D::new(8, 8, 2.0, 2.0).unwrap();
        let mut wx = SpectralField::from_fn(&grid, |_, _| 1.0);
        let mut wy = SpectralField::from_fn(&grid, |_, _| 2.0);
        let (mut sx, mut sy) = stress_anisotropic(&e, &mut wx, &mut wy, false).unwrap();
        assert!((sx.real()[[0, 0]] - 4.0).abs() <= 1e-14);
        assert!((sy.real()[[0, 0]] - 1.0).abs() <= 1e-14);
    }

    #[test]
    fn anisotropic_reduction_matches_isotropic_stress_bitwise() {
        let iso = IsotropicEnergy::linear_plus_power(-0.5, 2.0).unwrap();
        let aniso = AnisotropicEnergy::from_isotropic(&iso);
        let grid = Grid2D::new(16, 16, 3.0, 3.0).unwrap();
        let mut wx = SpectralField::from_fn(&grid, |x, y| (x * 1.3).sin() + y * 0.1);
        let mut wy = SpectralField::from_fn(&grid, |x, y| (y * 0.9).cos() * x * 0.2);
        let mut wx2 = wx.clone();
        let mut wy2 = wy.clone();
        let (mut ix, mut iy) = stress_isotropic(&iso, &mut wx, &mut wy, true).unwrap();
        let (mut ax, mut ay) = stress_anisotropic(&aniso, &mut wx2, &mut wy2, true).unwrap();
        assert_eq!(ix.real(), ax.real());
        assert_eq!(iy.real(), ay.real());
    }

    #[test]
    fn nonfinite_stress_reports_location() {
        let grid = Grid2D::new(8, 8, 2.0, 2.0).unwrap();
        // a derivative that blows up away from zero; built directly since
        // the public constructors reject it
        let iso = IsotropicEnergy {
            family: EnergyFamily::Custom { name: "inf".into() },
            f: Arc::new(|_| 0.0),
            fprime: Arc::new(|_| f64::INFINITY),
        };
        let mut wx = SpectralField::from_fn(&grid, |_, _| 1.0);
        let mut wy = SpectralField::zeros(&grid);
        match stress_isotropic(&iso, &mut wx, &mut wy, false) {
            Err(Error::NonFinite { location, .. }) => assert_eq!(location, Some((0, 0))),
            other => panic!("expected NonFinite, got {other:?}"),
        }
    }

    #[test]
    fn global_condition_truth_table_for_power_laws() {
        // hand-derived verdicts for F = a u^q sampled on (0, 10]
        let u_max = 10.0;
        let n = 200;
        for q in [0.5, 1.0, 2.0, 3.0] {
            let pos = IsotropicEnergy::power_law(1.0, q).unwrap();
            for k in [0.5, 1.0, 2.0] {
                assert!(check_global_condition(&pos, k, u_max, n).unwrap().pass);
            }
            let neg = IsotropicEnergy::power_law(-1.0, q).unwrap();
            for k in [0.5, 1.0, 2.0] {
                let pass = check_global_condition(&neg, k, u_max, n).unwrap().pass;
                // hand table: q < 1 fails near 0; q = 1 needs k >= |a|;
                // q > 1 fails at large u
                let expected = if q == 1.0 { k >= 1.0 } else { false };
                assert_eq!(pass, expected, "q = {q}, k = {k}");
            }
        }
    }

    #[test]
    fn global_condition_spec_cases() {
        // F(u) = -u^2 with u_max = 10 k: sampled minimum is negative
        let e = IsotropicEnergy::power_law(-1.0, 2.0).unwrap();
        let r = check_global_condition(&e, 1.0, 10.0, 200).unwrap();
        assert!(!r.pass);
        assert!(r.worst_margin < 0.0);
        // F(u) = -u with k = 1: equality everywhere
        let e = IsotropicEnergy::power_law(-1.0, 1.0).unwrap();
        let r = check_global_condition(&e, 1.0, 10.0, 200).unwrap();
        assert!(r.pass);
        assert!(r.worst_margin.abs() <= r.tolerance);
    }

    #[test]
    fn blowup_condition_sharp_in_q() {
        // a = -1: condition holds for some nu iff q > 1, witness nu=(q-1)/2
        let u_max = 10.0;
        let n = 200;
        for q in [0.5, 1.0] {
            let e = IsotropicEnergy::power_law(-1.0, q).unwrap();
            for nu in [0.05, 0.25, 0.5, 1.0, 4.0] {
                assert!(
                    !check_blowup_condition(&e, nu, u_max, n).unwrap().pass,
                    "q = {q}, nu = {nu} must fail"
                );
            }
        }
        for q in [1.5, 2.0, 3.0] {
            let e = IsotropicEnergy::power_law(-1.0, q).unwrap();
            let witness = (q - 1.0) / 2.0;
            assert!(check_blowup_condition(&e, witness, u_max, n).unwrap().pass);
            // too large a nu relaxes the right side below the left
            assert!(!check_blowup_condition(&e, q, u_max, n).unwrap().pass);
        }
        // equality case F = -u^2, nu = 1/2: uF' = -2u^2 = (1+2 nu) F
        let e = IsotropicEnergy::power_law(-1.0, 2.0).unwrap();
        let r = check_blowup_condition(&e, 0.5, u_max, n).unwrap();
        assert!(r.pass);
        assert!(r.worst_margin.abs() <= r.tolerance);
    }

    #[test]
    fn blowup_condition_for_linear_wave_energy() {
        // F(u) = u/2: u F'(u) = u/2 <= (1 + 2 nu) u/2 for every nu > 0, so
        // the differential condition holds; the blow-up theorem still never
        // applies because F >= 0 forces E(0) >= 0.
        let e = IsotropicEnergy::linear();
        for nu in [1e-3, 0.1, 0.5, 1.0] {
            let r = check_blowup_condition(&e, nu, 10.0, 200).unwrap();
            assert!(r.pass, "margin {}", r.worst_margin);
            assert!(r.worst_margin <= 0.0);
        }
    }

    #[test]
    fn anisotropic_checkers_handle_quartics() {
        // Ft = (p^2+q^2)^2 >= 0: global passes for any k
        let plus = AnisotropicEnergy::custom(
            "quartic",
            |p, q| {
                let u = p * p + q * q;
                u * u
            },
            |p, q| {
                let u = p * p + q * q;
                (4.0 * p * u, 4.0 * q * u)
            },
        )
        .unwrap();
        let r =
            check_conditions_anisotropic(&plus, AnisotropicCondition::Global { k: 1.0 }, 5.0, 128)
                .unwrap();
        assert!(r.pass);

        // Ft = -(p^2+q^2)^2 with nu = 1/2: U.grad = -4|U|^4 = 2(1+2nu)Ft
        let minus = AnisotropicEnergy::custom(
            "neg-quartic",
            |p, q| {
                let u = p * p + q * q;
                -u * u
            },
            |p, q| {
                let u = p * p + q * q;
                (-4.0 * p * u, -4.0 * q * u)
            },
        )
        .unwrap();
        let r = check_conditions_anisotropic(
            &minus,
            AnisotropicCondition::BlowUp { nu: 0.5 },
            5.0,
            128,
        )
        .unwrap();
        assert!(r.pass);
        assert!(r.worst_margin.abs() <= r.tolerance);
    }

    #[test]
    fn anisotropic_reduction_matches_isotropic_verdicts() {
        // matched samples: |U| = sqrt(u), so compare on the same ranges
        for (a, q) in [(1.0, 2.0), (-1.0, 2.0), (-1.0, 1.0), (-1.0, 0.5)] {
            let iso = IsotropicEnergy::power_law(a, q).unwrap();
            let aniso = AnisotropicEnergy::from_isotropic(&iso);
            for nu in [0.25, 0.5, 1.0] {
                let iso_pass = check_blowup_condition(&iso, nu, 25.0, 200).unwrap().pass;
                let aniso_pass = check_conditions_anisotropic(
                    &aniso,
                    AnisotropicCondition::BlowUp { nu },
                    5.0,
                    200,
                )
                .unwrap()
                .pass;
                assert_eq!(iso_pass, aniso_pass, "a={a}, q={q}, nu={nu}");
            }
            for k in [0.5, 1.0] {
                let iso_pass = check_global_condition(&iso, k, 25.0, 200).unwrap().pass;
                let aniso_pass = check_conditions_anisotropic(
                    &aniso,
                    AnisotropicCondition::Global { k },
                    5.0,
                    200,
                )
                .unwrap()
                .pass;
                assert_eq!(iso_pass, aniso_pass, "a={a}, q={q}, k={k}");
            }
        }
    }

    #[test]
    fn checker_argument_validation() {
        let e = IsotropicEnergy::linear();
        assert!(check_global_condition(&e, -1.0, 10.0, 200).is_err());
        assert!(check_global_condition(&e, 1.0, 0.0, 200).is_err());
        assert!(check_global_condition(&e, 1.0, 10.0, 10).is_err());
        assert!(check_blowup_condition(&e, 0.0, 10.0, 200).is_err());
    }
}
