//! Declarative description of a run: grid, kernel, energy, initial data,
//! integrator control, diagnostics cadence and condition checks. One JSON
//! document with a schema version; unknown keys are rejected, and a loaded
//! scenario serializes back to an equal one.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid2D;
use crate::initial::FieldShape;
use crate::integrator::Scheme;
use crate::kernels::{self, KernelSymbol};
use crate::nonlinearity::{AnisotropicEnergy, EnergyModel, IsotropicEnergy};

pub const SUPPORTED_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelConfig {
    Gaussian {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        effective_r: Option<f64>,
    },
    BesselK0,
    BiHelmholtz {
        c1: f64,
        c2: f64,
    },
    Dirac,
    /// Tabulated symbol from a CSV of `(xi1, xi2, value)` rows on the exact
    /// grid frequencies, with the declared decay claim.
    File {
        path: String,
        r: f64,
        c: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnergyConfig {
    Powerlaw {
        a: f64,
        q: f64,
    },
    /// `F(u) = u/2 + a u^q`
    LinearPlus {
        a: f64,
        q: f64,
    },
    Linear,
    Zero,
    /// The anisotropic path with `Ft(p, q) = F(p^2 + q^2)` built from an
    /// isotropic base.
    Anisotropic {
        base: Box<EnergyConfig>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    pub phi: FieldShape,
    pub psi: FieldShape,
}

fn default_max_steps() -> u64 {
    1_000_000
}
fn default_sup_gradient_factor() -> f64 {
    1e6
}
fn default_field_magnitude_bound() -> f64 {
    1e12
}
fn default_scheme() -> Scheme {
    Scheme::Rk4
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlConfig {
    /// Fixed step; omitted means `0.2 / omega_max`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    pub t_end: f64,
    #[serde(default = "default_scheme")]
    pub scheme: Scheme,
    #[serde(default = "default_max_steps")]
    pub max_steps: u64,
    /// The run halts when `||grad w||_inf` exceeds this factor times its
    /// initial value (absolute when the initial value is zero).
    #[serde(default = "default_sup_gradient_factor")]
    pub sup_gradient_factor: f64,
    #[serde(default = "default_field_magnitude_bound")]
    pub field_magnitude_bound: f64,
    /// Restart the whole run with `dt/2` up to this many times when it
    /// halts on non-finite values. Off by default: fixtures stay
    /// deterministic in their step count.
    #[serde(default)]
    pub halve_dt_retries: u32,
}

fn default_nu() -> f64 {
    0.5
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevineSpec {
    #[serde(default = "default_nu")]
    pub nu: f64,
    /// Defaults to `-2 E(0)` (requires `E(0) < 0`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    /// Defaults to `max(1, (1 + |<R phi, R psi>|) / b)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t0: Option<f64>,
}

fn default_u_max() -> f64 {
    10.0
}
fn default_n_samples() -> usize {
    256
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChecksConfig {
    /// Global-existence parameter `k`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<f64>,
    /// Blow-up parameter `nu`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu: Option<f64>,
    #[serde(default = "default_u_max")]
    pub u_max: f64,
    #[serde(default = "default_n_samples")]
    pub n_samples: usize,
}

fn default_every() -> u64 {
    1
}
fn default_sobolev_s() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    /// Default output directory; a CLI `--output-dir` overrides it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
    #[serde(default = "default_every")]
    pub diagnostics_every: u64,
    /// 0 disables snapshots.
    #[serde(default)]
    pub snapshot_every: u64,
    #[serde(default = "default_sobolev_s")]
    pub sobolev_s: f64,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: None,
            diagnostics_every: 1,
            snapshot_every: 0,
            sobolev_s: 1.0,
        }
    }
}

fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema_version: u32,
    pub grid: GridConfig,
    pub kernel: KernelConfig,
    pub energy: EnergyConfig,
    pub initial: InitialConfig,
    pub control: ControlConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub levine: Option<LevineSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checks: Option<ChecksConfig>,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default = "default_true")]
    pub dealias: bool,
    #[serde(default)]
    pub strict: bool,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_value(serde_json::from_str(text)?)
    }

    pub fn from_value(value: serde_json::Value) -> Result<Self> {
        let scenario: Scenario = serde_json::from_value(value.clone())?;
        // tagged enums bypass deny_unknown_fields; compare against the
        // canonical serialization so no input key is silently ignored
        let canonical = serde_json::to_value(&scenario)?;
        let mut unknown = Vec::new();
        collect_unknown_keys(&value, &canonical, String::new(), &mut unknown);
        if !unknown.is_empty() {
            return Err(Error::ScenarioInvalid(
                unknown
                    .into_iter()
                    .map(|k| format!("unknown key `{k}`"))
                    .collect(),
            ));
        }
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    /// Every invariant violation, collected; empty means valid.
    pub fn issues(&self) -> Vec<String> {
        let mut issues = Vec::new();
        if self.schema_version != SUPPORTED_SCHEMA_VERSION {
            issues.push(format!(
                "schema_version {} unsupported (expected {SUPPORTED_SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        if self.grid.nx < 4 || self.grid.nx % 2 != 0 || self.grid.ny < 4 || self.grid.ny % 2 != 0 {
            issues.push(format!(
                "grid must be even and at least 4 per axis, got {}x{}",
                self.grid.nx, self.grid.ny
            ));
        }
        if !(self.grid.lx > 0.0 && self.grid.ly > 0.0) {
            issues.push("box lengths must be positive".into());
        }
        match &self.kernel {
            KernelConfig::BiHelmholtz { c1, c2 } => {
                if c1 == c2 {
                    issues.push("bi_helmholtz requires c1 != c2".into());
                }
                if !(*c1 > 0.0 && *c2 > 0.0) {
                    issues.push("bi_helmholtz lengths must be positive".into());
                }
            }
            KernelConfig::File { r, c, .. } => {
                if !(*r >= 2.0) {
                    issues.push("tabulated kernel decay rate must be at least 2".into());
                }
                if !(*c > 0.0) {
                    issues.push("tabulated kernel decay constant must be positive".into());
                }
            }
            _ => {}
        }
        issues.extend(energy_issues(&self.energy));
        issues.extend(self.initial.phi.validate());
        issues.extend(self.initial.psi.validate());
        if matches!(self.initial.phi, FieldShape::Proportional { .. }) {
            issues.push("phi cannot be proportional".into());
        }
        if !(self.control.t_end > 0.0 && self.control.t_end.is_finite()) {
            issues.push("t_end must be positive".into());
        }
        if let Some(dt) = self.control.dt {
            if !(dt > 0.0 && dt <= self.control.t_end) {
                issues.push("dt must be positive and at most t_end".into());
            }
        }
        if self.control.max_steps == 0 {
            issues.push("max_steps must be positive".into());
        }
        if !(self.control.sup_gradient_factor > 0.0) {
            issues.push("sup_gradient_factor must be positive".into());
        }
        if !(self.control.field_magnitude_bound > 0.0) {
            issues.push("field_magnitude_bound must be positive".into());
        }
        if let Some(levine) = &self.levine {
            if !(levine.nu > 0.0) {
                issues.push("levine nu must be positive".into());
            }
            if let Some(b) = levine.b {
                if !(b > 0.0) {
                    issues.push("levine b must be positive".into());
                }
            }
            if let Some(t0) = levine.t0 {
                if !(t0 > 0.0) {
                    issues.push("levine t0 must be positive".into());
                }
            }
        }
        if let Some(checks) = &self.checks {
            if !(checks.u_max > 0.0) {
                issues.push("checks u_max must be positive".into());
            }
            if checks.n_samples < 100 {
                issues.push("checks n_samples must be at least 100".into());
            }
            if let Some(k) = checks.k {
                if !(k > 0.0) {
                    issues.push("checks k must be positive".into());
                }
            }
            if let Some(nu) = checks.nu {
                if !(nu > 0.0) {
                    issues.push("checks nu must be positive".into());
                }
            }
        }
        if self.output.diagnostics_every == 0 {
            issues.push("diagnostics_every must be positive".into());
        }
        issues
    }

    pub fn validate(&self) -> Result<()> {
        let issues = self.issues();
        if issues.is_empty() {
            Ok(())
        } else {
            Err(Error::ScenarioInvalid(issues))
        }
    }

    pub fn build_grid(&self) -> Result<Grid2D> {
        Grid2D::new(self.grid.nx, self.grid.ny, self.grid.lx, self.grid.ly)
    }

    /// Build the kernel; tabulated kernels are validated against their
    /// declared decay claim before use.
    pub fn build_kernel(&self, grid: &Grid2D) -> Result<KernelSymbol> {
        match &self.kernel {
            KernelConfig::Gaussian { effective_r } => Ok(match effective_r {
                Some(r) => kernels::gaussian_with_effective_r(*r),
                None => kernels::gaussian(),
            }),
            KernelConfig::BesselK0 => Ok(kernels::bessel_k0()),
            KernelConfig::BiHelmholtz { c1, c2 } => kernels::bi_helmholtz(*c1, *c2),
            KernelConfig::Dirac => Ok(kernels::dirac()),
            KernelConfig::File { path, r, c } => {
                kernels::from_table_csv(Path::new(path), grid, *r, *c)
            }
        }
    }

    pub fn build_energy(&self) -> Result<EnergyModel> {
        build_energy_config(&self.energy)
    }
}

fn energy_issues(config: &EnergyConfig) -> Vec<String> {
    match config {
        EnergyConfig::Powerlaw { a, q } | EnergyConfig::LinearPlus { a, q } => {
            let mut issues = Vec::new();
            if !a.is_finite() {
                issues.push("energy coefficient a must be finite".into());
            }
            if !(*q > 0.0 && q.is_finite()) {
                issues.push("energy exponent q must be positive".into());
            }
            issues
        }
        EnergyConfig::Linear | EnergyConfig::Zero => Vec::new(),
        EnergyConfig::Anisotropic { base } => {
            let mut issues = energy_issues(base);
            if matches!(**base, EnergyConfig::Anisotropic { .. }) {
                issues.push("anisotropic base must be isotropic".into());
            }
            issues
        }
    }
}

fn build_isotropic(config: &EnergyConfig) -> Result<IsotropicEnergy> {
    match config {
        EnergyConfig::Powerlaw { a, q } => IsotropicEnergy::power_law(*a, *q),
        EnergyConfig::LinearPlus { a, q } => IsotropicEnergy::linear_plus_power(*a, *q),
        EnergyConfig::Linear => Ok(IsotropicEnergy::linear()),
        EnergyConfig::Zero => Ok(IsotropicEnergy::zero()),
        EnergyConfig::Anisotropic { .. } => Err(Error::InvalidEnergy(
            "anisotropic base must be isotropic".into(),
        )),
    }
}

fn build_energy_config(config: &EnergyConfig) -> Result<EnergyModel> {
    match config {
        EnergyConfig::Anisotropic { base } => {
            let iso = build_isotropic(base)?;
            Ok(EnergyModel::Anisotropic(AnisotropicEnergy::from_isotropic(
                &iso,
            )))
        }
        other => Ok(EnergyModel::Isotropic(build_isotropic(other)?)),
    }
}

fn collect_unknown_keys(
    input: &serde_json::Value,
    canonical: &serde_json::Value,
    path: String,
    unknown: &mut Vec<String>,
) {
    match (input, canonical) {
        (serde_json::Value::Object(input), serde_json::Value::Object(canonical)) => {
            for (key, value) in input {
                if value.is_null() {
                    continue; // explicit null reads as "absent"
                }
                let child_path = if path.is_empty() {
                    key.clone()
                } else {
                    format!("{path}.{key}")
                };
                match canonical.get(key) {
                    Some(reference) => collect_unknown_keys(value, reference, child_path, unknown),
                    None => unknown.push(child_path),
                }
            }
        }
        (serde_json::Value::Array(input), serde_json::Value::Array(canonical)) => {
            for (idx, (a, b)) in input.iter().zip(canonical.iter()).enumerate() {
                collect_unknown_keys(a, b, format!("{path}[{idx}]"), unknown);
            }
        }
        _ => {}
    }
}

/// Apply one `path=value` override onto a raw scenario document. The value
/// is parsed as JSON when possible, otherwise taken as a string; the result
/// must still deserialize and validate.
pub fn apply_override(doc: &mut serde_json::Value, path: &str, raw_value: &str) -> Result<()> {
    let parsed: serde_json::Value = serde_json::from_str(raw_value)
        .unwrap_or_else(|_| serde_json::Value::String(raw_value.to_string()));
    let mut cursor = doc;
    let segments: Vec<&str> = path.split('.').collect();
    if segments.is_empty() {
        return Err(Error::invalid_argument("empty override path"));
    }
    for segment in &segments[..segments.len() - 1] {
        cursor = cursor
            .as_object_mut()
            .ok_or_else(|| {
                Error::invalid_argument(format!("override path `{path}` crosses a non-object"))
            })?
            .entry(segment.to_string())
            .or_insert_with(|| serde_json::Value::Object(Default::default()));
    }
    let last = segments[segments.len() - 1];
    cursor
        .as_object_mut()
        .ok_or_else(|| {
            Error::invalid_argument(format!("override path `{path}` crosses a non-object"))
        })?
        .insert(last.to_string(), parsed);
    Ok(())
}
