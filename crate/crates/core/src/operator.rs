//! The nonlocal spatial operator `K`, multiplier powers of `R`, and the
//! equivalent local forms used for cross-validation.
//!
//! `K w = (beta * dF/dw_x)_x + (beta * dF/dw_y)_y`, realized as
//! gradient -> pointwise stress (dealiased) -> transform -> multiply by
//! `beta_hat(xi) * i xi_axis` -> sum -> inverse transform. The application
//! order is fixed so regression fixtures reproduce bit for bit.
//!
//! `R^p u` multiplies coefficients by `beta_hat^(-p/2)`. For decaying
//! symbols this amplifies without bound; modes where the symbol falls below
//! `epsilon_floor` are skipped or capped per the floor policy, and the
//! skipped spectral-energy fraction is recorded.

use std::sync::atomic::{AtomicU64, Ordering};

use ndarray::Array2;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{Axis2, Grid2D, SpectralField};
use crate::kernels::KernelSymbol;
use crate::nonlinearity::{stress_with_model, EnergyModel};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FloorMode {
    /// Floored modes contribute zero and are counted.
    Skip,
    /// The floor value substitutes for the symbol.
    Cap,
}

#[derive(Clone, Copy, Debug)]
pub struct FloorPolicy {
    pub epsilon_floor: f64,
    pub mode: FloorMode,
}

impl Default for FloorPolicy {
    fn default() -> Self {
        FloorPolicy {
            epsilon_floor: 1e-280,
            mode: FloorMode::Skip,
        }
    }
}

impl FloorPolicy {
    fn validate(&self) -> Result<()> {
        if !(self.epsilon_floor > 0.0 && self.epsilon_floor < 1.0) {
            return Err(Error::invalid_argument("epsilon_floor must lie in (0, 1)"));
        }
        Ok(())
    }
}

/// Per-call floor statistics.
#[derive(Clone, Copy, Debug, Default)]
pub struct SkipStats {
    pub affected_modes: usize,
    pub energy_fraction: f64,
}

impl SkipStats {
    pub fn merge_max(self, other: SkipStats) -> SkipStats {
        SkipStats {
            affected_modes: self.affected_modes.max(other.affected_modes),
            energy_fraction: self.energy_fraction.max(other.energy_fraction),
        }
    }
}

/// Run-wide counters, updated atomically so contexts stay shareable.
#[derive(Debug, Default)]
pub struct Telemetry {
    floored_modes_total: AtomicU64,
    floor_warnings: AtomicU64,
    max_skipped_energy_fraction_bits: AtomicU64,
    max_imag_residue_bits: AtomicU64,
}

impl Telemetry {
    fn record_skip(&self, stats: &SkipStats) {
        self.floored_modes_total
            .fetch_add(stats.affected_modes as u64, Ordering::Relaxed);
        update_max(
            &self.max_skipped_energy_fraction_bits,
            stats.energy_fraction,
        );
    }

    fn record_warning(&self) {
        self.floor_warnings.fetch_add(1, Ordering::Relaxed);
    }

    fn record_imag_residue(&self, value: f64) {
        update_max(&self.max_imag_residue_bits, value);
    }

    pub fn floored_modes_total(&self) -> u64 {
        self.floored_modes_total.load(Ordering::Relaxed)
    }
    pub fn floor_warnings(&self) -> u64 {
        self.floor_warnings.load(Ordering::Relaxed)
    }
    pub fn max_skipped_energy_fraction(&self) -> f64 {
        f64::from_bits(
            self.max_skipped_energy_fraction_bits
                .load(Ordering::Relaxed),
        )
    }
    pub fn max_imag_residue(&self) -> f64 {
        f64::from_bits(self.max_imag_residue_bits.load(Ordering::Relaxed))
    }
}

fn update_max(cell: &AtomicU64, value: f64) {
    let mut current = cell.load(Ordering::Relaxed);
    while value > f64::from_bits(current) {
        match cell.compare_exchange_weak(
            current,
            value.to_bits(),
            Ordering::Relaxed,
            Ordering::Relaxed,
        ) {
            Ok(_) => break,
            Err(next) => current = next,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct OperatorOptions {
    pub floor: FloorPolicy,
    pub dealias: bool,
    pub strict: bool,
    /// Relative bound on the imaginary residue discarded after the final
    /// inverse transform; exceeding it signals aliasing or instability.
    pub imag_residue_tol: f64,
}

impl Default for OperatorOptions {
    fn default() -> Self {
        OperatorOptions {
            floor: FloorPolicy::default(),
            dealias: true,
            strict: false,
            imag_residue_tol: 1e-10,
        }
    }
}

/// Immutable pairing of grid, kernel symbol and energy model, with
/// precomputed multiplier tables. Shareable across threads; all `apply_*`
/// operations are pure given the context.
pub struct OperatorContext {
    grid: Grid2D,
    kernel: KernelSymbol,
    energy: EnergyModel,
    options: OperatorOptions,
    beta_hat: Array2<f64>,
    telemetry: Telemetry,
}

impl std::fmt::Debug for OperatorContext {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OperatorContext")
            .field("grid", &self.grid)
            .field("kernel", &self.kernel)
            .field("energy", &self.energy)
            .field("options", &self.options)
            .finish()
    }
}

impl OperatorContext {
    pub fn new(
        grid: Grid2D,
        kernel: KernelSymbol,
        energy: EnergyModel,
        options: OperatorOptions,
    ) -> Result<Self> {
        options.floor.validate()?;
        let beta_hat = kernel.sample_on_grid(&grid)?;
        if let Some(v) = beta_hat.iter().find(|v| **v < 0.0) {
            return Err(Error::InvalidKernel(format!(
                "symbol `{}` is negative ({v}) on a grid frequency",
                kernel.name()
            )));
        }
        Ok(OperatorContext {
            grid,
            kernel,
            energy,
            options,
            beta_hat,
            telemetry: Telemetry::default(),
        })
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }
    pub fn kernel(&self) -> &KernelSymbol {
        &self.kernel
    }
    pub fn energy(&self) -> &EnergyModel {
        &self.energy
    }
    pub fn options(&self) -> &OperatorOptions {
        &self.options
    }
    pub fn beta_hat(&self) -> &Array2<f64> {
        &self.beta_hat
    }
    pub fn telemetry(&self) -> &Telemetry {
        &self.telemetry
    }

    /// Largest linear mode frequency `|xi| sqrt(beta_hat)`; the default step
    /// size is `0.2 / omega_max`.
    pub fn omega_max(&self) -> f64 {
        let mut omega = 0.0f64;
        for ((i, j), b) in self.beta_hat.indexed_iter() {
            omega = omega.max(self.grid.xi_sq(i, j).sqrt() * b.sqrt());
        }
        omega
    }

    /// Spectral gradient of `w`.
    pub fn gradient(&self, w: &mut SpectralField) -> Result<(SpectralField, SpectralField)> {
        self.check_grid(w)?;
        Ok((
            w.derivative_unchecked(Axis2::X),
            w.derivative_unchecked(Axis2::Y),
        ))
    }

    /// Stress fields of `w`, dealiased per the context policy.
    pub fn stress(&self, w: &mut SpectralField) -> Result<(SpectralField, SpectralField)> {
        let (mut wx, mut wy) = self.gradient(w)?;
        stress_with_model(&self.energy, &mut wx, &mut wy, self.options.dealias)
    }

    /// The full nonlocal operator `K w`.
    pub fn apply_k(&self, w: &mut SpectralField) -> Result<SpectralField> {
        self.divergence_of_stress(w, Multiplier::PerComponentKernel)
    }

    /// Divergence of the stress with no kernel factor:
    /// `(dF/dw_x)_x + (dF/dw_y)_y`, i.e. `R^2 w_tt`.
    pub fn local_divergence(&self, w: &mut SpectralField) -> Result<SpectralField> {
        self.divergence_of_stress(w, Multiplier::None)
    }

    /// Equivalent local-PDE form: divergence of the stress followed by the
    /// inverse elliptic multiplier `(1 + |xi|^2)^-1` (Bessel kernel) or
    /// `(1 + g1 |xi|^2 + g2 |xi|^4)^-1` (bi-Helmholtz).
    pub fn apply_local_equivalent(&self, w: &mut SpectralField) -> Result<SpectralField> {
        if !(self.kernel.is_bessel_k0() || self.kernel.bi_helmholtz_gammas().is_some()) {
            return Err(Error::UnsupportedKernel {
                op: "apply_local_equivalent",
                kernel: self.kernel.name().to_string(),
            });
        }
        self.divergence_of_stress(w, Multiplier::InverseElliptic)
    }

    fn divergence_of_stress(
        &self,
        w: &mut SpectralField,
        multiplier: Multiplier,
    ) -> Result<SpectralField> {
        self.check_grid(w)?;
        if let Some(loc) = w.first_non_finite() {
            return Err(Error::NonFinite {
                what: "operator input".into(),
                location: Some(loc),
            });
        }
        let (mut sx, mut sy) = self.stress(w)?;
        let grid = self.grid.clone();
        let sx_hat = sx.spectral().clone();
        let sy_hat = sy.spectral();
        let mut out = Array2::from_elem((grid.nx(), grid.ny()), Complex64::new(0.0, 0.0));
        for i in 0..grid.nx() {
            let ix = if grid.is_nyquist_x(i) {
                Complex64::new(0.0, 0.0)
            } else {
                Complex64::new(0.0, grid.xi_x(i))
            };
            for j in 0..grid.ny() {
                let iy = if grid.is_nyquist_y(j) {
                    Complex64::new(0.0, 0.0)
                } else {
                    Complex64::new(0.0, grid.xi_y(j))
                };
                let value = match multiplier {
                    // multiply each component by beta_hat * i xi, then sum
                    Multiplier::PerComponentKernel => {
                        let b = self.beta_hat[[i, j]];
                        (ix * b) * sx_hat[[i, j]] + (iy * b) * sy_hat[[i, j]]
                    }
                    Multiplier::None => ix * sx_hat[[i, j]] + iy * sy_hat[[i, j]],
                    Multiplier::InverseElliptic => {
                        let b = self.beta_hat[[i, j]];
                        (ix * sx_hat[[i, j]] + iy * sy_hat[[i, j]]) * b
                    }
                };
                out[[i, j]] = value;
            }
        }
        self.inverse_to_real_checked(out, "operator output")
    }

    /// `R^p f`: multiply coefficients by `beta_hat^(-p/2)` with the floor
    /// policy applied where the symbol is below `epsilon_floor`.
    pub fn apply_r_power(&self, f: &mut SpectralField, p: f64) -> Result<SpectralField> {
        self.check_grid(f)?;
        if !p.is_finite() {
            return Err(Error::invalid_argument("power must be finite"));
        }
        let floor = self.options.floor;
        let spec = f.spectral();
        let mut out = spec.clone();
        let mut stats = SkipStats::default();
        let mut total_energy = 0.0f64;
        let mut affected_energy = 0.0f64;
        for ((i, j), z) in out.indexed_iter_mut() {
            let b = self.beta_hat[[i, j]];
            let energy = z.norm_sqr();
            total_energy += energy;
            if b < floor.epsilon_floor {
                stats.affected_modes += 1;
                affected_energy += energy;
                match floor.mode {
                    FloorMode::Skip => *z = Complex64::new(0.0, 0.0),
                    FloorMode::Cap => *z *= floor.epsilon_floor.powf(-p / 2.0),
                }
            } else {
                *z *= b.powf(-p / 2.0);
            }
        }
        stats.energy_fraction = if total_energy > 0.0 {
            affected_energy / total_energy
        } else {
            0.0
        };
        self.telemetry.record_skip(&stats);
        if p > 0.0 && stats.energy_fraction > 1e-8 {
            if self.options.strict {
                return Err(Error::FloorEscalation {
                    fraction: stats.energy_fraction,
                    limit: 1e-8,
                    power: p,
                });
            }
            self.telemetry.record_warning();
        }
        SpectralField::from_spectral(&self.grid, out)
    }

    /// `||R f||^2` as the weighted spectral sum `sum beta_hat^-1 |f_hat|^2`
    /// with quadrature normalization and the floor policy.
    pub fn r_norm_sq(&self, f: &mut SpectralField) -> Result<(f64, SkipStats)> {
        self.check_grid(f)?;
        let weight = self.grid.area() / (self.grid.len() as f64 * self.grid.len() as f64);
        let floor = self.options.floor;
        let spec = f.spectral();
        let mut total = 0.0f64;
        let mut total_energy = 0.0f64;
        let mut affected_energy = 0.0f64;
        let mut stats = SkipStats::default();
        for ((i, j), z) in spec.indexed_iter() {
            let b = self.beta_hat[[i, j]];
            let energy = z.norm_sqr();
            total_energy += energy;
            if b < floor.epsilon_floor {
                stats.affected_modes += 1;
                affected_energy += energy;
                if matches!(floor.mode, FloorMode::Cap) {
                    total += energy / floor.epsilon_floor;
                }
            } else {
                total += energy / b;
            }
        }
        stats.energy_fraction = if total_energy > 0.0 {
            affected_energy / total_energy
        } else {
            0.0
        };
        self.telemetry.record_skip(&stats);
        self.strict_energy_guard(&stats)?;
        Ok((total * weight, stats))
    }

    /// `<R a, R b>` as `Re sum beta_hat^-1 a_hat conj(b_hat)` with
    /// quadrature normalization and the floor policy.
    pub fn r_inner(
        &self,
        a: &mut SpectralField,
        b: &mut SpectralField,
    ) -> Result<(f64, SkipStats)> {
        self.check_grid(a)?;
        self.check_grid(b)?;
        let weight = self.grid.area() / (self.grid.len() as f64 * self.grid.len() as f64);
        let floor = self.options.floor;
        let a_hat = a.spectral().clone();
        let b_hat = b.spectral();
        let mut total = 0.0f64;
        let mut total_energy = 0.0f64;
        let mut affected_energy = 0.0f64;
        let mut stats = SkipStats::default();
        for ((i, j), za) in a_hat.indexed_iter() {
            let bh = self.beta_hat[[i, j]];
            let zb = b_hat[[i, j]];
            let cross = (za * zb.conj()).re;
            total_energy += za.norm_sqr().max(zb.norm_sqr());
            if bh < floor.epsilon_floor {
                stats.affected_modes += 1;
                affected_energy += za.norm_sqr().max(zb.norm_sqr());
                if matches!(floor.mode, FloorMode::Cap) {
                    total += cross / floor.epsilon_floor;
                }
            } else {
                total += cross / bh;
            }
        }
        stats.energy_fraction = if total_energy > 0.0 {
            affected_energy / total_energy
        } else {
            0.0
        };
        self.telemetry.record_skip(&stats);
        self.strict_energy_guard(&stats)?;
        Ok((total * weight, stats))
    }

    fn strict_energy_guard(&self, stats: &SkipStats) -> Result<()> {
        if self.options.strict && stats.energy_fraction > 1e-8 {
            return Err(Error::StrictMode(format!(
                "floor policy affected {:.3e} of spectral energy",
                stats.energy_fraction
            )));
        }
        Ok(())
    }

    fn inverse_to_real_checked(
        &self,
        mut coeffs: Array2<Complex64>,
        what: &str,
    ) -> Result<SpectralField> {
        self.grid.inverse_inplace(&mut coeffs);
        let mut max_im = 0.0f64;
        let mut max_re = 0.0f64;
        for z in coeffs.iter() {
            max_im = max_im.max(z.im.abs());
            max_re = max_re.max(z.re.abs());
        }
        let denom = if max_re > 0.0 { max_re } else { 1.0 };
        let residue = max_im / denom;
        self.telemetry.record_imag_residue(residue);
        if residue > self.options.imag_residue_tol {
            return Err(Error::ImagResidue {
                what: what.to_string(),
                residue,
                tol: self.options.imag_residue_tol,
            });
        }
        let real = coeffs.mapv(|z| z.re);
        if let Some(((i, j), _)) = real.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: what.to_string(),
                location: Some((i, j)),
            });
        }
        SpectralField::from_real(&self.grid, real)
    }

    fn check_grid(&self, f: &SpectralField) -> Result<()> {
        if f.grid() != &self.grid {
            return Err(Error::invalid_argument(
                "field grid does not match operator context",
            ));
        }
        Ok(())
    }
}

enum Multiplier {
    PerComponentKernel,
    None,
    InverseElliptic,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels;
    use crate::nonlinearity::IsotropicEnergy;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};
    use std::f64::consts::PI;

    fn ctx(
        grid: &Grid2D,
        kernel: KernelSymbol,
        energy: IsotropicEnergy,
        dealias: bool,
    ) -> OperatorContext {
        OperatorContext::new(
            grid.clone(),
            kernel,
            EnergyModel::Isotropic(energy),
            OperatorOptions {
                dealias,
                ..OperatorOptions::default()
            },
        )
        .unwrap()
    }

    fn random_field(grid: &Grid2D, seed: u64, amplitude: f64) -> SpectralField {
        let mut rng = StdRng::seed_from_u64(seed);
        let values = Array2::from_shape_fn((grid.nx(), grid.ny()), |_| {
            rng.random_range(-amplitude..amplitude)
        });
        SpectralField::from_real(grid, values).unwrap()
    }

    fn rel_max_diff(a: &mut SpectralField, b: &mut SpectralField) -> f64 {
        let av = a.real().clone();
        let bv = b.real();
        let scale = av
            .iter()
            .chain(bv.iter())
            .fold(0.0f64, |m, v| m.max(v.abs()))
            .max(1e-300);
        av.iter()
            .zip(bv.iter())
            .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
            / scale
    }

    #[test]
    fn k_of_zero_field_is_zero() {
        let grid = Grid2D::new(16, 16, 10.0, 10.0).unwrap();
        let c = ctx(&grid, kernels::bessel_k0(), IsotropicEnergy::linear(), true);
        let mut w = SpectralField::zeros(&grid);
        let mut kw = c.apply_k(&mut w).unwrap();
        assert_eq!(kw.sup_norm(), 0.0);
    }

    #[test]
    fn dirac_linear_k_is_the_laplacian() {
        let lx = 11.0;
        let grid = Grid2D::new(32, 32, lx, lx).unwrap();
        let c = ctx(&grid, kernels::dirac(), IsotropicEnergy::linear(), false);
        let k = 2.0 * PI / lx;
        let mut w = SpectralField::from_fn(&grid, |x, _| (k * x).sin());
        let mut kw = c.apply_k(&mut w).unwrap();
        let mut expected = SpectralField::from_fn(&grid, |x, _| -k * k * (k * x).sin());
        assert!(rel_max_diff(&mut kw, &mut expected) <= 1e-12);
    }

    #[test]
    fn bessel_linear_k_is_the_closed_form_multiplier() {
        // single mode: K w = -|xi|^2 / (1 + |xi|^2) w
        let lx = 7.0;
        let grid = Grid2D::new(32, 32, lx, lx).unwrap();
        let c = ctx(
            &grid,
            kernels::bessel_k0(),
            IsotropicEnergy::linear(),
            false,
        );
        let k = 2.0 * PI * 2.0 / lx;
        let mut w = SpectralField::from_fn(&grid, |x, y| (k * x).cos() + 0.0 * y);
        let factor = -k * k / (1.0 + k * k);
        let mut kw = c.apply_k(&mut w).unwrap();
        let mut expected = SpectralField::from_fn(&grid, |x, _| factor * (k * x).cos());
        assert!(rel_max_diff(&mut kw, &mut expected) <= 1e-12);
    }

    #[test]
    fn local_equivalent_matches_apply_k() {
        let grid = Grid2D::new(64, 64, 40.0, 40.0).unwrap();
        for kernel in [
            kernels::bessel_k0(),
            kernels::bi_helmholtz(2.0, 1.0).unwrap(),
        ] {
            let c = ctx(
                &grid,
                kernel,
                IsotropicEnergy::linear_plus_power(1.0, 2.0).unwrap(),
                true,
            );
            for seed in 0..3 {
                let mut w = random_field(&grid, seed, 0.1);
                let mut a = c.apply_k(&mut w).unwrap();
                let mut b = c.apply_local_equivalent(&mut w).unwrap();
                assert!(rel_max_diff(&mut a, &mut b) <= 1e-12);
            }
        }
    }

    #[test]
    fn local_equivalent_rejects_other_kernels() {
        let grid = Grid2D::new(16, 16, 10.0, 10.0).unwrap();
        let c = ctx(&grid, kernels::gaussian(), IsotropicEnergy::linear(), true);
        let mut w = random_field(&grid, 1, 0.1);
        assert!(matches!(
            c.apply_local_equivalent(&mut w),
            Err(Error::UnsupportedKernel { .. })
        ));
    }

    #[test]
    fn dirac_makes_k_equal_local_divergence() {
        let grid = Grid2D::new(32, 32, 9.0, 9.0).unwrap();
        let c = ctx(
            &grid,
            kernels::dirac(),
            IsotropicEnergy::linear_plus_power(0.3, 2.0).unwrap(),
            true,
        );
        let mut w = random_field(&grid, 5, 0.1);
        let mut a = c.apply_k(&mut w).unwrap();
        let mut b = c.local_divergence(&mut w).unwrap();
        assert!(rel_max_diff(&mut a, &mut b) <= 1e-13);
    }

    #[test]
    fn multiplier_factorization_k_equals_convolved_divergence() {
        // apply_K = R^-2 (local divergence), i.e. convolution after the
        // bare divergence
        let grid = Grid2D::new(32, 32, 17.0, 17.0).unwrap();
        let c = ctx(
            &grid,
            kernels::bessel_k0(),
            IsotropicEnergy::linear_plus_power(-0.2, 2.0).unwrap(),
            true,
        );
        for seed in 0..5 {
            let mut w = random_field(&grid, 20 + seed, 0.2);
            let mut kw = c.apply_k(&mut w).unwrap();
            let mut div = c.local_divergence(&mut w).unwrap();
            let mut conv = c.apply_r_power(&mut div, -2.0).unwrap();
            assert!(rel_max_diff(&mut kw, &mut conv) <= 1e-10);
        }
    }

    #[test]
    fn r_power_inverse_pair_round_trips() {
        let grid = Grid2D::new(16, 16, 10.0, 10.0).unwrap();
        let c = ctx(&grid, kernels::bessel_k0(), IsotropicEnergy::linear(), true);
        let mut f = random_field(&grid, 9, 1.0);
        let original = f.real().clone();
        let mut up = c.apply_r_power(&mut f, 1.0).unwrap();
        let mut back = c.apply_r_power(&mut up, -1.0).unwrap();
        let scale = original.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let diff = back
            .real()
            .iter()
            .zip(original.iter())
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(diff <= 1e-10 * scale);
    }

    #[test]
    fn r_power_minus_two_is_convolution_and_dirac_identity() {
        let grid = Grid2D::new(16, 16, 10.0, 10.0).unwrap();
        // dirac: R^-2 f = f exactly up to transform round-trip
        let c = ctx(&grid, kernels::dirac(), IsotropicEnergy::linear(), true);
        let mut f = random_field(&grid, 33, 1.0);
        let original = f.real().clone();
        let mut conv = c.apply_r_power(&mut f, -2.0).unwrap();
        let diff = conv
            .real()
            .iter()
            .zip(original.iter())
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(diff <= 1e-12);

        // bessel single mode: coefficient scaled by beta_hat
        let lx = 10.0;
        let c = ctx(&grid, kernels::bessel_k0(), IsotropicEnergy::linear(), true);
        let k = 2.0 * PI / lx;
        let mut mode = SpectralField::from_fn(&grid, |x, _| (k * x).cos());
        let mut conv = c.apply_r_power(&mut mode, -2.0).unwrap();
        let mut expected = SpectralField::from_fn(&grid, |x, _| (k * x).cos() / (1.0 + k * k));
        assert!(rel_max_diff(&mut conv, &mut expected) <= 1e-12);

        // and p = +2 multiplies by beta_hat^-1 = 1 + |xi|^2
        let mut sharp = c.apply_r_power(&mut mode, 2.0).unwrap();
        let mut expected = SpectralField::from_fn(&grid, |x, _| (k * x).cos() * (1.0 + k * k));
        assert!(rel_max_diff(&mut sharp, &mut expected) <= 1e-12);
    }

    #[test]
    fn floor_policy_skips_and_counts() {
        let grid = Grid2D::new(16, 16, 10.0, 10.0).unwrap();
        // raise the floor so the gaussian tail trips it at this resolution
        let kernel = kernels::gaussian();
        let energy = EnergyModel::Isotropic(IsotropicEnergy::linear());
        let c = OperatorContext::new(
            grid.clone(),
            kernel,
            energy,
            OperatorOptions {
                floor: FloorPolicy {
                    epsilon_floor: 1e-3,
                    mode: FloorMode::Skip,
                },
                ..OperatorOptions::default()
            },
        )
        .unwrap();
        let mut f = random_field(&grid, 71, 1.0);
        let (_, stats) = c.r_norm_sq(&mut f).unwrap();
        assert!(stats.affected_modes > 0);
        assert!(stats.energy_fraction > 0.0 && stats.energy_fraction < 1.0);
        // amplifying power on skipped energy raises a warning
        let before = c.telemetry().floor_warnings();
        let _ = c.apply_r_power(&mut f, 2.0).unwrap();
        assert!(c.telemetry().floor_warnings() > before);
    }

    #[test]
    fn strict_mode_escalates_floor_warning() {
        let grid = Grid2D::new(16, 16, 10.0, 10.0).unwrap();
        let c = OperatorContext::new(
            grid.clone(),
            kernels::gaussian(),
            EnergyModel::Isotropic(IsotropicEnergy::linear()),
            OperatorOptions {
                floor: FloorPolicy {
                    epsilon_floor: 1e-3,
                    mode: FloorMode::Skip,
                },
                strict: true,
                ..OperatorOptions::default()
            },
        )
        .unwrap();
        let mut f = random_field(&grid, 71, 1.0);
        assert!(matches!(
            c.apply_r_power(&mut f, 2.0),
            Err(Error::FloorEscalation { .. })
        ));
    }

    #[test]
    fn no_flooring_for_polynomial_symbols() {
        let grid = Grid2D::new(64, 64, 40.0, 40.0).unwrap();
        for kernel in [
            kernels::bessel_k0(),
            kernels::bi_helmholtz(2.0, 1.0).unwrap(),
        ] {
            let c = ctx(&grid, kernel, IsotropicEnergy::linear(), true);
            let mut f = random_field(&grid, 3, 1.0);
            let (_, stats) = c.r_norm_sq(&mut f).unwrap();
            assert_eq!(stats.affected_modes, 0);
            assert_eq!(stats.energy_fraction, 0.0);
        }
    }

    #[test]
    fn smoothing_ratio_is_finite_for_bessel() {
        // grid analogue of ||K w||_s <= const * ||w||_{s+2-r}
        let grid = Grid2D::new(32, 32, 12.0, 12.0).unwrap();
        let c = ctx(&grid, kernels::bessel_k0(), IsotropicEnergy::linear(), true);
        let s = 1.0;
        for seed in 0..5 {
            let mut w = random_field(&grid, 40 + seed, 0.5).dealias();
            let mut kw = c.apply_k(&mut w).unwrap();
            let num = kw.sobolev_norm(s);
            let den = w.sobolev_norm(s + 2.0 - 2.0);
            let ratio = num / den;
            assert!(ratio.is_finite() && ratio > 0.0);
            // |xi|^2 beta_hat < 1 for the bessel symbol, and the linear
            // stress keeps the multiplier below that bound
            assert!(ratio <= 1.0 + 1e-12, "ratio = {ratio}");
        }
    }

    #[test]
    fn contexts_and_fields_are_shareable_across_threads() {
        fn assert_send_sync<T: Send + Sync>() {}
        assert_send_sync::<Grid2D>();
        assert_send_sync::<KernelSymbol>();
        assert_send_sync::<OperatorContext>();
        // single-writer, but movable between threads and readable when shared
        assert_send_sync::<SpectralField>();
    }

    #[test]
    fn concurrent_application_to_distinct_fields() {
        let grid = Grid2D::new(32, 32, 12.0, 12.0).unwrap();
        let c = ctx(
            &grid,
            kernels::bessel_k0(),
            IsotropicEnergy::linear_plus_power(0.5, 2.0).unwrap(),
            true,
        );
        let serial: Vec<Array2<f64>> = (0..4)
            .map(|seed| {
                let mut w = random_field(&grid, 60 + seed, 0.1);
                c.apply_k(&mut w).unwrap().into_real()
            })
            .collect();
        let parallel: Vec<Array2<f64>> = std::thread::scope(|scope| {
            let handles: Vec<_> = (0..4)
                .map(|seed| {
                    let c = &c;
                    let grid = &grid;
                    scope.spawn(move || {
                        let mut w = random_field(grid, 60 + seed, 0.1);
                        c.apply_k(&mut w).unwrap().into_real()
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().unwrap()).collect()
        });
        for (a, b) in serial.iter().zip(parallel.iter()) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn rejects_non_finite_operator_input() {
        let grid = Grid2D::new(8, 8, 2.0, 2.0).unwrap();
        let c = ctx(&grid, kernels::bessel_k0(), IsotropicEnergy::linear(), true);
        let mut values = Array2::zeros((8, 8));
        values[[1, 1]] = f64::INFINITY;
        let mut w = SpectralField::from_real(&grid, values).unwrap();
        assert!(matches!(c.apply_k(&mut w), Err(Error::NonFinite { .. })));
    }
}
