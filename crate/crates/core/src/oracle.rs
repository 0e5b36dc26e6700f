//! Slow, independent reference computations that validate the spectral path
//! on tiny instances: direct-sum periodic convolution, fixed-point iteration
//! on the time-integrated equations, and finite-difference realizations of
//! the operator. Test and validate mode only; the cost is O(N^2) in the
//! total point count for the convolution.

use ndarray::Array2;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{Grid2D, SpectralField};
use crate::integrator::SimState;
use crate::kernels::KernelSymbol;
use crate::operator::OperatorContext;

/// Plain sample array mirroring a `SpectralField`, with no transform cache.
#[derive(Clone, Debug)]
pub struct DenseField {
    pub values: Array2<f64>,
}

impl DenseField {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        if let Some(((i, j), v)) = values.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: format!("dense field entry {v}"),
                location: Some((i, j)),
            });
        }
        Ok(DenseField { values })
    }

    pub fn from_field(field: &mut SpectralField) -> Result<Self> {
        DenseField::new(field.real().clone())
    }
}

const DIRECT_CONVOLUTION_CAP: usize = 64 * 64;

/// Real-space kernel samples approximating the continuum kernel on the
/// grid: the discrete inverse transform of the symbol scaled by
/// `N / (lx*ly)`, i.e. the trapezoidal discretization of
/// `(2 pi)^-2 integral of beta_hat e^(i x.xi)`.
pub fn kernel_grid_samples(kernel: &KernelSymbol, grid: &Grid2D) -> Result<DenseField> {
    let symbol = kernel.sample_on_grid(grid)?;
    let mut coeffs = symbol.mapv(|v| Complex64::new(v, 0.0));
    grid.inverse_inplace(&mut coeffs);
    let scale = grid.len() as f64 / grid.area();
    DenseField::new(coeffs.mapv(|z| z.re * scale))
}

/// Periodic direct-sum convolution with the quadrature weight
/// `lx*ly/(nx*ny)`. Capped at 64x64 total points.
pub fn direct_convolution(
    kernel_samples: &DenseField,
    f: &DenseField,
    grid: &Grid2D,
) -> Result<DenseField> {
    let (nx, ny) = (grid.nx(), grid.ny());
    if kernel_samples.values.dim() != (nx, ny) || f.values.dim() != (nx, ny) {
        return Err(Error::invalid_argument(
            "convolution operands must match the grid shape",
        ));
    }
    if nx * ny > DIRECT_CONVOLUTION_CAP {
        return Err(Error::OracleSizeCap {
            n: nx * ny,
            cap: DIRECT_CONVOLUTION_CAP,
        });
    }
    let weight = grid.cell_area();
    let mut out = Array2::zeros((nx, ny));
    for m in 0..nx {
        for n in 0..ny {
            let mut acc = 0.0;
            for j in 0..nx {
                let dj = (m + nx - j) % nx;
                for k in 0..ny {
                    let dk = (n + ny - k) % ny;
                    acc += kernel_samples.values[[dj, dk]] * f.values[[j, k]];
                }
            }
            out[[m, n]] = acc * weight;
        }
    }
    DenseField::new(out)
}

/// Result of the fixed-point sweeps on the integral equations.
#[derive(Debug)]
pub struct PicardResult {
    pub state: SimState,
    /// Max-norm difference between consecutive iterates, one per sweep
    /// after the first.
    pub residuals: Vec<f64>,
}

const PICARD_T_CAP: f64 = 0.5;
const PICARD_RESIDUAL_FLOOR: f64 = 1e-13;

/// Fixed-point iteration on the twice-integrated system
///
/// ```text
/// w(t)   = phi + t psi + integral_0^t (t - tau) (K w)(tau) dtau
/// w_t(t) = psi + integral_0^t (K w)(tau) dtau
/// ```
///
/// with trapezoidal quadrature on `quad_points` uniform nodes. The horizon
/// is capped at 0.5 where the iteration contracts for desk-scale scenarios;
/// residual growth raises a divergence report.
pub fn picard_solve(
    ctx: &OperatorContext,
    phi: &SpectralField,
    psi: &SpectralField,
    t_end: f64,
    n_iter: usize,
    quad_points: usize,
) -> Result<PicardResult> {
    if !(t_end > 0.0 && t_end <= PICARD_T_CAP) {
        return Err(Error::invalid_argument(format!(
            "picard horizon must lie in (0, {PICARD_T_CAP}]"
        )));
    }
    if n_iter < 4 {
        return Err(Error::invalid_argument("picard needs at least 4 sweeps"));
    }
    if quad_points < 3 {
        return Err(Error::invalid_argument("picard needs at least 3 nodes"));
    }
    let grid = ctx.grid().clone();
    let phi_vals = phi.clone().into_real();
    let psi_vals = psi.clone().into_real();
    let dt = t_end / (quad_points - 1) as f64;
    let nodes: Vec<f64> = (0..quad_points).map(|i| i as f64 * dt).collect();

    // initial iterate: free drift
    let mut w_nodes: Vec<Array2<f64>> = nodes
        .iter()
        .map(|t| &phi_vals + &(&psi_vals * *t))
        .collect();
    let mut residuals = Vec::new();

    for _sweep in 0..n_iter {
        // K at every node of the current iterate
        let mut k_nodes = Vec::with_capacity(quad_points);
        for w in &w_nodes {
            let mut field = SpectralField::from_real(&grid, w.clone())?;
            k_nodes.push(ctx.apply_k(&mut field)?.into_real());
        }
        let mut next = Vec::with_capacity(quad_points);
        let mut max_change = 0.0f64;
        let mut scale = 0.0f64;
        for (idx, t) in nodes.iter().enumerate() {
            // trapezoid of (t - tau) K w over [0, t] on the node subgrid
            let mut integral = Array2::<f64>::zeros(phi_vals.dim());
            for sub in 0..=idx {
                let factor = if sub == 0 || sub == idx { 0.5 } else { 1.0 };
                let weight = factor * dt * (t - nodes[sub]);
                if weight != 0.0 {
                    integral = &integral + &(&k_nodes[sub] * weight);
                }
            }
            let candidate = &phi_vals + &(&psi_vals * *t) + &integral;
            let diff = (&candidate - &w_nodes[idx])
                .iter()
                .fold(0.0f64, |m, v| m.max(v.abs()));
            max_change = max_change.max(diff);
            scale = scale.max(candidate.iter().fold(0.0f64, |m, v| m.max(v.abs())));
            next.push(candidate);
        }
        w_nodes = next;
        residuals.push(max_change);
        let n = residuals.len();
        if n >= 2 {
            let floor = PICARD_RESIDUAL_FLOOR * scale.max(1.0);
            let grew = residuals[n - 1] > residuals[n - 2] * (1.0 + 1e-9);
            if grew && residuals[n - 1] > floor {
                return Err(Error::PicardDivergence(residuals));
            }
        }
    }

    // w_t at t_end from the integrated velocity equation
    let mut k_nodes = Vec::with_capacity(quad_points);
    for w in &w_nodes {
        let mut field = SpectralField::from_real(&grid, w.clone())?;
        k_nodes.push(ctx.apply_k(&mut field)?.into_real());
    }
    let mut v_integral = Array2::<f64>::zeros(phi_vals.dim());
    for (sub, k) in k_nodes.iter().enumerate() {
        let factor = if sub == 0 || sub == quad_points - 1 {
            0.5
        } else {
            1.0
        };
        v_integral = &v_integral + &(k * (factor * dt));
    }
    let v_end = &psi_vals + &v_integral;

    let mut state = SimState::new(
        SpectralField::from_real(&grid, w_nodes.pop().expect("nodes nonempty"))?,
        SpectralField::from_real(&grid, v_end)?,
    )?;
    state.t = t_end;
    Ok(PicardResult { state, residuals })
}

/// Reference `K w` with centered finite differences (order 2 or 4) for the
/// gradient and the divergence; the convolution stays spectral.
pub fn finite_difference_k(
    ctx: &OperatorContext,
    w: &DenseField,
    h_order: usize,
) -> Result<DenseField> {
    if h_order != 2 && h_order != 4 {
        return Err(Error::invalid_argument(
            "finite-difference order must be 2 or 4",
        ));
    }
    let grid = ctx.grid().clone();
    if w.values.dim() != (grid.nx(), grid.ny()) {
        return Err(Error::invalid_argument("field shape must match the grid"));
    }
    let wx = fd_derivative(&w.values, grid.dx(), 0, h_order);
    let wy = fd_derivative(&w.values, grid.dy(), 1, h_order);

    let mut sx = Array2::zeros(w.values.dim());
    let mut sy = Array2::zeros(w.values.dim());
    for ((i, j), p) in wx.indexed_iter() {
        let q = wy[[i, j]];
        let (a, b) = ctx.energy().stress_at(*p, q);
        if !a.is_finite() || !b.is_finite() {
            return Err(Error::NonFinite {
                what: "finite-difference stress".into(),
                location: Some((i, j)),
            });
        }
        sx[[i, j]] = a;
        sy[[i, j]] = b;
    }

    // convolution through the symbol, as in the production path
    let beta = ctx.beta_hat();
    let conv = |vals: Array2<f64>| -> Result<Array2<f64>> {
        let mut coeffs = vals.mapv(|v| Complex64::new(v, 0.0));
        grid.forward_inplace(&mut coeffs);
        for ((i, j), z) in coeffs.indexed_iter_mut() {
            *z *= beta[[i, j]];
        }
        grid.inverse_inplace(&mut coeffs);
        Ok(coeffs.mapv(|z| z.re))
    };
    let cx = conv(sx)?;
    let cy = conv(sy)?;
    let dx = fd_derivative(&cx, grid.dx(), 0, h_order);
    let dy = fd_derivative(&cy, grid.dy(), 1, h_order);
    DenseField::new(&dx + &dy)
}

fn fd_derivative(values: &Array2<f64>, h: f64, axis: usize, order: usize) -> Array2<f64> {
    let (nx, ny) = values.dim();
    let mut out = Array2::zeros((nx, ny));
    let shift =
        |i: usize, d: i64, n: usize| -> usize { ((i as i64 + d).rem_euclid(n as i64)) as usize };
    for i in 0..nx {
        for j in 0..ny {
            let sample = |d: i64| -> f64 {
                match axis {
                    0 => values[[shift(i, d, nx), j]],
                    _ => values[[i, shift(j, d, ny)]],
                }
            };
            out[[i, j]] = match order {
                2 => (sample(1) - sample(-1)) / (2.0 * h),
                _ => (-sample(2) + 8.0 * sample(1) - 8.0 * sample(-1) + sample(-2)) / (12.0 * h),
            };
        }
    }
    out
}

/// Band-limited trigonometric polynomial with an analytic gradient,
/// evaluable on any grid; the reference function for refinement studies and
/// random-instance validation.
#[derive(Clone, Debug)]
pub struct TrigPoly {
    /// `(kx, ky, amplitude, phase)` per term with wavenumbers `2 pi m / l`.
    terms: Vec<(f64, f64, f64, f64)>,
}

impl TrigPoly {
    pub fn random(seed: u64, max_mode: i64, lx: f64, ly: f64, amplitude: f64) -> Self {
        use rand::rngs::StdRng;
        use rand::{Rng, SeedableRng};
        let mut rng = StdRng::seed_from_u64(seed);
        let mut terms = Vec::new();
        for mx in -max_mode..=max_mode {
            for my in -max_mode..=max_mode {
                if mx == 0 && my == 0 {
                    continue;
                }
                let kx = 2.0 * std::f64::consts::PI * mx as f64 / lx;
                let ky = 2.0 * std::f64::consts::PI * my as f64 / ly;
                let amp = amplitude * rng.random_range(-1.0..1.0);
                let phase = rng.random_range(0.0..2.0 * std::f64::consts::PI);
                terms.push((kx, ky, amp, phase));
            }
        }
        TrigPoly { terms }
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        self.terms
            .iter()
            .map(|(kx, ky, a, p)| a * (kx * x + ky * y + p).cos())
            .sum()
    }

    pub fn grad(&self, x: f64, y: f64) -> (f64, f64) {
        let mut gx = 0.0;
        let mut gy = 0.0;
        for (kx, ky, a, p) in &self.terms {
            let s = a * (kx * x + ky * y + p).sin();
            gx -= kx * s;
            gy -= ky * s;
        }
        (gx, gy)
    }

    pub fn sample(&self, grid: &Grid2D) -> SpectralField {
        SpectralField::from_fn(grid, |x, y| self.eval(x, y))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels;
    use crate::nonlinearity::{EnergyModel, IsotropicEnergy};
    use crate::operator::OperatorOptions;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};
    use std::f64::consts::PI;

    fn ctx(grid: &Grid2D, kernel: KernelSymbol, energy: IsotropicEnergy) -> OperatorContext {
        OperatorContext::new(
            grid.clone(),
            kernel,
            EnergyModel::Isotropic(energy),
            OperatorOptions::default(),
        )
        .unwrap()
    }

    fn random_dense(grid: &Grid2D, seed: u64) -> DenseField {
        let mut rng = StdRng::seed_from_u64(seed);
        DenseField::new(Array2::from_shape_fn((grid.nx(), grid.ny()), |_| {
            rng.random_range(-1.0..1.0)
        }))
        .unwrap()
    }

    fn max_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
        a.iter()
            .zip(b.iter())
            .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
    }

    #[test]
    fn dirac_samples_convolve_to_identity() {
        let grid = Grid2D::new(16, 16, 10.0, 10.0).unwrap();
        let kernel_samples = kernel_grid_samples(&kernels::dirac(), &grid).unwrap();
        let f = random_dense(&grid, 1);
        let conv = direct_convolution(&kernel_samples, &f, &grid).unwrap();
        let scale = f.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(max_diff(&conv.values, &f.values) <= 1e-10 * scale);
    }

    #[test]
    fn direct_convolution_matches_spectral_multiplication() {
        // convolution theorem on the discrete torus, 20 random instances
        let grid = Grid2D::new(16, 16, 7.0, 9.0).unwrap();
        let kernel = kernels::bessel_k0();
        let samples = kernel_grid_samples(&kernel, &grid).unwrap();
        let c = ctx(&grid, kernel, IsotropicEnergy::linear());
        for seed in 0..20 {
            let f = random_dense(&grid, 100 + seed);
            let direct = direct_convolution(&samples, &f, &grid).unwrap();
            let mut field = SpectralField::from_real(&grid, f.values.clone()).unwrap();
            let mut spectral = c.apply_r_power(&mut field, -2.0).unwrap();
            let scale = spectral.real().iter().fold(0.0f64, |m, v| m.max(v.abs()));
            assert!(
                max_diff(&direct.values, spectral.real()) <= 1e-10 * scale,
                "instance {seed}"
            );
        }
    }

    #[test]
    fn direct_convolution_commutes() {
        let grid = Grid2D::new(12, 12, 5.0, 5.0).unwrap();
        let a = random_dense(&grid, 7);
        let b = random_dense(&grid, 8);
        let ab = direct_convolution(&a, &b, &grid).unwrap();
        let ba = direct_convolution(&b, &a, &grid).unwrap();
        let scale = ab.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(max_diff(&ab.values, &ba.values) <= 1e-10 * scale);
    }

    #[test]
    fn direct_convolution_enforces_size_cap() {
        let grid = Grid2D::new(128, 128, 10.0, 10.0).unwrap();
        let f = DenseField::new(Array2::zeros((128, 128))).unwrap();
        assert!(matches!(
            direct_convolution(&f, &f, &grid),
            Err(Error::OracleSizeCap { .. })
        ));
    }

    #[test]
    fn apply_k_matches_direct_space_convolution_path() {
        // K w = beta * div(sigma); the oracle path does the convolution as
        // a direct periodic sum over kernel samples
        let grid = Grid2D::new(16, 16, 10.0, 10.0).unwrap();
        let kernel = kernels::bessel_k0();
        let samples = kernel_grid_samples(&kernel, &grid).unwrap();
        let c = ctx(
            &grid,
            kernel,
            IsotropicEnergy::linear_plus_power(1.0, 2.0).unwrap(),
        );
        for seed in 0..5 {
            let mut rng = StdRng::seed_from_u64(300 + seed);
            let values = Array2::from_shape_fn((16, 16), |_| rng.random_range(-0.05..0.05));
            let mut w = SpectralField::from_real(&grid, values).unwrap();
            let mut spectral_k = c.apply_k(&mut w).unwrap();
            let mut div = c.local_divergence(&mut w).unwrap();
            let oracle = direct_convolution(
                &DenseField::new(div.real().clone()).unwrap(),
                &samples,
                &grid,
            )
            .unwrap();
            let scale = spectral_k.real().iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let diff = max_diff(spectral_k.real(), &oracle.values);
            assert!(diff <= 1e-10 * scale, "instance {seed}: {diff}");
        }
    }

    #[test]
    fn picard_free_drift_converges_immediately() {
        let grid = Grid2D::new(16, 16, 10.0, 10.0).unwrap();
        let c = ctx(&grid, kernels::bessel_k0(), IsotropicEnergy::zero());
        let phi = SpectralField::from_fn(&grid, |x, y| (0.5 * x).sin() * (0.3 * y).cos());
        let psi = SpectralField::from_fn(&grid, |x, _| 0.2 * (0.6 * x).cos());
        let t_end = 0.4;
        let result = picard_solve(&c, &phi, &psi, t_end, 4, 17).unwrap();
        let expected = &phi.clone().into_real() + &(&psi.clone().into_real() * t_end);
        let mut w = result.state.w;
        assert!(max_diff(w.real(), &expected) <= 1e-13);
        // residual stalls at zero after the first sweep
        assert!(result.residuals.iter().skip(1).all(|r| *r <= 1e-14));
    }

    #[test]
    fn picard_matches_harmonic_mode_solution() {
        // linear single mode: w(t) = cos(omega t) * mode
        let lx = 10.0;
        let grid = Grid2D::new(16, 16, lx, lx).unwrap();
        let c = ctx(&grid, kernels::bessel_k0(), IsotropicEnergy::linear());
        let k = 2.0 * PI / lx;
        let omega = k / (1.0 + k * k).sqrt();
        let phi = SpectralField::from_fn(&grid, |x, _| (k * x).cos());
        let psi = SpectralField::zeros(&grid);
        let t_end = 0.5;
        let result = picard_solve(&c, &phi, &psi, t_end, 8, 65).unwrap();
        let expected =
            SpectralField::from_fn(&grid, |x, _| (omega * t_end).cos() * (k * x).cos()).into_real();
        let mut w = result.state.w;
        // trapezoidal quadrature error dominates
        assert!(max_diff(w.real(), &expected) <= 1e-5);
    }

    #[test]
    fn picard_residual_contracts_geometrically() {
        let grid = Grid2D::new(32, 32, 40.0, 40.0).unwrap();
        let c = ctx(
            &grid,
            kernels::bessel_k0(),
            IsotropicEnergy::linear_plus_power(1.0, 2.0).unwrap(),
        );
        let phi = SpectralField::from_fn(&grid, |x, y| 0.5 * (-(x * x + y * y) / 8.0).exp());
        let psi = SpectralField::zeros(&grid);
        let result = picard_solve(&c, &phi, &psi, 0.5, 8, 33).unwrap();
        // every pre-floor ratio is well below one
        let mut contracting = 0;
        for pair in result.residuals.windows(2) {
            if pair[0] <= 1e-13 {
                break;
            }
            assert!(pair[1] <= 0.9 * pair[0], "residuals {:?}", result.residuals);
            contracting += 1;
        }
        assert!(contracting >= 3, "residuals {:?}", result.residuals);
    }

    #[test]
    fn picard_argument_validation() {
        let grid = Grid2D::new(16, 16, 10.0, 10.0).unwrap();
        let c = ctx(&grid, kernels::bessel_k0(), IsotropicEnergy::linear());
        let phi = SpectralField::zeros(&grid);
        let psi = SpectralField::zeros(&grid);
        assert!(picard_solve(&c, &phi, &psi, 0.9, 8, 17).is_err());
        assert!(picard_solve(&c, &phi, &psi, 0.3, 2, 17).is_err());
    }

    #[test]
    fn fd_constant_field_gives_zero_from_both_paths() {
        let grid = Grid2D::new(16, 16, 10.0, 10.0).unwrap();
        let c = ctx(&grid, kernels::bessel_k0(), IsotropicEnergy::linear());
        let w = DenseField::new(Array2::from_elem((16, 16), 2.5)).unwrap();
        let fd = finite_difference_k(&c, &w, 2).unwrap();
        assert!(fd.values.iter().all(|v| v.abs() <= 1e-12));
        let mut field = SpectralField::from_real(&grid, w.values.clone()).unwrap();
        let mut kw = c.apply_k(&mut field).unwrap();
        assert!(kw.sup_norm() <= 1e-12);
    }

    #[test]
    fn fd_dirac_linear_is_the_wide_five_point_laplacian() {
        // centered first differences applied twice give the 2h-spaced
        // 5-point stencil by construction
        let grid = Grid2D::new(16, 16, 8.0, 8.0).unwrap();
        let c = ctx(&grid, kernels::dirac(), IsotropicEnergy::linear());
        let w = random_dense(&grid, 3);
        let fd = finite_difference_k(&c, &w, 2).unwrap();
        let (hx, hy) = (grid.dx(), grid.dy());
        let n = 16usize;
        let mut expected = Array2::zeros((n, n));
        for i in 0..n {
            for j in 0..n {
                let xp = w.values[[(i + 2) % n, j]];
                let xm = w.values[[(i + n - 2) % n, j]];
                let yp = w.values[[i, (j + 2) % n]];
                let ym = w.values[[i, (j + n - 2) % n]];
                expected[[i, j]] = (xp - 2.0 * w.values[[i, j]] + xm) / (4.0 * hx * hx)
                    + (yp - 2.0 * w.values[[i, j]] + ym) / (4.0 * hy * hy);
            }
        }
        let scale = expected.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(max_diff(&fd.values, &expected) <= 1e-12 * scale);
    }

    #[test]
    fn fd_k_converges_to_spectral_k_at_second_order() {
        // fixed smooth reference function, refined grids; dealias off so the
        // spectral reference is the same function at every resolution (the
        // cubic stress of a mode-2 polynomial stays below Nyquist even at 16)
        let lx = 10.0;
        let poly = TrigPoly::random(11, 2, lx, lx, 0.1);
        let mut errors = Vec::new();
        for n in [32usize, 64, 128] {
            let grid = Grid2D::new(n, n, lx, lx).unwrap();
            let c = OperatorContext::new(
                grid.clone(),
                kernels::bessel_k0(),
                EnergyModel::Isotropic(IsotropicEnergy::linear_plus_power(0.5, 2.0).unwrap()),
                OperatorOptions {
                    dealias: false,
                    ..OperatorOptions::default()
                },
            )
            .unwrap();
            let mut w = poly.sample(&grid);
            let dense = DenseField::new(w.real().clone()).unwrap();
            let fd = finite_difference_k(&c, &dense, 2).unwrap();
            let mut spectral = c.apply_k(&mut w).unwrap();
            errors.push(max_diff(&fd.values, spectral.real()));
        }
        let order01 = (errors[0] / errors[1]).log2();
        let order12 = (errors[1] / errors[2]).log2();
        assert!(order01 >= 1.9, "observed order {order01} ({errors:?})");
        assert!(order12 >= 1.9, "observed order {order12} ({errors:?})");
    }

    #[test]
    fn trig_poly_gradient_is_consistent() {
        let poly = TrigPoly::random(5, 3, 7.0, 9.0, 1.0);
        let h = 1e-6;
        for (x, y) in [(0.3, -1.2), (2.0, 0.5), (-3.0, 3.3)] {
            let (gx, gy) = poly.grad(x, y);
            let fx = (poly.eval(x + h, y) - poly.eval(x - h, y)) / (2.0 * h);
            let fy = (poly.eval(x, y + h) - poly.eval(x, y - h)) / (2.0 * h);
            assert!((gx - fx).abs() <= 1e-6 * gx.abs().max(1.0));
            assert!((gy - fy).abs() <= 1e-6 * gy.abs().max(1.0));
        }
    }
}
