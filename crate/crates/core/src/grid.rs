//! Periodic 2D grid, Fourier transforms, spectral differentiation, dealiasing
//! and discrete norms.
//!
//! Conventions, fixed once for the whole crate:
//! - the box is `[-lx/2, lx/2) x [-ly/2, ly/2)`, sampled on `nx x ny` points;
//! - the forward transform carries no prefactor, the inverse carries
//!   `1/(nx*ny)`;
//! - norms apply the continuum quadrature weight `lx*ly/(nx*ny)` so that the
//!   discrete `L2` norm approximates the integral one, and the Sobolev norm
//!   at `s = 0` equals it exactly (discrete Parseval).

use std::sync::Arc;

use ndarray::Array2;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Which spatial axis an operation acts on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis2 {
    X,
    Y,
}

struct FftPlans {
    fwd_x: Arc<dyn Fft<f64>>,
    inv_x: Arc<dyn Fft<f64>>,
    fwd_y: Arc<dyn Fft<f64>>,
    inv_y: Arc<dyn Fft<f64>>,
}

/// Periodic grid with cached FFT plans. Immutable and cheap to clone.
#[derive(Clone)]
pub struct Grid2D {
    nx: usize,
    ny: usize,
    lx: f64,
    ly: f64,
    plans: Arc<FftPlans>,
}

impl std::fmt::Debug for Grid2D {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Grid2D")
            .field("nx", &self.nx)
            .field("ny", &self.ny)
            .field("lx", &self.lx)
            .field("ly", &self.ly)
            .finish()
    }
}

impl PartialEq for Grid2D {
    fn eq(&self, other: &Self) -> bool {
        self.nx == other.nx && self.ny == other.ny && self.lx == other.lx && self.ly == other.ly
    }
}

impl Grid2D {
    pub fn new(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Self> {
        if nx < 4 || ny < 4 || nx % 2 != 0 || ny % 2 != 0 {
            return Err(Error::InvalidGrid(format!(
                "nx and ny must be even and >= 4, got {nx} x {ny}"
            )));
        }
        if !(lx.is_finite() && ly.is_finite() && lx > 0.0 && ly > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "box lengths must be positive finite, got {lx} x {ly}"
            )));
        }
        let mut planner = FftPlanner::new();
        let plans = FftPlans {
            fwd_x: planner.plan_fft_forward(nx),
            inv_x: planner.plan_fft_inverse(nx),
            fwd_y: planner.plan_fft_forward(ny),
            inv_y: planner.plan_fft_inverse(ny),
        };
        Ok(Grid2D {
            nx,
            ny,
            lx,
            ly,
            plans: Arc::new(plans),
        })
    }

    pub fn nx(&self) -> usize {
        self.nx
    }
    pub fn ny(&self) -> usize {
        self.ny
    }
    pub fn lx(&self) -> f64 {
        self.lx
    }
    pub fn ly(&self) -> f64 {
        self.ly
    }
    pub fn len(&self) -> usize {
        self.nx * self.ny
    }
    pub fn is_empty(&self) -> bool {
        false
    }
    pub fn dx(&self) -> f64 {
        self.lx / self.nx as f64
    }
    pub fn dy(&self) -> f64 {
        self.ly / self.ny as f64
    }
    pub fn area(&self) -> f64 {
        self.lx * self.ly
    }
    /// Quadrature weight of one grid cell.
    pub fn cell_area(&self) -> f64 {
        self.area() / self.len() as f64
    }

    pub fn x_coord(&self, i: usize) -> f64 {
        -0.5 * self.lx + i as f64 * self.dx()
    }
    pub fn y_coord(&self, j: usize) -> f64 {
        -0.5 * self.ly + j as f64 * self.dy()
    }

    /// Signed mode number in `[-n/2, n/2)` for FFT bin `i`.
    pub fn mode_number_x(&self, i: usize) -> i64 {
        wrap_mode(i, self.nx)
    }
    pub fn mode_number_y(&self, j: usize) -> i64 {
        wrap_mode(j, self.ny)
    }

    /// Wavenumber `2*pi*m/lx` for FFT bin `i`.
    pub fn xi_x(&self, i: usize) -> f64 {
        2.0 * std::f64::consts::PI * self.mode_number_x(i) as f64 / self.lx
    }
    pub fn xi_y(&self, j: usize) -> f64 {
        2.0 * std::f64::consts::PI * self.mode_number_y(j) as f64 / self.ly
    }
    pub fn xi_sq(&self, i: usize, j: usize) -> f64 {
        let a = self.xi_x(i);
        let b = self.xi_y(j);
        a * a + b * b
    }

    /// The unpaired mode of a real transform; `i*xi` is ill-defined there.
    pub fn is_nyquist_x(&self, i: usize) -> bool {
        i == self.nx / 2
    }
    pub fn is_nyquist_y(&self, j: usize) -> bool {
        j == self.ny / 2
    }

    /// Whether mode `(i, j)` survives the 2/3-rule dealias filter.
    pub fn in_dealias_band(&self, i: usize, j: usize) -> bool {
        let mx = self.mode_number_x(i).unsigned_abs() as f64;
        let my = self.mode_number_y(j).unsigned_abs() as f64;
        mx <= self.nx as f64 / 3.0 && my <= self.ny as f64 / 3.0
    }

    fn fft_rows(&self, data: &mut Array2<Complex64>, fft: &Arc<dyn Fft<f64>>) {
        let ny = self.ny;
        let slice = data
            .as_slice_mut()
            .expect("field arrays use standard layout");
        let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
        for row in slice.chunks_exact_mut(ny) {
            fft.process_with_scratch(row, &mut scratch);
        }
    }

    fn fft_cols(&self, data: &mut Array2<Complex64>, fft: &Arc<dyn Fft<f64>>) {
        let mut buf = vec![Complex64::new(0.0, 0.0); self.nx];
        let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
        for j in 0..self.ny {
            for (i, slot) in buf.iter_mut().enumerate() {
                *slot = data[[i, j]];
            }
            fft.process_with_scratch(&mut buf, &mut scratch);
            for (i, value) in buf.iter().enumerate() {
                data[[i, j]] = *value;
            }
        }
    }

    /// Unnormalized 2D forward DFT in place.
    pub fn forward_inplace(&self, data: &mut Array2<Complex64>) {
        self.fft_rows(data, &self.plans.fwd_y);
        self.fft_cols(data, &self.plans.fwd_x);
    }

    /// 2D inverse DFT in place, scaled by `1/(nx*ny)`.
    pub fn inverse_inplace(&self, data: &mut Array2<Complex64>) {
        self.fft_rows(data, &self.plans.inv_y);
        self.fft_cols(data, &self.plans.inv_x);
        let scale = 1.0 / self.len() as f64;
        data.mapv_inplace(|z| z * scale);
    }
}

fn wrap_mode(i: usize, n: usize) -> i64 {
    if i < n / 2 {
        i as i64
    } else {
        i as i64 - n as i64
    }
}

/// Real 2D field with lazily synchronized Fourier coefficients.
///
/// Either representation may be absent; accessing one computes it from the
/// other and caches it. Mutation through `set_real`/`map_real` invalidates
/// the spectral cache. Single writer; distinct fields may be used from
/// different threads.
#[derive(Clone)]
pub struct SpectralField {
    grid: Grid2D,
    real: Option<Array2<f64>>,
    spec: Option<Array2<Complex64>>,
}

impl std::fmt::Debug for SpectralField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectralField")
            .field("grid", &self.grid)
            .field("has_real", &self.real.is_some())
            .field("has_spectral", &self.spec.is_some())
            .finish()
    }
}

impl SpectralField {
    pub fn zeros(grid: &Grid2D) -> Self {
        SpectralField {
            grid: grid.clone(),
            real: Some(Array2::zeros((grid.nx, grid.ny))),
            spec: None,
        }
    }

    pub fn from_real(grid: &Grid2D, values: Array2<f64>) -> Result<Self> {
        if values.dim() != (grid.nx, grid.ny) {
            return Err(Error::InvalidGrid(format!(
                "field shape {:?} does not match grid {} x {}",
                values.dim(),
                grid.nx,
                grid.ny
            )));
        }
        Ok(SpectralField {
            grid: grid.clone(),
            real: Some(values),
            spec: None,
        })
    }

    pub fn from_spectral(grid: &Grid2D, coeffs: Array2<Complex64>) -> Result<Self> {
        if coeffs.dim() != (grid.nx, grid.ny) {
            return Err(Error::InvalidGrid(format!(
                "coefficient shape {:?} does not match grid {} x {}",
                coeffs.dim(),
                grid.nx,
                grid.ny
            )));
        }
        Ok(SpectralField {
            grid: grid.clone(),
            real: None,
            spec: Some(coeffs),
        })
    }

    pub fn from_fn(grid: &Grid2D, f: impl Fn(f64, f64) -> f64) -> Self {
        let values = Array2::from_shape_fn((grid.nx, grid.ny), |(i, j)| {
            f(grid.x_coord(i), grid.y_coord(j))
        });
        SpectralField {
            grid: grid.clone(),
            real: Some(values),
            spec: None,
        }
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    fn ensure_real(&mut self) {
        if self.real.is_none() {
            let mut data = self
                .spec
                .as_ref()
                .expect("one representation present")
                .clone();
            self.grid.inverse_inplace(&mut data);
            self.real = Some(data.mapv(|z| z.re));
        }
    }

    fn ensure_spectral(&mut self) {
        if self.spec.is_none() {
            let real = self.real.as_ref().expect("one representation present");
            let mut data = real.mapv(|x| Complex64::new(x, 0.0));
            self.grid.forward_inplace(&mut data);
            self.spec = Some(data);
        }
    }

    /// Grid samples; computed from the coefficients on first access.
    pub fn real(&mut self) -> &Array2<f64> {
        self.ensure_real();
        self.real.as_ref().unwrap()
    }

    /// Fourier coefficients; computed from the samples on first access.
    pub fn spectral(&mut self) -> &Array2<Complex64> {
        self.ensure_spectral();
        self.spec.as_ref().unwrap()
    }

    pub fn into_real(mut self) -> Array2<f64> {
        self.ensure_real();
        self.real.unwrap()
    }

    /// The samples if already materialized; lets shared readers peek
    /// without triggering a transform.
    pub fn cached_real(&self) -> Option<&Array2<f64>> {
        self.real.as_ref()
    }

    /// Replace the samples, dropping any cached coefficients.
    pub fn set_real(&mut self, values: Array2<f64>) -> Result<()> {
        if values.dim() != (self.grid.nx, self.grid.ny) {
            return Err(Error::InvalidGrid("shape mismatch in set_real".into()));
        }
        self.real = Some(values);
        self.spec = None;
        Ok(())
    }

    pub fn map_real(&mut self, f: impl Fn(f64) -> f64) {
        self.ensure_real();
        self.real.as_mut().unwrap().mapv_inplace(f);
        self.spec = None;
    }

    /// Location of the first non-finite entry, checking whichever
    /// representation is already materialized.
    pub fn first_non_finite(&self) -> Option<(usize, usize)> {
        if let Some(real) = &self.real {
            for ((i, j), v) in real.indexed_iter() {
                if !v.is_finite() {
                    return Some((i, j));
                }
            }
            None
        } else if let Some(spec) = &self.spec {
            for ((i, j), z) in spec.indexed_iter() {
                if !z.re.is_finite() || !z.im.is_finite() {
                    return Some((i, j));
                }
            }
            None
        } else {
            None
        }
    }

    pub fn is_finite(&self) -> bool {
        self.first_non_finite().is_none()
    }

    fn derivative_coeffs(&mut self, axis: Axis2) -> Array2<Complex64> {
        let grid = self.grid.clone();
        let spec = self.spectral();
        let mut out = spec.clone();
        match axis {
            Axis2::X => {
                for i in 0..grid.nx {
                    let factor = if grid.is_nyquist_x(i) {
                        // iota*xi is ill-defined on the unpaired mode
                        Complex64::new(0.0, 0.0)
                    } else {
                        Complex64::new(0.0, grid.xi_x(i))
                    };
                    for j in 0..grid.ny {
                        out[[i, j]] *= factor;
                    }
                }
            }
            Axis2::Y => {
                for j in 0..grid.ny {
                    let factor = if grid.is_nyquist_y(j) {
                        Complex64::new(0.0, 0.0)
                    } else {
                        Complex64::new(0.0, grid.xi_y(j))
                    };
                    for i in 0..grid.nx {
                        out[[i, j]] *= factor;
                    }
                }
            }
        }
        out
    }

    /// Spectral derivative without the finiteness precondition check; used
    /// internally where the caller handles non-finite data itself.
    pub(crate) fn derivative_unchecked(&mut self, axis: Axis2) -> SpectralField {
        let coeffs = self.derivative_coeffs(axis);
        SpectralField {
            grid: self.grid.clone(),
            real: None,
            spec: Some(coeffs),
        }
    }

    /// Spectral derivative along `axis`; Nyquist modes are zeroed.
    pub fn derivative(&mut self, axis: Axis2) -> Result<SpectralField> {
        if let Some(loc) = self.first_non_finite() {
            return Err(Error::NonFinite {
                what: "derivative input".into(),
                location: Some(loc),
            });
        }
        Ok(self.derivative_unchecked(axis))
    }

    /// 2/3-rule low-pass filter: zeroes all modes with `|m| > n/3` on
    /// either axis.
    pub fn dealias(&mut self) -> SpectralField {
        let grid = self.grid.clone();
        let mut coeffs = self.spectral().clone();
        apply_dealias_mask(&grid, &mut coeffs);
        SpectralField {
            grid,
            real: None,
            spec: Some(coeffs),
        }
    }

    /// `L2` norm by real-space quadrature.
    pub fn l2_norm(&mut self) -> f64 {
        let cell = self.grid.cell_area();
        let real = self.real();
        (real.iter().map(|v| v * v).sum::<f64>() * cell).sqrt()
    }

    /// Max-norm of the samples.
    pub fn sup_norm(&mut self) -> f64 {
        self.real().iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// `H^s` norm from the Fourier representation.
    ///
    /// `norm^2 = (lx*ly)/(nx*ny)^2 * sum (1+|xi|^2)^s |u_hat|^2`; at `s = 0`
    /// this equals the quadrature `L2` norm by discrete Parseval.
    pub fn sobolev_norm(&mut self, s: f64) -> f64 {
        assert!(s.is_finite(), "Sobolev index must be finite");
        let grid = self.grid.clone();
        let weight = grid.area() / (grid.len() as f64 * grid.len() as f64);
        let spec = self.spectral();
        let mut total = 0.0;
        for ((i, j), z) in spec.indexed_iter() {
            total += (1.0 + grid.xi_sq(i, j)).powf(s) * z.norm_sqr();
        }
        (total * weight).sqrt()
    }

    /// `max` over grid points of `|grad f|`.
    pub fn sup_norm_gradient(&mut self) -> f64 {
        let mut fx = self.derivative_unchecked(Axis2::X);
        let mut fy = self.derivative_unchecked(Axis2::Y);
        let gx = fx.real();
        let gy = fy.real();
        gx.iter()
            .zip(gy.iter())
            .fold(0.0f64, |m, (a, b)| m.max((a * a + b * b).sqrt()))
    }

    /// Real-space `L2` inner product by quadrature.
    pub fn l2_inner(a: &mut SpectralField, b: &mut SpectralField) -> f64 {
        assert!(a.grid == b.grid, "inner product needs matching grids");
        let cell = a.grid.cell_area();
        let av = a.real().clone();
        let bv = b.real();
        av.iter().zip(bv.iter()).map(|(x, y)| x * y).sum::<f64>() * cell
    }

    /// Max |f| on the outermost grid ring, used for truncation telemetry.
    pub fn boundary_ring_max(&mut self) -> f64 {
        let (nx, ny) = (self.grid.nx, self.grid.ny);
        let real = self.real();
        let mut m = 0.0f64;
        for i in 0..nx {
            m = m.max(real[[i, 0]].abs());
            m = m.max(real[[i, ny - 1]].abs());
        }
        for j in 0..ny {
            m = m.max(real[[0, j]].abs());
            m = m.max(real[[nx - 1, j]].abs());
        }
        m
    }
}

/// Zero all coefficients outside the 2/3 pass band, in place.
pub fn apply_dealias_mask(grid: &Grid2D, coeffs: &mut Array2<Complex64>) {
    for ((i, j), z) in coeffs.indexed_iter_mut() {
        if !grid.in_dealias_band(i, j) {
            *z = Complex64::new(0.0, 0.0);
        }
    }
}
