//! Initial-data shapes for `w(0) = phi` and `w_t(0) = psi`, plus the
//! boundary-decay telemetry that scopes the periodic-box approximation of
//! the whole-plane problem.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid2D;
use crate::output;

/// Declarative field shape. `Proportional` is only meaningful for `psi`
/// (velocity proportional to `phi`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldShape {
    Zero,
    GaussianBump {
        amplitude: f64,
        sigma: f64,
        #[serde(default)]
        center: [f64; 2],
    },
    Mode {
        kx: i64,
        ky: i64,
        amplitude: f64,
    },
    Ring {
        radius: f64,
        width: f64,
        amplitude: f64,
    },
    File {
        path: String,
    },
    Proportional {
        factor: f64,
    },
}

impl FieldShape {
    pub fn validate(&self) -> Vec<String> {
        let mut issues = Vec::new();
        match self {
            FieldShape::Zero | FieldShape::Proportional { .. } => {}
            FieldShape::GaussianBump {
                amplitude, sigma, ..
            } => {
                if !amplitude.is_finite() {
                    issues.push("gaussian_bump amplitude must be finite".into());
                }
                if !(*sigma > 0.0 && sigma.is_finite()) {
                    issues.push("gaussian_bump sigma must be positive".into());
                }
            }
            FieldShape::Mode { amplitude, .. } => {
                if !amplitude.is_finite() {
                    issues.push("mode amplitude must be finite".into());
                }
            }
            FieldShape::Ring {
                radius,
                width,
                amplitude,
            } => {
                if !(*radius >= 0.0 && radius.is_finite()) {
                    issues.push("ring radius must be nonnegative".into());
                }
                if !(*width > 0.0 && width.is_finite()) {
                    issues.push("ring width must be positive".into());
                }
                if !amplitude.is_finite() {
                    issues.push("ring amplitude must be finite".into());
                }
            }
            FieldShape::File { path } => {
                if path.is_empty() {
                    issues.push("file shape needs a path".into());
                }
            }
        }
        issues
    }

    /// Realize the shape on a grid. `phi` must be supplied when resolving a
    /// proportional velocity.
    pub fn realize(&self, grid: &Grid2D, phi: Option<&Array2<f64>>) -> Result<Array2<f64>> {
        match self {
            FieldShape::Zero => Ok(Array2::zeros((grid.nx(), grid.ny()))),
            FieldShape::GaussianBump {
                amplitude,
                sigma,
                center,
            } => {
                let (cx, cy) = (center[0], center[1]);
                let two_sigma_sq = 2.0 * sigma * sigma;
                Ok(Array2::from_shape_fn((grid.nx(), grid.ny()), |(i, j)| {
                    let dx = grid.x_coord(i) - cx;
                    let dy = grid.y_coord(j) - cy;
                    amplitude * (-(dx * dx + dy * dy) / two_sigma_sq).exp()
                }))
            }
            FieldShape::Mode { kx, ky, amplitude } => {
                let xi1 = 2.0 * std::f64::consts::PI * *kx as f64 / grid.lx();
                let xi2 = 2.0 * std::f64::consts::PI * *ky as f64 / grid.ly();
                Ok(Array2::from_shape_fn((grid.nx(), grid.ny()), |(i, j)| {
                    amplitude * (xi1 * grid.x_coord(i) + xi2 * grid.y_coord(j)).cos()
                }))
            }
            FieldShape::Ring {
                radius,
                width,
                amplitude,
            } => {
                let two_width_sq = 2.0 * width * width;
                Ok(Array2::from_shape_fn((grid.nx(), grid.ny()), |(i, j)| {
                    let r = grid.x_coord(i).hypot(grid.y_coord(j));
                    amplitude * (-(r - radius) * (r - radius) / two_width_sq).exp()
                }))
            }
            FieldShape::File { path } => {
                let (values, meta) = output::read_snapshot(std::path::Path::new(path))?;
                if meta.nx != grid.nx() || meta.ny != grid.ny() {
                    return Err(Error::invalid_argument(format!(
                        "snapshot {} is {}x{}, grid is {}x{}",
                        path,
                        meta.nx,
                        meta.ny,
                        grid.nx(),
                        grid.ny()
                    )));
                }
                Ok(values)
            }
            FieldShape::Proportional { factor } => match phi {
                Some(phi) => Ok(phi * *factor),
                None => Err(Error::invalid_argument(
                    "proportional shape is only valid for psi",
                )),
            },
        }
    }
}

/// Decay telemetry of one realized field.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct BoundaryCheck {
    pub ring_max: f64,
    pub amplitude_max: f64,
    /// `ring_max <= 1e-12 * amplitude_max`
    pub ok: bool,
}

pub fn boundary_check(values: &Array2<f64>) -> BoundaryCheck {
    let (nx, ny) = values.dim();
    let mut ring_max = 0.0f64;
    for i in 0..nx {
        ring_max = ring_max.max(values[[i, 0]].abs());
        ring_max = ring_max.max(values[[i, ny - 1]].abs());
    }
    for j in 0..ny {
        ring_max = ring_max.max(values[[0, j]].abs());
        ring_max = ring_max.max(values[[nx - 1, j]].abs());
    }
    let amplitude_max = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    BoundaryCheck {
        ring_max,
        amplitude_max,
        ok: ring_max <= 1e-12 * amplitude_max,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_amplitude_bump_is_zero() {
        let grid = Grid2D::new(16, 16, 10.0, 10.0).unwrap();
        let shape = FieldShape::GaussianBump {
            amplitude: 0.0,
            sigma: 1.0,
            center: [0.0, 0.0],
        };
        let values = shape.realize(&grid, None).unwrap();
        assert!(values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn proportional_velocity_scales_phi() {
        let grid = Grid2D::new(8, 8, 4.0, 4.0).unwrap();
        let phi = FieldShape::GaussianBump {
            amplitude: 1.0,
            sigma: 0.5,
            center: [0.0, 0.0],
        }
        .realize(&grid, None)
        .unwrap();
        let psi = FieldShape::Proportional { factor: -1.0 }
            .realize(&grid, Some(&phi))
            .unwrap();
        for (a, b) in phi.iter().zip(psi.iter()) {
            assert_eq!(*b, -a);
        }
        assert!(FieldShape::Proportional { factor: 1.0 }
            .realize(&grid, None)
            .is_err());
    }

    #[test]
    fn narrow_bump_passes_boundary_decay() {
        // sigma = lx/40 on a centered bump: ring magnitude is far below
        // 1e-12 of the peak (exp(-800) in exact arithmetic)
        let grid = Grid2D::new(64, 64, 40.0, 40.0).unwrap();
        let shape = FieldShape::GaussianBump {
            amplitude: 3.0,
            sigma: 1.0,
            center: [0.0, 0.0],
        };
        let values = shape.realize(&grid, None).unwrap();
        let check = boundary_check(&values);
        assert!(check.ok, "{check:?}");
        assert!(check.ring_max <= 1e-12 * 3.0);
    }

    #[test]
    fn wide_bump_trips_the_truncation_warning() {
        let grid = Grid2D::new(64, 64, 40.0, 40.0).unwrap();
        let shape = FieldShape::GaussianBump {
            amplitude: 1.0,
            sigma: 8.0,
            center: [0.0, 0.0],
        };
        let values = shape.realize(&grid, None).unwrap();
        assert!(!boundary_check(&values).ok);
    }

    #[test]
    fn mode_shape_hits_grid_frequencies_exactly() {
        let grid = Grid2D::new(16, 16, 8.0, 8.0).unwrap();
        let shape = FieldShape::Mode {
            kx: 2,
            ky: -1,
            amplitude: 0.5,
        };
        let values = shape.realize(&grid, None).unwrap();
        let mut field = crate::grid::SpectralField::from_real(&grid, values).unwrap();
        let spec = field.spectral();
        // only the (2, -1) pair carries energy
        let peak = spec[[2, 15]].norm();
        assert!(peak > 1.0);
        for ((i, j), z) in spec.indexed_iter() {
            let is_pair = (i == 2 && j == 15) || (i == 14 && j == 1);
            if !is_pair {
                assert!(z.norm() <= 1e-10 * peak, "({i},{j})");
            }
        }
    }

    #[test]
    fn file_shape_round_trips_through_a_snapshot() {
        let dir = tempfile::tempdir().unwrap();
        let grid = Grid2D::new(16, 16, 8.0, 8.0).unwrap();
        let mut field = crate::grid::SpectralField::from_fn(&grid, |x, y| x * 0.2 - y);
        let stem = dir.path().join("000042");
        output::write_snapshot(&stem, &mut field, 3.0, "w").unwrap();
        let shape = FieldShape::File {
            path: stem.with_extension("raw").to_string_lossy().into_owned(),
        };
        let values = shape.realize(&grid, None).unwrap();
        assert_eq!(&values, field.real());
        // shape mismatch is rejected
        let other = Grid2D::new(32, 32, 8.0, 8.0).unwrap();
        assert!(shape.realize(&other, None).is_err());
    }

    #[test]
    fn shape_validation_flags_bad_parameters() {
        assert!(!FieldShape::GaussianBump {
            amplitude: 1.0,
            sigma: -1.0,
            center: [0.0, 0.0],
        }
        .validate()
        .is_empty());
        assert!(!FieldShape::Ring {
            radius: 1.0,
            width: 0.0,
            amplitude: 1.0,
        }
        .validate()
        .is_empty());
        assert!(FieldShape::Zero.validate().is_empty());
    }
}
