//! Pure scalar-field math.
//!
//! Two concentration models coexist: a Gaussian per-source density with
//! closed-form gradients (the default, used for navigation), and an
//! inverse-square aggregate whose gradient is finite-differenced. Multi-source
//! fields superpose additively. All functions here are pure and thread-safe.

use crate::error::SimError;
use crate::vec3::Vec3;
use serde::{Deserialize, Serialize};

/// Central-difference step for the inverse-square model's gradient.
pub const INVERSE_SQUARE_FD_STEP: f64 = 1e-4;

/// A biomarker emitter attached to a cell (or standing alone).
///
/// `peak` and `sigma` drive the Gaussian model; `strength` is the source
/// weight in the inverse-square model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiomarkerSource {
    pub position: Vec3,
    pub peak: f64,
    pub sigma: f64,
    pub strength: f64,
}

impl BiomarkerSource {
    pub fn new(position: Vec3, peak: f64, sigma: f64, strength: f64) -> Self {
        debug_assert!(sigma > 0.0, "sigma must be positive");
        debug_assert!(peak >= 0.0 && strength >= 0.0);
        BiomarkerSource { position, peak, sigma, strength }
    }
}

/// Which concentration model a run uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldModel {
    #[default]
    Gaussian,
    InverseSquare,
}

/// Gaussian density of one source at `point`:
/// `peak * exp(-|point - source|^2 / (2 sigma^2))`.
pub fn gaussian_density(point: Vec3, source: &BiomarkerSource) -> f64 {
    let d2 = (point - source.position).norm_squared();
    source.peak * (-d2 / (2.0 * source.sigma * source.sigma)).exp()
}

/// Closed-form gradient of [`gaussian_density`] at `point`.
///
/// Each component is `-(delta_i / sigma^2) * density`, evaluated in exactly
/// that order so the identity against the density holds bit-for-bit. The
/// vector points toward the source for any point away from it.
pub fn gaussian_gradient(point: Vec3, source: &BiomarkerSource) -> Vec3 {
    let rho = gaussian_density(point, source);
    let delta = point - source.position;
    let inv_sigma2 = 1.0 / (source.sigma * source.sigma);
    Vec3::new(
        -(delta.x * inv_sigma2) * rho,
        -(delta.y * inv_sigma2) * rho,
        -(delta.z * inv_sigma2) * rho,
    )
}

/// Inverse-square aggregate concentration: `sum_i strength_i / max(d_i, d_min)^2`.
///
/// The clamp at `d_min` removes the singularity at a source position.
pub fn aggregate_concentration(point: Vec3, sources: &[BiomarkerSource], d_min: f64) -> f64 {
    debug_assert!(d_min > 0.0);
    sources
        .iter()
        .map(|s| {
            let d = (point - s.position).norm().max(d_min);
            s.strength / (d * d)
        })
        .sum()
}

/// Superposed concentration and gradient of the active model at `point`.
///
/// Gaussian: both are per-source sums of the closed forms. Inverse-square:
/// the gradient is a central finite difference of the aggregate.
pub fn total_field(
    point: Vec3,
    sources: &[BiomarkerSource],
    model: FieldModel,
    d_min: f64,
) -> (f64, Vec3) {
    match model {
        FieldModel::Gaussian => {
            let mut c = 0.0;
            let mut g = Vec3::ZERO;
            for s in sources {
                c += gaussian_density(point, s);
                g += gaussian_gradient(point, s);
            }
            (c, g)
        }
        FieldModel::InverseSquare => {
            let c = aggregate_concentration(point, sources, d_min);
            let h = INVERSE_SQUARE_FD_STEP;
            let diff = |dp: Vec3| {
                let hi = aggregate_concentration(point + dp, sources, d_min);
                let lo = aggregate_concentration(point - dp, sources, d_min);
                (hi - lo) / (2.0 * h)
            };
            let g = Vec3::new(
                diff(Vec3::new(h, 0.0, 0.0)),
                diff(Vec3::new(0.0, h, 0.0)),
                diff(Vec3::new(0.0, 0.0, h)),
            );
            (c, g)
        }
    }
}

/// Axis-aligned plane for heatmap slices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Plane {
    XY,
    XZ,
    YZ,
}

impl Plane {
    pub fn name(self) -> &'static str {
        match self {
            Plane::XY => "XY",
            Plane::XZ => "XZ",
            Plane::YZ => "YZ",
        }
    }

    pub fn parse(s: &str) -> Option<Plane> {
        match s.to_ascii_uppercase().as_str() {
            "XY" => Some(Plane::XY),
            "XZ" => Some(Plane::XZ),
            "YZ" => Some(Plane::YZ),
            _ => None,
        }
    }

    /// 3D point for in-plane coordinates `(a, b)` at the fixed `slice` value.
    /// `a` is the first-named axis (the row axis), `b` the second.
    fn point(self, a: f64, b: f64, slice: f64) -> Vec3 {
        match self {
            Plane::XY => Vec3::new(a, b, slice),
            Plane::XZ => Vec3::new(a, slice, b),
            Plane::YZ => Vec3::new(slice, a, b),
        }
    }

    /// In-plane coordinates of a 3D point (first-named axis, second axis).
    pub fn project(self, p: Vec3) -> (f64, f64) {
        match self {
            Plane::XY => (p.x, p.y),
            Plane::XZ => (p.x, p.z),
            Plane::YZ => (p.y, p.z),
        }
    }
}

/// Uniform planar sampling of the concentration field.
///
/// Row `i` holds the first-named axis ascending; values are sampled at cell
/// centers of a `resolution x resolution` partition of the cross-section.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapGrid {
    pub plane: Plane,
    pub slice_coord: f64,
    pub resolution: usize,
    pub values: Vec<Vec<f64>>,
}

impl HeatmapGrid {
    /// Center coordinate of cell `i` along either in-plane axis.
    pub fn cell_center(side: f64, resolution: usize, i: usize) -> f64 {
        (i as f64 + 0.5) * side / resolution as f64
    }

    /// Indices of the maximum cell (row, col); ties resolve to the first in
    /// row-major order.
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = (0, 0);
        let mut best_v = f64::NEG_INFINITY;
        for (i, row) in self.values.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if v > best_v {
                    best_v = v;
                    best = (i, j);
                }
            }
        }
        best
    }
}

/// Sample the field on a plane slice of the cube `[0, side]^3`.
///
/// Rejects `resolution < 2` (a degenerate grid).
pub fn sample_heatmap(
    sources: &[BiomarkerSource],
    model: FieldModel,
    plane: Plane,
    slice_coord: f64,
    side: f64,
    resolution: usize,
    d_min: f64,
) -> Result<HeatmapGrid, SimError> {
    if resolution < 2 {
        return Err(SimError::Resolution(resolution));
    }
    let mut values = Vec::with_capacity(resolution);
    for i in 0..resolution {
        let a = HeatmapGrid::cell_center(side, resolution, i);
        let mut row = Vec::with_capacity(resolution);
        for j in 0..resolution {
            let b = HeatmapGrid::cell_center(side, resolution, j);
            let (c, _) = total_field(plane.point(a, b, slice_coord), sources, model, d_min);
            row.push(c);
        }
        values.push(row);
    }
    Ok(HeatmapGrid { plane, slice_coord, resolution, values })
}
