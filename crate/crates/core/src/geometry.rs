//! Antenna arrays and directions on the unit sphere.
//!
//! Directions use the convention `u = (cos ψ cos η, cos ψ sin η, sin ψ)` with
//! azimuth `η` and elevation `ψ`. Array positions are stored pre-scaled by
//! `2π/λ` and re-centred on their centroid, so every downstream formula is
//! wavelength-free and `A·1 = 0` holds by construction.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{DMatrix, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

/// Azimuth/elevation pair, in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDirection")]
pub struct Direction {
    #[serde(rename = "az")]
    pub azimuth: f64,
    #[serde(rename = "el")]
    pub elevation: f64,
}

#[derive(Deserialize)]
struct RawDirection {
    az: f64,
    el: f64,
}

impl TryFrom<RawDirection> for Direction {
    type Error = Error;

    fn try_from(r: RawDirection) -> Result<Self> {
        Direction::new(r.az, r.el)
    }
}

impl Direction {
    /// Builds a direction, wrapping azimuth into `[-π, π)`.
    ///
    /// Elevation must already lie in `[-π/2, π/2]`.
    pub fn new(azimuth: f64, elevation: f64) -> Result<Self> {
        if !azimuth.is_finite() || !elevation.is_finite() {
            return Err(Error::InvalidDirection("non-finite angle".into()));
        }
        if elevation.abs() > FRAC_PI_2 + 1e-12 {
            return Err(Error::InvalidDirection(format!(
                "elevation {elevation} outside [-pi/2, pi/2]"
            )));
        }
        Ok(Self {
            azimuth: wrap_azimuth(azimuth),
            elevation: elevation.clamp(-FRAC_PI_2, FRAC_PI_2),
        })
    }

    pub fn from_degrees(azimuth: f64, elevation: f64) -> Result<Self> {
        Self::new(azimuth.to_radians(), elevation.to_radians())
    }

    /// Recovers the angles of a (not necessarily normalized) 3-vector.
    pub fn from_vector(v: &Vec3) -> Result<Self> {
        let n = v.norm();
        if n == 0.0 || !n.is_finite() {
            return Err(Error::InvalidDirection("zero vector".into()));
        }
        let u = v / n;
        Self::new(u.y.atan2(u.x), u.z.clamp(-1.0, 1.0).asin())
    }

    pub fn unit_vector(&self) -> Vec3 {
        unit_vector(self)
    }

    pub fn tangent_basis(&self) -> (Vec3, Vec3) {
        tangent_basis(self)
    }

    /// Great-circle angle to another direction.
    pub fn angle_to(&self, other: &Direction) -> f64 {
        let (a, b) = (self.unit_vector(), other.unit_vector());
        a.cross(&b).norm().atan2(a.dot(&b))
    }
}

fn wrap_azimuth(a: f64) -> f64 {
    let w = (a + PI).rem_euclid(2.0 * PI) - PI;
    // rem_euclid may round up to exactly 2π
    if w >= PI {
        w - 2.0 * PI
    } else {
        w
    }
}

pub fn unit_vector(d: &Direction) -> Vec3 {
    let (se, ce) = d.elevation.sin_cos();
    let (sa, ca) = d.azimuth.sin_cos();
    Vec3::new(ce * ca, ce * sa, se)
}

/// Unit tangents `(v_η, v_ψ)` in the azimuth and elevation directions.
///
/// At the poles `v_η` is still the formula value; the azimuth is then not
/// identifiable and Fisher matrices built from it are singular.
pub fn tangent_basis(d: &Direction) -> (Vec3, Vec3) {
    let (se, ce) = d.elevation.sin_cos();
    let (sa, ca) = d.azimuth.sin_cos();
    (Vec3::new(-sa, ca, 0.0), Vec3::new(-se * ca, -se * sa, ce))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Plane {
    Xy,
    Yz,
    Xz,
}

impl Plane {
    fn axes(self) -> (usize, usize) {
        match self {
            Plane::Xy => (0, 1),
            Plane::Yz => (1, 2),
            Plane::Xz => (0, 2),
        }
    }

    /// Axis orthogonal to the plane: the array's broadside.
    pub fn normal(self) -> Axis {
        match self {
            Plane::Xy => Axis::Z,
            Plane::Yz => Axis::X,
            Plane::Xz => Axis::Y,
        }
    }
}

/// Antenna array as the `3 × n` matrix of positions scaled by `2π/λ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrayGeometry {
    scaled_positions: DMatrix<f64>,
    /// Broadside axis, when the array has one (linear arrays report `None`).
    broadside: Option<Axis>,
}

impl ArrayGeometry {
    /// Builds a geometry from positions given in wavelengths; re-centres them.
    pub fn from_wavelength_positions(positions: DMatrix<f64>) -> Result<Self> {
        if positions.nrows() != 3 {
            return Err(Error::InvalidGeometry(format!(
                "positions must have 3 rows, got {}",
                positions.nrows()
            )));
        }
        if positions.ncols() == 0 {
            return Err(Error::InvalidGeometry("array has no antennas".into()));
        }
        if positions.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidGeometry("non-finite position".into()));
        }
        let n = positions.ncols();
        let mut scaled = positions * (2.0 * PI);
        for r in 0..3 {
            let mean = scaled.row(r).sum() / n as f64;
            scaled.row_mut(r).add_scalar_mut(-mean);
        }
        Ok(Self {
            scaled_positions: scaled,
            broadside: None,
        })
    }

    pub fn n_antennas(&self) -> usize {
        self.scaled_positions.ncols()
    }

    /// The `A` matrix (`3 × n`).
    pub fn scaled_positions(&self) -> &DMatrix<f64> {
        &self.scaled_positions
    }

    pub fn column(&self, i: usize) -> Vec3 {
        Vec3::new(
            self.scaled_positions[(0, i)],
            self.scaled_positions[(1, i)],
            self.scaled_positions[(2, i)],
        )
    }

    /// `Aᵀ v` as a plain vector of length `n`.
    pub fn project(&self, v: &Vec3) -> Vec<f64> {
        (0..self.n_antennas())
            .map(|i| self.column(i).dot(v))
            .collect()
    }

    /// `A Aᵀ` (3 × 3).
    pub fn second_moment(&self) -> nalgebra::Matrix3<f64> {
        let a = &self.scaled_positions;
        let g = a * a.transpose();
        nalgebra::Matrix3::from_fn(|i, j| g[(i, j)])
    }

    pub fn broadside(&self) -> Option<Axis> {
        self.broadside
    }

    pub fn with_broadside(mut self, axis: Axis) -> Self {
        self.broadside = Some(axis);
        self
    }
}

/// Uniform linear array of `n` antennas along `axis`.
pub fn ula(n: usize, spacing_wavelengths: f64, axis: Axis) -> Result<ArrayGeometry> {
    if n == 0 {
        return Err(Error::InvalidGeometry("ULA needs at least one antenna".into()));
    }
    check_spacing(spacing_wavelengths)?;
    let mut pos = DMatrix::zeros(3, n);
    let center = (n as f64 + 1.0) / 2.0;
    for i in 0..n {
        pos[(axis.index(), i)] = (i as f64 + 1.0 - center) * spacing_wavelengths;
    }
    ArrayGeometry::from_wavelength_positions(pos)
}

/// Uniform planar array of `nx × ny` antennas in `plane`, row-major over `(ix, iy)`.
pub fn upa(nx: usize, ny: usize, spacing_wavelengths: f64, plane: Plane) -> Result<ArrayGeometry> {
    if nx == 0 || ny == 0 {
        return Err(Error::InvalidGeometry("UPA dimensions must be positive".into()));
    }
    check_spacing(spacing_wavelengths)?;
    let (ra, rb) = plane.axes();
    let mut pos = DMatrix::zeros(3, nx * ny);
    for ix in 0..nx {
        for iy in 0..ny {
            let col = ix * ny + iy;
            pos[(ra, col)] = ix as f64 * spacing_wavelengths;
            pos[(rb, col)] = iy as f64 * spacing_wavelengths;
        }
    }
    Ok(ArrayGeometry::from_wavelength_positions(pos)?.with_broadside(plane.normal()))
}

fn check_spacing(s: f64) -> Result<()> {
    if !(s > 0.0 && s.is_finite()) {
        return Err(Error::InvalidGeometry(format!("spacing must be positive, got {s}")));
    }
    Ok(())
}

/// JSON description of an array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum GeometrySpec {
    Ula {
        n: usize,
        #[serde(default = "half_wavelength")]
        spacing: f64,
        #[serde(default = "default_axis")]
        axis: Axis,
    },
    Upa {
        nx: usize,
        ny: usize,
        #[serde(default = "half_wavelength")]
        spacing: f64,
        #[serde(default = "default_plane")]
        plane: Plane,
    },
    Custom {
        /// `3 × n` positions in wavelengths, one inner array per coordinate.
        positions: Vec<Vec<f64>>,
        #[serde(default)]
        broadside: Option<Axis>,
    },
}

fn half_wavelength() -> f64 {
    0.5
}

fn default_axis() -> Axis {
    Axis::Y
}

fn default_plane() -> Plane {
    Plane::Yz
}

impl GeometrySpec {
    pub fn build(&self) -> Result<ArrayGeometry> {
        match self {
            GeometrySpec::Ula { n, spacing, axis } => ula(*n, *spacing, *axis),
            GeometrySpec::Upa {
                nx,
                ny,
                spacing,
                plane,
            } => upa(*nx, *ny, *spacing, *plane),
            GeometrySpec::Custom {
                positions,
                broadside,
            } => {
                if positions.len() != 3 {
                    return Err(Error::InvalidGeometry(
                        "custom positions must have 3 rows (x, y, z)".into(),
                    ));
                }
                let n = positions[0].len();
                if positions.iter().any(|r| r.len() != n) {
                    return Err(Error::InvalidGeometry("ragged custom positions".into()));
                }
                let m = DMatrix::from_fn(3, n, |r, c| positions[r][c]);
                let g = ArrayGeometry::from_wavelength_positions(m)?;
                Ok(match broadside {
                    Some(a) => g.with_broadside(*a),
                    None => g,
                })
            }
        }
    }

    /// Number of antennas the spec describes (without building it).
    pub fn n_antennas(&self) -> usize {
        match self {
            GeometrySpec::Ula { n, .. } => *n,
            GeometrySpec::Upa { nx, ny, .. } => nx * ny,
            GeometrySpec::Custom { positions, .. } => positions.first().map_or(0, Vec::len),
        }
    }

    /// Exports a built geometry as a custom spec, in wavelength units.
    pub fn from_geometry(g: &ArrayGeometry) -> Self {
        let a = g.scaled_positions();
        GeometrySpec::Custom {
            positions: (0..3)
                .map(|r| a.row(r).iter().map(|x| x / (2.0 * PI)).collect())
                .collect(),
            broadside: g.broadside(),
        }
    }
}
