//! Steering vectors and the sparse multipath channel `H = Σ c_p e_r e_tᴴ`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{ArrayGeometry, Direction};
use crate::linalg::{self, CMatrix, CVector};

/// Which angle a directional derivative is taken along.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AngleAxis {
    Azimuth,
    Elevation,
}

/// One propagation path: gain `ρ e^{jφ}`, arrival and departure directions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathParams {
    pub rho: f64,
    pub phi: f64,
    pub doa: Direction,
    pub dod: Direction,
}

impl PathParams {
    /// Validates `ρ > 0` and wraps `φ` into `[0, 2π)`.
    pub fn new(rho: f64, phi: f64, doa: Direction, dod: Direction) -> Result<Self> {
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(Error::InvalidPath(format!("gain magnitude must be > 0, got {rho}")));
        }
        if !phi.is_finite() {
            return Err(Error::InvalidPath("non-finite phase".into()));
        }
        Ok(Self {
            rho,
            phi: phi.rem_euclid(2.0 * PI),
            doa,
            dod,
        })
    }

    /// Path from a complex gain; fails on a zero gain.
    pub fn from_gain(gain: Complex64, doa: Direction, dod: Direction) -> Result<Self> {
        Self::new(gain.norm(), gain.arg(), doa, dod)
    }

    pub fn gain(&self) -> Complex64 {
        Complex64::from_polar(self.rho, self.phi)
    }
}

/// Non-empty ordered list of paths.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct PathSet {
    paths: Vec<PathParams>,
}

impl PathSet {
    pub fn new(paths: Vec<PathParams>) -> Result<Self> {
        if paths.is_empty() {
            return Err(Error::InvalidPath("a path set needs at least one path".into()));
        }
        let paths = paths
            .into_iter()
            .map(|p| PathParams::new(p.rho, p.phi, p.doa, p.dod))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { paths })
    }

    pub fn paths(&self) -> &[PathParams] {
        &self.paths
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, PathParams> {
        self.paths.iter()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let paths: Vec<PathParams> = serde_json::from_str(s)?;
        Self::new(paths)
    }
}

impl<'de> Deserialize<'de> for PathSet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let paths = Vec::<PathParams>::deserialize(d)?;
        PathSet::new(paths).map_err(serde::de::Error::custom)
    }
}

/// Complex `n_r × n_t` channel matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMatrix {
    pub entries: CMatrix,
}

impl ChannelMatrix {
    pub fn new(entries: CMatrix) -> Self {
        Self { entries }
    }

    pub fn zeros(n_r: usize, n_t: usize) -> Self {
        Self::new(CMatrix::zeros(n_r, n_t))
    }

    pub fn n_r(&self) -> usize {
        self.entries.nrows()
    }

    pub fn n_t(&self) -> usize {
        self.entries.ncols()
    }

    /// Column-major `h = vec(H)`.
    pub fn vectorized(&self) -> CVector {
        linalg::vec(&self.entries)
    }

    pub fn from_vectorized(h: &CVector, n_r: usize, n_t: usize) -> Self {
        Self::new(linalg::unvec(h, n_r, n_t))
    }

    pub fn frobenius_sq(&self) -> f64 {
        linalg::frobenius_sq(&self.entries)
    }
}

/// `e(u)_i = exp(-j a_iᵀ u) / √n`.
pub fn steering_vector(g: &ArrayGeometry, d: &Direction) -> CVector {
    let n = g.n_antennas();
    let scale = 1.0 / (n as f64).sqrt();
    let phases = g.project(&d.unit_vector());
    CVector::from_iterator(n, phases.into_iter().map(|p| Complex64::from_polar(scale, -p)))
}

/// `diag(-j Aᵀ v_ξ) e(u)` with `v_ξ` the unit tangent along `axis`.
///
/// For the azimuth this is the derivative along the unit azimuth tangent,
/// i.e. `(1/cos ψ) ∂e/∂η`; for the elevation it is exactly `∂e/∂ψ`.
pub fn steering_derivative(g: &ArrayGeometry, d: &Direction, axis: AngleAxis) -> CVector {
    let (v_eta, v_psi) = d.tangent_basis();
    let v = match axis {
        AngleAxis::Azimuth => v_eta,
        AngleAxis::Elevation => v_psi,
    };
    let e = steering_vector(g, d);
    let weights = g.project(&v);
    CVector::from_iterator(
        e.len(),
        e.iter().zip(weights).map(|(ei, w)| Complex64::new(0.0, -w) * ei),
    )
}

/// `H_p = c_p e_r e_tᴴ`.
pub fn atomic_channel(p: &PathParams, g_r: &ArrayGeometry, g_t: &ArrayGeometry) -> ChannelMatrix {
    let e_r = steering_vector(g_r, &p.doa);
    let e_t = steering_vector(g_t, &p.dod);
    ChannelMatrix::new((e_r * p.gain()) * e_t.adjoint())
}

/// `vec(H_p) = c_p e_t* ⊗ e_r`, without forming the matrix.
pub fn atomic_vectorized(p: &PathParams, g_r: &ArrayGeometry, g_t: &ArrayGeometry) -> CVector {
    let e_r = steering_vector(g_r, &p.doa);
    let e_t = steering_vector(g_t, &p.dod);
    let c = p.gain();
    let (n_r, n_t) = (e_r.len(), e_t.len());
    CVector::from_fn(n_r * n_t, |k, _| c * e_t[k / n_r].conj() * e_r[k % n_r])
}

/// Sum of atomic channels.
pub fn synthesize(ps: &PathSet, g_r: &ArrayGeometry, g_t: &ArrayGeometry) -> ChannelMatrix {
    let mut h = CMatrix::zeros(g_r.n_antennas(), g_t.n_antennas());
    for p in ps.iter() {
        h += atomic_channel(p, g_r, g_t).entries;
    }
    ChannelMatrix::new(h)
}
