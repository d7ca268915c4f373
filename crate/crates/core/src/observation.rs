//! Hybrid-architecture training: `Y = Wᴴ H X + Wᴴ N`.

use std::f64::consts::PI;

use nalgebra::Cholesky;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::channel::ChannelMatrix;
use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, CVector};

/// Largest `n_r·n_t` for which [`projection_matrix`] materializes `P`.
pub const DENSE_PROJECTION_LIMIT: usize = 4096;

/// Pilot basis used by [`orthogonal_pilots`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PilotBasis {
    Identity,
    #[default]
    Dft,
}

/// `X = α·Q[:, :n_s]` with `Q` unitary, so `Xᴴ X = α² Id`.
pub fn orthogonal_pilots(n_t: usize, n_s: usize, alpha: f64, basis: PilotBasis) -> Result<CMatrix> {
    if n_s > n_t {
        return Err(Error::TooManyPilots { n_t, n_s });
    }
    if n_s == 0 || !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::ZeroPilotPower);
    }
    Ok(match basis {
        PilotBasis::Identity => CMatrix::from_fn(n_t, n_s, |i, j| {
            if i == j {
                Complex64::new(alpha, 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        }),
        PilotBasis::Dft => {
            let s = alpha / (n_t as f64).sqrt();
            CMatrix::from_fn(n_t, n_s, |i, j| {
                let angle = -2.0 * PI * ((i * j) % n_t) as f64 / n_t as f64;
                Complex64::from_polar(s, angle)
            })
        }
    })
}

/// Training matrix `X`, combiners `W` and noise level.
#[derive(Debug, Clone)]
pub struct ObservationSetup {
    x: CMatrix,
    w: CMatrix,
    sigma2: f64,
    factors: Option<(CMatrix, CMatrix)>,
    alpha2: f64,
    orthogonal: bool,
    /// `W (Wᴴ W)⁻¹ Wᴴ`, `None` when `W` spans everything.
    combiner_projector: Option<CMatrix>,
    /// `X Xᴴ / α²`, `None` when it is the identity.
    pilot_projector: Option<CMatrix>,
}

impl ObservationSetup {
    /// Validates `W` (full column rank) and `X` (positive power).
    ///
    /// `sigma2 = 0` is accepted for noiseless runs; Fisher-information
    /// computations reject it.
    pub fn new(x: CMatrix, w: CMatrix, sigma2: f64) -> Result<Self> {
        if !(sigma2 >= 0.0 && sigma2.is_finite()) {
            return Err(Error::Config(format!("noise variance must be >= 0, got {sigma2}")));
        }
        if x.ncols() == 0 || x.nrows() == 0 {
            return Err(Error::DimensionMismatch("empty training matrix".into()));
        }
        if w.ncols() == 0 || w.nrows() == 0 {
            return Err(Error::DimensionMismatch("empty combiner matrix".into()));
        }
        let n_s = x.ncols();
        let gram_x = linalg::adjoint_mul(&x, &x);
        let alpha2 = gram_x.trace().re / n_s as f64;
        if !(alpha2 > 0.0) {
            return Err(Error::ZeroPilotPower);
        }
        let orth_err = linalg::frobenius(&(&gram_x - CMatrix::identity(n_s, n_s) * Complex64::from(alpha2)));
        let orthogonal = orth_err <= 1e-10 * alpha2 * n_s as f64;

        let combiner_projector = if w.ncols() > w.nrows() {
            return Err(Error::SingularCombiner);
        } else {
            let gram_w = linalg::adjoint_mul(&w, &w);
            let chol = Cholesky::new(gram_w.clone()).ok_or(Error::SingularCombiner)?;
            // Cholesky succeeds on numerically singular Grams; check conditioning too.
            let sv = gram_w.singular_values();
            let (lo, hi) = (sv.min(), sv.max());
            if !(lo > 1e-12 * hi) {
                return Err(Error::SingularCombiner);
            }
            if linalg::is_identity(&w) {
                None
            } else {
                let inv_wh = chol.solve(&w.adjoint());
                Some(linalg::mul(&w, &inv_wh))
            }
        };
        let pilot_projector = if linalg::is_identity(&x) {
            None
        } else {
            let xxh = linalg::mul(&x, &x.adjoint()) / Complex64::from(alpha2);
            Some(xxh)
        };
        Ok(Self {
            x,
            w,
            sigma2,
            factors: None,
            alpha2,
            orthogonal,
            combiner_projector,
            pilot_projector,
        })
    }

    /// `X = Id_{n_t}`, `W = Id_{n_r}`: every entry of `H` observed once.
    pub fn identity(n_r: usize, n_t: usize, sigma2: f64) -> Result<Self> {
        Self::new(linalg::identity(n_t), linalg::identity(n_r), sigma2)
    }

    /// Attaches the analog/digital factorization `X = V Z`.
    pub fn with_factors(mut self, v: CMatrix, z: CMatrix) -> Result<Self> {
        if v.ncols() != z.nrows() || v.nrows() != self.x.nrows() || z.ncols() != self.x.ncols() {
            return Err(Error::DimensionMismatch("X = V Z factor shapes".into()));
        }
        let err = linalg::frobenius(&(linalg::mul(&v, &z) - &self.x));
        if err > 1e-10 * linalg::frobenius(&self.x) {
            return Err(Error::DimensionMismatch(format!("V Z differs from X by {err:e}")));
        }
        self.factors = Some((v, z));
        Ok(self)
    }

    pub fn with_sigma2(&self, sigma2: f64) -> Result<Self> {
        if !(sigma2 >= 0.0 && sigma2.is_finite()) {
            return Err(Error::Config(format!("noise variance must be >= 0, got {sigma2}")));
        }
        let mut s = self.clone();
        s.sigma2 = sigma2;
        Ok(s)
    }

    pub fn x(&self) -> &CMatrix {
        &self.x
    }

    pub fn w(&self) -> &CMatrix {
        &self.w
    }

    pub fn factors(&self) -> Option<(&CMatrix, &CMatrix)> {
        self.factors.as_ref().map(|(v, z)| (v, z))
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    /// Average transmit power per time step, `Tr(Xᴴ X)/n_s`.
    pub fn alpha2(&self) -> f64 {
        self.alpha2
    }

    /// Whether `Xᴴ X = α² Id` (within `1e-10·α²·n_s`).
    pub fn has_orthogonal_pilots(&self) -> bool {
        self.orthogonal
    }

    pub fn n_t(&self) -> usize {
        self.x.nrows()
    }

    pub fn n_s(&self) -> usize {
        self.x.ncols()
    }

    pub fn n_r(&self) -> usize {
        self.w.nrows()
    }

    pub fn n_c(&self) -> usize {
        self.w.ncols()
    }

    /// True when both projector factors are identities, i.e. `P = Id`.
    pub fn is_full_observation(&self) -> bool {
        self.combiner_projector.is_none() && self.pilot_projector.is_none()
    }

    /// `P·vec(M)` computed as `vec(Π_W M X Xᴴ)/α²` without forming `P`.
    pub fn apply_projection(&self, v: &CVector) -> CVector {
        let m = linalg::unvec(v, self.n_r(), self.n_t());
        linalg::vec(&self.apply_projection_mat(&m))
    }

    /// Same as [`apply_projection`](Self::apply_projection) on the unvectorized form.
    pub fn apply_projection_mat(&self, m: &CMatrix) -> CMatrix {
        let left = match &self.combiner_projector {
            Some(pw) => linalg::mul(pw, m),
            None => m.clone(),
        };
        match &self.pilot_projector {
            Some(px) => linalg::mul(&left, px),
            None => left,
        }
    }

    /// Noiseless part of the observation, `Wᴴ H X`.
    pub fn observe_noiseless(&self, h: &CMatrix) -> CMatrix {
        linalg::mul(&linalg::adjoint_mul(&self.w, h), &self.x)
    }
}

/// Observed training block.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationData {
    pub y: CMatrix,
}

/// Draws `N` with `vec(N) ~ CN(0, σ² Id)` from `seed` and returns `Y`.
pub fn observe(h: &ChannelMatrix, s: &ObservationSetup, seed: u64) -> Result<ObservationData> {
    if h.n_r() != s.n_r() || h.n_t() != s.n_t() {
        return Err(Error::DimensionMismatch(format!(
            "channel is {}x{}, setup expects {}x{}",
            h.n_r(),
            h.n_t(),
            s.n_r(),
            s.n_t()
        )));
    }
    let mut y = s.observe_noiseless(&h.entries);
    if s.sigma2() > 0.0 {
        let noise = complex_gaussian(s.n_r(), s.n_s(), s.sigma2(), seed);
        y += linalg::adjoint_mul(s.w(), &noise);
    }
    Ok(ObservationData { y })
}

/// `rows × cols` matrix of i.i.d. `CN(0, σ²)` entries.
pub fn complex_gaussian(rows: usize, cols: usize, sigma2: f64, seed: u64) -> CMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sd = (sigma2 / 2.0).sqrt();
    CMatrix::from_fn(rows, cols, |_, _| {
        let re: f64 = StandardNormal.sample(&mut rng);
        let im: f64 = StandardNormal.sample(&mut rng);
        Complex64::new(sd * re, sd * im)
    })
}

/// Dense `P` together with whether it is an orthogonal projection.
#[derive(Debug, Clone)]
pub struct ProjectionMatrix {
    pub matrix: CMatrix,
    /// False when the pilots are not orthogonal; `P` is then computed
    /// from the same formula but is not idempotent.
    pub is_projection: bool,
}

/// `P = (1/α²) (X* Xᵀ) ⊗ (W (Wᴴ W)⁻¹ Wᴴ)`, materialized densely.
pub fn projection_matrix(s: &ObservationSetup) -> Result<ProjectionMatrix> {
    let dim = s.n_r() * s.n_t();
    if dim > DENSE_PROJECTION_LIMIT {
        return Err(Error::DenseTooLarge(dim));
    }
    if !s.has_orthogonal_pilots() {
        log::warn!("pilots are not orthogonal; P is not a projection");
    }
    let pw = s
        .combiner_projector
        .clone()
        .unwrap_or_else(|| linalg::identity(s.n_r()));
    let xx = linalg::mul(&s.x.map(|z| z.conj()), &s.x.transpose()) / Complex64::from(s.alpha2);
    Ok(ProjectionMatrix {
        matrix: linalg::kron(&xx, &pw),
        is_projection: s.has_orthogonal_pilots(),
    })
}

/// How a target SNR is turned into a noise variance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SnrReference {
    /// `SNR = α²‖h‖²/σ²`, the optimal SNR used by the CRB floor.
    #[default]
    Total,
    /// `SNR = α²‖h‖²/(n_r n_t σ²)`: per channel entry.
    PerEntry,
}

/// `α²‖h‖²/σ²`.
pub fn snr(s: &ObservationSetup, h: &CVector) -> Result<f64> {
    let energy = h.norm_squared();
    if energy == 0.0 {
        return Err(Error::ZeroChannel);
    }
    if s.sigma2() <= 0.0 {
        return Err(Error::ZeroNoise);
    }
    Ok(s.alpha2() * energy / s.sigma2())
}

/// Noise variance giving `α²‖h‖²/σ² = target_snr` (linear scale).
pub fn noise_for_snr(target_snr: f64, alpha2: f64, h: &CVector) -> Result<f64> {
    let energy = h.norm_squared();
    if energy == 0.0 {
        return Err(Error::ZeroChannel);
    }
    if !(target_snr > 0.0 && target_snr.is_finite()) {
        return Err(Error::Config(format!("target SNR must be > 0, got {target_snr}")));
    }
    Ok(alpha2 * energy / target_snr)
}

/// [`noise_for_snr`] under either SNR reference.
pub fn noise_for_snr_with(
    target_snr: f64,
    alpha2: f64,
    h: &CVector,
    reference: SnrReference,
) -> Result<f64> {
    let total = noise_for_snr(target_snr, alpha2, h)?;
    Ok(match reference {
        SnrReference::Total => total,
        SnrReference::PerEntry => total / h.len() as f64,
    })
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PilotKind {
    #[default]
    Identity,
    Orthogonal,
    Explicit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CombinerKind {
    #[default]
    Identity,
    Explicit,
}

/// JSON description of an observation setup.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservationSpec {
    #[serde(default)]
    pub pilots: PilotKind,
    /// Pilot count for `"orthogonal"` pilots (defaults to `n_t`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_s: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub basis: PilotBasis,
    /// Explicit `X`, rows of `[re, im]` pairs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x: Option<Vec<Vec<[f64; 2]>>>,
    #[serde(default)]
    pub combiners: CombinerKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w: Option<Vec<Vec<[f64; 2]>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_snr_db: Option<f64>,
    #[serde(default)]
    pub snr_reference: SnrReference,
}

impl ObservationSpec {
    /// Checks everything that does not need the channel.
    pub fn validate(&self, n_r: usize, n_t: usize) -> Result<()> {
        match (self.sigma2, self.target_snr_db) {
            (Some(_), Some(_)) => {
                return Err(Error::Config(
                    "observation: give either sigma2 or target_snr_db, not both".into(),
                ))
            }
            (None, None) => {
                return Err(Error::Config(
                    "observation: one of sigma2 or target_snr_db is required".into(),
                ))
            }
            (Some(s), None) if !(s >= 0.0 && s.is_finite()) => {
                return Err(Error::Config(format!("observation: invalid sigma2 {s}")))
            }
            (None, Some(db)) if !db.is_finite() => {
                return Err(Error::Config("observation: invalid target_snr_db".into()))
            }
            _ => {}
        }
        // Build with a placeholder noise level to validate the matrices.
        self.matrices(n_r, n_t)
            .and_then(|(x, w)| ObservationSetup::new(x, w, 0.0))
            .map(|_| ())
            .map_err(|e| Error::Config(format!("observation: {e}")))
    }

    fn matrices(&self, n_r: usize, n_t: usize) -> Result<(CMatrix, CMatrix)> {
        let alpha = self.alpha.unwrap_or(1.0);
        let x = match self.pilots {
            PilotKind::Identity => orthogonal_pilots(n_t, n_t, alpha, PilotBasis::Identity)?,
            PilotKind::Orthogonal => {
                orthogonal_pilots(n_t, self.n_s.unwrap_or(n_t), alpha, self.basis)?
            }
            PilotKind::Explicit => {
                let rows = self
                    .x
                    .as_ref()
                    .ok_or_else(|| Error::Config("explicit pilots need an `x` matrix".into()))?;
                let x = linalg::from_nested(rows)
                    .ok_or_else(|| Error::Config("ragged `x` matrix".into()))?;
                if x.nrows() != n_t {
                    return Err(Error::DimensionMismatch(format!(
                        "x has {} rows, expected n_t = {n_t}",
                        x.nrows()
                    )));
                }
                x
            }
        };
        let w = match self.combiners {
            CombinerKind::Identity => linalg::identity(n_r),
            CombinerKind::Explicit => {
                let rows = self
                    .w
                    .as_ref()
                    .ok_or_else(|| Error::Config("explicit combiners need a `w` matrix".into()))?;
                let w = linalg::from_nested(rows)
                    .ok_or_else(|| Error::Config("ragged `w` matrix".into()))?;
                if w.nrows() != n_r {
                    return Err(Error::DimensionMismatch(format!(
                        "w has {} rows, expected n_r = {n_r}",
                        w.nrows()
                    )));
                }
                w
            }
        };
        Ok((x, w))
    }

    /// Builds the setup; `h` is needed when the noise is given as a target SNR.
    pub fn build(&self, n_r: usize, n_t: usize, h: Option<&CVector>) -> Result<ObservationSetup> {
        let (x, w) = self.matrices(n_r, n_t)?;
        let setup = ObservationSetup::new(x, w, 0.0)?;
        let sigma2 = match (self.sigma2, self.target_snr_db) {
            (Some(s), None) => s,
            (None, Some(db)) => {
                let h = h.ok_or_else(|| {
                    Error::Config("target_snr_db needs the channel to set sigma2".into())
                })?;
                noise_for_snr_with(db_to_linear(db), setup.alpha2(), h, self.snr_reference)?
            }
            _ => {
                return Err(Error::Config(
                    "observation: exactly one of sigma2 or target_snr_db is required".into(),
                ))
            }
        };
        setup.with_sigma2(sigma2)
    }
}
