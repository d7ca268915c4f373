//! Fisher information and Cramér-Rao bounds for the sparse channel model.
//!
//! Parameters are ordered per path as `(ρ, φ, η_r, ψ_r, η_t, ψ_t)`. The
//! azimuth coordinates are measured along the unit azimuth tangent (local
//! arc length), which is what makes the closed-form intra-path block exact.
//! Traces of the bound are invariant to that per-parameter scaling.

use nalgebra::{Cholesky, Matrix2, Matrix6, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::{atomic_vectorized, PathParams, PathSet};
use crate::error::{Error, Result};
use crate::geometry::{ArrayGeometry, Direction, Vec3};
use crate::linalg::{self, CMatrix, CVector, RMatrix, J};
use crate::observation::{snr, ObservationSetup};

pub const PARAMS_PER_PATH: usize = 6;

/// Default condition-number threshold above which a FIM is flagged.
pub const DEFAULT_CONDITION_THRESHOLD: f64 = 1e12;

/// Position of a parameter inside a path's 6-tuple.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Param {
    Rho = 0,
    Phi = 1,
    DoaAzimuth = 2,
    DoaElevation = 3,
    DodAzimuth = 4,
    DodElevation = 5,
}

impl Param {
    pub const ALL: [Param; 6] = [
        Param::Rho,
        Param::Phi,
        Param::DoaAzimuth,
        Param::DoaElevation,
        Param::DodAzimuth,
        Param::DodElevation,
    ];
}

/// Flat real parameter vector of length `6P`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector(pub Vec<f64>);

impl ParamVector {
    pub fn from_path_set(ps: &PathSet) -> Self {
        Self(
            ps.iter()
                .flat_map(|p| {
                    [
                        p.rho,
                        p.phi,
                        p.doa.azimuth,
                        p.doa.elevation,
                        p.dod.azimuth,
                        p.dod.elevation,
                    ]
                })
                .collect(),
        )
    }

    pub fn to_path_set(&self) -> Result<PathSet> {
        if self.0.is_empty() || self.0.len() % PARAMS_PER_PATH != 0 {
            return Err(Error::InvalidPath(format!(
                "parameter vector length {} is not a positive multiple of 6",
                self.0.len()
            )));
        }
        let paths = self
            .0
            .chunks(PARAMS_PER_PATH)
            .map(|c| {
                PathParams::new(
                    c[0],
                    c[1],
                    Direction::new(c[2], c[3])?,
                    Direction::new(c[4], c[5])?,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        PathSet::new(paths)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// `D = ∂h/∂θ`, `n_r n_t × 6P`; column `6p + k` is parameter `k` of path `p`.
#[derive(Debug, Clone)]
pub struct JacobianMatrix {
    pub d: CMatrix,
    n_r: usize,
    n_t: usize,
}

impl JacobianMatrix {
    pub fn n_paths(&self) -> usize {
        self.d.ncols() / PARAMS_PER_PATH
    }

    pub fn n_params(&self) -> usize {
        self.d.ncols()
    }

    pub fn n_r(&self) -> usize {
        self.n_r
    }

    pub fn n_t(&self) -> usize {
        self.n_t
    }

    pub fn column(&self, path: usize, param: Param) -> CVector {
        self.d.column(path * PARAMS_PER_PATH + param as usize).into_owned()
    }
}

/// Analytic Jacobian of `h = vec(H)` with respect to all path parameters.
pub fn channel_jacobian(ps: &PathSet, g_r: &ArrayGeometry, g_t: &ArrayGeometry) -> JacobianMatrix {
    let (n_r, n_t) = (g_r.n_antennas(), g_t.n_antennas());
    let mut d = CMatrix::zeros(n_r * n_t, PARAMS_PER_PATH * ps.len());
    for (p, path) in ps.iter().enumerate() {
        let h_p = atomic_vectorized(path, g_r, g_t);
        let (v_eta_r, v_psi_r) = path.doa.tangent_basis();
        let (v_eta_t, v_psi_t) = path.dod.tangent_basis();
        let w_eta_r = g_r.project(&v_eta_r);
        let w_psi_r = g_r.project(&v_psi_r);
        let w_eta_t = g_t.project(&v_eta_t);
        let w_psi_t = g_t.project(&v_psi_t);
        let base = p * PARAMS_PER_PATH;
        let inv_rho = 1.0 / path.rho;
        for k in 0..n_r * n_t {
            let (i, j) = (k % n_r, k / n_r);
            let hk = h_p[k];
            d[(k, base)] = hk * inv_rho;
            d[(k, base + 1)] = J * hk;
            // Id ⊗ diag(-j A_rᵀ v): receive index i varies fastest
            d[(k, base + 2)] = -J * hk * w_eta_r[i];
            d[(k, base + 3)] = -J * hk * w_psi_r[i];
            // diag(j A_tᵀ v) ⊗ Id: transmit index j is the block index
            d[(k, base + 4)] = J * hk * w_eta_t[j];
            d[(k, base + 5)] = J * hk * w_psi_t[j];
        }
    }
    JacobianMatrix { d, n_r, n_t }
}

/// Real symmetric `6P × 6P` Fisher information matrix.
#[derive(Debug, Clone)]
pub struct FisherMatrix {
    pub matrix: RMatrix,
}

impl FisherMatrix {
    pub fn n_paths(&self) -> usize {
        self.matrix.nrows() / PARAMS_PER_PATH
    }

    /// Block `I^(p,q)` of couplings between paths `p` and `q`.
    pub fn block(&self, p: usize, q: usize) -> Matrix6<f64> {
        let b = self
            .matrix
            .view((p * PARAMS_PER_PATH, q * PARAMS_PER_PATH), (6, 6));
        Matrix6::from_fn(|i, j| b[(i, j)])
    }

    /// Frobenius mass of the inter-path blocks relative to the whole matrix.
    pub fn inter_path_mass(&self) -> f64 {
        let total = self.matrix.norm();
        if total == 0.0 {
            return 0.0;
        }
        let mut off = 0.0;
        for p in 0..self.n_paths() {
            for q in 0..self.n_paths() {
                if p != q {
                    off += self.block(p, q).norm_squared();
                }
            }
        }
        off.sqrt() / total
    }

    /// `(λ_min, λ_max)` of the symmetric matrix.
    pub fn eigen_range(&self) -> (f64, f64) {
        let eig = SymmetricEigen::new(self.matrix.clone());
        let lo = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }

    /// `λ_max/λ_min`, infinite when `λ_min ≤ 0`.
    pub fn condition_number(&self) -> f64 {
        let (lo, hi) = self.eigen_range();
        if lo <= 0.0 {
            f64::INFINITY
        } else {
            hi / lo
        }
    }
}

/// `P D` column by column through the factored projector.
fn project_columns(d: &JacobianMatrix, s: &ObservationSetup) -> CMatrix {
    if s.is_full_observation() {
        return d.d.clone();
    }
    let mut out = CMatrix::zeros(d.d.nrows(), d.d.ncols());
    for c in 0..d.d.ncols() {
        let col = d.d.column(c).into_owned();
        out.set_column(c, &s.apply_projection(&col));
    }
    out
}

/// `I(θ) = (2α²/σ²) Re{Dᴴ P D}`.
pub fn fisher_matrix(d: &JacobianMatrix, s: &ObservationSetup) -> Result<FisherMatrix> {
    if s.sigma2() <= 0.0 {
        return Err(Error::ZeroNoise);
    }
    if d.n_r() != s.n_r() || d.n_t() != s.n_t() {
        return Err(Error::DimensionMismatch(format!(
            "jacobian built for {}x{} arrays, setup is {}x{}",
            d.n_r(),
            d.n_t(),
            s.n_r(),
            s.n_t()
        )));
    }
    let pd = project_columns(d, s);
    let gram = linalg::adjoint_mul(&d.d, &pd);
    let scale = 2.0 * s.alpha2() / s.sigma2();
    let n = gram.nrows();
    let matrix = RMatrix::from_fn(n, n, |i, j| {
        scale * 0.5 * (gram[(i, j)].re + gram[(j, i)].re)
    });
    Ok(FisherMatrix { matrix })
}

/// `B_x = (1/n) [v_ηᵀ A Aᵀ v_η, v_ηᵀ A Aᵀ v_ψ; ·, v_ψᵀ A Aᵀ v_ψ]`.
pub fn direction_block(g: &ArrayGeometry, d: &Direction) -> Matrix2<f64> {
    let (v_eta, v_psi) = d.tangent_basis();
    let aat = g.second_moment();
    let q = |a: &Vec3, b: &Vec3| a.dot(&(aat * b));
    let n = g.n_antennas() as f64;
    Matrix2::new(
        q(&v_eta, &v_eta),
        q(&v_eta, &v_psi),
        q(&v_psi, &v_eta),
        q(&v_psi, &v_psi),
    ) / n
}

/// Closed-form `I^(p,p)` under optimal observation:
/// `(2ρ²α²/σ²) blockdiag(1/ρ², 1, B_r, B_t)`.
pub fn intra_path_block(
    p: &PathParams,
    g_r: &ArrayGeometry,
    g_t: &ArrayGeometry,
    alpha2: f64,
    sigma2: f64,
) -> Matrix6<f64> {
    let scale = 2.0 * p.rho * p.rho * alpha2 / sigma2;
    let b_r = direction_block(g_r, &p.doa);
    let b_t = direction_block(g_t, &p.dod);
    let mut m = Matrix6::zeros();
    m[(0, 0)] = 1.0 / (p.rho * p.rho);
    m[(1, 1)] = 1.0;
    m.fixed_view_mut::<2, 2>(2, 2).copy_from(&b_r);
    m.fixed_view_mut::<2, 2>(4, 4).copy_from(&b_t);
    m * scale
}

/// Relative variance bound and the conditioning it was computed under.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrbResult {
    /// `Tr(D I⁻¹ Dᴴ)/‖h‖²`, or its pseudo-inverse value when ill-conditioned.
    pub relative: f64,
    pub condition_number: f64,
    pub ill_conditioned: bool,
}

pub fn crb_trace(d: &JacobianMatrix, fim: &FisherMatrix, h: &CVector) -> Result<CrbResult> {
    crb_trace_with_threshold(d, fim, h, DEFAULT_CONDITION_THRESHOLD)
}

/// [`crb_trace`] with an explicit ill-conditioning threshold.
///
/// `Tr(D I⁻¹ Dᴴ) = Tr(I⁻¹ Re{Dᴴ D})` because `I⁻¹` is real symmetric and the
/// imaginary part of `Dᴴ D` is antisymmetric.
pub fn crb_trace_with_threshold(
    d: &JacobianMatrix,
    fim: &FisherMatrix,
    h: &CVector,
    threshold: f64,
) -> Result<CrbResult> {
    let energy = h.norm_squared();
    if energy == 0.0 {
        return Err(Error::ZeroChannel);
    }
    let n = fim.matrix.nrows();
    if d.d.ncols() != n {
        return Err(Error::DimensionMismatch("jacobian and FIM sizes differ".into()));
    }
    let dhd = linalg::adjoint_mul(&d.d, &d.d);
    let gram = RMatrix::from_fn(n, n, |i, j| 0.5 * (dhd[(i, j)].re + dhd[(j, i)].re));

    let eig = SymmetricEigen::new(fim.matrix.clone());
    let lo = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let condition_number = if lo <= 0.0 { f64::INFINITY } else { hi / lo };
    let ill_conditioned = !(condition_number <= threshold);

    if !ill_conditioned {
        // Jacobi equilibration before the Cholesky solve.
        let scale: Vec<f64> = (0..n).map(|i| 1.0 / fim.matrix[(i, i)].sqrt()).collect();
        let scaled = RMatrix::from_fn(n, n, |i, j| fim.matrix[(i, j)] * scale[i] * scale[j]);
        let rhs = RMatrix::from_fn(n, n, |i, j| gram[(i, j)] * scale[i] * scale[j]);
        if let Some(chol) = Cholesky::new(scaled) {
            let z = chol.solve(&rhs);
            return Ok(CrbResult {
                relative: z.trace() / energy,
                condition_number,
                ill_conditioned,
            });
        }
    }
    // Pseudo-inverse over the numerically supported eigenspace.
    let cutoff = hi.max(0.0) / threshold;
    let mut trace = 0.0;
    for (k, lambda) in eig.eigenvalues.iter().enumerate() {
        if *lambda > cutoff {
            let v = eig.eigenvectors.column(k);
            trace += v.dot(&(&gram * v)) / lambda;
        }
    }
    Ok(CrbResult {
        relative: trace / energy,
        condition_number,
        ill_conditioned: true,
    })
}

/// `3P/SNR`, the floor reached under optimal observation.
pub fn optimal_bound(n_paths: usize, snr: f64) -> f64 {
    3.0 * n_paths as f64 / snr
}

/// `‖(Id − P) D‖_F / ‖D‖_F`; zero iff `im(D) ⊂ im(P)`.
pub fn check_optimal_observation(d: &JacobianMatrix, s: &ObservationSetup) -> f64 {
    let norm = linalg::frobenius(&d.d);
    if norm == 0.0 {
        return 0.0;
    }
    let pd = project_columns(d, s);
    linalg::frobenius(&(&d.d - pd)) / norm
}

/// Residual below which observation is certified optimal.
pub const OPTIMAL_OBSERVATION_TOL: f64 = 1e-10;

/// Full CRB analysis of a parameter point, as emitted by `mimo-lab crb`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrbReport {
    pub n_p: usize,
    pub snr: f64,
    pub snr_db: f64,
    pub crb_relative: f64,
    pub floor_3p_over_snr: f64,
    /// `null` in JSON when the FIM is singular.
    pub condition_number: Option<f64>,
    pub ill_conditioned: bool,
    pub optimal_observation_residual: f64,
    pub optimal_observation: bool,
    pub inter_path_coupling_mass: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_path_blocks: Option<Vec<[[f64; 6]; 6]>>,
}

pub fn crb_report(
    ps: &PathSet,
    g_r: &ArrayGeometry,
    g_t: &ArrayGeometry,
    s: &ObservationSetup,
    threshold: f64,
    include_blocks: bool,
) -> Result<CrbReport> {
    let d = channel_jacobian(ps, g_r, g_t);
    let fim = fisher_matrix(&d, s)?;
    let h = {
        let mut h = CVector::zeros(g_r.n_antennas() * g_t.n_antennas());
        for p in ps.iter() {
            h += atomic_vectorized(p, g_r, g_t);
        }
        h
    };
    let crb = crb_trace_with_threshold(&d, &fim, &h, threshold)?;
    let snr = snr(s, &h)?;
    let residual = check_optimal_observation(&d, s);
    let per_path_blocks = include_blocks.then(|| {
        (0..ps.len())
            .map(|p| {
                let b = fim.block(p, p);
                let mut out = [[0.0; 6]; 6];
                for (i, row) in out.iter_mut().enumerate() {
                    for (j, v) in row.iter_mut().enumerate() {
                        *v = b[(i, j)];
                    }
                }
                out
            })
            .collect()
    });
    Ok(CrbReport {
        n_p: PARAMS_PER_PATH * ps.len(),
        snr,
        snr_db: crate::observation::linear_to_db(snr),
        crb_relative: crb.relative,
        floor_3p_over_snr: optimal_bound(ps.len(), snr),
        condition_number: crb.condition_number.is_finite().then_some(crb.condition_number),
        ill_conditioned: crb.ill_conditioned,
        optimal_observation_residual: residual,
        optimal_observation: residual <= OPTIMAL_OBSERVATION_TOL,
        inter_path_coupling_mass: fim.inter_path_mass(),
        per_path_blocks,
    })
}

/// Merges paths sharing (numerically) the same DoA and DoD into one virtual
/// path with the summed complex gain. Paths whose gains cancel are dropped.
pub fn merge_coincident_paths(ps: &PathSet, angle_tol: f64) -> Result<PathSet> {
    let mut merged: Vec<(Complex64, Direction, Direction)> = Vec::new();
    for p in ps.iter() {
        match merged
            .iter_mut()
            .find(|(_, doa, dod)| doa.angle_to(&p.doa) <= angle_tol && dod.angle_to(&p.dod) <= angle_tol)
        {
            Some(entry) => entry.0 += p.gain(),
            None => merged.push((p.gain(), p.doa, p.dod)),
        }
    }
    let paths = merged
        .into_iter()
        .filter(|(c, _, _)| c.norm() > 0.0)
        .map(|(c, doa, dod)| PathParams::from_gain(c, doa, dod))
        .collect::<Result<Vec<_>>>()?;
    PathSet::new(paths)
}
