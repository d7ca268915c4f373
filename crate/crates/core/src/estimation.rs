//! Greedy on-grid channel estimation.
//!
//! Both strategies plug into plain Matching Pursuit: select a DoA/DoD pair,
//! estimate its complex gain by least squares, subtract the observed atom
//! from the residual, repeat.
//!
//! * joint: `argmax_{i,j} |k_{r,i}ᴴ R k_{t,j}|`, `m·n` scores per iteration;
//! * sequential: DoA from `diag(K_rᴴ R Rᴴ K_r)`, then DoD from
//!   `|k_{r,î}ᴴ R K_t|`, `m + n` scores per iteration.

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::{steering_vector, ChannelMatrix, PathParams, PathSet};
use crate::error::{Error, Result};
use crate::geometry::{ArrayGeometry, Axis, Direction};
use crate::linalg::{self, CMatrix, CVector};
use crate::observation::ObservationSetup;

/// Transmit-dictionary columns scored per GEMM call in [`joint_select`].
const JOINT_CHUNK: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Joint,
    Sequential,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Joint => "joint",
            Strategy::Sequential => "sequential",
        }
    }

    /// Score evaluations per selection on an `m × n` grid.
    pub fn evaluations_per_iteration(self, m: usize, n: usize) -> u64 {
        match self {
            Strategy::Joint => (m * n) as u64,
            Strategy::Sequential => (m + n) as u64,
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "joint" => Ok(Strategy::Joint),
            "sequential" => Ok(Strategy::Sequential),
            other => Err(Error::Config(format!("unknown strategy `{other}`"))),
        }
    }
}

/// Test directions on each side.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionGrid {
    doas: Vec<Direction>,
    dods: Vec<Direction>,
}

impl DirectionGrid {
    pub fn new(doas: Vec<Direction>, dods: Vec<Direction>) -> Result<Self> {
        if doas.is_empty() || dods.is_empty() {
            return Err(Error::InvalidGrid("grids need at least one direction".into()));
        }
        check_distinct(&doas, "DoA")?;
        check_distinct(&dods, "DoD")?;
        Ok(Self { doas, dods })
    }

    /// Uniform `m`- and `n`-point grids over each array's front hemisphere.
    pub fn front_hemisphere(m: usize, n: usize, rx_broadside: Axis, tx_broadside: Axis) -> Result<Self> {
        Self::new(hemisphere_grid(m, rx_broadside)?, hemisphere_grid(n, tx_broadside)?)
    }

    pub fn doas(&self) -> &[Direction] {
        &self.doas
    }

    pub fn dods(&self) -> &[Direction] {
        &self.dods
    }

    pub fn m(&self) -> usize {
        self.doas.len()
    }

    pub fn n(&self) -> usize {
        self.dods.len()
    }
}

fn check_distinct(dirs: &[Direction], side: &str) -> Result<()> {
    let units: Vec<_> = dirs.iter().map(Direction::unit_vector).collect();
    for (a, ua) in units.iter().enumerate() {
        for ub in &units[a + 1..] {
            if (ua - ub).norm() <= 1e-12 {
                return Err(Error::InvalidGrid(format!("duplicate {side} direction in grid")));
            }
        }
    }
    Ok(())
}

/// Near-square `(n_az, n_el)` factorization of `count`, with `n_az ≥ n_el`.
pub fn grid_dims(count: usize) -> (usize, usize) {
    let mut n_el = (count as f64).sqrt().floor() as usize;
    while n_el > 1 && count % n_el != 0 {
        n_el -= 1;
    }
    let n_el = n_el.max(1);
    (count / n_el, n_el)
}

/// Cell-centred azimuth × elevation grid of `count` points in front of an
/// array with the given broadside axis.
pub fn hemisphere_grid(count: usize, broadside: Axis) -> Result<Vec<Direction>> {
    if count == 0 {
        return Err(Error::InvalidGrid("grid size must be positive".into()));
    }
    let (n_az, n_el) = grid_dims(count);
    hemisphere_grid_dims(n_az, n_el, broadside)
}

pub fn hemisphere_grid_dims(n_az: usize, n_el: usize, broadside: Axis) -> Result<Vec<Direction>> {
    if n_az == 0 || n_el == 0 {
        return Err(Error::InvalidGrid("grid dimensions must be positive".into()));
    }
    let (az_range, el_range) = match broadside {
        Axis::X => ((-FRAC_PI_2, FRAC_PI_2), (-FRAC_PI_2, FRAC_PI_2)),
        Axis::Y => ((0.0, PI), (-FRAC_PI_2, FRAC_PI_2)),
        Axis::Z => ((-PI, PI), (0.0, FRAC_PI_2)),
    };
    let centre = |(lo, hi): (f64, f64), k: usize, count: usize| {
        lo + (hi - lo) * (k as f64 + 0.5) / count as f64
    };
    let mut out = Vec::with_capacity(n_az * n_el);
    for ia in 0..n_az {
        for ie in 0..n_el {
            out.push(Direction::new(centre(az_range, ia, n_az), centre(el_range, ie, n_el))?);
        }
    }
    Ok(out)
}

/// Normalized observed atoms for every surviving grid direction.
#[derive(Debug, Clone)]
pub struct Dictionary {
    /// `n_c × m'`, columns `Wᴴ e_r(u_i)/‖Wᴴ e_r(u_i)‖`.
    pub k_r: CMatrix,
    /// `n_s × n'`, columns `Xᴴ e_t(v_j)/‖Xᴴ e_t(v_j)‖`.
    pub k_t: CMatrix,
    /// Raw steering vectors, used to rebuild the channel estimate.
    e_r: CMatrix,
    e_t: CMatrix,
    r_norms: Vec<f64>,
    t_norms: Vec<f64>,
    doas: Vec<Direction>,
    dods: Vec<Direction>,
    doa_index: Vec<usize>,
    dod_index: Vec<usize>,
}

impl Dictionary {
    pub fn m(&self) -> usize {
        self.k_r.ncols()
    }

    pub fn n(&self) -> usize {
        self.k_t.ncols()
    }

    pub fn doa(&self, col: usize) -> Direction {
        self.doas[col]
    }

    pub fn dod(&self, col: usize) -> Direction {
        self.dods[col]
    }

    /// Grid indices of a dictionary column pair.
    pub fn grid_pair(&self, sel: Selection) -> (usize, usize) {
        (self.doa_index[sel.doa], self.dod_index[sel.dod])
    }

    /// Column of `K_r` holding a given grid DoA, if it survived.
    pub fn doa_column(&self, grid_index: usize) -> Option<usize> {
        self.doa_index.iter().position(|&g| g == grid_index)
    }

    pub fn dod_column(&self, grid_index: usize) -> Option<usize> {
        self.dod_index.iter().position(|&g| g == grid_index)
    }
}

/// Builds `K_r`, `K_t`; directions annihilated by `W` or `X` are dropped.
pub fn build_dictionaries(
    grid: &DirectionGrid,
    s: &ObservationSetup,
    g_r: &ArrayGeometry,
    g_t: &ArrayGeometry,
) -> Result<Dictionary> {
    if g_r.n_antennas() != s.n_r() || g_t.n_antennas() != s.n_t() {
        return Err(Error::DimensionMismatch("arrays do not match the observation setup".into()));
    }
    let side = |dirs: &[Direction], g: &ArrayGeometry, m: &CMatrix, name: &str| -> Result<_> {
        let raw = CMatrix::from_columns(
            &dirs.iter().map(|d| steering_vector(g, d)).collect::<Vec<_>>(),
        );
        let observed = linalg::adjoint_mul(m, &raw);
        let mut keep = Vec::new();
        let mut norms = Vec::new();
        for (i, col) in observed.column_iter().enumerate() {
            let n = col.norm();
            if n > 1e-12 {
                keep.push(i);
                norms.push(n);
            } else {
                log::warn!("{name} grid direction {i} is annihilated by the observation; dropped");
            }
        }
        if keep.is_empty() {
            return Err(Error::InvalidGrid(format!("every {name} direction is annihilated")));
        }
        let k = CMatrix::from_fn(observed.nrows(), keep.len(), |r, c| {
            observed[(r, keep[c])] / norms[c]
        });
        let e = raw.select_columns(keep.iter());
        let kept_dirs = keep.iter().map(|&i| dirs[i]).collect::<Vec<_>>();
        Ok((k, e, norms, kept_dirs, keep))
    };
    let (k_r, e_r, r_norms, doas, doa_index) = side(grid.doas(), g_r, s.w(), "DoA")?;
    let (k_t, e_t, t_norms, dods, dod_index) = side(grid.dods(), g_t, s.x(), "DoD")?;
    Ok(Dictionary {
        k_r,
        k_t,
        e_r,
        e_t,
        r_norms,
        t_norms,
        doas,
        dods,
        doa_index,
        dod_index,
    })
}

/// Selected dictionary columns and how many candidates were scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Selection {
    pub doa: usize,
    pub dod: usize,
    pub score_evaluations: u64,
}

fn check_observation(y: &CMatrix, dict: &Dictionary) -> Result<()> {
    if y.nrows() != dict.k_r.nrows() || y.ncols() != dict.k_t.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "observation is {}x{}, dictionary expects {}x{}",
            y.nrows(),
            y.ncols(),
            dict.k_r.nrows(),
            dict.k_t.nrows()
        )));
    }
    Ok(())
}

/// Exhaustive `argmax_{i,j} |k_{r,i}ᴴ Y k_{t,j}|`, ties to the smallest `(i, j)`.
pub fn joint_select(y: &CMatrix, dict: &Dictionary) -> Result<Selection> {
    check_observation(y, dict)?;
    let g = linalg::adjoint_mul(&dict.k_r, y);
    let (m, n, n_s) = (dict.m(), dict.n(), dict.k_t.nrows());
    let mut best = (f64::NEG_INFINITY, 0usize, 0usize);
    let data = dict.k_t.as_slice();
    let mut j0 = 0;
    while j0 < n {
        let width = JOINT_CHUNK.min(n - j0);
        let block = &data[j0 * n_s..(j0 + width) * n_s];
        let scores = linalg::gemm_slices(g.as_slice(), m, n_s, false, block, n_s, width);
        for jj in 0..width {
            let j = j0 + jj;
            for i in 0..m {
                let v = scores[(i, jj)].norm_sqr();
                if v > best.0 || (v == best.0 && i < best.1) {
                    best = (v, i, j);
                }
            }
        }
        j0 += width;
    }
    Ok(Selection {
        doa: best.1,
        dod: best.2,
        score_evaluations: Strategy::Joint.evaluations_per_iteration(m, n),
    })
}

/// Index of the largest value; ties to the smallest index.
fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (f64::NEG_INFINITY, 0);
    for (i, v) in values.enumerate() {
        if v > best.0 {
            best = (v, i);
        }
    }
    best.1
}

/// Stage-1 DoA scores `diag(K_rᴴ Y Yᴴ K_r)`.
pub fn doa_marginal_scores(y: &CMatrix, dict: &Dictionary) -> Result<Vec<f64>> {
    check_observation(y, dict)?;
    let g = linalg::adjoint_mul(&dict.k_r, y);
    Ok(row_energies(&g))
}

fn row_energies(g: &CMatrix) -> Vec<f64> {
    let mut e = vec![0.0; g.nrows()];
    for col in g.column_iter() {
        for (acc, z) in e.iter_mut().zip(col.iter()) {
            *acc += z.norm_sqr();
        }
    }
    e
}

/// DoA by its marginal criterion, then DoD by the joint criterion at that DoA.
pub fn sequential_select(y: &CMatrix, dict: &Dictionary) -> Result<Selection> {
    check_observation(y, dict)?;
    let g = linalg::adjoint_mul(&dict.k_r, y);
    let doa = argmax(row_energies(&g).into_iter());
    // k_{r,î}ᴴ Y is row î of K_rᴴ Y.
    let row = CMatrix::from_fn(g.ncols(), 1, |k, _| g[(doa, k)].conj());
    let scores = linalg::adjoint_mul(&row, &dict.k_t);
    let dod = argmax(scores.iter().map(|z| z.norm_sqr()));
    Ok(Selection {
        doa,
        dod,
        score_evaluations: Strategy::Sequential.evaluations_per_iteration(dict.m(), dict.n()),
    })
}

pub fn select(y: &CMatrix, dict: &Dictionary, strategy: Strategy) -> Result<Selection> {
    match strategy {
        Strategy::Joint => joint_select(y, dict),
        Strategy::Sequential => sequential_select(y, dict),
    }
}

/// Least-squares gain of the observed rank-1 atom.
///
/// With `a_r = Wᴴ e_r(doa)` and `b = Xᴴ e_t(dod)`, a noiseless single path
/// observes `Y = c a_r bᴴ`; `c = a_rᴴ Y b / (‖a_r‖² ‖b‖²)` minimizes
/// `‖Y − c a_r bᴴ‖_F`.
pub fn estimate_gain(
    y: &CMatrix,
    s: &ObservationSetup,
    doa: &Direction,
    dod: &Direction,
    g_r: &ArrayGeometry,
    g_t: &ArrayGeometry,
) -> Result<Complex64> {
    let a_r = s.w().adjoint() * steering_vector(g_r, doa);
    let b = s.x().adjoint() * steering_vector(g_t, dod);
    let (nr, nb) = (a_r.norm_squared(), b.norm_squared());
    if nr <= 1e-24 || nb <= 1e-24 {
        return Err(Error::ZeroAtom);
    }
    if y.nrows() != a_r.len() || y.ncols() != b.len() {
        return Err(Error::DimensionMismatch("observation does not match the setup".into()));
    }
    Ok(a_r.dotc(&(y * b)) / (nr * nb))
}

/// One greedy iteration's output.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatedAtom {
    pub doa: Direction,
    pub dod: Direction,
    pub doa_grid_index: usize,
    pub dod_grid_index: usize,
    pub gain: Complex64,
}

#[derive(Debug, Clone)]
pub struct EstimationReport {
    pub strategy: Strategy,
    pub atoms: Vec<EstimatedAtom>,
    pub estimate: ChannelMatrix,
    /// `‖H − Ĥ‖²/‖H‖²`, when the true channel was supplied.
    pub rmse: Option<f64>,
    pub wall_time_seconds: f64,
    pub score_evaluations: u64,
    /// Frobenius norm of the residual before the first and after each iteration.
    pub residual_norms: Vec<f64>,
}

/// Machine-readable summary row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationRow {
    pub strategy: Strategy,
    #[serde(rename = "P")]
    pub p: usize,
    pub rmse: Option<f64>,
    pub wall_time_s: f64,
    pub score_evals: u64,
}

impl EstimationReport {
    /// Estimated paths; atoms with an exactly zero gain are left out.
    pub fn estimated_paths(&self) -> Result<PathSet> {
        let paths = self
            .atoms
            .iter()
            .filter(|a| a.gain.norm() > 0.0)
            .map(|a| PathParams::from_gain(a.gain, a.doa, a.dod))
            .collect::<Result<Vec<_>>>()?;
        PathSet::new(paths)
    }

    pub fn row(&self) -> EstimationRow {
        EstimationRow {
            strategy: self.strategy,
            p: self.atoms.len(),
            rmse: self.rmse,
            wall_time_s: self.wall_time_seconds,
            score_evals: self.score_evaluations,
        }
    }
}

/// Relative squared error `‖H − Ĥ‖²_F / ‖H‖²_F`.
pub fn relative_mse(truth: &ChannelMatrix, estimate: &ChannelMatrix) -> Result<f64> {
    let energy = truth.frobenius_sq();
    if energy == 0.0 {
        return Err(Error::ZeroChannel);
    }
    Ok(linalg::frobenius_sq(&(&truth.entries - &estimate.entries)) / energy)
}

/// Matching Pursuit with `budget` iterations over a pre-built dictionary.
///
/// Only the greedy loop and the channel reconstruction are timed.
pub fn matching_pursuit(
    y: &CMatrix,
    dict: &Dictionary,
    budget: usize,
    strategy: Strategy,
    truth: Option<&ChannelMatrix>,
) -> Result<EstimationReport> {
    if budget == 0 {
        return Err(Error::Config("path budget must be at least 1".into()));
    }
    check_observation(y, dict)?;
    let clock = crate::clock::Stopwatch::start();
    let mut residual = y.clone();
    let mut atoms = Vec::with_capacity(budget);
    let mut evaluations = 0u64;
    let mut residual_norms = vec![linalg::frobenius(&residual)];
    for _ in 0..budget {
        let sel = select(&residual, dict, strategy)?;
        evaluations += sel.score_evaluations;
        let k_r = dict.k_r.column(sel.doa);
        let k_t = dict.k_t.column(sel.dod);
        // k_rᴴ R k_t; the gain divides by the atom norms.
        let projected = k_r.dotc(&(&residual * k_t));
        let scale = dict.r_norms[sel.doa] * dict.t_norms[sel.dod];
        let gain = projected / scale;
        residual -= (k_r * projected) * k_t.adjoint();
        residual_norms.push(linalg::frobenius(&residual));
        let (doa_grid_index, dod_grid_index) = dict.grid_pair(sel);
        atoms.push(EstimatedAtom {
            doa: dict.doa(sel.doa),
            dod: dict.dod(sel.dod),
            doa_grid_index,
            dod_grid_index,
            gain,
        });
    }
    let estimate = reconstruct(dict, &atoms);
    let wall_time_seconds = clock.elapsed_seconds();
    let rmse = truth.map(|h| relative_mse(h, &estimate)).transpose()?;
    Ok(EstimationReport {
        strategy,
        atoms,
        estimate,
        rmse,
        wall_time_seconds,
        score_evaluations: evaluations,
        residual_norms,
    })
}

fn reconstruct(dict: &Dictionary, atoms: &[EstimatedAtom]) -> ChannelMatrix {
    let mut h = CMatrix::zeros(dict.e_r.nrows(), dict.e_t.nrows());
    for a in atoms {
        let col_r = dict.doa_column(a.doa_grid_index).expect("atom from this dictionary");
        let col_t = dict.dod_column(a.dod_grid_index).expect("atom from this dictionary");
        let e_r: CVector = dict.e_r.column(col_r) * a.gain;
        h += e_r * dict.e_t.column(col_t).adjoint();
    }
    ChannelMatrix::new(h)
}

/// Builds the dictionary and runs [`matching_pursuit`].
#[allow(clippy::too_many_arguments)]
pub fn estimate_channel(
    y: &CMatrix,
    s: &ObservationSetup,
    grid: &DirectionGrid,
    g_r: &ArrayGeometry,
    g_t: &ArrayGeometry,
    budget: usize,
    strategy: Strategy,
    truth: Option<&ChannelMatrix>,
) -> Result<EstimationReport> {
    let dict = build_dictionaries(grid, s, g_r, g_t)?;
    matching_pursuit(y, &dict, budget, strategy, truth)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{synthesize, PathParams};
    use crate::geometry::{upa, Plane};
    use crate::observation::{complex_gaussian, orthogonal_pilots, PilotBasis};

    fn small_setup() -> (ArrayGeometry, ArrayGeometry, ObservationSetup, DirectionGrid) {
        let g_r = upa(3, 3, 0.5, Plane::Yz).unwrap();
        let g_t = upa(4, 4, 0.5, Plane::Yz).unwrap();
        let s = ObservationSetup::identity(9, 16, 0.0).unwrap();
        let grid = DirectionGrid::front_hemisphere(400, 400, Axis::X, Axis::X).unwrap();
        (g_r, g_t, s, grid)
    }

    #[test]
    fn grid_dims_factor_near_square() {
        assert_eq!(grid_dims(2500), (50, 50));
        assert_eq!(grid_dims(100), (10, 10));
        assert_eq!(grid_dims(20), (5, 4));
        assert_eq!(grid_dims(7), (7, 1));
        assert_eq!(grid_dims(1), (1, 1));
    }

    #[test]
    fn grid_rejects_duplicates_and_empties() {
        let d = Direction::new(0.1, 0.2).unwrap();
        assert!(DirectionGrid::new(vec![d, d], vec![d]).is_err());
        assert!(DirectionGrid::new(vec![], vec![d]).is_err());
        // −π and π are the same direction
        let a = Direction::new(-PI, 0.0).unwrap();
        let b = Direction { azimuth: PI, elevation: 0.0 };
        assert!(DirectionGrid::new(vec![a, b], vec![d]).is_err());
        let g = DirectionGrid::front_hemisphere(2500, 2500, Axis::X, Axis::Z).unwrap();
        assert_eq!((g.m(), g.n()), (2500, 2500));
        assert!(g.doas().iter().all(|d| d.unit_vector().x > 0.0));
        assert!(g.dods().iter().all(|d| d.unit_vector().z > 0.0));
    }

    #[test]
    fn identity_combiner_dictionary_is_raw_steering() {
        let (g_r, g_t, s, grid) = small_setup();
        let dict = build_dictionaries(&grid, &s, &g_r, &g_t).unwrap();
        for (i, d) in grid.doas().iter().enumerate() {
            let e = steering_vector(&g_r, d);
            assert!((dict.k_r.column(i) - e).norm() < 1e-15);
        }
        for col in dict.k_r.column_iter().chain(dict.k_t.column_iter()) {
            assert!((col.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn annihilated_directions_are_dropped() {
        // A 1-column combiner orthogonal to e_r(d0) kills d0 only.
        let g_r = upa(2, 2, 0.5, Plane::Yz).unwrap();
        let g_t = upa(2, 2, 0.5, Plane::Yz).unwrap();
        let d0 = Direction::new(0.0, 0.0).unwrap();
        let d1 = Direction::new(0.5, 0.3).unwrap();
        let e0 = steering_vector(&g_r, &d0);
        let e1 = steering_vector(&g_r, &d1);
        let w_col = &e1 - &e0 * e0.dotc(&e1);
        let w = CMatrix::from_columns(&[w_col]);
        let s = ObservationSetup::new(linalg::identity(4), w, 0.0).unwrap();
        let grid = DirectionGrid::new(vec![d0, d1], vec![d0, d1]).unwrap();
        let dict = build_dictionaries(&grid, &s, &g_r, &g_t).unwrap();
        assert_eq!(dict.m(), 1);
        assert_eq!(dict.doa_column(1), Some(0));
        assert_eq!(dict.doa_column(0), None);
    }

    fn on_grid_observation(grid_pair: (usize, usize)) -> (ChannelMatrix, CMatrix, Dictionary, PathParams) {
        let (g_r, g_t, s, grid) = small_setup();
        let p = PathParams::new(1.3, 0.9, grid.doas()[grid_pair.0], grid.dods()[grid_pair.1]).unwrap();
        let h = synthesize(&PathSet::new(vec![p]).unwrap(), &g_r, &g_t);
        let y = s.observe_noiseless(&h.entries);
        let dict = build_dictionaries(&grid, &s, &g_r, &g_t).unwrap();
        (h, y, dict, p)
    }

    #[test]
    fn joint_and_sequential_find_on_grid_path() {
        for pair in [(0, 0), (123, 77), (399, 250), (210, 399)] {
            let (_, y, dict, _) = on_grid_observation(pair);
            let j = joint_select(&y, &dict).unwrap();
            let s = sequential_select(&y, &dict).unwrap();
            assert_eq!(dict.grid_pair(j), pair);
            assert_eq!(dict.grid_pair(s), pair);
            assert_eq!(j.score_evaluations, 400 * 400);
            assert_eq!(s.score_evaluations, 800);
        }
    }

    #[test]
    fn zero_observation_tie_breaks_to_origin() {
        let (_, y, dict, _) = on_grid_observation((5, 5));
        let zero = CMatrix::zeros(y.nrows(), y.ncols());
        let j = joint_select(&zero, &dict).unwrap();
        let s = sequential_select(&zero, &dict).unwrap();
        assert_eq!((j.doa, j.dod), (0, 0));
        assert_eq!((s.doa, s.dod), (0, 0));
    }

    /// Brute-force oracle: score every pair directly from steering vectors.
    #[test]
    fn joint_matches_exhaustive_oracle_on_noisy_data() {
        let (g_r, g_t, _, grid) = small_setup();
        let w = complex_gaussian(9, 5, 1.0, 3);
        let x = orthogonal_pilots(16, 6, 1.0, PilotBasis::Dft).unwrap();
        let s = ObservationSetup::new(x, w, 0.0).unwrap();
        let y = complex_gaussian(5, 6, 1.0, 4);
        let dict = build_dictionaries(&grid, &s, &g_r, &g_t).unwrap();
        let sel = joint_select(&y, &dict).unwrap();
        let mut best = (f64::NEG_INFINITY, 0, 0);
        for (i, doa) in grid.doas().iter().enumerate() {
            let a = s.w().adjoint() * steering_vector(&g_r, doa);
            let a = &a / Complex64::from(a.norm());
            let ay = a.adjoint() * &y;
            for (j, dod) in grid.dods().iter().enumerate() {
                let b = s.x().adjoint() * steering_vector(&g_t, dod);
                let b = &b / Complex64::from(b.norm());
                let v = (&ay * &b)[(0, 0)].norm();
                if v > best.0 {
                    best = (v, i, j);
                }
            }
        }
        assert_eq!(dict.grid_pair(sel), (best.1, best.2));
    }

    #[test]
    fn gain_recovery_and_linearity() {
        let (g_r, g_t, s, grid) = small_setup();
        let p = PathParams::new(0.7, 4.0, grid.doas()[42], grid.dods()[17]).unwrap();
        let h = synthesize(&PathSet::new(vec![p]).unwrap(), &g_r, &g_t);
        let y = s.observe_noiseless(&h.entries);
        let c = estimate_gain(&y, &s, &p.doa, &p.dod, &g_r, &g_t).unwrap();
        assert!((c - p.gain()).norm() < 1e-10);
        let c2 = estimate_gain(&(&y * Complex64::from(2.0)), &s, &p.doa, &p.dod, &g_r, &g_t).unwrap();
        assert!((c2 - c * 2.0).norm() < 1e-12);
        let zero = CMatrix::zeros(9, 16);
        assert_eq!(
            estimate_gain(&zero, &s, &p.doa, &p.dod, &g_r, &g_t).unwrap(),
            Complex64::new(0.0, 0.0)
        );
    }

    #[test]
    fn gain_recovery_with_compressive_observation() {
        let (g_r, g_t, _, grid) = small_setup();
        let w = complex_gaussian(9, 4, 1.0, 8);
        let x = orthogonal_pilots(16, 5, 1.7, PilotBasis::Dft).unwrap();
        let s = ObservationSetup::new(x, w, 0.0).unwrap();
        let p = PathParams::new(2.2, 1.0, grid.doas()[9], grid.dods()[300]).unwrap();
        let h = synthesize(&PathSet::new(vec![p]).unwrap(), &g_r, &g_t);
        let y = s.observe_noiseless(&h.entries);
        let c = estimate_gain(&y, &s, &p.doa, &p.dod, &g_r, &g_t).unwrap();
        assert!((c - p.gain()).norm() < 1e-10);
    }

    #[test]
    fn exact_recovery_and_counters() {
        let (h, y, dict, p) = on_grid_observation((55, 301));
        for strategy in [Strategy::Joint, Strategy::Sequential] {
            let r = matching_pursuit(&y, &dict, 1, strategy, Some(&h)).unwrap();
            assert!(r.rmse.unwrap() <= 1e-10);
            assert!((r.atoms[0].gain - p.gain()).norm() < 1e-10);
            assert_eq!(r.score_evaluations, strategy.evaluations_per_iteration(400, 400));
            let paths = r.estimated_paths().unwrap();
            assert_eq!(paths.len(), 1);
        }
        let r = matching_pursuit(&y, &dict, 3, Strategy::Sequential, Some(&h)).unwrap();
        assert_eq!(r.score_evaluations, 3 * 800);
        assert!(matching_pursuit(&y, &dict, 0, Strategy::Joint, None).is_err());
    }

    #[test]
    fn residual_is_non_increasing() {
        let (g_r, g_t, _, grid) = small_setup();
        let s = ObservationSetup::identity(9, 16, 0.0).unwrap();
        let y = complex_gaussian(9, 16, 1.0, 77);
        let dict = build_dictionaries(&grid, &s, &g_r, &g_t).unwrap();
        for strategy in [Strategy::Joint, Strategy::Sequential] {
            let r = matching_pursuit(&y, &dict, 12, strategy, None).unwrap();
            assert!(r.rmse.is_none());
            for w in r.residual_norms.windows(2) {
                assert!(w[1] <= w[0] * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn permuting_grid_keeps_selected_directions() {
        let (g_r, g_t, s, grid) = small_setup();
        let y = complex_gaussian(9, 16, 1.0, 5);
        let mut doas = grid.doas().to_vec();
        let mut dods = grid.dods().to_vec();
        doas.reverse();
        dods.rotate_left(37);
        let permuted = DirectionGrid::new(doas, dods).unwrap();
        for strategy in [Strategy::Joint, Strategy::Sequential] {
            let a = estimate_channel(&y, &s, &grid, &g_r, &g_t, 3, strategy, None).unwrap();
            let b = estimate_channel(&y, &s, &permuted, &g_r, &g_t, 3, strategy, None).unwrap();
            for (x, z) in a.atoms.iter().zip(&b.atoms) {
                assert_eq!(x.doa, z.doa);
                assert_eq!(x.dod, z.dod);
            }
        }
    }

    #[test]
    fn strategy_parsing() {
        assert_eq!("joint".parse::<Strategy>().unwrap(), Strategy::Joint);
        assert!("both".parse::<Strategy>().is_err());
        assert_eq!(serde_json::to_string(&Strategy::Sequential).unwrap(), "\"sequential\"");
    }
}
