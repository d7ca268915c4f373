//! Browser front end for `mimo-lab`.
//!
//! Every operation is a plain Rust function returning a serializable struct;
//! the `#[wasm_bindgen]` wrappers only turn the result into JSON.

use mimo_lab::bench::{generate_paths, ScenarioConfig};
use mimo_lab::channel::synthesize;
use mimo_lab::estimation::{build_dictionaries, matching_pursuit, DirectionGrid, Strategy};
use mimo_lab::fim::{channel_jacobian, crb_trace, direction_block, fisher_matrix, optimal_bound};
use mimo_lab::geometry::{upa, Axis, Direction, GeometrySpec, Plane};
use mimo_lab::observation::{
    complex_gaussian, db_to_linear, noise_for_snr_with, observe, snr, ObservationSetup, SnrReference,
};
use mimo_lab::{Error, Result};
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Largest antenna count per side accepted from the page.
const MAX_SIDE: usize = 16;

fn check_side(name: &str, v: usize) -> Result<()> {
    if v == 0 || v > MAX_SIDE {
        return Err(Error::Config(format!("{name} must be in 1..={MAX_SIDE}")));
    }
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct BoundMap {
    pub n_az: usize,
    pub n_el: usize,
    pub azimuths: Vec<f64>,
    pub elevations: Vec<f64>,
    /// Row-major over elevation then azimuth: `log10 Tr(B⁻¹)`, `null` where
    /// the direction is not identifiable.
    pub log10_bound: Vec<Option<f64>>,
}

/// Per-direction DoA information of an `nx × ny` half-wavelength UPA in the
/// yz plane: `Tr(B⁻¹)` is the angular variance bound up to the gain/SNR factor.
pub fn direction_bound_map(nx: usize, ny: usize, spacing: f64, n_az: usize, n_el: usize) -> Result<BoundMap> {
    check_side("nx", nx)?;
    check_side("ny", ny)?;
    if !(spacing > 0.0 && spacing <= 2.0) {
        return Err(Error::Config("spacing must be in (0, 2] wavelengths".into()));
    }
    if n_az == 0 || n_el == 0 || n_az * n_el > 40_000 {
        return Err(Error::Config("map resolution out of range".into()));
    }
    let g = upa(nx, ny, spacing, Plane::Yz)?;
    let lin = |lo: f64, hi: f64, k: usize, n: usize| lo + (hi - lo) * (k as f64 + 0.5) / n as f64;
    let half = std::f64::consts::FRAC_PI_2;
    let azimuths: Vec<f64> = (0..n_az).map(|k| lin(-half, half, k, n_az)).collect();
    let elevations: Vec<f64> = (0..n_el).map(|k| lin(-half, half, k, n_el)).collect();
    let mut log10_bound = Vec::with_capacity(n_az * n_el);
    for &el in &elevations {
        for &az in &azimuths {
            let b = direction_block(&g, &Direction::new(az, el)?);
            let det = b.determinant();
            let tr = b.trace();
            log10_bound.push((det > 1e-12 * tr * tr).then(|| (tr / det).log10()));
        }
    }
    Ok(BoundMap {
        n_az,
        n_el,
        azimuths,
        elevations,
        log10_bound,
    })
}

#[derive(Debug, Serialize)]
pub struct StrategyRun {
    pub strategy: Strategy,
    pub rmse: f64,
    pub score_evals: u64,
    pub estimated_doas: Vec<Direction>,
    pub estimated_dods: Vec<Direction>,
}

#[derive(Debug, Serialize)]
pub struct EstimateDemo {
    pub true_doas: Vec<Direction>,
    pub true_dods: Vec<Direction>,
    pub true_power: Vec<f64>,
    pub runs: Vec<StrategyRun>,
}

/// Clustered channel between a 4×4 receive and an 8×8 transmit UPA,
/// estimated by both strategies on `grid × grid` direction grids.
pub fn estimate_demo(seed: u64, n_clusters: usize, snr_db: f64, budget: usize, grid: usize) -> Result<EstimateDemo> {
    if !(1..=8).contains(&n_clusters) || !(1..=40).contains(&budget) || !(4..=900).contains(&grid) {
        return Err(Error::Config("clusters 1-8, budget 1-40, grid 4-900".into()));
    }
    if !snr_db.is_finite() {
        return Err(Error::Config("SNR must be finite".into()));
    }
    let cfg = ScenarioConfig {
        n_clusters,
        ..ScenarioConfig::default()
    };
    let (g_r, g_t) = cfg.arrays()?;
    let paths = generate_paths(&cfg, &g_r, &g_t, seed)?;
    let h = synthesize(&paths, &g_r, &g_t);
    let sigma2 = noise_for_snr_with(db_to_linear(snr_db), 1.0, &h.vectorized(), SnrReference::PerEntry)?;
    let s = ObservationSetup::identity(g_r.n_antennas(), g_t.n_antennas(), sigma2)?;
    let y = observe(&h, &s, seed ^ 0x5eed)?.y;
    let dirs = DirectionGrid::front_hemisphere(grid, grid, Axis::X, Axis::X)?;
    let dict = build_dictionaries(&dirs, &s, &g_r, &g_t)?;
    let mut runs = Vec::new();
    for strategy in [Strategy::Joint, Strategy::Sequential] {
        let r = matching_pursuit(&y, &dict, budget, strategy, Some(&h))?;
        runs.push(StrategyRun {
            strategy,
            rmse: r.rmse.unwrap_or(f64::NAN),
            score_evals: r.score_evaluations,
            estimated_doas: r.atoms.iter().map(|a| a.doa).collect(),
            estimated_dods: r.atoms.iter().map(|a| a.dod).collect(),
        });
    }
    Ok(EstimateDemo {
        true_doas: paths.iter().map(|p| p.doa).collect(),
        true_dods: paths.iter().map(|p| p.dod).collect(),
        true_power: paths.iter().map(|p| p.rho * p.rho).collect(),
        runs,
    })
}

#[derive(Debug, Serialize)]
pub struct CombinerSweep {
    pub n_r: usize,
    pub n_paths: usize,
    pub floor: f64,
    pub combiners: Vec<usize>,
    /// Relative CRB per combiner count; `null` when the FIM is singular.
    pub crb: Vec<Option<f64>>,
}

/// Relative CRB as random combiners are added one by one, against the
/// `3P/SNR` floor reached with full observation.
pub fn combiner_sweep(seed: u64, n_paths: usize, snr_db: f64, rx_side: usize) -> Result<CombinerSweep> {
    check_side("rx_side", rx_side)?;
    if !(1..=6).contains(&n_paths) || !snr_db.is_finite() {
        return Err(Error::Config("paths 1-6 and a finite SNR".into()));
    }
    let rx = GeometrySpec::Upa {
        nx: rx_side,
        ny: rx_side,
        spacing: 0.5,
        plane: Plane::Yz,
    };
    let cfg = ScenarioConfig {
        rx_array: rx,
        tx_array: GeometrySpec::Upa {
            nx: 4,
            ny: 4,
            spacing: 0.5,
            plane: Plane::Yz,
        },
        n_clusters: n_paths,
        paths_per_cluster: 1,
        ..ScenarioConfig::default()
    };
    let (g_r, g_t) = cfg.arrays()?;
    let n_r = g_r.n_antennas();
    let paths = generate_paths(&cfg, &g_r, &g_t, seed)?;
    let h = synthesize(&paths, &g_r, &g_t).vectorized();
    let full = ObservationSetup::identity(n_r, g_t.n_antennas(), 1.0)?;
    let sigma2 = full.alpha2() * h.norm_squared() / db_to_linear(snr_db);
    let full = full.with_sigma2(sigma2)?;
    let floor = optimal_bound(paths.len(), snr(&full, &h)?);
    let d = channel_jacobian(&paths, &g_r, &g_t);
    let w_all = complex_gaussian(n_r, n_r, 1.0, seed.wrapping_add(1));
    let mut crb = Vec::with_capacity(n_r);
    for n_c in 1..=n_r {
        let s = ObservationSetup::new(full.x().clone(), w_all.columns(0, n_c).into_owned(), sigma2)?;
        let r = crb_trace(&d, &fisher_matrix(&d, &s)?, &h)?;
        crb.push((!r.ill_conditioned).then_some(r.relative));
    }
    Ok(CombinerSweep {
        n_r,
        n_paths: paths.len(),
        floor,
        combiners: (1..=n_r).collect(),
        crb,
    })
}

fn to_js<T: Serialize>(r: Result<T>) -> std::result::Result<String, JsValue> {
    r.and_then(|v| serde_json::to_string(&v).map_err(Error::from))
        .map_err(|e| JsValue::from_str(&e.to_string()))
}

#[wasm_bindgen(js_name = directionBoundMap)]
pub fn direction_bound_map_js(nx: usize, ny: usize, spacing: f64, n_az: usize, n_el: usize) -> std::result::Result<String, JsValue> {
    to_js(direction_bound_map(nx, ny, spacing, n_az, n_el))
}

#[wasm_bindgen(js_name = estimateDemo)]
pub fn estimate_demo_js(seed: u32, n_clusters: usize, snr_db: f64, budget: usize, grid: usize) -> std::result::Result<String, JsValue> {
    to_js(estimate_demo(seed as u64, n_clusters, snr_db, budget, grid))
}

#[wasm_bindgen(js_name = combinerSweep)]
pub fn combiner_sweep_js(seed: u32, n_paths: usize, snr_db: f64, rx_side: usize) -> std::result::Result<String, JsValue> {
    to_js(combiner_sweep(seed as u64, n_paths, snr_db, rx_side))
}
