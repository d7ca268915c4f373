//! Clustered synthetic channels and seeded Monte-Carlo comparison of the
//! joint and sequential estimators.

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::channel::{synthesize, PathParams, PathSet};
use crate::error::{Error, Result};
use crate::estimation::{build_dictionaries, matching_pursuit, Dictionary, DirectionGrid, Strategy};
use crate::fim::{channel_jacobian, crb_trace, fisher_matrix, optimal_bound};
use crate::geometry::{ArrayGeometry, Axis, Direction, GeometrySpec, Plane, Vec3};
use crate::observation::{db_to_linear, noise_for_snr_with, observe, ObservationSetup, ObservationSpec, SnrReference};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Optional consistency checks against the array specs.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_t: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_r: Option<usize>,
    pub tx_array: GeometrySpec,
    pub rx_array: GeometrySpec,
    /// Pilots and combiners; noise comes from `snr_db`.
    pub observation: ObservationSpec,
    pub n_clusters: usize,
    pub paths_per_cluster: usize,
    pub angular_spread_deg: f64,
    pub gain_decay_db_per_cluster: f64,
    /// `None` runs noiseless.
    pub snr_db: Option<f64>,
    pub snr_reference: SnrReference,
    pub m: usize,
    pub n: usize,
    #[serde(rename = "P_budgets")]
    pub p_budgets: Vec<usize>,
    pub trials: usize,
    pub base_seed: u64,
    pub strategies: Vec<Strategy>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            n_t: None,
            n_r: None,
            tx_array: GeometrySpec::Upa {
                nx: 8,
                ny: 8,
                spacing: 0.5,
                plane: Plane::Yz,
            },
            rx_array: GeometrySpec::Upa {
                nx: 4,
                ny: 4,
                spacing: 0.5,
                plane: Plane::Yz,
            },
            observation: ObservationSpec::default(),
            n_clusters: 8,
            paths_per_cluster: 5,
            angular_spread_deg: 5.0,
            gain_decay_db_per_cluster: 5.0,
            snr_db: Some(10.0),
            snr_reference: SnrReference::PerEntry,
            m: 2500,
            n: 2500,
            p_budgets: vec![5, 10, 20],
            trials: 20,
            base_seed: 0,
            strategies: vec![Strategy::Joint, Strategy::Sequential],
        }
    }
}

impl ScenarioConfig {
    /// Number of physical paths `P_φ`.
    pub fn n_physical_paths(&self) -> usize {
        self.n_clusters * self.paths_per_cluster
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        for (name, v) in [
            ("n_clusters", self.n_clusters),
            ("paths_per_cluster", self.paths_per_cluster),
            ("m", self.m),
            ("n", self.n),
            ("trials", self.trials),
        ] {
            if v == 0 {
                return fail(format!("{name} must be positive"));
            }
        }
        if self.p_budgets.is_empty() || self.p_budgets.contains(&0) {
            return fail("P_budgets must be a non-empty list of positive integers".into());
        }
        if self.strategies.is_empty() {
            return fail("strategies must not be empty".into());
        }
        let mut seen = self.strategies.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.strategies.len() {
            return fail("strategies contains duplicates".into());
        }
        if !(self.angular_spread_deg >= 0.0 && self.angular_spread_deg.is_finite()) {
            return fail(format!("invalid angular_spread_deg {}", self.angular_spread_deg));
        }
        if !(self.gain_decay_db_per_cluster >= 0.0 && self.gain_decay_db_per_cluster.is_finite()) {
            return fail(format!(
                "invalid gain_decay_db_per_cluster {}",
                self.gain_decay_db_per_cluster
            ));
        }
        if let Some(db) = self.snr_db {
            if !db.is_finite() {
                return fail("snr_db must be finite (use null for noiseless)".into());
            }
        }
        if self.observation.sigma2.is_some() || self.observation.target_snr_db.is_some() {
            return fail("observation noise is set by snr_db; drop sigma2/target_snr_db".into());
        }
        let (g_r, g_t) = self.arrays().map_err(|e| Error::Config(e.to_string()))?;
        for (name, want, got) in [("n_t", self.n_t, g_t.n_antennas()), ("n_r", self.n_r, g_r.n_antennas())] {
            if let Some(w) = want {
                if w != got {
                    return fail(format!("{name} = {w} but the array has {got} antennas"));
                }
            }
        }
        for (name, g) in [("rx_array", &g_r), ("tx_array", &g_t)] {
            if g.broadside().is_none() {
                return fail(format!("{name} needs a broadside axis for the hemisphere grid"));
            }
        }
        noiseless_spec(&self.observation)
            .validate(g_r.n_antennas(), g_t.n_antennas())
            .map_err(|e| Error::Config(e.to_string()))
    }

    /// Receive and transmit arrays.
    pub fn arrays(&self) -> Result<(ArrayGeometry, ArrayGeometry)> {
        Ok((self.rx_array.build()?, self.tx_array.build()?))
    }

    pub fn grid(&self, g_r: &ArrayGeometry, g_t: &ArrayGeometry) -> Result<DirectionGrid> {
        let axis = |g: &ArrayGeometry| {
            g.broadside()
                .ok_or_else(|| Error::InvalidGrid("array has no broadside axis".into()))
        };
        DirectionGrid::front_hemisphere(self.m, self.n, axis(g_r)?, axis(g_t)?)
    }
}

fn noiseless_spec(spec: &ObservationSpec) -> ObservationSpec {
    ObservationSpec {
        sigma2: Some(0.0),
        target_snr_db: None,
        ..spec.clone()
    }
}

/// Uniformly distributed direction on the half-sphere in front of `axis`.
fn uniform_hemisphere<R: Rng>(rng: &mut R, axis: Axis) -> Direction {
    loop {
        let v = Vec3::new(
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
        );
        let norm = v.norm();
        if norm < 1e-9 {
            continue;
        }
        let mut u = v / norm;
        let k = axis.index();
        if u[k] < 0.0 {
            u[k] = -u[k];
        }
        if let Ok(d) = Direction::from_vector(&u) {
            return d;
        }
    }
}

fn perturb<R: Rng>(rng: &mut R, centre: &Direction, sigma: f64) -> Direction {
    let daz: f64 = rng.sample(StandardNormal);
    let del: f64 = rng.sample(StandardNormal);
    let el = (centre.elevation + sigma * del).clamp(-PI / 2.0, PI / 2.0);
    Direction::new(centre.azimuth + sigma * daz, el).expect("clamped elevation is valid")
}

/// Clustered multipath draw; deterministic in `seed`.
///
/// Cluster centres are uniform over each array's front hemisphere, paths
/// scatter around them with Gaussian angular offsets, and the powers decay
/// per cluster with an `Exp(1)` factor per path, normalized to `Σρ² = 1`.
pub fn generate_paths(cfg: &ScenarioConfig, g_r: &ArrayGeometry, g_t: &ArrayGeometry, seed: u64) -> Result<PathSet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rx_axis = g_r.broadside().unwrap_or(Axis::X);
    let tx_axis = g_t.broadside().unwrap_or(Axis::X);
    let sigma = cfg.angular_spread_deg.to_radians();
    let mut raw = Vec::with_capacity(cfg.n_physical_paths());
    for k in 0..cfg.n_clusters {
        let doa_c = uniform_hemisphere(&mut rng, rx_axis);
        let dod_c = uniform_hemisphere(&mut rng, tx_axis);
        let cluster_power = db_to_linear(-cfg.gain_decay_db_per_cluster * k as f64);
        for _ in 0..cfg.paths_per_cluster {
            let doa = perturb(&mut rng, &doa_c, sigma);
            let dod = perturb(&mut rng, &dod_c, sigma);
            let e: f64 = Exp1.sample(&mut rng);
            let phase = rng.random_range(0.0..2.0 * PI);
            raw.push((cluster_power * e, phase, doa, dod));
        }
    }
    let total: f64 = raw.iter().map(|r| r.0).sum();
    let paths = raw
        .into_iter()
        .map(|(p, phi, doa, dod)| PathParams::new((p / total).sqrt().max(f64::MIN_POSITIVE), phi, doa, dod))
        .collect::<Result<Vec<_>>>()?;
    PathSet::new(paths)
}

/// Arrays, observation matrices and dictionary shared by every trial.
pub struct BenchContext {
    pub g_r: ArrayGeometry,
    pub g_t: ArrayGeometry,
    pub setup: ObservationSetup,
    pub dictionary: Dictionary,
}

impl BenchContext {
    pub fn new(cfg: &ScenarioConfig) -> Result<Self> {
        cfg.validate()?;
        let (g_r, g_t) = cfg.arrays()?;
        let setup = noiseless_spec(&cfg.observation).build(g_r.n_antennas(), g_t.n_antennas(), None)?;
        let grid = cfg.grid(&g_r, &g_t)?;
        let dictionary = build_dictionaries(&grid, &setup, &g_r, &g_t)?;
        Ok(Self {
            g_r,
            g_t,
            setup,
            dictionary,
        })
    }
}

/// Outcome of one estimator run on one channel draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub seed: u64,
    pub strategy: Strategy,
    #[serde(rename = "P_budget")]
    pub p_budget: usize,
    pub rmse: f64,
    pub wall_time_s: f64,
    pub score_evals: u64,
    /// Relative CRB at the true parameters; `None` when noiseless.
    pub crb: Option<f64>,
    pub crb_floor: Option<f64>,
    pub ill_conditioned: bool,
}

/// Every (strategy, budget) run on the channel drawn from `seed`.
pub fn run_seed(cfg: &ScenarioConfig, ctx: &BenchContext, seed: u64) -> Result<Vec<TrialResult>> {
    let paths = generate_paths(cfg, &ctx.g_r, &ctx.g_t, seed)?;
    let h = synthesize(&paths, &ctx.g_r, &ctx.g_t);
    let hv = h.vectorized();
    let (setup, crb, crb_floor, ill) = match cfg.snr_db {
        Some(db) => {
            let sigma2 = noise_for_snr_with(db_to_linear(db), ctx.setup.alpha2(), &hv, cfg.snr_reference)?;
            let setup = ctx.setup.with_sigma2(sigma2)?;
            let d = channel_jacobian(&paths, &ctx.g_r, &ctx.g_t);
            let fim = fisher_matrix(&d, &setup)?;
            let crb = crb_trace(&d, &fim, &hv)?;
            let snr = crate::observation::snr(&setup, &hv)?;
            (setup, Some(crb.relative), Some(optimal_bound(paths.len(), snr)), crb.ill_conditioned)
        }
        None => (ctx.setup.clone(), None, None, false),
    };
    // Noise stream independent from the path stream.
    let y = observe(&h, &setup, seed ^ 0x9e37_79b9_7f4a_7c15)?.y;
    let mut out = Vec::with_capacity(cfg.strategies.len() * cfg.p_budgets.len());
    for &strategy in &cfg.strategies {
        for &p in &cfg.p_budgets {
            let r = matching_pursuit(&y, &ctx.dictionary, p, strategy, Some(&h))?;
            out.push(TrialResult {
                seed,
                strategy,
                p_budget: p,
                rmse: r.rmse.expect("truth supplied"),
                wall_time_s: r.wall_time_seconds,
                score_evals: r.score_evaluations,
                crb,
                crb_floor,
                ill_conditioned: ill,
            });
        }
    }
    Ok(out)
}

/// Single (strategy, budget) trial.
pub fn run_trial(cfg: &ScenarioConfig, ctx: &BenchContext, seed: u64, strategy: Strategy, p_budget: usize) -> Result<TrialResult> {
    let single = ScenarioConfig {
        strategies: vec![strategy],
        p_budgets: vec![p_budget],
        ..cfg.clone()
    };
    Ok(run_seed(&single, ctx, seed)?.remove(0))
}

/// Aggregate over `trials` seeds for one (strategy, budget).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub strategy: Strategy,
    #[serde(rename = "P_budget")]
    pub p_budget: usize,
    pub trials: usize,
    pub mean_rmse: f64,
    pub mean_wall_time_s: f64,
    pub mean_score_evals: f64,
    /// Mean relative CRB of the true channel.
    pub mean_crb: Option<f64>,
    /// Mean `3P_φ/SNR`.
    pub crb_floor: Option<f64>,
    pub ill_conditioned_trials: usize,
}

/// Runs every trial seed `base_seed + t`, optionally on `threads` workers.
pub fn monte_carlo(cfg: &ScenarioConfig, threads: Option<usize>) -> Result<Vec<BenchRow>> {
    let ctx = BenchContext::new(cfg)?;
    let seeds: Vec<u64> = (0..cfg.trials as u64).map(|t| cfg.base_seed.wrapping_add(t)).collect();
    let per_seed = run_seeds(cfg, &ctx, &seeds, threads)?;
    Ok(aggregate(cfg, &per_seed))
}

#[cfg(feature = "parallel")]
fn run_seeds(cfg: &ScenarioConfig, ctx: &BenchContext, seeds: &[u64], threads: Option<usize>) -> Result<Vec<Vec<TrialResult>>> {
    use rayon::prelude::*;
    let work = || seeds.par_iter().map(|&s| run_seed(cfg, ctx, s)).collect::<Result<Vec<_>>>();
    match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(work),
        None => work(),
    }
}

#[cfg(not(feature = "parallel"))]
fn run_seeds(cfg: &ScenarioConfig, ctx: &BenchContext, seeds: &[u64], _threads: Option<usize>) -> Result<Vec<Vec<TrialResult>>> {
    seeds.iter().map(|&s| run_seed(cfg, ctx, s)).collect()
}

/// Means in seed order, rows sorted by `(P_budget, strategy)`.
pub fn aggregate(cfg: &ScenarioConfig, per_seed: &[Vec<TrialResult>]) -> Vec<BenchRow> {
    let mut keys: Vec<(usize, Strategy)> = cfg
        .p_budgets
        .iter()
        .flat_map(|&p| cfg.strategies.iter().map(move |&s| (p, s)))
        .collect();
    keys.sort();
    keys.dedup();
    keys.into_iter()
        .map(|(p, strategy)| {
            let runs: Vec<&TrialResult> = per_seed
                .iter()
                .flatten()
                .filter(|r| r.p_budget == p && r.strategy == strategy)
                .collect();
            let k = runs.len() as f64;
            let mean = |f: &dyn Fn(&TrialResult) -> f64| runs.iter().map(|r| f(r)).sum::<f64>() / k;
            let mean_opt = |f: &dyn Fn(&TrialResult) -> Option<f64>| {
                runs.iter().map(|r| f(r)).sum::<Option<f64>>().map(|s| s / k)
            };
            BenchRow {
                strategy,
                p_budget: p,
                trials: runs.len(),
                mean_rmse: mean(&|r| r.rmse),
                mean_wall_time_s: mean(&|r| r.wall_time_s),
                mean_score_evals: mean(&|r| r.score_evals as f64),
                mean_crb: mean_opt(&|r| r.crb),
                crb_floor: mean_opt(&|r| r.crb_floor),
                ill_conditioned_trials: runs.iter().filter(|r| r.ill_conditioned).count(),
            }
        })
        .collect()
}

pub fn write_csv<W: Write>(rows: &[BenchRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `<stem>.csv` and `<stem>.json` next to each other.
pub fn write_outputs(rows: &[BenchRow], cfg: &ScenarioConfig, path: &Path) -> Result<()> {
    let csv_path = path.with_extension("csv");
    let json_path = path.with_extension("json");
    write_csv(rows, std::fs::File::create(&csv_path)?)?;
    let doc = serde_json::json!({ "config": cfg, "rows": rows });
    std::fs::write(&json_path, serde_json::to_string_pretty(&doc)? + "\n")?;
    Ok(())
}

/// Aligned text table: one line per strategy, rMSE and time per budget.
/// The lowest rMSE of each budget is starred.
pub fn format_table(rows: &[BenchRow]) -> String {
    let mut budgets: Vec<usize> = rows.iter().map(|r| r.p_budget).collect();
    budgets.sort();
    budgets.dedup();
    let mut strategies: Vec<Strategy> = rows.iter().map(|r| r.strategy).collect();
    strategies.sort();
    strategies.dedup();
    let best: Vec<f64> = budgets
        .iter()
        .map(|&p| {
            rows.iter()
                .filter(|r| r.p_budget == p)
                .map(|r| r.mean_rmse)
                .fold(f64::INFINITY, f64::min)
        })
        .collect();

    let mut s = format!("{:<12}", "");
    for p in &budgets {
        s += &format!(" | {:^21}", format!("P = {p}"));
    }
    s += &format!("\n{:<12}", "strategy");
    for _ in &budgets {
        s += &format!(" | {:>10} {:>10}", "rMSE", "time (s)");
    }
    s.push('\n');
    s += &"-".repeat(12 + budgets.len() * 24);
    s.push('\n');
    for st in strategies {
        s += &format!("{:<12}", st.as_str());
        for (p, b) in budgets.iter().zip(&best) {
            match rows.iter().find(|r| r.p_budget == *p && r.strategy == st) {
                Some(r) => {
                    let mark = if r.mean_rmse == *b { "*" } else { " " };
                    s += &format!(" | {:>9.4}{mark} {:>10.3}", r.mean_rmse, r.mean_wall_time_s);
                }
                None => s += &format!(" | {:>10} {:>10}", "-", "-"),
            }
        }
        s.push('\n');
    }
    s
}
