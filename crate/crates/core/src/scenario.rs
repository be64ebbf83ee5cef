//! End-to-end experiments: selection, power control and rate evaluation
//! over user drops, probe grids and parameter sweeps.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::channel::{link_budget, ChannelParams};
use crate::config::{CdfMode, Experiment, Placement, PowerMode, ScenarioConfig};
use crate::error::{Error, Result};
use crate::geometry::{build_array, Architecture, ArrayGeometry, UserField, UserPose};
use crate::pattern::{gain_matrix, gain_row, GainPattern};
use crate::power::{max_min_power, TraceRow};
use crate::rate::{
    column_weights, rate, sinr_closed_form, GainConvention, LinkCoefficients, RateReport,
};
use crate::selection::{select_greedy, top_m, SelectionMatrix};

/// Relative slack allowed when checking that a power sweep never loses rate.
const MONOTONE_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct RateRow {
    pub scheme: Architecture,
    pub drop: usize,
    pub user: usize,
    pub x: f64,
    pub y: f64,
    pub power_w: f64,
    pub sinr: f64,
    pub rate_bps: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridRow {
    pub x: f64,
    pub y: f64,
    /// Serving beam for footprint maps; `0` for single-probe heatmaps.
    pub beam: usize,
    pub se: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CdfRow {
    pub scheme: Architecture,
    pub se: f64,
    pub cdf: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub scheme: Architecture,
    pub parameter: &'static str,
    pub value: f64,
    /// Mean over drops.
    pub sum_rate_bps: f64,
    /// Mean over drops of the per-drop minimum SINR.
    pub min_sinr: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ScenarioResult {
    pub experiment: String,
    pub seed: u64,
    pub config_hash: String,
    pub bandwidth_hz: f64,
    pub rates: Vec<RateRow>,
    pub heatmap: Vec<GridRow>,
    pub footprint: Vec<GridRow>,
    pub cdf: Vec<CdfRow>,
    pub sweep: Vec<SweepRow>,
    /// `(user, element)` pairs of the first drop of the first scheme.
    pub selection: Vec<(usize, usize)>,
    /// Bisection trace of the first drop of the first scheme.
    pub convergence: Vec<TraceRow>,
}

impl ScenarioResult {
    fn new(cfg: &ScenarioConfig) -> Self {
        ScenarioResult {
            experiment: cfg.experiment.name().to_string(),
            seed: cfg.seed,
            config_hash: cfg.hash(),
            bandwidth_hz: cfg.bandwidth_hz,
            ..Default::default()
        }
    }

    /// Sum rate per drop averaged over drops, for one scheme.
    pub fn mean_sum_rate(&self, scheme: Architecture) -> f64 {
        let rows: Vec<&RateRow> = self.rates.iter().filter(|r| r.scheme == scheme).collect();
        let drops = rows.iter().map(|r| r.drop).max().map_or(0, |d| d + 1);
        if drops == 0 {
            return 0.0;
        }
        rows.iter().map(|r| r.rate_bps).sum::<f64>() / drops as f64
    }
}

/// Array plus the physics shared by every evaluation of one scheme.
pub struct Scene {
    pub scheme: Architecture,
    pub geometry: ArrayGeometry,
    pub channel: ChannelParams,
    pub pattern: GainPattern,
    pub convention: GainConvention,
    pub altitude: f64,
}

impl Scene {
    pub fn new(cfg: &ScenarioConfig, scheme: Architecture) -> Result<Self> {
        Ok(Scene {
            scheme,
            geometry: build_array(&cfg.array_params(scheme))?,
            channel: cfg.channel_params()?,
            pattern: cfg.pattern(),
            convention: cfg.gain_convention,
            altitude: cfg.altitude_m,
        })
    }
}

/// One solved drop.
#[derive(Clone, Debug)]
pub struct DropOutcome {
    pub users: UserField,
    pub selection: SelectionMatrix,
    pub powers: Vec<f64>,
    pub report: RateReport,
    pub trace: Vec<TraceRow>,
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// `count` points uniform over the square of side `side` centered on nadir.
pub fn uniform_points(count: usize, side: f64, rng: &mut ChaCha8Rng) -> Vec<(f64, f64)> {
    let h = side / 2.0;
    (0..count)
        .map(|_| (rng.random_range(-h..h), rng.random_range(-h..h)))
        .collect()
}

/// Cell centers of an `n x n` grid over the square, row-major in `y`.
pub fn grid_cells(n: usize, side: f64) -> Vec<(f64, f64)> {
    let c = |i: usize| ((i as f64 + 0.5) / n as f64 - 0.5) * side;
    (0..n)
        .flat_map(|r| (0..n).map(move |col| (c(col), c(r))))
        .collect()
}

/// First `count` cell centers of the smallest square grid holding them.
pub fn square_grid_points(count: usize, side: f64) -> Vec<(f64, f64)> {
    let n = (count as f64).sqrt().ceil() as usize;
    let mut pts = grid_cells(n.max(1), side);
    pts.truncate(count);
    pts
}

fn user_points(cfg: &ScenarioConfig, users: usize, drop: usize) -> Vec<(f64, f64)> {
    match &cfg.placement {
        Placement::UniformRandom {} => {
            uniform_points(users, cfg.area_side_m, &mut rng_for(cfg.seed, drop as u64))
        }
        Placement::SquareGrid {} => square_grid_points(users, cfg.area_side_m),
        Placement::Explicit { points } => points.iter().map(|p| (p[0], p[1])).collect(),
    }
}

fn dbm_to_w(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// Selection, power allocation and rates for one set of user positions.
pub fn solve_drop(
    scene: &Scene,
    points: &[(f64, f64)],
    m_k: usize,
    cap: Option<usize>,
    p_haps_w: f64,
    power: PowerMode,
    cfg: &ScenarioConfig,
) -> Result<DropOutcome> {
    let users = UserField::new(points, scene.altitude)?;
    let gains = gain_matrix(&scene.geometry, &users, &scene.pattern);
    let selection = select_greedy(&gains, &vec![m_k; users.len()], cap)?;
    let beta: Vec<f64> = users
        .users
        .iter()
        .map(|u| link_budget(u, &scene.channel).beta_sq)
        .collect();
    let sigma = scene.channel.noise_power_w;
    let (powers, trace) = match power {
        PowerMode::FixedPerUser { watts } => (vec![watts; users.len()], Vec::new()),
        PowerMode::MaxMin {} => {
            let link = LinkCoefficients::new(&selection, &gains, &beta, sigma, scene.convention)?;
            let sol = max_min_power(&link, p_haps_w, &cfg.bisection)?;
            (sol.allocation.p, sol.trace)
        }
    };
    let sinr = sinr_closed_form(&powers, &selection, &gains, &beta, sigma, scene.convention)?;
    Ok(DropOutcome {
        users,
        selection,
        powers,
        report: RateReport::new(sinr, cfg.bandwidth_hz),
        trace,
    })
}

fn rate_rows(
    scheme: Architecture,
    drop: usize,
    o: &DropOutcome,
) -> impl Iterator<Item = RateRow> + '_ {
    o.users.users.iter().enumerate().map(move |(k, u)| RateRow {
        scheme,
        drop,
        user: k,
        x: u.x,
        y: u.y,
        power_w: o.powers[k],
        sinr: o.report.sinr[k],
        rate_bps: o.report.rate_bps[k],
    })
}

/// Runs `drops` independent drops in parallel; results are in drop order.
fn run_drops(
    scene: &Scene,
    cfg: &ScenarioConfig,
    users: usize,
    m_k: usize,
    p_haps_w: f64,
) -> Result<Vec<DropOutcome>> {
    (0..cfg.drops)
        .into_par_iter()
        .map(|d| {
            solve_drop(
                scene,
                &user_points(cfg, users, d),
                m_k,
                cfg.m_element_cap,
                p_haps_w,
                cfg.power,
                cfg,
            )
            .map_err(|e| e.context(format!("{} drop {d}", scene.scheme.short_name())))
        })
        .collect()
}

/// Selection, max-min (or fixed) power and rates for every scheme and drop.
pub fn run_pipeline(cfg: &ScenarioConfig) -> Result<ScenarioResult> {
    let mut result = ScenarioResult::new(cfg);
    for (i, scheme) in cfg.schemes().into_iter().enumerate() {
        let scene = Scene::new(cfg, scheme)?;
        let outcomes = run_drops(&scene, cfg, cfg.user_count(), cfg.m_k, cfg.p_haps_w)?;
        if i == 0 {
            result.selection = outcomes[0].selection.pairs().collect();
            result.convergence = outcomes[0].trace.clone();
        }
        for (d, o) in outcomes.iter().enumerate() {
            result.rates.extend(rate_rows(scheme, d, o));
        }
    }
    Ok(result)
}

/// SINR of a lone probe served by its own `m_k` best elements at `power_w`.
pub fn single_probe_sinr(scene: &Scene, user: &UserPose, m_k: usize, power_w: f64) -> f64 {
    let g = gain_row(&scene.geometry, user, &scene.pattern);
    let sel = top_m(&g, m_k);
    let conv = scene.convention;
    let t: f64 = sel.iter().map(|&m| conv.amplitude(g[m])).sum();
    let s: f64 = sel.iter().map(|&m| conv.amplitude(g[m]).powi(2)).sum();
    let beta = link_budget(user, &scene.channel).beta_sq;
    let mk = m_k as f64;
    let num = power_w * beta * t * t / mk;
    if num == 0.0 {
        return 0.0;
    }
    num / (beta * power_w * s / mk + scene.channel.noise_power_w)
}

/// SINR of a probe that reuses the beam `serving` of a solved drop. The
/// interference term sees every beam's power through the probe's gains.
pub fn assigned_probe_sinr(
    scene: &Scene,
    user: &UserPose,
    outcome: &DropOutcome,
    weights: &[f64],
    serving: usize,
) -> f64 {
    let g = gain_row(&scene.geometry, user, &scene.pattern);
    let conv = scene.convention;
    let sel = outcome.selection.selected(serving);
    let t: f64 = sel.iter().map(|&m| conv.amplitude(g[m])).sum();
    let leak: f64 = g
        .iter()
        .zip(weights)
        .filter(|(_, &w)| w != 0.0)
        .map(|(&gm, &w)| conv.amplitude(gm).powi(2) * w)
        .sum();
    let beta = link_budget(user, &scene.channel).beta_sq;
    let num = outcome.powers[serving] * beta * t * t / sel.len() as f64;
    if num == 0.0 {
        return 0.0;
    }
    num / (beta * leak + scene.channel.noise_power_w)
}

fn nearest(centers: &UserField, x: f64, y: f64) -> usize {
    centers
        .users
        .iter()
        .enumerate()
        .min_by(|(_, a), (_, b)| {
            let da = (a.x - x).powi(2) + (a.y - y).powi(2);
            let db = (b.x - x).powi(2) + (b.y - y).powi(2);
            da.total_cmp(&db)
        })
        .map(|(i, _)| i)
        .expect("at least one beam center")
}

fn se(sinr: f64) -> f64 {
    rate(sinr, 1.0)
}

/// Spectral efficiency of a lone probe at every cell of an `n x n` grid.
pub fn heatmap_rows(
    scene: &Scene,
    cfg: &ScenarioConfig,
    grid: usize,
    probe_power_w: f64,
) -> Vec<GridRow> {
    grid_cells(grid, cfg.area_side_m)
        .into_par_iter()
        .map(|(x, y)| {
            let u = UserPose::new(x, y, scene.altitude);
            GridRow {
                x,
                y,
                beam: 0,
                se: se(single_probe_sinr(scene, &u, cfg.m_k, probe_power_w)),
            }
        })
        .collect()
}

pub fn run_heatmap(cfg: &ScenarioConfig) -> Result<ScenarioResult> {
    let Experiment::Heatmap {
        grid,
        probe_power_w,
    } = cfg.experiment
    else {
        return Err(Error::invalid(
            "experiment",
            "expected a heatmap experiment",
        ));
    };
    let scene = Scene::new(cfg, cfg.architecture)?;
    let mut result = ScenarioResult::new(cfg);
    result.heatmap = heatmap_rows(&scene, cfg, grid, probe_power_w);
    Ok(result)
}

fn solve_beams(scene: &Scene, cfg: &ScenarioConfig, centers: &[(f64, f64)]) -> Result<DropOutcome> {
    solve_drop(
        scene,
        centers,
        cfg.m_k,
        cfg.m_element_cap,
        cfg.p_haps_w,
        cfg.power,
        cfg,
    )
    .map_err(|e| e.context(format!("{} beam centers", scene.scheme.short_name())))
}

fn assigned_se(scene: &Scene, beams: &DropOutcome, points: Vec<(f64, f64)>) -> Vec<GridRow> {
    let weights = column_weights(&beams.selection, &beams.powers);
    points
        .into_par_iter()
        .map(|(x, y)| {
            let u = UserPose::new(x, y, scene.altitude);
            let k = nearest(&beams.users, x, y);
            GridRow {
                x,
                y,
                beam: k,
                se: se(assigned_probe_sinr(scene, &u, beams, &weights, k)),
            }
        })
        .collect()
}

/// Sorted spectral-efficiency samples per scheme with empirical CDF
/// ordinates `i / n`. All schemes see the same probe locations.
pub fn run_cdf(cfg: &ScenarioConfig) -> Result<ScenarioResult> {
    let Experiment::Cdf {
        probes,
        mode,
        probe_power_w,
    } = cfg.experiment
    else {
        return Err(Error::invalid("experiment", "expected a cdf experiment"));
    };
    let points = uniform_points(probes, cfg.area_side_m, &mut rng_for(cfg.seed, u64::MAX));
    let mut result = ScenarioResult::new(cfg);
    for (i, scheme) in cfg.schemes().into_iter().enumerate() {
        let scene = Scene::new(cfg, scheme)?;
        let mut samples: Vec<f64> = match mode {
            CdfMode::SingleProbe => points
                .par_iter()
                .map(|&(x, y)| {
                    let u = UserPose::new(x, y, scene.altitude);
                    se(single_probe_sinr(&scene, &u, cfg.m_k, probe_power_w))
                })
                .collect(),
            CdfMode::BeamAssignment => {
                let centers = square_grid_points(beam_grid_count(cfg.users), cfg.area_side_m);
                let beams = solve_beams(&scene, cfg, &centers)?;
                if i == 0 {
                    result.selection = beams.selection.pairs().collect();
                    result.convergence = beams.trace.clone();
                }
                result.rates.extend(rate_rows(scheme, 0, &beams));
                assigned_se(&scene, &beams, points.clone())
                    .into_iter()
                    .map(|r| r.se)
                    .collect()
            }
        };
        samples.sort_by(f64::total_cmp);
        let n = samples.len() as f64;
        result
            .cdf
            .extend(samples.into_iter().enumerate().map(|(j, se)| CdfRow {
                scheme,
                se,
                cdf: (j + 1) as f64 / n,
            }));
    }
    Ok(result)
}

/// Beam count of the `ceil(sqrt(K))`-per-side grid.
pub fn beam_grid_count(users: usize) -> usize {
    let n = (users as f64).sqrt().ceil() as usize;
    n * n
}

/// Multi-beam coverage map: each grid cell takes the beam of its nearest
/// center.
pub fn run_footprint(cfg: &ScenarioConfig) -> Result<ScenarioResult> {
    let Experiment::BeamFootprint { centers, grid } = &cfg.experiment else {
        return Err(Error::invalid(
            "experiment",
            "expected a beam_footprint experiment",
        ));
    };
    let centers: Vec<(f64, f64)> = match centers {
        Some(c) => c.iter().map(|p| (p[0], p[1])).collect(),
        None => square_grid_points(beam_grid_count(cfg.users), cfg.area_side_m),
    };
    let scene = Scene::new(cfg, cfg.architecture)?;
    let beams = solve_beams(&scene, cfg, &centers)?;
    let mut result = ScenarioResult::new(cfg);
    result.selection = beams.selection.pairs().collect();
    result.convergence = beams.trace.clone();
    result.rates.extend(rate_rows(scene.scheme, 0, &beams));
    result.footprint = assigned_se(&scene, &beams, grid_cells(*grid, cfg.area_side_m));
    Ok(result)
}

/// Sum rate against transmit power, user count or elements per user.
pub fn run_sweep(cfg: &ScenarioConfig) -> Result<ScenarioResult> {
    let (parameter, values): (&'static str, Vec<f64>) = match &cfg.experiment {
        Experiment::SumRateVsPower { values_dbm } => ("p_haps_dbm", values_dbm.clone()),
        Experiment::SumRateVsK { values } => ("users", values.iter().map(|&v| v as f64).collect()),
        Experiment::SumRateVsMk { values } => ("m_k", values.iter().map(|&v| v as f64).collect()),
        _ => return Err(Error::invalid("experiment", "expected a sweep experiment")),
    };
    let mut result = ScenarioResult::new(cfg);
    for scheme in cfg.schemes() {
        let scene = Scene::new(cfg, scheme)?;
        let mut previous: Option<f64> = None;
        for &v in &values {
            let (users, m_k, p) = match parameter {
                "p_haps_dbm" => (cfg.user_count(), cfg.m_k, dbm_to_w(v)),
                "users" => (v as usize, cfg.m_k, cfg.p_haps_w),
                _ => (cfg.user_count(), v as usize, cfg.p_haps_w),
            };
            let outcomes = run_drops(&scene, cfg, users, m_k, p)
                .map_err(|e| e.context(format!("sweep {parameter} = {v}")))?;
            let n = outcomes.len() as f64;
            let sum_rate = outcomes.iter().map(|o| o.report.sum_rate()).sum::<f64>() / n;
            let min_sinr = outcomes.iter().map(|o| o.report.min_sinr()).sum::<f64>() / n;
            if parameter == "p_haps_dbm" {
                if let Some(prev) = previous {
                    if sum_rate < prev * (1.0 - MONOTONE_TOLERANCE) {
                        return Err(Error::Numerical(format!(
                            "{}: sum rate fell from {prev} to {sum_rate} bps as power rose to {v} dBm",
                            scheme.short_name()
                        )));
                    }
                }
                previous = Some(sum_rate);
            }
            result.sweep.push(SweepRow {
                scheme,
                parameter,
                value: v,
                sum_rate_bps: sum_rate,
                min_sinr,
            });
        }
    }
    Ok(result)
}

/// Dispatches on the configured experiment.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<ScenarioResult> {
    cfg.validate()?;
    let r = match cfg.experiment {
        Experiment::Pipeline {} => run_pipeline(cfg),
        Experiment::Heatmap { .. } => run_heatmap(cfg),
        Experiment::Cdf { .. } => run_cdf(cfg),
        Experiment::BeamFootprint { .. } => run_footprint(cfg),
        Experiment::SumRateVsPower { .. }
        | Experiment::SumRateVsK { .. }
        | Experiment::SumRateVsMk { .. } => run_sweep(cfg),
    };
    r.map_err(|e| e.context(format!("experiment {}", cfg.experiment.name())))
}
