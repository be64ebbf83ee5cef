//! Declarative scenario description, parsed from TOML or JSON.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::{noise_power, ChannelParams, PlosFormula};
use crate::error::{Error, Result};
use crate::geometry::{Architecture, ArrayParams};
use crate::pattern::GainPattern;
use crate::power::BisectionConfig;
use crate::rate::GainConvention;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Placement {
    /// `users` points uniform over the square area, drawn from `seed`.
    UniformRandom {},
    /// `users` points on the `ceil(sqrt(users))`-per-side grid of cell centers.
    SquareGrid {},
    /// Fixed ground coordinates; overrides `users`.
    Explicit { points: Vec<[f64; 2]> },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CdfMode {
    /// Each probe is evaluated alone at `probe_power_w`.
    #[default]
    SingleProbe,
    /// Probes reuse the selection and power of the nearest of a square grid
    /// of beam centers.
    BeamAssignment,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Experiment {
    Pipeline {},
    Heatmap {
        #[serde(default = "default_grid")]
        grid: usize,
        #[serde(default = "default_probe_power")]
        probe_power_w: f64,
    },
    Cdf {
        #[serde(default = "default_probes")]
        probes: usize,
        #[serde(default)]
        mode: CdfMode,
        #[serde(default = "default_probe_power")]
        probe_power_w: f64,
    },
    SumRateVsPower {
        #[serde(default = "default_power_sweep")]
        values_dbm: Vec<f64>,
    },
    SumRateVsK {
        #[serde(default = "default_k_sweep")]
        values: Vec<usize>,
    },
    SumRateVsMk {
        #[serde(default = "default_mk_sweep")]
        values: Vec<usize>,
    },
    BeamFootprint {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        centers: Option<Vec<[f64; 2]>>,
        #[serde(default = "default_grid")]
        grid: usize,
    },
}

fn default_grid() -> usize {
    100
}
fn default_probes() -> usize {
    10_000
}
fn default_probe_power() -> f64 {
    1.0
}
fn default_power_sweep() -> Vec<f64> {
    vec![30.0, 35.0, 40.0, 45.0, 50.0]
}
fn default_k_sweep() -> Vec<usize> {
    vec![4, 9, 16, 25, 36, 49, 64]
}
fn default_mk_sweep() -> Vec<usize> {
    vec![16, 32, 64, 128, 256]
}

impl Experiment {
    pub const NAMES: [&'static str; 7] = [
        "pipeline",
        "heatmap",
        "cdf",
        "sum_rate_vs_power",
        "sum_rate_vs_k",
        "sum_rate_vs_mk",
        "beam_footprint",
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Pipeline {} => "pipeline",
            Experiment::Heatmap { .. } => "heatmap",
            Experiment::Cdf { .. } => "cdf",
            Experiment::SumRateVsPower { .. } => "sum_rate_vs_power",
            Experiment::SumRateVsK { .. } => "sum_rate_vs_k",
            Experiment::SumRateVsMk { .. } => "sum_rate_vs_mk",
            Experiment::BeamFootprint { .. } => "beam_footprint",
        }
    }

    /// Default-parameter experiment for a name.
    pub fn from_name(name: &str) -> Result<Experiment> {
        Ok(match name {
            "pipeline" => Experiment::Pipeline {},
            "heatmap" => Experiment::Heatmap {
                grid: default_grid(),
                probe_power_w: default_probe_power(),
            },
            "cdf" => Experiment::Cdf {
                probes: default_probes(),
                mode: CdfMode::default(),
                probe_power_w: default_probe_power(),
            },
            "sum_rate_vs_power" => Experiment::SumRateVsPower {
                values_dbm: default_power_sweep(),
            },
            "sum_rate_vs_k" => Experiment::SumRateVsK {
                values: default_k_sweep(),
            },
            "sum_rate_vs_mk" => Experiment::SumRateVsMk {
                values: default_mk_sweep(),
            },
            "beam_footprint" => Experiment::BeamFootprint {
                centers: None,
                grid: default_grid(),
            },
            other => {
                return Err(Error::invalid(
                    "experiment",
                    format!(
                        "unknown experiment `{other}`, expected one of {}",
                        Self::NAMES.join(", ")
                    ),
                ))
            }
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum PowerMode {
    FixedPerUser { watts: f64 },
    MaxMin {},
}

/// Full scenario; every omitted key takes its baseline default.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub architecture: Architecture,
    /// Architectures compared by `cdf` and sweep experiments. Empty means
    /// just `architecture`.
    pub schemes: Vec<Architecture>,
    pub elements: usize,
    pub hemisphere_radius_m: f64,
    pub element_spacing_m: f64,
    pub cyl_rings: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cyl_radius_m: Option<f64>,
    pub rect_rows: usize,
    pub m_cyl: usize,
    pub m_rect: usize,
    pub altitude_m: f64,

    pub carrier_hz: f64,
    pub bandwidth_hz: f64,
    pub noise_figure_db: f64,
    pub eta_los_db: f64,
    pub eta_nlos_db: f64,
    pub env_a: f64,
    pub env_b: f64,
    pub plos_formula: PlosFormula,

    pub theta_3db: f64,
    pub gamma_max_db: f64,
    pub gain_convention: GainConvention,

    /// Number of users `K`.
    pub users: usize,
    pub m_k: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m_element_cap: Option<usize>,
    pub p_haps_w: f64,
    pub area_side_m: f64,
    /// Independent user drops averaged by the pipeline and sweeps.
    pub drops: usize,
    pub seed: u64,

    pub placement: Placement,
    pub power: PowerMode,
    pub bisection: BisectionConfig,
    pub experiment: Experiment,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        let a = ArrayParams::default();
        let c = ChannelParams::default();
        let g = GainPattern::default();
        ScenarioConfig {
            architecture: a.architecture,
            schemes: Vec::new(),
            elements: a.elements,
            hemisphere_radius_m: a.hemisphere_radius_m,
            element_spacing_m: a.element_spacing_m,
            cyl_rings: a.cyl_rings,
            cyl_radius_m: a.cyl_radius_m,
            rect_rows: a.rect_rows,
            m_cyl: a.m_cyl,
            m_rect: a.m_rect,
            altitude_m: crate::geometry::DEFAULT_ALTITUDE_M,
            carrier_hz: c.carrier_hz,
            bandwidth_hz: 20.0e6,
            noise_figure_db: 7.0,
            eta_los_db: c.eta_los_db,
            eta_nlos_db: c.eta_nlos_db,
            env_a: c.env_a,
            env_b: c.env_b,
            plos_formula: c.plos_formula,
            theta_3db: g.theta_3db,
            gamma_max_db: g.gamma_max_db,
            gain_convention: GainConvention::default(),
            users: 16,
            m_k: 64,
            m_element_cap: None,
            p_haps_w: 100.0,
            area_side_m: 60_000.0,
            drops: 1,
            seed: 1,
            placement: Placement::UniformRandom {},
            power: PowerMode::MaxMin {},
            bisection: BisectionConfig::default(),
            experiment: Experiment::Pipeline {},
        }
    }
}

fn positive(field: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(field, format!("must be positive, got {v}")))
    }
}

fn strictly_increasing<T: PartialOrd + std::fmt::Debug>(field: &str, v: &[T]) -> Result<()> {
    if v.is_empty() {
        return Err(Error::invalid(field, "sweep must not be empty"));
    }
    if v.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::invalid(
            field,
            format!("sweep must be strictly increasing, got {v:?}"),
        ));
    }
    Ok(())
}

impl ScenarioConfig {
    pub fn schemes(&self) -> Vec<Architecture> {
        if self.schemes.is_empty() {
            vec![self.architecture]
        } else {
            self.schemes.clone()
        }
    }

    /// Number of users after placement overrides.
    pub fn user_count(&self) -> usize {
        match &self.placement {
            Placement::Explicit { points } => points.len(),
            _ => self.users,
        }
    }

    pub fn array_params(&self, architecture: Architecture) -> ArrayParams {
        ArrayParams {
            architecture,
            elements: self.elements,
            hemisphere_radius_m: self.hemisphere_radius_m,
            element_spacing_m: self.element_spacing_m,
            cyl_rings: self.cyl_rings,
            cyl_radius_m: self.cyl_radius_m,
            rect_rows: self.rect_rows,
            m_cyl: self.m_cyl,
            m_rect: self.m_rect,
        }
    }

    pub fn channel_params(&self) -> Result<ChannelParams> {
        let p = ChannelParams {
            carrier_hz: self.carrier_hz,
            eta_los_db: self.eta_los_db,
            eta_nlos_db: self.eta_nlos_db,
            env_a: self.env_a,
            env_b: self.env_b,
            noise_power_w: noise_power(self.bandwidth_hz, self.noise_figure_db)?,
            plos_formula: self.plos_formula,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn pattern(&self) -> GainPattern {
        GainPattern {
            theta_3db: self.theta_3db,
            gamma_max_db: self.gamma_max_db,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for arch in self.schemes() {
            crate::geometry::build_array(&self.array_params(arch))?;
        }
        positive("altitude_m", self.altitude_m)?;
        positive("bandwidth_hz", self.bandwidth_hz)?;
        positive("p_haps_w", self.p_haps_w)?;
        positive("area_side_m", self.area_side_m)?;
        if !self.noise_figure_db.is_finite() {
            return Err(Error::invalid("noise_figure_db", "must be finite"));
        }
        self.channel_params()?;
        self.pattern().validate()?;
        self.bisection.validate()?;
        let k = self.user_count();
        if k == 0 {
            return Err(Error::invalid("users", "need at least one user"));
        }
        if self.m_k == 0 || self.m_k > self.elements {
            return Err(Error::invalid(
                "m_k",
                format!("must be in [1, {}], got {}", self.elements, self.m_k),
            ));
        }
        if self.m_element_cap == Some(0) {
            return Err(Error::invalid("m_element_cap", "must be at least 1"));
        }
        if self.drops == 0 {
            return Err(Error::invalid("drops", "must be at least 1"));
        }
        if let Placement::Explicit { points } = &self.placement {
            if points.iter().flatten().any(|v| !v.is_finite()) {
                return Err(Error::invalid(
                    "placement.points",
                    "coordinates must be finite",
                ));
            }
        }
        if let PowerMode::FixedPerUser { watts } = self.power {
            positive("power.watts", watts)?;
            if watts * k as f64 > self.p_haps_w * (1.0 + 1e-12) {
                return Err(Error::invalid(
                    "power.watts",
                    format!("{k} users x {watts} W exceeds p_haps_w = {}", self.p_haps_w),
                ));
            }
        }
        let sweep = matches!(
            self.experiment,
            Experiment::SumRateVsPower { .. }
                | Experiment::SumRateVsK { .. }
                | Experiment::SumRateVsMk { .. }
        );
        if sweep && !matches!(self.power, PowerMode::MaxMin {}) {
            return Err(Error::invalid(
                "power.mode",
                "sweeps need max_min power control",
            ));
        }
        match &self.experiment {
            Experiment::Pipeline {} => {}
            Experiment::Heatmap {
                grid,
                probe_power_w,
            } => {
                if *grid == 0 {
                    return Err(Error::invalid("experiment.grid", "must be at least 1"));
                }
                positive("experiment.probe_power_w", *probe_power_w)?;
            }
            Experiment::Cdf {
                probes,
                probe_power_w,
                ..
            } => {
                if *probes == 0 {
                    return Err(Error::invalid("experiment.probes", "must be at least 1"));
                }
                positive("experiment.probe_power_w", *probe_power_w)?;
            }
            Experiment::SumRateVsPower { values_dbm } => {
                strictly_increasing("experiment.values_dbm", values_dbm)?;
                if values_dbm.iter().any(|v| !v.is_finite()) {
                    return Err(Error::invalid("experiment.values_dbm", "must be finite"));
                }
            }
            Experiment::SumRateVsK { values } => {
                strictly_increasing("experiment.values", values)?;
                if values[0] == 0 {
                    return Err(Error::invalid("experiment.values", "K must be at least 1"));
                }
                if matches!(self.placement, Placement::Explicit { .. }) {
                    return Err(Error::invalid(
                        "placement",
                        "a K sweep needs generated placement, not explicit points",
                    ));
                }
            }
            Experiment::SumRateVsMk { values } => {
                strictly_increasing("experiment.values", values)?;
                if values[0] == 0 || *values.last().unwrap() > self.elements {
                    return Err(Error::invalid(
                        "experiment.values",
                        format!("M_k values must be in [1, {}]", self.elements),
                    ));
                }
            }
            Experiment::BeamFootprint { centers, grid } => {
                if *grid == 0 {
                    return Err(Error::invalid("experiment.grid", "must be at least 1"));
                }
                if centers.as_ref().is_some_and(|c| c.is_empty()) {
                    return Err(Error::invalid("experiment.centers", "must not be empty"));
                }
            }
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Hex sha256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serialises");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

/// Parses and validates a config document. JSON is recognised by a leading
/// `{`; anything else is read as TOML.
pub fn parse_config(text: &str) -> Result<ScenarioConfig> {
    let cfg: ScenarioConfig = if text.trim_start().starts_with('{') {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?
    } else {
        toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?
    };
    cfg.validate()?;
    Ok(cfg)
}

pub fn parse_config_file(path: &Path) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text).map_err(|e| e.context(format!("config {}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_table_defaults() {
        let c = parse_config("").unwrap();
        assert_eq!(c.carrier_hz, 2.0e9);
        assert_eq!(c.bandwidth_hz, 20.0e6);
        assert_eq!((c.users, c.elements, c.m_k), (16, 2650, 64));
        assert_eq!(c.p_haps_w, 100.0);
        assert_eq!(c.theta_3db, 25.0);
        assert_eq!(c.altitude_m, 20_000.0);
        assert_eq!(c.architecture, Architecture::Hemispherical);
        assert_eq!(parse_config("{}").unwrap(), c);
    }

    #[test]
    fn bound_violation_names_field() {
        let err = parse_config("theta_3db = -5").unwrap_err().to_string();
        assert!(err.contains("theta_3db"), "{err}");
        assert_eq!(parse_config("theta_3db = -5").unwrap_err().exit_code(), 2);
    }

    #[test]
    fn unknown_keys_are_named() {
        let err = parse_config("thetta_3db = 10").unwrap_err().to_string();
        assert!(err.contains("thetta_3db"), "{err}");
        let err = parse_config("[experiment]\nkind = \"heatmap\"\nresolution = 5")
            .unwrap_err()
            .to_string();
        assert!(err.contains("resolution"), "{err}");
        let err = parse_config(r#"{"placement": {"kind": "square_grid", "n": 3}}"#)
            .unwrap_err()
            .to_string();
        assert!(err.contains('n'), "{err}");
        let err = parse_config("[bisection]\neps = 0.1")
            .unwrap_err()
            .to_string();
        assert!(err.contains("eps"), "{err}");
    }

    #[test]
    fn hybrid_config() {
        let c = parse_config("architecture = \"hybrid\"\nm_cyl = 2000\nm_rect = 650").unwrap();
        let g = crate::geometry::build_array(&c.array_params(c.architecture)).unwrap();
        assert_eq!(g.architecture, Architecture::Hybrid);
        assert_eq!(g.len(), 2650);
        assert!(parse_config("architecture = \"hybrid\"\nm_cyl = 2000\nm_rect = 600").is_err());
    }

    #[test]
    fn sections_and_json() {
        let c = parse_config(
            r#"
            seed = 9
            [placement]
            kind = "explicit"
            points = [[0.0, 0.0], [1000.0, -500.0]]
            [power]
            mode = "fixed_per_user"
            watts = 1.0
            [experiment]
            kind = "heatmap"
            grid = 5
            "#,
        )
        .unwrap();
        assert_eq!(c.user_count(), 2);
        assert_eq!(c.power, PowerMode::FixedPerUser { watts: 1.0 });
        let j = parse_config(
            r#"{"seed": 9, "placement": {"kind": "explicit", "points": [[0,0],[1000,-500]]},
                "power": {"mode": "fixed_per_user", "watts": 1},
                "experiment": {"kind": "heatmap", "grid": 5}}"#,
        )
        .unwrap();
        assert_eq!(c, j);
    }

    #[test]
    fn sweep_validation() {
        assert!(parse_config("[experiment]\nkind = \"sum_rate_vs_k\"\nvalues = []").is_err());
        assert!(parse_config("[experiment]\nkind = \"sum_rate_vs_k\"\nvalues = [4, 4]").is_err());
        assert!(parse_config(
            "[experiment]\nkind = \"sum_rate_vs_power\"\nvalues_dbm = [40.0, 30.0]"
        )
        .is_err());
        assert!(parse_config("[power]\nmode = \"fixed_per_user\"\nwatts = 10.0").is_err());
    }

    #[test]
    fn experiment_names_round_trip() {
        for n in Experiment::NAMES {
            assert_eq!(Experiment::from_name(n).unwrap().name(), n);
        }
        assert!(Experiment::from_name("fig9").is_err());
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = ScenarioConfig::default();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.seed = 2;
        assert_ne!(a.hash(), b.hash());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn arch() -> impl Strategy<Value = Architecture> {
            prop_oneof![
                Just(Architecture::Hemispherical),
                Just(Architecture::Cylindrical),
                Just(Architecture::Rectangular),
                Just(Architecture::Hybrid),
            ]
        }

        fn experiment() -> impl Strategy<Value = Experiment> {
            prop_oneof![
                Just(Experiment::Pipeline {}),
                (1usize..200, 0.1..10.0f64).prop_map(|(grid, probe_power_w)| Experiment::Heatmap {
                    grid,
                    probe_power_w
                }),
                (
                    1usize..5000,
                    prop_oneof![Just(CdfMode::SingleProbe), Just(CdfMode::BeamAssignment)]
                )
                    .prop_map(|(probes, mode)| Experiment::Cdf {
                        probes,
                        mode,
                        probe_power_w: 1.0
                    }),
                prop::collection::btree_set(0i32..60, 1..6).prop_map(|s| {
                    Experiment::SumRateVsPower {
                        values_dbm: s.into_iter().map(|v| v as f64 * 0.5).collect(),
                    }
                }),
                prop::collection::btree_set(1usize..64, 1..6).prop_map(|s| {
                    Experiment::SumRateVsMk {
                        values: s.into_iter().collect(),
                    }
                }),
                prop::option::of(prop::collection::vec(
                    prop::array::uniform2(-3e4..3e4f64),
                    1..4
                ))
                .prop_map(|centers| Experiment::BeamFootprint { centers, grid: 10 }),
            ]
        }

        proptest! {
            #[test]
            fn toml_round_trip(
                architecture in arch(),
                theta_3db in 1.0..90.0f64,
                users in 1usize..40,
                m_k in 1usize..128,
                seed in any::<u64>(),
                p_haps_w in 1.0..500.0f64,
                cap in prop::option::of(1usize..8),
                experiment in experiment(),
                explicit in prop::option::of(prop::collection::vec(prop::array::uniform2(-3e4..3e4f64), 1..5)),
            ) {
                let mut c = ScenarioConfig {
                    architecture,
                    theta_3db,
                    users,
                    m_k,
                    seed,
                    p_haps_w,
                    m_element_cap: cap,
                    experiment,
                    ..Default::default()
                };
                if let Some(points) = explicit {
                    if !matches!(c.experiment, Experiment::SumRateVsK { .. }) {
                        c.placement = Placement::Explicit { points };
                    }
                }
                prop_assume!(c.validate().is_ok());
                let text = c.to_toml().unwrap();
                let back = parse_config(&text).unwrap();
                prop_assert_eq!(&back, &c);
                prop_assert_eq!(parse_config(&back.to_toml().unwrap()).unwrap(), back);
            }
        }
    }
}
