//! Air-to-ground link budget, steering phasors and Ricean channel draws.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{distance_element_user, ArrayGeometry, UserPose};

pub const SPEED_OF_LIGHT: f64 = 3.0e8;
/// Thermal noise spectral density at 290 K.
pub const NOISE_DENSITY_DBM_HZ: f64 = -174.0;

/// How the LoS probability curve is read.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlosFormula {
    /// `1 / (1 + A exp(-B (E - A)))`, increasing in elevation `E`.
    #[default]
    Standard,
    /// `1 / (1 + A exp(-B (90 - E) - A))`, with the nadir angle in the exponent.
    NadirAngle,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChannelParams {
    pub carrier_hz: f64,
    pub eta_los_db: f64,
    pub eta_nlos_db: f64,
    pub env_a: f64,
    pub env_b: f64,
    pub noise_power_w: f64,
    pub plos_formula: PlosFormula,
}

impl Default for ChannelParams {
    fn default() -> Self {
        ChannelParams {
            carrier_hz: 2.0e9,
            eta_los_db: 1.0,
            eta_nlos_db: 20.0,
            env_a: 9.61,
            env_b: 0.16,
            noise_power_w: noise_power(20.0e6, 7.0).expect("positive bandwidth"),
            plos_formula: PlosFormula::Standard,
        }
    }
}

impl ChannelParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.carrier_hz.is_finite() && self.carrier_hz > 0.0) {
            return Err(Error::invalid("carrier_hz", "must be positive"));
        }
        if !(self.eta_los_db >= 0.0) {
            return Err(Error::invalid("eta_los_db", "must be >= 0"));
        }
        if !(self.eta_nlos_db >= self.eta_los_db) {
            return Err(Error::invalid("eta_nlos_db", "must be >= eta_los_db"));
        }
        if !(self.noise_power_w.is_finite() && self.noise_power_w > 0.0) {
            return Err(Error::invalid("noise_power_w", "must be positive"));
        }
        if !(self.env_a.is_finite() && self.env_b.is_finite()) {
            return Err(Error::invalid(
                "env_a",
                "environment parameters must be finite",
            ));
        }
        Ok(())
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_hz
    }

    /// Reference gain at 1 m, `(4 pi f / c)^-2`.
    pub fn beta0(&self) -> f64 {
        (4.0 * PI * self.carrier_hz / SPEED_OF_LIGHT).powi(-2)
    }

    pub fn fspl_db(&self, distance_m: f64) -> Result<f64> {
        fspl_db(distance_m, self.carrier_hz)
    }

    pub fn p_los(&self, elevation_deg: f64) -> f64 {
        p_los(elevation_deg, self.env_a, self.env_b, self.plos_formula)
    }
}

pub fn fspl_db(distance_m: f64, carrier_hz: f64) -> Result<f64> {
    if !(distance_m > 0.0) {
        return Err(Error::invalid(
            "distance",
            format!("must be positive, got {distance_m}"),
        ));
    }
    Ok(20.0 * (4.0 * PI * carrier_hz * distance_m / SPEED_OF_LIGHT).log10())
}

pub fn p_los(elevation_deg: f64, a: f64, b: f64, formula: PlosFormula) -> f64 {
    let exponent = match formula {
        PlosFormula::Standard => -b * (elevation_deg - a),
        PlosFormula::NadirAngle => -b * (90.0 - elevation_deg) - a,
    };
    1.0 / (1.0 + a * exponent.exp())
}

/// Thermal noise power in watts for a receiver bandwidth and noise figure.
pub fn noise_power(bandwidth_hz: f64, noise_figure_db: f64) -> Result<f64> {
    if !(bandwidth_hz > 0.0) {
        return Err(Error::invalid("bandwidth_hz", "must be positive"));
    }
    let dbm = NOISE_DENSITY_DBM_HZ + 10.0 * bandwidth_hz.log10() + noise_figure_db;
    Ok(10f64.powf((dbm - 30.0) / 10.0))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinkBudget {
    pub fspl_db: f64,
    pub p_los: f64,
    /// Mean path loss, LoS-probability weighted.
    pub pl_db: f64,
    /// Large-scale power gain, linear.
    pub beta_sq: f64,
    /// Linear excess-loss factor, `beta_sq = eta * beta0 / d^2`.
    pub eta: f64,
}

impl LinkBudget {
    pub fn p_nlos(&self) -> f64 {
        1.0 - self.p_los
    }
}

pub fn link_budget(user: &UserPose, params: &ChannelParams) -> LinkBudget {
    link_budget_with_plos(user, params, params.p_los(user.elevation_deg))
}

/// Link budget with the LoS probability pinned, e.g. to 1 for LoS-only runs.
pub fn link_budget_with_plos(user: &UserPose, params: &ChannelParams, p_los: f64) -> LinkBudget {
    let fspl = params
        .fspl_db(user.distance)
        .expect("user distance is at least the platform altitude");
    let excess = p_los * params.eta_los_db + (1.0 - p_los) * params.eta_nlos_db;
    let pl_db = fspl + excess;
    LinkBudget {
        fspl_db: fspl,
        p_los,
        pl_db,
        beta_sq: 10f64.powf(-pl_db / 10.0),
        eta: 10f64.powf(-excess / 10.0),
    }
}

/// Unit phasors `exp(j 2 pi d_km / lambda)` for every element.
pub fn steering_vector(
    user: &UserPose,
    geometry: &ArrayGeometry,
    params: &ChannelParams,
) -> Vec<Complex64> {
    let lambda = params.wavelength();
    geometry
        .elements
        .iter()
        .map(|e| {
            let cycles = (distance_element_user(e, user) / lambda).rem_euclid(1.0);
            Complex64::from_polar(1.0, 2.0 * PI * cycles)
        })
        .collect()
}

/// One Ricean realisation given precomputed steering phasors.
pub fn sample_channel_with(
    steering: &[Complex64],
    budget: &LinkBudget,
    rng: &mut ChaCha8Rng,
) -> Vec<Complex64> {
    let amp = 10f64.powf(-budget.pl_db / 20.0);
    let los = budget.p_los.sqrt();
    let nlos = budget.p_nlos().max(0.0).sqrt();
    steering
        .iter()
        .map(|b| {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            let scatter = Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2;
            (b * los + scatter * nlos) * amp
        })
        .collect()
}

pub fn sample_channel(
    user: &UserPose,
    geometry: &ArrayGeometry,
    budget: &LinkBudget,
    params: &ChannelParams,
    seed: u64,
) -> Vec<Complex64> {
    let steering = steering_vector(user, geometry, params);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_channel_with(&steering, budget, &mut rng)
}
