//! Closed-form SINR and rate, interference-limited asymptotics and a Monte
//! Carlo use-and-then-forget oracle.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{sample_channel_with, steering_vector, ChannelParams, LinkBudget};
use crate::error::{Error, Result};
use crate::geometry::{ArrayGeometry, UserField};
use crate::pattern::GainMatrix;
use crate::selection::SelectionMatrix;

/// How a power gain `g_km` enters the beamformed amplitude.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GainConvention {
    /// Amplitude `g`: coherent sum `sum g`, leakage `sum g^2`.
    #[default]
    Scalar,
    /// Amplitude `sqrt(g)`: coherent sum `sum sqrt(g)`, leakage `sum g`.
    Amplitude,
}

impl GainConvention {
    pub fn amplitude(self, g: f64) -> f64 {
        match self {
            GainConvention::Scalar => g,
            GainConvention::Amplitude => g.sqrt(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PowerAllocation {
    pub p: Vec<f64>,
    pub budget_w: f64,
}

impl PowerAllocation {
    pub fn new(p: Vec<f64>, budget_w: f64) -> Result<Self> {
        if let Some(bad) = p.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::invalid(
                "power",
                format!("per-user power must be positive, got {bad}"),
            ));
        }
        let total: f64 = p.iter().sum();
        if total > budget_w + 1e-9 {
            return Err(Error::invalid(
                "power",
                format!("total {total} W exceeds budget {budget_w} W"),
            ));
        }
        Ok(PowerAllocation { p, budget_w })
    }

    pub fn equal(users: usize, budget_w: f64) -> Self {
        PowerAllocation {
            p: vec![budget_w / users as f64; users],
            budget_w,
        }
    }

    pub fn total(&self) -> f64 {
        self.p.iter().sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RateReport {
    pub sinr: Vec<f64>,
    pub rate_bps: Vec<f64>,
    pub bandwidth_hz: f64,
}

impl RateReport {
    pub fn new(sinr: Vec<f64>, bandwidth_hz: f64) -> Self {
        let rate_bps = sinr.iter().map(|&s| rate(s, bandwidth_hz)).collect();
        RateReport {
            sinr,
            rate_bps,
            bandwidth_hz,
        }
    }

    pub fn sum_rate(&self) -> f64 {
        self.rate_bps.iter().sum()
    }

    pub fn min_sinr(&self) -> f64 {
        self.sinr.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

pub fn rate(sinr: f64, bandwidth_hz: f64) -> f64 {
    bandwidth_hz * sinr.ln_1p() / std::f64::consts::LN_2
}

fn check_dims(
    selection: &SelectionMatrix,
    gains: &GainMatrix,
    per_user: &[(&str, usize)],
) -> Result<()> {
    if selection.users() != gains.users() || selection.elements() != gains.elements() {
        return Err(Error::invalid(
            "selection",
            format!(
                "selection is {}x{} but gains are {}x{}",
                selection.users(),
                selection.elements(),
                gains.users(),
                gains.elements()
            ),
        ));
    }
    for (name, len) in per_user {
        if *len != gains.users() {
            return Err(Error::invalid(
                *name,
                format!("expected {} entries, got {len}", gains.users()),
            ));
        }
    }
    if let Some(k) = (0..selection.users()).find(|&k| selection.m_k(k) == 0) {
        return Err(Error::invalid(
            "m_k",
            format!("user {k} has no selected elements"),
        ));
    }
    Ok(())
}

/// `T_k`: coherent amplitude sum of user `k` over its own selection.
fn coherent_sum(
    selection: &SelectionMatrix,
    gains: &GainMatrix,
    k: usize,
    conv: GainConvention,
) -> f64 {
    let row = gains.row(k);
    selection
        .selected(k)
        .iter()
        .map(|&m| conv.amplitude(row[m]))
        .sum()
}

/// Per-element load `w_m = sum_k' (p_k' / M_k') [m in S_k']`.
pub fn column_weights(selection: &SelectionMatrix, p: &[f64]) -> Vec<f64> {
    let mut w = vec![0.0; selection.elements()];
    for (k, &pk) in p.iter().enumerate() {
        let share = pk / selection.m_k(k) as f64;
        for &m in selection.selected(k) {
            w[m] += share;
        }
    }
    w
}

/// Closed-form SINR of every user. The interference sum runs over all users
/// including the user itself.
pub fn sinr_closed_form(
    p: &[f64],
    selection: &SelectionMatrix,
    gains: &GainMatrix,
    beta_sq: &[f64],
    sigma_sq: f64,
    conv: GainConvention,
) -> Result<Vec<f64>> {
    check_dims(
        selection,
        gains,
        &[("power", p.len()), ("beta_sq", beta_sq.len())],
    )?;
    let w = column_weights(selection, p);
    Ok((0..gains.users())
        .into_par_iter()
        .map(|k| {
            let t = coherent_sum(selection, gains, k, conv);
            let leak: f64 = gains
                .row(k)
                .iter()
                .zip(&w)
                .filter(|(_, &wm)| wm != 0.0)
                .map(|(&g, &wm)| conv.amplitude(g).powi(2) * wm)
                .sum();
            let num = p[k] * beta_sq[k] * t * t / selection.m_k(k) as f64;
            let den = beta_sq[k] * leak + sigma_sq;
            if num == 0.0 {
                0.0
            } else {
                num / den
            }
        })
        .collect())
}

/// The same model as a `K x K` linear system:
/// `SINR_k = a_k p_k / (sum_k' b_kk' p_k' + noise)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinkCoefficients {
    pub a: Vec<f64>,
    /// Row-major `K x K`.
    pub b: Vec<f64>,
    pub noise: f64,
}

impl LinkCoefficients {
    pub fn new(
        selection: &SelectionMatrix,
        gains: &GainMatrix,
        beta_sq: &[f64],
        sigma_sq: f64,
        conv: GainConvention,
    ) -> Result<Self> {
        check_dims(selection, gains, &[("beta_sq", beta_sq.len())])?;
        let k_users = gains.users();
        let mut a = Vec::with_capacity(k_users);
        let mut b = vec![0.0; k_users * k_users];
        for k in 0..k_users {
            let t = coherent_sum(selection, gains, k, conv);
            a.push(beta_sq[k] * t * t / selection.m_k(k) as f64);
            let row = gains.row(k);
            for j in 0..k_users {
                let s: f64 = selection
                    .selected(j)
                    .iter()
                    .map(|&m| conv.amplitude(row[m]).powi(2))
                    .sum();
                b[k * k_users + j] = beta_sq[k] * s / selection.m_k(j) as f64;
            }
        }
        Ok(LinkCoefficients {
            a,
            b,
            noise: sigma_sq,
        })
    }

    pub fn users(&self) -> usize {
        self.a.len()
    }

    pub fn sinr(&self, p: &[f64]) -> Vec<f64> {
        let n = self.users();
        (0..n)
            .map(|k| {
                let i: f64 = (0..n).map(|j| self.b[k * n + j] * p[j]).sum();
                self.a[k] * p[k] / (i + self.noise)
            })
            .collect()
    }
}

/// Noise-free, equal-power SINR `T_k^2 / sum_k' S_kk'`.
pub fn sinr_interference_limited(
    selection: &SelectionMatrix,
    gains: &GainMatrix,
    conv: GainConvention,
) -> Result<Vec<f64>> {
    check_dims(selection, gains, &[])?;
    let m0 = selection.m_k(0);
    if (0..selection.users()).any(|k| selection.m_k(k) != m0) {
        return Err(Error::invalid(
            "m_k",
            "interference-limited form needs equal M_k",
        ));
    }
    let counts: Vec<f64> = selection
        .column_counts()
        .into_iter()
        .map(|c| c as f64)
        .collect();
    Ok((0..gains.users())
        .map(|k| {
            let t = coherent_sum(selection, gains, k, conv);
            let s: f64 = gains
                .row(k)
                .iter()
                .zip(&counts)
                .map(|(&g, &c)| conv.amplitude(g).powi(2) * c)
                .sum();
            t * t / s
        })
        .collect())
}

/// Large-K limit of the interference-limited sum rate, `BW M_k log2(e)`.
pub fn sum_rate_asymptotic(m_k: usize, bandwidth_hz: f64) -> f64 {
    bandwidth_hz * m_k as f64 * std::f64::consts::LOG2_E
}

/// Everything the Monte Carlo oracle needs about the scenario.
pub struct MonteCarloInput<'a> {
    pub users: &'a UserField,
    pub geometry: &'a ArrayGeometry,
    pub budgets: &'a [LinkBudget],
    pub selection: &'a SelectionMatrix,
    pub gains: &'a GainMatrix,
    pub powers: &'a [f64],
    pub channel: &'a ChannelParams,
    pub convention: GainConvention,
}

#[derive(Clone)]
struct Moments {
    /// `sum c_kk` per user.
    mean: Vec<Complex64>,
    /// `sum |c_kk'|^2`, row-major `K x K`.
    power: Vec<f64>,
}

impl Moments {
    fn zero(k: usize) -> Self {
        Moments {
            mean: vec![Complex64::new(0.0, 0.0); k],
            power: vec![0.0; k * k],
        }
    }

    fn add(mut self, o: &Moments) -> Self {
        self.mean.iter_mut().zip(&o.mean).for_each(|(a, b)| *a += b);
        self.power
            .iter_mut()
            .zip(&o.power)
            .for_each(|(a, b)| *a += b);
        self
    }
}

const MC_CHUNK: usize = 256;

/// Use-and-then-forget SINR estimated from `n_draws` channel realisations
/// with matched-filter beamformers on the selected elements.
pub fn sinr_monte_carlo(
    input: &MonteCarloInput<'_>,
    n_draws: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if n_draws < 10 {
        return Err(Error::invalid(
            "n_draws",
            format!("need at least 10 draws, got {n_draws}"),
        ));
    }
    let sel = input.selection;
    check_dims(
        sel,
        input.gains,
        &[
            ("power", input.powers.len()),
            ("budgets", input.budgets.len()),
            ("users", input.users.len()),
        ],
    )?;
    if input.geometry.len() != input.gains.elements() {
        return Err(Error::invalid(
            "geometry",
            "element count differs from gain matrix",
        ));
    }
    let k_users = input.users.len();
    let steering: Vec<Vec<Complex64>> = input
        .users
        .users
        .iter()
        .map(|u| steering_vector(u, input.geometry, input.channel))
        .collect();
    let amp: Vec<Vec<f64>> = input
        .gains
        .rows()
        .map(|r| r.iter().map(|&g| input.convention.amplitude(g)).collect())
        .collect();
    // Beamformer of user j on its selected elements: conj(b_jm) / sqrt(M_j).
    let beams: Vec<Vec<(usize, Complex64)>> = (0..k_users)
        .map(|j| {
            let norm = 1.0 / (sel.m_k(j) as f64).sqrt();
            sel.selected(j)
                .iter()
                .map(|&m| (m, steering[j][m].conj() * norm))
                .collect()
        })
        .collect();

    let chunks: Vec<Moments> = (0..n_draws.div_ceil(MC_CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut acc = Moments::zero(k_users);
            for draw in c * MC_CHUNK..((c + 1) * MC_CHUNK).min(n_draws) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(draw as u64);
                for k in 0..k_users {
                    let h = sample_channel_with(&steering[k], &input.budgets[k], &mut rng);
                    for (j, beam) in beams.iter().enumerate() {
                        let c_kj: Complex64 = beam.iter().map(|&(m, w)| h[m] * amp[k][m] * w).sum();
                        if j == k {
                            acc.mean[k] += c_kj;
                        }
                        acc.power[k * k_users + j] += c_kj.norm_sqr();
                    }
                }
            }
            acc
        })
        .collect();
    let total = chunks.iter().fold(Moments::zero(k_users), |a, b| a.add(b));

    let n = n_draws as f64;
    let sigma_sq = input.channel.noise_power_w;
    Ok((0..k_users)
        .map(|k| {
            let ds = input.powers[k] * (total.mean[k] / n).norm_sqr();
            if ds == 0.0 {
                return 0.0;
            }
            let all: f64 = (0..k_users)
                .map(|j| input.powers[j] * total.power[k * k_users + j] / n)
                .sum();
            ds / ((all - ds).max(0.0) + sigma_sq)
        })
        .collect())
}
