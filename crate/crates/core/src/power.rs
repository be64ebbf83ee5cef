//! Max-min SINR power allocation by bisection on the common SINR target.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::rate::{LinkCoefficients, PowerAllocation};

const MAX_EXPANSIONS: u32 = 20;
const RESIDUAL_LIMIT: f64 = 1e-6;
const POLISH_ITERATIONS: usize = 200;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BisectionConfig {
    pub eta_min: f64,
    pub eta_max: f64,
    pub epsilon: f64,
}

impl Default for BisectionConfig {
    fn default() -> Self {
        BisectionConfig {
            eta_min: 0.0,
            eta_max: 1500.0,
            epsilon: 0.01,
        }
    }
}

impl BisectionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta_min >= 0.0 && self.eta_min.is_finite()) {
            return Err(Error::invalid("bisection.eta_min", "must be >= 0"));
        }
        if !(self.eta_max > self.eta_min && self.eta_max.is_finite()) {
            return Err(Error::invalid("bisection.eta_max", "must exceed eta_min"));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::invalid("bisection.epsilon", "must be positive"));
        }
        Ok(())
    }

    /// `ceil(log2((eta_max - eta_min) / epsilon))`.
    pub fn iteration_bound(&self) -> usize {
        ((self.eta_max - self.eta_min) / self.epsilon)
            .log2()
            .ceil()
            .max(0.0) as usize
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Infeasibility {
    Singular,
    /// Some user would need non-positive power: the target is above what
    /// interference allows at any power level.
    NonPositive,
    OverBudget {
        total_w: f64,
    },
    IllConditioned {
        residual: f64,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub enum Feasibility {
    Feasible { powers: Vec<f64> },
    Infeasible(Infeasibility),
}

impl Feasibility {
    pub fn is_feasible(&self) -> bool {
        matches!(self, Feasibility::Feasible { .. })
    }
}

/// Minimal-power point at which every user reaches SINR `eta`, if it exists
/// within the budget.
pub fn feasibility(eta: f64, link: &LinkCoefficients, p_haps: f64) -> Feasibility {
    let n = link.users();
    let mut m = vec![0.0; n * n];
    for k in 0..n {
        for j in 0..n {
            m[k * n + j] = -eta * link.b[k * n + j];
        }
        m[k * n + k] += link.a[k];
    }
    let rhs = vec![eta * link.noise; n];
    let Some(p) = linalg::solve(&m, &rhs) else {
        return Feasibility::Infeasible(Infeasibility::Singular);
    };
    if p.iter().any(|&v| !(v > 0.0)) {
        return Feasibility::Infeasible(Infeasibility::NonPositive);
    }
    let residual = linalg::relative_residual(&m, &p, &rhs);
    if residual > RESIDUAL_LIMIT {
        log::warn!("feasibility solve at eta = {eta}: relative residual {residual:.3e}");
        return Feasibility::Infeasible(Infeasibility::IllConditioned { residual });
    }
    let total: f64 = p.iter().sum();
    if total > p_haps {
        return Feasibility::Infeasible(Infeasibility::OverBudget { total_w: total });
    }
    Feasibility::Feasible { powers: p }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    pub eta_min: f64,
    pub eta_max: f64,
    pub feasible: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MaxMinSolution {
    pub allocation: PowerAllocation,
    /// Minimum SINR at the returned allocation.
    pub eta: f64,
    /// Final bracket `[eta_min, eta_max]` of the epsilon loop.
    pub bracket: (f64, f64),
    /// One row per bisection step.
    pub trace: Vec<TraceRow>,
    /// Number of times `eta_max` was doubled before bisecting.
    pub expansions: u32,
}

/// Bisection on the common SINR target until the bracket is narrower than
/// `epsilon`, followed by a fine pass that lands the witness on the budget.
/// The returned powers sum to `p_haps`.
pub fn max_min_power(
    link: &LinkCoefficients,
    p_haps: f64,
    config: &BisectionConfig,
) -> Result<MaxMinSolution> {
    config.validate()?;
    if !(p_haps > 0.0 && p_haps.is_finite()) {
        return Err(Error::invalid("p_haps_w", "must be positive"));
    }
    if link.users() == 0 {
        return Err(Error::invalid("users", "need at least one user"));
    }
    if link.a.iter().any(|&a| a <= 0.0) {
        return Err(Error::Numerical(
            "a user has zero coherent gain; no positive SINR is reachable".into(),
        ));
    }

    let (mut lo, mut hi) = (config.eta_min, config.eta_max);
    let mut witness: Option<Vec<f64>> = None;
    let mut expansions = 0;
    while expansions < MAX_EXPANSIONS {
        match feasibility(hi, link, p_haps) {
            Feasibility::Feasible { powers } => {
                lo = hi;
                witness = Some(powers);
                hi *= 2.0;
                expansions += 1;
            }
            Feasibility::Infeasible(_) => break,
        }
    }
    if expansions > 0 {
        log::info!("eta_max was feasible; expanded {expansions} times to {hi}");
    }

    let mut trace = Vec::new();
    let mut iteration = 0;
    while hi - lo >= config.epsilon {
        iteration += 1;
        let eta = 0.5 * (lo + hi);
        let f = feasibility(eta, link, p_haps);
        let feasible = f.is_feasible();
        if let Feasibility::Feasible { powers } = f {
            lo = eta;
            witness = Some(powers);
        } else {
            hi = eta;
        }
        trace.push(TraceRow {
            iteration,
            eta_min: lo,
            eta_max: hi,
            feasible,
        });
    }
    let bracket = (lo, hi);

    let (mut flo, mut fhi) = (lo, hi);
    for _ in 0..POLISH_ITERATIONS {
        if fhi - flo <= 1e-13 * fhi {
            break;
        }
        let eta = 0.5 * (flo + fhi);
        match feasibility(eta, link, p_haps) {
            Feasibility::Feasible { powers } => {
                flo = eta;
                witness = Some(powers);
            }
            Feasibility::Infeasible(_) => fhi = eta,
        }
    }

    let mut p = witness.ok_or_else(|| {
        Error::Numerical(format!(
            "no feasible SINR target found above {}",
            config.eta_min
        ))
    })?;
    let scale = p_haps / p.iter().sum::<f64>();
    p.iter_mut().for_each(|v| *v *= scale);
    let eta = link.sinr(&p).into_iter().fold(f64::INFINITY, f64::min);
    Ok(MaxMinSolution {
        allocation: PowerAllocation {
            p,
            budget_w: p_haps,
        },
        eta,
        bracket,
        trace,
        expansions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn link(a: Vec<f64>, b: Vec<f64>, noise: f64) -> LinkCoefficients {
        LinkCoefficients { a, b, noise }
    }

    #[test]
    fn single_user_closed_form() {
        let l = link(vec![10.0], vec![1.0], 0.5);
        let eta = 3.0;
        match feasibility(eta, &l, 100.0) {
            Feasibility::Feasible { powers } => {
                assert_relative_eq!(
                    powers[0],
                    eta * 0.5 / (10.0 - eta * 1.0),
                    max_relative = 1e-12
                )
            }
            other => panic!("{other:?}"),
        }
        let sol = max_min_power(&l, 100.0, &BisectionConfig::default()).unwrap();
        assert_relative_eq!(sol.allocation.p[0], 100.0, max_relative = 1e-12);
        let direct = 10.0 * 100.0 / (100.0 + 0.5);
        assert!((sol.eta - direct).abs() < 0.01);
        assert!(sol.bracket.0 <= direct && direct <= sol.bracket.1);
    }

    #[test]
    fn symmetric_pair() {
        let l = link(vec![5.0, 5.0], vec![0.4, 0.1, 0.1, 0.4], 0.2);
        match feasibility(1.0, &l, 10.0) {
            Feasibility::Feasible { powers } => {
                assert_relative_eq!(powers[0], powers[1], max_relative = 1e-12)
            }
            other => panic!("{other:?}"),
        }
        let sol = max_min_power(&l, 10.0, &BisectionConfig::default()).unwrap();
        assert_relative_eq!(sol.allocation.p[0], 5.0, max_relative = 1e-9);
        let s = l.sinr(&sol.allocation.p);
        assert_relative_eq!(s[0], s[1], max_relative = 1e-9);
    }

    #[test]
    fn tiny_eta_is_feasible() {
        let l = link(vec![1.0, 2.0], vec![0.5, 0.5, 0.5, 0.5], 1.0);
        assert!(feasibility(1e-9, &l, 1e-6).is_feasible());
    }

    #[test]
    fn infeasibility_reasons() {
        let l = link(vec![1.0, 1.0], vec![0.5, 0.5, 0.5, 0.5], 1.0);
        assert_eq!(
            feasibility(2.5, &l, 1e9),
            Feasibility::Infeasible(Infeasibility::NonPositive)
        );
        assert!(matches!(
            feasibility(0.5, &l, 1e-3),
            Feasibility::Infeasible(Infeasibility::OverBudget { .. })
        ));
        assert_eq!(
            feasibility(1.0, &link(vec![1.0], vec![1.0], 1.0), 1.0),
            Feasibility::Infeasible(Infeasibility::Singular)
        );
    }

    #[test]
    fn expands_and_respects_iteration_bound() {
        let l = link(vec![1e6], vec![1e-3], 1.0);
        let cfg = BisectionConfig::default();
        let sol = max_min_power(&l, 1.0, &cfg).unwrap();
        assert!(sol.expansions > 0);
        let widened = BisectionConfig {
            eta_max: cfg.eta_max * 2f64.powi(sol.expansions as i32),
            ..cfg
        };
        assert!(sol.trace.len() <= widened.iteration_bound());

        let l = link(
            vec![5.0, 4.0, 3.0],
            vec![0.3, 0.1, 0.2, 0.1, 0.2, 0.1, 0.2, 0.1, 0.4],
            0.1,
        );
        let sol = max_min_power(&l, 5.0, &cfg).unwrap();
        assert_eq!(sol.expansions, 0);
        assert!(sol.trace.len() <= cfg.iteration_bound());
        assert!(sol.bracket.1 - sol.bracket.0 < cfg.epsilon);
    }

    #[test]
    fn config_validation() {
        let bad = BisectionConfig {
            eta_min: 5.0,
            eta_max: 1.0,
            epsilon: 0.01,
        };
        assert!(bad.validate().is_err());
        assert_eq!(BisectionConfig::default().iteration_bound(), 18);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn instance() -> impl Strategy<Value = LinkCoefficients> {
            (1usize..6).prop_flat_map(|k| {
                (
                    prop::collection::vec(1.0..50.0f64, k),
                    prop::collection::vec(0.0..1.0f64, k * k),
                    0.01..1.0f64,
                )
                    .prop_map(|(a, b, noise)| LinkCoefficients { a, b, noise })
            })
        }

        proptest! {
            #[test]
            fn optimum_is_balanced_and_saturated(l in instance(), budget in 0.5..100.0f64) {
                let sol = max_min_power(&l, budget, &BisectionConfig::default()).unwrap();
                let s = l.sinr(&sol.allocation.p);
                let (lo, hi) = s.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
                prop_assert!(hi - lo <= 0.02);
                prop_assert!((sol.allocation.total() - budget).abs() <= 1e-6 * budget);
                prop_assert!(sol.eta >= sol.bracket.0 - 1e-9);
            }

            #[test]
            fn convex_combination_of_witnesses(l in instance(), t in 0.0..1.0f64) {
                let f1 = feasibility(0.05, &l, 1e6);
                let f2 = feasibility(0.05, &l, 1e3);
                if let (Feasibility::Feasible { powers: p1 }, Feasibility::Feasible { powers: p2 }) = (f1, f2) {
                    let mut p: Vec<f64> = p1.iter().zip(&p2).map(|(a, b)| t * a + (1.0 - t) * b).collect();
                    p.iter_mut().for_each(|v| *v *= 1.5);
                    for s in l.sinr(&p) {
                        prop_assert!(s >= 0.05 * (1.0 - 1e-9));
                    }
                }
            }
        }
    }
}
