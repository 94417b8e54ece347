//! Validated domain types: strategy profiles, SIRS rate parameters and the
//! closed-loop state.
//!
//! All rates are per day.

use serde::Serialize;

use crate::error::{Error, Result};

/// Tolerance on `|Σ x_i − 1|` for a population state.
pub const SIMPLEX_TOL: f64 = 1e-9;

/// Most negative entry accepted (and clamped to zero) in a population state.
pub const NEGATIVE_CLAMP: f64 = -1e-12;

/// SIRS rate constants.
///
/// `sigma = g + sigma_bar` and `omega = g + omega_bar` are the effective
/// exit rates of the infectious and recovered compartments once population
/// growth `g` is folded in.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpidemicParams {
    g: f64,
    sigma_bar: f64,
    omega_bar: f64,
    gamma: f64,
    sigma: f64,
    omega: f64,
    eta: f64,
}

impl EpidemicParams {
    pub fn new(g: f64, sigma_bar: f64, omega_bar: f64, gamma: f64) -> Result<Self> {
        for (name, v) in [
            ("g", g),
            ("sigma_bar", sigma_bar),
            ("omega_bar", omega_bar),
            ("gamma", gamma),
        ] {
            if !v.is_finite() {
                return Err(Error::InvalidEpidemicParams(format!("{name} = {v} is not finite")));
            }
        }
        let sigma = g + sigma_bar;
        let omega = g + omega_bar;
        if sigma <= 0.0 || omega <= 0.0 || gamma <= 0.0 {
            return Err(Error::InvalidEpidemicParams(format!(
                "sigma = {sigma}, omega = {omega} and gamma = {gamma} must all be positive"
            )));
        }
        // gamma == sigma_bar means no background deaths among the infectious.
        if gamma > sigma_bar {
            return Err(Error::InvalidEpidemicParams(format!(
                "recovery rate gamma = {gamma} exceeds sigma_bar = {sigma_bar}"
            )));
        }
        let eta = omega / (omega + gamma);
        Ok(Self {
            g,
            sigma_bar,
            omega_bar,
            gamma,
            sigma,
            omega,
            eta,
        })
    }

    pub fn g(&self) -> f64 {
        self.g
    }
    pub fn sigma_bar(&self) -> f64 {
        self.sigma_bar
    }
    pub fn omega_bar(&self) -> f64 {
        self.omega_bar
    }
    pub fn gamma(&self) -> f64 {
        self.gamma
    }
    pub fn sigma(&self) -> f64 {
        self.sigma
    }
    pub fn omega(&self) -> f64 {
        self.omega
    }
    /// `ω / (ω + γ)`: the infectious share of the non-susceptible endemic mass.
    pub fn eta(&self) -> f64 {
        self.eta
    }

    /// Endemic fractions `(I, R)` of the SIRS model at constant transmission
    /// rate `b`. Both vanish at `b = σ`.
    pub fn endemic(&self, b: f64) -> (f64, f64) {
        let level = 1.0 - self.sigma / b;
        (self.eta * level, (1.0 - self.eta) * level)
    }
}

/// Strategy transmission contributions `β` and intrinsic costs `c`.
///
/// Safer strategies come first: `β` is strictly increasing and `c` strictly
/// decreasing. `ctilde[i] = c[i] − c[n−1]` is the cost relative to the
/// cheapest strategy.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StrategyProfile {
    beta: Vec<f64>,
    cost: Vec<f64>,
    ctilde: Vec<f64>,
}

impl StrategyProfile {
    /// Validates ordering and compatibility with `params` (`β_1 > σ`).
    pub fn new(beta: Vec<f64>, cost: Vec<f64>, params: &EpidemicParams) -> Result<Self> {
        let n = beta.len();
        if n < 2 {
            return Err(Error::TooFewStrategies(n));
        }
        if cost.len() != n {
            return Err(Error::DimensionMismatch {
                what: "cost",
                got: cost.len(),
                expected: n,
            });
        }
        if let Some(v) = beta.iter().chain(&cost).find(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!("non-finite profile entry {v}")));
        }
        for i in 0..n - 1 {
            if beta[i] >= beta[i + 1] {
                return Err(Error::NonMonotoneBeta {
                    index: i,
                    left: beta[i],
                    right: beta[i + 1],
                });
            }
            if cost[i] <= cost[i + 1] {
                return Err(Error::NonMonotoneCost {
                    index: i,
                    left: cost[i],
                    right: cost[i + 1],
                });
            }
        }
        if beta[0] <= params.sigma() {
            return Err(Error::BetaOneNotAboveSigma {
                beta_1: beta[0],
                sigma: params.sigma(),
            });
        }
        let c_n = cost[n - 1];
        let ctilde = cost.iter().map(|c| c - c_n).collect();
        Ok(Self { beta, cost, ctilde })
    }

    pub fn n(&self) -> usize {
        self.beta.len()
    }
    pub fn beta(&self) -> &[f64] {
        &self.beta
    }
    pub fn cost(&self) -> &[f64] {
        &self.cost
    }
    pub fn ctilde(&self) -> &[f64] {
        &self.ctilde
    }
    pub fn beta_min(&self) -> f64 {
        self.beta[0]
    }
    pub fn beta_max(&self) -> f64 {
        self.beta[self.n() - 1]
    }

    /// Aggregate transmission rate `B = β′x`.
    pub fn transmission(&self, x: &[f64]) -> f64 {
        dot(&self.beta, x)
    }

    /// Smallest gap `min_{i≠j} |β_i − β_j|`; adjacent entries suffice since
    /// `β` is sorted.
    pub fn min_beta_gap(&self) -> f64 {
        self.beta
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min)
    }
}

/// A point of the probability simplex.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PopulationState(Vec<f64>);

impl PopulationState {
    /// Accepts entries down to [`NEGATIVE_CLAMP`] (clamped to zero) and a sum
    /// within [`SIMPLEX_TOL`] of one; the result is renormalized.
    pub fn new(x: Vec<f64>) -> Result<Self> {
        if x.is_empty() {
            return Err(Error::NotOnSimplex("empty vector".into()));
        }
        if let Some((i, v)) = x
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v < NEGATIVE_CLAMP)
        {
            return Err(Error::NotOnSimplex(format!("x[{i}] = {v}")));
        }
        let sum: f64 = x.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::NotOnSimplex(format!("entries sum to {sum}")));
        }
        let mut x = x;
        project_simplex(&mut x);
        Ok(Self(x))
    }

    pub fn vertex(n: usize, i: usize) -> Self {
        let mut x = vec![0.0; n];
        x[i] = 1.0;
        Self(x)
    }

    pub fn uniform(n: usize) -> Self {
        Self(vec![1.0 / n as f64; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// Indices with positive mass.
    pub fn support(&self) -> Vec<usize> {
        self.0
            .iter()
            .enumerate()
            .filter(|(_, v)| **v > 0.0)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Clamps negative entries to zero and rescales to unit sum.
pub(crate) fn project_simplex(x: &mut [f64]) {
    for v in x.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    let sum: f64 = x.iter().sum();
    if sum > 0.0 && sum != 1.0 {
        for v in x.iter_mut() {
            *v /= sum;
        }
    }
}

/// Closed-loop state `(I, R, x, q)` with a scalar payoff state `q`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SystemState {
    pub infectious: f64,
    pub recovered: f64,
    pub x: PopulationState,
    pub q: f64,
}

impl SystemState {
    pub fn new(infectious: f64, recovered: f64, x: PopulationState, q: f64) -> Result<Self> {
        if !(infectious > 0.0 && infectious <= 1.0) {
            return Err(Error::InvalidState(format!(
                "infectious fraction {infectious} outside (0, 1]"
            )));
        }
        if !(recovered >= 0.0 && recovered <= 1.0 - infectious + SIMPLEX_TOL) {
            return Err(Error::InvalidState(format!(
                "recovered fraction {recovered} outside [0, {}]",
                1.0 - infectious
            )));
        }
        if !q.is_finite() {
            return Err(Error::InvalidState(format!("payoff state q = {q}")));
        }
        Ok(Self {
            infectious,
            recovered,
            x,
            q,
        })
    }

    pub fn susceptible(&self) -> f64 {
        1.0 - self.infectious - self.recovered
    }
}

/// Epidemic variables scaled by the transmission rate: `(B·I, B·R, B)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scaled {
    pub infectious: f64,
    pub recovered: f64,
    pub transmission: f64,
}

impl Scaled {
    /// Recovers `(I, R)`; `B ≥ β_1 > 0` for every valid state.
    pub fn unscale(&self) -> (f64, f64) {
        (
            self.infectious / self.transmission,
            self.recovered / self.transmission,
        )
    }
}

pub fn reparameterize(state: &SystemState, profile: &StrategyProfile) -> Scaled {
    let b = profile.transmission(state.x.as_slice());
    Scaled {
        infectious: b * state.infectious,
        recovered: b * state.recovered,
        transmission: b,
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn example1() -> EpidemicParams {
        EpidemicParams::new(0.0, 0.1, 0.005, 0.1).unwrap()
    }

    #[test]
    fn example1_profile() {
        let p = StrategyProfile::new(vec![0.15, 0.19], vec![0.2, 0.0], &example1()).unwrap();
        assert_eq!(p.ctilde(), &[0.2, 0.0]);
        assert_eq!(p.n(), 2);
    }

    #[test]
    fn ctilde_is_shifted_cost() {
        let p = StrategyProfile::new(vec![0.12, 0.15, 0.19], vec![0.5, 0.3, 0.2], &example1()).unwrap();
        let want = [0.3, 0.1, 0.0];
        for (a, b) in p.ctilde().iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(*p.ctilde().last().unwrap(), 0.0);
    }

    #[test]
    fn profile_errors() {
        let params = example1();
        assert!(matches!(
            StrategyProfile::new(vec![0.19, 0.15], vec![0.2, 0.0], &params),
            Err(Error::NonMonotoneBeta { index: 0, .. })
        ));
        assert!(matches!(
            StrategyProfile::new(vec![0.15, 0.19], vec![0.0, 0.2], &params),
            Err(Error::NonMonotoneCost { index: 0, .. })
        ));
        assert!(matches!(
            StrategyProfile::new(vec![0.05, 0.19], vec![0.2, 0.0], &params),
            Err(Error::BetaOneNotAboveSigma { .. })
        ));
        assert!(matches!(
            StrategyProfile::new(vec![0.15], vec![0.2], &params),
            Err(Error::TooFewStrategies(1))
        ));
        assert!(matches!(
            StrategyProfile::new(vec![0.15, 0.19], vec![0.2], &params),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn params_validation() {
        assert!(EpidemicParams::new(0.0, 0.1, 0.005, 0.2).is_err());
        assert!(EpidemicParams::new(0.0, 0.1, 0.0, 0.1).is_err());
        assert!(EpidemicParams::new(0.0, 0.1, 0.005, 0.0).is_err());
        let p = EpidemicParams::new(0.01, 0.1, 0.005, 0.05).unwrap();
        assert!((p.sigma() - 0.11).abs() < 1e-15);
        assert!((p.omega() - 0.015).abs() < 1e-15);
    }

    #[test]
    fn reparameterize_examples() {
        let params = example1();
        let profile = StrategyProfile::new(vec![0.15, 0.19], vec![0.2, 0.0], &params).unwrap();
        let s = SystemState::new(0.5, 0.25, PopulationState::vertex(2, 0), 0.0).unwrap();
        let r = reparameterize(&s, &profile);
        assert!((r.infectious - 0.075).abs() < 1e-15);
        assert!((r.recovered - 0.0375).abs() < 1e-15);
        assert_eq!(r.transmission, 0.15);

        let s = SystemState::new(0.5, 0.25, PopulationState::vertex(2, 1), 0.0).unwrap();
        assert_eq!(reparameterize(&s, &profile).transmission, 0.19);

        // reference initial point: I = 1/63, R = 20/63 at B = 0.15.
        let (i0, r0) = params.endemic(0.15);
        let s = SystemState::new(i0, r0, PopulationState::vertex(2, 0), 0.0).unwrap();
        let r = reparameterize(&s, &profile);
        assert!((r.infectious - 0.15 / 63.0).abs() < 1e-15);
        assert!((r.recovered - 3.0 / 63.0).abs() < 1e-15);
        assert!((r.infectious - 0.00238095).abs() < 1e-8);
        assert!((r.recovered - 0.047619).abs() < 1e-6);
        let (i, rr) = r.unscale();
        assert!((i - i0).abs() < 1e-15 && (rr - r0).abs() < 1e-15);
    }

    #[test]
    fn state_rejects_bad_fractions() {
        let x = PopulationState::vertex(2, 0);
        assert!(SystemState::new(0.0, 0.1, x.clone(), 0.0).is_err());
        assert!(SystemState::new(0.5, 0.6, x.clone(), 0.0).is_err());
        assert!(SystemState::new(0.5, -0.1, x.clone(), 0.0).is_err());
        assert!(SystemState::new(0.5, 0.1, x, f64::NAN).is_err());
    }

    #[test]
    fn population_state_clamps_tiny_negatives() {
        let x = PopulationState::new(vec![1.0 + 5e-13, -5e-13]).unwrap();
        assert_eq!(x.as_slice()[1], 0.0);
        assert!((x.as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!(PopulationState::new(vec![1.1, -0.1]).is_err());
        assert!(PopulationState::new(vec![0.5, 0.4]).is_err());
    }

    proptest! {
        #[test]
        fn reparameterize_round_trip(i in 1e-6f64..1.0, rfrac in 0.0f64..1.0, w in 0.0f64..1.0) {
            let params = example1();
            let profile = StrategyProfile::new(vec![0.15, 0.19], vec![0.2, 0.0], &params).unwrap();
            let r = rfrac * (1.0 - i);
            let s = SystemState::new(i, r, PopulationState::new(vec![w, 1.0 - w]).unwrap(), 0.0).unwrap();
            let (ii, rr) = reparameterize(&s, &profile).unscale();
            prop_assert!((ii - i).abs() <= 1e-12);
            prop_assert!((rr - r).abs() <= 1e-12);
        }

        #[test]
        fn simplex_closure(raw in proptest::collection::vec(0.0f64..1.0, 2..6), jitter in -1e-12f64..1e-12) {
            let total: f64 = raw.iter().sum();
            prop_assume!(total > 1e-6);
            let mut x: Vec<f64> = raw.iter().map(|v| v / total).collect();
            x[0] += jitter;
            if let Ok(p) = PopulationState::new(x) {
                let s: f64 = p.as_slice().iter().sum();
                prop_assert!((s - 1.0).abs() <= SIMPLEX_TOL);
                prop_assert!(p.as_slice().iter().all(|v| *v >= NEGATIVE_CLAMP));
            }
        }

        #[test]
        fn eta_identity(omega_bar in 1e-4f64..1.0, gamma in 1e-4f64..1.0) {
            let p = EpidemicParams::new(0.0, gamma, omega_bar, gamma).unwrap();
            let lhs = p.eta() * (p.omega() + p.gamma());
            prop_assert!((lhs - p.omega()).abs() <= 4.0 * f64::EPSILON * p.omega());
            prop_assert!(p.eta() > 0.0 && p.eta() < 1.0);
        }
    }
}
