//! The closed-loop epidemic population game.
//!
//! State `(I, R, x, q)` evolves as
//!
//! ```text
//! İ = (B(1 − I − R) − σ) I          B = β′x
//! Ṙ = γI − ωR
//! ẋ = 𝒱(x, p)                        p = qβ + r°
//! q̇ = G(I, R, x)
//! ```
//!
//! with `G = (Î − I) + η(ln I − ln Î) + υ²(β* − B) + (B/γ)(R − R̂)(1 − η − R)`
//! and `(Î, R̂)` the endemic fractions at the current `B`.

use std::io::Write;

use serde::Serialize;

use crate::design::{EpidemicGame, DesignTarget};
use crate::error::{Error, Result};
use crate::lyapunov;
use crate::model::{
    dot, project_simplex, reparameterize, EpidemicParams, PopulationState, StrategyProfile,
    SystemState,
};
use crate::ode::{Dopri5, Stats};
use crate::protocol::{self, Protocol};

/// Entries of `x` at least this negative after a step are an invariant
/// breach; smaller excursions are clamped.
pub const X_BREACH: f64 = -1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Saturation {
    Off,
    Bounds { q_min: f64, q_max: f64 },
    /// Bounds `(T̄/λ + ρ)/min_{i≠j}|β_i − β_j|` for protocols that cap rates
    /// beyond a payoff gap. `rho` defaults to `ρ*` for `n ≥ 3` and to zero for
    /// two strategies.
    SmithAuto { rho: Option<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SaturationBounds {
    pub q_min: f64,
    pub q_max: f64,
}

/// Reward rule in force.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Baseline {
    /// The designed payoff mechanism.
    Off,
    /// Static potential-game reward `r = c̃ + μ(x̌ − x)`; no payoff state.
    Naive { mu: f64, x_check: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MechanismConfig {
    pub saturation: Saturation,
    pub baseline: Baseline,
}

impl Default for MechanismConfig {
    fn default() -> Self {
        Self {
            saturation: Saturation::Off,
            baseline: Baseline::Off,
        }
    }
}

/// Reference epidemic `(Î, R̂)` at transmission rate `b`.
pub fn reference_epidemics(params: &EpidemicParams, b: f64) -> (f64, f64) {
    params.endemic(b)
}

/// Payoff-state rate `G`. Has no `q` dependence.
pub fn payoff_state_rate(
    params: &EpidemicParams,
    target: &DesignTarget,
    upsilon: f64,
    infectious: f64,
    recovered: f64,
    b: f64,
) -> Result<f64> {
    if infectious <= 0.0 || infectious.is_nan() {
        return Err(Error::NonPositiveInfectious(infectious));
    }
    let eta = params.eta();
    let (i_hat, r_hat) = params.endemic(b);
    Ok((i_hat - infectious)
        + eta * (infectious.ln() - i_hat.ln())
        + upsilon * upsilon * (target.beta_star - b)
        + (b / params.gamma()) * (recovered - r_hat) * (1.0 - eta - recovered))
}

/// `r = qβ + r*`.
pub fn reward(profile: &StrategyProfile, target: &DesignTarget, q: f64) -> Vec<f64> {
    profile
        .beta()
        .iter()
        .zip(&target.r_star)
        .map(|(b, r)| q * b + r)
        .collect()
}

/// `p = r − c = qβ + r°`.
pub fn payoff(profile: &StrategyProfile, target: &DesignTarget, q: f64) -> Vec<f64> {
    profile
        .beta()
        .iter()
        .zip(&target.r_offset)
        .map(|(b, r)| q * b + r)
        .collect()
}

/// `r = c̃ + μ(x̌ − x)`.
pub fn naive_reward(profile: &StrategyProfile, mu: f64, x_check: &[f64], x: &[f64]) -> Vec<f64> {
    profile
        .ctilde()
        .iter()
        .zip(x_check.iter().zip(x))
        .map(|(c, (xc, xi))| c + mu * (xc - xi))
        .collect()
}

pub fn resolve_saturation(
    saturation: &Saturation,
    protocol: &dyn Protocol,
    game: &EpidemicGame,
) -> Result<Option<SaturationBounds>> {
    match saturation {
        Saturation::Off => Ok(None),
        Saturation::Bounds { q_min, q_max } => {
            if !(*q_min > 0.0 && *q_max > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "saturation bounds must be positive, got q_min = {q_min}, q_max = {q_max}"
                )));
            }
            Ok(Some(SaturationBounds {
                q_min: *q_min,
                q_max: *q_max,
            }))
        }
        Saturation::SmithAuto { rho } => {
            let gap = protocol.saturating_gap().ok_or_else(|| {
                Error::InvalidParameter("automatic saturation needs a rate-capped protocol".into())
            })?;
            let rho = rho.unwrap_or(if game.profile.n() == 2 {
                0.0
            } else {
                game.design.rho_star
            });
            let q = (gap + rho) / game.profile.min_beta_gap();
            Ok(Some(SaturationBounds { q_min: q, q_max: q }))
        }
    }
}

/// `max{−q_min, min{q, q_max}}`, or `q` when saturation is off.
pub fn saturate_q(bounds: Option<SaturationBounds>, q: f64) -> f64 {
    match bounds {
        Some(b) => q.min(b.q_max).max(-b.q_min),
        None => q,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StateDerivative {
    pub infectious: f64,
    pub recovered: f64,
    pub x: Vec<f64>,
    pub q: f64,
}

/// Resolved right-hand side of the closed loop.
pub struct ClosedLoop<'a> {
    pub protocol: &'a dyn Protocol,
    pub game: &'a EpidemicGame,
    pub baseline: &'a Baseline,
    pub saturation: Option<SaturationBounds>,
}

impl<'a> ClosedLoop<'a> {
    pub fn new(protocol: &'a dyn Protocol, game: &'a EpidemicGame, config: &'a MechanismConfig) -> Result<Self> {
        if let Baseline::Naive { mu, x_check } = &config.baseline {
            if !(*mu >= 0.0) {
                return Err(Error::InvalidParameter(format!("baseline gain mu = {mu}")));
            }
            if x_check.len() != game.profile.n() {
                return Err(Error::DimensionMismatch {
                    what: "baseline x_check",
                    got: x_check.len(),
                    expected: game.profile.n(),
                });
            }
        }
        Ok(Self {
            protocol,
            game,
            baseline: &config.baseline,
            saturation: resolve_saturation(&config.saturation, protocol, game)?,
        })
    }

    fn n(&self) -> usize {
        self.game.profile.n()
    }

    /// Reward and payoff actually seen by the agents.
    pub fn reward_and_payoff(&self, x: &[f64], q: f64) -> (Vec<f64>, Vec<f64>) {
        let profile = &self.game.profile;
        let r = match self.baseline {
            Baseline::Off => reward(profile, &self.game.target, saturate_q(self.saturation, q)),
            Baseline::Naive { mu, x_check } => naive_reward(profile, *mu, x_check, x),
        };
        let p = r.iter().zip(profile.cost()).map(|(r, c)| r - c).collect();
        (r, p)
    }

    /// Flat layout `[I, R, x_1..x_n, q]`.
    pub fn rhs(&self, y: &[f64], dy: &mut [f64]) -> Result<()> {
        let n = self.n();
        let (i, r) = (y[0], y[1]);
        let x = &y[2..2 + n];
        let q = y[2 + n];
        let params = &self.game.params;
        let b = self.game.profile.transmission(x);
        dy[0] = (b * (1.0 - i - r) - params.sigma()) * i;
        dy[1] = params.gamma() * i - params.omega() * r;
        let (_, p) = self.reward_and_payoff(x, q);
        protocol::mean_dynamics_into(self.protocol, x, &p, &mut dy[2..2 + n]);
        dy[2 + n] = match self.baseline {
            Baseline::Off => payoff_state_rate(
                params,
                &self.game.target,
                self.game.design.upsilon,
                i,
                r,
                b,
            )?,
            Baseline::Naive { .. } => 0.0,
        };
        Ok(())
    }

    pub fn derivative(&self, state: &SystemState) -> Result<StateDerivative> {
        let y = flatten(state);
        let mut dy = vec![0.0; y.len()];
        self.rhs(&y, &mut dy)?;
        let n = self.n();
        Ok(StateDerivative {
            infectious: dy[0],
            recovered: dy[1],
            x: dy[2..2 + n].to_vec(),
            q: dy[2 + n],
        })
    }

    pub fn diagnostics(&self, state: &SystemState) -> Diagnostics {
        let game = self.game;
        let params = &game.params;
        let x = state.x.as_slice();
        let (reward, payoff) = self.reward_and_payoff(x, state.q);
        let scaled = reparameterize(state, &game.profile);
        let b = scaled.transmission;
        let (i_hat, r_hat) = params.endemic(b);
        let epidemic_storage =
            lyapunov::epidemic_storage(game, scaled.infectious, scaled.recovered, b).unwrap_or(f64::NAN);
        // Lyapunov terms use the unsaturated designed payoff.
        let design_payoff = self::payoff(&game.profile, &game.target, state.q);
        let (storage, dissipation) = match self.protocol.as_ipc() {
            Some(ipc) => (
                protocol::ipc_storage(ipc, x, &design_payoff),
                protocol::ipc_dissipation(ipc, x, &design_payoff),
            ),
            None => (f64::NAN, f64::NAN),
        };
        let di = scaled.infectious - b * i_hat;
        let dr = scaled.recovered - b * r_hat;
        Diagnostics {
            transmission: b,
            reward_cost: dot(&reward, x),
            reward,
            payoff,
            lyapunov: storage + epidemic_storage,
            epidemic_storage,
            storage,
            dissipation,
            dissipation_bound: -dissipation - di * di - params.omega() / params.gamma() * dr * dr,
            i_hat,
            r_hat,
        }
    }
}

pub fn closed_loop_rhs(
    protocol: &dyn Protocol,
    game: &EpidemicGame,
    config: &MechanismConfig,
    state: &SystemState,
) -> Result<StateDerivative> {
    ClosedLoop::new(protocol, game, config)?.derivative(state)
}

/// Right-hand side under the static reward `c̃ + μ(x̌ − x)`; `q` is frozen.
pub fn naive_baseline_rhs(
    protocol: &dyn Protocol,
    game: &EpidemicGame,
    mu: f64,
    x_check: &[f64],
    state: &SystemState,
) -> Result<StateDerivative> {
    let config = MechanismConfig {
        saturation: Saturation::Off,
        baseline: Baseline::Naive {
            mu,
            x_check: x_check.to_vec(),
        },
    };
    closed_loop_rhs(protocol, game, &config, state)
}

fn flatten(state: &SystemState) -> Vec<f64> {
    let mut y = Vec::with_capacity(state.x.as_slice().len() + 3);
    y.push(state.infectious);
    y.push(state.recovered);
    y.extend_from_slice(state.x.as_slice());
    y.push(state.q);
    y
}

fn unflatten(y: &[f64], n: usize) -> SystemState {
    SystemState {
        infectious: y[0],
        recovered: y[1],
        x: PopulationState::new(y[2..2 + n].to_vec())
            .expect("state projected onto the simplex after every step"),
        q: y[2 + n],
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostics {
    pub transmission: f64,
    pub payoff: Vec<f64>,
    pub reward: Vec<f64>,
    /// Instantaneous normalised incentive cost `r′x`.
    pub reward_cost: f64,
    pub lyapunov: f64,
    pub epidemic_storage: f64,
    pub storage: f64,
    pub dissipation: f64,
    /// Right side of the dissipation inequality:
    /// `−𝒫 − (𝓘 − 𝓘̂)² − (ω/γ)(𝓡 − 𝓡̂)²`.
    pub dissipation_bound: f64,
    pub i_hat: f64,
    pub r_hat: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Sampling {
    /// Record on a fixed grid (days).
    Every(f64),
    /// Record after every accepted step.
    EveryStep,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RunOptions {
    pub t_end: f64,
    pub rtol: f64,
    pub atol: f64,
    pub sampling: Sampling,
    /// Accepted plus rejected steps before giving up.
    pub max_steps: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            t_end: 4000.0,
            rtol: 1e-8,
            atol: 1e-10,
            sampling: Sampling::Every(1.0),
            max_steps: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<SystemState>,
    pub diagnostics: Vec<Diagnostics>,
    #[serde(skip)]
    pub stats: Stats,
}

pub fn integrate(
    protocol: &dyn Protocol,
    game: &EpidemicGame,
    config: &MechanismConfig,
    initial: &SystemState,
    opts: &RunOptions,
) -> Result<Trajectory> {
    if !(opts.t_end > 0.0 && opts.t_end.is_finite()) {
        return Err(Error::InvalidParameter(format!("t_end = {}", opts.t_end)));
    }
    if !(opts.rtol > 0.0 && opts.atol > 0.0) {
        return Err(Error::InvalidParameter("tolerances must be positive".into()));
    }
    let n = game.profile.n();
    if initial.x.as_slice().len() != n {
        return Err(Error::DimensionMismatch {
            what: "initial x",
            got: initial.x.as_slice().len(),
            expected: n,
        });
    }
    let initial = SystemState::new(initial.infectious, initial.recovered, initial.x.clone(), initial.q)?;
    let system = ClosedLoop::new(protocol, game, config)?;

    let stops: Vec<f64> = match opts.sampling {
        Sampling::Every(dt) => {
            if !(dt > 0.0) {
                return Err(Error::InvalidParameter(format!("sampling interval {dt}")));
            }
            let count = (opts.t_end / dt).floor() as usize;
            let mut s: Vec<f64> = (1..=count).map(|k| k as f64 * dt).collect();
            if s.last().is_none_or(|t| opts.t_end - t > 1e-9 * opts.t_end) {
                s.push(opts.t_end);
            } else if let Some(last) = s.last_mut() {
                *last = opts.t_end;
            }
            s
        }
        Sampling::EveryStep => vec![opts.t_end],
    };
    let every_step = matches!(opts.sampling, Sampling::EveryStep);

    let mut traj = Trajectory {
        times: vec![0.0],
        diagnostics: vec![system.diagnostics(&initial)],
        states: vec![initial.clone()],
        stats: Stats::default(),
    };
    let solver = Dopri5 {
        rtol: opts.rtol,
        atol: opts.atol,
        max_steps: opts.max_steps,
        ..Dopri5::default()
    };
    traj.stats = solver.solve(
        |_t, y, dy| system.rhs(y, dy),
        0.0,
        &flatten(&initial),
        &stops,
        |t, y| {
            if !(y[0] > 0.0) {
                return Err(Error::InvariantBreach {
                    t,
                    what: format!("infectious fraction {} is not positive", y[0]),
                });
            }
            if y[1] < -1e-9 {
                return Err(Error::InvariantBreach {
                    t,
                    what: format!("recovered fraction {} is negative", y[1]),
                });
            }
            let x = &mut y[2..2 + n];
            if let Some(v) = x.iter().find(|v| **v < X_BREACH) {
                return Err(Error::InvariantBreach {
                    t,
                    what: format!("population share {v} is negative"),
                });
            }
            project_simplex(x);
            if y[1] < 0.0 {
                y[1] = 0.0;
            }
            Ok(())
        },
        |t, y, at_stop| {
            if at_stop || every_step {
                let s = unflatten(y, n);
                traj.diagnostics.push(system.diagnostics(&s));
                traj.states.push(s);
                traj.times.push(t);
            }
            Ok(())
        },
    )?;
    Ok(traj)
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last(&self) -> &SystemState {
        self.states.last().expect("trajectory has at least its initial state")
    }

    /// `max_t I(t) / I*` over the recorded samples.
    pub fn peak_infectious_ratio(&self, target: &DesignTarget) -> f64 {
        self.states
            .iter()
            .map(|s| s.infectious / target.infectious_star)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Distance used for settling: `max(|I−I*|/I*, |R−R*|/R*, |B−β*|)`.
    pub fn settling_error(&self, k: usize, target: &DesignTarget) -> f64 {
        let s = &self.states[k];
        let b = self.diagnostics[k].transmission;
        ((s.infectious - target.infectious_star).abs() / target.infectious_star)
            .max((s.recovered - target.recovered_star).abs() / target.recovered_star)
            .max((b - target.beta_star).abs())
    }

    /// First sample time from which the settling error stays below `tol` for
    /// at least `hold` days, or `None` if that never happens within the run.
    pub fn settling_time(&self, target: &DesignTarget, tol: f64, hold: f64) -> Option<f64> {
        let mut start: Option<usize> = None;
        for k in 0..self.len() {
            if self.settling_error(k, target) < tol {
                let s = *start.get_or_insert(k);
                if self.times[k] - self.times[s] >= hold {
                    return Some(self.times[s]);
                }
            } else {
                start = None;
            }
        }
        None
    }

    /// Trapezoidal time average of `r′x` over `[from, t_end]`.
    pub fn average_reward_cost(&self, from: f64) -> f64 {
        let mut area = 0.0;
        let mut span = 0.0;
        for k in 1..self.len() {
            let (t0, t1) = (self.times[k - 1], self.times[k]);
            if t0 < from {
                continue;
            }
            let dt = t1 - t0;
            area += 0.5 * dt * (self.diagnostics[k - 1].reward_cost + self.diagnostics[k].reward_cost);
            span += dt;
        }
        area / span
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let n = self.states.first().map_or(0, |s| s.x.as_slice().len());
        let mut header: Vec<String> = ["t", "I", "R", "S", "B", "q"].iter().map(|s| s.to_string()).collect();
        header.extend((1..=n).map(|i| format!("x_{i}")));
        header.extend((1..=n).map(|i| format!("r_{i}")));
        header.extend(
            [
                "reward_cost",
                "L",
                "sS",
                "S_storage",
                "P_dissipation",
                "I_hat",
                "R_hat",
            ]
            .iter()
            .map(|s| s.to_string()),
        );
        writeln!(w, "{}", header.join(","))?;
        for ((t, s), d) in self.times.iter().zip(&self.states).zip(&self.diagnostics) {
            let mut row: Vec<f64> = vec![*t, s.infectious, s.recovered, s.susceptible(), d.transmission, s.q];
            row.extend_from_slice(s.x.as_slice());
            row.extend_from_slice(&d.reward);
            row.extend_from_slice(&[
                d.reward_cost,
                d.lyapunov,
                d.epidemic_storage,
                d.storage,
                d.dissipation,
                d.i_hat,
                d.r_hat,
            ]);
            let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
            writeln!(w, "{}", cells.join(","))?;
        }
        Ok(())
    }
}
