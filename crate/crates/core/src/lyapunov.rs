//! Lyapunov function of the closed loop and the anytime bound on the
//! infectious fraction derived from its sublevel sets.
//!
//! In scaled coordinates `𝓘 = B·I`, `𝓡 = B·R` the epidemic storage is
//!
//! ```text
//! 𝔰 = (𝓘 − 𝓘̂) + 𝓘̂ ln(𝓘̂/𝓘) + (𝓡 − 𝓡̂)²/(2γ) + υ²(B − β*)²/2
//! ```
//!
//! with `𝓘̂ = η(B − σ)` and `𝓡̂ = (1 − η)(B − σ)`, both affine in `B`, so `𝔰`
//! is jointly convex. The full Lyapunov function adds the protocol storage:
//! `𝓛 = 𝒮(x, p) + 𝔰`.

use serde::Serialize;

use crate::design::EpidemicGame;
use crate::dynamics::{payoff, Trajectory};
use crate::error::{Error, Result};
use crate::model::{reparameterize, EpidemicParams, SystemState};
use crate::protocol::{ipc_storage, Ipc, Smith};

/// Feasibility slack on `𝔰 ≤ α`, absorbing rounding in the evaluation.
const LEVEL_SLACK: f64 = 1e-15;

/// Largest `υ` considered by [`select_upsilon`] by default.
pub const UPSILON_MAX: f64 = 10.0;

/// `t − 1 − ln t`, accurate near `t = 1`.
fn log_gap(t: f64) -> f64 {
    let u = t - 1.0;
    u - u.ln_1p()
}

fn scaled_reference(params: &EpidemicParams, b: f64) -> (f64, f64) {
    let eta = params.eta();
    let d = b - params.sigma();
    (eta * d, (1.0 - eta) * d)
}

fn storage_unchecked(
    params: &EpidemicParams,
    beta_star: f64,
    upsilon: f64,
    ii: f64,
    rr: f64,
    b: f64,
) -> f64 {
    let (ih, rh) = scaled_reference(params, b);
    let first = if ih > 0.0 { ih * log_gap(ii / ih) } else { ii };
    let dr = rr - rh;
    let db = b - beta_star;
    first + dr * dr / (2.0 * params.gamma()) + 0.5 * upsilon * upsilon * db * db
}

/// `𝔰(𝓘, 𝓡, B)`.
pub fn epidemic_storage(game: &EpidemicGame, ii: f64, rr: f64, b: f64) -> Result<f64> {
    if ii <= 0.0 || ii.is_nan() {
        return Err(Error::NonPositiveInfectious(ii));
    }
    Ok(storage_unchecked(
        &game.params,
        game.target.beta_star,
        game.design.upsilon,
        ii,
        rr,
        b,
    ))
}

/// `𝔰` evaluated at a system state.
pub fn epidemic_storage_at(game: &EpidemicGame, state: &SystemState) -> Result<f64> {
    let s = reparameterize(state, &game.profile);
    epidemic_storage(game, s.infectious, s.recovered, s.transmission)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LyapunovLevel {
    pub alpha: f64,
    /// Protocol storage `𝒮(x, p)`.
    pub storage: f64,
    /// Epidemic storage `𝔰`.
    pub epidemic: f64,
}

/// `𝓛 = 𝒮(x, qβ + r°) + 𝔰` at `state`.
pub fn lyapunov_level(ipc: &dyn Ipc, game: &EpidemicGame, state: &SystemState) -> Result<LyapunovLevel> {
    let epidemic = epidemic_storage_at(game, state)?;
    let p = payoff(&game.profile, &game.target, state.q);
    let storage = ipc_storage(ipc, state.x.as_slice(), &p);
    Ok(LyapunovLevel {
        alpha: storage + epidemic,
        storage,
        epidemic,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DissipationReport {
    /// Smallest `RHS − d𝓛/dt` over interior samples.
    pub worst_margin: f64,
    pub worst_margin_time: f64,
    /// Largest sample-to-sample increase of `𝓛` (negative if it always fell).
    pub max_increase: f64,
    pub max_increase_time: f64,
    pub initial_level: f64,
    /// Largest `𝓛(t) − 𝓛(0)` and largest `𝔰(t) − 𝓛(t)`; both should be `≤ 0`.
    pub max_level_excess: f64,
    pub max_storage_excess: f64,
}

/// Compares a three-point derivative of `𝓛` on the (possibly uneven) sample
/// grid against `−𝒫 − (𝓘 − 𝓘̂)² − (ω/γ)(𝓡 − 𝓡̂)²`.
pub fn dissipation_report(traj: &Trajectory) -> DissipationReport {
    let d = &traj.diagnostics;
    let t = &traj.times;
    let mut rep = DissipationReport {
        worst_margin: f64::INFINITY,
        worst_margin_time: f64::NAN,
        max_increase: f64::NEG_INFINITY,
        max_increase_time: f64::NAN,
        initial_level: d.first().map_or(f64::NAN, |x| x.lyapunov),
        max_level_excess: f64::NEG_INFINITY,
        max_storage_excess: f64::NEG_INFINITY,
    };
    for k in 0..d.len() {
        rep.max_level_excess = rep.max_level_excess.max(d[k].lyapunov - rep.initial_level);
        rep.max_storage_excess = rep.max_storage_excess.max(d[k].epidemic_storage - d[k].lyapunov);
        if k > 0 {
            let inc = d[k].lyapunov - d[k - 1].lyapunov;
            if inc > rep.max_increase {
                rep.max_increase = inc;
                rep.max_increase_time = t[k];
            }
        }
        if k > 0 && k + 1 < d.len() {
            let h1 = t[k] - t[k - 1];
            let h2 = t[k + 1] - t[k];
            let deriv = (h1 * h1 * d[k + 1].lyapunov - h2 * h2 * d[k - 1].lyapunov
                - (h1 * h1 - h2 * h2) * d[k].lyapunov)
                / (h1 * h2 * (h1 + h2));
            let margin = d[k].dissipation_bound - deriv;
            if margin < rep.worst_margin {
                rep.worst_margin = margin;
                rep.worst_margin_time = t[k];
            }
        }
    }
    rep
}

/// [`dissipation_report`], failing when the margin drops below `-tol`.
pub fn check_dissipation(traj: &Trajectory, tol: f64) -> Result<DissipationReport> {
    let rep = dissipation_report(traj);
    if rep.worst_margin < -tol {
        return Err(Error::DissipationViolation {
            t: rep.worst_margin_time,
            margin: rep.worst_margin,
        });
    }
    Ok(rep)
}

/// Range of `B` compatible with `υ²(B − β*)²/2 ≤ α` inside `[β_1, β_n]`.
fn transmission_window(game: &EpidemicGame, alpha: f64) -> (f64, f64) {
    let half = (2.0 * alpha).sqrt() / game.design.upsilon;
    let bs = game.target.beta_star;
    (
        (bs - half).max(game.profile.beta_min()),
        (bs + half).min(game.profile.beta_max()),
    )
}

/// `min 𝔰` over `{𝓘 ≥ vB, 𝓡 ≥ 0, 𝓘 + 𝓡 ≤ B}` at fixed `B`.
fn slice_min(game: &EpidemicGame, v: f64, b: f64) -> f64 {
    let params = &game.params;
    let (ih, rh) = scaled_reference(params, b);
    let ii = (v * b).max(ih);
    let rr = rh.clamp(0.0, (b - ii).max(0.0));
    storage_unchecked(params, game.target.beta_star, game.design.upsilon, ii, rr, b)
}

fn golden_min(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let mut a = hi - INV_PHI * (hi - lo);
    let mut b = lo + INV_PHI * (hi - lo);
    let (mut fa, mut fb) = (f(a), f(b));
    let mut best = f(lo).min(f(hi)).min(fa).min(fb);
    for _ in 0..200 {
        if hi - lo <= 1e-15 * hi.abs().max(1.0) {
            break;
        }
        if fa <= fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - INV_PHI * (hi - lo);
            fa = f(a);
            best = best.min(fa);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + INV_PHI * (hi - lo);
            fb = f(b);
            best = best.min(fb);
        }
    }
    best
}

/// `π*_υ(α) = sup{𝓘/(B·I*) : 𝔰 ≤ α}` over admissible states, to within `tol`.
///
/// Bisects on the ratio `v = 𝓘/B`; each feasibility test minimises the convex
/// function `B ↦ min_{𝓘,𝓡} 𝔰` by golden-section search.
pub fn pi_star(game: &EpidemicGame, alpha: f64, tol: f64) -> Result<f64> {
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidParameter(format!("alpha = {alpha}")));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tol = {tol}")));
    }
    if alpha == 0.0 {
        return Ok(1.0);
    }
    let i_star = game.target.infectious_star;
    let (b_lo, b_hi) = transmission_window(game, alpha);
    let feasible = |v: f64| golden_min(b_lo, b_hi, |b| slice_min(game, v, b)) <= alpha + LEVEL_SLACK;
    let (mut lo, mut hi) = (i_star, 1.0);
    if feasible(hi) {
        return Ok(1.0 / i_star);
    }
    while (hi - lo) / i_star > tol {
        let mid = 0.5 * (lo + hi);
        if feasible(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi) / i_star)
}

/// Brute-force counterpart of [`pi_star`]: the largest `𝓘/(B·I*)` among
/// points of a `grid³` lattice with `𝔰 ≤ α`.
///
/// The lattice covers a box that contains the whole sublevel set:
/// `|B − β*| ≤ √(2α)/υ`, `|𝓡 − 𝓡̂| ≤ √(2γα)` and, from
/// `t − 1 − ln t ≥ (t − 1)²/(2t)`, `𝓘 ≤ 𝓘̂ + α + √(α² + 2α𝓘̂)`.
pub fn pi_star_oracle(game: &EpidemicGame, alpha: f64, grid: usize) -> f64 {
    assert!(grid >= 2, "oracle grid needs at least two points per axis");
    let params = &game.params;
    let (beta_star, upsilon) = (game.target.beta_star, game.design.upsilon);
    let (b_lo, b_hi) = transmission_window(game, alpha);
    let (ih_lo, rh_lo) = scaled_reference(params, b_lo);
    let (ih_hi, rh_hi) = scaled_reference(params, b_hi);
    let i_top = ih_hi + alpha + (alpha * alpha + 2.0 * alpha * ih_hi).sqrt();
    let r_half = (2.0 * params.gamma() * alpha).sqrt();
    let (r_lo, r_hi) = ((rh_lo - r_half).max(0.0), rh_hi + r_half);
    let axis = |lo: f64, hi: f64, k: usize| lo + (hi - lo) * k as f64 / (grid - 1) as f64;

    let mut best = f64::NEG_INFINITY;
    for kb in 0..grid {
        let b = axis(b_lo, b_hi, kb);
        let (ih, rh) = scaled_reference(params, b);
        let db = b - beta_star;
        let b_term = 0.5 * upsilon * upsilon * db * db;
        for kr in 0..grid {
            let rr = axis(r_lo, r_hi, kr);
            let dr = rr - rh;
            let partial = b_term + dr * dr / (2.0 * params.gamma());
            if partial > alpha + LEVEL_SLACK {
                continue;
            }
            // scan 𝓘 downward; the first feasible point is the best for this (B, 𝓡)
            for ki in (0..grid).rev() {
                let ii = axis(ih_lo, i_top, ki);
                if ii / b <= best || ii <= 0.0 {
                    break;
                }
                if ii + rr > b {
                    continue;
                }
                let s = partial + if ih > 0.0 { ih * log_gap(ii / ih) } else { ii };
                if s <= alpha + LEVEL_SLACK {
                    best = ii / b;
                    break;
                }
            }
        }
    }
    best / game.target.infectious_star
}

/// Lower bound on `π*_υ(½υ²β̃²)` valid for every `υ > 0`:
/// `η(1 − σ/β̄)/I*` with `β̄ = min{|β̃| + β*, β_n}` and `β̃ = β° − β*`.
pub fn overshoot_floor(game: &EpidemicGame, beta_o: f64) -> f64 {
    let bs = game.target.beta_star;
    let bar = ((beta_o - bs).abs() + bs).min(game.profile.beta_max());
    game.params.eta() * (1.0 - game.params.sigma() / bar) / game.target.infectious_star
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AnytimeBound {
    /// Initial level `𝓛(0) = ½υ²β̃²`.
    pub alpha: f64,
    pub beta_o: f64,
    /// `π*_υ(α)`; `I(t) ≤ I*·ratio` for all `t ≥ 0`.
    pub ratio: f64,
    pub infectious_bound: f64,
    /// `|B(t) − β*| ≤ |β̃|` for all `t`.
    pub transmission_deviation: f64,
    /// `B(t) ≤ β°` when `β* < β°`.
    pub transmission_upper: Option<f64>,
    pub floor: f64,
}

/// Anytime bound for a start at the endemic equilibrium of `β° = β′x0` with
/// `q(0) = 0`. Requires `𝒮(x0, r°) = 0`, which always holds for two
/// strategies.
pub fn anytime_bound(ipc: &dyn Ipc, game: &EpidemicGame, x0: &[f64], tol: f64) -> Result<AnytimeBound> {
    if x0.len() != game.profile.n() {
        return Err(Error::DimensionMismatch {
            what: "initial x",
            got: x0.len(),
            expected: game.profile.n(),
        });
    }
    let storage = ipc_storage(ipc, x0, &game.target.r_offset);
    if storage > 1e-12 {
        return Err(Error::PreconditionViolated(format!(
            "initial protocol storage {storage:e} is not zero; use the general initial level"
        )));
    }
    let beta_o = game.profile.transmission(x0);
    let tilde = beta_o - game.target.beta_star;
    let upsilon = game.design.upsilon;
    let alpha = 0.5 * upsilon * upsilon * tilde * tilde;
    let ratio = pi_star(game, alpha, tol)?;
    Ok(AnytimeBound {
        alpha,
        beta_o,
        ratio,
        infectious_bound: ratio * game.target.infectious_star,
        transmission_deviation: tilde.abs(),
        transmission_upper: (tilde > 0.0).then_some(beta_o),
        floor: overshoot_floor(game, beta_o),
    })
}

/// Two-strategy form of [`anytime_bound`]: requires `r°` to be constant.
pub fn anytime_bound_n2(ipc: &dyn Ipc, game: &EpidemicGame, x0: &[f64], tol: f64) -> Result<AnytimeBound> {
    let r = &game.target.r_offset;
    if r.iter().any(|v| (v - r[0]).abs() > 1e-12) {
        return Err(Error::PreconditionViolated(
            "payoff offset r° is not constant, initial storage may be positive".into(),
        ));
    }
    anytime_bound(ipc, game, x0, tol)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InitialLevel {
    /// `½υ²β̃² + 𝒮(x0, r°)` with the exact Smith storage.
    pub alpha: f64,
    pub epidemic: f64,
    pub storage: f64,
    /// Same level using the uncorrected closed form of the Smith integral.
    pub alpha_uncorrected: f64,
    pub storage_uncorrected: f64,
}

/// Initial Lyapunov level for an endemic start at `β′x0` with `q(0) = 0`,
/// for any support of `x0`.
pub fn initial_level_general(smith: &Smith, game: &EpidemicGame, x0: &[f64]) -> Result<InitialLevel> {
    if x0.len() != game.profile.n() {
        return Err(Error::DimensionMismatch {
            what: "initial x",
            got: x0.len(),
            expected: game.profile.n(),
        });
    }
    let tilde = game.profile.transmission(x0) - game.target.beta_star;
    let upsilon = game.design.upsilon;
    let epidemic = 0.5 * upsilon * upsilon * tilde * tilde;
    let r = &game.target.r_offset;
    let storage = ipc_storage(smith, x0, r);
    let storage_uncorrected = smith.storage_uncorrected(x0, r);
    Ok(InitialLevel {
        alpha: epidemic + storage,
        epidemic,
        storage,
        alpha_uncorrected: epidemic + storage_uncorrected,
        storage_uncorrected,
    })
}

/// Largest `υ ∈ (0, υ_max]` (to within `tol`) whose anytime bound
/// `π*_υ(½υ²β̃²)` does not exceed `target`.
pub fn select_upsilon(game: &EpidemicGame, beta_o: f64, target: f64, tol: f64, upsilon_max: f64) -> Result<f64> {
    if !(tol > 0.0 && upsilon_max > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "tol = {tol}, upsilon_max = {upsilon_max}"
        )));
    }
    let floor = overshoot_floor(game, beta_o);
    if !(target > floor) {
        return Err(Error::TargetBelowFloor { target, floor });
    }
    let tilde = beta_o - game.target.beta_star;
    let bound = |u: f64| -> Result<f64> {
        pi_star(&game.with_upsilon(u)?, 0.5 * u * u * tilde * tilde, 1e-9)
    };
    if bound(upsilon_max)? <= target {
        return Ok(upsilon_max);
    }
    let (mut lo, mut hi) = (0.0, upsilon_max);
    for _ in 0..200 {
        if lo > 0.0 && hi - lo <= tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if bound(mid)? <= target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if lo == 0.0 {
        return Err(Error::TargetBelowFloor { target, floor });
    }
    Ok(lo)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::DesignParams;
    use crate::model::{PopulationState, StrategyProfile};

    fn game(upsilon: f64) -> EpidemicGame {
        let params = EpidemicParams::new(0.0, 0.1, 0.005, 0.1).unwrap();
        let profile = StrategyProfile::new(vec![0.15, 0.19], vec![0.2, 0.0], &params).unwrap();
        EpidemicGame::new(profile, params, DesignParams::new(0.1, upsilon, 1.0).unwrap()).unwrap()
    }

    fn example_alpha(u: f64) -> f64 {
        0.5 * (u * 0.02).powi(2)
    }

    fn endemic_state(g: &EpidemicGame, x: Vec<f64>, q: f64) -> SystemState {
        let (i, r) = g.params.endemic(g.profile.transmission(&x));
        SystemState::new(i, r, PopulationState::new(x).unwrap(), q).unwrap()
    }

    #[test]
    fn storage_examples() {
        let g = game(0.806);
        let bs = g.target.beta_star;
        let at = epidemic_storage(&g, bs * g.target.infectious_star, bs * g.target.recovered_star, bs).unwrap();
        assert!(at.abs() < 1e-18);
        let s = epidemic_storage_at(&g, &endemic_state(&g, vec![1.0, 0.0], 0.0)).unwrap();
        assert!((s - 1.29928e-4).abs() < 1e-9, "{s}");
        assert!((s - example_alpha(0.806)).abs() < 1e-17);
        assert!(matches!(epidemic_storage(&g, 0.0, 0.1, 0.16), Err(Error::NonPositiveInfectious(_))));
    }

    #[test]
    fn level_examples() {
        let g = game(0.806);
        let smith = Smith::new(0.1, 0.1).unwrap();
        let at_eq = lyapunov_level(&smith, &g, &endemic_state(&g, vec![0.5, 0.5], 0.0)).unwrap();
        assert!(at_eq.alpha.abs() < 1e-18);
        let init = lyapunov_level(&smith, &g, &endemic_state(&g, vec![1.0, 0.0], 0.0)).unwrap();
        assert_eq!(init.storage, 0.0);
        assert!((init.alpha - 1.29928e-4).abs() < 1e-9);
        let moved = lyapunov_level(&smith, &g, &endemic_state(&g, vec![1.0, 0.0], 1.0)).unwrap();
        assert!((moved.storage - smith.phi_integral_exact(0.04)).abs() < 1e-15);
    }

    #[test]
    fn pi_star_examples() {
        let g = game(0.806);
        assert_eq!(pi_star(&g, 0.0, 1e-4).unwrap(), 1.0);
        let v = pi_star(&g, example_alpha(0.806), 1e-6).unwrap();
        assert!((v - 1.3436).abs() < 1e-3, "{v}");
        assert!(v >= overshoot_floor(&g, 0.15));
        assert!((overshoot_floor(&g, 0.15) - 1.1504).abs() < 1e-4);
        assert!(pi_star(&g, -1.0, 1e-4).is_err());
    }

    #[test]
    fn pi_star_is_monotone_in_alpha() {
        let g = game(0.806);
        let mut prev = 1.0;
        for k in 1..=30 {
            let a = 1e-6 * 1.5f64.powi(k);
            let v = pi_star(&g, a, 1e-7).unwrap();
            assert!(v >= prev - 1e-7, "alpha {a}: {v} < {prev}");
            prev = v;
        }
    }

    #[test]
    fn bound_is_monotone_in_upsilon_and_above_floor() {
        let floor = overshoot_floor(&game(1.0), 0.15);
        let mut prev = 0.0;
        for u in [0.1, 0.316, 0.5, 0.806, 1.0, 2.0] {
            let v = pi_star(&game(u), example_alpha(u), 1e-7).unwrap();
            assert!(v >= prev - 1e-7 && v >= floor - 1e-7, "υ = {u}: {v}");
            prev = v;
        }
        assert!(prev > 1.344);
        // small υ pins B but not the epidemic state, so the bound tends to the floor
        let small = pi_star(&game(1e-3), example_alpha(1e-3), 1e-8).unwrap();
        assert!((small - floor).abs() < 1e-3, "{small} vs {floor}");
    }

    #[test]
    fn oracle_matches_on_coarse_grid() {
        let g = game(0.806);
        let a = example_alpha(0.806);
        let exact = pi_star(&g, a, 1e-7).unwrap();
        let coarse = pi_star_oracle(&g, a, 120);
        assert!(coarse <= exact + 1e-7 && exact - coarse < 2e-2, "{coarse} vs {exact}");
        assert!((pi_star_oracle(&g, 0.0, 10) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn anytime_bound_examples() {
        let smith = Smith::new(0.1, 0.1).unwrap();
        let g = game(0.806);
        let b = anytime_bound_n2(&smith, &g, &[1.0, 0.0], 1e-6).unwrap();
        assert!((b.ratio - 1.3436).abs() < 1e-3);
        assert!((b.transmission_deviation - 0.02).abs() < 1e-15);
        assert_eq!(b.transmission_upper, None);
        let at = anytime_bound_n2(&smith, &g, &[0.5, 0.5], 1e-6).unwrap();
        assert_eq!(at.ratio, 1.0);
    }

    #[test]
    fn general_level_examples() {
        let params = EpidemicParams::new(0.0, 0.1, 0.005, 0.1).unwrap();
        let profile = StrategyProfile::new(vec![0.12, 0.15, 0.19], vec![0.3, 0.1, 0.0], &params).unwrap();
        let g = EpidemicGame::new(profile, params, DesignParams::new(0.1, 0.5, 0.07).unwrap()).unwrap();
        let smith = Smith::new(0.1, 0.1).unwrap();
        let l = initial_level_general(&smith, &g, &[1.0, 0.0, 0.0]).unwrap();
        assert!((l.storage - smith.phi_integral_exact(0.07)).abs() < 1e-15);
        assert!((l.epidemic - 0.125 * 0.03f64.powi(2)).abs() < 1e-15);
        assert!(l.alpha_uncorrected >= l.alpha - 1e-15);
        let at = initial_level_general(&smith, &g, &[0.0, 1.0, 0.0]).unwrap();
        assert_eq!(at.alpha, 0.0);
        assert!(matches!(
            anytime_bound_n2(&smith, &g, &[1.0, 0.0, 0.0], 1e-6),
            Err(Error::PreconditionViolated(_))
        ));
        assert!(matches!(
            anytime_bound(&smith, &g, &[1.0, 0.0, 0.0], 1e-6),
            Err(Error::PreconditionViolated(_))
        ));
    }

    #[test]
    fn select_upsilon_examples() {
        let g = game(0.806);
        let u = select_upsilon(&g, 0.15, 2.0, 1e-4, UPSILON_MAX).unwrap();
        assert!(u > 0.806);
        let check = pi_star(&g.with_upsilon(u).unwrap(), example_alpha(u), 1e-8).unwrap();
        assert!(check <= 2.0 + 1e-8);
        assert!(matches!(
            select_upsilon(&g, 0.15, 1.01, 1e-4, UPSILON_MAX),
            Err(Error::TargetBelowFloor { .. })
        ));
        let floor = overshoot_floor(&g, 0.15);
        assert!(select_upsilon(&g, 0.15, floor - 1e-6, 1e-4, UPSILON_MAX).is_err());
        assert_eq!(select_upsilon(&g, 0.15, 1e3, 1e-4, 3.0).unwrap(), 3.0);
    }
}
