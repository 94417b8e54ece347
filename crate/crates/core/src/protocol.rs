//! Revision protocols and the mean dynamics they induce on the simplex.
//!
//! A protocol gives the rate `T_ij(x, p) ∈ [0, T̄]` at which agents playing
//! strategy `i` switch to `j`. Impartial pairwise comparison (IPC) protocols
//! depend only on the positive payoff gap, `T_ij = φ_j([p_j − p_i]_+)`, and
//! come with an explicit storage/dissipation pair used by the Lyapunov
//! diagnostics.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};

/// Tie tolerance used by [`best_response`].
pub const BR_TOL: f64 = 1e-9;

pub trait Protocol: Send + Sync {
    /// Switch rate from strategy `from` to strategy `to`.
    fn rate(&self, x: &[f64], p: &[f64], from: usize, to: usize) -> f64;

    /// Upper bound `T̄` on every switch rate.
    fn rate_cap(&self) -> f64;

    /// Payoff gap beyond which every rate is already at its cap, if finite.
    fn saturating_gap(&self) -> Option<f64> {
        None
    }

    /// IPC view, when the protocol has one.
    fn as_ipc(&self) -> Option<&dyn Ipc> {
        None
    }
}

/// Impartial pairwise comparison protocol, described by non-decreasing
/// `φ_j` with `φ_j(0) = 0`.
pub trait Ipc: Send + Sync {
    fn phi(&self, to: usize, gap: f64) -> f64;

    /// `∫_0^a φ_j(ν) dν` for `a ≥ 0`.
    fn phi_integral(&self, to: usize, a: f64) -> f64;
}

/// Smith's protocol: `T_ij = min{λ [p_j − p_i]_+, T̄}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Smith {
    pub lambda: f64,
    pub cap: f64,
}

impl Smith {
    pub fn new(lambda: f64, cap: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite() && cap > 0.0 && cap.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "Smith protocol needs lambda > 0 and cap > 0, got {lambda}, {cap}"
            )));
        }
        Ok(Self { lambda, cap })
    }

    fn phi_scalar(&self, gap: f64) -> f64 {
        (self.lambda * gap.max(0.0)).min(self.cap)
    }

    /// Exact antiderivative of `min{λν, T̄}`.
    pub fn phi_integral_exact(&self, a: f64) -> f64 {
        let a = a.max(0.0);
        let knee = self.cap / self.lambda;
        if a <= knee {
            0.5 * self.lambda * a * a
        } else {
            self.cap * a - self.cap * self.cap / (2.0 * self.lambda)
        }
    }

    /// Unit-gain closed form `½[ν]_+²` below `T̄` and `[ν]_+ T̄` above, without
    /// the `−T̄²/2` continuity correction. Reported next to the exact value.
    pub fn phi_integral_uncorrected(&self, nu: f64) -> f64 {
        let v = nu.max(0.0);
        if nu <= self.cap {
            0.5 * v * v
        } else {
            v * self.cap
        }
    }

    /// Storage `Σ_i Σ_j x_i Φ(p_j − p_i)` with the uncorrected closed form.
    pub fn storage_uncorrected(&self, x: &[f64], p: &[f64]) -> f64 {
        let mut s = 0.0;
        for (i, xi) in x.iter().enumerate() {
            for pj in p {
                s += xi * self.phi_integral_uncorrected(pj - p[i]);
            }
        }
        s
    }
}

impl Protocol for Smith {
    fn rate(&self, _x: &[f64], p: &[f64], from: usize, to: usize) -> f64 {
        self.phi_scalar(p[to] - p[from])
    }

    fn rate_cap(&self) -> f64 {
        self.cap
    }

    fn saturating_gap(&self) -> Option<f64> {
        Some(self.cap / self.lambda)
    }

    fn as_ipc(&self) -> Option<&dyn Ipc> {
        Some(self)
    }
}

impl Ipc for Smith {
    fn phi(&self, _to: usize, gap: f64) -> f64 {
        self.phi_scalar(gap)
    }

    fn phi_integral(&self, _to: usize, a: f64) -> f64 {
        self.phi_integral_exact(a)
    }
}

/// `V_i = Σ_{j≠i} x_j T_ji − x_i Σ_{j≠i} T_ij`.
pub fn mean_dynamics(protocol: &dyn Protocol, x: &[f64], p: &[f64]) -> Vec<f64> {
    let mut v = vec![0.0; x.len()];
    mean_dynamics_into(protocol, x, p, &mut v);
    v
}

/// Writes the mean dynamics into `out`. Each pairwise flow is added to one
/// entry and subtracted from another, so the entries sum to zero up to
/// rounding.
pub fn mean_dynamics_into(protocol: &dyn Protocol, x: &[f64], p: &[f64], out: &mut [f64]) {
    let n = x.len();
    out.iter_mut().for_each(|v| *v = 0.0);
    for i in 0..n {
        if x[i] == 0.0 {
            continue;
        }
        for j in 0..n {
            if i == j {
                continue;
            }
            let flow = x[i] * protocol.rate(x, p, i, j);
            out[i] -= flow;
            out[j] += flow;
        }
    }
}

/// Indices attaining `max_i p_i` within [`BR_TOL`]: the face of the simplex
/// that maximises `p′x`.
pub fn best_response(p: &[f64]) -> Vec<usize> {
    best_response_tol(p, BR_TOL)
}

pub fn best_response_tol(p: &[f64], tol: f64) -> Vec<usize> {
    let max = p.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    p.iter()
        .enumerate()
        .filter(|(_, v)| **v >= max - tol)
        .map(|(i, _)| i)
        .collect()
}

fn gap_integrals(ipc: &dyn Ipc, p: &[f64], i: usize) -> f64 {
    p.iter()
        .enumerate()
        .map(|(j, pj)| ipc.phi_integral(j, (pj - p[i]).max(0.0)))
        .sum()
}

/// IPC mean dynamics computed straight from `φ`.
pub fn ipc_mean_dynamics(ipc: &dyn Ipc, x: &[f64], p: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut v = vec![0.0; n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let flow = x[i] * ipc.phi(j, (p[j] - p[i]).max(0.0));
                v[i] -= flow;
                v[j] += flow;
            }
        }
    }
    v
}

/// `𝒮(x, p) = Σ_i x_i Σ_j ∫_0^{[p_j − p_i]_+} φ_j`.
pub fn ipc_storage(ipc: &dyn Ipc, x: &[f64], p: &[f64]) -> f64 {
    x.iter()
        .enumerate()
        .map(|(i, xi)| xi * gap_integrals(ipc, p, i))
        .sum()
}

/// `𝒫(x, p) = −Σ_i 𝒱_i Σ_j ∫_0^{[p_j − p_i]_+} φ_j`.
pub fn ipc_dissipation(ipc: &dyn Ipc, x: &[f64], p: &[f64]) -> f64 {
    let v = ipc_mean_dynamics(ipc, x, p);
    -v.iter()
        .enumerate()
        .map(|(i, vi)| vi * gap_integrals(ipc, p, i))
        .sum::<f64>()
}

pub fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// Slack in the δ-passivity inequality
/// `∂ₓ𝒮·𝒱 + ∂ₚ𝒮·u ≤ −𝒫 + u′𝒱`, with both partials of `𝒮` taken by central
/// differences of step `h`. IPC protocols satisfy it with equality.
pub fn passivity_slack(ipc: &dyn Ipc, x: &[f64], p: &[f64], u: &[f64], h: f64) -> f64 {
    let v = ipc_mean_dynamics(ipc, x, p);
    let mut xs = x.to_vec();
    let mut ps = p.to_vec();
    let mut lhs = 0.0;
    for i in 0..x.len() {
        xs[i] = x[i] + h;
        let up = ipc_storage(ipc, &xs, p);
        xs[i] = x[i] - h;
        let down = ipc_storage(ipc, &xs, p);
        xs[i] = x[i];
        lhs += (up - down) / (2.0 * h) * v[i];

        ps[i] = p[i] + h;
        let up = ipc_storage(ipc, x, &ps);
        ps[i] = p[i] - h;
        let down = ipc_storage(ipc, x, &ps);
        ps[i] = p[i];
        lhs += (up - down) / (2.0 * h) * u[i];
    }
    let uv: f64 = u.iter().zip(&v).map(|(a, b)| a * b).sum();
    -ipc_dissipation(ipc, x, p) + uv - lhs
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NsReport {
    pub samples: usize,
    pub at_rest: usize,
    pub moving: usize,
    /// Largest `‖𝒱‖` seen among samples supported on a best response.
    pub max_rest_norm: f64,
    /// Smallest `‖𝒱‖` seen among the remaining samples.
    pub min_moving_norm: f64,
}

/// Samples `(x, p)` and checks `𝒱(x, p) = 0 ⇔ support(x) ⊆ argmax p`.
///
/// Payoffs are drawn from a coarse lattice (step `payoff_step`) so exact ties
/// are frequent, and each supported strategy carries at least `min_mass`
/// before normalisation. Samples at rest must have `‖𝒱‖ ≤ eps`; all others
/// must have `‖𝒱‖ > eps`.
pub fn check_nash_stationarity(
    protocol: &dyn Protocol,
    n: usize,
    samples: usize,
    seed: u64,
    eps: f64,
) -> Result<NsReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let payoff_step = 0.25;
    let min_mass = 1e-3;
    let mut report = NsReport {
        samples,
        at_rest: 0,
        moving: 0,
        max_rest_norm: 0.0,
        min_moving_norm: f64::INFINITY,
    };
    for _ in 0..samples {
        let p: Vec<f64> = (0..n)
            .map(|_| rng.gen_range(-4i32..=4) as f64 * payoff_step)
            .collect();
        let br = best_response(&p);
        // Half the samples are built on the best-response face.
        let on_face = rng.gen_bool(0.5);
        let mut x: Vec<f64> = (0..n)
            .map(|i| {
                let keep = if on_face { br.contains(&i) } else { rng.gen_bool(0.7) };
                if keep {
                    rng.gen_range(min_mass..1.0)
                } else {
                    0.0
                }
            })
            .collect();
        if x.iter().all(|v| *v == 0.0) {
            x[rng.gen_range(0..n)] = 1.0;
        }
        let total: f64 = x.iter().sum();
        x.iter_mut().for_each(|v| *v /= total);

        let norm = norm2(&mean_dynamics(protocol, &x, &p));
        let rests = x.iter().enumerate().all(|(i, v)| *v == 0.0 || br.contains(&i));
        if rests {
            report.at_rest += 1;
            report.max_rest_norm = report.max_rest_norm.max(norm);
            if norm > eps {
                return Err(Error::NsViolation { x, p, norm });
            }
        } else {
            report.moving += 1;
            report.min_moving_norm = report.min_moving_norm.min(norm);
            if norm <= eps {
                return Err(Error::NsViolation { x, p, norm });
            }
        }
    }
    Ok(report)
}
