//! Design-time computations: budget case, optimal population target, endemic
//! equilibrium, stationary reward and the payoff-state equilibrium interval.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{dot, EpidemicParams, StrategyProfile};

/// Absolute tolerance on `|c* − c̃_i|` below which the budget is treated as
/// sitting exactly on a cost level.
pub const CASE_TOL: f64 = 1e-9;

/// User-chosen mechanism parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DesignParams {
    pub c_star: f64,
    pub upsilon: f64,
    pub rho_star: f64,
}

impl DesignParams {
    pub fn new(c_star: f64, upsilon: f64, rho_star: f64) -> Result<Self> {
        if !(upsilon > 0.0 && upsilon.is_finite()) {
            return Err(Error::InvalidParameter(format!("upsilon = {upsilon} must be positive")));
        }
        if !(rho_star > 0.0 && rho_star.is_finite()) {
            return Err(Error::InvalidParameter(format!("rho* = {rho_star} must be positive")));
        }
        if !c_star.is_finite() {
            return Err(Error::InvalidParameter(format!("c* = {c_star} is not finite")));
        }
        Ok(Self {
            c_star,
            upsilon,
            rho_star,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CaseKind {
    /// Budget strictly between two adjacent relative cost levels.
    CaseI,
    /// Budget equal to an interior relative cost level (`n ≥ 3` only).
    CaseII,
}

/// Budget case with its pivot strategy (0-based).
///
/// Case I: `c̃[pivot+1] < c* < c̃[pivot]`. Case II: `c* = c̃[pivot]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CaseClassification {
    pub kind: CaseKind,
    pub pivot: usize,
}

/// Closed interval `[lo, hi]` of equilibrium payoff states.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QInterval {
    pub lo: f64,
    pub hi: f64,
}

impl QInterval {
    pub fn contains(&self, q: f64, tol: f64) -> bool {
        q >= self.lo - tol && q <= self.hi + tol
    }

    pub fn distance(&self, q: f64) -> f64 {
        if q < self.lo {
            self.lo - q
        } else if q > self.hi {
            q - self.hi
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DesignTarget {
    pub case: CaseClassification,
    pub beta_star: f64,
    pub x_star: Vec<f64>,
    pub infectious_star: f64,
    pub recovered_star: f64,
    /// Stationary reward `r*`.
    pub r_star: Vec<f64>,
    /// Payoff offset `r° = r* − c`, so that `p = qβ + r°`.
    pub r_offset: Vec<f64>,
    pub rho_star: f64,
    pub zeta1: f64,
    pub zeta2: f64,
    pub q_interval: QInterval,
}

/// Decreasing marginal cost of lowering transmission:
/// `(c_i − c_{i+1})/(β_{i+1} − β_i) > (c_{i+1} − c_{i+2})/(β_{i+2} − β_{i+1})`.
/// Vacuous for two strategies.
pub fn check_assumption1(profile: &StrategyProfile) -> bool {
    assumption1_violation(profile).is_none()
}

fn assumption1_violation(profile: &StrategyProfile) -> Option<Error> {
    let (b, c) = (profile.beta(), profile.cost());
    (0..profile.n().saturating_sub(2)).find_map(|i| {
        let left = (c[i] - c[i + 1]) / (b[i + 1] - b[i]);
        let right = (c[i + 1] - c[i + 2]) / (b[i + 2] - b[i + 1]);
        (left <= right).then_some(Error::Assumption1Violated { index: i, left, right })
    })
}

pub fn classify_case(profile: &StrategyProfile, c_star: f64) -> Result<CaseClassification> {
    let ct = profile.ctilde();
    let n = profile.n();
    if !(c_star > 0.0 && c_star < ct[0]) {
        return Err(Error::BudgetOutOfRange {
            c_star,
            upper: ct[0],
        });
    }
    if n >= 3 {
        if let Some(pivot) = (1..n - 1).find(|&i| (c_star - ct[i]).abs() <= CASE_TOL) {
            return Ok(CaseClassification {
                kind: CaseKind::CaseII,
                pivot,
            });
        }
    }
    let pivot = (0..n - 1)
        .find(|&i| ct[i + 1] < c_star && c_star < ct[i])
        .expect("budget inside (0, c̃_1) always falls between two cost levels");
    Ok(CaseClassification {
        kind: CaseKind::CaseI,
        pivot,
    })
}

/// Whether `rho_star` is admissible for the given case.
pub fn validate_rho(
    profile: &StrategyProfile,
    case: &CaseClassification,
    beta_star: f64,
    rho_star: f64,
) -> bool {
    if profile.n() == 2 || case.kind == CaseKind::CaseI {
        return rho_star > 0.0;
    }
    rho_star >= rho_floor(profile, beta_star) * (1.0 - 1e-12)
}

fn rho_floor(profile: &StrategyProfile, beta_star: f64) -> f64 {
    (profile.beta_max() - beta_star).max(beta_star - profile.beta_min())
}

/// Solves `min β′x s.t. c̃′x ≤ c*, x ∈ simplex` in closed form and assembles
/// everything the mechanism needs at its equilibrium.
pub fn optimal_target(
    profile: &StrategyProfile,
    params: &EpidemicParams,
    c_star: f64,
    rho_star: f64,
) -> Result<DesignTarget> {
    if let Some(err) = assumption1_violation(profile) {
        return Err(err);
    }
    let case = classify_case(profile, c_star)?;
    let n = profile.n();
    let ct = profile.ctilde();
    let mut x_star = vec![0.0; n];
    match case.kind {
        CaseKind::CaseI => {
            let i = case.pivot;
            let w = (c_star - ct[i + 1]) / (ct[i] - ct[i + 1]);
            x_star[i] = w;
            x_star[i + 1] = 1.0 - w;
        }
        CaseKind::CaseII => x_star[case.pivot] = 1.0,
    }
    let beta_star = profile.transmission(&x_star);
    if !validate_rho(profile, &case, beta_star, rho_star) {
        return Err(Error::InvalidRho {
            rho: rho_star,
            required: rho_floor(profile, beta_star),
        });
    }
    let (infectious_star, recovered_star) = params.endemic(beta_star);
    let r_star: Vec<f64> = ct
        .iter()
        .zip(&x_star)
        .map(|(c, x)| if *x == 0.0 { c - rho_star } else { *c })
        .collect();
    let r_offset = r_star.iter().zip(profile.cost()).map(|(r, c)| r - c).collect();
    let zeta1 = rho_star / (profile.beta_max() - beta_star);
    let zeta2 = rho_star / (beta_star - profile.beta_min());
    let q_interval = match case.kind {
        CaseKind::CaseI => QInterval { lo: 0.0, hi: 0.0 },
        CaseKind::CaseII => QInterval {
            lo: -zeta2,
            hi: zeta1,
        },
    };
    Ok(DesignTarget {
        case,
        beta_star,
        x_star,
        infectious_star,
        recovered_star,
        r_star,
        r_offset,
        rho_star,
        zeta1,
        zeta2,
        q_interval,
    })
}

impl DesignTarget {
    /// Long-run reward cost bound: `c*` in Case I, `c* + ζ1*·β*` in Case II.
    pub fn cost_bound(&self, c_star: f64) -> f64 {
        match self.case.kind {
            CaseKind::CaseI => c_star,
            CaseKind::CaseII => c_star + self.zeta1 * self.beta_star,
        }
    }

    pub fn expected_cost(&self, profile: &StrategyProfile) -> f64 {
        dot(profile.ctilde(), &self.x_star)
    }
}

/// A fully designed game: profile, rates, design parameters and the target
/// they induce.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpidemicGame {
    pub profile: StrategyProfile,
    pub params: EpidemicParams,
    pub design: DesignParams,
    pub target: DesignTarget,
}

impl EpidemicGame {
    pub fn new(profile: StrategyProfile, params: EpidemicParams, design: DesignParams) -> Result<Self> {
        let target = optimal_target(&profile, &params, design.c_star, design.rho_star)?;
        Ok(Self {
            profile,
            params,
            design,
            target,
        })
    }

    /// Same game with a different `υ`; the target does not depend on it.
    pub fn with_upsilon(&self, upsilon: f64) -> Result<Self> {
        let design = DesignParams::new(self.design.c_star, upsilon, self.design.rho_star)?;
        Ok(Self {
            design,
            ..self.clone()
        })
    }
}

/// Brute-force minimum of `β′x` over the lattice `{k/N : Σk = N}` of the
/// simplex subject to `c̃′x ≤ c*`.
///
/// The first `n − 2` coordinates are enumerated; along the remaining pair
/// `(n−2, n−1)` cost rises and transmission falls as mass moves toward the
/// lower index, so the largest feasible lattice split is picked directly.
/// Meant for validation at small `n`.
pub fn lp_oracle_beta_star(profile: &StrategyProfile, c_star: f64, resolution: usize) -> f64 {
    let n = profile.n();
    assert!(n <= 4, "lattice oracle is limited to n <= 4");
    let (b, ct) = (profile.beta(), profile.ctilde());
    let res = resolution as i64;
    let mut best = f64::INFINITY;
    let mut prefix = vec![0i64; n - 2];
    loop {
        let used: i64 = prefix.iter().sum();
        if used <= res {
            let rest = res - used;
            let cost_prefix: f64 = prefix.iter().zip(ct).map(|(k, c)| *k as f64 * c).sum();
            let beta_prefix: f64 = prefix.iter().zip(b).map(|(k, v)| *k as f64 * v).sum();
            let (lo, hi) = (n - 2, n - 1);
            // cost(k) = (cost_prefix + k c̃_lo + (rest − k) c̃_hi) / N ≤ c*
            let slack = c_star * res as f64 - cost_prefix - rest as f64 * ct[hi];
            if slack >= -1e-12 * res as f64 {
                let k = ((slack / (ct[lo] - ct[hi])) + 1e-9).floor().clamp(0.0, rest as f64) as i64;
                let val = (beta_prefix + k as f64 * b[lo] + (rest - k) as f64 * b[hi]) / res as f64;
                best = best.min(val);
            }
        }
        // odometer over prefix coordinates
        let mut d = 0;
        loop {
            if d == prefix.len() {
                return best;
            }
            prefix[d] += 1;
            if prefix.iter().sum::<i64>() <= res {
                break;
            }
            prefix[d] = 0;
            d += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> EpidemicParams {
        EpidemicParams::new(0.0, 0.1, 0.005, 0.1).unwrap()
    }

    fn example1() -> StrategyProfile {
        StrategyProfile::new(vec![0.15, 0.19], vec![0.2, 0.0], &params()).unwrap()
    }

    fn three() -> StrategyProfile {
        StrategyProfile::new(vec![0.12, 0.15, 0.19], vec![0.3, 0.1, 0.0], &params()).unwrap()
    }

    #[test]
    fn assumption1_examples() {
        assert!(check_assumption1(&example1()));
        assert!(check_assumption1(&three()));
        let bad = StrategyProfile::new(vec![0.12, 0.15, 0.19], vec![0.3, 0.29, 0.0], &params()).unwrap();
        assert!(!check_assumption1(&bad));
        assert!(matches!(
            optimal_target(&bad, &params(), 0.1, 1.0),
            Err(Error::Assumption1Violated { index: 0, .. })
        ));
    }

    #[test]
    fn classification() {
        let c = classify_case(&example1(), 0.1).unwrap();
        assert_eq!(c, CaseClassification { kind: CaseKind::CaseI, pivot: 0 });
        let c = classify_case(&three(), 0.1).unwrap();
        assert_eq!(c, CaseClassification { kind: CaseKind::CaseII, pivot: 1 });
        let c = classify_case(&three(), 0.1 + 5e-10).unwrap();
        assert_eq!(c.kind, CaseKind::CaseII);
        let c = classify_case(&three(), 0.2).unwrap();
        assert_eq!(c, CaseClassification { kind: CaseKind::CaseI, pivot: 0 });
        let c = classify_case(&three(), 0.05).unwrap();
        assert_eq!(c, CaseClassification { kind: CaseKind::CaseI, pivot: 1 });
        for bad in [0.0, -0.1, 0.2 + 1e-12, 0.3] {
            assert!(matches!(
                classify_case(&example1(), bad),
                Err(Error::BudgetOutOfRange { .. })
            ));
        }
    }

    #[test]
    fn example1_target() {
        let t = optimal_target(&example1(), &params(), 0.1, 1.0).unwrap();
        assert!((t.beta_star - 0.17).abs() < 1e-12);
        assert!((t.x_star[0] - 0.5).abs() < 1e-12 && (t.x_star[1] - 0.5).abs() < 1e-12);
        assert!((t.infectious_star - 0.019608).abs() < 1e-6);
        assert!((t.recovered_star - 0.392157).abs() < 1e-6);
        assert_eq!(t.r_star, vec![0.2, 0.0]);
        assert_eq!(t.r_offset, vec![0.0, 0.0]);
        assert_eq!(t.q_interval, QInterval { lo: 0.0, hi: 0.0 });
        assert!((t.infectious_star / t.recovered_star - 0.005 / 0.1).abs() < 1e-14);
    }

    #[test]
    fn case_two_target() {
        let t = optimal_target(&three(), &params(), 0.1, 0.07).unwrap();
        assert_eq!(t.case.kind, CaseKind::CaseII);
        assert_eq!(t.x_star, vec![0.0, 1.0, 0.0]);
        assert_eq!(t.beta_star, 0.15);
        let want = [0.3 - 0.07, 0.1, -0.07];
        for (a, b) in t.r_star.iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!((t.zeta1 - 1.75).abs() < 1e-12);
        assert!((t.zeta2 - 0.07 / 0.03).abs() < 1e-12);
        assert!((t.q_interval.lo + 0.07 / 0.03).abs() < 1e-12);
        assert!((t.q_interval.hi - 1.75).abs() < 1e-12);
        assert!((t.cost_bound(0.1) - (0.1 + 1.75 * 0.15)).abs() < 1e-12);
    }

    #[test]
    fn rho_rules() {
        let case2 = CaseClassification { kind: CaseKind::CaseII, pivot: 1 };
        assert!(validate_rho(&three(), &case2, 0.15, 0.04));
        assert!(!validate_rho(&three(), &case2, 0.15, 0.03));
        assert!(matches!(
            optimal_target(&three(), &params(), 0.1, 0.03),
            Err(Error::InvalidRho { .. })
        ));
        let case1 = CaseClassification { kind: CaseKind::CaseI, pivot: 0 };
        assert!(validate_rho(&three(), &case1, 0.13, 1e-6));
        assert!(validate_rho(&example1(), &case1, 0.17, 1e-9));
    }

    #[test]
    fn endemic_vanishes_at_sigma() {
        let (i, r) = params().endemic(0.1);
        assert_eq!((i, r), (0.0, 0.0));
    }

    #[test]
    fn infectious_star_increasing_in_beta_star() {
        let p = params();
        let h = 1e-6;
        let mut b = p.sigma() + 1e-3;
        while b < 0.19 {
            let d = (p.endemic(b + h).0 - p.endemic(b - h).0) / (2.0 * h);
            assert!(d > 0.0, "dI*/dβ* = {d} at {b}");
            b += 1e-3;
        }
    }

    #[test]
    fn oracle_examples() {
        let p = example1();
        let v = lp_oracle_beta_star(&p, 0.1, 1000);
        assert!((0.17 - 1e-12..=0.17 + 0.04 / 1000.0).contains(&v));
        assert_eq!(lp_oracle_beta_star(&p, 0.2, 1000), 0.15);
        assert_eq!(lp_oracle_beta_star(&p, 0.5, 1000), 0.15);
        assert!((lp_oracle_beta_star(&p, 1e-9, 1000) - 0.19).abs() < 1e-12);
        let v = lp_oracle_beta_star(&three(), 0.1, 1000);
        assert!((v - 0.15).abs() < 1e-12);
    }

    // x* is the only maximiser of x'(r* − c) among simplex points with β'x = β*.
    // For n = 3 the constraint line is walked exactly, parametrised by x_3.
    #[test]
    fn target_is_unique_constrained_best_response() {
        for (profile, c_star, rho) in [(three(), 0.1, 0.07), (three(), 0.2, 0.05), (three(), 0.05, 0.5)] {
            let t = optimal_target(&profile, &params(), c_star, rho).unwrap();
            let b = profile.beta();
            let at_star = dot(&t.x_star, &t.r_offset);
            let mut visited = 0;
            for k in 0..=4000 {
                let s = k as f64 / 4000.0;
                let x1 = (b[1] + (b[2] - b[1]) * s - t.beta_star) / (b[1] - b[0]);
                let x = [x1, 1.0 - x1 - s, s];
                if x.iter().any(|v| *v < 0.0) {
                    continue;
                }
                let dist: f64 = x.iter().zip(&t.x_star).map(|(a, b)| (a - b).abs()).sum();
                if dist < 1e-9 {
                    continue;
                }
                visited += 1;
                assert!(dot(&x, &t.r_offset) < at_star, "x = {x:?} ties x*");
            }
            assert!(visited > 100);
        }
    }
}
