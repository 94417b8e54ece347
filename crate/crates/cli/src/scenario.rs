//! Scenario files (TOML) and their validation into library types.

use std::path::Path;

use epigame::design::{check_assumption1, CaseKind, DesignParams, EpidemicGame};
use epigame::dynamics::{Baseline, MechanismConfig, RunOptions, Sampling, Saturation};
use epigame::model::{EpidemicParams, PopulationState, StrategyProfile, SystemState};
use epigame::protocol::Smith;
use serde::{Deserialize, Serialize};

use crate::fail::Failure;

/// Tolerance for `β′x = b` in the endemic shorthand and for the design
/// round-trip check.
const MATCH_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub name: Option<String>,
    pub profile: ProfileSpec,
    pub epidemic: EpidemicSpec,
    pub design: DesignSpec,
    pub protocol: ProtocolSpec,
    pub initial: InitialSpec,
    #[serde(default)]
    pub run: RunSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bound: Option<BoundSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_design: Option<DesignReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileSpec {
    pub beta: Vec<f64>,
    pub cost: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpidemicSpec {
    #[serde(default)]
    pub g: f64,
    pub sigma_bar: f64,
    pub omega_bar: f64,
    pub gamma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignSpec {
    pub c_star: f64,
    pub upsilon: f64,
    pub rho_star: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, tag = "kind", rename_all = "kebab-case")]
pub enum ProtocolSpec {
    Smith { lambda: f64, cap: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSpec {
    /// Start at the endemic equilibrium of this transmission rate, `q = 0`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endemic_at_beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub infectious: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recovered: Option<f64>,
    pub x: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    #[serde(default = "default_t_end")]
    pub t_end: f64,
    #[serde(default = "default_rtol")]
    pub rtol: f64,
    #[serde(default = "default_atol")]
    pub atol: f64,
    /// Output spacing in days; ignored when `every_step` is set.
    #[serde(default = "default_sample_every")]
    pub sample_every: f64,
    #[serde(default)]
    pub every_step: bool,
    #[serde(default = "default_max_steps")]
    pub max_steps: usize,
    #[serde(default)]
    pub saturation: SaturationSpec,
    #[serde(default)]
    pub baseline: BaselineSpec,
}

fn default_t_end() -> f64 {
    4000.0
}
fn default_rtol() -> f64 {
    1e-8
}
fn default_atol() -> f64 {
    1e-10
}
fn default_sample_every() -> f64 {
    1.0
}
fn default_max_steps() -> usize {
    1_000_000
}

impl Default for RunSpec {
    fn default() -> Self {
        Self {
            t_end: default_t_end(),
            rtol: default_rtol(),
            atol: default_atol(),
            sample_every: default_sample_every(),
            every_step: false,
            max_steps: default_max_steps(),
            saturation: SaturationSpec::Off,
            baseline: BaselineSpec::Off,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, tag = "mode", rename_all = "kebab-case")]
pub enum SaturationSpec {
    #[default]
    Off,
    Bounds {
        q_min: f64,
        q_max: f64,
    },
    SmithAuto {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        rho: Option<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, tag = "mode", rename_all = "kebab-case")]
pub enum BaselineSpec {
    #[default]
    Off,
    Naive {
        mu: f64,
        x_check: Vec<f64>,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundSpec {
    /// Explicit list of `υ` values.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upsilons: Option<Vec<f64>>,
    /// Evenly spaced `υ` values `[from, to]`, used when `upsilons` is absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upsilon_range: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle_grid: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub overshoot_target: Option<f64>,
}

impl BoundSpec {
    pub fn upsilon_grid(&self) -> Vec<f64> {
        if let Some(list) = &self.upsilons {
            return list.clone();
        }
        let [from, to] = self.upsilon_range.unwrap_or([0.05, 2.5]);
        let points = self.points.unwrap_or(100).max(2);
        (0..points)
            .map(|k| from + (to - from) * k as f64 / (points - 1) as f64)
            .collect()
    }
}

/// Everything the design step produces, in report form. Strategy indices
/// are 1-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignReport {
    pub case: String,
    pub pivot: usize,
    pub assumption1: bool,
    pub beta_star: f64,
    pub x_star: Vec<f64>,
    pub infectious_star: f64,
    pub recovered_star: f64,
    pub r_star: Vec<f64>,
    pub rho_star: f64,
    pub rho_valid: bool,
    pub zeta1: f64,
    pub zeta2: f64,
    pub q_interval: [f64; 2],
}

impl DesignReport {
    pub fn from_game(game: &EpidemicGame) -> Self {
        let t = &game.target;
        Self {
            case: match t.case.kind {
                CaseKind::CaseI => "I".into(),
                CaseKind::CaseII => "II".into(),
            },
            pivot: t.case.pivot + 1,
            assumption1: check_assumption1(&game.profile),
            beta_star: t.beta_star,
            x_star: t.x_star.clone(),
            infectious_star: t.infectious_star,
            recovered_star: t.recovered_star,
            r_star: t.r_star.clone(),
            rho_star: t.rho_star,
            // the target only exists when rho* passed validation
            rho_valid: true,
            zeta1: t.zeta1,
            zeta2: t.zeta2,
            q_interval: [t.q_interval.lo, t.q_interval.hi],
        }
    }

    /// First field that differs from `other` beyond tolerance.
    pub fn mismatch(&self, other: &Self) -> Option<String> {
        let close = |a: f64, b: f64| (a - b).abs() <= MATCH_TOL * a.abs().max(b.abs()).max(1.0)
            || (a.is_infinite() && a == b);
        let all_close = |a: &[f64], b: &[f64]| a.len() == b.len() && a.iter().zip(b).all(|(x, y)| close(*x, *y));
        let checks: [(&str, bool); 13] = [
            ("case", self.case == other.case),
            ("pivot", self.pivot == other.pivot),
            ("assumption1", self.assumption1 == other.assumption1),
            ("beta_star", close(self.beta_star, other.beta_star)),
            ("x_star", all_close(&self.x_star, &other.x_star)),
            ("infectious_star", close(self.infectious_star, other.infectious_star)),
            ("recovered_star", close(self.recovered_star, other.recovered_star)),
            ("r_star", all_close(&self.r_star, &other.r_star)),
            ("rho_star", close(self.rho_star, other.rho_star)),
            ("rho_valid", self.rho_valid == other.rho_valid),
            ("zeta1", close(self.zeta1, other.zeta1)),
            ("zeta2", close(self.zeta2, other.zeta2)),
            ("q_interval", all_close(&self.q_interval, &other.q_interval)),
        ];
        checks.iter().find(|(_, ok)| !ok).map(|(name, _)| name.to_string())
    }
}

/// A validated scenario.
pub struct Scenario {
    pub name: String,
    pub file: ScenarioFile,
    pub game: EpidemicGame,
    pub protocol: Smith,
    pub initial: SystemState,
    pub config: MechanismConfig,
    pub run: RunOptions,
}

impl ScenarioFile {
    pub fn read(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::validation(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|f| f.context(&path.display().to_string()))
    }

    pub fn parse(text: &str) -> Result<Self, Failure> {
        toml::from_str(text).map_err(|e| Failure::validation(format!("malformed scenario: {e}")))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serialises to TOML")
    }

    /// Runs every model and design validation.
    pub fn validate(self, fallback_name: &str) -> Result<Scenario, Failure> {
        let e = &self.epidemic;
        let params = EpidemicParams::new(e.g, e.sigma_bar, e.omega_bar, e.gamma)?;
        let profile = StrategyProfile::new(self.profile.beta.clone(), self.profile.cost.clone(), &params)?;
        let d = &self.design;
        let game = EpidemicGame::new(profile, params, DesignParams::new(d.c_star, d.upsilon, d.rho_star)?)?;

        if let Some(expected) = &self.expected_design {
            if let Some(field) = expected.mismatch(&DesignReport::from_game(&game)) {
                return Err(Failure::validation(format!(
                    "DesignMismatch: recorded design disagrees with the recomputed one in `{field}`"
                )));
            }
        }

        let protocol = match self.protocol {
            ProtocolSpec::Smith { lambda, cap } => Smith::new(lambda, cap)?,
        };
        let initial = self.initial.build(&game)?;
        let config = MechanismConfig {
            saturation: match &self.run.saturation {
                SaturationSpec::Off => Saturation::Off,
                SaturationSpec::Bounds { q_min, q_max } => Saturation::Bounds {
                    q_min: *q_min,
                    q_max: *q_max,
                },
                SaturationSpec::SmithAuto { rho } => Saturation::SmithAuto { rho: *rho },
            },
            baseline: match &self.run.baseline {
                BaselineSpec::Off => Baseline::Off,
                BaselineSpec::Naive { mu, x_check } => Baseline::Naive {
                    mu: *mu,
                    x_check: x_check.clone(),
                },
            },
        };
        // resolves and checks saturation bounds and baseline dimensions
        epigame::dynamics::ClosedLoop::new(&protocol, &game, &config)?;
        let r = &self.run;
        if !(r.t_end > 0.0 && r.max_steps > 0 && r.rtol > 0.0 && r.atol > 0.0 && r.sample_every > 0.0) {
            return Err(Failure::validation(
                "InvalidParameter: run needs positive t_end, max_steps, rtol, atol and sample_every".into(),
            ));
        }
        let run = RunOptions {
            t_end: r.t_end,
            rtol: r.rtol,
            atol: r.atol,
            sampling: if r.every_step {
                Sampling::EveryStep
            } else {
                Sampling::Every(r.sample_every)
            },
            max_steps: r.max_steps,
        };
        Ok(Scenario {
            name: self.name.clone().unwrap_or_else(|| fallback_name.to_string()),
            file: self,
            game,
            protocol,
            initial,
            config,
            run,
        })
    }
}

impl InitialSpec {
    fn build(&self, game: &EpidemicGame) -> Result<SystemState, Failure> {
        let n = game.profile.n();
        if self.x.len() != n {
            return Err(epigame::Error::DimensionMismatch {
                what: "initial x",
                got: self.x.len(),
                expected: n,
            }
            .into());
        }
        let x = PopulationState::new(self.x.clone())?;
        match self.endemic_at_beta {
            Some(b) => {
                if self.infectious.is_some() || self.recovered.is_some() || self.q.is_some_and(|q| q != 0.0) {
                    return Err(Failure::validation(
                        "InvalidState: endemic_at_beta fixes I, R and q = 0; do not set them".into(),
                    ));
                }
                let bx = game.profile.transmission(x.as_slice());
                if (bx - b).abs() > MATCH_TOL {
                    return Err(Failure::validation(format!(
                        "InvalidState: endemic_at_beta = {b} but beta'x = {bx}"
                    )));
                }
                let (i, r) = game.params.endemic(b);
                Ok(SystemState::new(i, r, x, 0.0)?)
            }
            None => {
                let (Some(i), Some(r)) = (self.infectious, self.recovered) else {
                    return Err(Failure::validation(
                        "InvalidState: give either endemic_at_beta or both infectious and recovered".into(),
                    ));
                };
                Ok(SystemState::new(i, r, x, self.q.unwrap_or(0.0))?)
            }
        }
    }
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("scenario");
        ScenarioFile::read(path)?
            .validate(stem)
            .map_err(|f| f.context(&path.display().to_string()))
    }

    /// Whether the start is the endemic equilibrium of `β′x(0)` with `q = 0`,
    /// the hypothesis behind the anytime bound.
    pub fn starts_endemic(&self) -> bool {
        let s = &self.initial;
        let b = self.game.profile.transmission(s.x.as_slice());
        let (i, r) = self.game.params.endemic(b);
        s.q == 0.0 && (s.infectious - i).abs() <= 1e-12 && (s.recovered - r).abs() <= 1e-12
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const EXAMPLE: &str = r#"
name = "example1"

[profile]
beta = [0.15, 0.19]
cost = [0.2, 0.0]

[epidemic]
g = 0.0
sigma_bar = 0.1
omega_bar = 0.005
gamma = 0.1

[design]
c_star = 0.1
upsilon = 0.806
rho_star = 1.0

[protocol]
kind = "smith"
lambda = 0.1
cap = 0.1

[initial]
endemic_at_beta = 0.15
x = [1.0, 0.0]
"#;

    #[test]
    fn parses_example() {
        let s = ScenarioFile::parse(EXAMPLE).unwrap().validate("x").unwrap();
        assert_eq!(s.name, "example1");
        assert!((s.game.target.beta_star - 0.17).abs() < 1e-12);
        assert!(s.starts_endemic());
        assert_eq!(s.run.t_end, 4000.0);
        assert_eq!(s.config, MechanismConfig::default());
    }

    #[test]
    fn round_trips_through_toml() {
        let mut file = ScenarioFile::parse(EXAMPLE).unwrap();
        let game = file.clone().validate("x").unwrap().game;
        file.expected_design = Some(DesignReport::from_game(&game));
        file.run.saturation = SaturationSpec::SmithAuto { rho: Some(0.0) };
        let again = ScenarioFile::parse(&file.to_toml()).unwrap();
        assert_eq!(again, file);
        assert!(again.validate("x").is_ok());
    }

    #[test]
    fn rejects_tampered_design() {
        let mut file = ScenarioFile::parse(EXAMPLE).unwrap();
        let game = file.clone().validate("x").unwrap().game;
        let mut report = DesignReport::from_game(&game);
        report.beta_star = 0.16;
        file.expected_design = Some(report);
        let err = file.validate("x").err().unwrap();
        assert_eq!(err.code, 2);
        assert!(err.message.contains("beta_star"));
    }

    #[test]
    fn endemic_shorthand_checks_beta() {
        let text = EXAMPLE.replace("x = [1.0, 0.0]", "x = [0.5, 0.5]");
        let err = ScenarioFile::parse(&text).unwrap().validate("x").err().unwrap();
        assert_eq!(err.code, 2);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = EXAMPLE.replace("c_star = 0.1", "c_star = 0.1\ncstar = 0.2");
        assert_eq!(ScenarioFile::parse(&text).err().unwrap().code, 2);
    }

    #[test]
    fn upsilon_grid_defaults() {
        let spec = BoundSpec {
            upsilons: None,
            upsilon_range: None,
            points: None,
            oracle_grid: None,
            overshoot_target: None,
        };
        let grid = spec.upsilon_grid();
        assert_eq!(grid.len(), 100);
        assert_eq!(grid[0], 0.05);
        assert!((grid[99] - 2.5).abs() < 1e-15);
    }
}
