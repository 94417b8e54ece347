use std::fmt::Write as _;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use epigame::design::CaseKind;
use epigame::dynamics::{integrate, Trajectory};
use epigame::lyapunov::{
    initial_level_general, pi_star, pi_star_oracle, overshoot_floor, select_upsilon, UPSILON_MAX,
};
use rayon::prelude::*;
use serde::Deserialize;

use crate::fail::Failure;
use crate::plot::{render, Panel, Series};
use crate::scenario::{DesignReport, Scenario, ScenarioFile};

/// Settling criterion: relative error below this, held for `SETTLE_HOLD` days.
const SETTLE_TOL: f64 = 1e-3;
const SETTLE_HOLD: f64 = 100.0;
/// Window (days) for the long-run average of `r′x`.
const COST_WINDOW: f64 = 1000.0;

/// What a command produced, beyond the files it wrote.
#[derive(Debug, Default)]
pub struct Outcome {
    pub text: String,
    pub beta_star: Option<f64>,
    pub upsilon: Option<f64>,
    pub peak_ratio: Option<f64>,
    pub settling_time: Option<f64>,
    pub mean_reward_cost: Option<f64>,
    pub bound_ratio: Option<f64>,
    pub curve: Vec<BoundRow>,
    pub trace: Option<Trace>,
}

#[derive(Debug, Clone)]
pub struct BoundRow {
    pub upsilon: f64,
    pub alpha: f64,
    pub pi_star: f64,
    pub floor: f64,
    pub oracle: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Trace {
    pub times: Vec<f64>,
    pub infectious_ratio: Vec<f64>,
    pub reward_cost: Vec<f64>,
}

/// Four significant figures.
pub fn sig4(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let decimals = (3 - v.abs().log10().floor() as i32).max(0) as usize;
    format!("{v:.decimals$}")
}

/// Shortest readable form, rounded to 12 significant figures.
pub fn num(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let decimals = (11 - v.abs().log10().floor() as i32).clamp(0, 17) as usize;
    let s = format!("{v:.decimals$}");
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

fn percent(v: f64) -> String {
    format!("{}%", sig4(100.0 * v))
}

fn vector(v: &[f64]) -> String {
    let items: Vec<String> = v.iter().map(|x| num(*x)).collect();
    format!("({})", items.join(", "))
}

fn ensure_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure::io(&format!("cannot create {}", dir.display()), e))
}

fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    fs::write(path, contents).map_err(|e| Failure::io(&format!("cannot write {}", path.display()), e))
}

pub fn design(s: &Scenario, out: Option<&Path>) -> Result<Outcome, Failure> {
    let report = DesignReport::from_game(&s.game);
    let mut text = String::new();
    let _ = writeln!(text, "scenario: {}", s.name);
    let _ = writeln!(text, "case: {} (pivot strategy {})", report.case, report.pivot);
    let _ = writeln!(
        text,
        "assumption 1: {}",
        if report.assumption1 { "holds" } else { "fails" }
    );
    let _ = writeln!(text, "beta*: {}", num(report.beta_star));
    let _ = writeln!(text, "x*: {}", vector(&report.x_star));
    let _ = writeln!(
        text,
        "(I*, R*): ({}, {})",
        percent(report.infectious_star),
        percent(report.recovered_star)
    );
    let _ = writeln!(text, "r*: {}", vector(&report.r_star));
    let _ = writeln!(text, "rho*: {} (valid)", num(report.rho_star));
    let _ = writeln!(text, "zeta1*: {}  zeta2*: {}", num(report.zeta1), num(report.zeta2));
    match s.game.target.case.kind {
        CaseKind::CaseI => {
            let _ = writeln!(text, "Q*: {{0}}");
        }
        CaseKind::CaseII => {
            let _ = writeln!(text, "Q*: [{}, {}]", num(report.q_interval[0]), num(report.q_interval[1]));
        }
    }
    let _ = writeln!(
        text,
        "long-run cost bound: {}",
        num(s.game.target.cost_bound(s.game.design.c_star))
    );
    if let Some(dir) = out {
        ensure_dir(dir)?;
        let mut file = s.file.clone();
        file.name = Some(s.name.clone());
        file.expected_design = Some(report);
        let path = dir.join(format!("{}_design.toml", s.name));
        write_file(&path, &file.to_toml())?;
        let _ = writeln!(text, "wrote {}", path.display());
    }
    Ok(Outcome {
        text,
        beta_star: Some(s.game.target.beta_star),
        upsilon: Some(s.game.design.upsilon),
        ..Outcome::default()
    })
}

/// `α = 𝓛(0)` for an endemic start with `q = 0`, and the induced bound.
fn initial_bound(s: &Scenario, tol: f64) -> Result<(f64, f64), Failure> {
    let level = initial_level_general(&s.protocol, &s.game, s.initial.x.as_slice())?;
    Ok((level.alpha, pi_star(&s.game, level.alpha, tol)?))
}

pub fn simulate(s: &Scenario, out: &Path, plot: bool) -> Result<Outcome, Failure> {
    let traj = integrate(&s.protocol, &s.game, &s.config, &s.initial, &s.run)?;
    ensure_dir(out)?;
    let csv_path = out.join(format!("{}_trajectory.csv", s.name));
    let file = fs::File::create(&csv_path)
        .map_err(|e| Failure::io(&format!("cannot write {}", csv_path.display()), e))?;
    traj.write_csv(BufWriter::new(file))
        .map_err(|e| Failure::io(&format!("cannot write {}", csv_path.display()), e))?;

    let target = &s.game.target;
    let peak = traj.peak_infectious_ratio(target);
    let settle = traj.settling_time(target, SETTLE_TOL, SETTLE_HOLD);
    let t_end = s.run.t_end;
    let window = COST_WINDOW.min(0.25 * t_end);
    let mean_cost = traj.average_reward_cost(t_end - window);
    let cost_bound = target.cost_bound(s.game.design.c_star);

    let mut text = String::new();
    let _ = writeln!(text, "scenario: {}", s.name);
    let _ = writeln!(
        text,
        "samples: {}  steps accepted/rejected: {}/{}",
        traj.len(),
        traj.stats.accepted,
        traj.stats.rejected
    );
    let _ = writeln!(text, "peak I/I*: {}", sig4(peak));
    let mut bound_ratio = None;
    if s.starts_endemic() {
        let (alpha, ratio) = initial_bound(s, 1e-6)?;
        bound_ratio = Some(ratio);
        let _ = writeln!(text, "anytime bound I/I* <= {} (alpha = {alpha:.6e})", sig4(ratio));
    }
    match settle {
        Some(t) => {
            let _ = writeln!(text, "settled (relative 1e-3 for {SETTLE_HOLD} days) at t = {t}");
        }
        None => {
            let last = traj.len() - 1;
            let _ = writeln!(
                text,
                "not settled by t = {t_end} (final error {:.3e})",
                traj.settling_error(last, target)
            );
        }
    }
    let _ = writeln!(
        text,
        "mean r'x over final {window} days: {} (c* = {}, long-run bound {})",
        sig4(mean_cost),
        num(s.game.design.c_star),
        num(cost_bound)
    );
    let _ = writeln!(text, "wrote {}", csv_path.display());
    if plot {
        let path = out.join(format!("{}_trajectory.svg", s.name));
        write_file(&path, &trajectory_svg(s, &traj, bound_ratio))?;
        let _ = writeln!(text, "wrote {}", path.display());
    }
    let trace = Trace {
        times: traj.times.clone(),
        infectious_ratio: traj
            .states
            .iter()
            .map(|st| st.infectious / target.infectious_star)
            .collect(),
        reward_cost: traj.diagnostics.iter().map(|d| d.reward_cost).collect(),
    };
    Ok(Outcome {
        text,
        beta_star: Some(target.beta_star),
        upsilon: Some(s.game.design.upsilon),
        peak_ratio: Some(peak),
        settling_time: settle,
        mean_reward_cost: Some(mean_cost),
        bound_ratio,
        trace: Some(trace),
        ..Outcome::default()
    })
}

fn trajectory_svg(s: &Scenario, traj: &Trajectory, bound: Option<f64>) -> String {
    let t = &s.game.target;
    let times = traj.times.clone();
    let series = |label: &str, ys: Vec<f64>| Series {
        label: label.into(),
        xs: times.clone(),
        ys,
    };
    let panel = |title: &str, s: Series, references: Vec<(f64, String)>| Panel {
        title: title.into(),
        x_label: "t (days)".into(),
        series: vec![s],
        references,
    };
    let mut ratio_refs = vec![(1.0, "I*".to_string())];
    if let Some(b) = bound {
        ratio_refs.push((b, "anytime bound".into()));
    }
    let panels = [
        panel(
            "I(t)/I*",
            series("I/I*", traj.states.iter().map(|st| st.infectious / t.infectious_star).collect()),
            ratio_refs,
        ),
        panel(
            "B(t)",
            series("B", traj.diagnostics.iter().map(|d| d.transmission).collect()),
            vec![(t.beta_star, "beta*".into())],
        ),
        panel(
            "q(t)",
            series("q", traj.states.iter().map(|st| st.q).collect()),
            vec![],
        ),
        panel(
            "r(t)'x(t)",
            series("r'x", traj.diagnostics.iter().map(|d| d.reward_cost).collect()),
            vec![(s.game.design.c_star, "c*".into())],
        ),
        panel(
            "Lyapunov function",
            series("L", traj.diagnostics.iter().map(|d| d.lyapunov).collect()),
            vec![],
        ),
    ];
    render(&panels)
}

pub fn bound(
    s: &Scenario,
    upsilons: Option<&[f64]>,
    oracle_grid: Option<usize>,
    tol: f64,
    out: Option<&Path>,
    plot: bool,
) -> Result<Outcome, Failure> {
    if !s.starts_endemic() {
        return Err(Failure::precondition(
            "PreconditionViolated: the anytime bound needs an endemic start with q = 0".into(),
        ));
    }
    let spec = s.file.bound.clone();
    let grid: Vec<f64> = match upsilons {
        Some(list) => list.to_vec(),
        None => spec.clone().unwrap_or_default().upsilon_grid(),
    };
    let oracle_grid = oracle_grid.or(spec.as_ref().and_then(|b| b.oracle_grid));
    let x0 = s.initial.x.as_slice();
    let beta_o = s.game.profile.transmission(x0);
    let floor = overshoot_floor(&s.game, beta_o);
    let rows: Vec<BoundRow> = grid
        .par_iter()
        .map(|&u| -> Result<BoundRow, Failure> {
            let game = s.game.with_upsilon(u)?;
            let level = initial_level_general(&s.protocol, &game, x0)?;
            Ok(BoundRow {
                upsilon: u,
                alpha: level.alpha,
                pi_star: pi_star(&game, level.alpha, tol)?,
                floor,
                oracle: oracle_grid.map(|g| pi_star_oracle(&game, level.alpha, g)),
            })
        })
        .collect::<Result<_, _>>()?;
    let (_, at_design) = initial_bound(s, tol)?;

    let mut csv = String::from("upsilon,alpha,pi_star,floor,oracle_value\n");
    for r in &rows {
        let oracle = r.oracle.map_or(String::new(), |v| format!("{v}"));
        let _ = writeln!(csv, "{},{},{},{},{}", r.upsilon, r.alpha, r.pi_star, r.floor, oracle);
    }
    let mut text = String::new();
    let _ = writeln!(text, "scenario: {}  beta* = {}  beta_o = {beta_o}", s.name, s.game.target.beta_star);
    let _ = writeln!(text, "floor: {}", sig4(floor));
    let _ = writeln!(
        text,
        "bound at upsilon = {}: I/I* <= {}",
        s.game.design.upsilon,
        sig4(at_design)
    );
    let _ = writeln!(text, "{:>10} {:>14} {:>10} {:>10}", "upsilon", "alpha", "pi*", "oracle");
    for r in &rows {
        let _ = writeln!(
            text,
            "{:>10} {:>14.6e} {:>10} {:>10}",
            r.upsilon,
            r.alpha,
            format!("{:.5}", r.pi_star),
            r.oracle.map_or("-".to_string(), |v| format!("{v:.5}"))
        );
    }
    if let Some(dir) = out {
        ensure_dir(dir)?;
        let path = dir.join(format!("{}_bound.csv", s.name));
        write_file(&path, &csv)?;
        let _ = writeln!(text, "wrote {}", path.display());
        if plot {
            let path = dir.join(format!("{}_bound.svg", s.name));
            let panel = bound_panel(vec![(format!("beta* = {}", s.game.target.beta_star), rows.clone())], vec![(floor, "floor".into())]);
            write_file(&path, &render(&[panel]))?;
            let _ = writeln!(text, "wrote {}", path.display());
        }
    } else {
        text.push_str(&csv);
    }
    Ok(Outcome {
        text,
        beta_star: Some(s.game.target.beta_star),
        upsilon: Some(s.game.design.upsilon),
        bound_ratio: Some(at_design),
        curve: rows,
        ..Outcome::default()
    })
}

fn bound_panel(curves: Vec<(String, Vec<BoundRow>)>, references: Vec<(f64, String)>) -> Panel {
    Panel {
        title: "Anytime bound on I/I* versus upsilon".into(),
        x_label: "upsilon".into(),
        series: curves
            .into_iter()
            .map(|(label, rows)| Series {
                label,
                xs: rows.iter().map(|r| r.upsilon).collect(),
                ys: rows.iter().map(|r| r.pi_star).collect(),
            })
            .collect(),
        references,
    }
}

pub fn select(s: &Scenario, target: Option<f64>, tol: f64, out: Option<&Path>) -> Result<Outcome, Failure> {
    let target = target
        .or(s.file.bound.as_ref().and_then(|b| b.overshoot_target))
        .ok_or_else(|| Failure::validation("InvalidParameter: no overshoot target given".into()))?;
    if !s.starts_endemic() {
        return Err(Failure::precondition(
            "PreconditionViolated: upsilon selection needs an endemic start with q = 0".into(),
        ));
    }
    let x0 = s.initial.x.as_slice();
    let level = initial_level_general(&s.protocol, &s.game, x0)?;
    if level.storage > 1e-12 {
        return Err(Failure::precondition(format!(
            "PreconditionViolated: initial protocol storage {:e} is not zero",
            level.storage
        )));
    }
    let beta_o = s.game.profile.transmission(x0);
    let u = select_upsilon(&s.game, beta_o, target, tol, UPSILON_MAX)?;
    let game = s.game.with_upsilon(u)?;
    let tilde = beta_o - s.game.target.beta_star;
    let certified = pi_star(&game, 0.5 * u * u * tilde * tilde, 1e-9)?;

    let mut text = String::new();
    let _ = writeln!(text, "scenario: {}  target I/I* <= {target}", s.name);
    let _ = writeln!(text, "floor: {}", sig4(overshoot_floor(&s.game, beta_o)));
    let _ = writeln!(text, "upsilon: {u}");
    let _ = writeln!(text, "certified bound: {certified}");
    if let Some(dir) = out {
        ensure_dir(dir)?;
        let mut file: ScenarioFile = s.file.clone();
        file.name = Some(s.name.clone());
        file.design.upsilon = u;
        let path = dir.join(format!("{}_upsilon.toml", s.name));
        write_file(&path, &file.to_toml())?;
        let _ = writeln!(text, "wrote {}", path.display());
    }
    Ok(Outcome {
        text,
        beta_star: Some(s.game.target.beta_star),
        upsilon: Some(u),
        bound_ratio: Some(certified),
        ..Outcome::default()
    })
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    #[serde(default)]
    job: Vec<Job>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct Job {
    name: String,
    command: JobCommand,
    scenario: PathBuf,
    #[serde(default)]
    overrides: toml::Table,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum JobCommand {
    Design,
    Simulate,
    Bound,
    SelectUpsilon,
}

impl JobCommand {
    fn as_str(self) -> &'static str {
        match self {
            JobCommand::Design => "design",
            JobCommand::Simulate => "simulate",
            JobCommand::Bound => "bound",
            JobCommand::SelectUpsilon => "select-upsilon",
        }
    }
}

fn merge(base: &mut toml::Table, overrides: &toml::Table) {
    for (key, value) in overrides {
        match (base.get_mut(key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            _ => {
                base.insert(key.clone(), value.clone());
            }
        }
    }
}

fn load_job(job: &Job, root: &Path) -> Result<Scenario, Failure> {
    let path = root.join(&job.scenario);
    let text = fs::read_to_string(&path)
        .map_err(|e| Failure::validation(format!("cannot read {}: {e}", path.display())))?;
    let mut table: toml::Table = toml::from_str(&text)
        .map_err(|e| Failure::validation(format!("malformed scenario {}: {e}", path.display())))?;
    merge(&mut table, &job.overrides);
    table.insert("name".into(), toml::Value::String(job.name.clone()));
    let file: ScenarioFile = toml::Value::Table(table)
        .try_into()
        .map_err(|e| Failure::validation(format!("malformed scenario for job {}: {e}", job.name)))?;
    file.validate(&job.name)
}

fn run_job(job: &Job, root: &Path, out: &Path, opts: &SweepOptions) -> Result<Outcome, Failure> {
    let mut s = load_job(job, root)?;
    if let Some(t) = opts.t_end {
        s.run.t_end = t;
    }
    let dir = out.join(&job.name);
    match job.command {
        JobCommand::Design => design(&s, Some(&dir)),
        JobCommand::Simulate => {
            if let Some(tol) = opts.tol {
                s.run.rtol = tol;
            }
            simulate(&s, &dir, opts.plot)
        }
        JobCommand::Bound => bound(&s, None, None, opts.tol.unwrap_or(1e-4), Some(&dir), opts.plot),
        JobCommand::SelectUpsilon => select(&s, None, opts.tol.unwrap_or(1e-6), Some(&dir)),
    }
}

pub struct SweepOptions {
    pub tol: Option<f64>,
    pub t_end: Option<f64>,
    pub plot: bool,
}

fn cell(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| format!("{x}"))
}

fn csv_text(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\"").replace('\n', " "))
    } else {
        s.to_string()
    }
}

/// Runs every job of a manifest concurrently and writes `sweep_summary.csv`.
/// Returns the printed report and the exit code of the first failed job.
pub fn sweep(manifest_path: &Path, out: &Path, opts: &SweepOptions) -> Result<(String, i32), Failure> {
    let text = fs::read_to_string(manifest_path)
        .map_err(|e| Failure::validation(format!("cannot read {}: {e}", manifest_path.display())))?;
    let manifest: Manifest = toml::from_str(&text)
        .map_err(|e| Failure::validation(format!("malformed manifest {}: {e}", manifest_path.display())))?;
    let mut names: Vec<&str> = manifest.job.iter().map(|j| j.name.as_str()).collect();
    names.sort_unstable();
    if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
        return Err(Failure::validation(format!("duplicate job name `{}`", w[0])));
    }
    if let Some(bad) = manifest
        .job
        .iter()
        .find(|j| j.name.is_empty() || j.name.contains(['/', '\\']) || j.name.starts_with('.'))
    {
        return Err(Failure::validation(format!("job name `{}` is not a plain file name", bad.name)));
    }
    let root = manifest_path.parent().unwrap_or(Path::new("."));
    ensure_dir(out)?;
    let results: Vec<Result<Outcome, Failure>> = manifest
        .job
        .par_iter()
        .map(|job| run_job(job, root, out, opts))
        .collect();

    let mut summary = String::from(
        "job,command,status,exit_code,beta_star,upsilon,peak_infectious_ratio,settling_time,mean_reward_cost,bound_ratio,message\n",
    );
    let mut report = String::new();
    let mut code = 0;
    for (job, result) in manifest.job.iter().zip(&results) {
        match result {
            Ok(o) => {
                let _ = writeln!(
                    summary,
                    "{},{},ok,0,{},{},{},{},{},{},",
                    csv_text(&job.name),
                    job.command.as_str(),
                    cell(o.beta_star),
                    cell(o.upsilon),
                    cell(o.peak_ratio),
                    cell(o.settling_time),
                    cell(o.mean_reward_cost),
                    cell(o.bound_ratio)
                );
                let _ = writeln!(report, "[ok] {} ({})", job.name, job.command.as_str());
            }
            Err(f) => {
                if code == 0 {
                    code = f.code;
                }
                let _ = writeln!(
                    summary,
                    "{},{},failed,{},,,,,,,{}",
                    csv_text(&job.name),
                    job.command.as_str(),
                    f.code,
                    csv_text(&f.message)
                );
                let _ = writeln!(report, "[failed] {} ({}): {}", job.name, job.command.as_str(), f.message);
            }
        }
    }
    let path = out.join("sweep_summary.csv");
    write_file(&path, &summary)?;
    let _ = writeln!(report, "{} jobs, wrote {}", manifest.job.len(), path.display());

    if opts.plot {
        let curves: Vec<(String, Vec<BoundRow>)> = manifest
            .job
            .iter()
            .zip(&results)
            .filter_map(|(job, r)| match r {
                Ok(o) if !o.curve.is_empty() => Some((
                    format!("{} (beta* = {})", job.name, cell(o.beta_star)),
                    o.curve.clone(),
                )),
                _ => None,
            })
            .collect();
        if !curves.is_empty() {
            let path = out.join("sweep_bounds.svg");
            write_file(&path, &render(&[bound_panel(curves, vec![])]))?;
            let _ = writeln!(report, "wrote {}", path.display());
        }
        let traces: Vec<(&str, &Trace)> = manifest
            .job
            .iter()
            .zip(&results)
            .filter_map(|(job, r)| match r {
                Ok(o) => o.trace.as_ref().map(|t| (job.name.as_str(), t)),
                _ => None,
            })
            .collect();
        if !traces.is_empty() {
            let panel = |title: &str, pick: fn(&Trace) -> &Vec<f64>| Panel {
                title: title.into(),
                x_label: "t (days)".into(),
                series: traces
                    .iter()
                    .map(|(name, t)| Series {
                        label: name.to_string(),
                        xs: t.times.clone(),
                        ys: pick(t).clone(),
                    })
                    .collect(),
                references: vec![],
            };
            let svg = render(&[
                panel("I(t)/I*", |t| &t.infectious_ratio),
                panel("r(t)'x(t)", |t| &t.reward_cost),
            ]);
            let path = out.join("sweep_trajectories.svg");
            write_file(&path, &svg)?;
            let _ = writeln!(report, "wrote {}", path.display());
        }
    }
    Ok((report, code))
}
