//! Turns a configuration into runs and CSV files.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use lqgmfg::equilibrium::{solve_equilibrium, write_equilibrium_csv, EquilibriumSolution, PicardConfig};
use lqgmfg::graphon::Graphon;
use lqgmfg::metrics::{pre_plateau_fit, window_fit};
use lqgmfg::model::{build_grids, ModelCoefficients, PlayerGrid, TimeGrid};
use lqgmfg::policy::PolicyLayout;
use lqgmfg::solver::{default_initialisation, run_algorithm1, Game, RunLog};
use lqgmfg::theory::{compute_diagnostics, predicted_rates, Diagnostics};
use rayon::prelude::*;

use crate::config::{ExperimentConfig, GraphonKind, Preset};
use crate::CliError;

pub const PLATEAU_FACTOR: f64 = 3.0;
pub const FIT_WINDOW: (usize, usize) = (5, 100);
const UNITS: &str = "time in model time units; costs, RMSEs and constants dimensionless";

/// One run of a sweep.
#[derive(Debug, Clone)]
pub struct Member {
    pub label: String,
    pub model: ModelCoefficients,
    pub graphon: Graphon,
    pub n_policy: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub label: String,
    pub pre_plateau_slope: Option<f64>,
    pub pre_plateau_r2: Option<f64>,
    pub pre_plateau_end: Option<usize>,
    pub window_slope: Option<f64>,
    pub window_r2: Option<f64>,
    pub final_rmse_k: f64,
    pub final_rmse_g: f64,
}

#[derive(Debug, Clone)]
pub struct MemberResult {
    pub member: Member,
    pub log: RunLog,
    pub diagnostics: Diagnostics,
    pub summary: Summary,
}

fn kind_label(kind: GraphonKind) -> String {
    toml::Value::try_from(kind).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default()
}

pub fn members(cfg: &ExperimentConfig) -> Result<Vec<Member>, CliError> {
    let base_model = cfg.model_coefficients(None)?;
    let base_graphon = cfg.graphon_of(cfg.graphon.kind)?;
    let base = |label: String| Member {
        label,
        model: base_model.clone(),
        graphon: base_graphon.clone(),
        n_policy: cfg.grids.n_policy,
        seed: cfg.sampling.seed,
    };
    Ok(match cfg.preset {
        Preset::GraphonSweep => cfg
            .sweep
            .graphons
            .iter()
            .map(|&k| Ok(Member { graphon: cfg.graphon_of(k)?, ..base(kind_label(k)) }))
            .collect::<Result<_, CliError>>()?,
        Preset::MeshSweep => cfg.sweep.n_policy.iter().map(|&n| Member { n_policy: n, ..base(format!("npolicy_{n}")) }).collect(),
        Preset::NoiseSweep => cfg
            .sweep
            .noise
            .iter()
            .map(|&d| Ok(Member { model: cfg.model_coefficients(Some(d))?, ..base(format!("noise_{d}")) }))
            .collect::<Result<_, CliError>>()?,
        Preset::ModelFree => cfg
            .sweep
            .seeds
            .iter()
            .map(|&s| Member { seed: cfg.sampling.seed.wrapping_add(s), ..base(format!("seed_{s}")) })
            .collect(),
        Preset::SingleRun | Preset::Diagnostics | Preset::EquilibriumOnly => vec![base("single".into())],
    })
}

fn reference(cfg: &ExperimentConfig, model: &ModelCoefficients, graphon: &Graphon) -> Result<EquilibriumSolution, CliError> {
    let tg = TimeGrid::new(model.horizon, cfg.grids.reference_n_time)?;
    let players = PlayerGrid::uniform(cfg.grids.reference_players);
    let laws = cfg.initial_law(players.len(), model.dim_d)?;
    Ok(solve_equilibrium(model, &tg, &players, graphon, cfg.quadrature(), &laws, &PicardConfig::default())?)
}

pub fn summarise(label: &str, log: &RunLog) -> Summary {
    let k = log.rmse_k_curve();
    let g = log.rmse_g_curve();
    let pre = pre_plateau_fit(&k, PLATEAU_FACTOR);
    let win = window_fit(&k, FIT_WINDOW.0, FIT_WINDOW.1);
    Summary {
        label: label.to_string(),
        pre_plateau_slope: pre.map(|(f, _)| f.slope),
        pre_plateau_r2: pre.map(|(f, _)| f.r_squared),
        pre_plateau_end: pre.map(|(_, e)| e),
        window_slope: win.map(|f| f.slope),
        window_r2: win.map(|f| f.r_squared),
        final_rmse_k: k.last().copied().unwrap_or(f64::NAN),
        final_rmse_g: g.last().copied().unwrap_or(f64::NAN),
    }
}

pub fn run_member(cfg: &ExperimentConfig, member: &Member) -> Result<MemberResult, CliError> {
    let labels = cfg.players()?.alphas;
    let (tg, pg, players) = build_grids(member.model.horizon, cfg.grids.n_time, member.n_policy, labels)?;
    let laws = cfg.initial_law(players.len(), member.model.dim_d)?;
    let reference = reference(cfg, &member.model, &member.graphon)?;
    let game = Game { model: member.model.clone(), tg, players, graphon: member.graphon.clone(), rule: cfg.quadrature(), laws };
    let (init, mu0) = default_initialisation(&game, PolicyLayout::PiecewiseConstant(pg.clone()));
    let diagnostics = compute_diagnostics(&game.model, &game.laws, &game.tg, &pg, &game.graphon, &init.slope_path(&game.tg))?;
    let out = run_algorithm1(&game, &init, &mu0, &cfg.solver_config(member.seed)?, Some(&reference))?;
    let summary = summarise(&member.label, &out.log);
    Ok(MemberResult { member: member.clone(), log: out.log, diagnostics, summary })
}

/// Writes `# config_hash=…` and a units line, then the CSV body.
pub fn write_tagged<F>(path: &Path, hash: &str, body: F) -> Result<(), CliError>
where
    F: FnOnce(&mut Vec<u8>) -> lqgmfg::Result<()>,
{
    let mut buf = Vec::new();
    writeln!(buf, "# config_hash={hash}")?;
    writeln!(buf, "# units: {UNITS}")?;
    body(&mut buf)?;
    fs::write(path, buf)?;
    Ok(())
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn write_summary(path: &Path, hash: &str, rows: &[&Summary]) -> Result<(), CliError> {
    write_tagged(path, hash, |buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(["member", "pre_plateau_slope", "pre_plateau_r2", "pre_plateau_end", "window_slope", "window_r2", "final_rmse_K", "final_rmse_G"])?;
        for s in rows {
            w.write_record([
                s.label.clone(),
                opt(s.pre_plateau_slope),
                opt(s.pre_plateau_r2),
                s.pre_plateau_end.map(|e| e.to_string()).unwrap_or_default(),
                opt(s.window_slope),
                opt(s.window_r2),
                s.final_rmse_k.to_string(),
                s.final_rmse_g.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    })
}

fn mark_partial(out: &Path, err: &CliError) {
    let _ = fs::write(out.join("PARTIAL"), format!("{err}\n"));
}

fn prepare(out: &Path) -> Result<(), CliError> {
    fs::create_dir_all(out)?;
    let marker = out.join("PARTIAL");
    if marker.exists() {
        fs::remove_file(marker)?;
    }
    Ok(())
}

/// Runs every member of the configured sweep and writes convergence, diagnostics and
/// summary CSVs into `out`. Returns the written files.
pub fn run_experiment(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    match cfg.preset {
        Preset::Diagnostics => return diagnose(cfg, out),
        Preset::EquilibriumOnly => return equilibrium(cfg, out),
        _ => {}
    }
    prepare(out)?;
    let hash = cfg.hash();
    let members = members(cfg)?;
    let results: Vec<Result<MemberResult, CliError>> = members.par_iter().map(|m| run_member(cfg, m)).collect();
    let mut written = Vec::new();
    let mut first_err = None;
    let mut summaries = Vec::new();
    for r in &results {
        match r {
            Ok(res) => {
                let conv = out.join(format!("convergence_{}.csv", res.member.label));
                write_tagged(&conv, &hash, |b| res.log.write_csv(b))?;
                let diag = out.join(format!("diagnostics_{}.csv", res.member.label));
                write_tagged(&diag, &hash, |b| res.diagnostics.write_csv(b))?;
                written.extend([conv, diag]);
                summaries.push(&res.summary);
            }
            Err(e) if first_err.is_none() => first_err = Some(e),
            Err(_) => {}
        }
    }
    let summary = out.join("summary.csv");
    write_summary(&summary, &hash, &summaries)?;
    written.push(summary);
    if let Some(e) = first_err {
        let e = e.duplicate();
        mark_partial(out, &e);
        return Err(e);
    }
    Ok(written)
}

pub fn diagnose(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    prepare(out)?;
    let res = (|| {
        let model = cfg.model_coefficients(None)?;
        let graphon = cfg.graphon_of(cfg.graphon.kind)?;
        let (tg, pg, players) = build_grids(model.horizon, cfg.grids.n_time, cfg.grids.n_policy, cfg.players()?.alphas)?;
        let laws = cfg.initial_law(players.len(), model.dim_d)?;
        let game = Game { model, tg, players, graphon, rule: cfg.quadrature(), laws };
        let (init, _) = default_initialisation(&game, PolicyLayout::PiecewiseConstant(pg.clone()));
        let d = compute_diagnostics(&game.model, &game.laws, &game.tg, &pg, &game.graphon, &init.slope_path(&game.tg))?;
        let rates = predicted_rates(&d, cfg.solver.eta_k, cfg.solver.eta_g)?;
        Ok::<_, CliError>((d, rates))
    })();
    let (d, rates) = match res {
        Ok(v) => v,
        Err(e) => {
            mark_partial(out, &e);
            return Err(e);
        }
    };
    let hash = cfg.hash();
    let csv_path = out.join("diagnostics.csv");
    write_tagged(&csv_path, &hash, |b| d.write_csv(b))?;
    let mut text = Vec::new();
    d.write_report(&mut text)?;
    writeln!(text, "rate_K = {:e}", rates.rate_k)?;
    writeln!(text, "rate_G = {:e}", rates.rate_g)?;
    writeln!(text, "eta_K_max = {:e}", rates.eta_k_max)?;
    writeln!(text, "eta_G_max = {:e}", rates.eta_g_max)?;
    writeln!(text, "step_out_of_range = {}", rates.step_out_of_range)?;
    let txt_path = out.join("diagnostics.txt");
    fs::write(&txt_path, text)?;
    Ok(vec![csv_path, txt_path])
}

pub fn equilibrium(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    prepare(out)?;
    let sol = cfg
        .model_coefficients(None)
        .and_then(|m| Ok((cfg.graphon_of(cfg.graphon.kind)?, m)))
        .and_then(|(g, m)| reference(cfg, &m, &g));
    let sol = match sol {
        Ok(s) => s,
        Err(e) => {
            mark_partial(out, &e);
            return Err(e);
        }
    };
    let path = out.join("equilibrium.csv");
    write_tagged(&path, &cfg.hash(), |b| write_equilibrium_csv(&sol, b))?;
    Ok(vec![path])
}
