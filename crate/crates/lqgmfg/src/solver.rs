//! The bilevel policy-optimisation loop: aggregate update, slope descent, intercept
//! descent against the frozen aggregate, then the mean-field oracle.

use std::io::Write;
use std::time::Instant;

use crate::cost::{j1_exact, j2_exact};
use crate::dynamics::sde::{simulate_moments, EulerCoefficients};
use crate::dynamics::{optimal_slope, solve_mean_consistent, solve_mean_fixed_z, solve_psi, solve_riccati_star};
use crate::equilibrium::EquilibriumSolution;
use crate::error::{Error, Result};
use crate::gradients::{gd_step_g, gd_step_k, grad_g_exact, grad_k_exact, pathwise_grad_g, pathwise_grad_k, CostEstimator, StepRule};
use crate::graphon::{apply_operator_path, Graphon, QuadratureRule};
use crate::linalg::Mat;
use crate::metrics::{rmse_g, rmse_k};
use crate::model::{InitialLaw, ModelCoefficients, PlayerGrid, PolicyGrid, TimeGrid};
use crate::path::StagePath;
use crate::policy::{PolicyLayout, PolicyParams};
use crate::rng;
use crate::zeroth_order::{zeroth_order_grad_g, zeroth_order_grad_k, CostOracle, ExactOracle, ExpectedOracle, SampledOracle, ZerothOrderConfig};

/// Everything that defines the game being learned.
#[derive(Debug, Clone)]
pub struct Game {
    pub model: ModelCoefficients,
    pub tg: TimeGrid,
    pub players: PlayerGrid,
    pub graphon: Graphon,
    pub rule: QuadratureRule,
    pub laws: InitialLaw,
}

impl Game {
    pub fn weights(&self) -> Mat {
        self.graphon.operator_matrix(&self.players, self.rule)
    }

    /// Average initial covariance; J₁ is linear in it, so J₁ at this value is the player mean.
    pub fn pooled_theta0(&self) -> Mat {
        let n = self.laws.covariances.len() as f64;
        self.laws.covariances.iter().skip(1).fold(self.laws.covariances[0].clone(), |a, c| a + c) / n
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ZerothOrderOracle {
    Expected,
    Sampled { n_samples: usize },
    Exact,
}

#[derive(Debug, Clone, PartialEq)]
pub enum GradientMode {
    /// Exact densities with the continuous-time update.
    Exact,
    /// Derivatives of the Euler-discretised costs with the Δτ-scaled update.
    PathwiseDiscrete(CostEstimator),
    ZerothOrder { config: ZerothOrderConfig, oracle: ZerothOrderOracle },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OracleMode {
    Ode,
    MonteCarlo { n_samples: usize, max_iterations: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub n_outer: usize,
    pub inner_k: Vec<usize>,
    pub inner_g: Vec<usize>,
    pub eta_k: f64,
    pub eta_g: f64,
    pub gradient_mode: GradientMode,
    pub oracle_mode: OracleMode,
    /// Oracle tolerance ω_n per outer iteration.
    pub omega: Vec<f64>,
    pub seed: u64,
    /// Record wall-clock seconds per row (breaks byte-identical logs).
    pub log_timing: bool,
}

impl SolverConfig {
    pub fn uniform(n_outer: usize, inner: usize, eta: f64, gradient_mode: GradientMode) -> Self {
        SolverConfig {
            n_outer,
            inner_k: vec![inner; n_outer],
            inner_g: vec![inner; n_outer],
            eta_k: eta,
            eta_g: eta,
            gradient_mode,
            oracle_mode: OracleMode::Ode,
            omega: vec![1e-6; n_outer],
            seed: 0,
            log_timing: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta_k > 0.0 && self.eta_g > 0.0) {
            return Err(Error::Invalid("step sizes must be positive".into()));
        }
        if self.inner_k.len() != self.n_outer || self.inner_g.len() != self.n_outer || self.omega.len() != self.n_outer {
            return Err(Error::Invalid("inner counts and ω schedule need one entry per outer iteration".into()));
        }
        if let GradientMode::ZerothOrder { config, .. } = &self.gradient_mode {
            config.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Init,
    K,
    G,
}

impl Phase {
    pub fn label(self) -> &'static str {
        match self {
            Phase::Init => "init",
            Phase::K => "K",
            Phase::G => "G",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub iter: usize,
    pub outer: usize,
    pub phase: Phase,
    pub j1: f64,
    pub j2_mean: f64,
    pub rmse_k: Option<f64>,
    pub rmse_g: Option<f64>,
    pub sup_k: f64,
    pub seconds: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunLog {
    pub rows: Vec<LogRow>,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl RunLog {
    /// Rows of one phase in order.
    pub fn phase(&self, phase: Phase) -> impl Iterator<Item = &LogRow> {
        self.rows.iter().filter(move |r| r.phase == phase)
    }

    /// RMSE(K) after each slope update, preceded by the initial value.
    pub fn rmse_k_curve(&self) -> Vec<f64> {
        self.rows.iter().filter(|r| r.phase != Phase::G).filter_map(|r| r.rmse_k).collect()
    }

    pub fn rmse_g_curve(&self) -> Vec<f64> {
        self.rows.iter().filter(|r| r.phase != Phase::K).filter_map(|r| r.rmse_g).collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let timed = self.rows.iter().any(|r| r.seconds.is_some());
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["iter", "outer", "phase", "J1", "J2_mean", "rmse_K", "rmse_G", "sup_K"];
        if timed {
            header.push("seconds");
        }
        w.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![
                r.iter.to_string(),
                r.outer.to_string(),
                r.phase.label().to_string(),
                r.j1.to_string(),
                r.j2_mean.to_string(),
                opt(r.rmse_k),
                opt(r.rmse_g),
                r.sup_k.to_string(),
            ];
            if timed {
                rec.push(opt(r.seconds));
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub log: RunLog,
    pub params: PolicyParams,
    pub mu: StagePath,
}

/// Z^α = ∫ W(α, β) μ^β dβ at every stage point.
pub fn aggregate_update(weights: &Mat, mu: &StagePath) -> StagePath {
    apply_operator_path(weights, mu)
}

/// Mean field induced by a policy: the consistent ODE solve, or a Monte Carlo fixed point
/// over the aggregate with common noise across its iterations.
pub fn mean_field_oracle(game: &Game, k: &StagePath, g: &StagePath, mode: OracleMode, omega: f64, seed: u64) -> Result<StagePath> {
    let w = game.weights();
    match mode {
        OracleMode::Ode => solve_mean_consistent(&game.model, &game.tg, &w, k, g, &game.laws.mean_matrix()),
        OracleMode::MonteCarlo { n_samples, max_iterations } => {
            let players: Vec<usize> = (0..game.players.len()).collect();
            let mut z = StagePath::constant(game.tg.n_steps, Mat::zeros(game.model.dim_d, game.players.len()));
            let mut change = f64::INFINITY;
            for _ in 0..max_iterations {
                let coefs = EulerCoefficients::new(&game.model, &game.tg, k, g, &z);
                let mu = simulate_moments(&coefs, &game.laws, &players, n_samples, seed)?.mu_hat;
                let z_nodes: Vec<Mat> = mu.iter().map(|m| m * w.transpose()).collect();
                let next = StagePath::from_nodes_linear(&z_nodes);
                change = (0..=game.tg.n_steps).fold(0.0_f64, |a, i| a.max((next.node(i) - z.node(i)).abs().max()));
                z = next;
                if change <= omega {
                    return Ok(StagePath::from_nodes_linear(&mu));
                }
            }
            Err(Error::OracleNotConverged { iterations: max_iterations, omega, change })
        }
    }
}

/// Best-response intercept for a frozen aggregate: G* = (K* − K)μ* − ½R⁻¹BᵀΨ.
pub fn best_response_intercept(m: &ModelCoefficients, tg: &TimeGrid, k: &StagePath, z: &StagePath, mu0: &Mat) -> Result<StagePath> {
    let p_star = solve_riccati_star(m, tg)?;
    let k_star = optimal_slope(m, &p_star);
    let psi = solve_psi(m, tg, &p_star, z)?;
    let feed = psi.map(|i, s, v| -(m.r_inv(i, s) * m.b.at(i, s).transpose() * v) * 0.5);
    let mu_star = solve_mean_fixed_z(m, tg, &k_star, &feed, z, mu0)?;
    Ok(StagePath::from_fn(tg.n_steps, |i, s| (k_star.at(i, s) - k.at(i, s)) * mu_star.at(i, s) + feed.at(i, s)))
}

const TAG_K: u64 = 0x4B;
const TAG_G: u64 = 0x47;
const TAG_ORACLE: u64 = 0x4F;

struct Evaluator<'a> {
    game: &'a Game,
    reference: Option<&'a EquilibriumSolution>,
    theta0: Mat,
    start: Instant,
    timing: bool,
}

impl Evaluator<'_> {
    fn row(&self, iter: usize, outer: usize, phase: Phase, params: &PolicyParams, z: &StagePath) -> Result<LogRow> {
        let (m, tg) = (&self.game.model, &self.game.tg);
        let k = params.slope_path(tg);
        let g = params.intercept_path(tg);
        let j1 = match j1_exact(m, tg, &k, &self.theta0) {
            Ok(v) => v,
            Err(Error::IntegrationBlowup { .. }) => f64::INFINITY,
            Err(e) => return Err(e),
        };
        if !(j1.abs() <= 1e12) {
            return Err(Error::DivergedRun { iteration: iter, j1 });
        }
        let j2 = j2_exact(m, tg, &k, &g, z, &self.game.laws.mean_matrix())?;
        let (rk, rg) = match self.reference {
            Some(r) => (
                Some(rmse_k(&k, tg, &r.k_star, &r.tg)?),
                Some(rmse_g(&g, tg, &self.game.players, &r.g_star, &r.tg, &r.players)?),
            ),
            None => (None, None),
        };
        Ok(LogRow {
            iter,
            outer,
            phase,
            j1,
            j2_mean: j2.iter().sum::<f64>() / j2.len() as f64,
            rmse_k: rk,
            rmse_g: rg,
            sup_k: params.sup_slope(),
            seconds: self.timing.then(|| self.start.elapsed().as_secs_f64()),
        })
    }
}

fn require_grid(layout: &PolicyLayout) -> Result<&PolicyGrid> {
    layout.grid().ok_or_else(|| Error::Invalid("discrete gradient modes need a piecewise-constant policy grid".into()))
}

fn zo_oracle<'a>(game: &'a Game, z: &'a StagePath, kind: ZerothOrderOracle) -> Box<dyn CostOracle + 'a> {
    let (model, tg, laws) = (&game.model, &game.tg, &game.laws);
    match kind {
        ZerothOrderOracle::Expected => Box::new(ExpectedOracle { model, tg, z, laws }),
        ZerothOrderOracle::Sampled { n_samples } => Box::new(SampledOracle { model, tg, z, laws, n_samples }),
        ZerothOrderOracle::Exact => Box::new(ExactOracle { model, tg, z, laws }),
    }
}

fn slope_step(game: &Game, params: &PolicyParams, z: &StagePath, cfg: &SolverConfig, seed: u64) -> Result<Vec<Mat>> {
    let (m, tg) = (&game.model, &game.tg);
    let k = params.slope_path(tg);
    match &cfg.gradient_mode {
        GradientMode::Exact => {
            let gr = grad_k_exact(m, tg, &params.layout, &k, &game.laws.covariances[0])?;
            gd_step_k(&params.slope, &gr.preconditioned, cfg.eta_k, StepRule::ContinuousExact)
        }
        GradientMode::PathwiseDiscrete(est) => {
            let pg = require_grid(&params.layout)?;
            let g = params.intercept_path(tg);
            let gr = pathwise_grad_k(m, tg, pg, &k, &g, z, &game.laws, *est, seed)?;
            gd_step_k(&params.slope, &gr.coords, cfg.eta_k, StepRule::DiscreteScaled { dtau: pg.dtau, theta_hat: &gr.theta_at_coords })
        }
        GradientMode::ZerothOrder { config, oracle } => {
            let pg = require_grid(&params.layout)?;
            let g = params.intercept_path(tg);
            let o = zo_oracle(game, z, *oracle);
            let gr = zeroth_order_grad_k(tg, pg, &params.slope, &g, config, o.as_ref(), seed)?;
            gd_step_k(&params.slope, &gr.coords, cfg.eta_k, StepRule::DiscreteScaled { dtau: pg.dtau, theta_hat: &gr.theta_at_coords })
        }
    }
}

fn intercept_step(game: &Game, params: &PolicyParams, z: &StagePath, cfg: &SolverConfig, seed: u64) -> Result<Vec<Mat>> {
    let (m, tg) = (&game.model, &game.tg);
    let k = params.slope_path(tg);
    let g = params.intercept_path(tg);
    match &cfg.gradient_mode {
        GradientMode::Exact => {
            let gr = grad_g_exact(m, tg, &params.layout, &k, &g, z, &game.laws.mean_matrix())?;
            Ok(gd_step_g(&params.intercept, &gr.coords, cfg.eta_g, StepRule::ContinuousExact))
        }
        GradientMode::PathwiseDiscrete(est) => {
            let pg = require_grid(&params.layout)?;
            let gr = pathwise_grad_g(m, tg, pg, &k, &g, z, &game.laws, *est, seed)?;
            Ok(gd_step_g(&params.intercept, &gr, cfg.eta_g, StepRule::DiscreteScaled { dtau: pg.dtau, theta_hat: &[] }))
        }
        GradientMode::ZerothOrder { config, oracle } => {
            let pg = require_grid(&params.layout)?;
            let o = zo_oracle(game, z, *oracle);
            let gr = zeroth_order_grad_g(tg, pg, &k, &params.intercept, config, o.as_ref(), seed)?;
            Ok(gd_step_g(&params.intercept, &gr, cfg.eta_g, StepRule::DiscreteScaled { dtau: pg.dtau, theta_hat: &[] }))
        }
    }
}

/// Runs the bilevel algorithm from `init` and the initial mean field `mu_init`.
pub fn run_algorithm1(
    game: &Game,
    init: &PolicyParams,
    mu_init: &StagePath,
    cfg: &SolverConfig,
    reference: Option<&EquilibriumSolution>,
) -> Result<RunOutcome> {
    cfg.validate()?;
    if init.n_players() != game.players.len() || mu_init.start[0].ncols() != game.players.len() {
        return Err(Error::GridMismatch("initial policy or mean field does not match the player grid".into()));
    }
    let w = game.weights();
    let eval = Evaluator { game, reference, theta0: game.pooled_theta0(), start: Instant::now(), timing: cfg.log_timing };
    let mut params = init.clone();
    let mut mu = mu_init.clone();
    let mut log = RunLog::default();
    let mut z = aggregate_update(&w, &mu);
    log.rows.push(eval.row(0, 0, Phase::Init, &params, &z)?);
    let (mut iter_k, mut iter_g) = (0, 0);
    for n in 0..cfg.n_outer {
        if n > 0 {
            z = aggregate_update(&w, &mu);
        }
        for l in 0..cfg.inner_k[n] {
            let seed = rng::derive_seed(cfg.seed, &[TAG_K, n as u64, l as u64]);
            params.slope = slope_step(game, &params, &z, cfg, seed)?;
            iter_k += 1;
            log.rows.push(eval.row(iter_k, n, Phase::K, &params, &z)?);
        }
        for l in 0..cfg.inner_g[n] {
            let seed = rng::derive_seed(cfg.seed, &[TAG_G, n as u64, l as u64]);
            params.intercept = intercept_step(game, &params, &z, cfg, seed)?;
            iter_g += 1;
            log.rows.push(eval.row(iter_g, n, Phase::G, &params, &z)?);
        }
        let seed = rng::derive_seed(cfg.seed, &[TAG_ORACLE, n as u64]);
        mu = mean_field_oracle(game, &params.slope_path(&game.tg), &params.intercept_path(&game.tg), cfg.oracle_mode, cfg.omega[n], seed)?;
    }
    Ok(RunOutcome { log, params, mu })
}

/// K ≡ −I, G ≡ 1, μ ≡ 0.
pub fn default_initialisation(game: &Game, layout: PolicyLayout) -> (PolicyParams, StagePath) {
    let (d, k) = (game.model.dim_d, game.model.dim_k);
    let k0 = -Mat::from_fn(k, d, |r, c| if r == c { 1.0 } else { 0.0 });
    let g0 = Mat::from_element(k, game.players.len(), 1.0);
    let params = PolicyParams::constant(layout, &game.tg, k0, g0);
    let mu = StagePath::constant(game.tg.n_steps, Mat::zeros(d, game.players.len()));
    (params, mu)
}
