//! Experiment configuration: presets, TOML overrides and validation.

use std::path::{Path, PathBuf};

use lqgmfg::graphon::{Graphon, QuadratureRule};
use lqgmfg::linalg::Mat;
use lqgmfg::model::{Coefficient, InitialLaw, ModelCoefficients, PlayerGrid};
use lqgmfg::gradients::CostEstimator;
use lqgmfg::solver::{GradientMode, OracleMode, SolverConfig, ZerothOrderOracle};
use lqgmfg::zeroth_order::{CostMode, ZerothOrderConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    GraphonSweep,
    MeshSweep,
    NoiseSweep,
    ModelFree,
    SingleRun,
    Diagnostics,
    EquilibriumOnly,
}

impl Preset {
    pub fn parse(name: &str) -> Result<Self, CliError> {
        toml::Value::String(name.to_string())
            .try_into()
            .map_err(|_| CliError::Config(format!("unknown preset {name:?}")))
    }
}

/// A scalar, a constant matrix, or one matrix per simulation node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixSpec {
    Scalar(f64),
    Matrix(Vec<Vec<f64>>),
    Sampled(Vec<Vec<Vec<f64>>>),
}

fn to_mat(rows: &[Vec<f64>]) -> Result<Mat, CliError> {
    let r = rows.len();
    let c = rows.first().map_or(0, |x| x.len());
    if r == 0 || c == 0 || rows.iter().any(|x| x.len() != c) {
        return Err(CliError::Config("matrices must be non-empty and rectangular".into()));
    }
    Ok(Mat::from_fn(r, c, |i, j| rows[i][j]))
}

impl MatrixSpec {
    fn coefficient(&self) -> Result<Coefficient, CliError> {
        Ok(match self {
            MatrixSpec::Scalar(x) => Coefficient::scalar(*x),
            MatrixSpec::Matrix(m) => Coefficient::Constant(to_mat(m)?),
            MatrixSpec::Sampled(v) => Coefficient::Sampled(v.iter().map(|m| to_mat(m)).collect::<Result<_, _>>()?),
        })
    }

    fn matrix(&self, what: &str) -> Result<Mat, CliError> {
        match self.coefficient()? {
            Coefficient::Constant(m) => Ok(m),
            Coefficient::Sampled(_) => Err(CliError::Config(format!("{what} must be constant"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub horizon: f64,
    pub a: MatrixSpec,
    pub a_bar: MatrixSpec,
    pub b: MatrixSpec,
    pub d: MatrixSpec,
    pub h: MatrixSpec,
    pub q: MatrixSpec,
    pub r: MatrixSpec,
    pub q_bar: MatrixSpec,
    pub h_bar: MatrixSpec,
    /// Initial mean, a scalar or a d × 1 column.
    pub initial_mean: MatrixSpec,
    pub initial_covariance: MatrixSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphonKind {
    UniformAttachment,
    Half,
    Bipartite,
    Threshold,
    Constant,
    Zero,
    Table,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quadrature {
    #[serde(rename = "paper_faithful")]
    SelfExcluding,
    Trapezoid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphonSection {
    pub kind: GraphonKind,
    /// Value of a constant graphon.
    pub value: Option<f64>,
    /// CSV of `alpha_index,beta_index,value` rows for a table graphon.
    pub table: Option<PathBuf>,
    pub quadrature: Quadrature,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridsSection {
    pub n_time: usize,
    pub n_policy: usize,
    pub n_players: usize,
    /// Explicit labels; overrides `n_players` when present.
    pub player_labels: Option<Vec<f64>>,
    pub reference_players: usize,
    pub reference_n_time: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gradient {
    Exact,
    Pathwise,
    ZerothOrder,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    Expected,
    Sampled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Oracle {
    Ode,
    MonteCarlo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZoOracle {
    Expected,
    Sampled,
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZoCostMode {
    CostToGo,
    TotalCost,
}

/// A single count used for every outer iteration, or one count per outer iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Counts {
    Uniform(usize),
    PerOuter(Vec<usize>),
}

impl Counts {
    fn expand(&self, n_outer: usize, what: &str) -> Result<Vec<usize>, CliError> {
        match self {
            Counts::Uniform(c) => Ok(vec![*c; n_outer]),
            Counts::PerOuter(v) if v.len() == n_outer => Ok(v.clone()),
            Counts::PerOuter(v) => Err(CliError::Config(format!("{what} lists {} counts for {n_outer} outer iterations", v.len()))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZerothOrderSection {
    pub n_trajectories: usize,
    pub sigma_eps: f64,
    pub cost_mode: ZoCostMode,
    pub common_random_numbers: bool,
    pub baseline: bool,
    pub oracle: ZoOracle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub n_outer: usize,
    pub inner_k: Counts,
    pub inner_g: Counts,
    pub eta_k: f64,
    pub eta_g: f64,
    pub gradient: Gradient,
    pub estimator: Estimator,
    pub oracle: Oracle,
    /// Oracle tolerance of the first outer iteration.
    pub omega: f64,
    /// Ratio of consecutive tolerances; 1 keeps them constant.
    pub omega_decay: f64,
    pub oracle_max_iterations: usize,
    pub log_timing: bool,
    pub zeroth_order: ZerothOrderSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingSection {
    pub n_sample: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub graphons: Vec<GraphonKind>,
    pub n_policy: Vec<usize>,
    pub noise: Vec<f64>,
    /// Seed offsets of the model-free repetitions.
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub preset: Preset,
    pub output_dir: PathBuf,
    pub model: ModelSection,
    pub graphon: GraphonSection,
    pub grids: GridsSection,
    pub solver: SolverSection,
    pub sampling: SamplingSection,
    pub sweep: SweepSection,
}

impl ExperimentConfig {
    pub fn preset(preset: Preset) -> Self {
        let mut cfg = ExperimentConfig {
            preset,
            output_dir: PathBuf::from("out"),
            model: ModelSection {
                horizon: 1.0,
                a: MatrixSpec::Scalar(-0.25),
                a_bar: MatrixSpec::Scalar(0.25),
                b: MatrixSpec::Scalar(0.5),
                d: MatrixSpec::Scalar(0.25),
                h: MatrixSpec::Scalar(1.0),
                q: MatrixSpec::Scalar(0.25),
                r: MatrixSpec::Scalar(0.5),
                q_bar: MatrixSpec::Scalar(0.05),
                h_bar: MatrixSpec::Scalar(1.0),
                initial_mean: MatrixSpec::Scalar(0.5),
                initial_covariance: MatrixSpec::Scalar(0.01),
            },
            graphon: GraphonSection { kind: GraphonKind::UniformAttachment, value: None, table: None, quadrature: Quadrature::SelfExcluding },
            grids: GridsSection { n_time: 120, n_policy: 30, n_players: 11, player_labels: None, reference_players: 161, reference_n_time: 120 },
            solver: SolverSection {
                n_outer: 15,
                inner_k: Counts::Uniform(10),
                inner_g: Counts::Uniform(10),
                eta_k: 0.1,
                eta_g: 0.1,
                gradient: Gradient::Pathwise,
                estimator: Estimator::Sampled,
                oracle: Oracle::Ode,
                omega: 1e-6,
                omega_decay: 1.0,
                oracle_max_iterations: 50,
                log_timing: false,
                zeroth_order: ZerothOrderSection {
                    n_trajectories: 10,
                    sigma_eps: 0.25,
                    cost_mode: ZoCostMode::CostToGo,
                    common_random_numbers: false,
                    baseline: true,
                    oracle: ZoOracle::Expected,
                },
            },
            sampling: SamplingSection { n_sample: 100_000, seed: 0 },
            sweep: SweepSection {
                graphons: vec![GraphonKind::UniformAttachment, GraphonKind::Half, GraphonKind::Bipartite, GraphonKind::Threshold],
                n_policy: vec![15, 30, 60, 120],
                noise: vec![0.001, 0.01, 0.25, 1.0, 2.0],
                seeds: vec![0, 1, 2],
            },
        };
        if preset == Preset::ModelFree {
            cfg.model.q_bar = MatrixSpec::Scalar(0.0);
            cfg.solver.gradient = Gradient::ZerothOrder;
            cfg.solver.eta_k = 0.01;
            cfg.solver.eta_g = 0.01;
            cfg.solver.n_outer = 240;
        }
        cfg
    }

    /// Preset defaults overlaid with the keys present in `text`. The preset comes from
    /// `preset_override`, else the file's `preset` key, else `single_run`.
    pub fn from_toml(text: &str, preset_override: Option<Preset>) -> Result<Self, CliError> {
        let file: toml::Table = text.parse().map_err(|e| CliError::Config(format!("{e}")))?;
        let preset = match (preset_override, file.get("preset")) {
            (Some(p), _) => p,
            (None, Some(v)) => v.clone().try_into().map_err(|e| CliError::Config(format!("preset: {e}")))?,
            (None, None) => Preset::SingleRun,
        };
        let defaults = toml::Table::try_from(ExperimentConfig::preset(preset)).map_err(|e| CliError::Config(e.to_string()))?;
        let mut merged = defaults;
        merge(&mut merged, file);
        merged.insert("preset".into(), toml::Value::try_from(preset).map_err(|e| CliError::Config(e.to_string()))?);
        let cfg: ExperimentConfig = toml::Value::Table(merged).try_into().map_err(|e| CliError::Config(format!("{e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, preset_override: Option<Preset>) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text, preset_override)?;
        if let (Some(t), Some(dir)) = (cfg.graphon.table.as_mut(), path.parent()) {
            if t.is_relative() {
                *t = dir.join(&*t);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: &str| Err(CliError::Config(msg.to_string()));
        let s = &self.solver;
        if !(s.eta_k > 0.0 && s.eta_g > 0.0) {
            return bad("solver.eta_k and solver.eta_g must be positive");
        }
        if !(s.omega > 0.0) || !(s.omega_decay > 0.0 && s.omega_decay <= 1.0) {
            return bad("solver.omega must be positive and solver.omega_decay in (0, 1]");
        }
        if self.sampling.n_sample == 0 {
            return bad("sampling.n_sample must be positive");
        }
        let g = &self.grids;
        if g.n_time == 0 || g.n_policy == 0 || g.reference_players == 0 || g.reference_n_time == 0 {
            return bad("grid sizes must be positive");
        }
        if self.graphon.kind == GraphonKind::Constant && self.graphon.value.is_none() {
            return bad("graphon.value is required for a constant graphon");
        }
        if self.graphon.kind == GraphonKind::Table && self.graphon.table.is_none() {
            return bad("graphon.table is required for a table graphon");
        }
        if s.zeroth_order.n_trajectories == 0 || !(s.zeroth_order.sigma_eps > 0.0) {
            return bad("solver.zeroth_order needs n_trajectories > 0 and sigma_eps > 0");
        }
        s.inner_k.expand(s.n_outer, "solver.inner_k")?;
        s.inner_g.expand(s.n_outer, "solver.inner_g")?;
        self.model_coefficients(None)?;
        self.players()?;
        Ok(())
    }

    /// Short content hash of everything that affects results.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        let text = serde_json::to_string(&c).expect("config serialises");
        let digest = Sha256::digest(text.as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    /// Model coefficients, optionally with the noise coefficient replaced by `noise`·I.
    pub fn model_coefficients(&self, noise: Option<f64>) -> Result<ModelCoefficients, CliError> {
        let m = &self.model;
        let b = m.b.coefficient()?;
        let (d, k) = b.shape();
        let coeff = |spec: &MatrixSpec, shape: (usize, usize), name: &str| -> Result<Coefficient, CliError> {
            let c = match spec {
                MatrixSpec::Scalar(x) if shape.0 == shape.1 => Coefficient::Constant(Mat::identity(shape.0, shape.1) * *x),
                other => other.coefficient()?,
            };
            if c.shape() != shape {
                return Err(CliError::Config(format!("model.{name} has shape {:?}, expected {:?}", c.shape(), shape)));
            }
            Ok(c)
        };
        let square = |spec: &MatrixSpec, name: &str| -> Result<Mat, CliError> {
            match spec {
                MatrixSpec::Scalar(x) => Ok(Mat::identity(d, d) * *x),
                other => {
                    let mm = other.matrix(name)?;
                    if mm.shape() != (d, d) {
                        return Err(CliError::Config(format!("model.{name} must be {d} x {d}")));
                    }
                    Ok(mm)
                }
            }
        };
        let d_coeff = match noise {
            Some(x) => Coefficient::Constant(Mat::identity(d, d) * x),
            None => coeff(&m.d, (d, d), "d")?,
        };
        if !(m.horizon > 0.0) {
            return Err(CliError::Config("model.horizon must be positive".into()));
        }
        Ok(ModelCoefficients {
            dim_d: d,
            dim_k: k,
            horizon: m.horizon,
            a: coeff(&m.a, (d, d), "a")?,
            a_bar: coeff(&m.a_bar, (d, d), "a_bar")?,
            b,
            d: d_coeff,
            h: coeff(&m.h, (d, d), "h")?,
            q: coeff(&m.q, (d, d), "q")?,
            r: coeff(&m.r, (k, k), "r")?,
            q_bar: square(&m.q_bar, "q_bar")?,
            h_bar: square(&m.h_bar, "h_bar")?,
        })
    }

    pub fn initial_law(&self, n_players: usize, dim_d: usize) -> Result<InitialLaw, CliError> {
        let mean = match &self.model.initial_mean {
            MatrixSpec::Scalar(x) => Mat::from_element(dim_d, 1, *x),
            other => other.matrix("initial_mean")?,
        };
        let cov = match &self.model.initial_covariance {
            MatrixSpec::Scalar(x) => Mat::identity(dim_d, dim_d) * *x,
            other => other.matrix("initial_covariance")?,
        };
        if mean.shape() != (dim_d, 1) || cov.shape() != (dim_d, dim_d) {
            return Err(CliError::Config("initial_mean must be d x 1 and initial_covariance d x d".into()));
        }
        Ok(InitialLaw::uniform(n_players, mean, cov))
    }

    pub fn players(&self) -> Result<PlayerGrid, CliError> {
        match &self.grids.player_labels {
            Some(l) => Ok(PlayerGrid::new(l.clone())?),
            None if self.grids.n_players > 0 => Ok(PlayerGrid::uniform(self.grids.n_players)),
            None => Err(CliError::Config("grids.n_players must be positive".into())),
        }
    }

    pub fn graphon_of(&self, kind: GraphonKind) -> Result<Graphon, CliError> {
        Ok(match kind {
            GraphonKind::UniformAttachment => Graphon::UniformAttachment,
            GraphonKind::Half => Graphon::Half,
            GraphonKind::Bipartite => Graphon::Bipartite,
            GraphonKind::Threshold => Graphon::Threshold,
            GraphonKind::Zero => Graphon::Zero,
            GraphonKind::Constant => Graphon::Constant(self.graphon.value.unwrap_or(0.0)),
            GraphonKind::Table => {
                let path = self.graphon.table.as_ref().ok_or_else(|| CliError::Config("graphon.table missing".into()))?;
                Graphon::load_table(path)?
            }
        })
    }

    pub fn quadrature(&self) -> QuadratureRule {
        match self.graphon.quadrature {
            Quadrature::SelfExcluding => QuadratureRule::SelfExcluding,
            Quadrature::Trapezoid => QuadratureRule::Trapezoid,
        }
    }

    pub fn solver_config(&self, seed: u64) -> Result<SolverConfig, CliError> {
        let s = &self.solver;
        let n_samples = self.sampling.n_sample;
        let gradient_mode = match s.gradient {
            Gradient::Exact => GradientMode::Exact,
            Gradient::Pathwise => GradientMode::PathwiseDiscrete(match s.estimator {
                Estimator::Expected => CostEstimator::Expected,
                Estimator::Sampled => CostEstimator::Sampled { n_samples },
            }),
            Gradient::ZerothOrder => {
                let z = &s.zeroth_order;
                GradientMode::ZerothOrder {
                    config: ZerothOrderConfig {
                        n_trajectories: z.n_trajectories,
                        sigma_eps: z.sigma_eps,
                        cost_mode: match z.cost_mode {
                            ZoCostMode::CostToGo => CostMode::CostToGo,
                            ZoCostMode::TotalCost => CostMode::TotalCost,
                        },
                        common_random_numbers: z.common_random_numbers,
                        baseline: z.baseline,
                    },
                    oracle: match z.oracle {
                        ZoOracle::Expected => ZerothOrderOracle::Expected,
                        ZoOracle::Sampled => ZerothOrderOracle::Sampled { n_samples },
                        ZoOracle::Exact => ZerothOrderOracle::Exact,
                    },
                }
            }
        };
        Ok(SolverConfig {
            n_outer: s.n_outer,
            inner_k: s.inner_k.expand(s.n_outer, "solver.inner_k")?,
            inner_g: s.inner_g.expand(s.n_outer, "solver.inner_g")?,
            eta_k: s.eta_k,
            eta_g: s.eta_g,
            gradient_mode,
            oracle_mode: match s.oracle {
                Oracle::Ode => OracleMode::Ode,
                Oracle::MonteCarlo => OracleMode::MonteCarlo { n_samples, max_iterations: s.oracle_max_iterations },
            },
            omega: (0..s.n_outer).map(|n| s.omega * s.omega_decay.powi(n as i32)).collect(),
            seed,
            log_timing: s.log_timing,
        })
    }
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}
