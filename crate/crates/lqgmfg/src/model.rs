//! Game coefficients, discretization grids and initial laws.

use crate::error::{Error, Result};
use crate::linalg::{self, scalar, Mat};
use crate::path::Stage;

/// A time-dependent coefficient, either constant or sampled at every simulation node.
#[derive(Debug, Clone, PartialEq)]
pub enum Coefficient {
    Constant(Mat),
    Sampled(Vec<Mat>),
}

impl Coefficient {
    pub fn scalar(x: f64) -> Self {
        Coefficient::Constant(scalar(x))
    }

    pub fn shape(&self) -> (usize, usize) {
        match self {
            Coefficient::Constant(m) => m.shape(),
            Coefficient::Sampled(v) => v[0].shape(),
        }
    }

    pub fn at_node(&self, i: usize) -> Mat {
        match self {
            Coefficient::Constant(m) => m.clone(),
            Coefficient::Sampled(v) => v[i].clone(),
        }
    }

    /// Value at a stage point of step `i`; midpoints average the two adjacent samples.
    pub fn at(&self, i: usize, stage: Stage) -> Mat {
        match self {
            Coefficient::Constant(m) => m.clone(),
            Coefficient::Sampled(v) => match stage {
                Stage::Start => v[i].clone(),
                Stage::Mid => (&v[i] + &v[i + 1]) * 0.5,
                Stage::End => v[i + 1].clone(),
            },
        }
    }

    /// Nearest-node lookup at an arbitrary time.
    pub fn at_time(&self, tg: &TimeGrid, t: f64) -> Mat {
        let i = ((t / tg.dt).round().max(0.0) as usize).min(tg.n_steps);
        self.at_node(i)
    }

    pub fn sup_norm(&self) -> f64 {
        match self {
            Coefficient::Constant(m) => linalg::norm(m),
            Coefficient::Sampled(v) => v.iter().fold(0.0, |a, m| a.max(linalg::norm(m))),
        }
    }

    /// Largest and smallest eigenvalue over all nodes (symmetric coefficients only).
    pub fn eigen_range(&self) -> (f64, f64) {
        let nodes: Vec<&Mat> = match self {
            Coefficient::Constant(m) => vec![m],
            Coefficient::Sampled(v) => v.iter().collect(),
        };
        nodes.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), m| {
            let ev = linalg::sym_eigenvalues(m);
            (lo.min(ev[0]), hi.max(*ev.last().unwrap()))
        })
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, Coefficient::Constant(_))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelCoefficients {
    pub dim_d: usize,
    pub dim_k: usize,
    pub horizon: f64,
    pub a: Coefficient,
    pub a_bar: Coefficient,
    pub b: Coefficient,
    pub d: Coefficient,
    pub h: Coefficient,
    pub q: Coefficient,
    pub r: Coefficient,
    pub q_bar: Mat,
    pub h_bar: Mat,
}

impl ModelCoefficients {
    /// Scalar model used throughout the numerical experiments.
    pub fn benchmark() -> Self {
        ModelCoefficients {
            dim_d: 1,
            dim_k: 1,
            horizon: 1.0,
            a: Coefficient::scalar(-0.25),
            a_bar: Coefficient::scalar(0.25),
            b: Coefficient::scalar(0.5),
            d: Coefficient::scalar(0.25),
            h: Coefficient::scalar(1.0),
            q: Coefficient::scalar(0.25),
            r: Coefficient::scalar(0.5),
            q_bar: scalar(0.05),
            h_bar: scalar(1.0),
        }
    }

    pub fn r_inv(&self, i: usize, stage: Stage) -> Mat {
        linalg::invert(&self.r.at(i, stage)).expect("R validated positive definite")
    }

    fn check_shapes(&self, tg: &TimeGrid) -> Result<()> {
        let (d, k) = (self.dim_d, self.dim_k);
        let expect = [
            ("A", &self.a, (d, d)),
            ("Abar", &self.a_bar, (d, d)),
            ("B", &self.b, (d, k)),
            ("D", &self.d, (d, d)),
            ("H", &self.h, (d, d)),
            ("Q", &self.q, (d, d)),
            ("R", &self.r, (k, k)),
        ];
        for (name, c, shape) in expect {
            if c.shape() != shape {
                return Err(Error::Invalid(format!("{name} has shape {:?}, expected {:?}", c.shape(), shape)));
            }
            if let Coefficient::Sampled(v) = c {
                if v.len() != tg.n_steps + 1 {
                    return Err(Error::GridMismatch(format!(
                        "{name} has {} samples for {} nodes",
                        v.len(),
                        tg.n_steps + 1
                    )));
                }
                if v.iter().any(|m| m.shape() != shape || !linalg::is_finite(m)) {
                    return Err(Error::Invalid(format!("{name} has malformed or non-finite samples")));
                }
            } else if let Coefficient::Constant(m) = c {
                if !linalg::is_finite(m) {
                    return Err(Error::Invalid(format!("{name} is not finite")));
                }
            }
        }
        if self.q_bar.shape() != (d, d) || self.h_bar.shape() != (d, d) {
            return Err(Error::Invalid("Qbar and Hbar must be d x d".into()));
        }
        if !(self.horizon > 0.0) || (self.horizon - tg.horizon).abs() > 1e-12 * self.horizon {
            return Err(Error::Invalid(format!("horizon {} does not match time grid", self.horizon)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    pub horizon: f64,
    pub n_steps: usize,
    pub dt: f64,
}

impl TimeGrid {
    pub fn new(horizon: f64, n_steps: usize) -> Result<Self> {
        if !(horizon > 0.0) || n_steps == 0 {
            return Err(Error::Invalid(format!("time grid needs T > 0 and at least one step (T = {horizon}, n = {n_steps})")));
        }
        Ok(TimeGrid { horizon, n_steps, dt: horizon / n_steps as f64 })
    }

    pub fn node(&self, i: usize) -> f64 {
        i as f64 * self.dt
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..=self.n_steps).map(|i| self.node(i)).collect()
    }

    pub fn stage_time(&self, i: usize, stage: Stage) -> f64 {
        (i as f64 + stage.frac()) * self.dt
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyGrid {
    pub n_intervals: usize,
    pub dtau: f64,
    /// Simulation steps per policy interval.
    pub ratio: usize,
}

impl PolicyGrid {
    pub fn interval_of_step(&self, step: usize) -> usize {
        step / self.ratio
    }

    pub fn first_step(&self, interval: usize) -> usize {
        interval * self.ratio
    }

    /// Policy node τ_i, bitwise equal to the simulation node it sits on.
    pub fn node(&self, tg: &TimeGrid, i: usize) -> f64 {
        tg.node(i * self.ratio)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlayerGrid {
    pub alphas: Vec<f64>,
}

impl PlayerGrid {
    pub fn new(alphas: Vec<f64>) -> Result<Self> {
        if alphas.is_empty() {
            return Err(Error::Invalid("player grid is empty".into()));
        }
        for &a in &alphas {
            if !(0.0..=1.0).contains(&a) {
                return Err(Error::OutOfRangeLabel(a));
            }
        }
        if alphas.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Invalid("player labels must be strictly increasing".into()));
        }
        Ok(PlayerGrid { alphas })
    }

    /// `n` equally spaced labels covering [0, 1].
    pub fn uniform(n: usize) -> Self {
        let alphas = if n == 1 { vec![0.5] } else { (0..n).map(|j| j as f64 / (n - 1) as f64).collect() };
        PlayerGrid { alphas }
    }

    pub fn len(&self) -> usize {
        self.alphas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alphas.is_empty()
    }

    /// Index of the player whose label is nearest to `beta` (ties go to the lower label).
    pub fn nearest(&self, beta: f64) -> usize {
        let mut best = 0;
        for (j, a) in self.alphas.iter().enumerate() {
            if (a - beta).abs() < (self.alphas[best] - beta).abs() {
                best = j;
            }
        }
        best
    }
}

pub fn build_grids(
    horizon: f64,
    n_time: usize,
    n_policy_intervals: usize,
    player_labels: Vec<f64>,
) -> Result<(TimeGrid, PolicyGrid, PlayerGrid)> {
    let tg = TimeGrid::new(horizon, n_time)?;
    if n_policy_intervals == 0 || n_time % n_policy_intervals != 0 {
        return Err(Error::IncompatibleGrids {
            dt: tg.dt,
            dtau: horizon / n_policy_intervals.max(1) as f64,
        });
    }
    let ratio = n_time / n_policy_intervals;
    let pg = PolicyGrid { n_intervals: n_policy_intervals, dtau: tg.dt * ratio as f64, ratio };
    let players = PlayerGrid::new(player_labels)?;
    Ok((tg, pg, players))
}

/// Gaussian initial laws, one per player.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialLaw {
    pub means: Vec<Mat>,
    pub covariances: Vec<Mat>,
}

impl InitialLaw {
    pub fn uniform(n_players: usize, mean: Mat, covariance: Mat) -> Self {
        InitialLaw { means: vec![mean; n_players], covariances: vec![covariance; n_players] }
    }

    pub fn benchmark(n_players: usize) -> Self {
        InitialLaw::uniform(n_players, scalar(0.5), scalar(0.01))
    }

    pub fn n_players(&self) -> usize {
        self.means.len()
    }

    /// Means stacked column-wise into a d × N matrix.
    pub fn mean_matrix(&self) -> Mat {
        let d = self.means[0.min(self.means.len() - 1)].nrows();
        let mut m = Mat::zeros(d, self.means.len());
        for (j, mu) in self.means.iter().enumerate() {
            m.set_column(j, &mu.column(0));
        }
        m
    }

    /// Whether every player shares one covariance.
    pub fn common_covariance(&self) -> bool {
        self.covariances.windows(2).all(|w| w[0] == w[1])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub lambda_r_lower: f64,
    pub lambda_r_upper: f64,
    pub theta0_upper: f64,
    pub theta0_lower: f64,
}

pub fn validate_model(
    m: &ModelCoefficients,
    laws: &InitialLaw,
    tg: &TimeGrid,
    require_nondegenerate: bool,
) -> Result<ValidationReport> {
    m.check_shapes(tg)?;
    let mut lambda_r_lower = f64::INFINITY;
    let mut lambda_r_upper = f64::NEG_INFINITY;
    let nodes = if m.r.is_constant() && m.q.is_constant() { 1 } else { tg.n_steps + 1 };
    for i in 0..nodes {
        let r = m.r.at_node(i);
        let ev = linalg::sym_eigenvalues(&r);
        if (&r - r.transpose()).norm() > 1e-12 * (1.0 + r.norm()) || ev[0] <= 0.0 {
            return Err(Error::NonPositiveDefiniteR { time: tg.node(i), eigenvalue: ev[0] });
        }
        lambda_r_lower = lambda_r_lower.min(ev[0]);
        lambda_r_upper = lambda_r_upper.max(*ev.last().unwrap());
        let q = m.q.at_node(i);
        if linalg::min_eigenvalue(&q) < -1e-12 || (&q - q.transpose()).norm() > 1e-12 * (1.0 + q.norm()) {
            return Err(Error::Invalid(format!("Q({}) is not symmetric positive semidefinite", tg.node(i))));
        }
    }
    if linalg::min_eigenvalue(&m.q_bar) < -1e-12 || (&m.q_bar - m.q_bar.transpose()).norm() > 1e-12 {
        return Err(Error::Invalid("Qbar is not symmetric positive semidefinite".into()));
    }
    if laws.means.len() != laws.covariances.len() || laws.means.is_empty() {
        return Err(Error::Invalid("initial law needs one mean and one covariance per player".into()));
    }
    let mut theta0_upper = 0.0_f64;
    let mut theta0_lower = f64::INFINITY;
    for (j, (mu, cov)) in laws.means.iter().zip(&laws.covariances).enumerate() {
        if mu.shape() != (m.dim_d, 1) || cov.shape() != (m.dim_d, m.dim_d) {
            return Err(Error::Invalid(format!("initial law of player {j} has the wrong dimension")));
        }
        if (cov - cov.transpose()).norm() > 1e-12 * (1.0 + cov.norm()) {
            return Err(Error::Invalid(format!("initial covariance of player {j} is not symmetric")));
        }
        let lo = linalg::min_eigenvalue(cov);
        if lo < -1e-12 || (require_nondegenerate && lo <= 0.0) {
            return Err(Error::DegenerateInitialCovariance { player: j, eigenvalue: lo });
        }
        theta0_upper = theta0_upper.max(linalg::norm(cov));
        theta0_lower = theta0_lower.min(lo);
    }
    Ok(ValidationReport { lambda_r_lower, lambda_r_upper, theta0_upper, theta0_lower })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn benchmark_model_validates() {
        let tg = TimeGrid::new(1.0, 120).unwrap();
        let rep = validate_model(&ModelCoefficients::benchmark(), &InitialLaw::benchmark(11), &tg, true).unwrap();
        assert_eq!(rep.lambda_r_lower, 0.5);
        assert_eq!(rep.theta0_lower, 0.01);
    }

    #[test]
    fn zero_r_is_rejected() {
        let tg = TimeGrid::new(1.0, 10).unwrap();
        let mut m = ModelCoefficients::benchmark();
        m.r = Coefficient::scalar(0.0);
        let err = validate_model(&m, &InitialLaw::benchmark(2), &tg, false).unwrap_err();
        assert!(matches!(err, Error::NonPositiveDefiniteR { .. }));
    }

    #[test]
    fn singular_covariance_is_degenerate() {
        let tg = TimeGrid::new(1.0, 10).unwrap();
        let mut m = ModelCoefficients::benchmark();
        m.dim_d = 2;
        m.dim_k = 1;
        let i2 = Mat::identity(2, 2);
        m.a = Coefficient::Constant(i2.clone() * -0.25);
        m.a_bar = Coefficient::Constant(i2.clone());
        m.b = Coefficient::Constant(Mat::from_element(2, 1, 0.5));
        m.d = Coefficient::Constant(i2.clone());
        m.h = Coefficient::Constant(i2.clone());
        m.q = Coefficient::Constant(i2.clone());
        m.q_bar = i2.clone();
        m.h_bar = i2;
        let law = InitialLaw::uniform(1, Mat::zeros(2, 1), Mat::from_diagonal(&nalgebra::DVector::from_vec(vec![0.01, 0.0])));
        let err = validate_model(&m, &law, &tg, true).unwrap_err();
        assert!(matches!(err, Error::DegenerateInitialCovariance { .. }));
    }

    #[test]
    fn benchmark_grids() {
        let (tg, pg, pl) = build_grids(1.0, 120, 30, PlayerGrid::uniform(11).alphas).unwrap();
        assert_eq!(pg.ratio, 4);
        assert!((tg.dt - 1.0 / 120.0).abs() < 1e-16);
        assert!((pg.dtau - 1.0 / 30.0).abs() < 1e-15);
        assert_eq!(pl.len(), 11);
        let (_, fine, _) = build_grids(1.0, 120, 120, vec![0.0]).unwrap();
        assert_eq!(fine.ratio, 1);
    }

    #[test]
    fn incompatible_grids() {
        assert!(matches!(build_grids(1.0, 100, 30, vec![0.0]), Err(Error::IncompatibleGrids { .. })));
    }

    #[test]
    fn policy_nodes_coincide_with_time_nodes() {
        let (tg, pg, _) = build_grids(1.0, 120, 30, vec![0.0]).unwrap();
        let nodes = tg.nodes();
        for i in 0..=pg.n_intervals {
            assert!(nodes.iter().any(|t| t.to_bits() == pg.node(&tg, i).to_bits()));
        }
    }

    #[test]
    fn labels_are_checked() {
        assert!(matches!(PlayerGrid::new(vec![0.0, 1.2]), Err(Error::OutOfRangeLabel(_))));
        assert!(PlayerGrid::new(vec![0.5, 0.2]).is_err());
    }
}
