//! Model-free gradient estimates from ±σ perturbations of single policy coordinates.

use rand::Rng;
use rayon::prelude::*;

use crate::cost::{discrete_j1_stages, discrete_j2_stages, estimates_from_moments, j1_to_go, j2_to_go, suffix_sums};
use crate::dynamics::sde::{euler_covariance, simulate_moments, EulerCoefficients};
use crate::dynamics::{solve_covariance, solve_mean_fixed_z};
use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::model::{InitialLaw, ModelCoefficients, PolicyGrid, TimeGrid};
use crate::path::StagePath;
use crate::policy::PolicyLayout;
use crate::rng;

/// Which simulated cost is attached to a perturbation of the coordinate at τ_c.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CostMode {
    /// Cost accumulated from τ_c to T.
    #[default]
    CostToGo,
    /// Cost over the whole horizon.
    TotalCost,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZerothOrderConfig {
    pub n_trajectories: usize,
    pub sigma_eps: f64,
    pub cost_mode: CostMode,
    /// Reuse the unperturbed evaluation's noise for every perturbed evaluation.
    pub common_random_numbers: bool,
    /// Subtract the unperturbed cost before weighting by ε.
    pub baseline: bool,
}

impl Default for ZerothOrderConfig {
    fn default() -> Self {
        ZerothOrderConfig { n_trajectories: 10, sigma_eps: 0.25, cost_mode: CostMode::CostToGo, common_random_numbers: false, baseline: true }
    }
}

impl ZerothOrderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_trajectories == 0 || !(self.sigma_eps > 0.0) {
            return Err(Error::Invalid("zeroth-order estimation needs N ≥ 1 and σ_ε > 0".into()));
        }
        Ok(())
    }
}

/// Ĵ₁ cost-to-go from every node and the covariance estimate at the nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct J1Profile {
    pub to_go: Vec<f64>,
    pub theta: Vec<Mat>,
}

/// Black-box cost evaluation for a policy under the frozen aggregate held by the oracle.
pub trait CostOracle: Sync {
    fn j1(&self, k: &StagePath, g: &StagePath, seed: u64) -> Result<J1Profile>;
    /// [player][node] cost-to-go of Ĵ₂.
    fn j2(&self, k: &StagePath, g: &StagePath, seed: u64) -> Result<Vec<Vec<f64>>>;
}

fn pooled_theta0(laws: &InitialLaw) -> Mat {
    let n = laws.covariances.len() as f64;
    laws.covariances.iter().skip(1).fold(laws.covariances[0].clone(), |a, c| a + c) / n
}

/// Expectation of the Monte Carlo estimator, from the moment recursions of the scheme.
pub struct ExpectedOracle<'a> {
    pub model: &'a ModelCoefficients,
    pub tg: &'a TimeGrid,
    pub z: &'a StagePath,
    pub laws: &'a InitialLaw,
}

impl CostOracle for ExpectedOracle<'_> {
    fn j1(&self, k: &StagePath, _g: &StagePath, _seed: u64) -> Result<J1Profile> {
        let theta = euler_covariance(self.model, self.tg, k, &pooled_theta0(self.laws));
        Ok(J1Profile { to_go: suffix_sums(&discrete_j1_stages(self.model, self.tg, k, &theta)), theta })
    }

    fn j2(&self, k: &StagePath, g: &StagePath, _seed: u64) -> Result<Vec<Vec<f64>>> {
        let mean = EulerCoefficients::new(self.model, self.tg, k, g, self.z).mean(&self.laws.mean_matrix());
        Ok(discrete_j2_stages(self.model, self.tg, k, g, self.z, &mean).iter().map(|s| suffix_sums(s)).collect())
    }
}

/// Monte Carlo estimates from freshly simulated Euler paths.
pub struct SampledOracle<'a> {
    pub model: &'a ModelCoefficients,
    pub tg: &'a TimeGrid,
    pub z: &'a StagePath,
    pub laws: &'a InitialLaw,
    pub n_samples: usize,
}

impl SampledOracle<'_> {
    fn estimate(&self, k: &StagePath, g: &StagePath, seed: u64) -> Result<crate::cost::MonteCarloEstimates> {
        let coefs = EulerCoefficients::new(self.model, self.tg, k, g, self.z);
        let players: Vec<usize> = (0..self.laws.n_players()).collect();
        let mom = simulate_moments(&coefs, self.laws, &players, self.n_samples, seed)?;
        Ok(estimates_from_moments(self.model, self.tg, k, g, self.z, mom))
    }
}

impl CostOracle for SampledOracle<'_> {
    fn j1(&self, k: &StagePath, g: &StagePath, seed: u64) -> Result<J1Profile> {
        let est = self.estimate(k, g, seed)?;
        Ok(J1Profile { to_go: est.j1_to_go, theta: est.theta_hat })
    }

    fn j2(&self, k: &StagePath, g: &StagePath, seed: u64) -> Result<Vec<Vec<f64>>> {
        Ok(self.estimate(k, g, seed)?.j2_to_go)
    }
}

/// Exact costs from the moment ODEs.
pub struct ExactOracle<'a> {
    pub model: &'a ModelCoefficients,
    pub tg: &'a TimeGrid,
    pub z: &'a StagePath,
    pub laws: &'a InitialLaw,
}

impl CostOracle for ExactOracle<'_> {
    fn j1(&self, k: &StagePath, _g: &StagePath, _seed: u64) -> Result<J1Profile> {
        let theta = solve_covariance(self.model, self.tg, k, &pooled_theta0(self.laws))?;
        Ok(J1Profile { to_go: j1_to_go(self.model, self.tg, k, &theta), theta: theta.nodes() })
    }

    fn j2(&self, k: &StagePath, g: &StagePath, _seed: u64) -> Result<Vec<Vec<f64>>> {
        let mu = solve_mean_fixed_z(self.model, self.tg, k, g, self.z, &self.laws.mean_matrix())?;
        Ok(j2_to_go(self.model, self.tg, k, g, self.z, &mu))
    }
}

const TAG_BASE: u64 = 0xB0;
const TAG_SIGN_K: u64 = 0xB1;
const TAG_EVAL_K: u64 = 0xB2;
const TAG_SIGN_G: u64 = 0xB3;
const TAG_EVAL_G: u64 = 0xB4;

fn sign(seed: u64, tags: &[u64]) -> f64 {
    if rng::stream(seed, tags).gen::<bool>() {
        1.0
    } else {
        -1.0
    }
}

fn pick(profile: &[f64], mode: CostMode, node: usize) -> f64 {
    match mode {
        CostMode::CostToGo => profile[node],
        CostMode::TotalCost => profile[0],
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZerothOrderSlope {
    pub coords: Vec<Mat>,
    /// Covariance estimate of the unperturbed evaluation at each τ_c.
    pub theta_at_coords: Vec<Mat>,
}

/// Per-coordinate estimate of ∂Ĵ₁/∂K_{τ_c}; every entry of every coordinate is perturbed
/// on its own.
pub fn zeroth_order_grad_k(
    tg: &TimeGrid,
    pg: &PolicyGrid,
    k: &[Mat],
    g: &StagePath,
    cfg: &ZerothOrderConfig,
    oracle: &dyn CostOracle,
    seed: u64,
) -> Result<ZerothOrderSlope> {
    cfg.validate()?;
    let layout = PolicyLayout::PiecewiseConstant(pg.clone());
    let base_seed = rng::derive_seed(seed, &[TAG_BASE]);
    let base = oracle.j1(&layout.expand(tg, k), g, base_seed)?;
    let (rows, cols) = k[0].shape();
    let jobs: Vec<(usize, usize)> = (0..pg.n_intervals).flat_map(|c| (0..rows * cols).map(move |e| (c, e))).collect();
    let sigma = cfg.sigma_eps;
    let estimates: Vec<f64> = jobs
        .par_iter()
        .map(|&(c, e)| {
            let node = pg.first_step(c);
            let b = if cfg.baseline { pick(&base.to_go, cfg.cost_mode, node) } else { 0.0 };
            let mut acc = 0.0;
            for r in 0..cfg.n_trajectories as u64 {
                let tags = [c as u64, e as u64, r];
                let eps = sigma * sign(seed, &[TAG_SIGN_K, tags[0], tags[1], tags[2]]);
                let mut kp = k.to_vec();
                kp[c][(e / cols, e % cols)] += eps;
                let eval_seed = if cfg.common_random_numbers { base_seed } else { rng::derive_seed(seed, &[TAG_EVAL_K, tags[0], tags[1], tags[2]]) };
                let prof = oracle.j1(&layout.expand(tg, &kp), g, eval_seed)?;
                acc += (pick(&prof.to_go, cfg.cost_mode, node) - b) * eps;
            }
            Ok(acc / (cfg.n_trajectories as f64 * sigma * sigma))
        })
        .collect::<Result<_>>()?;
    let coords = (0..pg.n_intervals)
        .map(|c| Mat::from_fn(rows, cols, |i, j| estimates[c * rows * cols + i * cols + j]))
        .collect();
    let theta_at_coords = (0..pg.n_intervals).map(|c| base.theta[pg.first_step(c)].clone()).collect();
    Ok(ZerothOrderSlope { coords, theta_at_coords })
}

/// Per-coordinate, per-player estimate of ∂Ĵ₂^α/∂G^α_{τ_c}. Under a frozen aggregate a
/// player's cost depends on its own intercept only, so all players are perturbed in the
/// same evaluation with independent signs.
pub fn zeroth_order_grad_g(
    tg: &TimeGrid,
    pg: &PolicyGrid,
    k: &StagePath,
    g: &[Mat],
    cfg: &ZerothOrderConfig,
    oracle: &dyn CostOracle,
    seed: u64,
) -> Result<Vec<Mat>> {
    cfg.validate()?;
    let layout = PolicyLayout::PiecewiseConstant(pg.clone());
    let base_seed = rng::derive_seed(seed, &[TAG_BASE, 1]);
    let base = oracle.j2(k, &layout.expand(tg, g), base_seed)?;
    let (rows, np) = g[0].shape();
    let sigma = cfg.sigma_eps;
    let jobs: Vec<(usize, usize)> = (0..pg.n_intervals).flat_map(|c| (0..rows).map(move |e| (c, e))).collect();
    let estimates: Vec<Vec<f64>> = jobs
        .par_iter()
        .map(|&(c, e)| {
            let node = pg.first_step(c);
            let mut acc = vec![0.0; np];
            for r in 0..cfg.n_trajectories as u64 {
                let tags = [c as u64, e as u64, r];
                let eps: Vec<f64> = (0..np as u64).map(|j| sigma * sign(seed, &[TAG_SIGN_G, tags[0], tags[1], tags[2], j])).collect();
                let mut gp = g.to_vec();
                for (j, ej) in eps.iter().enumerate() {
                    gp[c][(e, j)] += ej;
                }
                let eval_seed = if cfg.common_random_numbers { base_seed } else { rng::derive_seed(seed, &[TAG_EVAL_G, tags[0], tags[1], tags[2]]) };
                let prof = oracle.j2(k, &layout.expand(tg, &gp), eval_seed)?;
                for j in 0..np {
                    let b = if cfg.baseline { pick(&base[j], cfg.cost_mode, node) } else { 0.0 };
                    acc[j] += (pick(&prof[j], cfg.cost_mode, node) - b) * eps[j];
                }
            }
            Ok(acc.into_iter().map(|a| a / (cfg.n_trajectories as f64 * sigma * sigma)).collect())
        })
        .collect::<Result<_>>()?;
    Ok((0..pg.n_intervals).map(|c| Mat::from_fn(rows, np, |e, j| estimates[c * rows + e][j])).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradients::{grad_g_exact, grad_k_exact};
    use crate::linalg::scalar;
    use crate::model::build_grids;

    /// Ĵ₁ = Σ_c a_c (K_c − b_c)², reported as its own cost-to-go from node 0.
    struct Quadratic {
        a: Vec<f64>,
        b: Vec<f64>,
        pg: PolicyGrid,
        tg: TimeGrid,
    }

    impl CostOracle for Quadratic {
        fn j1(&self, k: &StagePath, _g: &StagePath, _seed: u64) -> Result<J1Profile> {
            let v: f64 = (0..self.a.len())
                .map(|c| self.a[c] * (k.at(self.pg.first_step(c), crate::path::Stage::Start)[(0, 0)] - self.b[c]).powi(2))
                .sum();
            Ok(J1Profile { to_go: vec![v; self.tg.n_steps + 1], theta: vec![scalar(1.0); self.tg.n_steps + 1] })
        }
        fn j2(&self, _k: &StagePath, g: &StagePath, seed: u64) -> Result<Vec<Vec<f64>>> {
            let j = self.j1(&g.map(|_, _, m| m.columns(0, 1).into_owned()), g, seed)?;
            Ok(vec![j.to_go])
        }
    }

    #[test]
    fn quadratic_oracle_gives_the_derivative_in_expectation() {
        let (tg, pg, _) = build_grids(1.0, 12, 3, vec![0.0]).unwrap();
        let q = Quadratic { a: vec![1.0, 2.0, 0.5], b: vec![0.3, -0.1, 1.0], pg: pg.clone(), tg: tg.clone() };
        let k = vec![scalar(1.0), scalar(1.0), scalar(-1.0)];
        let g = StagePath::constant(12, scalar(0.0));
        let cfg = ZerothOrderConfig { n_trajectories: 20_000, sigma_eps: 0.1, ..Default::default() };
        let est = zeroth_order_grad_k(&tg, &pg, &k, &g, &cfg, &q, 3).unwrap();
        for c in 0..3 {
            let exact = 2.0 * q.a[c] * (k[c][(0, 0)] - q.b[c]);
            // residual a·σ·mean(sign) shrinks like N^{-1/2}
            assert!((est.coords[c][(0, 0)] - exact).abs() < 4.0 * q.a[c] * 0.1 / (20_000f64).sqrt());
        }
    }

    #[test]
    fn balanced_signs_are_exact_for_quadratics() {
        // with a baseline a single round's estimate is 2a(K − b) + aε; averaging the two
        // signs recovers the derivative exactly
        let (tg, pg, _) = build_grids(1.0, 4, 1, vec![0.0]).unwrap();
        let q = Quadratic { a: vec![1.5], b: vec![0.2], pg: pg.clone(), tg: tg.clone() };
        let g = StagePath::constant(4, scalar(0.0));
        let cfg = ZerothOrderConfig { n_trajectories: 1, sigma_eps: 0.3, ..Default::default() };
        let mut total = 0.0;
        let mut seen = [false; 2];
        for seed in 0..64 {
            let v = zeroth_order_grad_k(&tg, &pg, &[scalar(0.7)], &g, &cfg, &q, seed).unwrap().coords[0][(0, 0)];
            let slot = usize::from(v > 2.0 * 1.5 * 0.5);
            if !seen[slot] {
                seen[slot] = true;
                total += v;
            }
        }
        assert!(seen[0] && seen[1]);
        assert!((total / 2.0 - 1.5).abs() < 1e-12);
    }

    #[test]
    fn benchmark_configuration_on_exact_costs() {
        let m = ModelCoefficients::benchmark();
        let (tg, pg, _) = build_grids(1.0, 120, 30, vec![0.0]).unwrap();
        let laws = InitialLaw::benchmark(1);
        let z = StagePath::constant(120, scalar(0.0));
        let g = StagePath::constant(120, scalar(1.0));
        let k = vec![scalar(-1.0); 30];
        let oracle = ExactOracle { model: &m, tg: &tg, z: &z, laws: &laws };
        let layout = PolicyLayout::PiecewiseConstant(pg.clone());
        let exact = grad_k_exact(&m, &tg, &layout, &layout.expand(&tg, &k), &scalar(0.01)).unwrap();
        let est = zeroth_order_grad_k(&tg, &pg, &k, &g, &ZerothOrderConfig::default(), &oracle, 11).unwrap();
        for c in 0..30 {
            let e = exact.raw[c][(0, 0)] * pg.dtau;
            assert!((est.coords[c][(0, 0)] - e).abs() <= 0.15 * e.abs(), "coord {c}");
        }
    }

    #[test]
    fn intercept_estimates_are_unbiased_over_seeds() {
        let m = ModelCoefficients::benchmark();
        let (tg, pg, _) = build_grids(1.0, 60, 5, vec![0.0, 1.0]).unwrap();
        let laws = InitialLaw::benchmark(2);
        let z = StagePath::constant(60, Mat::from_row_slice(1, 2, &[0.1, 0.3]));
        let k = StagePath::constant(60, scalar(-1.0));
        let g = vec![Mat::from_row_slice(1, 2, &[1.0, 0.5]); 5];
        let oracle = ExpectedOracle { model: &m, tg: &tg, z: &z, laws: &laws };
        let cfg = ZerothOrderConfig::default();
        let reps: Vec<Vec<Mat>> = (0..400).map(|s| zeroth_order_grad_g(&tg, &pg, &k, &g, &cfg, &oracle, s).unwrap()).collect();
        let layout = PolicyLayout::PiecewiseConstant(pg.clone());
        let reference = grad_g_exact(&m, &tg, &layout, &k, &layout.expand(&tg, &g), &z, &laws.mean_matrix()).unwrap();
        for c in 0..5 {
            for j in 0..2 {
                let xs: Vec<f64> = reps.iter().map(|r| r[c][(0, j)]).collect();
                let mean = xs.iter().sum::<f64>() / xs.len() as f64;
                let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt();
                let se = sd / (xs.len() as f64).sqrt();
                // Euler costs differ from the ODE gradient by O(Δt)
                let target = reference.coords[c][(0, j)] * pg.dtau;
                assert!((mean - target).abs() < 3.0 * se + 0.05 * target.abs(), "c {c} j {j}: {mean} vs {target} (se {se})");
            }
        }
    }
}
