//! Cost functionals: exact ODE-based J₁, J₂ and J, and the Monte Carlo estimates.

use crate::dynamics::sde::{batch_moments, EulerCoefficients, SampleMoments, TrajectoryBatch};
use crate::dynamics::{solve_covariance, solve_mean_fixed_z, CovariancePath, MeanField};
use crate::error::Result;
use crate::linalg::Mat;
use crate::model::{InitialLaw, ModelCoefficients, TimeGrid};
use crate::path::{simpson_step, Stage, StagePath};

#[derive(Debug, Clone, PartialEq)]
pub struct CostBreakdown {
    pub j1: Vec<f64>,
    pub j2: Vec<f64>,
    pub j_total: Vec<f64>,
}

fn j1_density(m: &ModelCoefficients, k: &StagePath, theta: &CovariancePath, i: usize, s: Stage) -> f64 {
    let kk = k.at(i, s);
    ((m.q.at(i, s) + kk.transpose() * m.r.at(i, s) * kk) * theta.at(i, s)).trace()
}

/// Cost-to-go of J₁ from every node (entry 0 is J₁ itself), Simpson quadrature per step.
pub fn j1_to_go(m: &ModelCoefficients, tg: &TimeGrid, k: &StagePath, theta: &CovariancePath) -> Vec<f64> {
    let n = tg.n_steps;
    let mut out = vec![0.0; n + 1];
    out[n] = (&m.q_bar * theta.node(n)).trace();
    for i in (0..n).rev() {
        out[i] = out[i + 1] + simpson_step(tg.dt, |s| j1_density(m, k, theta, i, s));
    }
    out
}

pub fn j1_exact(m: &ModelCoefficients, tg: &TimeGrid, k: &StagePath, theta0: &Mat) -> Result<f64> {
    let theta = solve_covariance(m, tg, k, theta0)?;
    Ok(j1_to_go(m, tg, k, &theta)[0])
}

fn j2_density(m: &ModelCoefficients, k: &StagePath, g: &StagePath, z: &StagePath, mu: &MeanField, i: usize, s: Stage) -> Vec<f64> {
    let mu_t = mu.at(i, s);
    let dev = mu_t - m.h.at(i, s) * z.at(i, s);
    let ctrl = k.at(i, s) * mu_t + g.at(i, s);
    let (q, r) = (m.q.at(i, s), m.r.at(i, s));
    (0..mu_t.ncols())
        .map(|j| {
            let (e, u) = (dev.column(j), ctrl.column(j));
            (e.transpose() * &q * e)[(0, 0)] + (u.transpose() * &r * u)[(0, 0)]
        })
        .collect()
}

/// Per-player cost-to-go of J₂ from every node, given the mean path.
pub fn j2_to_go(m: &ModelCoefficients, tg: &TimeGrid, k: &StagePath, g: &StagePath, z: &StagePath, mu: &MeanField) -> Vec<Vec<f64>> {
    let n = tg.n_steps;
    let np = mu.start[0].ncols();
    let mut out = vec![vec![0.0; n + 1]; np];
    let dev_t = mu.node(n) - &m.h_bar * z.node(n);
    for (j, row) in out.iter_mut().enumerate() {
        let e = dev_t.column(j);
        row[n] = (e.transpose() * &m.q_bar * e)[(0, 0)];
    }
    for i in (0..n).rev() {
        let vals: [Vec<f64>; 3] = [
            j2_density(m, k, g, z, mu, i, Stage::Start),
            j2_density(m, k, g, z, mu, i, Stage::Mid),
            j2_density(m, k, g, z, mu, i, Stage::End),
        ];
        for (j, row) in out.iter_mut().enumerate() {
            row[i] = row[i + 1] + tg.dt / 6.0 * (vals[0][j] + 4.0 * vals[1][j] + vals[2][j]);
        }
    }
    out
}

/// J₂ for every player (columns of `g`, `z`, `mu0`).
pub fn j2_exact(m: &ModelCoefficients, tg: &TimeGrid, k: &StagePath, g: &StagePath, z: &StagePath, mu0: &Mat) -> Result<Vec<f64>> {
    let mu = solve_mean_fixed_z(m, tg, k, g, z, mu0)?;
    Ok(j2_to_go(m, tg, k, g, z, &mu).iter().map(|row| row[0]).collect())
}

/// J computed from the second moments Σ = μμᵀ + ϑ, without the decomposition.
pub fn j_total_direct(
    m: &ModelCoefficients,
    tg: &TimeGrid,
    k: &StagePath,
    g: &StagePath,
    z: &StagePath,
    laws: &InitialLaw,
) -> Result<Vec<f64>> {
    let n = tg.n_steps;
    let mu = solve_mean_fixed_z(m, tg, k, g, z, &laws.mean_matrix())?;
    let mut out = Vec::with_capacity(laws.n_players());
    for (j, cov) in laws.covariances.iter().enumerate() {
        let theta = solve_covariance(m, tg, k, cov)?;
        let second = |i: usize, s: Stage| {
            let mj = mu.at(i, s).column(j).into_owned();
            (mj.clone() * mj.transpose() + theta.at(i, s), mj)
        };
        let density = |i: usize, s: Stage| {
            let (sigma, mj) = second(i, s);
            let zj = z.at(i, s).column(j).into_owned();
            let gj = g.at(i, s).column(j).into_owned();
            let (q, r, kk) = (m.q.at(i, s), m.r.at(i, s), k.at(i, s));
            let hz = m.h.at(i, s) * &zj;
            let state = (&q * &sigma).trace() - 2.0 * (hz.transpose() * &q * &mj)[(0, 0)] + (hz.transpose() * &q * &hz)[(0, 0)];
            let control = (kk.transpose() * &r * kk * &sigma).trace()
                + 2.0 * (gj.transpose() * &r * kk * &mj)[(0, 0)]
                + (gj.transpose() * &r * &gj)[(0, 0)];
            state + control
        };
        let mut total = 0.0;
        for i in 0..n {
            total += simpson_step(tg.dt, |s| density(i, s));
        }
        let (sigma, mj) = second(n - 1, Stage::End);
        let hz = &m.h_bar * z.node(n).column(j);
        total += (&m.q_bar * &sigma).trace() - 2.0 * (hz.transpose() * &m.q_bar * &mj)[(0, 0)] + (hz.transpose() * &m.q_bar * &hz)[(0, 0)];
        out.push(total);
    }
    Ok(out)
}

pub fn cost_breakdown(
    m: &ModelCoefficients,
    tg: &TimeGrid,
    k: &StagePath,
    g: &StagePath,
    z: &StagePath,
    laws: &InitialLaw,
) -> Result<CostBreakdown> {
    let j1 = laws.covariances.iter().map(|c| j1_exact(m, tg, k, c)).collect::<Result<Vec<_>>>()?;
    let j2 = j2_exact(m, tg, k, g, z, &laws.mean_matrix())?;
    let j_total = j1.iter().zip(&j2).map(|(a, b)| a + b).collect();
    Ok(CostBreakdown { j1, j2, j_total })
}

/// Left-endpoint stage costs of Ĵ₁ for covariances at the nodes; the last entry is the
/// terminal term, so suffix sums are costs-to-go.
pub fn discrete_j1_stages(m: &ModelCoefficients, tg: &TimeGrid, k: &StagePath, theta: &[Mat]) -> Vec<f64> {
    let n = tg.n_steps;
    let mut out: Vec<f64> = (0..n)
        .map(|i| {
            let kk = k.at(i, Stage::Start);
            tg.dt * ((m.q.at(i, Stage::Start) + kk.transpose() * m.r.at(i, Stage::Start) * kk) * &theta[i]).trace()
        })
        .collect();
    out.push((&m.q_bar * &theta[n]).trace());
    out
}

/// Left-endpoint stage costs of Ĵ₂ per player for node-major means (d × P), with `g` and
/// `z` restricted to the same P columns.
pub fn discrete_j2_stages(m: &ModelCoefficients, tg: &TimeGrid, k: &StagePath, g: &StagePath, z: &StagePath, mu: &[Mat]) -> Vec<Vec<f64>> {
    let n = tg.n_steps;
    let np = mu[0].ncols();
    let mut out = vec![Vec::with_capacity(n + 1); np];
    for i in 0..n {
        let (q, r, kk, h) = (m.q.at(i, Stage::Start), m.r.at(i, Stage::Start), k.at(i, Stage::Start), m.h.at(i, Stage::Start));
        let dev = &mu[i] - h * z.at(i, Stage::Start);
        let ctrl = kk * &mu[i] + g.at(i, Stage::Start);
        for (j, row) in out.iter_mut().enumerate() {
            let (e, u) = (dev.column(j), ctrl.column(j));
            row.push(tg.dt * ((e.transpose() * &q * e)[(0, 0)] + (u.transpose() * &r * u)[(0, 0)]));
        }
    }
    let dev = &mu[n] - &m.h_bar * z.node(n);
    for (j, row) in out.iter_mut().enumerate() {
        let e = dev.column(j);
        row.push((e.transpose() * &m.q_bar * e)[(0, 0)]);
    }
    out
}

pub fn suffix_sums(stages: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; stages.len()];
    let mut acc = 0.0;
    for i in (0..stages.len()).rev() {
        acc += stages[i];
        out[i] = acc;
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloEstimates {
    pub mu_hat: Vec<Mat>,
    /// Pooled covariance estimate per node.
    pub theta_hat: Vec<Mat>,
    pub j1_hat: f64,
    pub j2_hat: Vec<f64>,
    /// Cost-to-go of Ĵ₁ from every node.
    pub j1_to_go: Vec<f64>,
    /// [player][node] cost-to-go of Ĵ₂.
    pub j2_to_go: Vec<Vec<f64>>,
}

pub fn estimates_from_moments(
    m: &ModelCoefficients,
    tg: &TimeGrid,
    k: &StagePath,
    g: &StagePath,
    z: &StagePath,
    mom: SampleMoments,
) -> MonteCarloEstimates {
    let j1_to_go = suffix_sums(&discrete_j1_stages(m, tg, k, &mom.pooled));
    let j2_to_go: Vec<Vec<f64>> = discrete_j2_stages(m, tg, k, g, z, &mom.mu_hat).iter().map(|s| suffix_sums(s)).collect();
    MonteCarloEstimates {
        j1_hat: j1_to_go[0],
        j2_hat: j2_to_go.iter().map(|r| r[0]).collect(),
        j1_to_go,
        j2_to_go,
        mu_hat: mom.mu_hat,
        theta_hat: mom.pooled,
    }
}

pub fn mc_costs(
    batch: &TrajectoryBatch,
    m: &ModelCoefficients,
    tg: &TimeGrid,
    k: &StagePath,
    g: &StagePath,
    z: &StagePath,
    laws: &InitialLaw,
) -> Result<MonteCarloEstimates> {
    let coefs = EulerCoefficients::new(m, tg, k, g, z);
    let mom = batch_moments(batch, &coefs, laws)?;
    Ok(estimates_from_moments(m, tg, k, g, z, mom))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::sde::simulate_paths;
    use crate::dynamics::{optimal_slope, solve_riccati_star};
    use crate::linalg::scalar;
    use crate::model::Coefficient;

    fn benchmark() -> (ModelCoefficients, TimeGrid) {
        (ModelCoefficients::benchmark(), TimeGrid::new(1.0, 120).unwrap())
    }

    #[test]
    fn j1_vanishes_without_noise() {
        let (mut m, tg) = benchmark();
        m.d = Coefficient::scalar(0.0);
        let k = StagePath::constant(120, scalar(-1.0));
        assert_eq!(j1_exact(&m, &tg, &k, &scalar(0.0)).unwrap(), 0.0);
    }

    #[test]
    fn j1_with_zero_slope_matches_closed_form() {
        let (m, tg) = benchmark();
        let k = StagePath::constant(120, scalar(0.0));
        // ϑ' = −0.5ϑ + 1/16: ϑ(t) = 1/8 + (0.01 − 1/8)e^{−t/2}; J₁ = ∫ 0.25ϑ + 0.05ϑ(1)
        let c = 0.01 - 0.125;
        let integral = 0.125 + c * 2.0 * (1.0 - (-0.5_f64).exp());
        let exact = 0.25 * integral + 0.05 * (0.125 + c * (-0.5_f64).exp());
        assert!((j1_exact(&m, &tg, &k, &scalar(0.01)).unwrap() - exact).abs() < 1e-7);
    }

    #[test]
    fn optimal_slope_minimizes_j1() {
        let (m, tg) = benchmark();
        let k_star = optimal_slope(&m, &solve_riccati_star(&m, &tg).unwrap());
        let best = j1_exact(&m, &tg, &k_star, &scalar(0.01)).unwrap();
        for (amp, freq) in [(0.1, 1.0), (-0.2, 3.0), (0.05, 7.0), (0.3, 0.0)] {
            let k = k_star.map(|i, s, v| v + scalar(amp * (freq * tg.stage_time(i, s)).cos()));
            assert!(j1_exact(&m, &tg, &k, &scalar(0.01)).unwrap() >= best - 1e-8);
        }
    }

    #[test]
    fn j2_vanishes_at_rest() {
        let (m, tg) = benchmark();
        let zero = StagePath::constant(120, Mat::zeros(1, 2));
        let k = StagePath::constant(120, scalar(-0.7));
        assert_eq!(j2_exact(&m, &tg, &k, &zero, &zero, &Mat::zeros(1, 2)).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn decomposition_on_benchmark_model() {
        let (m, tg) = benchmark();
        let laws = InitialLaw::benchmark(3);
        let k = StagePath::from_fn(120, |i, _| scalar(-1.0 + 0.003 * i as f64));
        let g = StagePath::constant(120, Mat::from_row_slice(1, 3, &[1.0, 0.5, -0.2]));
        let z = StagePath::from_fn(120, |i, s| Mat::from_element(1, 3, 0.3 * tg.stage_time(i, s)));
        let direct = j_total_direct(&m, &tg, &k, &g, &z, &laws).unwrap();
        let split = cost_breakdown(&m, &tg, &k, &g, &z, &laws).unwrap();
        for j in 0..3 {
            assert!((direct[j] - split.j_total[j]).abs() <= 1e-10 * direct[j].abs().max(1.0));
        }
    }

    #[test]
    fn terminal_only_cost() {
        let (mut m, tg) = benchmark();
        m.q = Coefficient::scalar(0.0);
        let laws = InitialLaw::benchmark(1);
        let zero = StagePath::constant(120, Mat::zeros(1, 1));
        let k = StagePath::constant(120, scalar(0.0));
        let j = j_total_direct(&m, &tg, &k, &zero, &zero, &laws).unwrap()[0];
        let mu = solve_mean_fixed_z(&m, &tg, &k, &zero, &zero, &laws.mean_matrix()).unwrap();
        let th = solve_covariance(&m, &tg, &k, &scalar(0.01)).unwrap();
        let sigma = mu.node(120)[(0, 0)].powi(2) + th.node(120)[(0, 0)];
        assert!((j - 0.05 * sigma).abs() < 1e-14);
    }

    #[test]
    fn noiseless_mc_costs_are_discrete_costs() {
        let (mut m, tg) = benchmark();
        m.d = Coefficient::scalar(0.0);
        let laws = InitialLaw::uniform(2, scalar(0.5), scalar(0.0));
        let k = StagePath::constant(120, scalar(-1.0));
        let g = StagePath::constant(120, Mat::from_element(1, 2, 1.0));
        let z = StagePath::constant(120, Mat::from_element(1, 2, 0.2));
        let batch = simulate_paths(&m, &tg, &k, &g, &z, &laws, 4, 1).unwrap();
        let est = mc_costs(&batch, &m, &tg, &k, &g, &z, &laws).unwrap();
        assert_eq!(est.j1_hat, 0.0);
        let mean = EulerCoefficients::new(&m, &tg, &k, &g, &z).mean(&laws.mean_matrix());
        let det = discrete_j2_stages(&m, &tg, &k, &g, &z, &mean);
        assert_eq!(est.j2_hat[0], suffix_sums(&det[0])[0]);
    }

    #[test]
    fn mc_j1_agrees_with_exact() {
        let (m, tg) = benchmark();
        let laws = InitialLaw::benchmark(1);
        let k = StagePath::constant(120, scalar(-1.0));
        let g = StagePath::constant(120, Mat::from_element(1, 1, 1.0));
        let z = StagePath::constant(120, Mat::zeros(1, 1));
        let exact = j1_exact(&m, &tg, &k, &scalar(0.01)).unwrap();
        let reps: Vec<f64> = (0..8)
            .map(|s| {
                let batch = simulate_paths(&m, &tg, &k, &g, &z, &laws, 12_500, s).unwrap();
                mc_costs(&batch, &m, &tg, &k, &g, &z, &laws).unwrap().j1_hat
            })
            .collect();
        let mean = reps.iter().sum::<f64>() / 8.0;
        let sd = (reps.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 7.0).sqrt();
        let se = sd / 8.0_f64.sqrt();
        // left-endpoint sums and the Euler scheme carry an O(Δt) bias
        let allowance = 2.0 * tg.dt * exact;
        assert!((mean - exact).abs() < 3.0 * se + allowance, "mean {mean} exact {exact} se {se}");
    }
}
