//! Policy gradients: exact densities with the covariance preconditioner, per-coordinate
//! gradients of the Euler-discretised costs, and the descent steps that consume them.

use rayon::prelude::*;

use crate::dynamics::sde::{simulate_moments, EulerCoefficients, Sampler, CHUNK};
use crate::dynamics::{solve_adjoint_zeta, solve_covariance, solve_mean_fixed_z, solve_p_for_k};
use crate::error::{Error, Result};
use crate::linalg::{self, Mat};
use crate::model::{InitialLaw, ModelCoefficients, PolicyGrid, TimeGrid};
use crate::path::{Stage, StagePath};
use crate::policy::PolicyLayout;

/// Smallest covariance eigenvalue accepted before dividing by ϑ.
pub const SINGULAR_THRESHOLD: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct SlopeGradient {
    /// 2(BᵀP^K + RK)ϑ as a time density.
    pub raw_density: StagePath,
    /// 2(BᵀP^K + RK), independent of the player.
    pub preconditioned_density: StagePath,
    pub raw: Vec<Mat>,
    pub preconditioned: Vec<Mat>,
}

fn check_covariance(tg: &TimeGrid, theta: &StagePath) -> Result<()> {
    for i in 0..tg.n_steps {
        for s in Stage::ALL {
            let ev = linalg::min_eigenvalue(theta.at(i, s));
            if ev <= SINGULAR_THRESHOLD {
                return Err(Error::SingularCovariance { time: tg.stage_time(i, s), eigenvalue: ev });
            }
        }
    }
    Ok(())
}

pub fn grad_k_exact(m: &ModelCoefficients, tg: &TimeGrid, layout: &PolicyLayout, k: &StagePath, theta0: &Mat) -> Result<SlopeGradient> {
    let p = solve_p_for_k(m, tg, k)?;
    let theta = solve_covariance(m, tg, k, theta0)?;
    check_covariance(tg, &theta)?;
    let pre = p.zip_map(k, |i, s, p, kk| (m.b.at(i, s).transpose() * p + m.r.at(i, s) * kk) * 2.0);
    let raw = pre.zip_map(&theta, |_, _, d, th| d * th);
    Ok(SlopeGradient {
        raw: layout.project(tg, &raw),
        preconditioned: layout.project(tg, &pre),
        raw_density: raw,
        preconditioned_density: pre,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct InterceptGradient {
    /// Bᵀζ + 2R(Kμ + G), k × N per stage point.
    pub density: StagePath,
    pub coords: Vec<Mat>,
}

pub fn grad_g_exact(
    m: &ModelCoefficients,
    tg: &TimeGrid,
    layout: &PolicyLayout,
    k: &StagePath,
    g: &StagePath,
    z: &StagePath,
    mu0: &Mat,
) -> Result<InterceptGradient> {
    let mu = solve_mean_fixed_z(m, tg, k, g, z, mu0)?;
    let zeta = solve_adjoint_zeta(m, tg, k, g, z, &mu)?;
    let density = StagePath::from_fn(tg.n_steps, |i, s| {
        m.b.at(i, s).transpose() * zeta.at(i, s) + m.r.at(i, s) * (k.at(i, s) * mu.at(i, s) + g.at(i, s)) * 2.0
    });
    Ok(InterceptGradient { coords: layout.project(tg, &density), density })
}

/// How a gradient becomes a parameter change.
#[derive(Debug, Clone, Copy)]
pub enum StepRule<'a> {
    /// The gradient is already a time density: x ← x − η·g.
    ContinuousExact,
    /// Per-coordinate gradients of the discretised cost, rescaled by 1/Δτ (and ϑ̂⁻¹ for K).
    DiscreteScaled { dtau: f64, theta_hat: &'a [Mat] },
}

pub fn gd_step_k(k: &[Mat], grad: &[Mat], eta: f64, rule: StepRule) -> Result<Vec<Mat>> {
    match rule {
        StepRule::ContinuousExact => Ok(k.iter().zip(grad).map(|(k, g)| k - g * eta).collect()),
        StepRule::DiscreteScaled { dtau, theta_hat } => k
            .iter()
            .zip(grad)
            .zip(theta_hat)
            .enumerate()
            .map(|(c, ((k, g), th))| {
                let ev = linalg::min_eigenvalue(th);
                if ev <= SINGULAR_THRESHOLD {
                    return Err(Error::SingularCovariance { time: c as f64 * dtau, eigenvalue: ev });
                }
                let inv = linalg::invert(th).ok_or(Error::SingularCovariance { time: c as f64 * dtau, eigenvalue: ev })?;
                Ok(k - g * inv * (eta / dtau))
            })
            .collect(),
    }
}

pub fn gd_step_g(g: &[Mat], grad: &[Mat], eta: f64, rule: StepRule) -> Vec<Mat> {
    let scale = match rule {
        StepRule::ContinuousExact => eta,
        StepRule::DiscreteScaled { dtau, .. } => eta / dtau,
    };
    g.iter().zip(grad).map(|(g, d)| g - d * scale).collect()
}

/// Central differences of `f` in every coordinate of `x`.
pub fn finite_difference_grad<F: Fn(&[f64]) -> f64>(f: F, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + h;
            let up = f(&probe);
            probe[i] = x[i] - h;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// How the discretised cost is estimated when differentiating it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CostEstimator {
    /// Simulated paths, differentiated sample by sample.
    Sampled { n_samples: usize },
    /// The expectation of the estimator, from the exact moment recursions of the scheme.
    Expected,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteSlopeGradient {
    /// ∂Ĵ₁/∂K_{τ_c} per policy interval.
    pub coords: Vec<Mat>,
    /// ϑ̂ at each policy node τ_c.
    pub theta_at_coords: Vec<Mat>,
}

fn sum_over_intervals(pg: &PolicyGrid, per_step: &[Mat]) -> Vec<Mat> {
    (0..pg.n_intervals)
        .map(|c| {
            let s0 = pg.first_step(c);
            per_step[s0 + 1..s0 + pg.ratio].iter().fold(per_step[s0].clone(), |acc, g| acc + g)
        })
        .collect()
}

fn pooled_theta0(laws: &InitialLaw) -> Mat {
    let n = laws.covariances.len() as f64;
    laws.covariances.iter().skip(1).fold(laws.covariances[0].clone(), |a, c| a + c) / n
}

/// Gradient of Ĵ₁ with respect to each piecewise-constant slope coordinate.
#[allow(clippy::too_many_arguments)]
pub fn pathwise_grad_k(
    m: &ModelCoefficients,
    tg: &TimeGrid,
    pg: &PolicyGrid,
    k: &StagePath,
    g: &StagePath,
    z: &StagePath,
    laws: &InitialLaw,
    estimator: CostEstimator,
    seed: u64,
) -> Result<DiscreteSlopeGradient> {
    let n = tg.n_steps;
    let dt = tg.dt;
    let coefs = EulerCoefficients::new(m, tg, k, g, z);
    let stage_m: Vec<Mat> = (0..n)
        .map(|i| {
            let kk = k.at(i, Stage::Start);
            m.q.at(i, Stage::Start) + kk.transpose() * m.r.at(i, Stage::Start) * kk
        })
        .collect();
    let (theta, cross) = match estimator {
        CostEstimator::Expected => {
            let theta = crate::dynamics::sde::euler_covariance(m, tg, k, &pooled_theta0(laws));
            // Λ_m: sensitivity of the remaining cost to ϑ_m
            let mut lambda = m.q_bar.clone();
            let mut cross = vec![Mat::zeros(m.dim_d, m.dim_d); n];
            for i in (0..n).rev() {
                let a = coefs.transition(i);
                cross[i] = &lambda * &a * &theta[i] * 2.0;
                lambda = &stage_m[i] * dt + a.transpose() * &lambda * &a;
            }
            (theta, cross)
        }
        CostEstimator::Sampled { n_samples } => {
            let players: Vec<usize> = (0..laws.n_players()).collect();
            let mom = simulate_moments(&coefs, laws, &players, n_samples, seed)?;
            if n_samples < 2 {
                return Err(Error::Invalid("sampled gradients need at least two samples".into()));
            }
            let cross = sampled_cross_terms(m, &coefs, laws, &stage_m, &mom.mu_hat, n_samples, seed);
            (mom.pooled, cross)
        }
    };
    let per_step: Vec<Mat> = (0..n)
        .map(|i| {
            let kk = k.at(i, Stage::Start);
            (m.r.at(i, Stage::Start) * kk * &theta[i] * 2.0 + m.b.at(i, Stage::Start).transpose() * &cross[i]) * dt
        })
        .collect();
    Ok(DiscreteSlopeGradient {
        coords: sum_over_intervals(pg, &per_step),
        theta_at_coords: (0..pg.n_intervals).map(|c| theta[pg.first_step(c)].clone()).collect(),
    })
}

/// Σ over samples and players of λ_{m+1}(x_m − μ̂_m)ᵀ, where λ is the per-path adjoint of
/// the pooled covariance estimator. Paths are regenerated from their streams.
fn sampled_cross_terms(
    m: &ModelCoefficients,
    coefs: &EulerCoefficients,
    laws: &InitialLaw,
    stage_m: &[Mat],
    mu_hat: &[Mat],
    n_samples: usize,
    seed: u64,
) -> Vec<Mat> {
    let d = coefs.dim;
    let n = coefs.n_steps;
    let np = laws.n_players();
    let dt = coefs.dt;
    let c = 1.0 / (np as f64 * (n_samples as f64 - 1.0));
    let weight: Vec<Vec<f64>> = stage_m
        .iter()
        .map(|mm| Mat::from_fn(d, d, |r, q| 2.0 * c * dt * mm[(r, q)]))
        .chain(std::iter::once(&m.q_bar * (2.0 * c)))
        .map(|w| (0..d * d).map(|e| w[(e / d, e % d)]).collect())
        .collect();
    let sampler = Sampler::new(coefs, laws, seed);
    let n_chunks = n_samples.div_ceil(CHUNK);
    let partials: Vec<Vec<f64>> = (0..n_chunks)
        .into_par_iter()
        .map(|ch| {
            let mut acc = vec![0.0; n * d * d];
            let mut buf = vec![0.0; (n + 1) * d];
            let mut y = vec![0.0; (n + 1) * d];
            let mut lam = vec![0.0; d];
            let mut next = vec![0.0; d];
            for s in ch * CHUNK..((ch + 1) * CHUNK).min(n_samples) {
                for p in 0..np {
                    sampler.fill(s, p, &mut buf);
                    for i in 0..=n {
                        for r in 0..d {
                            y[i * d + r] = buf[i * d + r] - mu_hat[i][(r, p)];
                        }
                    }
                    for r in 0..d {
                        lam[r] = (0..d).map(|q| weight[n][r * d + q] * y[n * d + q]).sum();
                    }
                    for i in (0..n).rev() {
                        let a = &coefs.drift[i];
                        for r in 0..d {
                            for q in 0..d {
                                acc[i * d * d + r * d + q] += lam[r] * y[i * d + q];
                            }
                        }
                        for col in 0..d {
                            let mut v = lam[col];
                            for r in 0..d {
                                v += dt * a[r * d + col] * lam[r];
                            }
                            v += (0..d).map(|q| weight[i][col * d + q] * y[i * d + q]).sum::<f64>();
                            next[col] = v;
                        }
                        lam.copy_from_slice(&next);
                    }
                }
            }
            acc
        })
        .collect();
    let mut total = vec![0.0; n * d * d];
    for part in &partials {
        for (t, v) in total.iter_mut().zip(part) {
            *t += v;
        }
    }
    (0..n).map(|i| Mat::from_fn(d, d, |r, q| total[i * d * d + r * d + q])).collect()
}

/// Gradient of each player's Ĵ₂ with respect to its own intercept coordinates (k × N per
/// interval). The estimated mean obeys the noiseless Euler recursion in G, so both
/// estimators share one adjoint and differ only in the mean path they differentiate along.
#[allow(clippy::too_many_arguments)]
pub fn pathwise_grad_g(
    m: &ModelCoefficients,
    tg: &TimeGrid,
    pg: &PolicyGrid,
    k: &StagePath,
    g: &StagePath,
    z: &StagePath,
    laws: &InitialLaw,
    estimator: CostEstimator,
    seed: u64,
) -> Result<Vec<Mat>> {
    let coefs = EulerCoefficients::new(m, tg, k, g, z);
    let mu = match estimator {
        CostEstimator::Expected => coefs.mean(&laws.mean_matrix()),
        CostEstimator::Sampled { n_samples } => {
            let players: Vec<usize> = (0..laws.n_players()).collect();
            simulate_moments(&coefs, laws, &players, n_samples, seed)?.mu_hat
        }
    };
    Ok(sum_over_intervals(pg, &discrete_mean_adjoint_grad(m, tg, k, g, z, &coefs, &mu)))
}

fn discrete_mean_adjoint_grad(
    m: &ModelCoefficients,
    tg: &TimeGrid,
    k: &StagePath,
    g: &StagePath,
    z: &StagePath,
    coefs: &EulerCoefficients,
    mu: &[Mat],
) -> Vec<Mat> {
    let n = tg.n_steps;
    let dt = tg.dt;
    let mut nu = (&m.q_bar * (&mu[n] - &m.h_bar * z.node(n))) * 2.0;
    let mut out = vec![Mat::zeros(0, 0); n];
    for i in (0..n).rev() {
        let st = Stage::Start;
        let (kk, r) = (k.at(i, st), m.r.at(i, st));
        let ctrl = kk * &mu[i] + g.at(i, st);
        let r_ctrl = &r * &ctrl * 2.0;
        out[i] = (&r_ctrl + m.b.at(i, st).transpose() * &nu) * dt;
        let dev = &mu[i] - m.h.at(i, st) * z.at(i, st);
        nu = (m.q.at(i, st) * dev * 2.0 + kk.transpose() * &r_ctrl) * dt + coefs.transition(i).transpose() * &nu;
    }
    out
}
