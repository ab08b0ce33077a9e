//! Deterministic path solvers (Riccati, P^K, covariance, means, adjoints) and the
//! Euler–Maruyama sampler.

pub mod rk4;
pub mod sde;

use crate::error::Result;
use crate::linalg::Mat;
use crate::model::{ModelCoefficients, TimeGrid};
use crate::path::{Stage, StagePath};

/// Symmetric d × d path (P* or P^K).
pub type RiccatiPath = StagePath;
/// Symmetric d × d covariance path.
pub type CovariancePath = StagePath;
/// d × N path of player means, one column per player.
pub type MeanField = StagePath;

fn closed_loop(m: &ModelCoefficients, k: &StagePath, i: usize, s: Stage) -> Mat {
    m.a.at(i, s) + m.b.at(i, s) * k.at(i, s)
}

/// Optimal slope path K* = −R⁻¹BᵀP*.
pub fn optimal_slope(m: &ModelCoefficients, p_star: &RiccatiPath) -> StagePath {
    p_star.map(|i, s, p| -(m.r_inv(i, s) * m.b.at(i, s).transpose() * p))
}

pub fn solve_riccati_star(m: &ModelCoefficients, tg: &TimeGrid) -> Result<RiccatiPath> {
    rk4::backward(tg.n_steps, tg.dt, m.q_bar.clone(), true, "Riccati P*", |i, s, p| {
        let a = m.a.at(i, s);
        let b = m.b.at(i, s);
        let pb = p * &b;
        -(a.transpose() * p + p * &a - &pb * m.r_inv(i, s) * pb.transpose() + m.q.at(i, s))
    })
}

pub fn solve_p_for_k(m: &ModelCoefficients, tg: &TimeGrid, k: &StagePath) -> Result<RiccatiPath> {
    rk4::backward(tg.n_steps, tg.dt, m.q_bar.clone(), true, "P^K", |i, s, p| {
        let ak = closed_loop(m, k, i, s);
        let kk = k.at(i, s);
        -(ak.transpose() * p + p * &ak + m.q.at(i, s) + kk.transpose() * m.r.at(i, s) * kk)
    })
}

pub fn solve_covariance(m: &ModelCoefficients, tg: &TimeGrid, k: &StagePath, theta0: &Mat) -> Result<CovariancePath> {
    rk4::forward(tg.n_steps, tg.dt, theta0.clone(), true, "covariance", |i, s, th| {
        let ak = closed_loop(m, k, i, s);
        let d = m.d.at(i, s);
        &ak * th + th * ak.transpose() + &d * d.transpose()
    })
}

/// Means of all players under a frozen aggregate: columns of `g`, `z`, `mu0` are players.
pub fn solve_mean_fixed_z(
    m: &ModelCoefficients,
    tg: &TimeGrid,
    k: &StagePath,
    g: &StagePath,
    z: &StagePath,
    mu0: &Mat,
) -> Result<MeanField> {
    rk4::forward(tg.n_steps, tg.dt, mu0.clone(), false, "mean", |i, s, mu| {
        closed_loop(m, k, i, s) * mu + m.b.at(i, s) * g.at(i, s) + m.a_bar.at(i, s) * z.at(i, s)
    })
}

/// Self-consistent means: the aggregate is the graphon operator (weight matrix `w`) of
/// the means themselves at every RK4 stage.
pub fn solve_mean_consistent(
    m: &ModelCoefficients,
    tg: &TimeGrid,
    w: &Mat,
    k: &StagePath,
    g: &StagePath,
    mu0: &Mat,
) -> Result<MeanField> {
    let wt = w.transpose();
    rk4::forward(tg.n_steps, tg.dt, mu0.clone(), false, "consistent mean", |i, s, mu| {
        closed_loop(m, k, i, s) * mu + m.b.at(i, s) * g.at(i, s) + m.a_bar.at(i, s) * (mu * &wt)
    })
}

pub fn solve_adjoint_zeta(
    m: &ModelCoefficients,
    tg: &TimeGrid,
    k: &StagePath,
    g: &StagePath,
    z: &StagePath,
    mu: &MeanField,
) -> Result<StagePath> {
    let n = tg.n_steps;
    let terminal = (&m.q_bar * (mu.node(n) - &m.h_bar * z.node(n))) * 2.0;
    rk4::backward(n, tg.dt, terminal, false, "adjoint zeta", |i, s, zeta| {
        let ak = closed_loop(m, k, i, s);
        let kk = k.at(i, s);
        let mu_t = mu.at(i, s);
        let dev = mu_t - m.h.at(i, s) * z.at(i, s);
        let ctrl = kk * mu_t + g.at(i, s);
        -(ak.transpose() * zeta + m.q.at(i, s) * dev * 2.0 + kk.transpose() * m.r.at(i, s) * ctrl * 2.0)
    })
}

pub fn solve_psi(m: &ModelCoefficients, tg: &TimeGrid, p_star: &RiccatiPath, z: &StagePath) -> Result<StagePath> {
    let n = tg.n_steps;
    let terminal = &m.q_bar * &m.h_bar * z.node(n) * -2.0;
    rk4::backward(n, tg.dt, terminal, false, "psi", |i, s, psi| {
        let p = p_star.at(i, s);
        let b = m.b.at(i, s);
        let gain = m.a.at(i, s).transpose() - p * &b * m.r_inv(i, s) * b.transpose();
        let source = (p * m.a_bar.at(i, s) - m.q.at(i, s) * m.h.at(i, s)) * z.at(i, s) * 2.0;
        -(gain * psi + source)
    })
}
