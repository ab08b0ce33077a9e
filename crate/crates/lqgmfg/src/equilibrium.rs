//! Exact Nash equilibrium by Picard iteration on the graphon aggregate.

use std::io::Write;

use crate::dynamics::{optimal_slope, solve_mean_consistent, solve_psi, solve_riccati_star, RiccatiPath};
use crate::error::{Error, Result};
use crate::graphon::{apply_operator_path, Graphon, QuadratureRule};
use crate::linalg::Mat;
use crate::model::{InitialLaw, ModelCoefficients, PlayerGrid, TimeGrid};
use crate::path::StagePath;

#[derive(Debug, Clone, PartialEq)]
pub struct PicardConfig {
    pub tol: f64,
    pub max_picard: usize,
    /// Weight ρ ∈ (0, 1] of the new aggregate in each update.
    pub damping: f64,
}

impl Default for PicardConfig {
    fn default() -> Self {
        PicardConfig { tol: 1e-12, max_picard: 200, damping: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumSolution {
    pub tg: TimeGrid,
    pub players: PlayerGrid,
    pub k_star: StagePath,
    /// k × N, one column per player.
    pub g_star: StagePath,
    pub mu_star: StagePath,
    pub z_star: StagePath,
    pub p_star: RiccatiPath,
    pub s_star: StagePath,
    pub residual: f64,
    pub iterations: usize,
}

struct Sweep {
    s: StagePath,
    g: StagePath,
    mu: StagePath,
    z: StagePath,
}

/// One forward–backward pass: S from the given aggregate, then the means under the
/// induced best response and their aggregate.
fn sweep(m: &ModelCoefficients, tg: &TimeGrid, p_star: &RiccatiPath, k_star: &StagePath, w: &Mat, laws: &InitialLaw, z: &StagePath) -> Result<Sweep> {
    let s = solve_psi(m, tg, p_star, z)?.map(|_, _, v| v * 0.5);
    let g = s.map(|i, st, v| -(m.r_inv(i, st) * m.b.at(i, st).transpose() * v));
    let mu = solve_mean_consistent(m, tg, w, k_star, &g, &laws.mean_matrix())?;
    let z_new = apply_operator_path(w, &mu);
    Ok(Sweep { s, g, mu, z: z_new })
}

pub fn solve_equilibrium(
    m: &ModelCoefficients,
    tg: &TimeGrid,
    players: &PlayerGrid,
    graphon: &Graphon,
    rule: QuadratureRule,
    laws: &InitialLaw,
    cfg: &PicardConfig,
) -> Result<EquilibriumSolution> {
    if !(cfg.tol > 0.0) || !(cfg.damping > 0.0 && cfg.damping <= 1.0) {
        return Err(Error::Invalid("Picard iteration needs tol > 0 and damping in (0, 1]".into()));
    }
    if laws.n_players() != players.len() {
        return Err(Error::GridMismatch(format!("{} initial laws for {} players", laws.n_players(), players.len())));
    }
    let w = graphon.operator_matrix(players, rule);
    let p_star = solve_riccati_star(m, tg)?;
    let k_star = optimal_slope(m, &p_star);
    let mut z = StagePath::constant(tg.n_steps, Mat::zeros(m.dim_d, players.len()));
    let mut change = f64::INFINITY;
    for it in 1..=cfg.max_picard {
        let sw = sweep(m, tg, &p_star, &k_star, &w, laws, &z)?;
        let next = if cfg.damping == 1.0 { sw.z } else { z.zip_map(&sw.z, |_, _, a, b| a * (1.0 - cfg.damping) + b * cfg.damping) };
        change = next.sup_diff(&z);
        z = next;
        if !change.is_finite() {
            break;
        }
        if change <= cfg.tol {
            let fin = sweep(m, tg, &p_star, &k_star, &w, laws, &z)?;
            let residual = fin.z.sup_diff(&z);
            return Ok(EquilibriumSolution {
                tg: tg.clone(),
                players: players.clone(),
                k_star,
                g_star: fin.g,
                mu_star: fin.mu,
                z_star: z,
                p_star,
                s_star: fin.s,
                residual,
                iterations: it,
            });
        }
    }
    Err(Error::PicardDivergence { iterations: cfg.max_picard, change })
}

/// Sup over stage points of |Z_in − Z_out| after one forward–backward sweep from Z*.
pub fn equilibrium_residual(sol: &EquilibriumSolution, m: &ModelCoefficients, graphon: &Graphon, rule: QuadratureRule, laws: &InitialLaw) -> Result<f64> {
    residual_at(sol, m, graphon, rule, laws, &sol.z_star)
}

/// Residual of an arbitrary aggregate under the solution's P* and K*.
pub fn residual_at(sol: &EquilibriumSolution, m: &ModelCoefficients, graphon: &Graphon, rule: QuadratureRule, laws: &InitialLaw, z: &StagePath) -> Result<f64> {
    let w = graphon.operator_matrix(&sol.players, rule);
    let sw = sweep(m, &sol.tg, &sol.p_star, &sol.k_star, &w, laws, z)?;
    Ok(sw.z.sup_diff(z))
}

fn entry_names(prefix: &str, rows: usize, cols: usize) -> Vec<String> {
    let mut out = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            out.push(if rows * cols == 1 { prefix.to_string() } else { format!("{prefix}_{r}{c}") });
        }
    }
    out
}

/// One row per (player, node) with K*, G*, μ*, Z* entries.
pub fn write_equilibrium_csv<W: Write>(sol: &EquilibriumSolution, out: W) -> Result<()> {
    let (k, d) = sol.k_star.start[0].shape();
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["player".to_string(), "alpha".into(), "t".into()];
    header.extend(entry_names("K", k, d));
    header.extend(entry_names("G", k, 1));
    header.extend(entry_names("mu", d, 1));
    header.extend(entry_names("Z", d, 1));
    w.write_record(&header)?;
    for (j, alpha) in sol.players.alphas.iter().enumerate() {
        for i in 0..=sol.tg.n_steps {
            let mut rec = vec![j.to_string(), alpha.to_string(), sol.tg.node(i).to_string()];
            let kk = sol.k_star.node(i);
            for r in 0..k {
                for c in 0..d {
                    rec.push(kk[(r, c)].to_string());
                }
            }
            rec.extend((0..k).map(|r| sol.g_star.node(i)[(r, j)].to_string()));
            rec.extend((0..d).map(|r| sol.mu_star.node(i)[(r, j)].to_string()));
            rec.extend((0..d).map(|r| sol.z_star.node(i)[(r, j)].to_string()));
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}
