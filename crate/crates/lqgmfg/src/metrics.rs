//! RMSE of learned policies against a reference equilibrium, and log-decay fits.

use crate::error::{Error, Result};
use crate::model::{PlayerGrid, TimeGrid};
use crate::path::StagePath;

/// Left-continuous value of `path` at time `t`.
fn at_time<'a>(path: &'a StagePath, tg: &TimeGrid, t: f64) -> &'a crate::linalg::Mat {
    let i = ((t / tg.dt) + 1e-9).floor().max(0.0) as usize;
    path.node(i.min(tg.n_steps))
}

fn check_horizon(a: &TimeGrid, b: &TimeGrid) -> Result<()> {
    if (a.horizon - b.horizon).abs() > 1e-12 * a.horizon.max(1.0) {
        return Err(Error::GridMismatch(format!("horizons {} and {} differ", a.horizon, b.horizon)));
    }
    Ok(())
}

/// Root mean squared (Frobenius) error of a slope path over the reference's nodes.
pub fn rmse_k(k: &StagePath, tg: &TimeGrid, reference: &StagePath, ref_tg: &TimeGrid) -> Result<f64> {
    check_horizon(tg, ref_tg)?;
    if k.start[0].shape() != reference.start[0].shape() {
        return Err(Error::GridMismatch("slope shapes differ".into()));
    }
    let mut acc = 0.0;
    for i in 0..=ref_tg.n_steps {
        let t = ref_tg.node(i);
        acc += (at_time(k, tg, t) - reference.node(i)).norm_squared();
    }
    Ok((acc / (ref_tg.n_steps + 1) as f64).sqrt())
}

/// RMSE of per-player intercepts after extending them over the reference players by the
/// nearest label.
pub fn rmse_g(
    g: &StagePath,
    tg: &TimeGrid,
    players: &PlayerGrid,
    reference: &StagePath,
    ref_tg: &TimeGrid,
    ref_players: &PlayerGrid,
) -> Result<f64> {
    check_horizon(tg, ref_tg)?;
    if g.start[0].ncols() != players.len() || reference.start[0].ncols() != ref_players.len() || g.start[0].nrows() != reference.start[0].nrows() {
        return Err(Error::GridMismatch("intercept shapes do not match their player grids".into()));
    }
    let owner: Vec<usize> = ref_players.alphas.iter().map(|&b| players.nearest(b)).collect();
    let mut acc = 0.0;
    for i in 0..=ref_tg.n_steps {
        let learned = at_time(g, tg, ref_tg.node(i));
        let r = reference.node(i);
        for (b, &j) in owner.iter().enumerate() {
            acc += (learned.column(j) - r.column(b)).norm_squared();
        }
    }
    Ok((acc / ((ref_tg.n_steps + 1) * ref_players.len()) as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogFit {
    /// Slope of log(value) per iteration.
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Least-squares line through (x, ln y).
pub fn log_linear_fit(xs: &[f64], ys: &[f64]) -> Option<LogFit> {
    if xs.len() != ys.len() || xs.len() < 2 || ys.iter().any(|y| !(*y > 0.0)) {
        return None;
    }
    let n = xs.len() as f64;
    let ls: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ls.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ls).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ls.iter().map(|y| (y - my).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Some(LogFit { slope, intercept: my - slope * mx, r_squared })
}

/// Last index before a curve flattens: the first iteration whose value is within
/// `factor` of the final value, searching from the start.
pub fn plateau_onset(values: &[f64], factor: f64) -> usize {
    let last = *values.last().unwrap_or(&0.0);
    values.iter().position(|v| *v <= last * factor).unwrap_or(values.len())
}

/// Log-linear fit over iterations 1..onset, where onset is the first iteration within
/// `factor` of the final value. Iteration 0 is skipped because the first step can be
/// transient.
pub fn pre_plateau_fit(values: &[f64], factor: f64) -> Option<(LogFit, usize)> {
    let onset = plateau_onset(values, factor);
    if onset < 3 {
        return None;
    }
    let xs: Vec<f64> = (1..onset).map(|i| i as f64).collect();
    log_linear_fit(&xs, &values[1..onset]).map(|f| (f, onset))
}

/// Log-linear fit over the inclusive iteration window `[from, to]`.
pub fn window_fit(values: &[f64], from: usize, to: usize) -> Option<LogFit> {
    if to >= values.len() || from >= to {
        return None;
    }
    let xs: Vec<f64> = (from..=to).map(|i| i as f64).collect();
    log_linear_fit(&xs, &values[from..=to])
}
