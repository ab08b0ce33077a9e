//! Fixed-step classical RK4 on the simulation grid, forward and backward in time.

use crate::error::{Error, Result};
use crate::linalg::{self, Mat};
use crate::path::{hermite_mid, Stage, StagePath};

pub const BLOWUP: f64 = 1e12;

fn guard(y: &Mat, what: &'static str, time: f64) -> Result<()> {
    if !linalg::is_finite(y) || linalg::max_abs(y) > BLOWUP {
        return Err(Error::IntegrationBlowup { what, time });
    }
    Ok(())
}

fn finish(y: Mat, symmetric: bool) -> Mat {
    if symmetric {
        linalg::symmetrize(&y)
    } else {
        y
    }
}

/// Integrates dy/dt = rhs(step, stage, y) from y(0) = y0. Midpoints are cubic Hermite
/// reconstructions from the endpoint slopes of each step.
pub fn forward<F>(n_steps: usize, dt: f64, y0: Mat, symmetric: bool, what: &'static str, mut rhs: F) -> Result<StagePath>
where
    F: FnMut(usize, Stage, &Mat) -> Mat,
{
    let y0 = finish(y0, symmetric);
    guard(&y0, what, 0.0)?;
    let mut start = Vec::with_capacity(n_steps);
    let mut mid = Vec::with_capacity(n_steps);
    let mut end = Vec::with_capacity(n_steps);
    let mut y = y0;
    for i in 0..n_steps {
        let k1 = rhs(i, Stage::Start, &y);
        let k2 = rhs(i, Stage::Mid, &(&y + &k1 * (0.5 * dt)));
        let k3 = rhs(i, Stage::Mid, &(&y + &k2 * (0.5 * dt)));
        let k4 = rhs(i, Stage::End, &(&y + &k3 * dt));
        let y1 = finish(&y + (k1.clone() + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0), symmetric);
        guard(&y1, what, (i + 1) as f64 * dt)?;
        let f1 = rhs(i, Stage::End, &y1);
        mid.push(finish(hermite_mid(&y, &y1, &k1, &f1, dt), symmetric));
        start.push(y);
        end.push(y1.clone());
        y = y1;
    }
    Ok(StagePath { start, mid, end })
}

/// Integrates dy/dt = rhs(step, stage, y) backward from the terminal value y(T) = yt.
pub fn backward<F>(n_steps: usize, dt: f64, yt: Mat, symmetric: bool, what: &'static str, mut rhs: F) -> Result<StagePath>
where
    F: FnMut(usize, Stage, &Mat) -> Mat,
{
    let yt = finish(yt, symmetric);
    guard(&yt, what, n_steps as f64 * dt)?;
    let mut start = vec![Mat::zeros(0, 0); n_steps];
    let mut mid = vec![Mat::zeros(0, 0); n_steps];
    let mut end = vec![Mat::zeros(0, 0); n_steps];
    let mut y = yt;
    for i in (0..n_steps).rev() {
        let k1 = rhs(i, Stage::End, &y);
        let k2 = rhs(i, Stage::Mid, &(&y - &k1 * (0.5 * dt)));
        let k3 = rhs(i, Stage::Mid, &(&y - &k2 * (0.5 * dt)));
        let k4 = rhs(i, Stage::Start, &(&y - &k3 * dt));
        let y0 = finish(&y - (k1.clone() + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0), symmetric);
        guard(&y0, what, i as f64 * dt)?;
        let f0 = rhs(i, Stage::Start, &y0);
        mid[i] = finish(hermite_mid(&y0, &y, &f0, &k1, dt), symmetric);
        start[i] = y0.clone();
        end[i] = y;
        y = y0;
    }
    Ok(StagePath { start, mid, end })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::scalar;

    fn decay_error(n: usize) -> f64 {
        let p = forward(n, 1.0 / n as f64, scalar(1.0), false, "test", |i, s, y| {
            let t = (i as f64 + s.frac()) / n as f64;
            y * (-(1.0 + t))
        })
        .unwrap();
        (p.node(n)[(0, 0)] - (-1.5_f64).exp()).abs()
    }

    #[test]
    fn fourth_order() {
        let order = (decay_error(20) / decay_error(40)).log2();
        assert!(order > 3.8, "order {order}");
    }

    #[test]
    fn midpoints_are_accurate() {
        let n = 40;
        let p = forward(n, 1.0 / n as f64, scalar(1.0), false, "test", |_, _, y| -y).unwrap();
        for i in 0..n {
            let t = (i as f64 + 0.5) / n as f64;
            assert!((p.mid[i][(0, 0)] - (-t).exp()).abs() < 1e-9);
        }
    }

    #[test]
    fn time_reversal_matches_backward_solve() {
        let n = 50;
        let dt = 1.0 / n as f64;
        let f = |i: usize, s: Stage, y: &Mat| y * (0.3 + (i as f64 + s.frac()) * dt) + scalar(1.0);
        let back = backward(n, dt, scalar(2.0), false, "test", f).unwrap();
        let rev = forward(n, dt, scalar(2.0), false, "test", |i, s, y| {
            let s_rev = match s {
                Stage::Start => Stage::End,
                Stage::Mid => Stage::Mid,
                Stage::End => Stage::Start,
            };
            -f(n - 1 - i, s_rev, y)
        })
        .unwrap();
        for i in 0..=n {
            assert!((back.node(i)[(0, 0)] - rev.node(n - i)[(0, 0)]).abs() < 1e-10);
        }
    }

    #[test]
    fn blowup_is_typed() {
        let err = forward(100, 0.1, scalar(1.0), false, "runaway", |_, _, y| y * 50.0).unwrap_err();
        assert!(matches!(err, Error::IntegrationBlowup { what: "runaway", .. }));
    }
}
