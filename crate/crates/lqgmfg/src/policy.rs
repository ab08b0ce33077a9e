//! Affine policy parameters: a shared slope K and per-player intercepts G^α.

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::model::{PolicyGrid, TimeGrid};
use crate::path::{simpson_step, Stage, StagePath};

/// How policy coordinates map onto time.
#[derive(Debug, Clone, PartialEq)]
pub enum PolicyLayout {
    /// One value per policy interval, held left-continuously.
    PiecewiseConstant(PolicyGrid),
    /// One value per RK4 stage point: a continuous-time policy sampled where the solvers look.
    StageResolved,
}

impl PolicyLayout {
    pub fn n_coords(&self, tg: &TimeGrid) -> usize {
        match self {
            PolicyLayout::PiecewiseConstant(pg) => pg.n_intervals,
            PolicyLayout::StageResolved => 3 * tg.n_steps,
        }
    }

    fn coord(&self, step: usize, stage: Stage) -> usize {
        match self {
            PolicyLayout::PiecewiseConstant(pg) => pg.interval_of_step(step),
            PolicyLayout::StageResolved => 3 * step + stage_index(stage),
        }
    }

    pub fn grid(&self) -> Option<&PolicyGrid> {
        match self {
            PolicyLayout::PiecewiseConstant(pg) => Some(pg),
            PolicyLayout::StageResolved => None,
        }
    }

    pub fn expand(&self, tg: &TimeGrid, coords: &[Mat]) -> StagePath {
        StagePath::from_fn(tg.n_steps, |i, s| coords[self.coord(i, s)].clone())
    }

    /// Projects a time density onto coordinates: interval averages (Simpson per step) or
    /// point values.
    pub fn project(&self, tg: &TimeGrid, density: &StagePath) -> Vec<Mat> {
        match self {
            PolicyLayout::PiecewiseConstant(pg) => (0..pg.n_intervals)
                .map(|c| {
                    let s0 = pg.first_step(c);
                    let (r, c0) = density.start[s0].shape();
                    let mut acc = Mat::zeros(r, c0);
                    for i in s0..s0 + pg.ratio {
                        acc += (density.at(i, Stage::Start) + density.at(i, Stage::Mid) * 4.0 + density.at(i, Stage::End))
                            * (tg.dt / 6.0);
                    }
                    acc / pg.dtau
                })
                .collect(),
            PolicyLayout::StageResolved => {
                let mut out = Vec::with_capacity(3 * tg.n_steps);
                for i in 0..tg.n_steps {
                    for s in Stage::ALL {
                        out.push(density.at(i, s).clone());
                    }
                }
                out
            }
        }
    }

    /// Index of the coordinate governing time `t` (left-continuous, last one at T).
    pub fn coord_at_time(&self, tg: &TimeGrid, t: f64) -> usize {
        match self {
            PolicyLayout::PiecewiseConstant(pg) => {
                let c = ((t / pg.dtau) + 1e-9).floor().max(0.0) as usize;
                c.min(pg.n_intervals - 1)
            }
            PolicyLayout::StageResolved => {
                let i = ((t / tg.dt) + 1e-9).floor().max(0.0) as usize;
                if i >= tg.n_steps {
                    3 * (tg.n_steps - 1) + 2
                } else {
                    3 * i
                }
            }
        }
    }
}

fn stage_index(s: Stage) -> usize {
    match s {
        Stage::Start => 0,
        Stage::Mid => 1,
        Stage::End => 2,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    pub layout: PolicyLayout,
    /// One k × d matrix per coordinate.
    pub slope: Vec<Mat>,
    /// One k × N matrix per coordinate, column j for player j.
    pub intercept: Vec<Mat>,
}

impl PolicyParams {
    pub fn constant(layout: PolicyLayout, tg: &TimeGrid, k0: Mat, g0: Mat) -> Self {
        let n = layout.n_coords(tg);
        PolicyParams { layout, slope: vec![k0; n], intercept: vec![g0; n] }
    }

    /// Stage-resolved parameters copied from continuous paths.
    pub fn from_paths(tg: &TimeGrid, k: &StagePath, g: &StagePath) -> Result<Self> {
        if k.n_steps() != tg.n_steps || g.n_steps() != tg.n_steps {
            return Err(Error::GridMismatch("policy paths do not match the time grid".into()));
        }
        let layout = PolicyLayout::StageResolved;
        Ok(PolicyParams { slope: layout.project(tg, k), intercept: layout.project(tg, g), layout })
    }

    pub fn n_players(&self) -> usize {
        self.intercept[0].ncols()
    }

    pub fn slope_path(&self, tg: &TimeGrid) -> StagePath {
        self.layout.expand(tg, &self.slope)
    }

    pub fn intercept_path(&self, tg: &TimeGrid) -> StagePath {
        self.layout.expand(tg, &self.intercept)
    }

    pub fn slope_at_time(&self, tg: &TimeGrid, t: f64) -> &Mat {
        &self.slope[self.layout.coord_at_time(tg, t)]
    }

    pub fn intercept_at_time(&self, tg: &TimeGrid, t: f64) -> &Mat {
        &self.intercept[self.layout.coord_at_time(tg, t)]
    }

    pub fn sup_slope(&self) -> f64 {
        self.slope.iter().fold(0.0, |a, k| a.max(k.norm()))
    }
}

/// Integral of a scalar density over each policy interval.
pub fn integrate_intervals<F: Fn(usize, Stage) -> f64>(tg: &TimeGrid, pg: &PolicyGrid, f: F) -> Vec<f64> {
    (0..pg.n_intervals)
        .map(|c| {
            let s0 = pg.first_step(c);
            (s0..s0 + pg.ratio).map(|i| simpson_step(tg.dt, |s| f(i, s))).sum()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::scalar;
    use crate::model::build_grids;

    #[test]
    fn piecewise_constant_expansion_is_left_continuous() {
        let (tg, pg, _) = build_grids(1.0, 12, 3, vec![0.0]).unwrap();
        let layout = PolicyLayout::PiecewiseConstant(pg);
        let coords: Vec<Mat> = (0..3).map(|c| scalar(c as f64)).collect();
        let p = layout.expand(&tg, &coords);
        assert_eq!(p.start[4][(0, 0)], 1.0);
        assert_eq!(p.end[3][(0, 0)], 0.0);
        assert_eq!(layout.coord_at_time(&tg, 1.0 / 3.0), 1);
        assert_eq!(layout.coord_at_time(&tg, 1.0), 2);
    }

    #[test]
    fn projection_averages_linear_density() {
        let (tg, pg, _) = build_grids(1.0, 12, 3, vec![0.0]).unwrap();
        let layout = PolicyLayout::PiecewiseConstant(pg);
        let density = StagePath::from_fn(12, |i, s| scalar(tg.stage_time(i, s)));
        let avg = layout.project(&tg, &density);
        assert!((avg[0][(0, 0)] - 1.0 / 6.0).abs() < 1e-14);
        assert!((avg[2][(0, 0)] - 5.0 / 6.0).abs() < 1e-14);
    }

    #[test]
    fn stage_resolved_round_trip() {
        let tg = TimeGrid::new(1.0, 5).unwrap();
        let k = StagePath::from_fn(5, |i, s| scalar(tg.stage_time(i, s).powi(2)));
        let g = StagePath::from_fn(5, |i, s| Mat::from_element(1, 2, tg.stage_time(i, s)));
        let p = PolicyParams::from_paths(&tg, &k, &g).unwrap();
        assert_eq!(p.slope_path(&tg), k);
        assert_eq!(p.intercept_path(&tg), g);
    }
}
