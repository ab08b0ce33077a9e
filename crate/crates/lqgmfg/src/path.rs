//! Time paths sampled at the three RK4 stage points of every simulation step.
//!
//! A continuous solution has `end[i] == start[i + 1]`; a piecewise-constant control
//! may jump at nodes, which is why both one-sided values are kept.

use crate::linalg::Mat;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Start,
    Mid,
    End,
}

impl Stage {
    pub const ALL: [Stage; 3] = [Stage::Start, Stage::Mid, Stage::End];

    pub fn frac(self) -> f64 {
        match self {
            Stage::Start => 0.0,
            Stage::Mid => 0.5,
            Stage::End => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StagePath {
    pub start: Vec<Mat>,
    pub mid: Vec<Mat>,
    pub end: Vec<Mat>,
}

impl StagePath {
    pub fn from_fn<F: FnMut(usize, Stage) -> Mat>(n_steps: usize, mut f: F) -> Self {
        let mut start = Vec::with_capacity(n_steps);
        let mut mid = Vec::with_capacity(n_steps);
        let mut end = Vec::with_capacity(n_steps);
        for i in 0..n_steps {
            start.push(f(i, Stage::Start));
            mid.push(f(i, Stage::Mid));
            end.push(f(i, Stage::End));
        }
        StagePath { start, mid, end }
    }

    pub fn constant(n_steps: usize, value: Mat) -> Self {
        StagePath::from_fn(n_steps, |_, _| value.clone())
    }

    /// Continuous path from node values, midpoints by linear interpolation.
    pub fn from_nodes_linear(nodes: &[Mat]) -> Self {
        let n = nodes.len() - 1;
        StagePath::from_fn(n, |i, s| match s {
            Stage::Start => nodes[i].clone(),
            Stage::Mid => (&nodes[i] + &nodes[i + 1]) * 0.5,
            Stage::End => nodes[i + 1].clone(),
        })
    }

    pub fn n_steps(&self) -> usize {
        self.start.len()
    }

    pub fn at(&self, step: usize, stage: Stage) -> &Mat {
        match stage {
            Stage::Start => &self.start[step],
            Stage::Mid => &self.mid[step],
            Stage::End => &self.end[step],
        }
    }

    /// Value at node `i`, taken from the step that starts there (left-continuous), or
    /// the end of the last step at the terminal node.
    pub fn node(&self, i: usize) -> &Mat {
        if i < self.start.len() {
            &self.start[i]
        } else {
            &self.end[self.end.len() - 1]
        }
    }

    pub fn nodes(&self) -> Vec<Mat> {
        (0..=self.n_steps()).map(|i| self.node(i).clone()).collect()
    }

    pub fn map<F: FnMut(usize, Stage, &Mat) -> Mat>(&self, mut f: F) -> StagePath {
        StagePath::from_fn(self.n_steps(), |i, s| f(i, s, self.at(i, s)))
    }

    pub fn zip_map<F: FnMut(usize, Stage, &Mat, &Mat) -> Mat>(&self, other: &StagePath, mut f: F) -> StagePath {
        StagePath::from_fn(self.n_steps(), |i, s| f(i, s, self.at(i, s), other.at(i, s)))
    }

    pub fn column(&self, j: usize) -> StagePath {
        self.map(|_, _, m| m.columns(j, 1).into_owned())
    }

    pub fn sup_abs(&self) -> f64 {
        self.start
            .iter()
            .chain(&self.mid)
            .chain(&self.end)
            .fold(0.0_f64, |a, m| a.max(crate::linalg::max_abs(m)))
    }

    pub fn sup_norm(&self) -> f64 {
        self.start
            .iter()
            .chain(&self.mid)
            .chain(&self.end)
            .fold(0.0_f64, |a, m| a.max(m.norm()))
    }

    /// Largest entry-wise difference over all stage points.
    pub fn sup_diff(&self, other: &StagePath) -> f64 {
        let mut d = 0.0_f64;
        for s in Stage::ALL {
            for i in 0..self.n_steps() {
                d = d.max(crate::linalg::max_abs(&(self.at(i, s) - other.at(i, s))));
            }
        }
        d
    }
}

/// Integral over step `i` of a path by Simpson's rule on its stage samples.
pub fn simpson_step<F: Fn(Stage) -> f64>(dt: f64, f: F) -> f64 {
    dt / 6.0 * (f(Stage::Start) + 4.0 * f(Stage::Mid) + f(Stage::End))
}

/// Cubic Hermite midpoint from endpoint values and slopes.
pub fn hermite_mid(y0: &Mat, y1: &Mat, f0: &Mat, f1: &Mat, dt: f64) -> Mat {
    (y0 + y1) * 0.5 + (f0 - f1) * (dt / 8.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::scalar;

    #[test]
    fn hermite_is_exact_for_cubics() {
        let y = |t: f64| t * t * t - 2.0 * t + 1.0;
        let dy = |t: f64| 3.0 * t * t - 2.0;
        let (a, h) = (0.3, 0.2);
        let mid = hermite_mid(&scalar(y(a)), &scalar(y(a + h)), &scalar(dy(a)), &scalar(dy(a + h)), h);
        assert!((mid[(0, 0)] - y(a + h / 2.0)).abs() < 1e-15);
    }

    #[test]
    fn node_access_is_left_continuous() {
        let p = StagePath::from_fn(2, |i, s| scalar(i as f64 * 10.0 + s.frac()));
        assert_eq!(p.node(1)[(0, 0)], 10.0);
        assert_eq!(p.node(2)[(0, 0)], 11.0);
    }
}
