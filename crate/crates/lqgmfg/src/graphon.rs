//! Graphon kernels and the discretized graphon operator.

use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::model::PlayerGrid;
use crate::path::StagePath;

#[derive(Debug, Clone, PartialEq)]
pub enum Graphon {
    Bipartite,
    Threshold,
    Half,
    UniformAttachment,
    Constant(f64),
    Zero,
    /// Values on the uniform grid `i / (n - 1)`, interpolated bilinearly.
    Table(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuadratureRule {
    /// Self-excluding sum with weight 1/N.
    SelfExcluding,
    Trapezoid,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct L2Norm {
    pub midpoint: f64,
    pub exact: Option<f64>,
}

impl L2Norm {
    pub fn best(&self) -> f64 {
        self.exact.unwrap_or(self.midpoint)
    }
}

impl Graphon {
    pub fn name(&self) -> String {
        match self {
            Graphon::Bipartite => "bipartite".into(),
            Graphon::Threshold => "threshold".into(),
            Graphon::Half => "half".into(),
            Graphon::UniformAttachment => "uniform_attachment".into(),
            Graphon::Constant(c) => format!("constant({c})"),
            Graphon::Zero => "zero".into(),
            Graphon::Table(v) => format!("table({}x{})", v.len(), v.len()),
        }
    }

    /// Builds a table graphon, symmetrizing the supplied values.
    pub fn table(values: Vec<Vec<f64>>) -> Result<Self> {
        let n = values.len();
        if n < 2 || values.iter().any(|r| r.len() != n) {
            return Err(Error::Invalid("graphon table must be square with at least 2 rows".into()));
        }
        if values.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("graphon table has non-finite entries".into()));
        }
        let sym = (0..n).map(|i| (0..n).map(|j| 0.5 * (values[i][j] + values[j][i])).collect()).collect();
        Ok(Graphon::Table(sym))
    }

    /// Loads a table from CSV rows `alpha_index,beta_index,value`.
    pub fn load_table(path: &Path) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().has_headers(false).comment(Some(b'#')).from_path(path)?;
        let mut entries = Vec::new();
        for rec in reader.records() {
            let rec = rec?;
            let parse = |k: usize| -> Result<&str> {
                rec.get(k).map(str::trim).ok_or_else(|| Error::Invalid(format!("graphon table row needs 3 fields: {rec:?}")))
            };
            let (i, j, v) = (parse(0)?, parse(1)?, parse(2)?);
            let (Ok(i), Ok(j), Ok(v)) = (i.parse::<usize>(), j.parse::<usize>(), v.parse::<f64>()) else {
                continue;
            };
            entries.push((i, j, v));
        }
        let n = entries.iter().map(|&(i, j, _)| i.max(j) + 1).max().unwrap_or(0);
        let mut values = vec![vec![f64::NAN; n]; n];
        for (i, j, v) in entries {
            values[i][j] = v;
        }
        Graphon::table(values)
    }

    pub fn eval(&self, alpha: f64, beta: f64) -> Result<f64> {
        for x in [alpha, beta] {
            if !(0.0..=1.0).contains(&x) {
                return Err(Error::OutOfRangeLabel(x));
            }
        }
        Ok(self.eval_unchecked(alpha, beta))
    }

    fn eval_unchecked(&self, alpha: f64, beta: f64) -> f64 {
        let (lo, hi) = if alpha <= beta { (alpha, beta) } else { (beta, alpha) };
        match self {
            Graphon::Bipartite => indicator(lo < 0.5 && 0.5 < hi),
            Graphon::Threshold => indicator(lo + hi <= 1.0 && lo != hi),
            Graphon::Half => indicator(hi - lo >= 0.5),
            Graphon::UniformAttachment => {
                if lo != hi {
                    1.0 - hi
                } else {
                    0.0
                }
            }
            Graphon::Constant(c) => *c,
            Graphon::Zero => 0.0,
            Graphon::Table(v) => bilinear(v, lo, hi),
        }
    }

    pub fn exact_l2_norm(&self) -> Option<f64> {
        match self {
            Graphon::Bipartite | Graphon::Threshold => Some(0.5_f64.sqrt()),
            Graphon::Half => Some(0.5),
            Graphon::UniformAttachment => Some((1.0_f64 / 6.0).sqrt()),
            Graphon::Constant(c) => Some(c.abs()),
            Graphon::Zero => Some(0.0),
            Graphon::Table(_) => None,
        }
    }

    pub fn l2_norm(&self, resolution: usize) -> L2Norm {
        let n = resolution.max(2);
        let h = 1.0 / n as f64;
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                let w = self.eval_unchecked((i as f64 + 0.5) * h, (j as f64 + 0.5) * h);
                acc += w * w;
            }
        }
        L2Norm { midpoint: (acc * h * h).sqrt(), exact: self.exact_l2_norm() }
    }

    /// Weight matrix M with 𝕎[f] = f · Mᵀ for a d × N player field f.
    pub fn operator_matrix(&self, players: &PlayerGrid, rule: QuadratureRule) -> Mat {
        let a = &players.alphas;
        let n = a.len();
        let weights: Vec<f64> = match rule {
            QuadratureRule::SelfExcluding => vec![1.0 / n as f64; n],
            QuadratureRule::Trapezoid => trapezoid_weights(a),
        };
        Mat::from_fn(n, n, |j, k| {
            if rule == QuadratureRule::SelfExcluding && j == k {
                0.0
            } else {
                self.eval_unchecked(a[j], a[k]) * weights[k]
            }
        })
    }
}

fn indicator(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

fn bilinear(v: &[Vec<f64>], x: f64, y: f64) -> f64 {
    let n = v.len() - 1;
    let locate = |t: f64| {
        let s = t * n as f64;
        let i = (s.floor() as usize).min(n - 1);
        (i, s - i as f64)
    };
    let (i, fx) = locate(x);
    let (j, fy) = locate(y);
    let top = v[i][j] * (1.0 - fy) + v[i][j + 1] * fy;
    let bottom = v[i + 1][j] * (1.0 - fy) + v[i + 1][j + 1] * fy;
    top * (1.0 - fx) + bottom * fx
}

/// Trapezoid weights on the labels, with the end intervals to 0 and 1 held constant.
fn trapezoid_weights(a: &[f64]) -> Vec<f64> {
    let n = a.len();
    if n == 1 {
        return vec![1.0];
    }
    (0..n)
        .map(|k| {
            let left = if k == 0 { a[0] } else { 0.5 * (a[k] - a[k - 1]) };
            let right = if k == n - 1 { 1.0 - a[n - 1] } else { 0.5 * (a[k + 1] - a[k]) };
            left + right
        })
        .collect()
}

/// Graphon operator applied to a d × N player field.
pub fn apply_operator(weights: &Mat, f: &Mat) -> Mat {
    f * weights.transpose()
}

/// Graphon operator applied at every stage point of a player-field path.
pub fn apply_operator_path(weights: &Mat, f: &StagePath) -> StagePath {
    let wt = weights.transpose();
    f.map(|_, _, m| m * &wt)
}
