//! Euler–Maruyama sampling of the state process and its deterministic moment recursions.

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{self, Mat};
use crate::model::{InitialLaw, ModelCoefficients, TimeGrid};
use crate::path::{Stage, StagePath};
use crate::rng;

/// Samples per reduction chunk; fixed so that summation order never depends on threads.
pub const CHUNK: usize = 256;

/// Left-endpoint coefficients of the Euler scheme, flattened for the sampling loops.
#[derive(Debug, Clone)]
pub struct EulerCoefficients {
    pub dim: usize,
    pub n_steps: usize,
    pub n_players: usize,
    pub dt: f64,
    /// A + BK per step, row-major d × d.
    pub drift: Vec<Vec<f64>>,
    /// BG^α + ĀZ^α per step, player-major.
    pub offset: Vec<Vec<f64>>,
    /// D·√Δt per step, row-major d × d.
    pub noise: Vec<Vec<f64>>,
}

fn row_major(m: &Mat) -> Vec<f64> {
    let mut v = Vec::with_capacity(m.len());
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            v.push(m[(r, c)]);
        }
    }
    v
}

impl EulerCoefficients {
    pub fn new(m: &ModelCoefficients, tg: &TimeGrid, k: &StagePath, g: &StagePath, z: &StagePath) -> Self {
        let n_players = g.start[0].ncols();
        let mut drift = Vec::with_capacity(tg.n_steps);
        let mut offset = Vec::with_capacity(tg.n_steps);
        let mut noise = Vec::with_capacity(tg.n_steps);
        for i in 0..tg.n_steps {
            let b = m.b.at(i, Stage::Start);
            drift.push(row_major(&(m.a.at(i, Stage::Start) + &b * k.at(i, Stage::Start))));
            let abar = m.a_bar.at(i, Stage::Start);
            let mut off = Vec::with_capacity(n_players * m.dim_d);
            for j in 0..n_players {
                let col = &b * g.start[i].column(j) + &abar * z.start[i].column(j);
                off.extend(col.iter());
            }
            offset.push(off);
            noise.push(row_major(&(m.d.at(i, Stage::Start) * tg.dt.sqrt())));
        }
        EulerCoefficients { dim: m.dim_d, n_steps: tg.n_steps, n_players, dt: tg.dt, drift, offset, noise }
    }

    /// One Euler step for player `j`; `z` holds standard normals or is absent for the
    /// noiseless recursion.
    #[inline]
    pub fn step(&self, i: usize, j: usize, x: &[f64], z: Option<&[f64]>, out: &mut [f64]) {
        let d = self.dim;
        let a = &self.drift[i];
        let off = &self.offset[i][j * d..(j + 1) * d];
        for r in 0..d {
            let mut f = off[r];
            for c in 0..d {
                f += a[r * d + c] * x[c];
            }
            let det = x[r] + f * self.dt;
            out[r] = match z {
                Some(z) => {
                    let dn = &self.noise[i];
                    let mut e = 0.0;
                    for c in 0..d {
                        e += dn[r * d + c] * z[c];
                    }
                    det + e
                }
                None => det,
            };
        }
    }

    /// Transition matrix I + (A + BK)Δt of step `i`.
    pub fn transition(&self, i: usize) -> Mat {
        let d = self.dim;
        Mat::from_fn(d, d, |r, c| if r == c { 1.0 } else { 0.0 } + self.drift[i][r * d + c] * self.dt)
    }

    /// Mean recursion of the scheme, node-major d × N matrices.
    pub fn mean(&self, mu0: &Mat) -> Vec<Mat> {
        let d = self.dim;
        let mut out = vec![mu0.clone()];
        let mut buf = vec![0.0; d];
        for i in 0..self.n_steps {
            let prev = &out[i];
            let mut next = Mat::zeros(d, self.n_players);
            for j in 0..self.n_players {
                let x: Vec<f64> = prev.column(j).iter().copied().collect();
                self.step(i, j, &x, None, &mut buf);
                for r in 0..d {
                    next[(r, j)] = buf[r];
                }
            }
            out.push(next);
        }
        out
    }
}

/// Covariance recursion ϑ_{i+1} = aϑaᵀ + DDᵀΔt of the Euler scheme.
pub fn euler_covariance(m: &ModelCoefficients, tg: &TimeGrid, k: &StagePath, theta0: &Mat) -> Vec<Mat> {
    let mut out = vec![theta0.clone()];
    for i in 0..tg.n_steps {
        let a = Mat::identity(m.dim_d, m.dim_d) + (m.a.at(i, Stage::Start) + m.b.at(i, Stage::Start) * k.at(i, Stage::Start)) * tg.dt;
        let d = m.d.at(i, Stage::Start);
        let next = &a * &out[i] * a.transpose() + &d * d.transpose() * tg.dt;
        out.push(linalg::symmetrize(&next));
    }
    out
}

/// Draws complete Euler paths for (sample, player) pairs from addressed streams.
pub struct Sampler<'a> {
    pub coefs: &'a EulerCoefficients,
    init_mean: Vec<Vec<f64>>,
    init_factor: Vec<Vec<f64>>,
    key: ChaCha8Rng,
}

impl<'a> Sampler<'a> {
    pub fn new(coefs: &'a EulerCoefficients, laws: &InitialLaw, seed: u64) -> Self {
        Sampler {
            coefs,
            init_mean: laws.means.iter().map(|m| m.iter().copied().collect()).collect(),
            init_factor: laws.covariances.iter().map(|c| row_major(&linalg::psd_factor(c))).collect(),
            key: rng::stream(seed, &[0x5344_45]),
        }
    }

    /// Writes the (n + 1)·d states of one path into `buf`.
    pub fn fill(&self, sample: usize, player: usize, buf: &mut [f64]) {
        let d = self.coefs.dim;
        let id = sample as u64 * self.coefs.n_players as u64 + player as u64;
        let mut r = rng::keyed_stream(&self.key, id);
        let mut z = vec![0.0; d];
        for v in z.iter_mut() {
            *v = StandardNormal.sample(&mut r);
        }
        let (mean, factor) = (&self.init_mean[player], &self.init_factor[player]);
        for row in 0..d {
            let mut e = 0.0;
            for c in 0..d {
                e += factor[row * d + c] * z[c];
            }
            buf[row] = mean[row] + e;
        }
        for i in 0..self.coefs.n_steps {
            for v in z.iter_mut() {
                *v = StandardNormal.sample(&mut r);
            }
            let (head, tail) = buf.split_at_mut((i + 1) * d);
            self.coefs.step(i, player, &head[i * d..], Some(&z), &mut tail[..d]);
        }
    }
}

/// Stored Euler–Maruyama paths, indexed (sample, player, node, component).
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryBatch {
    pub n_samples: usize,
    pub n_players: usize,
    pub n_nodes: usize,
    pub dim: usize,
    pub seed: u64,
    pub dt: f64,
    pub states: Vec<f64>,
}

impl TrajectoryBatch {
    pub fn path(&self, sample: usize, player: usize) -> &[f64] {
        let len = self.n_nodes * self.dim;
        let off = (sample * self.n_players + player) * len;
        &self.states[off..off + len]
    }

    pub fn state(&self, sample: usize, player: usize, node: usize) -> &[f64] {
        &self.path(sample, player)[node * self.dim..(node + 1) * self.dim]
    }
}

#[allow(clippy::too_many_arguments)]
pub fn simulate_paths(
    m: &ModelCoefficients,
    tg: &TimeGrid,
    k: &StagePath,
    g: &StagePath,
    z: &StagePath,
    laws: &InitialLaw,
    n_samples: usize,
    seed: u64,
) -> Result<TrajectoryBatch> {
    if n_samples == 0 {
        return Err(Error::EmptyBatch);
    }
    let coefs = EulerCoefficients::new(m, tg, k, g, z);
    let sampler = Sampler::new(&coefs, laws, seed);
    let n_players = coefs.n_players;
    let len = (tg.n_steps + 1) * m.dim_d;
    let mut states = vec![0.0; n_samples * n_players * len];
    states.par_chunks_mut(n_players * len).enumerate().for_each(|(s, block)| {
        for (j, path) in block.chunks_mut(len).enumerate() {
            sampler.fill(s, j, path);
        }
    });
    Ok(TrajectoryBatch { n_samples, n_players, n_nodes: tg.n_steps + 1, dim: m.dim_d, seed, dt: tg.dt, states })
}

/// Empirical moments per player and node, plus the covariance pooled over players.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleMoments {
    pub n_samples: usize,
    /// Node-major d × P matrices of sample means.
    pub mu_hat: Vec<Mat>,
    /// [player][node] unbiased sample covariances.
    pub theta_hat: Vec<Vec<Mat>>,
    /// [node] average of the per-player covariances.
    pub pooled: Vec<Mat>,
}

/// Reduces paths supplied by `source(sample, player, buf)` into moments. Deviations are
/// taken from `shift` (node-major d × P), so noiseless paths give exactly zero covariance.
pub fn accumulate_moments<F>(source: F, n_samples: usize, players: &[usize], n_nodes: usize, dim: usize, shift: &[Mat]) -> Result<SampleMoments>
where
    F: Fn(usize, usize, &mut [f64]) + Sync,
{
    if n_samples == 0 {
        return Err(Error::EmptyBatch);
    }
    let np = players.len();
    let width = dim + dim * dim;
    let slot = |p: usize, i: usize| (p * n_nodes + i) * width;
    let n_chunks = n_samples.div_ceil(CHUNK);
    let partials: Vec<Vec<f64>> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = vec![0.0; np * n_nodes * width];
            let mut buf = vec![0.0; n_nodes * dim];
            let mut dev = vec![0.0; dim];
            for s in c * CHUNK..((c + 1) * CHUNK).min(n_samples) {
                for (p, &j) in players.iter().enumerate() {
                    source(s, j, &mut buf);
                    for i in 0..n_nodes {
                        for r in 0..dim {
                            dev[r] = buf[i * dim + r] - shift[i][(r, p)];
                        }
                        let a = &mut acc[slot(p, i)..slot(p, i) + width];
                        for r in 0..dim {
                            a[r] += dev[r];
                            for q in 0..dim {
                                a[dim + r * dim + q] += dev[r] * dev[q];
                            }
                        }
                    }
                }
            }
            acc
        })
        .collect();
    let mut total = vec![0.0; np * n_nodes * width];
    for part in &partials {
        for (t, v) in total.iter_mut().zip(part) {
            *t += v;
        }
    }
    let n = n_samples as f64;
    let mut mu_hat = vec![Mat::zeros(dim, np); n_nodes];
    let mut theta_hat = vec![vec![Mat::zeros(dim, dim); n_nodes]; np];
    for p in 0..np {
        for i in 0..n_nodes {
            let a = &total[slot(p, i)..slot(p, i) + width];
            for r in 0..dim {
                mu_hat[i][(r, p)] = shift[i][(r, p)] + a[r] / n;
            }
            if n_samples > 1 {
                let th = Mat::from_fn(dim, dim, |r, q| (a[dim + r * dim + q] - a[r] * a[q] / n) / (n - 1.0));
                theta_hat[p][i] = linalg::symmetrize(&th);
            }
        }
    }
    let pooled = (0..n_nodes)
        .map(|i| {
            let mut s = Mat::zeros(dim, dim);
            for th in &theta_hat {
                s += &th[i];
            }
            s / np as f64
        })
        .collect();
    Ok(SampleMoments { n_samples, mu_hat, theta_hat, pooled })
}

/// Selects columns `players` of each node matrix.
pub fn select_columns(nodes: &[Mat], players: &[usize]) -> Vec<Mat> {
    nodes.iter().map(|m| Mat::from_fn(m.nrows(), players.len(), |r, p| m[(r, players[p])])).collect()
}

/// Moments of freshly simulated paths without storing them.
#[allow(clippy::too_many_arguments)]
pub fn simulate_moments(
    coefs: &EulerCoefficients,
    laws: &InitialLaw,
    players: &[usize],
    n_samples: usize,
    seed: u64,
) -> Result<SampleMoments> {
    let sampler = Sampler::new(coefs, laws, seed);
    let shift = select_columns(&coefs.mean(&laws.mean_matrix()), players);
    accumulate_moments(|s, j, buf| sampler.fill(s, j, buf), n_samples, players, coefs.n_steps + 1, coefs.dim, &shift)
}

/// Moments of a stored batch; identical to [`simulate_moments`] on the same seed.
pub fn batch_moments(batch: &TrajectoryBatch, coefs: &EulerCoefficients, laws: &InitialLaw) -> Result<SampleMoments> {
    let players: Vec<usize> = (0..batch.n_players).collect();
    let shift = coefs.mean(&laws.mean_matrix());
    accumulate_moments(
        |s, j, buf| buf.copy_from_slice(batch.path(s, j)),
        batch.n_samples,
        &players,
        batch.n_nodes,
        batch.dim,
        &shift,
    )
}
